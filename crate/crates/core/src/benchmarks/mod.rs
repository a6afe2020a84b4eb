//! Truth models driven by whitened Karhunen–Loève coefficients.

pub mod beam;
pub mod kl;
pub mod ode;
pub mod oscillator;
mod problem;

use serde::Deserialize;

pub use beam::{Beam, BeamSpec};
pub use kl::{Forcing, KlExpansion};
pub use oscillator::{Oscillator, OscillatorSpec, RestoringForce};
pub use problem::{BenchmarkProblem, ProblemSpec, DEFAULT_BOX_HALFWIDTH};

/// Text of the built-in defaults file.
pub const DEFAULTS_TOML: &str = include_str!("defaults.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    oscillator: OscillatorSpec,
    beam: BeamSpec,
}

fn embedded_defaults() -> Defaults {
    toml::from_str(DEFAULTS_TOML).expect("embedded benchmark defaults parse")
}
