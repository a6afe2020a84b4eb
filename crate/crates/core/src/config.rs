//! Run configuration: TOML files layered over built-in defaults, with
//! `key=value` overrides and reruns from a JSON manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::acquisition::Criterion;
use crate::benchmarks::{ProblemSpec, DEFAULTS_TOML};
use crate::error::{Error, Result};

/// Campaign-level defaults. Problem defaults come from the benchmark defaults file.
pub const CAMPAIGN_DEFAULTS_TOML: &str = r#"
[campaign]
seed = 20190519
trials = 100
iterations = 60
n_init = "auto"
criteria = ["US", "IVR-IW", "IVR-LW", "B"]
problems = ["oscillator", "beam"]
pool_size = 1000
reference_samples = 100000
grid_points = 200
noise = "fixed"
noise_variance = 1e-3
quantile_level = 0.95
box_halfwidth = 4.0
select_top = 10
polish_evals = 50
fit_starts = 8
fit_evals = 200
check_bound = false

[problems.oscillator]
kind = "oscillator"

[problems.beam]
kind = "beam"
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Observations carry noise and `σ_n` is fitted.
    Learned,
    /// Observations carry noise of the configured variance, which the model assumes.
    Fixed,
    /// Noiseless observations and an interpolating model.
    Zero,
}

/// `"auto"` or an explicit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitCount {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl InitCount {
    /// `n + 1` when automatic.
    pub fn resolve(self, input_dim: usize) -> usize {
        match self {
            Self::Fixed(n) => n,
            Self::Auto(_) => input_dim + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub trials: usize,
    pub iterations: usize,
    pub n_init: InitCount,
    pub criteria: Vec<Criterion>,
    pub problems: Vec<String>,
    pub pool_size: usize,
    pub reference_samples: usize,
    pub grid_points: usize,
    pub noise: NoiseMode,
    pub noise_variance: f64,
    /// Reference-output quantile used as the QUANTILE level `s*`.
    pub quantile_level: f64,
    pub box_halfwidth: f64,
    pub select_top: usize,
    pub polish_evals: usize,
    pub fit_starts: usize,
    pub fit_evals: usize,
    /// Assert `B ≤ c·√IVR-LW` on every pool candidate at every iteration.
    pub check_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub campaign: CampaignConfig,
    pub problems: BTreeMap<String, ProblemSpec>,
}

impl RunConfig {
    /// The built-in configuration.
    pub fn defaults() -> Self {
        Self::from_toml_str("", "built-in defaults", &[]).expect("built-in defaults are valid")
    }

    /// Reads a TOML config, or the `config` entry of a JSON manifest.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let source = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_manifest_str(&text, &source, overrides)
        } else {
            Self::from_toml_str(&text, &source, overrides)
        }
    }

    pub fn from_toml_str(text: &str, source: &str, overrides: &[String]) -> Result<Self> {
        let user: Table = toml::from_str(text).map_err(|e| Error::Format {
            path: source.to_string(),
            message: e.to_string(),
        })?;
        let mut table = default_table();
        merge_user(&mut table, user)?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    /// A manifest already holds a fully resolved config; overrides still apply.
    pub fn from_manifest_str(text: &str, source: &str, overrides: &[String]) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: source.to_string(),
            message,
        };
        let json: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let config = json
            .get("config")
            .ok_or_else(|| bad("manifest has no `config` entry".into()))?;
        let mut table: Table = serde_json::from_value(config.clone()).map_err(|e| bad(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
            let field = e.path().to_string();
            Error::Config {
                field,
                message: e.into_inner().message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.campaign;
        let positive = [
            ("campaign.trials", c.trials),
            ("campaign.pool_size", c.pool_size),
            ("campaign.reference_samples", c.reference_samples),
            ("campaign.select_top", c.select_top),
            ("campaign.fit_starts", c.fit_starts),
            ("campaign.fit_evals", c.fit_evals),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be ≥ 1"));
            }
        }
        if let InitCount::Fixed(n) = c.n_init {
            if n < 2 {
                return Err(Error::config("campaign.n_init", "must be ≥ 2"));
            }
        }
        if c.pool_size < crate::acquisition::MIN_POOL_SIZE {
            return Err(Error::config("campaign.pool_size", "must be ≥ 1000"));
        }
        if c.reference_samples < crate::density::MIN_SAMPLES {
            return Err(Error::config("campaign.reference_samples", "must be ≥ 100"));
        }
        if c.grid_points < crate::density::MIN_GRID_POINTS {
            return Err(Error::config("campaign.grid_points", "must be ≥ 64"));
        }
        if c.criteria.is_empty() {
            return Err(Error::config("campaign.criteria", "needs at least one criterion"));
        }
        if !(c.noise_variance >= 0.0 && c.noise_variance.is_finite()) {
            return Err(Error::config("campaign.noise_variance", "must be finite and ≥ 0"));
        }
        if c.noise != NoiseMode::Zero && c.noise_variance == 0.0 {
            return Err(Error::config(
                "campaign.noise_variance",
                "must be > 0 unless noise = \"zero\"",
            ));
        }
        if !(c.quantile_level > 0.0 && c.quantile_level < 1.0) {
            return Err(Error::config("campaign.quantile_level", "must lie in (0, 1)"));
        }
        if !(c.box_halfwidth > 0.0 && c.box_halfwidth.is_finite()) {
            return Err(Error::config("campaign.box_halfwidth", "must be finite and > 0"));
        }
        if c.problems.is_empty() {
            return Err(Error::config("campaign.problems", "needs at least one problem"));
        }
        for name in &c.problems {
            let spec = self.problems.get(name).ok_or_else(|| {
                Error::config("campaign.problems", format!("`{name}` has no [problems.{name}] table"))
            })?;
            match spec {
                ProblemSpec::Oscillator(s) => s.validate(),
                ProblemSpec::Beam(s) => s.validate(),
            }
            .map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("problems.{name}.{field}"), message),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Canonical JSON form (used for hashing and manifests).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON text.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_json()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

fn default_table() -> Table {
    toml::from_str(CAMPAIGN_DEFAULTS_TOML).expect("campaign defaults parse")
}

/// Per-kind defaults, e.g. the `[oscillator]` table of the benchmark defaults.
fn kind_defaults(kind: &str) -> Option<Table> {
    let all: Table = toml::from_str(DEFAULTS_TOML).expect("benchmark defaults parse");
    match all.get(kind) {
        Some(Value::Table(t)) => Some(t.clone()),
        _ => None,
    }
}

/// Recursive merge; a table whose `kind` changes is replaced wholesale.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) if b.get("kind") == o.get("kind") || o.get("kind").is_none() => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn merge_user(table: &mut Table, mut user: Table) -> Result<()> {
    let user_problems = match user.remove("problems") {
        None => Table::new(),
        Some(Value::Table(t)) => t,
        Some(_) => return Err(Error::config("problems", "must be a table of problem definitions")),
    };
    merge(table, user);
    let problems = match table.get_mut("problems") {
        Some(Value::Table(t)) => t,
        _ => unreachable!("defaults define problems"),
    };
    for (name, value) in user_problems {
        let Value::Table(user_spec) = value else {
            return Err(Error::config(format!("problems.{name}"), "must be a table"));
        };
        let kind = match user_spec
            .get("kind")
            .or_else(|| problems.get(&name).and_then(|p| p.get("kind")))
        {
            Some(Value::String(k)) => k.clone(),
            _ => return Err(Error::config(format!("problems.{name}.kind"), "missing problem kind")),
        };
        let mut spec = kind_defaults(&kind).ok_or_else(|| {
            Error::config(
                format!("problems.{name}.kind"),
                format!("unknown problem kind `{kind}` (valid kinds: oscillator, beam)"),
            )
        })?;
        spec.insert("kind".into(), Value::String(kind));
        merge(&mut spec, user_spec);
        problems.insert(name, Value::Table(spec));
    }
    // built-in problems only carry a kind until now
    for (_, value) in problems.iter_mut() {
        if let Value::Table(t) = value {
            if t.len() == 1 {
                if let Some(Value::String(kind)) = t.get("kind").cloned() {
                    if let Some(mut full) = kind_defaults(&kind) {
                        full.insert("kind".into(), Value::String(kind));
                        *t = full;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Applies `a.b.c=value` overrides. Keys must already exist; values are parsed
/// as TOML and fall back to a bare string.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.as_str(), "override must look like key=value"))?;
        let key = key.trim();
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let mut node = &mut *table;
        for (depth, part) in parents.iter().enumerate() {
            node = match node.get_mut(*part) {
                Some(Value::Table(t)) => t,
                _ => return Err(Error::config(parts[..=depth].join("."), "unknown config key")),
            };
        }
        if !node.contains_key(*last) {
            return Err(Error::config(key, "unknown config key"));
        }
        node.insert(last.to_string(), parse_value(raw.trim()));
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{DEFAULT_POLISH_EVALS, DEFAULT_TOP_CANDIDATES};
    use crate::benchmarks::RestoringForce;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::defaults();
        assert_eq!(cfg.campaign.trials, 100);
        assert_eq!(cfg.campaign.n_init.resolve(2), 3);
        assert_eq!(cfg.campaign.criteria.len(), 4);
        match &cfg.problems["oscillator"] {
            ProblemSpec::Oscillator(s) => assert_eq!(s.horizon, 25.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn user_values_override_defaults() {
        let text = r#"
            [campaign]
            trials = 3
            criteria = ["US", "B"]
            problems = ["osc_cubic"]

            [problems.osc_cubic]
            kind = "oscillator"
            force = { kind = "cubic", alpha = 1.0, beta = 0.15 }
        "#;
        let cfg = RunConfig::from_toml_str(text, "inline", &[]).unwrap();
        assert_eq!(cfg.campaign.trials, 3);
        assert_eq!(cfg.campaign.iterations, 60);
        match &cfg.problems["osc_cubic"] {
            ProblemSpec::Oscillator(s) => {
                assert_eq!(s.force, RestoringForce::Cubic { alpha: 1.0, beta: 0.15 });
                assert_eq!(s.damping, 1.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn typo_in_criterion_lists_valid_kinds() {
        let err = RunConfig::from_toml_str("[campaign]\ncriteria = [\"IVRLW\"]\n", "inline", &[]).unwrap_err();
        let msg = err.to_string();
        for k in ["US", "IVR-IW", "IVR-LW", "B", "QUANTILE"] {
            assert!(msg.contains(k), "{msg}");
        }
        assert!(msg.contains("campaign.criteria"), "{msg}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = RunConfig::from_toml_str("[campaign]\ntrials = \"many\"\n", "inline", &[]).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "campaign.trials"),
            "{err}"
        );
        let err = RunConfig::from_toml_str("[campaign]\ntrails = 3\n", "inline", &[]).unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
        let err = RunConfig::from_toml_str("[problems.beam]\nmodes = 0\n", "inline", &[]).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "problems.beam.modes"),
            "{err}"
        );
    }

    #[test]
    fn overrides_must_name_existing_keys() {
        let set = |s: &str| vec![s.to_string()];
        let cfg = RunConfig::from_toml_str("", "inline", &set("campaign.trials=7")).unwrap();
        assert_eq!(cfg.campaign.trials, 7);
        let cfg = RunConfig::from_toml_str("", "inline", &set("problems.beam.zeta=0.1")).unwrap();
        match &cfg.problems["beam"] {
            ProblemSpec::Beam(b) => assert_eq!(b.zeta, 0.1),
            other => panic!("{other:?}"),
        }
        let cfg = RunConfig::from_toml_str("", "inline", &set(r#"campaign.criteria=["B"]"#)).unwrap();
        assert_eq!(cfg.campaign.criteria, vec![Criterion::B]);
        let cfg = RunConfig::from_toml_str("", "inline", &set("campaign.noise=zero")).unwrap();
        assert_eq!(cfg.campaign.noise, NoiseMode::Zero);
        assert!(RunConfig::from_toml_str("", "inline", &set("campaign.trial=7")).is_err());
        assert!(RunConfig::from_toml_str("", "inline", &set("nope.trials=7")).is_err());
        assert!(RunConfig::from_toml_str("", "inline", &set("campaign.trials")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = RunConfig::from_toml_str("[campaign]\ntrials = 2\nn_init = 4\n", "inline", &[]).unwrap();
        let manifest = serde_json::json!({ "config": cfg.to_json(), "other": 1 });
        let back = RunConfig::from_manifest_str(&manifest.to_string(), "m.json", &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let toml_back = RunConfig::from_toml_str(&cfg.to_toml(), "t.toml", &[]).unwrap();
        assert_eq!(toml_back, cfg);
        assert!(RunConfig::from_manifest_str("{}", "m.json", &[]).is_err());
    }

    #[test]
    fn unknown_problem_reference() {
        let err = RunConfig::from_toml_str("[campaign]\nproblems = [\"ghost\"]\n", "inline", &[]).unwrap_err();
        assert!(err.to_string().contains("ghost"));
        let err = RunConfig::from_toml_str("[problems.x]\nkind = \"pendulum\"\n", "inline", &[]).unwrap_err();
        assert!(err.to_string().contains("pendulum"));
    }

    #[test]
    fn selection_constants_match_defaults() {
        let cfg = RunConfig::defaults();
        assert_eq!(cfg.campaign.select_top, DEFAULT_TOP_CANDIDATES);
        assert_eq!(cfg.campaign.polish_evals, DEFAULT_POLISH_EVALS);
    }
}
