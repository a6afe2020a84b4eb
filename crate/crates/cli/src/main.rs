mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use owal::config::RunConfig;
use owal::harness::{run_config, write_run, MANIFEST_FILE};
use owal::verify::{corrupted_update, library_update, run_checks, Level, VerifyOptions};
use owal::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(
    name = "owal",
    version,
    about = "Output-weighted active learning for Gaussian-process surrogates"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (problem, criterion) campaign of a config and write CSVs plus a manifest.
    Run {
        /// TOML config, or a manifest.json from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override a config key, e.g. `--set campaign.trials=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Master seed (same as `--set campaign.seed=N`); TOML integers cap it at i64::MAX.
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
    },
    /// Check the library against independent numerical oracles.
    Verify {
        #[arg(long, value_enum, default_value_t = VerifyLevel::Fast)]
        level: VerifyLevel,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Negative control: run the rank-one check against a broken update.
        #[arg(long, hide = true)]
        corrupt_rank_one: bool,
    },
    /// Render SVG convergence curves and reference pdfs for a campaign directory.
    Plot {
        dir: PathBuf,
        /// Output directory (defaults to the campaign directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the problems of a config with their input dimensions.
    ListProblems {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyLevel {
    Fast,
    Full,
}

fn load_config(path: Option<&PathBuf>, overrides: &[String]) -> owal::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p, overrides),
        None => RunConfig::from_toml_str("", "built-in defaults", overrides),
    }
}

fn exit_for(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if e.is_usage() {
        EXIT_USAGE
    } else {
        1
    }
}

fn cmd_run(config: Option<PathBuf>, out: PathBuf, mut overrides: Vec<String>, seed: Option<u64>) -> owal::Result<()> {
    if let Some(s) = seed {
        overrides.push(format!("campaign.seed={s}"));
    }
    let cfg = load_config(config.as_ref(), &overrides)?;
    let runs = run_config(&cfg)?;
    write_run(&out, &cfg, &runs)?;
    for run in &runs {
        for (summary, _) in &run.campaigns {
            let last = summary.rows.last().expect("at least the initial row");
            println!(
                "{} {}: final median error {:.4e}, {} of {} trials failed{}",
                run.name,
                summary.criterion,
                last.median_error,
                summary.failed,
                summary.trials,
                if summary.unreliable { " (unreliable)" } else { "" }
            );
        }
    }
    println!("wrote {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn cmd_verify(level: VerifyLevel, seed: u64, corrupt: bool) -> ExitCode {
    let opts = VerifyOptions {
        level: match level {
            VerifyLevel::Fast => Level::Fast,
            VerifyLevel::Full => Level::Full,
        },
        seed,
        update: if corrupt { corrupted_update } else { library_update },
    };
    let outcomes = run_checks(&opts);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK)
    }
}

fn cmd_list(config: Option<PathBuf>) -> owal::Result<()> {
    let cfg = load_config(config.as_ref(), &[])?;
    for (name, spec) in &cfg.problems {
        let problem = spec.build(name)?;
        let active = if cfg.campaign.problems.contains(name) {
            ""
        } else {
            " (not in campaign.problems)"
        };
        let kind = serde_json::to_value(spec)
            .ok()
            .and_then(|v| v["kind"].as_str().map(str::to_string))
            .unwrap_or_default();
        println!("{name}\tkind={kind}\tinput_dim={}{active}", problem.input_dim());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot set up {jobs} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Run {
            config,
            out,
            overrides,
            seed,
        } => cmd_run(config, out, overrides, seed),
        Command::Verify {
            level,
            seed,
            corrupt_rank_one,
        } => return cmd_verify(level, seed, corrupt_rank_one),
        Command::Plot { dir, out } => plot::plot_campaign(&dir, out.as_deref().unwrap_or(&dir)).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
        Command::ListProblems { config } => cmd_list(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
