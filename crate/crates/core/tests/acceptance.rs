//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.
//!
//! Criteria 6 to 8 run full campaigns (20 trials × 60 iterations on two
//! problems) and take 25 to 45 minutes on one core.

use std::fs;
use std::time::Instant;

use owal::acquisition::Criterion;
use owal::config::RunConfig;
use owal::harness::{
    run_config, write_run, CampaignSummary, ProblemRun, MANIFEST_FILE, REFERENCE_PDF_FILE, SUMMARY_FILE, TRIALS_FILE,
};
use owal::verify::{
    asymptotic_error, cauchy_schwarz, density_metric_oracle, gpr_exactness, library_update, pdf_perturbation_slope,
    rank_one_oracle,
};

const SEED: u64 = 7;
const REFERENCE_CORES: f64 = 8.0;

const ORDERING_CAMPAIGN: &str = r#"
[campaign]
trials = 20
iterations = 60
noise = "fixed"
noise_variance = 1e-3
quantile_level = 0.95
"#;

const RERUN_CAMPAIGN: &str = r#"
[campaign]
problems = ["oscillator"]
criteria = ["US", "B"]
trials = 2
iterations = 4
reference_samples = 5000
"#;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn timed<F: FnOnce() -> (bool, String)>(id: u32, name: &'static str, limit: Option<f64>, f: F) -> Outcome {
    let start = Instant::now();
    let (mut passed, mut detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = limit {
        if seconds >= limit {
            passed = false;
            detail = format!("{detail}; over the {limit} s limit");
        }
    }
    Outcome {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

fn check(r: owal::Result<(bool, String)>) -> (bool, String) {
    r.unwrap_or_else(|e| (false, format!("error: {e}")))
}

fn campaign(run: &ProblemRun, c: Criterion) -> &CampaignSummary {
    &run.campaigns
        .iter()
        .find(|(s, _)| s.criterion == c)
        .expect("criterion was run")
        .0
}

fn final_row(s: &CampaignSummary) -> (f64, f64) {
    let last = s.rows.last().expect("initial row always present");
    (last.median_error, 2.0 * last.mad_half)
}

fn ordering(run: &ProblemRun) -> (bool, String) {
    let (us, _) = final_row(campaign(run, Criterion::Us));
    let (iw, _) = final_row(campaign(run, Criterion::IvrIw));
    let (lw, lw_mad) = final_row(campaign(run, Criterion::IvrLw));
    let (b, _) = final_row(campaign(run, Criterion::B));
    let baseline = us.min(iw);
    let ok = b <= lw + lw_mad && b <= 0.75 * baseline && lw <= 0.75 * baseline;
    let unreliable: Vec<_> = run
        .campaigns
        .iter()
        .filter(|(s, _)| s.unreliable)
        .map(|(s, _)| s.criterion.to_string())
        .collect();
    let detail = format!(
        "{}: US {us:.3}, IVR-IW {iw:.3}, IVR-LW {lw:.3} (MAD {lw_mad:.3}), B {b:.3}; B/best-baseline {:.2}, IVR-LW/best-baseline {:.2}{}",
        run.name,
        b / baseline,
        lw / baseline,
        if unreliable.is_empty() { String::new() } else { format!(", unreliable: {}", unreliable.join(" ")) }
    );
    (ok && unreliable.is_empty(), detail)
}

fn cn_drop(run: &ProblemRun, c: Criterion) -> (bool, String) {
    let s = campaign(run, c);
    let at = |i: usize| {
        s.rows
            .iter()
            .find(|r| r.iteration == i)
            .map_or(f64::NAN, |r| r.median_cn)
    };
    let ratio = at(5) / at(60);
    (
        ratio >= 5.0,
        format!(
            "{c}: median C_N {:.3e} at 5, {:.3e} at 60, drop {ratio:.1}x",
            at(5),
            at(60)
        ),
    )
}

fn quantile_vs_us(run: &ProblemRun) -> (bool, String) {
    let at40 = |c| {
        campaign(run, c)
            .rows
            .iter()
            .find(|r| r.iteration == 40)
            .map_or(f64::NAN, |r| r.median_exceedance_error)
    };
    let (q, us) = (at40(Criterion::Quantile), at40(Criterion::Us));
    (
        q < us,
        format!("median |exceedance error| at iteration 40: QUANTILE {q:.3e}, US {us:.3e}"),
    )
}

fn rerun_is_byte_identical() -> owal::Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let cfg = RunConfig::from_toml_str(RERUN_CAMPAIGN, "acceptance rerun", &[])?;
    write_run(&first, &cfg, &run_config(&cfg)?)?;
    let replay = RunConfig::load(&first.join(MANIFEST_FILE), &[])?;
    write_run(&second, &replay, &run_config(&replay)?)?;
    let mut differing = Vec::new();
    for file in [SUMMARY_FILE, TRIALS_FILE, REFERENCE_PDF_FILE] {
        let rel = format!("oscillator/{file}");
        if fs::read(first.join(&rel))? != fs::read(second.join(&rel))? {
            differing.push(rel);
        }
    }
    if fs::read(first.join(MANIFEST_FILE))? != fs::read(second.join(MANIFEST_FILE))? {
        differing.push(MANIFEST_FILE.into());
    }
    Ok(if differing.is_empty() {
        (true, "summary, trials, reference pdf and manifest identical".into())
    } else {
        (false, format!("differing: {}", differing.join(", ")))
    })
}

fn main() {
    let mut outcomes = vec![
        timed(1, "gpr exactness", Some(5.0), || check(gpr_exactness(SEED))),
        timed(2, "rank-one update oracle", Some(10.0), || {
            check(rank_one_oracle(SEED, 1000, library_update))
        }),
        timed(3, "pdf perturbation slope", Some(120.0), || {
            check(pdf_perturbation_slope(SEED))
        }),
        timed(4, "asymptotic error", Some(180.0), || check(asymptotic_error(SEED))),
        timed(5, "cauchy-schwarz bound", Some(120.0), || {
            check(cauchy_schwarz(SEED, 10))
        }),
        timed(9, "density metric oracle", Some(1.0), || check(density_metric_oracle())),
        timed(10, "manifest rerun determinism", None, || {
            check(rerun_is_byte_identical())
        }),
    ];

    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
    let start = Instant::now();
    let runs = RunConfig::from_toml_str(
        ORDERING_CAMPAIGN,
        "acceptance ordering",
        &[
            "campaign.problems=[\"oscillator\"]".into(),
            "campaign.criteria=[\"US\", \"IVR-IW\", \"IVR-LW\", \"B\", \"QUANTILE\"]".into(),
        ],
    )
    .and_then(|c| run_config(&c))
    .and_then(|mut osc| {
        let beam = RunConfig::from_toml_str(
            ORDERING_CAMPAIGN,
            "acceptance ordering",
            &["campaign.problems=[\"beam\"]".into()],
        )?;
        osc.extend(run_config(&beam)?);
        Ok(osc)
    });
    let seconds = start.elapsed().as_secs_f64();
    match runs {
        Ok(runs) => {
            let (osc, beam) = (&runs[0], &runs[1]);
            let (ok_osc, d_osc) = ordering(osc);
            let (ok_beam, d_beam) = ordering(beam);
            let projected = seconds * cores / REFERENCE_CORES;
            let fast = projected < 1800.0;
            outcomes.push(Outcome {
                id: 6,
                name: "criterion ordering",
                passed: ok_osc && ok_beam && fast,
                detail: format!(
                    "{d_osc} | {d_beam} | {seconds:.0} s on {cores} core(s), {projected:.0} s projected on {REFERENCE_CORES} cores"
                ),
                seconds,
            });
            let (ok_b, d_b) = cn_drop(osc, Criterion::B);
            let (ok_lw, d_lw) = cn_drop(osc, Criterion::IvrLw);
            outcomes.push(Outcome {
                id: 7,
                name: "convergence diagnostic",
                passed: ok_b && ok_lw,
                detail: format!("{d_b} | {d_lw}"),
                seconds: 0.0,
            });
            let (ok_q, d_q) = quantile_vs_us(osc);
            outcomes.push(Outcome {
                id: 8,
                name: "quantile criterion",
                passed: ok_q,
                detail: d_q,
                seconds: 0.0,
            });
        }
        Err(e) => {
            for (id, name) in [
                (6, "criterion ordering"),
                (7, "convergence diagnostic"),
                (8, "quantile criterion"),
            ] {
                outcomes.push(Outcome {
                    id,
                    name,
                    passed: false,
                    detail: format!("campaign error: {e}"),
                    seconds,
                });
            }
        }
    }

    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!(
            "criterion {:>2} {} {} ({:.1} s): {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "acceptance: {} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
