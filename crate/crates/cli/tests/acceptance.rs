//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use crisis_hedge::attribution::{interaction_closed_form, interaction_enumerated, shapley_closed_form, shapley_enumerated, PairwiseModel};
use crisis_hedge::copula::{
    block_bootstrap_ci, empirical_tail_dependence, fit_all, fitted_lambda_statistic, select_family, BootstrapConfig, CopulaFamily,
    Criterion, PseudoSample,
};
use crisis_hedge::hedge::hedge_effectiveness;
use crisis_hedge::pipeline::sweep::{sensitivity_sweep, SweepOutcome};
use crisis_hedge::pipeline::{run_pipeline, LoadedConfig, RunResult};
use crisis_hedge::qreg::features::Column;
use crisis_hedge::qreg::{fit_quantile, ColumnKind, DesignMatrix, FeatureId, FeatureSchema};
use crisis_hedge::returns::{real_return_domestic, real_return_foreign};
use crisis_hedge::tailsel::build_triplet;
use crisis_hedge::Month;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [&str; 5] = ["perfect_hedge", "anti_hedge", "independent", "clayton_coupled", "turkey_like"];

type Outcome = Result<String, String>;
type Check = (u32, &'static str, fn() -> Outcome);

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load(kind: &str, fast: bool) -> LoadedConfig {
    let mut loaded = LoadedConfig::load(&fixtures_dir().join(kind).join("config.toml")).expect("shipped fixture config");
    if fast {
        loaded.config = loaded.config.fast();
    }
    loaded
}

fn run(kind: &str, fast: bool) -> RunResult {
    run_pipeline(&load(kind, fast), None).expect("pipeline run")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn elapsed(t: Instant) -> String {
    format!("{:.2}s", t.elapsed().as_secs_f64())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let panel: BTreeMap<String, Vec<f64>> =
        ["A", "B", "C"].iter().map(|c| (c.to_string(), (0..75).map(|_| rng.random::<f64>() * 0.2 - 0.1).collect())).collect();
    let t = Instant::now();
    let triplet = build_triplet(&panel).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    ensure(triplet.taus() == [0.08, 0.50, 0.92], || format!("triplet {:?}", triplet.taus()))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!("(0.08, 0.50, 0.92) in {took:?}"))
}

fn design(columns: &[&str], values: Vec<Vec<f64>>, target: Vec<f64>, interactions: Vec<(usize, usize)>) -> DesignMatrix {
    let start = Month::new(2000, 1).unwrap();
    DesignMatrix {
        months: (0..target.len()).map(|i| start.offset(i as i64)).collect(),
        columns: columns
            .iter()
            .map(|n| Column {
                id: FeatureId::new(n, &[]).unwrap(),
                source: n.to_string(),
                lag: 0,
                kind: ColumnKind::Continuous,
            })
            .collect(),
        values,
        target,
        interactions,
        schema: FeatureSchema::default(),
        dropped_rows: 0,
    }
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for sample in 0..200 {
        let n = rng.random_range(10..=500);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let d = design(&[], vec![vec![]; n], y, vec![]);
        for tau in [0.08, 0.5, 0.92] {
            let k = ((tau * n as f64) - 1e-9).ceil() as usize;
            let expected = sorted[k.max(1) - 1];
            let got = fit_quantile(&d, tau).map_err(|e| format!("sample {sample}: {e}"))?.intercept;
            worst = worst.max((got - expected).abs());
            ensure((got - expected).abs() <= 1e-8, || format!("sample {sample} n={n} tau={tau}: {got} vs {expected}"))?;
        }
    }
    for problem in 0..50 {
        let n = 80;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let target = rows
            .iter()
            .map(|r| 0.3 + r[0] - 0.5 * r[1] + 0.8 * r[0] * r[1] + (0.2 + 0.3 * r[2].abs()) * (rng.random::<f64>() - 0.5))
            .collect();
        let d = design(&["a", "b", "c"], rows, target, vec![(0, 1), (1, 2)]);
        let tau = [0.08, 0.5, 0.92][problem % 3];
        let m = fit_quantile(&d, tau).map_err(|e| format!("problem {problem}: {e}"))?;
        let base = m.loss_on(&d);
        let coef = m.coefficient_vector();
        for k in 0..coef.len() {
            for h in [1e-4, -1e-4] {
                let mut c = coef.clone();
                c[k] += h;
                let loss = m.with_coefficients(&c).loss_on(&d);
                ensure(loss >= base - 1e-8, || format!("problem {problem}: coefficient {k} {h:+} improves {base} to {loss}"))?;
            }
        }
    }
    ensure(t0.elapsed() < Duration::from_secs(30), || format!("took {}", elapsed(t0)))?;
    Ok(format!("600 order statistics (max error {worst:.1e}), 50 probes, {}", elapsed(t0)))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (u, v) = CopulaFamily::Clayton.sample(2.0, 200_000, &mut rng);
    let sample = PseudoSample::from_uniform(u, v).map_err(|e| e.to_string())?;
    let emp = empirical_tail_dependence(&sample, 0.02).map_err(|e| e.to_string())?;
    let target = 2f64.powf(-0.5);
    ensure((emp - target).abs() <= 0.05, || format!("empirical {emp:.4} vs {target:.5}"))?;
    ensure(t0.elapsed() < Duration::from_secs(10), || format!("took {}", elapsed(t0)))?;
    Ok(format!("empirical {emp:.4} vs {target:.5}, {}", elapsed(t0)))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut summary = Vec::new();
    for (family, theta) in [(CopulaFamily::Clayton, 3.0), (CopulaFamily::Gumbel, 2.0)] {
        let mut estimates = Vec::new();
        let mut selected = 0;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (u, v) = family.sample(theta, 2000, &mut rng);
            let sample = PseudoSample::from_raw(&u, &v).map_err(|e| e.to_string())?;
            let (fits, _) = fit_all(&sample);
            let own = fits.iter().find(|f| f.family == family).ok_or_else(|| format!("{family} seed {seed}: no fit"))?;
            estimates.push(own.theta);
            if select_family(&fits, Criterion::Aic).map(|f| f.family) == Ok(family) {
                selected += 1;
            }
        }
        let med = median(estimates);
        ensure((med - theta).abs() <= 0.3, || format!("{family}: median {med:.3} vs {theta}"))?;
        ensure(selected >= 45, || format!("{family}: AIC picked it in {selected}/50"))?;
        summary.push(format!("{family} median {med:.3}, AIC {selected}/50"));
    }
    ensure(t0.elapsed() < Duration::from_secs(60), || format!("took {}", elapsed(t0)))?;
    Ok(format!("{}, {}", summary.join("; "), elapsed(t0)))
}

fn ci_width(n: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (u, v) = CopulaFamily::Clayton.sample(2.0, n, &mut rng);
    let sample = PseudoSample::from_raw(&u, &v).map_err(|e| e.to_string())?;
    let config = BootstrapConfig {
        seed: 9,
        ..BootstrapConfig::default()
    };
    let ci = block_bootstrap_ci(&sample, fitted_lambda_statistic(CopulaFamily::Clayton), &config).map_err(|e| e.to_string())?;
    Ok(ci.interval.hi - ci.interval.lo)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (u, v) = CopulaFamily::Clayton.sample(2.0, 400, &mut rng);
    let sample = PseudoSample::from_raw(&u, &v).map_err(|e| e.to_string())?;
    let config = BootstrapConfig {
        seed: 77,
        ..BootstrapConfig::default()
    };
    let a = block_bootstrap_ci(&sample, fitted_lambda_statistic(CopulaFamily::Clayton), &config).map_err(|e| e.to_string())?;
    let b = block_bootstrap_ci(&sample, fitted_lambda_statistic(CopulaFamily::Clayton), &config).map_err(|e| e.to_string())?;
    ensure(a == b, || "two runs with one seed differ".into())?;

    let full = run("clayton_coupled", false);
    for r in &full.episodes[0].residencies {
        let fit = r.copula.as_ref().ok_or_else(|| format!("{}: no copula fit", r.residency))?;
        let boot = r.bootstrap.as_ref().ok_or_else(|| format!("{}: no bootstrap", r.residency))?;
        ensure(boot.replications == 1000, || format!("{} replications", boot.replications))?;
        let ci = &boot.interval;
        ensure(ci.lo <= fit.lambda_lower && fit.lambda_lower <= ci.hi, || {
            format!("{}: {} outside [{}, {}]", r.residency, fit.lambda_lower, ci.lo, ci.hi)
        })?;
    }
    let (w500, w2000) = (ci_width(500)?, ci_width(2000)?);
    ensure(w2000 < w500, || format!("width {w2000:.4} at n=2000 vs {w500:.4} at n=500"))?;
    Ok(format!("bit-identical; fixture CI covers estimate; width {w500:.4} -> {w2000:.4}"))
}

fn criterion_6() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let random_model = |m: usize, n_pairs: usize, rng: &mut ChaCha8Rng| {
        let mut all: Vec<(usize, usize)> = (0..m).flat_map(|j| (j + 1..m).map(move |k| (j, k))).collect();
        let mut pairs = Vec::new();
        for _ in 0..n_pairs {
            let (j, k) = all.swap_remove(rng.random_range(0..all.len()));
            pairs.push((j, k, rng.random::<f64>() * 2.0 - 1.0));
        }
        let model = PairwiseModel {
            intercept: rng.random::<f64>(),
            beta: (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            pairs,
        };
        let mu: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let x: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        (model, mu, x)
    };
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let (model, mu, x) = random_model(8, 5, &mut rng);
        let (phi, phi0) = shapley_closed_form(&model, &mu, &x).map_err(|e| e.to_string())?;
        let (phi_e, phi0_e) = shapley_enumerated(&model, &mu, &x).map_err(|e| e.to_string())?;
        for (a, b) in phi.iter().zip(&phi_e).chain([(&phi0, &phi0_e)]) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-10, || format!("trial {trial}: deviation {worst:.2e}"))?;
    }
    for trial in 0..100 {
        let (model, mu, x) = random_model(6, 4, &mut rng);
        for (i, j, value) in interaction_closed_form(&model, &mu, &x).map_err(|e| e.to_string())? {
            let e = interaction_enumerated(&model, &mu, &x, i, j).map_err(|e| e.to_string())?;
            ensure((value - e).abs() <= 1e-10, || format!("trial {trial} pair ({i},{j}): {value} vs {e}"))?;
        }
    }
    let mut instances = 0;
    for kind in KINDS {
        for e in &run(kind, true).episodes {
            for a in &e.attributions {
                instances += a.per_month.len();
                ensure(a.max_efficiency_error <= 1e-10, || format!("{kind} tau {}: efficiency error {:.2e}", a.tau, a.max_efficiency_error))?;
            }
        }
    }
    ensure(t0.elapsed() < Duration::from_secs(30), || format!("took {}", elapsed(t0)))?;
    Ok(format!("max deviation {worst:.1e}; efficiency on {instances} instances; {}", elapsed(t0)))
}

fn criterion_7() -> Outcome {
    let he_of = |kind: &str| -> Vec<Option<f64>> { run(kind, true).reports.iter().map(|r| r.hedge_effectiveness_pct).collect() };
    let perfect = he_of("perfect_hedge");
    ensure(perfect.iter().all(|h| *h == Some(100.0)), || format!("perfect hedge {perfect:?}"))?;
    for kind in ["anti_hedge", "independent"] {
        let he = he_of(kind);
        ensure(he.iter().all(|h| *h == Some(0.0)), || format!("{kind} {he:?}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let loss: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 0.05).collect();
    let mut shuffled = loss.clone();
    shuffled.reverse();
    let equal = hedge_effectiveness(&shuffled, &loss).map_err(|e| e.to_string())?;
    ensure(equal.abs() <= 1e-12, || format!("equal-variance noise {equal}"))?;
    let half: Vec<f64> = loss.iter().map(|l| l * 0.5f64.sqrt()).collect();
    let he = 100.0 * hedge_effectiveness(&half, &loss).map_err(|e| e.to_string())?;
    ensure((he - 50.0).abs() <= 1e-9, || format!("half-variance construction {he}"))?;
    Ok(format!("100.0 / 0.0 / 0.0 on fixtures, {he:.12} on Var(net) = Var(loss)/2"))
}

fn criterion_8() -> Outcome {
    let taus = [0.10, 0.15, 0.20];
    let anti = sensitivity_sweep(&load("anti_hedge", true), &taus, None).map_err(|e| e.to_string())?;
    for e in &anti.entries {
        match &e.outcome {
            SweepOutcome::Completed { rows } => {
                ensure(rows.iter().all(|r| r.hedge_effectiveness_pct == Some(0.0)), || format!("anti hedge tau {}: {rows:?}", e.tau))?
            }
            SweepOutcome::Infeasible { reason } => return Err(format!("anti hedge tau {} infeasible: {reason}", e.tau)),
        }
    }
    let clayton = sensitivity_sweep(&load("clayton_coupled", true), &taus, None).map_err(|e| e.to_string())?;
    ensure(clayton.entries.iter().all(|e| matches!(e.outcome, SweepOutcome::Completed { .. })), || "clayton sweep incomplete".into())?;
    let drift = clayton.max_tail_dependence_drift().ok_or("no tail dependence in clayton sweep")?;
    ensure(drift <= 0.05, || format!("drift {drift}"))?;
    // the empirical frequency is evaluated at each tau, so it moves; shown for context
    let emp: Vec<f64> = clayton.completed_rows().filter_map(|r| r.empirical_tail_dependence).collect();
    let spread = emp.iter().copied().fold(f64::NEG_INFINITY, f64::max) - emp.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("anti hedge HE 0.0 at every tau; clayton fitted drift {drift:.4} (empirical spread {spread:.3})"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let r = rng.random_range(-0.5..1.0);
        let pi = rng.random_range(-0.05..0.5);
        let e_prev = rng.random_range(0.5..20.0);
        let e_t = e_prev * rng.random_range(0.7..1.5);
        let dom = real_return_domestic(r, pi).map_err(|e| e.to_string())?;
        let fisher = ((1.0 + dom) * (1.0 + pi) - (1.0 + r)).abs();
        let foreign = real_return_foreign(r, e_prev, e_t, pi).map_err(|e| e.to_string())?;
        let fx_leg = ((1.0 + foreign) * (1.0 + pi) * (e_t / e_prev) - (1.0 + r)).abs();
        let flat = real_return_foreign(r, e_prev, e_prev, pi).map_err(|e| e.to_string())?;
        worst = worst.max(fisher).max(fx_leg);
        ensure(fisher <= 1e-12 && fx_leg <= 1e-12, || format!("input {i}: fisher {fisher:.2e}, fx leg {fx_leg:.2e}"))?;
        ensure(flat == dom, || format!("input {i}: flat FX {flat} vs domestic {dom}"))?;
    }
    let exact = real_return_domestic(0.5, 0.2).map_err(|e| e.to_string())?;
    ensure((exact - 0.25).abs() <= 1e-12, || format!("r = 0.5, pi = 0.2 gave {exact}"))?;
    ensure((exact - (0.5 - 0.2)).abs() > 0.04, || "multiplicative equals additive".into())?;
    Ok(format!("10000 inputs, max error {worst:.1e}; (0.5, 0.2) -> {exact}"))
}

fn criterion_10() -> Outcome {
    let t0 = Instant::now();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    for kind in KINDS {
        let dir = fixtures_dir().join(kind);
        let target = out.path().join(kind);
        let status = Command::new(env!("CARGO_BIN_EXE_crisis-hedge"))
            .args(["run", "--fast", "--out"])
            .arg(&target)
            .arg(dir.join("config.toml"))
            .env("RUST_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || format!("{kind}: {}", String::from_utf8_lossy(&status.stderr)))?;
        let got = std::fs::read(target.join("report.csv")).map_err(|e| format!("{kind}: {e}"))?;
        let golden = std::fs::read(dir.join("golden/report.csv")).map_err(|e| format!("{kind}: {e}"))?;
        ensure(got == golden, || format!("{kind}: report.csv differs from golden"))?;
    }
    ensure(t0.elapsed() < Duration::from_secs(300), || format!("took {}", elapsed(t0)))?;
    Ok(format!("{} fixtures bit-exact, {}", KINDS.len(), elapsed(t0)))
}

fn main() {
    let criteria: [Check; 10] = [
        (1, "tail quantile triplet at T = 75", criterion_1),
        (2, "quantile regression oracles", criterion_2),
        (3, "Clayton tail dependence by simulation", criterion_3),
        (4, "copula MLE recovery and selection", criterion_4),
        (5, "block bootstrap determinism and sanity", criterion_5),
        (6, "Shapley exactness", criterion_6),
        (7, "hedge effectiveness characterization", criterion_7),
        (8, "sensitivity sweep", criterion_8),
        (9, "real return identities", criterion_9),
        (10, "golden end-to-end runs", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
