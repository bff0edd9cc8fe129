//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewaudit::cli_io::{generate_synthetic, PlantedConfusion};
use skewaudit::delivery_sim::simulate_stochastic;
use skewaudit::demographics::AudienceComposition;
use skewaudit::sweep::{repro_thought_experiments, sweep_grid, SweepConfig};
use skewaudit::{
    compose_audience, estimate_fdr, inference_aware_audit, omniscient_correct, simulate_inferred_targeted,
    simulate_true_targeted, solve_rs, DeliveryCounts, DeliveryParams, FdrMatrix,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

/// Relative difference; exact zeros on both sides compare equal.
fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn skew(c: &DeliveryCounts) -> f64 {
    c.n2_a / c.n2() - c.n1_a / c.n1()
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    match (out, limit) {
        (Ok(msg), Some(l)) if elapsed > l => Err(format!("{msg}; took {elapsed:?}, limit {l:?}")),
        (Ok(msg), _) => Ok(format!("{msg} ({elapsed:.2?})")),
        (Err(msg), _) => Err(format!("{msg} ({elapsed:.2?})")),
    }
}

/// A random error matrix whose rows are valid distributions.
fn random_fdr(rng: &mut ChaCha8Rng) -> FdrMatrix {
    let split = |rng: &mut ChaCha8Rng| {
        let total: f64 = rng.gen_range(0.0..0.95);
        let share: f64 = rng.gen();
        (total * share, total * (1.0 - share))
    };
    let (b_a, o_a) = split(rng);
    let (a_b, o_b) = split(rng);
    let (a_o, b_o) = split(rng);
    FdrMatrix::new(b_a, o_a, a_b, o_b, a_o, b_o).expect("rows sum below one")
}

fn random_params(rng: &mut ChaCha8Rng, s: Option<f64>) -> DeliveryParams {
    let s = s.unwrap_or_else(|| rng.gen_range(0.01..1.99));
    let r = rng.gen_range(0.001..1.0) / s.max(2.0 - s);
    DeliveryParams::with_rate_and_skew(r, s).expect("rates within [0, 1]")
}

fn c1_baseline() -> Outcome {
    let t = repro_thought_experiments().baseline;
    let d = [t.audit_true.skew_d, t.audit_inferred.skew_d, t.audit_omniscient.skew_d];
    if d.iter().any(|x| x.abs() > 1e-12) {
        return Err(format!("D (true, inferred, omniscient) = {d:?}"));
    }
    let sig = [t.audit_true.significant, t.audit_inferred.significant, t.audit_omniscient.significant];
    if sig.iter().any(|&s| s) {
        return Err(format!("verdicts {sig:?}"));
    }
    Ok(format!("D = {d:?}, all not significant"))
}

fn c2_skewed() -> Outcome {
    let t = repro_thought_experiments().skewed;
    let z = [t.audit_true.z_stat, t.audit_inferred.z_stat, t.audit_omniscient.z_stat];
    let want = [4.07, 1.39, 3.73];
    let mut problems = Vec::new();
    for ((name, got), w) in ["Z_t", "Z_i", "Z_c"].iter().zip(z).zip(want) {
        if (got - w).abs() > 0.05 {
            problems.push(format!("{name} = {got:.4}, want {w} ± 0.05"));
        }
    }
    let sig = [t.audit_true.significant, t.audit_inferred.significant, t.audit_omniscient.significant];
    if sig != [true, false, true] {
        problems.push(format!("verdicts {sig:?}"));
    }
    let omni = t.inferred_delivery.omniscient;
    let practical = t.practical.corrected;
    for (p, o) in practical.audited().iter().zip(omni.audited()) {
        if (p.round() - o.round()).abs() > 1.0 {
            problems.push(format!("rounded corrected {p} vs omniscient {o}"));
        }
        if rel(*p, o) > 1e-9 {
            problems.push(format!("corrected {p} vs omniscient {o} beyond 1e-9 relative"));
        }
    }
    if problems.is_empty() {
        Ok(format!("Z = ({:.3}, {:.3}, {:.3}), verdicts {sig:?}", z[0], z[1], z[2]))
    } else {
        Err(problems.join("; "))
    }
}

fn c3_region_table() -> Outcome {
    let expected = [
        (10_000u64, 0.73, 0.91),
        (30_000, 0.85, 0.95),
        (60_000, 0.90, 0.97),
        (90_000, 0.92, 0.97),
        (120_000, 0.94, 0.97),
        (150_000, 0.94, 0.99),
    ];
    let config = SweepConfig::default();
    let cells = sweep_grid(&config).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for (size, lo, hi) in expected {
        let Some(cell) = cells.iter().find(|c| c.size_u == size) else {
            problems.push(format!("{size}: no cell"));
            continue;
        };
        let Some(r) = &cell.region else {
            problems.push(format!("{size}: no region ({:?})", cell.error));
            continue;
        };
        summary.push(format!("{size}:[{:.2},{:.2}]", r.s_low, r.s_high));
        let tol = 0.01 + 1e-9;
        if (r.s_low - lo).abs() > tol || (r.s_high - hi).abs() > tol {
            problems.push(format!("{size}: [{:.2}, {:.2}] vs [{lo}, {hi}]", r.s_low, r.s_high));
        }
        if !r.corrected_recovers {
            problems
                .push(format!("{size}: corrected audit not significant throughout [{:.2}, {:.2}]", r.s_low, r.s_high));
        }
    }
    if problems.is_empty() {
        Ok(summary.join(" "))
    } else {
        Err(problems.join("; "))
    }
}

fn c4_no_skew_no_bias() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let fdr = random_fdr(&mut rng);
        let size_u = 2 * rng.gen_range(50..1_000_000u64);
        let params = random_params(&mut rng, Some(1.0));
        let comp = compose_audience(size_u, &fdr).map_err(|e| e.to_string())?;
        let d = simulate_inferred_targeted(&comp, &params).map_err(|e| e.to_string())?;
        let di = skew(&d.inferred);
        worst = worst.max(di.abs());
        if di.abs() > 1e-12 {
            return Err(format!("D_i = {di:e} for {fdr:?}, {params:?}, |U| = {size_u}"));
        }
    }
    Ok(format!("1000 tuples, max |D_i| = {worst:e}"))
}

fn c5_inferred_skew_is_smaller() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut max_ratio = 0.0f64;
    while checked < 10_000 {
        let fdr = random_fdr(&mut rng);
        if fdr.star_a() <= 0.0 || fdr.fdr_a_given_b <= 0.0 {
            continue;
        }
        let s = rng.gen_range(0.01..1.99);
        if s == 1.0 {
            continue;
        }
        let params = random_params(&mut rng, Some(s));
        let size_u = 2 * rng.gen_range(50..1_000_000u64);
        let comp = compose_audience(size_u, &fdr).map_err(|e| e.to_string())?;
        let dt = skew(&simulate_true_targeted(size_u, &params).map_err(|e| e.to_string())?);
        let di = skew(&simulate_inferred_targeted(&comp, &params).map_err(|e| e.to_string())?.inferred);
        if di.abs() >= dt.abs() {
            return Err(format!("|D_i| = {} >= |D_t| = {} for {fdr:?}, {params:?}", di.abs(), dt.abs()));
        }
        max_ratio = max_ratio.max(di.abs() / dt.abs());
        checked += 1;
    }
    Ok(format!("10000 tuples, max |D_i|/|D_t| = {max_ratio:.4}"))
}

fn c6_solver_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let fdr = random_fdr(&mut rng);
        let size_u = 2 * rng.gen_range(50..1_000_000u64);
        let params = random_params(&mut rng, None);
        let comp = compose_audience(size_u, &fdr).map_err(|e| e.to_string())?;
        let d = simulate_inferred_targeted(&comp, &params).map_err(|e| e.to_string())?;
        let solved = solve_rs(d.inferred.n1_a, d.inferred.n1_b, size_u, &fdr)
            .map_err(|e| format!("{e} for {fdr:?}, {params:?}, |U| = {size_u}"))?;
        let (r1, r2) = solved.residuals();
        let errs = [rel(solved.rate_r, params.rate_r), rel(solved.skew_s, params.skew_s), r1.abs(), r2.abs()];
        let e = errs.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(e);
        if e > 1e-9 {
            return Err(format!("errors {errs:?} for {fdr:?}, {params:?}, |U| = {size_u}"));
        }
    }
    Ok(format!("1000 tuples, max relative error {worst:e}"))
}

fn c7_practical_equals_omniscient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let fdr = random_fdr(&mut rng);
        let size_u = 2 * rng.gen_range(50..1_000_000u64);
        let params = random_params(&mut rng, None);
        let comp = compose_audience(size_u, &fdr).map_err(|e| e.to_string())?;
        let d = simulate_inferred_targeted(&comp, &params).map_err(|e| e.to_string())?;
        let audit = inference_aware_audit(size_u, &fdr, &d.inferred, 0.05)
            .map_err(|e| format!("{e} for {fdr:?}, {params:?}, |U| = {size_u}"))?;
        let omni = omniscient_correct(&comp, &params).map_err(|e| e.to_string())?;
        for (p, o) in audit.corrected.audited().iter().zip(omni.audited()) {
            let e = rel(*p, o);
            worst = worst.max(e);
            if e > 1e-9 {
                return Err(format!("corrected {p} vs omniscient {o} for {fdr:?}, {params:?}, |U| = {size_u}"));
            }
        }
    }
    Ok(format!("1000 scenarios, max relative difference {worst:e}"))
}

fn c8_fdr_estimation() -> Outcome {
    let planted = PlantedConfusion {
        rates: FdrMatrix::new(0.47, 0.03, 0.14, 0.03, 0.2, 0.2).unwrap(),
        label_mix: [0.45, 0.45, 0.10],
    };
    let records = generate_synthetic(100_000, &planted, 8).map_err(|e| e.to_string())?;
    let est = estimate_fdr(&records, 0.5).map_err(|e| e.to_string())?.matrix;
    let pairs = [
        ("b|a", est.fdr_b_given_a, 0.47),
        ("o|a", est.fdr_o_given_a, 0.03),
        ("a|b", est.fdr_a_given_b, 0.14),
        ("o|b", est.fdr_o_given_b, 0.03),
    ];
    let mut problems: Vec<String> = pairs
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 0.01)
        .map(|(n, got, want)| format!("{n} = {got:.4}, want {want} ± 0.01"))
        .collect();
    let components = |m: &FdrMatrix| {
        [m.fdr_b_given_a, m.fdr_o_given_a, m.fdr_a_given_b, m.fdr_o_given_b, m.fdr_a_given_o, m.fdr_b_given_o]
    };
    let mut prev = components(&est);
    for th in [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95] {
        let m = match estimate_fdr(&records, th) {
            Ok(e) => e.matrix,
            Err(e) => {
                problems.push(format!("threshold {th}: {e}"));
                break;
            }
        };
        let cur = components(&m);
        if cur.iter().zip(prev).any(|(c, p)| *c > p) {
            problems.push(format!("threshold {th} raised a component: {prev:?} -> {cur:?}"));
        }
        prev = cur;
    }
    if problems.is_empty() {
        Ok(format!(
            "estimated ({:.4}, {:.4}, {:.4}, {:.4}), non-increasing over 10 thresholds",
            pairs[0].1, pairs[1].1, pairs[2].1, pairs[3].1
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn c9_stochastic() -> Outcome {
    let size_u = 1_000_000;
    let params = DeliveryParams::with_rate_and_skew(0.065, 1.0).unwrap();
    let comp = AudienceComposition::error_free(size_u).map_err(|e| e.to_string())?;
    let expected = simulate_inferred_targeted(&comp, &params).map_err(|e| e.to_string())?;
    let drawn = simulate_stochastic(&comp, &params, 9).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (d, e) in [(drawn.inferred, expected.inferred), (drawn.omniscient, expected.omniscient)] {
        for (x, m) in d.all().iter().zip(e.all()) {
            if m == 0.0 {
                if *x != 0.0 {
                    return Err(format!("drew {x} where expectation is 0"));
                }
                continue;
            }
            let r = (x - m).abs() / m;
            worst = worst.max(r);
            if r > 0.01 {
                return Err(format!("drew {x}, expected {m}"));
            }
        }
    }
    Ok(format!("max relative deviation {:.3}%", worst * 100.0))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 baseline thought experiment", Some(Duration::from_secs(1)), c1_baseline),
        ("2 skewed thought experiment", Some(Duration::from_secs(1)), c2_skewed),
        ("3 missed-skew region table", Some(Duration::from_secs(10)), c3_region_table),
        ("4 no skew gives no inferred skew", None, c4_no_skew_no_bias),
        ("5 inferred skew strictly smaller", None, c5_inferred_skew_is_smaller),
        ("6 rate and skew recovery", None, c6_solver_round_trip),
        ("7 practical equals omniscient", None, c7_practical_equals_omniscient),
        ("8 error-matrix estimation", None, c8_fdr_estimation),
        ("9 stochastic delivery sanity", None, c9_stochastic),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        match timed(limit, f) {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
