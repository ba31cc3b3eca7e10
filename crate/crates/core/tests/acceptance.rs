//! One pass/fail line per acceptance criterion.

use std::time::{Duration, Instant};

use hyperwalk::ball::ball;
use hyperwalk::dynamics::{
    drift_formula, empirical_stationary, power_iterate, psi, sigma_squared_formula, solve_poisson,
    solve_stationary, spectral_radius_estimate, TransferOperator,
};
use hyperwalk::green::{green_kernel, quasi_isometry_constants, verify_hilbert_green, GreenOptions};
use hyperwalk::lab::{
    clt_samples, default_exponent_grid, estimate_drift, lamplighter_exponent, lil_ensemble,
    martingale_check, positivity_check, LabWalk, MartingaleOptions, MetricKind,
};
use hyperwalk::stats::ks_normality_test;
use hyperwalk::tree::{
    estimate_delta, gromov_busemann_cocycle, ray_convergence, BoundaryPoint, DeltaMode, TreeMetric,
};
use hyperwalk::walk::{sample_trajectory_indexed, stream_rng, StepDistribution};
use hyperwalk::{GroupElement, GroupSpec, Letter, WordMetric};
use rand::Rng;
use serde_json::{json, Value};

const SEED: u64 = 20240601;

fn f2() -> GroupSpec {
    GroupSpec::free(2).unwrap()
}

fn srw() -> StepDistribution {
    StepDistribution::uniform_generators(&f2())
}

fn biased() -> StepDistribution {
    StepDistribution::parse(&f2(), "a:3/8,a-:3/8,b:1/8,b-:1/8").unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
    report: Value,
}

fn outcome(pass: bool, detail: String, report: Value) -> Outcome {
    Outcome { pass, detail, report }
}

fn c1() -> Outcome {
    let spec = f2();
    let t = green_kernel(&srw(), 60, 6, GreenOptions::default()).unwrap();
    let g0 = t.values()[0];
    let mut worst: f64 = 0.0;
    for (i, g) in ball(&spec, 4).unwrap().iter().enumerate() {
        let d = spec.word_length(g).unwrap() as i32;
        worst = worst.max((t.values()[i] / g0 - 3f64.powi(-d)).abs());
    }
    let pass = worst <= 1e-3 && (g0 - 1.5).abs() <= 1e-3;
    outcome(
        pass,
        format!("G(e,e) = {g0:.6}, max ratio error {worst:.2e} (tol 1e-3)"),
        json!({ "g_ee": g0, "worst": worst, "diagnostics": t.diagnostics() }),
    )
}

fn c2() -> Outcome {
    let a = verify_hilbert_green(&srw(), 5, 80, 5_000_000).unwrap();
    let b = verify_hilbert_green(&biased(), 5, 80, 5_000_000).unwrap();
    let pass = a.max_deviation <= 0.01 && b.max_deviation <= 0.01 && a.pairs == 53 * 53;
    outcome(
        pass,
        format!(
            "max |rho - d_G| over {} pairs: SRW {:.2e}, biased {:.2e} (tol 1e-2)",
            a.pairs, a.max_deviation, b.max_deviation
        ),
        json!({ "srw": a, "biased": b }),
    )
}

fn c3() -> Outcome {
    let t = green_kernel(&srw(), 80, 5, GreenOptions::default()).unwrap();
    let fit = quasi_isometry_constants(&t, 5).unwrap();
    let l3 = 3f64.ln();
    let rel = (fit.c - l3).abs() / l3;
    outcome(
        rel <= 0.01 && fit.b.abs() <= 0.02,
        format!("C = {:.5} (rel err {rel:.2e}, tol 1%), b = {:.2e} (tol 0.02)", fit.c, fit.b),
        json!(fit),
    )
}

fn c4() -> Outcome {
    let spec = f2();
    let pts = ball(&spec, 4).unwrap();
    let d = estimate_delta(&WordMetric(&spec), &pts, DeltaMode::Exhaustive).unwrap();
    outcome(d == 0.0, format!("delta = {d} on {} points (exact 0)", pts.len()), json!({ "delta": d }))
}

fn c5() -> Outcome {
    let walk = LabWalk::new(&srw(), MetricKind::Word).unwrap();
    let p = positivity_check(&walk, 10_000, 1000, SEED, 2).unwrap();
    let a = p.drift.mean;
    outcome(
        (a - 0.5).abs() <= 0.01 && p.passed,
        format!("A = {a:.5} +- {:.5} (tol 0.01), positivity lower bound {:.4}, cylinder inf {:.4}", p.drift.ci, p.lower_bound, p.cylinder_inf.unwrap()),
        json!({ "drift": p.drift, "cylinders": p.cylinders }),
    )
}

fn c6() -> Outcome {
    let word = TreeMetric::word(2);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rep = Vec::new();
    for (name, mu) in [("SRW", srw()), ("biased", biased())] {
        let nu = solve_stationary(&mu, 6).unwrap();
        let a = drift_formula(&mu, &nu, &word).unwrap();
        let est = estimate_drift(&LabWalk::new(&mu, MetricKind::Word).unwrap(), 10_000, 1000, SEED + 1).unwrap();
        let diff = (a - est.mean).abs();
        pass &= diff <= 0.02;
        parts.push(format!("{name} formula {a:.5} vs {:.5} (diff {diff:.1e}, tol 0.02)", est.mean));
        rep.push(json!({ "formula": a, "estimate": est.mean, "ci": est.ci }));
    }
    outcome(pass, parts.join("; "), Value::Array(rep))
}

fn c7() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rep = Vec::new();
    for (name, mu) in [("SRW", srw()), ("biased", biased())] {
        let nu = solve_stationary(&mu, 2).unwrap();
        let fine = solve_stationary(&mu, 6).unwrap();
        let consistency = nu.consistency_residual(&fine).unwrap();
        let rays: Vec<_> = (0..10_000)
            .map(|i| ray_convergence(&sample_trajectory_indexed(&mu, 1000, SEED + 2, i), 2).unwrap())
            .collect();
        let emp = empirical_stationary(&rays, 2, 2).unwrap();
        let tv = nu.total_variation(&emp).unwrap();
        pass &= tv <= 0.04 && consistency <= 1e-9;
        parts.push(format!("{name} TV {tv:.4} (tol 0.04), consistency {consistency:.1e} (tol 1e-9)"));
        rep.push(json!({ "tv": tv, "consistency": consistency, "probs": nu.probs }));
    }
    outcome(pass, parts.join("; "), Value::Array(rep))
}

fn c8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rep = Vec::new();
    for (name, mu) in [("SRW", srw()), ("biased", biased())] {
        let op = TransferOperator::new(&mu, 4).unwrap();
        let est = spectral_radius_estimate(&op, 40, SEED).unwrap();
        pass &= est.tau_hat < 1.0;
        parts.push(format!("{name} tau {:.4}", est.tau_hat));
        rep.push(json!(est));
    }
    let mu = biased();
    let word = TreeMetric::word(2);
    let op = TransferOperator::new(&mu, 4).unwrap();
    let a = drift_formula(&mu, op.measure(), &word).unwrap();
    let mut p = psi(&mu, a, 4, &word).unwrap();
    let decay = power_iterate(&op, &mut p, 20).unwrap();
    let monotone = decay.norms.len() == 21 && decay.norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    pass &= monotone;
    parts.push(format!(
        "biased |T^n psi|: {:.2e} -> {:.2e} over 20 iterations, monotone {monotone}",
        decay.norms[0],
        decay.norms.last().unwrap()
    ));
    rep.push(json!(decay));
    outcome(pass, parts.join("; "), Value::Array(rep))
}

fn c9() -> Outcome {
    let word = TreeMetric::word(2);
    let mu = biased();
    let op = TransferOperator::new(&mu, 6).unwrap();
    let a = drift_formula(&mu, op.measure(), &word).unwrap();
    let sol = solve_poisson(&op, &psi(&mu, a, 6, &word).unwrap(), 1e-6).unwrap();
    let s = srw();
    let ops = TransferOperator::new(&s, 6).unwrap();
    let sols = solve_poisson(&ops, &psi(&s, 0.5, 6, &word).unwrap(), 1e-6).unwrap();
    let usup = sols.u.sup_norm();
    outcome(
        sol.residual <= 1e-6 && usup <= 1e-12,
        format!("biased residual {:.2e} (tol 1e-6, {} terms); SRW |u| {usup:.1e} (tol 1e-12)", sol.residual, sol.iterations),
        json!({ "residual": sol.residual, "iterations": sol.iterations, "srw_u": usup, "u": sol.u.values }),
    )
}

fn c10() -> Outcome {
    let word = TreeMetric::word(2);
    let green = TreeMetric::green(&srw()).unwrap();
    let mu = srw();
    let op = TransferOperator::new(&mu, 6).unwrap();
    let zero = hyperwalk::dynamics::CylinderFunction::constant(2, 6, 0.0);
    let v = sigma_squared_formula(&mu, op.measure(), &zero, 0.5, &word).unwrap().sigma2;
    let l3 = 3f64.ln();
    let walk = LabWalk::new(&mu, MetricKind::Word).unwrap();
    let emp = clt_samples(&walk, 10_000, 2000, SEED + 3, 0.5).unwrap().variance;
    let gwalk = LabWalk::new(&mu, MetricKind::Green).unwrap();
    let vg = sigma_squared_formula(&mu, op.measure(), &zero, l3 / 2.0, &green).unwrap().sigma2;
    let empg = clt_samples(&gwalk, 10_000, 2000, SEED + 3, l3 / 2.0).unwrap().variance;
    let target_g = l3 * l3 * 0.75;
    let (r1, r2) = ((emp - v).abs() / v, (empg - target_g).abs() / target_g);
    outcome(
        (v - 0.75).abs() <= 1e-3 && r1 <= 0.1 && r2 <= 0.1 && (vg - target_g).abs() <= 1e-9,
        format!("formula {v:.6} (0.75 +- 1e-3); empirical {emp:.4} (rel {r1:.3}); Green empirical {empg:.4} vs {target_g:.4} (rel {r2:.3}); tol 10%"),
        json!({ "formula": v, "empirical": emp, "green_formula": vg, "green_empirical": empg }),
    )
}

fn c11() -> Outcome {
    let walk = LabWalk::new(&srw(), MetricKind::Word).unwrap();
    let s = clt_samples(&walk, 10_000, 2000, SEED + 4, 0.5).unwrap();
    let ks = ks_normality_test(&s.samples, 0.75f64.sqrt()).unwrap();
    outcome(
        ks.p_value > 0.01,
        format!("KS D = {:.4}, p = {:.3} (need > 0.01)", ks.statistic, ks.p_value),
        json!({ "ks": ks, "mean": s.mean, "variance": s.variance }),
    )
}

fn c12() -> Outcome {
    let word = TreeMetric::word(2);
    let xi = BoundaryPoint::ray(&[], &[Letter(0), Letter(2)], 200).unwrap();
    let opts = MartingaleOptions {
        seed: SEED + 5,
        ..Default::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rep = Vec::new();
    for (name, mu) in [("SRW", srw()), ("biased", biased())] {
        let op = TransferOperator::new(&mu, 6).unwrap();
        let a = drift_formula(&mu, op.measure(), &word).unwrap();
        let u = solve_poisson(&op, &psi(&mu, a, 6, &word).unwrap(), 1e-8).unwrap().u;
        let r = martingale_check(&mu, &u, a, &xi, &word, opts).unwrap();
        pass &= r.passed;
        parts.push(format!("{name} max |mean|/SE {:.2} at {} (tol 3)", r.max_abs_z, r.worst_bin));
        rep.push(json!(r));
    }
    outcome(pass, parts.join("; "), Value::Array(rep))
}

fn c13() -> Outcome {
    let walk = LabWalk::new(&srw(), MetricKind::Word).unwrap();
    let sigma = 0.75f64.sqrt();
    let e = lil_ensemble(&walk, 100_000, SEED + 6, 20, sigma, 0.5).unwrap();
    let first = e.envelope.first().unwrap();
    let last = e.envelope.last().unwrap();
    outcome(
        e.within,
        format!(
            "sqrt(2n loglog n) envelope {:.3}..{:.3} sigma (window [0.3, 3]); sqrt(n loglog n) variant {:.3}..{:.3} sigma (not asserted)",
            first.running_max_sqrt2 / sigma,
            last.running_max_sqrt2 / sigma,
            first.running_max / sigma,
            last.running_max / sigma
        ),
        json!(e.envelope),
    )
}

fn c14() -> Outcome {
    let mu = StepDistribution::uniform_generators(&GroupSpec::lamplighter());
    let fit = lamplighter_exponent(&mu, &default_exponent_grid(), 200, SEED + 7).unwrap();
    outcome(
        (0.65..=0.85).contains(&fit.slope),
        format!("slope {:.4} on n in [1e3, 1e5] (window [0.65, 0.85])", fit.slope),
        json!(fit),
    )
}

fn random_point(rng: &mut impl Rng) -> BoundaryPoint {
    let mut letters = vec![Letter(rng.random_range(0..4))];
    while letters.len() < 30 {
        let l = Letter(rng.random_range(0..4));
        if l != letters.last().unwrap().inverse() {
            letters.push(l);
        }
    }
    BoundaryPoint::new(letters).unwrap()
}

fn c15() -> Outcome {
    let metric = TreeMetric::word(2);
    let mut rng = stream_rng(SEED + 8, 0);
    let (mut err, mut alt): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let len = rng.random_range(0..12);
        let letters: Vec<Letter> = (0..len).map(|_| Letter(rng.random_range(0..4))).collect();
        let g = GroupElement::free_letters(&letters);
        let xi = random_point(&mut rng);
        let mut eta = random_point(&mut rng);
        while eta == xi {
            eta = random_point(&mut rng);
        }
        let c = gromov_busemann_cocycle(&g, &xi, &eta, &metric).unwrap();
        err = err.max((c.lhs - c.rhs).abs());
        alt = alt.max((c.lhs - c.alternative_rhs).abs());
    }
    outcome(
        err == 0.0,
        format!("max |LHS + (h + h')/2| = {err} over 1000 triples; discrepancy finding: constant 2 is off by up to {alt}"),
        json!({ "max_error": err, "alternative_constant_error": alt }),
    )
}

type Criterion = fn() -> Outcome;

const CRITERIA: [(u32, &str, Criterion, Option<u64>); 15] = [
    (1, "Green kernel closed form", c1, Some(10)),
    (2, "Hilbert metric equals Green metric", c2, Some(30)),
    (3, "quasi-isometry constants", c3, None),
    (4, "tree ball is 0-hyperbolic", c4, None),
    (5, "drift and positivity", c5, Some(60)),
    (6, "drift integral formula", c6, None),
    (7, "stationary measure", c7, None),
    (8, "spectral decay", c8, None),
    (9, "Poisson equation", c9, None),
    (10, "variance", c10, None),
    (11, "CLT normality", c11, Some(300)),
    (12, "martingale property", c12, None),
    (13, "LIL envelope", c13, None),
    (14, "lamplighter exponent", c14, Some(300)),
    (15, "Gromov product cocycle identity", c15, None),
];

fn main() {
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for (id, name, f, limit) in CRITERIA {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|s| elapsed <= Duration::from_secs(s));
        let pass = o.pass && in_time;
        let budget = limit.map(|s| format!(", limit {s} s")).unwrap_or_default();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failures.push(id);
        }
        reports.push(serde_json::to_string(&o.report).unwrap());
    }
    let mut differing = Vec::new();
    for ((id, _, f, _), first) in CRITERIA.iter().zip(&reports) {
        if serde_json::to_string(&f().report).unwrap() != *first {
            differing.push(*id);
        }
    }
    let det = differing.is_empty();
    println!(
        "criterion 16 {}: determinism: {}",
        if det { "PASS" } else { "FAIL" },
        if det {
            "every report above is byte-identical on re-run".to_string()
        } else {
            format!("reports differ for criteria {differing:?}")
        }
    );
    if !det {
        failures.push(16);
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
    println!("acceptance: 16/16 criteria passed");
}
