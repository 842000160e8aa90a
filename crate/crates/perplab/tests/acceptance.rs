//! Acceptance suite: one pass/fail line per criterion, tolerances pinned
//! here. Statistical criteria carry a documented flake budget of one rerun
//! with seed+1; two consecutive failures are a defect.

mod common;

use common::{brute_force, exp_exp, exp_normal, random_model, CaseRng};
use perplab::harness::config::{parse_config_raw, resolve};
use perplab::harness::runner;
use perplab::models::{Marginal, PairModel};
use perplab::perpetuity::{evaluate, evaluate_grid, parts_identity_check, TruncationControl};
use perplab::schedules::{make_schedule, Discount, ScheduleKind};
use perplab::stats::{
    clt_experiment, lil_scan, limit_process_check, slln_experiment, trunc_experiment,
    vervaat_check, ExperimentReport, LIL_MAX_BRACKET, LIL_MIN_BRACKET,
};
use perplab::walk::PathStream;
use std::time::Instant;

fn verdict(n: u32, ok: bool, desc: &str) {
    println!("criterion {n:2}: {} — {desc}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {desc}");
}

/// One rerun with seed+1 on failure; two consecutive failures = defect.
fn with_flake_budget(mut run: impl FnMut(u64) -> ExperimentReport) -> ExperimentReport {
    let first = run(0);
    if first.all_pass() {
        return first;
    }
    eprintln!("statistical suite failed once; burning the flake budget (seed+1)");
    run(1)
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn criterion_01_slln_exponential_weights() {
    let b = Discount::from_b(0.999).unwrap();
    let ctrl = TruncationControl::default();
    let start = Instant::now();
    let report =
        single_thread(|| slln_experiment(&exp_exp(), &b, 200, 41, &ctrl).unwrap());
    let elapsed = start.elapsed();
    let med = report.get("median").unwrap();
    let ok = med.pass && elapsed.as_secs() < 60;
    verdict(
        1,
        ok,
        &format!(
            "median (1-b)X(b) = {:.4} vs 1.0 (5%), single-threaded in {:.2?}",
            med.observed, elapsed
        ),
    );
}

#[test]
fn criterion_02_slln_unit_weights() {
    let model = PairModel::Independent {
        xi: Marginal::Exponential { rate: 1.0 },
        eta: Marginal::Point { value: 1.0 },
    }
    .validated()
    .unwrap();
    let b = Discount::from_b(0.999).unwrap();
    let report =
        slln_experiment(&model, &b, 200, 42, &TruncationControl::default()).unwrap();
    let med = report.get("median").unwrap();
    verdict(
        2,
        med.pass,
        &format!("median (1-b) sum b^(S_k) = {:.4} vs 1/mu = 1.0 (5%)", med.observed),
    );
}

#[test]
fn criterion_03_clt_one_dimensional() {
    let b = Discount::from_b(0.99).unwrap();
    let ctrl = TruncationControl::default();
    let report = with_flake_budget(|bump| {
        clt_experiment(&exp_normal(), &b, &[1.0], 10_000, 7 + bump, &ctrl).unwrap()
    });
    let var = report.get("var(u=1)").unwrap();
    let ks = report.get("ks(u=1)").unwrap();
    verdict(
        3,
        var.pass && ks.pass,
        &format!(
            "variance {:.4} vs 1.0 (5%); KS {:.4} < {:.4}",
            var.observed, ks.observed, ks.tolerance
        ),
    );
}

#[test]
fn criterion_04_finite_dimensional_covariance() {
    let b = Discount::from_b(0.99).unwrap();
    let ctrl = TruncationControl::default();
    let report = with_flake_budget(|bump| {
        clt_experiment(&exp_normal(), &b, &[1.0, 2.0], 10_000, 13 + bump, &ctrl).unwrap()
    });
    // Entrywise: diagonal targets 1/u at 5% (stricter than the 7% bar),
    // off-diagonal target 2/(u_i+u_j) at 7%.
    let ok = report.get("var(u=1)").unwrap().pass
        && report.get("var(u=2)").unwrap().pass
        && report.get("cov(u=1,u=2)").unwrap().pass;
    let cov = report.get("cov(u=1,u=2)").unwrap();
    verdict(
        4,
        ok,
        &format!("cov(u=1,u=2) = {:.4} vs 2/3 (7%); diagonals within 5%", cov.observed),
    );
}

#[test]
fn criterion_05_truncated_statistic() {
    let b = Discount::from_b(0.99).unwrap();
    let report = with_flake_budget(|bump| {
        trunc_experiment(&exp_normal(), &b, None, 10_000, 29 + bump).unwrap()
    });
    let var = report.get("var").unwrap();
    let m = report.get("m_trunc").unwrap().observed;
    verdict(
        5,
        var.pass,
        &format!("truncated variance {:.4} vs 1.0 (5%) at M = {m}", var.observed),
    );
}

#[test]
fn criterion_06_limit_process_sampler() {
    let report = with_flake_budget(|bump| {
        limit_process_check(&[0.5, 1.0, 2.0], 100_000, 3 + bump).unwrap()
    });
    let fails: Vec<&str> = report
        .statistics
        .iter()
        .filter(|s| !s.pass)
        .map(|s| s.name.as_str())
        .collect();
    verdict(
        6,
        report.all_pass(),
        &format!(
            "both samplers within 3% of 1/(u+v) and of each other on (0.5,1,2); failing rows: {fails:?}"
        ),
    );
}

#[test]
fn criterion_07_small_rate_variance_candidates() {
    let ctrl = TruncationControl::default();
    let alphas = [0.005];
    let n = 10_000;

    // (a) degenerate step: printed candidate is 0, data must select the
    //     corrected one (variance s^2/(2 mu) = 1/2).
    let deg_step = PairModel::Independent {
        xi: Marginal::Point { value: 1.0 },
        eta: Marginal::Normal { mean: 0.0, sd: 1.0 },
    }
    .validated()
    .unwrap();
    let ra = vervaat_check(&deg_step, &alphas, n, 101, &ctrl).unwrap();
    let a_ok = ra.get("var(alpha=0.005)[corrected]").unwrap().pass
        && ra.get("selects_corrected(alpha=0.005)").unwrap().observed == 1.0;

    // (b) coincidence case m=0, sigma^2 = s^2 = mu = 1: both candidates 1/2.
    let rb = vervaat_check(&exp_normal(), &alphas, n, 102, &ctrl).unwrap();
    let b_ok = rb.get("var(alpha=0.005)[printed]").unwrap().pass
        && rb.get("var(alpha=0.005)[corrected]").unwrap().pass;

    // (c) m=1, sigma^2 = s^2 = mu = 1, gamma = 0: both candidates equal 1.
    let shifted = PairModel::Independent {
        xi: Marginal::Exponential { rate: 1.0 },
        eta: Marginal::Normal { mean: 1.0, sd: 1.0 },
    }
    .validated()
    .unwrap();
    let rc = vervaat_check(&shifted, &alphas, n, 103, &ctrl).unwrap();
    let c_ok = rc.get("var(alpha=0.005)[printed]").unwrap().pass
        && rc.get("var(alpha=0.005)[corrected]").unwrap().pass;

    // (d) degenerate weight m=1, s^2=0: printed 1 vs corrected 1/2; the data
    //     must decide for the corrected variant.
    let deg_weight = PairModel::Independent {
        xi: Marginal::Exponential { rate: 1.0 },
        eta: Marginal::Point { value: 1.0 },
    }
    .validated()
    .unwrap();
    let rd = vervaat_check(&deg_weight, &alphas, n, 104, &ctrl).unwrap();
    let d_ok = rd.get("var(alpha=0.005)[corrected]").unwrap().pass
        && rd.get("selects_corrected(alpha=0.005)").unwrap().observed == 1.0;

    verdict(
        7,
        a_ok && b_ok && c_ok && d_ok,
        &format!(
            "small-rate variance matches the s^2-variant in all four configurations \
             (a={a_ok}, b={b_ok}, c={c_ok}, d={d_ok}); degenerate cases select it explicitly"
        ),
    );
}

#[test]
fn criterion_08_iterated_logarithm_envelope() {
    // Desk-scale substitute for the limsup law: envelope brackets on the
    // running extremes, monotone running max, bin coverage, and the class
    // conditions of the built-in schedules. Tolerance/budget pinned here:
    // looser per-point certificate (the scaled statistic is O(1)) and a
    // hard per-evaluation step cap; entries too close to b = 1 are skipped
    // by the scan's cost predictor rather than evaluated dishonestly.
    let ctrl = TruncationControl { tol: 1e-4, k_min: 256, k_max: 2_000_000 };
    let schedule = make_schedule(ScheduleKind::InverseSquare, 3162).unwrap();
    let model = exp_normal();

    let mut in_brackets = 0u32;
    let mut covered = 0u32;
    let seeds = 100u64;
    let mut first_scan = Vec::new();
    for seed in 0..seeds {
        let report = lil_scan(&model, &schedule, seed, &ctrl).unwrap();
        let max = report.get("running_max").unwrap().observed;
        let min = report.get("running_min").unwrap().observed;
        if (LIL_MAX_BRACKET.0..LIL_MAX_BRACKET.1).contains(&max)
            && (LIL_MIN_BRACKET.0..LIL_MIN_BRACKET.1).contains(&min)
        {
            in_brackets += 1;
        }
        if report.get("cluster_coverage").unwrap().observed >= 0.5 {
            covered += 1;
        }
        if seed == 0 {
            first_scan = report.scan;
        }
    }
    let envelope_ok = in_brackets >= 90;
    let coverage_ok = covered >= 90;

    // Running max along the schedule is nondecreasing (prefix maxima).
    let mut prefix = f64::NEG_INFINITY;
    let mut monotone_ok = !first_scan.is_empty();
    for row in &first_scan {
        let next = prefix.max(row.scaled_value);
        if next < prefix {
            monotone_ok = false;
        }
        prefix = next;
    }

    let schedules_ok = [
        make_schedule(ScheduleKind::InverseSquare, 20_000).unwrap(),
        make_schedule(ScheduleKind::ClassB, 100_000).unwrap(),
        make_schedule(ScheduleKind::ClassBStar, 200).unwrap(),
    ]
    .iter()
    .all(|s| s.checks().iter().all(|c| c.pass));

    verdict(
        8,
        envelope_ok && coverage_ok && monotone_ok && schedules_ok,
        &format!(
            "envelope {in_brackets}/{seeds} seeds in brackets (need 90), coverage>=50% on \
             {covered}/{seeds}, running max monotone: {monotone_ok}, schedule class checks: {schedules_ok}"
        ),
    );
}

#[test]
fn criterion_09_oracle_equivalence() {
    let mut rng = CaseRng::new(55_331);
    let ctrl = TruncationControl::default();
    let cases = 1000u64;
    let mut failures = Vec::new();
    for case in 0..cases {
        let model = random_model(&mut rng);
        let b = Discount::from_b(rng.uniform(0.5, 0.999)).unwrap();
        let u = rng.uniform(0.5, 3.0);
        let stream = PathStream::new(model, 9_000, case);
        let v = evaluate(&stream, &b, u, &ctrl).unwrap();
        let reference = brute_force(&stream, &b, u, 1_000_000);
        let gap = (v.value - reference).abs();
        if gap > v.tail_bound {
            failures.push(format!(
                "case {case}: gap={gap:.3e} certificate={:.3e} b={} u={u:.3} k_star={}",
                v.tail_bound,
                b.b(),
                v.k_star
            ));
        }
    }
    let ok = (failures.len() as f64) <= 0.005 * cases as f64;
    verdict(
        9,
        ok,
        &format!(
            "{}/{cases} within the truncation certificate (need >= 995); diagnostics: {failures:?}",
            cases as usize - failures.len()
        ),
    );
}

#[test]
fn criterion_10_worker_count_determinism() {
    const TOML: &str = r#"
experiment = "clt-fidi"
seed = 77
paths = 400
b = 0.98
u = [1.0, 2.0]
[model]
family = "independent"
[model.xi]
dist = "exponential"
rate = 1.0
[model.eta]
dist = "normal"
mean = 0.0
sd = 1.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: usize, sub: &str| -> Vec<u8> {
        let mut raw = parse_config_raw(TOML).unwrap();
        raw.workers = Some(workers);
        raw.out = Some(dir.path().join(sub));
        let out = runner::run(&resolve(raw).unwrap()).unwrap();
        let csv = out.files.iter().find(|p| p.ends_with("report.csv")).unwrap();
        std::fs::read(csv).unwrap()
    };
    let ok = run(1, "w1") == run(8, "w8") && run(1, "w1b") == run(1, "w1c");
    verdict(10, ok, "report.csv byte-identical across worker counts 1 and 8 and across reruns");
}

#[test]
fn criterion_11_algebraic_identities() {
    let b = Discount::from_b(0.999).unwrap();
    let ctrl = TruncationControl::default();
    let model = exp_exp();
    let mut worst_rel = 0.0f64;
    for path in 0..1000u64 {
        let stream = PathStream::new(model.clone(), 818, path);
        let (lhs, rhs) = parts_identity_check(&stream, &b, 10_000);
        worst_rel = worst_rel.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    let parts_ok = worst_rel < 1e-8;

    let mut grid_ok = true;
    let stream = PathStream::new(exp_normal(), 4, 0);
    let bs = [Discount::from_b(0.9).unwrap(), Discount::from_b(0.99).unwrap()];
    let us = [0.5, 1.0, 2.0];
    for (i, row) in evaluate_grid(&stream, &bs, &us, &ctrl).iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let solo = evaluate(&stream, &bs[i], us[j], &ctrl).unwrap();
            grid_ok &= cell.as_ref().unwrap().value.to_bits() == solo.value.to_bits();
        }
    }
    verdict(
        11,
        parts_ok && grid_ok,
        &format!(
            "summation-by-parts worst relative gap {worst_rel:.2e} < 1e-8 over 1000 paths; \
             grid cells bit-identical to pointwise evaluation: {grid_ok}"
        ),
    );
}
