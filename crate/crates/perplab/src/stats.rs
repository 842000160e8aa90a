//! Statistical experiments: law-of-large-numbers and CLT checks, the
//! variance cross-check of the exponential-discount statistic, iterated-
//! logarithm scans along a schedule, and limit-sampler validation.
//!
//! Every experiment is a deterministic function of (model, parameters,
//! master seed): paths are keyed by index, per-path values are collected by
//! index, and reductions run in a fixed order. Worker count never changes
//! any reported number.

use crate::limit_process::{
    default_horizon, default_mesh, limit_covariance, sample_cholesky, sample_integral,
    LimitProcessError,
};
use crate::models::PairModel;
use crate::numeric::{median, sample_covariance, sample_variance};
use crate::perpetuity::{
    evaluate_on, CachedPath, PerpetuityError, StreamProvider, TruncationControl,
};
use crate::schedules::{f_scale, Discount, DiscountSchedule, ScheduleError};
use crate::walk::PathStream;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("model not centered: E eta = {m}, experiment assumes E eta = 0")]
    ModelNotCentered { m: f64 },
    #[error("degenerate input: s^2 = 0, the normalized statistic has no distribution to test")]
    DegenerateEta,
    #[error("path {path}: {source}")]
    Path { path: u64, source: PerpetuityError },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    LimitProcess(#[from] LimitProcessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Slln,
    Clt1d,
    CltFidi,
    CltTruncated,
    Vervaat,
    LilScan,
    LimitProcessCheck,
    Schedule,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Slln => "slln",
            ExperimentKind::Clt1d => "clt-1d",
            ExperimentKind::CltFidi => "clt-fidi",
            ExperimentKind::CltTruncated => "clt-truncated",
            ExperimentKind::Vervaat => "vervaat",
            ExperimentKind::LilScan => "lil-scan",
            ExperimentKind::LimitProcessCheck => "limit-process-check",
            ExperimentKind::Schedule => "schedule",
        };
        write!(f, "{s}")
    }
}

/// One verdict line: observed vs. target within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistic {
    pub name: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Statistic {
    pub fn new(name: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        let pass = (observed - target).abs() <= tolerance;
        Statistic { name: name.into(), observed, target, tolerance, pass }
    }

    /// Informational row, always passing (counts, diagnostics).
    pub fn info(name: impl Into<String>, observed: f64) -> Self {
        Statistic { name: name.into(), observed, target: observed, tolerance: f64::INFINITY, pass: true }
    }

    /// Row whose verdict was decided elsewhere (e.g. schedule trend tests).
    pub fn flagged(name: impl Into<String>, observed: f64, pass: bool) -> Self {
        Statistic { name: name.into(), observed, target: f64::NAN, tolerance: f64::NAN, pass }
    }
}

/// Row of a scan artifact: one schedule entry of a lil scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub n: u64,
    pub b: f64,
    pub one_minus_b: f64,
    /// Raw series value at b_n.
    pub value: f64,
    /// f(b_n) * value / (2 s^2 / mu)^{1/2}.
    pub scaled_value: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    /// Stable hash of the resolved configuration; filled by the harness.
    pub config_digest: String,
    pub statistics: Vec<Statistic>,
    /// Per-n rows for scan experiments, empty otherwise.
    pub scan: Vec<ScanRow>,
}

impl ExperimentReport {
    fn new(experiment: ExperimentKind, statistics: Vec<Statistic>) -> Self {
        ExperimentReport { experiment, config_digest: String::new(), statistics, scan: Vec::new() }
    }

    pub fn all_pass(&self) -> bool {
        self.statistics.iter().all(|s| s.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }
}

/// Two-sided Kolmogorov-Smirnov sup-distance between the empirical CDF of
/// `samples` and the standard normal CDF.
pub fn ks_distance(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "ks_distance needs samples");
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal.cdf(x);
        d = d.max((phi - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - phi).abs());
    }
    d
}

/// Asymptotic KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

fn centered_moments(model: &PairModel) -> Result<crate::models::Moments, StatsError> {
    let mo = model.moments();
    if mo.m != 0.0 {
        return Err(StatsError::ModelNotCentered { m: mo.m });
    }
    if mo.s2 <= 0.0 {
        return Err(StatsError::DegenerateEta);
    }
    Ok(mo)
}

/// Runs `per_path` over path indices in parallel, collecting values by index.
fn map_paths<T: Send, F>(n_paths: u64, per_path: F) -> Result<Vec<T>, StatsError>
where
    F: Fn(u64) -> Result<T, PerpetuityError> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| per_path(i).map_err(|source| StatsError::Path { path: i, source }))
        .collect()
}

/// Median of (1-b) sum b^{S_k} eta_{k+1} over seeded paths; the almost-sure
/// limit is m / mu. Tolerance: 5% of the target (0.1 absolute when m = 0).
pub fn slln_experiment(
    model: &PairModel,
    b: &Discount,
    n_paths: u64,
    seed: u64,
    ctrl: &TruncationControl,
) -> Result<ExperimentReport, StatsError> {
    let mo = model.moments();
    let estimates = map_paths(n_paths, |i| {
        let stream = PathStream::new(model.clone(), seed, i);
        crate::perpetuity::slln_estimate(&stream, b, ctrl)
    })?;
    let target = mo.m / mo.mu;
    let tolerance = if target == 0.0 { 0.1 } else { 0.05 * target.abs() };
    let med = median(&estimates);
    let stats = vec![
        Statistic::new("median", med, target, tolerance),
        Statistic::info("n_paths", n_paths as f64),
    ];
    Ok(ExperimentReport::new(ExperimentKind::Slln, stats))
}

/// CLT for the normalized series: per path, (1-b^2)^{1/2} sum b^{u S_k}
/// eta_{k+1} on a common path across u. Reports per-u variances against
/// s^2/(mu u), cross-u covariances against 2 s^2 mu^{-1} / (u_i + u_j), and
/// the KS distance of the standardized u = 1 column.
pub fn clt_experiment(
    model: &PairModel,
    b: &Discount,
    u_list: &[f64],
    n_paths: u64,
    seed: u64,
    ctrl: &TruncationControl,
) -> Result<ExperimentReport, StatsError> {
    let mo = centered_moments(model)?;
    let scale = (b.one_minus_b() * (1.0 + b.b())).sqrt(); // (1-b^2)^{1/2}
    let bound = model.eta_abs_bound();
    let rows = map_paths(n_paths, |i| {
        let stream = PathStream::new(model.clone(), seed, i);
        let mut cache = CachedPath::new(&stream);
        u_list
            .iter()
            .map(|&u| Ok(scale * evaluate_on(&mut cache, bound, b, u, ctrl)?.value))
            .collect::<Result<Vec<f64>, PerpetuityError>>()
    })?;

    let kind = if u_list.len() == 1 { ExperimentKind::Clt1d } else { ExperimentKind::CltFidi };
    let mut stats = Vec::new();
    let columns: Vec<Vec<f64>> = (0..u_list.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    for (j, &u) in u_list.iter().enumerate() {
        let var = sample_variance(&columns[j]);
        let target = mo.s2 / (mo.mu * u);
        stats.push(Statistic::new(format!("var(u={u})"), var, target, 0.05 * target));
    }
    for i in 0..u_list.len() {
        for j in (i + 1)..u_list.len() {
            let cov = sample_covariance(&columns[i], &columns[j]);
            let target = 2.0 * mo.s2 / (mo.mu * (u_list[i] + u_list[j]));
            stats.push(Statistic::new(
                format!("cov(u={},u={})", u_list[i], u_list[j]),
                cov,
                target,
                0.07 * target,
            ));
        }
    }
    if let Some(j) = u_list.iter().position(|&u| u == 1.0) {
        let sd = (mo.s2 / mo.mu).sqrt();
        let standardized: Vec<f64> = columns[j].iter().map(|v| v / sd).collect();
        let d = ks_distance(&standardized);
        let crit = ks_critical_1pct(standardized.len());
        stats.push(Statistic::new("ks(u=1)", d, 0.0, crit));
    }
    Ok(ExperimentReport::new(kind, stats))
}

/// Truncated, self-normalized CLT statistic over paths; its variance tends
/// to s^2 / mu. `m_trunc` defaults to N2(b) when None.
pub fn trunc_experiment(
    model: &PairModel,
    b: &Discount,
    m_trunc: Option<u64>,
    n_paths: u64,
    seed: u64,
) -> Result<ExperimentReport, StatsError> {
    let mo = centered_moments(model)?;
    let m_trunc = match m_trunc {
        Some(m) => m,
        None => crate::schedules::index_n2(b)?,
    };
    let values = map_paths(n_paths, |i| {
        let stream = PathStream::new(model.clone(), seed, i);
        Ok(crate::perpetuity::truncated_statistic_on(
            &mut StreamProvider::new(&stream),
            mo.mu,
            b,
            m_trunc,
        ))
    })?;
    let var = sample_variance(&values);
    let target = mo.s2 / mo.mu;
    let stats = vec![
        Statistic::new("var", var, target, 0.05 * target),
        Statistic::info("m_trunc", m_trunc as f64),
    ];
    Ok(ExperimentReport::new(ExperimentKind::CltTruncated, stats))
}

/// Variance candidates for the exponential-discount statistic
/// alpha^{-1/2}(sum e^{-alpha S_{k-1}} eta_k - centering) as alpha -> 0.
/// `printed` is the variance constant as published; `corrected` replaces its
/// last term 2^{-1} sigma^2 mu^{-1} by 2^{-1} s^2 mu^{-1}, the value
/// consistent with the b -> 1 normal limit under alpha = -log b.
pub fn vervaat_candidates(model: &PairModel) -> (f64, f64) {
    let mo = model.moments();
    let common = 0.5 * mo.sigma2 * mo.m * mo.m / mo.mu.powi(3) + mo.gamma * mo.m / (mo.mu * mo.mu);
    (common + 0.5 * mo.sigma2 / mo.mu, common + 0.5 * mo.s2 / mo.mu)
}

/// Empirical variance of the exponential-discount statistic at each alpha,
/// compared against BOTH printed and corrected variance candidates (10% of
/// target each). The centering constant only shifts the mean; the variance
/// comparison is centering-free.
pub fn vervaat_check(
    model: &PairModel,
    alpha_list: &[f64],
    n_paths: u64,
    seed: u64,
    ctrl: &TruncationControl,
) -> Result<ExperimentReport, StatsError> {
    let (printed, corrected) = vervaat_candidates(model);
    let bound = model.eta_abs_bound();
    let mut stats = Vec::new();
    for &alpha in alpha_list {
        let b = Discount::from_one_minus_b(-(-alpha).exp_m1())
            .map_err(StatsError::Schedule)?;
        let values = map_paths(n_paths, |i| {
            let stream = PathStream::new(model.clone(), seed, i);
            let v = evaluate_on(&mut StreamProvider::new(&stream), bound, &b, 1.0, ctrl)?;
            Ok(alpha.sqrt() * v.value)
        })?;
        let var = sample_variance(&values);
        stats.push(Statistic::new(
            format!("var(alpha={alpha})[printed]"),
            var,
            printed,
            0.1 * printed.abs(),
        ));
        stats.push(Statistic::new(
            format!("var(alpha={alpha})[corrected]"),
            var,
            corrected,
            0.1 * corrected.abs(),
        ));
        let selects_corrected = (var - corrected).abs() <= (var - printed).abs();
        stats.push(Statistic::info(
            format!("selects_corrected(alpha={alpha})"),
            f64::from(u8::from(selects_corrected)),
        ));
    }
    Ok(ExperimentReport::new(ExperimentKind::Vervaat, stats))
}

/// Envelope brackets of the scaled running extremes, pinned here so every
/// caller applies the same verdict.
pub const LIL_MAX_BRACKET: (f64, f64) = (0.2, 1.5);
pub const LIL_MIN_BRACKET: (f64, f64) = (-1.5, -0.2);

/// Scaled scan along a schedule on ONE path: R_n = f(b_n) X(b_n) / (2 s^2/mu)^{1/2}.
///
/// Entries whose predicted truncation index exceeds ctrl.k_max are skipped
/// up front (reported as `n_skipped`); the series cost explodes as b -> 1
/// and the envelope verdict only needs the reachable prefix.
pub fn lil_scan(
    model: &PairModel,
    schedule: &DiscountSchedule,
    seed: u64,
    ctrl: &TruncationControl,
) -> Result<ExperimentReport, StatsError> {
    let mo = centered_moments(model)?;
    let bound = model.eta_abs_bound();
    let denom = (2.0 * mo.s2 / mo.mu).sqrt();
    let stream = PathStream::new(model.clone(), seed, 0);
    let mut cache = CachedPath::new(&stream);

    let mut scan = Vec::new();
    let mut skipped = 0u64;
    for (n, d) in schedule.iter() {
        let f = match f_scale(d) {
            Ok(f) => f,
            Err(_) => continue, // below f's domain (early schedule entries)
        };
        // Predicted stopping index from the certificate shape, with margin.
        let step_gap = d.one_minus_pow(0.5 * mo.mu);
        let decay = -d.ln_b(); // per-step exponent decay rate, ~ 1-b as b -> 1
        let k_pred = if step_gap > 0.0 && decay > 0.0 {
            (bound / (ctrl.tol * step_gap)).ln().max(0.0) / (mo.mu * decay)
        } else {
            f64::INFINITY
        };
        if 1.2 * k_pred + ctrl.k_min as f64 > ctrl.k_max as f64 {
            skipped += 1;
            continue;
        }
        let v = evaluate_on(&mut cache, bound, d, 1.0, ctrl)
            .map_err(|source| StatsError::Path { path: 0, source })?;
        scan.push(ScanRow {
            n,
            b: d.b(),
            one_minus_b: d.one_minus_b(),
            value: v.value,
            scaled_value: f * v.value / denom,
        });
    }

    let run_max = scan.iter().map(|r| r.scaled_value).fold(f64::NEG_INFINITY, f64::max);
    let run_min = scan.iter().map(|r| r.scaled_value).fold(f64::INFINITY, f64::min);

    // 0.1-wide bins of [-1, 1] visited by the R_n, and the coverage of those
    // intersecting the observed envelope [-|R|_max, |R|_max].
    let mut visited = [false; 20];
    for r in &scan {
        let v = r.scaled_value;
        if (-1.0..=1.0).contains(&v) {
            let idx = (((v + 1.0) / 0.1) as usize).min(19);
            visited[idx] = true;
        }
    }
    let r_abs = run_max.abs().max(run_min.abs()).clamp(0.0, 1.0);
    let mut intersecting = 0usize;
    let mut covered = 0usize;
    for (i, &vis) in visited.iter().enumerate() {
        let lo = -1.0 + 0.1 * i as f64;
        let hi = lo + 0.1;
        if hi > -r_abs && lo < r_abs {
            intersecting += 1;
            if vis {
                covered += 1;
            }
        }
    }
    let coverage =
        if intersecting > 0 { covered as f64 / intersecting as f64 } else { 0.0 };

    let (max_lo, max_hi) = LIL_MAX_BRACKET;
    let (min_lo, min_hi) = LIL_MIN_BRACKET;
    let stats = vec![
        Statistic::new("running_max", run_max, 0.5 * (max_lo + max_hi), 0.5 * (max_hi - max_lo)),
        Statistic::new("running_min", run_min, 0.5 * (min_lo + min_hi), 0.5 * (min_hi - min_lo)),
        Statistic::new("cluster_coverage", coverage, 1.0, 0.5),
        Statistic::info("n_evaluated", scan.len() as f64),
        Statistic::info("n_skipped", skipped as f64),
    ];
    let mut report = ExperimentReport::new(ExperimentKind::LilScan, stats);
    report.scan = scan;
    Ok(report)
}

/// Validates both limit-process samplers against the kernel 1/(u_i+u_j)
/// (3% relative) and against each other (3% entrywise relative).
pub fn limit_process_check(
    u_grid: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<ExperimentReport, StatsError> {
    let u_min = u_grid.first().copied().unwrap_or(1.0);
    let u_max = u_grid.last().copied().unwrap_or(1.0);
    let integral = sample_integral(
        u_grid,
        default_horizon(u_min),
        default_mesh(u_max),
        n_samples,
        seed,
    )?;
    let chol = sample_cholesky(u_grid, n_samples, seed.wrapping_add(1), 1e-12)?;
    let ci = integral.empirical_covariance();
    let cc = chol.empirical_covariance();
    let n = u_grid.len();
    let mut stats = Vec::new();
    for i in 0..n {
        for j in i..n {
            let target = limit_covariance(u_grid[i], u_grid[j])?;
            let tag = format!("u={},u={}", u_grid[i], u_grid[j]);
            stats.push(Statistic::new(
                format!("cov_integral({tag})"),
                ci[i * n + j],
                target,
                0.03 * target,
            ));
            stats.push(Statistic::new(
                format!("cov_cholesky({tag})"),
                cc[i * n + j],
                target,
                0.03 * target,
            ));
            stats.push(Statistic::new(
                format!("method_gap({tag})"),
                ci[i * n + j],
                cc[i * n + j],
                0.03 * target,
            ));
        }
    }
    Ok(ExperimentReport::new(ExperimentKind::LimitProcessCheck, stats))
}
