//! Evaluation of the discounted series sum_{k>=0} b^{u S_k} eta_{k+1} with a
//! certified adaptive truncation, plus its normalized statistics.

use crate::numeric::Kahan;
use crate::schedules::Discount;
use crate::walk::PathStream;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerpetuityError {
    #[error(
        "no convergence detected by k = {k_max}: certified tail bound {tail_bound:.3e} > tol {tol:.3e} (b too close to 1 for the cap, or adversarial path)"
    )]
    NoConvergenceDetected { k_max: u64, tail_bound: f64, tol: f64 },
    #[error("model not centered: E eta = {m} but the truncated statistic assumes E eta = 0")]
    ModelNotCentered { m: f64 },
}

/// Adaptive truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationControl {
    /// Absolute tolerance on the certified omitted tail.
    pub tol: f64,
    pub k_min: u64,
    pub k_max: u64,
}

impl Default for TruncationControl {
    fn default() -> Self {
        TruncationControl { tol: 1e-9, k_min: 256, k_max: 10_000_000 }
    }
}

/// Window length of the running minimum used by the stopping certificate.
const CERT_WINDOW: u64 = 64;
/// Safety factor applied to the drift estimate in the geometric tail majorant.
const CERT_DRIFT_SAFETY: f64 = 0.5;

/// A finite evaluation of the series together with its truncation
/// certificate. `k_star` is the index of the last term summed, i.e. the
/// value is sum_{k=0}^{k_star} b^{u S_k} eta_{k+1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerpetuityValue {
    pub value: f64,
    pub b: f64,
    pub u: f64,
    pub k_star: u64,
    /// Certified bound on the absolute omitted tail, from the stopping
    /// rule's running-minimum/drift-estimate majorant. Heuristic: valid
    /// whenever the drift estimate holds for the unseen suffix.
    pub tail_bound: f64,
}

/// Source of series terms: (S_k, eta_{k+1}) for k = 0, 1, 2, ... in order.
/// Implementations must be bit-deterministic in k.
pub trait PairProvider {
    fn term(&mut self, k: u64) -> (f64, f64);
}

/// Draws terms directly from a fresh walk; single pass, strictly increasing k.
pub struct StreamProvider {
    stream: PathStream,
}

impl StreamProvider {
    pub fn new(stream: &PathStream) -> Self {
        StreamProvider { stream: stream.replay() }
    }
}

impl PairProvider for StreamProvider {
    fn term(&mut self, k: u64) -> (f64, f64) {
        debug_assert_eq!(k, self.stream.position(), "terms must be consumed in order");
        let s_before = self.stream.s();
        let step = self.stream.next_step();
        (s_before, step.eta)
    }
}

/// Lazily grown cache of one path's terms, so that many evaluations (grids,
/// scans) share the realized path and stay bit-identical to single-shot
/// evaluations with the same seed.
pub struct CachedPath {
    stream: PathStream,
    terms: Vec<(f64, f64)>,
}

impl CachedPath {
    pub fn new(stream: &PathStream) -> Self {
        CachedPath { stream: stream.replay(), terms: Vec::new() }
    }
}

impl PairProvider for CachedPath {
    fn term(&mut self, k: u64) -> (f64, f64) {
        while self.terms.len() as u64 <= k {
            let s_before = self.stream.s();
            let step = self.stream.next_step();
            self.terms.push((s_before, step.eta));
        }
        self.terms[k as usize]
    }
}

/// Core summation loop over an arbitrary term provider. `eta_abs_bound` is
/// an upper bound on E|eta| used by the tail certificate.
pub fn evaluate_on<P: PairProvider + ?Sized>(
    provider: &mut P,
    eta_abs_bound: f64,
    b: &Discount,
    u: f64,
    ctrl: &TruncationControl,
) -> Result<PerpetuityValue, PerpetuityError> {
    debug_assert!(u > 0.0);
    let ln_b = b.ln_b();
    let mut acc = Kahan::new();
    let mut abs_acc = 0.0f64;
    // Monotone deque over the last CERT_WINDOW values of S_k (front = min).
    let mut window: VecDeque<(u64, f64)> = VecDeque::new();
    let mut last_cert = f64::INFINITY;

    let mut k = 0u64;
    loop {
        let (s_k, eta_next) = provider.term(k);
        let term = (u * ln_b * s_k).exp() * eta_next;
        acc.add(term);
        abs_acc += term.abs();

        while window.back().is_some_and(|&(_, s)| s >= s_k) {
            window.pop_back();
        }
        window.push_back((k, s_k));
        if window.front().is_some_and(|&(j, _)| j + CERT_WINDOW <= k) {
            window.pop_front();
        }

        if k >= ctrl.k_min {
            let w = window.front().expect("window nonempty").1;
            let mu_hat = s_k / k as f64;
            if mu_hat > 0.0 {
                // Tail majorant: terms below b^{uW} E|eta|, decaying at
                // least geometrically with per-step factor b^{u delta mu_hat}.
                let step_gap = b.one_minus_pow(u * CERT_DRIFT_SAFETY * mu_hat);
                if step_gap > 0.0 {
                    last_cert = (u * ln_b * w).exp() * eta_abs_bound / step_gap;
                    if last_cert <= ctrl.tol {
                        // The certified error is the analytic tail plus a
                        // summation-rounding floor; the tail alone can sit
                        // far below f64 resolution of the partial sum.
                        let rounding = 32.0 * f64::EPSILON * abs_acc;
                        return Ok(PerpetuityValue {
                            value: acc.value(),
                            b: b.b(),
                            u,
                            k_star: k,
                            tail_bound: last_cert + rounding,
                        });
                    }
                }
            }
        }
        if k >= ctrl.k_max {
            return Err(PerpetuityError::NoConvergenceDetected {
                k_max: ctrl.k_max,
                tail_bound: last_cert,
                tol: ctrl.tol,
            });
        }
        k += 1;
    }
}

/// Evaluates sum_{k>=0} b^{u S_k} eta_{k+1} on (a replay of) the stream.
pub fn evaluate(
    stream: &PathStream,
    b: &Discount,
    u: f64,
    ctrl: &TruncationControl,
) -> Result<PerpetuityValue, PerpetuityError> {
    let bound = stream.model().eta_abs_bound();
    evaluate_on(&mut StreamProvider::new(stream), bound, b, u, ctrl)
}

/// Evaluates every (b, u) cell on the SAME realized path (one replay per
/// call). Cells are bit-identical to individual `evaluate` calls with the
/// same seed. Row index follows `bs`, column index follows `us`; per-cell
/// errors are reported in place.
pub fn evaluate_grid(
    stream: &PathStream,
    bs: &[Discount],
    us: &[f64],
    ctrl: &TruncationControl,
) -> Vec<Vec<Result<PerpetuityValue, PerpetuityError>>> {
    let mut cache = CachedPath::new(stream);
    let bound = stream.model().eta_abs_bound();
    bs.iter()
        .map(|b| us.iter().map(|&u| evaluate_on(&mut cache, bound, b, u, ctrl)).collect())
        .collect()
}

/// (1-b) sum b^{S_k} eta_{k+1}; the almost-sure limit as b -> 1 is m / mu.
pub fn slln_estimate(
    stream: &PathStream,
    b: &Discount,
    ctrl: &TruncationControl,
) -> Result<f64, PerpetuityError> {
    Ok(b.one_minus_b() * evaluate(stream, b, 1.0, ctrl)?.value)
}

/// (sum_{k=0}^{M} b^{2 mu k})^{-1/2} sum_{k=0}^{M} b^{S_k} eta_{k+1} for a
/// provider, with the drift mu supplied by the caller.
pub fn truncated_statistic_on<P: PairProvider + ?Sized>(
    provider: &mut P,
    mu: f64,
    b: &Discount,
    m_trunc: u64,
) -> f64 {
    let ln_b = b.ln_b();
    let mut num = Kahan::new();
    let mut den = Kahan::new();
    for k in 0..=m_trunc {
        let (s_k, eta_next) = provider.term(k);
        num.add((ln_b * s_k).exp() * eta_next);
        den.add((2.0 * mu * k as f64 * ln_b).exp());
    }
    num.value() / den.value().sqrt()
}

/// Truncated, self-normalized statistic whose limit law is
/// (s^2/mu)^{1/2} Normal(0,1); requires a centered model (E eta = 0).
pub fn truncated_statistic(
    stream: &PathStream,
    b: &Discount,
    m_trunc: u64,
) -> Result<f64, PerpetuityError> {
    let mo = stream.model().moments();
    if mo.m != 0.0 {
        return Err(PerpetuityError::ModelNotCentered { m: mo.m });
    }
    Ok(truncated_statistic_on(&mut StreamProvider::new(stream), mo.mu, b, m_trunc))
}

/// Summation-by-parts identity on one path:
/// lhs = sum_{k=1}^{ell} b^{S_{k-1}} eta_k,
/// rhs = sum_{k=1}^{ell-1} (b^{S_{k-1}} - b^{S_k}) T_k + b^{S_{ell-1}} T_ell.
/// Equal in exact arithmetic; returned separately to expose the float gap.
pub fn parts_identity_check(stream: &PathStream, b: &Discount, ell: u64) -> (f64, f64) {
    assert!(ell >= 2, "identity needs ell >= 2");
    let ln_b = b.ln_b();
    let mut walk = stream.replay();
    let mut lhs = Kahan::new();
    let mut rhs = Kahan::new();
    let mut pow_prev = 1.0; // b^{S_0}
    for _ in 1..=ell {
        let step = walk.next_step();
        let pow_cur = (ln_b * step.s).exp();
        lhs.add(pow_prev * step.eta);
        if step.k < ell {
            rhs.add((pow_prev - pow_cur) * step.t);
        } else {
            rhs.add(pow_prev * step.t);
        }
        pow_prev = pow_cur;
    }
    (lhs.value(), rhs.value())
}
