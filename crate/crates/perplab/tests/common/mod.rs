//! Shared helpers for integration tests.

use perplab::models::{Marginal, PairModel};
use perplab::numeric::pairwise_sum;
use perplab::rng::StreamKey;
use perplab::schedules::Discount;
use perplab::walk::PathStream;

pub fn exp_exp() -> PairModel {
    PairModel::Independent {
        xi: Marginal::Exponential { rate: 1.0 },
        eta: Marginal::Exponential { rate: 1.0 },
    }
    .validated()
    .unwrap()
}

pub fn exp_normal() -> PairModel {
    PairModel::Independent {
        xi: Marginal::Exponential { rate: 1.0 },
        eta: Marginal::Normal { mean: 0.0, sd: 1.0 },
    }
    .validated()
    .unwrap()
}

/// Independent summation of the first `n_terms` series terms on the same
/// seeded path: plain exp/mul per term, pairwise-tree reduction. No shared
/// code with the production Kahan/certificate evaluator beyond the path
/// source itself.
pub fn brute_force(stream: &PathStream, b: &Discount, u: f64, n_terms: u64) -> f64 {
    let mut replay = stream.replay();
    let ln_b = b.b().ln();
    let mut terms = Vec::with_capacity(n_terms as usize);
    let mut s = 0.0; // S_k before consuming pair k+1
    for _ in 0..n_terms {
        let step = replay.next_step();
        terms.push((u * ln_b * s).exp() * step.eta);
        s = step.s;
    }
    pairwise_sum(&terms)
}

/// Random well-posed pair model for sweep tests: positive-drift step, mixed
/// weight families.
pub fn random_model(rng: &mut CaseRng) -> PairModel {
    let xi = match (3.0 * rng.uniform(0.0, 1.0)) as u32 {
        0 => Marginal::Exponential { rate: rng.uniform(0.5, 2.0) },
        1 => Marginal::Uniform { lo: rng.uniform(0.1, 0.5), hi: rng.uniform(1.0, 2.0) },
        _ => Marginal::Point { value: rng.uniform(0.5, 1.5) },
    };
    let eta = match (3.0 * rng.uniform(0.0, 1.0)) as u32 {
        0 => Marginal::Normal { mean: rng.uniform(-1.0, 1.0), sd: rng.uniform(0.1, 1.5) },
        1 => Marginal::TwoPoint { lo: -1.0, hi: 1.0, p_hi: rng.uniform(0.2, 0.8) },
        _ => Marginal::Exponential { rate: rng.uniform(0.5, 2.0) },
    };
    PairModel::Independent { xi, eta }.validated().unwrap()
}

/// Deterministic uniform draws for test-case generation, independent of any
/// experiment stream (large stream index keeps it out of path space).
pub struct CaseRng {
    key: StreamKey,
    cursor: u64,
}

impl CaseRng {
    pub fn new(seed: u64) -> Self {
        CaseRng { key: StreamKey::new(seed, u64::MAX), cursor: 0 }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.key.uniform(self.cursor, 0);
        self.cursor += 1;
        lo + (hi - lo) * u
    }
}
