//! Coupled random walks S_k = xi_1 + ... + xi_k and T_k = eta_1 + ... + eta_k.
//!
//! A `PathStream` is addressed by (master_seed, path_index); replaying the
//! same address yields the bit-identical path regardless of what else ran.

use crate::models::PairModel;
use crate::rng::StreamKey;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("horizon {horizon} too small: S_horizon = {s_end} has not exceeded level {level}")]
    HorizonTooSmall { level: f64, horizon: u64, s_end: f64 },
}

/// One step of the coupled walk after consuming pair k (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Number of pairs consumed so far.
    pub k: u64,
    pub xi: f64,
    pub eta: f64,
    /// S_k, prefix sum of xi.
    pub s: f64,
    /// T_k, prefix sum of eta.
    pub t: f64,
}

/// Sequential generator for one walk path.
#[derive(Debug, Clone)]
pub struct PathStream {
    model: PairModel,
    key: StreamKey,
    master_seed: u64,
    path_index: u64,
    cursor: u64,
    s: f64,
    t: f64,
}

impl PathStream {
    pub fn new(model: PairModel, master_seed: u64, path_index: u64) -> Self {
        PathStream {
            key: StreamKey::new(master_seed, path_index),
            model,
            master_seed,
            path_index,
            cursor: 0,
            s: 0.0,
            t: 0.0,
        }
    }

    pub fn model(&self) -> &PairModel {
        &self.model
    }

    /// Pairs consumed so far; the state corresponds to (S_k, T_k) at this k.
    pub fn position(&self) -> u64 {
        self.cursor
    }

    /// Current S_k.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Current T_k.
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Draw pair k+1 and advance. Prefix sums are plain sequential adds so
    /// an independent re-summation of the same pairs reproduces them exactly.
    pub fn next_step(&mut self) -> Step {
        let (xi, eta) = self.model.sample_pair(&self.key, self.cursor);
        self.cursor += 1;
        self.s += xi;
        self.t += eta;
        Step { k: self.cursor, xi, eta, s: self.s, t: self.t }
    }

    /// Fresh stream over the same address: same pairs from cursor 0.
    pub fn replay(&self) -> PathStream {
        PathStream::new(self.model.clone(), self.master_seed, self.path_index)
    }

    /// Renewal count M(x) = #{ n >= 0 : S_n <= x } for x >= 0, counting
    /// n = 0 (S_0 = 0). Scans up to `horizon` steps and fails if the walk
    /// has not passed the level by then, rather than silently undercounting.
    pub fn renewal_count(&mut self, x: f64, horizon: u64) -> Result<u64, WalkError> {
        debug_assert!(self.cursor == 0, "renewal_count expects a fresh stream");
        let mut count = if 0.0 <= x { 1 } else { 0 };
        for _ in 0..horizon {
            let step = self.next_step();
            if step.s <= x {
                count += 1;
            }
        }
        if self.s <= x {
            return Err(WalkError::HorizonTooSmall { level: x, horizon, s_end: self.s });
        }
        Ok(count)
    }
}
