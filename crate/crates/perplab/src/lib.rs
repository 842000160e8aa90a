//! Simulation library for discounted convergent perpetuities
//! sum_{k>=0} b^{S_k} eta_{k+1} driven by a positive-drift random walk:
//! series evaluation with truncation certificates, schedules b_n -> 1,
//! an exact sampler for the limiting Gaussian process, and statistical
//! experiments (law of large numbers, central limit behavior, iterated-
//! logarithm scans) behind a deterministic, seedable harness.

pub mod limit_process;
pub mod models;
pub mod numeric;
pub mod perpetuity;
pub mod rng;
pub mod schedules;
pub mod stats;
pub mod walk;

pub mod harness;
