//! Joint distributions of the step pair (xi, eta) with analytic moments.
//!
//! Moments are stored in closed form per family, never estimated, so
//! downstream tolerance math has exact targets. Construction rejects
//! models with non-positive drift (`mu <= 0`).

use crate::rng::StreamKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("drift mu = E xi must be positive and finite, got {0}")]
    NonPositiveDrift(f64),
    #[error("invalid marginal parameter: {0}")]
    BadMarginal(String),
    #[error("user table invalid: {0}")]
    BadTable(String),
}

/// One-dimensional marginal with closed-form mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum Marginal {
    /// Point mass at `value`.
    Point { value: f64 },
    Normal { mean: f64, sd: f64 },
    /// Rate parameterization; mean = 1/rate.
    Exponential { rate: f64 },
    /// Two-point lattice: `lo` with probability 1 - p_hi, `hi` with p_hi.
    TwoPoint { lo: f64, hi: f64, p_hi: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadMarginal(msg));
        match *self {
            Marginal::Point { value } => {
                if !value.is_finite() {
                    return bad(format!("point mass at non-finite {value}"));
                }
            }
            Marginal::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
                    return bad(format!("normal(mean={mean}, sd={sd})"));
                }
            }
            Marginal::Exponential { rate } => {
                if !(rate > 0.0) || !rate.is_finite() {
                    return bad(format!("exponential rate {rate} must be > 0"));
                }
            }
            Marginal::TwoPoint { lo, hi, p_hi } => {
                if !lo.is_finite() || !hi.is_finite() || !(0.0..=1.0).contains(&p_hi) {
                    return bad(format!("two-point(lo={lo}, hi={hi}, p_hi={p_hi})"));
                }
            }
            Marginal::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return bad(format!("uniform(lo={lo}, hi={hi})"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Point { value } => value,
            Marginal::Normal { mean, .. } => mean,
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::TwoPoint { lo, hi, p_hi } => lo + (hi - lo) * p_hi,
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Point { .. } => 0.0,
            Marginal::Normal { sd, .. } => sd * sd,
            Marginal::Exponential { rate } => 1.0 / (rate * rate),
            Marginal::TwoPoint { lo, hi, p_hi } => (hi - lo) * (hi - lo) * p_hi * (1.0 - p_hi),
            Marginal::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    /// One draw addressed by (cursor, salt); uses salts `salt` and `salt + 1`.
    #[inline]
    pub fn sample(&self, key: &StreamKey, cursor: u64, salt: u64) -> f64 {
        match *self {
            Marginal::Point { value } => value,
            Marginal::Normal { mean, sd } => mean + sd * key.normal(cursor, salt),
            Marginal::Exponential { rate } => -key.uniform(cursor, salt).ln() / rate,
            Marginal::TwoPoint { lo, hi, p_hi } => {
                if key.uniform(cursor, salt) < p_hi {
                    hi
                } else {
                    lo
                }
            }
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * key.uniform(cursor, salt),
        }
    }
}

/// Row of a finite user table: (xi, eta) with probability p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub xi: f64,
    pub eta: f64,
    pub p: f64,
}

/// Analytic moment record of the pair law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// E xi, the walk drift; positive by construction.
    pub mu: f64,
    /// E eta.
    pub m: f64,
    /// Var xi.
    pub sigma2: f64,
    /// Var eta.
    pub s2: f64,
    /// E(xi eta) - mu m.
    pub gamma: f64,
}

/// Joint law of the step pair (xi, eta), possibly dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PairModel {
    Degenerate {
        xi: f64,
        eta: f64,
    },
    /// Independent product of two marginals.
    Independent {
        xi: Marginal,
        eta: Marginal,
    },
    /// eta = slope * xi + intercept + noise, noise independent of xi.
    LinearCoupled {
        xi: Marginal,
        slope: f64,
        intercept: f64,
        noise: Option<Marginal>,
    },
    UserTable {
        rows: Vec<TableRow>,
    },
}

impl PairModel {
    /// Validates parameters and the standing assumption mu in (0, inf).
    pub fn validated(self) -> Result<Self, ModelError> {
        match &self {
            PairModel::Degenerate { xi, eta } => {
                if !xi.is_finite() || !eta.is_finite() {
                    return Err(ModelError::BadMarginal("non-finite point mass".into()));
                }
            }
            PairModel::Independent { xi, eta } => {
                xi.validate()?;
                eta.validate()?;
            }
            PairModel::LinearCoupled {
                xi,
                slope,
                intercept,
                noise,
            } => {
                xi.validate()?;
                if !slope.is_finite() || !intercept.is_finite() {
                    return Err(ModelError::BadMarginal("non-finite coupling".into()));
                }
                if let Some(n) = noise {
                    n.validate()?;
                }
            }
            PairModel::UserTable { rows } => {
                if rows.is_empty() {
                    return Err(ModelError::BadTable("empty table".into()));
                }
                let mut total = 0.0;
                for r in rows {
                    if !(r.p >= 0.0) || !r.xi.is_finite() || !r.eta.is_finite() {
                        return Err(ModelError::BadTable(format!("bad row {r:?}")));
                    }
                    total += r.p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(ModelError::BadTable(format!(
                        "probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        let mu = self.moments().mu;
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(ModelError::NonPositiveDrift(mu));
        }
        Ok(self)
    }

    /// Closed-form moment record; pure and deterministic.
    pub fn moments(&self) -> Moments {
        match self {
            PairModel::Degenerate { xi, eta } => Moments {
                mu: *xi,
                m: *eta,
                sigma2: 0.0,
                s2: 0.0,
                gamma: 0.0,
            },
            PairModel::Independent { xi, eta } => Moments {
                mu: xi.mean(),
                m: eta.mean(),
                sigma2: xi.variance(),
                s2: eta.variance(),
                gamma: 0.0,
            },
            PairModel::LinearCoupled {
                xi,
                slope,
                intercept,
                noise,
            } => {
                let mu = xi.mean();
                let sigma2 = xi.variance();
                let (nm, nv) = noise.as_ref().map_or((0.0, 0.0), |n| (n.mean(), n.variance()));
                Moments {
                    mu,
                    m: slope * mu + intercept + nm,
                    sigma2,
                    s2: slope * slope * sigma2 + nv,
                    gamma: slope * sigma2,
                }
            }
            PairModel::UserTable { rows } => {
                let mut mu = 0.0;
                let mut m = 0.0;
                let mut exx = 0.0;
                let mut eyy = 0.0;
                let mut exy = 0.0;
                for r in rows {
                    mu += r.p * r.xi;
                    m += r.p * r.eta;
                    exx += r.p * r.xi * r.xi;
                    eyy += r.p * r.eta * r.eta;
                    exy += r.p * r.xi * r.eta;
                }
                Moments {
                    mu,
                    m,
                    sigma2: exx - mu * mu,
                    s2: eyy - m * m,
                    gamma: exy - mu * m,
                }
            }
        }
    }

    /// Analytic upper bound for E|eta| used by truncation certificates:
    /// E|eta| <= sqrt(m^2 + s^2).
    pub fn eta_abs_bound(&self) -> f64 {
        let mo = self.moments();
        (mo.m * mo.m + mo.s2).sqrt()
    }

    /// One joint draw addressed by cursor. Same key and cursor give a
    /// bit-identical pair.
    #[inline]
    pub fn sample_pair(&self, key: &StreamKey, cursor: u64) -> (f64, f64) {
        match self {
            PairModel::Degenerate { xi, eta } => (*xi, *eta),
            PairModel::Independent { xi, eta } => {
                (xi.sample(key, cursor, 0), eta.sample(key, cursor, 2))
            }
            PairModel::LinearCoupled {
                xi,
                slope,
                intercept,
                noise,
            } => {
                let x = xi.sample(key, cursor, 0);
                let n = noise.as_ref().map_or(0.0, |d| d.sample(key, cursor, 4));
                (x, slope * x + intercept + n)
            }
            PairModel::UserTable { rows } => {
                let u = key.uniform(cursor, 0);
                let mut acc = 0.0;
                for r in rows {
                    acc += r.p;
                    if u < acc {
                        return (r.xi, r.eta);
                    }
                }
                let last = rows.last().expect("non-empty by construction");
                (last.xi, last.eta)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> StreamKey {
        StreamKey::new(2024, 0)
    }

    #[test]
    fn degenerate_moments() {
        let m = PairModel::Degenerate { xi: 2.0, eta: 3.0 }.validated().unwrap();
        let mo = m.moments();
        assert_eq!((mo.mu, mo.m, mo.sigma2, mo.s2, mo.gamma), (2.0, 3.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn independent_normal_moments() {
        let m = PairModel::Independent {
            xi: Marginal::Normal { mean: 1.0, sd: 1.0 },
            eta: Marginal::Normal { mean: 0.0, sd: 1.0 },
        }
        .validated()
        .unwrap();
        let mo = m.moments();
        assert_eq!((mo.mu, mo.m, mo.sigma2, mo.s2, mo.gamma), (1.0, 0.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn linear_coupled_exp_moments() {
        // xi ~ Exp(1), eta = xi - 1: gamma = Var xi = 1.
        let m = PairModel::LinearCoupled {
            xi: Marginal::Exponential { rate: 1.0 },
            slope: 1.0,
            intercept: -1.0,
            noise: None,
        }
        .validated()
        .unwrap();
        let mo = m.moments();
        assert!((mo.mu - 1.0).abs() < 1e-15);
        assert!(mo.m.abs() < 1e-15);
        assert!((mo.sigma2 - 1.0).abs() < 1e-15);
        assert!((mo.s2 - 1.0).abs() < 1e-15);
        assert!((mo.gamma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_coupling_holds_on_every_sample() {
        let m = PairModel::LinearCoupled {
            xi: Marginal::Exponential { rate: 1.0 },
            slope: 1.0,
            intercept: -1.0,
            noise: None,
        }
        .validated()
        .unwrap();
        let k = key();
        for c in 0..10_000 {
            let (xi, eta) = m.sample_pair(&k, c);
            assert_eq!(eta, xi - 1.0);
        }
    }

    #[test]
    fn degenerate_sample_constant() {
        let m = PairModel::Degenerate { xi: 1.0, eta: 0.0 }.validated().unwrap();
        assert_eq!(m.sample_pair(&key(), 12345), (1.0, 0.0));
    }

    #[test]
    fn rejects_non_positive_drift() {
        let r = PairModel::Degenerate { xi: 0.0, eta: 1.0 }.validated();
        assert!(matches!(r, Err(ModelError::NonPositiveDrift(_))));
        let r = PairModel::Independent {
            xi: Marginal::Normal { mean: -1.0, sd: 1.0 },
            eta: Marginal::Point { value: 0.0 },
        }
        .validated();
        assert!(matches!(r, Err(ModelError::NonPositiveDrift(_))));
    }

    #[test]
    fn user_table_probabilities_checked() {
        let r = PairModel::UserTable {
            rows: vec![
                TableRow { xi: 1.0, eta: 0.5, p: 0.6 },
                TableRow { xi: 2.0, eta: -0.5, p: 0.3 },
            ],
        }
        .validated();
        assert!(matches!(r, Err(ModelError::BadTable(_))));
    }

    /// Empirical moments over 1e6 draws within 5 standard errors of the
    /// stored analytic values, for each supported family.
    #[test]
    fn empirical_moments_match_analytic() {
        let families = vec![
            PairModel::Independent {
                xi: Marginal::Exponential { rate: 1.0 },
                eta: Marginal::Normal { mean: 0.0, sd: 1.0 },
            },
            PairModel::Independent {
                xi: Marginal::TwoPoint { lo: 1.0, hi: 2.0, p_hi: 0.25 },
                eta: Marginal::Uniform { lo: -1.0, hi: 1.0 },
            },
            PairModel::LinearCoupled {
                xi: Marginal::Exponential { rate: 2.0 },
                slope: 0.5,
                intercept: 0.25,
                noise: Some(Marginal::Normal { mean: 0.0, sd: 0.5 }),
            },
            PairModel::UserTable {
                rows: vec![
                    TableRow { xi: 1.0, eta: 1.0, p: 0.5 },
                    TableRow { xi: 2.0, eta: -1.0, p: 0.5 },
                ],
            },
        ];
        let n = 1_000_000u64;
        for model in families {
            let model = model.validated().unwrap();
            let mo = model.moments();
            let k = StreamKey::new(77, 0);
            let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
            for c in 0..n {
                let (x, y) = model.sample_pair(&k, c);
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
            }
            let nf = n as f64;
            let ex = sx / nf;
            let ey = sy / nf;
            let vx = sxx / nf - ex * ex;
            let vy = syy / nf - ey * ey;
            // standard errors: se(mean) = sd/sqrt(n), se(var) ~ var*sqrt(2/n)
            // (conservative for the non-normal families at 5 se).
            let se_x = (mo.sigma2 / nf).sqrt().max(1e-12);
            let se_y = (mo.s2 / nf).sqrt().max(1e-12);
            assert!((ex - mo.mu).abs() < 5.0 * se_x, "{model:?} mean xi {ex} vs {}", mo.mu);
            assert!((ey - mo.m).abs() < 5.0 * se_y, "{model:?} mean eta {ey} vs {}", mo.m);
            let se_vx = (mo.sigma2 * (8.0 / nf).sqrt()).max(1e-9);
            let se_vy = (mo.s2 * (8.0 / nf).sqrt()).max(1e-9);
            assert!((vx - mo.sigma2).abs() < 5.0 * se_vx, "{model:?} var xi {vx}");
            assert!((vy - mo.s2).abs() < 5.0 * se_vy, "{model:?} var eta {vy}");
        }
    }

    #[test]
    fn independent_exp_mean_monte_carlo() {
        let m = PairModel::Independent {
            xi: Marginal::Exponential { rate: 1.0 },
            eta: Marginal::Normal { mean: 0.0, sd: 1.0 },
        }
        .validated()
        .unwrap();
        let k = key();
        let n = 1_000_000u64;
        let mut s = 0.0;
        for c in 0..n {
            s += m.sample_pair(&k, c).0;
        }
        assert!((s / n as f64 - 1.0).abs() < 0.005);
    }
}
