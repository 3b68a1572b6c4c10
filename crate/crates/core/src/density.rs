//! Density models rho(Q) for the energy `E = 1/2 ∫ ∫_0^Q rho(s) ds dx`.
//!
//! Each model provides rho, its derivative, the primitive
//! `F(Q) = ∫_0^Q rho`, the critical speed where `H'(Q) = rho/2 + Q rho'`
//! vanishes, and a sampled certificate of the ellipticity bounds
//! `K^-1 <= rho + 2 Q rho' <= K` and their growth form
//! `K^-1 (Q+k)^q <= rho + 2 Q rho' <= K (Q+k)^q`.

use serde::{Deserialize, Serialize};

use crate::error::{HodgeError, Result};

/// Upper end of the geometric scan used by [`DensityModel::q_crit`].
pub const Q_SCAN_MAX: f64 = 1e6;
/// Absolute bracket width at which the critical-speed bisection stops.
pub const Q_CRIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    /// rho ≡ 1: the harmonic (Dirichlet energy) case.
    Constant,
    /// Adiabatic gas, rho = (1 - (gamma_a - 1) Q / 2)^(1 / (gamma_a - 1)).
    Polytropic { gamma_a: f64 },
    /// rho = (1 + Q)^(-1/2): nonparametric minimal graphs, Born-Infeld.
    MinimalSurface,
    /// rho = (Q + k)^q_exp.
    PowerLaw { k: f64, q_exp: f64 },
}

impl DensityModel {
    pub fn polytropic(gamma_a: f64) -> Result<Self> {
        let m = DensityModel::Polytropic { gamma_a };
        m.validate()?;
        Ok(m)
    }

    pub fn power_law(k: f64, q_exp: f64) -> Result<Self> {
        let m = DensityModel::PowerLaw { k, q_exp };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DensityModel::Polytropic { gamma_a } if !(gamma_a.is_finite() && gamma_a > 1.0) => {
                Err(HodgeError::InvalidArgument(format!(
                    "polytropic density needs gamma_a > 1, got {gamma_a}"
                )))
            }
            DensityModel::PowerLaw { k, q_exp } if !(k.is_finite() && k >= 0.0 && q_exp.is_finite()) => {
                Err(HodgeError::InvalidArgument(format!(
                    "power-law density needs finite k >= 0 and q_exp, got k = {k}, q_exp = {q_exp}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            DensityModel::Constant => "constant".into(),
            DensityModel::Polytropic { gamma_a } => format!("polytropic(gamma_a={gamma_a})"),
            DensityModel::MinimalSurface => "minimal_surface".into(),
            DensityModel::PowerLaw { k, q_exp } => format!("power_law(k={k}, q_exp={q_exp})"),
        }
    }

    /// Exclusive upper bound of the admissible Q range, if finite.
    pub fn admissible_limit(&self) -> Option<f64> {
        match *self {
            DensityModel::Polytropic { gamma_a } => Some(2.0 / (gamma_a - 1.0)),
            _ => None,
        }
    }

    #[cold]
    fn domain_error(&self, q: f64, limit: impl Into<String>) -> HodgeError {
        HodgeError::Domain {
            model: self.name(),
            q,
            limit: limit.into(),
        }
    }

    /// Checks `q` lies in the admissible range for evaluation of rho.
    #[inline]
    pub fn check_admissible(&self, q: f64) -> Result<()> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(self.domain_error(q, "Q must be finite and >= 0"));
        }
        match *self {
            DensityModel::Polytropic { .. } => {
                let lim = self.admissible_limit().unwrap();
                if q >= lim {
                    return Err(self.domain_error(q, format!("Q < 2/(gamma_a-1) = {lim}")));
                }
            }
            DensityModel::PowerLaw { k, q_exp } if q_exp != 0.0 && q + k <= 0.0 => {
                return Err(self.domain_error(q, "Q + k > 0"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn rho(&self, q: f64) -> Result<f64> {
        self.check_admissible(q)?;
        Ok(match *self {
            DensityModel::Constant => 1.0,
            DensityModel::Polytropic { gamma_a } => {
                (1.0 - 0.5 * (gamma_a - 1.0) * q).powf(1.0 / (gamma_a - 1.0))
            }
            DensityModel::MinimalSurface => 1.0 / (1.0 + q).sqrt(),
            DensityModel::PowerLaw { k, q_exp } => (q + k).powf(q_exp),
        })
    }

    pub fn drho(&self, q: f64) -> Result<f64> {
        self.check_admissible(q)?;
        Ok(match *self {
            DensityModel::Constant => 0.0,
            DensityModel::Polytropic { gamma_a } => {
                let base = 1.0 - 0.5 * (gamma_a - 1.0) * q;
                -0.5 * base.powf((2.0 - gamma_a) / (gamma_a - 1.0))
            }
            DensityModel::MinimalSurface => -0.5 / ((1.0 + q) * (1.0 + q).sqrt()),
            DensityModel::PowerLaw { k, q_exp } => {
                if q_exp == 0.0 {
                    0.0
                } else {
                    q_exp * (q + k).powf(q_exp - 1.0)
                }
            }
        })
    }

    /// H'(Q) = rho/2 + Q rho'. Half of rho + 2 Q rho', and
    /// d/dQ (Q rho^2) = 2 rho H', so the sonic point is the zero of H'.
    pub fn hprime(&self, q: f64) -> Result<f64> {
        Ok(0.5 * self.rho(q)? + q * self.drho(q)?)
    }

    /// rho + 2 Q rho': the ellipticity coefficient along the gradient.
    pub fn ellipticity(&self, q: f64) -> Result<f64> {
        Ok(self.rho(q)? + 2.0 * q * self.drho(q)?)
    }

    /// F(Q) = ∫_0^Q rho(s) ds in closed form.
    pub fn primitive(&self, q: f64) -> Result<f64> {
        self.check_admissible(q)?;
        Ok(match *self {
            DensityModel::Constant => q,
            DensityModel::Polytropic { gamma_a } => {
                let base = 1.0 - 0.5 * (gamma_a - 1.0) * q;
                (2.0 / gamma_a) * (1.0 - base.powf(gamma_a / (gamma_a - 1.0)))
            }
            DensityModel::MinimalSurface => 2.0 * ((1.0 + q).sqrt() - 1.0),
            DensityModel::PowerLaw { k, q_exp } => {
                if q == 0.0 {
                    return Ok(0.0);
                }
                if q_exp == -1.0 {
                    if k <= 0.0 {
                        return Err(self.domain_error(q, "logarithmic primitive needs k > 0"));
                    }
                    ((q + k) / k).ln()
                } else {
                    let e = q_exp + 1.0;
                    if k == 0.0 && e < 0.0 {
                        return Err(self.domain_error(q, "primitive diverges at 0 for k = 0, q_exp < -1"));
                    }
                    ((q + k).powf(e) - k.powf(e)) / e
                }
            }
        })
    }

    /// Smallest positive root of H', found by a geometric scan up to
    /// [`Q_SCAN_MAX`] (or towards the admissible limit) and bisection.
    pub fn q_crit(&self) -> Option<f64> {
        let h0 = self.hprime(0.0).ok()?;
        if h0 <= 0.0 {
            return Some(0.0);
        }
        let upper = self.admissible_limit().unwrap_or(Q_SCAN_MAX).min(Q_SCAN_MAX);
        let mut points = Vec::new();
        let mut q = 1e-9;
        while q < upper {
            points.push(q);
            q *= 2.0;
        }
        if let Some(lim) = self.admissible_limit() {
            points.extend((1..=48).map(|j| lim * (1.0 - 0.5f64.powi(j))));
        } else {
            points.push(Q_SCAN_MAX);
        }
        points.sort_by(f64::total_cmp);

        let mut lo = 0.0;
        for &q in &points {
            match self.hprime(q) {
                Ok(v) if v > 0.0 => lo = q,
                Ok(_) => return Some(self.bisect_hprime(lo, q)),
                Err(_) => break,
            }
        }
        None
    }

    // Runs past Q_CRIT_TOL down to adjacent floats so that steep H' (small k
    // in the power law) still gives a tiny residual at the returned root.
    fn bisect_hprime(&self, mut lo: f64, mut hi: f64) -> f64 {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.hprime(mid) {
                Ok(v) if v > 0.0 => lo = mid,
                _ => hi = mid,
            }
        }
        0.5 * (lo + hi)
    }

    /// Samples rho + 2 Q rho' on `samples` uniformly spaced points of
    /// `q_range` and reports the tightest constants certifying the bounds.
    pub fn check_ellipticity(&self, q_range: (f64, f64), samples: usize) -> Result<EllipticityReport> {
        let (lo, hi) = q_range;
        if samples < 2 {
            return Err(HodgeError::InvalidArgument(format!(
                "ellipticity check needs at least 2 samples, got {samples}"
            )));
        }
        if !(lo <= hi) {
            return Err(HodgeError::InvalidArgument(format!(
                "empty Q range [{lo}, {hi}]"
            )));
        }
        self.check_admissible(lo)?;
        self.check_admissible(hi)?;

        let step = (hi - lo) / (samples - 1) as f64;
        let mut min_s = f64::INFINITY;
        let mut max_s = f64::NEG_INFINITY;
        let mut growth_ratio_max: f64 = 0.0;
        let mut failure_q = None;
        let mut last_good = None;
        let (k_hat, q_hat) = match *self {
            DensityModel::PowerLaw { k, q_exp } => (k, q_exp),
            _ => (0.0, 0.0),
        };
        for j in 0..samples {
            let q = if j + 1 == samples { hi } else { lo + j as f64 * step };
            let s = self.ellipticity(q)?;
            min_s = min_s.min(s);
            max_s = max_s.max(s);
            if s > 0.0 {
                let weight = if q_hat == 0.0 { 1.0 } else { (q + k_hat).powf(q_hat) };
                growth_ratio_max = growth_ratio_max.max(s / weight).max(weight / s);
                if failure_q.is_none() {
                    last_good = Some(q);
                }
            } else if failure_q.is_none() {
                failure_q = Some(match last_good {
                    Some(good) => self.bisect_ellipticity(good, q),
                    None => q,
                });
            }
        }
        let satisfied = min_s > 0.0;
        let k_big = if satisfied {
            max_s.max(1.0 / min_s)
        } else {
            f64::INFINITY
        };
        Ok(EllipticityReport {
            q_range,
            satisfied,
            k_hat_17: k_big,
            growth_k_hat: if satisfied { growth_ratio_max } else { f64::INFINITY },
            k_hat,
            q_hat,
            min_hprime: 0.5 * min_s,
            failure_q,
        })
    }

    fn bisect_ellipticity(&self, mut good: f64, mut bad: f64) -> f64 {
        while (bad - good).abs() > Q_CRIT_TOL {
            let mid = 0.5 * (good + bad);
            if mid == good || mid == bad {
                break;
            }
            match self.ellipticity(mid) {
                Ok(s) if s > 0.0 => good = mid,
                _ => bad = mid,
            }
        }
        0.5 * (good + bad)
    }
}

/// Sampled certificate of the ellipticity bounds on a Q interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub q_range: (f64, f64),
    pub satisfied: bool,
    /// Smallest K with K^-1 <= rho + 2 Q rho' <= K on the samples.
    #[serde(rename = "K_hat")]
    pub k_hat_17: f64,
    /// Smallest K for the growth form with the reported (k_hat, q_hat).
    #[serde(rename = "growth_K_hat")]
    pub growth_k_hat: f64,
    pub k_hat: f64,
    pub q_hat: f64,
    pub min_hprime: f64,
    #[serde(rename = "failure_Q")]
    pub failure_q: Option<f64>,
}
