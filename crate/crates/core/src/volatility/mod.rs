//! Nonlinear volatility models `sigma^2(p, xi, tau)`.
//!
//! `p = S^2 d2V/dS2` is the scaled gamma (in transformed variables the
//! x-derivative of the synthetic portfolio), `xi = S` the asset price and
//! `tau` the time to expiry.

mod psi;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use psi::{shoot_seed_coefficient, PsiTable, NEGATIVE_ARGUMENT_TOLERANCE};

/// Below this magnitude the Frey–Stremme denominator is treated as singular.
pub const FREY_STREMME_SINGULARITY: f64 = 1e-12;

/// Number of sample points used by [`VolatilityModel::parabolicity_margin`].
pub const PARABOLICITY_SAMPLES: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VolatilitySpec<T = f64> {
    /// Linear Black–Scholes.
    Constant { sigma_hat: T },
    /// `sigma_hat^2 (1 + Le sgn(p))`.
    Leland { sigma_hat: T, le: T },
    /// `sigma_hat^2 (1 + Psi(a^2 e^(r tau) p))`.
    BarlesSoner { sigma_hat: T, a: T, r: T },
    /// `sigma_hat^2 (1 - rho_f lambda0 p / xi)^(-2)`, constant liquidity profile.
    FreyStremme { sigma_hat: T, rho_f: T, lambda0: T },
    /// Risk adjusted pricing: `sigma_hat^2 (1 + mu (p / xi)^(1/3))`.
    Rapm { sigma_hat: T, mu: T },
}

impl<T: Real> VolatilitySpec<T> {
    pub fn sigma_hat(&self) -> T {
        match *self {
            VolatilitySpec::Constant { sigma_hat }
            | VolatilitySpec::Leland { sigma_hat, .. }
            | VolatilitySpec::BarlesSoner { sigma_hat, .. }
            | VolatilitySpec::FreyStremme { sigma_hat, .. }
            | VolatilitySpec::Rapm { sigma_hat, .. } => sigma_hat,
        }
    }

    /// Short model tag used in file names and CSV metadata.
    pub fn tag(&self) -> &'static str {
        match self {
            VolatilitySpec::Constant { .. } => "constant",
            VolatilitySpec::Leland { .. } => "leland",
            VolatilitySpec::BarlesSoner { .. } => "barles-soner",
            VolatilitySpec::FreyStremme { .. } => "frey-stremme",
            VolatilitySpec::Rapm { .. } => "rapm",
        }
    }

    /// True when the model reduces to constant `sigma_hat^2` for every input.
    pub fn is_linear(&self) -> bool {
        match *self {
            VolatilitySpec::Constant { .. } => true,
            VolatilitySpec::Leland { le, .. } => le == T::zero(),
            VolatilitySpec::BarlesSoner { a, .. } => a == T::zero(),
            VolatilitySpec::FreyStremme { rho_f, .. } => rho_f == T::zero(),
            VolatilitySpec::Rapm { mu, .. } => mu == T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma_hat();
        if !(s > T::zero() && s.is_finite()) {
            return Err(Error::invalid("sigma_hat", "must be positive and finite"));
        }
        let nonneg = |name: &'static str, v: T| {
            if v >= T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be non-negative and finite"))
            }
        };
        match *self {
            VolatilitySpec::Constant { .. } => Ok(()),
            VolatilitySpec::Leland { le, .. } => nonneg("le", le),
            VolatilitySpec::BarlesSoner { a, r, .. } => {
                nonneg("a", a)?;
                if r.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("r", "must be finite"))
                }
            }
            VolatilitySpec::FreyStremme { rho_f, lambda0, .. } => {
                nonneg("rho_f", rho_f)?;
                if lambda0 >= T::one() && lambda0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("lambda0", "must be at least 1"))
                }
            }
            VolatilitySpec::Rapm { mu, .. } => nonneg("mu", mu),
        }
    }
}

/// `mu = 3 (C^2 R / 2 pi)^(1/3)` of the risk adjusted pricing model.
pub fn rapm_mu<T: Real>(cost: T, risk_premium: T) -> Result<T> {
    if !(cost >= T::zero()) {
        return Err(Error::Domain {
            what: "RAPM transaction cost",
            value: cost.to_f64_lossy(),
        });
    }
    if !(risk_premium >= T::zero()) {
        return Err(Error::Domain {
            what: "RAPM risk premium",
            value: risk_premium.to_f64_lossy(),
        });
    }
    let two_pi = T::lit(2.0) * T::PI();
    Ok(T::lit(3.0) * (cost * cost * risk_premium / two_pi).cbrt())
}

/// Leland constant `sqrt(2/pi) C / (sigma_hat sqrt(dt))`.
pub fn leland_constant<T: Real>(cost: T, sigma_hat: T, dt: T) -> Result<T> {
    if !(sigma_hat > T::zero()) {
        return Err(Error::Domain {
            what: "Leland sigma_hat",
            value: sigma_hat.to_f64_lossy(),
        });
    }
    if !(dt > T::zero()) {
        return Err(Error::Domain {
            what: "Leland rebalancing interval",
            value: dt.to_f64_lossy(),
        });
    }
    if !(cost >= T::zero()) {
        return Err(Error::Domain {
            what: "Leland transaction cost",
            value: cost.to_f64_lossy(),
        });
    }
    Ok((T::lit(2.0) / T::PI()).sqrt() * cost / (sigma_hat * dt.sqrt()))
}

/// A validated volatility specification ready for evaluation. Barles–Soner
/// models carry a shared [`PsiTable`].
#[derive(Debug, Clone)]
pub struct VolatilityModel<T: Real = f64> {
    spec: VolatilitySpec<T>,
    psi: Option<Arc<PsiTable<T>>>,
}

impl<T: Real> VolatilityModel<T> {
    /// Validates `spec`; builds the standard Psi table when the model needs it.
    pub fn new(spec: VolatilitySpec<T>) -> Result<Self> {
        spec.validate()?;
        let psi = match spec {
            VolatilitySpec::BarlesSoner { .. } => Some(Arc::new(PsiTable::standard()?)),
            _ => None,
        };
        Ok(Self { spec, psi })
    }

    /// Like [`VolatilityModel::new`] but reuses an existing table.
    pub fn with_psi_table(spec: VolatilitySpec<T>, table: Arc<PsiTable<T>>) -> Result<Self> {
        spec.validate()?;
        let psi = match spec {
            VolatilitySpec::BarlesSoner { .. } => Some(table),
            _ => None,
        };
        Ok(Self { spec, psi })
    }

    pub fn spec(&self) -> &VolatilitySpec<T> {
        &self.spec
    }

    pub fn is_linear(&self) -> bool {
        self.spec.is_linear()
    }

    /// `sigma^2(p, xi, tau)`.
    pub fn sigma_squared(&self, p: T, xi: T, tau: T) -> Result<T> {
        match self.spec {
            VolatilitySpec::Constant { sigma_hat } => Ok(sigma_hat * sigma_hat),
            VolatilitySpec::Leland { sigma_hat, le } => {
                let sgn = if p > T::zero() {
                    T::one()
                } else if p < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                Ok(sigma_hat * sigma_hat * (T::one() + le * sgn))
            }
            VolatilitySpec::BarlesSoner { sigma_hat, a, r } => {
                if a == T::zero() {
                    return Ok(sigma_hat * sigma_hat);
                }
                let table = self
                    .psi
                    .as_ref()
                    .expect("Barles-Soner model constructed without a Psi table");
                let arg = a * a * (r * tau).exp() * p;
                Ok(sigma_hat * sigma_hat * (T::one() + table.eval(arg)?))
            }
            VolatilitySpec::FreyStremme {
                sigma_hat,
                rho_f,
                lambda0,
            } => {
                let den = T::one() - rho_f * lambda0 * p / xi;
                if den.abs() < T::lit(FREY_STREMME_SINGULARITY) || !den.is_finite() {
                    return Err(Error::SingularVolatility {
                        p: p.to_f64_lossy(),
                        xi: xi.to_f64_lossy(),
                        denominator: den.to_f64_lossy(),
                    });
                }
                Ok(sigma_hat * sigma_hat / (den * den))
            }
            VolatilitySpec::Rapm { sigma_hat, mu } => {
                // signed cube root keeps sigma^2 continuous through p = 0
                Ok(sigma_hat * sigma_hat * (T::one() + mu * (p / xi).cbrt()))
            }
        }
    }

    /// Minimum over `PARABOLICITY_SAMPLES` points of
    /// `sigma^2(p) + p d/dp sigma^2(p)` on `[p_lo, p_hi]`; the derivative is a
    /// centred difference with step `1e-6 max(|p|, 1)`. A positive value
    /// certifies parabolicity on the sample.
    pub fn parabolicity_margin(&self, p_lo: T, p_hi: T, xi: T, tau: T) -> Result<T> {
        if !(p_lo.is_finite() && p_hi.is_finite() && p_lo <= p_hi) {
            return Err(Error::invalid("p_range", "must be a finite interval"));
        }
        let n = PARABOLICITY_SAMPLES;
        let mut margin = T::infinity();
        for i in 0..n {
            let w = T::from_usize_lossy(i) / T::from_usize_lossy(n - 1);
            let p = p_lo + (p_hi - p_lo) * w;
            let step = T::lit(1e-6) * p.abs().max(T::one());
            let s = self.sigma_squared(p, xi, tau)?;
            let ds = (self.sigma_squared(p + step, xi, tau)?
                - self.sigma_squared(p - step, xi, tau)?)
                / (T::lit(2.0) * step);
            margin = margin.min(s + p * ds);
        }
        Ok(margin)
    }
}
