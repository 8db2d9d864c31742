//! Tabulated solution of the Barles–Soner ODE
//!
//! ```text
//! Psi'(x) = (Psi(x) + 1) / (2 sqrt(x Psi(x)) - x),   Psi(0) = 0,
//! ```
//!
//! singular at the origin, where `Psi(x) ~ c x^(1/3)`. The table is seeded at
//! a small abscissa `eps` from that ansatz, integrated in `t = ln x` with an
//! adaptive Dormand–Prince pair, and interpolated by a monotone cubic in
//! `(ln x, ln Psi)`.

use crate::error::{Error, Result};
use crate::interp::{hermite, pchip_slopes};
use crate::scalar::Real;

/// Negative arguments with magnitude below this are rounding noise from a
/// vanishing discrete gamma and evaluate to `Psi = 0`.
pub const NEGATIVE_ARGUMENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PsiTable<T: Real = f64> {
    /// Leading coefficient of `Psi(x) ~ c x^(1/3)` found by shooting.
    seed_coefficient: T,
    eps: T,
    x_max: T,
    ln_eps: T,
    ln_step: T,
    ln_x: Vec<T>,
    ln_psi: Vec<T>,
    slopes: Vec<T>,
    /// `Psi'(x_max)`, used for linear extrapolation beyond the table.
    tail_slope: T,
}

/// Right-hand side of the ODE in the original variable.
#[inline]
fn rhs<T: Real>(x: T, psi: T) -> Option<T> {
    let den = T::lit(2.0) * (x * psi).sqrt() - x;
    if den > T::zero() && den.is_finite() {
        Some((psi + T::one()) / den)
    } else {
        None
    }
}

/// Residual of the ansatz `Psi = c x^(1/3)` plugged into the ODE at `x`,
/// scaled by `x^(2/3)`.
fn seed_residual<T: Real>(c: T, x: T) -> T {
    let third = T::one() / T::lit(3.0);
    let cube = x.powf(third);
    let lhs = c * third;
    let den = T::lit(2.0) * c.sqrt() - cube;
    if den <= T::zero() {
        return T::neg_infinity();
    }
    lhs - (c * cube + T::one()) / den
}

/// Finds `c` so that the ansatz satisfies the ODE at `eps` (bisection).
pub fn shoot_seed_coefficient<T: Real>(eps: T) -> Result<T> {
    let mut lo = T::lit(1e-3);
    let mut hi = T::lit(1e3);
    if !(seed_residual(lo, eps) < T::zero() && seed_residual(hi, eps) > T::zero()) {
        return Err(Error::Integration {
            x: eps.to_f64_lossy(),
            reason: "seed residual does not change sign on [1e-3, 1e3]".into(),
        });
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if seed_residual(mid, eps) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

impl<T: Real> PsiTable<T> {
    /// Default table: `eps = 1e-8`, `x_max = 1e6`, 1401 nodes, tolerance `1e-12`
    /// (`1e-6` for `f32`).
    pub fn standard() -> Result<Self> {
        let tol = if T::epsilon() > T::lit(1e-10) {
            1e-6
        } else {
            1e-12
        };
        Self::build(T::lit(1e-8), T::lit(1e6), 1401, T::lit(tol))
    }

    /// Integrates the ODE from `eps` to `x_max` and records `n_nodes`
    /// geometrically spaced samples (both ends included).
    pub fn build(eps: T, x_max: T, n_nodes: usize, tol: T) -> Result<Self> {
        if !(eps > T::zero() && eps < T::lit(1e-2)) {
            return Err(Error::invalid("eps", "must lie in (0, 1e-2)"));
        }
        if !(x_max > eps) {
            return Err(Error::invalid("x_max", "must exceed eps"));
        }
        if n_nodes < 2 {
            return Err(Error::invalid("n_nodes", "need at least two nodes"));
        }
        if !(tol > T::zero()) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        let c = shoot_seed_coefficient(eps)?;
        let ln_eps = eps.ln();
        let ln_max = x_max.ln();
        let ln_step = (ln_max - ln_eps) / T::from_usize_lossy(n_nodes - 1);
        let ln_x: Vec<T> = (0..n_nodes)
            .map(|i| ln_eps + ln_step * T::from_usize_lossy(i))
            .collect();

        let mut psi = c * eps.cbrt();
        let mut psi_nodes = Vec::with_capacity(n_nodes);
        psi_nodes.push(psi);
        let mut h = ln_step * T::lit(0.1);
        for w in ln_x.windows(2) {
            let (y, h_next) = integrate_dp45(w[0], w[1], psi, h, tol)?;
            psi = y;
            h = h_next;
            psi_nodes.push(psi);
        }
        if psi_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Integration {
                x: x_max.to_f64_lossy(),
                reason: "tabulated values are not strictly increasing".into(),
            });
        }
        let ln_psi: Vec<T> = psi_nodes.iter().map(|p| p.ln()).collect();
        let slopes = pchip_slopes(&ln_x, &ln_psi);
        let tail_slope = rhs(x_max, psi).ok_or(Error::Integration {
            x: x_max.to_f64_lossy(),
            reason: "denominator vanished at x_max".into(),
        })?;
        Ok(Self {
            seed_coefficient: c,
            eps,
            x_max,
            ln_eps,
            ln_step,
            ln_x,
            ln_psi,
            slopes,
            tail_slope,
        })
    }

    pub fn seed_coefficient(&self) -> T {
        self.seed_coefficient
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    /// Tabulated nodes `(x, Psi(x))`, starting with the anchor `(0, 0)`.
    pub fn nodes(&self) -> Vec<(T, T)> {
        std::iter::once((T::zero(), T::zero()))
            .chain(
                self.ln_x
                    .iter()
                    .zip(&self.ln_psi)
                    .map(|(lx, lp)| (lx.exp(), lp.exp())),
            )
            .collect()
    }

    pub fn eval(&self, x: T) -> Result<T> {
        if x.is_nan() {
            return Err(Error::Domain {
                what: "Psi",
                value: f64::NAN,
            });
        }
        if x <= T::zero() {
            if x >= -T::lit(NEGATIVE_ARGUMENT_TOLERANCE) {
                return Ok(T::zero());
            }
            return Err(Error::Domain {
                what: "Psi",
                value: x.to_f64_lossy(),
            });
        }
        if x < self.eps {
            return Ok(self.seed_coefficient * x.cbrt());
        }
        if x > self.x_max {
            let last = self.ln_psi[self.ln_psi.len() - 1].exp();
            return Ok(last + self.tail_slope * (x - self.x_max));
        }
        let lx = x.ln();
        let last = self.ln_x.len() - 2;
        let i = ((lx - self.ln_eps) / self.ln_step)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(last);
        let t = (lx - self.ln_x[i]) / self.ln_step;
        let v = hermite(
            t,
            self.ln_step,
            self.ln_psi[i],
            self.ln_psi[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
        );
        Ok(v.exp())
    }
}

/// Dormand–Prince 5(4) integration of `dPsi/dt = e^t f(e^t, Psi)` from `t0`
/// to `t1`. Returns the end value and the last accepted step size.
fn integrate_dp45<T: Real>(t0: T, t1: T, y0: T, h0: T, tol: T) -> Result<(T, T)> {
    let g = |t: T, y: T| -> Result<T> {
        let x = t.exp();
        rhs(x, y).map(|v| x * v).ok_or(Error::Integration {
            x: x.to_f64_lossy(),
            reason: "denominator 2 sqrt(x Psi) - x reached zero".into(),
        })
    };
    let l = T::lit;
    let (a21, a31, a32) = (l(1.0 / 5.0), l(3.0 / 40.0), l(9.0 / 40.0));
    let (a41, a42, a43) = (l(44.0 / 45.0), l(-56.0 / 15.0), l(32.0 / 9.0));
    let (a51, a52, a53, a54) = (
        l(19372.0 / 6561.0),
        l(-25360.0 / 2187.0),
        l(64448.0 / 6561.0),
        l(-212.0 / 729.0),
    );
    let (a61, a62, a63, a64, a65) = (
        l(9017.0 / 3168.0),
        l(-355.0 / 33.0),
        l(46732.0 / 5247.0),
        l(49.0 / 176.0),
        l(-5103.0 / 18656.0),
    );
    let (b1, b3, b4, b5, b6) = (
        l(35.0 / 384.0),
        l(500.0 / 1113.0),
        l(125.0 / 192.0),
        l(-2187.0 / 6784.0),
        l(11.0 / 84.0),
    );
    // error coefficients: b - b*
    let (e1, e3, e4, e5, e6, e7) = (
        l(71.0 / 57600.0),
        l(-71.0 / 16695.0),
        l(71.0 / 1920.0),
        l(-17253.0 / 339200.0),
        l(22.0 / 525.0),
        l(-1.0 / 40.0),
    );
    let (c2, c3, c4, c5) = (l(0.2), l(0.3), l(0.8), l(8.0 / 9.0));

    let mut t = t0;
    let mut y = y0;
    let mut h = h0.min(t1 - t0);
    let mut last_ok = h;
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Integration {
                x: t.exp().to_f64_lossy(),
                reason: "step budget exhausted".into(),
            });
        }
        let finishing = t + h >= t1;
        if finishing {
            h = t1 - t;
        }
        let k1 = g(t, y)?;
        let stages = (|| -> Result<(T, T)> {
            let k2 = g(t + c2 * h, y + h * a21 * k1)?;
            let k3 = g(t + c3 * h, y + h * (a31 * k1 + a32 * k2))?;
            let k4 = g(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3))?;
            let k5 = g(
                t + c5 * h,
                y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4),
            )?;
            let k6 = g(
                t + h,
                y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5),
            )?;
            let y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            let k7 = g(t + h, y5)?;
            let err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            Ok((y5, err))
        })();
        let (y5, err) = match stages {
            Ok(pair) => pair,
            Err(e) => {
                // a trial stage left the admissible region; retry smaller
                h = h * l(0.25);
                if h < l(1e-14) {
                    return Err(e);
                }
                continue;
            }
        };
        let scale = tol * (T::one() + y.abs().max(y5.abs()));
        let ratio = err.abs() / scale;
        if ratio <= T::one() {
            t = if finishing { t1 } else { t + h };
            y = y5;
            if !finishing {
                last_ok = h;
            }
        }
        let factor = if ratio == T::zero() {
            l(5.0)
        } else {
            (l(0.9) * ratio.powf(l(-0.2))).max(l(0.2)).min(l(5.0))
        };
        h = h * factor;
    }
    Ok((y, last_ok))
}
