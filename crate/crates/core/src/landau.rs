//! Fixed-domain (front-fixing) transformation of the American call problem.
//!
//! With `tau = T - t` and `x = ln(rho(tau) / S)` the continuation region
//! `0 < S < rho(tau)` becomes the fixed strip `x > 0`, truncated at `x = L`.
//! The unknown is the synthetic portfolio `Pi = V - S dV/dS`, which satisfies
//! `Pi(0, tau) = -E` and `Pi(+inf, tau) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear-model market inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams<T = f64> {
    pub e_strike: T,
    pub r_rate: T,
    pub q_div: T,
    pub t_mat: T,
}

impl<T: Real> MarketParams<T> {
    pub fn new(e_strike: T, r_rate: T, q_div: T, t_mat: T) -> Result<Self> {
        let m = Self {
            e_strike,
            r_rate,
            q_div,
            t_mat,
        };
        m.validate()?;
        Ok(m)
    }

    /// `0 < q <= r`, `E > 0`, `T > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.e_strike > T::zero() && self.e_strike.is_finite()) {
            return Err(Error::invalid("e_strike", "must be positive"));
        }
        if !(self.t_mat > T::zero() && self.t_mat.is_finite()) {
            return Err(Error::invalid("t_mat", "must be positive"));
        }
        if !(self.q_div > T::zero()) {
            return Err(Error::invalid("q_div", "must be positive"));
        }
        if !(self.q_div <= self.r_rate && self.r_rate.is_finite()) {
            return Err(Error::invalid("r_rate", "must satisfy 0 < q_div <= r_rate"));
        }
        Ok(())
    }

    /// Initial boundary position `rho(0) = r E / q`.
    pub fn initial_boundary(&self) -> T {
        self.r_rate * self.e_strike / self.q_div
    }

    /// Location `ln(r/q)` of the jump in the initial portfolio.
    pub fn initial_jump(&self) -> T {
        (self.r_rate / self.q_div).ln()
    }
}

/// Uniform space-time mesh on `[0, L] x [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid<T = f64> {
    pub x_len: T,
    pub n_space: usize,
    pub m_time: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(x_len: T, n_space: usize, m_time: usize) -> Self {
        Self {
            x_len,
            n_space,
            m_time,
        }
    }

    /// Mesh whose spatial step is as close as possible to `h` and whose time
    /// step satisfies `sigma_hat^2 k / h^2 <= cfl_ratio` (rounded up in `m`).
    pub fn from_cfl(x_len: T, h: T, cfl_ratio: T, sigma_hat: T, t_mat: T) -> Self {
        let n = (x_len / h).round().to_usize().unwrap_or(2).max(2);
        let h = x_len / T::from_usize_lossy(n);
        let k = cfl_ratio * h * h / (sigma_hat * sigma_hat);
        let m = (t_mat / k - T::lit(1e-9))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        Self::new(x_len, n, m)
    }

    pub fn validate(&self, market: &MarketParams<T>) -> Result<()> {
        if self.n_space < 2 {
            return Err(Error::invalid("n_space", "must be at least 2"));
        }
        if self.m_time < 1 {
            return Err(Error::invalid("m_time", "must be at least 1"));
        }
        if !(self.x_len.is_finite() && self.x_len > market.initial_jump()) {
            return Err(Error::invalid("x_len", "must exceed ln(r/q)"));
        }
        Ok(())
    }

    pub fn h(&self) -> T {
        self.x_len / T::from_usize_lossy(self.n_space)
    }

    pub fn k(&self, t_mat: T) -> T {
        t_mat / T::from_usize_lossy(self.m_time)
    }

    pub fn x(&self, i: usize) -> T {
        self.h() * T::from_usize_lossy(i)
    }
}

/// `Pi(., tau_j)` on the grid together with the boundary `rho_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState<T: Real = f64> {
    pub pi: Vec<T>,
    pub rho: T,
    pub j_index: usize,
    pub tau: T,
}

/// Sampled free boundary `rho(tau_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve<T = f64> {
    pub taus: Vec<T>,
    pub rhos: Vec<T>,
    pub market: MarketParams<T>,
    pub model: String,
}

impl<T: Real> BoundaryCurve<T> {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn last_rho(&self) -> Option<T> {
        self.rhos.last().copied()
    }

    /// Largest decrease `rho_{j-1} - rho_j` over the curve (0 when monotone).
    pub fn max_decrease(&self) -> T {
        self.rhos
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(T::zero(), T::max)
    }
}

/// Discrete initial condition: `-E` on nodes strictly left of `ln(r/q)`,
/// zero elsewhere; `rho(0) = r E / q`.
pub fn initial_state<T: Real>(market: &MarketParams<T>, grid: &Grid<T>) -> PortfolioState<T> {
    let jump = market.initial_jump();
    let pi = (0..=grid.n_space)
        .map(|i| {
            if grid.x(i) < jump {
                -market.e_strike
            } else {
                T::zero()
            }
        })
        .collect::<Vec<_>>();
    let mut pi = pi;
    // Dirichlet data; with r = q the jump sits at the origin
    pi[0] = -market.e_strike;
    let n = grid.n_space;
    pi[n] = T::zero();
    PortfolioState {
        pi,
        rho: market.initial_boundary(),
        j_index: 0,
        tau: T::zero(),
    }
}

/// `S = rho e^(-x)`.
#[inline]
pub fn to_asset_price<T: Real>(x: T, rho: T) -> T {
    rho * (-x).exp()
}

/// Option value `V(S, T - tau) = (S/rho)(rho - E + int_0^{ln(rho/S)} e^x Pi dx)`
/// for `0 < S <= rho`, using the trapezoid rule on the grid and a linear
/// treatment of the last partial cell. Beyond `x = L` the far-field value
/// `Pi = 0` applies.
pub fn reconstruct_price<T: Real>(
    state: &PortfolioState<T>,
    grid: &Grid<T>,
    market: &MarketParams<T>,
    s_query: T,
) -> Result<T> {
    if !(s_query > T::zero()) {
        return Err(Error::Domain {
            what: "asset price",
            value: s_query.to_f64_lossy(),
        });
    }
    if s_query > state.rho {
        return Err(Error::OutOfRegion {
            s: s_query.to_f64_lossy(),
            rho: state.rho.to_f64_lossy(),
        });
    }
    let upper = (state.rho / s_query).ln().min(grid.x_len);
    let h = grid.h();
    let half = T::lit(0.5);
    let f = |i: usize| grid.x(i).exp() * state.pi[i];
    let full = (upper / h)
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(grid.n_space);
    let mut integral = T::zero();
    for i in 0..full {
        integral = integral + half * h * (f(i) + f(i + 1));
    }
    let x_full = grid.x(full);
    let rest = upper - x_full;
    if rest > T::zero() && full < grid.n_space {
        let w = rest / h;
        let pi_end = state.pi[full] + w * (state.pi[full + 1] - state.pi[full]);
        integral = integral + half * rest * (f(full) + upper.exp() * pi_end);
    }
    Ok(s_query / state.rho * (state.rho - market.e_strike + integral))
}

/// A price quote that falls back to the exercise payoff above the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceQuote<T = f64> {
    pub s: T,
    pub value: T,
    /// True when `S > rho` and the value is the payoff `S - E`.
    pub exercised: bool,
}

pub fn quote_price<T: Real>(
    state: &PortfolioState<T>,
    grid: &Grid<T>,
    market: &MarketParams<T>,
    s_query: T,
) -> Result<PriceQuote<T>> {
    match reconstruct_price(state, grid, market, s_query) {
        Ok(value) => Ok(PriceQuote {
            s: s_query,
            value,
            exercised: false,
        }),
        Err(Error::OutOfRegion { .. }) => Ok(PriceQuote {
            s: s_query,
            value: s_query - market.e_strike,
            exercised: true,
        }),
        Err(e) => Err(e),
    }
}
