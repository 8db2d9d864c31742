//! Operator-splitting time stepper for the transformed problem.
//!
//! Each level `tau_j = j k` performs an explicit transport step along the
//! characteristics of the drift (which absorbs the moving boundary), an
//! implicit diffusion step solved with the Thomas algorithm, and an update of
//! `rho_j` from the boundary slope of `Pi`. The three pieces are coupled and
//! iterated at each level until they agree.

use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::landau::{initial_state, BoundaryCurve, Grid, MarketParams, PortfolioState};
use crate::scalar::Real;
use crate::tridiag::{thomas_solve_into, TridiagonalSystem};
use crate::volatility::VolatilityModel;

/// Knobs for the per-level coupling iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverControls<T = f64> {
    /// Stopping tolerance on the boundary residual and on the change of
    /// `(Pi, rho)` between successive iterates.
    pub micro_tol: T,
    pub max_micro: usize,
    /// Keep every `store_every`-th level as a snapshot; `None` keeps about 100.
    pub store_every: Option<usize>,
    /// Damping applied when the secant update is unavailable.
    pub relaxation: T,
    /// Recompute the level equations at each accepted level.
    pub verify_levels: bool,
}

impl<T: Real> Default for SolverControls<T> {
    fn default() -> Self {
        Self {
            micro_tol: T::lit(1e-7),
            max_micro: 50,
            store_every: None,
            relaxation: T::one(),
            verify_levels: true,
        }
    }
}

impl<T: Real> SolverControls<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.micro_tol > T::zero() && self.micro_tol.is_finite()) {
            return Err(Error::invalid("micro_tol", "must be positive"));
        }
        if self.max_micro < 2 {
            return Err(Error::invalid("max_micro", "must be at least 2"));
        }
        if self.store_every == Some(0) {
            return Err(Error::invalid("store_every", "must be at least 1"));
        }
        if !(self.relaxation > T::zero() && self.relaxation <= T::one()) {
            return Err(Error::invalid("relaxation", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Diagnostics of one accepted level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats<T = f64> {
    pub micro_iterations: usize,
    pub residual: T,
    /// Nodes whose departure point fell beyond `x = L`.
    pub beyond_domain: usize,
    /// `max |A Pi - rhs|` of the last tridiagonal solve.
    pub linear_residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T = f64> {
    pub levels: usize,
    pub micro_iterations: Vec<u32>,
    pub final_residuals: Vec<T>,
    /// Re-substitution residuals of the accepted levels (empty unless
    /// `verify_levels`).
    pub resubstitution: Vec<T>,
    pub beyond_domain: usize,
    /// Levels at which `rho_j < E`.
    pub below_strike: usize,
    pub max_linear_residual: T,
    /// Range of `Pi` over all nodes and levels.
    pub pi_min: T,
    pub pi_max: T,
    /// Smallest boundary slope `(Pi_1 - Pi_0) / h` over the levels.
    pub min_boundary_slope: T,
    /// `(tau, margin)` samples of the parabolicity check; `NaN` marks a model
    /// that could not be evaluated on the sampled range.
    pub parabolicity: Vec<(T, T)>,
    pub wall_time: Duration,
}

impl<T: Real> SolveReport<T> {
    pub fn mean_micro_iterations(&self) -> f64 {
        if self.micro_iterations.is_empty() {
            return 0.0;
        }
        let s: u64 = self.micro_iterations.iter().map(|&v| v as u64).sum();
        s as f64 / self.micro_iterations.len() as f64
    }

    pub fn max_micro_iterations(&self) -> u32 {
        self.micro_iterations.iter().copied().max().unwrap_or(0)
    }

    pub fn max_resubstitution(&self) -> T {
        self.resubstitution.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T: Real = f64> {
    pub curve: BoundaryCurve<T>,
    pub snapshots: Vec<PortfolioState<T>>,
    pub final_state: PortfolioState<T>,
    pub report: SolveReport<T>,
}

/// A failed solve: the level error plus everything computed before it.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SolveFailure<T: Real = f64> {
    #[source]
    pub error: Error,
    pub partial: BoundaryCurve<T>,
}

/// Result of [`transport_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transported<T = f64> {
    pub values: Vec<T>,
    pub beyond_domain: usize,
}

/// Explicit step along characteristics:
/// `Pi_half(x_i) = Pi_prev(x_i - ln(rho_new / rho_prev) - (r - q) k)`,
/// linear interpolation in between nodes, `-E` for departure points at or
/// left of the boundary and `0` beyond `x = L`.
pub fn transport_step<T: Real>(
    prev: &PortfolioState<T>,
    rho_new: T,
    market: &MarketParams<T>,
    grid: &Grid<T>,
) -> Transported<T> {
    let mut values = Vec::new();
    let beyond_domain = transport_into(prev, rho_new, market, grid, &mut values);
    Transported {
        values,
        beyond_domain,
    }
}

fn transport_into<T: Real>(
    prev: &PortfolioState<T>,
    rho_new: T,
    market: &MarketParams<T>,
    grid: &Grid<T>,
    out: &mut Vec<T>,
) -> usize {
    let h = grid.h();
    let k = grid.k(market.t_mat);
    let shift = (rho_new / prev.rho).ln() + (market.r_rate - market.q_div) * k;
    let s = shift / h;
    let n = grid.n_space;
    let neg_e = -market.e_strike;
    out.clear();
    let mut beyond = 0;
    for i in 0..=n {
        // departure point in units of h
        let t = T::from_usize_lossy(i) - s;
        let v = if t <= T::zero() {
            neg_e
        } else if h * t > grid.x_len {
            beyond += 1;
            T::zero()
        } else {
            let c = t.floor();
            let w = t - c;
            let j = c.to_usize().unwrap_or(0);
            if j >= n {
                prev.pi[n]
            } else {
                prev.pi[j] + w * (prev.pi[j + 1] - prev.pi[j])
            }
        };
        out.push(v);
    }
    beyond
}

/// Everything a level needs besides the iterates.
struct Level<'a, T: Real> {
    market: &'a MarketParams<T>,
    grid: &'a Grid<T>,
    model: &'a VolatilityModel<T>,
    exp_neg_x: &'a [T],
    tau: T,
}

/// Builds the diffusion system on the interior nodes `1..n` with the
/// coefficients frozen at `(pi_coeff, rho)` and right-hand side taken from
/// `rhs_source` (the transported values). Boundary data `Pi_0 = -E`,
/// `Pi_n = 0` are folded into the first and last rows.
pub fn assemble_diffusion<T: Real>(
    pi_coeff: &[T],
    rho: T,
    tau: T,
    grid: &Grid<T>,
    market: &MarketParams<T>,
    model: &VolatilityModel<T>,
    rhs_source: &[T],
) -> Result<TridiagonalSystem<T>> {
    let exp_neg_x = neg_exp_grid(grid);
    let lvl = Level {
        market,
        grid,
        model,
        exp_neg_x: &exp_neg_x,
        tau,
    };
    let mut sys = TridiagonalSystem::with_len(grid.n_space - 1);
    let mut sig2 = Vec::new();
    lvl.assemble(pi_coeff, rho, rhs_source, &mut sys, &mut sig2)?;
    Ok(sys)
}

/// `rho = r E / q + sigma^2(p_0, rho_iter, tau) p_0 / (2 q)` with the
/// one-sided boundary slope `p_0 = (Pi_1 - Pi_0) / h`.
pub fn update_boundary<T: Real>(
    pi: &[T],
    rho_iter: T,
    tau: T,
    grid: &Grid<T>,
    market: &MarketParams<T>,
    model: &VolatilityModel<T>,
) -> Result<T> {
    let slope = (pi[1] - pi[0]) / grid.h();
    let s2 = model
        .sigma_squared(slope, rho_iter, tau)
        .map_err(|e| e.at_node(0))?;
    Ok(market.initial_boundary() + s2 * slope / (T::lit(2.0) * market.q_div))
}

fn neg_exp_grid<T: Real>(grid: &Grid<T>) -> Vec<T> {
    (0..=grid.n_space).map(|i| (-grid.x(i)).exp()).collect()
}

impl<'a, T: Real> Level<'a, T> {
    fn assemble(
        &self,
        pi_coeff: &[T],
        rho: T,
        rhs_source: &[T],
        sys: &mut TridiagonalSystem<T>,
        sig2: &mut Vec<T>,
    ) -> Result<()> {
        let n = self.grid.n_space;
        let h = self.grid.h();
        let k = self.grid.k(self.market.t_mat);
        sig2.clear();
        if self.model.is_linear() {
            let s = self.model.sigma_squared(T::zero(), rho, self.tau)?;
            sig2.resize(n, s);
        } else {
            for i in 0..n {
                let p = (pi_coeff[i + 1] - pi_coeff[i]) / h;
                let s = self
                    .model
                    .sigma_squared(p, rho * self.exp_neg_x[i], self.tau)
                    .map_err(|e| e.at_node(i))?;
                sig2.push(s);
            }
        }
        let c1 = k / (T::lit(2.0) * h * h);
        let c2 = k / (T::lit(4.0) * h);
        let diag = T::one() + self.market.r_rate * k;
        let rows = n - 1;
        if sys.len() != rows {
            *sys = TridiagonalSystem::with_len(rows);
        }
        for row in 0..rows {
            let i = row + 1;
            let a = -c1 * sig2[i - 1] + c2 * sig2[i];
            let g = -(c1 + c2) * sig2[i];
            sys.alpha[row] = a;
            sys.gamma[row] = g;
            sys.beta[row] = diag - (a + g);
            sys.rhs[row] = rhs_source[i];
        }
        sys.rhs[0] = sys.rhs[0] + sys.alpha[0] * self.market.e_strike;
        Ok(())
    }
}

/// Scratch buffers reused across levels.
struct Workspace<T: Real> {
    half: Vec<T>,
    sys: TridiagonalSystem<T>,
    sig2: Vec<T>,
    scratch: Vec<T>,
    interior: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(n: usize) -> Self {
        Self {
            half: Vec::with_capacity(n + 1),
            sys: TridiagonalSystem::with_len(n - 1),
            sig2: Vec::with_capacity(n),
            scratch: Vec::with_capacity(n),
            interior: Vec::with_capacity(n),
        }
    }
}

struct Trial<T> {
    rho: T,
    pi: Vec<T>,
    g: T,
    beyond: usize,
}

impl<'a, T: Real> Level<'a, T> {
    /// Transport to `rho`, diffuse with coefficients frozen at `pi_coeff`,
    /// and return the boundary residual `F(Pi, rho) - rho`.
    fn trial(
        &self,
        prev: &PortfolioState<T>,
        rho: T,
        pi_coeff: &[T],
        ws: &mut Workspace<T>,
    ) -> Result<Trial<T>> {
        let n = self.grid.n_space;
        let beyond = transport_into(prev, rho, self.market, self.grid, &mut ws.half);
        self.assemble(pi_coeff, rho, &ws.half, &mut ws.sys, &mut ws.sig2)?;
        thomas_solve_into(&ws.sys, &mut ws.scratch, &mut ws.interior)?;
        let mut pi = Vec::with_capacity(n + 1);
        pi.push(-self.market.e_strike);
        pi.extend_from_slice(&ws.interior);
        pi.push(T::zero());
        if pi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "portfolio",
                tau: self.tau.to_f64_lossy(),
            });
        }
        let f = update_boundary(&pi, rho, self.tau, self.grid, self.market, self.model)?;
        let g = f - rho;
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "boundary update",
                tau: self.tau.to_f64_lossy(),
            });
        }
        Ok(Trial { rho, pi, g, beyond })
    }

    /// Solves the coupled level equations.
    ///
    /// The boundary is found as the root of the scalar residual
    /// `g(rho) = F(Pi(rho), rho) - rho` by secant steps, while the frozen
    /// coefficient state follows the latest portfolio iterate. A plain
    /// fixed-point sweep in `rho` is not used: its amplification factor is of
    /// order `(rho - rE/q) / (h rho)` and exceeds one on fine meshes.
    fn solve(
        &self,
        prev: &PortfolioState<T>,
        last_increment: Option<T>,
        controls: &SolverControls<T>,
        ws: &mut Workspace<T>,
    ) -> Result<(Trial<T>, LevelStats<T>)> {
        let tol = controls.micro_tol;
        let mut a = self.trial(prev, prev.rho, &prev.pi, ws)?;
        let mut evals = 1;
        let floor = T::lit(1e-6) * prev.rho.max(T::one());
        let mut step = match last_increment {
            Some(d) if d.abs() > floor => d,
            _ => controls.relaxation * a.g,
        };
        if step.abs() < floor {
            step = if a.g < T::zero() { -floor } else { floor };
        }
        let mut rho_next = a.rho + step;
        let mut residual = a.g.abs();
        loop {
            if evals >= controls.max_micro {
                return Err(Error::NoConvergence {
                    iterations: evals,
                    residual: residual.to_f64_lossy(),
                });
            }
            let b = self.trial(prev, rho_next, &a.pi, ws)?;
            evals += 1;
            let d_pi =
                b.pi.iter()
                    .zip(&a.pi)
                    .map(|(x, y)| (*x - *y).abs())
                    .fold(T::zero(), T::max);
            let d_rho = (b.rho - a.rho).abs();
            residual = b.g.abs().max(d_pi).max(d_rho);
            if residual < tol {
                let stats = LevelStats {
                    micro_iterations: evals,
                    residual,
                    beyond_domain: b.beyond,
                    // ws.sys still holds the accepted system
                    linear_residual: ws.sys.residual(&b.pi[1..self.grid.n_space]),
                };
                return Ok((b, stats));
            }
            let dg = b.g - a.g;
            let secant = if dg != T::zero() && b.rho != a.rho {
                b.rho - b.g * (b.rho - a.rho) / dg
            } else {
                T::nan()
            };
            let limit = T::lit(0.25) * b.rho;
            rho_next = if secant.is_finite() && (secant - b.rho).abs() <= limit {
                secant
            } else {
                let s = controls.relaxation * b.g;
                b.rho + s.max(-limit).min(limit)
            };
            a = b;
        }
    }

    /// `max(|F(Pi, rho) - rho|, max |A(Pi, rho) Pi - T(prev, rho)|)` at an
    /// accepted level.
    fn resubstitute(&self, prev: &PortfolioState<T>, state: &PortfolioState<T>) -> Result<T> {
        let n = self.grid.n_space;
        let mut half = Vec::new();
        transport_into(prev, state.rho, self.market, self.grid, &mut half);
        let mut sys = TridiagonalSystem::with_len(n - 1);
        let mut sig2 = Vec::new();
        self.assemble(&state.pi, state.rho, &half, &mut sys, &mut sig2)?;
        let lin = sys.residual(&state.pi[1..n]);
        let f = update_boundary(
            &state.pi,
            state.rho,
            self.tau,
            self.grid,
            self.market,
            self.model,
        )?;
        Ok(lin.max((f - state.rho).abs()))
    }
}

/// Advances one level from `prev` and returns the accepted state.
pub fn time_step<T: Real>(
    prev: &PortfolioState<T>,
    last_increment: Option<T>,
    market: &MarketParams<T>,
    grid: &Grid<T>,
    model: &VolatilityModel<T>,
    controls: &SolverControls<T>,
) -> Result<(PortfolioState<T>, LevelStats<T>)> {
    let exp_neg_x = neg_exp_grid(grid);
    let j = prev.j_index + 1;
    let lvl = Level {
        market,
        grid,
        model,
        exp_neg_x: &exp_neg_x,
        tau: grid.k(market.t_mat) * T::from_usize_lossy(j),
    };
    let mut ws = Workspace::new(grid.n_space);
    let (t, stats) = lvl.solve(prev, last_increment, controls, &mut ws)?;
    Ok((
        PortfolioState {
            pi: t.pi,
            rho: t.rho,
            j_index: j,
            tau: lvl.tau,
        },
        stats,
    ))
}

/// Re-substitution residual of an accepted level `state` reached from `prev`.
pub fn level_residual<T: Real>(
    prev: &PortfolioState<T>,
    state: &PortfolioState<T>,
    market: &MarketParams<T>,
    grid: &Grid<T>,
    model: &VolatilityModel<T>,
) -> Result<T> {
    let exp_neg_x = neg_exp_grid(grid);
    let lvl = Level {
        market,
        grid,
        model,
        exp_neg_x: &exp_neg_x,
        tau: state.tau,
    };
    lvl.resubstitute(prev, state)
}

fn sample_parabolicity<T: Real>(
    market: &MarketParams<T>,
    model: &VolatilityModel<T>,
) -> Vec<(T, T)> {
    let xi = market.initial_boundary();
    let p_hi = T::lit(10.0) * market.e_strike;
    [T::zero(), market.t_mat]
        .iter()
        .map(|&tau| {
            let m = model
                .parabolicity_margin(T::zero(), p_hi, xi, tau)
                .unwrap_or_else(|_| T::nan());
            if !(m > T::zero()) {
                warn!("parabolicity margin {m} at tau = {tau} is not positive");
            }
            (tau, m)
        })
        .collect()
}

/// Marches from `tau = 0` to `tau = T`.
pub fn solve<T: Real>(
    market: &MarketParams<T>,
    model: &VolatilityModel<T>,
    grid: &Grid<T>,
    controls: &SolverControls<T>,
) -> Result<Solution<T>, SolveFailure<T>> {
    let start = Instant::now();
    let tag = model.spec().tag().to_string();
    let empty = |error: Error| SolveFailure {
        error,
        partial: BoundaryCurve {
            taus: Vec::new(),
            rhos: Vec::new(),
            market: *market,
            model: tag.clone(),
        },
    };
    market.validate().map_err(empty)?;
    grid.validate(market).map_err(empty)?;
    controls.validate().map_err(empty)?;

    let m = grid.m_time;
    let k = grid.k(market.t_mat);
    let store_every = controls.store_every.unwrap_or((m / 100).max(1));
    let exp_neg_x = neg_exp_grid(grid);
    let mut ws = Workspace::new(grid.n_space);

    let mut state = initial_state(market, grid);
    let mut taus = Vec::with_capacity(m + 1);
    let mut rhos = Vec::with_capacity(m + 1);
    taus.push(state.tau);
    rhos.push(state.rho);
    let mut snapshots = vec![state.clone()];
    let mut report = SolveReport {
        levels: m,
        micro_iterations: Vec::with_capacity(m),
        final_residuals: Vec::with_capacity(m),
        resubstitution: Vec::new(),
        beyond_domain: 0,
        below_strike: 0,
        max_linear_residual: T::zero(),
        pi_min: -market.e_strike,
        pi_max: T::zero(),
        min_boundary_slope: T::infinity(),
        parabolicity: sample_parabolicity(market, model),
        wall_time: Duration::ZERO,
    };
    let mut last_increment = None;

    for j in 1..=m {
        let tau = k * T::from_usize_lossy(j);
        let lvl = Level {
            market,
            grid,
            model,
            exp_neg_x: &exp_neg_x,
            tau,
        };
        let fail = |e: Error, taus: &Vec<T>, rhos: &Vec<T>| SolveFailure {
            error: Error::Level {
                level: j,
                tau: tau.to_f64_lossy(),
                source: Box::new(e),
            },
            partial: BoundaryCurve {
                taus: taus.clone(),
                rhos: rhos.clone(),
                market: *market,
                model: tag.clone(),
            },
        };
        let (trial, stats) = match lvl.solve(&state, last_increment, controls, &mut ws) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &taus, &rhos)),
        };
        let next = PortfolioState {
            pi: trial.pi,
            rho: trial.rho,
            j_index: j,
            tau,
        };
        if controls.verify_levels {
            match lvl.resubstitute(&state, &next) {
                Ok(r) => report.resubstitution.push(r),
                Err(e) => return Err(fail(e, &taus, &rhos)),
            }
        }
        report.micro_iterations.push(stats.micro_iterations as u32);
        report.final_residuals.push(stats.residual);
        report.beyond_domain += stats.beyond_domain;
        report.max_linear_residual = report.max_linear_residual.max(stats.linear_residual);
        for &v in &next.pi {
            report.pi_min = report.pi_min.min(v);
            report.pi_max = report.pi_max.max(v);
        }
        report.min_boundary_slope = report
            .min_boundary_slope
            .min((next.pi[1] - next.pi[0]) / grid.h());
        if next.rho < market.e_strike {
            report.below_strike += 1;
        }
        last_increment = Some(next.rho - state.rho);
        taus.push(tau);
        rhos.push(next.rho);
        state = next;
        if j % store_every == 0 || j == m {
            snapshots.push(state.clone());
        }
    }
    report.wall_time = start.elapsed();
    debug!(
        "solved {} levels in {:?}, mean micro-iterations {:.2}",
        m,
        report.wall_time,
        report.mean_micro_iterations()
    );
    Ok(Solution {
        curve: BoundaryCurve {
            taus,
            rhos,
            market: *market,
            model: tag,
        },
        snapshots,
        final_state: state,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volatility::VolatilitySpec;
    use proptest::prelude::*;

    fn market() -> MarketParams {
        MarketParams::new(10.0, 0.1, 0.05, 1.0).unwrap()
    }

    fn constant() -> VolatilityModel {
        VolatilityModel::new(VolatilitySpec::Constant { sigma_hat: 0.2 }).unwrap()
    }

    fn state(pi: Vec<f64>, rho: f64) -> PortfolioState {
        PortfolioState {
            pi,
            rho,
            j_index: 0,
            tau: 0.0,
        }
    }

    /// `rho_new` for which the departure points move by exactly `cells` cells.
    fn rho_for_shift(m: &MarketParams, g: &Grid, rho: f64, cells: f64) -> f64 {
        rho * (cells * g.h() - (m.r_rate - m.q_div) * g.k(m.t_mat)).exp()
    }

    #[test]
    fn integer_cell_shift_moves_values() {
        let m = market();
        let g = Grid::new(3.0, 60, 100);
        let pi: Vec<f64> = (0..=60)
            .map(|i| -10.0 + (i as f64 / 60.0).powi(2) * 10.0)
            .collect();
        let prev = state(pi.clone(), 20.0);
        for cells in 1..5 {
            let t = transport_step(&prev, rho_for_shift(&m, &g, 20.0, cells as f64), &m, &g);
            for i in 0..=60 {
                let want = if i <= cells { -10.0 } else { pi[i - cells] };
                assert!((t.values[i] - want).abs() <= 1e-12, "i={i} cells={cells}");
            }
            assert_eq!(t.beyond_domain, 0);
        }
    }

    #[test]
    fn departures_beyond_the_domain_are_counted() {
        let m = market();
        let g = Grid::new(3.0, 60, 100);
        let prev = state(vec![-1.0; 61], 20.0);
        let t = transport_step(&prev, rho_for_shift(&m, &g, 20.0, -3.0), &m, &g);
        assert_eq!(t.beyond_domain, 3);
        assert!(t.values[58..].iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn transport_matches_characteristics(
            kinks in prop::collection::vec(-2.0f64..2.0, 40),
            cells in -0.9f64..6.0,
        ) {
            let m = market();
            let g = Grid::new(3.0, 40, 50);
            let h = g.h();
            // Pi(x) = -E + sum_k c_k max(x - x_k, 0): piecewise linear on the grid
            let f = |x: f64| {
                -10.0 + kinks.iter().enumerate().map(|(k, c)| c * (x - k as f64 * h).max(0.0)).sum::<f64>()
            };
            let pi: Vec<f64> = (0..=40).map(|i| f(i as f64 * h)).collect();
            let prev = state(pi, 20.0);
            let rho = rho_for_shift(&m, &g, 20.0, cells);
            let t = transport_step(&prev, rho, &m, &g);
            let shift = (rho / 20.0).ln() + (m.r_rate - m.q_div) * g.k(m.t_mat);
            for i in 0..=40 {
                let xi = i as f64 * h - shift;
                let want = if xi <= 0.0 { -10.0 } else if xi > 3.0 { 0.0 } else { f(xi) };
                prop_assert!((t.values[i] - want).abs() <= 1e-12, "i={} {} vs {}", i, t.values[i], want);
            }
        }
    }

    #[test]
    fn constant_volatility_system_is_an_m_matrix() {
        let m = market();
        let g = Grid::new(3.0, 750, 225_000);
        let rhs = vec![0.0; 751];
        let pi = vec![0.0; 751];
        let sys = assemble_diffusion(&pi, 20.0, 0.0, &g, &m, &constant(), &rhs).unwrap();
        assert!(sys.is_diagonally_dominant());
        assert!(sys.alpha[1..].iter().all(|&a| a < 0.0));
        assert!(sys.gamma.iter().all(|&c| c < 0.0));
        // boundary value -E enters the first right-hand side
        assert!((sys.rhs[0] - sys.alpha[0] * 10.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_update_with_flat_portfolio_is_the_initial_position() {
        let m = market();
        let g = Grid::new(3.0, 100, 10);
        let pi = vec![-10.0; 101];
        assert_eq!(
            update_boundary(&pi, 21.0, 0.5, &g, &m, &constant()).unwrap(),
            20.0
        );
    }

    #[test]
    fn coarse_solve_satisfies_invariants() {
        let m = market();
        let g = Grid::new(3.0, 100, 89);
        let c = SolverControls {
            store_every: Some(1),
            ..SolverControls::default()
        };
        let sol = solve(&m, &constant(), &g, &c).unwrap();
        assert_eq!(sol.curve.len(), 90);
        assert_eq!(sol.snapshots.len(), 90);
        assert_eq!(sol.curve.rhos[0], 20.0);
        assert!(sol.curve.max_decrease() <= c.micro_tol);
        for s in &sol.snapshots {
            assert_eq!(s.pi[0], -10.0);
            assert_eq!(s.pi[100], 0.0);
        }
        let r = &sol.report;
        assert!(r.pi_min >= -10.0 - 1e-5 && r.pi_max <= 1e-5);
        assert!(r.min_boundary_slope >= -c.micro_tol);
        assert!(r.max_resubstitution() <= 10.0 * c.micro_tol);
        assert_eq!(r.below_strike, 0);
        // independent re-substitution of one level
        let j = 40;
        let res = level_residual(
            &sol.snapshots[j - 1],
            &sol.snapshots[j],
            &m,
            &g,
            &constant(),
        )
        .unwrap();
        assert!(res <= 10.0 * c.micro_tol);
    }

    #[test]
    fn single_step_agrees_with_the_marching_loop() {
        let m = market();
        let g = Grid::new(3.0, 100, 89);
        let c = SolverControls {
            store_every: Some(1),
            ..SolverControls::default()
        };
        let sol = solve(&m, &constant(), &g, &c).unwrap();
        let prev = &sol.snapshots[10];
        let inc = prev.rho - sol.snapshots[9].rho;
        let (next, stats) = time_step(prev, Some(inc), &m, &g, &constant(), &c).unwrap();
        assert!((next.rho - sol.snapshots[11].rho).abs() < 1e-12);
        assert!(stats.micro_iterations <= c.max_micro);
    }

    #[test]
    fn level_failure_reports_index_and_partial_curve() {
        let m = market();
        let g = Grid::new(3.0, 100, 89);
        let c = SolverControls {
            max_micro: 2,
            ..SolverControls::default()
        };
        let err = solve(&m, &constant(), &g, &c).unwrap_err();
        match err.error {
            Error::Level {
                level, ref source, ..
            } => {
                assert_eq!(err.partial.len(), level);
                assert!(matches!(**source, Error::NoConvergence { .. }));
            }
            ref e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invalid_inputs_fail_before_marching() {
        let m = market();
        let err = solve(
            &m,
            &constant(),
            &Grid::new(3.0, 100, 0),
            &SolverControls::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err.error,
            Error::InvalidParameter { name: "m_time", .. }
        ));
        assert!(err.partial.is_empty());
    }

    #[test]
    fn single_precision_tracks_double() {
        let m32 = MarketParams::<f32>::new(10.0, 0.1, 0.05, 1.0).unwrap();
        let model32 = VolatilityModel::new(VolatilitySpec::Constant { sigma_hat: 0.2f32 }).unwrap();
        let c32 = SolverControls {
            micro_tol: 1e-4f32,
            ..SolverControls::default()
        };
        let g32 = Grid::new(3.0f32, 100, 89);
        let a = solve(&m32, &model32, &g32, &c32).unwrap();
        let b = solve(
            &market(),
            &constant(),
            &Grid::new(3.0, 100, 89),
            &SolverControls::default(),
        )
        .unwrap();
        let (x, y) = (
            a.curve.last_rho().unwrap() as f64,
            b.curve.last_rho().unwrap(),
        );
        assert!((x - y).abs() < 1e-3 * y, "{x} vs {y}");
    }

    #[test]
    fn rapm_boundary_lies_above_constant() {
        let m = market();
        let g = Grid::new(3.0, 150, 9000);
        let c = SolverControls::default();
        let rapm = VolatilityModel::new(VolatilitySpec::Rapm {
            sigma_hat: 0.2,
            mu: 0.25,
        })
        .unwrap();
        let a = solve(&m, &rapm, &g, &c).unwrap();
        let b = solve(&m, &constant(), &g, &c).unwrap();
        assert!(a.curve.rhos.iter().zip(&b.curve.rhos).all(|(x, y)| x >= y));
        assert!(a.curve.last_rho() > b.curve.last_rho());
        assert!(a.report.max_resubstitution() <= 10.0 * c.micro_tol);
    }
}
