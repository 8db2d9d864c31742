//! Curve distances, convergence orders, refinement studies and parameter
//! sweeps.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::landau::{BoundaryCurve, Grid, MarketParams};
use crate::scalar::Real;
use crate::splitting::{solve, Solution, SolveReport, SolverControls};
use crate::volatility::{leland_constant, rapm_mu, PsiTable, VolatilityModel, VolatilitySpec};

/// Distances between two boundary curves, measured on the nodes of the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport<T = f64> {
    /// `max |a - b|`.
    pub l_inf: T,
    /// `(int |a - b|^2 dtau)^(1/2)` by the trapezoid rule.
    pub l_2: T,
    /// `(sum |a - b|^2)^(1/2)` over the nodes, unscaled.
    pub l2_discrete: T,
    /// Extremes of the signed difference `a - b`.
    pub min_signed: T,
    pub max_signed: T,
    pub nodes: usize,
}

/// Which L2 variant feeds tables and convergence orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L2Variant {
    #[default]
    Continuous,
    Discrete,
}

impl<T: Real> DistanceReport<T> {
    pub fn l2(&self, variant: L2Variant) -> T {
        match variant {
            L2Variant::Continuous => self.l_2,
            L2Variant::Discrete => self.l2_discrete,
        }
    }
}

/// Compares `a` with `b`, interpolating `b` (monotone cubic in `rho`) at the
/// nodes of `a` that fall inside `b`'s tau range.
pub fn curve_distance<T: Real>(
    a: &BoundaryCurve<T>,
    b: &BoundaryCurve<T>,
) -> Result<DistanceReport<T>> {
    let disjoint = || Error::DisjointCurves {
        a_start: a.taus.first().map_or(f64::NAN, |v| v.to_f64_lossy()),
        a_end: a.taus.last().map_or(f64::NAN, |v| v.to_f64_lossy()),
        b_start: b.taus.first().map_or(f64::NAN, |v| v.to_f64_lossy()),
        b_end: b.taus.last().map_or(f64::NAN, |v| v.to_f64_lossy()),
    };
    if a.is_empty() || b.len() < 2 {
        return Err(disjoint());
    }
    let b0 = b.taus[0];
    let b1 = b.taus[b.len() - 1];
    let slack = T::lit(1e-12) * (b1 - b0).abs().max(T::one());
    let interp = MonotoneCubic::new(b.taus.clone(), b.rhos.clone())?;
    let pairs: Vec<(T, T)> = a
        .taus
        .iter()
        .zip(&a.rhos)
        .filter(|(t, _)| **t >= b0 - slack && **t <= b1 + slack)
        .map(|(&t, &r)| (t, r - interp.eval(t)))
        .collect();
    if pairs.is_empty() {
        return Err(disjoint());
    }
    let mut l_inf = T::zero();
    let mut sum_sq = T::zero();
    let mut min_signed = T::infinity();
    let mut max_signed = T::neg_infinity();
    for &(_, d) in &pairs {
        l_inf = l_inf.max(d.abs());
        sum_sq = sum_sq + d * d;
        min_signed = min_signed.min(d);
        max_signed = max_signed.max(d);
    }
    let half = T::lit(0.5);
    let integral = pairs
        .windows(2)
        .map(|w| half * (w[1].0 - w[0].0) * (w[0].1 * w[0].1 + w[1].1 * w[1].1))
        .sum::<T>();
    Ok(DistanceReport {
        l_inf,
        l_2: integral.sqrt(),
        l2_discrete: sum_sq.sqrt(),
        min_signed,
        max_signed,
        nodes: pairs.len(),
    })
}

/// Pairwise log-log slopes `ln(y_i / y_{i-1}) / ln(x_i / x_{i-1})`.
fn log_slopes<T: Real>(xs: &[T], ys: &[T]) -> Result<Vec<T>> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("errs", "length differs from the abscissae"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > T::zero())) {
        return Err(Error::invalid("errs", "log-log slopes need positive data"));
    }
    Ok(xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] / y[0]).ln() / (x[1] / x[0]).ln())
        .collect())
}

/// Experimental order of convergence between consecutive mesh sizes.
pub fn eoc<T: Real>(hs: &[T], errs: &[T]) -> Result<Vec<T>> {
    log_slopes(hs, errs)
}

/// Growth exponent of a distance in a model parameter.
pub fn param_order<T: Real>(params: &[T], dists: &[T]) -> Result<Vec<T>> {
    log_slopes(params, dists)
}

/// Slope between the first and last points in log-log scale.
pub fn overall_order<T: Real>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() < 2 {
        return Err(Error::invalid("params", "need at least two points"));
    }
    let n = xs.len() - 1;
    log_slopes(&[xs[0], xs[n]], &[ys[0], ys[n]]).map(|v| v[0])
}

/// A successful solve compared with its reference.
#[derive(Debug, Clone)]
pub struct RunOutcome<T: Real = f64> {
    pub curve: BoundaryCurve<T>,
    pub distance: DistanceReport<T>,
    pub report: SolveReport<T>,
}

/// One mesh of a refinement study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow<T: Real = f64> {
    /// Requested mesh size.
    pub h: T,
    pub grid: Grid<T>,
    pub outcome: Result<RunOutcome<T>, Error>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable<T: Real = f64> {
    pub rows: Vec<ConvergenceRow<T>>,
}

impl<T: Real> ConvergenceTable<T> {
    pub fn distance(&self, i: usize) -> Option<&DistanceReport<T>> {
        self.rows[i].outcome.as_ref().ok().map(|o| &o.distance)
    }

    /// eoc between row `i - 1` and row `i` for the chosen norm; `None` for
    /// the first row and whenever either row failed.
    pub fn eoc_at(&self, i: usize, norm: Norm) -> Option<T> {
        if i == 0 {
            return None;
        }
        let (a, b) = (self.distance(i - 1)?, self.distance(i)?);
        let (ea, eb) = (norm.pick(a), norm.pick(b));
        eoc(&[self.rows[i - 1].h, self.rows[i].h], &[ea, eb])
            .ok()
            .map(|v| v[0])
    }
}

/// Norm selector for tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Inf,
    L2(L2Variant),
}

impl Norm {
    pub fn pick<T: Real>(&self, d: &DistanceReport<T>) -> T {
        match self {
            Norm::Inf => d.l_inf,
            Norm::L2(v) => d.l2(*v),
        }
    }
}

/// Refinement study at fixed CFL ratio `sigma_hat^2 k / h^2`: one constant
/// volatility solve per entry of `h_list`, each compared with `reference`.
/// A failed row is kept with its error and does not stop the others.
pub fn convergence_study<T: Real>(
    market: &MarketParams<T>,
    sigma_hat: T,
    x_len: T,
    h_list: &[T],
    cfl_ratio: T,
    controls: &SolverControls<T>,
    reference: &BoundaryCurve<T>,
) -> Result<ConvergenceTable<T>> {
    if h_list.is_empty() {
        return Err(Error::invalid("h_list", "must not be empty"));
    }
    if h_list.iter().any(|&h| !(h > T::zero())) {
        return Err(Error::invalid("h_list", "mesh sizes must be positive"));
    }
    if !(cfl_ratio > T::zero()) {
        return Err(Error::invalid("cfl_ratio", "must be positive"));
    }
    let model = VolatilityModel::new(VolatilitySpec::Constant { sigma_hat })?;
    let rows = h_list
        .par_iter()
        .map(|&h| {
            let grid = Grid::from_cfl(x_len, h, cfl_ratio, sigma_hat, market.t_mat);
            let outcome = solve(market, &model, &grid, controls)
                .map_err(|f| f.error)
                .and_then(|sol| {
                    let distance = curve_distance(&sol.curve, reference)?;
                    Ok(RunOutcome {
                        curve: sol.curve,
                        distance,
                        report: sol.report,
                    })
                });
            ConvergenceRow { h, grid, outcome }
        })
        .collect();
    Ok(ConvergenceTable { rows })
}

/// Model family varied by a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepFamily<T = f64> {
    /// Parameter: risk premium `R`, with `mu = 3 (C^2 R / 2 pi)^(1/3)`.
    Rapm { cost: T },
    /// Parameter: `a`; the rate inside `e^(r tau)` is the market rate.
    BarlesSoner,
    /// Parameter: transaction cost `C` with rebalancing interval `dt`.
    Leland { dt: T },
    /// Parameter: liquidity `rho_f`.
    FreyStremme { lambda0: T },
}

impl<T: Real> SweepFamily<T> {
    pub fn spec(
        &self,
        sigma_hat: T,
        market: &MarketParams<T>,
        value: T,
    ) -> Result<VolatilitySpec<T>> {
        Ok(match *self {
            SweepFamily::Rapm { cost } => VolatilitySpec::Rapm {
                sigma_hat,
                mu: rapm_mu(cost, value)?,
            },
            SweepFamily::BarlesSoner => VolatilitySpec::BarlesSoner {
                sigma_hat,
                a: value,
                r: market.r_rate,
            },
            SweepFamily::Leland { dt } => VolatilitySpec::Leland {
                sigma_hat,
                le: leland_constant(value, sigma_hat, dt)?,
            },
            SweepFamily::FreyStremme { lambda0 } => VolatilitySpec::FreyStremme {
                sigma_hat,
                rho_f: value,
                lambda0,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow<T: Real = f64> {
    pub param: T,
    pub outcome: Result<RunOutcome<T>, Error>,
}

#[derive(Debug, Clone)]
pub struct SweepTable<T: Real = f64> {
    /// The constant volatility solve on the same grid.
    pub reference: Solution<T>,
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Real> SweepTable<T> {
    pub fn distance(&self, i: usize) -> Option<&DistanceReport<T>> {
        self.rows[i].outcome.as_ref().ok().map(|o| &o.distance)
    }

    /// Parameter order between rows `i - 1` and `i`.
    pub fn order_at(&self, i: usize, norm: Norm) -> Option<T> {
        if i == 0 {
            return None;
        }
        let (a, b) = (self.distance(i - 1)?, self.distance(i)?);
        param_order(
            &[self.rows[i - 1].param, self.rows[i].param],
            &[norm.pick(a), norm.pick(b)],
        )
        .ok()
        .map(|v| v[0])
    }
}

/// Solves the constant-volatility reference and one nonlinear model per
/// parameter value on the same grid, reporting `||rho^param - rho^0||`.
pub fn parameter_sweep<T: Real>(
    market: &MarketParams<T>,
    sigma_hat: T,
    grid: &Grid<T>,
    controls: &SolverControls<T>,
    family: &SweepFamily<T>,
    values: &[T],
) -> Result<SweepTable<T>> {
    if values.is_empty() {
        return Err(Error::invalid("values", "must not be empty"));
    }
    let base = VolatilityModel::new(VolatilitySpec::Constant { sigma_hat })?;
    let reference = solve(market, &base, grid, controls).map_err(|f| f.error)?;
    let psi = match family {
        SweepFamily::BarlesSoner => Some(Arc::new(PsiTable::standard()?)),
        _ => None,
    };
    let rows = values
        .par_iter()
        .map(|&param| {
            let outcome = family
                .spec(sigma_hat, market, param)
                .and_then(|spec| match &psi {
                    Some(t) => VolatilityModel::with_psi_table(spec, t.clone()),
                    None => VolatilityModel::new(spec),
                })
                .and_then(|model| solve(market, &model, grid, controls).map_err(|f| f.error))
                .and_then(|sol| {
                    let distance = curve_distance(&sol.curve, &reference.curve)?;
                    Ok(RunOutcome {
                        curve: sol.curve,
                        distance,
                        report: sol.report,
                    })
                });
            SweepRow { param, outcome }
        })
        .collect();
    Ok(SweepTable { reference, rows })
}
