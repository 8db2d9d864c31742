//! Early exercise boundary of an American call under linear and nonlinear
//! Black–Scholes volatility models.
//!
//! The free boundary is fixed by the logarithmic change of variables in
//! [`landau`], the transformed problem is marched in time by the operator
//! splitting scheme in [`splitting`], and the constant volatility case can be
//! cross-checked against the integral equation solver in [`integral`].
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar.
//!
//! ```
//! use exercise_boundary::{solve, Grid, MarketParams, SolverControls, VolatilityModel, VolatilitySpec};
//!
//! let market = MarketParams::new(10.0, 0.1, 0.05, 1.0).unwrap();
//! let model = VolatilityModel::new(VolatilitySpec::Constant { sigma_hat: 0.2 }).unwrap();
//! let grid = Grid::new(3.0, 100, 89);
//! let sol = solve(&market, &model, &grid, &SolverControls::default()).unwrap();
//! assert_eq!(sol.curve.rhos[0], 20.0);
//! assert!(sol.curve.last_rho().unwrap() > 22.0);
//! ```

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod integral;
pub mod interp;
pub mod io;
pub mod landau;
pub mod quadrature;
pub mod scalar;
pub mod splitting;
pub mod tridiag;
pub mod volatility;

pub use analysis::{
    convergence_study, curve_distance, eoc, param_order, parameter_sweep, DistanceReport,
    L2Variant, RunOutcome, SweepFamily,
};
pub use error::{Error, Result};
pub use integral::{solve_integral_equation, IntegralControls, IntegralGrid};
pub use landau::{reconstruct_price, BoundaryCurve, Grid, MarketParams, PortfolioState};
pub use scalar::Real;
pub use splitting::{solve, Solution, SolveFailure, SolveReport, SolverControls};
pub use volatility::{PsiTable, VolatilityModel, VolatilitySpec};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type MarketParamsF64 = MarketParams<f64>;
pub type MarketParamsF32 = MarketParams<f32>;
pub type GridF64 = Grid<f64>;
pub type GridF32 = Grid<f32>;
pub type BoundaryCurveF64 = BoundaryCurve<f64>;
pub type BoundaryCurveF32 = BoundaryCurve<f32>;
pub type VolatilityModelF64 = VolatilityModel<f64>;
pub type VolatilityModelF32 = VolatilityModel<f32>;
pub type SolutionF64 = Solution<f64>;
pub type SolutionF32 = Solution<f32>;
