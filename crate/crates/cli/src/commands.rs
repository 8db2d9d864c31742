//! Subcommand pipelines. Every command computes all of its outputs in memory
//! first; nothing touches the disk until the whole run has succeeded.

use std::collections::BTreeMap;
use std::time::Instant;

use exercise_boundary::analysis::Norm;
use exercise_boundary::io::{
    fmt_float, write_boundary_csv, write_convergence_csv, write_snapshots_csv, write_sweep_csv,
};
use exercise_boundary::landau::quote_price;
use exercise_boundary::{
    convergence_study, parameter_sweep, solve, solve_integral_equation, BoundaryCurve, Solution,
    VolatilityModel, VolatilitySpec,
};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Solve for the exercise boundary with the configured model.
    Solve,
    /// Compare the constant volatility solve with the integral equation.
    Benchmark,
    /// Mesh refinement study against the integral equation reference.
    Converge,
    /// Distance from the constant volatility boundary over a model parameter.
    Sweep,
    /// Option values at the configured asset prices.
    Price,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Benchmark => "benchmark",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
            Command::Price => "price",
        }
    }
}

/// Files to write, in order, plus wall-clock timings per phase.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub timings: BTreeMap<String, f64>,
    /// `key,value` rows of `report.csv`.
    pub report: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.report.push((key.into(), value.into()));
    }

    fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.timings
            .insert(phase.to_string(), t.elapsed().as_secs_f64());
        r
    }

    fn curve(&mut self, name: impl Into<String>, curve: &BoundaryCurve) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_boundary_csv(curve, &mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    fn finish(mut self) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "value"])?;
        for (k, v) in &self.report {
            w.write_record([k, v])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.add("report.csv", bytes);
        Ok(self)
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outputs, CliError> {
    match cmd {
        Command::Solve => run_solve(cfg),
        Command::Benchmark => run_benchmark(cfg),
        Command::Converge => run_converge(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Price => run_price(cfg),
    }
    .and_then(Outputs::finish)
}

fn solve_configured(cfg: &RunConfig, out: &mut Outputs) -> Result<Solution, CliError> {
    let model = VolatilityModel::new(cfg.model).map_err(CliError::solver)?;
    let controls = cfg.controls.to_solver();
    let sol = out.time("solve", || {
        solve(&cfg.market, &model, &cfg.grid, &controls).map_err(CliError::solver)
    })?;
    log::info!(
        "solved {} levels, rho(T) = {}",
        sol.report.levels,
        sol.curve.last_rho().unwrap_or(f64::NAN)
    );
    Ok(sol)
}

fn describe_solution(out: &mut Outputs, sol: &Solution) {
    let r = &sol.report;
    out.note("model", sol.curve.model.clone());
    out.note("rho_T", fmt_float(sol.curve.last_rho().unwrap_or(f64::NAN)));
    out.note("levels", r.levels.to_string());
    out.note(
        "mean_micro_iterations",
        fmt_float(r.mean_micro_iterations()),
    );
    out.note("max_micro_iterations", r.max_micro_iterations().to_string());
    out.note("max_resubstitution", fmt_float(r.max_resubstitution()));
    out.note("max_linear_residual", fmt_float(r.max_linear_residual));
    out.note("beyond_domain", r.beyond_domain.to_string());
    out.note("below_strike", r.below_strike.to_string());
    out.note("pi_min", fmt_float(r.pi_min));
    out.note("pi_max", fmt_float(r.pi_max));
    out.note("min_boundary_slope", fmt_float(r.min_boundary_slope));
    out.note("max_decrease", fmt_float(sol.curve.max_decrease()));
    let margin = r
        .parabolicity
        .iter()
        .map(|&(_, m)| m)
        .fold(f64::INFINITY, f64::min);
    out.note("min_parabolicity_margin", fmt_float(margin));
}

fn add_solution(out: &mut Outputs, cfg: &RunConfig, sol: &Solution) -> Result<(), CliError> {
    out.curve("boundary.csv", &sol.curve)?;
    let mut buf = Vec::new();
    write_snapshots_csv(&sol.snapshots, &cfg.grid, &mut buf)?;
    out.add("pi_snapshots.csv", buf);
    describe_solution(out, sol);
    Ok(())
}

fn run_solve(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let sol = solve_configured(cfg, &mut out)?;
    add_solution(&mut out, cfg, &sol)?;
    Ok(out)
}

fn constant_sigma(cfg: &RunConfig, cmd: &str) -> Result<f64, CliError> {
    match cfg.model {
        VolatilitySpec::Constant { sigma_hat } => Ok(sigma_hat),
        other => Err(CliError::Validation(format!(
            "model.model: `{cmd}` needs the constant model, got `{}`",
            other.tag()
        ))),
    }
}

/// Linear interpolation of `curve` at `tau` (clamped to its range).
fn sample(curve: &BoundaryCurve, tau: f64) -> f64 {
    let (t, r) = (&curve.taus, &curve.rhos);
    let i = t.partition_point(|&x| x <= tau).clamp(1, t.len() - 1);
    let w = ((tau - t[i - 1]) / (t[i] - t[i - 1])).clamp(0.0, 1.0);
    r[i - 1] + w * (r[i] - r[i - 1])
}

fn run_benchmark(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let sigma = constant_sigma(cfg, "benchmark")?;
    let mut out = Outputs::default();
    let sol = solve_configured(cfg, &mut out)?;
    let b = &cfg.benchmark;
    let grid = b
        .grid(cfg.market.t_mat, b.nodes)
        .map_err(CliError::solver)?;
    let int = out
        .time("integral", || {
            solve_integral_equation(&cfg.market, sigma, &grid, &b.controls())
        })
        .map_err(CliError::solver)?;

    add_solution(&mut out, cfg, &sol)?;
    out.curve("integral_boundary.csv", &int.curve)?;

    let sup_rel = int
        .curve
        .taus
        .iter()
        .zip(&int.curve.rhos)
        .map(|(&t, &r)| (sample(&sol.curve, t) / r - 1.0).abs())
        .fold(0.0, f64::max);
    let split_end = sol.curve.last_rho().unwrap_or(f64::NAN);
    let int_end = int.curve.last_rho().unwrap_or(f64::NAN);
    out.note("integral_rho_T", fmt_float(int_end));
    out.note(
        "end_gap_relative",
        fmt_float((split_end - int_end).abs() / int_end),
    );
    out.note("sup_relative_deviation", fmt_float(sup_rel));
    out.note(
        "integral_max_residual",
        fmt_float(int.residuals.iter().copied().fold(0.0, f64::max)),
    );
    Ok(out)
}

fn run_converge(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let sigma = constant_sigma(cfg, "converge")?;
    let c = &cfg.converge;
    let b = &cfg.benchmark;
    let mut out = Outputs::default();
    let grid = b
        .grid(cfg.market.t_mat, c.reference_nodes)
        .map_err(CliError::solver)?;
    let reference = out
        .time("integral", || {
            solve_integral_equation(&cfg.market, sigma, &grid, &b.controls())
        })
        .map_err(CliError::solver)?;
    let table = out
        .time("study", || {
            convergence_study(
                &cfg.market,
                sigma,
                cfg.grid.x_len,
                &c.h_list,
                c.cfl_ratio,
                &cfg.controls.to_solver(),
                &reference.curve,
            )
        })
        .map_err(CliError::solver)?;

    let mut buf = Vec::new();
    write_convergence_csv(&table, c.l2_variant, &mut buf)?;
    out.add("convergence.csv", buf);
    out.curve("reference.csv", &reference.curve)?;
    out.note(
        "reference_rho_T",
        fmt_float(reference.curve.last_rho().unwrap_or(f64::NAN)),
    );
    for (i, row) in table.rows.iter().enumerate() {
        let key = format!("h={}", row.h);
        out.note(
            format!("{key}.grid"),
            format!("{}x{}", row.grid.n_space, row.grid.m_time),
        );
        match &row.outcome {
            Ok(o) => {
                out.curve(format!("boundary_h{}.csv", row.h), &o.curve)?;
                out.note(
                    format!("{key}.rho_T"),
                    fmt_float(o.curve.last_rho().unwrap_or(f64::NAN)),
                );
                if let Some(e) = table.eoc_at(i, Norm::Inf) {
                    out.note(format!("{key}.eoc_linf"), fmt_float(e));
                }
            }
            Err(e) => {
                log::warn!("h = {} failed: {e}", row.h);
                out.note(format!("{key}.error"), e.to_string());
            }
        }
    }
    Ok(out)
}

fn run_sweep(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let s = &cfg.sweep;
    let mut out = Outputs::default();
    let table = out
        .time("sweep", || {
            parameter_sweep(
                &cfg.market,
                cfg.model.sigma_hat(),
                &cfg.grid,
                &cfg.controls.to_solver(),
                &s.model,
                &s.values,
            )
        })
        .map_err(CliError::solver)?;

    let mut buf = Vec::new();
    write_sweep_csv(&table, s.l2_variant, &mut buf)?;
    out.add("sweep.csv", buf);
    out.curve("boundary.csv", &table.reference.curve)?;
    out.note(
        "reference_rho_T",
        fmt_float(table.reference.curve.last_rho().unwrap_or(f64::NAN)),
    );
    for row in &table.rows {
        let key = format!("param={}", row.param);
        match &row.outcome {
            Ok(o) => {
                out.curve(format!("boundary_p{}.csv", row.param), &o.curve)?;
                out.note(
                    format!("{key}.rho_T"),
                    fmt_float(o.curve.last_rho().unwrap_or(f64::NAN)),
                );
                out.note(
                    format!("{key}.min_signed"),
                    fmt_float(o.distance.min_signed),
                );
            }
            Err(e) => {
                log::warn!("parameter {} failed: {e}", row.param);
                out.note(format!("{key}.error"), e.to_string());
            }
        }
    }
    Ok(out)
}

fn run_price(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let sol = solve_configured(cfg, &mut out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "value", "exercised"])?;
    for &s in &cfg.price.spots {
        let q =
            quote_price(&sol.final_state, &cfg.grid, &cfg.market, s).map_err(CliError::solver)?;
        w.write_record([fmt_float(q.s), fmt_float(q.value), q.exercised.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    out.curve("boundary.csv", &sol.curve)?;
    out.add("prices.csv", bytes);
    describe_solution(&mut out, &sol);
    Ok(out)
}
