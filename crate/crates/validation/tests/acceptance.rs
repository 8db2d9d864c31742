//! Acceptance suite. Every criterion is evaluated (none short-circuits the
//! others), reported on one line, and the binary exits non-zero if any fails.

use std::time::Instant;

use exercise_boundary::analysis::{overall_order, Norm, RunOutcome};
use exercise_boundary::integral::{solve_integral_equation, IntegralControls, IntegralGrid};
use exercise_boundary::landau::initial_state;
use exercise_boundary::splitting::transport_step;
use exercise_boundary::tridiag::{thomas_solve, TridiagonalSystem};
use exercise_boundary::{
    convergence_study, eoc, param_order, parameter_sweep, solve, BoundaryCurve, Grid, L2Variant,
    MarketParams, PortfolioState, PsiTable, Solution, SolveReport, SolverControls, SweepFamily,
    VolatilityModel, VolatilitySpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const E: f64 = 10.0;
const SIGMA: f64 = 0.2;
const X_LEN: f64 = 3.0;

fn market() -> MarketParams {
    MarketParams::new(E, 0.1, 0.05, 1.0).unwrap()
}

fn constant() -> VolatilityModel {
    VolatilityModel::new(VolatilitySpec::Constant { sigma_hat: SIGMA }).unwrap()
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Every solved curve is collected here for the invariant criterion.
struct Solved {
    label: String,
    curve: BoundaryCurve,
    report: SolveReport,
}

fn keep(
    all: &mut Vec<Solved>,
    label: impl Into<String>,
    curve: &BoundaryCurve,
    report: &SolveReport,
) {
    all.push(Solved {
        label: label.into(),
        curve: curve.clone(),
        report: report.clone(),
    });
}

fn benchmark(full: &Solution, integral: &BoundaryCurve) -> Verdict {
    let a = full.curve.last_rho().unwrap();
    let b = integral.last_rho().unwrap();
    let gap = (a - b).abs() / b;
    Verdict::new(
        within(a, 22.321, 0.005) && within(b, 22.375, 0.005) && gap <= 0.005,
        format!(
            "splitting rho(T) = {a:.5} (target 22.321 +-0.5%), integral rho(T) = {b:.5} (target 22.375 +-0.5%), gap {:.3}% (<= 0.5%), {:.1} s",
            100.0 * gap,
            full.report.wall_time.as_secs_f64()
        ),
    )
}

fn monotone_convergence(reference: &BoundaryCurve, all: &mut Vec<Solved>) -> Verdict {
    let m = market();
    let controls = SolverControls::default();
    let mut ends = Vec::new();
    let mut below = true;
    for &h in &[0.03, 0.012, 0.006] {
        let grid = Grid::from_cfl(X_LEN, h, 0.5, SIGMA, m.t_mat);
        match solve(&m, &constant(), &grid, &controls) {
            Ok(sol) => {
                let d = exercise_boundary::curve_distance(&sol.curve, reference).unwrap();
                below &= d.max_signed <= 1e-9;
                ends.push(sol.curve.last_rho().unwrap());
                keep(all, format!("constant h={h}"), &sol.curve, &sol.report);
            }
            Err(e) => return Verdict::new(false, format!("h = {h}: {e}")),
        }
    }
    let increasing = ends.windows(2).all(|w| w[1] > w[0]);
    Verdict::new(
        increasing && below,
        format!(
            "rho_h(T) = {:.5?} strictly increasing: {increasing}; every curve below the integral reference: {below}",
            ends
        ),
    )
}

fn eoc_reproduction(reference: &BoundaryCurve, all: &mut Vec<Solved>) -> Verdict {
    let m = market();
    let hs = [0.03, 0.012, 0.006, 0.004, 0.003, 0.0024, 0.002];
    let table = convergence_study(
        &m,
        SIGMA,
        X_LEN,
        &hs,
        0.5,
        &SolverControls::default(),
        reference,
    )
    .unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        match &row.outcome {
            Ok(RunOutcome {
                curve,
                distance,
                report,
            }) => {
                keep(all, format!("constant h={}", row.h), curve, report);
                let e_inf = table.eoc_at(i, Norm::Inf);
                let e_l2 = table.eoc_at(i, Norm::L2(L2Variant::Continuous));
                let e_l2d = table.eoc_at(i, Norm::L2(L2Variant::Discrete));
                if let Some(v) = e_inf {
                    pass &= (0.85..=1.05).contains(&v);
                }
                if let Some(v) = e_l2 {
                    pass &= (1.30..=1.55).contains(&v);
                }
                lines.push(format!(
                    "h={} linf={:.4} eoc={} l2={:.4} eoc={} l2_discrete={:.4} eoc={}",
                    row.h,
                    distance.l_inf,
                    e_inf.map_or("-".into(), |v| format!("{v:.3}")),
                    distance.l_2,
                    e_l2.map_or("-".into(), |v| format!("{v:.3}")),
                    distance.l2_discrete,
                    e_l2d.map_or("-".into(), |v| format!("{v:.3}")),
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("h={} failed: {e}", row.h));
            }
        }
    }
    let first = table.distance(0).map_or(f64::NAN, |d| d.l_inf);
    let first_ok = within(first, 0.5, 0.15);
    pass &= first_ok;
    Verdict::new(
        pass,
        format!(
            "eoc(Linf) in [0.85,1.05], eoc(L2) in [1.30,1.55], err(Linf) at h=0.03 = {first:.4} (target 0.5 +-15%: {first_ok}) | {}",
            lines.join(" | ")
        ),
    )
}

fn sweep_grid() -> Grid {
    // half the benchmark resolution at the same k/h^2
    Grid::new(X_LEN, 375, 56_250)
}

fn rapm_sweep(all: &mut Vec<Solved>) -> Verdict {
    let rs = [1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0];
    let expected = [0.0601, 0.0754, 0.102, 0.128, 0.16, 0.2, 0.268];
    let table = parameter_sweep(
        &market(),
        SIGMA,
        &sweep_grid(),
        &SolverControls::default(),
        &SweepFamily::Rapm { cost: 0.01 },
        &rs,
    )
    .unwrap();
    keep(
        all,
        "constant sweep reference",
        &table.reference.curve,
        &table.reference.report,
    );
    let mut dists = Vec::new();
    let mut close = true;
    for (row, want) in table.rows.iter().zip(expected) {
        match &row.outcome {
            Ok(o) => {
                close &= within(o.distance.l_inf, want, 0.15);
                dists.push(o.distance.l_inf);
                keep(all, format!("rapm R={}", row.param), &o.curve, &o.report);
            }
            Err(e) => return Verdict::new(false, format!("R = {}: {e}", row.param)),
        }
    }
    let slope = overall_order(&rs, &dists).unwrap();
    let increasing = dists.windows(2).all(|w| w[1] > w[0]);
    let pass = close && (0.30..=0.36).contains(&slope) && increasing;
    Verdict::new(
        pass,
        format!(
            "distances {:.4?} vs {expected:?} within 15%: {close}; slope {slope:.3} in [0.30,0.36]; increasing: {increasing}",
            dists
        ),
    )
}

fn barles_soner_sweep(all: &mut Vec<Solved>) -> Verdict {
    let a_values = [0.01, 0.02, 0.05, 0.1, 0.2, 0.35];
    let expected = [0.156, 0.25, 0.472, 0.793, 1.52, 3.07];
    let table = parameter_sweep(
        &market(),
        SIGMA,
        &sweep_grid(),
        &SolverControls::default(),
        &SweepFamily::BarlesSoner,
        &a_values,
    )
    .unwrap();
    let mut dists = Vec::new();
    let mut close = true;
    let mut above = true;
    for (row, want) in table.rows.iter().zip(expected) {
        match &row.outcome {
            Ok(o) => {
                close &= within(o.distance.l_inf, want, 0.20);
                above &= o.distance.min_signed >= -1e-7;
                dists.push(o.distance.l_inf);
                keep(
                    all,
                    format!("barles-soner a={}", row.param),
                    &o.curve,
                    &o.report,
                );
            }
            Err(e) => return Verdict::new(false, format!("a = {}: {e}", row.param)),
        }
    }
    let slope = overall_order(&a_values[..3], &dists[..3]).unwrap();
    let pass = close && (0.62..=0.74).contains(&slope) && above;
    Verdict::new(
        pass,
        format!(
            "distances {:.4?} vs {expected:?} within 20%: {close}; slope for a <= 0.05 {slope:.3} in [0.62,0.74]; above constant boundary: {above}",
            dists
        ),
    )
}

fn anchors(full: &Solution, integral: &BoundaryCurve) -> Verdict {
    let m = market();
    let rho0 = full.curve.rhos[0] == 20.0 && integral.rhos[0] == 20.0;
    let grid = Grid::new(X_LEN, 200, 400);
    let controls = SolverControls {
        store_every: Some(1),
        ..SolverControls::default()
    };
    let sol = solve(&m, &constant(), &grid, &controls).unwrap();
    let every_level = sol.snapshots.len() == grid.m_time + 1;
    let bc = sol
        .snapshots
        .iter()
        .chain(&full.snapshots)
        .all(|s| s.pi[0] == -E && *s.pi.last().unwrap() == 0.0);
    let jump = m.initial_jump();
    let init = initial_state(&m, &grid);
    let jump_ok = init
        .pi
        .iter()
        .enumerate()
        .all(|(i, &v)| (grid.x(i) < jump) == (v == -E));
    Verdict::new(
        rho0 && every_level && bc && jump_ok,
        format!(
            "rho(0) = 20 exactly for both solvers: {rho0}; Pi_0 = -E and Pi_n = 0 on all {} levels checked: {bc}; initial jump at ln(r/q) = {jump:.6}: {jump_ok}",
            sol.snapshots.len() + full.snapshots.len()
        ),
    )
}

fn dense(sys: &TridiagonalSystem) -> Vec<f64> {
    let n = sys.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] = sys.beta[i];
        if i > 0 {
            a[i][i - 1] = sys.alpha[i];
        }
        if i + 1 < n {
            a[i][i + 1] = sys.gamma[i];
        }
        a[i][n] = sys.rhs[i];
    }
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, p);
        for r in c + 1..n {
            let (upper, lower) = a.split_at_mut(r);
            let f = lower[0][c] / upper[c][c];
            for (v, p) in lower[0][c..].iter_mut().zip(&upper[c][c..]) {
                *v -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

fn properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = market();

    let mut thomas = 0.0f64;
    for _ in 0..500 {
        let n = rng.gen_range(1..=50);
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let beta = (0..n)
            .map(|i| alpha[i].abs() + gamma[i].abs() + rng.gen_range(0.1..2.0))
            .collect();
        let rhs = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let sys = TridiagonalSystem {
            alpha,
            beta,
            gamma,
            rhs,
        };
        let x = thomas_solve(&sys).unwrap();
        for (a, b) in x.iter().zip(dense(&sys)) {
            thomas = thomas.max((a - b).abs() / (1.0 + b.abs()));
        }
    }

    let grid = Grid::new(X_LEN, 60, 100);
    let h = grid.h();
    let drift = (m.r_rate - m.q_div) * grid.k(m.t_mat);
    let mut transport = 0.0f64;
    for trial in 0..200 {
        let kinks: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = |x: f64| {
            -E + kinks
                .iter()
                .enumerate()
                .map(|(k, c)| c * (x - k as f64 * h).max(0.0))
                .sum::<f64>()
        };
        let pi: Vec<f64> = (0..=60).map(|i| f(i as f64 * h)).collect();
        let prev = PortfolioState {
            pi: pi.clone(),
            rho: 20.0,
            j_index: 0,
            tau: 0.0,
        };
        // integer shifts on even trials, arbitrary ones otherwise
        let cells = if trial % 2 == 0 {
            rng.gen_range(0..8) as f64
        } else {
            rng.gen_range(-0.9..8.0)
        };
        let rho = 20.0 * (cells * h - drift).exp();
        let t = transport_step(&prev, rho, &m, &grid);
        let shift = (rho / 20.0).ln() + drift;
        for i in 0..=60 {
            let xi = i as f64 * h - shift;
            let want = if xi <= 0.0 {
                -E
            } else if xi > X_LEN {
                0.0
            } else {
                f(xi)
            };
            transport = transport.max((t.values[i] - want).abs());
        }
    }

    let mut power = 0.0f64;
    for _ in 0..200 {
        let c = rng.gen_range(1e-3..1e3);
        let alpha = rng.gen_range(-3.0..3.0);
        let xs: Vec<f64> = (1..6).map(|i| i as f64 * rng.gen_range(0.5..1.0)).collect();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(alpha)).collect();
        for v in eoc(&xs, &ys)
            .unwrap()
            .into_iter()
            .chain(param_order(&xs, &ys).unwrap())
        {
            power = power.max((v - alpha).abs());
        }
    }

    let psi = PsiTable::<f64>::standard().unwrap();
    let nodes = psi.nodes();
    let psi_monotone =
        nodes[0] == (0.0, 0.0) && nodes.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    let coarse = PsiTable::<f64>::build(1e-8, 1e6, 701, 1e-12).unwrap();
    let mut doubling = 0.0f64;
    let mut x = 1e-7;
    while x < 1e6 {
        let (a, b) = (coarse.eval(x).unwrap(), psi.eval(x).unwrap());
        doubling = doubling.max((a - b).abs() / b);
        x *= 1.37;
    }

    let par = constant()
        .parabolicity_margin(-50.0, 50.0, 20.0, 0.5)
        .unwrap();
    let par_ok = (par - SIGMA * SIGMA).abs() <= 1e-15;

    let pass = thomas <= 1e-12
        && transport <= 1e-12
        && power <= 1e-9
        && psi_monotone
        && doubling <= 1e-6
        && par_ok;
    Verdict::new(
        pass,
        format!(
            "thomas vs dense {thomas:.1e}; transport vs characteristics {transport:.1e}; power-law orders {power:.1e}; psi monotone with psi(0)=0: {psi_monotone}; psi node doubling {doubling:.1e}; parabolicity(constant) = {par}"
        ),
    )
}

fn invariants(all: &[Solved]) -> Verdict {
    let tol = SolverControls::<f64>::default().micro_tol;
    let mut bad = Vec::new();
    for s in all {
        let r = &s.report;
        let ok = s.curve.max_decrease() <= tol
            && r.pi_min >= -E - 1e-6 * E
            && r.pi_max <= 1e-6 * E
            && r.min_boundary_slope >= -tol
            && r.max_resubstitution() <= 10.0 * tol;
        if !ok {
            bad.push(format!(
                "{} (decrease {:.1e}, pi in [{:.6}, {:.1e}], slope {:.1e}, resub {:.1e})",
                s.label,
                s.curve.max_decrease(),
                r.pi_min,
                r.pi_max,
                r.min_boundary_slope,
                r.max_resubstitution()
            ));
        }
    }
    let worst = all
        .iter()
        .map(|s| s.report.max_resubstitution())
        .fold(0.0, f64::max);
    Verdict::new(
        bad.is_empty(),
        format!(
            "{} curves checked, worst re-substitution residual {worst:.1e}{}",
            all.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; violations: {}", bad.join("; "))
            }
        ),
    )
}

fn main() {
    let start = Instant::now();
    let m = market();
    let controls = SolverControls::default();
    let full = solve(&m, &constant(), &Grid::new(X_LEN, 750, 225_000), &controls)
        .expect("full resolution solve");
    let ic = IntegralControls::default();
    let integral = solve_integral_equation(
        &m,
        SIGMA,
        &IntegralGrid::graded(1.0, 200, 2.0, 8).unwrap(),
        &ic,
    )
    .expect("integral equation")
    .curve;
    let fine = solve_integral_equation(
        &m,
        SIGMA,
        &IntegralGrid::graded(1.0, 800, 2.0, 8).unwrap(),
        &ic,
    )
    .expect("integral equation reference")
    .curve;

    let mut solved = Vec::new();
    keep(
        &mut solved,
        "constant n=750 m=225000",
        &full.curve,
        &full.report,
    );

    let verdicts = [
        (
            1,
            "constant volatility benchmark",
            benchmark(&full, &integral),
        ),
        (
            2,
            "monotone convergence",
            monotone_convergence(&fine, &mut solved),
        ),
        (3, "eoc reproduction", eoc_reproduction(&fine, &mut solved)),
        (4, "RAPM sweep", rapm_sweep(&mut solved)),
        (5, "Barles-Soner sweep", barles_soner_sweep(&mut solved)),
        (6, "exact anchors", anchors(&full, &integral)),
        (7, "property suites", properties()),
        (8, "invariants on every solved curve", invariants(&solved)),
    ];

    let mut failed = 0;
    for (id, name, v) in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{tag}] {name}: {}", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0} s)",
        verdicts.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
