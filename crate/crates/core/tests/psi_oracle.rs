use exercise_boundary::PsiTable;

/// Classical RK4 in `t = ln x` for `Psi' = (Psi + 1) / (2 sqrt(x Psi) - x)`,
/// seeded with the leading-order behaviour `Psi ~ (3/2)^(2/3) x^(1/3)`.
fn rk4_psi(x0: f64, x1: f64, steps: usize) -> f64 {
    let rhs = |t: f64, y: f64| {
        let x = t.exp();
        x * (y + 1.0) / (2.0 * (x * y).sqrt() - x)
    };
    let (t0, t1) = (x0.ln(), x1.ln());
    let dt = (t1 - t0) / steps as f64;
    let mut y = 1.5f64.powf(2.0 / 3.0) * x0.cbrt();
    let mut t = t0;
    for _ in 0..steps {
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
        let k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
        let k4 = rhs(t + dt, y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
    }
    y
}

#[test]
fn table_matches_independent_integration() {
    let coarse = rk4_psi(1e-12, 1.0, 20_000);
    let fine = rk4_psi(1e-12, 1.0, 40_000);
    assert!((coarse - fine).abs() < 1e-10, "oracle not converged");
    assert!((fine - 2.757_808_58).abs() < 1e-7, "oracle {fine}");

    let table = PsiTable::<f64>::standard().unwrap();
    let v = table.eval(1.0).unwrap();
    assert!((v - fine).abs() < 1e-6 * fine, "table {v} oracle {fine}");
    for &x in &[1.0, 10.0, 1e3, 1e5] {
        let o = rk4_psi(1e-12, x, 40_000);
        let t = table.eval(x).unwrap();
        assert!((t - o).abs() < 1e-6 * o, "x={x}: table {t} oracle {o}");
    }
}

/// The one-term seed at `eps` is off by O(eps^(1/3)); perturbations of the
/// singular solution decay like `(eps/x)^(1/2)`, which bounds the table error
/// at small arguments.
#[test]
fn seed_error_decays_away_from_the_origin() {
    let table = PsiTable::<f64>::standard().unwrap();
    let eps = table.eps();
    for &x in &[1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1] {
        let o = rk4_psi(1e-12, x, 40_000);
        let rel = (table.eval(x).unwrap() - o).abs() / o;
        let bound = 3e-3 * (eps / x).sqrt() + 1e-8;
        assert!(rel < bound, "x={x}: relative error {rel:e} above {bound:e}");
    }
}

#[test]
fn node_doubling_is_stable() {
    let a = PsiTable::<f64>::build(1e-8, 1e6, 701, 1e-12).unwrap();
    let b = PsiTable::<f64>::build(1e-8, 1e6, 1401, 1e-12).unwrap();
    let mut x = 1e-7;
    while x < 1e6 {
        let (va, vb) = (a.eval(x).unwrap(), b.eval(x).unwrap());
        assert!((va - vb).abs() < 1e-6 * vb, "x={x}: {va} vs {vb}");
        x *= 1.37;
    }
}

#[test]
fn table_is_monotone_from_zero() {
    let t = PsiTable::<f64>::standard().unwrap();
    assert_eq!(t.eval(0.0).unwrap(), 0.0);
    let nodes = t.nodes();
    assert_eq!(nodes[0], (0.0, 0.0));
    assert!(nodes.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
    let mut prev = 0.0;
    let mut x = 1e-12;
    while x < 1e7 {
        let v = t.eval(x).unwrap();
        assert!(v > prev, "not increasing at {x}");
        prev = v;
        x *= 1.11;
    }
}
