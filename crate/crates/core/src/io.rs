//! CSV serialisation of curves, snapshots and tables. Floats are written with
//! 17 significant digits so files round-trip exactly.

use std::io::{Read, Write};

use crate::analysis::{ConvergenceTable, L2Variant, Norm, SweepTable};
use crate::error::{Error, Result};
use crate::landau::{BoundaryCurve, Grid, MarketParams, PortfolioState};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Model(#[from] Error),
}

pub fn fmt_float<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

fn opt(v: Option<impl Real>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// `tau,rho` rows.
pub fn write_boundary_csv<T: Real, W: Write>(
    curve: &BoundaryCurve<T>,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "rho"])?;
    for (t, r) in curve.taus.iter().zip(&curve.rhos) {
        w.write_record([fmt_float(*t), fmt_float(*r)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `tau,rho` rows written by [`write_boundary_csv`].
pub fn read_boundary_csv<R: Read>(
    input: R,
    market: MarketParams<f64>,
    model: &str,
) -> Result<BoundaryCurve<f64>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["tau", "rho"] {
        return Err(IoError::Parse {
            line: 1,
            reason: "expected header `tau,rho`".into(),
        });
    }
    let mut taus = Vec::new();
    let mut rhos = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<f64, IoError> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| IoError::Parse {
                    line,
                    reason: format!("column {} is not a number", i + 1),
                })
        };
        taus.push(parse(0)?);
        rhos.push(parse(1)?);
    }
    Ok(BoundaryCurve {
        taus,
        rhos,
        market,
        model: model.to_string(),
    })
}

/// `tau,x,pi` rows, one block per snapshot.
pub fn write_snapshots_csv<T: Real, W: Write>(
    snapshots: &[PortfolioState<T>],
    grid: &Grid<T>,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "x", "pi"])?;
    for s in snapshots {
        let tau = fmt_float(s.tau);
        for (i, p) in s.pi.iter().enumerate() {
            w.write_record([tau.as_str(), &fmt_float(grid.x(i)), &fmt_float(*p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `h,err_linf,eoc_linf,err_l2,eoc_l2`; failed rows keep `h` and leave the
/// rest empty.
pub fn write_convergence_csv<T: Real, W: Write>(
    table: &ConvergenceTable<T>,
    variant: L2Variant,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "err_linf", "eoc_linf", "err_l2", "eoc_l2"])?;
    let l2 = Norm::L2(variant);
    for (i, row) in table.rows.iter().enumerate() {
        let d = table.distance(i);
        w.write_record([
            fmt_float(row.h),
            opt(d.map(|d| d.l_inf)),
            opt(table.eoc_at(i, Norm::Inf)),
            opt(d.map(|d| d.l2(variant))),
            opt(table.eoc_at(i, l2)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `param,dist_linf,alpha_linf,dist_l2,alpha_l2`.
pub fn write_sweep_csv<T: Real, W: Write>(
    table: &SweepTable<T>,
    variant: L2Variant,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "dist_linf", "alpha_linf", "dist_l2", "alpha_l2"])?;
    let l2 = Norm::L2(variant);
    for (i, row) in table.rows.iter().enumerate() {
        let d = table.distance(i);
        w.write_record([
            fmt_float(row.param),
            opt(d.map(|d| d.l_inf)),
            opt(table.order_at(i, Norm::Inf)),
            opt(d.map(|d| d.l2(variant))),
            opt(table.order_at(i, l2)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
