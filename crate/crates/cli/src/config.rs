//! Run configuration: a single JSON document, merged over built-in defaults,
//! patched by `--override key.path=value`, then validated section by section.

use std::path::Path;

use exercise_boundary::{
    Error as ModelError, Grid, IntegralControls, IntegralGrid, L2Variant, MarketParams,
    SolverControls, SweepFamily, VolatilitySpec,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub model: VolatilitySpec,
    pub grid: Grid,
    pub controls: Controls,
    pub benchmark: Benchmark,
    pub converge: Converge,
    pub sweep: Sweep,
    pub price: Price,
}

/// Mirror of [`SolverControls`] in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controls {
    pub micro_tol: f64,
    pub max_micro: usize,
    pub store_every: Option<usize>,
    pub relaxation: f64,
    pub verify_levels: bool,
}

/// Integral equation reference on `tau_j = T (j/M)^grading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Benchmark {
    pub nodes: usize,
    /// 1 gives a uniform grid.
    pub grading: f64,
    pub quad_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Converge {
    pub h_list: Vec<f64>,
    pub cfl_ratio: f64,
    /// Collocation nodes of the integral reference.
    pub reference_nodes: usize,
    pub l2_variant: L2Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub model: SweepFamily,
    pub values: Vec<f64>,
    pub l2_variant: L2Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    /// Asset prices quoted at `tau = T`.
    pub spots: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = SolverControls::<f64>::default();
        let ic = IntegralControls::<f64>::default();
        Self {
            market: MarketParams {
                e_strike: 10.0,
                r_rate: 0.1,
                q_div: 0.05,
                t_mat: 1.0,
            },
            model: VolatilitySpec::Constant { sigma_hat: 0.2 },
            grid: Grid::new(3.0, 750, 225_000),
            controls: Controls {
                micro_tol: c.micro_tol,
                max_micro: c.max_micro,
                store_every: c.store_every,
                relaxation: c.relaxation,
                verify_levels: c.verify_levels,
            },
            benchmark: Benchmark {
                nodes: 200,
                grading: 2.0,
                quad_nodes: 8,
                tol: ic.tol,
                max_iter: ic.max_iter,
            },
            converge: Converge {
                h_list: vec![0.03, 0.012, 0.006, 0.004, 0.003, 0.0024, 0.002],
                cfl_ratio: 0.5,
                reference_nodes: 800,
                l2_variant: L2Variant::Continuous,
            },
            sweep: Sweep {
                model: SweepFamily::Rapm { cost: 0.01 },
                values: vec![1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0],
                l2_variant: L2Variant::Continuous,
            },
            price: Price {
                spots: vec![8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0],
            },
        }
    }
}

impl Controls {
    pub fn to_solver(self) -> SolverControls {
        SolverControls {
            micro_tol: self.micro_tol,
            max_micro: self.max_micro,
            store_every: self.store_every,
            relaxation: self.relaxation,
            verify_levels: self.verify_levels,
        }
    }
}

impl Benchmark {
    pub fn grid(&self, t_mat: f64, nodes: usize) -> Result<IntegralGrid, ModelError> {
        IntegralGrid::graded(t_mat, nodes, self.grading, self.quad_nodes)
    }

    pub fn controls(&self) -> IntegralControls {
        IntegralControls {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

fn in_section(section: &str, e: ModelError) -> CliError {
    let msg = match e {
        ModelError::InvalidParameter { name, reason } => format!("{section}.{name}: {reason}"),
        other => format!("{section}: {other}"),
    };
    CliError::Validation(msg)
}

fn check(ok: bool, key: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: {reason}")))
    }
}

impl RunConfig {
    /// Checks every section, so a bad block fails before any run starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.market
            .validate()
            .map_err(|e| in_section("market", e))?;
        self.model.validate().map_err(|e| in_section("model", e))?;
        self.grid
            .validate(&self.market)
            .map_err(|e| in_section("grid", e))?;
        self.controls
            .to_solver()
            .validate()
            .map_err(|e| in_section("controls", e))?;

        let b = &self.benchmark;
        check(b.nodes >= 2, "benchmark.nodes", "must be at least 2")?;
        check(b.grading >= 1.0, "benchmark.grading", "must be at least 1")?;
        check(b.tol > 0.0, "benchmark.tol", "must be positive")?;
        check(b.max_iter >= 1, "benchmark.max_iter", "must be at least 1")?;
        b.grid(self.market.t_mat, b.nodes)
            .map_err(|e| in_section("benchmark", e))?;

        let c = &self.converge;
        check(!c.h_list.is_empty(), "converge.h_list", "must not be empty")?;
        check(
            c.h_list.iter().all(|&h| h > 0.0 && h < self.grid.x_len),
            "converge.h_list",
            "mesh sizes must lie in (0, grid.x_len)",
        )?;
        check(c.cfl_ratio > 0.0, "converge.cfl_ratio", "must be positive")?;
        check(
            c.reference_nodes >= 2,
            "converge.reference_nodes",
            "must be at least 2",
        )?;

        let s = &self.sweep;
        check(!s.values.is_empty(), "sweep.values", "must not be empty")?;
        for &v in &s.values {
            s.model
                .spec(self.model.sigma_hat(), &self.market, v)
                .and_then(|spec| spec.validate())
                .map_err(|e| in_section("sweep", e))?;
        }

        check(
            self.price.spots.iter().all(|&s| s > 0.0 && s.is_finite()),
            "price.spots",
            "asset prices must be positive",
        )?;
        Ok(())
    }
}

/// Loads a config file (or the `config` block of a run manifest), applies
/// the overrides and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut user: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if is_manifest(&user) {
            user = user["config"].take();
        }
        if !user.is_object() {
            return Err(CliError::Config(format!(
                "{}: top level must be an object",
                path.display()
            )));
        }
        merge(&mut doc, user);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn is_manifest(v: &Value) -> bool {
    v.get("config").is_some_and(Value::is_object) && v.get("results_index").is_some()
}

fn tag_of(m: &Map<String, Value>) -> Option<(&'static str, &Value)> {
    ["model", "family"]
        .into_iter()
        .find_map(|k| m.get(k).filter(|v| v.is_string()).map(|v| (k, v)))
}

/// Deep merge of `patch` into `base`. A tagged object whose tag changes is
/// replaced whole, so fields of the old variant do not leak into the new one.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let switched = match (tag_of(b), tag_of(&p)) {
                (Some((kb, vb)), Some((kp, vp))) => kb == kp && vb != vp,
                _ => false,
            };
            if switched {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}`: expected key.path=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}`: empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for k in keys.iter().rev() {
        let mut m = Map::new();
        m.insert((*k).to_string(), patch);
        patch = Value::Object(m);
    }
    merge(doc, patch);
    Ok(())
}
