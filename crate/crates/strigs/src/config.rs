//! Run configuration: a TOML document plus `--set key=value` overrides.
//!
//! Unknown keys are hard errors. Every run writes a manifest echoing the
//! fully-resolved configuration (defaults included) plus the artifact
//! version; re-parsing a manifest as a config reproduces identical outputs.

use crate::dynamics::{log_checkpoints, SimState, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::problems::{
    make_least_squares, make_shifted_quadratic, make_smoothed_norm, ConvexProblem,
    SmoothedNormKind,
};
use crate::schedules::{
    exp_diffusion, feasible_t1, lambda_window, power_epsilon, DampingParams, DiffusionSchedule,
    EpsilonSchedule,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Artifact version; written into manifests, ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub output_dir: String,
    pub run_id: String,
    pub problem: ProblemConfig,
    pub eps: EpsConfig,
    pub sigma: SigmaConfig,
    pub damping: DampingConfig,
    pub sim: SimConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: None,
            output_dir: "out".into(),
            run_id: "run".into(),
            problem: ProblemConfig::default(),
            eps: EpsConfig::default(),
            sigma: SigmaConfig::default(),
            damping: DampingConfig::default(),
            sim: SimConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// quadratic | least_squares | huber | lse
    pub kind: String,
    pub dim: usize,
    /// Shift vector for the quadratic; defaults to 0.5 in every coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Least-squares matrix, row major, inline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_matrix: Option<Vec<Vec<f64>>>,
    /// Least-squares matrix as a CSV file path (one row per line).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Huber threshold.
    pub threshold: f64,
    /// Log-sum-exp temperature.
    pub smoothing: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: "quadratic".into(),
            dim: 4,
            p: None,
            a_matrix: None,
            a_csv: None,
            b: None,
            threshold: 1.0,
            smoothing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EpsConfig {
    pub r: f64,
    pub t0: f64,
}

impl Default for EpsConfig {
    fn default() -> Self {
        Self { r: 1.0, t0: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaConfig {
    /// zero | exp
    pub kind: String,
    pub alpha: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self {
            kind: "zero".into(),
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DampingConfig {
    pub delta: f64,
    /// Omit to auto-select the midpoint of the admissible window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub a: f64,
    pub c: f64,
    pub rho: f64,
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self {
            delta: 2.0,
            lambda: None,
            a: 3.0,
            c: 4.0,
            rho: 0.4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// strigs | trigs_deterministic | savd | avd_tikhonov | heavy_ball | sgf | strigs_gen
    pub kind: String,
    /// Step; omit for min(0.01, 0.5/L).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Integration start; defaults to eps.t0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    pub checkpoints_per_decade: usize,
    /// Damping constant for the alpha/t baselines.
    pub alpha: f64,
    /// Strong-convexity constant for the heavy-ball baseline.
    pub mu: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            kind: "strigs".into(),
            h: None,
            t_end: 1e4,
            t0: None,
            seed: 0,
            x0: None,
            y0: None,
            checkpoints_per_decade: 64,
            alpha: 3.0,
            mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_paths: usize,
    /// Fit window [lo, hi]; omit for the last two decades past t1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    pub slack_f_gap: f64,
    pub slack_dist_sq: f64,
    pub slack_y_norm: f64,
    /// strong | weak
    pub bound_form: String,
    /// Upper limit for sigma tail integrals; omit for 10 T.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_horizon: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_paths: 64,
            fit_window: None,
            slack_f_gap: 0.15,
            slack_dist_sq: 0.15,
            slack_y_norm: 0.2,
            bound_form: "strong".into(),
            sigma_horizon: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Loads a config file (or the defaults when `path` is `None`) and applies
/// `key.path=value` overrides before deserializing; unknown keys fail hard.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("parse error: {e}")))?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override must look like key=value, got `{ov}`")))?;
    // Parse the value side with TOML semantics (numbers, bools, arrays);
    // anything that does not parse is taken as a bare string.
    let value: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut parts = key.trim().split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` is not a table")))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Everything a run needs, built and cross-validated from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    /// Echo of the input with every default and auto-selected value filled.
    pub manifest: RunConfig,
    pub problem: Arc<ConvexProblem>,
    pub eps: EpsilonSchedule,
    pub sigma: DiffusionSchedule,
    pub damping: DampingParams,
    pub t1: f64,
    pub spec: SystemSpec,
    pub init: SimState,
    pub t_end: f64,
    pub h: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Log-spaced checkpoints with t1 inserted.
    pub checkpoints: Vec<f64>,
    pub fit_window: (f64, f64),
    pub strong_bound: bool,
    pub sigma_horizon: f64,
}

fn read_csv_matrix(path: &str) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read matrix csv {path}: {e}")))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| {
            Error::Config(format!("matrix csv {path} line {}: {e}", lineno + 1))
        })?);
    }
    Ok(rows)
}

fn build_problem(cfg: &ProblemConfig) -> Result<ConvexProblem> {
    match cfg.kind.as_str() {
        "quadratic" => {
            let p = match &cfg.p {
                Some(v) => DVector::from_vec(v.clone()),
                None => DVector::from_element(cfg.dim, 0.5),
            };
            make_shifted_quadratic(p)
        }
        "least_squares" => {
            let rows = match (&cfg.a_matrix, &cfg.a_csv) {
                (Some(m), _) => m.clone(),
                (None, Some(path)) => read_csv_matrix(path)?,
                (None, None) => {
                    return Err(Error::Config(
                        "least_squares needs problem.a_matrix or problem.a_csv".into(),
                    ))
                }
            };
            let b = cfg
                .b
                .as_ref()
                .ok_or_else(|| Error::Config("least_squares needs problem.b".into()))?;
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, |r| r.len());
            if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::Config("problem.a_matrix must be rectangular".into()));
            }
            let a = DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten());
            make_least_squares(a, DVector::from_vec(b.clone()))
        }
        "huber" => make_smoothed_norm(SmoothedNormKind::Huber, cfg.threshold, cfg.dim),
        "lse" => make_smoothed_norm(SmoothedNormKind::LogSumExp, cfg.smoothing, cfg.dim),
        other => Err(Error::Config(format!(
            "unknown problem.kind `{other}` (expected quadratic | least_squares | huber | lse)"
        ))),
    }
}

fn build_kind(cfg: &SimConfig, damping: &DampingParams, r: f64) -> Result<SystemKind> {
    Ok(match cfg.kind.as_str() {
        "strigs" => SystemKind::Strigs {
            delta: damping.delta,
        },
        "trigs_deterministic" => SystemKind::TrigsDeterministic {
            delta: damping.delta,
        },
        "savd" => SystemKind::Savd { alpha: cfg.alpha },
        "avd_tikhonov" => SystemKind::AvdTikhonov { alpha: cfg.alpha },
        "heavy_ball" => SystemKind::HeavyBall { mu: cfg.mu },
        "sgf" => SystemKind::Sgf,
        "strigs_gen" => SystemKind::StrigsGen {
            alpha: damping.delta,
            q: 0.5 * r,
            a: 1.0,
            p: r,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown sim.kind `{other}`"
            )))
        }
    })
}

impl RunConfig {
    /// Builds and validates every runtime object; the returned manifest echoes
    /// this config with all auto-selected values made explicit.
    pub fn resolve(&self) -> Result<Resolved> {
        let problem = Arc::new(build_problem(&self.problem)?);
        let eps = power_epsilon(self.eps.r, self.eps.t0)?;

        let window = lambda_window(self.damping.delta, self.damping.a, self.damping.c);
        let lambda = match self.damping.lambda {
            Some(l) => l,
            None => {
                if !window.feasible {
                    return Err(Error::Infeasible(format!(
                        "lambda window ({}, {}) is empty for delta = {}",
                        window.lo, window.hi, self.damping.delta
                    )));
                }
                0.5 * (window.lo + window.hi)
            }
        };
        let damping = DampingParams::new(
            self.damping.delta,
            lambda,
            self.damping.a,
            self.damping.c,
            self.damping.rho,
        )?;
        let t1 = feasible_t1(&eps, &damping)?;
        let damping = damping.with_t1(t1);

        let dim = problem.dim();
        let sigma = match self.sigma.kind.as_str() {
            "zero" => DiffusionSchedule::zero(dim),
            "exp" => exp_diffusion(self.eps.r, self.sigma.alpha, dim)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown sigma.kind `{other}` (expected zero | exp)"
                )))
            }
        };

        let t0 = self.sim.t0.unwrap_or(self.eps.t0);
        if !(t0 > 0.0) {
            return Err(Error::Config(format!("sim.t0 must be positive, got {t0}")));
        }
        let t_end = self.sim.t_end;
        if !(t_end > t0) {
            return Err(Error::Config(format!(
                "sim.T = {t_end} must exceed t0 = {t0}"
            )));
        }
        let h = self.sim.h.unwrap_or_else(|| {
            let cap = 0.5 / problem.lipschitz().max(1e-12);
            0.01f64.min(cap)
        });
        if !(h > 0.0 && h < t_end - t0) {
            return Err(Error::Config(format!("sim.h = {h} is out of range")));
        }

        let take_vec = |v: &Option<Vec<f64>>, name: &str| -> Result<DVector<f64>> {
            match v {
                Some(v) => {
                    if v.len() != dim {
                        return Err(Error::Config(format!(
                            "{name} has {} entries but the problem dimension is {dim}",
                            v.len()
                        )));
                    }
                    Ok(DVector::from_vec(v.clone()))
                }
                None => Ok(DVector::zeros(dim)),
            }
        };
        let x0 = take_vec(&self.sim.x0, "sim.x0")?;
        let y0 = take_vec(&self.sim.y0, "sim.y0")?;
        let init = SimState::new(t0, x0, y0);

        let kind = build_kind(&self.sim, &damping, self.eps.r)?;
        let spec = SystemSpec {
            kind,
            problem: problem.clone(),
            eps: Some(eps.clone()),
            sigma: sigma.clone(),
        };

        let mut checkpoints = log_checkpoints(t0, t_end, self.sim.checkpoints_per_decade);
        if t1 >= t0 && t1 <= t_end {
            checkpoints.push(t1);
            checkpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }

        let fit_window = match self.experiment.fit_window {
            Some([lo, hi]) => (lo, hi),
            None => ((t_end / 100.0).max(t1), t_end),
        };
        let strong_bound = match self.experiment.bound_form.as_str() {
            "strong" => true,
            "weak" => false,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment.bound_form `{other}` (expected strong | weak)"
                )))
            }
        };
        let sigma_horizon = self.experiment.sigma_horizon.unwrap_or(10.0 * t_end);

        // Manifest: the same config with every auto-selection materialized.
        let mut manifest = self.clone();
        manifest.version = Some(env!("CARGO_PKG_VERSION").to_string());
        manifest.damping.lambda = Some(lambda);
        manifest.sim.h = Some(h);
        manifest.sim.t0 = Some(t0);
        manifest.sim.x0 = Some(init.x.iter().copied().collect());
        manifest.sim.y0 = Some(init.y.iter().copied().collect());
        manifest.experiment.fit_window = Some([fit_window.0, fit_window.1]);
        manifest.experiment.sigma_horizon = Some(sigma_horizon);
        if manifest.problem.kind == "quadratic" && manifest.problem.p.is_none() {
            manifest.problem.p = Some(vec![0.5; dim]);
        }

        Ok(Resolved {
            manifest,
            problem,
            eps,
            sigma,
            damping,
            t1,
            spec,
            init,
            t_end,
            h,
            seed: self.sim.seed,
            n_paths: self.experiment.n_paths,
            checkpoints,
            fit_window,
            strong_bound,
            sigma_horizon,
        })
    }
}
