//! The epoch loop: repeated output-layer fits, increment solves, and step
//! searches, with curve recording and stopping logic.
//!
//! Each epoch runs the same five moves: re-fit the output layer by least
//! squares at the current first layer, assemble the first-order increment
//! system, solve it, keep only the first-layer part of the solution as a
//! search direction, and pick a step along it (each candidate re-fitted
//! before being judged). Training stops when the epoch budget runs out,
//! when the epoch-over-epoch error improvement falls below a threshold,
//! when the search cannot improve on a zero step, or when an optional
//! error target is reached — whichever fires first.

use crate::dataset::{fmt_exact, normalize, Dataset, NormalizationSpec};
use crate::error::{Error, Result};
use crate::line_search::{line_search, output_layer_vector, LineSearchConfig};
use crate::linsys::{build_increment_system, build_output_system, residuals, summarize, BlockKind};
use crate::mlp::{ActivationKind, MlpParams};
use crate::solver::{solve_projection, ProjectionConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::Path;

/// Why a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The epoch budget was exhausted.
    MaxEpochs,
    /// Error improvement between two successive epochs fell below the
    /// configured threshold.
    MinDelta,
    /// The step search found no positive step better than staying put.
    ZeroStep,
    /// The error target was reached.
    TargetReached,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::MinDelta => "min_delta",
            StopReason::ZeroStep => "zero_step",
            StopReason::TargetReached => "target_reached",
        };
        f.write_str(tag)
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden-layer width H.
    pub hidden_units: usize,
    pub max_epochs: usize,
    /// Stop once mse improves by less than this between successive epochs;
    /// 0 disables the check.
    pub min_mse_delta: f64,
    /// First-layer entries are drawn uniform on ±init_scale/√n.
    pub init_scale: f64,
    pub seed: u64,
    /// Optional mse level that ends training early when reached.
    pub target_mse: Option<f64>,
    pub line_search: LineSearchConfig,
    /// Solver settings for the once-per-epoch fits and the increment solve.
    pub solver_epoch: ProjectionConfig,
    /// Solver settings for the many per-candidate re-fits.
    pub solver_linesearch: ProjectionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_units: 10,
            max_epochs: 4000,
            min_mse_delta: 1e-12,
            init_scale: 1.0,
            seed: 0,
            target_mse: None,
            line_search: LineSearchConfig::default(),
            solver_epoch: ProjectionConfig::default(),
            solver_linesearch: ProjectionConfig::for_line_search(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::InvalidConfig("hidden_units must be >= 1".into()));
        }
        if !(self.min_mse_delta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min_mse_delta must be >= 0, got {}",
                self.min_mse_delta
            )));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "init_scale must be finite and >= 0, got {}",
                self.init_scale
            )));
        }
        if let Some(t) = self.target_mse {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "target_mse must be >= 0, got {t}"
                )));
            }
        }
        self.line_search.validate()?;
        self.solver_epoch.validate()?;
        self.solver_linesearch.validate()?;
        Ok(())
    }
}

/// One row of the training curve. Metrics describe the state AFTER the
/// epoch's update, in normalized-target units.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub max_abs_err: f64,
    /// Euclidean length of the adopted first-layer update (chosen fraction
    /// times the increment's norm); 0 on the initial record.
    pub step_len: f64,
    /// Residual norm of the epoch's output-layer solve.
    pub s_residual: f64,
    /// Set on the final record only.
    pub stop_reason: Option<StopReason>,
}

/// A finished run: final parameters (in normalized space), the curve, and
/// the normalization needed to use the parameters on raw data.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: MlpParams,
    pub records: Vec<EpochRecord>,
    pub norm: NormalizationSpec,
}

/// Error of a parameter set against a raw dataset, on both scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mse_normalized: f64,
    pub mse_raw: f64,
    pub max_abs_raw: f64,
}

/// Seeded first-layer initialization: W (row by row) then d, uniform on
/// ±init_scale/√n; the output layer starts at zero and is re-fit before it
/// is ever used.
pub fn init_params(n: usize, cfg: &TrainConfig) -> Result<MlpParams> {
    if n == 0 {
        return Err(Error::InvalidConfig("input dimension must be >= 1".into()));
    }
    cfg.validate()?;
    let h = cfg.hidden_units;
    let mut weights = DMatrix::zeros(h, n);
    let mut bias = DVector::zeros(h);
    if cfg.init_scale > 0.0 {
        let a = cfg.init_scale / (n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for i in 0..h {
            for j in 0..n {
                weights[(i, j)] = rng.gen_range(-a..=a);
            }
        }
        for i in 0..h {
            bias[i] = rng.gen_range(-a..=a);
        }
    }
    Ok(MlpParams {
        weights,
        bias,
        output_weights: DVector::zeros(h),
        output_bias: 0.0,
        activation: ActivationKind::Tanh,
    })
}

/// Replace the output layer with its least-squares fit at the current first
/// layer. Returns the re-fit parameters and the solve's residual norm.
pub fn fit_output_layer(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    solver_cfg: &ProjectionConfig,
) -> Result<(MlpParams, f64)> {
    let sys = build_output_system(params, inputs, targets)?;
    let warm = output_layer_vector(params);
    let rep = solve_projection(&sys, solver_cfg, Some(&warm))?;
    let h = params.hidden_units();
    let mut out = params.clone();
    out.output_weights = rep.x.rows(0, h).into_owned();
    out.output_bias = rep.x[h];
    Ok((out, rep.final_residual_norm))
}

/// One full epoch: increment solve, first-layer extraction, step search,
/// adoption. `params` must carry a current output-layer fit (true after
/// `fit_output_layer` and after every previous epoch, since candidates are
/// re-fit during the search). The returned record's `epoch` field is left
/// at 0 for the caller to assign.
pub fn train_epoch(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    cfg: &TrainConfig,
) -> Result<(MlpParams, EpochRecord)> {
    let sys = build_increment_system(params, inputs, targets)?;
    let rep = solve_projection(&sys, &cfg.solver_epoch, None)?;
    let h = params.hidden_units();
    let n = params.input_dim();
    let wr = sys
        .layout
        .range_of(BlockKind::DeltaWeights)
        .expect("increment system lays out first-layer weight columns");
    let dr = sys
        .layout
        .range_of(BlockKind::DeltaBias)
        .expect("increment system lays out first-layer bias columns");
    // The solution stores W increments unit-major: hidden unit i's input
    // weights occupy entries i·n .. (i+1)·n of the block.
    let delta_w = DMatrix::from_fn(h, n, |i, j| rep.x[wr.start + i * n + j]);
    let delta_d = DVector::from_fn(h, |i, _| rep.x[dr.start + i]);
    let dir_norm = (delta_w.norm_squared() + delta_d.norm_squared()).sqrt();

    if dir_norm == 0.0 {
        // A vanished increment cannot move the first layer; searching along
        // it would only churn through equivalent candidates. Refresh the
        // output layer once (what the zero-step candidate would do) and
        // stop.
        let (refit, s_residual) = fit_output_layer(params, inputs, targets, &cfg.solver_linesearch)?;
        let res = residuals(&refit, inputs, targets)?;
        let record = EpochRecord {
            epoch: 0,
            mse: res.mse,
            max_abs_err: res.max_abs,
            step_len: 0.0,
            s_residual,
            stop_reason: Some(StopReason::ZeroStep),
        };
        return Ok((refit, record));
    }

    let outcome = line_search(
        params,
        &delta_w,
        &delta_d,
        inputs,
        targets,
        &cfg.line_search,
        &cfg.solver_linesearch,
    )?;
    let new_params = outcome.best_params;
    let res = residuals(&new_params, inputs, targets)?;
    if !res.mse.is_finite() {
        return Err(Error::NonFinite("training error after epoch update".into()));
    }
    let record = EpochRecord {
        epoch: 0,
        mse: res.mse,
        max_abs_err: res.max_abs,
        step_len: outcome.best_step * dir_norm,
        s_residual: outcome.best_solve_residual,
        stop_reason: if outcome.zero_step_chosen {
            Some(StopReason::ZeroStep)
        } else {
            None
        },
    };
    Ok((new_params, record))
}

/// Run the epoch loop on already-normalized data from given initial
/// parameters. Record 0 describes the state after the initial output-layer
/// fit; exactly one record (the last) carries a stop reason.
pub fn train_loop(
    params0: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    cfg: &TrainConfig,
) -> Result<(MlpParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    let (mut params, s_residual) = fit_output_layer(params0, inputs, targets, &cfg.solver_epoch)?;
    let res = residuals(&params, inputs, targets)?;
    if !res.mse.is_finite() {
        return Err(Error::NonFinite("training error at initialization".into()));
    }
    let mut records = vec![EpochRecord {
        epoch: 0,
        mse: res.mse,
        max_abs_err: res.max_abs,
        step_len: 0.0,
        s_residual,
        stop_reason: None,
    }];
    if matches!(cfg.target_mse, Some(t) if res.mse <= t) {
        records[0].stop_reason = Some(StopReason::TargetReached);
        return Ok((params, records));
    }
    if cfg.max_epochs == 0 {
        records[0].stop_reason = Some(StopReason::MaxEpochs);
        return Ok((params, records));
    }

    let mut prev_mse = res.mse;
    for epoch in 1..=cfg.max_epochs {
        let (next, mut record) = train_epoch(&params, inputs, targets, cfg)?;
        params = next;
        record.epoch = epoch;
        let mut stop = record.stop_reason;
        if stop.is_none() {
            if matches!(cfg.target_mse, Some(t) if record.mse <= t) {
                stop = Some(StopReason::TargetReached);
            } else if cfg.min_mse_delta > 0.0 && prev_mse - record.mse < cfg.min_mse_delta {
                stop = Some(StopReason::MinDelta);
            } else if epoch == cfg.max_epochs {
                stop = Some(StopReason::MaxEpochs);
            }
        }
        record.stop_reason = stop;
        log::debug!(
            "epoch {epoch}: mse {:.6e}, step_len {:.3e}{}",
            record.mse,
            record.step_len,
            match stop {
                Some(r) => format!(", stop: {r}"),
                None => String::new(),
            }
        );
        prev_mse = record.mse;
        records.push(record);
        if stop.is_some() {
            break;
        }
    }
    Ok((params, records))
}

/// Full training entry point: normalize the dataset, initialize from the
/// seed, run the loop.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let (xn, un, norm) = normalize(ds)?;
    let params0 = init_params(ds.input_dim(), cfg)?;
    let (params, records) = train_loop(&params0, &xn, &un, cfg)?;
    Ok(TrainResult {
        params,
        records,
        norm,
    })
}

/// Measure trained parameters against a raw dataset: forward pass on
/// normalized inputs, errors reported in normalized units and (after
/// mapping predictions back) in problem units.
pub fn evaluate(params: &MlpParams, ds: &Dataset, norm: &NormalizationSpec) -> Result<EvalMetrics> {
    let xn = norm.normalize_inputs(&ds.inputs)?;
    let un = norm.normalize_targets(&ds.targets);
    let normalized = residuals(params, &xn, &un)?;
    let pred_raw = norm.denormalize_targets(&params.predict_all(&xn));
    let raw = summarize(pred_raw - &ds.targets);
    Ok(EvalMetrics {
        mse_normalized: normalized.mse,
        mse_raw: raw.mse,
        max_abs_raw: raw.max_abs,
    })
}

/// Render the curve as CSV: `epoch,mse,max_abs_err,step_len,s_residual,
/// stop_reason`, the stop reason filled on the final row only.
pub fn to_curve_string(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mse,max_abs_err,step_len,s_residual,stop_reason\n");
    for r in records {
        let stop = r.stop_reason.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            fmt_exact(r.mse),
            fmt_exact(r.max_abs_err),
            fmt_exact(r.step_len),
            fmt_exact(r.s_residual),
            stop
        ));
    }
    out
}

pub fn write_curve_csv(records: &[EpochRecord], path: &Path) -> Result<()> {
    crate::dataset::atomic_write(path, &to_curve_string(records))
}
