//! Step-length selection along the first-layer increment direction.
//!
//! Each epoch produces a direction (δW, δd). The step along it is chosen by
//! brute sampling: a logarithmic grid of fractions of the full increment
//! (dense near zero, where the interesting structure usually is), an
//! explicit zero-step candidate, and interval-halving refinement between
//! zero and the smallest sampled fraction when the minimum lands there.
//! Every candidate re-fits the output layer before being measured, so the
//! comparison is always between fully adjusted networks; the zero-step
//! candidate makes "no improvement possible" detectable, which is what the
//! trainer's stop-on-zero-step rule and its monotone error curve rest on.

use crate::error::{Error, Result};
use crate::linsys::{build_output_system, residuals};
use crate::mlp::MlpParams;
use crate::solver::{solve_projection, ProjectionConfig};
use nalgebra::{DMatrix, DVector};

/// Which training-set error a candidate step is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCriterion {
    MeanSquaredError,
    /// Largest absolute error; exposed for experimentation, not the default.
    MaxAbsError,
}

/// Configuration of the step search.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    /// Number of sampled step fractions.
    pub n_samples: usize,
    /// Smallest sampled fraction of the full increment, in (0, 1).
    pub t_min_fraction: f64,
    /// Interval-halving iterations when the minimum falls on the smallest
    /// sampled fraction.
    pub bisection_iters: usize,
    pub criterion: StepCriterion,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            n_samples: 1000,
            t_min_fraction: 1e-6,
            bisection_iters: 20,
            criterion: StepCriterion::MeanSquaredError,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
        }
        if !(self.t_min_fraction > 0.0 && self.t_min_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "t_min_fraction must lie in (0, 1), got {}",
                self.t_min_fraction
            )));
        }
        if self.bisection_iters == 0 {
            return Err(Error::InvalidConfig("bisection_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one step search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    /// Chosen fraction of the full increment, 0 when no step improves.
    pub best_step: f64,
    /// Parameters at the chosen step, output layer re-fitted.
    pub best_params: MlpParams,
    /// Criterion value of `best_params` on the training set.
    pub best_metric: f64,
    pub zero_step_chosen: bool,
    /// Residual norm of the output-layer re-solve at the chosen step.
    pub best_solve_residual: f64,
    /// Candidates evaluated: n_samples + 1, plus bisection_iters when
    /// refinement triggered.
    pub evaluations: usize,
    /// Whether interval-halving refinement ran.
    pub refined: bool,
}

/// The sampled step fractions: `n_samples` values geometrically spaced from
/// `t_min_fraction` up to 1.0 inclusive, strictly increasing. A single
/// sample degenerates to the full step.
pub fn sample_steps(cfg: &LineSearchConfig) -> Vec<f64> {
    let n = cfg.n_samples;
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| {
            let e = (n - 1 - k) as f64 / (n - 1) as f64;
            cfg.t_min_fraction.powf(e)
        })
        .collect()
}

/// One evaluated candidate, with the re-fit solution kept for warm-starting
/// the next evaluation.
struct Candidate {
    params: MlpParams,
    metric: f64,
    solve_residual: f64,
    refit: DVector<f64>,
}

/// A candidate must undercut the incumbent by this relative margin to
/// replace it. Warm-started re-solves of near-identical candidates drift by
/// rounding-level amounts; counting such drift as improvement would let an
/// arbitrary positive step beat the zero step on noise and mask the
/// no-improvement stopping signal. Anything within the margin is a tie,
/// and ties keep the incumbent — the earlier-evaluated, smaller step.
const IMPROVEMENT_MARGIN: f64 = 1e-12;

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent * (1.0 - IMPROVEMENT_MARGIN)
}

#[allow(clippy::too_many_arguments)]
fn eval_step(
    params0: &MlpParams,
    delta_w: &DMatrix<f64>,
    delta_d: &DVector<f64>,
    step: f64,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    criterion: StepCriterion,
    solver_cfg: &ProjectionConfig,
    warm: &DVector<f64>,
) -> Result<Candidate> {
    let mut params = params0.clone();
    if step != 0.0 {
        params.weights += delta_w * step;
        params.bias += delta_d * step;
    }
    if !params.weights.iter().all(|v| v.is_finite()) || !params.bias.iter().all(|v| v.is_finite())
    {
        // An unusable point on the ray is simply never the best one.
        return Ok(Candidate {
            params: params0.clone(),
            metric: f64::INFINITY,
            solve_residual: f64::INFINITY,
            refit: warm.clone(),
        });
    }
    let sys = build_output_system(&params, inputs, targets)?;
    let rep = solve_projection(&sys, solver_cfg, Some(warm))?;
    let hidden = params.hidden_units();
    params.output_weights = rep.x.rows(0, hidden).into_owned();
    params.output_bias = rep.x[hidden];
    let metric = match criterion {
        // The output system's rows are exactly the per-example errors, so
        // the solve's residual norm already measures the candidate; no
        // second forward pass needed.
        StepCriterion::MeanSquaredError => {
            rep.final_residual_norm * rep.final_residual_norm / targets.len() as f64
        }
        StepCriterion::MaxAbsError => residuals(&params, inputs, targets)?.max_abs,
    };
    Ok(Candidate {
        params,
        metric: if metric.is_finite() {
            metric
        } else {
            f64::INFINITY
        },
        solve_residual: rep.final_residual_norm,
        refit: rep.x,
    })
}

/// Evaluate a single step fraction: form `W₀ + step·δW`, `d₀ + step·δd`,
/// re-fit the output layer (warm-started from `params0`'s output layer),
/// and measure the criterion over the training set. A step that produces
/// non-finite parameters yields metric +∞ rather than an error.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_candidate(
    params0: &MlpParams,
    delta_w: &DMatrix<f64>,
    delta_d: &DVector<f64>,
    step: f64,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    criterion: StepCriterion,
    solver_cfg: &ProjectionConfig,
) -> Result<(MlpParams, f64)> {
    check_direction(params0, delta_w, delta_d)?;
    if !(step >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step must be >= 0, got {step}"
        )));
    }
    let warm = output_layer_vector(params0);
    let cand = eval_step(
        params0, delta_w, delta_d, step, inputs, targets, criterion, solver_cfg, &warm,
    )?;
    Ok((cand.params, cand.metric))
}

fn check_direction(
    params0: &MlpParams,
    delta_w: &DMatrix<f64>,
    delta_d: &DVector<f64>,
) -> Result<()> {
    if delta_w.shape() != params0.weights.shape() || delta_d.len() != params0.bias.len() {
        return Err(Error::DimensionMismatch(format!(
            "direction shape ({}x{}, {}) does not match parameters ({}x{}, {})",
            delta_w.nrows(),
            delta_w.ncols(),
            delta_d.len(),
            params0.weights.nrows(),
            params0.weights.ncols(),
            params0.bias.len()
        )));
    }
    Ok(())
}

pub(crate) fn output_layer_vector(params: &MlpParams) -> DVector<f64> {
    let hidden = params.hidden_units();
    let mut v = DVector::zeros(hidden + 1);
    v.rows_mut(0, hidden).copy_from(&params.output_weights);
    v[hidden] = params.output_bias;
    v
}

/// Search the step fractions for the best candidate.
///
/// Step 0 is always evaluated first, so the outcome's metric can never
/// exceed the starting one. Sampled fractions are evaluated in ascending
/// order, each output-layer re-solve warm-started from the nearest smaller
/// evaluated step. If the minimum lands on the smallest positive sample,
/// interval halving refines between zero and that sample. A candidate
/// replaces the incumbent only when it improves by more than a
/// rounding-level relative margin, so ties — exact or within solver
/// resolution — keep the earlier, smaller step; `zero_step_chosen` reports
/// whether no positive step genuinely improved on the start.
pub fn line_search(
    params0: &MlpParams,
    delta_w: &DMatrix<f64>,
    delta_d: &DVector<f64>,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    cfg: &LineSearchConfig,
    solver_cfg: &ProjectionConfig,
) -> Result<LineSearchOutcome> {
    cfg.validate()?;
    check_direction(params0, delta_w, delta_d)?;

    let warm0 = output_layer_vector(params0);
    let zero = eval_step(
        params0,
        delta_w,
        delta_d,
        0.0,
        inputs,
        targets,
        cfg.criterion,
        solver_cfg,
        &warm0,
    )?;
    let mut evaluations = 1usize;
    let mut best_step = 0.0;
    let mut best = zero;
    let zero_metric = best.metric;
    let zero_refit = best.refit.clone();

    let steps = sample_steps(cfg);
    let mut warm = zero_refit.clone();
    for &t in &steps {
        let cand = eval_step(
            params0,
            delta_w,
            delta_d,
            t,
            inputs,
            targets,
            cfg.criterion,
            solver_cfg,
            &warm,
        )?;
        evaluations += 1;
        warm = cand.refit.clone();
        if improves(cand.metric, best.metric) {
            best = cand;
            best_step = t;
        }
    }

    // Refinement between zero and the smallest sampled fraction, when the
    // minimum sits right at that edge.
    let refined = best_step == steps[0];
    if refined {
        let mut a = 0.0f64;
        let mut fa = zero_metric;
        let mut warm_a = zero_refit;
        let mut b = steps[0];
        let mut fb = best.metric;
        for _ in 0..cfg.bisection_iters {
            let m = 0.5 * (a + b);
            let cand = eval_step(
                params0,
                delta_w,
                delta_d,
                m,
                inputs,
                targets,
                cfg.criterion,
                solver_cfg,
                &warm_a,
            )?;
            evaluations += 1;
            if improves(cand.metric, best.metric) {
                best_step = m;
                best = Candidate {
                    refit: cand.refit.clone(),
                    ..cand
                };
            }
            if fa <= fb {
                b = m;
                fb = cand.metric;
            } else {
                a = m;
                fa = cand.metric;
                warm_a = cand.refit;
            }
        }
    }

    Ok(LineSearchOutcome {
        best_step,
        zero_step_chosen: best_step == 0.0,
        best_metric: best.metric,
        best_solve_residual: best.solve_residual,
        best_params: best.params,
        evaluations,
        refined,
    })
}
