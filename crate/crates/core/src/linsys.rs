//! Assembly of the two least-squares systems that drive training, plus
//! residual bookkeeping.
//!
//! With hidden features h(x) = σ(W·x + d):
//!
//! - the **output system** fits the output layer: rows `[h(xᵢ)ᵀ, 1]`,
//!   unknowns `[c, b]`, right-hand side the targets;
//! - the **increment system** is the first-order expansion of the whole
//!   network around the current parameters: one column per parameter
//!   increment, right-hand side the current residuals. The trainer solves
//!   it, then keeps only the first-layer increments (the output layer is
//!   re-fit exactly by the line search, which is cheaper and tighter than
//!   trusting its linearized increment).
//!
//! Assembly works matrix-at-a-time (shared pre-activation matrix, column
//! slices) rather than example-by-example; row `i` of every system depends
//! only on example `i`.

use crate::error::{Error, Result};
use crate::mlp::{activation_deriv_from_output, predict_from_features, MlpParams};
use nalgebra::{DMatrix, DVector};
use std::ops::Range;

/// What a contiguous block of system columns addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Hidden-to-output coefficients (output system).
    OutputWeights,
    /// Output intercept (output system).
    Intercept,
    /// Increment of the hidden-to-output coefficients.
    DeltaOutputWeights,
    /// Increment of the output intercept.
    DeltaIntercept,
    /// Increments of the first-layer weights, unit-major (all inputs of
    /// hidden unit 0, then unit 1, ...).
    DeltaWeights,
    /// Increments of the first-layer bias.
    DeltaBias,
    /// Columns with no parameter-block meaning (externally supplied
    /// systems).
    Unstructured,
}

/// Ordered partition of a system's columns into parameter blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    blocks: Vec<(BlockKind, usize)>,
}

impl ColumnLayout {
    fn new(blocks: Vec<(BlockKind, usize)>) -> Self {
        ColumnLayout { blocks }
    }

    pub fn blocks(&self) -> &[(BlockKind, usize)] {
        &self.blocks
    }

    pub fn total_cols(&self) -> usize {
        self.blocks.iter().map(|(_, w)| w).sum()
    }

    /// Column range occupied by `kind`, if present.
    pub fn range_of(&self, kind: BlockKind) -> Option<Range<usize>> {
        let mut start = 0;
        for &(k, w) in &self.blocks {
            if k == kind {
                return Some(start..start + w);
            }
            start += w;
        }
        None
    }
}

/// A dense least-squares problem `min ‖matrix·x − rhs‖₂` with a layout
/// describing what each solution entry means.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub layout: ColumnLayout,
}

impl LinearSystem {
    /// Wraps an externally supplied matrix and right-hand side whose
    /// columns carry no parameter-block meaning.
    pub fn unstructured(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if rhs.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows but rhs has {} entries",
                matrix.nrows(),
                rhs.len()
            )));
        }
        let layout = ColumnLayout::new(vec![(BlockKind::Unstructured, matrix.ncols())]);
        Ok(LinearSystem {
            matrix,
            rhs,
            layout,
        })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

fn check_training_pair(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<()> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} input columns, network expects {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    if inputs.nrows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} targets",
            inputs.nrows(),
            targets.len()
        )));
    }
    if inputs.nrows() == 0 {
        return Err(Error::DegenerateData("no data rows".into()));
    }
    Ok(())
}

/// Build the output-layer system: N×(H+1) matrix `[σ(W·xᵢ+d)ᵀ, 1]`,
/// unknowns `[output_weights, output_bias]`, rhs = targets.
///
/// Underdetermined fits (N < H+1) are legal but worth flagging, so they log
/// a warning instead of failing.
pub fn build_output_system(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<LinearSystem> {
    check_training_pair(params, inputs, targets)?;
    let n_rows = inputs.nrows();
    let hidden = params.hidden_units();
    if n_rows < hidden + 1 {
        log::warn!(
            "output-layer fit is underdetermined: {n_rows} examples for {} unknowns",
            hidden + 1
        );
    }
    let features = params.features_all(inputs);
    let mut matrix = DMatrix::zeros(n_rows, hidden + 1);
    matrix.view_mut((0, 0), (n_rows, hidden)).copy_from(&features);
    matrix.column_mut(hidden).fill(1.0);
    Ok(LinearSystem {
        matrix,
        rhs: targets.clone(),
        layout: ColumnLayout::new(vec![(BlockKind::OutputWeights, hidden), (BlockKind::Intercept, 1)]),
    })
}

/// Build the first-order increment system around the current parameters.
///
/// Columns, in order: increments of the output weights (the feature values
/// σ(yᵢⱼ)), of the intercept (ones), of each first-layer weight
/// (`cⱼ·σ'(yᵢⱼ)·xᵢₖ`, unit-major), and of each first-layer bias
/// (`cⱼ·σ'(yᵢⱼ)`). The rhs is exactly `residuals(params, inputs, targets)`.
pub fn build_increment_system(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<LinearSystem> {
    check_training_pair(params, inputs, targets)?;
    let n_rows = inputs.nrows();
    let hidden = params.hidden_units();
    let n_in = params.input_dim();
    let n_cols = hidden + 1 + hidden * n_in + hidden;

    let features = params.features_all(inputs);
    // Scaled activation slopes: gᵢⱼ = cⱼ·σ'(yᵢⱼ), from the feature values.
    let mut slopes = features.map(activation_deriv_from_output);
    for (j, mut col) in slopes.column_iter_mut().enumerate() {
        col *= params.output_weights[j];
    }

    let mut matrix = DMatrix::zeros(n_rows, n_cols);
    matrix
        .view_mut((0, 0), (n_rows, hidden))
        .copy_from(&features);
    matrix.column_mut(hidden).fill(1.0);
    for j in 0..hidden {
        let g = slopes.column(j);
        for k in 0..n_in {
            let xk = inputs.column(k);
            let mut col = matrix.column_mut(hidden + 1 + j * n_in + k);
            for i in 0..n_rows {
                col[i] = g[i] * xk[i];
            }
        }
    }
    matrix
        .view_mut((0, hidden + 1 + hidden * n_in), (n_rows, hidden))
        .copy_from(&slopes);

    // rhs: same arithmetic path as `residuals` (shared feature matrix).
    let predictions = predict_from_features(&features, &params.output_weights, params.output_bias);
    let rhs = targets - predictions;

    Ok(LinearSystem {
        matrix,
        rhs,
        layout: ColumnLayout::new(vec![
            (BlockKind::DeltaOutputWeights, hidden),
            (BlockKind::DeltaIntercept, 1),
            (BlockKind::DeltaWeights, hidden * n_in),
            (BlockKind::DeltaBias, hidden),
        ]),
    })
}

/// Residual vector `targets − predictions` with its summary statistics.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub values: DVector<f64>,
    /// Mean of squared residuals.
    pub mse: f64,
    /// Largest absolute residual.
    pub max_abs: f64,
}

/// Compute residuals and their summary for the given parameters.
pub fn residuals(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<Residuals> {
    check_training_pair(params, inputs, targets)?;
    let predictions = params.predict_all(inputs);
    let values = targets - predictions;
    Ok(summarize(values))
}

/// Summarize an already-computed residual vector.
pub fn summarize(values: DVector<f64>) -> Residuals {
    let mut sum_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for &v in values.iter() {
        sum_sq += v * v;
        max_abs = max_abs.max(v.abs());
    }
    let mse = sum_sq / values.len() as f64;
    Residuals {
        values,
        mse,
        max_abs,
    }
}
