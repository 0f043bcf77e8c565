//! Single-hidden-layer network parameters and activation primitives.
//!
//! The model is `u = c · σ(W·x + d) + b` with one scalar output: `W` holds
//! one row per hidden unit, `d` is the per-unit bias, `c` the
//! hidden-to-output coefficients, and `b` the output intercept. The hidden
//! activation is the hyperbolic tangent, i.e. a sigmoid that is symmetric
//! about the origin — which is why inputs and targets are normalized to
//! [-1, 1] before training (see [`crate::dataset`]).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Hidden-unit activation choice.
///
/// Only the symmetric sigmoid (tanh) is implemented; the enum exists so the
/// model file records which activation the weights were trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Tanh,
}

impl ActivationKind {
    /// Stable tag used by the model file.
    pub fn tag(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(ActivationKind::Tanh),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation '{other}' (expected 'tanh')"
            ))),
        }
    }
}

/// Hidden activation σ(z) = tanh(z). Odd, strictly increasing, range (-1, 1).
#[inline]
pub fn activation(z: f64) -> f64 {
    z.tanh()
}

/// Derivative σ'(z) = 1 − tanh²(z), computed through the same `tanh` call as
/// [`activation`] so σ'(z) and 1 − σ(z)² agree bit for bit.
#[inline]
pub fn activation_deriv(z: f64) -> f64 {
    let s = z.tanh();
    1.0 - s * s
}

/// σ' expressed in terms of the activation *output* h = σ(z): 1 − h².
///
/// System assembly already has σ(z) in hand; this avoids a second `tanh`
/// while producing exactly the same value as [`activation_deriv`].
#[inline]
pub fn activation_deriv_from_output(h: f64) -> f64 {
    1.0 - h * h
}

/// Parameters of a single-hidden-layer regression network.
///
/// Shapes: `weights` is H×n (one row per hidden unit), `bias` and
/// `output_weights` have length H. All entries are finite; constructors and
/// the model-file loader enforce this.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// First-layer weights, H×n.
    pub weights: DMatrix<f64>,
    /// First-layer (per-hidden-unit) bias, length H.
    pub bias: DVector<f64>,
    /// Hidden-to-output coefficients, length H.
    pub output_weights: DVector<f64>,
    /// Output intercept.
    pub output_bias: f64,
    /// Hidden activation applied to every unit.
    pub activation: ActivationKind,
}

impl MlpParams {
    /// Validating constructor. Rejects inconsistent shapes, empty layers,
    /// and non-finite entries.
    pub fn new(
        weights: DMatrix<f64>,
        bias: DVector<f64>,
        output_weights: DVector<f64>,
        output_bias: f64,
    ) -> Result<Self> {
        let hidden = weights.nrows();
        if hidden == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "network needs at least one hidden unit and one input".into(),
            ));
        }
        if bias.len() != hidden || output_weights.len() != hidden {
            return Err(Error::DimensionMismatch(format!(
                "weights have {hidden} hidden units but bias has {} and output_weights {}",
                bias.len(),
                output_weights.len()
            )));
        }
        let params = MlpParams {
            weights,
            bias,
            output_weights,
            output_bias,
            activation: ActivationKind::Tanh,
        };
        params.check_finite()?;
        Ok(params)
    }

    /// All-zero network of the given shape (useful as a starting point; the
    /// trainer replaces the first layer with random draws immediately).
    pub fn zeros(hidden: usize, inputs: usize) -> Result<Self> {
        MlpParams::new(
            DMatrix::zeros(hidden, inputs),
            DVector::zeros(hidden),
            DVector::zeros(hidden),
            0.0,
        )
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.weights.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.output_weights.iter().all(|v| v.is_finite())
            && self.output_bias.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("network parameters".into()))
        }
    }

    /// Hidden-layer output σ(W·x + d) for one input.
    ///
    /// Contract: `x.len()` must equal the input dimension (asserted).
    pub fn feature_map(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(
            x.len(),
            self.input_dim(),
            "feature_map: input has {} entries, network expects {}",
            x.len(),
            self.input_dim()
        );
        let mut y = &self.weights * x + &self.bias;
        y.apply(|v| *v = activation(*v));
        y
    }

    /// Scalar prediction for one input.
    pub fn forward(&self, x: &DVector<f64>) -> f64 {
        let h = self.feature_map(x);
        self.output_weights.dot(&h) + self.output_bias
    }

    /// Pre-activations W·xᵢ + d for every row of `inputs` (N×n), as an N×H
    /// matrix. This is the shared first stage of every batched operation, so
    /// assembly, prediction, and candidate evaluation all see identical
    /// floating-point values.
    pub fn pre_activations(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(
            inputs.ncols(),
            self.input_dim(),
            "pre_activations: data has {} columns, network expects {}",
            inputs.ncols(),
            self.input_dim()
        );
        let mut y = inputs * self.weights.transpose();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[j]);
        }
        y
    }

    /// Hidden-layer outputs for every row of `inputs` (N×H).
    pub fn features_all(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.pre_activations(inputs);
        y.apply(|v| *v = activation(*v));
        y
    }

    /// Predictions for every row of `inputs`.
    pub fn predict_all(&self, inputs: &DMatrix<f64>) -> DVector<f64> {
        let h = self.features_all(inputs);
        predict_from_features(&h, &self.output_weights, self.output_bias)
    }
}

/// Predictions given already-computed hidden features (N×H): `h·c + b`.
///
/// Split out so callers that assemble systems from the same feature matrix
/// get bit-identical predictions.
pub fn predict_from_features(
    features: &DMatrix<f64>,
    output_weights: &DVector<f64>,
    output_bias: f64,
) -> DVector<f64> {
    let mut out = features * output_weights;
    out.add_scalar_mut(output_bias);
    out
}
