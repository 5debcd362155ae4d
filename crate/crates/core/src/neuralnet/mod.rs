//! Two-hidden-layer perceptron with ReLU hidden units, three independent
//! sigmoid outputs (positive, negative, neutral), inverted dropout, and Adam.
//!
//! All arithmetic is generic over [`Scalar`](crate::num::Scalar). Accumulation
//! order is fixed, so training is bit-reproducible for a given seed.

mod adam;
mod model;
mod pass;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use model::{init_params, Matrix, MlpParams};
pub use pass::{
    backward, batch_gradient, bce_loss, forward, forward_infer, one_hot, Activations,
    DropoutMasks,
};
pub use train::{train, TrainReport};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input dimension mismatch: network expects {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Training configuration. Defaults are the reference sentiment-model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub batch_size: usize,
    /// Full passes over the training set.
    pub epochs: usize,
    /// Units in each of the two hidden layers.
    pub hidden_units: usize,
    /// Drop probability applied to both hidden layers during training.
    pub dropout_rate: f64,
    pub initializer: Initializer,
    /// Weights start i.i.d. uniform on `[-init_bound, init_bound]`.
    pub init_bound: f64,
    pub optimizer: Optimizer,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 28,
            epochs: 100,
            hidden_units: 300,
            dropout_rate: 0.75,
            initializer: Initializer::Uniform,
            init_bound: 0.05,
            optimizer: Optimizer::Adam,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidHyperparams(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        // zero is allowed so a grid can include a no-learning control cell
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(self.init_bound >= 0.0 && self.init_bound.is_finite()) {
            return bad(format!("init_bound {} must be finite and >= 0", self.init_bound));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be > 0".into());
        }
        if self.hidden_activation != Activation::Relu || self.output_activation != Activation::Sigmoid {
            return bad("only relu hidden and sigmoid output activations are implemented".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let h = Hyperparams::default();
        assert_eq!(h.batch_size, 28);
        assert_eq!(h.epochs, 100);
        assert_eq!(h.hidden_units, 300);
        assert_eq!(h.dropout_rate, 0.75);
        assert_eq!(h.initializer, Initializer::Uniform);
        assert_eq!(h.optimizer, Optimizer::Adam);
        assert_eq!(h.hidden_activation, Activation::Relu);
        assert_eq!(h.output_activation, Activation::Sigmoid);
        assert!(h.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let base = Hyperparams::default();
        for h in [
            Hyperparams { batch_size: 0, ..base.clone() },
            Hyperparams { epochs: 0, ..base.clone() },
            Hyperparams { dropout_rate: 1.0, ..base.clone() },
            Hyperparams { learning_rate: -1e-3, ..base.clone() },
            Hyperparams { output_activation: Activation::Relu, ..base.clone() },
        ] {
            assert!(h.validate().is_err(), "{h:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let h: Hyperparams = serde_json::from_str(r#"{"hidden_units": 16, "epochs": 3}"#).unwrap();
        assert_eq!(h.hidden_units, 16);
        assert_eq!(h.batch_size, 28);
    }
}
