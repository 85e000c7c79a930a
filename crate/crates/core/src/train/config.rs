use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::diffcore::{Activation, AdamConfig};
use crate::koopman::Architecture;
use crate::losses::{Objective, Regime};

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Latent dimension `d`.
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Ensemble size `M`.
    pub ensemble_size: usize,
    pub regime: Regime,
    pub lambda: f64,
    pub alpha: f64,
    pub allow_divergent: bool,
    pub adam: AdamConfig,
    /// Optimizer steps.
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Transitions per training window; `None` uses every step.
    pub train_horizon: Option<usize>,
    /// Draw each window at a random offset instead of anchoring it at `t = 0`.
    pub random_windows: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            ensemble_size: 8,
            regime: Regime::Independent,
            lambda: 0.0,
            alpha: 0.01,
            allow_divergent: false,
            adam: AdamConfig::default(),
            steps: 5000,
            batch_size: 32,
            seed: 0,
            train_horizon: None,
            random_windows: false,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        Objective { regime: self.regime, alpha: self.alpha, lambda: self.lambda, allow_divergent: self.allow_divergent }
    }

    pub fn architecture(&self, n: usize) -> Architecture {
        Architecture { n, d: self.latent_dim, hidden: self.hidden.clone(), activation: self.activation }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.objective().validate()?;
        self.adam.validate()?;
        if self.ensemble_size == 0 {
            return Err(TrainError::Config("ensemble_size must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.train_horizon == Some(0) {
            return Err(TrainError::Config("train_horizon must be at least 1".into()));
        }
        self.architecture(1).validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn divergent_lambda_needs_override() {
        let mut c = TrainConfig { regime: Regime::Variance, lambda: 1.2, ..TrainConfig::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("the training procedure will diverge"));
        c.allow_divergent = true;
        c.validate().unwrap();
    }

    #[test]
    fn rejects_empty_ensemble_and_zero_steps() {
        assert!(TrainConfig { ensemble_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { steps: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { latent_dim: 0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"regime": "variance", "lambda": 0.5}"#).unwrap();
        assert_eq!(c.regime, Regime::Variance);
        assert_eq!(c.ensemble_size, 8);
    }
}
