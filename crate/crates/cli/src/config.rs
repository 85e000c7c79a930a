use std::path::{Path, PathBuf};

use clap::Args;
use koopman_uq::{Activation, Regime, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

/// A training run: data, model, objective and optimizer settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Forecast horizon used by evaluation; `None` uses the full series.
    pub horizon: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by `train` and `sweep`; each one overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset (KTS1).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub regime: Option<Regime>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Ensemble size M.
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Transitions per training window.
    #[arg(long)]
    pub train_horizon: Option<usize>,
    #[arg(long)]
    pub random_windows: bool,
    /// Accept λ > 1 in the variance regime.
    #[arg(long)]
    pub allow_divergent: bool,
    /// Evaluation horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
}

impl RunArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let t = &mut c.train;
        if let Some(v) = &self.data {
            c.dataset = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output = Some(v.clone());
        }
        if let Some(v) = self.regime {
            t.regime = v;
        }
        if let Some(v) = self.lambda {
            t.lambda = v;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
        }
        if let Some(v) = self.members {
            t.ensemble_size = v;
        }
        if let Some(v) = self.latent_dim {
            t.latent_dim = v;
        }
        if let Some(v) = &self.hidden {
            t.hidden = v.clone();
        }
        if let Some(v) = self.activation {
            t.activation = v;
        }
        if let Some(v) = self.lr {
            t.adam.lr = v;
        }
        if let Some(v) = self.steps {
            t.steps = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.train_horizon {
            t.train_horizon = Some(v);
        }
        t.random_windows |= self.random_windows;
        t.allow_divergent |= self.allow_divergent;
        if let Some(v) = self.horizon {
            c.horizon = Some(v);
        }
        Ok(c)
    }
}

pub fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::Usage(format!("missing {flag} (flag or config file)")))
}
