use std::path::PathBuf;

use clap::{Args, ValueEnum};
use koopman_uq::dataio::{generate, save_dataset, GenerateOptions, InitDistribution, SystemKind, SystemSpec};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SystemName {
    DampedOscillator,
    Linear,
    VanDerPol,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "damped_oscillator")]
    pub system: SystemName,
    /// Natural frequency of the damped oscillator.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub omega: f64,
    /// Damping ratio of the damped oscillator.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub damping: f64,
    /// Van der Pol nonlinearity.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Matrix of the linear system, rows separated by `;`, entries by `,`.
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub n_series: usize,
    /// Transitions per series (each series has `steps + 1` states).
    #[arg(long, default_value_t = 60)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true, value_parser = non_negative)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial states are uniform on `[init_low, init_high]` per channel.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub init_low: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub init_high: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite value ≥ 0, got {s}"))
    }
}

fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("--matrix: `{v}`: {e}"))))
                .collect()
        })
        .collect()
}

impl GenDataArgs {
    pub fn spec(&self) -> Result<SystemSpec, CliError> {
        let kind = match self.system {
            SystemName::DampedOscillator => SystemKind::DampedOscillator { omega: self.omega, damping: self.damping },
            SystemName::VanDerPol => SystemKind::VanDerPol { mu: self.mu },
            SystemName::Linear => {
                let text = self.matrix.as_deref().ok_or_else(|| CliError::Usage("--matrix is required for --system linear".into()))?;
                SystemKind::Linear { matrix: parse_matrix(text)? }
            }
        };
        Ok(SystemSpec { kind, noise_std: self.noise_std, seed: self.seed })
    }

    pub fn options(&self) -> GenerateOptions {
        GenerateOptions {
            series: self.n_series,
            steps: self.steps,
            dt: self.dt,
            init: InitDistribution { low: self.init_low, high: self.init_high },
        }
    }
}

pub fn run(args: &GenDataArgs) -> Result<(), CliError> {
    let spec = args.spec()?;
    let ds = generate(&spec, &args.options())?;
    save_dataset(&ds, &args.out)?;
    println!(
        "{}: N = {}, T = {}, n = {}, dt = {}",
        args.out.display(),
        ds.series(),
        ds.steps(),
        ds.channels(),
        ds.dt
    );
    Ok(())
}
