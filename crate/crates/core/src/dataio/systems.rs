use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesDataset};

/// RK4 substeps per sampling interval for systems without a closed form.
const RK4_SUBSTEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    /// `ẋ = A·x`, integrated exactly through `exp(A·t)`.
    Linear { matrix: Vec<Vec<f64>> },
    /// `ẍ + 2ζ·ẋ + ω²·x = 0` with state `(x, ẋ)`.
    DampedOscillator { omega: f64, damping: f64 },
    /// `ẍ − μ·(1 − x²)·ẋ + x = 0` with state `(x, ẋ)`.
    VanDerPol { mu: f64 },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Linear { .. } => "linear",
            SystemKind::DampedOscillator { .. } => "damped_oscillator",
            SystemKind::VanDerPol { .. } => "van_der_pol",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SystemKind::Linear { matrix } => matrix.len(),
            _ => 2,
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        match self {
            SystemKind::Linear { matrix } => (0..matrix.len()).map(|i| format!("x{i}")).collect(),
            _ => vec!["x".into(), "v".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(flatten)]
    pub kind: SystemKind,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self { kind: SystemKind::DampedOscillator { omega: 1.0, damping: 0.1 }, noise_std: 0.01, seed: 0 }
    }
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return bad(format!("noise_std must be a finite value ≥ 0, got {}", self.noise_std));
        }
        match &self.kind {
            SystemKind::Linear { matrix } => {
                let n = matrix.len();
                if n == 0 {
                    return bad("linear system needs a non-empty matrix".into());
                }
                if let Some(r) = matrix.iter().position(|row| row.len() != n) {
                    return bad(format!("linear matrix must be square: row {r} has {} entries, expected {n}", matrix[r].len()));
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("linear matrix entries must be finite".into());
                }
            }
            SystemKind::DampedOscillator { omega, damping } => {
                if !omega.is_finite() || *omega <= 0.0 {
                    return bad(format!("omega must be positive, got {omega}"));
                }
                if !damping.is_finite() || *damping < 0.0 {
                    return bad(format!("damping must be ≥ 0, got {damping}"));
                }
            }
            SystemKind::VanDerPol { mu } => {
                if !mu.is_finite() || *mu < 0.0 {
                    return bad(format!("mu must be ≥ 0, got {mu}"));
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let params = match &self.kind {
            SystemKind::Linear { matrix } => format!("matrix={matrix:?}"),
            SystemKind::DampedOscillator { omega, damping } => format!("omega={omega} damping={damping}"),
            SystemKind::VanDerPol { mu } => format!("mu={mu}"),
        };
        format!("{} {params} noise_std={} seed={}", self.kind.name(), self.noise_std, self.seed)
    }
}

/// Initial states drawn independently per channel from `U[low, high]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub low: f64,
    pub high: f64,
}

impl Default for InitDistribution {
    fn default() -> Self {
        Self { low: -1.0, high: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub series: usize,
    /// `T`: each series holds `T + 1` states.
    pub steps: usize,
    pub dt: f64,
    pub init: InitDistribution,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { series: 200, steps: 60, dt: 0.1, init: InitDistribution::default() }
    }
}

/// Samples trajectories of `spec` and adds i.i.d. Gaussian observation noise.
///
/// Initial states and noise come from separate streams of the seed, so the
/// noiseless trajectories do not depend on `noise_std`.
pub fn generate(spec: &SystemSpec, opts: &GenerateOptions) -> Result<TimeSeriesDataset, DataError> {
    spec.validate()?;
    if opts.series == 0 || opts.steps == 0 {
        return Err(DataError::InvalidSpec("series count and steps must be at least 1".into()));
    }
    if !opts.dt.is_finite() || opts.dt <= 0.0 {
        return Err(DataError::InvalidSpec(format!("dt must be positive, got {}", opts.dt)));
    }
    let InitDistribution { low, high } = opts.init;
    if !(low.is_finite() && high.is_finite() && low <= high) {
        return Err(DataError::InvalidSpec(format!("init range [{low}, {high}] is invalid")));
    }
    let n = spec.kind.channels();
    let mut init_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    init_rng.set_stream(0);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);

    let uniform = Uniform::new_inclusive(low, high).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let propagator = match &spec.kind {
        SystemKind::Linear { matrix } => Some(linear_propagators(matrix, opts.steps, opts.dt)),
        _ => None,
    };
    let mut data = Vec::with_capacity(opts.series * (opts.steps + 1) * n);
    for _ in 0..opts.series {
        let x0: Vec<f64> = (0..n).map(|_| uniform.sample(&mut init_rng)).collect();
        match &spec.kind {
            SystemKind::Linear { .. } => {
                let x0v = DVector::from_vec(x0.clone());
                data.extend_from_slice(&x0);
                for e in propagator.as_ref().expect("linear propagators") {
                    data.extend((e * &x0v).iter());
                }
            }
            SystemKind::DampedOscillator { omega, damping } => {
                for t in 0..=opts.steps {
                    let s = oscillator_state(*omega, *damping, x0[0], x0[1], t as f64 * opts.dt);
                    data.extend_from_slice(&s);
                }
            }
            SystemKind::VanDerPol { mu } => {
                let mut s = [x0[0], x0[1]];
                data.extend_from_slice(&s);
                let h = opts.dt / RK4_SUBSTEPS as f64;
                for _ in 0..opts.steps {
                    for _ in 0..RK4_SUBSTEPS {
                        s = rk4_step(|y| van_der_pol(*mu, y), s, h);
                    }
                    data.extend_from_slice(&s);
                }
            }
        }
    }
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        for v in &mut data {
            *v += noise.sample(&mut noise_rng);
        }
    }
    TimeSeriesDataset::new(opts.series, opts.steps, n, data, spec.kind.channel_names(), opts.dt, spec.describe())
}

/// `exp(A·t·dt)` for `t = 1..=steps`.
fn linear_propagators(matrix: &[Vec<f64>], steps: usize, dt: f64) -> Vec<DMatrix<f64>> {
    let n = matrix.len();
    let a = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    (1..=steps).map(|t| (&a * (t as f64 * dt)).exp()).collect()
}

/// Closed-form `(x(t), ẋ(t))` of `ẍ + 2ζẋ + ω²x = 0` for every damping regime.
pub(crate) fn oscillator_state(omega: f64, zeta: f64, x0: f64, v0: f64, t: f64) -> [f64; 2] {
    let disc = omega * omega - zeta * zeta;
    // c(t) plays the role of cos(ω_d t) and s(t) of sin(ω_d t)/ω_d.
    let (c, s) = if disc > 0.0 {
        let wd = disc.sqrt();
        ((wd * t).cos(), (wd * t).sin() / wd)
    } else if disc < 0.0 {
        let g = (-disc).sqrt();
        ((g * t).cosh(), (g * t).sinh() / g)
    } else {
        (1.0, t)
    };
    let decay = (-zeta * t).exp();
    [
        decay * (x0 * c + (v0 + zeta * x0) * s),
        decay * (v0 * c - (zeta * v0 + omega * omega * x0) * s),
    ]
}

fn van_der_pol(mu: f64, y: [f64; 2]) -> [f64; 2] {
    [y[1], mu * (1.0 - y[0] * y[0]) * y[1] - y[0]]
}

fn rk4_step(f: impl Fn([f64; 2]) -> [f64; 2], y: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = f(y);
    let k2 = f(add(y, k1, h / 2.0));
    let k3 = f(add(y, k2, h / 2.0));
    let k4 = f(add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}
