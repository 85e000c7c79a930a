use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mlp::{BoundMlp, Dense, Mlp};
use super::ModelError;
use crate::diffcore::{Activation, DiffError, RealArray, Tape, Var};

/// Standard deviation of the noise added to the identity when initializing `K`.
pub const K_INIT_NOISE: f64 = 1e-3;

/// Layer layout shared by every member of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// State channels.
    pub n: usize,
    /// Latent dimension.
    pub d: usize,
    /// Encoder hidden widths; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d, hidden: vec![64, 64], activation: Activation::Tanh }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 || self.d == 0 || self.hidden.contains(&0) {
            return Err(ModelError::InvalidArchitecture(format!(
                "all widths must be positive (n = {}, d = {}, hidden = {:?})",
                self.n, self.d, self.hidden
            )));
        }
        Ok(())
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        std::iter::once(self.n).chain(self.hidden.iter().copied()).chain(std::iter::once(self.d)).collect()
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        std::iter::once(self.d).chain(self.hidden.iter().rev().copied()).chain(std::iter::once(self.n)).collect()
    }

    /// Shapes of all parameter arrays in canonical order: encoder layers
    /// (weight, bias), decoder layers (weight, bias), then `K`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for widths in [self.encoder_widths(), self.decoder_widths()] {
            for w in widths.windows(2) {
                shapes.push(vec![w[1], w[0]]);
                shapes.push(vec![w[1]]);
            }
        }
        shapes.push(vec![self.d, self.d]);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Encoder `φ: ℝⁿ → ℝᵈ`, decoder `ψ: ℝᵈ → ℝⁿ` and latent transition `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanAutoencoder {
    arch: Architecture,
    encoder: Mlp,
    decoder: Mlp,
    k: RealArray,
}

impl KoopmanAutoencoder {
    /// Random initialization reproducible from `seed`.
    pub fn random(arch: &Architecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::random(&arch.encoder_widths(), arch.activation, &mut rng);
        let decoder = Mlp::random(&arch.decoder_widths(), arch.activation, &mut rng);
        let noise = Normal::new(0.0, K_INIT_NOISE).expect("positive std");
        let mut k = RealArray::identity(arch.d);
        for v in k.data_mut() {
            *v += noise.sample(&mut rng);
        }
        Ok(Self { arch: arch.clone(), encoder, decoder, k })
    }

    pub fn from_parts(arch: Architecture, encoder: Mlp, decoder: Mlp, k: RealArray) -> Result<Self, ModelError> {
        arch.validate()?;
        let model = Self { arch, encoder, decoder, k };
        let shapes = model.arch.param_shapes();
        let actual: Vec<&[usize]> = model.params().iter().map(|p| p.shape()).collect();
        if shapes.len() != actual.len() || shapes.iter().zip(&actual).any(|(a, b)| a.as_slice() != *b) {
            return Err(ModelError::InvalidArchitecture(format!(
                "parameter shapes {actual:?} do not match architecture {shapes:?}"
            )));
        }
        if !model.params().iter().all(|p| p.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(model)
    }

    /// Rebuilds a model from its canonical flat parameter vector.
    pub fn from_flat(arch: &Architecture, flat: &[f64]) -> Result<Self, ModelError> {
        arch.validate()?;
        if flat.len() != arch.param_count() {
            return Err(ModelError::WidthMismatch {
                what: "flattened parameters",
                expected: arch.param_count(),
                got: flat.len(),
            });
        }
        let mut arrays = Vec::new();
        let mut offset = 0;
        for shape in arch.param_shapes() {
            let len: usize = shape.iter().product();
            arrays.push(RealArray::new(shape, flat[offset..offset + len].to_vec())?);
            offset += len;
        }
        let k = arrays.pop().expect("K is always present");
        let enc_layers = arch.encoder_widths().len() - 1;
        let mut it = arrays.into_iter();
        let mut take = |count: usize| -> Vec<Dense> {
            (0..count)
                .map(|_| Dense { weight: it.next().expect("weight"), bias: it.next().expect("bias") })
                .collect()
        };
        let encoder = Mlp { layers: take(enc_layers), activation: arch.activation };
        let decoder = Mlp { layers: take(arch.decoder_widths().len() - 1), activation: arch.activation };
        Self::from_parts(arch.clone(), encoder, decoder, k)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn k(&self) -> &RealArray {
        &self.k
    }

    pub fn params(&self) -> Vec<&RealArray> {
        let mut out = Vec::new();
        for mlp in [&self.encoder, &self.decoder] {
            for l in &mlp.layers {
                out.push(&l.weight);
                out.push(&l.bias);
            }
        }
        out.push(&self.k);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut RealArray> {
        let mut out = Vec::new();
        for mlp in [&mut self.encoder, &mut self.decoder] {
            for l in &mut mlp.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out.push(&mut self.k);
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    fn check_width(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
        if expected == got {
            Ok(())
        } else {
            Err(ModelError::WidthMismatch { what, expected, got })
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Self::check_width("encoder input", self.arch.n, x.len())?;
        Ok(self.encoder.forward_rows(x, 1))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        Self::check_width("decoder input", self.arch.d, z.len())?;
        Ok(self.decoder.forward_rows(z, 1))
    }

    /// One latent step `K·z`.
    pub fn advance(&self, z: &[f64]) -> Vec<f64> {
        let d = self.arch.d;
        let k = self.k.data();
        (0..d)
            .map(|i| {
                let mut acc = 0.0;
                for (zp, kp) in z.iter().zip(&k[i * d..(i + 1) * d]) {
                    acc += zp * kp;
                }
                acc
            })
            .collect()
    }

    /// `[K·z₀, K²·z₀, …, Kᴴ·z₀]` by repeated application.
    pub fn rollout_latent(&self, z0: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>, ModelError> {
        Self::check_width("latent state", self.arch.d, z0.len())?;
        if horizon == 0 {
            return Err(ModelError::InvalidHorizon);
        }
        let mut out = Vec::with_capacity(horizon);
        let mut z = z0.to_vec();
        for _ in 0..horizon {
            z = self.advance(&z);
            out.push(z.clone());
        }
        Ok(out)
    }

    /// `x̂_τ = ψ(Kᵗ φ(x₀))` for `τ = 1…H`, in the model's (normalized) space.
    pub fn forecast(&self, x0: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>, ModelError> {
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let z0 = self.encode(x0)?;
        self.rollout_latent(&z0, horizon)?.iter().map(|z| self.decode(z)).collect()
    }

    /// Registers all parameters on `tape` under `prefix`.
    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundModel {
        let encoder = self.encoder.bind(tape, &format!("{prefix}.encoder"));
        let decoder = self.decoder.bind(tape, &format!("{prefix}.decoder"));
        let k = tape.param(format!("{prefix}.k"), self.k.clone());
        BoundModel { n: self.arch.n, d: self.arch.d, encoder, decoder, k }
    }
}

/// A model whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub n: usize,
    pub d: usize,
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
    pub k: Var,
}

impl BoundModel {
    /// Row-stacked states `rows×n` to latents `rows×d`.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        self.encoder.forward(tape, x)
    }

    pub fn decode(&self, tape: &mut Tape, z: Var) -> Result<Var, DiffError> {
        self.decoder.forward(tape, z)
    }

    /// Row-stacked latents advanced `horizon` times; `zₜ₊₁ = zₜ·Kᵀ` per row.
    pub fn rollout(&self, tape: &mut Tape, z0: Var, horizon: usize) -> Result<Vec<Var>, DiffError> {
        let mut out = Vec::with_capacity(horizon);
        let mut z = z0;
        for _ in 0..horizon {
            z = tape.matmul_t(z, self.k)?;
            out.push(z);
        }
        Ok(out)
    }

    /// Parameter leaves in the same canonical order as [`KoopmanAutoencoder::params`].
    pub fn params(&self) -> Vec<Var> {
        self.encoder.params().chain(self.decoder.params()).chain(std::iter::once(self.k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_identity(n: usize) -> KoopmanAutoencoder {
        let arch = Architecture { n, d: n, hidden: vec![], activation: Activation::Identity };
        let eye = Mlp {
            layers: vec![Dense { weight: RealArray::identity(n), bias: RealArray::zeros(vec![n]) }],
            activation: Activation::Identity,
        };
        KoopmanAutoencoder::from_parts(arch, eye.clone(), eye, RealArray::identity(n)).unwrap()
    }

    fn with_k(mut m: KoopmanAutoencoder, k: Vec<f64>) -> KoopmanAutoencoder {
        let d = m.arch.d;
        m.k = RealArray::matrix(d, d, k).unwrap();
        m
    }

    #[test]
    fn identity_codec_round_trips() {
        let m = linear_identity(3);
        assert_eq!(m.encode(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert_eq!(m.decode(&[4.0, 0.0, 1.0]).unwrap(), vec![4.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_weight_encoder_returns_bias() {
        let arch = Architecture { n: 2, d: 2, hidden: vec![], activation: Activation::Identity };
        let enc = Mlp {
            layers: vec![Dense {
                weight: RealArray::zeros(vec![2, 2]),
                bias: RealArray::vector(vec![0.25, -1.0]).unwrap(),
            }],
            activation: Activation::Identity,
        };
        let dec = linear_identity(2).decoder.clone();
        let m = KoopmanAutoencoder::from_parts(arch, enc, dec, RealArray::identity(2)).unwrap();
        assert_eq!(m.encode(&[7.0, 9.0]).unwrap(), vec![0.25, -1.0]);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let arch = Architecture::new(2, 8);
        let a = KoopmanAutoencoder::random(&arch, 11).unwrap();
        let b = KoopmanAutoencoder::random(&arch, 11).unwrap();
        let c = KoopmanAutoencoder::random(&arch, 12).unwrap();
        let x = [0.3, -0.7];
        assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
        assert_ne!(a.encode(&x).unwrap(), c.encode(&x).unwrap());
        let k_dev = a.k().data().iter().enumerate().map(|(i, v)| {
            let eye = if i % 9 == 0 { 1.0 } else { 0.0 };
            (v - eye).abs()
        });
        assert!(k_dev.fold(0.0, f64::max) < 10.0 * K_INIT_NOISE);
    }

    #[test]
    fn width_mismatch_is_structured() {
        let m = linear_identity(2);
        assert!(matches!(
            m.encode(&[1.0]),
            Err(ModelError::WidthMismatch { what: "encoder input", expected: 2, got: 1 })
        ));
        assert!(m.decode(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn geometric_rollout() {
        let m = with_k(linear_identity(1), vec![2.0]);
        assert_eq!(m.rollout_latent(&[1.0], 3).unwrap(), vec![vec![2.0], vec![4.0], vec![8.0]]);
        assert!(matches!(m.rollout_latent(&[1.0], 0), Err(ModelError::InvalidHorizon)));
    }

    #[test]
    fn identity_k_keeps_state() {
        let m = linear_identity(2);
        for z in m.rollout_latent(&[0.4, -1.2], 5).unwrap() {
            assert_eq!(z, vec![0.4, -1.2]);
        }
        for x in m.forecast(&[3.0, 1.0], 4).unwrap() {
            assert_eq!(x, vec![3.0, 1.0]);
        }
    }

    #[test]
    fn rotation_has_period_four() {
        let m = with_k(linear_identity(2), vec![0.0, -1.0, 1.0, 0.0]);
        let traj = m.rollout_latent(&[1.0, 0.0], 4).unwrap();
        assert_eq!(traj[0], vec![0.0, 1.0]);
        assert_eq!(traj[3], vec![1.0, 0.0]);
    }

    #[test]
    fn halving_forecast() {
        let m = with_k(linear_identity(1), vec![0.5]);
        assert_eq!(m.forecast(&[8.0], 3).unwrap(), vec![vec![4.0], vec![2.0], vec![1.0]]);
    }

    #[test]
    fn flat_round_trip() {
        let arch = Architecture { n: 3, d: 4, hidden: vec![5], activation: Activation::Tanh };
        let m = KoopmanAutoencoder::random(&arch, 5).unwrap();
        let flat = m.flatten();
        assert_eq!(flat.len(), arch.param_count());
        assert_eq!(KoopmanAutoencoder::from_flat(&arch, &flat).unwrap(), m);
        let wrong = Architecture { d: 5, ..arch };
        assert!(KoopmanAutoencoder::from_flat(&wrong, &flat).is_err());
    }

    #[test]
    fn bound_params_follow_canonical_order() {
        let arch = Architecture { n: 2, d: 3, hidden: vec![4], activation: Activation::Tanh };
        let m = KoopmanAutoencoder::random(&arch, 1).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, "m0");
        let vals: Vec<&RealArray> = bound.params().into_iter().map(|v| tape.value(v)).collect();
        assert_eq!(vals, m.params());
    }
}
