use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::diffcore::{Activation, DiffError, RealArray, Tape, Var};

/// Fully connected layer, `weight` stored `out×in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: RealArray,
    pub bias: RealArray,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Xavier-uniform weights, zero bias.
    pub fn random<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..inputs * outputs).map(|_| dist.sample(rng)).collect();
        Self {
            weight: RealArray::from_parts(vec![outputs, inputs], data),
            bias: RealArray::zeros(vec![outputs]),
        }
    }
}

/// Multilayer perceptron: `activation` after every layer except the last,
/// which is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

impl Mlp {
    pub fn random<R: Rng>(widths: &[usize], activation: Activation, rng: &mut R) -> Self {
        let layers = widths.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect();
        Self { layers, activation }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    /// Evaluates `rows` row-stacked inputs. Arithmetic order matches the tape's
    /// `affine` op so both paths agree bitwise.
    pub fn forward_rows(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut current = input.to_vec();
        let last = self.layers.len().saturating_sub(1);
        for (li, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.inputs(), layer.outputs());
            let w = layer.weight.data();
            let b = layer.bias.data();
            let mut next = Vec::with_capacity(rows * n);
            for r in 0..rows {
                let x = &current[r * k..(r + 1) * k];
                for j in 0..n {
                    let mut acc = 0.0;
                    for (xi, wi) in x.iter().zip(&w[j * k..(j + 1) * k]) {
                        acc += xi * wi;
                    }
                    let mut out = b[j];
                    out += acc;
                    next.push(if li < last { self.activation.apply(out) } else { out });
                }
            }
            current = next;
        }
        current
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    tape.param(format!("{prefix}.{i}.weight"), l.weight.clone()),
                    tape.param(format!("{prefix}.{i}.bias"), l.bias.clone()),
                )
            })
            .collect();
        BoundMlp { layers, activation: self.activation }
    }
}

/// An [`Mlp`] whose parameters are leaves on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<(Var, Var)>,
    pub activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(h, *w, *b)?;
            if i < last && self.activation != Activation::Identity {
                h = tape.activation(h, self.activation)?;
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }
}
