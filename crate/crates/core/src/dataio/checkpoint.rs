use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{DataError, Normalizer};
use crate::koopman::{Architecture, Ensemble, KoopmanAutoencoder};
use crate::losses::Regime;

pub const CHECKPOINT_FORMAT: &str = "koopman-uq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adam state over the concatenated member parameters, split per member.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// A trained (or partially trained) ensemble with everything needed to
/// forecast from it or resume its training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub regime: Regime,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Optimizer steps taken.
    pub step: u64,
    pub normalizer: Normalizer,
    /// Flattened parameters per member, in canonical order.
    pub members: Vec<Vec<f64>>,
    pub optimizer: Option<OptimizerSnapshot>,
    /// Echo of the full training configuration.
    pub config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Dims {
    n: usize,
    d: usize,
    members: usize,
    params_per_member: usize,
}

#[derive(Serialize, Deserialize)]
struct NormalizerBlob {
    mean: String,
    std: String,
}

#[derive(Serialize, Deserialize)]
struct OptimizerBlob {
    step: u64,
    first: Vec<String>,
    second: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dims: Dims,
    architecture: Architecture,
    regime: Regime,
    alpha: f64,
    lambda: f64,
    seed: u64,
    step: u64,
    normalizer: NormalizerBlob,
    members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerBlob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(blob: &str, field: &str) -> Result<Vec<f64>, DataError> {
    let bytes = STANDARD.decode(blob).map_err(|e| DataError::field(field, format!("invalid base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(DataError::field(field, format!("{} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

impl Checkpoint {
    pub fn from_ensemble(ensemble: &Ensemble, alpha: f64, seed: u64, step: u64) -> Self {
        Self {
            architecture: ensemble.architecture().clone(),
            regime: ensemble.regime,
            alpha,
            lambda: ensemble.lambda,
            seed,
            step,
            normalizer: ensemble.normalizer().clone(),
            members: ensemble.members().iter().map(KoopmanAutoencoder::flatten).collect(),
            optimizer: None,
            config: None,
        }
    }

    pub fn to_ensemble(&self) -> Result<Ensemble, DataError> {
        let members = self
            .members
            .iter()
            .enumerate()
            .map(|(j, flat)| {
                KoopmanAutoencoder::from_flat(&self.architecture, flat)
                    .map_err(|e| DataError::field(format!("members[{j}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ensemble::new(members, self.normalizer.clone(), self.regime, self.lambda)
            .map_err(|e| DataError::field("members", e.to_string()))
    }

    /// Equality of everything except the regime tag and config echo: member
    /// parameters, optimizer state, normalization and step count, bitwise.
    pub fn same_payload(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let all_bits = |m: &[Vec<f64>]| m.iter().map(|v| bits(v)).collect::<Vec<_>>();
        let opt_bits = |o: &Option<OptimizerSnapshot>| {
            o.as_ref().map(|o| (o.step, all_bits(&o.first), all_bits(&o.second)))
        };
        self.architecture == other.architecture
            && self.step == other.step
            && all_bits(&self.members) == all_bits(&other.members)
            && bits(&self.normalizer.mean) == bits(&other.normalizer.mean)
            && bits(&self.normalizer.std) == bits(&other.normalizer.std)
            && opt_bits(&self.optimizer) == opt_bits(&other.optimizer)
    }

    pub fn to_json(&self) -> String {
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: Dims {
                n: self.architecture.n,
                d: self.architecture.d,
                members: self.members.len(),
                params_per_member: self.members.first().map_or(0, Vec::len),
            },
            architecture: self.architecture.clone(),
            regime: self.regime,
            alpha: self.alpha,
            lambda: self.lambda,
            seed: self.seed,
            step: self.step,
            normalizer: NormalizerBlob { mean: encode(&self.normalizer.mean), std: encode(&self.normalizer.std) },
            members: self.members.iter().map(|m| encode(m)).collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerBlob {
                step: o.step,
                first: o.first.iter().map(|m| encode(m)).collect(),
                second: o.second.iter().map(|m| encode(m)).collect(),
            }),
            config: self.config.clone(),
        };
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("version").and_then(serde_json::Value::as_u64);
        match found {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => return Err(DataError::Version { found: v as u32, expected: CHECKPOINT_VERSION }),
            None => return Err(DataError::field("version", "missing or not an integer")),
        }
        let m: Manifest = serde_json::from_value(raw)?;
        if m.format != CHECKPOINT_FORMAT {
            return Err(DataError::field("format", format!("expected {CHECKPOINT_FORMAT:?}, got {:?}", m.format)));
        }
        let arch = m.architecture;
        arch.validate().map_err(|e| DataError::field("architecture", e.to_string()))?;
        if arch.n != m.dims.n {
            return Err(DataError::field("architecture.n", format!("{} disagrees with dims.n = {}", arch.n, m.dims.n)));
        }
        if arch.d != m.dims.d {
            return Err(DataError::field("architecture.d", format!("{} disagrees with dims.d = {}", arch.d, m.dims.d)));
        }
        if m.members.is_empty() || m.members.len() != m.dims.members {
            return Err(DataError::field(
                "members",
                format!("{} member blobs, dims.members = {}", m.members.len(), m.dims.members),
            ));
        }
        let expected = arch.param_count();
        let members = m
            .members
            .iter()
            .enumerate()
            .map(|(j, blob)| {
                let flat = decode(blob, &format!("members[{j}]"))?;
                if flat.len() != expected || flat.len() != m.dims.params_per_member {
                    return Err(DataError::field(
                        "architecture",
                        format!(
                            "member {j} has {} parameters, but the declared architecture needs {expected} \
                             (dims.params_per_member = {})",
                            flat.len(),
                            m.dims.params_per_member
                        ),
                    ));
                }
                Ok(flat)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let normalizer = Normalizer {
            mean: decode(&m.normalizer.mean, "normalizer.mean")?,
            std: decode(&m.normalizer.std, "normalizer.std")?,
        };
        if normalizer.mean.len() != arch.n || normalizer.std.len() != arch.n {
            return Err(DataError::field("normalizer", format!("expected {} channels", arch.n)));
        }
        let optimizer = match m.optimizer {
            None => None,
            Some(o) => {
                let unpack = |blobs: &[String], name: &str| -> Result<Vec<Vec<f64>>, DataError> {
                    if blobs.len() != members.len() {
                        return Err(DataError::field(format!("optimizer.{name}"), "one blob per member expected"));
                    }
                    blobs
                        .iter()
                        .enumerate()
                        .map(|(j, b)| {
                            let field = format!("optimizer.{name}[{j}]");
                            let v = decode(b, &field)?;
                            if v.len() != expected {
                                return Err(DataError::field(field, format!("{} values, expected {expected}", v.len())));
                            }
                            Ok(v)
                        })
                        .collect()
                };
                Some(OptimizerSnapshot { step: o.step, first: unpack(&o.first, "first")?, second: unpack(&o.second, "second")? })
            }
        };
        Ok(Self {
            architecture: arch,
            regime: m.regime,
            alpha: m.alpha,
            lambda: m.lambda,
            seed: m.seed,
            step: m.step,
            normalizer,
            members,
            optimizer,
            config: m.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_json(&text)
    }
}
