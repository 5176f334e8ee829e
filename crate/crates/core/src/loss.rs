//! Classification heads: the HRR codebook loss and a cross-entropy baseline.
//!
//! Each class `c` owns a projected key `k_c` and a projected value `v_c`.
//! The network is trained to emit the bound target `t_c = k_c ⊛ v_c`
//! (through a tanh, so targets must sit inside `[-1, 1]`). At evaluation
//! every key is unbound from the prediction and the class whose value is
//! most cosine-similar to the recovered vector wins.

use std::io::{Read, Write};

use thiserror::Error;

use crate::hrr::dft::{forward_real, inverse_real, Spectrum};
use crate::hrr::{self, HrrError, HrrVector, NORM_FLOOR};
use crate::rng::CounterRng;

pub const CODEBOOK_MAGIC: &[u8; 8] = b"HRRCBK01";

#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("prediction entry {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error(transparent)]
    Hrr(#[from] HrrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a row residual is turned into its loss contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualNorm {
    /// `‖t − ŷ‖₂`
    #[default]
    L2,
    /// `‖t − ŷ‖₂²`, kept for ablations.
    SquaredL2,
}

/// Which vector is bound to the prediction before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// `ŷ ⊛ k_c†`, proper unbinding.
    #[default]
    ExactInverse,
    /// `ŷ ⊛ k_c`, the uninverted variant.
    LiteralBind,
}

#[derive(Debug, Clone)]
pub struct Codebook {
    seed: u64,
    keys: Vec<HrrVector>,
    values: Vec<HrrVector>,
    targets: Vec<HrrVector>,
    key_spectra: Vec<Spectrum>,
    key_inverse_spectra: Vec<Spectrum>,
}

impl Codebook {
    /// Keys first, then values, each drawn from `CounterRng::new(seed)` as
    /// one contiguous block of `feature_dim` normals and projected.
    pub fn new(num_classes: usize, feature_dim: usize, seed: u64) -> Result<Self, LossError> {
        if num_classes < 2 {
            return Err(LossError::InvalidCodebook(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if feature_dim < 8 {
            return Err(LossError::InvalidCodebook(format!(
                "feature dim {feature_dim} below 8"
            )));
        }
        if feature_dim < 32 {
            log::warn!("feature dim {feature_dim} is small; bound targets may leave the tanh range");
        }
        let mut rng = CounterRng::new(seed);
        let draw = |rng: &mut CounterRng| -> Result<Vec<HrrVector>, LossError> {
            (0..num_classes)
                .map(|_| Ok(hrr::project(&hrr::sample_vector(feature_dim, rng)?)?))
                .collect()
        };
        let keys = draw(&mut rng)?;
        let values = draw(&mut rng)?;
        Self::from_parts(seed, keys, values)
    }

    pub fn from_parts(seed: u64, keys: Vec<HrrVector>, values: Vec<HrrVector>) -> Result<Self, LossError> {
        if keys.len() != values.len() || keys.len() < 2 {
            return Err(LossError::InvalidCodebook("key/value count mismatch".into()));
        }
        let dim = keys[0].dim();
        if keys.iter().chain(&values).any(|v| v.dim() != dim) {
            return Err(LossError::InvalidCodebook("ragged dimensions".into()));
        }
        let targets = keys
            .iter()
            .zip(&values)
            .map(|(k, v)| hrr::bind(k, v))
            .collect::<Result<Vec<_>, _>>()?;
        let key_spectra: Vec<Spectrum> = keys.iter().map(hrr::dft).collect();
        let key_inverse_spectra = keys
            .iter()
            .map(|k| Ok(hrr::dft(&hrr::exact_inverse(k)?)))
            .collect::<Result<Vec<_>, LossError>>()?;
        Ok(Self {
            seed,
            keys,
            values,
            targets,
            key_spectra,
            key_inverse_spectra,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.keys.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.keys[0].dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn keys(&self) -> &[HrrVector] {
        &self.keys
    }

    pub fn values(&self) -> &[HrrVector] {
        &self.values
    }

    pub fn targets(&self) -> &[HrrVector] {
        &self.targets
    }

    pub fn max_abs_target(&self) -> f64 {
        self.targets.iter().map(HrrVector::max_abs).fold(0.0, f64::max)
    }

    fn unbinding_spectrum(&self, class: usize, mode: DecodeMode) -> &Spectrum {
        match mode {
            DecodeMode::ExactInverse => &self.key_inverse_spectra[class],
            DecodeMode::LiteralBind => &self.key_spectra[class],
        }
    }

    /// Little-endian: magic, C, H, seed (u64 each), keys then values as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LossError> {
        w.write_all(CODEBOOK_MAGIC)?;
        for n in [self.num_classes() as u64, self.feature_dim() as u64, self.seed] {
            w.write_all(&n.to_le_bytes())?;
        }
        for v in self.keys.iter().chain(&self.values) {
            for x in v.values() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LossError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CODEBOOK_MAGIC {
            return Err(LossError::InvalidCodebook("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64, LossError> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let classes = next_u64(&mut r)? as usize;
        let dim = next_u64(&mut r)? as usize;
        let seed = next_u64(&mut r)?;
        if !(2..=1 << 16).contains(&classes) || !(2..=1 << 20).contains(&dim) {
            return Err(LossError::InvalidCodebook(format!("implausible header C={classes} H={dim}")));
        }
        let read_block = |r: &mut R| -> Result<Vec<HrrVector>, LossError> {
            (0..classes)
                .map(|_| {
                    let mut vals = vec![0.0; dim];
                    for x in &mut vals {
                        let mut b = [0u8; 8];
                        r.read_exact(&mut b)?;
                        *x = f64::from_le_bytes(b);
                    }
                    Ok(HrrVector::new(vals)?)
                })
                .collect()
        };
        let keys = read_block(&mut r)?;
        let values = read_block(&mut r)?;
        Self::from_parts(seed, keys, values)
    }
}

/// Network outputs, `B` rows of `H` post-tanh features.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    feature_dim: usize,
    data: Vec<f64>,
}

impl BatchPrediction {
    pub fn new(feature_dim: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if feature_dim == 0 || data.is_empty() || data.len() % feature_dim != 0 {
            return Err(LossError::DimensionMismatch {
                expected: feature_dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite);
        }
        if let Some(&bad) = data.iter().find(|v| v.abs() > 1.0) {
            return Err(LossError::OutOfRange(bad));
        }
        Ok(Self { feature_dim, data })
    }

    pub fn batch_size(&self) -> usize {
        self.data.len() / self.feature_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub num_classes: usize,
    pub scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn batch_size(&self) -> usize {
        self.scores.len() / self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.num_classes..(i + 1) * self.num_classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Same layout as the input: `B × H` or `B × C`, row-major.
    pub grad: Vec<f64>,
}

fn check_labels(labels: &[usize], classes: usize, batch: usize) -> Result<(), LossError> {
    if labels.len() != batch {
        return Err(LossError::DimensionMismatch {
            expected: batch,
            got: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(LossError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// `Σᵢ ‖t_{labels[i]} − ŷᵢ‖₂`, with gradient `(ŷᵢ − tᵢ)/‖ŷᵢ − tᵢ‖₂`
/// (zero where the residual vanishes).
pub fn hrr_loss(pred: &BatchPrediction, labels: &[usize], book: &Codebook) -> Result<LossOutput, LossError> {
    hrr_loss_with(pred, labels, book, ResidualNorm::L2)
}

pub fn hrr_loss_with(
    pred: &BatchPrediction,
    labels: &[usize],
    book: &Codebook,
    norm: ResidualNorm,
) -> Result<LossOutput, LossError> {
    let h = book.feature_dim();
    if pred.feature_dim() != h {
        return Err(LossError::DimensionMismatch {
            expected: h,
            got: pred.feature_dim(),
        });
    }
    check_labels(labels, book.num_classes(), pred.batch_size())?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for (i, &label) in labels.iter().enumerate() {
        let target = book.targets[label].values();
        let row = pred.row(i);
        let g = &mut grad[i * h..(i + 1) * h];
        let sq: f64 = row.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum();
        match norm {
            ResidualNorm::L2 => {
                let r = sq.sqrt();
                loss += r;
                if r > 1e-12 {
                    for ((gj, y), t) in g.iter_mut().zip(row).zip(target) {
                        *gj = (y - t) / r;
                    }
                }
            }
            ResidualNorm::SquaredL2 => {
                loss += sq;
                for ((gj, y), t) in g.iter_mut().zip(row).zip(target) {
                    *gj = 2.0 * (y - t);
                }
            }
        }
    }
    Ok(LossOutput { loss, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub scores: ScoreMatrix,
    pub argmax: Vec<usize>,
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Recovered value estimate for one row and class.
fn recovered(row: &[f64], book: &Codebook, class: usize, mode: DecodeMode) -> Vec<f64> {
    let spec = forward_real(row).mul(book.unbinding_spectrum(class, mode));
    inverse_real(&spec)
}

pub fn decode(pred: &BatchPrediction, book: &Codebook) -> Result<Decoded, LossError> {
    decode_with(pred, book, DecodeMode::ExactInverse)
}

pub fn decode_with(pred: &BatchPrediction, book: &Codebook, mode: DecodeMode) -> Result<Decoded, LossError> {
    let h = book.feature_dim();
    if pred.feature_dim() != h {
        return Err(LossError::DimensionMismatch {
            expected: h,
            got: pred.feature_dim(),
        });
    }
    let c = book.num_classes();
    let mut scores = Vec::with_capacity(pred.batch_size() * c);
    let mut winners = Vec::with_capacity(pred.batch_size());
    for i in 0..pred.batch_size() {
        let row = pred.row(i);
        let start = scores.len();
        for class in 0..c {
            let u = recovered(row, book, class, mode);
            let nu = norm(&u);
            if nu < NORM_FLOOR {
                return Err(HrrError::ZeroNorm(nu).into());
            }
            let v = book.values[class].values();
            scores.push((dot(v, &u) / (norm(v) * nu)).clamp(-1.0, 1.0));
        }
        winners.push(argmax(&scores[start..]));
    }
    Ok(Decoded {
        scores: ScoreMatrix {
            num_classes: c,
            scores,
        },
        argmax: winners,
    })
}

/// Score of `class` for a single prediction row together with
/// `∂score/∂row`.
///
/// The recovered vector is `u = w ⊛ ŷ` for the unbinding vector `w`, so
/// the chain rule pulls the cosine gradient back through the transpose
/// of a circulant, i.e. a circular correlation with `w`.
pub fn score_and_gradient(
    row: &[f64],
    book: &Codebook,
    class: usize,
    mode: DecodeMode,
) -> Result<(f64, Vec<f64>), LossError> {
    let h = book.feature_dim();
    if row.len() != h {
        return Err(LossError::DimensionMismatch {
            expected: h,
            got: row.len(),
        });
    }
    if class >= book.num_classes() {
        return Err(LossError::LabelOutOfRange {
            label: class,
            classes: book.num_classes(),
        });
    }
    let u = recovered(row, book, class, mode);
    let nu = norm(&u);
    if nu < NORM_FLOOR {
        return Err(HrrError::ZeroNorm(nu).into());
    }
    let v = book.values[class].values();
    let nv = norm(v);
    let cos = dot(v, &u) / (nv * nu);
    let du: Vec<f64> = v
        .iter()
        .zip(&u)
        .map(|(vj, uj)| vj / (nv * nu) - cos * uj / (nu * nu))
        .collect();
    // correlation with w: multiply by the conjugate spectrum
    let spec = forward_real(&du).mul(&book.unbinding_spectrum(class, mode).conj());
    Ok((cos, inverse_real(&spec)))
}

/// Row-wise numerically stable softmax.
pub fn softmax(logits: &[f64], num_classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(num_classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / s));
    }
    out
}

/// Mean negative log-likelihood over the batch; gradient `(p − onehot)/B`.
pub fn ce_loss(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<LossOutput, LossError> {
    if num_classes == 0 || logits.is_empty() || logits.len() % num_classes != 0 {
        return Err(LossError::DimensionMismatch {
            expected: num_classes,
            got: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite);
    }
    let batch = logits.len() / num_classes;
    check_labels(labels, num_classes, batch)?;
    let mut grad = softmax(logits, num_classes);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * num_classes..(i + 1) * num_classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        grad[i * num_classes + label] -= 1.0;
    }
    let b = batch as f64;
    grad.iter_mut().for_each(|g| *g /= b);
    Ok(LossOutput { loss: loss / b, grad })
}
