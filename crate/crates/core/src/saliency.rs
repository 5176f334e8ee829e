//! Vanilla-gradient saliency.
//!
//! The map is `|∂s/∂x|` for the winning class score `s`, scaled so its
//! maximum is 1. For a softmax head `s` is the winning logit; for an HRR
//! head it is the winning decode similarity `cos(v_c, ŷ ⊛ k_c†)`.

use thiserror::Error;

use crate::datagen::raster::ImageGray;
use crate::loss::{self, BatchPrediction, DecodeMode, LossError};
use crate::nn::train::Objective;
use crate::nn::{ModelState, NnError};

/// Pixels within this distance of an object boundary count as boundary
/// mass.
pub const BOUNDARY_RADIUS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("non-finite input gradient")]
    DivergedGradient,
    #[error("image is {got:?}, model expects {expected:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, in `[0, 1]`.
    pub values: Vec<f64>,
}

impl SaliencyMap {
    /// Max-normalized `|g|`; all zeros when `g` vanishes.
    pub fn from_gradient(height: usize, width: usize, grad: &[f64]) -> Result<Self, SaliencyError> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SaliencyError::DivergedGradient);
        }
        let max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let values = if max > 0.0 { grad.iter().map(|g| g.abs() / max).collect() } else { vec![0.0; grad.len()] };
        Ok(Self { height, width, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        loss::argmax(&self.values)
    }

    pub fn to_image(&self) -> ImageGray {
        ImageGray {
            height: self.height,
            width: self.width,
            pixels: self.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Saliency {
    pub map: SaliencyMap,
    pub predicted: usize,
    pub score: f64,
}

/// Winning class, its score and `∂score/∂output` for one eval-mode output.
pub fn winning_score(output: &[f64], objective: &Objective) -> Result<(usize, f64, Vec<f64>), SaliencyError> {
    match objective {
        Objective::Ce { .. } => {
            let c = loss::argmax(output);
            let mut d = vec![0.0; output.len()];
            d[c] = 1.0;
            Ok((c, output[c], d))
        }
        Objective::Hrr { book, .. } => {
            let pred = BatchPrediction::new(book.feature_dim(), output.to_vec())?;
            let decoded = loss::decode_with(&pred, book, DecodeMode::ExactInverse)?;
            let c = decoded.argmax[0];
            let (score, grad) = loss::score_and_gradient(output, book, c, DecodeMode::ExactInverse)?;
            Ok((c, score, grad))
        }
    }
}

/// Winning class score of `image` under `state`.
pub fn score(state: &ModelState, image: &ImageGray, objective: &Objective) -> Result<(usize, f64), SaliencyError> {
    let y = state.predict(&[image.pixels.as_slice()])?;
    let (c, s, _) = winning_score(&y, objective)?;
    Ok((c, s))
}

pub fn saliency_map(state: &ModelState, image: &ImageGray, objective: &Objective) -> Result<Saliency, SaliencyError> {
    let spec = state.spec();
    if (image.height, image.width) != (spec.height, spec.width) || spec.channels != 1 {
        return Err(SaliencyError::Shape {
            expected: (spec.height, spec.width),
            got: (image.height, image.width),
        });
    }
    let y = state.predict(&[image.pixels.as_slice()])?;
    let (predicted, score, dout) = winning_score(&y, objective)?;
    let grad = state.input_gradient(&image.pixels, &dout).map_err(|e| match e {
        NnError::NonFinite(_) => SaliencyError::DivergedGradient,
        other => other.into(),
    })?;
    Ok(Saliency {
        map: SaliencyMap::from_gradient(image.height, image.width, &grad)?,
        predicted,
        score,
    })
}

/// Pixels adjacent (8-neighbourhood) to a pixel of different value.
pub fn boundary_pixels(image: &ImageGray) -> Vec<bool> {
    let (h, w) = (image.height as isize, image.width as isize);
    let mut out = vec![false; image.pixels.len()];
    for r in 0..h {
        for c in 0..w {
            let v = image.pixels[(r * w + c) as usize];
            'n: for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr >= 0 && nc >= 0 && nr < h && nc < w && image.pixels[(nr * w + nc) as usize] != v {
                        out[(r * w + c) as usize] = true;
                        break 'n;
                    }
                }
            }
        }
    }
    out
}

/// Fraction of saliency mass on pixels within [`BOUNDARY_RADIUS`] of an
/// object boundary; 0 for an all-zero map.
pub fn boundary_mass(map: &SaliencyMap, image: &ImageGray) -> f64 {
    let total: f64 = map.values.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let edges: Vec<(f64, f64)> = boundary_pixels(image)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| ((i / image.width) as f64, (i % image.width) as f64))
        .collect();
    let r2 = BOUNDARY_RADIUS * BOUNDARY_RADIUS;
    let mut near = 0.0;
    for (i, &v) in map.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let (r, c) = ((i / map.width) as f64, (i % map.width) as f64);
        if edges.iter().any(|&(er, ec)| (er - r).powi(2) + (ec - c).powi(2) <= r2) {
            near += v;
        }
    }
    near / total
}
