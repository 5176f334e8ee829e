//! Holographic reduced representations.
//!
//! Vectors are bound by circular convolution, computed spectrally as a
//! bin-wise product of DFTs. A vector whose spectrum has unit magnitude in
//! every bin is called *projected*; for those the exact inverse and the
//! index-reversal pseudo-inverse coincide, and binding preserves norms.
//!
//! Projection is never applied implicitly. Bind and unbind accept any
//! valid vectors.

pub mod dft;

use thiserror::Error;

use crate::rng::CounterRng;
pub use dft::{dft, idft, Spectrum};

/// Bins below this magnitude make a spectrum impossible to project.
pub const PROJECTION_FLOOR: f64 = 1e-12;
/// Bins below this magnitude make the exact inverse unreliable.
pub const INVERSE_FLOOR: f64 = 1e-9;
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HrrError {
    #[error("dimension {0} is too small (need at least 2)")]
    DimensionTooSmall(usize),
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("spectrum bin {bin} has magnitude {magnitude:e}, cannot project")]
    DegenerateSpectrum { bin: usize, magnitude: f64 },
    #[error("spectrum bin {bin} has magnitude {magnitude:e}, inverse is near-singular")]
    NearSingularSpectrum { bin: usize, magnitude: f64 },
    #[error("vector norm {0:e} is below the floor")]
    ZeroNorm(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrrVector {
    values: Vec<f64>,
}

impl HrrVector {
    pub fn new(values: Vec<f64>) -> Result<Self, HrrError> {
        if values.len() < 2 {
            return Err(HrrError::DimensionTooSmall(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HrrError::NonFinite);
        }
        Ok(Self { values })
    }

    /// Unit impulse `(1, 0, ..., 0)`, the identity of binding.
    pub fn delta(dim: usize) -> Result<Self, HrrError> {
        let mut v = vec![0.0; dim];
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Result<Self, HrrError> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self, HrrError> {
        check_dims(self, other)?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HrrError> {
        check_dims(self, other)?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// Every DFT bin has magnitude 1 within `tol`.
    pub fn is_projected(&self, tol: f64) -> bool {
        let s = dft(self);
        (0..s.len()).all(|k| (s.magnitude(k) - 1.0).abs() <= tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_dims(a: &HrrVector, b: &HrrVector) -> Result<(), HrrError> {
    if a.dim() != b.dim() {
        return Err(HrrError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// i.i.d. N(0, 1/dim) entries.
pub fn sample_vector(dim: usize, rng: &mut CounterRng) -> Result<HrrVector, HrrError> {
    if dim < 2 {
        return Err(HrrError::DimensionTooSmall(dim));
    }
    let sd = (1.0 / dim as f64).sqrt();
    HrrVector::new((0..dim).map(|_| rng.next_normal() * sd).collect())
}

/// Normalize every DFT bin to unit magnitude.
pub fn project(v: &HrrVector) -> Result<HrrVector, HrrError> {
    let mut s = dft(v);
    for k in 0..s.len() {
        let m = s.magnitude(k);
        if m < PROJECTION_FLOOR {
            return Err(HrrError::DegenerateSpectrum { bin: k, magnitude: m });
        }
        s.re[k] /= m;
        s.im[k] /= m;
    }
    idft(&s)
}

/// Circular convolution `x ⊛ y`.
pub fn bind(x: &HrrVector, y: &HrrVector) -> Result<HrrVector, HrrError> {
    check_dims(x, y)?;
    idft(&dft(x).mul(&dft(y)))
}

/// Vector whose spectrum is the bin-wise reciprocal of `z`'s.
pub fn exact_inverse(z: &HrrVector) -> Result<HrrVector, HrrError> {
    let s = dft(z);
    let mut inv = Spectrum::zeros(s.len());
    for k in 0..s.len() {
        let m2 = s.re[k] * s.re[k] + s.im[k] * s.im[k];
        let m = m2.sqrt();
        if m < INVERSE_FLOOR {
            return Err(HrrError::NearSingularSpectrum { bin: k, magnitude: m });
        }
        inv.re[k] = s.re[k] / m2;
        inv.im[k] = -s.im[k] / m2;
    }
    idft(&inv)
}

/// Index reversal: `out[0] = z[0]`, `out[k] = z[d - k]`.
pub fn pseudo_inverse(z: &HrrVector) -> HrrVector {
    let d = z.dim();
    let values = (0..d).map(|k| z.values[(d - k) % d]).collect();
    HrrVector { values }
}

/// `b ⊛ key†` with the exact inverse.
pub fn unbind(b: &HrrVector, key: &HrrVector) -> Result<HrrVector, HrrError> {
    check_dims(b, key)?;
    bind(b, &exact_inverse(key)?)
}

pub fn cosine_similarity(a: &HrrVector, b: &HrrVector) -> Result<f64, HrrError> {
    check_dims(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na < NORM_FLOOR {
        return Err(HrrError::ZeroNorm(na));
    }
    if nb < NORM_FLOOR {
        return Err(HrrError::ZeroNorm(nb));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> HrrVector {
        HrrVector::new(xs.to_vec()).unwrap()
    }

    fn close(a: &HrrVector, b: &HrrVector, tol: f64) -> bool {
        a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < tol)
    }

    // Σⱼ x[j]·y[(k−j) mod d]
    fn circular_convolution(x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..d)
            .map(|k| (0..d).map(|j| x[j] * y[(k + d - j) % d]).sum())
            .collect()
    }

    #[test]
    fn rejects_small_and_non_finite() {
        assert_eq!(HrrVector::new(vec![1.0]), Err(HrrError::DimensionTooSmall(1)));
        assert_eq!(HrrVector::new(vec![1.0, f64::INFINITY]), Err(HrrError::NonFinite));
        let mut rng = CounterRng::new(0);
        assert!(sample_vector(2, &mut rng).is_ok());
        assert_eq!(sample_vector(1, &mut rng), Err(HrrError::DimensionTooSmall(1)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_vector(64, &mut CounterRng::new(42)).unwrap();
        let b = sample_vector(64, &mut CounterRng::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_variance_is_one_over_dim() {
        let mut rng = CounterRng::new(9);
        let trials = 10_000;
        let mut total = 0.0;
        for _ in 0..trials {
            let x = sample_vector(64, &mut rng).unwrap();
            let m = x.values().iter().sum::<f64>() / 64.0;
            total += x.values().iter().map(|a| (a - m).powi(2)).sum::<f64>() / 63.0;
        }
        let mean_var = total / trials as f64;
        let target = 1.0 / 64.0;
        assert!((mean_var - target).abs() < 0.1 * target, "{mean_var}");
    }

    #[test]
    fn projection_examples() {
        let d = HrrVector::delta(8).unwrap();
        assert!(close(&project(&d).unwrap(), &d, 1e-12));
        let p = project(&v(&[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(close(&p, &v(&[1.0, 0.0, 0.0, 0.0]), 1e-12));
        let mut rng = CounterRng::new(3);
        let x = sample_vector(64, &mut rng).unwrap();
        let once = project(&x).unwrap();
        assert!(once.is_projected(1e-6));
        assert!(close(&project(&once).unwrap(), &once, 1e-9));
    }

    #[test]
    fn projection_rejects_degenerate_spectrum() {
        // constant vector has zero energy outside bin 0
        let err = project(&v(&[1.0, 1.0, 1.0, 1.0])).unwrap_err();
        assert!(matches!(err, HrrError::DegenerateSpectrum { bin: 1, .. }));
    }

    #[test]
    fn bind_matches_direct_sum() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [5.0, 6.0, 7.0, 8.0];
        let expected = circular_convolution(&x, &y);
        // (66, 68, 66, 60)
        assert_eq!(expected, vec![66.0, 68.0, 66.0, 60.0]);
        assert!(close(&bind(&v(&x), &v(&y)).unwrap(), &v(&expected), 1e-9));
    }

    #[test]
    fn bind_identity_and_commutativity() {
        let mut rng = CounterRng::new(4);
        let x = sample_vector(12, &mut rng).unwrap();
        let y = sample_vector(12, &mut rng).unwrap();
        assert!(close(&bind(&x, &HrrVector::delta(12).unwrap()).unwrap(), &x, 1e-9));
        assert!(close(&bind(&x, &y).unwrap(), &bind(&y, &x).unwrap(), 1e-9));
    }

    #[test]
    fn bind_dimension_mismatch() {
        let err = bind(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert_eq!(err, HrrError::DimensionMismatch { left: 2, right: 3 });
    }

    #[test]
    fn exact_inverse_examples() {
        let d = HrrVector::delta(4).unwrap();
        assert!(close(&exact_inverse(&d).unwrap(), &d, 1e-12));

        let z = v(&[1.0, 2.0, 3.0, 4.0]);
        let inv = exact_inverse(&z).unwrap();
        // oracle: spectrum of z is (10, -2+2i, -2, -2-2i); reciprocals
        // (0.1, -0.25-0.25i, -0.5, -0.25+0.25i); inverse DFT by hand:
        // out[n] = (1/4) Σ R[k] e^{+2πi kn/4}
        let expected = [-0.225, 0.275, 0.025, 0.025];
        for (a, b) in inv.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(close(&bind(&z, &inv).unwrap(), &d, 1e-9));
    }

    #[test]
    fn exact_inverse_rejects_singular() {
        let err = exact_inverse(&v(&[1.0, 1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, HrrError::NearSingularSpectrum { bin: 2, .. }));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let z = v(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pseudo_inverse(&z), v(&[1.0, 4.0, 3.0, 2.0]));
        assert_eq!(pseudo_inverse(&pseudo_inverse(&z)), z);
    }

    #[test]
    fn projected_inverses_coincide() {
        let mut rng = CounterRng::new(100);
        for _ in 0..100 {
            let z = project(&sample_vector(64, &mut rng).unwrap()).unwrap();
            let e = exact_inverse(&z).unwrap();
            let p = pseudo_inverse(&z);
            assert!(close(&e, &p, 1e-9));
            let id = bind(&z, &e).unwrap();
            assert!(close(&id, &HrrVector::delta(64).unwrap(), 1e-6));
        }
    }

    #[test]
    fn unbind_examples() {
        let mut rng = CounterRng::new(12);
        let k = project(&sample_vector(64, &mut rng).unwrap()).unwrap();
        let val = sample_vector(64, &mut rng).unwrap();
        let b = bind(&k, &val).unwrap();
        assert!(close(&unbind(&b, &k).unwrap(), &val, 1e-6));
        assert!(close(&unbind(&val, &HrrVector::delta(64).unwrap()).unwrap(), &val, 1e-12));
    }

    #[test]
    fn bundle_retrieval_prefers_the_right_value() {
        let mut rng = CounterRng::new(2024);
        let trials = 1000;
        let mut hits = 0;
        for _ in 0..trials {
            let k1 = sample_vector(64, &mut rng).unwrap();
            let v1 = sample_vector(64, &mut rng).unwrap();
            let k2 = sample_vector(64, &mut rng).unwrap();
            let v2 = sample_vector(64, &mut rng).unwrap();
            let k1 = project(&k1).unwrap();
            let k2 = project(&k2).unwrap();
            let bundle = bind(&k1, &v1).unwrap().add(&bind(&k2, &v2).unwrap()).unwrap();
            let r = unbind(&bundle, &k1).unwrap();
            if cosine_similarity(&r, &v1).unwrap() > cosine_similarity(&r, &v2).unwrap() {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.99 * trials as f64, "{hits}");
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[1.0, 0.0, 0.0, 0.0]);
        let b = v(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        let mut rng = CounterRng::new(8);
        let x = sample_vector(16, &mut rng).unwrap();
        let y = sample_vector(16, &mut rng).unwrap();
        assert!((cosine_similarity(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert!((cosine_similarity(&x, &x.scale(-1.0).unwrap()).unwrap() + 1.0).abs() < 1e-9);
        let c1 = cosine_similarity(&x, &y).unwrap();
        let c2 = cosine_similarity(&x.scale(3.5).unwrap(), &y).unwrap();
        assert!((c1 - c2).abs() < 1e-12);
        assert!((c1 - cosine_similarity(&y, &x).unwrap()).abs() < 1e-15);
        let zero = v(&[0.0; 4]);
        assert!(matches!(cosine_similarity(&zero, &a), Err(HrrError::ZeroNorm(_))));
    }
}
