//! Discrete Fourier transform over real vectors.
//!
//! Power-of-two lengths go through an iterative radix-2 FFT; every other
//! length falls back to the direct O(d²) sum. Both use the unnormalized
//! forward convention `X[k] = Σ x[n] e^{-2πi kn/d}` and put the `1/d` on
//! the inverse.

use std::f64::consts::PI;

use super::{HrrError, HrrVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(len: usize) -> Self {
        Self {
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.re[k].hypot(self.im[k])
    }

    /// Bin `k` equals the conjugate of bin `d - k` for every `k`.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let d = self.len();
        (0..d).all(|k| {
            let j = (d - k) % d;
            (self.re[k] - self.re[j]).abs() <= tol && (self.im[k] + self.im[j]).abs() <= tol
        })
    }

    /// Bin-wise complex product.
    pub fn mul(&self, other: &Spectrum) -> Spectrum {
        let mut out = Spectrum::zeros(self.len());
        for k in 0..self.len() {
            let (a, b) = (self.re[k], self.im[k]);
            let (c, d) = (other.re[k], other.im[k]);
            out.re[k] = a * c - b * d;
            out.im[k] = a * d + b * c;
        }
        out
    }

    pub fn conj(&self) -> Spectrum {
        Spectrum {
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }
}

/// Forward transform of an arbitrary-length real slice. No validation.
pub fn forward_real(x: &[f64]) -> Spectrum {
    let mut re = x.to_vec();
    let mut im = vec![0.0; x.len()];
    transform(&mut re, &mut im, false);
    Spectrum { re, im }
}

/// Inverse transform, keeping only the real part.
pub fn inverse_real(s: &Spectrum) -> Vec<f64> {
    let mut re = s.re.clone();
    let mut im = s.im.clone();
    transform(&mut re, &mut im, true);
    re
}

pub fn dft(v: &HrrVector) -> Spectrum {
    forward_real(v.values())
}

pub fn idft(s: &Spectrum) -> Result<HrrVector, HrrError> {
    if s.re.len() != s.im.len() {
        return Err(HrrError::DimensionMismatch {
            left: s.re.len(),
            right: s.im.len(),
        });
    }
    if s.re.iter().chain(&s.im).any(|v| !v.is_finite()) {
        return Err(HrrError::NonFinite);
    }
    HrrVector::new(inverse_real(s))
}

fn transform(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    if n.is_power_of_two() {
        fft_radix2(re, im, inverse);
    } else {
        let (r, i) = direct(re, im, inverse);
        re.copy_from_slice(&r);
        im.copy_from_slice(&i);
    }
    if inverse {
        let scale = 1.0 / n as f64;
        re.iter_mut().for_each(|v| *v *= scale);
        im.iter_mut().for_each(|v| *v *= scale);
    }
}

fn direct(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    // twiddle table indexed by (j*k mod n) keeps the angles exact
    let (cos_t, sin_t): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|m| {
            let a = 2.0 * PI * m as f64 / n as f64;
            (a.cos(), sign * a.sin())
        })
        .unzip();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            let m = (j * k) % n;
            sr += re[j] * cos_t[m] - im[j] * sin_t[m];
            si += re[j] * sin_t[m] + im[j] * cos_t[m];
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    (out_re, out_im)
}

fn fft_radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for k in 0..half {
            let a = sign * 2.0 * PI * k as f64 / len as f64;
            let (wr, wi) = (a.cos(), a.sin());
            let mut start = 0;
            while start < n {
                let p = start + k;
                let q = p + half;
                let tr = re[q] * wr - im[q] * wi;
                let ti = re[q] * wi + im[q] * wr;
                re[q] = re[p] - tr;
                im[q] = im[p] - ti;
                re[p] += tr;
                im[p] += ti;
                start += len;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: textbook double loop with angles computed per term.
    fn oracle(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (j, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * j) as f64 / n as f64;
                re[k] += v * a.cos();
                im[k] += v * a.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn zeros_map_to_zeros() {
        let s = dft(&HrrVector::new(vec![0.0; 4]).unwrap());
        assert!(s.re.iter().chain(&s.im).all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_is_flat() {
        let s = dft(&HrrVector::delta(4).unwrap());
        for k in 0..4 {
            assert!((s.re[k] - 1.0).abs() < 1e-15);
            assert!(s.im[k].abs() < 1e-15);
        }
    }

    #[test]
    fn one_two_three_four() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let s = dft(&HrrVector::new(x.to_vec()).unwrap());
        let (re, im) = oracle(&x);
        // oracle gives (10,0), (-2,2), (-2,0), (-2,-2)
        for k in 0..4 {
            assert!((s.re[k] - re[k]).abs() < 1e-9);
            assert!((s.im[k] - im[k]).abs() < 1e-9);
        }
        assert!((s.re[1] + 2.0).abs() < 1e-12 && (s.im[1] - 2.0).abs() < 1e-12);
        let back = idft(&s).unwrap();
        for (a, b) in back.values().iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fast_and_direct_paths_agree_with_oracle() {
        let mut rng = crate::rng::CounterRng::new(17);
        for n in [2usize, 3, 5, 6, 7, 8, 12, 16, 31, 64, 100] {
            let x: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let s = forward_real(&x);
            let (re, im) = oracle(&x);
            for k in 0..n {
                assert!((s.re[k] - re[k]).abs() < 1e-9, "n={n} k={k}");
                assert!((s.im[k] - im[k]).abs() < 1e-9, "n={n} k={k}");
            }
            assert!(s.is_conjugate_symmetric(1e-9));
            let back = inverse_real(&s);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear() {
        let mut rng = crate::rng::CounterRng::new(2);
        let a: Vec<f64> = (0..12).map(|_| rng.next_normal()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.next_normal()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + y).collect();
        let (sa, sb, ss) = (forward_real(&a), forward_real(&b), forward_real(&sum));
        for k in 0..12 {
            assert!((ss.re[k] - (2.0 * sa.re[k] + sb.re[k])).abs() < 1e-9);
            assert!((ss.im[k] - (2.0 * sa.im[k] + sb.im[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn idft_rejects_non_finite() {
        let mut s = Spectrum::zeros(4);
        s.re[1] = f64::NAN;
        assert!(matches!(idft(&s), Err(HrrError::NonFinite)));
    }
}
