//! Per-sample kernels and their adjoints.
//!
//! Matrices are row-major slices with explicit dimensions. Reductions use
//! a fixed four-lane accumulation order, so results are reproducible
//! regardless of the caller's threading.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[m,n] = a[m,k] · b[k,n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s != 0.0 {
                axpy(s, &b[p * n..(p + 1) * n], row);
            }
        }
    }
    out
}

/// `out[m,n] = a[m,k] · b[n,k]ᵀ`
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `out[m,n] += a[k,m]ᵀ · b[k,n]`
pub fn matmul_tn_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let s = a[p * m + i];
            if s != 0.0 {
                axpy(s, br, &mut out[i * n..(i + 1) * n]);
            }
        }
    }
}

/// Affine map over rows: `y[t,:] = W[out,in] · x[t,:] + b`.
pub fn linear_rows(x: &[f64], w: &[f64], b: &[f64], rows: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut y = matmul_nt(x, w, rows, inp, out);
    for r in 0..rows {
        for (yj, bj) in y[r * out..(r + 1) * out].iter_mut().zip(b) {
            *yj += bj;
        }
    }
    y
}

/// Adjoint of [`linear_rows`]; returns `dx` and accumulates `dW`, `db`.
pub fn linear_rows_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    rows: usize,
    inp: usize,
    out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    matmul_tn_acc(dy, x, rows, out, inp, dw);
    for r in 0..rows {
        for (d, g) in db.iter_mut().zip(&dy[r * out..(r + 1) * out]) {
            *d += g;
        }
    }
    want_dx.then(|| matmul(dy, w, rows, out, inp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// Unfold `[C,H,W]` into `[C·K·K, OH·OW]` (valid padding).
pub fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let p = oh * ow;
    let mut col = vec![0.0; g.patch_len() * p];
    for c in 0..g.in_ch {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = &x[(c * g.in_h + oy * s + ki) * g.in_w + kj..];
                    for ox in 0..ow {
                        dst[oy * ow + ox] = src[ox * s];
                    }
                }
            }
        }
    }
    col
}

/// Fold column gradients back onto the input grid.
pub fn col2im(col: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let p = oh * ow;
    let mut x = vec![0.0; g.in_ch * g.in_h * g.in_w];
    for c in 0..g.in_ch {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let base = (c * g.in_h + oy * s + ki) * g.in_w + kj;
                    for ox in 0..ow {
                        x[base + ox * s] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}

/// Non-overlapping `size × size` max pooling over `[C,H,W]`; trailing
/// rows/columns that do not fill a window are dropped. Returns the pooled
/// map and the flat input index chosen for each output.
pub fn maxpool(x: &[f64], ch: usize, h: usize, w: usize, size: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(ch * oh * ow);
    let mut idx = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (c * h + oy * size) * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = (c * h + oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub fn maxpool_backward(dy: &[f64], idx: &[usize], in_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; in_len];
    for (g, &i) in dy.iter().zip(idx) {
        dx[i] += g;
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Returns output, normalized rows and inverse stds.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], rows: usize, dim: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; rows * dim];
    let mut xhat = vec![0.0; rows * dim];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..dim {
            let xh = (row[j] - mean) * is;
            xhat[r * dim + j] = xh;
            y[r * dim + j] = xh * gamma[j] + beta[j];
        }
    }
    (y, xhat, inv_std)
}

pub fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    rows: usize,
    dim: usize,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * dim];
    let n = dim as f64;
    for r in 0..rows {
        let dyr = &dy[r * dim..(r + 1) * dim];
        let xh = &xhat[r * dim..(r + 1) * dim];
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for j in 0..dim {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            let d = dyr[j] * gamma[j];
            sum_d += d;
            sum_dx += d * xh[j];
        }
        for j in 0..dim {
            let d = dyr[j] * gamma[j];
            dx[r * dim + j] = inv_std[r] * (d - sum_d / n - xh[j] * sum_dx / n);
        }
    }
    dx
}

/// Softmax of each row in place.
pub fn softmax_rows(x: &mut [f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
}

/// Given row-softmax output `p` and upstream `dp`, the pre-softmax gradient.
pub fn softmax_rows_backward(p: &[f64], dp: &[f64], cols: usize) -> Vec<f64> {
    let mut dx = vec![0.0; p.len()];
    for ((pr, dr), out) in p.chunks(cols).zip(dp.chunks(cols)).zip(dx.chunks_mut(cols)) {
        let s = dot(pr, dr);
        for j in 0..cols {
            out[j] = pr[j] * (dr[j] - s);
        }
    }
    dx
}
