//! Pre-norm transformer encoder over non-overlapping image patches.
//!
//! Tokens get a learned per-position embedding; there is no class token.
//! The final layer-normed tokens are mean-pooled into the head.

use super::ops;
use super::spec::{Head, VitSpec};
use super::{Dropout, NnError, ParamDecl, Tensor};

#[derive(Debug, Clone)]
struct BlockParams {
    ln1_g: usize,
    ln1_b: usize,
    qkv_w: usize,
    qkv_b: usize,
    out_w: usize,
    out_b: usize,
    ln2_g: usize,
    ln2_b: usize,
    fc1_w: usize,
    fc1_b: usize,
    fc2_w: usize,
    fc2_b: usize,
}

#[derive(Debug, Clone)]
pub struct VitLayout {
    channels: usize,
    height: usize,
    width: usize,
    patch: usize,
    tokens: usize,
    patch_len: usize,
    dim: usize,
    heads: usize,
    hidden: usize,
    out: usize,
    tanh: bool,
    patch_w: usize,
    patch_b: usize,
    pos: usize,
    blocks: Vec<BlockParams>,
    lnf_g: usize,
    lnf_b: usize,
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    xhat1: Vec<f64>,
    is1: Vec<f64>,
    h1: Vec<f64>,
    qkv: Vec<f64>,
    attn: Vec<Vec<f64>>,
    o: Vec<f64>,
    mask_a: Option<Vec<f64>>,
    xhat2: Vec<f64>,
    is2: Vec<f64>,
    h2: Vec<f64>,
    f1: Vec<f64>,
    g: Vec<f64>,
    mask_f: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct VitTrace {
    patches: Vec<f64>,
    blocks: Vec<BlockTrace>,
    xhat_f: Vec<f64>,
    is_f: Vec<f64>,
    pooled: Vec<f64>,
    output: Vec<f64>,
}

impl VitLayout {
    pub fn new(
        spec: &VitSpec,
        channels: usize,
        height: usize,
        width: usize,
        head: Head,
        decls: &mut Vec<ParamDecl>,
    ) -> Result<Self, NnError> {
        let p = spec.patch_size;
        let tokens = (height / p) * (width / p);
        let patch_len = p * p * channels;
        let d = spec.embed_dim;
        let hidden = d * spec.mlp_ratio;
        let patch_w = ParamDecl::push_weight(decls, "patch.weight".into(), vec![d, patch_len], patch_len);
        let patch_b = ParamDecl::push_zeros(decls, "patch.bias".into(), vec![d]);
        let pos = ParamDecl::push_uniform(decls, "pos".into(), vec![tokens, d], 0.02);
        let mut blocks = Vec::with_capacity(spec.num_blocks);
        for b in 0..spec.num_blocks {
            let n = |s: &str| format!("block{b}.{s}");
            blocks.push(BlockParams {
                ln1_g: ParamDecl::push_ones(decls, n("ln1.gamma"), vec![d]),
                ln1_b: ParamDecl::push_zeros(decls, n("ln1.beta"), vec![d]),
                qkv_w: ParamDecl::push_weight(decls, n("attn.qkv.weight"), vec![3 * d, d], d),
                qkv_b: ParamDecl::push_zeros(decls, n("attn.qkv.bias"), vec![3 * d]),
                out_w: ParamDecl::push_weight(decls, n("attn.out.weight"), vec![d, d], d),
                out_b: ParamDecl::push_zeros(decls, n("attn.out.bias"), vec![d]),
                ln2_g: ParamDecl::push_ones(decls, n("ln2.gamma"), vec![d]),
                ln2_b: ParamDecl::push_zeros(decls, n("ln2.beta"), vec![d]),
                fc1_w: ParamDecl::push_weight(decls, n("mlp.fc1.weight"), vec![hidden, d], d),
                fc1_b: ParamDecl::push_zeros(decls, n("mlp.fc1.bias"), vec![hidden]),
                fc2_w: ParamDecl::push_weight(decls, n("mlp.fc2.weight"), vec![d, hidden], hidden),
                fc2_b: ParamDecl::push_zeros(decls, n("mlp.fc2.bias"), vec![d]),
            });
        }
        let lnf_g = ParamDecl::push_ones(decls, "final_ln.gamma".into(), vec![d]);
        let lnf_b = ParamDecl::push_zeros(decls, "final_ln.beta".into(), vec![d]);
        let out = head.width();
        let head_w = ParamDecl::push_head(decls, head, d);
        let head_b = ParamDecl::push_zeros(decls, "head.bias".into(), vec![out]);
        Ok(Self {
            channels,
            height,
            width,
            patch: p,
            tokens,
            patch_len,
            dim: d,
            heads: spec.num_heads,
            hidden,
            out,
            tanh: matches!(head, Head::Hrr { .. }),
            patch_w,
            patch_b,
            pos,
            blocks,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
        })
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    /// Flat index of each patch element into the `[C,H,W]` input.
    fn patch_index(&self, token: usize, j: usize) -> usize {
        let per_row = self.width / self.patch;
        let (ty, tx) = (token / per_row, token % per_row);
        let pp = self.patch * self.patch;
        let (c, r) = (j / pp, j % pp);
        let (dy, dx) = (r / self.patch, r % self.patch);
        (c * self.height + ty * self.patch + dy) * self.width + tx * self.patch + dx
    }

    fn extract_patches(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.tokens * self.patch_len];
        for t in 0..self.tokens {
            for j in 0..self.patch_len {
                out[t * self.patch_len + j] = input[self.patch_index(t, j)];
            }
        }
        out
    }

    /// Embedded tokens before the first block.
    pub fn embed(&self, params: &[Tensor], input: &[f64]) -> Vec<f64> {
        let patches = self.extract_patches(input);
        self.embed_patches(params, &patches)
    }

    fn embed_patches(&self, params: &[Tensor], patches: &[f64]) -> Vec<f64> {
        let mut x = ops::linear_rows(patches, params[self.patch_w].data(), params[self.patch_b].data(), self.tokens, self.patch_len, self.dim);
        for (a, b) in x.iter_mut().zip(params[self.pos].data()) {
            *a += b;
        }
        x
    }

    pub fn forward(&self, params: &[Tensor], input: &[f64], dropout: &mut Dropout) -> VitTrace {
        let (t, d) = (self.tokens, self.dim);
        let patches = self.extract_patches(input);
        let mut x = self.embed_patches(params, &patches);
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for bp in &self.blocks {
            let (h1, xhat1, is1) = ops::layer_norm(&x, params[bp.ln1_g].data(), params[bp.ln1_b].data(), t, d);
            let qkv = ops::linear_rows(&h1, params[bp.qkv_w].data(), params[bp.qkv_b].data(), t, d, 3 * d);
            let mut o = vec![0.0; t * d];
            let mut attn = Vec::with_capacity(self.heads);
            for hd in 0..self.heads {
                let q = columns(&qkv, t, 3 * d, hd * dh, dh);
                let k = columns(&qkv, t, 3 * d, d + hd * dh, dh);
                let v = columns(&qkv, t, 3 * d, 2 * d + hd * dh, dh);
                let mut s = ops::matmul_nt(&q, &k, t, dh, t);
                s.iter_mut().for_each(|e| *e *= scale);
                ops::softmax_rows(&mut s, t);
                let oh = ops::matmul(&s, &v, t, t, dh);
                scatter_columns(&mut o, &oh, t, d, hd * dh, dh);
                attn.push(s);
            }
            let mut a = ops::linear_rows(&o, params[bp.out_w].data(), params[bp.out_b].data(), t, d, d);
            let mask_a = dropout.apply(&mut a);
            x.iter_mut().zip(&a).for_each(|(xi, ai)| *xi += ai);
            let (h2, xhat2, is2) = ops::layer_norm(&x, params[bp.ln2_g].data(), params[bp.ln2_b].data(), t, d);
            let f1 = ops::linear_rows(&h2, params[bp.fc1_w].data(), params[bp.fc1_b].data(), t, d, self.hidden);
            let g: Vec<f64> = f1.iter().map(|&v| ops::gelu(v)).collect();
            let mut f2 = ops::linear_rows(&g, params[bp.fc2_w].data(), params[bp.fc2_b].data(), t, self.hidden, d);
            let mask_f = dropout.apply(&mut f2);
            x.iter_mut().zip(&f2).for_each(|(xi, fi)| *xi += fi);
            blocks.push(BlockTrace {
                xhat1,
                is1,
                h1,
                qkv,
                attn,
                o,
                mask_a,
                xhat2,
                is2,
                h2,
                f1,
                g,
                mask_f,
            });
        }
        let (hf, xhat_f, is_f) = ops::layer_norm(&x, params[self.lnf_g].data(), params[self.lnf_b].data(), t, d);
        let mut pooled = vec![0.0; d];
        for row in hf.chunks(d) {
            pooled.iter_mut().zip(row).for_each(|(p, v)| *p += v);
        }
        pooled.iter_mut().for_each(|p| *p /= t as f64);
        let z = ops::linear_rows(&pooled, params[self.head_w].data(), params[self.head_b].data(), 1, d, self.out);
        let output = if self.tanh { z.iter().map(|v| v.tanh()).collect() } else { z };
        VitTrace {
            patches,
            blocks,
            xhat_f,
            is_f,
            pooled,
            output,
        }
    }

    pub fn output<'a>(&self, trace: &'a VitTrace) -> &'a [f64] {
        &trace.output
    }

    pub fn backward(
        &self,
        params: &[Tensor],
        trace: &VitTrace,
        dout: &[f64],
        mut grads: Option<&mut [Tensor]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (t, d) = (self.tokens, self.dim);
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut local: Vec<Vec<f64>> = Vec::new();
        // Per-sample parameter gradients land in `local` first and are added
        // to `grads` at the end, keeping the summation order fixed.
        let slot = |idx: usize, local: &mut Vec<Vec<f64>>| -> usize {
            local.push(vec![0.0; params[idx].len()]);
            local.len() - 1
        };
        let mut targets: Vec<usize> = Vec::new();

        let dz: Vec<f64> = if self.tanh {
            dout.iter().zip(&trace.output).map(|(g, y)| g * (1.0 - y * y)).collect()
        } else {
            dout.to_vec()
        };
        let (hw, hb) = (slot(self.head_w, &mut local), slot(self.head_b, &mut local));
        targets.extend([self.head_w, self.head_b]);
        let (mut gw, mut gb) = (std::mem::take(&mut local[hw]), std::mem::take(&mut local[hb]));
        let dpooled = ops::linear_rows_backward(&trace.pooled, params[self.head_w].data(), &dz, 1, d, self.out, &mut gw, &mut gb, true)
            .expect("requested dx");
        local[hw] = gw;
        local[hb] = gb;

        let mut dhf = vec![0.0; t * d];
        for row in dhf.chunks_mut(d) {
            row.iter_mut().zip(&dpooled).for_each(|(r, p)| *r = p / t as f64);
        }
        let (fg, fb) = (slot(self.lnf_g, &mut local), slot(self.lnf_b, &mut local));
        targets.extend([self.lnf_g, self.lnf_b]);
        let (mut gg, mut gbb) = (std::mem::take(&mut local[fg]), std::mem::take(&mut local[fb]));
        let mut dx = ops::layer_norm_backward(&dhf, &trace.xhat_f, &trace.is_f, params[self.lnf_g].data(), t, d, &mut gg, &mut gbb);
        local[fg] = gg;
        local[fb] = gbb;

        for (bp, bt) in self.blocks.iter().zip(&trace.blocks).rev() {
            // MLP branch
            let mut df2 = dx.clone();
            if let Some(m) = &bt.mask_f {
                df2.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
            }
            let mut w2 = vec![0.0; params[bp.fc2_w].len()];
            let mut b2 = vec![0.0; params[bp.fc2_b].len()];
            let dg = ops::linear_rows_backward(&bt.g, params[bp.fc2_w].data(), &df2, t, self.hidden, d, &mut w2, &mut b2, true)
                .expect("requested dx");
            let df1: Vec<f64> = dg.iter().zip(&bt.f1).map(|(g, &f)| g * ops::gelu_grad(f)).collect();
            let mut w1 = vec![0.0; params[bp.fc1_w].len()];
            let mut b1 = vec![0.0; params[bp.fc1_b].len()];
            let dh2 = ops::linear_rows_backward(&bt.h2, params[bp.fc1_w].data(), &df1, t, d, self.hidden, &mut w1, &mut b1, true)
                .expect("requested dx");
            let mut g2 = vec![0.0; d];
            let mut be2 = vec![0.0; d];
            let dln2 = ops::layer_norm_backward(&dh2, &bt.xhat2, &bt.is2, params[bp.ln2_g].data(), t, d, &mut g2, &mut be2);
            dx.iter_mut().zip(&dln2).for_each(|(a, b)| *a += b);

            // attention branch
            let mut da = dx.clone();
            if let Some(m) = &bt.mask_a {
                da.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
            }
            let mut wo = vec![0.0; params[bp.out_w].len()];
            let mut bo = vec![0.0; params[bp.out_b].len()];
            let d_o = ops::linear_rows_backward(&bt.o, params[bp.out_w].data(), &da, t, d, d, &mut wo, &mut bo, true)
                .expect("requested dx");
            let mut dqkv = vec![0.0; t * 3 * d];
            for hd in 0..self.heads {
                let q = columns(&bt.qkv, t, 3 * d, hd * dh, dh);
                let k = columns(&bt.qkv, t, 3 * d, d + hd * dh, dh);
                let v = columns(&bt.qkv, t, 3 * d, 2 * d + hd * dh, dh);
                let a = &bt.attn[hd];
                let doh = columns(&d_o, t, d, hd * dh, dh);
                let dattn = ops::matmul_nt(&doh, &v, t, dh, t);
                let mut dv = vec![0.0; t * dh];
                ops::matmul_tn_acc(a, &doh, t, t, dh, &mut dv);
                let mut ds = ops::softmax_rows_backward(a, &dattn, t);
                ds.iter_mut().for_each(|e| *e *= scale);
                let dq = ops::matmul(&ds, &k, t, t, dh);
                let mut dk = vec![0.0; t * dh];
                ops::matmul_tn_acc(&ds, &q, t, t, dh, &mut dk);
                scatter_columns(&mut dqkv, &dq, t, 3 * d, hd * dh, dh);
                scatter_columns(&mut dqkv, &dk, t, 3 * d, d + hd * dh, dh);
                scatter_columns(&mut dqkv, &dv, t, 3 * d, 2 * d + hd * dh, dh);
            }
            let mut wqkv = vec![0.0; params[bp.qkv_w].len()];
            let mut bqkv = vec![0.0; params[bp.qkv_b].len()];
            let dh1 = ops::linear_rows_backward(&bt.h1, params[bp.qkv_w].data(), &dqkv, t, d, 3 * d, &mut wqkv, &mut bqkv, true)
                .expect("requested dx");
            let mut g1 = vec![0.0; d];
            let mut be1 = vec![0.0; d];
            let dln1 = ops::layer_norm_backward(&dh1, &bt.xhat1, &bt.is1, params[bp.ln1_g].data(), t, d, &mut g1, &mut be1);
            dx.iter_mut().zip(&dln1).for_each(|(a, b)| *a += b);

            for (idx, g) in [
                (bp.fc2_w, w2),
                (bp.fc2_b, b2),
                (bp.fc1_w, w1),
                (bp.fc1_b, b1),
                (bp.ln2_g, g2),
                (bp.ln2_b, be2),
                (bp.out_w, wo),
                (bp.out_b, bo),
                (bp.qkv_w, wqkv),
                (bp.qkv_b, bqkv),
                (bp.ln1_g, g1),
                (bp.ln1_b, be1),
            ] {
                targets.push(idx);
                local.push(g);
            }
        }

        // embedding
        targets.push(self.pos);
        local.push(dx.clone());
        let mut we = vec![0.0; params[self.patch_w].len()];
        let mut be = vec![0.0; params[self.patch_b].len()];
        let dpatches =
            ops::linear_rows_backward(&trace.patches, params[self.patch_w].data(), &dx, t, self.patch_len, d, &mut we, &mut be, want_input);
        targets.extend([self.patch_w, self.patch_b]);
        local.push(we);
        local.push(be);

        if let Some(g) = grads.as_deref_mut() {
            for (idx, vals) in targets.iter().zip(&local) {
                for (a, b) in g[*idx].data_mut().iter_mut().zip(vals) {
                    *a += b;
                }
            }
        }

        dpatches.map(|dp| {
            let mut dimg = vec![0.0; self.channels * self.height * self.width];
            for tok in 0..t {
                for j in 0..self.patch_len {
                    dimg[self.patch_index(tok, j)] += dp[tok * self.patch_len + j];
                }
            }
            dimg
        })
    }
}

/// Copy `width` columns starting at `start` out of a `[rows, stride]` matrix.
fn columns(m: &[f64], rows: usize, stride: usize, start: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&m[r * stride + start..r * stride + start + width]);
    }
    out
}

fn scatter_columns(m: &mut [f64], src: &[f64], rows: usize, stride: usize, start: usize, width: usize) {
    for r in 0..rows {
        m[r * stride + start..r * stride + start + width].copy_from_slice(&src[r * width..(r + 1) * width]);
    }
}
