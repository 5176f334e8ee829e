//! Convolutional classifier: conv stages, hidden dense layers, head.

use super::ops::{self, ConvGeom};
use super::spec::{conv_shapes, Activation, CnnSpec, ConvSpec, Head};
use super::{Dropout, NnError, ParamDecl, Tensor};

#[derive(Debug, Clone)]
struct ConvLayer {
    geom: ConvGeom,
    spec: ConvSpec,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct DenseLayer {
    inp: usize,
    out: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub struct CnnLayout {
    convs: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
    head: DenseLayer,
    tanh: bool,
}

#[derive(Debug, Clone)]
struct ConvTrace {
    col: Vec<f64>,
    pre: Vec<f64>,
    pool_idx: Option<Vec<usize>>,
    act_len: usize,
}

#[derive(Debug, Clone)]
struct DenseTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CnnTrace {
    convs: Vec<ConvTrace>,
    dense: Vec<DenseTrace>,
    head_input: Vec<f64>,
    output: Vec<f64>,
}

impl CnnLayout {
    pub fn new(
        spec: &CnnSpec,
        channels: usize,
        height: usize,
        width: usize,
        head: Head,
        decls: &mut Vec<ParamDecl>,
    ) -> Result<Self, NnError> {
        let shapes = conv_shapes(spec, height, width)?;
        let (mut c, mut h, mut w) = (channels, height, width);
        let mut convs = Vec::new();
        for (i, (conv, &(oc, oh, ow))) in spec.convs.iter().zip(&shapes).enumerate() {
            let geom = ConvGeom {
                in_ch: c,
                in_h: h,
                in_w: w,
                kernel: conv.kernel,
                stride: conv.stride,
            };
            let fan_in = geom.patch_len();
            let weight = ParamDecl::push_weight(decls, format!("conv{i}.weight"), vec![conv.filters, c, conv.kernel, conv.kernel], fan_in);
            let bias = ParamDecl::push_zeros(decls, format!("conv{i}.bias"), vec![conv.filters]);
            convs.push(ConvLayer {
                geom,
                spec: *conv,
                weight,
                bias,
            });
            (c, h, w) = (oc, oh, ow);
        }
        let mut inp = c * h * w;
        let mut dense = Vec::new();
        for (j, &out) in spec.dense.iter().enumerate() {
            let weight = ParamDecl::push_weight(decls, format!("dense{j}.weight"), vec![out, inp], inp);
            let bias = ParamDecl::push_zeros(decls, format!("dense{j}.bias"), vec![out]);
            dense.push(DenseLayer { inp, out, weight, bias });
            inp = out;
        }
        let out = head.width();
        let weight = ParamDecl::push_head(decls, head, inp);
        let bias = ParamDecl::push_zeros(decls, "head.bias".into(), vec![out]);
        Ok(Self {
            convs,
            dense,
            head: DenseLayer { inp, out, weight, bias },
            tanh: matches!(head, Head::Hrr { .. }),
        })
    }

    pub fn forward(&self, params: &[Tensor], input: &[f64], dropout: &mut Dropout) -> CnnTrace {
        let mut x = input.to_vec();
        let mut convs = Vec::with_capacity(self.convs.len());
        for layer in &self.convs {
            let g = &layer.geom;
            let col = ops::im2col(&x, g);
            let (f, p) = (layer.spec.filters, g.positions());
            let mut pre = ops::matmul(params[layer.weight].data(), &col, f, g.patch_len(), p);
            let bias = params[layer.bias].data();
            for (row, b) in pre.chunks_mut(p).zip(bias) {
                row.iter_mut().for_each(|v| *v += b);
            }
            let act: Vec<f64> = match layer.spec.activation {
                Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Identity => pre.clone(),
            };
            let act_len = act.len();
            let (next, pool_idx) = if layer.spec.pool > 1 {
                let (pooled, idx) = ops::maxpool(&act, f, g.out_h(), g.out_w(), layer.spec.pool);
                (pooled, Some(idx))
            } else {
                (act, None)
            };
            convs.push(ConvTrace {
                col,
                pre,
                pool_idx,
                act_len,
            });
            x = next;
        }
        let mut dense = Vec::with_capacity(self.dense.len());
        for layer in &self.dense {
            let pre = ops::linear_rows(&x, params[layer.weight].data(), params[layer.bias].data(), 1, layer.inp, layer.out);
            let mut h: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let mask = dropout.apply(&mut h);
            dense.push(DenseTrace { input: x, pre, mask });
            x = h;
        }
        let z = ops::linear_rows(&x, params[self.head.weight].data(), params[self.head.bias].data(), 1, self.head.inp, self.head.out);
        let output = if self.tanh { z.iter().map(|v| v.tanh()).collect() } else { z };
        CnnTrace {
            convs,
            dense,
            head_input: x,
            output,
        }
    }

    pub fn output<'a>(&self, trace: &'a CnnTrace) -> &'a [f64] {
        &trace.output
    }

    /// Accumulates parameter gradients into `grads` (if given) and returns
    /// the input gradient when `want_input` is set.
    pub fn backward(
        &self,
        params: &[Tensor],
        trace: &CnnTrace,
        dout: &[f64],
        mut grads: Option<&mut [Tensor]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let dz: Vec<f64> = if self.tanh {
            dout.iter().zip(&trace.output).map(|(g, y)| g * (1.0 - y * y)).collect()
        } else {
            dout.to_vec()
        };
        let mut scratch_w = vec![0.0; self.head.out * self.head.inp];
        let mut scratch_b = vec![0.0; self.head.out];
        let mut dx = ops::linear_rows_backward(
            &trace.head_input,
            params[self.head.weight].data(),
            &dz,
            1,
            self.head.inp,
            self.head.out,
            &mut scratch_w,
            &mut scratch_b,
            true,
        )
        .expect("requested dx");
        if let Some(g) = grads.as_deref_mut() {
            add_into(&mut g[self.head.weight], &scratch_w);
            add_into(&mut g[self.head.bias], &scratch_b);
        }
        for (layer, t) in self.dense.iter().zip(&trace.dense).rev() {
            if let Some(mask) = &t.mask {
                dx.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            let dpre: Vec<f64> = dx.iter().zip(&t.pre).map(|(d, &p)| if p > 0.0 { *d } else { 0.0 }).collect();
            let mut dw = vec![0.0; layer.out * layer.inp];
            let mut db = vec![0.0; layer.out];
            dx = ops::linear_rows_backward(&t.input, params[layer.weight].data(), &dpre, 1, layer.inp, layer.out, &mut dw, &mut db, true)
                .expect("requested dx");
            if let Some(g) = grads.as_deref_mut() {
                add_into(&mut g[layer.weight], &dw);
                add_into(&mut g[layer.bias], &db);
            }
        }
        for (i, (layer, t)) in self.convs.iter().zip(&trace.convs).enumerate().rev() {
            let g = &layer.geom;
            let dact = match &t.pool_idx {
                Some(idx) => ops::maxpool_backward(&dx, idx, t.act_len),
                None => dx,
            };
            let dpre: Vec<f64> = match layer.spec.activation {
                Activation::Relu => dact.iter().zip(&t.pre).map(|(d, &p)| if p > 0.0 { *d } else { 0.0 }).collect(),
                Activation::Identity => dact,
            };
            let (f, p, k) = (layer.spec.filters, g.positions(), g.patch_len());
            if let Some(gr) = grads.as_deref_mut() {
                let dw = ops::matmul_nt(&dpre, &t.col, f, p, k);
                add_into(&mut gr[layer.weight], &dw);
                let db: Vec<f64> = dpre.chunks(p).map(|r| r.iter().sum()).collect();
                add_into(&mut gr[layer.bias], &db);
            }
            if i == 0 && !want_input {
                return None;
            }
            let mut dcol = vec![0.0; k * p];
            ops::matmul_tn_acc(params[layer.weight].data(), &dpre, f, k, p, &mut dcol);
            dx = ops::col2im(&dcol, g);
        }
        want_input.then_some(dx)
    }
}

fn add_into(t: &mut Tensor, v: &[f64]) {
    for (a, b) in t.data_mut().iter_mut().zip(v) {
        *a += b;
    }
}
