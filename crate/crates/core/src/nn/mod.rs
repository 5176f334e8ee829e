//! Small trainable networks with hand-written backpropagation.
//!
//! Inputs are images laid out `[H, W, C]` with pixel values in `[0, 1]`.
//! A [`ModelState`] owns the parameters; [`ModelState::forward`] returns a
//! [`BatchCache`] that [`ModelState::backward`] consumes. The cache carries
//! the parameter version it was produced under, so a cache that outlives an
//! optimizer step is rejected instead of silently producing wrong gradients.

pub mod checkpoint;
pub mod cnn;
pub mod ops;
pub mod optim;
pub mod spec;
pub mod tensor;
pub mod train;
pub mod vit;

use thiserror::Error;

use crate::loss::LossError;
use crate::parallel;
use crate::rng::CounterRng;

pub use spec::{Activation, Arch, CnnSpec, ConvSpec, Head, ModelSpec, VitSpec};
pub use tensor::Tensor;

use cnn::{CnnLayout, CnnTrace};
use vit::{VitLayout, VitTrace};

const TAG_INIT: u64 = 0x494E_4954;
const TAG_DROPOUT: u64 = 0x4452_4F50;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("input {index} has {got} values, expected {expected}")]
    InputSize { index: usize, expected: usize, got: usize },
    #[error("stale cache: produced at parameter version {cache}, model is at {model}")]
    StaleCache { cache: u64, model: u64 },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamInit {
    Uniform(f64),
    Zeros,
    Ones,
}

/// A parameter tensor as declared by a layout, before initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

impl ParamDecl {
    fn push(decls: &mut Vec<ParamDecl>, name: String, shape: Vec<usize>, init: ParamInit) -> usize {
        decls.push(ParamDecl { name, shape, init });
        decls.len() - 1
    }

    /// Uniform in ±√(6/fan_in).
    pub fn push_weight(decls: &mut Vec<ParamDecl>, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        let limit = (6.0 / fan_in as f64).sqrt();
        Self::push(decls, name, shape, ParamInit::Uniform(limit))
    }

    /// Output layer weights. The HRR head is scaled down by `1/√H` so the
    /// initial tanh outputs start near the magnitude of the bound targets.
    pub fn push_head(decls: &mut Vec<ParamDecl>, head: Head, fan_in: usize) -> usize {
        let mut limit = (6.0 / fan_in as f64).sqrt();
        if let Head::Hrr { feature_dim } = head {
            limit /= (feature_dim as f64).sqrt();
        }
        Self::push(decls, "head.weight".into(), vec![head.width(), fan_in], ParamInit::Uniform(limit))
    }

    pub fn push_uniform(decls: &mut Vec<ParamDecl>, name: String, shape: Vec<usize>, limit: f64) -> usize {
        Self::push(decls, name, shape, ParamInit::Uniform(limit))
    }

    pub fn push_zeros(decls: &mut Vec<ParamDecl>, name: String, shape: Vec<usize>) -> usize {
        Self::push(decls, name, shape, ParamInit::Zeros)
    }

    pub fn push_ones(decls: &mut Vec<ParamDecl>, name: String, shape: Vec<usize>) -> usize {
        Self::push(decls, name, shape, ParamInit::Ones)
    }
}

/// Inverted dropout: kept units are scaled by `1/(1-rate)` so eval mode is
/// the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<CounterRng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, rng: CounterRng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    /// Masks `x` in place and returns the mask, or `None` when inactive.
    pub fn apply(&mut self, x: &mut [f64]) -> Option<Vec<f64>> {
        let rng = self.rng.as_mut()?;
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len()).map(|_| if rng.next_f64() < self.rate { 0.0 } else { keep }).collect();
        x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Some(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks for sample `i` of the batch come from the stream
    /// `(seed, step, i)`.
    Train { step: u64 },
}

#[derive(Debug, Clone)]
enum Layout {
    Cnn(CnnLayout),
    Vit(VitLayout),
}

#[derive(Debug, Clone)]
enum Trace {
    Cnn(CnnTrace),
    Vit(VitTrace),
}

impl Layout {
    fn build(spec: &ModelSpec) -> Result<(Self, Vec<ParamDecl>), NnError> {
        spec.validate()?;
        let mut decls = Vec::new();
        let layout = match &spec.arch {
            Arch::Cnn(c) => Layout::Cnn(CnnLayout::new(c, spec.channels, spec.height, spec.width, spec.head, &mut decls)?),
            Arch::Vit(v) => Layout::Vit(VitLayout::new(v, spec.channels, spec.height, spec.width, spec.head, &mut decls)?),
        };
        Ok((layout, decls))
    }

    fn forward(&self, params: &[Tensor], chw: &[f64], dropout: &mut Dropout) -> Trace {
        match self {
            Layout::Cnn(l) => Trace::Cnn(l.forward(params, chw, dropout)),
            Layout::Vit(l) => Trace::Vit(l.forward(params, chw, dropout)),
        }
    }

    fn output<'a>(&self, trace: &'a Trace) -> &'a [f64] {
        match (self, trace) {
            (Layout::Cnn(l), Trace::Cnn(t)) => l.output(t),
            (Layout::Vit(l), Trace::Vit(t)) => l.output(t),
            _ => unreachable!("trace from a different architecture"),
        }
    }

    fn backward(&self, params: &[Tensor], trace: &Trace, dout: &[f64], grads: Option<&mut [Tensor]>, want_input: bool) -> Option<Vec<f64>> {
        match (self, trace) {
            (Layout::Cnn(l), Trace::Cnn(t)) => l.backward(params, t, dout, grads, want_input),
            (Layout::Vit(l), Trace::Vit(t)) => l.backward(params, t, dout, grads, want_input),
            _ => unreachable!("trace from a different architecture"),
        }
    }
}

/// Activation record for one batch.
#[derive(Debug, Clone)]
pub struct BatchCache {
    version: u64,
    traces: Vec<Trace>,
    outputs: Vec<f64>,
    width: usize,
}

impl BatchCache {
    /// Row-major `[B, width]` outputs.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn batch_size(&self) -> usize {
        self.traces.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone)]
pub struct ModelState {
    spec: ModelSpec,
    layout: Layout,
    names: Vec<String>,
    params: Vec<Tensor>,
    seed: u64,
    version: u64,
}

/// Builds a freshly initialized model.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelState, NnError> {
    ModelState::init(spec, seed)
}

impl ModelState {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let (layout, decls) = Layout::build(spec)?;
        let mut names = Vec::with_capacity(decls.len());
        let mut params = Vec::with_capacity(decls.len());
        for (i, d) in decls.into_iter().enumerate() {
            let mut t = Tensor::zeros(&d.shape);
            match d.init {
                ParamInit::Zeros => {}
                ParamInit::Ones => t.fill(1.0),
                ParamInit::Uniform(limit) => {
                    let mut rng = CounterRng::derive(seed, &[TAG_INIT, i as u64]);
                    t.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-limit, limit));
                }
            }
            names.push(d.name);
            params.push(t);
        }
        Ok(Self {
            spec: spec.clone(),
            layout,
            names,
            params,
            seed,
            version: 0,
        })
    }

    /// Rebuilds a model from stored tensors; names and shapes must match
    /// the layout implied by `spec`.
    pub fn from_tensors(spec: &ModelSpec, seed: u64, tensors: Vec<(String, Tensor)>) -> Result<Self, NnError> {
        let (layout, decls) = Layout::build(spec)?;
        if decls.len() != tensors.len() {
            return Err(NnError::Format(format!("expected {} tensors, found {}", decls.len(), tensors.len())));
        }
        let mut names = Vec::with_capacity(decls.len());
        let mut params = Vec::with_capacity(decls.len());
        for (d, (name, t)) in decls.into_iter().zip(tensors) {
            if d.name != name || d.shape != t.shape() {
                return Err(NnError::Format(format!(
                    "tensor `{name}` {:?} does not match `{}` {:?}",
                    t.shape(),
                    d.name,
                    d.shape
                )));
            }
            if !t.is_finite() {
                return Err(NnError::NonFinite(name));
            }
            names.push(name);
            params.push(t);
        }
        Ok(Self {
            spec: spec.clone(),
            layout,
            names,
            params,
            seed,
            version: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable access bumps the version, invalidating outstanding caches.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// Number of ViT tokens, or `None` for a CNN.
    pub fn tokens(&self) -> Option<usize> {
        match &self.layout {
            Layout::Vit(v) => Some(v.tokens()),
            Layout::Cnn(_) => None,
        }
    }

    /// Token embeddings (patch projection plus positions) for one image.
    pub fn embed_tokens(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let chw = self.to_chw(0, input)?;
        match &self.layout {
            Layout::Vit(v) => Ok(v.embed(&self.params, &chw)),
            Layout::Cnn(_) => Err(NnError::Spec("cnn has no token embedding".into())),
        }
    }

    fn to_chw(&self, index: usize, hwc: &[f64]) -> Result<Vec<f64>, NnError> {
        let (h, w, c) = (self.spec.height, self.spec.width, self.spec.channels);
        if hwc.len() != h * w * c {
            return Err(NnError::InputSize {
                index,
                expected: h * w * c,
                got: hwc.len(),
            });
        }
        if c == 1 {
            return Ok(hwc.to_vec());
        }
        let mut out = vec![0.0; hwc.len()];
        for p in 0..h * w {
            for ch in 0..c {
                out[ch * h * w + p] = hwc[p * c + ch];
            }
        }
        Ok(out)
    }

    fn to_hwc(&self, chw: Vec<f64>) -> Vec<f64> {
        let (h, w, c) = (self.spec.height, self.spec.width, self.spec.channels);
        if c == 1 {
            return chw;
        }
        let mut out = vec![0.0; chw.len()];
        for p in 0..h * w {
            for ch in 0..c {
                out[p * c + ch] = chw[ch * h * w + p];
            }
        }
        out
    }

    fn dropout_for(&self, mode: Mode, sample: usize) -> Dropout {
        match mode {
            Mode::Eval => Dropout::off(),
            Mode::Train { step } => Dropout::new(self.spec.dropout, CounterRng::derive(self.seed, &[TAG_DROPOUT, step, sample as u64])),
        }
    }

    pub fn forward<I: AsRef<[f64]> + Sync>(&self, batch: &[I], mode: Mode) -> Result<BatchCache, NnError> {
        let chw = batch
            .iter()
            .enumerate()
            .map(|(i, x)| self.to_chw(i, x.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let traces = parallel::map(chw.len(), |i| {
            let mut dropout = self.dropout_for(mode, i);
            self.layout.forward(&self.params, &chw[i], &mut dropout)
        });
        let width = self.spec.output_len();
        let mut outputs = Vec::with_capacity(traces.len() * width);
        for (i, t) in traces.iter().enumerate() {
            let out = self.layout.output(t);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("output of sample {i}")));
            }
            outputs.extend_from_slice(out);
        }
        Ok(BatchCache {
            version: self.version,
            traces,
            outputs,
            width,
        })
    }

    /// Eval-mode outputs, row-major `[B, width]`.
    pub fn predict<I: AsRef<[f64]> + Sync>(&self, batch: &[I]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(batch, Mode::Eval)?.outputs)
    }

    /// Parameter gradients of `Σ_b ⟨dout_b, y_b⟩`. Per-sample gradients are
    /// summed in batch order, so the result does not depend on threading.
    pub fn backward(&self, cache: &BatchCache, dout: &[f64]) -> Result<Vec<Tensor>, NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        if dout.len() != cache.outputs.len() {
            return Err(NnError::Shape(format!("output gradient has {} values, expected {}", dout.len(), cache.outputs.len())));
        }
        let w = cache.width;
        let mut total = self.zero_grads();
        const WINDOW: usize = 64;
        let mut start = 0;
        while start < cache.traces.len() {
            let end = (start + WINDOW).min(cache.traces.len());
            let per_sample = parallel::map(end - start, |j| {
                let i = start + j;
                let mut g = self.zero_grads();
                self.layout.backward(&self.params, &cache.traces[i], &dout[i * w..(i + 1) * w], Some(&mut g), false);
                g
            });
            for g in &per_sample {
                for (t, s) in total.iter_mut().zip(g) {
                    t.add_assign(s);
                }
            }
            start = end;
        }
        if total.iter().any(|t| !t.is_finite()) {
            return Err(NnError::NonFinite("parameter gradients".into()));
        }
        Ok(total)
    }

    /// Gradient of `⟨dout, f(x)⟩` with respect to the eval-mode input, laid
    /// out like the input.
    pub fn input_gradient(&self, input: &[f64], dout: &[f64]) -> Result<Vec<f64>, NnError> {
        let chw = self.to_chw(0, input)?;
        if dout.len() != self.spec.output_len() {
            return Err(NnError::Shape(format!("output gradient has {} values, expected {}", dout.len(), self.spec.output_len())));
        }
        let trace = self.layout.forward(&self.params, &chw, &mut Dropout::off());
        let g = self.layout.backward(&self.params, &trace, dout, None, true).expect("requested input gradient");
        Ok(self.to_hwc(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};

    fn tiny_cnn() -> ModelSpec {
        let conv = |filters, kernel, pool| ConvSpec {
            filters,
            kernel,
            stride: 1,
            activation: Activation::Relu,
            pool,
        };
        ModelSpec {
            height: 8,
            width: 8,
            channels: 1,
            arch: Arch::Cnn(CnnSpec {
                convs: vec![conv(3, 3, 2), conv(4, 2, 1)],
                dense: vec![6],
            }),
            head: Head::Hrr { feature_dim: 5 },
            dropout: 0.0,
        }
    }

    fn tiny_vit(head: Head) -> ModelSpec {
        ModelSpec {
            height: 16,
            width: 16,
            channels: 1,
            arch: Arch::Vit(VitSpec {
                patch_size: 4,
                embed_dim: 8,
                num_heads: 1,
                num_blocks: 1,
                mlp_ratio: 2,
            }),
            head,
            dropout: 0.0,
        }
    }

    fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = CounterRng::new(seed);
        (0..n).map(|_| (0..len).map(|_| rng.next_f64()).collect()).collect()
    }

    /// Compares analytic parameter and input gradients of `⟨r, f(x)⟩`
    /// against central differences at a sample of coordinates.
    fn check_gradients(spec: &ModelSpec, seed: u64) -> f64 {
        let mut state = ModelState::init(spec, seed).unwrap();
        // nonzero biases exercise the bias paths
        let mut rng = CounterRng::new(seed ^ 0xABCD);
        for t in state.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.uniform(-0.1, 0.1));
        }
        let x = random_inputs(2, spec.input_len(), seed + 1);
        let r: Vec<f64> = (0..2 * spec.output_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let objective = |s: &ModelState, x: &[Vec<f64>]| -> f64 {
            let y = s.predict(x).unwrap();
            y.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let cache = state.forward(&x, Mode::Eval).unwrap();
        let grads = state.backward(&cache, &r).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..state.params().len() {
            let n = state.params()[p].len();
            let coords: Vec<usize> = (0..n.min(6)).map(|k| (k * 7919 + p) % n).collect();
            for &c in &coords {
                let base = state.params()[p].data()[c];
                let numeric = central_difference(
                    |v| {
                        let mut s = state.clone();
                        s.params_mut()[p].data_mut()[c] = v[0];
                        objective(&s, &x)
                    },
                    &[base],
                    1e-5,
                )[0];
                let analytic = grads[p].data()[c];
                worst = worst.max(relative_error(analytic, numeric, 1e-6));
            }
        }
        let gx = state.input_gradient(&x[0], &r[..spec.output_len()]).unwrap();
        for c in (0..spec.input_len()).step_by(5) {
            let numeric = central_difference(
                |v| {
                    let mut xi = x[0].clone();
                    xi[c] = v[0];
                    let y = state.predict(&[xi]).unwrap();
                    y.iter().zip(&r).map(|(a, b)| a * b).sum()
                },
                &[x[0][c]],
                1e-5,
            )[0];
            worst = worst.max(relative_error(gx[c], numeric, 1e-6));
        }
        worst
    }

    #[test]
    fn small_cnn_gradients() {
        for seed in 0..10 {
            let err = check_gradients(&tiny_cnn(), seed);
            assert!(err < 1e-3, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn tiny_vit_gradients() {
        for seed in 0..10 {
            let head = if seed % 2 == 0 { Head::Hrr { feature_dim: 6 } } else { Head::Ce { num_classes: 3 } };
            let err = check_gradients(&tiny_vit(head), seed);
            assert!(err < 1e-3, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn multi_head_vit_gradients() {
        let mut spec = tiny_vit(Head::Hrr { feature_dim: 4 });
        spec.arch = Arch::Vit(VitSpec {
            patch_size: 4,
            embed_dim: 8,
            num_heads: 2,
            num_blocks: 2,
            mlp_ratio: 2,
        });
        let err = check_gradients(&spec, 3);
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let spec = ModelSpec {
            height: 1,
            width: 3,
            channels: 1,
            arch: Arch::Cnn(CnnSpec { convs: vec![], dense: vec![] }),
            head: Head::Ce { num_classes: 2 },
            dropout: 0.0,
        };
        let state = ModelState::init(&spec, 1).unwrap();
        let x = vec![vec![0.5, -1.0, 2.0]];
        let g = [0.3, -0.7];
        let cache = state.forward(&x, Mode::Eval).unwrap();
        let grads = state.backward(&cache, &g).unwrap();
        let w = &grads[state.names().iter().position(|n| n == "head.weight").unwrap()];
        for i in 0..2 {
            for j in 0..3 {
                assert!((w.data()[i * 3 + j] - g[i] * x[0][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_input_through_bias_free_chain_gives_zero() {
        let spec = ModelSpec {
            height: 4,
            width: 4,
            channels: 1,
            arch: Arch::Cnn(CnnSpec { convs: vec![], dense: vec![8] }),
            head: Head::Hrr { feature_dim: 6 },
            dropout: 0.0,
        };
        let state = ModelState::init(&spec, 9).unwrap();
        let y = state.predict(&[vec![0.0; 16]]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let spec = ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 });
        let a = ModelState::init(&spec, 5).unwrap();
        let b = ModelState::init(&spec, 5).unwrap();
        let c = ModelState::init(&spec, 6).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let limit = (6.0f64 / 25.0).sqrt();
        assert!(a.params()[0].data().iter().all(|v| v.abs() <= limit));
        assert!(a.param("conv0.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_scale_output_shapes() {
        let cnn = ModelState::init(&ModelSpec::cnn(100, Head::Hrr { feature_dim: 64 }), 0).unwrap();
        let x = random_inputs(2, 100 * 100, 3);
        let y = cnn.forward(&x, Mode::Eval).unwrap();
        assert_eq!((y.batch_size(), y.width()), (2, 64));
        let vit = ModelState::init(&ModelSpec::vit(100, VitSpec::full(), Head::Hrr { feature_dim: 64 }), 0).unwrap();
        assert_eq!(vit.tokens(), Some(100));
        assert_eq!(vit.embed_tokens(&x[0]).unwrap().len(), 100 * 256);
    }

    #[test]
    fn eval_is_deterministic_and_bounded() {
        let spec = ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 });
        let state = ModelState::init(&spec, 2).unwrap();
        let x: Vec<Vec<f64>> = random_inputs(3, 1024, 4).into_iter().map(|v| v.iter().map(|p| p * 50.0).collect()).collect();
        let a = state.predict(&x).unwrap();
        let b = state.predict(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn train_mode_uses_dropout_and_eval_does_not() {
        let spec = ModelSpec::cnn(32, Head::Ce { num_classes: 6 });
        let state = ModelState::init(&spec, 2).unwrap();
        let x = random_inputs(2, 1024, 4);
        let eval = state.predict(&x).unwrap();
        let t0 = state.forward(&x, Mode::Train { step: 0 }).unwrap();
        let t0b = state.forward(&x, Mode::Train { step: 0 }).unwrap();
        let t1 = state.forward(&x, Mode::Train { step: 1 }).unwrap();
        assert_ne!(t0.outputs(), eval.as_slice());
        assert_eq!(t0.outputs(), t0b.outputs());
        assert_ne!(t0.outputs(), t1.outputs());
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let rate = 0.1;
        let mut d = Dropout::new(rate, CounterRng::new(11));
        let mut x = vec![1.0; 100_000];
        let mask = d.apply(&mut x).unwrap();
        let dropped = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 1e5;
        assert!((dropped - rate).abs() < 0.03, "dropped fraction {dropped}");
        let mean = x.iter().sum::<f64>() / 1e5;
        assert!((mean - 1.0).abs() < 0.01);
        let mut y = vec![1.0; 10];
        assert!(Dropout::off().apply(&mut y).is_none());
        assert_eq!(y, vec![1.0; 10]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let spec = tiny_cnn();
        let mut state = ModelState::init(&spec, 0).unwrap();
        let x = random_inputs(1, 64, 0);
        let cache = state.forward(&x, Mode::Eval).unwrap();
        state.params_mut()[0].data_mut()[0] += 1.0;
        assert!(matches!(state.backward(&cache, &[0.0; 5]), Err(NnError::StaleCache { .. })));
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let state = ModelState::init(&tiny_cnn(), 0).unwrap();
        assert!(matches!(state.predict(&[vec![0.0; 63]]), Err(NnError::InputSize { .. })));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut s = random_inputs(1, 16 * 16, 8).remove(0);
        ops::softmax_rows(&mut s, 16);
        for row in s.chunks(16) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
