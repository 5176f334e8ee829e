//! First-order optimizers.

use super::tensor::Tensor;
use super::{ModelState, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd { .. } => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }

    /// `adam`, `adam:b1:b2:eps`, `sgd` or `sgd:momentum`.
    pub fn parse(s: &str) -> Result<Self, NnError> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<f64>().map_err(|_| NnError::Config(format!("bad optimizer `{s}`")));
        match parts.as_slice() {
            ["adam"] => Ok(Self::default()),
            ["adam", b1, b2, eps] => Ok(OptimizerKind::Adam {
                beta1: num(b1)?,
                beta2: num(b2)?,
                eps: num(eps)?,
            }),
            ["sgd"] => Ok(OptimizerKind::Sgd { momentum: 0.0 }),
            ["sgd", m] => Ok(OptimizerKind::Sgd { momentum: num(m)? }),
            _ => Err(NnError::Config(format!("unknown optimizer `{s}`"))),
        }
    }

    pub fn render(&self) -> String {
        match self {
            OptimizerKind::Sgd { momentum } => format!("sgd:{momentum:?}"),
            OptimizerKind::Adam { beta1, beta2, eps } => format!("adam:{beta1:?}:{beta2:?}:{eps:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, state: &ModelState) -> Self {
        let zeros = || state.params().iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        let v = match kind {
            OptimizerKind::Adam { .. } => zeros(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self { kind, m: zeros(), v, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, state: &mut ModelState, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let t = self.t as f64;
        let kind = self.kind;
        for (i, (p, g)) in state.params_mut().iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            match kind {
                OptimizerKind::Sgd { momentum } => {
                    for ((w, &gi), mi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                        *mi = momentum * *mi + gi;
                        *w -= lr * *mi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let v = &mut self.v[i];
                    let c1 = 1.0 - beta1.powf(t);
                    let c2 = 1.0 - beta2.powf(t);
                    for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}
