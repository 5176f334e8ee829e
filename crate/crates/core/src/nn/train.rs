//! Minibatch training loop.

use log::{debug, info};

use crate::loss::{self, BatchPrediction, Codebook, DecodeMode, ResidualNorm};
use crate::rng::CounterRng;

use super::optim::{Optimizer, OptimizerKind};
use super::spec::Head;
use super::{Mode, ModelState, NnError};

const TAG_SHUFFLE: u64 = 0x5348_5546;
const EVAL_BATCH: usize = 64;

/// Piecewise-constant learning rate: `(first_epoch, lr)` steps starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    steps: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(steps: Vec<(usize, f64)>) -> Result<Self, NnError> {
        if steps.first().map(|s| s.0) != Some(0) {
            return Err(NnError::Config("schedule must start at epoch 0".into()));
        }
        if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(NnError::Config("schedule epochs must be strictly increasing".into()));
        }
        if steps.iter().any(|s| !(s.1 > 0.0 && s.1.is_finite())) {
            return Err(NnError::Config("learning rates must be positive".into()));
        }
        Ok(Self { steps })
    }

    pub fn constant(lr: f64) -> Result<Self, NnError> {
        Self::new(vec![(0, lr)])
    }

    pub fn steps(&self) -> &[(usize, f64)] {
        &self.steps
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.steps.iter().take_while(|s| s.0 <= epoch).last().expect("starts at 0").1
    }

    /// `0:1e-3,100:1e-4`
    pub fn parse(s: &str) -> Result<Self, NnError> {
        let mut steps = Vec::new();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (e, lr) = item
                .split_once(':')
                .ok_or_else(|| NnError::Config(format!("bad schedule entry `{item}`")))?;
            let e = e.trim().parse().map_err(|_| NnError::Config(format!("bad schedule epoch `{e}`")))?;
            let lr = lr.trim().parse().map_err(|_| NnError::Config(format!("bad learning rate `{lr}`")))?;
            steps.push((e, lr));
        }
        Self::new(steps)
    }

    pub fn render(&self) -> String {
        let parts: Vec<String> = self.steps.iter().map(|(e, lr)| format!("{e}:{lr:e}")).collect();
        parts.join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Hrr,
    Ce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hrr => "hrr",
            LossKind::Ce => "ce",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NnError> {
        match s {
            "hrr" => Ok(LossKind::Hrr),
            "ce" => Ok(LossKind::Ce),
            other => Err(NnError::Config(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Stop once an epoch ends with every training image classified
    /// correctly.
    pub stop_when_fit: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// What the head is trained against.
#[derive(Debug, Clone)]
pub enum Objective {
    Hrr { book: Codebook, residual: ResidualNorm },
    Ce { num_classes: usize },
}

impl Objective {
    pub fn kind(&self) -> LossKind {
        match self {
            Objective::Hrr { .. } => LossKind::Hrr,
            Objective::Ce { .. } => LossKind::Ce,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Objective::Hrr { book, .. } => book.num_classes(),
            Objective::Ce { num_classes } => *num_classes,
        }
    }

    /// Fails if the head does not match this objective.
    pub fn check_head(&self, head: Head) -> Result<(), NnError> {
        match (self, head) {
            (Objective::Hrr { book, .. }, Head::Hrr { feature_dim }) if book.feature_dim() == feature_dim => Ok(()),
            (Objective::Ce { num_classes }, Head::Ce { num_classes: c }) if *num_classes == c => Ok(()),
            _ => Err(NnError::Config(format!("{:?} head does not match {} objective", head, self.kind().name()))),
        }
    }

    /// Summed batch loss and its gradient with respect to the outputs.
    pub fn loss(&self, outputs: &[f64], labels: &[usize]) -> Result<(f64, Vec<f64>), NnError> {
        match self {
            Objective::Hrr { book, residual } => {
                let pred = BatchPrediction::new(book.feature_dim(), outputs.to_vec())?;
                let out = loss::hrr_loss_with(&pred, labels, book, *residual)?;
                Ok((out.loss, out.grad))
            }
            Objective::Ce { num_classes } => {
                let out = loss::ce_loss(outputs, labels, *num_classes)?;
                Ok((out.loss * labels.len() as f64, out.grad))
            }
        }
    }

    /// Per-row class scores: decode similarities or softmax probabilities.
    pub fn scores(&self, outputs: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        match self {
            Objective::Hrr { book, .. } => {
                let pred = BatchPrediction::new(book.feature_dim(), outputs.to_vec())?;
                let d = loss::decode_with(&pred, book, DecodeMode::ExactInverse)?;
                Ok((0..d.scores.batch_size()).map(|i| d.scores.row(i).to_vec()).collect())
            }
            Objective::Ce { num_classes } => Ok(outputs.chunks(*num_classes).map(|r| loss::softmax(r, *num_classes)).collect()),
        }
    }
}

/// Eval-mode predicted class index for each image.
pub fn classify<I: AsRef<[f64]> + Sync>(state: &ModelState, objective: &Objective, images: &[I]) -> Result<Vec<usize>, NnError> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let y = state.predict(chunk)?;
        out.extend(objective.scores(&y)?.iter().map(|r| loss::argmax(r)));
    }
    Ok(out)
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-image loss over the epoch's minibatches.
    pub loss: f64,
    /// Eval-mode accuracy over the full training set after the epoch.
    pub train_accuracy: f64,
}

/// Order in which epoch `epoch` visits the `n` training images.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    CounterRng::derive(seed ^ epoch as u64, &[TAG_SHUFFLE]).shuffle(&mut order);
    order
}

/// Trains in place and returns one log entry per completed epoch.
/// `labels` are class indices in `0..C`.
pub fn train<I, F>(
    state: &mut ModelState,
    images: &[I],
    labels: &[usize],
    config: &TrainConfig,
    objective: &Objective,
    mut on_epoch: F,
) -> Result<Vec<EpochLog>, NnError>
where
    I: AsRef<[f64]> + Sync,
    F: FnMut(&EpochLog),
{
    config.validate()?;
    objective.check_head(state.spec().head)?;
    if images.is_empty() || images.len() != labels.len() {
        return Err(NnError::Config(format!("{} images with {} labels", images.len(), labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= objective.num_classes()) {
        return Err(NnError::Config(format!("label {l} outside 0..{}", objective.num_classes())));
    }
    let mut opt = Optimizer::new(config.optimizer, state);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        let order = epoch_order(config.seed, epoch, images.len());
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x: Vec<&[f64]> = batch.iter().map(|&i| images[i].as_ref()).collect();
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let step = opt.steps();
            let cache = state.forward(&x, Mode::Train { step }).map_err(|e| diverged(e, epoch))?;
            let (l, grad) = objective.loss(cache.outputs(), &y)?;
            if !l.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            total += l;
            let grads = state.backward(&cache, &grad).map_err(|e| diverged(e, epoch))?;
            opt.step(state, &grads, lr);
        }
        if state.params().iter().any(|p| !p.is_finite()) {
            return Err(NnError::Diverged { epoch });
        }
        let pred = classify(state, objective, images).map_err(|e| diverged(e, epoch))?;
        let log = EpochLog {
            epoch,
            lr,
            loss: total / images.len() as f64,
            train_accuracy: accuracy(&pred, labels),
        };
        debug!("epoch {epoch}: loss {:.6} acc {:.4} lr {lr:e}", log.loss, log.train_accuracy);
        on_epoch(&log);
        let fit = log.train_accuracy == 1.0;
        logs.push(log);
        if fit && config.stop_when_fit {
            info!("all training images fit after epoch {epoch}");
            break;
        }
    }
    Ok(logs)
}

fn diverged(e: NnError, epoch: usize) -> NnError {
    match e {
        NnError::NonFinite(_) => NnError::Diverged { epoch },
        other => other,
    }
}
