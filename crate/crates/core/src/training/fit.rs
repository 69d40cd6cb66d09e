use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{ContextMode, PreparedScan, SpatialContext};
use crate::error::{invalid, Error, Result};
use crate::network::Sensor3d;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

use super::adam::{adam_step, AdamState};
use super::early_stopping::{EarlyStopping, Verdict};
use super::loss::{loss, ClassWeights, DICE_SMOOTH};

/// Optimiser and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub patience: usize,
    /// Smallest drop of the monitored loss that counts as an improvement.
    pub min_delta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            patience: 100,
            min_delta: 1e-5,
            batch_size: 4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("{name} must lie in (0,1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(invalid("adam epsilon must be positive"));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(invalid("min_delta must be non-negative"));
        }
        Ok(())
    }
}

/// Training contexts of a set of scans, each paired with the mask of its
/// centre slice.
#[derive(Debug, Clone, Default)]
pub struct ContextSet {
    scans: Vec<PreparedScan>,
    items: Vec<(usize, SpatialContext)>,
}

impl ContextSet {
    /// Contexts centred on every organ slice of every scan, dropping those
    /// that would reach outside their volume.
    pub fn new(scans: Vec<PreparedScan>, o: usize, d_mm: f64) -> Result<Self> {
        let mut items = Vec::new();
        for (i, scan) in scans.iter().enumerate() {
            if scan.masks.is_none() {
                return Err(invalid(format!("scan {} has no ground truth", scan.id)));
            }
            for c in scan.contexts(o, d_mm, ContextMode::Training)? {
                items.push((i, c));
            }
        }
        Ok(Self { scans, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn scans(&self) -> &[PreparedScan] {
        &self.scans
    }

    pub fn contexts(&self) -> impl Iterator<Item = &SpatialContext> {
        self.items.iter().map(|(_, c)| c)
    }

    /// Input slices and centre-slice mask of context `i`.
    pub fn sample<T: Scalar>(&self, i: usize) -> (Vec<Tensor<T>>, Tensor<T>) {
        let (s, ctx) = &self.items[i];
        let scan = &self.scans[*s];
        let inputs = scan.context_slices(ctx).iter().map(|t| t.cast()).collect();
        let masks = scan.masks.as_ref().expect("checked at construction");
        (inputs, masks[ctx.center].cast())
    }
}

/// Loss term of one context, multiplied by `scale`, and its gradient with
/// respect to every network parameter.
pub fn context_loss_and_grads<T: Scalar>(
    network: &Sensor3d<T>,
    inputs: &[Tensor<T>],
    target: &Tensor<T>,
    weights: &ClassWeights,
    scale: f64,
) -> Result<(f64, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let params = network.record_params(&mut tape);
    let inputs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = network.forward_on_tape(&mut tape, &params, &inputs, &mut |_, _| {})?;
    let classes = tape.value(out).shape()[0];
    if target.shape() != tape.value(out).shape() {
        return Err(Error::ShapeMismatch {
            op: "context_loss",
            left: tape.value(out).shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let masks = target.unstack();
    let mut total: Option<Var> = None;
    for (l, mask) in masks.iter().enumerate() {
        let probs = if classes == 1 { out } else { tape.slice_channels(out, l, 1)? };
        let mask = mask.clone().reshape(&[1, target.shape()[1], target.shape()[2]])?;
        let d = tape.dice_distance(probs, &mask, T::from_f64(DICE_SMOOTH))?;
        let term = tape.scale(d, T::from_f64(-scale / weights.get(l)));
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let total = total.ok_or_else(|| invalid("network produced no classes"))?;
    let value = tape.scalar_value(total)?.to_f64();
    let mut grads = tape.backward(total)?;
    let per_param = params
        .iter()
        .zip(network.params().tensors())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, per_param))
}

/// Loss of the current parameters on every context of `set`, without
/// gradients.
fn evaluate_loss<T: Scalar>(network: &Sensor3d<T>, set: &ContextSet, weights: &ClassWeights) -> Result<f64> {
    let per: Vec<f64> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let (inputs, target) = set.sample::<T>(i);
            let out = network.predict(&inputs)?;
            loss(&[out], &[target], weights)
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitStatus {
    /// Ran all `max_epochs` epochs.
    Completed,
    /// The monitored loss stopped improving.
    EarlyStopped,
    /// A loss or gradient became non-finite; the best parameters seen so far
    /// are kept.
    NonFinite { epoch: usize, detail: String },
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    /// Network carrying the parameters of the best epoch.
    pub network: Sensor3d<T>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 if none finished.
    pub best_epoch: usize,
    pub status: FitStatus,
}

/// Trains with Adam on shuffled minibatches. The validation loss is
/// monitored for early stopping, or the training loss when there is no
/// validation data.
pub fn fit<T: Scalar>(
    mut network: Sensor3d<T>,
    train: &ContextSet,
    validation: &ContextSet,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<FitOutcome<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(invalid("training set has no contexts"));
    }
    let classes = network.config().classes;
    let weights = ClassWeights::uniform(classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(network.params());
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut best = network.params().clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let started = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut status = FitStatus::Completed;
    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let results: Vec<(f64, Vec<Tensor<T>>)> = batch
                .par_iter()
                .map(|&i| {
                    let (inputs, target) = train.sample::<T>(i);
                    context_loss_and_grads(&network, &inputs, &target, &weights, scale)
                })
                .collect::<Result<_>>()?;
            let mut iter = results.into_iter();
            let (mut batch_loss, mut grads) = iter.next().expect("non-empty batch");
            for (l, g) in iter {
                batch_loss += l;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.add_assign(gi)?;
                }
            }
            if !batch_loss.is_finite() {
                status = FitStatus::NonFinite {
                    epoch,
                    detail: format!("training loss {batch_loss}"),
                };
                break 'epochs;
            }
            match adam_step(network.params_mut(), &grads, &mut adam, config) {
                Ok(()) => {}
                Err(Error::NonFinite(detail)) => {
                    status = FitStatus::NonFinite { epoch, detail };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(&network, validation, &weights)?)
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            status = FitStatus::NonFinite {
                epoch,
                detail: format!("monitored loss {monitored}"),
            };
            break;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
        match stopper.observe(monitored) {
            Verdict::Improved => {
                best = network.params().clone();
                best_epoch = epoch;
            }
            Verdict::Continue => {}
            Verdict::Stop => {
                status = FitStatus::EarlyStopped;
                break;
            }
        }
    }
    *network.params_mut() = best;
    Ok(FitOutcome {
        network,
        history,
        best_epoch,
        status,
    })
}

/// Writes `epoch,train_loss,val_loss,wall_seconds` rows.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,wall_seconds\n");
    for r in history {
        let val = r.val_loss.map(|v| format!("{v:.9}")).unwrap_or_default();
        writeln!(out, "{},{:.9},{val},{:.3}", r.epoch, r.train_loss, r.wall_seconds).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
