use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Split};
use super::eval::{sample_errors, summarize, EvalReport};
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor, Value};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, GraphContext, VirsoModel};
use crate::normalize::{NormMode, Normalizer};

/// Adds `weight * ||ux^2 + uy^2 + uz^2 - u^2|| / ||u^2||` to the loss, with
/// `u^2` taken from the true components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnitudeLoss {
    pub components: [usize; 3],
    #[serde(default = "default_magnitude_weight")]
    pub weight: f64,
}

fn default_magnitude_weight() -> f64 {
    0.1
}

/// Optimization settings. Defaults follow the heat-exchanger setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub lr: f64,
    /// Epochs between learning-rate decays.
    pub decay_step: usize,
    pub decay: f64,
    pub batch_size: usize,
    /// Micro-batches per optimizer step; gradients are summed across them.
    pub accumulation_steps: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub input_normalization: NormMode,
    pub target_normalization: NormMode,
    pub magnitude_loss: Option<MagnitudeLoss>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            lr: 1e-3,
            decay_step: 40,
            decay: 0.5,
            batch_size: 16,
            accumulation_steps: 1,
            max_epochs: 500,
            weight_decay: 1e-3,
            patience: 40,
            seed: 0,
            input_normalization: NormMode::default(),
            target_normalization: NormMode::default(),
            magnitude_loss: None,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.decay_step == 0 || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay_step must be >= 1 and decay in (0, 1]");
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 || self.accumulation_steps > self.batch_size {
            return bad("need 1 <= accumulation_steps <= batch_size");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be >= 1");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be >= 0");
        }
        Ok(())
    }

    /// Step decay: `lr * decay^floor(epoch / decay_step)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.decay_step) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged { epoch: usize, detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` if no epoch completed.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub stop: StopReason,
    pub wall_time_s: f64,
    pub test: Option<EvalReport>,
}

impl TrainReport {
    /// Loss curves as CSV: `epoch,lr,train_loss,val_loss`.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.lr, e.train_loss, e.val_loss));
        }
        s
    }

    /// Running minimum of the validation loss after each epoch.
    pub fn best_val_curve(&self) -> Vec<f64> {
        let mut best = self.initial_val_loss;
        self.epochs
            .iter()
            .map(|e| {
                best = best.min(e.val_loss);
                best
            })
            .collect()
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Best-validation parameters (the initial ones if nothing completed).
    pub checkpoint: Checkpoint,
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    inv_truth_norms: Vec<Tensor>,
    inv_scale: Tensor,
    inv_shift: Tensor,
}

fn prepare_data(data: &Dataset, split: &Split, sched: &Schedule) -> Result<(Normalizer, Normalizer, Prepared)> {
    let input_norm =
        Normalizer::fit_rows(sched.input_normalization, split.train.iter().map(|&i| data.samples[i].u_q.as_slice()), data.q)?;
    let target_norm = Normalizer::fit_rows(
        sched.target_normalization,
        split.train.iter().flat_map(|&i| data.samples[i].s.data().chunks(data.channels)),
        data.channels,
    )?;
    let inputs = data.samples.iter().map(|s| input_norm.apply(&s.u_q)).collect::<Result<Vec<_>>>()?;
    let mut inv_truth_norms = Vec::with_capacity(data.len());
    for s in &data.samples {
        let mut norms = vec![0.0; data.channels];
        for r in 0..s.s.rows() {
            for (a, x) in norms.iter_mut().zip(s.s.row(r)) {
                *a += x * x;
            }
        }
        if let Some(c) = norms.iter().position(|&x| x == 0.0) {
            return Err(Error::UndefinedMetric(format!("sample {} channel {c} has zero norm", s.id)));
        }
        inv_truth_norms.push(Tensor::row_vector(&norms.iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>()));
    }
    let (a, b) = target_norm.inverse_affine();
    let prepared = Prepared { inputs, inv_truth_norms, inv_scale: Tensor::row_vector(&a), inv_shift: Tensor::row_vector(&b) };
    Ok((input_norm, target_norm, prepared))
}

/// Channel-summed relative L2 in physical units, plus the optional
/// magnitude term, for one normalized prediction.
fn sample_loss(
    tape: &mut Tape,
    pred: Value,
    truth: &Tensor,
    inv_norm: &Tensor,
    affine: (Value, Value),
    mag: Option<&MagnitudeLoss>,
) -> Result<Value> {
    let phys = tape.mul_cols(pred, affine.0)?;
    let phys = tape.add_bias(phys, affine.1)?;
    let t = tape.constant(truth.clone());
    let diff = tape.sub(phys, t)?;
    let sq = tape.col_sum_squares(diff)?;
    let err = tape.sqrt(sq);
    let w = tape.constant(inv_norm.clone());
    let rel = tape.mul_cols(err, w)?;
    let mut loss = tape.sum(rel);
    if let Some(m) = mag {
        let mut true_sq = vec![0.0; truth.rows()];
        for (i, u) in true_sq.iter_mut().enumerate() {
            *u = m.components.iter().map(|&c| truth.get(i, c).powi(2)).sum();
        }
        let denom = true_sq.iter().map(|u| u * u).sum::<f64>().sqrt();
        if denom == 0.0 {
            return Err(Error::UndefinedMetric("true velocity magnitude is zero everywhere".into()));
        }
        let mut acc: Option<Value> = None;
        for &c in &m.components {
            let col = tape.slice_cols(phys, c, 1)?;
            let sq = tape.elementwise_mul(col, col)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, sq)?,
                None => sq,
            });
        }
        let target = tape.constant(Tensor::column_vector(&true_sq));
        let gap = tape.sub(acc.expect("three components"), target)?;
        let gap = tape.col_sum_squares(gap)?;
        let gap = tape.sum(gap);
        let gap = tape.sqrt(gap);
        let term = tape.scalar_mul(gap, m.weight / denom);
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}

/// Mini-batch Adam with step decay and early stopping on the validation
/// metric. Normalizers are fitted on the training split only.
pub fn train(
    mut model: VirsoModel,
    ctx: &GraphContext,
    data: &Dataset,
    split: &Split,
    sched: &Schedule,
    graph_hash: &str,
) -> Result<TrainOutcome> {
    sched.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::EmptySplit("training needs non-empty train and val splits".into()));
    }
    if data.q != model.config.input_width || data.channels != model.config.output_channels || data.n != ctx.node_count() {
        return Err(Error::shape("train", "dataset, model and graph disagree on q, C or n".to_string()));
    }
    if let Some(m) = &sched.magnitude_loss {
        if m.components.iter().any(|&c| c >= data.channels) {
            return Err(Error::InvalidParameter("magnitude loss component out of range".into()));
        }
    }
    let start = Instant::now();
    let (input_norm, target_norm, prep) = prepare_data(data, split, sched)?;
    let val_loss = |model: &VirsoModel| -> Result<f64> {
        Ok(summarize(&sample_errors(model, &input_norm, &target_norm, ctx, data, &split.val, false)?)?.channel_sum_mean)
    };
    let snapshot = |model: &VirsoModel, epoch: usize| Checkpoint {
        model: model.clone(),
        input_norm: input_norm.clone(),
        target_norm: target_norm.clone(),
        graph_hash: graph_hash.to_string(),
        epoch,
    };

    let initial_val_loss = val_loss(&model)?;
    log::info!("initial val loss {initial_val_loss:.4e}");
    let mut best = snapshot(&model, 0);
    let mut best_val = initial_val_loss;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig { lr: sched.lr, weight_decay: sched.weight_decay, ..AdamConfig::default() },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut order = split.train.clone();
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 0..sched.max_epochs {
        let lr = sched.lr_at(epoch);
        adam.set_lr(lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(sched.batch_size) {
            let micro = batch.len().div_ceil(sched.accumulation_steps);
            let mut grads: Option<Vec<Tensor>> = None;
            for part in batch.chunks(micro) {
                let mut tape = Tape::new();
                let p = model.params.bind(&mut tape);
                let tc = model.prepare(&mut tape, &p, ctx)?;
                let affine = (tape.constant(prep.inv_scale.clone()), tape.constant(prep.inv_shift.clone()));
                let mut total: Option<Value> = None;
                for &i in part {
                    let pred = model.forward_on_tape(&mut tape, &p, ctx, &tc, &prep.inputs[i])?;
                    let l = sample_loss(
                        &mut tape,
                        pred,
                        &data.samples[i].s,
                        &prep.inv_truth_norms[i],
                        affine,
                        sched.magnitude_loss.as_ref(),
                    )?;
                    total = Some(match total {
                        Some(t) => tape.add(t, l)?,
                        None => l,
                    });
                }
                let total = total.expect("non-empty micro-batch");
                let value = tape.value(total).data()[0];
                if !value.is_finite() {
                    stop = StopReason::Diverged { epoch, detail: format!("training loss is {value}") };
                    break 'epochs;
                }
                loss_sum += value;
                let mean = tape.scalar_mul(total, 1.0 / batch.len() as f64);
                tape.backward(mean)?;
                let g = p.grads(&tape);
                grads = Some(match grads {
                    None => g,
                    Some(mut acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
                        }
                        acc
                    }
                });
            }
            match adam.step(&mut model.params, &grads.expect("non-empty batch")) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient(name)) => {
                    stop = StopReason::Diverged { epoch, detail: format!("non-finite gradient for {name}") };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let val = val_loss(&model)?;
        if !val.is_finite() {
            stop = StopReason::Diverged { epoch, detail: format!("validation loss is {val}") };
            break;
        }
        let train_loss = loss_sum / split.train.len() as f64;
        log::info!("epoch {epoch:4} lr {lr:.2e} train {train_loss:.4e} val {val:.4e}");
        epochs.push(EpochRecord { epoch, lr, train_loss, val_loss: val });
        if val < best_val {
            best_val = val;
            best_epoch = Some(epoch);
            best = snapshot(&model, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= sched.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    if let StopReason::Diverged { epoch, detail } = &stop {
        log::warn!("training diverged at epoch {epoch}: {detail}; keeping best checkpoint");
    }
    let test = match split.test.is_empty() {
        true => None,
        false => Some(summarize(&sample_errors(&best.model, &input_norm, &target_norm, ctx, data, &split.test, false)?)?),
    };
    let report = TrainReport {
        initial_val_loss,
        epochs,
        best_epoch,
        best_val_loss: best_val,
        stop,
        wall_time_s: start.elapsed().as_secs_f64(),
        test,
    };
    Ok(TrainOutcome { report, checkpoint: best })
}
