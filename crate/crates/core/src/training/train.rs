use std::io::Write;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::classifier::{accuracy, predictions, Classifier};
use super::optim::{Optimizer, OptimizerConfig};
use super::recurrent::RecurrentModel;
use crate::autodiff::{cross_entropy_rows, GradientSet, Tape};
use crate::data::{gen_copy_batch, CopyTaskConfig, IdxDataset, SeqDataset, TaskBatch};
use crate::error::{Result, SsbError};
use crate::num::RngStream;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_loss: Option<f64>,
}

/// Collected records, optionally mirrored as JSON lines to a writer.
#[derive(Default)]
pub struct Metrics {
    pub records: Vec<MetricRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_writer(w: impl Write + Send + 'static) -> Self {
        Metrics {
            records: Vec::new(),
            sink: Some(Box::new(w)),
        }
    }

    pub fn push(&mut self, r: MetricRecord) -> Result<()> {
        if let Some(w) = &mut self.sink {
            let line = serde_json::to_string(&r)?;
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| SsbError::io("metrics", e))?;
        }
        self.records.push(r);
        Ok(())
    }

    pub fn last(&self, split: &str) -> Option<&MetricRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }
}

/// Real feature rows with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeled {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Labeled {
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SsbError::shape(
                format!("{} labels", x.nrows()),
                format!("{}", y.len()),
            ));
        }
        Ok(Labeled { x, y })
    }

    /// Flattened images scaled to `[0, 1]`.
    pub fn from_idx(ds: &IdxDataset) -> Self {
        let x = Array2::from_shape_fn((ds.count, ds.pixels()), |(i, j)| ds.image(i)[j] as f64 * ds.scale);
        Labeled {
            x,
            y: ds.labels.iter().map(|&l| l as usize).collect(),
        }
    }

    pub fn from_seq(ds: &SeqDataset) -> Self {
        Labeled {
            x: ds.inputs.clone(),
            y: ds.labels.iter().map(|&l| l as usize).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((idx.len(), self.x.ncols()), |(r, c)| self.x[[idx[r], c]]);
        (x, idx.iter().map(|&i| self.y[i]).collect())
    }

    pub fn head(&self, n: usize) -> Labeled {
        let n = n.min(self.len());
        Labeled {
            x: self.x.slice(s![..n, ..]).to_owned(),
            y: self.y[..n].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Log the running training loss every this many steps.
    pub log_every: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub loss: f64,
    pub accuracy: f64,
}

fn check_finite(loss: f64, step: u64) -> Result<()> {
    if !loss.is_finite() {
        return Err(SsbError::Divergence {
            step,
            message: format!("loss is {loss}"),
        });
    }
    Ok(())
}

fn batches(n: usize, batch: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch).map(|c| c.to_vec()).collect()
}

/// Loss and accuracy over `data` in chunks, via the tape-free forward.
pub fn evaluate_classifier(model: &Classifier, data: &Labeled) -> Result<EvalSummary> {
    let (mut loss, mut hits) = (0.0, 0.0);
    for start in (0..data.len()).step_by(1000) {
        let idx: Vec<usize> = (start..(start + 1000).min(data.len())).collect();
        let (x, y) = data.rows(&idx);
        let logits = model.logits(&x)?;
        loss += cross_entropy_rows(logits.view(), &y).iter().sum::<f64>();
        hits += accuracy(&logits, &y) * idx.len() as f64;
    }
    let n = data.len().max(1) as f64;
    Ok(EvalSummary {
        loss: loss / n,
        accuracy: hits / n,
    })
}

/// Mini-batch training with test evaluation after every epoch.
pub fn train_classifier(
    model: &mut Classifier,
    train: &Labeled,
    test: &Labeled,
    sched: &EpochSchedule,
    opt: OptimizerConfig,
    metrics: &mut Metrics,
) -> Result<EvalSummary> {
    if sched.batch_size == 0 || train.is_empty() {
        return Err(SsbError::arg("need a positive batch size and training data"));
    }
    let mut optim = Optimizer::new(opt, &model.params)?;
    let mut rng = RngStream::new(sched.seed);
    let mut step = 0u64;
    let mut last = None;
    for _ in 0..sched.epochs {
        let (mut run_loss, mut run_acc, mut run_n) = (0.0, 0.0, 0usize);
        for idx in batches(train.len(), sched.batch_size, &mut rng) {
            let (x, y) = train.rows(&idx);
            let (loss, mut grads, logits) = model.loss_and_grads(&x, &y)?;
            check_finite(loss, step)?;
            optim.update(&mut model.params, &mut grads)?;
            step += 1;
            run_loss += loss * idx.len() as f64;
            run_acc += accuracy(&logits, &y) * idx.len() as f64;
            run_n += idx.len();
            if sched.log_every.is_some_and(|k| step % k == 0) {
                metrics.push(MetricRecord {
                    step,
                    split: "train".into(),
                    loss: run_loss / run_n as f64,
                    accuracy: run_acc / run_n as f64,
                    recall_loss: None,
                })?;
                (run_loss, run_acc, run_n) = (0.0, 0.0, 0);
            }
        }
        if run_n > 0 {
            metrics.push(MetricRecord {
                step,
                split: "train".into(),
                loss: run_loss / run_n as f64,
                accuracy: run_acc / run_n as f64,
                recall_loss: None,
            })?;
        }
        let ev = evaluate_classifier(model, test)?;
        check_finite(ev.loss, step)?;
        metrics.push(MetricRecord {
            step,
            split: "test".into(),
            loss: ev.loss,
            accuracy: ev.accuracy,
            recall_loss: None,
        })?;
        last = Some(ev);
    }
    match last {
        Some(ev) => Ok(ev),
        None => evaluate_classifier(model, test),
    }
}

/// Copy-task scores on one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyEval {
    /// Cross-entropy averaged over every position.
    pub loss: f64,
    /// Cross-entropy averaged over recall positions.
    pub recall_loss: f64,
    pub recall_accuracy: f64,
}

fn score_copy(batch: &TaskBatch, logits: &[Array2<f64>]) -> CopyEval {
    let (b, t_len) = (batch.batch(), batch.time_steps());
    let (mut total, mut recall, mut hits, mut n_recall) = (0.0, 0.0, 0usize, 0usize);
    for (t, l) in logits.iter().enumerate() {
        let targets = batch.targets_at(t);
        let ce = cross_entropy_rows(l.view(), &targets);
        let pred = predictions(l);
        for i in 0..b {
            total += ce[i];
            if batch.mask[[i, t]] {
                recall += ce[i];
                n_recall += 1;
                hits += (pred[i] == targets[i]) as usize;
            }
        }
    }
    CopyEval {
        loss: total / (b * t_len) as f64,
        recall_loss: recall / n_recall.max(1) as f64,
        recall_accuracy: hits as f64 / n_recall.max(1) as f64,
    }
}

/// Full-sequence loss (mean over positions and batch) and its BPTT gradients.
pub fn copy_loss_and_grads(model: &RecurrentModel, batch: &TaskBatch) -> Result<(CopyEval, GradientSet)> {
    check_copy_dims(model, batch)?;
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let mut h = tape.constant(model.zero_state(batch.batch()).into_data());
    let mut loss = None;
    let mut logit_vars = Vec::with_capacity(batch.time_steps());
    for t in 0..batch.time_steps() {
        let x = tape.constant(batch.input_at(t));
        h = model.step_tape(&mut tape, &vars, h, x)?;
        let l = model.readout_tape(&mut tape, &vars, h)?;
        logit_vars.push(l);
        let ce = tape.softmax_cross_entropy(l, &batch.targets_at(t))?;
        loss = Some(match loss {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    let loss = loss.ok_or_else(|| SsbError::arg("empty sequence"))?;
    let loss = tape.affine(loss, 1.0 / batch.time_steps() as f64, 0.0);
    let grads = tape.backward(loss)?;
    let logits: Vec<Array2<f64>> = logit_vars.iter().map(|&v| tape.value(v).clone()).collect();
    Ok((score_copy(batch, &logits), grads))
}

fn check_copy_dims(model: &RecurrentModel, batch: &TaskBatch) -> Result<()> {
    let d = batch.inputs.shape()[2];
    if model.spec.input_dim != d || model.spec.output_dim != d {
        return Err(SsbError::shape(
            format!("input/output dim {d}"),
            format!("{}/{}", model.spec.input_dim, model.spec.output_dim),
        ));
    }
    Ok(())
}

pub fn evaluate_copy(model: &RecurrentModel, batch: &TaskBatch) -> Result<CopyEval> {
    check_copy_dims(model, batch)?;
    let inputs: Vec<Array2<f64>> = (0..batch.time_steps()).map(|t| batch.input_at(t)).collect();
    let logits = model
        .rollout(&inputs)?
        .iter()
        .map(|h| model.readout(h))
        .collect::<Result<Vec<_>>>()?;
    Ok(score_copy(batch, &logits))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopySchedule {
    pub steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub eval_batch: usize,
    pub seed: u64,
    /// Stop at the first evaluation whose recall loss is below this.
    pub stop_below: Option<f64>,
}

impl CopySchedule {
    pub fn new(steps: u64, seed: u64) -> Self {
        CopySchedule {
            steps,
            batch_size: 128,
            eval_every: 1000,
            eval_batch: 50,
            seed,
            stop_below: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyReport {
    pub steps_run: u64,
    pub best_recall_loss: f64,
    /// First evaluation step with recall loss below `stop_below`.
    pub reached_at: Option<u64>,
    /// Latest evaluation; NaN losses before the first one.
    pub last: CopyEval,
}

pub fn train_copy(
    model: &mut RecurrentModel,
    t_max: usize,
    sched: &CopySchedule,
    opt: OptimizerConfig,
    metrics: &mut Metrics,
) -> Result<CopyReport> {
    let train_cfg = CopyTaskConfig::new(t_max, sched.batch_size)?;
    let eval_cfg = CopyTaskConfig::new(t_max, sched.eval_batch)?;
    if sched.eval_every == 0 {
        return Err(SsbError::arg("eval interval must be positive"));
    }
    let root = RngStream::new(sched.seed);
    let (mut train_rng, mut eval_rng) = (root.fork(0), root.fork(1));
    let mut optim = Optimizer::new(opt, &model.params)?;
    let mut report = CopyReport {
        steps_run: 0,
        best_recall_loss: f64::INFINITY,
        reached_at: None,
        last: CopyEval {
            loss: f64::NAN,
            recall_loss: f64::NAN,
            recall_accuracy: 0.0,
        },
    };
    for step in 1..=sched.steps {
        let batch = gen_copy_batch(&train_cfg, &mut train_rng);
        let (ev, mut grads) = copy_loss_and_grads(model, &batch)?;
        check_finite(ev.loss, step)?;
        optim.update(&mut model.params, &mut grads)?;
        report.steps_run = step;
        if step % sched.eval_every == 0 || step == sched.steps {
            metrics.push(MetricRecord {
                step,
                split: "train".into(),
                loss: ev.loss,
                accuracy: ev.recall_accuracy,
                recall_loss: Some(ev.recall_loss),
            })?;
            let test = evaluate_copy(model, &gen_copy_batch(&eval_cfg, &mut eval_rng))?;
            check_finite(test.loss, step)?;
            metrics.push(MetricRecord {
                step,
                split: "test".into(),
                loss: test.loss,
                accuracy: test.recall_accuracy,
                recall_loss: Some(test.recall_loss),
            })?;
            report.last = test;
            report.best_recall_loss = report.best_recall_loss.min(test.recall_loss);
            if let Some(th) = sched.stop_below {
                if test.recall_loss < th {
                    report.reached_at = Some(step);
                    break;
                }
            }
        }
    }
    Ok(report)
}

/// Final-state classification of scalar sequences (`batch × T` inputs).
pub fn seq_loss_and_grads(
    model: &RecurrentModel,
    x: &Array2<f64>,
    y: &[usize],
) -> Result<(f64, GradientSet, Array2<f64>)> {
    if model.spec.input_dim != 1 {
        return Err(SsbError::shape(
            "input dim 1",
            format!("{}", model.spec.input_dim),
        ));
    }
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let mut h = tape.constant(model.zero_state(x.nrows()).into_data());
    for t in 0..x.ncols() {
        let xt = tape.constant(x.slice(s![.., t..t + 1]).to_owned());
        h = model.step_tape(&mut tape, &vars, h, xt)?;
    }
    let logits = model.readout_tape(&mut tape, &vars, h)?;
    let loss = tape.softmax_cross_entropy(logits, y)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), grads, tape.value(logits).clone()))
}

pub fn evaluate_seq(model: &RecurrentModel, data: &Labeled, batch: usize) -> Result<EvalSummary> {
    let (mut loss, mut hits) = (0.0, 0.0);
    for start in (0..data.len()).step_by(batch.max(1)) {
        let idx: Vec<usize> = (start..(start + batch).min(data.len())).collect();
        let (x, y) = data.rows(&idx);
        let inputs: Vec<Array2<f64>> = (0..x.ncols())
            .map(|t| x.slice(s![.., t..t + 1]).to_owned())
            .collect();
        let h = model.rollout(&inputs)?;
        let logits = model.readout(h.last().ok_or_else(|| SsbError::arg("empty sequence"))?)?;
        loss += cross_entropy_rows(logits.view(), &y).iter().sum::<f64>();
        hits += accuracy(&logits, &y) * idx.len() as f64;
    }
    let n = data.len().max(1) as f64;
    Ok(EvalSummary {
        loss: loss / n,
        accuracy: hits / n,
    })
}

/// Sequential-image training; validation after each epoch, test at the end.
pub fn train_seq_image(
    model: &mut RecurrentModel,
    train: &Labeled,
    val: &Labeled,
    test: &Labeled,
    sched: &EpochSchedule,
    opt: OptimizerConfig,
    metrics: &mut Metrics,
) -> Result<EvalSummary> {
    if sched.batch_size == 0 || train.is_empty() {
        return Err(SsbError::arg("need a positive batch size and training data"));
    }
    let mut optim = Optimizer::new(opt, &model.params)?;
    let mut rng = RngStream::new(sched.seed);
    let mut step = 0u64;
    for _ in 0..sched.epochs {
        for idx in batches(train.len(), sched.batch_size, &mut rng) {
            let (x, y) = train.rows(&idx);
            let (loss, mut grads, logits) = seq_loss_and_grads(model, &x, &y)?;
            check_finite(loss, step)?;
            optim.update(&mut model.params, &mut grads)?;
            step += 1;
            if sched.log_every.is_some_and(|k| step % k == 0) {
                metrics.push(MetricRecord {
                    step,
                    split: "train".into(),
                    loss,
                    accuracy: accuracy(&logits, &y),
                    recall_loss: None,
                })?;
            }
        }
        let v = evaluate_seq(model, val, sched.batch_size)?;
        metrics.push(MetricRecord {
            step,
            split: "val".into(),
            loss: v.loss,
            accuracy: v.accuracy,
            recall_loss: None,
        })?;
    }
    let t = evaluate_seq(model, test, sched.batch_size)?;
    metrics.push(MetricRecord {
        step,
        split: "test".into(),
        loss: t.loss,
        accuracy: t.accuracy,
        recall_loss: None,
    })?;
    Ok(t)
}
