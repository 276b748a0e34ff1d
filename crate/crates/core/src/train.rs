//! Multilayer perceptron, Adam, and the supervised training loop.
//!
//! The loop follows the usual order per mini-batch: build targets (fresh
//! DGSS matrices for every sample on every iteration), jitter the inputs,
//! forward, loss, backward, Adam step. All randomness is drawn from streams
//! keyed by `(seed, epoch, sample index)`, so a run resumed from a
//! checkpoint continues exactly as the uninterrupted run would.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Dataset;
use crate::dgss::{build_static, build_supervision, onehot_target, DgssConfig, StaticPreset};
use crate::error::{Error, Result};
use crate::eval::MetricsBundle;
use crate::heads::{
    argmax, cross_entropy_var, grouped_softmax_var, score_loss_var, smooth_labels, weighted_scores, LossForm,
    ScoreMatrix, ScoreTable,
};
use crate::io::{read_container, write_container};
use crate::rng::RngState;
use crate::tensor::{matmul_kernel, softmax_in_place, Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";

// Stream tags for RngState::derive.
const STREAM_SHUFFLE: u64 = 0x7368_7566;
const STREAM_JITTER: u64 = 0x6a69_7474;
const STREAM_DGSS: u64 = 0x6467_7373;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    Softmax { classes: usize },
    ScoreSoftmax { classes: usize, levels: usize },
}

impl HeadSpec {
    pub fn classes(&self) -> usize {
        match *self {
            HeadSpec::Softmax { classes } | HeadSpec::ScoreSoftmax { classes, .. } => classes,
        }
    }

    pub fn width(&self) -> usize {
        match *self {
            HeadSpec::Softmax { classes } => classes,
            HeadSpec::ScoreSoftmax { classes, levels } => classes * levels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: HeadSpec,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    /// Two hidden layers of 256 and 64 units.
    pub fn mlp(input_dim: usize, head: HeadSpec) -> Self {
        ModelSpec {
            input_dim,
            hidden: vec![256, 64],
            head,
            activation: Activation::Relu,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.head.width());
        w
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.widths().iter().position(|&w| w == 0) {
            return Err(Error::param("model", format!("layer {i} has zero width")));
        }
        match self.head {
            HeadSpec::Softmax { classes } if classes < 2 => Err(Error::param("head.classes", "need at least 2")),
            HeadSpec::ScoreSoftmax { classes, levels } if classes < 2 || levels < 2 => {
                Err(Error::param("head", "S-Softmax needs at least 2 classes and 2 levels"))
            }
            _ => Ok(()),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.widths().len() - 1)
            .flat_map(|i| [format!("dense{i}.weight"), format!("dense{i}.bias")])
            .collect()
    }
}

/// Fully connected network; parameters are `[W0, b0, W1, b1, …]` with
/// `W_i` of shape `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: ModelSpec,
    params: Vec<Tensor>,
}

/// Xavier-uniform weights, zero biases.
pub fn init_model(spec: &ModelSpec, rng: &mut RngState) -> Result<Mlp> {
    spec.validate()?;
    let widths = spec.widths();
    let mut params = Vec::new();
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
        params.push(Tensor::new(vec![fan_in, fan_out], weights)?);
        params.push(Tensor::zeros(&[fan_out]));
    }
    Ok(Mlp {
        spec: spec.clone(),
        params,
    })
}

impl Mlp {
    pub fn from_parts(spec: ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let expected: Vec<Vec<usize>> = widths.windows(2).flat_map(|w| [vec![w[0], w[1]], vec![w[1]]]).collect();
        let got: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        if expected != got {
            return Err(Error::param(
                "params",
                format!("shapes {got:?} do not match the spec {expected:?}"),
            ));
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Records the forward pass; returns the logits and the parameter leaves.
    pub fn forward_var(&self, tape: &mut Tape, x: Var) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = forward_layers(tape, x, &vars, &|t, v| t.relu(v))?;
        Ok((out, vars))
    }

    /// Untracked forward pass over `rows` samples.
    pub fn logits(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        if x.len() != rows * self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: vec![rows, x.len() / rows.max(1)],
                rhs: vec![self.spec.input_dim],
            });
        }
        let layers = self.params.len() / 2;
        let mut h = x.to_vec();
        let mut width = self.spec.input_dim;
        for l in 0..layers {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let out = w.shape()[1];
            let mut z = matmul_kernel(&h, w.data(), rows, width, out);
            for row in z.chunks_mut(out) {
                row.iter_mut().zip(b.data()).for_each(|(v, bv)| *v += bv);
                if l + 1 < layers {
                    row.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            h = z;
            width = out;
        }
        Ok(h)
    }
}

/// Dense stack over already-recorded parameter variables `[W0, b0, …]`,
/// with `act` between layers.
pub fn forward_layers(
    tape: &mut Tape,
    x: Var,
    params: &[Var],
    act: &dyn Fn(&mut Tape, Var) -> Result<Var>,
) -> Result<Var> {
    let layers = params.len() / 2;
    let mut h = x;
    for l in 0..layers {
        let z = tape.matmul(h, params[2 * l])?;
        h = tape.add(z, params[2 * l + 1])?;
        if l + 1 < layers {
            h = act(tape, h)?;
        }
    }
    Ok(h)
}

/// What the head is trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadTarget {
    OneHot,
    Vls { eps: f64 },
    Dgss(DgssConfig),
    Static { preset: StaticPreset },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Zero-based epochs at whose start the learning rate is divided by 10.
    pub lr_decay_epochs: Vec<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Std-dev of the Gaussian input jitter applied per sample per epoch.
    pub jitter: f64,
    pub loss_form: LossForm,
    pub seed: u64,
    pub head_target: HeadTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            lr_decay_epochs: vec![2, 28],
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-3,
            jitter: 0.05,
            loss_form: LossForm::Squared,
            seed: 0,
            head_target: HeadTarget::OneHot,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::param("lr", format!("{} must be > 0", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(name, format!("{b} is outside [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) || !(self.jitter >= 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::param(
                "train",
                "weight_decay and jitter must be >= 0, adam_eps > 0",
            ));
        }
        if let HeadTarget::Vls { eps } = self.head_target {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::param("head_target.eps", format!("{eps} is outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Learning rate in effect during zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr / 10f64.powi(decays as i32)
    }

    /// Checks that the target kind fits the head.
    pub fn check_head(&self, head: &HeadSpec) -> Result<()> {
        match (&self.head_target, head) {
            (HeadTarget::OneHot | HeadTarget::Vls { .. }, HeadSpec::Softmax { .. }) => Ok(()),
            (HeadTarget::Static { .. }, HeadSpec::ScoreSoftmax { .. }) => Ok(()),
            (HeadTarget::Dgss(cfg), HeadSpec::ScoreSoftmax { classes, levels }) => {
                if cfg.classes() != *classes || cfg.levels() != *levels {
                    Err(Error::param(
                        "head_target",
                        format!(
                            "DGSS is configured for {}×{} but the head is {classes}×{levels}",
                            cfg.classes(),
                            cfg.levels()
                        ),
                    ))
                } else {
                    Ok(())
                }
            }
            (t, h) => Err(Error::param(
                "head_target",
                format!("{t:?} cannot supervise a {h:?} head"),
            )),
        }
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn for_params(params: &[Tensor]) -> Self {
        OptimState {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamParams {
    pub fn from_config(cfg: &TrainConfig, lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }
}

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut OptimState,
    hp: &AdamParams,
    names: &[String],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::param("adam", "parameter, gradient and state counts differ"));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if g.data().iter().any(|x| !x.is_finite()) {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("param{i}"));
            return Err(Error::NumericalAbort(format!("non-finite gradient for `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            let gk = g.data()[k] + hp.weight_decay * *w;
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * gk;
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            *w -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub batch_losses: Vec<f64>,
}

/// Model, optimizer state and position in the schedule.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Mlp,
    pub optim: OptimState,
    /// Number of completed epochs.
    pub epoch: usize,
    cfg: TrainConfig,
    names: Vec<String>,
}

impl Trainer {
    pub fn new(model: Mlp, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_head(&model.spec.head)?;
        let optim = OptimState::for_params(&model.params);
        let names = model.spec.param_names();
        Ok(Trainer {
            model,
            optim,
            epoch: 0,
            cfg,
            names,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training data"));
        }
        if data.dims() != self.model.spec.input_dim || data.classes() > self.model.spec.head.classes() {
            return Err(Error::ShapeMismatch {
                op: "train",
                lhs: vec![data.dims(), data.classes()],
                rhs: vec![self.model.spec.input_dim, self.model.spec.head.classes()],
            });
        }
        Ok(())
    }

    fn targets(&self, labels: &[usize], indices: &[usize]) -> Result<Tensor> {
        let cfg = &self.cfg;
        let b = labels.len();
        let mut data = Vec::new();
        for (&y, &idx) in labels.iter().zip(indices) {
            match (&cfg.head_target, self.model.spec.head) {
                (HeadTarget::OneHot, HeadSpec::Softmax { classes }) => data.extend(onehot_target(y, classes)?),
                (HeadTarget::Vls { eps }, HeadSpec::Softmax { classes }) => {
                    data.extend(smooth_labels(y, classes, *eps)?)
                }
                (HeadTarget::Dgss(d), _) => {
                    let mut rng = RngState::derive(cfg.seed, &[STREAM_DGSS, self.epoch as u64, idx as u64]);
                    data.extend_from_slice(build_supervision(y, d, &mut rng)?.cells())
                }
                (HeadTarget::Static { preset }, HeadSpec::ScoreSoftmax { classes, levels }) => {
                    data.extend_from_slice(build_static(y, *preset, classes, levels)?.cells())
                }
                (t, h) => return Err(Error::param("head_target", format!("{t:?} cannot supervise {h:?}"))),
            }
        }
        let shape = match self.model.spec.head {
            HeadSpec::Softmax { classes } => vec![b, classes],
            HeadSpec::ScoreSoftmax { classes, levels } => vec![b, classes, levels],
        };
        Tensor::new(shape, data)
    }

    /// One optimisation step on the given sample indices; returns the loss.
    fn step(&mut self, data: &Dataset, indices: &[usize], lr: f64) -> Result<f64> {
        let dims = data.dims();
        let mut x = Vec::with_capacity(indices.len() * dims);
        for &k in indices {
            let sample = data.sample(k);
            if self.cfg.jitter > 0.0 {
                let mut rng = RngState::derive(self.cfg.seed, &[STREAM_JITTER, self.epoch as u64, k as u64]);
                x.extend(sample.iter().map(|v| v + self.cfg.jitter * rng.normal()));
            } else {
                x.extend_from_slice(sample);
            }
        }
        let labels: Vec<usize> = indices.iter().map(|&k| data.labels()[k]).collect();
        let targets = self.targets(&labels, indices)?;

        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(vec![indices.len(), dims], x)?);
        let (logits, vars) = self.model.forward_var(&mut tape, xv)?;
        let yv = tape.leaf(targets);
        let loss = match self.model.spec.head {
            HeadSpec::Softmax { .. } => cross_entropy_var(&mut tape, logits, yv)?,
            HeadSpec::ScoreSoftmax { classes, levels } => {
                let s = grouped_softmax_var(&mut tape, logits, classes, levels)?;
                score_loss_var(&mut tape, yv, s, self.cfg.loss_form)?
            }
        };
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
        let hp = AdamParams::from_config(&self.cfg, lr);
        adam_step(&mut self.model.params, &grads, &mut self.optim, &hp, &self.names)?;
        Ok(value)
    }

    /// Runs one epoch; returns the per-batch losses.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut RngState::derive(
            self.cfg.seed,
            &[STREAM_SHUFFLE, self.epoch as u64],
        ));
        let lr = self.cfg.lr_at(self.epoch);
        let mut losses = Vec::new();
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let loss = self.step(data, batch, lr).map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::NumericalAbort(format!("epoch {} batch {b}: non-finite value in {what}", self.epoch))
                }
                Error::NumericalAbort(what) => Error::NumericalAbort(format!("epoch {} batch {b}: {what}", self.epoch)),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::NumericalAbort(format!(
                    "epoch {} batch {b}: loss is {loss}",
                    self.epoch
                )));
            }
            losses.push(loss);
        }
        self.epoch += 1;
        Ok(losses)
    }

    /// Trains until the configured number of epochs has completed.
    pub fn train(&mut self, data: &Dataset, eval: Option<&Dataset>) -> Result<TrainLog> {
        self.train_until(data, eval, self.cfg.epochs)
    }

    /// Trains until `epochs` epochs (capped at the configured count) have
    /// completed; the log covers only the epochs run by this call.
    pub fn train_until(&mut self, data: &Dataset, eval: Option<&Dataset>, epochs: usize) -> Result<TrainLog> {
        self.check_data(data)?;
        let stop = epochs.min(self.cfg.epochs);
        let mut log = TrainLog::default();
        while self.epoch < stop {
            let epoch = self.epoch;
            let lr = self.cfg.lr_at(epoch);
            let losses = self.run_epoch(data)?;
            let loss = losses.iter().sum::<f64>() / losses.len() as f64;
            log.batch_losses.extend(&losses);
            let train_accuracy = evaluate(&self.model, data)?.metrics.top1;
            let eval_accuracy = match eval {
                Some(d) => Some(evaluate(&self.model, d)?.metrics.top1),
                None => None,
            };
            log.epochs.push(EpochRecord {
                epoch,
                lr,
                loss,
                train_accuracy,
                eval_accuracy,
            });
        }
        Ok(log)
    }
}

/// Initialises nothing: trains `model` in place per `cfg` and returns the log.
pub fn train(model: &mut Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    let mut trainer = Trainer::new(model.clone(), cfg.clone())?;
    let log = trainer.train(data, None)?;
    *model = trainer.model;
    Ok(log)
}

/// Raw per-sample head outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadOutputs {
    Probabilities(Vec<Vec<f64>>),
    ScoreMatrices(Vec<ScoreMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsBundle,
    pub predictions: Vec<usize>,
    /// Decision statistic per sample and class: probability or weighted score.
    pub class_scores: Vec<Vec<f64>>,
    pub outputs: HeadOutputs,
}

const EVAL_CHUNK: usize = 512;

/// Read-only pass over `data`.
pub fn evaluate(model: &Mlp, data: &Dataset) -> Result<Evaluation> {
    if data.dims() != model.spec.input_dim {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            lhs: vec![data.dims()],
            rhs: vec![model.spec.input_dim],
        });
    }
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let n = model.spec.head.classes();
    let width = model.spec.head.width();
    let mut logits = Vec::with_capacity(data.len() * width);
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let x = &data.features()[start * data.dims()..end * data.dims()];
        logits.extend(model.logits(x, end - start)?);
    }
    let mut class_scores = Vec::with_capacity(data.len());
    let outputs = match model.spec.head {
        HeadSpec::Softmax { .. } => {
            let probs: Vec<Vec<f64>> = logits
                .chunks(width)
                .map(|row| {
                    let mut r = row.to_vec();
                    softmax_in_place(&mut r);
                    r
                })
                .collect();
            class_scores.extend(probs.iter().cloned());
            HeadOutputs::Probabilities(probs)
        }
        HeadSpec::ScoreSoftmax { classes, levels } => {
            let table = ScoreTable::new(levels)?;
            let mut mats = Vec::with_capacity(data.len());
            for row in logits.chunks(width) {
                let mut cells = row.to_vec();
                for group in cells.chunks_mut(levels) {
                    softmax_in_place(group);
                }
                let s = ScoreMatrix::new(classes, levels, cells)?;
                class_scores.push(weighted_scores(&s, &table)?.0);
                mats.push(s);
            }
            HeadOutputs::ScoreMatrices(mats)
        }
    };
    let predictions: Vec<usize> = class_scores.iter().map(|t| argmax(t).unwrap_or(0)).collect();
    let metrics = MetricsBundle::compute(&predictions, data.labels(), n, &class_scores)?;
    Ok(Evaluation {
        metrics,
        predictions,
        class_scores,
        outputs,
    })
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Vec<Tensor>,
    pub optim: OptimState,
    pub epoch: usize,
    pub train_config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer, config_hash: impl Into<String>) -> Self {
        Checkpoint {
            spec: t.model.spec.clone(),
            params: t.model.params.clone(),
            optim: t.optim.clone(),
            epoch: t.epoch,
            train_config: t.cfg.clone(),
            config_hash: config_hash.into(),
            seed: t.cfg.seed,
        }
    }

    pub fn model(&self) -> Result<Mlp> {
        Mlp::from_parts(self.spec.clone(), self.params.clone())
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        let model = Mlp::from_parts(self.spec, self.params)?;
        let mut t = Trainer::new(model, self.train_config)?;
        if self.optim.m.len() != t.optim.m.len() || self.optim.m.iter().zip(&t.optim.m).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::Format("optimizer state does not match the parameters".into()));
        }
        t.optim = self.optim;
        t.epoch = self.epoch;
        Ok(t)
    }

    /// Writes the `SSCK` container: header JSON, then parameters, first
    /// moments and second moments as little-endian f64 blocks in
    /// declaration order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blocks: Vec<_> = self
            .spec
            .param_names()
            .into_iter()
            .zip(&self.params)
            .map(|(name, p)| json!({ "name": name, "shape": p.shape() }))
            .collect();
        let header = json!({
            "format": "ssoftmax-checkpoint",
            "spec": self.spec,
            "epoch": self.epoch,
            "step": self.optim.step,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "train_config": self.train_config,
            "blocks": blocks,
        });
        let payload = self
            .params
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .chain(self.optim.m.iter().flatten().copied())
            .chain(self.optim.v.iter().flatten().copied());
        let f = BufWriter::new(File::create(path)?);
        write_container(f, CHECKPOINT_MAGIC, &header, payload)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let f = BufReader::new(File::open(path)?);
        let (header, payload) = read_container(f, CHECKPOINT_MAGIC)?;
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint header is missing `{k}`")))
        };
        let spec: ModelSpec = serde_json::from_value(get("spec")?)?;
        spec.validate()?;
        let epoch: usize = serde_json::from_value(get("epoch")?)?;
        let step: u64 = serde_json::from_value(get("step")?)?;
        let seed: u64 = serde_json::from_value(get("seed")?)?;
        let config_hash: String = serde_json::from_value(get("config_hash")?)?;
        let train_config: TrainConfig = serde_json::from_value(get("train_config")?)?;
        let widths = spec.widths();
        let shapes: Vec<Vec<usize>> = widths.windows(2).flat_map(|w| [vec![w[0], w[1]], vec![w[1]]]).collect();
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if payload.len() != 3 * total {
            return Err(Error::Format(format!(
                "checkpoint payload holds {} values, expected {}",
                payload.len(),
                3 * total
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = payload[at..at + n].to_vec();
            at += n;
            s
        };
        let mut params = Vec::new();
        for s in &shapes {
            params.push(Tensor::new(s.clone(), take(s.iter().product()))?);
        }
        let m = shapes.iter().map(|s| take(s.iter().product())).collect();
        let v = shapes.iter().map(|s| take(s.iter().product())).collect();
        Ok(Checkpoint {
            spec,
            params,
            optim: OptimState { m, v, step },
            epoch,
            train_config,
            config_hash,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(head: HeadSpec) -> ModelSpec {
        ModelSpec {
            input_dim: 4,
            hidden: vec![8],
            head,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let s = spec(HeadSpec::Softmax { classes: 3 });
        let a = init_model(&s, &mut RngState::new(1)).unwrap();
        let b = init_model(&s, &mut RngState::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.params()[1].data().iter().all(|&x| x == 0.0));
        assert!(a.params()[3].data().iter().all(|&x| x == 0.0));
        let zero = ModelSpec { hidden: vec![0], ..s };
        assert!(init_model(&zero, &mut RngState::new(1)).is_err());
    }

    #[test]
    fn xavier_variance() {
        let s = ModelSpec {
            input_dim: 256,
            hidden: vec![256],
            head: HeadSpec::Softmax { classes: 2 },
            activation: Activation::Relu,
        };
        let m = init_model(&s, &mut RngState::new(9)).unwrap();
        let w = m.params()[0].data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        // Uniform(±a) has variance a²/3 = 2 / (fan_in + fan_out)
        let expect = 2.0 / 512.0;
        assert!((var - expect).abs() / expect < 0.2, "{var} vs {expect}");
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::zeros(&[3])];
        let mut st = OptimState::for_params(&p);
        let hp = AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        adam_step(&mut p, &g, &mut st, &hp, &[]).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut p = vec![Tensor::new(vec![3], vec![0.0; 3]).unwrap()];
        let g = vec![Tensor::new(vec![3], vec![0.3, -5.0, 1e-3]).unwrap()];
        let mut st = OptimState::for_params(&p);
        let hp = AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        adam_step(&mut p, &g, &mut st, &hp, &[]).unwrap();
        // m̂ = g, v̂ = g², update = lr·g/(|g| + eps)
        for (w, gv) in p[0].data().iter().zip(g[0].data()) {
            let expect = -1e-3 * gv / (gv.abs() + 1e-8);
            assert!((w - expect).abs() < 1e-15, "{w} vs {expect}");
        }
    }

    #[test]
    fn adam_descends_and_rejects_nan() {
        let mut p = vec![Tensor::new(vec![1], vec![5.0]).unwrap()];
        let mut st = OptimState::for_params(&p);
        let hp = AdamParams {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut prev = 5.0;
        for _ in 0..100 {
            let g = vec![Tensor::new(vec![1], vec![2.0]).unwrap()];
            adam_step(&mut p, &g, &mut st, &hp, &[]).unwrap();
            let now = p[0].data()[0];
            assert!(now < prev);
            prev = now;
        }
        let mut bad = Tensor::zeros(&[1]);
        bad.data_mut()[0] = f64::NAN;
        let err = adam_step(&mut p, &[bad], &mut st, &hp, &["dense0.weight".into()]).unwrap_err();
        assert!(err.to_string().contains("dense0.weight"));
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(1), 1e-3);
        assert!((cfg.lr_at(2) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at(29) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn head_target_mismatch_is_rejected() {
        let m = init_model(&spec(HeadSpec::Softmax { classes: 3 }), &mut RngState::new(1)).unwrap();
        let cfg = TrainConfig {
            head_target: HeadTarget::Static {
                preset: StaticPreset::Y1,
            },
            ..Default::default()
        };
        assert!(Trainer::new(m, cfg).is_err());
        let m = init_model(
            &spec(HeadSpec::ScoreSoftmax { classes: 3, levels: 5 }),
            &mut RngState::new(1),
        )
        .unwrap();
        let cfg = TrainConfig {
            head_target: HeadTarget::Dgss(DgssConfig::defaults(4, 5).unwrap()),
            ..Default::default()
        };
        assert!(Trainer::new(m, cfg).is_err());
    }

    #[test]
    fn plain_forward_matches_tape() {
        let m = init_model(
            &spec(HeadSpec::ScoreSoftmax { classes: 2, levels: 3 }),
            &mut RngState::new(4),
        )
        .unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let plain = m.logits(&x, 2).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(vec![2, 4], x).unwrap());
        let (l, _) = m.forward_var(&mut tape, xv).unwrap();
        assert_eq!(tape.value(l).data(), &plain[..]);
    }
}
