//! Upper-envelope training: fit a value network that lies on or above every
//! observed return, as tightly as regularization allows.
//!
//! The constrained fit is approximated by minimizing the K-weighted penalty
//! loss with minibatch Adam. Regularization is validation-based early
//! stopping by default: after each epoch the penalty loss over the validation
//! set is compared against the best seen so far, the best parameters are
//! snapshotted, and after `patience` consecutive worse epochs training
//! resumes from that snapshot. An optional `lambda * ||w||^2` term supports
//! the explicit-regularization limit checks (see [`train_with_l2_sweep`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, ReturnsTable, SplitIndex};
use crate::error::{Error, Result};
use crate::numcore::{adam_step, mlp_forward, mlp_gradient, penalty_loss, AdamState};
use crate::seeding::stage_rng;
use crate::{Mlp, Real, RealMatrix};

const ENVELOPE_MAGIC: &[u8; 8] = b"BAILENVL";
const ENVELOPE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    /// Penalty coefficient weighting below-envelope residuals.
    pub penalty_k: f64,
    /// Explicit weight regularization; 0 leaves early stopping as the only
    /// regularizer.
    pub lambda: f64,
    pub minibatch_size: usize,
    pub max_epochs: usize,
    /// Consecutive worse-than-best validation epochs before resetting to the
    /// best snapshot.
    pub patience: usize,
    pub seed: u64,
    pub normalize_inputs: bool,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            hidden_sizes: vec![128, 128],
            learning_rate: 3e-3,
            penalty_k: 1000.0,
            lambda: 0.0,
            minibatch_size: 256,
            max_epochs: 50,
            patience: 4,
            seed: 0,
            normalize_inputs: false,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.penalty_k < 1.0 {
            return Err(Error::Config(format!(
                "penalty_k must be >= 1, got {}",
                self.penalty_k
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.minibatch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "minibatch_size and max_epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn layer_sizes(&self, state_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(state_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(1);
        sizes
    }
}

/// Input standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    fn fit(states: &RealMatrix) -> Self {
        let (n, d) = (states.rows(), states.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(states.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut std = vec![0.0; d];
        for i in 0..n {
            for (k, &v) in states.row(i).iter().enumerate() {
                std[k] += (v - mean[k]) * (v - mean[k]);
            }
        }
        for s in &mut std {
            *s = (*s / n as f64).sqrt().max(1e-8);
        }
        Normalization { mean, std }
    }

    fn apply(&self, states: &RealMatrix) -> RealMatrix {
        let mut out = states.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        out
    }
}

/// A trained envelope: the best-validation parameter snapshot, the parameters
/// at the end of training, and the validation record that chose between them.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperEnvelope {
    /// Best-validation snapshot; the envelope that callers evaluate.
    pub params: Mlp,
    /// Parameters at the final training step.
    pub final_train_params: Mlp,
    pub config: EnvelopeConfig,
    /// `(epoch, mean validation penalty loss)` per epoch; for runs without a
    /// validation split this tracks the training set instead.
    pub validation_history: Vec<(usize, f64)>,
    pub normalization: Option<Normalization>,
}

/// Per-epoch diagnostics of one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<usize>,
    /// Mean per-point penalty loss over the training split.
    pub train_loss: Vec<f64>,
    /// Mean per-point penalty loss over the validation split, if any.
    pub val_loss: Vec<Option<f64>>,
    /// Fraction of training points with `V(s_i) < G_i`.
    pub violation_fraction: Vec<f64>,
    /// Epochs at which training reset to the best snapshot.
    pub reset_epochs: Vec<usize>,
}

impl TrainTrace {
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "epoch,train_loss,val_loss,violation_fraction")?;
        for (i, &epoch) in self.epochs.iter().enumerate() {
            let val = self.val_loss[i].map_or(String::new(), |v| v.to_string());
            writeln!(
                w,
                "{epoch},{},{val},{}",
                self.train_loss[i], self.violation_fraction[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) struct StepOutcome {
    pub per_point_sum: f64,
    pub violation_count: usize,
}

/// Incremental envelope trainer; both the one-shot trainers here and the
/// progressive loop drive it, so the early-stopping bookkeeping is shared.
pub(crate) struct EnvelopeTrainer {
    pub config: EnvelopeConfig,
    params: Mlp,
    best_params: Mlp,
    adam: AdamState<Real>,
    shuffle_rng: ChaCha8Rng,
    best_val_loss: f64,
    consecutive_worse: usize,
    epoch: usize,
    validation_history: Vec<(usize, f64)>,
    reset_epochs: Vec<usize>,
    normalization: Option<Normalization>,
}

impl EnvelopeTrainer {
    pub fn new(
        state_dim: usize,
        config: &EnvelopeConfig,
        normalization: Option<Normalization>,
    ) -> Result<Self> {
        config.validate()?;
        let mut init_rng = stage_rng(config.seed, "envelope-init");
        let params = Mlp::init_uniform(&config.layer_sizes(state_dim), &mut init_rng)?;
        Ok(EnvelopeTrainer {
            adam: AdamState::new(&params),
            best_params: params.clone(),
            params,
            shuffle_rng: stage_rng(config.seed, "envelope-shuffle"),
            best_val_loss: f64::INFINITY,
            consecutive_worse: 0,
            epoch: 0,
            validation_history: Vec::new(),
            reset_epochs: Vec::new(),
            config: config.clone(),
            normalization,
        })
    }

    pub fn normalize(&self, states: &RealMatrix) -> RealMatrix {
        match &self.normalization {
            Some(n) => n.apply(states),
            None => states.clone(),
        }
    }

    /// Shuffled minibatch index lists for one epoch over `n` points.
    pub fn epoch_minibatches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        order
            .chunks(self.config.minibatch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// Envelope values under the current training parameters, for normalized
    /// states.
    pub fn current_values(&self, states: &RealMatrix) -> Result<Vec<Real>> {
        Ok(mlp_forward(&self.params, states)?.data().to_vec())
    }

    /// One Adam step on the mean penalty loss of a (normalized, gathered)
    /// minibatch.
    pub fn minibatch_step(
        &mut self,
        states: &RealMatrix,
        targets: &[Real],
        minibatch: usize,
    ) -> Result<StepOutcome> {
        let values = self.current_values(states)?;
        let (report, value_grads) = penalty_loss(
            &values,
            targets,
            self.config.penalty_k,
            &self.params,
            self.config.lambda,
        )?;
        if !report.total.is_finite() {
            return Err(Error::Training {
                epoch: self.epoch + 1,
                minibatch,
                message: "penalty loss became non-finite".into(),
            });
        }
        let scale = 1.0 / states.rows() as f64;
        let upstream = RealMatrix::from_vec(
            states.rows(),
            1,
            value_grads.iter().map(|g| g * scale).collect(),
        );
        let mut grads = mlp_gradient(&self.params, states, &upstream)?;
        if self.config.lambda > 0.0 {
            grads.add_l2_weight_grad(&self.params, self.config.lambda);
        }
        let (params, adam) =
            adam_step(&self.params, &grads, &self.adam, self.config.learning_rate)?;
        self.params = params;
        self.adam = adam;
        Ok(StepOutcome {
            per_point_sum: report.per_point.iter().sum(),
            violation_count: report.violation_count,
        })
    }

    /// Close an epoch against the validation set: record the mean validation
    /// penalty loss (lambda excluded), keep the best snapshot, and reset to
    /// it after `patience` consecutive worse epochs.
    pub fn end_epoch_validated(
        &mut self,
        val_states: &RealMatrix,
        val_targets: &[Real],
    ) -> Result<(f64, bool)> {
        self.epoch += 1;
        let values = self.current_values(val_states)?;
        let (report, _) = penalty_loss(
            &values,
            val_targets,
            self.config.penalty_k,
            &self.params,
            0.0,
        )?;
        let val_mean = report.total / val_targets.len() as f64;
        if !val_mean.is_finite() {
            return Err(Error::Training {
                epoch: self.epoch,
                minibatch: 0,
                message: "validation loss became non-finite".into(),
            });
        }
        self.validation_history.push((self.epoch, val_mean));
        let mut reset = false;
        if val_mean < self.best_val_loss {
            self.best_val_loss = val_mean;
            self.best_params = self.params.clone();
            self.consecutive_worse = 0;
        } else if val_mean > self.best_val_loss {
            self.consecutive_worse += 1;
            if self.consecutive_worse >= self.config.patience {
                // Only the parameters return to the snapshot; the optimizer
                // moments carry on, so post-reset trajectories differ and
                // training can keep improving on the snapshot.
                self.params = self.best_params.clone();
                self.consecutive_worse = 0;
                self.reset_epochs.push(self.epoch);
                reset = true;
            }
        } else {
            self.consecutive_worse = 0;
        }
        Ok((val_mean, reset))
    }

    /// Full-set objective at the current parameters: penalty total plus the
    /// lambda term.
    pub fn full_objective(&self, states: &RealMatrix, targets: &[Real]) -> Result<f64> {
        let values = self.current_values(states)?;
        let (report, _) = penalty_loss(
            &values,
            targets,
            self.config.penalty_k,
            &self.params,
            self.config.lambda,
        )?;
        Ok(report.total)
    }

    /// Close an epoch without a validation split: the monitored loss is the
    /// full training objective and the best visit becomes the snapshot.
    pub fn end_epoch_unvalidated(&mut self, objective_mean: f64) {
        self.epoch += 1;
        self.validation_history.push((self.epoch, objective_mean));
        if objective_mean < self.best_val_loss {
            self.best_val_loss = objective_mean;
            self.best_params = self.params.clone();
        }
    }

    pub fn finish(self) -> (UpperEnvelope, Vec<usize>) {
        (
            UpperEnvelope {
                params: self.best_params,
                final_train_params: self.params,
                config: self.config,
                validation_history: self.validation_history,
                normalization: self.normalization,
            },
            self.reset_epochs,
        )
    }
}

pub(crate) fn fit_normalization(states: &RealMatrix) -> Normalization {
    Normalization::fit(states)
}

fn gather_targets(returns: &ReturnsTable, indices: &[usize]) -> Vec<Real> {
    indices.iter().map(|&i| returns.returns()[i]).collect()
}

fn check_alignment(
    batch: &Batch,
    returns: &ReturnsTable,
    split: Option<&SplitIndex>,
) -> Result<()> {
    if returns.len() != batch.len() {
        return Err(Error::LengthMismatch {
            context: "returns vs batch",
            left: returns.len(),
            right: batch.len(),
        });
    }
    if let Some(split) = split {
        let in_range = |ix: &[usize]| ix.iter().all(|&i| i < batch.len());
        if !in_range(&split.train_indices) || !in_range(&split.validation_indices) {
            return Err(Error::Config("split indices out of range".into()));
        }
        if split.train_indices.is_empty() || split.validation_indices.is_empty() {
            return Err(Error::Config("split has an empty side".into()));
        }
    }
    Ok(())
}

/// Fit the envelope on the training split with early stopping against the
/// validation split; the returned envelope carries the best-validation
/// parameters. Fully seed-reproducible.
pub fn train_upper_envelope(
    batch: &Batch,
    returns: &ReturnsTable,
    split: &SplitIndex,
    config: &EnvelopeConfig,
) -> Result<(UpperEnvelope, TrainTrace)> {
    check_alignment(batch, returns, Some(split))?;
    let train_states_raw = batch.states_matrix(Some(&split.train_indices));
    let normalization = config
        .normalize_inputs
        .then(|| Normalization::fit(&train_states_raw));
    let mut trainer = EnvelopeTrainer::new(batch.state_dim(), config, normalization)?;

    let train_states = trainer.normalize(&train_states_raw);
    let train_targets = gather_targets(returns, &split.train_indices);
    let val_states = trainer.normalize(&batch.states_matrix(Some(&split.validation_indices)));
    let val_targets = gather_targets(returns, &split.validation_indices);

    let mut trace = TrainTrace::default();
    for epoch in 1..=config.max_epochs {
        let (train_mean, violation_fraction) =
            run_epoch(&mut trainer, &train_states, &train_targets)?;
        let (val_mean, reset) = trainer.end_epoch_validated(&val_states, &val_targets)?;
        trace.epochs.push(epoch);
        trace.train_loss.push(train_mean);
        trace.val_loss.push(Some(val_mean));
        trace.violation_fraction.push(violation_fraction);
        if reset {
            trace.reset_epochs.push(epoch);
        }
    }
    let (envelope, _) = trainer.finish();
    Ok((envelope, trace))
}

fn run_epoch(
    trainer: &mut EnvelopeTrainer,
    states: &RealMatrix,
    targets: &[Real],
) -> Result<(f64, f64)> {
    let n = targets.len();
    let mut loss_sum = 0.0;
    let mut violations = 0usize;
    for (k, mb) in trainer.epoch_minibatches(n).into_iter().enumerate() {
        let mb_states = states.gather_rows(&mb);
        let mb_targets: Vec<Real> = mb.iter().map(|&i| targets[i]).collect();
        let outcome = trainer.minibatch_step(&mb_states, &mb_targets, k)?;
        loss_sum += outcome.per_point_sum;
        violations += outcome.violation_count;
    }
    Ok((loss_sum / n as f64, violations as f64 / n as f64))
}

/// Envelope values for a stack of states, using the best-validation
/// parameters (and the stored input normalization, if any).
pub fn envelope_value(envelope: &UpperEnvelope, states: &RealMatrix) -> Result<Vec<Real>> {
    let states = match &envelope.normalization {
        Some(n) => n.apply(states),
        None => states.clone(),
    };
    Ok(mlp_forward(&envelope.params, &states)?.data().to_vec())
}

/// Full-budget training without a validation split (the sweep path). The
/// monitored objective is the full-set mean penalty loss including the
/// lambda term — exactly what the optimizer minimizes — and the returned
/// envelope carries the best iterate visited; constant-rate Adam jitters
/// around the optimum, so the best visit is the solver's answer.
fn train_full_budget(
    batch: &Batch,
    returns: &ReturnsTable,
    config: &EnvelopeConfig,
) -> Result<(UpperEnvelope, TrainTrace)> {
    check_alignment(batch, returns, None)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let states_raw = batch.states_matrix(None);
    let normalization = config
        .normalize_inputs
        .then(|| Normalization::fit(&states_raw));
    let mut trainer = EnvelopeTrainer::new(batch.state_dim(), config, normalization)?;
    let states = trainer.normalize(&states_raw);
    let targets = returns.returns().to_vec();
    let n = targets.len() as f64;

    let mut trace = TrainTrace::default();
    for epoch in 1..=config.max_epochs {
        let (train_mean, violation_fraction) = run_epoch(&mut trainer, &states, &targets)?;
        let objective = trainer.full_objective(&states, &targets)?;
        trainer.end_epoch_unvalidated(objective / n);
        trace.epochs.push(epoch);
        trace.train_loss.push(train_mean);
        trace.val_loss.push(None);
        trace.violation_fraction.push(violation_fraction);
    }
    let (envelope, _) = trainer.finish();
    Ok((envelope, trace))
}

/// Train one envelope per lambda with early stopping disabled and the full
/// epoch budget, all from the same initialization seed. Exposes the explicit
/// L2 regularization path: as lambda grows the fit flattens toward the
/// constant at the maximum return.
pub fn train_with_l2_sweep(
    batch: &Batch,
    returns: &ReturnsTable,
    lambdas: &[f64],
    config: &EnvelopeConfig,
) -> Result<Vec<(f64, UpperEnvelope)>> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda sweep needs at least one value".into()));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) || lambdas[0] < 0.0 {
        return Err(Error::Config("lambdas must be ascending and >= 0".into()));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = EnvelopeConfig {
            lambda,
            ..config.clone()
        };
        let (envelope, _) = train_full_budget(batch, returns, &cfg)?;
        out.push((lambda, envelope));
    }
    Ok(out)
}

/// Train once per penalty coefficient K (identical initialization and data
/// order) and report the total constraint violation
/// `sum_i max(0, G_i - V(s_i))^2` after full training.
pub fn penalty_k_sweep(
    batch: &Batch,
    returns: &ReturnsTable,
    ks: &[f64],
    config: &EnvelopeConfig,
) -> Result<Vec<(f64, f64)>> {
    if ks.is_empty() {
        return Err(Error::Config("K sweep needs at least one value".into()));
    }
    if ks.windows(2).any(|w| w[0] > w[1]) || ks[0] < 1.0 {
        return Err(Error::Config("ks must be ascending and >= 1".into()));
    }
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let cfg = EnvelopeConfig {
            penalty_k: k,
            ..config.clone()
        };
        let (envelope, _) = train_full_budget(batch, returns, &cfg)?;
        let values = envelope_value(&envelope, &batch.states_matrix(None))?;
        let violation = values
            .iter()
            .zip(returns.returns())
            .map(|(&v, &g)| (g - v).max(0.0).powi(2))
            .sum();
        out.push((k, violation));
    }
    Ok(out)
}

/// Write an envelope checkpoint: parameters, config echo, normalization, and
/// validation history.
pub fn save_envelope(envelope: &UpperEnvelope, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ENVELOPE_MAGIC)?;
    w.write_u32::<LittleEndian>(ENVELOPE_VERSION)?;
    write_network(&mut w, &envelope.params)?;
    match &envelope.normalization {
        Some(n) => {
            w.write_u8(1)?;
            for &v in n.mean.iter().chain(&n.std) {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        None => w.write_u8(0)?,
    }
    w.write_u32::<LittleEndian>(envelope.validation_history.len() as u32)?;
    for &(epoch, loss) in &envelope.validation_history {
        w.write_u32::<LittleEndian>(epoch as u32)?;
        w.write_f64::<LittleEndian>(loss)?;
    }
    let cfg = serde_json::to_vec(&envelope.config)?;
    w.write_u32::<LittleEndian>(cfg.len() as u32)?;
    w.write_all(&cfg)?;
    w.flush()?;
    Ok(())
}

/// Load an envelope checkpoint. The checkpoint stores the best-validation
/// parameters only, so `final_train_params` equals `params` after a load.
pub fn load_envelope(path: &Path) -> Result<UpperEnvelope> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated {
        context: "envelope magic",
    })?;
    if &magic != ENVELOPE_MAGIC {
        return Err(Error::BadMagic {
            expected: "BAILENVL",
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "envelope version",
    })?;
    if version != ENVELOPE_VERSION {
        return Err(Error::Version {
            expected: ENVELOPE_VERSION,
            got: version,
        });
    }
    let params = read_network(&mut r, "envelope parameters")?;
    let norm_flag = r.read_u8().map_err(|_| Error::Truncated {
        context: "envelope normalization",
    })?;
    let normalization = match norm_flag {
        0 => None,
        1 => {
            let d = params.in_dim();
            let mean = read_f64s(&mut r, d, "envelope normalization")?;
            let std = read_f64s(&mut r, d, "envelope normalization")?;
            Some(Normalization { mean, std })
        }
        other => {
            return Err(Error::DimensionMismatch(format!(
                "invalid normalization flag {other}"
            )))
        }
    };
    let hist_len = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "envelope history",
    })? as usize;
    let mut validation_history = Vec::with_capacity(hist_len);
    for _ in 0..hist_len {
        let epoch = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
            context: "envelope history",
        })? as usize;
        let loss = r.read_f64::<LittleEndian>().map_err(|_| Error::Truncated {
            context: "envelope history",
        })?;
        validation_history.push((epoch, loss));
    }
    let cfg_len = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "envelope config",
    })? as usize;
    let mut cfg_buf = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_buf).map_err(|_| Error::Truncated {
        context: "envelope config",
    })?;
    let config: EnvelopeConfig = serde_json::from_slice(&cfg_buf)?;
    Ok(UpperEnvelope {
        final_train_params: params.clone(),
        params,
        config,
        validation_history,
        normalization,
    })
}

pub(crate) fn write_network<W: Write>(w: &mut W, params: &Mlp) -> Result<()> {
    w.write_u32::<LittleEndian>(params.layer_sizes().len() as u32)?;
    for &s in params.layer_sizes() {
        w.write_u32::<LittleEndian>(s as u32)?;
    }
    for v in params.to_flat() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_network<R: Read>(r: &mut R, context: &'static str) -> Result<Mlp> {
    let n_sizes = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated { context })? as usize;
    if n_sizes < 2 {
        return Err(Error::DimensionMismatch(format!(
            "network needs at least 2 layer sizes, file has {n_sizes}"
        )));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let s = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Truncated { context })? as usize;
        if s == 0 {
            return Err(Error::DimensionMismatch("zero layer size in file".into()));
        }
        sizes.push(s);
    }
    let count = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
    let flat = read_f64s(r, count, context)?;
    Mlp::from_flat(&sizes, &flat)
}

fn read_f64s<R: Read>(r: &mut R, n: usize, context: &'static str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| Error::Truncated { context })?,
        );
    }
    Ok(out)
}
