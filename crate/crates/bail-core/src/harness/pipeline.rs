//! End-to-end pipelines: batch acquisition, returns, split, envelope,
//! selection, policy training with periodic evaluation, and scoring.
//!
//! Runs are reproducible: identical configurations produce byte-identical
//! CSV and JSON outputs. Seeds execute in parallel over a shared immutable
//! batch (or per-seed generated batches) and never share mutable state.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    batch_statistics, compute_augmented_returns, compute_returns, load_batch,
    split_train_validation, Batch, ReturnsTable,
};
use crate::envelope::{
    envelope_value, save_envelope, train_upper_envelope, EnvelopeConfig, TrainTrace,
    UpperEnvelope,
};
use crate::envs::{
    generate_execution_batch, generate_training_batch, make_env, EnvSpec, PolicyBase,
};
use crate::error::{Error, Result};
use crate::harness::eval::{evaluate_policy, EvalRecord};
use crate::imitation::{
    load_policy, save_policy, train_policy_bc_hooked, train_progressive_bail_hooked,
    train_regression_value_and_select, Policy, PolicyConfig,
};
use crate::seeding::derive_seed;
use crate::selection::{
    export_selection_csv, select_auto, select_top_returns, selection_keys, SelectionRule,
};
use crate::Selection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bail,
    ProgressiveBail,
    Bc,
    TopG,
    RegressionValue,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algorithm::Bail => "bail",
            Algorithm::ProgressiveBail => "progressive_bail",
            Algorithm::Bc => "bc",
            Algorithm::TopG => "top_g",
            Algorithm::RegressionValue => "regression_value",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bail" => Ok(Algorithm::Bail),
            "progressive_bail" | "progressive" => Ok(Algorithm::ProgressiveBail),
            "bc" => Ok(Algorithm::Bc),
            "top_g" => Ok(Algorithm::TopG),
            "regression_value" => Ok(Algorithm::RegressionValue),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Where the batch comes from. Generated batches derive a distinct seed per
/// training seed; a file batch is shared immutably across the seed group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchSource {
    Training {
        m: usize,
        sigma: f64,
        seed: u64,
    },
    Execution {
        m: usize,
        sigma: f64,
        seed: u64,
        /// `expert`, `mediocre`, `uniform`, or a policy checkpoint path.
        policy: String,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnsMode {
    Plain,
    Augmented,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: String,
    pub time_cap: usize,
    /// Defaults by horizon: 0.99 when `time_cap >= 1000`, else 0.95.
    pub gamma: Option<f64>,
    pub source: BatchSource,
    pub algorithm: Algorithm,
    pub envelope: EnvelopeConfig,
    pub policy: PolicyConfig,
    /// Selection percentage; defaults to 30 (25 for progressive).
    pub p_percent: Option<f64>,
    pub returns_mode: ReturnsMode,
    pub train_fraction: f64,
    /// Evaluation cadence in policy-training epochs.
    pub eval_interval: f64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "hill_climb".into(),
            time_cap: 150,
            gamma: None,
            source: BatchSource::Training {
                m: 30_000,
                sigma: 0.5,
                seed: 0,
            },
            algorithm: Algorithm::Bail,
            envelope: EnvelopeConfig::default(),
            policy: PolicyConfig::default(),
            p_percent: None,
            returns_mode: ReturnsMode::Augmented,
            train_fraction: 0.8,
            eval_interval: 0.5,
            eval_episodes: 10,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("runs/run"),
        }
    }
}

impl RunConfig {
    pub fn effective_gamma(&self) -> f64 {
        self.gamma
            .unwrap_or(if self.time_cap >= 1000 { 0.99 } else { 0.95 })
    }

    pub fn effective_p(&self) -> f64 {
        self.p_percent.unwrap_or(match self.algorithm {
            Algorithm::ProgressiveBail => 25.0,
            _ => 30.0,
        })
    }

    /// Epochs along which evaluation points are spread.
    fn eval_span_epochs(&self) -> usize {
        match self.algorithm {
            Algorithm::ProgressiveBail => self.envelope.max_epochs + self.policy.epochs,
            _ => self.policy.epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval <= 0.0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        let evals = (self.eval_span_epochs() as f64 / self.eval_interval + 1e-9).floor();
        if evals < 10.0 {
            return Err(Error::Config(format!(
                "final scoring averages the last ten evaluations, but \
                 {} epochs at eval_interval {} yield only {evals}",
                self.eval_span_epochs(),
                self.eval_interval
            )));
        }
        self.envelope.validate()?;
        self.policy.validate()?;
        let gamma = self.effective_gamma();
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
        }
        let p = self.effective_p();
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::Config(format!("p_percent must be in (0, 100], got {p}")));
        }
        Ok(())
    }
}

/// Aggregate over the last ten evaluation points of each seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalScore {
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

impl FinalScore {
    fn from_scores(per_seed: Vec<(u64, f64)>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|&(_, s)| s).sum::<f64>() / n;
        let var = per_seed
            .iter()
            .map(|&(_, s)| (s - mean) * (s - mean))
            .sum::<f64>()
            / n;
        FinalScore {
            per_seed,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub final_score: Option<f64>,
    pub error: Option<String>,
    /// Whether ratio selection fell back to the difference rule.
    pub ratio_fallback: bool,
    pub batch_mean_episode_return: f64,
    pub eval_faults: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub algorithm: String,
    pub per_seed: Vec<SeedReport>,
    pub final_score: FinalScore,
}

struct SeedOutcome {
    seed: u64,
    records: Vec<EvalRecord>,
    final_score: f64,
    ratio_fallback: bool,
    batch_mean_episode_return: f64,
    envelope: Option<UpperEnvelope>,
    trace: Option<TrainTrace>,
    selection: Option<(Selection, Vec<f64>)>,
    policy: Policy,
}

/// Run the configured pipeline for every seed, writing learning curves,
/// checkpoints, and a JSON summary into the run directory.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;

    // A file batch is loaded once and shared; generated batches are derived
    // per seed.
    let shared_batch = match &config.source {
        BatchSource::File { path } => Some(load_batch(path)?),
        _ => None,
    };

    let outcomes: Vec<Result<SeedOutcome>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let batch = match &shared_batch {
                Some(b) => b.clone(),
                None => acquire_batch(config, seed)?,
            };
            run_seed(config, &batch, seed)
        })
        .collect();

    let mut reports = Vec::with_capacity(outcomes.len());
    let mut scored = Vec::new();
    let mut curves: Vec<(u64, Vec<EvalRecord>)> = Vec::new();
    for (outcome, &seed) in outcomes.into_iter().zip(&config.seeds) {
        match outcome {
            Ok(out) => {
                write_seed_artifacts(config, &out)?;
                reports.push(SeedReport {
                    seed: out.seed,
                    final_score: Some(out.final_score),
                    error: None,
                    ratio_fallback: out.ratio_fallback,
                    batch_mean_episode_return: out.batch_mean_episode_return,
                    eval_faults: out.records.iter().map(|r| r.faults).sum(),
                });
                scored.push((out.seed, out.final_score));
                curves.push((out.seed, out.records));
            }
            Err(err) => reports.push(SeedReport {
                seed,
                final_score: None,
                error: Some(err.to_string()),
                ratio_fallback: false,
                batch_mean_episode_return: f64::NAN,
                eval_faults: 0,
            }),
        }
    }
    if scored.is_empty() {
        return Err(Error::Training {
            epoch: 0,
            minibatch: 0,
            message: "all seeds failed".into(),
        });
    }

    write_learning_curves(&config.output_dir.join("learning_curves.csv"), &curves)?;
    let summary = RunSummary {
        config: config.clone(),
        algorithm: config.algorithm.to_string(),
        per_seed: reports,
        final_score: FinalScore::from_scores(scored),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(config.output_dir.join("summary.json"), json)?;
    Ok(summary)
}

fn acquire_batch(config: &RunConfig, seed: u64) -> Result<Batch> {
    let env = make_env(&config.env, config.time_cap)?;
    match &config.source {
        BatchSource::Training { m, sigma, seed: gen } => {
            generate_training_batch(&env, *m, *sigma, derive_seed(*gen, "gen-batch", seed))
        }
        BatchSource::Execution {
            m,
            sigma,
            seed: gen,
            policy,
        } => {
            let base = parse_policy_base(policy)?;
            generate_execution_batch(&env, *m, &base, *sigma, derive_seed(*gen, "gen-batch", seed))
        }
        BatchSource::File { .. } => unreachable!("file batches are loaded once"),
    }
}

pub fn parse_policy_base(name: &str) -> Result<PolicyBase> {
    match name {
        "expert" => Ok(PolicyBase::Expert),
        "mediocre" => Ok(PolicyBase::Mediocre),
        "uniform" => Ok(PolicyBase::Uniform),
        path => {
            let policy = load_policy(Path::new(path))?;
            let dim = policy.action_low.len();
            Ok(PolicyBase::Map(std::sync::Arc::new(move |s: &[f64]| {
                policy.act(s).unwrap_or_else(|_| vec![f64::NAN; dim])
            })))
        }
    }
}

/// Evaluation step positions within a training run: global minibatch steps
/// after which an evaluation runs, one per `eval_interval` epochs.
fn eval_positions(total_epochs: usize, steps_per_epoch: usize, interval: f64) -> Result<Vec<usize>> {
    if (interval * steps_per_epoch as f64) < 1.0 {
        return Err(Error::Config(format!(
            "eval_interval {interval} is finer than one minibatch step"
        )));
    }
    let count = (total_epochs as f64 / interval + 1e-9).floor() as usize;
    Ok((1..=count)
        .map(|k| (k as f64 * interval * steps_per_epoch as f64 - 1e-9).ceil() as usize)
        .collect())
}

fn run_seed(config: &RunConfig, batch: &Batch, seed: u64) -> Result<SeedOutcome> {
    // The environment evaluated against is the one that generated the batch.
    let env = make_env(&batch.metadata().env, batch.metadata().time_cap as usize)?;
    let gamma = config.effective_gamma();
    let returns = match config.returns_mode {
        ReturnsMode::Plain => compute_returns(batch, gamma)?,
        ReturnsMode::Augmented => compute_augmented_returns(batch, gamma)?,
    };
    run_seed_inner(config, batch, &returns, &env, seed)
}

/// Pipeline body with a caller-supplied returns table (the oracle-returns
/// comparison substitutes its own).
pub fn run_seed_with_returns(
    config: &RunConfig,
    batch: &Batch,
    returns: &ReturnsTable,
    env: &EnvSpec,
    seed: u64,
) -> Result<SeedRunOutcome> {
    let out = run_seed_inner(config, batch, returns, env, seed)?;
    Ok(SeedRunOutcome {
        final_score: out.final_score,
        records: out.records,
        ratio_fallback: out.ratio_fallback,
    })
}

/// Reduced per-seed outcome for programmatic callers.
pub struct SeedRunOutcome {
    pub final_score: f64,
    pub records: Vec<EvalRecord>,
    pub ratio_fallback: bool,
}

fn run_seed_inner(
    config: &RunConfig,
    batch: &Batch,
    returns: &ReturnsTable,
    env: &EnvSpec,
    seed: u64,
) -> Result<SeedOutcome> {
    let stats = batch_statistics(batch)?;
    let split = split_train_validation(batch, config.train_fraction, derive_seed(seed, "split", 0))?;
    let envelope_cfg = EnvelopeConfig {
        seed: derive_seed(seed, "envelope", 0),
        ..config.envelope.clone()
    };
    let policy_cfg = PolicyConfig {
        seed: derive_seed(seed, "policy", 0),
        ..config.policy.clone()
    };
    let eval_seed = derive_seed(seed, "eval", 0);
    let p = config.effective_p();

    let mut ratio_fallback = false;
    let mut envelope_out: Option<UpperEnvelope> = None;
    let mut trace_out: Option<TrainTrace> = None;
    let mut selection_out: Option<(Selection, Vec<f64>)> = None;
    let mut records: Vec<EvalRecord> = Vec::new();

    let policy = match config.algorithm {
        Algorithm::ProgressiveBail => {
            let total_epochs = envelope_cfg.max_epochs + policy_cfg.epochs;
            let n_train = split.train_indices.len();
            let steps_per_epoch = n_train.div_ceil(envelope_cfg.minibatch_size);
            let positions =
                eval_positions(total_epochs, steps_per_epoch, config.eval_interval)?;
            let mut next = 0usize;
            let outcome = train_progressive_bail_hooked(
                batch,
                returns,
                &split,
                &envelope_cfg,
                &policy_cfg,
                p,
                |step, view| {
                    while next < positions.len() && step == positions[next] {
                        let mut record = evaluate_policy(
                            env,
                            &view.snapshot(),
                            config.eval_episodes,
                            derive_seed(eval_seed, "point", next as u64),
                        );
                        record.epoch = (next + 1) as f64 * config.eval_interval;
                        records.push(record);
                        next += 1;
                    }
                    Ok(())
                },
            )?;
            ratio_fallback = outcome.ratio_fallbacks > 0;
            envelope_out = Some(outcome.envelope);
            outcome.policy
        }
        algorithm => {
            let indices: Vec<usize> = match algorithm {
                Algorithm::Bc => (0..batch.len()).collect(),
                Algorithm::TopG => {
                    let selection = select_top_returns(returns.returns(), p)?;
                    let keys = selection_keys(SelectionRule::TopG, returns.returns(), None)?;
                    let indices = selection.indices.clone();
                    selection_out = Some((selection, keys));
                    indices
                }
                Algorithm::Bail => {
                    let (envelope, trace) =
                        train_upper_envelope(batch, returns, &split, &envelope_cfg)?;
                    let values = envelope_value(&envelope, &batch.states_matrix(None))?;
                    let (selection, fell_back) = select_auto(returns.returns(), &values, p)?;
                    ratio_fallback = fell_back;
                    let keys =
                        selection_keys(selection.rule, returns.returns(), Some(&values))?;
                    let indices = selection.indices.clone();
                    envelope_out = Some(envelope);
                    trace_out = Some(trace);
                    selection_out = Some((selection, keys));
                    indices
                }
                Algorithm::RegressionValue => {
                    let (selection, value_net) = train_regression_value_and_select(
                        batch,
                        returns,
                        &split,
                        &envelope_cfg,
                        p,
                    )?;
                    let values = envelope_value(&value_net, &batch.states_matrix(None))?;
                    ratio_fallback = selection.rule == SelectionRule::Difference;
                    let keys =
                        selection_keys(selection.rule, returns.returns(), Some(&values))?;
                    let indices = selection.indices.clone();
                    envelope_out = Some(value_net);
                    selection_out = Some((selection, keys));
                    indices
                }
                Algorithm::ProgressiveBail => unreachable!(),
            };
            let steps_per_epoch = indices.len().div_ceil(policy_cfg.minibatch_size);
            let positions =
                eval_positions(policy_cfg.epochs, steps_per_epoch, config.eval_interval)?;
            let mut next = 0usize;
            train_policy_bc_hooked(batch, &indices, &policy_cfg, |step, view| {
                while next < positions.len() && step == positions[next] {
                    let mut record = evaluate_policy(
                        env,
                        &view.snapshot(),
                        config.eval_episodes,
                        derive_seed(eval_seed, "point", next as u64),
                    );
                    record.epoch = (next + 1) as f64 * config.eval_interval;
                    records.push(record);
                    next += 1;
                }
                Ok(())
            })?
        }
    };

    if records.len() < 10 {
        return Err(Error::Config(format!(
            "only {} evaluation points recorded, final scoring needs 10",
            records.len()
        )));
    }
    let last10 = &records[records.len() - 10..];
    let final_score = last10.iter().map(|r| r.mean).sum::<f64>() / 10.0;

    Ok(SeedOutcome {
        seed,
        records,
        final_score,
        ratio_fallback,
        batch_mean_episode_return: stats.mean_episode_return,
        envelope: envelope_out,
        trace: trace_out,
        selection: selection_out,
        policy,
    })
}

fn write_seed_artifacts(config: &RunConfig, out: &SeedOutcome) -> Result<()> {
    let dir = &config.output_dir;
    save_policy(&out.policy, &dir.join(format!("policy_seed{}.plcy", out.seed)))?;
    if let Some(envelope) = &out.envelope {
        save_envelope(envelope, &dir.join(format!("envelope_seed{}.envl", out.seed)))?;
    }
    if let Some(trace) = &out.trace {
        trace.to_csv(&dir.join(format!("envelope_trace_seed{}.csv", out.seed)))?;
    }
    if let Some((selection, keys)) = &out.selection {
        export_selection_csv(
            selection,
            keys,
            &dir.join(format!("selection_seed{}.csv", out.seed)),
        )?;
    }
    Ok(())
}

fn write_learning_curves(path: &Path, curves: &[(u64, Vec<EvalRecord>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "seed,epoch,mean_return,std_return")?;
    for (seed, records) in curves {
        for r in records {
            writeln!(w, "{seed},{},{},{}", r.epoch, r.mean, r.std)?;
        }
    }
    w.flush()?;
    Ok(())
}
