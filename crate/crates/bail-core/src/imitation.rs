//! Policy training by regression: vanilla behavior cloning, cloning of a
//! selected subset, the progressive joint loop, and the symmetric-regression
//! value ablation.
//!
//! Policies are deterministic MLPs whose outputs are tanh-squashed onto the
//! action bounds, so an emitted action always lies strictly inside them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, ReturnsTable, SplitIndex};
use crate::envelope::{
    read_network, write_network, EnvelopeConfig, EnvelopeTrainer, UpperEnvelope,
};
use crate::error::{Error, Result};
use crate::numcore::{adam_step, mlp_forward, mlp_gradient, mse_loss, AdamState};
use crate::seeding::stage_rng;
use crate::selection::select_auto;
use crate::{Mlp, Real, RealMatrix, Selection};

const POLICY_MAGIC: &[u8; 8] = b"BAILPLCY";
const POLICY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden_sizes: vec![400, 300],
            learning_rate: 1e-3,
            minibatch_size: 256,
            epochs: 50,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("epochs and minibatch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// A deterministic policy network with its action bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub params: Mlp,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub config: PolicyConfig,
}

impl Policy {
    /// Squashed action for a single state.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.act_batch(&RealMatrix::from_vec(1, state.len(), state.to_vec()))?;
        Ok(out.row(0).to_vec())
    }

    /// Squashed actions for a stack of states.
    pub fn act_batch(&self, states: &RealMatrix) -> Result<RealMatrix> {
        let mut z = mlp_forward(&self.params, states)?;
        for i in 0..z.rows() {
            for (k, v) in z.row_mut(i).iter_mut().enumerate() {
                let center = 0.5 * (self.action_low[k] + self.action_high[k]);
                let half = 0.5 * (self.action_high[k] - self.action_low[k]);
                *v = center + half * v.tanh();
            }
        }
        Ok(z)
    }
}

/// Incremental regression trainer for the squashed policy.
pub(crate) struct PolicyTrainer {
    config: PolicyConfig,
    params: Mlp,
    adam: AdamState<Real>,
    shuffle_rng: ChaCha8Rng,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

impl PolicyTrainer {
    pub fn new(
        state_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        config: &PolicyConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
        sizes.push(state_dim);
        sizes.extend_from_slice(&config.hidden_sizes);
        sizes.push(action_low.len());
        let mut init_rng = stage_rng(config.seed, "policy-init");
        let params = Mlp::init_uniform(&sizes, &mut init_rng)?;
        Ok(PolicyTrainer {
            adam: AdamState::new(&params),
            params,
            shuffle_rng: stage_rng(config.seed, "policy-shuffle"),
            action_low: action_low.to_vec(),
            action_high: action_high.to_vec(),
            config: config.clone(),
        })
    }

    pub fn epoch_minibatches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        order
            .chunks(self.config.minibatch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// One Adam step on the mean squared action error of a minibatch;
    /// returns the summed squared error.
    pub fn minibatch_step(&mut self, states: &RealMatrix, actions: &RealMatrix) -> Result<f64> {
        let z = mlp_forward(&self.params, states)?;
        let mut squashed = z.clone();
        let mut dsquash = z; // reused: derivative of the squash wrt z
        for i in 0..squashed.rows() {
            for k in 0..squashed.cols() {
                let center = 0.5 * (self.action_low[k] + self.action_high[k]);
                let half = 0.5 * (self.action_high[k] - self.action_low[k]);
                let t = squashed[(i, k)].tanh();
                squashed[(i, k)] = center + half * t;
                dsquash[(i, k)] = half * (1.0 - t * t);
            }
        }
        let (loss, mut grad) = mse_loss(&squashed, actions)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch: 0,
                minibatch: 0,
                message: "policy regression loss became non-finite".into(),
            });
        }
        let scale = 1.0 / states.rows() as f64;
        for (g, &d) in grad.data_mut().iter_mut().zip(dsquash.data()) {
            *g *= d * scale;
        }
        let grads = mlp_gradient(&self.params, states, &grad)?;
        let (params, adam) =
            adam_step(&self.params, &grads, &self.adam, self.config.learning_rate)?;
        self.params = params;
        self.adam = adam;
        Ok(loss)
    }

    pub fn into_policy(self) -> Policy {
        Policy {
            params: self.params,
            action_low: self.action_low,
            action_high: self.action_high,
            config: self.config,
        }
    }

    pub fn snapshot(&self) -> Policy {
        Policy {
            params: self.params.clone(),
            action_low: self.action_low.clone(),
            action_high: self.action_high.clone(),
            config: self.config.clone(),
        }
    }
}

fn check_indices(indices: &[usize], len: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Config("selection is empty, nothing to clone".into()));
    }
    if indices.iter().any(|&i| i >= len) {
        return Err(Error::Config("selection index out of range".into()));
    }
    Ok(())
}

/// Clone the actions of the selected transitions by minibatch Adam on the
/// squared action error. The hook fires after every minibatch step with the
/// 1-based global step count and the current parameters.
pub fn train_policy_bc_hooked(
    batch: &Batch,
    indices: &[usize],
    config: &PolicyConfig,
    mut hook: impl FnMut(usize, &PolicyTrainerView) -> Result<()>,
) -> Result<Policy> {
    check_indices(indices, batch.len())?;
    let states = batch.states_matrix(Some(indices));
    let actions = batch.actions_matrix(Some(indices));
    let (env_low, env_high) = action_bounds_from_batch(batch);
    let mut trainer = PolicyTrainer::new(batch.state_dim(), &env_low, &env_high, config)?;
    let mut step = 0usize;
    for _ in 0..config.epochs {
        for mb in trainer.epoch_minibatches(indices.len()) {
            let mb_states = states.gather_rows(&mb);
            let mb_actions = actions.gather_rows(&mb);
            trainer.minibatch_step(&mb_states, &mb_actions)?;
            step += 1;
            hook(
                step,
                &PolicyTrainerView {
                    trainer: &trainer,
                },
            )?;
        }
    }
    Ok(trainer.into_policy())
}

/// Read-only view of an in-progress policy, for evaluation hooks.
pub struct PolicyTrainerView<'a> {
    trainer: &'a PolicyTrainer,
}

impl PolicyTrainerView<'_> {
    pub fn snapshot(&self) -> Policy {
        self.trainer.snapshot()
    }
}

/// Action bounds recorded for a policy: the envelope of actions is the
/// environment's, which generated batches always respect. Derived from the
/// batch contents so cloning works on loaded files without an `EnvSpec`.
fn action_bounds_from_batch(batch: &Batch) -> (Vec<f64>, Vec<f64>) {
    let d = batch.action_dim();
    let mut low = vec![f64::INFINITY; d];
    let mut high = vec![f64::NEG_INFINITY; d];
    for t in batch.transitions() {
        for k in 0..d {
            low[k] = low[k].min(t.action[k]);
            high[k] = high[k].max(t.action[k]);
        }
    }
    // Widen degenerate bounds so the squash stays well-defined.
    for k in 0..d {
        if low[k] >= high[k] {
            low[k] -= 1.0;
            high[k] += 1.0;
        }
    }
    // Round outward to the enclosing unit-ish box: batches generated here
    // clip to [-1, 1]; loaded foreign data keeps its observed hull.
    for k in 0..d {
        if low[k] >= -1.0 && high[k] <= 1.0 {
            low[k] = -1.0;
            high[k] = 1.0;
        }
    }
    (low, high)
}

/// Behavior cloning on the selected subset only.
pub fn train_policy_bc(batch: &Batch, indices: &[usize], config: &PolicyConfig) -> Result<Policy> {
    train_policy_bc_hooked(batch, indices, config, |_, _| Ok(()))
}

/// Vanilla behavior cloning over the whole batch.
pub fn train_bc_all(batch: &Batch, config: &PolicyConfig) -> Result<Policy> {
    let all: Vec<usize> = (0..batch.len()).collect();
    train_policy_bc(batch, &all, config)
}

/// Outcome of the progressive joint loop.
pub struct ProgressiveOutcome {
    pub policy: Policy,
    pub envelope: UpperEnvelope,
    /// Minibatches where the ratio rule was unusable and selection fell back
    /// to the difference rule.
    pub ratio_fallbacks: usize,
}

/// Progressive training: a single loop that per minibatch takes one envelope
/// penalty step, selects the top `p%` of that minibatch under the current
/// envelope (ratio rule, difference fallback), and takes one policy
/// regression step on the selected subset. Validation bookkeeping runs at
/// epoch boundaries exactly as in one-shot envelope training. The loop runs
/// `envelope.max_epochs + policy.epochs` epochs, the joint analog of the
/// sequential budget.
pub fn train_progressive_bail_hooked(
    batch: &Batch,
    returns: &ReturnsTable,
    split: &SplitIndex,
    envelope_config: &EnvelopeConfig,
    policy_config: &PolicyConfig,
    p_percent: f64,
    mut hook: impl FnMut(usize, &PolicyTrainerView) -> Result<()>,
) -> Result<ProgressiveOutcome> {
    if returns.len() != batch.len() {
        return Err(Error::LengthMismatch {
            context: "returns vs batch",
            left: returns.len(),
            right: batch.len(),
        });
    }
    if !(p_percent > 0.0 && p_percent <= 100.0) {
        return Err(Error::Config(format!(
            "p_percent must be in (0, 100], got {p_percent}"
        )));
    }
    let train_states_raw = batch.states_matrix(Some(&split.train_indices));
    let train_actions = batch.actions_matrix(Some(&split.train_indices));
    let normalization = envelope_config
        .normalize_inputs
        .then(|| crate::envelope::fit_normalization(&train_states_raw));
    let mut env_trainer = EnvelopeTrainer::new(batch.state_dim(), envelope_config, normalization)?;
    let train_states_env = env_trainer.normalize(&train_states_raw);
    let train_targets: Vec<Real> = split
        .train_indices
        .iter()
        .map(|&i| returns.returns()[i])
        .collect();
    let val_states = env_trainer.normalize(&batch.states_matrix(Some(&split.validation_indices)));
    let val_targets: Vec<Real> = split
        .validation_indices
        .iter()
        .map(|&i| returns.returns()[i])
        .collect();

    let (env_low, env_high) = action_bounds_from_batch(batch);
    let mut pol_trainer =
        PolicyTrainer::new(batch.state_dim(), &env_low, &env_high, policy_config)?;

    let total_epochs = envelope_config.max_epochs + policy_config.epochs;
    let n = split.train_indices.len();
    let mut ratio_fallbacks = 0usize;
    let mut step = 0usize;
    for _ in 0..total_epochs {
        for (k, mb) in env_trainer.epoch_minibatches(n).into_iter().enumerate() {
            let mb_env_states = train_states_env.gather_rows(&mb);
            let mb_targets: Vec<Real> = mb.iter().map(|&i| train_targets[i]).collect();
            env_trainer.minibatch_step(&mb_env_states, &mb_targets, k)?;

            let values = env_trainer.current_values(&mb_env_states)?;
            let (selection, fell_back) = select_auto(&mb_targets, &values, p_percent)?;
            ratio_fallbacks += usize::from(fell_back);

            let local: Vec<usize> = selection.indices;
            let sel_global: Vec<usize> = local.iter().map(|&j| mb[j]).collect();
            let mb_states = train_states_raw.gather_rows(&sel_global);
            let mb_actions = train_actions.gather_rows(&sel_global);
            pol_trainer.minibatch_step(&mb_states, &mb_actions)?;
            step += 1;
            hook(
                step,
                &PolicyTrainerView {
                    trainer: &pol_trainer,
                },
            )?;
        }
        env_trainer.end_epoch_validated(&val_states, &val_targets)?;
    }
    let (envelope, _) = env_trainer.finish();
    Ok(ProgressiveOutcome {
        policy: pol_trainer.into_policy(),
        envelope,
        ratio_fallbacks,
    })
}

pub fn train_progressive_bail(
    batch: &Batch,
    returns: &ReturnsTable,
    split: &SplitIndex,
    envelope_config: &EnvelopeConfig,
    policy_config: &PolicyConfig,
    p_percent: f64,
) -> Result<ProgressiveOutcome> {
    train_progressive_bail_hooked(
        batch,
        returns,
        split,
        envelope_config,
        policy_config,
        p_percent,
        |_, _| Ok(()),
    )
}

/// Ablation: fit the value net by plain symmetric regression (the K=1 case of
/// the penalty loss) and select against it with the usual ratio rule
/// (difference fallback). Identical pipeline to envelope-based selection
/// otherwise.
pub fn train_regression_value_and_select(
    batch: &Batch,
    returns: &ReturnsTable,
    split: &SplitIndex,
    config: &EnvelopeConfig,
    p_percent: f64,
) -> Result<(Selection, UpperEnvelope)> {
    let cfg = EnvelopeConfig {
        penalty_k: 1.0,
        ..config.clone()
    };
    let (value_net, _) = crate::envelope::train_upper_envelope(batch, returns, split, &cfg)?;
    let values = crate::envelope::envelope_value(&value_net, &batch.states_matrix(None))?;
    let (selection, _) = select_auto(returns.returns(), &values, p_percent)?;
    Ok((selection, value_net))
}

/// Write a policy checkpoint: parameters, action bounds, config echo.
pub fn save_policy(policy: &Policy, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(POLICY_MAGIC)?;
    w.write_u32::<LittleEndian>(POLICY_VERSION)?;
    write_network(&mut w, &policy.params)?;
    for &v in policy.action_low.iter().chain(&policy.action_high) {
        w.write_f64::<LittleEndian>(v)?;
    }
    let cfg = serde_json::to_vec(&policy.config)?;
    w.write_u32::<LittleEndian>(cfg.len() as u32)?;
    w.write_all(&cfg)?;
    w.flush()?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated {
        context: "policy magic",
    })?;
    if &magic != POLICY_MAGIC {
        return Err(Error::BadMagic {
            expected: "BAILPLCY",
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "policy version",
    })?;
    if version != POLICY_VERSION {
        return Err(Error::Version {
            expected: POLICY_VERSION,
            got: version,
        });
    }
    let params = read_network(&mut r, "policy parameters")?;
    let d = params.out_dim();
    let mut bounds = Vec::with_capacity(2 * d);
    for _ in 0..2 * d {
        bounds.push(r.read_f64::<LittleEndian>().map_err(|_| Error::Truncated {
            context: "policy bounds",
        })?);
    }
    let cfg_len = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "policy config",
    })? as usize;
    let mut cfg_buf = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_buf).map_err(|_| Error::Truncated {
        context: "policy config",
    })?;
    let config: PolicyConfig = serde_json::from_slice(&cfg_buf)?;
    Ok(Policy {
        params,
        action_low: bounds[..d].to_vec(),
        action_high: bounds[d..].to_vec(),
        config,
    })
}
