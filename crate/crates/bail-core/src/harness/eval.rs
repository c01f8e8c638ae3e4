//! Policy evaluation: fixed-count test episodes with derived seeds.

use std::sync::Arc;

use crate::envs::{rollout, BehaviorPolicy, EnvSpec, PolicyBase};
use crate::imitation::Policy;
use crate::seeding::derive_seed;

/// Returns of one evaluation point: `n_episodes` test rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    /// Training progress (in policy epochs) at which this evaluation ran;
    /// filled by the caller, 0 for standalone evaluations.
    pub epoch: f64,
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Episodes that faulted (non-finite action, state, or reward) and were
    /// scored as zero.
    pub faults: usize,
}

impl EvalRecord {
    fn from_returns(epoch: f64, returns: Vec<f64>, faults: usize) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        EvalRecord {
            epoch,
            returns,
            mean,
            std: var.sqrt(),
            faults,
        }
    }
}

/// Run `n_episodes` deterministic test episodes with distinct derived seeds
/// and undiscounted returns. An episode that faults scores exactly 0 and
/// never aborts the evaluation.
pub fn evaluate_policy(env: &EnvSpec, policy: &Policy, n_episodes: usize, seed: u64) -> EvalRecord {
    let shared = Arc::new(policy.clone());
    let action_dim = env.action_dim;
    let base = PolicyBase::Map(Arc::new(move |state: &[f64]| {
        shared
            .act(state)
            .unwrap_or_else(|_| vec![f64::NAN; action_dim])
    }));
    let behavior = BehaviorPolicy::new(base, 0.0);
    let mut returns = Vec::with_capacity(n_episodes);
    let mut faults = 0;
    for episode in 0..n_episodes {
        let ep_seed = derive_seed(seed, "eval-episode", episode as u64);
        match rollout(env, &behavior, ep_seed, env.time_cap) {
            Ok(ep) => returns.push(ep.undiscounted_return()),
            Err(_) => {
                returns.push(0.0);
                faults += 1;
            }
        }
    }
    EvalRecord::from_returns(0.0, returns, faults)
}
