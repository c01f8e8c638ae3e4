//! Deterministic toy continuous-control environments and the behavior-policy
//! machinery used to generate batches from them.
//!
//! Two environments with known analytic experts:
//!
//! * `point_reach` — 2-D position, action in `[-1,1]^2`, dynamics
//!   `s' = s + 0.1 a`, reward `-||s'||`, natural termination inside a small
//!   disk around the goal at the origin.
//! * `hill_climb` — 1-D state, action in `[-1,1]`, dynamics
//!   `s' = s + 0.1 a (1 - tanh^2 s)`, reward `-(s' - 1)^2`, truncation only.
//!
//! Dynamics and rewards are pure functions; every generated batch is fully
//! determined by `(env, policy, seed)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Batch, BatchMetadata, ReturnKind, ReturnsTable, Transition};
use crate::error::{Error, Result};
use crate::seeding::indexed_rng;

const POINT_REACH_GOAL_RADIUS: f64 = 0.05;
const STEP_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EnvKind {
    PointReach,
    HillClimb,
}

/// A deterministic environment: dimensions, bounds, dynamics, reward, and a
/// seeded initial-state sampler.
#[derive(Clone, Debug)]
pub struct EnvSpec {
    kind: EnvKind,
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub time_cap: usize,
}

pub fn make_env(name: &str, time_cap: usize) -> Result<EnvSpec> {
    if time_cap == 0 {
        return Err(Error::Config("time_cap must be positive".into()));
    }
    let kind = match name {
        "point_reach" => EnvKind::PointReach,
        "hill_climb" => EnvKind::HillClimb,
        other => return Err(Error::UnknownEnv(other.to_string())),
    };
    let (state_dim, action_dim) = match kind {
        EnvKind::PointReach => (2, 2),
        EnvKind::HillClimb => (1, 1),
    };
    Ok(EnvSpec {
        kind,
        name: name.to_string(),
        state_dim,
        action_dim,
        action_low: vec![-1.0; action_dim],
        action_high: vec![1.0; action_dim],
        time_cap,
    })
}

impl EnvSpec {
    /// Deterministic step `(s, a) -> (s', r)`.
    pub fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        match self.kind {
            EnvKind::PointReach => {
                let next: Vec<f64> = state
                    .iter()
                    .zip(action)
                    .map(|(s, a)| s + STEP_SCALE * a)
                    .collect();
                let dist = next.iter().map(|v| v * v).sum::<f64>().sqrt();
                (next, -dist)
            }
            EnvKind::HillClimb => {
                let s = state[0];
                let t = s.tanh();
                let next = s + STEP_SCALE * action[0] * (1.0 - t * t);
                (vec![next], -(next - 1.0).powi(2))
            }
        }
    }

    /// Natural termination test on the post-step state.
    pub fn is_terminal(&self, next_state: &[f64]) -> bool {
        match self.kind {
            EnvKind::PointReach => {
                next_state.iter().map(|v| v * v).sum::<f64>().sqrt() < POINT_REACH_GOAL_RADIUS
            }
            EnvKind::HillClimb => false,
        }
    }

    pub fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.kind {
            // Anywhere in the unit square, away from the goal disk.
            EnvKind::PointReach => loop {
                let s: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if !self.is_terminal(&s) {
                    return s;
                }
            },
            // Left of the goal plateau at s = 1, where the dynamics gain
            // (1 - tanh^2 s) still allows visible progress within an episode.
            EnvKind::HillClimb => vec![rng.gen_range(-0.5..0.0)],
        }
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action
            .iter_mut()
            .zip(&self.action_low)
            .zip(&self.action_high)
        {
            *a = a.clamp(*lo, *hi);
        }
    }

    /// Scripted expert: full-gain proportional controller toward the goal.
    pub fn expert_action(&self, state: &[f64]) -> Vec<f64> {
        let mut a = match self.kind {
            EnvKind::PointReach => state.iter().map(|s| -s / STEP_SCALE).collect::<Vec<f64>>(),
            EnvKind::HillClimb => vec![(1.0 - state[0]) / STEP_SCALE],
        };
        self.clip_action(&mut a);
        a
    }

    /// Scripted mediocre controller: the expert at 30% gain, so it drifts
    /// toward the goal but converges slowly.
    pub fn mediocre_action(&self, state: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = self.expert_action(state).iter().map(|v| 0.3 * v).collect();
        self.clip_action(&mut a);
        a
    }
}

/// A deterministic state-to-action map usable as a policy base.
pub type ActionFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The deterministic core of a behavior policy.
#[derive(Clone)]
pub enum PolicyBase {
    Expert,
    Mediocre,
    /// Uniform random action in bounds, drawn from the rollout RNG.
    Uniform,
    /// `alpha * expert + (1 - alpha) * uniform`; the training-batch schedule
    /// sweeps `alpha` from 0 to 1 across the batch.
    Blend { alpha: f64 },
    /// Any deterministic map, e.g. a trained policy network.
    Map(ActionFn),
}

impl fmt::Debug for PolicyBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyBase::Expert => write!(f, "Expert"),
            PolicyBase::Mediocre => write!(f, "Mediocre"),
            PolicyBase::Uniform => write!(f, "Uniform"),
            PolicyBase::Blend { alpha } => write!(f, "Blend {{ alpha: {alpha} }}"),
            PolicyBase::Map(_) => write!(f, "Map(..)"),
        }
    }
}

/// A base controller plus Gaussian exploration noise. Noise is added before
/// clipping; emitted actions always lie within the action bounds.
#[derive(Clone, Debug)]
pub struct BehaviorPolicy {
    pub base: PolicyBase,
    pub noise_sigma: f64,
}

impl BehaviorPolicy {
    pub fn new(base: PolicyBase, noise_sigma: f64) -> Self {
        BehaviorPolicy { base, noise_sigma }
    }

    fn act(&self, env: &EnvSpec, state: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut action = match &self.base {
            PolicyBase::Expert => env.expert_action(state),
            PolicyBase::Mediocre => env.mediocre_action(state),
            PolicyBase::Uniform => uniform_action(env, rng),
            PolicyBase::Blend { alpha } => {
                let e = env.expert_action(state);
                let u = uniform_action(env, rng);
                e.iter()
                    .zip(&u)
                    .map(|(e, u)| alpha * e + (1.0 - alpha) * u)
                    .collect()
            }
            PolicyBase::Map(f) => f(state),
        };
        if action.len() != env.action_dim {
            return Err(Error::Rollout(format!(
                "policy emitted {} action dims, environment expects {}",
                action.len(),
                env.action_dim
            )));
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("sigma >= 0");
            for a in &mut action {
                *a += normal.sample(rng);
            }
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Rollout("policy emitted a non-finite action".into()));
        }
        env.clip_action(&mut action);
        Ok(action)
    }
}

fn uniform_action(env: &EnvSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    env.action_low
        .iter()
        .zip(&env.action_high)
        .map(|(&lo, &hi)| rng.gen_range(lo..hi))
        .collect()
}

/// One step of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// An ordered rollout with its end condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub terminated: bool,
    pub truncated: bool,
}

impl Episode {
    pub fn undiscounted_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Roll one episode; fully reproducible from `(env, policy, seed)`.
pub fn rollout(
    env: &EnvSpec,
    policy: &BehaviorPolicy,
    seed: u64,
    max_steps: usize,
) -> Result<Episode> {
    if max_steps == 0 {
        return Err(Error::Config("max_steps must be >= 1".into()));
    }
    let mut rng = indexed_rng(seed, "rollout", 0);
    let mut state = env.initial_state(&mut rng);
    let mut steps = Vec::new();
    let mut terminated = false;
    for _ in 0..max_steps {
        let action = policy.act(env, &state, &mut rng)?;
        let (next_state, reward) = env.step(&state, &action);
        if !reward.is_finite() || next_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Rollout("environment produced a non-finite value".into()));
        }
        terminated = env.is_terminal(&next_state);
        steps.push(Step {
            state,
            action,
            reward,
            next_state: next_state.clone(),
        });
        state = next_state;
        if terminated {
            break;
        }
    }
    Ok(Episode {
        truncated: !terminated && steps.len() == max_steps,
        steps,
        terminated,
    })
}

fn push_episode(
    transitions: &mut Vec<Transition>,
    episode: &Episode,
    episode_id: u32,
    remaining: usize,
) -> usize {
    let take = episode.steps.len().min(remaining);
    for (i, step) in episode.steps.iter().take(take).enumerate() {
        let is_last_stored = i + 1 == take;
        let kept_whole = take == episode.steps.len();
        transitions.push(Transition {
            state: step.state.clone(),
            action: step.action.clone(),
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminated: is_last_stored && kept_whole && episode.terminated,
            // A tail cut off at the batch boundary is a truncation too: the
            // stored return is artificially short.
            truncated: is_last_stored && (!kept_whole || episode.truncated),
            episode_id,
            step_index: (i + 1) as u32,
        });
    }
    take
}

/// Mixed-quality batch: behavior interpolates linearly from uniform-random to
/// the scripted expert as the batch fills, with Gaussian exploration noise.
pub fn generate_training_batch(
    env: &EnvSpec,
    m: usize,
    sigma: f64,
    seed: u64,
) -> Result<Batch> {
    generate_schedule_batch(env, m, sigma, seed, "training", None)
}

/// Batch drawn from one fixed base policy (plus optional exploration noise).
pub fn generate_execution_batch(
    env: &EnvSpec,
    m: usize,
    base: &PolicyBase,
    sigma: f64,
    seed: u64,
) -> Result<Batch> {
    generate_schedule_batch(env, m, sigma, seed, "execution", Some(base.clone()))
}

fn generate_schedule_batch(
    env: &EnvSpec,
    m: usize,
    sigma: f64,
    seed: u64,
    generator: &str,
    fixed_base: Option<PolicyBase>,
) -> Result<Batch> {
    if m == 0 {
        return Err(Error::Config("batch size m must be >= 1".into()));
    }
    let mut transitions = Vec::with_capacity(m);
    let mut episode_id = 0u32;
    while transitions.len() < m {
        let base = fixed_base.clone().unwrap_or(PolicyBase::Blend {
            alpha: transitions.len() as f64 / m as f64,
        });
        let policy = BehaviorPolicy::new(base, sigma);
        let ep_seed = episode_seed(seed, episode_id);
        let episode = rollout(env, &policy, ep_seed, env.time_cap)?;
        let remaining = m - transitions.len();
        push_episode(&mut transitions, &episode, episode_id, remaining);
        episode_id += 1;
    }
    Batch::new(
        transitions,
        env.state_dim,
        env.action_dim,
        BatchMetadata {
            env: env.name.clone(),
            sigma,
            seed,
            generator: generator.to_string(),
            time_cap: env.time_cap as u32,
        },
    )
}

fn episode_seed(seed: u64, episode_id: u32) -> u64 {
    seed ^ (u64::from(episode_id).wrapping_mul(0x9e3779b97f4a7c15) | 1)
}

/// Batch whose returns are computed from rollouts `time_cap_multiplier` times
/// longer than the stored episodes, so every stored transition's return sums
/// at least `time_cap` actual rewards. The stored batch keeps only each
/// episode's first `time_cap` transitions; the returned table holds the
/// long-horizon returns for exactly those transitions.
///
/// With `base = None` the behavior follows the training-batch improving
/// schedule; otherwise the given base policy is used for every episode.
pub fn generate_oracle_batch(
    env: &EnvSpec,
    m: usize,
    base: Option<&PolicyBase>,
    sigma: f64,
    seed: u64,
    gamma: f64,
    time_cap_multiplier: usize,
) -> Result<(Batch, ReturnsTable)> {
    if m == 0 {
        return Err(Error::Config("batch size m must be >= 1".into()));
    }
    if time_cap_multiplier < 2 {
        return Err(Error::Config(
            "time_cap_multiplier must be >= 2 for oracle returns".into(),
        ));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
    }
    let horizon = env.time_cap * time_cap_multiplier;
    let mut transitions = Vec::with_capacity(m);
    let mut returns = Vec::with_capacity(m);
    let mut episode_id = 0u32;
    while transitions.len() < m {
        let episode_base = base.cloned().unwrap_or(PolicyBase::Blend {
            alpha: transitions.len() as f64 / m as f64,
        });
        let policy = BehaviorPolicy::new(episode_base, sigma);
        let episode = rollout(env, &policy, episode_seed(seed, episode_id), horizon)?;

        // Full-horizon discounted returns, backward over the long rollout.
        let mut full = vec![0.0; episode.steps.len()];
        let mut acc = 0.0;
        for (g, step) in full.iter_mut().zip(episode.steps.iter()).rev() {
            acc = step.reward + gamma * acc;
            *g = acc;
        }

        let keep = episode.steps.len().min(env.time_cap);
        let stored = Episode {
            steps: episode.steps[..keep].to_vec(),
            terminated: episode.terminated && keep == episode.steps.len(),
            truncated: !(episode.terminated && keep == episode.steps.len()),
        };
        let remaining = m - transitions.len();
        let taken = push_episode(&mut transitions, &stored, episode_id, remaining);
        returns.extend_from_slice(&full[..taken]);
        episode_id += 1;
    }
    let batch = Batch::new(
        transitions,
        env.state_dim,
        env.action_dim,
        BatchMetadata {
            env: env.name.clone(),
            sigma,
            seed,
            generator: "oracle".to_string(),
            time_cap: env.time_cap as u32,
        },
    )?;
    let table = ReturnsTable::new(returns, ReturnKind::Oracle, gamma)?;
    Ok((batch, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode_returns(batch: &Batch) -> Vec<f64> {
        batch
            .episode_ranges()
            .into_iter()
            .map(|r| batch.transitions()[r].iter().map(|t| t.reward).sum())
            .collect()
    }

    #[test]
    fn point_reach_step_matches_hand_evaluation() {
        let env = make_env("point_reach", 100).unwrap();
        let (next, reward) = env.step(&[0.2, 0.0], &[-1.0, 0.0]);
        assert!((next[0] - 0.1).abs() < 1e-15);
        assert_eq!(next[1], 0.0);
        assert!((reward + 0.1).abs() < 1e-15);
    }

    #[test]
    fn hill_climb_reward_is_zero_at_goal_plateau() {
        let env = make_env("hill_climb", 100).unwrap();
        let (next, reward) = env.step(&[1.0], &[0.0]);
        assert_eq!(next, vec![1.0]);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn step_is_deterministic() {
        let env = make_env("hill_climb", 100).unwrap();
        assert_eq!(env.step(&[0.3], &[0.7]), env.step(&[0.3], &[0.7]));
    }

    #[test]
    fn unknown_env_is_rejected() {
        assert!(matches!(
            make_env("cartpole", 100).unwrap_err(),
            Error::UnknownEnv(_)
        ));
    }

    #[test]
    fn zero_policy_in_hill_climb_is_a_fixed_point() {
        let env = make_env("hill_climb", 30).unwrap();
        let zero = BehaviorPolicy::new(PolicyBase::Map(Arc::new(|_: &[f64]| vec![0.0])), 0.0);
        let ep = rollout(&env, &zero, 9, 30).unwrap();
        assert_eq!(ep.steps.len(), 30);
        let s0 = ep.steps[0].state.clone();
        let r0 = ep.steps[0].reward;
        for step in &ep.steps {
            assert_eq!(step.state, s0);
            assert_eq!(step.reward, r0);
        }
    }

    #[test]
    fn same_seed_gives_identical_episodes() {
        let env = make_env("point_reach", 50).unwrap();
        let policy = BehaviorPolicy::new(PolicyBase::Blend { alpha: 0.5 }, 0.3);
        let a = rollout(&env, &policy, 42, 50).unwrap();
        let b = rollout(&env, &policy, 42, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expert_reaches_point_goal_quickly() {
        let env = make_env("point_reach", 100).unwrap();
        // Simulate the scripted expert directly from (0.3, 0.4).
        let mut state = vec![0.3, 0.4];
        let mut steps = 0;
        loop {
            let a = env.expert_action(&state);
            let (next, _) = env.step(&state, &a);
            steps += 1;
            if env.is_terminal(&next) {
                break;
            }
            state = next;
            assert!(steps < 100, "expert failed to reach the goal");
        }
        assert!(steps <= 20, "expert took {steps} steps");
    }

    #[test]
    fn policy_emitting_non_finite_action_aborts_rollout() {
        let env = make_env("hill_climb", 10).unwrap();
        let bad = BehaviorPolicy::new(PolicyBase::Map(Arc::new(|_: &[f64]| vec![f64::NAN])), 0.0);
        assert!(matches!(
            rollout(&env, &bad, 1, 10).unwrap_err(),
            Error::Rollout(_)
        ));
    }

    #[test]
    fn training_batch_improves_across_episodes() {
        let env = make_env("hill_climb", 60).unwrap();
        let batch = generate_training_batch(&env, 3000, 0.5, 7).unwrap();
        assert_eq!(batch.len(), 3000);
        let returns = episode_returns(&batch);
        let k = returns.len() / 10;
        assert!(k >= 1);
        let head: f64 = returns[..k].iter().sum::<f64>() / k as f64;
        let tail: f64 = returns[returns.len() - k..].iter().sum::<f64>() / k as f64;
        assert!(
            tail > head,
            "late episodes ({tail}) should beat early episodes ({head})"
        );
    }

    #[test]
    fn pinned_expert_schedule_with_zero_noise_acts_like_the_expert() {
        let env = make_env("point_reach", 40).unwrap();
        let batch = generate_execution_batch(&env, 200, &PolicyBase::Expert, 0.0, 3).unwrap();
        for t in batch.transitions() {
            assert_eq!(t.action, env.expert_action(&t.state));
        }
    }

    #[test]
    fn different_seeds_give_different_batches() {
        let env = make_env("hill_climb", 20).unwrap();
        let a = generate_training_batch(&env, 100, 0.5, 1).unwrap();
        let b = generate_training_batch(&env, 100, 0.5, 2).unwrap();
        assert_ne!(a.transitions()[0], b.transitions()[0]);
    }

    #[test]
    fn training_batch_quality_correlates_with_episode_index() {
        let env = make_env("hill_climb", 30).unwrap();
        let batch = generate_training_batch(&env, 1500, 0.5, 11).unwrap();
        let returns = episode_returns(&batch);
        assert!(returns.len() >= 50);
        let rho = spearman(&returns);
        assert!(rho > 0.0, "Spearman rho = {rho}");
    }

    // Spearman rank correlation of values against their positions.
    fn spearman(values: &[f64]) -> f64 {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut rank = vec![0.0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as f64;
        }
        let mean = (n as f64 - 1.0) / 2.0;
        let mut num = 0.0;
        let mut den_a = 0.0;
        let mut den_b = 0.0;
        for (i, &r) in rank.iter().enumerate() {
            let a = i as f64 - mean;
            let b = r - mean;
            num += a * b;
            den_a += a * a;
            den_b += b * b;
        }
        num / (den_a.sqrt() * den_b.sqrt())
    }

    #[test]
    fn mediocre_batch_sits_between_random_and_expert() {
        let env = make_env("hill_climb", 25).unwrap();
        let mean_return = |base: PolicyBase| {
            let batch = generate_execution_batch(&env, 500, &base, 0.0, 5).unwrap();
            let r = episode_returns(&batch);
            r.iter().sum::<f64>() / r.len() as f64
        };
        let random = mean_return(PolicyBase::Uniform);
        let mediocre = mean_return(PolicyBase::Mediocre);
        let expert = mean_return(PolicyBase::Expert);
        assert!(
            random < mediocre && mediocre < expert,
            "random {random}, mediocre {mediocre}, expert {expert}"
        );
    }

    #[test]
    fn execution_batch_respects_m_exactly() {
        let env = make_env("hill_climb", 30).unwrap();
        let batch = generate_execution_batch(&env, 95, &PolicyBase::Mediocre, 0.1, 2).unwrap();
        assert_eq!(batch.len(), 95);
        // the final episode was cut to fit, so it ends truncated
        let last = batch.transitions().last().unwrap();
        assert!(last.truncated);
    }

    #[test]
    fn oracle_returns_match_geometric_closed_form_for_constant_rewards() {
        // A zero action in hill_climb pins the state, so rewards are constant
        // and the 2T-horizon return has a closed form.
        let env = make_env("hill_climb", 100).unwrap();
        let gamma: f64 = 0.95;
        let zero = PolicyBase::Map(Arc::new(|_: &[f64]| vec![0.0]));
        let (batch, table) = generate_oracle_batch(&env, 100, Some(&zero), 0.0, 13, gamma, 2).unwrap();
        let r0 = batch.transitions()[0].reward;
        let closed_form = r0 * (1.0 - gamma.powi(200)) / (1.0 - gamma);
        assert!((table.returns()[0] - closed_form).abs() < 1e-9);
    }

    #[test]
    fn oracle_batch_stores_at_most_time_cap_per_episode() {
        let env = make_env("hill_climb", 40).unwrap();
        let (batch, table) = generate_oracle_batch(&env, 200, None, 0.3, 21, 0.95, 2).unwrap();
        assert_eq!(batch.len(), 200);
        assert_eq!(table.returns().len(), 200);
        for range in batch.episode_ranges() {
            assert!(range.len() <= 40);
        }
    }

    #[test]
    fn oracle_return_equals_plain_return_for_terminated_episode() {
        let env = make_env("point_reach", 50).unwrap();
        let gamma = 0.95;
        // Expert terminates well before the cap, so the long horizon adds nothing.
        let (batch, table) =
            generate_oracle_batch(&env, 30, Some(&PolicyBase::Expert), 0.0, 2, gamma, 2).unwrap();
        let plain = crate::dataset::compute_returns(&batch, gamma).unwrap();
        let mut saw_terminated = false;
        for range in batch.episode_ranges() {
            if batch.transitions()[range.end - 1].terminated {
                saw_terminated = true;
                for k in range {
                    assert!((table.returns()[k] - plain.returns()[k]).abs() < 1e-12);
                }
            }
        }
        assert!(saw_terminated);
    }

    #[test]
    fn actions_always_lie_within_bounds() {
        let env = make_env("point_reach", 20).unwrap();
        let batch = generate_training_batch(&env, 400, 1.5, 17).unwrap();
        for t in batch.transitions() {
            for (k, a) in t.action.iter().enumerate() {
                assert!(*a >= env.action_low[k] && *a <= env.action_high[k]);
            }
        }
    }
}
