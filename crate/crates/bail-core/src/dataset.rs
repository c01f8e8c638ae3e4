//! Batch container, Monte Carlo returns (plain, augmented, oracle),
//! train/validation splitting, statistics, and persistence.
//!
//! Batches are immutable after construction; episodes are contiguous runs of
//! transitions whose `next_state` chains exactly into the successor's state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::seeding::stage_rng;

const BATCH_MAGIC: &[u8; 8] = b"BAILBTCH";
const BATCH_VERSION: u32 = 1;

/// One `(s, a, r, s')` sample with its episode bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
    pub episode_id: u32,
    /// 1-based position within the episode.
    pub step_index: u32,
}

/// Provenance of a batch, stored alongside the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub env: String,
    pub sigma: f64,
    pub seed: u64,
    pub generator: String,
    /// Episode truncation horizon of the generating environment; the
    /// augmentation window depends on it.
    pub time_cap: u32,
}

/// An ordered, episodic dataset of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    transitions: Vec<Transition>,
    state_dim: usize,
    action_dim: usize,
    metadata: BatchMetadata,
}

impl Batch {
    /// Validates episode structure: consistent dimensions, contiguous
    /// episodes with 1-based step indices, exact state stitching, and end
    /// flags only on final transitions.
    pub fn new(
        transitions: Vec<Transition>,
        state_dim: usize,
        action_dim: usize,
        metadata: BatchMetadata,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::DimensionMismatch(format!(
                "state_dim {state_dim}, action_dim {action_dim}"
            )));
        }
        let mut seen_last_of: Option<u32> = None;
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != state_dim
                || t.next_state.len() != state_dim
                || t.action.len() != action_dim
            {
                return Err(Error::DimensionMismatch(format!(
                    "transition {i} has dims ({}, {}, {}), batch has ({state_dim}, {action_dim})",
                    t.state.len(),
                    t.action.len(),
                    t.next_state.len(),
                )));
            }
            let starts_episode = i == 0 || transitions[i - 1].episode_id != t.episode_id;
            if starts_episode {
                if t.step_index != 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "episode {} starts at step_index {}",
                        t.episode_id, t.step_index
                    )));
                }
                if seen_last_of == Some(t.episode_id) {
                    return Err(Error::DimensionMismatch(format!(
                        "episode {} is not contiguous",
                        t.episode_id
                    )));
                }
            } else {
                let prev = &transitions[i - 1];
                if t.step_index != prev.step_index + 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "episode {} jumps from step {} to {}",
                        t.episode_id, prev.step_index, t.step_index
                    )));
                }
                if prev.terminated || prev.truncated {
                    return Err(Error::DimensionMismatch(format!(
                        "episode {} continues past a flagged transition",
                        t.episode_id
                    )));
                }
                if prev.next_state != t.state {
                    return Err(Error::DimensionMismatch(format!(
                        "episode {} breaks state stitching at step {}",
                        t.episode_id, t.step_index
                    )));
                }
            }
            let ends_episode =
                i + 1 == transitions.len() || transitions[i + 1].episode_id != t.episode_id;
            if ends_episode {
                seen_last_of = Some(t.episode_id);
            }
        }
        Ok(Batch {
            transitions,
            state_dim,
            action_dim,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn metadata(&self) -> &BatchMetadata {
        &self.metadata
    }

    /// Index ranges of the contiguous episodes, in order.
    pub fn episode_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..=self.transitions.len() {
            if i == self.transitions.len()
                || self.transitions[i].episode_id != self.transitions[i - 1].episode_id
            {
                ranges.push(start..i);
                start = i;
            }
        }
        ranges
    }

    /// States stacked as an `[n x state_dim]` matrix, optionally gathered by
    /// index.
    pub fn states_matrix(&self, indices: Option<&[usize]>) -> Matrix<f64> {
        self.rows_matrix(indices, |t| &t.state)
    }

    pub fn actions_matrix(&self, indices: Option<&[usize]>) -> Matrix<f64> {
        self.rows_matrix(indices, |t| &t.action)
    }

    fn rows_matrix(
        &self,
        indices: Option<&[usize]>,
        field: impl Fn(&Transition) -> &[f64],
    ) -> Matrix<f64> {
        let pick = |i: usize| field(&self.transitions[i]);
        let cols = if self.transitions.is_empty() {
            0
        } else {
            pick(0).len()
        };
        match indices {
            Some(idx) => {
                let mut data = Vec::with_capacity(idx.len() * cols);
                for &i in idx {
                    data.extend_from_slice(pick(i));
                }
                Matrix::from_vec(idx.len(), cols, data)
            }
            None => {
                let mut data = Vec::with_capacity(self.transitions.len() * cols);
                for i in 0..self.transitions.len() {
                    data.extend_from_slice(pick(i));
                }
                Matrix::from_vec(self.transitions.len(), cols, data)
            }
        }
    }
}

/// Which estimate a returns table holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Plain,
    Augmented,
    Oracle,
}

/// Per-transition Monte Carlo returns aligned with a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsTable {
    returns: Vec<f64>,
    kind: ReturnKind,
    gamma: f64,
}

impl ReturnsTable {
    pub fn new(returns: Vec<f64>, kind: ReturnKind, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
        }
        Ok(ReturnsTable { returns, kind, gamma })
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn kind(&self) -> ReturnKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Discounted returns by one backward pass per episode:
/// `G_i = r_i + gamma * G_{i+1}`, with `G` past the episode end treated as 0.
pub fn compute_returns(batch: &Batch, gamma: f64) -> Result<ReturnsTable> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
    }
    let mut returns = vec![0.0; batch.len()];
    for range in batch.episode_ranges() {
        let mut acc = 0.0;
        for i in range.rev() {
            acc = batch.transitions()[i].reward + gamma * acc;
            returns[i] = acc;
        }
    }
    ReturnsTable::new(returns, ReturnKind::Plain, gamma)
}

/// Truncation-corrected returns.
///
/// For a truncated episode ending at in-episode index `L` with final state
/// `s'`, each transition `i` (1-based) gains a discounted replay of the
/// episode tail starting from the stored state nearest to `s'`:
///
/// `G_i = G_i^plain + gamma^(L - i + 1) * G_j^plain`
///
/// where `j` minimizes `||s_j - s'||` over the first
/// `max(time_cap - i, ceil(0.2 * time_cap))` transitions of the episode
/// (ties resolved to the smallest `j`). Naturally terminated episodes keep
/// their plain returns; both sums only ever use rewards from the same
/// episode.
pub fn compute_augmented_returns(batch: &Batch, gamma: f64) -> Result<ReturnsTable> {
    let plain = compute_returns(batch, gamma)?;
    let time_cap = batch.metadata().time_cap as usize;
    if time_cap == 0 {
        return Err(Error::Config(
            "batch metadata must carry a positive time_cap for augmentation".into(),
        ));
    }
    let min_window = (0.2 * time_cap as f64).ceil() as usize;
    let mut returns = plain.returns().to_vec();
    for range in batch.episode_ranges() {
        let episode = &batch.transitions()[range.clone()];
        let last = episode.last().unwrap();
        if !last.truncated {
            continue;
        }
        let episode_len = episode.len();
        let terminal_state = &last.next_state;
        for i in 1..=episode_len {
            let window = min_window.max(time_cap.saturating_sub(i)).min(episode_len);
            if window == 0 {
                return Err(Error::Config("empty augmentation window".into()));
            }
            let mut best_j = 0;
            let mut best_dist = f64::INFINITY;
            for (j, t) in episode.iter().take(window).enumerate() {
                let dist = t
                    .state
                    .iter()
                    .zip(terminal_state)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                if dist < best_dist {
                    best_dist = dist;
                    best_j = j;
                }
            }
            let tail = plain.returns()[range.start + best_j];
            returns[range.start + i - 1] +=
                gamma.powi((episode_len - i + 1) as i32) * tail;
        }
    }
    ReturnsTable::new(returns, ReturnKind::Augmented, gamma)
}

/// Disjoint, exhaustive train/validation index sets over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndex {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Uniform random split at transition granularity, seed-reproducible.
/// `|train| = round(fraction * m)`, clamped so neither side is empty.
pub fn split_train_validation(batch: &Batch, fraction: f64, seed: u64) -> Result<SplitIndex> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let m = batch.len();
    if m < 5 {
        return Err(Error::SplitTooSmall { size: m });
    }
    let n_train = ((fraction * m as f64).round() as usize).clamp(1, m - 1);
    let mut indices: Vec<usize> = (0..m).collect();
    indices.shuffle(&mut stage_rng(seed, "split"));
    let mut train_indices = indices[..n_train].to_vec();
    let mut validation_indices = indices[n_train..].to_vec();
    train_indices.sort_unstable();
    validation_indices.sort_unstable();
    Ok(SplitIndex {
        train_indices,
        validation_indices,
    })
}

/// Undiscounted per-episode summary of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStatistics {
    pub episode_count: usize,
    pub mean_episode_return: f64,
    pub std_episode_return: f64,
}

pub fn batch_statistics(batch: &Batch) -> Result<BatchStatistics> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let returns: Vec<f64> = batch
        .episode_ranges()
        .into_iter()
        .map(|r| batch.transitions()[r].iter().map(|t| t.reward).sum())
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(BatchStatistics {
        episode_count: returns.len(),
        mean_episode_return: mean,
        std_episode_return: var.sqrt(),
    })
}

fn write_f64_slice<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize, context: &'static str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| Error::Truncated { context })?,
        );
    }
    Ok(out)
}

/// Write a batch in the versioned little-endian binary format.
pub fn save_batch(batch: &Batch, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BATCH_MAGIC)?;
    w.write_u32::<LittleEndian>(BATCH_VERSION)?;
    w.write_u32::<LittleEndian>(batch.state_dim as u32)?;
    w.write_u32::<LittleEndian>(batch.action_dim as u32)?;
    w.write_u64::<LittleEndian>(batch.len() as u64)?;
    let meta = serde_json::to_vec(&batch.metadata)?;
    w.write_u32::<LittleEndian>(meta.len() as u32)?;
    w.write_all(&meta)?;
    for t in &batch.transitions {
        write_f64_slice(&mut w, &t.state)?;
        write_f64_slice(&mut w, &t.action)?;
        w.write_f64::<LittleEndian>(t.reward)?;
        write_f64_slice(&mut w, &t.next_state)?;
        let flags = u8::from(t.terminated) | (u8::from(t.truncated) << 1);
        w.write_u8(flags)?;
        w.write_u32::<LittleEndian>(t.episode_id)?;
        w.write_u32::<LittleEndian>(t.step_index)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_batch(path: &Path) -> Result<Batch> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Truncated { context: "batch magic" })?;
    if &magic != BATCH_MAGIC {
        return Err(Error::BadMagic { expected: "BAILBTCH" });
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated { context: "batch version" })?;
    if version != BATCH_VERSION {
        return Err(Error::Version {
            expected: BATCH_VERSION,
            got: version,
        });
    }
    let header = "batch header";
    let state_dim = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated { context: header })? as usize;
    let action_dim = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated { context: header })? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(|_| Error::Truncated { context: header })? as usize;
    let meta_len = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated { context: header })? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    r.read_exact(&mut meta_buf)
        .map_err(|_| Error::Truncated { context: "batch metadata" })?;
    let metadata: BatchMetadata = serde_json::from_slice(&meta_buf)?;

    let body = "batch transitions";
    let mut transitions = Vec::with_capacity(count);
    for _ in 0..count {
        let state = read_f64_vec(&mut r, state_dim, body)?;
        let action = read_f64_vec(&mut r, action_dim, body)?;
        let reward = r.read_f64::<LittleEndian>().map_err(|_| Error::Truncated { context: body })?;
        let next_state = read_f64_vec(&mut r, state_dim, body)?;
        let flags = r.read_u8().map_err(|_| Error::Truncated { context: body })?;
        let episode_id = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated { context: body })?;
        let step_index = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated { context: body })?;
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            terminated: flags & 1 != 0,
            truncated: flags & 2 != 0,
            episode_id,
            step_index,
        });
    }
    Batch::new(transitions, state_dim, action_dim, metadata)
}

/// Export a returns table as CSV: `index,episode_id,step_index,G`.
pub fn export_returns_csv(batch: &Batch, table: &ReturnsTable, path: &Path) -> Result<()> {
    if table.len() != batch.len() {
        return Err(Error::LengthMismatch {
            context: "returns export",
            left: table.len(),
            right: batch.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,episode_id,step_index,G")?;
    for (i, (t, g)) in batch.transitions().iter().zip(table.returns()).enumerate() {
        writeln!(w, "{i},{},{},{g}", t.episode_id, t.step_index)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single-episode batch with the given rewards; states walk 0, 1, 2, ...
    pub(crate) fn batch_from_rewards(rewards: &[f64], terminated: bool) -> Batch {
        let n = rewards.len();
        let transitions: Vec<Transition> = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: r,
                next_state: vec![(i + 1) as f64],
                terminated: i + 1 == n && terminated,
                truncated: i + 1 == n && !terminated,
                episode_id: 0,
                step_index: (i + 1) as u32,
            })
            .collect();
        Batch::new(
            transitions,
            1,
            1,
            BatchMetadata {
                env: "test".into(),
                sigma: 0.0,
                seed: 0,
                generator: "test".into(),
                time_cap: n as u32,
            },
        )
        .unwrap()
    }

    // Independent oracle: direct forward summation of discounted rewards.
    fn direct_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
        (0..rewards.len())
            .map(|i| {
                rewards[i..]
                    .iter()
                    .enumerate()
                    .map(|(k, &r)| gamma.powi(k as i32) * r)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn plain_returns_match_direct_summation() {
        let batch = batch_from_rewards(&[1.0, 1.0, 1.0], true);
        let table = compute_returns(&batch, 0.5).unwrap();
        assert_eq!(table.returns(), &[1.75, 1.5, 1.0]);
        assert_eq!(table.returns(), direct_returns(&[1.0, 1.0, 1.0], 0.5).as_slice());
    }

    #[test]
    fn zero_rewards_give_zero_returns() {
        let batch = batch_from_rewards(&[0.0; 5], false);
        let table = compute_returns(&batch, 0.9).unwrap();
        assert!(table.returns().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_transition_return_is_its_reward() {
        let batch = batch_from_rewards(&[3.25], true);
        let table = compute_returns(&batch, 0.7).unwrap();
        assert_eq!(table.returns(), &[3.25]);
    }

    #[test]
    fn gamma_zero_returns_are_rewards() {
        let batch = batch_from_rewards(&[2.0, -1.0, 0.5], false);
        let table = compute_returns(&batch, 0.0).unwrap();
        assert_eq!(table.returns(), &[2.0, -1.0, 0.5]);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let batch = Batch::new(
            vec![],
            1,
            1,
            BatchMetadata {
                env: "test".into(),
                sigma: 0.0,
                seed: 0,
                generator: "test".into(),
                time_cap: 1,
            },
        )
        .unwrap();
        assert!(matches!(
            compute_returns(&batch, 0.5).unwrap_err(),
            Error::EmptyBatch
        ));
    }

    #[test]
    fn augmented_equals_plain_for_terminated_episode() {
        let batch = batch_from_rewards(&[1.0, 2.0, 3.0], true);
        let plain = compute_returns(&batch, 0.5).unwrap();
        let augmented = compute_augmented_returns(&batch, 0.5).unwrap();
        assert_eq!(plain.returns(), augmented.returns());
    }

    #[test]
    fn augmented_matches_hand_worked_truncated_episode() {
        // states [0.0, 0.5, 1.0], rewards [1,1,1], final next_state 1.5,
        // time_cap 3, gamma 0.5. For i=1 the window is the first 2 states,
        // the nearest to 1.5 is s_2, and
        // G_1 = 1.75 + 0.5^3 * (1 + 0.5) = 1.9375.
        let transitions = vec![
            Transition {
                state: vec![0.0],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![0.5],
                terminated: false,
                truncated: false,
                episode_id: 0,
                step_index: 1,
            },
            Transition {
                state: vec![0.5],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![1.0],
                terminated: false,
                truncated: false,
                episode_id: 0,
                step_index: 2,
            },
            Transition {
                state: vec![1.0],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![1.5],
                terminated: false,
                truncated: true,
                episode_id: 0,
                step_index: 3,
            },
        ];
        let batch = Batch::new(
            transitions,
            1,
            1,
            BatchMetadata {
                env: "test".into(),
                sigma: 0.0,
                seed: 0,
                generator: "test".into(),
                time_cap: 3,
            },
        )
        .unwrap();
        let augmented = compute_augmented_returns(&batch, 0.5).unwrap();
        assert!((augmented.returns()[0] - 1.9375).abs() < 1e-15);
    }

    #[test]
    fn nearest_state_ties_resolve_to_the_earliest() {
        // States [0, 0, 9]: the first two tie for distance to the terminal
        // state 9, and their tails differ, so the choice of j is observable.
        let transitions = vec![
            Transition {
                state: vec![0.0],
                action: vec![0.0],
                reward: 5.0,
                next_state: vec![0.0],
                terminated: false,
                truncated: false,
                episode_id: 0,
                step_index: 1,
            },
            Transition {
                state: vec![0.0],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![9.0],
                terminated: false,
                truncated: false,
                episode_id: 0,
                step_index: 2,
            },
            Transition {
                state: vec![9.0],
                action: vec![0.0],
                reward: 0.0,
                next_state: vec![9.0],
                terminated: false,
                truncated: true,
                episode_id: 0,
                step_index: 3,
            },
        ];
        let batch = Batch::new(
            transitions,
            1,
            1,
            BatchMetadata {
                env: "test".into(),
                sigma: 0.0,
                seed: 0,
                generator: "test".into(),
                time_cap: 3,
            },
        )
        .unwrap();
        let gamma: f64 = 0.5;
        let plain = compute_returns(&batch, gamma).unwrap();
        let augmented = compute_augmented_returns(&batch, gamma).unwrap();
        // For i=1 the window covers the first two (tied) states; the earliest
        // wins, so the tail is G_1^plain = 5.5 rather than G_2^plain = 1.
        assert_eq!(plain.returns()[0], 5.5);
        assert!((augmented.returns()[0] - (5.5 + gamma.powi(3) * 5.5)).abs() < 1e-15);
    }

    #[test]
    fn augmented_dominates_plain_for_non_negative_rewards() {
        let batch = batch_from_rewards(&[0.5, 0.0, 2.0, 1.0], false);
        let plain = compute_returns(&batch, 0.9).unwrap();
        let augmented = compute_augmented_returns(&batch, 0.9).unwrap();
        for (a, p) in augmented.returns().iter().zip(plain.returns()) {
            assert!(a >= p);
        }
    }

    #[test]
    fn split_sizes_are_exact_and_disjoint() {
        let batch = batch_from_rewards(&[1.0; 10], true);
        let split = split_train_validation(&batch, 0.8, 1).unwrap();
        assert_eq!(split.train_indices.len(), 8);
        assert_eq!(split.validation_indices.len(), 2);
        let mut all: Vec<usize> = split
            .train_indices
            .iter()
            .chain(&split.validation_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seed_reproducible() {
        let batch = batch_from_rewards(&[1.0; 20], true);
        let a = split_train_validation(&batch, 0.8, 7).unwrap();
        let b = split_train_validation(&batch, 0.8, 7).unwrap();
        let c = split_train_validation(&batch, 0.8, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_batch_cannot_be_split() {
        let batch = batch_from_rewards(&[1.0, 2.0], true);
        assert!(matches!(
            split_train_validation(&batch, 0.8, 0).unwrap_err(),
            Error::SplitTooSmall { size: 2 }
        ));
    }

    #[test]
    fn statistics_match_hand_arithmetic() {
        let batch = batch_from_rewards(&[1.0, 2.0, 3.0], true);
        let stats = batch_statistics(&batch).unwrap();
        assert_eq!(stats.episode_count, 1);
        assert_eq!(stats.mean_episode_return, 6.0);
        assert_eq!(stats.std_episode_return, 0.0);
    }

    #[test]
    fn statistics_average_across_episodes() {
        let mut transitions = Vec::new();
        for (ep, reward) in [(0u32, 2.0), (1u32, 4.0)] {
            transitions.push(Transition {
                state: vec![0.0],
                action: vec![0.0],
                reward,
                next_state: vec![1.0],
                terminated: true,
                truncated: false,
                episode_id: ep,
                step_index: 1,
            });
        }
        let batch = Batch::new(
            transitions,
            1,
            1,
            BatchMetadata {
                env: "test".into(),
                sigma: 0.0,
                seed: 0,
                generator: "test".into(),
                time_cap: 1,
            },
        )
        .unwrap();
        let stats = batch_statistics(&batch).unwrap();
        assert_eq!(stats.episode_count, 2);
        assert_eq!(stats.mean_episode_return, 3.0);
        assert_eq!(stats.std_episode_return, 1.0);
    }

    #[test]
    fn zero_reward_batch_has_zero_mean_and_std() {
        let batch = batch_from_rewards(&[0.0; 4], false);
        let stats = batch_statistics(&batch).unwrap();
        assert_eq!(stats.mean_episode_return, 0.0);
        assert_eq!(stats.std_episode_return, 0.0);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.btch");
        let batch = batch_from_rewards(&[1.5, -0.25, 3.0], false);
        save_batch(&batch, &path).unwrap();
        let loaded = load_batch(&path).unwrap();
        assert_eq!(batch, loaded);
        // Saving the loaded batch reproduces the same bytes.
        let path2 = dir.path().join("batch2.btch");
        save_batch(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.btch");
        std::fs::write(&path, b"NOTMAGIC__________").unwrap();
        assert!(matches!(load_batch(&path).unwrap_err(), Error::BadMagic { .. }));
    }

    #[test]
    fn empty_file_is_a_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.btch");
        std::fs::write(&path, b"").unwrap();
        assert!(matches!(load_batch(&path).unwrap_err(), Error::Truncated { .. }));
    }

    #[test]
    fn version_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.btch");
        let batch = batch_from_rewards(&[1.0], true);
        save_batch(&batch, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // bump the version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_batch(&path).unwrap_err(),
            Error::Version { expected: 1, got: 9 }
        ));
    }

    #[test]
    fn truncated_body_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.btch");
        let batch = batch_from_rewards(&[1.0, 2.0], true);
        save_batch(&batch, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_batch(&path).unwrap_err(), Error::Truncated { .. }));
    }

    #[test]
    fn returns_csv_has_one_row_per_transition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("returns.csv");
        let batch = batch_from_rewards(&[1.0, 1.0], true);
        let table = compute_returns(&batch, 0.5).unwrap();
        export_returns_csv(&batch, &table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "index,episode_id,step_index,G");
        assert_eq!(lines[1], "0,0,1,1.5");
    }
}
