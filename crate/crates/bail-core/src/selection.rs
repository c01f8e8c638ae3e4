//! Best state-action selection: keep the `p%` of transitions whose return
//! sits closest to the envelope, measured multiplicatively (ratio rule),
//! additively (difference rule), or by raw return (the top-G ablation).
//!
//! All rules reduce to a deterministic top-n over per-transition keys with
//! ties broken toward the smaller index, which realizes "pick x so that p%
//! are selected" exactly even under ties.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Envelope values at or below this bound make the ratio rule ill-ordered.
pub const MIN_RATIO_ENVELOPE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Ratio,
    Difference,
    TopG,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::Ratio => write!(f, "ratio"),
            SelectionRule::Difference => write!(f, "difference"),
            SelectionRule::TopG => write!(f, "top_g"),
        }
    }
}

/// The selected index set and the threshold that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult<F> {
    /// Selected transition indices, sorted ascending, no duplicates.
    pub indices: Vec<usize>,
    /// For ratio and top-G: the smallest selected key. For difference: `x`
    /// such that `G >= V - x` holds exactly for the selected points.
    pub threshold_x: F,
    pub rule: SelectionRule,
    pub p_percent: f64,
}

fn check_p(p_percent: f64, m: usize) -> Result<usize> {
    if !(p_percent > 0.0 && p_percent <= 100.0) {
        return Err(Error::Config(format!(
            "p_percent must be in (0, 100], got {p_percent}"
        )));
    }
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(((p_percent * m as f64) / 100.0).ceil() as usize)
}

fn check_finite<F: Scalar>(values: &[F], context: &'static str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}

/// Top-n over keys, ties toward the smaller index; returns (sorted indices,
/// n-th largest key).
fn select_top_n<F: Scalar>(keys: &[F], n: usize) -> (Vec<usize>, F) {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // stable sort by descending key keeps equal keys in index order
    order.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap());
    let mut selected = order[..n].to_vec();
    let threshold = keys[*selected.last().unwrap()];
    selected.sort_unstable();
    (selected, threshold)
}

/// Per-transition keys for a rule. `values` is required except for top-G.
pub fn selection_keys<F: Scalar>(
    rule: SelectionRule,
    returns: &[F],
    values: Option<&[F]>,
) -> Result<Vec<F>> {
    check_finite(returns, "selection returns")?;
    match rule {
        SelectionRule::TopG => Ok(returns.to_vec()),
        SelectionRule::Ratio | SelectionRule::Difference => {
            let values = values.ok_or(Error::Config(
                "envelope values required for ratio/difference selection".into(),
            ))?;
            if returns.len() != values.len() {
                return Err(Error::LengthMismatch {
                    context: "selection",
                    left: returns.len(),
                    right: values.len(),
                });
            }
            check_finite(values, "selection envelope values")?;
            if rule == SelectionRule::Ratio {
                let floor = F::c(MIN_RATIO_ENVELOPE);
                if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| **v <= floor) {
                    return Err(Error::NonPositiveEnvelope {
                        index: i,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
                Ok(returns.iter().zip(values).map(|(&g, &v)| g / v).collect())
            } else {
                Ok(returns.iter().zip(values).map(|(&g, &v)| g - v).collect())
            }
        }
    }
}

/// Keep points with the largest `G_i / V(s_i)`; requires strictly positive
/// envelope values, otherwise fails with [`Error::NonPositiveEnvelope`]
/// directing callers to the difference rule.
pub fn select_ratio<F: Scalar>(
    returns: &[F],
    values: &[F],
    p_percent: f64,
) -> Result<SelectionResult<F>> {
    let n = check_p(p_percent, returns.len())?;
    let keys = selection_keys(SelectionRule::Ratio, returns, Some(values))?;
    let (indices, threshold) = select_top_n(&keys, n);
    Ok(SelectionResult {
        indices,
        threshold_x: threshold,
        rule: SelectionRule::Ratio,
        p_percent,
    })
}

/// Keep points with the largest `G_i - V(s_i)`; the reported `x` makes
/// `G_i >= V(s_i) - x` hold exactly for the selected set.
pub fn select_difference<F: Scalar>(
    returns: &[F],
    values: &[F],
    p_percent: f64,
) -> Result<SelectionResult<F>> {
    let n = check_p(p_percent, returns.len())?;
    let keys = selection_keys(SelectionRule::Difference, returns, Some(values))?;
    let (indices, threshold) = select_top_n(&keys, n);
    Ok(SelectionResult {
        indices,
        threshold_x: -threshold,
        rule: SelectionRule::Difference,
        p_percent,
    })
}

/// Ratio rule with the sanctioned fallback: if any envelope value is too
/// small for the ratio ordering, select by difference instead. Returns the
/// result and whether the fallback fired.
pub fn select_auto<F: Scalar>(
    returns: &[F],
    values: &[F],
    p_percent: f64,
) -> Result<(SelectionResult<F>, bool)> {
    match select_ratio(returns, values, p_percent) {
        Ok(result) => Ok((result, false)),
        Err(Error::NonPositiveEnvelope { .. }) => {
            Ok((select_difference(returns, values, p_percent)?, true))
        }
        Err(other) => Err(other),
    }
}

/// Naive ablation: keep points with the highest raw returns.
pub fn select_top_returns<F: Scalar>(returns: &[F], p_percent: f64) -> Result<SelectionResult<F>> {
    let n = check_p(p_percent, returns.len())?;
    let keys = selection_keys(SelectionRule::TopG, returns, None)?;
    let (indices, threshold) = select_top_n(&keys, n);
    Ok(SelectionResult {
        indices,
        threshold_x: threshold,
        rule: SelectionRule::TopG,
        p_percent,
    })
}

/// Export one row per transition: `index,key,selected,rule,x,p`.
pub fn export_selection_csv<F: Scalar>(
    result: &SelectionResult<F>,
    keys: &[F],
    path: &Path,
) -> Result<()> {
    let mut selected = vec![false; keys.len()];
    for &i in &result.indices {
        selected[i] = true;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,key,selected,rule,x,p")?;
    for (i, k) in keys.iter().enumerate() {
        writeln!(
            w,
            "{i},{k},{},{},{},{}",
            u8::from(selected[i]),
            result.rule,
            result.threshold_x,
            result.p_percent
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read back the selected indices from an exported selection CSV.
pub fn load_selection_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut indices = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let mut fields = line.split(',');
        let (Some(idx), Some(_key), Some(sel)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::DimensionMismatch(format!(
                "selection csv line {} malformed",
                lineno + 1
            )));
        };
        if sel == "1" {
            indices.push(idx.parse::<usize>().map_err(|_| {
                Error::DimensionMismatch(format!("selection csv line {} malformed", lineno + 1))
            })?);
        }
    }
    Ok(indices)
}
