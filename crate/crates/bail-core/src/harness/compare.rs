//! Cross-run comparison with the within-10%-of-best winner convention.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::pipeline::RunSummary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub algorithm: String,
    pub mean: f64,
    pub std: f64,
    pub winner: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub best_mean: f64,
}

/// Mark every run whose mean final score is within 10% of the best as a
/// winner: `mean >= best - 0.1 * |best|`, which is invariant under uniform
/// positive rescaling of all scores.
pub fn compare_scores(entries: &[(String, String, f64, f64)]) -> Result<Comparison> {
    if entries.len() < 2 {
        return Err(Error::Config(
            "comparison needs at least two runs".into(),
        ));
    }
    let best = entries
        .iter()
        .map(|e| e.2)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Config("comparison scores must be finite".into()));
    }
    let cutoff = best - 0.1 * best.abs();
    let rows = entries
        .iter()
        .map(|(name, algorithm, mean, std)| ComparisonRow {
            name: name.clone(),
            algorithm: algorithm.clone(),
            mean: *mean,
            std: *std,
            winner: *mean >= cutoff,
        })
        .collect();
    Ok(Comparison {
        rows,
        best_mean: best,
    })
}

/// Load each run directory's summary and compare their final scores.
pub fn compare_runs(run_dirs: &[impl AsRef<Path>]) -> Result<Comparison> {
    let mut entries = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("summary.json")).map_err(|_| {
            Error::Config(format!("run directory {} has no summary.json", dir.display()))
        })?;
        let summary: RunSummary = serde_json::from_str(&text)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        entries.push((
            name,
            summary.algorithm,
            summary.final_score.mean,
            summary.final_score.std,
        ));
    }
    compare_scores(&entries)
}

impl Comparison {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("name,algorithm,mean,std,winner\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name,
                r.algorithm,
                r.mean,
                r.std,
                u8::from(r.winner)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, mean: f64) -> (String, String, f64, f64) {
        (name.to_string(), "bc".to_string(), mean, 0.0)
    }

    #[test]
    fn within_ten_percent_are_winners() {
        let cmp = compare_scores(&[entry("a", 100.0), entry("b", 95.0)]).unwrap();
        assert!(cmp.rows.iter().all(|r| r.winner));
    }

    #[test]
    fn outside_ten_percent_is_not_a_winner() {
        let cmp = compare_scores(&[entry("a", 100.0), entry("b", 80.0)]).unwrap();
        assert!(cmp.rows[0].winner);
        assert!(!cmp.rows[1].winner);
    }

    #[test]
    fn equal_scores_all_win() {
        let cmp = compare_scores(&[entry("a", 7.0), entry("b", 7.0), entry("c", 7.0)]).unwrap();
        assert!(cmp.rows.iter().all(|r| r.winner));
    }

    #[test]
    fn winner_set_is_scale_invariant() {
        let base = [entry("a", 100.0), entry("b", 91.0), entry("c", 50.0)];
        let scaled: Vec<_> = base
            .iter()
            .map(|(n, a, m, s)| (n.clone(), a.clone(), m * 3.5, s * 3.5))
            .collect();
        let w1: Vec<bool> = compare_scores(&base).unwrap().rows.iter().map(|r| r.winner).collect();
        let w2: Vec<bool> = compare_scores(&scaled).unwrap().rows.iter().map(|r| r.winner).collect();
        assert_eq!(w1, w2);
    }

    #[test]
    fn negative_scores_compare_sensibly() {
        // best = -10; cutoff = -11; -10.5 wins, -20 does not.
        let cmp =
            compare_scores(&[entry("a", -10.0), entry("b", -10.5), entry("c", -20.0)]).unwrap();
        assert!(cmp.rows[0].winner);
        assert!(cmp.rows[1].winner);
        assert!(!cmp.rows[2].winner);
    }

    #[test]
    fn single_run_is_rejected() {
        assert!(compare_scores(&[entry("a", 1.0)]).is_err());
    }
}
