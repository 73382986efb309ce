//! Candidate priors, the (POI, activity) score matrix and its argmax.
//!
//! Each entry is `P(t_S | A) * P(A | p) * P(p)`. The start-time term is
//! taken as independent of the POI, so no per-POI normalization is applied
//! and entries are not rescaled across the matrix.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::profile::{ProfileError, TemporalProfile};
use crate::activity::ActivityCode;
use crate::classify::Top3;

/// Gaussian distance kernel `exp(-d^2 / (2 sd^2))`, normalized to sum 1.
/// Computed relative to the nearest candidate so far-away sets don't
/// underflow to 0/0.
pub fn poi_prior(distances_m: &[f64], kernel_sd_m: f64) -> Vec<f64> {
    if distances_m.is_empty() {
        return Vec::new();
    }
    let two_var = 2.0 * kernel_sd_m * kernel_sd_m;
    let d0 = distances_m.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = distances_m.iter().map(|d| (-(d * d - d0 * d0) / two_var).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoi {
    pub poi_id: String,
    pub distance_m: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub code: ActivityCode,
    pub score: f64,
}

/// One row per candidate; entries keep the classification's rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub candidate: CandidatePoi,
    pub entries: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivityScoreMatrix {
    pub rows: Vec<MatrixRow>,
}

impl ActivityScoreMatrix {
    pub fn from_rows(rows: Vec<MatrixRow>) -> Self {
        Self { rows }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.entries.is_empty())
    }

    pub fn entry_count(&self) -> usize {
        self.rows.iter().map(|r| r.entries.len()).sum()
    }
}

pub fn score_activities(
    start_hour: usize,
    candidates: &[(CandidatePoi, &Top3)],
    profile: &TemporalProfile,
) -> Result<ActivityScoreMatrix, ProfileError> {
    let mut rows = Vec::with_capacity(candidates.len());
    for (candidate, top3) in candidates {
        let entries = top3
            .as_slice()
            .iter()
            .map(|ra| {
                let time = profile.prob(ra.code, start_hour).ok_or(ProfileError::MissingCode(ra.code))?;
                Ok(ScoreEntry {
                    code: ra.code,
                    score: time * ra.prob * candidate.prior,
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        rows.push(MatrixRow {
            candidate: candidate.clone(),
            entries,
        });
    }
    Ok(ActivityScoreMatrix { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub code: ActivityCode,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub activity: ActivityCode,
    /// Row of the winning entry.
    pub row: usize,
    pub score: f64,
    /// Up to three distinct codes by their best score, non-increasing.
    pub ranked_alternatives: Vec<Alternative>,
}

/// Entry order: higher score, then nearer POI, then lower code.
fn entry_order(a: (f64, f64, ActivityCode), b: (f64, f64, ActivityCode)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Global argmax over the matrix. `None` when the matrix has no entries.
pub fn select_activity(matrix: &ActivityScoreMatrix) -> Option<Selection> {
    // best (score, distance, row) per code
    let mut best: Vec<(ActivityCode, f64, f64, usize)> = Vec::new();
    for (row_idx, row) in matrix.rows.iter().enumerate() {
        for e in &row.entries {
            let key = (e.score, row.candidate.distance_m, e.code);
            match best.iter_mut().find(|b| b.0 == e.code) {
                Some(b) => {
                    if entry_order(key, (b.1, b.2, b.0)) == Ordering::Less {
                        *b = (e.code, e.score, row.candidate.distance_m, row_idx);
                    }
                }
                None => best.push((e.code, e.score, row.candidate.distance_m, row_idx)),
            }
        }
    }
    best.sort_by(|a, b| entry_order((a.1, a.2, a.0), (b.1, b.2, b.0)));
    let &(activity, score, _, row) = best.first()?;
    Some(Selection {
        activity,
        row,
        score,
        ranked_alternatives: best
            .iter()
            .take(3)
            .map(|&(code, score, _, _)| Alternative { code, score })
            .collect(),
    })
}
