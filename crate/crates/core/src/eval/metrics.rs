//! Classification and inference metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityCode, NUM_ACTIVITIES};
use crate::classify::PoiClassification;
use crate::infer::AnnotatedStayPoint;

/// Ground truth for one POI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiTruth {
    pub poi_id: String,
    pub code: ActivityCode,
}

/// Ground truth for one stay, keyed by person and start time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayTruth {
    pub person_id: String,
    #[serde(rename = "t_S")]
    pub t_start: i64,
    pub code: ActivityCode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for POI `{0}`")]
    MissingPrediction(String),
    #[error("truth stay of `{person_id}` at t_S={t_start}: {reason}")]
    AlignmentMismatch {
        person_id: String,
        t_start: i64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub code: ActivityCode,
    pub label: String,
    pub support: usize,
    /// Recall of the rank-1 label; `None` when the type never occurs in truth.
    pub acc_at_1: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub accuracy: f64,
    pub hit_at: [f64; 3],
    pub macro_f1: f64,
    pub per_type: Vec<TypeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSlice {
    pub n: usize,
    pub acc_at: [f64; 3],
    pub macro_f1: f64,
    pub per_type: Vec<TypeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub all: InferenceSlice,
    pub mandatory: InferenceSlice,
    pub non_mandatory: InferenceSlice,
    /// Annotated stays no truth stay was aligned to.
    pub unmatched_annotations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Noise SD the annotations were produced under, when known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_sd_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inference: Option<InferenceReport>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-type F1 and rank-1 recall over (truth, predicted) pairs. Types that
/// appear in neither column are left out, and so are excluded from the macro mean.
fn type_table(pairs: &[(ActivityCode, ActivityCode)]) -> (f64, Vec<TypeMetrics>) {
    let mut tp = [0usize; NUM_ACTIVITIES];
    let mut fp = [0usize; NUM_ACTIVITIES];
    let mut fneg = [0usize; NUM_ACTIVITIES];
    for &(truth, pred) in pairs {
        if truth == pred {
            tp[truth.index()] += 1;
        } else {
            fp[pred.index()] += 1;
            fneg[truth.index()] += 1;
        }
    }
    let rows: Vec<TypeMetrics> = ActivityCode::all()
        .filter(|c| tp[c.index()] + fp[c.index()] + fneg[c.index()] > 0)
        .map(|c| {
            let i = c.index();
            let support = tp[i] + fneg[i];
            let precision = ratio(tp[i], tp[i] + fp[i]);
            let recall = ratio(tp[i], support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            TypeMetrics {
                code: c,
                label: c.label().to_string(),
                support,
                acc_at_1: (support > 0).then_some(recall),
                f1,
            }
        })
        .collect();
    let macro_f1 = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64
    };
    (macro_f1, rows)
}

/// Top-3 POI classification metrics. A POI counts as a hit at the rank
/// where its true code appears; for F1 the predicted label is that code on a
/// hit and the rank-1 code otherwise.
pub fn classification_metrics(
    preds: &[PoiClassification],
    truth: &[PoiTruth],
) -> Result<ClassificationReport, EvalError> {
    let by_id: HashMap<&str, &PoiClassification> = preds.iter().map(|p| (p.poi_id.as_str(), p)).collect();
    let mut hits = [0usize; 3];
    let mut pairs = Vec::with_capacity(truth.len());
    for t in truth {
        let p = by_id
            .get(t.poi_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(t.poi_id.clone()))?;
        let predicted = match p.top3.rank_of(t.code) {
            Some(rank) => {
                hits[rank - 1] += 1;
                t.code
            }
            None => p.top3.first().code,
        };
        pairs.push((t.code, predicted));
    }
    let n = truth.len();
    let (macro_f1, per_type) = type_table(&pairs);
    Ok(ClassificationReport {
        n,
        accuracy: ratio(hits.iter().sum(), n),
        hit_at: hits.map(|h| ratio(h, n)),
        macro_f1,
        per_type,
    })
}

fn aligned<'a>(
    annotations: &'a [AnnotatedStayPoint],
    truth: &[StayTruth],
    tolerance_s: i64,
) -> Result<(Vec<&'a AnnotatedStayPoint>, usize), EvalError> {
    let mut by_person: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, a) in annotations.iter().enumerate() {
        by_person.entry(a.person_id.as_str()).or_default().push(i);
    }
    let mut used = vec![false; annotations.len()];
    let mut out = Vec::with_capacity(truth.len());
    for t in truth {
        let mismatch = |reason: String| EvalError::AlignmentMismatch {
            person_id: t.person_id.clone(),
            t_start: t.t_start,
            reason,
        };
        let best = by_person
            .get(t.person_id.as_str())
            .into_iter()
            .flatten()
            .copied()
            .filter(|&i| (annotations[i].stay.t_start - t.t_start).abs() <= tolerance_s)
            .min_by_key(|&i| ((annotations[i].stay.t_start - t.t_start).abs(), i))
            .ok_or_else(|| mismatch(format!("no annotated stay starts within {tolerance_s} s")))?;
        if std::mem::replace(&mut used[best], true) {
            return Err(mismatch(format!(
                "annotated stay at t_S={} is already aligned to another truth stay",
                annotations[best].stay.t_start
            )));
        }
        out.push(&annotations[best]);
    }
    let unmatched = used.iter().filter(|u| !**u).count();
    Ok((out, unmatched))
}

fn slice(items: &[(&AnnotatedStayPoint, ActivityCode)]) -> InferenceSlice {
    let n = items.len();
    let mut within = [0usize; 3];
    for (a, truth) in items {
        if let Some(rank) = a.rank_of(*truth) {
            for w in within.iter_mut().skip(rank - 1) {
                *w += 1;
            }
        }
    }
    let pairs: Vec<_> = items.iter().map(|(a, truth)| (*truth, a.activity)).collect();
    let (macro_f1, per_type) = type_table(&pairs);
    InferenceSlice {
        n,
        acc_at: within.map(|w| ratio(w, n)),
        macro_f1,
        per_type,
    }
}

/// Inference metrics. Each truth stay is aligned to the same person's
/// annotated stay with the nearest start within `tolerance_s`; alignment is
/// one-to-one.
pub fn inference_metrics(
    annotations: &[AnnotatedStayPoint],
    truth: &[StayTruth],
    tolerance_s: i64,
) -> Result<InferenceReport, EvalError> {
    let (matched, unmatched_annotations) = aligned(annotations, truth, tolerance_s)?;
    let items: Vec<_> = matched.into_iter().zip(truth.iter().map(|t| t.code)).collect();
    let (mandatory, other): (Vec<_>, Vec<_>) = items.iter().copied().partition(|(_, c)| c.is_mandatory());
    Ok(InferenceReport {
        all: slice(&items),
        mandatory: slice(&mandatory),
        non_mandatory: slice(&other),
        unmatched_annotations,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl EvalReport {
    /// Checks the structural invariants every report must satisfy.
    pub fn check(&self) -> Result<(), String> {
        let rows_ok = |rows: &[TypeMetrics]| rows.iter().all(|r| in_unit(r.f1) && r.acc_at_1.is_none_or(in_unit));
        if let Some(c) = &self.classification {
            let total: f64 = c.hit_at.iter().sum();
            if (c.accuracy - total).abs() > 1e-9 {
                return Err(format!("accuracy {} differs from summed Hit@n {}", c.accuracy, total));
            }
            if !(in_unit(c.accuracy) && in_unit(c.macro_f1) && c.hit_at.iter().all(|&h| in_unit(h)) && rows_ok(&c.per_type)) {
                return Err("classification metric outside [0, 1]".into());
            }
        }
        if let Some(inf) = &self.inference {
            for (name, s) in [("all", &inf.all), ("mandatory", &inf.mandatory), ("non_mandatory", &inf.non_mandatory)] {
                let [a1, a2, a3] = s.acc_at;
                if !(a1 <= a2 && a2 <= a3) {
                    return Err(format!("{name}: Acc@k not monotone: {a1} {a2} {a3}"));
                }
                if !(in_unit(a1) && in_unit(a3) && in_unit(s.macro_f1) && rows_ok(&s.per_type)) {
                    return Err(format!("{name}: metric outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Plain-text summary tables.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.classification {
            let _ = writeln!(out, "POI classification (n = {})", c.n);
            let _ = writeln!(out, "  {:<10}{:>9}", "Hit@1", pct(c.hit_at[0]));
            let _ = writeln!(out, "  {:<10}{:>9}", "Hit@2", pct(c.hit_at[1]));
            let _ = writeln!(out, "  {:<10}{:>9}", "Hit@3", pct(c.hit_at[2]));
            let _ = writeln!(out, "  {:<10}{:>9}", "Accuracy", pct(c.accuracy));
            let _ = writeln!(out, "  {:<10}{:>9}", "F1", pct(c.macro_f1));
        }
        if let Some(inf) = &self.inference {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "Activity inference");
            let _ = writeln!(out, "  {:<15}{:>7}{:>9}{:>9}{:>9}{:>9}", "slice", "n", "Acc@1", "Acc@2", "Acc@3", "F1");
            for (name, s) in [("non-mandatory", &inf.non_mandatory), ("mandatory", &inf.mandatory), ("all", &inf.all)] {
                let _ = writeln!(
                    out,
                    "  {:<15}{:>7}{:>9}{:>9}{:>9}{:>9}",
                    name,
                    s.n,
                    pct(s.acc_at[0]),
                    pct(s.acc_at[1]),
                    pct(s.acc_at[2]),
                    pct(s.macro_f1)
                );
            }
            let _ = writeln!(out, "\n  {:<6}{:<20}{:>8}{:>9}{:>9}", "type", "label", "support", "Acc@1", "F1");
            for r in &inf.all.per_type {
                let acc = r.acc_at_1.map(pct).unwrap_or_else(|| "-".into());
                let _ = writeln!(out, "  {:<6}{:<20}{:>8}{:>9}{:>9}", r.code.get(), r.label, r.support, acc, pct(r.f1));
            }
            let _ = writeln!(out, "  {:<26}{:>8}{:>9}{:>9}", "Average", inf.all.n, pct(inf.all.acc_at[0]), pct(inf.all.macro_f1));
            if inf.unmatched_annotations > 0 {
                let _ = writeln!(out, "\n  {} annotated stays had no truth stay", inf.unmatched_annotations);
            }
        }
        out
    }

    /// Per-type inference rows as CSV.
    pub fn write_per_type_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["type", "label", "support", "acc_at_1", "f1"])?;
        if let Some(inf) = &self.inference {
            let rows: BTreeMap<u8, &TypeMetrics> = inf.all.per_type.iter().map(|r| (r.code.get(), r)).collect();
            for (code, r) in rows {
                wtr.write_record([
                    code.to_string(),
                    r.label.clone(),
                    r.support.to_string(),
                    r.acc_at_1.map(|a| format!("{a:.6}")).unwrap_or_default(),
                    format!("{:.6}", r.f1),
                ])?;
            }
            wtr.write_record([
                String::new(),
                "Average".into(),
                inf.all.n.to_string(),
                format!("{:.6}", inf.all.acc_at[0]),
                format!("{:.6}", inf.all.macro_f1),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
