//! Summary tables across several evaluation runs, laid out like the
//! classification, noise and per-type tables of the original study.

use std::fmt::Write as _;

use super::metrics::{EvalReport, TypeMetrics};
use crate::activity::ActivityCode;

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn run_label(name: &str, r: &EvalReport) -> String {
    match r.noise_sd_m {
        Some(sd) => format!("{sd}m"),
        None => name.to_string(),
    }
}

type Getter = fn(&super::metrics::ClassificationReport) -> f64;

/// `runs` pairs a display name with each report.
pub fn render_summary(runs: &[(String, EvalReport)]) -> String {
    let mut out = String::new();

    let classified: Vec<_> = runs.iter().filter_map(|(n, r)| r.classification.as_ref().map(|c| (run_label(n, r), c))).collect();
    if !classified.is_empty() {
        let _ = writeln!(out, "POI classification");
        let _ = write!(out, "  {:<10}", "");
        for (n, _) in &classified {
            let _ = write!(out, "{:>14}", n);
        }
        out.push('\n');
        let rows: [(&str, Getter); 5] = [
            ("Hit@1", |c| c.hit_at[0]),
            ("Hit@2", |c| c.hit_at[1]),
            ("Hit@3", |c| c.hit_at[2]),
            ("Accuracy", |c| c.accuracy),
            ("F1", |c| c.macro_f1),
        ];
        for (label, get) in rows {
            let _ = write!(out, "  {:<10}", label);
            for (_, c) in &classified {
                let _ = write!(out, "{:>14}", pct(get(c)));
            }
            out.push('\n');
        }
        out.push('\n');
    }

    let inferred: Vec<_> = runs.iter().filter(|(_, r)| r.inference.is_some()).collect();
    if !inferred.is_empty() {
        let _ = writeln!(out, "Non-mandatory activity inference by noise level");
        let _ = writeln!(out, "  {:<14}{:>12}{:>12}{:>12}", "SD of noise", "Acc@1", "Acc@2", "Acc@3");
        for (n, r) in &inferred {
            let s = &r.inference.as_ref().expect("filtered").non_mandatory;
            let _ = writeln!(out, "  {:<14}{:>12}{:>12}{:>12}", run_label(n, r), pct(s.acc_at[0]), pct(s.acc_at[1]), pct(s.acc_at[2]));
        }
        out.push('\n');

        let (n, r) = inferred[0];
        let all = &r.inference.as_ref().expect("filtered").all;
        let _ = writeln!(out, "Activity inference by type ({})", run_label(n, r));
        let cell = |code: u8| -> String {
            let c = ActivityCode::new(code.into()).expect("valid code");
            match all.per_type.iter().find(|t: &&TypeMetrics| t.code == c) {
                Some(t) => format!("{:<4}{:>9}{:>9}", code, t.acc_at_1.map(pct).unwrap_or_else(|| "-".into()), pct(t.f1)),
                None => format!("{:<4}{:>9}{:>9}", code, "-", "-"),
            }
        };
        let _ = writeln!(out, "  {:<4}{:>9}{:>9}  | {:<4}{:>9}{:>9}", "Type", "Acc@1", "F1", "Type", "Acc@1", "F1");
        for i in 1..=8u8 {
            let right = if i < 8 {
                cell(i + 8)
            } else {
                format!("{:<4}{:>9}{:>9}", "Avg", pct(all.acc_at[0]), pct(all.macro_f1))
            };
            let _ = writeln!(out, "  {}  | {}", cell(i), right);
        }
    }
    if out.is_empty() {
        out.push_str("no metrics to summarise\n");
    }
    out
}
