//! Semantic trajectory annotation: POI ingestion, LLM-based POI
//! classification, stay-point extraction and Bayesian activity inference.

pub mod activity;
pub mod classify;
pub mod config;
pub mod eval;
pub mod geo;
pub mod infer;
pub mod par;
pub mod poi;
pub mod staypoint;

use std::io;

pub use activity::ActivityCode;
pub use geo::LonLat;
pub use par::Execution;

/// Seed for one named pipeline stage, derived from the top-level seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(stage.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, thiserror::Error)]
pub enum JsonLinesError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Reads one JSON value per non-blank line.
pub fn read_json_lines<T, R>(r: R) -> Result<Vec<T>, JsonLinesError>
where
    T: serde::de::DeserializeOwned,
    R: io::BufRead,
{
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JsonLinesError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_and_repeat() {
        assert_eq!(stage_seed(7, "noise"), stage_seed(7, "noise"));
        assert_ne!(stage_seed(7, "noise"), stage_seed(7, "synth"));
        assert_ne!(stage_seed(7, "noise"), stage_seed(8, "noise"));
    }

    #[test]
    fn json_lines_skip_blanks_and_report_line() {
        let v: Vec<u32> = read_json_lines("1\n\n2\n".as_bytes()).unwrap();
        assert_eq!(v, vec![1, 2]);
        let err = read_json_lines::<u32, _>("1\nx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, JsonLinesError::Parse { line: 2, .. }));
    }
}
