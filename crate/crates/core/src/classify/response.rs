//! Reply parsing. The canonical reply is one `code: probability` line per
//! category; JSON objects and arrays are accepted as well.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::activity::ActivityCode;

pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no (code, probability) pairs found in reply")]
    NoPairsFound,
    #[error("activity code {0} is outside 1..=15")]
    InvalidCode(u64),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("activity code {0} appears more than once")]
    DuplicateCode(ActivityCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedActivity {
    pub code: ActivityCode,
    pub prob: f64,
}

impl RankedActivity {
    pub fn new(code: ActivityCode, prob: f64) -> Self {
        Self { code, prob }
    }
}

/// One to three distinct activities with non-increasing probabilities in
/// `[0, 1]` whose sum does not exceed one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Top3(Vec<RankedActivity>);

impl Top3 {
    /// Validates and, if needed, sorts. The flag reports whether sorting or
    /// truncation to three changed the input order.
    pub fn from_pairs(mut pairs: Vec<RankedActivity>) -> Result<(Top3, bool), ParseError> {
        if pairs.is_empty() {
            return Err(ParseError::NoPairsFound);
        }
        for (i, p) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.prob) {
                return Err(ParseError::InvalidProbability(format!(
                    "{} for code {} is outside [0, 1]",
                    p.prob, p.code
                )));
            }
            if pairs[..i].iter().any(|q| q.code == p.code) {
                return Err(ParseError::DuplicateCode(p.code));
            }
        }
        let ordered = pairs.windows(2).all(|w| w[0].prob >= w[1].prob);
        if !ordered {
            pairs.sort_by(|a, b| b.prob.total_cmp(&a.prob));
        }
        let truncated = pairs.len() > 3;
        pairs.truncate(3);
        let sum: f64 = pairs.iter().map(|p| p.prob).sum();
        if sum > 1.0 + PROB_SUM_TOLERANCE {
            return Err(ParseError::InvalidProbability(format!("probabilities sum to {sum}")));
        }
        Ok((Top3(pairs), !ordered || truncated))
    }

    pub fn as_slice(&self) -> &[RankedActivity] {
        &self.0
    }

    pub fn first(&self) -> RankedActivity {
        self.0[0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().map(|p| p.prob).sum()
    }

    /// Divides by the total mass so the entries sum to one.
    pub fn renormalized(&self) -> Top3 {
        let sum = self.sum();
        if sum <= 0.0 {
            return self.clone();
        }
        Top3(self.0.iter().map(|p| RankedActivity::new(p.code, p.prob / sum)).collect())
    }

    /// The canonical reply text; [`parse_response`] inverts it exactly.
    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|p| format!("{}: {}", p.code, p.prob))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// 1-based rank of `code`.
    pub fn rank_of(&self, code: ActivityCode) -> Option<usize> {
        self.0.iter().position(|p| p.code == code).map(|i| i + 1)
    }
}

impl<'de> Deserialize<'de> for Top3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs = Vec::<RankedActivity>::deserialize(d)?;
        Top3::from_pairs(pairs).map(|(t, _)| t).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub top3: Top3,
    /// Pairs arrived out of probability order and were re-sorted.
    pub reordered: bool,
}

pub fn parse_response(text: &str) -> Result<ParsedReply, ParseError> {
    let pairs = match json_pairs(text)? {
        Some(p) if !p.is_empty() => p,
        _ => text_pairs(text)?,
    };
    let (top3, reordered) = Top3::from_pairs(pairs)?;
    Ok(ParsedReply { top3, reordered })
}

fn pair_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(\d+)\s*(?:\([^()\n]{0,80}\))?\s*[:=]\s*(\d*\.?\d+(?:[eE][-+]?\d+)?)\s*(%)?").unwrap()
    })
}

fn make_pair(code: u64, prob: f64) -> Result<RankedActivity, ParseError> {
    let code = ActivityCode::new(code).map_err(|_| ParseError::InvalidCode(code))?;
    if !prob.is_finite() {
        return Err(ParseError::InvalidProbability(format!("{prob} for code {code}")));
    }
    Ok(RankedActivity::new(code, prob))
}

fn text_pairs(text: &str) -> Result<Vec<RankedActivity>, ParseError> {
    pair_regex()
        .captures_iter(text)
        .map(|cap| {
            let code = cap[1].parse::<u64>().unwrap_or(u64::MAX);
            let mut prob: f64 = cap[2]
                .parse()
                .map_err(|_| ParseError::InvalidProbability(cap[2].to_string()))?;
            if cap.get(3).is_some() {
                prob /= 100.0;
            }
            make_pair(code, prob)
        })
        .collect()
}

/// `Ok(None)` when the reply holds no JSON that looks like a classification.
fn json_pairs(text: &str) -> Result<Option<Vec<RankedActivity>>, ParseError> {
    let Some(start) = text.find(['{', '[']) else {
        return Ok(None);
    };
    let close = if text.as_bytes()[start] == b'{' { '}' } else { ']' };
    let Some(end) = text.rfind(close) else {
        return Ok(None);
    };
    if end < start {
        return Ok(None);
    }
    let Ok(value) = serde_json::from_str::<Value>(&text[start..=end]) else {
        return Ok(None);
    };
    pairs_from_value(&value)
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse().ok(),
        _ => None,
    }
}

fn code_number(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn pairs_from_value(value: &Value) -> Result<Option<Vec<RankedActivity>>, ParseError> {
    match value {
        Value::Object(map) => {
            for key in ["top3", "categories", "predictions", "result"] {
                if let Some(inner) = map.get(key) {
                    return pairs_from_value(inner);
                }
            }
            if map.contains_key("code") {
                return pairs_from_value(&Value::Array(vec![value.clone()]));
            }
            let mut out = Vec::new();
            for (k, v) in map {
                let (Ok(code), Some(prob)) = (k.trim().parse::<u64>(), number(v)) else {
                    return Ok(None);
                };
                out.push(make_pair(code, prob)?);
            }
            Ok(Some(out))
        }
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                let (code, prob) = match item {
                    Value::Array(pair) if pair.len() == 2 => (code_number(&pair[0]), number(&pair[1])),
                    Value::Object(o) => (
                        o.get("code").or_else(|| o.get("category")).and_then(code_number),
                        o.get("prob")
                            .or_else(|| o.get("probability"))
                            .or_else(|| o.get("p"))
                            .and_then(number),
                    ),
                    _ => (None, None),
                };
                let (Some(code), Some(prob)) = (code, prob) else {
                    return Ok(None);
                };
                out.push(make_pair(code, prob)?);
            }
            Ok(Some(out))
        }
        _ => Ok(None),
    }
}
