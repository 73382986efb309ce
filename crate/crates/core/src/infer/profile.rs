//! Start-hour likelihoods `P(start hour | activity)`.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::activity::{ActivityCode, NUM_ACTIVITIES};

pub const HOURS: usize = 24;

/// Sums further than this from one are rejected on load; closer ones are
/// rescaled so every stored histogram sums to one within 1e-9.
pub const LOAD_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile key `{0}` is not an activity code 1..=15")]
    BadCode(String),
    #[error("activity {code}: expected 24 hourly values, found {found}")]
    WrongLength { code: ActivityCode, found: usize },
    #[error("activity {code}: hour {hour} has invalid value {value}")]
    BadValue { code: ActivityCode, hour: usize, value: f64 },
    #[error("activity {code}: hourly values sum to {sum}, not 1")]
    Sum { code: ActivityCode, sum: f64 },
    #[error("profile has no histogram for activity {0}")]
    MissingCode(ActivityCode),
    #[error("malformed profile JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    bins: [Option<[f64; HOURS]>; NUM_ACTIVITIES],
}

impl TemporalProfile {
    pub fn empty() -> Self {
        Self {
            bins: [None; NUM_ACTIVITIES],
        }
    }

    pub fn uniform() -> Self {
        Self {
            bins: [Some([1.0 / HOURS as f64; HOURS]); NUM_ACTIVITIES],
        }
    }

    pub fn set(&mut self, code: ActivityCode, hist: [f64; HOURS]) -> Result<(), ProfileError> {
        for (hour, &value) in hist.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProfileError::BadValue { code, hour, value });
            }
        }
        let sum: f64 = hist.iter().sum();
        if (sum - 1.0).abs() > LOAD_SUM_TOLERANCE {
            return Err(ProfileError::Sum { code, sum });
        }
        self.bins[code.index()] = Some(hist.map(|v| v / sum));
        Ok(())
    }

    pub fn histogram(&self, code: ActivityCode) -> Option<&[f64; HOURS]> {
        self.bins[code.index()].as_ref()
    }

    pub fn prob(&self, code: ActivityCode, hour: usize) -> Option<f64> {
        self.histogram(code).map(|h| h[hour % HOURS])
    }

    pub fn covers(&self, code: ActivityCode) -> bool {
        self.bins[code.index()].is_some()
    }

    pub fn max_bin(&self) -> f64 {
        self.bins.iter().flatten().flat_map(|h| h.iter().copied()).fold(0.0, f64::max)
    }

    /// Parses `{"<code>": [24 floats], ...}`.
    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let raw: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(text).map_err(|e| ProfileError::Json(e.to_string()))?;
        let mut profile = Self::empty();
        for (key, values) in raw {
            let code = key
                .trim()
                .parse::<u64>()
                .ok()
                .and_then(|c| ActivityCode::new(c).ok())
                .ok_or_else(|| ProfileError::BadCode(key.clone()))?;
            let hist: [f64; HOURS] = values
                .as_slice()
                .try_into()
                .map_err(|_| ProfileError::WrongLength { code, found: values.len() })?;
            profile.set(code, hist)?;
        }
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Built-in synthetic profile: each activity is a mixture of circular
    /// Gaussian bumps over the day on top of a small floor. Meant as a
    /// stand-in until a survey-derived profile is supplied.
    pub fn synthetic_default() -> Self {
        // (centre hour, width in hours, weight)
        let shapes: [&[(f64, f64, f64)]; NUM_ACTIVITIES] = [
            &[(18.0, 2.0, 1.0), (12.5, 1.5, 0.3)],
            &[(8.0, 1.2, 1.0), (13.0, 1.0, 0.2)],
            &[(8.0, 0.8, 1.0), (13.0, 1.0, 0.1)],
            &[(8.0, 1.0, 0.6), (15.5, 1.5, 0.6)],
            &[(14.0, 3.5, 1.0)],
            &[(11.0, 2.5, 1.0), (16.0, 2.0, 0.4)],
            &[(12.0, 1.2, 1.0), (18.5, 1.5, 0.9), (8.0, 1.0, 0.3)],
            &[(12.0, 3.0, 1.0)],
            &[(15.0, 2.5, 0.8), (19.5, 1.5, 0.7)],
            &[(7.0, 1.2, 0.8), (18.0, 1.5, 1.0)],
            &[(18.0, 3.0, 1.0)],
            &[(10.0, 2.5, 1.0), (15.0, 1.5, 0.4)],
            &[(10.0, 1.5, 1.0), (19.0, 1.5, 0.5)],
            &[(13.0, 5.0, 1.0)],
            &[(8.0, 1.0, 1.0), (15.0, 1.0, 0.9), (18.0, 1.0, 0.4)],
        ];
        let mut profile = Self::empty();
        for (code, bumps) in ActivityCode::all().zip(shapes) {
            let mut hist = [0.0; HOURS];
            for (h, slot) in hist.iter_mut().enumerate() {
                let centre = h as f64 + 0.5;
                *slot = 0.01
                    + bumps
                        .iter()
                        .map(|&(c, w, a)| {
                            let d = (centre - c).abs();
                            let d = d.min(HOURS as f64 - d);
                            a * (-(d * d) / (2.0 * w * w)).exp()
                        })
                        .sum::<f64>();
            }
            let sum: f64 = hist.iter().sum();
            profile.set(code, hist.map(|v| v / sum)).expect("normalized");
        }
        profile
    }
}

impl Serialize for TemporalProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(None)?;
        for code in ActivityCode::all() {
            if let Some(h) = self.histogram(code) {
                map.serialize_entry(&code.to_string(), h.as_slice())?;
            }
        }
        map.end()
    }
}

/// Local hour of day for a UTC timestamp.
pub fn hour_of_day(t: i64, tz_offset_s: i64) -> usize {
    ((t + tz_offset_s).rem_euclid(86_400) / 3_600) as usize
}
