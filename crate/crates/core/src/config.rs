//! Pipeline configuration file (TOML). Every key is optional; missing keys
//! take their defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::ClassifyOptions;
use crate::eval::{MixEntry, NoiseTarget, SynthConfig};
use crate::geo::LonLat;
use crate::infer::{InferParams, HOURS};
use crate::poi::{ColumnMapping, PoiFormat};
use crate::staypoint::StayPointParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
    Openai,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "http" => Ok(Self::Http),
            "openai" => Ok(Self::Openai),
            other => Err(format!("unknown backend `{other}` (expected mock, http or openai)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mock => "mock",
            Self::Http => "http",
            Self::Openai => "openai",
        })
    }
}

/// Input and output files. Unset entries default to a fixed name under the
/// output directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub pois: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub staypoints: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub classifications: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub poi_truth: Option<PathBuf>,
    pub stay_truth: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Pois,
    Trajectories,
    Staypoints,
    Profile,
    Cache,
    Classifications,
    Annotations,
    PoiTruth,
    StayTruth,
    Report,
}

impl Artifact {
    pub fn default_name(self) -> &'static str {
        match self {
            Self::Pois => "pois.csv",
            Self::Trajectories => "trajectories.csv",
            Self::Staypoints => "staypoints.jsonl",
            Self::Profile => "profile.json",
            Self::Cache => "cache.jsonl",
            Self::Classifications => "classifications.jsonl",
            Self::Annotations => "annotations.jsonl",
            Self::PoiTruth => "poi_truth.jsonl",
            Self::StayTruth => "stay_truth.jsonl",
            Self::Report => "report.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoiSection {
    /// Inferred from the file extension when unset.
    pub format: Option<PoiFormat>,
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_s: u64,
    /// Dataset notes inserted into every prompt.
    pub hints: Vec<String>,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub concurrency: usize,
    pub max_failure_fraction: f64,
    pub rate_limit_per_s: Option<f64>,
    pub renormalize: bool,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let o = ClassifyOptions::default();
        Self {
            backend: BackendKind::Mock,
            endpoint: None,
            model: "gpt-4".into(),
            timeout_s: 60,
            hints: Vec::new(),
            max_retries: o.max_retries,
            initial_backoff_ms: o.initial_backoff_ms,
            concurrency: o.concurrency,
            max_failure_fraction: o.max_failure_fraction,
            rate_limit_per_s: o.rate_limit_per_s,
            renormalize: o.renormalize,
        }
    }
}

impl ClassifySection {
    pub fn options(&self) -> ClassifyOptions {
        ClassifyOptions {
            max_retries: self.max_retries,
            initial_backoff_ms: self.initial_backoff_ms,
            concurrency: self.concurrency,
            max_failure_fraction: self.max_failure_fraction,
            rate_limit_per_s: self.rate_limit_per_s,
            renormalize: self.renormalize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sd_m: f64,
    pub target: NoiseTarget,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sd_m: 0.0,
            target: NoiseTarget::Pois,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Largest start-time gap when aligning truth to annotated stays.
    pub alignment_tolerance_s: i64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            alignment_tolerance_s: 120,
        }
    }
}

/// Synthetic world settings; the seed comes from the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub agents: usize,
    pub days: u32,
    pub spacing_m: f64,
    pub origin: LonLat,
    pub start: i64,
    pub sample_interval_s: i64,
    pub speed_mps: f64,
    pub weekday_visit_prob: f64,
    pub weekend_visit_prob: f64,
    pub mix: Vec<MixEntry>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            agents: d.agents,
            days: d.days,
            spacing_m: d.spacing_m,
            origin: d.origin,
            start: d.start,
            sample_interval_s: d.sample_interval_s,
            speed_mps: d.speed_mps,
            weekday_visit_prob: d.weekday_visit_prob,
            weekend_visit_prob: d.weekend_visit_prob,
            mix: d.mix,
        }
    }
}

impl SynthSection {
    pub fn with_seed(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            agents: self.agents,
            days: self.days,
            spacing_m: self.spacing_m,
            seed,
            origin: self.origin,
            start: self.start,
            sample_interval_s: self.sample_interval_s,
            speed_mps: self.speed_mps,
            weekday_visit_prob: self.weekday_visit_prob,
            weekend_visit_prob: self.weekend_visit_prob,
            mix: self.mix.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// Root of all randomness; each stage derives its own stream.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub paths: Paths,
    pub poi: PoiSection,
    pub classify: ClassifySection,
    pub staypoint: StayPointParams,
    pub infer: InferParams,
    pub noise: NoiseSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            paths: Paths::default(),
            poi: PoiSection::default(),
            classify: ClassifySection::default(),
            staypoint: StayPointParams::default(),
            infer: InferParams::default(),
            noise: NoiseSection::default(),
            eval: EvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

fn positive(v: &mut Vec<String>, name: &str, x: f64) {
    if !(x.is_finite() && x > 0.0) {
        v.push(format!("{name} must be positive, got {x}"));
    }
}

fn hour(v: &mut Vec<String>, name: &str, h: u32) {
    if h as usize >= HOURS {
        v.push(format!("{name} must be an hour in 0..=23, got {h}"));
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn path(&self, which: Artifact) -> PathBuf {
        let p = &self.paths;
        let set = match which {
            Artifact::Pois => &p.pois,
            Artifact::Trajectories => &p.trajectories,
            Artifact::Staypoints => &p.staypoints,
            Artifact::Profile => &p.profile,
            Artifact::Cache => &p.cache,
            Artifact::Classifications => &p.classifications,
            Artifact::Annotations => &p.annotations,
            Artifact::PoiTruth => &p.poi_truth,
            Artifact::StayTruth => &p.stay_truth,
            Artifact::Report => &p.report,
        };
        set.clone().unwrap_or_else(|| self.output_dir.join(which.default_name()))
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let c = &self.classify;
        if c.concurrency == 0 {
            v.push("classify.concurrency must be at least 1".into());
        }
        if c.timeout_s == 0 {
            v.push("classify.timeout_s must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&c.max_failure_fraction) {
            v.push(format!("classify.max_failure_fraction must be in [0, 1], got {}", c.max_failure_fraction));
        }
        if let Some(r) = c.rate_limit_per_s {
            positive(&mut v, "classify.rate_limit_per_s", r);
        }
        if c.backend != BackendKind::Mock && c.endpoint.as_deref().is_none_or(str::is_empty) {
            v.push(format!("classify.endpoint is required for the {} backend", c.backend));
        }
        positive(&mut v, "staypoint.dist_threshold_m", self.staypoint.dist_threshold_m);
        if self.staypoint.min_duration_s <= 0 {
            v.push(format!("staypoint.min_duration_s must be positive, got {}", self.staypoint.min_duration_s));
        }
        let i = &self.infer;
        positive(&mut v, "infer.radius_m", i.radius_m);
        positive(&mut v, "infer.kernel_sd_m", i.kernel_sd_m);
        if i.k == 0 {
            v.push("infer.k must be at least 1".into());
        }
        if i.tz_offset_s.abs() > 14 * 3600 {
            v.push(format!("infer.tz_offset_s must be within 14 hours, got {}", i.tz_offset_s));
        }
        let m = &i.mandatory;
        positive(&mut v, "infer.place_radius_m", m.place_radius_m);
        positive(&mut v, "infer.school_radius_m", m.school_radius_m);
        if !(m.min_work_dist_m.is_finite() && m.min_work_dist_m >= 0.0) {
            v.push(format!("infer.min_work_dist_m must be non-negative, got {}", m.min_work_dist_m));
        }
        for (name, h) in [
            ("infer.off_hours_start", m.off_hours_start),
            ("infer.off_hours_end", m.off_hours_end),
            ("infer.work_hours_start", m.work_hours_start),
            ("infer.work_hours_end", m.work_hours_end),
        ] {
            hour(&mut v, name, h);
        }
        if m.off_hours_start == m.off_hours_end {
            v.push("infer off-hours window is empty (start equals end)".into());
        }
        if m.work_hours_start == m.work_hours_end {
            v.push("infer work-hours window is empty (start equals end)".into());
        }
        if !(self.noise.sd_m.is_finite() && self.noise.sd_m >= 0.0) {
            v.push(format!("noise.sd_m must be non-negative, got {}", self.noise.sd_m));
        }
        if self.eval.alignment_tolerance_s < 0 {
            v.push("eval.alignment_tolerance_s must be non-negative".into());
        }
        v.extend(self.synth.with_seed(self.seed).problems().into_iter().map(|p| format!("synth: {p}")));
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = PipelineConfig::from_toml_str("", Path::new("c.toml")).unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
        assert_eq!(c.path(Artifact::Annotations), PathBuf::from("out/annotations.jsonl"));
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::default();
        c.infer.radius_m = 80.0;
        c.paths.pois = Some("data/p.geojson".into());
        let back = PipelineConfig::from_toml_str(&c.to_toml(), Path::new("c.toml")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.path(Artifact::Pois), PathBuf::from("data/p.geojson"));
    }

    #[test]
    fn sections_override_defaults() {
        let text = "seed = 9\n[infer]\nradius_m = 30.0\noff_hours_start = 20\n[classify]\nbackend = \"http\"\nendpoint = \"http://x\"\n";
        let c = PipelineConfig::from_toml_str(text, Path::new("c.toml")).unwrap();
        assert_eq!((c.seed, c.infer.radius_m, c.infer.mandatory.off_hours_start), (9, 30.0, 20));
        assert_eq!(c.infer.k, 10);
        assert_eq!(c.classify.backend, BackendKind::Http);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[infer]\nradius = 3.0", "[classify]\nretries = 2"] {
            assert!(PipelineConfig::from_toml_str(text, Path::new("c.toml")).is_err(), "{text}");
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "[infer]\nradius_m = -1.0\nk = 0\nwork_hours_end = 25\n[staypoint]\nmin_duration_s = 0\n[classify]\nbackend = \"openai\"\n";
        let c = PipelineConfig::from_toml_str(text, Path::new("c.toml")).unwrap();
        let ConfigError::Invalid(v) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(v.len(), 5, "{v:?}");
    }
}
