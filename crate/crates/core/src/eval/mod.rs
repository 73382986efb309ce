//! Evaluation: noise injection, metrics and a synthetic ground-truth world.

mod metrics;
mod noise;
mod summary;
mod synth;

pub use metrics::{
    classification_metrics, inference_metrics, ClassificationReport, EvalError, EvalReport, InferenceReport,
    InferenceSlice, PoiTruth, StayTruth, TypeMetrics,
};
pub use noise::{add_noise, InvalidNoise, NoiseConfig, NoiseTarget};
pub use summary::render_summary;
pub use synth::{generate_synthetic_world, MixEntry, SynthConfig, SynthError, SyntheticWorld, DEFAULT_START};
