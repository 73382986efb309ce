//! Activity inference for stay points.

mod annotate;
mod bayes;
mod index;
mod mandatory;
mod profile;

pub use annotate::{
    read_annotations, write_annotations, write_annotations_geojson, AnnotatedStayPoint, Annotator, ClassifiedPoi, ClassifiedPois, InferParams,
    JoinError, Provenance,
};
pub use bayes::{
    poi_prior, score_activities, select_activity, ActivityScoreMatrix, Alternative, CandidatePoi, MatrixRow,
    ScoreEntry, Selection,
};
pub use index::{Neighbor, SpatialIndex};
pub use mandatory::{
    cluster_places, infer_mandatory, overlaps_daily_window, weekday, MandatoryLabeling, MandatoryParams, Place,
    PlaceLabel,
};
pub use profile::{hour_of_day, ProfileError, TemporalProfile, HOURS, LOAD_SUM_TOLERANCE};
