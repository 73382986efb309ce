//! Stay-point extraction from raw GPS traces.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_m, LonLat};
use crate::par::{self, Execution};

pub const DEFAULT_DIST_THRESHOLD_M: f64 = 200.0;
pub const DEFAULT_MIN_DURATION_S: i64 = 600;

/// Timestamps are UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub t: i64,
    pub lon: f64,
    pub lat: f64,
}

impl GpsPoint {
    pub fn new(t: i64, lon: f64, lat: f64) -> Self {
        Self { t, lon, lat }
    }

    pub fn position(&self) -> LonLat {
        LonLat::new(self.lon, self.lat)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("person {person}: timestamps not strictly increasing at point {index}")]
    NonIncreasing { person: String, index: usize },
    #[error("person {person}: coordinate out of range at point {index}")]
    Coordinates { person: String, index: usize },
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("dist_threshold_m and min_duration_s must be positive")]
    Thresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub person_id: String,
    points: Vec<GpsPoint>,
}

impl Trajectory {
    pub fn new(person_id: impl Into<String>, points: Vec<GpsPoint>) -> Result<Self, TrajectoryError> {
        let person_id = person_id.into();
        for (i, p) in points.iter().enumerate() {
            if !p.position().is_valid() {
                return Err(TrajectoryError::Coordinates { person: person_id, index: i });
            }
            if i > 0 && points[i - 1].t >= p.t {
                return Err(TrajectoryError::NonIncreasing { person: person_id, index: i });
            }
        }
        Ok(Self { person_id, points })
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    #[serde(rename = "t_S")]
    pub t_start: i64,
    #[serde(rename = "t_E")]
    pub t_end: i64,
    pub lon: f64,
    pub lat: f64,
}

impl StayPoint {
    pub fn position(&self) -> LonLat {
        LonLat::new(self.lon, self.lat)
    }

    pub fn duration_s(&self) -> i64 {
        self.t_end - self.t_start
    }
}

/// A stay point tagged with its owner; one JSON line of the stay-point file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonStay {
    pub person_id: String,
    #[serde(flatten)]
    pub stay: StayPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StayPointParams {
    pub dist_threshold_m: f64,
    pub min_duration_s: i64,
}

impl Default for StayPointParams {
    fn default() -> Self {
        Self {
            dist_threshold_m: DEFAULT_DIST_THRESHOLD_M,
            min_duration_s: DEFAULT_MIN_DURATION_S,
        }
    }
}

/// Anchor-based detection: a run grows while each next point stays within
/// `dist_threshold_m` of the run's first point. Runs lasting at least
/// `min_duration_s` become stay points at their mean position; scanning then
/// resumes after the run.
pub fn extract_staypoints(traj: &Trajectory, params: StayPointParams) -> Result<Vec<StayPoint>, TrajectoryError> {
    if params.dist_threshold_m.is_nan() || params.dist_threshold_m <= 0.0 || params.min_duration_s <= 0 {
        return Err(TrajectoryError::Thresholds);
    }
    let pts = traj.points();
    let mut stays = Vec::new();
    let mut i = 0;
    while i + 1 < pts.len() {
        let anchor = pts[i].position();
        let mut j = i + 1;
        while j < pts.len() && haversine_m(anchor, pts[j].position()) <= params.dist_threshold_m {
            j += 1;
        }
        let last = &pts[j - 1];
        if last.t - pts[i].t >= params.min_duration_s {
            let run = &pts[i..j];
            let n = run.len() as f64;
            let lon = run.iter().map(|p| p.lon).sum::<f64>() / n;
            let lat = run.iter().map(|p| p.lat).sum::<f64>() / n;
            stays.push(StayPoint {
                t_start: pts[i].t,
                t_end: last.t,
                lon,
                lat,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(stays)
}

/// Extracts every trajectory, keeping input order.
pub fn extract_all(
    trajectories: &[Trajectory],
    params: StayPointParams,
    exec: Execution,
) -> Result<Vec<PersonStay>, TrajectoryError> {
    let per_person = par::map(exec, trajectories, |t| {
        extract_staypoints(t, params).map(|stays| {
            stays
                .into_iter()
                .map(|stay| PersonStay {
                    person_id: t.person_id.clone(),
                    stay,
                })
                .collect::<Vec<_>>()
        })
    });
    let mut out = Vec::new();
    for stays in per_person {
        out.extend(stays?);
    }
    Ok(out)
}

/// One `{person_id, t_S, t_E, lon, lat}` object per line.
pub fn write_staypoints<W: io::Write>(stays: &[PersonStay], mut w: W) -> io::Result<()> {
    for s in stays {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_staypoints<R: io::BufRead>(r: R) -> Result<Vec<PersonStay>, crate::JsonLinesError> {
    crate::read_json_lines(r)
}

#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    person_id: String,
    timestamp: i64,
    lon: f64,
    lat: f64,
}

/// Reads `person_id,timestamp,lon,lat` CSV. Persons keep first-appearance order.
pub fn read_trajectories<R: io::Read>(r: R) -> Result<Vec<Trajectory>, TrajectoryError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut order: Vec<String> = Vec::new();
    let mut points: HashMap<String, Vec<GpsPoint>> = HashMap::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| TrajectoryError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let entry = points.entry(row.person_id.clone()).or_insert_with(|| {
            order.push(row.person_id.clone());
            Vec::new()
        });
        entry.push(GpsPoint::new(row.timestamp, row.lon, row.lat));
    }
    order
        .into_iter()
        .map(|id| {
            let pts = points.remove(&id).unwrap_or_default();
            Trajectory::new(id, pts)
        })
        .collect()
}

pub fn write_trajectories<W: io::Write>(trajectories: &[Trajectory], w: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    for t in trajectories {
        for p in t.points() {
            writer.serialize(TraceRow {
                person_id: t.person_id.clone(),
                timestamp: p.t,
                lon: p.lon,
                lat: p.lat,
            })?;
        }
    }
    if trajectories.iter().all(|t| t.points().is_empty()) {
        writer.write_record(["person_id", "timestamp", "lon", "lat"])?;
    }
    writer.flush()?;
    Ok(())
}
