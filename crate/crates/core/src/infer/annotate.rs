//! End-to-end stay-point annotation: mandatory rules first, then the
//! Bayesian scorer for every stay point the rules leave unlabelled.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

use super::bayes::{poi_prior, score_activities, select_activity, ActivityScoreMatrix, Alternative, CandidatePoi, Selection};
use super::index::SpatialIndex;
use super::mandatory::{infer_mandatory, MandatoryParams};
use super::profile::{hour_of_day, ProfileError, TemporalProfile};
use crate::activity::ActivityCode;
use crate::classify::{PoiClassification, Top3};
use crate::geo::LonLat;
use crate::par::{self, Execution};
use crate::poi::PoiDataset;
use crate::staypoint::{PersonStay, StayPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferParams {
    /// Search radius around a stay point.
    pub radius_m: f64,
    /// Maximum number of candidate POIs.
    pub k: usize,
    /// Standard deviation of the distance kernel behind the POI prior.
    pub kernel_sd_m: f64,
    /// Added to UTC timestamps before taking hours and weekdays.
    pub tz_offset_s: i64,
    #[serde(flatten)]
    pub mandatory: MandatoryParams,
}

impl Default for InferParams {
    fn default() -> Self {
        Self {
            radius_m: 50.0,
            k: 10,
            kernel_sd_m: 5.0,
            tz_offset_s: 0,
            mandatory: MandatoryParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedPoi {
    pub id: String,
    pub position: LonLat,
    pub top3: Top3,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JoinError {
    #[error("classification refers to unknown POI `{0}`")]
    UnknownPoi(String),
    #[error("POI `{0}` is classified more than once")]
    Duplicate(String),
}

/// Classified POIs with a spatial index over all of them and a second one
/// over those whose top class is School. Immutable once built.
#[derive(Debug, Clone)]
pub struct ClassifiedPois {
    pois: Vec<ClassifiedPoi>,
    index: SpatialIndex,
    education: SpatialIndex,
    education_ids: Vec<usize>,
}

impl ClassifiedPois {
    pub fn new(pois: Vec<ClassifiedPoi>) -> Self {
        let index = SpatialIndex::new(pois.iter().map(|p| p.position).collect());
        let education_ids: Vec<usize> = pois
            .iter()
            .enumerate()
            .filter(|(_, p)| p.top3.first().code == ActivityCode::SCHOOL)
            .map(|(i, _)| i)
            .collect();
        let education = SpatialIndex::new(education_ids.iter().map(|&i| pois[i].position).collect());
        Self {
            pois,
            index,
            education,
            education_ids,
        }
    }

    /// Pairs classifications with dataset records by id. POIs without a
    /// classification are left out.
    pub fn join(ds: &PoiDataset, classifications: &[PoiClassification]) -> Result<Self, JoinError> {
        let by_id: HashMap<&str, usize> = ds.records().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let mut taken = vec![false; ds.len()];
        let mut pois = Vec::with_capacity(classifications.len());
        for c in classifications {
            let &i = by_id
                .get(c.poi_id.as_str())
                .ok_or_else(|| JoinError::UnknownPoi(c.poi_id.clone()))?;
            if std::mem::replace(&mut taken[i], true) {
                return Err(JoinError::Duplicate(c.poi_id.clone()));
            }
            let r = &ds.records()[i];
            pois.push(ClassifiedPoi {
                id: r.id.clone(),
                position: r.position(),
                top3: c.top3.clone(),
            });
        }
        Ok(Self::new(pois))
    }

    pub fn pois(&self) -> &[ClassifiedPoi] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    /// Same POIs at new positions (e.g. after noise injection).
    pub fn with_positions(&self, positions: &[LonLat]) -> Self {
        assert_eq!(positions.len(), self.pois.len(), "one position per POI");
        Self::new(
            self.pois
                .iter()
                .zip(positions)
                .map(|(p, &position)| ClassifiedPoi { position, ..p.clone() })
                .collect(),
        )
    }

    pub fn positions(&self) -> Vec<LonLat> {
        self.pois.iter().map(|p| p.position).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MandatoryRule,
    Bayesian,
    /// No POI within the search radius; labelled Something else.
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "AnnotationLine", try_from = "AnnotationLine")]
pub struct AnnotatedStayPoint {
    pub person_id: String,
    pub stay: StayPoint,
    pub activity: ActivityCode,
    pub matched_poi: Option<String>,
    pub score: f64,
    pub ranked_alternatives: Vec<Alternative>,
    pub provenance: Provenance,
}

impl AnnotatedStayPoint {
    /// 1-based rank of `code` among the alternatives.
    pub fn rank_of(&self, code: ActivityCode) -> Option<usize> {
        self.ranked_alternatives.iter().position(|a| a.code == code).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationLine {
    person_id: String,
    #[serde(rename = "t_S")]
    t_start: i64,
    #[serde(rename = "t_E")]
    t_end: i64,
    lon: f64,
    lat: f64,
    activity: ActivityCode,
    label: String,
    matched_poi: Option<String>,
    score: f64,
    alternatives: Vec<Alternative>,
    provenance: Provenance,
}

impl From<AnnotatedStayPoint> for AnnotationLine {
    fn from(a: AnnotatedStayPoint) -> Self {
        Self {
            person_id: a.person_id,
            t_start: a.stay.t_start,
            t_end: a.stay.t_end,
            lon: a.stay.lon,
            lat: a.stay.lat,
            activity: a.activity,
            label: a.activity.label().to_string(),
            matched_poi: a.matched_poi,
            score: a.score,
            alternatives: a.ranked_alternatives,
            provenance: a.provenance,
        }
    }
}

impl TryFrom<AnnotationLine> for AnnotatedStayPoint {
    type Error = String;

    fn try_from(l: AnnotationLine) -> Result<Self, Self::Error> {
        if l.alternatives.windows(2).any(|w| w[0].score < w[1].score) {
            return Err("alternatives must be in non-increasing score order".into());
        }
        Ok(Self {
            person_id: l.person_id,
            stay: StayPoint {
                t_start: l.t_start,
                t_end: l.t_end,
                lon: l.lon,
                lat: l.lat,
            },
            activity: l.activity,
            matched_poi: l.matched_poi,
            score: l.score,
            ranked_alternatives: l.alternatives,
            provenance: l.provenance,
        })
    }
}

pub struct Annotator<'a> {
    pois: &'a ClassifiedPois,
    profile: &'a TemporalProfile,
    params: InferParams,
}

impl<'a> Annotator<'a> {
    /// Fails if a classification uses a code the profile lacks.
    pub fn new(pois: &'a ClassifiedPois, profile: &'a TemporalProfile, params: InferParams) -> Result<Self, ProfileError> {
        for p in pois.pois() {
            for ra in p.top3.as_slice() {
                if !profile.covers(ra.code) {
                    return Err(ProfileError::MissingCode(ra.code));
                }
            }
        }
        Ok(Self { pois, profile, params })
    }

    pub fn params(&self) -> &InferParams {
        &self.params
    }

    /// The K x 3 matrix and its selection, or `None` without candidates.
    pub fn score_stay(&self, sp: &StayPoint) -> Option<(ActivityScoreMatrix, Selection)> {
        let hits = self.pois.index.query(sp.position(), self.params.radius_m, self.params.k);
        if hits.is_empty() {
            return None;
        }
        let distances: Vec<f64> = hits.iter().map(|h| h.distance_m).collect();
        let priors = poi_prior(&distances, self.params.kernel_sd_m);
        let candidates: Vec<(CandidatePoi, &Top3)> = hits
            .iter()
            .zip(priors)
            .map(|(h, prior)| {
                let poi = &self.pois.pois[h.index];
                (
                    CandidatePoi {
                        poi_id: poi.id.clone(),
                        distance_m: h.distance_m,
                        prior,
                    },
                    &poi.top3,
                )
            })
            .collect();
        let hour = hour_of_day(sp.t_start, self.params.tz_offset_s);
        let matrix = score_activities(hour, &candidates, self.profile).expect("profile coverage checked in Annotator::new");
        let selection = select_activity(&matrix)?;
        Some((matrix, selection))
    }

    fn bayesian(&self, person_id: &str, sp: &StayPoint) -> AnnotatedStayPoint {
        match self.score_stay(sp) {
            Some((matrix, sel)) => AnnotatedStayPoint {
                person_id: person_id.to_string(),
                stay: *sp,
                activity: sel.activity,
                matched_poi: Some(matrix.rows[sel.row].candidate.poi_id.clone()),
                score: sel.score,
                ranked_alternatives: sel.ranked_alternatives,
                provenance: Provenance::Bayesian,
            },
            None => AnnotatedStayPoint {
                person_id: person_id.to_string(),
                stay: *sp,
                activity: ActivityCode::SOMETHING_ELSE,
                matched_poi: None,
                score: 0.0,
                ranked_alternatives: vec![Alternative {
                    code: ActivityCode::SOMETHING_ELSE,
                    score: 0.0,
                }],
                provenance: Provenance::NoCandidate,
            },
        }
    }

    /// Annotates one person's full history (mandatory rules need all of it).
    pub fn annotate_person(&self, person_id: &str, stays: &[StayPoint]) -> Vec<AnnotatedStayPoint> {
        let labeling = infer_mandatory(stays, &self.pois.education, &self.params.mandatory, self.params.tz_offset_s);
        stays
            .iter()
            .enumerate()
            .map(|(i, sp)| match labeling.label_of_stay(i) {
                Some(label) => AnnotatedStayPoint {
                    person_id: person_id.to_string(),
                    stay: *sp,
                    activity: label.activity,
                    matched_poi: label.poi.map(|e| self.pois.pois[self.pois.education_ids[e]].id.clone()),
                    score: 1.0,
                    ranked_alternatives: vec![Alternative {
                        code: label.activity,
                        score: 1.0,
                    }],
                    provenance: Provenance::MandatoryRule,
                },
                None => self.bayesian(person_id, sp),
            })
            .collect()
    }

    /// Annotates all stays, grouped per person, and returns them in input order.
    pub fn annotate(&self, stays: &[PersonStay], exec: Execution) -> Vec<AnnotatedStayPoint> {
        let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for (i, s) in stays.iter().enumerate() {
            let g = *slot.entry(s.person_id.as_str()).or_insert_with(|| {
                groups.push((s.person_id.as_str(), Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }
        let per_person = par::map(exec, &groups, |(person, idx)| {
            let history: Vec<StayPoint> = idx.iter().map(|&i| stays[i].stay).collect();
            self.annotate_person(person, &history)
        });
        let mut out: Vec<Option<AnnotatedStayPoint>> = vec![None; stays.len()];
        for ((_, idx), annotated) in groups.iter().zip(per_person) {
            for (&i, a) in idx.iter().zip(annotated) {
                out[i] = Some(a);
            }
        }
        out.into_iter().map(|a| a.expect("every stay annotated")).collect()
    }
}

pub fn write_annotations<W: io::Write>(items: &[AnnotatedStayPoint], mut w: W) -> io::Result<()> {
    for a in items {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Annotated stays as a GeoJSON FeatureCollection of points.
pub fn write_annotations_geojson<W: io::Write>(items: &[AnnotatedStayPoint], w: W) -> serde_json::Result<()> {
    let features: Vec<serde_json::Value> = items
        .iter()
        .map(|a| {
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [a.stay.lon, a.stay.lat]},
                "properties": {
                    "person_id": a.person_id,
                    "t_S": a.stay.t_start,
                    "t_E": a.stay.t_end,
                    "activity": a.activity,
                    "label": a.activity.label(),
                    "matched_poi": a.matched_poi,
                    "score": a.score,
                    "provenance": a.provenance,
                },
            })
        })
        .collect();
    serde_json::to_writer(w, &serde_json::json!({"type": "FeatureCollection", "features": features}))
}

pub fn read_annotations<R: io::BufRead>(r: R) -> Result<Vec<AnnotatedStayPoint>, crate::JsonLinesError> {
    crate::read_json_lines(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::RankedActivity;
    use crate::geo::offset_m;

    const MONDAY: i64 = 1_493_596_800;
    const HOME: LonLat = LonLat { lon: -118.30, lat: 34.05 };

    fn top3(pairs: &[(u8, f64)]) -> Top3 {
        Top3::from_pairs(pairs.iter().map(|&(c, p)| RankedActivity::new(ActivityCode::new(c.into()).unwrap(), p)).collect())
            .unwrap()
            .0
    }

    fn stay(at: LonLat, day: i64, from_h: f64, to_h: f64) -> StayPoint {
        StayPoint {
            t_start: MONDAY + day * 86_400 + (from_h * 3600.0) as i64,
            t_end: MONDAY + day * 86_400 + (to_h * 3600.0) as i64,
            lon: at.lon,
            lat: at.lat,
        }
    }

    fn fixture() -> (ClassifiedPois, Vec<PersonStay>, LonLat) {
        let work = offset_m(HOME, 5000.0, 0.0);
        let lunch = offset_m(work, 0.0, 800.0);
        let pois = ClassifiedPois::new(vec![
            ClassifiedPoi { id: "diner".into(), position: offset_m(lunch, 3.0, 2.0), top3: top3(&[(7, 0.7), (9, 0.2), (14, 0.1)]) },
            ClassifiedPoi { id: "office".into(), position: offset_m(work, 5.0, 0.0), top3: top3(&[(2, 0.8), (6, 0.1)]) },
        ]);
        let mut stays = vec![stay(HOME, 0, 0.0, 8.0)];
        for d in 0..5 {
            if d == 2 {
                stays.push(stay(work, d, 9.0, 11.9));
                stays.push(stay(lunch, d, 12.0, 12.8));
                stays.push(stay(work, d, 13.0, 17.0));
            } else {
                stays.push(stay(work, d, 9.0, 17.0));
            }
            stays.push(stay(HOME, d, 18.0, 32.0));
        }
        let stays = stays.into_iter().map(|stay| PersonStay { person_id: "p1".into(), stay }).collect();
        (pois, stays, lunch)
    }

    #[test]
    fn home_work_and_lunch() {
        let (pois, stays, _) = fixture();
        let profile = TemporalProfile::synthetic_default();
        let annotator = Annotator::new(&pois, &profile, InferParams::default()).unwrap();
        let out = annotator.annotate(&stays, Execution::Sequential);
        let codes: Vec<u8> = out.iter().map(|a| a.activity.get()).collect();
        assert_eq!(codes, vec![1, 2, 1, 2, 1, 2, 7, 2, 1, 2, 1, 2, 1]);
        let lunch = &out[6];
        assert_eq!(lunch.provenance, Provenance::Bayesian);
        assert_eq!(lunch.matched_poi.as_deref(), Some("diner"));
        assert_eq!(lunch.ranked_alternatives[0].code, ActivityCode::BUY_MEALS);
        assert_eq!(out[0].provenance, Provenance::MandatoryRule);
    }

    #[test]
    fn countryside_stay_has_no_candidate() {
        let (pois, _, _) = fixture();
        let profile = TemporalProfile::synthetic_default();
        let annotator = Annotator::new(&pois, &profile, InferParams::default()).unwrap();
        let lone = [PersonStay { person_id: "p".into(), stay: stay(offset_m(HOME, -20_000.0, 0.0), 6, 10.0, 11.0) }];
        let out = annotator.annotate(&lone, Execution::Sequential);
        // a single stay outside off-hours is not mandatory
        assert_eq!(out[0].provenance, Provenance::NoCandidate);
        assert_eq!(out[0].activity, ActivityCode::SOMETHING_ELSE);
        assert_eq!(out[0].score, 0.0);
    }

    #[test]
    fn deterministic_and_parallel_agrees() {
        let (pois, stays, _) = fixture();
        let profile = TemporalProfile::synthetic_default();
        let annotator = Annotator::new(&pois, &profile, InferParams::default()).unwrap();
        let render = |exec| {
            let mut buf = Vec::new();
            write_annotations(&annotator.annotate(&stays, exec), &mut buf).unwrap();
            buf
        };
        let a = render(Execution::Sequential);
        assert_eq!(a, render(Execution::Sequential));
        assert_eq!(a, render(Execution::Parallel));
        let back = read_annotations(a.as_slice()).unwrap();
        assert_eq!(back, annotator.annotate(&stays, Execution::Sequential));
    }

    #[test]
    fn profile_must_cover_classified_codes() {
        let (pois, _, _) = fixture();
        let mut profile = TemporalProfile::empty();
        profile.set(ActivityCode::BUY_MEALS, [1.0 / 24.0; 24]).unwrap();
        assert!(matches!(Annotator::new(&pois, &profile, InferParams::default()), Err(ProfileError::MissingCode(_))));
    }

    #[test]
    fn join_by_id() {
        use crate::poi::PoiRecord;
        use std::collections::BTreeMap;
        let ds = PoiDataset::new(
            "t",
            vec![],
            vec![
                PoiRecord::new("a", Some("A".into()), 1.0, 1.0, BTreeMap::new()).unwrap(),
                PoiRecord::new("b", Some("B".into()), 2.0, 2.0, BTreeMap::new()).unwrap(),
            ],
        )
        .unwrap();
        let c = |id: &str| PoiClassification { poi_id: id.into(), top3: top3(&[(3, 0.9)]), raw_response: String::new(), reordered: false };
        let joined = ClassifiedPois::join(&ds, &[c("b")]).unwrap();
        assert_eq!(joined.len(), 1);
        assert_eq!(joined.pois()[0].position, LonLat::new(2.0, 2.0));
        assert_eq!(joined.education_ids, vec![0]);
        assert_eq!(ClassifiedPois::join(&ds, &[c("zz")]).unwrap_err(), JoinError::UnknownPoi("zz".into()));
        assert_eq!(ClassifiedPois::join(&ds, &[c("a"), c("a")]).unwrap_err(), JoinError::Duplicate("a".into()));
    }

    #[test]
    fn geojson_export() {
        let (pois, stays, _) = fixture();
        let profile = TemporalProfile::synthetic_default();
        let out = Annotator::new(&pois, &profile, InferParams::default()).unwrap().annotate(&stays, Execution::Sequential);
        let mut buf = Vec::new();
        write_annotations_geojson(&out, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["features"].as_array().unwrap().len(), out.len());
        assert_eq!(v["features"][6]["properties"]["label"], "Buy meals");
        assert_eq!(v["features"][0]["geometry"]["coordinates"][0], out[0].stay.lon);
    }

    #[test]
    fn annotation_line_format() {
        let a = AnnotatedStayPoint {
            person_id: "p".into(),
            stay: StayPoint { t_start: 10, t_end: 20, lon: 1.5, lat: 2.5 },
            activity: ActivityCode::BUY_MEALS,
            matched_poi: Some("x".into()),
            score: 0.25,
            ranked_alternatives: vec![Alternative { code: ActivityCode::BUY_MEALS, score: 0.25 }],
            provenance: Provenance::Bayesian,
        };
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"person_id":"p","t_S":10,"t_E":20,"lon":1.5,"lat":2.5,"activity":7,"label":"Buy meals","matched_poi":"x","score":0.25,"alternatives":[{"code":7,"score":0.25}],"provenance":"bayesian"}"#
        );
    }
}
