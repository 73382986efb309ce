//! Synthetic ground-truth world: POIs on a grid, agents with a home, a work
//! place and scripted non-mandatory visits, and GPS traces that dwell at
//! the visited POI.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{PoiTruth, StayTruth};
use crate::activity::ActivityCode;
use crate::classify::{PoiClassification, RankedActivity, Top3};
use crate::geo::{haversine_m, offset_m, LonLat};
use crate::infer::{hour_of_day, weekday, TemporalProfile};
use crate::poi::{PoiDataset, PoiRecord};
use crate::staypoint::{GpsPoint, Trajectory};

/// Monday 2017-05-01 00:00 UTC.
pub const DEFAULT_START: i64 = 1_493_596_800;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub code: ActivityCode,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub agents: usize,
    pub days: u32,
    /// Grid spacing between neighbouring POIs.
    pub spacing_m: f64,
    pub seed: u64,
    pub origin: LonLat,
    /// Start of day zero, in UTC seconds.
    pub start: i64,
    pub sample_interval_s: i64,
    pub speed_mps: f64,
    /// Chance of an evening visit on a weekday.
    pub weekday_visit_prob: f64,
    /// Chance of each of the two weekend visit slots being used.
    pub weekend_visit_prob: f64,
    /// Relative frequency of each non-mandatory activity.
    pub mix: Vec<MixEntry>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mix = [
            (4, 0.04),
            (5, 0.20),
            (6, 0.08),
            (7, 0.18),
            (8, 0.08),
            (9, 0.08),
            (10, 0.08),
            (11, 0.08),
            (12, 0.06),
            (13, 0.04),
            (14, 0.04),
            (15, 0.04),
        ]
        .map(|(c, weight)| MixEntry {
            code: ActivityCode::new(c).expect("valid code"),
            weight,
        })
        .to_vec();
        Self {
            agents: 100,
            days: 7,
            spacing_m: 100.0,
            seed: 0,
            origin: LonLat::new(-118.25, 34.05),
            start: DEFAULT_START,
            sample_interval_s: 60,
            speed_mps: 10.0,
            weekday_visit_prob: 0.6,
            weekend_visit_prob: 0.8,
            mix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic world configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub pois: PoiDataset,
    pub classifications: Vec<PoiClassification>,
    pub poi_truth: Vec<PoiTruth>,
    pub trajectories: Vec<Trajectory>,
    pub stay_truth: Vec<StayTruth>,
    /// Scripted visits dropped because no POI or start hour fitted.
    pub skipped_visits: usize,
}

// Home-to-work and home-to-visit distance bands.
const WORK_BAND_M: (f64, f64) = (3000.0, 5000.0);
const VISIT_BAND_M: (f64, f64) = (500.0, 2500.0);
const MIN_GRID_EXTENT_M: f64 = 6000.0;

fn code(c: u64) -> ActivityCode {
    ActivityCode::new(c).expect("valid code")
}

/// Second choice offered in a synthetic classification.
fn related(c: ActivityCode) -> ActivityCode {
    code(match c.get() {
        1 => 11,
        2 => 6,
        3 => 2,
        4 => 11,
        5 => 6,
        6 => 5,
        7 => 9,
        8 => 6,
        9 => 10,
        10 => 9,
        11 => 1,
        12 => 5,
        13 => 9,
        14 => 9,
        _ => 11,
    })
}

fn feature_tag(c: ActivityCode) -> (&'static str, &'static str) {
    match c.get() {
        1 => ("building", "house"),
        2 => ("building", "office"),
        3 => ("amenity", "school"),
        4 => ("amenity", "childcare"),
        5 => ("amenity", "marketplace"),
        6 => ("amenity", "bank"),
        7 => ("amenity", "restaurant"),
        8 => ("amenity", "post_office"),
        9 => ("amenity", "cinema"),
        10 => ("amenity", "gym"),
        11 => ("building", "apartments"),
        12 => ("amenity", "clinic"),
        13 => ("amenity", "place_of_worship"),
        14 => ("amenity", "bench"),
        _ => ("amenity", "parking"),
    }
}

fn synthetic_top3(c: ActivityCode) -> Top3 {
    let second = related(c);
    let third = [code(14), code(9), code(10)].into_iter().find(|&x| x != c && x != second).expect("three distinct");
    Top3::from_pairs(vec![
        RankedActivity::new(c, 0.90),
        RankedActivity::new(second, 0.07),
        RankedActivity::new(third, 0.03),
    ])
    .expect("valid synthetic top3")
    .0
}

/// Start hours in `hours` at which the POI's own classification, weighted
/// by the profile, picks its true code. Restricting visits to these keeps
/// the noise-free world unambiguous.
fn feasible_hours(c: ActivityCode, top3: &Top3, profile: &TemporalProfile, hours: std::ops::RangeInclusive<usize>) -> Vec<(usize, f64)> {
    hours
        .filter_map(|h| {
            let p = |code: ActivityCode| profile.prob(code, h).unwrap_or(0.0);
            let own = p(c) * top3.as_slice()[0].prob;
            let beaten = top3.as_slice()[1..].iter().any(|ra| p(ra.code) * ra.prob >= own);
            (!beaten && own > 0.0).then_some((h, p(c)))
        })
        .collect()
}

struct Stay {
    pos: LonLat,
    start: i64,
    end: i64,
    code: ActivityCode,
}

struct Agent<'a> {
    cfg: &'a SynthConfig,
    stays: Vec<Stay>,
}

impl Agent<'_> {
    fn travel_s(&self, a: LonLat, b: LonLat) -> i64 {
        (haversine_m(a, b) / self.cfg.speed_mps).ceil() as i64
    }

    fn last(&self) -> &Stay {
        self.stays.last().expect("agent starts at home")
    }

    /// Leaves the current stay at `depart` and dwells at `pos` until `end`.
    fn go(&mut self, depart: i64, pos: LonLat, end: i64, code: ActivityCode) {
        let arrive = depart + self.travel_s(self.last().pos, pos);
        self.stays.last_mut().expect("agent starts at home").end = depart;
        self.stays.push(Stay {
            pos,
            start: arrive,
            end,
            code,
        });
    }

    fn render(&self, sample_s: i64) -> Vec<GpsPoint> {
        let mut pts: Vec<GpsPoint> = Vec::new();
        let push = |t: i64, p: LonLat, pts: &mut Vec<GpsPoint>| {
            if pts.last().is_none_or(|l| t > l.t) {
                pts.push(GpsPoint::new(t, p.lon, p.lat));
            }
        };
        for (i, s) in self.stays.iter().enumerate() {
            let mut t = s.start;
            while t < s.end {
                push(t, s.pos, &mut pts);
                t += sample_s;
            }
            push(s.end, s.pos, &mut pts);
            if let Some(next) = self.stays.get(i + 1) {
                let span = (next.start - s.end) as f64;
                let mut t = s.end + sample_s;
                while t < next.start {
                    let f = (t - s.end) as f64 / span;
                    let p = LonLat::new(s.pos.lon + f * (next.pos.lon - s.pos.lon), s.pos.lat + f * (next.pos.lat - s.pos.lat));
                    push(t, p, &mut pts);
                    t += sample_s;
                }
            }
        }
        pts
    }
}

impl SynthConfig {
    /// Every configuration problem, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        problems(self)
    }
}

fn problems(cfg: &SynthConfig) -> Vec<String> {
    let mut problems = Vec::new();
    if !(cfg.spacing_m.is_finite() && cfg.spacing_m > 0.0) {
        problems.push(format!("spacing_m must be positive, got {}", cfg.spacing_m));
    }
    if cfg.start.rem_euclid(86_400) != 0 {
        problems.push(format!("start must be a UTC midnight, got {}", cfg.start));
    }
    if cfg.agents == 0 {
        problems.push("agents must be at least 1".to_string());
    }
    if cfg.days == 0 {
        problems.push("days must be at least 1".to_string());
    }
    if cfg.sample_interval_s <= 0 || cfg.sample_interval_s > 120 {
        problems.push(format!("sample_interval_s must be in 1..=120, got {}", cfg.sample_interval_s));
    }
    if !(cfg.speed_mps.is_finite() && cfg.speed_mps >= 5.0) {
        problems.push(format!("speed_mps must be at least 5, got {}", cfg.speed_mps));
    }
    for (name, p) in [("weekday_visit_prob", cfg.weekday_visit_prob), ("weekend_visit_prob", cfg.weekend_visit_prob)] {
        if !(0.0..=1.0).contains(&p) {
            problems.push(format!("{name} must be in [0, 1], got {p}"));
        }
    }
    if cfg.mix.is_empty() || cfg.mix.iter().all(|m| m.weight == 0.0) {
        problems.push("mix needs at least one positive weight".to_string());
    }
    for m in &cfg.mix {
        if m.code.is_mandatory() {
            problems.push(format!("mix may only hold non-mandatory codes, got {}", m.code.get()));
        }
        if !(m.weight.is_finite() && m.weight >= 0.0) {
            problems.push(format!("mix weight for {} must be non-negative", m.code.get()));
        }
    }
    if !cfg.origin.is_valid() || cfg.origin.lat.abs() > 80.0 {
        problems.push("origin must be a valid coordinate away from the poles".to_string());
    }
    problems
}

fn pick_weighted<T: Copy, R: Rng>(rng: &mut R, items: &[(T, f64)]) -> Option<T> {
    let total: f64 = items.iter().map(|x| x.1).sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    for &(v, w) in items {
        if x < w {
            return Some(v);
        }
        x -= w;
    }
    items.last().map(|x| x.0)
}

/// Index into `candidates` of a POI whose distance from `from` lies in the band.
fn pick_in_band<R: Rng>(rng: &mut R, candidates: &[usize], positions: &[LonLat], from: LonLat, band: (f64, f64)) -> Option<usize> {
    let ok = |i: usize| {
        let d = haversine_m(from, positions[i]);
        d >= band.0 && d <= band.1
    };
    for _ in 0..64 {
        let &i = candidates.choose(rng)?;
        if ok(i) {
            return Some(i);
        }
    }
    let inside: Vec<usize> = candidates.iter().copied().filter(|&i| ok(i)).collect();
    inside.choose(rng).copied()
}

pub fn generate_synthetic_world(cfg: &SynthConfig, profile: &TemporalProfile) -> Result<SyntheticWorld, SynthError> {
    let problems = problems(cfg);
    if !problems.is_empty() {
        return Err(SynthError::Config(problems.join("; ")));
    }
    for m in &cfg.mix {
        if !profile.covers(m.code) {
            return Err(SynthError::Config(format!("profile lacks code {}", m.code.get())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let needed = 2 * cfg.agents + 12 * cfg.agents.max(25);
    let side = ((needed as f64).sqrt().ceil() as usize).max((MIN_GRID_EXTENT_M / cfg.spacing_m).ceil() as usize + 1);
    let half = (side as f64 - 1.0) * cfg.spacing_m / 2.0;
    let positions: Vec<LonLat> = (0..side * side)
        .map(|i| offset_m(cfg.origin, (i % side) as f64 * cfg.spacing_m - half, (i / side) as f64 * cfg.spacing_m - half))
        .collect();
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.shuffle(&mut rng);

    let mix_items: Vec<(u32, f64)> = cfg.mix.iter().map(|m| (u32::from(m.code.get()), m.weight)).collect();
    let present: Vec<ActivityCode> = cfg.mix.iter().filter(|m| m.weight > 0.0).map(|m| m.code).collect();
    let mut codes = vec![ActivityCode::SOMETHING_ELSE; positions.len()];
    let (homes, rest) = order.split_at(cfg.agents);
    let (works, pool) = rest.split_at(cfg.agents);
    for &i in homes {
        codes[i] = ActivityCode::HOME;
    }
    for &i in works {
        codes[i] = ActivityCode::WORK;
    }
    for (j, &i) in pool.iter().enumerate() {
        codes[i] = match present.get(j) {
            Some(&c) => c,
            None => code(pick_weighted(&mut rng, &mix_items).expect("positive mix").into()),
        };
    }
    let mut by_code: BTreeMap<ActivityCode, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        by_code.entry(codes[i]).or_default().push(i);
    }
    let top3: Vec<Top3> = codes.iter().map(|&c| synthetic_top3(c)).collect();

    let mut records = Vec::with_capacity(positions.len());
    let mut classifications = Vec::with_capacity(positions.len());
    let mut poi_truth = Vec::with_capacity(positions.len());
    for (i, (&p, &c)) in positions.iter().zip(&codes).enumerate() {
        let id = format!("poi-{i:06}");
        let (tag, value) = feature_tag(c);
        let features = BTreeMap::from([(tag.to_string(), value.to_string())]);
        records.push(PoiRecord::new(id.clone(), Some(format!("{} {i}", c.label())), p.lon, p.lat, features).expect("grid POI is valid"));
        classifications.push(PoiClassification {
            poi_id: id.clone(),
            top3: top3[i].clone(),
            raw_response: String::new(),
            reordered: false,
        });
        poi_truth.push(PoiTruth { poi_id: id, code: c });
    }
    let tags = ["amenity", "building", "landuse"].map(String::from).to_vec();
    let pois = PoiDataset::new("synthetic", tags, records).expect("unique ids");

    let minutes = |rng: &mut ChaCha8Rng, lo: i64, hi: i64| rng.gen_range(lo..hi) * 60;
    let mut trajectories = Vec::with_capacity(cfg.agents);
    let mut stay_truth = Vec::new();
    let mut skipped_visits = 0;
    for (a, &home_idx) in homes.iter().enumerate() {
        let home = positions[home_idx];
        let work = positions[pick_in_band(&mut rng, works, &positions, home, WORK_BAND_M)
            .or_else(|| {
                works.iter().copied().max_by(|&x, &y| {
                    haversine_m(home, positions[x]).total_cmp(&haversine_m(home, positions[y]))
                })
            })
            .expect("at least one work place")];
        let mut agent = Agent {
            cfg,
            stays: vec![Stay {
                pos: home,
                start: cfg.start,
                end: cfg.start,
                code: ActivityCode::HOME,
            }],
        };
        let visit = |agent: &mut Agent, rng: &mut ChaCha8Rng, day0: i64, hours: std::ops::RangeInclusive<usize>| {
            let c = code(pick_weighted(rng, &mix_items).expect("positive mix").into());
            let Some(poi) = by_code.get(&c).and_then(|list| pick_in_band(rng, list, &positions, home, VISIT_BAND_M)) else {
                return false;
            };
            let Some(hour) = pick_weighted(rng, &feasible_hours(c, &top3[poi], profile, hours)) else {
                return false;
            };
            // a transit sample just before arrival can open the stay early
            let start = day0 + hour as i64 * 3600 + rng.gen_range(agent.cfg.sample_interval_s..20 * 60);
            let travel = agent.travel_s(home, positions[poi]);
            if hour_of_day(start, 0) != hour || start - travel < agent.last().start + 20 * 60 {
                return false;
            }
            let end = start + minutes(rng, 30, 76);
            agent.go(start - travel, positions[poi], end, c);
            let back = end + agent.travel_s(positions[poi], home);
            agent.go(end, home, back, ActivityCode::HOME);
            true
        };
        for d in 0..i64::from(cfg.days) {
            let day0 = cfg.start + d * 86_400;
            if weekday(day0.div_euclid(86_400)) < 5 {
                let leave = day0 + 7 * 3600 + 45 * 60 + minutes(&mut rng, 0, 30);
                let off = day0 + 16 * 3600 + 30 * 60 + minutes(&mut rng, 0, 30);
                agent.go(leave, work, off, ActivityCode::WORK);
                let back = off + agent.travel_s(work, home);
                agent.go(off, home, back, ActivityCode::HOME);
                if rng.gen_bool(cfg.weekday_visit_prob) && !visit(&mut agent, &mut rng, day0, 18..=21) {
                    skipped_visits += 1;
                }
            } else {
                for hours in [9..=11, 15..=19] {
                    if rng.gen_bool(cfg.weekend_visit_prob) && !visit(&mut agent, &mut rng, day0, hours) {
                        skipped_visits += 1;
                    }
                }
            }
        }
        agent.stays.last_mut().expect("non-empty").end = cfg.start + i64::from(cfg.days) * 86_400;
        let person_id = format!("agent-{a:04}");
        stay_truth.extend(agent.stays.iter().map(|s| StayTruth {
            person_id: person_id.clone(),
            t_start: s.start,
            code: s.code,
        }));
        let traj = Trajectory::new(person_id, agent.render(cfg.sample_interval_s)).expect("rendered trace is valid");
        trajectories.push(traj);
    }
    Ok(SyntheticWorld {
        pois,
        classifications,
        poi_truth,
        trajectories,
        stay_truth,
        skipped_visits,
    })
}
