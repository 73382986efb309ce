//! Rule-based Home / Work / School labelling over one person's history.
//!
//! Stay points are first merged into places. Home is the place with the most
//! visits overlapping the off-hours window. School candidates are places near
//! a POI whose top classification is School. Work is the most-visited
//! remaining place during weekday work hours, at least `min_work_dist_m` from
//! Home, ties going to the place farther from Home. School is chosen the same
//! way among the school candidates. A place carries at most one label.

use serde::{Deserialize, Serialize};

use super::index::SpatialIndex;
use crate::activity::ActivityCode;
use crate::geo::{haversine_m, LonLat};
use crate::staypoint::StayPoint;

const DAY_S: i64 = 86_400;
const HOUR_S: i64 = 3_600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MandatoryParams {
    /// Stay points closer than this to a place's centroid join the place.
    pub place_radius_m: f64,
    pub off_hours_start: u32,
    pub off_hours_end: u32,
    pub work_hours_start: u32,
    pub work_hours_end: u32,
    pub min_work_dist_m: f64,
    /// Maximum distance from a place to an education POI.
    pub school_radius_m: f64,
    pub min_work_visits: usize,
}

impl Default for MandatoryParams {
    fn default() -> Self {
        Self {
            place_radius_m: 50.0,
            off_hours_start: 19,
            off_hours_end: 8,
            work_hours_start: 8,
            work_hours_end: 19,
            min_work_dist_m: 100.0,
            school_radius_m: 100.0,
            min_work_visits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub centroid: LonLat,
    /// Indices into the person's stay points.
    pub members: Vec<usize>,
}

/// Greedy clustering in time order: each stay joins the nearest place whose
/// running centroid lies within `radius_m`, otherwise it opens a new place.
/// Returns the places and each stay's place index.
pub fn cluster_places(stays: &[StayPoint], radius_m: f64) -> (Vec<Place>, Vec<usize>) {
    let mut places: Vec<Place> = Vec::new();
    let mut place_of = Vec::with_capacity(stays.len());
    for (i, s) in stays.iter().enumerate() {
        let p = s.position();
        let nearest = places
            .iter()
            .enumerate()
            .map(|(j, pl)| (j, haversine_m(pl.centroid, p)))
            .filter(|(_, d)| *d <= radius_m)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((j, _)) => {
                let pl = &mut places[j];
                let n = pl.members.len() as f64;
                pl.centroid = LonLat::new((pl.centroid.lon * n + p.lon) / (n + 1.0), (pl.centroid.lat * n + p.lat) / (n + 1.0));
                pl.members.push(i);
                place_of.push(j);
            }
            None => {
                place_of.push(places.len());
                places.push(Place {
                    centroid: p,
                    members: vec![i],
                });
            }
        }
    }
    (places, place_of)
}

/// Monday = 0 for a day number counted from the Unix epoch (a Thursday).
pub fn weekday(day: i64) -> i64 {
    (day + 3).rem_euclid(7)
}

/// Whether `[start, end]` overlaps a daily `[from_h, to_h)` window in local
/// time. Windows with `to_h <= from_h` run past midnight. With
/// `weekdays_only`, windows opening on Saturday or Sunday are ignored.
pub fn overlaps_daily_window(start: i64, end: i64, tz_offset_s: i64, from_h: u32, to_h: u32, weekdays_only: bool) -> bool {
    let (ls, le) = (start + tz_offset_s, end + tz_offset_s);
    let span = if to_h <= from_h { to_h as i64 + 24 - from_h as i64 } else { to_h as i64 - from_h as i64 };
    (ls.div_euclid(DAY_S) - 1..=le.div_euclid(DAY_S)).any(|day| {
        if weekdays_only && weekday(day) >= 5 {
            return false;
        }
        let ws = day * DAY_S + from_h as i64 * HOUR_S;
        let we = ws + span * HOUR_S;
        ls < we && le > ws
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceLabel {
    pub place: usize,
    pub activity: ActivityCode,
    /// Supporting education POI (index into the education index) for School.
    pub poi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MandatoryLabeling {
    pub places: Vec<Place>,
    pub place_of: Vec<usize>,
    pub labels: Vec<PlaceLabel>,
}

impl MandatoryLabeling {
    pub fn label_of_place(&self, place: usize) -> Option<&PlaceLabel> {
        self.labels.iter().find(|l| l.place == place)
    }

    pub fn label_of_stay(&self, stay: usize) -> Option<&PlaceLabel> {
        self.label_of_place(self.place_of[stay])
    }

    pub fn place_with(&self, activity: ActivityCode) -> Option<usize> {
        self.labels.iter().find(|l| l.activity == activity).map(|l| l.place)
    }
}

/// `education` indexes the POIs whose top-1 class is School.
pub fn infer_mandatory(
    stays: &[StayPoint],
    education: &SpatialIndex,
    params: &MandatoryParams,
    tz_offset_s: i64,
) -> MandatoryLabeling {
    if stays.is_empty() {
        return MandatoryLabeling::default();
    }
    let (places, place_of) = cluster_places(stays, params.place_radius_m);
    let count = |place: &Place, from: u32, to: u32, weekdays: bool| {
        place
            .members
            .iter()
            .filter(|&&i| overlaps_daily_window(stays[i].t_start, stays[i].t_end, tz_offset_s, from, to, weekdays))
            .count()
    };
    let off_counts: Vec<usize> = places
        .iter()
        .map(|p| count(p, params.off_hours_start, params.off_hours_end, false))
        .collect();
    let work_counts: Vec<usize> = places
        .iter()
        .map(|p| count(p, params.work_hours_start, params.work_hours_end, true))
        .collect();

    let mut labels = Vec::new();
    // max count, ties to the lower place index
    let home = (0..places.len())
        .filter(|&j| off_counts[j] > 0)
        .max_by(|&a, &b| off_counts[a].cmp(&off_counts[b]).then(b.cmp(&a)));
    if let Some(h) = home {
        labels.push(PlaceLabel {
            place: h,
            activity: ActivityCode::HOME,
            poi: None,
        });
    }
    let from_home = |j: usize| home.map(|h| haversine_m(places[h].centroid, places[j].centroid)).unwrap_or(0.0);

    let school_poi: Vec<Option<usize>> = places
        .iter()
        .map(|p| education.query(p.centroid, params.school_radius_m, 1).first().map(|n| n.index))
        .collect();

    let pick = |eligible: &dyn Fn(usize) -> bool| {
        (0..places.len())
            .filter(|&j| Some(j) != home && eligible(j))
            .max_by(|&a, &b| {
                work_counts[a]
                    .cmp(&work_counts[b])
                    .then(from_home(a).total_cmp(&from_home(b)))
                    .then(b.cmp(&a))
            })
    };
    let min_visits = params.min_work_visits.max(1);
    let work = pick(&|j| {
        school_poi[j].is_none() && work_counts[j] >= min_visits && (home.is_none() || from_home(j) >= params.min_work_dist_m)
    });
    if let Some(w) = work {
        labels.push(PlaceLabel {
            place: w,
            activity: ActivityCode::WORK,
            poi: None,
        });
    }
    let school = pick(&|j| Some(j) != work && school_poi[j].is_some() && work_counts[j] >= 1);
    if let Some(s) = school {
        labels.push(PlaceLabel {
            place: s,
            activity: ActivityCode::SCHOOL,
            poi: school_poi[s],
        });
    }
    MandatoryLabeling {
        places,
        place_of,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::offset_m;

    // 2017-05-01 00:00 UTC, a Monday
    const MONDAY: i64 = 1_493_596_800;
    const HOME: LonLat = LonLat { lon: -118.30, lat: 34.05 };

    fn stay(at: LonLat, day: i64, from_h: f64, to_h: f64) -> StayPoint {
        StayPoint {
            t_start: MONDAY + day * DAY_S + (from_h * 3600.0) as i64,
            t_end: MONDAY + day * DAY_S + (to_h * 3600.0) as i64,
            lon: at.lon,
            lat: at.lat,
        }
    }

    fn week(work: LonLat, weekend: bool) -> Vec<StayPoint> {
        let mut v = vec![stay(HOME, 0, 0.0, 8.5)];
        for d in 0..7 {
            let workday = d < 5;
            if workday {
                v.push(stay(work, d, 9.0, 17.0));
                v.push(stay(HOME, d, 17.5, 32.5));
            } else if weekend {
                v.push(stay(offset_m(HOME, 300.0, 0.0), d, 11.0, 12.0));
                v.push(stay(HOME, d, 12.5, 32.5));
            }
        }
        v
    }

    fn no_schools() -> SpatialIndex {
        SpatialIndex::new(vec![])
    }

    #[test]
    fn weekday_of_known_dates() {
        assert_eq!(weekday(MONDAY / DAY_S), 0);
        assert_eq!(weekday(0), 3);
    }

    #[test]
    fn window_overlap() {
        let p = MandatoryParams::default();
        let s = stay(HOME, 0, 9.0, 17.0);
        assert!(!overlaps_daily_window(s.t_start, s.t_end, 0, p.off_hours_start, p.off_hours_end, false));
        assert!(overlaps_daily_window(s.t_start, s.t_end, 0, p.work_hours_start, p.work_hours_end, true));
        let sat = stay(HOME, 5, 9.0, 17.0);
        assert!(!overlaps_daily_window(sat.t_start, sat.t_end, 0, 8, 19, true));
        let late = stay(HOME, 0, 23.0, 23.5);
        assert!(overlaps_daily_window(late.t_start, late.t_end, 0, 19, 8, false));
        let early = stay(HOME, 0, 6.0, 7.0);
        assert!(overlaps_daily_window(early.t_start, early.t_end, 0, 19, 8, false));
        // shifting to UTC-8 moves 09:00 UTC to 01:00 local
        assert!(overlaps_daily_window(s.t_start, s.t_start + 1800, -8 * 3600, 19, 8, false));
    }

    #[test]
    fn home_and_work_week() {
        let work = offset_m(HOME, 4000.0, 3000.0);
        let stays = week(work, true);
        let m = infer_mandatory(&stays, &no_schools(), &MandatoryParams::default(), 0);
        assert_eq!(m.labels.len(), 2);
        let h = m.place_with(ActivityCode::HOME).unwrap();
        let w = m.place_with(ActivityCode::WORK).unwrap();
        assert!(haversine_m(m.places[h].centroid, HOME) < 1.0);
        assert!(haversine_m(m.places[w].centroid, work) < 1.0);
        // the weekend café is neither
        let cafe_place = m.place_of[stays.iter().position(|s| s.t_start == MONDAY + 5 * DAY_S + 11 * 3600).unwrap()];
        assert_ne!(cafe_place, h);
        assert!(m.label_of_place(cafe_place).is_none());
    }

    #[test]
    fn weekend_data_does_not_matter() {
        let work = offset_m(HOME, 4000.0, 3000.0);
        let p = MandatoryParams::default();
        let with = infer_mandatory(&week(work, true), &no_schools(), &p, 0);
        let without = infer_mandatory(&week(work, false), &no_schools(), &p, 0);
        let centroid = |m: &MandatoryLabeling, a| m.places[m.place_with(a).unwrap()].centroid;
        for a in [ActivityCode::HOME, ActivityCode::WORK] {
            assert!(haversine_m(centroid(&with, a), centroid(&without, a)) < 1e-6);
        }
    }

    #[test]
    fn single_all_day_stay_is_home_only() {
        let m = infer_mandatory(&[stay(HOME, 0, 0.0, 23.9)], &no_schools(), &MandatoryParams::default(), 0);
        assert_eq!(m.labels, vec![PlaceLabel { place: 0, activity: ActivityCode::HOME, poi: None }]);
    }

    #[test]
    fn empty_history() {
        let m = infer_mandatory(&[], &no_schools(), &MandatoryParams::default(), 0);
        assert!(m.labels.is_empty());
    }

    #[test]
    fn school_next_to_education_poi() {
        let school_site = offset_m(HOME, 2000.0, 0.0);
        let stays = vec![stay(HOME, 0, 0.0, 7.5), stay(school_site, 0, 8.0, 15.0), stay(HOME, 0, 15.5, 23.0)];
        let education = SpatialIndex::new(vec![offset_m(school_site, 20.0, 10.0)]);
        let m = infer_mandatory(&stays, &education, &MandatoryParams::default(), 0);
        assert_eq!(m.label_of_stay(1).map(|l| (l.activity, l.poi)), Some((ActivityCode::SCHOOL, Some(0))));
        assert_eq!(m.label_of_stay(0).map(|l| l.activity), Some(ActivityCode::HOME));
        assert!(m.place_with(ActivityCode::WORK).is_none());
    }

    #[test]
    fn work_ties_go_to_the_farther_place() {
        let near = offset_m(HOME, 500.0, 0.0);
        let far = offset_m(HOME, 5000.0, 0.0);
        let stays = vec![stay(HOME, 0, 0.0, 8.0), stay(near, 0, 9.0, 12.0), stay(far, 0, 13.0, 17.0), stay(HOME, 0, 18.0, 23.0)];
        let m = infer_mandatory(&stays, &no_schools(), &MandatoryParams::default(), 0);
        assert_eq!(m.label_of_stay(2).map(|l| l.activity), Some(ActivityCode::WORK));
        assert!(m.label_of_stay(1).is_none());
    }

    #[test]
    fn work_must_be_away_from_home() {
        let next_door = offset_m(HOME, 70.0, 0.0);
        let stays = vec![stay(HOME, 0, 0.0, 8.0), stay(next_door, 0, 9.0, 12.0), stay(HOME, 0, 18.0, 23.0)];
        let m = infer_mandatory(&stays, &no_schools(), &MandatoryParams::default(), 0);
        assert!(m.place_with(ActivityCode::WORK).is_none());
    }
}
