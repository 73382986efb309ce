//! Radius + k-nearest queries over POI positions.

use rstar::primitives::GeomWithData;
use rstar::{RTree, AABB};

use crate::geo::{haversine_m, LonLat, EARTH_RADIUS_M};

type Entry = GeomWithData<[f64; 2], usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position in the slice the index was built from.
    pub index: usize,
    pub distance_m: f64,
}

/// R-tree over lon/lat degrees. Queries prefilter with a bounding box that
/// contains the whole spherical cap, then keep points whose haversine distance
/// is within the radius.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    tree: RTree<Entry>,
    positions: Vec<LonLat>,
}

const BOX_SLACK_DEG: f64 = 1e-9;

impl SpatialIndex {
    pub fn new(positions: Vec<LonLat>) -> Self {
        let entries = positions
            .iter()
            .enumerate()
            .map(|(i, p)| Entry::new([p.lon, p.lat], i))
            .collect();
        Self {
            tree: RTree::bulk_load(entries),
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, index: usize) -> LonLat {
        self.positions[index]
    }

    /// Points within `radius_m`, nearest first (ties by index), at most `k`.
    pub fn query(&self, center: LonLat, radius_m: f64, k: usize) -> Vec<Neighbor> {
        if k == 0 || radius_m < 0.0 {
            return Vec::new();
        }
        let mut hits: Vec<Neighbor> = self
            .tree
            .locate_in_envelope(&search_box(center, radius_m))
            .filter_map(|e| {
                let distance_m = haversine_m(center, self.positions[e.data]);
                (distance_m <= radius_m).then_some(Neighbor { index: e.data, distance_m })
            })
            .collect();
        sort_neighbors(&mut hits);
        hits.truncate(k);
        hits
    }

    /// Reference implementation used to check [`SpatialIndex::query`].
    pub fn linear_scan(positions: &[LonLat], center: LonLat, radius_m: f64, k: usize) -> Vec<Neighbor> {
        let mut hits: Vec<Neighbor> = positions
            .iter()
            .enumerate()
            .filter_map(|(index, p)| {
                let distance_m = haversine_m(center, *p);
                (distance_m <= radius_m).then_some(Neighbor { index, distance_m })
            })
            .collect();
        sort_neighbors(&mut hits);
        hits.truncate(k);
        hits
    }
}

fn sort_neighbors(hits: &mut [Neighbor]) {
    hits.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.index.cmp(&b.index)));
}

fn search_box(center: LonLat, radius_m: f64) -> AABB<[f64; 2]> {
    let angle = radius_m / EARTH_RADIUS_M;
    let dlat = angle.to_degrees() + BOX_SLACK_DEG;
    let lat_lo = (center.lat - dlat).max(-90.0);
    let lat_hi = (center.lat + dlat).min(90.0);
    let max_abs_lat = lat_lo.abs().max(lat_hi.abs());
    // sin(dlon/2) <= sin(angle/2) / cos(lat) for every point of the cap.
    let s = (angle / 2.0).sin() / max_abs_lat.to_radians().cos();
    let (lon_lo, lon_hi) = if angle >= std::f64::consts::PI / 2.0 || s >= 1.0 || max_abs_lat >= 90.0 {
        (-180.0, 180.0)
    } else {
        let dlon = (2.0 * s.asin()).to_degrees() + BOX_SLACK_DEG;
        if center.lon - dlon < -180.0 || center.lon + dlon > 180.0 {
            (-180.0, 180.0)
        } else {
            (center.lon - dlon, center.lon + dlon)
        }
    };
    AABB::from_corners([lon_lo, lat_lo], [lon_hi, lat_hi])
}
