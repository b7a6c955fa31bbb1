//! Geographic coordinates, haversine distance and radius proximity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude on the sphere.
const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Point a fraction `f` of the way along the straight chord to `other`.
    pub fn lerp(self, other: LatLon, f: f64) -> LatLon {
        LatLon {
            lat: self.lat + f * (other.lat - self.lat),
            lon: self.lon + f * (other.lon - self.lon),
        }
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// All pairs `(i, j)`, `i < j`, with `haversine(points[i], points[j]) <=
/// radius_m`, sorted.
///
/// Points are bucketed into cells at least `radius_m` wide in both
/// directions; the longitude width is stretched for the highest latitude
/// present so cells stay wide enough everywhere.
pub fn proximity_pairs(points: &[LatLon], radius_m: f64) -> Vec<(u32, u32)> {
    if points.len() < 2 {
        return Vec::new();
    }
    let lat_cell = radius_m / METERS_PER_DEGREE;
    let max_abs_lat = points
        .iter()
        .map(|p| p.lat.abs())
        .fold(0.0, f64::max)
        .min(89.0);
    let lon_cell = lat_cell / max_abs_lat.to_radians().cos();
    let key = |p: LatLon| {
        (
            (p.lat / lat_cell).floor() as i64,
            (p.lon / lon_cell).floor() as i64,
        )
    };

    let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i as u32);
    }
    let mut out = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let (cy, cx) = key(p);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = cells.get(&(cy + dy, cx + dx)) else {
                    continue;
                };
                for &j in bucket {
                    if j as usize > i && haversine(p, points[j as usize]) <= radius_m {
                        out.push((i as u32, j));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}
