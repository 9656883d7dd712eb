//! Planar degree-space positions and the great-circle error metric.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Mean Earth radius used for Haversine distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Kilometres spanned by one degree of arc on the equator, `pi * R / 180`.
pub const KM_PER_DEGREE: f64 = 111.195;

/// A longitude/latitude pair in degrees.
///
/// Also used as a plain 2-vector for displacements, since every window
/// computation happens in flat degree space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.lon * k, self.lat * k)
    }

    pub fn norm(self) -> f64 {
        self.lon.hypot(self.lat)
    }

    /// Euclidean distance in degree space.
    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.lon.is_finite() && self.lat.is_finite()
    }
}

impl Add for LonLat {
    type Output = LonLat;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.lon + rhs.lon, self.lat + rhs.lat)
    }
}

impl Sub for LonLat {
    type Output = LonLat;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.lon - rhs.lon, self.lat - rhs.lat)
    }
}

/// Great-circle distance in km on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}
