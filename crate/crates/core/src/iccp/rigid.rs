//! 2-D rigid transforms and their closed-form least-squares fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LonLat;

/// `p -> R(theta) p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub theta: f64,
    pub translation: LonLat,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform { theta: 0.0, translation: LonLat::new(0.0, 0.0) };

    fn rotate(theta: f64, p: LonLat) -> LonLat {
        let (s, c) = theta.sin_cos();
        LonLat::new(c * p.lon - s * p.lat, s * p.lon + c * p.lat)
    }

    pub fn apply(&self, p: LonLat) -> LonLat {
        Self::rotate(self.theta, p) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform {
            theta: -self.theta,
            translation: Self::rotate(-self.theta, self.translation).scale(-1.0),
        }
    }

    /// `self` after `first`.
    pub fn after(&self, first: &RigidTransform) -> RigidTransform {
        let theta = wrap(self.theta + first.theta);
        RigidTransform { theta, translation: self.apply(first.translation) }
    }
}

fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::TAU);
    if t > std::f64::consts::PI {
        t - std::f64::consts::TAU
    } else {
        t
    }
}

/// Rotation and translation minimising `sum |R src_i + t - dst_i|^2`.
pub fn fit_rigid(src: &[LonLat], dst: &[LonLat]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch { expected: src.len(), got: dst.len() });
    }
    if src.len() < 2 {
        return Err(Error::Degenerate("need at least two point pairs"));
    }
    let k = 1.0 / src.len() as f64;
    let cs = src.iter().fold(LonLat::default(), |a, &p| a + p).scale(k);
    let cd = dst.iter().fold(LonLat::default(), |a, &p| a + p).scale(k);
    if src.iter().all(|&p| p == src[0]) {
        return Err(Error::Degenerate("all source points coincide"));
    }
    let (mut dot, mut cross) = (0.0, 0.0);
    for (&s, &d) in src.iter().zip(dst) {
        let (s, d) = (s - cs, d - cd);
        dot += s.lon * d.lon + s.lat * d.lat;
        cross += s.lon * d.lat - s.lat * d.lon;
    }
    let theta = cross.atan2(dot);
    let translation = cd - RigidTransform::rotate(theta, cs);
    Ok(RigidTransform { theta, translation })
}
