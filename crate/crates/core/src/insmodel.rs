//! Truth trajectories, simplified INS / gravimeter sensor models and the
//! navigation log that map-matching corrections are written into.
//!
//! Velocities are in degrees per hour, time steps in seconds, positions in
//! degrees. The INS is a pure dead-reckoner: it integrates measured velocity
//! from an anchor that is reset to the corrected position after every
//! matched segment.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LonLat;
use crate::mapgrid::GravityMap;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub position: LonLat,
    /// Velocity over the step that starts here, deg/h.
    pub velocity: LonLat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Constant velocity bias, deg/h per axis.
    pub bias: LonLat,
    /// Per-axis white velocity noise, deg/s.
    pub sigma_v: f64,
    /// Gravimeter noise, mGal.
    pub sigma_z: f64,
    /// Seconds between INS reports.
    pub dt: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v >= 0.0 && self.sigma_z >= 0.0) {
            return Err(Error::Config("sensor noise levels must be >= 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }
}

/// Straight legs in degree space at constant speed.
///
/// Each leg is walked in whole steps of `speed * dt / 3600` degrees; the next
/// leg starts where the previous one stopped, so the velocity changes exactly
/// once per waypoint and never mid-step. The returned list starts at the first
/// waypoint.
pub fn simulate_truth(waypoints: &[LonLat], speed: f64, dt: f64) -> Result<Vec<TruthState>> {
    if waypoints.len() < 2 {
        return Err(Error::Config("need at least two waypoints".into()));
    }
    if !(speed > 0.0 && dt > 0.0) {
        return Err(Error::Config("speed and dt must be positive".into()));
    }
    let step = speed * dt / SECONDS_PER_HOUR;
    let mut pos = waypoints[0];
    let mut out = Vec::new();
    for &target in &waypoints[1..] {
        let delta = target - pos;
        let len = delta.norm();
        let nsteps = (len / step).floor() as usize;
        if nsteps == 0 {
            continue;
        }
        let velocity = delta.scale(speed / len);
        let disp = velocity.scale(dt / SECONDS_PER_HOUR);
        let start = pos;
        for i in 0..nsteps {
            out.push(TruthState { position: start + disp.scale(i as f64), velocity });
        }
        pos = start + disp.scale(nsteps as f64);
    }
    let velocity = out.last().map_or(LonLat::default(), |s| s.velocity);
    out.push(TruthState { position: pos, velocity });
    Ok(out)
}

/// `v0 + b + eta`, with `eta ~ N(0, (3600 sigma_v)^2 I)` in deg/h.
pub fn measure_velocity<R: Rng + ?Sized>(truth: &TruthState, cfg: &SensorConfig, rng: &mut R) -> LonLat {
    let sd = cfg.sigma_v * SECONDS_PER_HOUR;
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    truth.velocity + cfg.bias + LonLat::new(nx * sd, ny * sd)
}

pub fn measure_gravity<R: Rng + ?Sized>(
    map: &GravityMap,
    truth_pos: LonLat,
    sigma_z: f64,
    rng: &mut R,
) -> Result<f64> {
    let g = map.lookup(truth_pos)?;
    let e: f64 = rng.sample(StandardNormal);
    Ok(g + e * sigma_z)
}

/// Position after each velocity step: `anchor + sum_{u<=t} v_u * dt / 3600`.
pub fn dead_reckon(anchor: LonLat, velocities: &[LonLat], dt: f64) -> Vec<LonLat> {
    let mut p = anchor;
    velocities
        .iter()
        .map(|v| {
            p = p + v.scale(dt / SECONDS_PER_HOUR);
            p
        })
        .collect()
}

/// Measurements and INS positions collected since the last correction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentBuffers {
    pub z: Vec<f64>,
    pub v: Vec<LonLat>,
    pub s_ins: Vec<LonLat>,
}

impl SegmentBuffers {
    pub fn new(z: Vec<f64>, v: Vec<LonLat>, s_ins: Vec<LonLat>) -> Result<Self> {
        if z.len() != v.len() || z.len() != s_ins.len() {
            return Err(Error::LengthMismatch { expected: z.len(), got: v.len().min(s_ins.len()) });
        }
        Ok(Self { z, v, s_ins })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn push(&mut self, z: f64, v: LonLat, s_ins: LonLat) {
        self.z.push(z);
        self.v.push(v);
        self.s_ins.push(s_ins);
    }

    pub fn clear(&mut self) {
        self.z.clear();
        self.v.clear();
        self.s_ins.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavRecord {
    pub truth: LonLat,
    /// Raw dead-reckoned position.
    pub ins: LonLat,
    pub corrected: Option<LonLat>,
    pub z: f64,
    pub velocity: LonLat,
}

impl NavRecord {
    /// Best available estimate: corrected if a segment covered this step.
    pub fn estimate(&self) -> LonLat {
        self.corrected.unwrap_or(self.ins)
    }
}

/// Per-step navigation history plus the open segment buffers.
#[derive(Debug, Clone)]
pub struct NavLog {
    dt: f64,
    anchor: LonLat,
    last_velocity: LonLat,
    records: Vec<NavRecord>,
    buffers: SegmentBuffers,
}

impl NavLog {
    /// `start` is the initial (exactly known) position and `v0` the velocity
    /// measured there.
    pub fn new(start: LonLat, v0: LonLat, dt: f64) -> Self {
        Self { dt, anchor: start, last_velocity: v0, records: Vec::new(), buffers: SegmentBuffers::default() }
    }

    pub fn records(&self) -> &[NavRecord] {
        &self.records
    }

    pub fn buffers(&self) -> &SegmentBuffers {
        &self.buffers
    }

    /// Where the INS will place the next step.
    pub fn next_ins_position(&self) -> LonLat {
        self.anchor + self.last_velocity.scale(self.dt / SECONDS_PER_HOUR)
    }

    /// Advances one step: dead-reckons, records and buffers the measurements.
    pub fn step(&mut self, truth: LonLat, z: f64, velocity: LonLat) -> LonLat {
        let ins = self.next_ins_position();
        self.records.push(NavRecord { truth, ins, corrected: None, z, velocity });
        self.buffers.push(z, velocity, ins);
        self.anchor = ins;
        self.last_velocity = velocity;
        ins
    }

    /// Replaces the INS estimates of the buffered segment with `path`, moves
    /// the dead-reckoning anchor to the final corrected position and flushes
    /// the buffers.
    pub fn apply_correction(&mut self, path: &[LonLat]) -> Result<()> {
        let t = self.buffers.len();
        if path.len() != t || t == 0 {
            return Err(Error::LengthMismatch { expected: t, got: path.len() });
        }
        let first = self.records.len() - t;
        for (rec, &p) in self.records[first..].iter_mut().zip(path) {
            rec.corrected = Some(p);
        }
        self.anchor = *path.last().unwrap();
        self.buffers.clear();
        Ok(())
    }

    /// Drops the open segment without correcting it.
    pub fn discard_segment(&mut self) {
        self.buffers.clear();
    }
}
