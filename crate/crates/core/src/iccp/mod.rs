//! Iterative closest contour point (ICCP) baseline.
//!
//! The INS segment is moved rigidly until each point lies as close as
//! possible to the iso-contour of its own gravity measurement. Contours are
//! taken from the n x n window around each INS position and held fixed for
//! the whole iteration, which makes the squared-distance objective a
//! non-increasing sequence.

mod contour;
mod rigid;

pub use contour::{extract_contour, Segment};
pub use rigid::{fit_rigid, RigidTransform};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LonLat;
use crate::insmodel::SegmentBuffers;
use crate::mapgrid::GravityMap;
use crate::matcher::build_windows;

/// Iso-contour segments for each time step of a segment.
#[derive(Debug, Clone, Default)]
pub struct ContourSet {
    pub per_step: Vec<Vec<Segment>>,
}

impl ContourSet {
    /// Contours of `z_t` inside the window around each `s_ins_t`.
    pub fn extract(map: &GravityMap, buffers: &SegmentBuffers, n: usize) -> Result<Self> {
        let windows = build_windows(map, buffers, n)?;
        let per_step = windows.iter().zip(&buffers.z).map(|(w, &z)| extract_contour(w, z)).collect();
        Ok(ContourSet { per_step })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccpParams {
    pub max_iter: usize,
    /// Stop once the largest point displacement of an update falls below this (degrees).
    pub tol: f64,
}

impl Default for IccpParams {
    fn default() -> Self {
        IccpParams { max_iter: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccpResult {
    pub positions: Vec<LonLat>,
    /// Accumulated transform taking the INS segment onto `positions`.
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Sum of squared closest-point distances at the start of each iteration.
    pub objective: Vec<f64>,
    /// Sum of closest-point distances at the start of each iteration.
    pub distance_sum: Vec<f64>,
}

/// Nearest contour point to each trajectory point.
pub fn closest_points(traj: &[LonLat], contours: &ContourSet) -> Result<Vec<LonLat>> {
    if traj.len() != contours.per_step.len() {
        return Err(Error::LengthMismatch { expected: contours.per_step.len(), got: traj.len() });
    }
    traj.iter()
        .zip(&contours.per_step)
        .enumerate()
        .map(|(t, (&p, segs))| {
            let mut best: Option<(f64, LonLat)> = None;
            for s in segs {
                let q = s.project(p);
                let d = (q - p).norm();
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, q));
                }
            }
            best.map(|b| b.1).ok_or(Error::NoContour(t + 1))
        })
        .collect()
}

/// Aligns the INS segment in `buffers` to the measurement contours of `map`.
pub fn iccp_match(buffers: &SegmentBuffers, map: &GravityMap, n: usize, params: IccpParams) -> Result<IccpResult> {
    if buffers.len() < 2 {
        return Err(Error::Degenerate("ICCP needs at least two points"));
    }
    let contours = ContourSet::extract(map, buffers, n)?;
    iccp_on_contours(&buffers.s_ins, &contours, params)
}

pub(crate) fn iccp_on_contours(start: &[LonLat], contours: &ContourSet, params: IccpParams) -> Result<IccpResult> {
    let mut traj = start.to_vec();
    let mut total = RigidTransform::IDENTITY;
    let mut objective = Vec::new();
    let mut distance_sum = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let targets = closest_points(&traj, contours)?;
        let (sq, lin) = traj.iter().zip(&targets).fold((0.0, 0.0), |(sq, lin), (&p, &q)| {
            let d = (q - p).norm();
            (sq + d * d, lin + d)
        });
        objective.push(sq);
        distance_sum.push(lin);
        let update = fit_rigid(&traj, &targets)?;
        let moved: Vec<LonLat> = traj.iter().map(|&p| update.apply(p)).collect();
        let shift = traj.iter().zip(&moved).map(|(&a, &b)| (b - a).norm()).fold(0.0, f64::max);
        traj = moved;
        total = update.after(&total);
        if shift < params.tol {
            break;
        }
    }
    Ok(IccpResult { positions: traj, transform: total, iterations, objective, distance_sum })
}
