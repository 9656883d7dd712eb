//! Single simulated flights: truth, INS, periodic map-matching corrections.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geo::{haversine_km, LonLat};
use crate::iccp::iccp_match;
use crate::insmodel::{measure_gravity, measure_velocity, simulate_truth, NavLog, NavRecord, SegmentBuffers, TruthState};
use crate::mapgrid::GravityMap;
use crate::matcher::{build_windows, greedy, viterbi, MatchConfig};

use super::scenario::{Algorithm, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    /// Haversine error of the best estimate at steps `1..=L`.
    pub errors_km: Vec<f64>,
    /// Leading steps covered by a correction attempt; only these decide divergence.
    pub checked_steps: usize,
    /// Segments the matcher could not process (window off the map, no contour).
    pub failures: usize,
    pub success: bool,
    /// Deterministic matcher cost counter (transition evaluations, or ICCP point updates).
    pub work: u64,
    /// Matcher wall time; omitted from reports unless timing is requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Per-step Haversine distances.
pub fn error_k(truth: &[LonLat], corrected: &[LonLat]) -> Result<Vec<f64>> {
    if truth.len() != corrected.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: corrected.len() });
    }
    Ok(truth.iter().zip(corrected).map(|(&a, &b)| haversine_km(a, b)).collect())
}

/// A run succeeds when the matcher never failed and every checked step
/// stayed strictly inside `threshold_km`.
pub fn divergence_check(result: &RunResult, threshold_km: f64) -> bool {
    result.failures == 0 && result.errors_km[..result.checked_steps].iter().all(|&e| e < threshold_km)
}

/// Corrected positions for one buffered segment plus the work spent.
pub fn match_segment(
    algorithm: Algorithm,
    map: &GravityMap,
    buffers: &SegmentBuffers,
    scenario: &Scenario,
    exec: Execution,
) -> Result<(Vec<LonLat>, u64)> {
    let cfg = MatchConfig { exec, ..scenario.match_config() };
    let matched = match algorithm {
        Algorithm::None => return Ok((buffers.s_ins.clone(), 0)),
        Algorithm::Iccp => {
            let r = iccp_match(buffers, map, cfg.n, scenario.iccp_params())?;
            return Ok((r.positions, (r.iterations * buffers.len()) as u64));
        }
        Algorithm::Vbmp => {
            let windows = build_windows(map, buffers, cfg.n)?;
            greedy::greedy_match(&windows, buffers, &MatchConfig { alpha: 0.0, o: 1, ..cfg })?
        }
        Algorithm::Rvbmp => {
            let windows = build_windows(map, buffers, cfg.n)?;
            greedy::greedy_match(&windows, buffers, &MatchConfig { o: 1, ..cfg })?
        }
        Algorithm::Rvbmp2 => {
            let windows = build_windows(map, buffers, cfg.n)?;
            greedy::greedy_match(&windows, buffers, &cfg)?
        }
        Algorithm::ViterbiExact => {
            let windows = build_windows(map, buffers, cfg.n)?;
            viterbi::viterbi_match(&windows, buffers, &cfg)?
        }
    };
    Ok((matched.path.positions(), matched.stats.transitions))
}

/// A scenario with its map and true trajectory built once, ready for many runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub map: GravityMap,
    pub truth: Vec<TruthState>,
    pub threshold_km: f64,
}

impl Prepared {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_map(scenario, scenario.build_map()?)
    }

    pub fn with_map(scenario: &Scenario, map: GravityMap) -> Result<Self> {
        scenario.validate()?;
        let mut truth = simulate_truth(&scenario.waypoints, scenario.speed_deg_per_hr, scenario.dt_s)?;
        if let Some(steps) = scenario.steps {
            if steps + 1 > truth.len() {
                return Err(Error::Config(format!(
                    "steps={steps} exceeds the route length of {} steps",
                    truth.len() - 1
                )));
            }
            truth.truncate(steps + 1);
        }
        if truth.len() < 2 {
            return Err(Error::Config("route is shorter than one step".into()));
        }
        for s in &truth {
            map.nearest_cell(s.position)?;
        }
        let threshold_km = scenario.divergence_threshold_km(&map);
        Ok(Prepared { scenario: scenario.clone(), map, truth, threshold_km })
    }

    /// Number of steps after the start.
    pub fn steps(&self) -> usize {
        self.truth.len() - 1
    }

    /// One flight with its own noise realisation.
    pub fn run(&self, seed: u64, exec: Execution) -> Result<RunResult> {
        Ok(self.trace(seed, exec)?.0)
    }

    /// Like [`Prepared::run`], also returning the per-step navigation records.
    pub fn trace(&self, seed: u64, exec: Execution) -> Result<(RunResult, Vec<NavRecord>)> {
        let sc = &self.scenario;
        let sensor = sc.sensor_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v0 = measure_velocity(&self.truth[0], &sensor, &mut rng);
        let mut nav = NavLog::new(self.truth[0].position, v0, sc.dt_s);
        let mut failures = 0;
        let mut work = 0u64;
        let mut elapsed = 0.0;
        for state in &self.truth[1..] {
            let z = measure_gravity(&self.map, state.position, sensor.sigma_z, &mut rng)?;
            let v = measure_velocity(state, &sensor, &mut rng);
            nav.step(state.position, z, v);
            if nav.buffers().len() == sc.t {
                if sc.algorithm == Algorithm::None {
                    nav.discard_segment();
                    continue;
                }
                let started = Instant::now();
                let outcome = match_segment(sc.algorithm, &self.map, nav.buffers(), sc, exec);
                elapsed += started.elapsed().as_secs_f64();
                match outcome {
                    Ok((path, w)) => {
                        work += w;
                        nav.apply_correction(&path)?;
                    }
                    Err(Error::WindowClipped { .. } | Error::NoContour(_) | Error::OutOfBounds { .. }) => {
                        failures += 1;
                        nav.discard_segment();
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let truth: Vec<LonLat> = nav.records().iter().map(|r| r.truth).collect();
        let est: Vec<LonLat> = nav.records().iter().map(|r| r.estimate()).collect();
        let errors_km = error_k(&truth, &est)?;
        let checked_steps = match sc.algorithm {
            Algorithm::None => errors_km.len(),
            _ => errors_km.len() / sc.t * sc.t,
        };
        let mut result = RunResult {
            seed,
            errors_km,
            checked_steps,
            failures,
            success: false,
            work,
            wall_time_s: Some(elapsed),
        };
        result.success = divergence_check(&result, self.threshold_km);
        Ok((result, nav.records().to_vec()))
    }
}

/// Builds the scenario and performs a single run.
pub fn run_once(scenario: &Scenario, seed: u64) -> Result<RunResult> {
    Prepared::new(scenario)?.run(seed, scenario.exec)
}
