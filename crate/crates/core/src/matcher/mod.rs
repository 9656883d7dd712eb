//! HMM map matching over windows of map cells.
//!
//! Hidden states at time `t` are the (cell, sub-cell) pairs of window `B_t`.
//! The segment log-posterior of a state sequence is
//!
//! ```text
//! meas(1) + sum_{t>=2} [ meas(t) + trans(t) ]
//! ```
//!
//! with a Gaussian gravimeter likelihood and an isotropic Gaussian over the
//! one-step displacement predicted from INS velocity. Every matcher sums the
//! terms in exactly this order, so identical paths carry bit-identical scores.
//!
//! Three solvers share that objective:
//! * [`greedy`]: one chain per start state, each step conditioned only on the
//!   previously chosen state, then the best chain wins (VBMP / RVBMP / RVBMP-2)
//! * [`viterbi`]: the exact trellis dynamic program
//! * [`brute`]: exhaustive enumeration, used as a test oracle

pub mod brute;
pub mod greedy;
pub mod viterbi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geo::LonLat;
use crate::insmodel::SegmentBuffers;
use crate::mapgrid::{subcell_offset, GravityMap, GridWindow};

pub use brute::{brute_force_map, sequence_count};
pub use greedy::{greedy_chain, rvbmp, rvbmp2, vbmp};
pub use viterbi::viterbi_exact;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log-posterior gap below which two paths count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Segment length `T`.
    pub segment_len: usize,
    /// Window size (odd).
    pub n: usize,
    /// Sub-cell factor (odd); 1 disables the second layer.
    pub o: usize,
    /// Relative-likelihood pruning threshold in `[0, 1]`.
    pub alpha: f64,
    /// Gravimeter noise, mGal.
    pub sigma_z: f64,
    /// Velocity noise, deg/s.
    pub sigma_v: f64,
    /// Seconds between steps.
    pub dt: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 2 {
            return Err(Error::Config("segment length T must be >= 2".into()));
        }
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(Error::Config(format!("window size n must be odd and >= 3, got {}", self.n)));
        }
        if self.o == 0 || self.o.is_multiple_of(2) {
            return Err(Error::Config(format!("sub-cell factor o must be odd and >= 1, got {}", self.o)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateState {
    /// 1-based time index within the segment.
    pub t: usize,
    /// 1-based cell label.
    pub j: usize,
    /// 1-based sub-cell label.
    pub l: usize,
    pub position: LonLat,
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub states: Vec<CandidateState>,
    pub log_posterior: f64,
}

impl PathEstimate {
    pub fn positions(&self) -> Vec<LonLat> {
        self.states.iter().map(|s| s.position).collect()
    }

    pub fn labels(&self) -> Vec<(usize, usize)> {
        self.states.iter().map(|s| (s.j, s.l)).collect()
    }

    /// Sum of degree-space distances to the INS track; the path-level tie-break.
    pub fn ins_distance(&self, s_ins: &[LonLat]) -> f64 {
        ins_distance(self.states.iter().map(|s| s.position), s_ins)
    }
}

fn ins_distance(positions: impl Iterator<Item = LonLat>, s_ins: &[LonLat]) -> f64 {
    positions.zip(s_ins).map(|(p, &s)| p.dist(s)).sum()
}

/// Surviving cell labels per time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedIndexSets {
    pub sets: Vec<Vec<usize>>,
}

impl PrunedIndexSets {
    /// Every label of every window.
    pub fn full(windows: &[GridWindow]) -> Self {
        Self { sets: windows.iter().map(|w| (1..=w.len()).collect()).collect() }
    }

    /// `sum_t |A_t| * |A_{t+1}|`, counted over (cell, sub-cell) states.
    pub fn pair_work(&self, o: usize) -> u64 {
        let o2 = (o * o) as u64;
        self.sets
            .windows(2)
            .map(|w| w[0].len() as u64 * o2 * w[1].len() as u64 * o2)
            .sum()
    }
}

/// Counters describing how much work one segment match did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    /// Candidate chains (greedy) or trellis columns' start states (exact).
    pub chains: u64,
    /// Transition likelihoods actually evaluated.
    pub transitions: u64,
    /// `sum_t |A_t| |A_{t+1}|` over (cell, sub-cell) states.
    pub pair_work: u64,
}

impl std::ops::AddAssign for MatchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.chains += rhs.chains;
        self.transitions += rhs.transitions;
        self.pair_work += rhs.pair_work;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matched {
    pub path: PathEstimate,
    pub stats: MatchStats,
}

/// Gaussian log-density of measurement `z` given map value `g`.
pub fn meas_loglik(z: f64, g: f64, sigma_z: f64) -> Result<f64> {
    if !(sigma_z > 0.0 && sigma_z.is_finite()) {
        return Err(Error::DegenerateSigma(sigma_z));
    }
    let r = z - g;
    Ok(-0.5 * LN_2PI - sigma_z.ln() - r * r / (2.0 * sigma_z * sigma_z))
}

/// Log-density of moving to `next` from `prev` under velocity `v` (deg/h):
/// isotropic normal with mean `prev + v dt / 3600` and per-axis std
/// `sigma_v * dt` degrees.
pub fn trans_loglik(next: LonLat, prev: LonLat, v: LonLat, dt: f64, sigma_v: f64) -> Result<f64> {
    let k = TransitionKernel::new(sigma_v, dt)?;
    Ok(k.eval(next, k.mean(prev, v)))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TransitionKernel {
    scale: f64,
    peak: f64,
    inv_two_var: f64,
}

impl TransitionKernel {
    pub(crate) fn new(sigma_v: f64, dt: f64) -> Result<Self> {
        let s = sigma_v * dt;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateSigma(sigma_v));
        }
        Ok(Self { scale: dt / 3600.0, peak: -LN_2PI - 2.0 * s.ln(), inv_two_var: 1.0 / (2.0 * s * s) })
    }

    #[inline]
    pub(crate) fn mean(&self, prev: LonLat, v: LonLat) -> LonLat {
        LonLat::new(prev.lon + v.lon * self.scale, prev.lat + v.lat * self.scale)
    }

    #[inline]
    pub(crate) fn eval(&self, next: LonLat, mean: LonLat) -> f64 {
        let dx = next.lon - mean.lon;
        let dy = next.lat - mean.lat;
        self.peak - (dx * dx + dy * dy) * self.inv_two_var
    }
}

/// Relative-likelihood pruning: labels whose measurement likelihood is at
/// least `alpha` times the window maximum. Always contains the best label.
pub fn prune(window: &GridWindow, z: f64, cfg: &MatchConfig) -> Result<Vec<usize>> {
    let ll = window
        .cells
        .iter()
        .map(|c| meas_loglik(z, c.gravity, cfg.sigma_z))
        .collect::<Result<Vec<_>>>()?;
    Ok(prune_loglik(&ll, cfg.alpha))
}

fn prune_loglik(ll: &[f64], alpha: f64) -> Vec<usize> {
    let best = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = alpha.ln();
    ll.iter()
        .enumerate()
        .filter(|&(_, &x)| x - best >= floor)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Windows around each buffered INS position.
pub fn build_windows(map: &GravityMap, buffers: &SegmentBuffers, n: usize) -> Result<Vec<GridWindow>> {
    buffers
        .s_ins
        .iter()
        .enumerate()
        .map(|(t, &s)| map.build_window(t + 1, s, n))
        .collect()
}

/// Picks the best candidate given `(log_posterior, ins_distance)` pairs in
/// label order: the maximum log-posterior, ties within [`TIE_TOLERANCE`]
/// resolved by INS proximity, then by order.
pub(crate) fn pick_best(scores: &[(f64, f64)]) -> Option<usize> {
    let top = scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for (i, &(lp, d)) in scores.iter().enumerate() {
        if lp >= top - TIE_TOLERANCE && best.is_none_or(|b| d < scores[b].1) {
            best = Some(i);
        }
    }
    best
}

/// Start selection over completed candidate chains.
pub fn select_start(chains: Vec<PathEstimate>, buffers: &SegmentBuffers) -> Result<PathEstimate> {
    let scores: Vec<(f64, f64)> = chains
        .iter()
        .map(|c| (c.log_posterior, c.ins_distance(&buffers.s_ins)))
        .collect();
    let i = pick_best(&scores).ok_or(Error::EmptyCandidates)?;
    Ok(chains.into_iter().nth(i).unwrap())
}

/// Precomputed per-segment quantities shared by all solvers.
pub(crate) struct SegmentModel<'a> {
    pub windows: &'a [GridWindow],
    pub buffers: &'a SegmentBuffers,
    pub o: usize,
    pub exec: Execution,
    /// `meas[t][j - 1]`
    pub meas: Vec<Vec<f64>>,
    pub allowed: PrunedIndexSets,
    pub kernel: TransitionKernel,
}

impl<'a> SegmentModel<'a> {
    pub fn new(
        windows: &'a [GridWindow],
        buffers: &'a SegmentBuffers,
        allowed: Option<PrunedIndexSets>,
        cfg: &MatchConfig,
    ) -> Result<Self> {
        if windows.is_empty() || windows.len() != buffers.len() {
            return Err(Error::LengthMismatch { expected: buffers.len(), got: windows.len() });
        }
        if cfg.o == 0 || cfg.o.is_multiple_of(2) {
            return Err(Error::Config(format!("sub-cell factor o must be odd, got {}", cfg.o)));
        }
        let meas = windows
            .iter()
            .zip(&buffers.z)
            .map(|(w, &z)| w.cells.iter().map(|c| meas_loglik(z, c.gravity, cfg.sigma_z)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let allowed = match allowed {
            Some(a) => {
                if a.sets.len() != windows.len() {
                    return Err(Error::LengthMismatch { expected: windows.len(), got: a.sets.len() });
                }
                if a.sets.iter().any(|s| s.is_empty()) {
                    return Err(Error::EmptyCandidates);
                }
                a
            }
            None => PrunedIndexSets { sets: meas.iter().map(|ll| prune_loglik(ll, cfg.alpha)).collect() },
        };
        Ok(Self {
            windows,
            buffers,
            o: cfg.o,
            exec: cfg.exec,
            meas,
            allowed,
            kernel: TransitionKernel::new(cfg.sigma_v, cfg.dt)?,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    /// Sub-cell centre of `(j, l)` at time index `t` (0-based).
    #[inline]
    pub fn position(&self, t: usize, j: usize, l: usize) -> LonLat {
        let w = &self.windows[t];
        let h = (self.o / 2) as isize;
        let kr = ((l - 1) / self.o) as isize - h;
        let kc = ((l - 1) % self.o) as isize - h;
        subcell_offset(w.cell(j).position, kr, kc, w.res_lon, w.res_lat, self.o)
    }

    /// Predicted mean for step `t` (0-based, `t >= 1`) from `prev`.
    #[inline]
    pub fn predict(&self, t: usize, prev: LonLat) -> LonLat {
        self.kernel.mean(prev, self.buffers.v[t - 1])
    }

    /// `meas(t) + trans(t)` for moving into `(j, l)` at `t` given the predicted mean.
    #[inline]
    pub fn step_score(&self, t: usize, j: usize, pos: LonLat, mean: LonLat) -> f64 {
        self.meas[t][j - 1] + self.kernel.eval(pos, mean)
    }

    /// (cell, sub-cell) states admissible at `t`, in label order.
    pub fn states(&self, t: usize) -> Vec<(usize, usize)> {
        let o2 = self.o * self.o;
        self.allowed.sets[t]
            .iter()
            .flat_map(|&j| (1..=o2).map(move |l| (j, l)))
            .collect()
    }

    /// Canonical log-posterior of a label sequence.
    pub fn score(&self, labels: &[(usize, usize)]) -> f64 {
        let (j0, _) = labels[0];
        let mut acc = self.meas[0][j0 - 1];
        let mut prev = self.position(0, labels[0].0, labels[0].1);
        for (t, &(j, l)) in labels.iter().enumerate().skip(1) {
            let pos = self.position(t, j, l);
            acc += self.step_score(t, j, pos, self.predict(t, prev));
            prev = pos;
        }
        acc
    }

    pub fn ins_distance(&self, labels: &[(usize, usize)]) -> f64 {
        ins_distance(
            labels.iter().enumerate().map(|(t, &(j, l))| self.position(t, j, l)),
            &self.buffers.s_ins,
        )
    }

    pub fn to_path(&self, labels: &[(usize, usize)], log_posterior: f64) -> PathEstimate {
        let states = labels
            .iter()
            .enumerate()
            .map(|(t, &(j, l))| CandidateState {
                t: t + 1,
                j,
                l,
                position: self.position(t, j, l),
                gravity: self.windows[t].cell(j).gravity,
            })
            .collect();
        PathEstimate { states, log_posterior }
    }
}
