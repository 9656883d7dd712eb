//! Per-start greedy chains.
//!
//! From every admissible start state a chain is grown one step at a time,
//! each step taking the state with the highest `meas + trans` given only the
//! state chosen before it. The chain with the highest accumulated score wins
//! (ties go to the chain hugging the INS track).
//!
//! Within a cell the measurement term is constant and the transition term is
//! a separable isotropic Gaussian, so the best sub-cell is found per axis
//! instead of scanning all `o^2` of them.

use crate::error::Result;
use crate::geo::LonLat;
use crate::insmodel::SegmentBuffers;
use crate::mapgrid::{subcell_offset, GridWindow};

use super::{pick_best, CandidateState, MatchConfig, MatchStats, Matched, PathEstimate, PrunedIndexSets, SegmentModel};

struct Chain {
    labels: Vec<(usize, usize)>,
    log_posterior: f64,
    transitions: u64,
}

/// Lattice offset in `-h..=h` whose coordinate is nearest to `target`;
/// lowest offset on ties.
#[inline]
fn nearest_offset(center: f64, step: f64, h: isize, target: f64) -> isize {
    if h == 0 {
        return 0;
    }
    let k0 = ((target - center) / step).round().clamp(-h as f64, h as f64) as isize;
    let mut best = (k0, f64::INFINITY);
    for k in (k0 - 1).max(-h)..=(k0 + 1).min(h) {
        let d = (center + k as f64 * step) - target;
        if d * d < best.1 {
            best = (k, d * d);
        }
    }
    best.0
}

fn run_chain(m: &SegmentModel<'_>, j1: usize, l1: usize) -> Chain {
    let o = m.o;
    let h = (o / 2) as isize;
    let mut labels = Vec::with_capacity(m.len());
    labels.push((j1, l1));
    let mut acc = m.meas[0][j1 - 1];
    let mut prev = m.position(0, j1, l1);
    let mut transitions = 0u64;
    for t in 1..m.len() {
        let w = &m.windows[t];
        let (step_lon, step_lat) = (w.res_lon / o as f64, w.res_lat / o as f64);
        let mean = m.predict(t, prev);
        let mut best: Option<(f64, usize, usize, LonLat)> = None;
        for &j in &m.allowed.sets[t] {
            let c = w.cell(j).position;
            let kc = nearest_offset(c.lon, step_lon, h, mean.lon);
            let kr = nearest_offset(c.lat, step_lat, h, mean.lat);
            let pos = subcell_offset(c, kr, kc, w.res_lon, w.res_lat, o);
            let score = m.step_score(t, j, pos, mean);
            transitions += 1;
            if best.is_none_or(|b| score > b.0) {
                let l = ((kr + h) as usize) * o + (kc + h) as usize + 1;
                best = Some((score, j, l, pos));
            }
        }
        let (score, j, l, pos) = best.expect("pruned sets are never empty");
        acc += score;
        labels.push((j, l));
        prev = pos;
    }
    Chain { labels, log_posterior: acc, transitions }
}

/// Grows a single greedy chain from `start` over the admissible sets `allowed`.
pub fn greedy_chain(
    start: &CandidateState,
    windows: &[GridWindow],
    buffers: &SegmentBuffers,
    allowed: &PrunedIndexSets,
    cfg: &MatchConfig,
) -> Result<PathEstimate> {
    let m = SegmentModel::new(windows, buffers, Some(allowed.clone()), cfg)?;
    let chain = run_chain(&m, start.j, start.l);
    Ok(m.to_path(&chain.labels, chain.log_posterior))
}

/// Runs a chain from every admissible start and keeps the best one.
pub fn greedy_match(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<Matched> {
    let m = SegmentModel::new(windows, buffers, None, cfg)?;
    let starts = m.states(0);
    let chains = m.exec.map(&starts, |&(j, l)| run_chain(&m, j, l));
    let scores: Vec<(f64, f64)> = chains
        .iter()
        .map(|c| (c.log_posterior, m.ins_distance(&c.labels)))
        .collect();
    let best = &chains[pick_best(&scores).expect("window has at least one state")];
    let stats = MatchStats {
        chains: chains.len() as u64,
        transitions: chains.iter().map(|c| c.transitions).sum(),
        pair_work: m.allowed.pair_work(m.o),
    };
    Ok(Matched { path: m.to_path(&best.labels, best.log_posterior), stats })
}

/// Full-window greedy matching on cell centres (no pruning, no sub-cells).
pub fn vbmp(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<PathEstimate> {
    let cfg = MatchConfig { alpha: 0.0, o: 1, ..*cfg };
    Ok(greedy_match(windows, buffers, &cfg)?.path)
}

/// Greedy matching on cell centres restricted to the pruned sets.
pub fn rvbmp(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<PathEstimate> {
    let cfg = MatchConfig { o: 1, ..*cfg };
    Ok(greedy_match(windows, buffers, &cfg)?.path)
}

/// Pruned greedy matching over `o x o` sub-cells.
pub fn rvbmp2(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<PathEstimate> {
    Ok(greedy_match(windows, buffers, cfg)?.path)
}
