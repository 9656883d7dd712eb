//! Exhaustive MAP search, for checking the other solvers on small instances.

use crate::error::{Error, Result};
use crate::insmodel::SegmentBuffers;
use crate::mapgrid::GridWindow;

use super::{pick_best, MatchConfig, PathEstimate, SegmentModel};

/// Largest `(n^2 o^2)^T` the enumeration accepts.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Number of state sequences `(n^2 o^2)^T` an exhaustive search visits.
pub fn sequence_count(windows: &[GridWindow], o: usize) -> f64 {
    let per_step = windows.first().map_or(0, |w| w.len() * o * o);
    (per_step as f64).powi(windows.len() as i32)
}

/// Enumerates every state sequence and returns the best one, with the same
/// tie rule as start selection.
pub fn brute_force_map(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<PathEstimate> {
    let total = sequence_count(windows, cfg.o);
    if total > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(total));
    }
    let m = SegmentModel::new(windows, buffers, None, cfg)?;
    let columns: Vec<Vec<(usize, usize)>> = (0..m.len()).map(|t| m.states(t)).collect();

    let mut digits = vec![0usize; m.len()];
    let mut scores = Vec::new();
    let mut labels = vec![(0, 0); m.len()];
    loop {
        for (t, &d) in digits.iter().enumerate() {
            labels[t] = columns[t][d];
        }
        scores.push((m.score(&labels), m.ins_distance(&labels)));

        // odometer, last time step fastest
        let mut t = m.len();
        loop {
            if t == 0 {
                let best = pick_best(&scores).expect("non-empty enumeration");
                return Ok(decode(&m, &columns, best, scores[best].0));
            }
            t -= 1;
            digits[t] += 1;
            if digits[t] < columns[t].len() {
                break;
            }
            digits[t] = 0;
        }
    }
}

fn decode(m: &SegmentModel<'_>, columns: &[Vec<(usize, usize)>], mut index: usize, log_posterior: f64) -> PathEstimate {
    let mut labels = vec![(0, 0); columns.len()];
    for t in (0..columns.len()).rev() {
        let radix = columns[t].len();
        labels[t] = columns[t][index % radix];
        index /= radix;
    }
    m.to_path(&labels, log_posterior)
}
