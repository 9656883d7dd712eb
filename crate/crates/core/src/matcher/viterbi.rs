//! Exact trellis Viterbi over the same state space as the greedy matcher.

use crate::error::Result;
use crate::insmodel::SegmentBuffers;
use crate::mapgrid::GridWindow;

use super::{pick_best, MatchConfig, MatchStats, Matched, PathEstimate, SegmentModel, TIE_TOLERANCE};

/// Global MAP path of the segment posterior.
///
/// Predecessor ties go to the lowest state. Among end states within
/// [`TIE_TOLERANCE`] of the best score, the path closest to the INS track wins.
pub fn viterbi_exact(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<PathEstimate> {
    Ok(viterbi_match(windows, buffers, cfg)?.path)
}

pub fn viterbi_match(windows: &[GridWindow], buffers: &SegmentBuffers, cfg: &MatchConfig) -> Result<Matched> {
    let m = SegmentModel::new(windows, buffers, None, cfg)?;
    let columns: Vec<Vec<(usize, usize)>> = (0..m.len()).map(|t| m.states(t)).collect();

    let mut delta: Vec<f64> = columns[0].iter().map(|&(j, _)| m.meas[0][j - 1]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(m.len());
    let mut transitions = 0u64;
    for t in 1..m.len() {
        let means: Vec<_> = columns[t - 1]
            .iter()
            .map(|&(j, l)| m.predict(t, m.position(t - 1, j, l)))
            .collect();
        let prev_delta = &delta;
        let cur = &columns[t];
        let best: Vec<(f64, usize)> = m.exec.map(cur, |&(j, l)| {
            let pos = m.position(t, j, l);
            let mut best = (f64::NEG_INFINITY, 0);
            for (p, (&d, &mean)) in prev_delta.iter().zip(&means).enumerate() {
                let v = d + m.step_score(t, j, pos, mean);
                if v > best.0 {
                    best = (v, p);
                }
            }
            best
        });
        transitions += (cur.len() * means.len()) as u64;
        delta = best.iter().map(|b| b.0).collect();
        back.push(best.into_iter().map(|b| b.1).collect());
    }

    let backtrack = |end: usize| -> Vec<(usize, usize)> {
        let mut idx = vec![end; m.len()];
        for t in (1..m.len()).rev() {
            idx[t - 1] = back[t - 1][idx[t]];
        }
        idx.iter().enumerate().map(|(t, &i)| columns[t][i]).collect()
    };

    let top = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let finalists: Vec<usize> = (0..delta.len()).filter(|&i| delta[i] >= top - TIE_TOLERANCE).collect();
    let paths: Vec<Vec<(usize, usize)>> = finalists.iter().map(|&i| backtrack(i)).collect();
    let scores: Vec<(f64, f64)> = finalists
        .iter()
        .zip(&paths)
        .map(|(&i, p)| (delta[i], m.ins_distance(p)))
        .collect();
    let k = pick_best(&scores).expect("at least one end state");
    let stats = MatchStats {
        chains: columns[0].len() as u64,
        transitions,
        pair_work: m.allowed.pair_work(m.o),
    };
    Ok(Matched { path: m.to_path(&paths[k], delta[finalists[k]]), stats })
}
