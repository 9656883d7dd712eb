#![allow(dead_code)]

use gravmatch::insmodel::SegmentBuffers;
use gravmatch::matcher::{build_windows, MatchConfig};
use gravmatch::{CellIndex, Execution, GravityMap, GridWindow, LonLat};
use rand::Rng;
use rand_distr::StandardNormal;

pub const RES: f64 = 0.01;

pub struct Instance {
    pub map: GravityMap,
    pub buffers: SegmentBuffers,
    pub windows: Vec<GridWindow>,
    pub cfg: MatchConfig,
}

/// Small random segment: a 12 x 12 map of U(-5, 5) values, a truth track
/// moving up to 1.5 cells a step, an INS track within a cell of it, and
/// noisy measurements. Transition spread ranges from a third of a cell to
/// two cells so neither term dominates.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, o: usize, t_len: usize) -> Instance {
    let side = 12;
    let values: Vec<f64> = (0..side * side).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let map = GravityMap::new(LonLat::new(140.0, -38.0), RES, RES, side, side, values).unwrap();
    let h = (n / 2) as f64;
    let lo = h + 0.5;
    let hi = side as f64 - 1.5 - h;
    let dt = 12.0;
    let sigma_z = 1.0;
    let mut cell = LonLat::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    let mut z = Vec::new();
    let mut v = Vec::new();
    let mut s_ins = Vec::new();
    for _ in 0..t_len {
        let pos = map.origin() + cell.scale(RES);
        let e: f64 = rng.sample(StandardNormal);
        z.push(map.lookup(pos).unwrap() + e * sigma_z);
        let jitter = LonLat::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
        let ins = cell + jitter;
        let ins = LonLat::new(ins.lon.clamp(lo, hi), ins.lat.clamp(lo, hi));
        s_ins.push(map.origin() + ins.scale(RES));
        // next truth cell, kept inside the admissible band
        let step = LonLat::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let next = cell + step;
        let next = LonLat::new(next.lon.clamp(lo, hi), next.lat.clamp(lo, hi));
        v.push((next - cell).scale(RES * 3600.0 / dt));
        cell = next;
    }
    let buffers = SegmentBuffers::new(z, v, s_ins).unwrap();
    let windows = build_windows(&map, &buffers, n).unwrap();
    let sigma_v = rng.gen_range(0.3..2.0) * RES / dt;
    let cfg = MatchConfig { segment_len: t_len, n, o, alpha: 0.0, sigma_z, sigma_v, dt, exec: Execution::Sequential };
    Instance { map, buffers, windows, cfg }
}

/// Sub-cell centre written out from first principles.
pub fn subcell_position(w: &GridWindow, j: usize, l: usize, o: usize) -> LonLat {
    let c = w.cells[j - 1].position;
    let h = (o / 2) as f64;
    let kr = ((l - 1) / o) as f64 - h;
    let kc = ((l - 1) % o) as f64 - h;
    LonLat::new(c.lon + kc * w.res_lon / o as f64, c.lat + kr * w.res_lat / o as f64)
}

/// Log-posterior of a label sequence, straight from the Gaussian densities.
pub fn oracle_score(inst: &Instance, labels: &[(usize, usize)]) -> f64 {
    let (cfg, b) = (&inst.cfg, &inst.buffers);
    let meas = |t: usize, j: usize| {
        let r = b.z[t] - inst.windows[t].cells[j - 1].gravity;
        -0.5 * (2.0 * std::f64::consts::PI).ln() - cfg.sigma_z.ln() - r * r / (2.0 * cfg.sigma_z * cfg.sigma_z)
    };
    let pos = |t: usize| subcell_position(&inst.windows[t], labels[t].0, labels[t].1, cfg.o);
    let s = cfg.sigma_v * cfg.dt;
    let mut acc = meas(0, labels[0].0);
    for t in 1..labels.len() {
        let mean = pos(t - 1) + b.v[t - 1].scale(cfg.dt / 3600.0);
        let d = pos(t) - mean;
        let trans = -(2.0 * std::f64::consts::PI).ln() - 2.0 * s.ln() - (d.lon * d.lon + d.lat * d.lat) / (2.0 * s * s);
        acc += meas(t, labels[t].0) + trans;
    }
    acc
}

pub fn ins_distance(inst: &Instance, labels: &[(usize, usize)]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(t, &(j, l))| (subcell_position(&inst.windows[t], j, l, inst.cfg.o) - inst.buffers.s_ins[t]).norm())
        .sum()
}

/// Exhaustive MAP over all label sequences, ties within 1e-9 resolved by INS
/// proximity and then by enumeration order.
pub fn oracle_map(inst: &Instance) -> (Vec<(usize, usize)>, f64) {
    let t_len = inst.windows.len();
    let per: Vec<(usize, usize)> = (1..=inst.windows[0].cells.len())
        .flat_map(|j| (1..=inst.cfg.o * inst.cfg.o).map(move |l| (j, l)))
        .collect();
    let total = per.len().pow(t_len as u32);
    let mut all = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut labels = vec![(0, 0); t_len];
        for t in (0..t_len).rev() {
            labels[t] = per[code % per.len()];
            code /= per.len();
        }
        let s = oracle_score(inst, &labels);
        all.push((s, labels));
    }
    let top = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for (i, (s, labels)) in all.iter().enumerate() {
        if *s >= top - 1e-9 {
            let d = ins_distance(inst, labels);
            if best.is_none_or(|b| d < ins_distance(inst, &all[b].1)) {
                best = Some(i);
            }
        }
    }
    let (s, labels) = all.swap_remove(best.unwrap());
    (labels, s)
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn center(map: &GravityMap, row: usize, col: usize) -> LonLat {
    map.cell_center(CellIndex::new(row, col))
}

/// Noise-free flight whose truth stays on the 1/700 degree sub-cell lattice.
pub fn lattice_scenario() -> gravmatch::harness::Scenario {
    gravmatch::harness::Scenario::from_text(
        "map_origin = 140,-38\n\
         map_extent = 0.8\n\
         waypoints = 140.2,-37.8;140.41428571428573,-37.51428571428571\n\
         speed_deg_per_hr = 8.571428571428571\n\
         steps = 12\n\
         o = 7\n\
         algorithm = rvbmp2\n\
         sigma_z_mgal = 0\n\
         sigma_v_deg_per_s = 0\n\
         bias_deg_per_hr = 0\n",
    )
    .unwrap()
}

/// Half the diagonal of a sub-cell, in km.
pub fn half_subcell_diagonal_km(res: f64, o: usize) -> f64 {
    res / o as f64 * std::f64::consts::SQRT_2 / 2.0 * gravmatch::geo::KM_PER_DEGREE
}

pub fn small_scenario() -> gravmatch::harness::Scenario {
    gravmatch::harness::Scenario::from_text(
        "map_origin = 140,-38\n\
         map_extent = 0.8\n\
         waypoints = 140.3,-37.7;140.6,-37.6\n\
         n = 7\n\
         o = 3\n",
    )
    .unwrap()
}
