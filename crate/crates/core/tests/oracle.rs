mod common;

use common::*;
use gravmatch::iccp::{fit_rigid, iccp_match, IccpParams, RigidTransform};
use gravmatch::insmodel::SegmentBuffers;
use gravmatch::mapgrid::{synth_map, Roughness, SynthParams};
use gravmatch::matcher::{
    brute_force_map, build_windows, greedy, prune, rvbmp, rvbmp2, sequence_count, vbmp, viterbi, viterbi_exact,
    MatchConfig,
};
use gravmatch::{Execution, GravityMap, LonLat};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_solvers_agree_with_enumeration(seed in any::<u64>(), sub in any::<bool>()) {
        let (o, t_len) = if sub { (3, 2) } else { (1, 4) };
        let inst = random_instance(&mut rng(seed), 3, o, t_len);
        let (labels, score) = oracle_map(&inst);
        let vit = viterbi_exact(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
        let bf = brute_force_map(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
        prop_assert!(rel_close(vit.log_posterior, score, 1e-9), "{} vs {}", vit.log_posterior, score);
        prop_assert!(rel_close(bf.log_posterior, score, 1e-9));
        prop_assert_eq!(&vit.labels(), &labels);
        prop_assert_eq!(&bf.labels(), &labels);
    }

    #[test]
    fn greedy_never_beats_the_exact_map(seed in any::<u64>(), alpha in 0.0f64..0.5) {
        let mut inst = random_instance(&mut rng(seed), 3, 3, 3);
        inst.cfg.alpha = alpha;
        let g = greedy::greedy_match(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
        let exact = MatchConfig { alpha: 0.0, ..inst.cfg };
        let v = viterbi_exact(&inst.windows, &inst.buffers, &exact).unwrap();
        prop_assert!(g.path.log_posterior <= v.log_posterior + 1e-9);
    }

    #[test]
    fn reported_score_matches_recomputation(seed in any::<u64>(), o in prop::sample::select(vec![1usize, 3, 5])) {
        let mut inst = random_instance(&mut rng(seed), 5, o, 5);
        inst.cfg.alpha = 0.05;
        for path in [
            rvbmp2(&inst.windows, &inst.buffers, &inst.cfg).unwrap(),
            viterbi_exact(&inst.windows, &inst.buffers, &inst.cfg).unwrap(),
        ] {
            let again = oracle_score(&inst, &path.labels());
            prop_assert!(rel_close(path.log_posterior, again, 1e-9), "{} vs {}", path.log_posterior, again);
            prop_assert_eq!(path.states.len(), 5);
        }
    }

    #[test]
    fn pruning_sets_nest(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let inst = random_instance(&mut rng(seed), 5, 1, 2);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let w = &inst.windows[0];
        let z = inst.buffers.z[0];
        let wide = prune(w, z, &MatchConfig { alpha: lo, ..inst.cfg }).unwrap();
        let narrow = prune(w, z, &MatchConfig { alpha: hi, ..inst.cfg }).unwrap();
        prop_assert!(!narrow.is_empty());
        prop_assert!(narrow.iter().all(|j| wide.contains(j)));
        let all = prune(w, z, &MatchConfig { alpha: 0.0, ..inst.cfg }).unwrap();
        prop_assert_eq!(all, (1..=25).collect::<Vec<_>>());
    }

    #[test]
    fn layers_collapse_to_the_plain_matchers(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 5, 1, 4);
        let zero = MatchConfig { alpha: 0.0, ..inst.cfg };
        let a = vbmp(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
        let b = rvbmp(&inst.windows, &inst.buffers, &zero).unwrap();
        prop_assert_eq!(&a, &b);
        let pruned = MatchConfig { alpha: 0.2, ..inst.cfg };
        let c = rvbmp(&inst.windows, &inst.buffers, &pruned).unwrap();
        let d = rvbmp2(&inst.windows, &inst.buffers, &MatchConfig { o: 1, ..pruned }).unwrap();
        prop_assert_eq!(&c, &d);
    }

    #[test]
    fn subcell_estimates_sit_on_the_lattice(seed in any::<u64>(), o in prop::sample::select(vec![3usize, 5, 7])) {
        let inst = random_instance(&mut rng(seed), 5, o, 4);
        let path = rvbmp2(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
        let step = RES / o as f64;
        for p in path.positions() {
            let d = p - inst.map.origin();
            for k in [d.lon / step, d.lat / step] {
                prop_assert!((k - k.round()).abs() < 1e-6, "{k}");
            }
        }
    }

    #[test]
    fn parallel_and_sequential_match(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 5, 3, 4);
        let par = MatchConfig { exec: Execution::Parallel, alpha: 0.1, ..inst.cfg };
        let seq = MatchConfig { exec: Execution::Sequential, ..par };
        prop_assert_eq!(
            greedy::greedy_match(&inst.windows, &inst.buffers, &par).unwrap(),
            greedy::greedy_match(&inst.windows, &inst.buffers, &seq).unwrap()
        );
        prop_assert_eq!(
            viterbi::viterbi_match(&inst.windows, &inst.buffers, &par).unwrap(),
            viterbi::viterbi_match(&inst.windows, &inst.buffers, &seq).unwrap()
        );
    }

    #[test]
    fn rigid_fit_is_no_worse_than_identity(seed in any::<u64>(), len in 2usize..12) {
        let mut r = rng(seed);
        let src: Vec<LonLat> = (0..len).map(|_| LonLat::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect();
        let dst: Vec<LonLat> = (0..len).map(|_| LonLat::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect();
        let fit = fit_rigid(&src, &dst).unwrap();
        let residual = |t: &RigidTransform| src.iter().zip(&dst).map(|(&s, &d)| (t.apply(s) - d).norm().powi(2)).sum::<f64>();
        prop_assert!(residual(&fit) <= residual(&RigidTransform::IDENTITY) + 1e-12);
    }

    #[test]
    fn iccp_keeps_length_and_is_translation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let map = smooth_field(LonLat::new(140.0, -38.0), &mut r);
        let start = map.cell_center(gravmatch::CellIndex::new(20, 20));
        let truth: Vec<LonLat> = (0..6).map(|k| start + LonLat::new(0.011 * k as f64, 0.004 * k as f64)).collect();
        let z: Vec<f64> = truth.iter().map(|&p| map.lookup(p).unwrap() + r.gen_range(-0.5..0.5)).collect();
        let offset = LonLat::new(r.gen_range(-0.02..0.02), r.gen_range(-0.02..0.02));
        let s_ins: Vec<LonLat> = truth.iter().map(|&p| p + offset).collect();
        let buffers = SegmentBuffers::new(z.clone(), vec![LonLat::default(); 6], s_ins.clone()).unwrap();
        let a = iccp_match(&buffers, &map, 13, IccpParams::default());

        // same field and track moved by a whole number of cells
        let shift = LonLat::new(0.25, -0.5);
        let moved = GravityMap::new(map.origin() + shift, RES, RES, map.nrows(), map.ncols(), map.values().to_vec()).unwrap();
        let moved_buf = SegmentBuffers::new(z, vec![LonLat::default(); 6], s_ins.iter().map(|&p| p + shift).collect()).unwrap();
        let b = iccp_match(&moved_buf, &moved, 13, IccpParams::default());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.positions.len(), 6);
                prop_assert!(a.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-18));
                for (p, q) in a.positions.iter().zip(&b.positions) {
                    prop_assert!((*p + shift - *q).norm() < 1e-7, "{:?} {:?}", p, q);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "only one side failed: {:?} / {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn iccp_ignores_a_common_value_offset(seed in any::<u64>(), bias in -1e3f64..1e3) {
        let mut r = rng(seed);
        let map = smooth_field(LonLat::new(140.0, -38.0), &mut r);
        let start = map.cell_center(gravmatch::CellIndex::new(20, 20));
        let truth: Vec<LonLat> = (0..5).map(|k| start + LonLat::new(0.009 * k as f64, -0.006 * k as f64)).collect();
        let z: Vec<f64> = truth.iter().map(|&p| map.lookup(p).unwrap() + r.gen_range(-0.5..0.5)).collect();
        let offset = LonLat::new(r.gen_range(-0.02..0.02), r.gen_range(-0.02..0.02));
        let s_ins: Vec<LonLat> = truth.iter().map(|&p| p + offset).collect();
        let a = iccp_match(&SegmentBuffers::new(z.clone(), vec![LonLat::default(); 5], s_ins.clone()).unwrap(), &map, 13, IccpParams::default());
        let lifted = GravityMap::new(map.origin(), RES, RES, map.nrows(), map.ncols(), map.values().iter().map(|v| v + bias).collect()).unwrap();
        let zb = z.iter().map(|v| v + bias).collect();
        let b = iccp_match(&SegmentBuffers::new(zb, vec![LonLat::default(); 5], s_ins).unwrap(), &lifted, 13, IccpParams::default());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(b.positions.len(), 5);
                for (p, q) in a.positions.iter().zip(&b.positions) {
                    prop_assert!((*p - *q).norm() < 1e-7, "{:?} {:?}", p, q);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "only one side failed: {:?} / {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn map_bytes_round_trip(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20) {
        let mut r = rng(seed);
        let values = (0..rows * cols).map(|_| r.gen_range(-1e6..1e6)).collect();
        let map = GravityMap::new(LonLat::new(r.gen_range(-180.0..180.0), r.gen_range(-90.0..90.0)), 1.0 / 120.0, 0.01, rows, cols, values).unwrap();
        prop_assert_eq!(GravityMap::from_bytes(&map.to_bytes()).unwrap(), map);
    }
}

/// Sum of a few broad bumps on a 60 x 60 grid.
fn smooth_field<R: Rng>(origin: LonLat, r: &mut R) -> GravityMap {
    let side = 60;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (r.gen_range(0.0..60.0), r.gen_range(0.0..60.0), r.gen_range(-30.0..30.0), r.gen_range(6.0..15.0)))
        .collect();
    let values = (0..side * side)
        .map(|i| {
            let (row, col) = ((i / side) as f64, (i % side) as f64);
            bumps
                .iter()
                .map(|&(br, bc, a, w)| a * (-((row - br).powi(2) + (col - bc).powi(2)) / (2.0 * w * w)).exp())
                .sum::<f64>()
                + 0.3 * col
        })
        .collect();
    GravityMap::new(origin, RES, RES, side, side, values).unwrap()
}

fn flat_instance(s_ins: Vec<LonLat>, sigma_v: f64) -> (GravityMap, SegmentBuffers, MatchConfig) {
    let map = GravityMap::constant(LonLat::new(0.0, 0.0), 0.25, 9, 9, 5.0).unwrap();
    let t_len = s_ins.len();
    let buffers = SegmentBuffers::new(vec![5.0; t_len], vec![LonLat::default(); t_len], s_ins).unwrap();
    let cfg = MatchConfig {
        segment_len: t_len,
        n: 3,
        o: 1,
        alpha: 0.0,
        sigma_z: 1.0,
        sigma_v,
        dt: 12.0,
        exec: Execution::Sequential,
    };
    (map, buffers, cfg)
}

#[test]
fn enumeration_size() {
    let (map, buffers, cfg) = flat_instance(vec![LonLat::new(1.0, 1.0); 2], 1.0);
    let windows = build_windows(&map, &buffers, cfg.n).unwrap();
    assert_eq!(sequence_count(&windows, 1), 81.0);
    assert_eq!(sequence_count(&windows, 3), 81.0 * 81.0);
}

#[test]
fn flat_posterior_picks_the_ins_nearest_path() {
    // measurement and transition terms are both flat to well inside the tie tolerance
    let s_ins = vec![LonLat::new(1.05, 0.96), LonLat::new(1.22, 1.04)];
    let (map, buffers, cfg) = flat_instance(s_ins, 1e6);
    let windows = build_windows(&map, &buffers, cfg.n).unwrap();
    let want: Vec<(usize, usize)> = vec![(5, 1), (5, 1)];
    assert_eq!(brute_force_map(&windows, &buffers, &cfg).unwrap().labels(), want);
    // the trellis settles predecessor ties on the lowest state before the
    // path-level INS rule sees them
    assert_eq!(viterbi_exact(&windows, &buffers, &cfg).unwrap().labels(), vec![(1, 1), (5, 1)]);
}

#[test]
fn mirrored_ties_go_to_the_lower_label() {
    // two neighbours of the centre match z equally and sit equally far from the INS point
    for (pair, want) in [([4usize, 6], 4usize), ([2, 8], 2)] {
        let mut values = vec![0.0; 81];
        for j in pair {
            let (row, col) = (3 + (j - 1) / 3, 3 + (j - 1) % 3);
            values[row * 9 + col] = 5.0;
        }
        let map = GravityMap::new(LonLat::new(0.0, 0.0), 0.25, 0.25, 9, 9, values).unwrap();
        let (_, buffers, cfg) = flat_instance(vec![LonLat::new(1.0, 1.0)], 1.0);
        let windows = build_windows(&map, &buffers, cfg.n).unwrap();
        for path in [
            brute_force_map(&windows, &buffers, &cfg).unwrap(),
            viterbi_exact(&windows, &buffers, &cfg).unwrap(),
            vbmp(&windows, &buffers, &cfg).unwrap(),
        ] {
            assert_eq!(path.labels(), vec![(want, 1)], "{pair:?}");
        }
    }
}

#[test]
fn equal_posteriors_go_to_the_path_hugging_the_ins_track() {
    for (pair, ins, want) in [([4usize, 6], LonLat::new(1.01, 1.0), 6usize), ([2, 8], LonLat::new(1.0, 0.99), 2)] {
        let mut values = vec![0.0; 81];
        for j in pair {
            let (row, col) = (3 + (j - 1) / 3, 3 + (j - 1) % 3);
            values[row * 9 + col] = 5.0;
        }
        let map = GravityMap::new(LonLat::new(0.0, 0.0), 0.25, 0.25, 9, 9, values).unwrap();
        // staying put on either matching cell scores the same
        let (_, buffers, cfg) = flat_instance(vec![ins, ins], 1e-3);
        let windows = build_windows(&map, &buffers, cfg.n).unwrap();
        for path in [brute_force_map(&windows, &buffers, &cfg).unwrap(), vbmp(&windows, &buffers, &cfg).unwrap()] {
            assert_eq!(path.labels(), vec![(want, 1), (want, 1)], "{pair:?}");
        }
    }
}

#[test]
fn two_step_viterbi_equals_pair_enumeration() {
    let inst = random_instance(&mut rng(99), 3, 3, 2);
    let mut best = (f64::NEG_INFINITY, vec![]);
    for j1 in 1..=9 {
        for l1 in 1..=9 {
            for j2 in 1..=9 {
                for l2 in 1..=9 {
                    let labels = vec![(j1, l1), (j2, l2)];
                    let s = oracle_score(&inst, &labels);
                    if s > best.0 {
                        best = (s, labels);
                    }
                }
            }
        }
    }
    let v = viterbi_exact(&inst.windows, &inst.buffers, &inst.cfg).unwrap();
    assert_eq!(v.labels(), best.1);
    assert!(rel_close(v.log_posterior, best.0, 1e-9));
}

#[test]
fn vbmp_recovers_noise_free_truth_cells() {
    let mut r = rng(7);
    for _ in 0..20 {
        let side = 30;
        let values = (0..side * side).map(|_| r.gen_range(-50.0..50.0)).collect();
        let map = GravityMap::new(LonLat::new(140.0, -38.0), RES, RES, side, side, values).unwrap();
        let mut cells = vec![(r.gen_range(8..22), r.gen_range(8..22))];
        for _ in 1..6 {
            let (row, col): (usize, usize) = *cells.last().unwrap();
            cells.push(((row as i64 + r.gen_range(-1..=1)) as usize, (col as i64 + r.gen_range(-1..=1)) as usize));
        }
        let truth: Vec<LonLat> = cells.iter().map(|&(row, col)| center(&map, row, col)).collect();
        let z = truth.iter().map(|&p| map.lookup(p).unwrap()).collect();
        let mut v: Vec<LonLat> = truth.windows(2).map(|w| (w[1] - w[0]).scale(3600.0 / 12.0)).collect();
        v.push(LonLat::default());
        let s_ins = truth.iter().map(|&p| p + LonLat::new(0.004, -0.003)).collect();
        let buffers = SegmentBuffers::new(z, v, s_ins).unwrap();
        let windows = build_windows(&map, &buffers, 5).unwrap();
        let cfg = MatchConfig {
            segment_len: 6,
            n: 5,
            o: 1,
            alpha: 0.0,
            sigma_z: 1e-2,
            sigma_v: 1e-7,
            dt: 12.0,
            exec: Execution::Sequential,
        };
        let path = vbmp(&windows, &buffers, &cfg).unwrap();
        for (p, q) in path.positions().iter().zip(&truth) {
            assert!((*p - *q).norm() < 1e-12);
        }
    }
}

#[test]
fn pruning_cuts_pair_work_on_a_rough_map() {
    let map = synth_map(&SynthParams {
        origin: LonLat::new(140.0, -38.0),
        extent_lon: 1.0,
        extent_lat: 1.0,
        resolution: RES,
        roughness: Roughness::Rough,
        seed: 42,
        bumps: None,
    })
    .unwrap();
    let mut r = rng(3);
    let (n, t_len) = (13usize, 6usize);
    let full = ((t_len - 1) * n.pow(4)) as u64;
    let mut checked = 0;
    for _ in 0..20 {
        let start = LonLat::new(140.2 + r.gen_range(0.0..0.6), -37.8 + r.gen_range(0.0..0.6));
        let step = LonLat::new(0.02, 0.005);
        let truth: Vec<LonLat> = (0..t_len).map(|k| start + step.scale(k as f64)).collect();
        let z = truth.iter().map(|&p| map.lookup(p).unwrap() + r.gen_range(-1.0..1.0)).collect();
        let v = vec![step.scale(300.0); t_len];
        let buffers = SegmentBuffers::new(z, v, truth).unwrap();
        let windows = build_windows(&map, &buffers, n).unwrap();
        let cfg = MatchConfig {
            segment_len: t_len,
            n,
            o: 1,
            alpha: 0.1,
            sigma_z: 1.0,
            sigma_v: 9e-6,
            dt: 12.0,
            exec: Execution::Sequential,
        };
        let stats = greedy::greedy_match(&windows, &buffers, &cfg).unwrap().stats;
        assert!(stats.pair_work <= full);
        if stats.pair_work < full {
            checked += 1;
        }
    }
    assert!(checked >= 18, "pruning removed nothing in {} of 20 segments", 20 - checked);
}

#[test]
fn map_file_round_trip() {
    let map = synth_map(&SynthParams {
        origin: LonLat::new(115.0, -32.0),
        extent_lon: 0.64,
        extent_lat: 0.7,
        resolution: RES,
        roughness: Roughness::Smooth,
        seed: 5,
        bumps: None,
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.gmap");
    map.save(&path).unwrap();
    assert_eq!(GravityMap::load(&path).unwrap(), map);
}

#[test]
fn iccp_usually_finds_contours_on_the_smooth_field() {
    let mut ok = 0;
    for seed in 0..20 {
        let mut r = rng(seed);
        let map = smooth_field(LonLat::new(140.0, -38.0), &mut r);
        let start = map.cell_center(gravmatch::CellIndex::new(20, 20));
        let truth: Vec<LonLat> = (0..6).map(|k| start + LonLat::new(0.011 * k as f64, 0.004 * k as f64)).collect();
        let z = truth.iter().map(|&p| map.lookup(p).unwrap()).collect();
        let s_ins = truth.iter().map(|&p| p + LonLat::new(0.01, -0.01)).collect();
        let buffers = SegmentBuffers::new(z, vec![LonLat::default(); 6], s_ins).unwrap();
        if iccp_match(&buffers, &map, 13, IccpParams::default()).is_ok() {
            ok += 1;
        }
    }
    assert!(ok >= 15, "{ok}");
}
