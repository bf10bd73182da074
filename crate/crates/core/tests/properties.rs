use proptest::prelude::*;

use psd_core::affinity::{affinity_2d, affinity_3d};
use psd_core::correction::{combine_scores, residual_range, residual_slices, uncertainty_target};
use psd_core::eval::{compute_metrics, sample_random, DEFAULT_THRESHOLDS};
use psd_core::io::{decode_dfr, encode_dfr, DfrHeader, DFR_DTYPE_F32, DFR_VERSION};
use psd_core::knn::NeighborSet;
use psd_core::propagation::{propagate_2d, propagate_3d, run_dual_propagation};
use psd_core::*;

fn grid(max: usize) -> impl Strategy<Value = (usize, usize)> {
    (1..=max, 1..=max)
}

/// Sparse map over `h×w` with at least one measurement.
fn sparse_map(h: usize, w: usize) -> impl Strategy<Value = SparseDepth> {
    prop::collection::vec(prop_oneof![2 => Just(0.0), 1 => 0.5..10.0f64], h * w).prop_map(move |mut v| {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        SparseDepth::new(Raster::new(h, w, 1, v).unwrap()).unwrap()
    })
}

fn features(h: usize, w: usize, c: usize) -> impl Strategy<Value = FeatureMap> {
    prop::collection::vec(-1.0..1.0f64, h * w * c)
        .prop_map(move |v| FeatureMap::new(Raster::new(h, w, c, v).unwrap()).unwrap())
}

fn sparse_with_features() -> impl Strategy<Value = (SparseDepth, FeatureMap)> {
    grid(7).prop_flat_map(|(h, w)| (sparse_map(h, w), features(h, w, 3)))
}

/// Nonnegative features, as from an image encoder after a ReLU or raw RGB.
fn sparse_with_nonnegative_features() -> impl Strategy<Value = (SparseDepth, FeatureMap)> {
    grid(7).prop_flat_map(|(h, w)| {
        (
            sparse_map(h, w),
            prop::collection::vec(0.01..1.0f64, h * w * 3)
                .prop_map(move |v| FeatureMap::new(Raster::new(h, w, 3, v).unwrap()).unwrap()),
        )
    })
}

fn intrinsics(h: usize, w: usize) -> CameraIntrinsics {
    CameraIntrinsics::new(w as f64, w as f64, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dfr_decode_never_yields_non_finite(bits in prop::collection::vec(any::<u32>(), 6)) {
        let mut bytes = DfrHeader { version: DFR_VERSION, height: 2, width: 3, channels: 1, dtype: DFR_DTYPE_F32 }
            .to_bytes()
            .to_vec();
        for b in &bits {
            bytes.extend(b.to_le_bytes());
        }
        if let Ok(r) = decode_dfr(&bytes) {
            prop_assert!(r.data().iter().all(|v| v.is_finite()));
        } else {
            prop_assert!(bits.iter().any(|&b| !f32::from_bits(b).is_finite()));
        }
    }

    #[test]
    fn dfr_round_trip((h, w) in grid(6), c in 1usize..4, seed in any::<u64>()) {
        let data: Vec<f64> = (0..h * w * c)
            .map(|i| ((seed.wrapping_mul(i as u64 + 1) % 100_000) as f32 * 0.37 - 1e4) as f64)
            .collect();
        let r = Raster::new(h, w, c, data).unwrap();
        prop_assert_eq!(decode_dfr(&encode_dfr(&r).unwrap()).unwrap(), r);
    }

    #[test]
    fn omega_is_positive_set(v in prop::collection::vec(prop_oneof![Just(0.0), 0.001..5.0f64], 1..40)) {
        let n = v.len();
        let s = SparseDepth::new(Raster::new(1, n, 1, v.clone()).unwrap()).unwrap();
        let expected: Vec<usize> = (0..n).filter(|&i| v[i] > 0.0).collect();
        prop_assert_eq!(s.measured_indices(), expected);
    }

    #[test]
    fn alignment_optimal_and_equivariant(
        rel in prop::collection::vec(0.05..2.0f64, 8..30),
        depth in prop::collection::vec(0.5..20.0f64, 30),
        c in 0.1..10.0f64,
        perturb in prop::collection::vec((-0.1..0.1f64, -0.1..0.1f64), 50),
    ) {
        let n = rel.len();
        let relative = Raster::new(1, n, 1, rel.clone()).unwrap();
        let s = SparseDepth::new(Raster::new(1, n, 1, depth[..n].to_vec()).unwrap()).unwrap();
        let Ok(fit) = fit_scale_shift(&relative, &s) else { return Ok(()); };
        let samples: Vec<(f64, f64)> = (0..n).map(|i| (rel[i], 1.0 / depth[i])).collect();
        let e0 = ScaleShift::energy(fit.gamma, fit.rho, &samples);
        for (dg, dr) in perturb {
            prop_assert!(e0 <= ScaleShift::energy(fit.gamma + dg, fit.rho + dr, &samples) + 1e-12);
        }
        let scaled = SparseDepth::new(Raster::new(1, n, 1, depth[..n].iter().map(|d| d * c).collect()).unwrap()).unwrap();
        let fit_c = fit_scale_shift(&relative, &scaled).unwrap();
        let tol = 1e-9 * (fit.gamma.abs() + fit.rho.abs()).max(1.0) / c;
        prop_assert!((fit_c.gamma - fit.gamma / c).abs() <= tol);
        prop_assert!((fit_c.rho - fit.rho / c).abs() <= tol);
    }

    #[test]
    fn backprojection_keeps_depth((h, w) in grid(8), v in prop::collection::vec(0.01..100.0f64, 64)) {
        let depth = Raster::new(h, w, 1, v[..h * w].to_vec()).unwrap();
        let cloud = backproject(&depth, &intrinsics(h, w)).unwrap();
        for i in 0..h * w {
            prop_assert_eq!(cloud.point(i)[2].to_bits(), depth.data()[i].to_bits());
        }
    }

    #[test]
    fn knn_matches_exhaustive_scan(
        (h, w) in grid(8),
        v in prop::collection::vec(prop_oneof![Just(1.0), Just(2.0), 0.5..4.0f64], 64),
        mask in prop::collection::vec(any::<bool>(), 64),
        k in 1usize..6,
        q in 0usize..64,
    ) {
        let n = h * w;
        let depth = Raster::new(h, w, 1, v[..n].to_vec()).unwrap();
        let sparse = SparseDepth::new(Raster::new(h, w, 1, (0..n).map(|i| if mask[i] { v[i] } else { 0.0 }).collect()).unwrap()).unwrap();
        prop_assume!(sparse.measured_count() > 0);
        let cloud = backproject(&depth, &intrinsics(h, w)).unwrap().with_measured(&sparse).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let query = cloud.point(q % n);
        let got = index.knn(query, k).unwrap();
        prop_assert_eq!(&got, &index.knn(query, k).unwrap());

        let d2 = |p: [f64; 3]| (0..3).map(|a| (p[a] - query[a]).powi(2)).sum::<f64>();
        let mut all: Vec<(f64, usize)> = sparse.measured_indices().into_iter().map(|i| (d2(cloud.point(i)), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = all.iter().take(k).map(|e| e.1).collect();
        prop_assert_eq!(got.indices, expected);
    }

    #[test]
    fn prefill_exact_bounded_dense((s, _) in sparse_with_features()) {
        let out = prefill_gaussian(&s, &PrefillParams::default()).unwrap();
        let vals: Vec<f64> = s.measured_indices().iter().map(|&i| s.value(i)).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for i in 0..out.pixel_count() {
            let d = out.data()[i];
            prop_assert!(d > 0.0 && d >= lo && d <= hi);
            if s.is_measured(i) {
                prop_assert_eq!(d.to_bits(), s.value(i).to_bits());
            }
        }
    }

    #[test]
    fn affinity_3d_sums_to_one_and_permutes(
        f in features(3, 3, 4),
        picks in prop::collection::vec(0usize..9, 1..6),
        x in 0usize..9,
    ) {
        let nbrs = NeighborSet { indices: picks.clone(), distances: vec![0.0; picks.len()] };
        let a = affinity_3d(&f, x, &nbrs);
        prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let rev = NeighborSet { indices: picks.iter().rev().copied().collect(), distances: vec![0.0; picks.len()] };
        let b = affinity_3d(&f, x, &rev);
        for (i, wi) in a.weights.iter().enumerate() {
            prop_assert!((wi - b.weights[picks.len() - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_2d_partition_of_unity(f in features(4, 5, 3), x in 0usize..20) {
        let a = affinity_2d(&f, x);
        let sum: f64 = a.neighbor_weights.iter().sum();
        prop_assert!((a.center_weight + sum - 1.0).abs() < 1e-9);
        prop_assert!(a.neighbor_weights.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn propagate_3d_bounded_and_anchored((s, f) in sparse_with_nonnegative_features(), eta in 0.0..=1.0f64, k in 1usize..4, base_v in 0.5..10.0f64) {
        let (h, w) = (s.height(), s.width());
        let base = Raster::filled(h, w, 1, base_v).unwrap();
        let cloud = backproject(&base, &intrinsics(h, w)).unwrap().with_measured(&s).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let out = propagate_3d(&base, &s, &index, &cloud, &f, k, eta).unwrap();
        let vals: Vec<f64> = s.measured_indices().iter().map(|&i| s.value(i)).chain([base_v]).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for i in 0..h * w {
            let d = out.data()[i];
            prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
            if s.is_measured(i) {
                prop_assert_eq!(d.to_bits(), s.value(i).to_bits());
            }
        }
    }

    #[test]
    fn propagate_2d_convex_with_nonnegative_affinities(
        (s, f) in grid(6).prop_flat_map(|(h, w)| (
            sparse_map(h, w),
            prop::collection::vec(0.0..1.0f64, h * w * 3)
                .prop_map(move |v| FeatureMap::new(Raster::new(h, w, 3, v).unwrap()).unwrap()),
        )),
        input in prop::collection::vec(0.5..10.0f64, 36),
        iterations in 1usize..6,
    ) {
        let (h, w) = (s.height(), s.width());
        let start = Raster::new(h, w, 1, input[..h * w].to_vec()).unwrap();
        let out = propagate_2d(&start, &s, &f, iterations, true).unwrap();
        let all: Vec<f64> = input[..h * w].iter().copied().chain(s.measured_indices().iter().map(|&i| s.value(i))).collect();
        let (lo, hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for i in 0..h * w {
            let d = out.data()[i];
            prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9);
            if s.is_measured(i) {
                prop_assert_eq!(d.to_bits(), s.value(i).to_bits());
            }
        }
    }

    #[test]
    fn propagate_2d_loosely_bounded_with_signed_affinities(
        (s, f) in sparse_with_features(),
        input in prop::collection::vec(0.5..10.0f64, 49),
    ) {
        let (h, w) = (s.height(), s.width());
        let start = Raster::new(h, w, 1, input[..h * w].to_vec()).unwrap();
        let out = propagate_2d(&start, &s, &f, 1, true).unwrap();
        let all: Vec<f64> = input[..h * w].iter().copied().chain(s.measured_indices().iter().map(|&i| s.value(i))).collect();
        let (lo, hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let max_abs = lo.abs().max(hi.abs());
        for d in out.data() {
            prop_assert!(d.abs() <= 3.0 * max_abs);
        }
    }

    #[test]
    fn dense_sparse_fixes_every_mode((h, w) in grid(6), v in prop::collection::vec(0.5..10.0f64, 36), f in features(6, 6, 2)) {
        let s = SparseDepth::new(Raster::new(h, w, 1, v[..h * w].to_vec()).unwrap()).unwrap();
        let f = FeatureMap::new(Raster::new(h, w, 2, f.raster().data()[..h * w * 2].to_vec()).unwrap()).unwrap();
        for mode in [PropagationMode::Serial3dThen2d, PropagationMode::Serial2dThen3d, PropagationMode::ParallelMean] {
            let cfg = PropagationConfig { mode, ..Default::default() };
            let out = run_dual_propagation(s.raster(), &s, &intrinsics(h, w), &f, &cfg).unwrap();
            prop_assert_eq!(&out, s.raster());
        }
    }

    #[test]
    fn dual_propagation_anchored_and_deterministic((s, f) in sparse_with_nonnegative_features(), mode_i in 0usize..3) {
        let (h, w) = (s.height(), s.width());
        let mode = [PropagationMode::Serial3dThen2d, PropagationMode::Serial2dThen3d, PropagationMode::ParallelMean][mode_i];
        let cfg = PropagationConfig { mode, ..Default::default() };
        let metric = Raster::from_fn(h, w, 1, |r, c, _| 1.0 + 0.1 * (r + c) as f64).unwrap();
        let a = run_dual_propagation(&metric, &s, &intrinsics(h, w), &f, &cfg).unwrap();
        prop_assert_eq!(&a, &run_dual_propagation(&metric, &s, &intrinsics(h, w), &f, &cfg).unwrap());
        for i in s.measured_indices() {
            prop_assert_eq!(a.data()[i].to_bits(), s.value(i).to_bits());
        }
    }

    #[test]
    fn correction_range_slices_combination(
        r in -5.0..5.0f64,
        u in 0.0..=1.0f64,
        o in -2.0..2.0f64,
        n in 1usize..8,
        logits in prop::collection::vec(-20.0..20.0f64, 8),
        shift in -100.0..100.0f64,
    ) {
        let px = |v: f64| Raster::filled(1, 1, 1, v).unwrap();
        let (lo, hi) = residual_range(&px(r), &px(u), &CorrectionParams::default()).unwrap();
        prop_assert!(lo.data()[0] <= 0.0 && 0.0 <= hi.data()[0]);

        let s0 = residual_slices(&lo, &hi, n, &px(0.0)).unwrap();
        let so = residual_slices(&lo, &hi, n, &px(o)).unwrap();
        for (a, b) in s0.data().iter().zip(so.data()) {
            prop_assert!((b - (a + o)).abs() < 1e-12);
        }

        let l = Raster::new(1, 1, n + 1, logits[..=n].to_vec()).unwrap();
        let ls = Raster::new(1, 1, n + 1, logits[..=n].iter().map(|v| v + shift).collect()).unwrap();
        let r_hat = combine_scores(&so, &l).unwrap().data()[0];
        let (smin, smax) = so.min_max();
        prop_assert!(r_hat >= smin - 1e-12 && r_hat <= smax + 1e-12);
        prop_assert!((combine_scores(&so, &ls).unwrap().data()[0] - r_hat).abs() < 1e-9);
    }

    #[test]
    fn uncertainty_target_monotone(sum in 0.5..20.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let target = |frac: f64| {
            let d = frac * sum * 0.499;
            let p = Raster::filled(1, 1, 1, sum / 2.0 + d).unwrap();
            let g = Raster::filled(1, 1, 1, sum / 2.0 - d).unwrap();
            uncertainty_target(&p, &g, 0.2).unwrap().data()[0]
        };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        prop_assert!(target(lo) < target(hi));
        prop_assert!((0.0..1.0).contains(&target(hi)));
    }

    #[test]
    fn metrics_inequalities(
        pairs in prop::collection::vec((0.1..30.0f64, prop_oneof![Just(0.0), 0.1..30.0f64]), 1..50),
        extra in prop::collection::vec(1.0..5.0f64, 1..5),
    ) {
        prop_assume!(pairs.iter().any(|p| p.1 > 0.0));
        let n = pairs.len();
        let pred = Raster::new(1, n, 1, pairs.iter().map(|p| p.0).collect()).unwrap();
        let gt = Raster::new(1, n, 1, pairs.iter().map(|p| p.1).collect()).unwrap();
        let mut th = DEFAULT_THRESHOLDS.to_vec();
        th.extend(extra);
        th.push(1e300);
        let m = compute_metrics(&pred, &gt, None, &th).unwrap();
        prop_assert!(m.rmse + 1e-9 >= m.mae && m.mae >= 0.0);
        for pair in m.delta.windows(2) {
            prop_assert!(pair[0].threshold < pair[1].threshold);
            prop_assert!(pair[0].percent <= pair[1].percent);
        }
        prop_assert!(m.delta.iter().all(|d| (0.0..=100.0).contains(&d.percent)));
        prop_assert_eq!(m.delta.last().unwrap().percent, 100.0);
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>(), rate in 0.01..1.0f64) {
        let gt = Raster::from_fn(9, 11, 1, |r, c, _| 1.0 + (r * 11 + c) as f64).unwrap();
        prop_assert_eq!(sample_random(&gt, rate, seed).unwrap(), sample_random(&gt, rate, seed).unwrap());
        let s = sample_random(&gt, 0.5, seed).unwrap();
        prop_assert_eq!(
            eval::apply_pseudo_holes(&s, 3, (1.0, 4.0), seed).unwrap(),
            eval::apply_pseudo_holes(&s, 3, (1.0, 4.0), seed).unwrap()
        );
        let spec = eval::SceneSpec::random(8, 8, seed).with_noise(0.05);
        prop_assert_eq!(eval::synth_scene(&spec, seed).unwrap(), eval::synth_scene(&spec, seed).unwrap());
    }
}
