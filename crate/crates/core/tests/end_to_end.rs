use psd_core::correction::{write_scorer_bundle, FileScorer};
use psd_core::eval::{compute_metrics, sample_random, synth_scene, SceneSpec, DEFAULT_THRESHOLDS};
use psd_core::scorer::{scorer_by_name, GuidedScorer, HeuristicScorer};
use psd_core::*;

fn scene(seed: u64) -> (eval::SyntheticScene, SparseDepth) {
    let spec = SceneSpec::random_disparity(48, 48, seed).with_noise(0.05);
    let s = synth_scene(&spec, seed).unwrap();
    let sparse = sample_random(&s.gt_depth, 0.03, seed).unwrap();
    (s, sparse)
}

fn run(s: &eval::SyntheticScene, sparse: &SparseDepth, scorer: &dyn ResidualScorer) -> PipelineOutput {
    let inputs = PipelineInputs {
        relative: &s.relative_depth,
        sparse,
        intrinsics: &s.intrinsics,
        rgb: Some(&s.rgb),
        features: None,
    };
    run_pipeline(&inputs, &PipelineConfig::default(), scorer).unwrap()
}

#[test]
fn guided_pipeline_keeps_measurements_and_does_not_hurt() {
    for seed in 0..4 {
        let (s, sparse) = scene(seed);
        let out = run(&s, &sparse, &GuidedScorer::default());
        assert!(out.fallback_features);
        for i in sparse.measured_indices() {
            assert_eq!(out.final_depth.data()[i], sparse.value(i));
            assert_eq!(out.initial.data()[i], sparse.value(i));
        }
        assert!(out.final_depth.data().iter().all(|&d| d.is_finite() && d > 0.0));
        let rel = |d: &Raster| compute_metrics(d, &s.gt_depth, None, &DEFAULT_THRESHOLDS).unwrap().rel;
        assert!(rel(&out.final_depth) <= rel(&out.initial), "seed {seed}");
    }
}

#[test]
fn heuristic_scorer_is_identity_at_default_range() {
    let (s, sparse) = scene(7);
    let out = run(&s, &sparse, &HeuristicScorer::default());
    for (a, b) in out.final_depth.data().iter().zip(out.initial.data()) {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn scorer_bundle_reproduces_in_process_result() {
    let (s, sparse) = scene(3);
    let direct = run(&s, &sparse, scorer_by_name("guided").unwrap().as_ref());
    let dir = tempfile::tempdir().unwrap();
    write_scorer_bundle(dir.path(), &direct.scorer).unwrap();
    let loaded = FileScorer::new(dir.path()).load().unwrap();
    let via_files = apply_correction(&direct.initial, &loaded, &CorrectionParams::default()).unwrap();
    // the bundle stores f32
    for (a, b) in via_files.data().iter().zip(direct.final_depth.data()) {
        assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
    }
}

#[test]
fn supplied_features_take_precedence() {
    let (s, sparse) = scene(11);
    let features = fallback_features(&s.rgb).unwrap();
    let inputs = PipelineInputs {
        relative: &s.relative_depth,
        sparse: &sparse,
        intrinsics: &s.intrinsics,
        rgb: None,
        features: Some(&features),
    };
    let out = run_pipeline(&inputs, &PipelineConfig::default(), &GuidedScorer::default()).unwrap();
    assert!(!out.fallback_features);
    assert!(out.report().contains("features=supplied"));
    assert_eq!(out.final_depth, run(&s, &sparse, &GuidedScorer::default()).final_depth);

    let none = PipelineInputs { rgb: None, features: None, ..inputs };
    assert!(matches!(
        run_pipeline(&none, &PipelineConfig::default(), &GuidedScorer::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn every_mode_reproduces_dense_input() {
    let (s, _) = scene(5);
    let dense = SparseDepth::new(s.gt_depth.clone()).unwrap();
    let features = fallback_features(&s.rgb).unwrap();
    for mode in [PropagationMode::Serial3dThen2d, PropagationMode::Serial2dThen3d, PropagationMode::ParallelMean] {
        let cfg = PropagationConfig { mode, ..Default::default() };
        let out = run_dual_propagation(&s.gt_depth, &dense, &s.intrinsics, &features, &cfg).unwrap();
        assert_eq!(out, s.gt_depth, "{mode}");
    }
}
