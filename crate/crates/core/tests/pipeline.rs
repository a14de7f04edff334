mod common;

use common::{experiment_config as config, small};
use layerprobe::pipeline::{
    curve_csv, emit_report, layer_file_name, run_experiment, ExperimentKind, LayerCorpus,
};
use layerprobe::segments::Balancing;
use layerprobe::synthetic::{generate_corpus, SyntheticSpec};
use layerprobe::Error;

#[test]
fn every_experiment_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    for kind in ExperimentKind::ALL {
        let cfg = config(kind, &c, dir.path());
        let a = run_experiment(&cfg).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(a.layers.len(), 9, "{kind}");
        assert_eq!(a.metric, kind.metric());
        assert!(a
            .layers
            .iter()
            .all(|l| l.n_sets == 2 && l.spread >= 0.0 && l.mean.is_finite()));
        let files = emit_report(&a, &cfg, &cfg.output_dir, false).unwrap();
        let first = std::fs::read(&files[0]).unwrap();
        let b = run_experiment(&cfg).unwrap();
        emit_report(&b, &cfg, &cfg.output_dir, true).unwrap();
        assert_eq!(std::fs::read(&files[0]).unwrap(), first, "{kind}");
        match kind {
            ExperimentKind::WordSim => {
                assert!(a.baselines.contains_key("edit_distance"));
                assert!(cfg.output_dir.join("tasks.csv").exists());
            }
            ExperimentKind::WordDisc => assert!(cfg.output_dir.join("tasks.csv").exists()),
            ExperimentKind::MiPhone => {
                let h = a.layers[0].extra["h_label"];
                assert!(a.layers.iter().all(|l| l.mean <= h + 1e-12));
            }
            _ => {}
        }
    }
}

#[test]
fn seed_changes_the_draw() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let mut cfg = config(ExperimentKind::CcaIntra, &c, dir.path());
    let a = run_experiment(&cfg).unwrap();
    cfg.sample_plan.seed += 1;
    let b = run_experiment(&cfg).unwrap();
    assert_ne!(curve_csv(&a).unwrap(), curve_csv(&b).unwrap());
}

#[test]
fn copies_of_layer_zero_give_a_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let corpus = LayerCorpus::discover(&c.layer_dir).unwrap();
    for u in &corpus.utterances {
        for &l in &corpus.layers[1..] {
            std::fs::copy(corpus.path(u, 0), corpus.path(u, l)).unwrap();
            let meta = |p: std::path::PathBuf| p.with_extension("meta.json");
            std::fs::copy(meta(corpus.path(u, 0)), meta(corpus.path(u, l))).unwrap();
        }
    }
    let r = run_experiment(&config(ExperimentKind::CcaIntra, &c, dir.path())).unwrap();
    for l in &r.layers {
        assert!((l.mean - 1.0).abs() < 1e-6, "layer {}: {}", l.layer, l.mean);
    }
}

#[test]
fn model_against_itself_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let mut cfg = config(ExperimentKind::CcaInter, &c, dir.path());
    cfg.paths.layer_dir_b = cfg.paths.layer_dir.clone();
    let r = run_experiment(&cfg).unwrap();
    assert!(
        r.layers.iter().all(|l| (l.mean - 1.0).abs() < 1e-6),
        "{:?}",
        r.means()
    );
}

#[test]
fn mi_peak_at_layer_three_of_six() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        seed: 9,
        train_utterances: 60,
        dev_utterances: 30,
        max_frames: 600,
        local_weight: vec![0.9, 0.7, 0.5, 0.5, 0.7, 0.9],
        label_weight: vec![0.1, 0.35, 0.7, 0.35, 0.2, 0.1],
        ..SyntheticSpec::default()
    };
    assert_eq!(spec.planted_peak(), 3);
    let c = generate_corpus(&spec, dir.path().join("corpus")).unwrap();
    let mut cfg = config(ExperimentKind::MiPhone, &c, dir.path());
    cfg.sample_plan.target = 4000;
    cfg.sample_plan.balancing = Balancing::PerLabelEqual;
    cfg.params.k = Some(60);
    cfg.params.dev_target = Some(2000);
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.layers.len(), 7);
    assert_eq!(r.argmax_layer(), Some(3), "{:?}", r.means());
}

#[test]
fn layer_subset_and_errors_carry_context() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let mut cfg = config(ExperimentKind::CcaIntra, &c, dir.path());
    cfg.params.layers = Some(vec![0, 4]);
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.layers.iter().map(|l| l.layer).collect::<Vec<_>>(), vec![0, 4]);

    cfg.params.layers = Some(vec![12]);
    assert!(run_experiment(&cfg).unwrap_err().is_usage());

    let mut cfg = config(ExperimentKind::CcaIntra, &c, dir.path());
    let corpus = LayerCorpus::discover(&c.layer_dir).unwrap();
    let victim = corpus.root.join(&corpus.utterances[1]).join(layer_file_name(3));
    std::fs::write(&victim, b"not an npy file").unwrap();
    cfg.sample_plan.seed = 1;
    let err = run_experiment(&cfg).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("cca_intra") && text.contains("layer 3"), "{text}");
    assert!(matches!(err.root(), Error::Format { .. }), "{err:?}");
}

#[test]
fn missing_paths_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let mut cfg = config(ExperimentKind::WordSim, &c, dir.path());
    cfg.paths.benchmarks.clear();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.is_usage());
    assert!(err.to_string().contains("benchmarks"), "{err}");
}
