use std::collections::BTreeSet;
use std::path::PathBuf;

use layerprobe::pipeline::{load_config, parse_config, ExperimentKind};
use serde_json::Value;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn schema() -> Value {
    let text = std::fs::read_to_string(repo().join("schema/experiment.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn shipped_configs_load_and_validate() {
    let mut seen = BTreeSet::new();
    for entry in std::fs::read_dir(repo().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(path.file_stem().unwrap(), cfg.experiment.name());
        assert!(cfg.output_dir.is_absolute() || cfg.output_dir.starts_with(repo()));
        seen.insert(cfg.experiment.name());
    }
    assert_eq!(seen.len(), ExperimentKind::ALL.len());
}

#[test]
fn schema_lists_exactly_the_accepted_fields() {
    let s = schema();
    let props = &s["properties"];
    let path = std::fs::read_to_string(repo().join("configs/mi_word.json")).unwrap();
    let cfg = parse_config(&path, "mi_word.json").unwrap();
    let full = serde_json::to_value(&cfg).unwrap();

    assert_eq!(keys(props), keys(&full));
    for section in ["paths", "sample_plan", "params"] {
        assert_eq!(
            keys(&props[section]["properties"]),
            keys(&full[section]),
            "{section}"
        );
    }
    assert_eq!(
        keys(&props["params"]["properties"]["kmeans"]["properties"]),
        keys(&full["params"]["kmeans"])
    );
    let fbank = serde_json::to_value(layerprobe::dsp::FbankConfig::default()).unwrap();
    assert_eq!(
        keys(&props["params"]["properties"]["fbank"]["properties"]),
        keys(&fbank)
    );

    let names: BTreeSet<String> = props["experiment"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let kinds: BTreeSet<String> = ExperimentKind::ALL.iter().map(|k| k.name().to_string()).collect();
    assert_eq!(names, kinds);
}

#[test]
fn unknown_fields_are_rejected_at_every_level() {
    for doc in [
        r#"{"experiment": "cca_intra", "paths": {"layer_dir": "l"}, "sample_plan": {"seed": 1, "target": 3}, "output_dir": "o", "extra": 1}"#,
        r#"{"experiment": "cca_intra", "paths": {"layer_dir": "l", "nope": "x"}, "sample_plan": {"seed": 1, "target": 3}, "output_dir": "o"}"#,
        r#"{"experiment": "cca_intra", "paths": {"layer_dir": "l"}, "sample_plan": {"seed": 1, "target": 3, "sets": 2}, "output_dir": "o"}"#,
        r#"{"experiment": "cca_intra", "paths": {"layer_dir": "l"}, "sample_plan": {"seed": 1, "target": 3}, "params": {"kmeans": {"batch": 3}}, "output_dir": "o"}"#,
        r#"{"experiment": "cca_intra", "paths": {"layer_dir": "l"}, "sample_plan": {"seed": 1, "target": 3}, "params": {"fbank": {"mels": 3}}, "output_dir": "o"}"#,
    ] {
        let err = parse_config(doc, "cfg").unwrap_err();
        assert!(err.is_usage(), "{err}");
    }
}
