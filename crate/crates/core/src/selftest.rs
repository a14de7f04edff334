//! End-to-end check on the synthetic model: the recipes must recover the
//! planted layer structure, and sample-set spreads must stay small.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::pipeline::{
    curve_csv, run_experiment, ExperimentConfig, ExperimentKind, LayerReport, Paths, ProbeParams,
};
use crate::segments::{Balancing, SamplePlan};
use crate::synthetic::{generate_corpus, SyntheticCorpus, SyntheticSpec};

pub const CCA_SPREAD_MAX: f64 = 0.02;
pub const MI_SPREAD_MAX: f64 = 0.07;
pub const AP_SPREAD_MAX: f64 = 0.02;
pub const TIME_BUDGET: Duration = Duration::from_secs(120);

/// Frames per CCA sample set.
pub const CCA_FRAMES: usize = 15_000;
/// Phone segments per MI train and dev sample set.
pub const MI_TRAIN_SEGMENTS: usize = 15_000;
pub const MI_DEV_SEGMENTS: usize = 6_000;
pub const MI_CLUSTERS: usize = 100;
/// Word segments per word-discrimination sample set.
pub const WORD_DISC_SEGMENTS: usize = 2_400;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
    pub reports: Vec<LayerReport>,
    pub elapsed: Duration,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// The selftest configuration of each experiment it runs.
pub fn selftest_config(
    kind: ExperimentKind,
    corpus: &SyntheticCorpus,
    seed: u64,
    out: &Path,
) -> ExperimentConfig {
    let mut paths = Paths {
        layer_dir: Some(corpus.layer_dir.clone()),
        ..Paths::default()
    };
    let mut params = ProbeParams::default();
    let mut plan = SamplePlan::new(seed, CCA_FRAMES);
    match kind {
        ExperimentKind::MiPhone | ExperimentKind::MiWord => {
            paths.alignments = Some(corpus.train_alignments.clone());
            paths.dev_alignments = Some(corpus.dev_alignments.clone());
            plan.target = MI_TRAIN_SEGMENTS;
            plan.balancing = Balancing::PerLabelEqual;
            params.dev_target = Some(MI_DEV_SEGMENTS);
            params.k = Some(MI_CLUSTERS);
        }
        ExperimentKind::WordDisc => {
            paths.alignments = Some(corpus.train_alignments.clone());
            plan.target = WORD_DISC_SEGMENTS;
            plan.balancing = Balancing::PerLabelEqual;
        }
        _ => {}
    }
    ExperimentConfig {
        experiment: kind,
        model_tag: "synthetic".into(),
        paths,
        sample_plan: plan,
        params,
        output_dir: out.join(kind.name()),
    }
}

/// Generates the synthetic model under `workdir` (a temporary directory when
/// `None`) and runs the checks.
pub fn run_selftest(workdir: Option<&Path>, seed: u64) -> Result<SelftestReport> {
    let start = Instant::now();
    let tmp;
    let root: PathBuf = match workdir {
        Some(p) => p.to_path_buf(),
        None => {
            tmp = tempfile::tempdir().map_err(|e| crate::Error::io(std::env::temp_dir(), e))?;
            tmp.path().to_path_buf()
        }
    };
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let corpus = generate_corpus(&spec, root.join("corpus"))?;
    let out = root.join("out");
    let trough = spec.planted_trough();
    let peak = spec.planted_peak();

    let cca = run_experiment(&selftest_config(ExperimentKind::CcaIntra, &corpus, seed, &out))?;
    let mi = run_experiment(&selftest_config(ExperimentKind::MiPhone, &corpus, seed, &out))?;
    let ap = run_experiment(&selftest_config(ExperimentKind::WordDisc, &corpus, seed, &out))?;
    let cca_again = run_experiment(&selftest_config(ExperimentKind::CcaIntra, &corpus, seed, &out))?;

    let mut checks = Vec::new();
    let cca_min = cca.argmin_layer();
    checks.push(check(
        "cca_intra minimum at planted trough",
        cca_min == Some(trough),
        format!(
            "planted layer {trough}, found {cca_min:?}; curve {:.3?}",
            cca.means()
        ),
    ));
    let mi_max = mi.argmax_layer();
    checks.push(check(
        "mi_phone maximum at planted peak",
        mi_max == Some(peak),
        format!("planted layer {peak}, found {mi_max:?}; curve {:.3?}", mi.means()),
    ));
    for (name, r, limit) in [
        ("cca_intra spread", &cca, CCA_SPREAD_MAX),
        ("mi_phone spread", &mi, MI_SPREAD_MAX),
        ("word_disc spread", &ap, AP_SPREAD_MAX),
    ] {
        let s = r.max_spread();
        checks.push(check(
            name,
            s < limit,
            format!("max spread {s:.4} (limit {limit})"),
        ));
    }
    checks.push(check(
        "repeat run gives identical curve.csv",
        curve_csv(&cca)? == curve_csv(&cca_again)?,
        "cca_intra run twice with the same seed".into(),
    ));
    let elapsed = start.elapsed();
    checks.push(check(
        "runtime",
        elapsed < TIME_BUDGET,
        format!(
            "{:.1} s (budget {} s)",
            elapsed.as_secs_f64(),
            TIME_BUDGET.as_secs()
        ),
    ));
    Ok(SelftestReport {
        checks,
        reports: vec![cca, mi, ap],
        elapsed,
    })
}
