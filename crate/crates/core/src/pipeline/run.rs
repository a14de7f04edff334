use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::corpus::{stack_frames, LayerCorpus};
use super::report::{LayerReport, LayerStat};
use crate::cca::{cca_similarity, Ridge};
use crate::clustering::{mi_probe, KMeansConfig};
use crate::dsp::{align_streams, log_mel_spectrogram, read_wav, FbankConfig};
use crate::error::{Error, Result};
use crate::eval::{edit_distance_wordsim, word_discrimination_ap, word_similarity_eval, TaskResult};
use crate::segments::{
    build_pooled_set, derive_seed, draw_index_sets, draw_sample_sets, filter_word_records, keep_top_labels,
    type_embeddings, PoolStrategy, PooledSet, SamplePlan,
};
use crate::tensor_io::{
    read_alignments, read_embedding_table, read_matrix, read_wordsim_benchmark, FeatureMatrix, SegmentKind,
    SegmentRecord, WordSimBenchmark,
};

const DEV_STREAM: u64 = 0xDE5;
const KMEANS_STREAM: u64 = 0x4B4D_0000;

/// Runs one experiment over every selected layer and aggregates the
/// per-sample-set values. Inputs are only read.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<LayerReport> {
    cfg.validate()?;
    let ctx = |e: Error| e.context(cfg.experiment.name());
    let corpus = LayerCorpus::discover(cfg.paths.layer_dir.as_ref().expect("validated")).map_err(ctx)?;
    let layers = selected_layers(cfg, &corpus).map_err(ctx)?;
    log::info!(
        "{}: {} layers, {} utterances, {} sample sets",
        cfg.experiment,
        layers.len(),
        corpus.utterances.len(),
        cfg.sample_plan.n_sets
    );

    let mut report = LayerReport {
        experiment: cfg.experiment,
        metric: cfg.experiment.metric().to_string(),
        model_tag: cfg.model_tag.clone(),
        layers: Vec::new(),
        baselines: BTreeMap::new(),
        tasks: Vec::new(),
    };
    use ExperimentKind::*;
    let outcome = match cfg.experiment {
        CcaIntra => cca_intra(cfg, &corpus, &layers),
        CcaInter => cca_inter(cfg, &corpus, &layers),
        CcaMel => cca_mel(cfg, &corpus, &layers),
        CcaAgwe | CcaGlove => cca_words(cfg, &corpus, &layers),
        MiPhone => mi(cfg, &corpus, &layers, SegmentKind::Phone),
        MiWord => mi(cfg, &corpus, &layers, SegmentKind::Word),
        WordDisc => word_disc(cfg, &corpus, &layers, &mut report.tasks),
        WordSim => word_sim(cfg, &corpus, &layers, &mut report),
    };
    report.layers = outcome.map_err(ctx)?;
    Ok(report)
}

fn selected_layers(cfg: &ExperimentConfig, corpus: &LayerCorpus) -> Result<Vec<usize>> {
    let Some(wanted) = &cfg.params.layers else {
        return Ok(corpus.layers.clone());
    };
    let mut out = Vec::new();
    for &l in wanted {
        if !corpus.layers.contains(&l) {
            return Err(Error::Config(format!(
                "params.layers asks for layer {l}, {} has layers {:?}",
                corpus.root.display(),
                corpus.layers
            )));
        }
        if !out.contains(&l) {
            out.push(l);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("params.layers is empty".into()));
    }
    Ok(out)
}

fn per_layer<F>(layers: &[usize], f: F) -> Result<Vec<LayerStat>>
where
    F: Fn(usize) -> Result<LayerStat> + Sync,
{
    layers
        .par_iter()
        .map(|&l| {
            let stat = f(l).map_err(|e| e.context(format!("layer {l}")))?;
            log::info!("layer {l}: mean {:.4}, spread {:.4}", stat.mean, stat.spread);
            Ok(stat)
        })
        .collect()
}

// ---- frame-level CCA ----

fn cca_over_sets(x: &Array2<f64>, y: &Array2<f64>, plan: &SamplePlan, ridge: Ridge) -> Result<Vec<f64>> {
    let drawn = draw_index_sets(x.nrows(), None, plan)?;
    drawn
        .sets
        .iter()
        .map(|idx| {
            cca_similarity(
                x.select(Axis(0), idx).view(),
                y.select(Axis(0), idx).view(),
                ridge,
            )
        })
        .collect()
}

fn check_rows(a: &[FeatureMatrix], b: &[FeatureMatrix], utts: &[String], what: &str) -> Result<()> {
    for ((x, y), u) in a.iter().zip(b).zip(utts) {
        if x.rows() != y.rows() {
            return Err(Error::Alignment(format!(
                "utterance {u}: {} frames vs {} frames in {what}",
                x.rows(),
                y.rows()
            )));
        }
    }
    Ok(())
}

fn cca_intra(cfg: &ExperimentConfig, corpus: &LayerCorpus, layers: &[usize]) -> Result<Vec<LayerStat>> {
    if !corpus.layers.contains(&0) {
        return Err(Error::Precondition(format!(
            "{} has no layer_0 files to compare against",
            corpus.root.display()
        )));
    }
    let reference = corpus.load_all(0)?;
    let y = stack_frames(&reference)?;
    per_layer(layers, |l| {
        let parts = corpus.load_all(l)?;
        check_rows(&parts, &reference, &corpus.utterances, "layer 0")?;
        let x = stack_frames(&parts)?;
        LayerStat::from_sets(l, cca_over_sets(&x, &y, &cfg.sample_plan, cfg.params.ridge)?)
    })
}

fn cca_inter(cfg: &ExperimentConfig, corpus: &LayerCorpus, layers: &[usize]) -> Result<Vec<LayerStat>> {
    let other = LayerCorpus::discover(cfg.paths.layer_dir_b.as_ref().expect("validated"))?;
    if other.utterances != corpus.utterances {
        return Err(Error::Precondition(format!(
            "{} and {} hold different utterances",
            corpus.root.display(),
            other.root.display()
        )));
    }
    if other.layers != corpus.layers {
        return Err(Error::Precondition(format!(
            "layer counts differ: {:?} vs {:?}",
            corpus.layers, other.layers
        )));
    }
    per_layer(layers, |l| {
        let a = corpus.load_all(l)?;
        let b = other.load_all(l)?;
        check_rows(&a, &b, &corpus.utterances, "the second model")?;
        let (x, y) = (stack_frames(&a)?, stack_frames(&b)?);
        LayerStat::from_sets(l, cca_over_sets(&x, &y, &cfg.sample_plan, cfg.params.ridge)?)
    })
}

fn load_fbank(cfg: &ExperimentConfig, utts: &[String]) -> Result<Vec<FeatureMatrix>> {
    utts.par_iter()
        .map(|u| {
            if let Some(dir) = &cfg.paths.fbank_dir {
                return read_matrix(dir.join(format!("{u}.npy")));
            }
            let path = cfg
                .paths
                .audio_dir
                .as_ref()
                .expect("validated")
                .join(format!("{u}.wav"));
            let (wave, sr) = read_wav(&path)?;
            let fb = cfg.params.fbank.clone().unwrap_or_else(|| FbankConfig::new(sr));
            if fb.sample_rate_hz != sr {
                return Err(Error::data(
                    path.display().to_string(),
                    format!("sample rate {sr} Hz, config expects {} Hz", fb.sample_rate_hz),
                ));
            }
            log_mel_spectrogram(&wave, &fb).map_err(|e| e.context(path.display().to_string()))
        })
        .collect()
}

fn cca_mel(cfg: &ExperimentConfig, corpus: &LayerCorpus, layers: &[usize]) -> Result<Vec<LayerStat>> {
    let fbank = load_fbank(cfg, &corpus.utterances)?;
    per_layer(layers, |l| {
        let parts = corpus.load_all(l)?;
        let mut xs = Vec::with_capacity(parts.len());
        let mut ys = Vec::with_capacity(parts.len());
        for ((m, f), u) in parts.iter().zip(&fbank).zip(&corpus.utterances) {
            let (a, b) = align_streams(m, f).map_err(|e| e.context(format!("utterance {u}")))?;
            if a.rows() > 0 {
                xs.push(a);
                ys.push(b);
            }
        }
        let (x, y) = (stack_frames(&xs)?, stack_frames(&ys)?);
        LayerStat::from_sets(l, cca_over_sets(&x, &y, &cfg.sample_plan, cfg.params.ridge)?)
    })
}

// ---- segment-level recipes ----

fn load_records(path: &Path, corpus: &LayerCorpus, kind: SegmentKind) -> Result<Vec<SegmentRecord>> {
    let all = read_alignments(path)?;
    let of_kind: Vec<SegmentRecord> = all.into_iter().filter(|r| r.kind == kind).collect();
    let n = of_kind.len();
    let kept: Vec<SegmentRecord> = of_kind
        .into_iter()
        .filter(|r| corpus.has_utterance(&r.utterance_id))
        .collect();
    if kept.len() < n {
        log::warn!(
            "{}: {} of {n} {kind} records refer to utterances missing from {}; skipped",
            path.display(),
            n - kept.len(),
            corpus.root.display()
        );
    }
    if kept.is_empty() {
        return Err(Error::Input(format!(
            "{}: no {kind} records for utterances in {}",
            path.display(),
            corpus.root.display()
        )));
    }
    Ok(kept)
}

fn utterances_of<'a>(sets: impl IntoIterator<Item = &'a Vec<SegmentRecord>>) -> BTreeSet<&'a str> {
    sets.into_iter()
        .flatten()
        .map(|r| r.utterance_id.as_str())
        .collect()
}

fn pool(
    frames: &HashMap<String, FeatureMatrix>,
    records: &[SegmentRecord],
    kind: SegmentKind,
) -> Result<PooledSet> {
    build_pooled_set(frames, records, kind, PoolStrategy::default_for(kind))
}

fn cca_words(cfg: &ExperimentConfig, corpus: &LayerCorpus, layers: &[usize]) -> Result<Vec<LayerStat>> {
    let table_path = cfg.paths.embeddings.as_ref().expect("validated");
    let table = read_embedding_table(table_path)?;
    let folded = table.case_folded();
    let words = load_records(
        cfg.paths.alignments.as_ref().expect("validated"),
        corpus,
        SegmentKind::Word,
    )?;
    let n = words.len();
    let words: Vec<SegmentRecord> = words
        .into_iter()
        .filter(|r| folded.contains_key(&r.label.to_lowercase()))
        .collect();
    log::info!("{} of {n} word segments have an embedding", words.len());
    if words.is_empty() {
        return Err(Error::Coverage(format!(
            "no word segment label appears in {}",
            table_path.display()
        )));
    }
    let sets = draw_sample_sets(&words, &cfg.sample_plan)?.sets;
    let targets: Vec<Array2<f64>> = sets
        .iter()
        .map(|set| {
            let mut y = Array2::zeros((set.len(), table.dim()));
            for (mut row, r) in y.rows_mut().into_iter().zip(set) {
                row.assign(&ndarray::ArrayView1::from(folded[&r.label.to_lowercase()]));
            }
            y
        })
        .collect();
    let utts = utterances_of(&sets);
    per_layer(layers, |l| {
        let frames = corpus.load(l, utts.iter().copied())?;
        let values = sets
            .iter()
            .zip(&targets)
            .map(|(set, y)| {
                let x = pool(&frames, set, SegmentKind::Word)?;
                cca_similarity(x.vectors.data().view(), y.view(), cfg.params.ridge)
            })
            .collect::<Result<Vec<f64>>>()?;
        LayerStat::from_sets(l, values)
    })
}

fn mi(
    cfg: &ExperimentConfig,
    corpus: &LayerCorpus,
    layers: &[usize],
    kind: SegmentKind,
) -> Result<Vec<LayerStat>> {
    let mut train = load_records(cfg.paths.alignments.as_ref().expect("validated"), corpus, kind)?;
    let mut dev = load_records(
        cfg.paths.dev_alignments.as_ref().expect("validated"),
        corpus,
        kind,
    )?;
    if let Some(max) = cfg.max_labels() {
        train = keep_top_labels(&train, max);
        let kept: BTreeSet<&str> = train.iter().map(|r| r.label.as_str()).collect();
        dev.retain(|r| kept.contains(r.label.as_str()));
        if dev.is_empty() {
            return Err(Error::Precondition(
                "no dev segment carries one of the kept train labels".into(),
            ));
        }
    }
    let plan = &cfg.sample_plan;
    let dev_plan = SamplePlan {
        seed: derive_seed(plan.seed, DEV_STREAM),
        n_sets: plan.n_sets,
        target: cfg.dev_target(),
        balancing: plan.balancing,
    };
    let train_sets = draw_sample_sets(&train, plan)?.sets;
    let dev_sets = draw_sample_sets(&dev, &dev_plan)?.sets;
    let utts = utterances_of(train_sets.iter().chain(&dev_sets));
    let k = cfg.k();
    per_layer(layers, |l| {
        let frames = corpus.load(l, utts.iter().copied())?;
        let mut values = Vec::with_capacity(plan.n_sets);
        let (mut h_label, mut h_cluster) = (0.0, 0.0);
        for (s, (tr, dv)) in train_sets.iter().zip(&dev_sets).enumerate() {
            let km = KMeansConfig {
                seed: derive_seed(plan.seed ^ cfg.params.kmeans.seed, KMEANS_STREAM + s as u64),
                ..cfg.params.kmeans.clone()
            };
            let probe = mi_probe(&pool(&frames, tr, kind)?, &pool(&frames, dv, kind)?, k, &km)
                .map_err(|e| e.context(format!("sample set {s}")))?;
            values.push(probe.mi_nats);
            h_label += probe.h_label;
            h_cluster += probe.h_cluster;
        }
        let n = values.len() as f64;
        let mut stat = LayerStat::from_sets(l, values)?;
        stat.extra.insert("h_label".into(), h_label / n);
        stat.extra.insert("h_cluster".into(), h_cluster / n);
        Ok(stat)
    })
}

fn word_disc(
    cfg: &ExperimentConfig,
    corpus: &LayerCorpus,
    layers: &[usize],
    tasks: &mut Vec<TaskResult>,
) -> Result<Vec<LayerStat>> {
    let words = load_records(
        cfg.paths.alignments.as_ref().expect("validated"),
        corpus,
        SegmentKind::Word,
    )?;
    let mut words = filter_word_records(&words, cfg.params.min_chars, cfg.params.min_dur_s);
    if let Some(max) = cfg.max_labels() {
        words = keep_top_labels(&words, max);
    }
    if words.is_empty() {
        return Err(Error::Input(format!(
            "no word segment has at least {} characters and {} s",
            cfg.params.min_chars, cfg.params.min_dur_s
        )));
    }
    let sets = draw_sample_sets(&words, &cfg.sample_plan)?.sets;
    let utts = utterances_of(&sets);
    let rows: Vec<(LayerStat, Vec<TaskResult>)> = layers
        .par_iter()
        .map(|&l| {
            let run = || -> Result<(LayerStat, Vec<TaskResult>)> {
                let frames = corpus.load(l, utts.iter().copied())?;
                let mut values = Vec::new();
                let mut rows = Vec::new();
                for (s, set) in sets.iter().enumerate() {
                    let r = word_discrimination_ap(&pool(&frames, set, SegmentKind::Word)?)
                        .map_err(|e| e.context(format!("sample set {s}")))?;
                    values.push(r.ap);
                    rows.push(TaskResult {
                        layer: l,
                        set: s,
                        task: "word_disc".into(),
                        rho_or_ap: r.ap,
                        coverage: 1.0,
                        n: r.n_pairs,
                    });
                }
                Ok((LayerStat::from_sets(l, values)?, rows))
            };
            run().map_err(|e| e.context(format!("layer {l}")))
        })
        .collect::<Result<_>>()?;
    let mut stats = Vec::new();
    for (stat, r) in rows {
        stats.push(stat);
        tasks.extend(r);
    }
    Ok(stats)
}

/// Benchmark files, expanding directories to their `*.csv` files in name
/// order.
pub fn benchmark_files(entries: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in entries {
        if entry.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(entry)
                .map_err(|e| Error::io(entry, e))?
                .filter_map(|f| f.ok().map(|f| f.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(entry.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Input("no word-similarity benchmark files found".into()));
    }
    Ok(out)
}

fn word_sim(
    cfg: &ExperimentConfig,
    corpus: &LayerCorpus,
    layers: &[usize],
    report: &mut LayerReport,
) -> Result<Vec<LayerStat>> {
    let benches: Vec<WordSimBenchmark> = benchmark_files(&cfg.paths.benchmarks)?
        .iter()
        .map(read_wordsim_benchmark)
        .collect::<Result<_>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let edit: Vec<f64> = benches
        .iter()
        .map(|b| edit_distance_wordsim(b).map(|r| r.rho))
        .collect::<Result<_>>()?;
    report.baselines.insert("edit_distance".into(), mean(&edit));
    if let Some(path) = &cfg.paths.embeddings {
        let table = read_embedding_table(path)?;
        let rhos: Vec<f64> = benches
            .iter()
            .map(|b| word_similarity_eval(&table, b).map(|r| r.rho))
            .collect::<Result<_>>()?;
        let stem = path
            .file_stem()
            .map_or("table".into(), |s| s.to_string_lossy().into_owned());
        report.baselines.insert(format!("embeddings:{stem}"), mean(&rhos));
    }

    let words = load_records(
        cfg.paths.alignments.as_ref().expect("validated"),
        corpus,
        SegmentKind::Word,
    )?;
    let sets = draw_sample_sets(&words, &cfg.sample_plan)?.sets;
    let utts = utterances_of(&sets);
    let rows: Vec<(LayerStat, Vec<TaskResult>)> = layers
        .par_iter()
        .map(|&l| {
            let run = || -> Result<(LayerStat, Vec<TaskResult>)> {
                let frames = corpus.load(l, utts.iter().copied())?;
                let mut values = Vec::new();
                let mut rows = Vec::new();
                for (s, set) in sets.iter().enumerate() {
                    let table = type_embeddings(&pool(&frames, set, SegmentKind::Word)?)?;
                    let mut rhos = Vec::new();
                    for b in &benches {
                        let r = word_similarity_eval(&table, b)
                            .map_err(|e| e.context(format!("sample set {s}")))?;
                        rhos.push(r.rho);
                        rows.push(TaskResult {
                            layer: l,
                            set: s,
                            task: b.name.clone(),
                            rho_or_ap: r.rho,
                            coverage: r.coverage,
                            n: r.n_covered as u64,
                        });
                    }
                    values.push(mean(&rhos));
                }
                Ok((LayerStat::from_sets(l, values)?, rows))
            };
            run().map_err(|e| e.context(format!("layer {l}")))
        })
        .collect::<Result<_>>()?;
    let mut stats = Vec::new();
    for (stat, r) in rows {
        stats.push(stat);
        report.tasks.extend(r);
    }
    Ok(stats)
}
