//! Synthetic layered "model" with known structure, written in the on-disk
//! layout the pipeline reads.
//!
//! Layer 0 holds i.i.d. local features `z`. Transformer layer `l` is
//! `M_l (a_l z + b_l P[phone] + c_l e_l)` with `c_l = sqrt(1 - a_l² - b_l²)`,
//! a random invertible mixing `M_l`, per-phone embeddings `P` and fresh noise
//! `e_l`. Every component has unit variance per dimension, so the canonical
//! correlations with layer 0 are about `a_l` and the phone signal-to-noise
//! ratio is `b_l² / (1 - b_l²)`.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::write_wav;
use crate::error::{Error, Result};
use crate::pipeline::layer_file_name;
use crate::segments::derive_seed;
use crate::tensor_io::{
    write_alignments, write_atomic, write_matrix, EmbeddingTable, FeatureMatrix, FrameSpec, SegmentKind,
    SegmentRecord,
};

/// 39-phone inventory used for labels and word spellings.
pub const PHONES: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY",
    "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y",
    "Z", "ZH",
];

pub const STRIDE_MS: f64 = 20.0;
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub dim: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    /// Upper bound on frames per utterance; words are appended while they fit.
    pub max_frames: usize,
    pub vocabulary: usize,
    /// Weight of layer-0 features in transformer layers 1..=L.
    pub local_weight: Vec<f64>,
    /// Weight of the phone embedding in transformer layers 1..=L.
    pub label_weight: Vec<f64>,
    /// Also write a second model sharing `z` and phones but not noise.
    pub second_model: bool,
    pub audio: bool,
    pub benchmark_pairs: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 2024,
            dim: 16,
            train_utterances: 150,
            dev_utterances: 60,
            max_frames: 1000,
            vocabulary: 120,
            local_weight: vec![0.95, 0.8, 0.6, 0.35, 0.45, 0.6, 0.8, 0.9],
            label_weight: vec![0.1, 0.3, 0.5, 0.6, 0.7, 0.5, 0.3, 0.2],
            second_model: false,
            audio: false,
            benchmark_pairs: 40,
        }
    }
}

impl SyntheticSpec {
    /// A small corpus with every input file, for exercising all recipes.
    pub fn small() -> Self {
        SyntheticSpec {
            train_utterances: 12,
            dev_utterances: 6,
            max_frames: 300,
            vocabulary: 30,
            second_model: true,
            audio: true,
            benchmark_pairs: 20,
            ..SyntheticSpec::default()
        }
    }

    pub fn n_layers(&self) -> usize {
        self.local_weight.len()
    }

    /// Transformer layer least similar to layer 0.
    pub fn planted_trough(&self) -> usize {
        argbest(&self.local_weight, |a, b| a < b) + 1
    }

    /// Transformer layer with the strongest phone signal.
    pub fn planted_peak(&self) -> usize {
        argbest(&self.label_weight, |a, b| a > b) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_weight.len() != self.label_weight.len() || self.local_weight.is_empty() {
            return Err(Error::Config(
                "local_weight and label_weight need the same non-zero length".into(),
            ));
        }
        for (l, (a, b)) in self.local_weight.iter().zip(&self.label_weight).enumerate() {
            if !(*a >= 0.0 && *b >= 0.0 && a * a + b * b <= 1.0) {
                return Err(Error::Config(format!(
                    "layer {}: weights ({a}, {b}) need a, b >= 0 and a² + b² <= 1",
                    l + 1
                )));
            }
        }
        if self.dim == 0 || self.vocabulary < 2 || self.train_utterances == 0 || self.dev_utterances == 0 {
            return Err(Error::Config(
                "dim, utterance counts must be positive and vocabulary at least 2".into(),
            ));
        }
        if self.max_frames < 9 * 9 {
            return Err(Error::Config(
                "max_frames must fit at least one word (81 frames)".into(),
            ));
        }
        Ok(())
    }
}

fn argbest(xs: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if better(x, xs[best]) {
            best = i;
        }
    }
    best
}

/// Where the generated files live.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub root: PathBuf,
    pub layer_dir: PathBuf,
    pub layer_dir_b: Option<PathBuf>,
    pub train_alignments: PathBuf,
    pub dev_alignments: PathBuf,
    /// Word vectors built from phone embeddings (acoustic-phonetic proxy).
    pub agwe: PathBuf,
    /// Random "meaning" vectors that drive the benchmark scores.
    pub glove: PathBuf,
    pub benchmarks_dir: PathBuf,
    pub audio_dir: Option<PathBuf>,
}

struct Word {
    label: String,
    phones: Vec<usize>,
}

struct Utterance {
    id: String,
    /// Phone id per frame.
    frames: Vec<usize>,
    records: Vec<SegmentRecord>,
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

fn vocabulary(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Word> {
    let mut words: Vec<Word> = Vec::with_capacity(spec.vocabulary);
    while words.len() < spec.vocabulary {
        let n = rng.random_range(5..=7);
        let phones: Vec<usize> = (0..n).map(|_| rng.random_range(0..PHONES.len())).collect();
        let label: String = phones.iter().map(|&p| PHONES[p]).collect();
        if words.iter().all(|w| w.label != label) {
            words.push(Word { label, phones });
        }
    }
    words
}

fn utterance(id: String, words: &[Word], max_frames: usize, rng: &mut ChaCha8Rng) -> Utterance {
    let secs = |f: usize| f as f64 * STRIDE_MS / 1000.0;
    let mut frames = Vec::new();
    let mut records = Vec::new();
    loop {
        let w = words.choose(rng).expect("non-empty vocabulary");
        let durations: Vec<usize> = w.phones.iter().map(|_| rng.random_range(5..=9)).collect();
        if frames.len() + durations.iter().sum::<usize>() > max_frames {
            break;
        }
        let word_start = frames.len();
        for (&p, &d) in w.phones.iter().zip(&durations) {
            let start = frames.len();
            frames.extend(std::iter::repeat_n(p, d));
            records.push(SegmentRecord {
                utterance_id: id.clone(),
                start_s: secs(start),
                end_s: secs(frames.len()),
                label: PHONES[p].to_string(),
                kind: SegmentKind::Phone,
            });
        }
        records.push(SegmentRecord {
            utterance_id: id.clone(),
            start_s: secs(word_start),
            end_s: secs(frames.len()),
            label: w.label.clone(),
            kind: SegmentKind::Word,
        });
    }
    Utterance { id, frames, records }
}

fn frame_spec() -> FrameSpec {
    FrameSpec::new(STRIDE_MS, 25.0, 12.5)
}

fn write_layer(path: &Path, data: Array2<f64>, layer: usize) -> Result<()> {
    let m = FeatureMatrix::new(data)?
        .with_frame_spec(frame_spec())
        .with_layer_id(layer);
    write_matrix(&m, path)
}

/// Writes one model's layers for every utterance. `z` and the phone
/// embeddings are shared; mixing matrices and noise come from `model_seed`.
fn write_model(
    spec: &SyntheticSpec,
    dir: &Path,
    utts: &[Utterance],
    z: &[Array2<f64>],
    phone_emb: &Array2<f64>,
    model_seed: u64,
) -> Result<()> {
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    // Scaled so the mixed features keep roughly unit variance.
    let mixing: Vec<Array2<f64>> = (0..spec.n_layers())
        .map(|_| gaussian(&mut rng, (d, d)) / (d as f64).sqrt())
        .collect();
    for (u, zu) in utts.iter().zip(z) {
        let udir = dir.join(&u.id);
        std::fs::create_dir_all(&udir).map_err(|e| Error::io(&udir, e))?;
        write_layer(&udir.join(layer_file_name(0)), zu.clone(), 0)?;
        let t = u.frames.len();
        let mut signal = Array2::zeros((t, d));
        for (mut row, &p) in signal.rows_mut().into_iter().zip(&u.frames) {
            row.assign(&phone_emb.row(p));
        }
        for (l, m) in mixing.iter().enumerate() {
            let a = spec.local_weight[l];
            let b = spec.label_weight[l];
            let c = (1.0 - a * a - b * b).max(0.0).sqrt();
            let noise = gaussian(&mut rng, (t, d));
            let mixed = (zu * a + &signal * b + noise * c).dot(&m.t());
            write_layer(&udir.join(layer_file_name(l + 1)), mixed, l + 1)?;
        }
    }
    Ok(())
}

/// Audio whose short-time energy follows the first layer-0 dimension, so
/// filter bank features correlate with layer 0.
fn write_audio(dir: &Path, u: &Utterance, z: &Array2<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
    let hop = (SAMPLE_RATE as f64 * STRIDE_MS / 1000.0) as usize;
    // Enough samples for exactly two 10 ms filter bank frames per layer frame.
    let n = hop * u.frames.len() + 240;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let f = (i / hop).min(u.frames.len() - 1);
            let amp = 0.05 * (0.5 * z[[f, 0]]).exp();
            amp * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    write_wav(dir.join(format!("{}.wav", u.id)), &samples, SAMPLE_RATE)
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

/// Generates the corpus under `root` (created if missing).
pub fn generate_corpus(spec: &SyntheticSpec, root: impl AsRef<Path>) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let root = root.as_ref().to_path_buf();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let phone_emb = gaussian(&mut rng, (PHONES.len(), spec.dim));
    let words = vocabulary(spec, &mut rng);

    let n_utts = spec.train_utterances + spec.dev_utterances;
    let utts: Vec<Utterance> = (0..n_utts)
        .map(|i| {
            let split = if i < spec.train_utterances { "train" } else { "dev" };
            utterance(format!("{split}-{i:04}"), &words, spec.max_frames, &mut rng)
        })
        .collect();
    let z: Vec<Array2<f64>> = utts
        .iter()
        .map(|u| gaussian(&mut rng, (u.frames.len(), spec.dim)))
        .collect();

    let layer_dir = root.join("model_a");
    write_model(spec, &layer_dir, &utts, &z, &phone_emb, derive_seed(spec.seed, 1))?;
    let layer_dir_b = if spec.second_model {
        let dir = root.join("model_b");
        write_model(spec, &dir, &utts, &z, &phone_emb, derive_seed(spec.seed, 2))?;
        Some(dir)
    } else {
        None
    };

    let (train, dev) = utts.split_at(spec.train_utterances);
    let train_alignments = root.join("train.tsv");
    let dev_alignments = root.join("dev.tsv");
    let flatten = |us: &[Utterance]| -> Vec<SegmentRecord> {
        us.iter().flat_map(|u| u.records.iter().cloned()).collect()
    };
    write_alignments(&flatten(train), &train_alignments)?;
    write_alignments(&flatten(dev), &dev_alignments)?;

    // Tables use lower-case keys; alignments use upper-case labels.
    let mut agwe = EmbeddingTable::new(spec.dim);
    let mut glove = EmbeddingTable::new(10);
    let mut meaning = Vec::with_capacity(words.len());
    for w in &words {
        let mut v = Array1::zeros(spec.dim);
        for &p in &w.phones {
            v += &phone_emb.row(p);
        }
        v /= w.phones.len() as f64;
        v.mapv_inplace(|x| x + 0.1 * rng.sample::<f64, _>(StandardNormal));
        agwe.insert(w.label.to_lowercase(), v.to_vec())?;
        let m: Array1<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        glove.insert(w.label.to_lowercase(), m.to_vec())?;
        meaning.push(m);
    }
    let agwe_path = root.join("agwe.txt");
    let glove_path = root.join("glove.txt");
    agwe.write(&agwe_path)?;
    glove.write(&glove_path)?;

    let benchmarks_dir = root.join("benchmarks");
    std::fs::create_dir_all(&benchmarks_dir).map_err(|e| Error::io(&benchmarks_dir, e))?;
    for name in ["simtoy", "reltoy"] {
        let mut out = String::from("word1,word2,score\n");
        for _ in 0..spec.benchmark_pairs {
            let i = rng.random_range(0..words.len());
            let mut j = rng.random_range(0..words.len() - 1);
            if j >= i {
                j += 1;
            }
            let score = 5.0 + 5.0 * cosine(&meaning[i], &meaning[j]) + rng.random_range(-0.5..0.5);
            out.push_str(&format!(
                "{},{},{:.2}\n",
                words[i].label.to_lowercase(),
                words[j].label.to_lowercase(),
                score
            ));
        }
        write_atomic(&benchmarks_dir.join(format!("{name}.csv")), out.as_bytes())?;
    }

    let audio_dir = if spec.audio {
        let dir = root.join("audio");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (u, zu) in utts.iter().zip(&z) {
            write_audio(&dir, u, zu, &mut rng)?;
        }
        Some(dir)
    } else {
        None
    };

    Ok(SyntheticCorpus {
        root,
        layer_dir,
        layer_dir_b,
        train_alignments,
        dev_alignments,
        agwe: agwe_path,
        glove: glove_path,
        benchmarks_dir,
        audio_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::LayerCorpus;
    use crate::tensor_io::{read_alignments, read_matrix};

    #[test]
    fn planted_layers() {
        let s = SyntheticSpec::default();
        assert_eq!(s.planted_trough(), 4);
        assert_eq!(s.planted_peak(), 5);
        let bad = SyntheticSpec {
            local_weight: vec![0.9],
            label_weight: vec![0.9],
            ..SyntheticSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn layout_and_alignments() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(&SyntheticSpec::small(), dir.path()).unwrap();
        let corpus = LayerCorpus::discover(&c.layer_dir).unwrap();
        assert_eq!(corpus.layers, (0..=8).collect::<Vec<_>>());
        assert_eq!(corpus.utterances.len(), 18);

        let recs = read_alignments(&c.train_alignments).unwrap();
        let words: Vec<_> = recs.iter().filter(|r| r.kind == SegmentKind::Word).collect();
        assert!(words
            .iter()
            .all(|w| w.label.len() >= 5 && w.duration_s() >= 0.5 - 1e-9));

        let u = &recs[0].utterance_id;
        let m = read_matrix(corpus.path(u, 3)).unwrap();
        assert_eq!(m.frame_spec(), Some(&frame_spec()));
        assert_eq!(m.layer_id(), Some(3));
        let last = recs
            .iter()
            .filter(|r| &r.utterance_id == u)
            .map(|r| r.end_s)
            .fold(0.0, f64::max);
        assert!((last * 1000.0 / STRIDE_MS - m.rows() as f64).abs() < 1e-9);
        assert!(c.audio_dir.unwrap().join(format!("{u}.wav")).exists());
    }

    #[test]
    fn deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            train_utterances: 2,
            dev_utterances: 1,
            max_frames: 200,
            ..SyntheticSpec::small()
        };
        generate_corpus(&spec, a.path()).unwrap();
        generate_corpus(&spec, b.path()).unwrap();
        for rel in [
            "train.tsv",
            "glove.txt",
            "model_b/dev-0002/layer_5.npy",
            "audio/train-0000.wav",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }
}
