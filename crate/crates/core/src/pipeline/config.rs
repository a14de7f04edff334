use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cca::Ridge;
use crate::clustering::KMeansConfig;
use crate::dsp::FbankConfig;
use crate::error::{Error, Result};
use crate::segments::{sizes, SamplePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CcaIntra,
    CcaInter,
    CcaMel,
    CcaAgwe,
    CcaGlove,
    MiPhone,
    MiWord,
    WordDisc,
    WordSim,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::CcaIntra,
        ExperimentKind::CcaInter,
        ExperimentKind::CcaMel,
        ExperimentKind::CcaAgwe,
        ExperimentKind::CcaGlove,
        ExperimentKind::MiPhone,
        ExperimentKind::MiWord,
        ExperimentKind::WordDisc,
        ExperimentKind::WordSim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CcaIntra => "cca_intra",
            ExperimentKind::CcaInter => "cca_inter",
            ExperimentKind::CcaMel => "cca_mel",
            ExperimentKind::CcaAgwe => "cca_agwe",
            ExperimentKind::CcaGlove => "cca_glove",
            ExperimentKind::MiPhone => "mi_phone",
            ExperimentKind::MiWord => "mi_word",
            ExperimentKind::WordDisc => "word_disc",
            ExperimentKind::WordSim => "word_sim",
        }
    }

    /// Name of the value reported per layer.
    pub fn metric(self) -> &'static str {
        match self {
            ExperimentKind::CcaIntra
            | ExperimentKind::CcaInter
            | ExperimentKind::CcaMel
            | ExperimentKind::CcaAgwe
            | ExperimentKind::CcaGlove => "pwcca_similarity",
            ExperimentKind::MiPhone | ExperimentKind::MiWord => "mutual_information_nats",
            ExperimentKind::WordDisc => "average_precision",
            ExperimentKind::WordSim => "mean_spearman_rho",
        }
    }

    /// Per-set sample size used when the config gives none.
    pub fn default_target(self) -> usize {
        match self {
            ExperimentKind::CcaIntra | ExperimentKind::CcaInter | ExperimentKind::CcaMel => sizes::CCA_FRAMES,
            ExperimentKind::CcaAgwe | ExperimentKind::CcaGlove => sizes::CCA_WORD_SEGMENTS,
            ExperimentKind::MiPhone => sizes::MI_PHONE_TRAIN,
            ExperimentKind::MiWord => sizes::MI_WORD_TRAIN,
            ExperimentKind::WordDisc => sizes::WORD_DISC_SEGMENTS,
            ExperimentKind::WordSim => usize::MAX,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

/// Input locations. Relative paths are resolved against the directory of
/// the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Per-utterance directories holding `layer_<i>.npy`.
    pub layer_dir: Option<PathBuf>,
    /// Second model for `cca_inter`.
    pub layer_dir_b: Option<PathBuf>,
    /// Segment alignments (train side for the MI experiments).
    pub alignments: Option<PathBuf>,
    /// Held-out alignments for the MI experiments.
    pub dev_alignments: Option<PathBuf>,
    /// Word embedding table: the CCA target for `cca_agwe`/`cca_glove`,
    /// an extra baseline for `word_sim`.
    pub embeddings: Option<PathBuf>,
    /// Word-similarity CSV files, or directories of them.
    pub benchmarks: Vec<PathBuf>,
    /// Precomputed `<utt>.npy` filter bank features.
    pub fbank_dir: Option<PathBuf>,
    /// `<utt>.wav` audio, used for `cca_mel` when no `fbank_dir` is given.
    pub audio_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    /// Cluster count; 500 for `mi_phone` and 5000 for `mi_word` when unset.
    pub k: Option<usize>,
    pub ridge: Ridge,
    pub min_chars: usize,
    pub min_dur_s: f64,
    /// Most frequent word labels kept; 500 for `mi_word`, 300 for `word_disc`.
    pub max_labels: Option<usize>,
    /// Dev sample size per set for the MI experiments.
    pub dev_target: Option<usize>,
    pub kmeans: KMeansConfig,
    pub fbank: Option<FbankConfig>,
    /// Restricts the run to these layer indices.
    pub layers: Option<Vec<usize>>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            k: None,
            ridge: Ridge::default(),
            min_chars: 5,
            min_dur_s: 0.5,
            max_labels: None,
            dev_target: None,
            kmeans: KMeansConfig::default(),
            fbank: None,
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model_tag: String,
    pub paths: Paths,
    pub sample_plan: SamplePlan,
    #[serde(default)]
    pub params: ProbeParams,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn k(&self) -> usize {
        self.params.k.unwrap_or(match self.experiment {
            ExperimentKind::MiWord => 5000,
            _ => 500,
        })
    }

    pub fn max_labels(&self) -> Option<usize> {
        self.params.max_labels.or(match self.experiment {
            ExperimentKind::MiWord => Some(500),
            ExperimentKind::WordDisc => Some(300),
            _ => None,
        })
    }

    pub fn dev_target(&self) -> usize {
        self.params.dev_target.unwrap_or(match self.experiment {
            ExperimentKind::MiWord => sizes::MI_WORD_DEV,
            _ => sizes::MI_PHONE_DEV,
        })
    }

    /// Checks that every path the experiment needs is set and that the
    /// numeric parameters are usable.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let p = &self.paths;
        let need = |field: &str, v: &Option<PathBuf>| -> Result<()> {
            if v.is_none() {
                return Err(Error::Config(format!(
                    "{} requires paths.{field}",
                    self.experiment
                )));
            }
            Ok(())
        };
        need("layer_dir", &p.layer_dir)?;
        match self.experiment {
            CcaIntra => {}
            CcaInter => need("layer_dir_b", &p.layer_dir_b)?,
            CcaMel => {
                if p.fbank_dir.is_none() && p.audio_dir.is_none() {
                    return Err(Error::Config(
                        "cca_mel requires paths.fbank_dir or paths.audio_dir".into(),
                    ));
                }
            }
            CcaAgwe | CcaGlove => {
                need("alignments", &p.alignments)?;
                need("embeddings", &p.embeddings)?;
            }
            MiPhone | MiWord => {
                need("alignments", &p.alignments)?;
                need("dev_alignments", &p.dev_alignments)?;
            }
            WordDisc => need("alignments", &p.alignments)?,
            WordSim => {
                need("alignments", &p.alignments)?;
                if p.benchmarks.is_empty() {
                    return Err(Error::Config("word_sim requires paths.benchmarks".into()));
                }
            }
        }
        self.sample_plan
            .validate()
            .map_err(|e| Error::Config(format!("sample_plan: {}", e.root())))?;
        if self.k() == 0 {
            return Err(Error::Config("params.k must be at least 1".into()));
        }
        if self.params.kmeans.batch_size == 0 {
            return Err(Error::Config(
                "params.kmeans.batch_size must be at least 1".into(),
            ));
        }
        if self.max_labels() == Some(0) || self.params.dev_target == Some(0) {
            return Err(Error::Config(
                "params.max_labels and params.dev_target must be at least 1".into(),
            ));
        }
        if self.params.min_dur_s.is_nan() || self.params.min_dur_s < 0.0 {
            return Err(Error::Config("params.min_dur_s must be non-negative".into()));
        }
        if let Some(f) = &self.params.fbank {
            f.validate()
                .map_err(|e| Error::Config(format!("params.fbank: {}", e.root())))?;
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.layer_dir,
            &mut paths.layer_dir_b,
            &mut paths.alignments,
            &mut paths.dev_alignments,
            &mut paths.embeddings,
            &mut paths.fbank_dir,
            &mut paths.audio_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        paths.benchmarks.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }
}

/// Parses a config document. Relative paths are kept as written.
pub fn parse_config(text: &str, source: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
    cfg.validate().map_err(|e| e.context(source.to_string()))?;
    Ok(cfg)
}

/// Reads and validates a config file, resolving relative paths against
/// the file's directory. A missing or unreadable file is a config error.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.resolve_paths(base);
    Ok(cfg)
}
