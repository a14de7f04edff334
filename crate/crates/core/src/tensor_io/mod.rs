//! Reading and writing everything the toolkit consumes or produces:
//! representation matrices (npy + JSON sidecar), segment alignments,
//! embedding tables and word-similarity benchmarks.

mod alignments;
mod embeddings;
mod npy;
mod wordsim;

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alignments::{parse_alignments, read_alignments, write_alignments, SegmentKind, SegmentRecord};
pub use embeddings::{parse_embedding_table, read_embedding_table, EmbeddingTable};
pub use npy::{decode_npy, encode_npy};
pub use wordsim::{parse_wordsim_benchmark, read_wordsim_benchmark, WordSimBenchmark, WordSimPair};

/// Timing of the rows of a frame-level matrix, in milliseconds.
///
/// Row `i` is centred at `offset_ms + i * stride_ms` and summarises
/// `receptive_field_ms` of signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub stride_ms: f64,
    pub receptive_field_ms: f64,
    pub offset_ms: f64,
}

impl FrameSpec {
    pub fn new(stride_ms: f64, receptive_field_ms: f64, offset_ms: f64) -> Self {
        FrameSpec {
            stride_ms,
            receptive_field_ms,
            offset_ms,
        }
    }

    /// Centre of frame `i` in milliseconds.
    pub fn center_ms(&self, i: usize) -> f64 {
        self.offset_ms + i as f64 * self.stride_ms
    }
}

/// An `n x d` matrix of frame or segment vectors, always held as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    frame_spec: Option<FrameSpec>,
    layer_id: Option<usize>,
}

impl FeatureMatrix {
    /// Validates shape (`n >= 1`, `d >= 1`) and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!(
                "matrix must have at least one row and one column, got {n}x{d}"
            )));
        }
        if let Some((idx, v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::data(
                format!("row {}, col {}", idx.0, idx.1),
                format!("non-finite entry {v}"),
            ));
        }
        Ok(FeatureMatrix {
            data,
            frame_spec: None,
            layer_id: None,
        })
    }

    pub fn with_frame_spec(mut self, spec: FrameSpec) -> Self {
        self.frame_spec = Some(spec);
        self
    }

    pub fn with_layer_id(mut self, layer_id: usize) -> Self {
        self.layer_id = Some(layer_id);
        self
    }

    pub(crate) fn set_frame_spec(&mut self, spec: Option<FrameSpec>) {
        self.frame_spec = spec;
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn frame_spec(&self) -> Option<&FrameSpec> {
        self.frame_spec.as_ref()
    }

    pub fn layer_id(&self) -> Option<usize> {
        self.layer_id
    }

    /// Copies the given rows (in the given order) into a new matrix.
    /// Frame timing is dropped because the rows are no longer contiguous.
    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureMatrix> {
        let data = self.data.select(Axis(0), rows);
        let mut m = FeatureMatrix::new(data)?;
        m.layer_id = self.layer_id;
        Ok(m)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MatrixMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    receptive_field_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_id: Option<usize>,
}

/// `layer_3.npy` -> `layer_3.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Loads an npy v1.0 matrix and its optional `.meta.json` sidecar.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let data = decode_npy(&bytes).map_err(|e| e.context(path.display().to_string()))?;
    let mut m = FeatureMatrix::new(data).map_err(|e| e.context(path.display().to_string()))?;

    let meta_path = sidecar_path(path);
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: MatrixMeta = serde_json::from_str(&text).map_err(|e| {
            Error::format(
                format!("{}:{}:{}", meta_path.display(), e.line(), e.column()),
                e.to_string(),
            )
        })?;
        m.frame_spec = match (meta.stride_ms, meta.receptive_field_ms, meta.offset_ms) {
            (Some(s), Some(r), Some(o)) => {
                if !(s > 0.0 && r > 0.0 && o.is_finite()) {
                    return Err(Error::data(
                        meta_path.display().to_string(),
                        "frame timing must have positive stride and receptive field",
                    ));
                }
                Some(FrameSpec::new(s, r, o))
            }
            (None, None, None) => None,
            _ => {
                return Err(Error::format(
                    meta_path.display().to_string(),
                    "stride_ms, receptive_field_ms and offset_ms must be given together",
                ))
            }
        };
        m.layer_id = meta.layer_id;
    }
    Ok(m)
}

/// Writes the matrix as little-endian float64 npy plus a sidecar when the
/// matrix carries timing or a layer id. A stale sidecar is removed otherwise.
pub fn write_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &encode_npy(&m.data))?;

    let meta_path = sidecar_path(path);
    if m.frame_spec.is_some() || m.layer_id.is_some() {
        let meta = MatrixMeta {
            stride_ms: m.frame_spec.map(|f| f.stride_ms),
            receptive_field_ms: m.frame_spec.map(|f| f.receptive_field_ms),
            offset_ms: m.frame_spec.map(|f| f.offset_ms),
            layer_id: m.layer_id,
        };
        let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        write_atomic(&meta_path, &json)?;
    } else if meta_path.exists() {
        std::fs::remove_file(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    }
    Ok(())
}

/// Writes via a temporary file in the target directory and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
