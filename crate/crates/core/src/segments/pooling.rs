use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{
    read_matrix, write_matrix, EmbeddingTable, FeatureMatrix, FrameSpec, SegmentKind, SegmentRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolStrategy {
    /// Mean over every frame of the segment.
    Mean,
    /// Mean over the central third; the outer thirds are discarded.
    CentralThirdMean,
}

impl PoolStrategy {
    /// Central third for phones, all frames for words.
    pub fn default_for(kind: SegmentKind) -> Self {
        match kind {
            SegmentKind::Phone => PoolStrategy::CentralThirdMean,
            SegmentKind::Word => PoolStrategy::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSource {
    pub utterance_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Pooled segment vectors with their labels and provenance, one row per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSet {
    pub vectors: FeatureMatrix,
    pub labels: Vec<String>,
    pub kind: SegmentKind,
    pub sources: Vec<SegmentSource>,
}

impl PooledSet {
    pub fn new(
        vectors: FeatureMatrix,
        labels: Vec<String>,
        kind: SegmentKind,
        sources: Vec<SegmentSource>,
    ) -> Result<Self> {
        if vectors.rows() != labels.len() || labels.len() != sources.len() {
            return Err(Error::Shape(format!(
                "pooled set has {} rows, {} labels and {} sources",
                vectors.rows(),
                labels.len(),
                sources.len()
            )));
        }
        Ok(PooledSet {
            vectors,
            labels,
            kind,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Half-open range of frames whose centres fall in `[start_s, end_s)`.
///
/// When no centre falls inside, the single frame nearest the interval
/// midpoint is returned, so every segment pools at least one frame.
pub fn frames_for_interval(
    spec: &FrameSpec,
    n_frames: usize,
    start_s: f64,
    end_s: f64,
) -> Result<Range<usize>> {
    if end_s.is_nan() || start_s.is_nan() || end_s <= start_s {
        return Err(Error::Precondition(format!(
            "interval end {end_s} must exceed start {start_s}"
        )));
    }
    if n_frames == 0 {
        return Err(Error::Range("matrix has no frames".into()));
    }
    let (start_ms, end_ms) = (start_s * 1000.0, end_s * 1000.0);
    let half = spec.stride_ms / 2.0;
    let first_edge = spec.center_ms(0) - half;
    let last_edge = spec.center_ms(n_frames - 1) + half;
    if end_ms <= first_edge || start_ms >= last_edge {
        return Err(Error::Range(format!(
            "interval {start_s}..{end_s} s lies outside the frames' span {:.4}..{:.4} s",
            first_edge / 1000.0,
            last_edge / 1000.0
        )));
    }

    // Tolerance absorbs decimal-seconds rounding at exact frame centres.
    const TOL: f64 = 1e-9;
    let first_at_or_after = |ms: f64| -> usize {
        let x = ((ms - spec.offset_ms) / spec.stride_ms - TOL).ceil();
        x.clamp(0.0, n_frames as f64) as usize
    };
    let i0 = first_at_or_after(start_ms);
    let i1 = first_at_or_after(end_ms);
    if i0 < i1 {
        return Ok(i0..i1);
    }
    let mid = ((start_ms + end_ms) / 2.0 - spec.offset_ms) / spec.stride_ms;
    let i = mid.round().clamp(0.0, (n_frames - 1) as f64) as usize;
    Ok(i..i + 1)
}

/// Row sub-range actually averaged for a segment of `n` frames.
pub fn pooled_rows(range: Range<usize>, strategy: PoolStrategy) -> Range<usize> {
    match strategy {
        PoolStrategy::Mean => range,
        PoolStrategy::CentralThirdMean => {
            let n = range.end - range.start;
            let lo = n / 3;
            let hi = (2 * n).div_ceil(3);
            if lo < hi {
                range.start + lo..range.start + hi
            } else {
                let mid = range.start + n / 2;
                mid..mid + 1
            }
        }
    }
}

pub fn pool_segment(m: &FeatureMatrix, range: Range<usize>, strategy: PoolStrategy) -> Result<Array1<f64>> {
    if range.start >= range.end || range.end > m.rows() {
        return Err(Error::Precondition(format!(
            "pooling range {}..{} invalid for {} rows",
            range.start,
            range.end,
            m.rows()
        )));
    }
    let rows = pooled_rows(range, strategy);
    Ok(m.data()
        .slice(ndarray::s![rows, ..])
        .mean_axis(Axis(0))
        .expect("non-empty range"))
}

/// Pools every record of `kind` against its utterance's frame matrix.
/// Records of the other kind are skipped; output order follows `records`.
pub fn build_pooled_set(
    layers: &HashMap<String, FeatureMatrix>,
    records: &[SegmentRecord],
    kind: SegmentKind,
    strategy: PoolStrategy,
) -> Result<PooledSet> {
    let selected: Vec<&SegmentRecord> = records.iter().filter(|r| r.kind == kind).collect();
    if selected.is_empty() {
        return Err(Error::Input(format!("no {kind} records to pool")));
    }
    let missing: BTreeSet<&str> = selected
        .iter()
        .filter(|r| !layers.contains_key(&r.utterance_id))
        .map(|r| r.utterance_id.as_str())
        .collect();
    if !missing.is_empty() {
        let ids: Vec<&str> = missing.into_iter().collect();
        return Err(Error::Lookup(format!(
            "no representation matrix for utterance(s): {}",
            ids.join(", ")
        )));
    }

    let dim = layers[&selected[0].utterance_id].dim();
    let rows: Vec<Array1<f64>> = selected
        .par_iter()
        .map(|r| {
            let m = &layers[&r.utterance_id];
            let spec = m.frame_spec().ok_or_else(|| {
                Error::Precondition(format!("matrix for {} has no frame timing", r.utterance_id))
            })?;
            if m.dim() != dim {
                return Err(Error::Shape(format!(
                    "utterance {} has dimension {}, expected {dim}",
                    r.utterance_id,
                    m.dim()
                )));
            }
            let range = frames_for_interval(spec, m.rows(), r.start_s, r.end_s).map_err(|e| {
                e.context(format!(
                    "{} {:?} {}..{} s in {}",
                    r.kind, r.label, r.start_s, r.end_s, r.utterance_id
                ))
            })?;
            pool_segment(m, range, strategy)
        })
        .collect::<Result<_>>()?;

    let mut data = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in data.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(src);
    }
    let vectors = FeatureMatrix::new(data)?;
    let labels = selected.iter().map(|r| r.label.clone()).collect();
    let sources = selected
        .iter()
        .map(|r| SegmentSource {
            utterance_id: r.utterance_id.clone(),
            start_s: r.start_s,
            end_s: r.end_s,
        })
        .collect();
    PooledSet::new(vectors, labels, kind, sources)
}

/// Context-independent word vectors: the mean of every pooled instance of
/// each word, in order of first appearance.
pub fn type_embeddings(p: &PooledSet) -> Result<EmbeddingTable> {
    if p.kind != SegmentKind::Word {
        return Err(Error::Precondition(
            "type embeddings need word segments, got phone segments".into(),
        ));
    }
    let mut groups: IndexMap<&str, (Array1<f64>, usize)> = IndexMap::new();
    for (label, row) in p.labels.iter().zip(p.vectors.data().rows()) {
        let entry = groups
            .entry(label.as_str())
            .or_insert_with(|| (Array1::zeros(p.vectors.dim()), 0));
        entry.0 += &row;
        entry.1 += 1;
    }
    let mut table = EmbeddingTable::new(p.vectors.dim());
    for (label, (sum, count)) in groups {
        table.insert(label, (sum / count as f64).to_vec())?;
    }
    Ok(table)
}

/// `vectors.npy` -> `vectors.labels.tsv`.
pub fn labels_path(npy_path: &Path) -> PathBuf {
    npy_path.with_extension("labels.tsv")
}

/// Writes the matrix as npy and labels/provenance as a TSV sidecar.
pub fn write_pooled_set(p: &PooledSet, npy_path: impl AsRef<Path>) -> Result<()> {
    let npy_path = npy_path.as_ref();
    write_matrix(&p.vectors, npy_path)?;
    let mut out = format!("# kind={}\n# label\tutterance_id\tstart_s\tend_s\n", p.kind);
    for (label, src) in p.labels.iter().zip(&p.sources) {
        out.push_str(&format!(
            "{label}\t{}\t{}\t{}\n",
            src.utterance_id, src.start_s, src.end_s
        ));
    }
    crate::tensor_io::write_atomic(&labels_path(npy_path), out.as_bytes())
}

pub fn read_pooled_set(npy_path: impl AsRef<Path>) -> Result<PooledSet> {
    let npy_path = npy_path.as_ref();
    let vectors = read_matrix(npy_path)?;
    let tsv = labels_path(npy_path);
    let text = std::fs::read_to_string(&tsv).map_err(|e| Error::io(&tsv, e))?;
    let mut kind = None;
    let mut labels = Vec::new();
    let mut sources = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let loc = || format!("{}:{}", tsv.display(), idx + 1);
        if let Some(k) = line.strip_prefix("# kind=") {
            kind = Some(k.trim().parse().map_err(|m: String| Error::format(loc(), m))?);
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::format(loc(), "expected 4 tab-separated columns"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format(loc(), format!("{s:?} is not a number")))
        };
        labels.push(cols[0].to_string());
        sources.push(SegmentSource {
            utterance_id: cols[1].to_string(),
            start_s: num(cols[2])?,
            end_s: num(cols[3])?,
        });
    }
    let kind = kind.ok_or_else(|| Error::format(tsv.display().to_string(), "missing '# kind=' line"))?;
    PooledSet::new(vectors, labels, kind, sources)
}
