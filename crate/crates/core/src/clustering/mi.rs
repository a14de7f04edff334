use std::collections::HashSet;

use indexmap::IndexMap;
use ndarray::Array2;

use super::kmeans::{assign, fit_kmeans, KMeansConfig, KMeansModel};
use crate::error::{Error, Result};
use crate::segments::PooledSet;

/// Cluster x label co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Array2<u64>,
    pub label_names: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: Array2<u64>, label_names: Vec<String>) -> Result<Self> {
        if counts.ncols() != label_names.len() {
            return Err(Error::Shape(format!(
                "{} label columns but {} label names",
                counts.ncols(),
                label_names.len()
            )));
        }
        Ok(ContingencyTable { counts, label_names })
    }

    /// Tabulates `(cluster, label)` pairs. Labels become columns in order of
    /// first appearance.
    pub fn from_assignments(clusters: &[usize], n_clusters: usize, labels: &[String]) -> Result<Self> {
        if clusters.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} cluster ids for {} labels",
                clusters.len(),
                labels.len()
            )));
        }
        let mut columns: IndexMap<&str, usize> = IndexMap::new();
        for l in labels {
            let next = columns.len();
            columns.entry(l.as_str()).or_insert(next);
        }
        let mut counts = Array2::zeros((n_clusters, columns.len()));
        for (&c, l) in clusters.iter().zip(labels) {
            if c >= n_clusters {
                return Err(Error::Range(format!(
                    "cluster id {c} out of range for {n_clusters} clusters"
                )));
            }
            counts[[c, columns[l.as_str()]]] += 1;
        }
        let names = columns.keys().map(|s| s.to_string()).collect();
        ContingencyTable::new(counts, names)
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInformation {
    pub mi_nats: f64,
    /// Entropy of the label marginal (nats).
    pub h_label: f64,
    /// Entropy of the cluster marginal (nats).
    pub h_cluster: f64,
}

fn entropy(marginal: impl Iterator<Item = u64>, total: f64) -> f64 {
    -marginal
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in (maximum-likelihood) mutual information in nats. Empty cells
/// contribute nothing. No bias correction is applied, so small samples over
/// many cells overestimate the dependence.
pub fn mutual_information(t: &ContingencyTable) -> Result<MutualInformation> {
    let total = t.total();
    if total == 0 {
        return Err(Error::Input("contingency table has no counts".into()));
    }
    let n = total as f64;
    let rows: Vec<u64> = t.counts.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<u64> = t.counts.columns().into_iter().map(|c| c.sum()).collect();
    let h_cluster = entropy(rows.iter().copied(), n);
    let h_label = entropy(cols.iter().copied(), n);

    let mut mi = 0.0;
    for ((c, l), &count) in t.counts.indexed_iter() {
        if count == 0 {
            continue;
        }
        let joint = count as f64;
        mi += joint / n * (joint * n / (rows[c] as f64 * cols[l] as f64)).ln();
    }
    // Rounding can push the sum a few ulps outside its mathematical range.
    let mi = mi.clamp(0.0, h_label.min(h_cluster));
    Ok(MutualInformation {
        mi_nats: mi,
        h_label,
        h_cluster,
    })
}

#[derive(Debug, Clone)]
pub struct MiProbe {
    pub mi_nats: f64,
    pub h_label: f64,
    pub h_cluster: f64,
    pub model: KMeansModel,
    pub table: ContingencyTable,
}

/// Clusters `train` vectors into `k` groups, assigns each `dev` vector to its
/// nearest centroid and measures MI between dev cluster ids and dev labels.
pub fn mi_probe(train: &PooledSet, dev: &PooledSet, k: usize, cfg: &KMeansConfig) -> Result<MiProbe> {
    if train.kind != dev.kind {
        return Err(Error::Precondition(format!(
            "train segments are {} but dev segments are {}",
            train.kind, dev.kind
        )));
    }
    let train_labels: HashSet<&str> = train.labels.iter().map(String::as_str).collect();
    if !dev.labels.iter().any(|l| train_labels.contains(l.as_str())) {
        return Err(Error::Precondition(
            "train and dev label sets do not overlap".into(),
        ));
    }
    let model = fit_kmeans(train.vectors.data().view(), k, cfg)?;
    let clusters = assign(&model, dev.vectors.data().view())?;
    let table = ContingencyTable::from_assignments(&clusters, k, &dev.labels)?;
    let mi = mutual_information(&table)?;
    Ok(MiProbe {
        mi_nats: mi.mi_nats,
        h_label: mi.h_label,
        h_cluster: mi.h_cluster,
        model,
        table,
    })
}
