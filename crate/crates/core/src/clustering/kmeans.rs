use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{read_matrix, write_atomic, write_matrix, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    /// Points per update. A batch covering all points runs exact Lloyd steps.
    pub batch_size: usize,
    /// Defaults to `max(100, ceil(100·k / batch_size))`.
    pub max_iter: Option<usize>,
    pub seed: u64,
    /// Seedings tried; the one with the lowest inertia on the seeding
    /// subsample is refined.
    pub n_init: usize,
    /// Candidates drawn per greedy seeding step; defaults to `2 + ln k`.
    pub local_trials: Option<usize>,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            batch_size: 1024,
            max_iter: None,
            seed: 0,
            n_init: 3,
            local_trials: None,
        }
    }
}

impl KMeansConfig {
    pub fn iterations(&self, k: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| 100usize.max((100 * k).div_ceil(self.batch_size.max(1))))
    }

    pub fn trials(&self, k: usize) -> usize {
        self.local_trials
            .unwrap_or_else(|| 2 + (k as f64).ln().floor() as usize)
            .max(1)
    }
}

/// Fitted centroids. `history` holds the inertia measured at each
/// iteration's assignment step (over the batch, or over all points in
/// full-batch mode).
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Array2<f64>,
    pub k: usize,
    /// Sum of squared distances of all training points to their centroid.
    pub inertia: f64,
    pub seed: u64,
    pub history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_rows(x: ArrayView2<f64>, rows: &[usize], centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    rows.par_iter().map(|&i| nearest(x.row(i), centroids)).collect()
}

/// Greedy k-means++ seeding on the given candidate rows: each step draws
/// `trials` points with probability proportional to squared distance and
/// keeps the one that lowers the total most. Returns the centroids and the
/// final potential over the candidates.
fn kmeans_pp(
    x: ArrayView2<f64>,
    candidates: &[usize],
    k: usize,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, f64) {
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = candidates[rng.random_range(0..candidates.len())];
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = candidates
        .par_iter()
        .map(|&i| sq_dist(x.row(i), x.row(first)))
        .collect();
    for c in 1..k {
        let picks: Vec<usize> = match WeightedIndex::new(&d2) {
            Ok(dist) => (0..trials).map(|_| candidates[dist.sample(rng)]).collect(),
            // Every candidate coincides with a chosen centre.
            Err(_) => vec![candidates[rng.random_range(0..candidates.len())]],
        };
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for &pick in &picks {
            let updated: Vec<f64> = d2
                .par_iter()
                .zip(candidates.par_iter())
                .map(|(&d, &i)| d.min(sq_dist(x.row(i), x.row(pick))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, updated, pick));
            }
        }
        let (_, updated, pick) = best.expect("at least one trial");
        centroids.row_mut(c).assign(&x.row(pick));
        d2 = updated;
    }
    (centroids, d2.iter().sum())
}

/// Moves each empty cluster onto the point (among `rows`) farthest from its
/// current centroid, using each point at most once.
fn reseed_empty(
    x: ArrayView2<f64>,
    rows: &[usize],
    assigned: &[(usize, f64)],
    empty: &[usize],
    centroids: &mut Array2<f64>,
) {
    if empty.is_empty() {
        return;
    }
    let mut by_distance: Vec<usize> = (0..rows.len()).collect();
    by_distance.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
    for (&c, &j) in empty.iter().zip(&by_distance) {
        centroids.row_mut(c).assign(&x.row(rows[j]));
    }
}

pub fn fit_kmeans(x: ArrayView2<f64>, k: usize, cfg: &KMeansConfig) -> Result<KMeansModel> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Input(format!("k-means needs n >= k, got n={n}, k={k}")));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Input("batch size must be at least 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("k-means input", "non-finite entry"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_size = n.min((3 * cfg.batch_size).max(3 * k));
    let candidates: Vec<usize> = if init_size == n {
        (0..n).collect()
    } else {
        let mut c = index::sample(&mut rng, n, init_size).into_vec();
        c.sort_unstable();
        c
    };
    let trials = cfg.trials(k);
    let mut centroids = None;
    for _ in 0..cfg.n_init.max(1) {
        let (c, potential) = kmeans_pp(x, &candidates, k, trials, &mut rng);
        if centroids.as_ref().is_none_or(|(_, p)| potential < *p) {
            centroids = Some((c, potential));
        }
    }
    let mut centroids = centroids.expect("at least one seeding").0;

    let full_batch = cfg.batch_size >= n;
    let all_rows: Vec<usize> = (0..n).collect();
    let mut counts = vec![0u64; k];
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;

    for iter in 0..cfg.iterations(k) {
        let batch: Vec<usize> = if full_batch {
            all_rows.clone()
        } else {
            index::sample(&mut rng, n, cfg.batch_size).into_vec()
        };
        let assigned = assign_rows(x, &batch, &centroids);
        history.push(assigned.iter().map(|a| a.1).sum());

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut batch_counts = vec![0u64; k];
        for (&i, &(c, _)) in batch.iter().zip(&assigned) {
            sums.row_mut(c).scaled_add(1.0, &x.row(i));
            batch_counts[c] += 1;
        }

        if full_batch {
            let labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
            if previous.as_ref() == Some(&labels) {
                break;
            }
            previous = Some(labels);
            let mut empty = Vec::new();
            for (c, &count) in batch_counts.iter().enumerate() {
                if count == 0 {
                    empty.push(c);
                } else {
                    let mean = &sums.row(c) / count as f64;
                    centroids.row_mut(c).assign(&mean);
                }
            }
            reseed_empty(x, &batch, &assigned, &empty, &mut centroids);
        } else {
            for c in 0..k {
                if batch_counts[c] == 0 {
                    continue;
                }
                let total = counts[c] + batch_counts[c];
                let old = centroids.row(c).to_owned() * (counts[c] as f64);
                centroids.row_mut(c).assign(&((old + sums.row(c)) / total as f64));
                counts[c] = total;
            }
            // Only after a full pass worth of points can a cluster count as empty.
            if (iter + 1) * cfg.batch_size >= n {
                let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
                reseed_empty(x, &batch, &assigned, &empty, &mut centroids);
                for &c in &empty {
                    counts[c] = 1;
                }
            }
        }
    }

    let inertia = assign_rows(x, &all_rows, &centroids).iter().map(|a| a.1).sum();
    Ok(KMeansModel {
        centroids,
        k,
        inertia,
        seed: cfg.seed,
        history,
    })
}

/// Index of the nearest centroid for each row; ties go to the lowest index.
pub fn assign(model: &KMeansModel, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    if x.ncols() != model.centroids.ncols() {
        return Err(Error::Shape(format!(
            "points have dimension {}, centroids {}",
            x.ncols(),
            model.centroids.ncols()
        )));
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    Ok(assign_rows(x, &rows, &model.centroids)
        .into_iter()
        .map(|a| a.0)
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct KMeansMeta {
    k: usize,
    dim: usize,
    inertia: f64,
    seed: u64,
}

fn meta_path(npy: &Path) -> PathBuf {
    npy.with_extension("kmeans.json")
}

/// Centroids as npy plus `<stem>.kmeans.json` metadata.
pub fn save_kmeans(model: &KMeansModel, npy_path: impl AsRef<Path>) -> Result<()> {
    let npy_path = npy_path.as_ref();
    write_matrix(&FeatureMatrix::new(model.centroids.clone())?, npy_path)?;
    let meta = KMeansMeta {
        k: model.k,
        dim: model.centroids.ncols(),
        inertia: model.inertia,
        seed: model.seed,
    };
    write_atomic(
        &meta_path(npy_path),
        &serde_json::to_vec_pretty(&meta).expect("meta serializes"),
    )
}

pub fn load_kmeans(npy_path: impl AsRef<Path>) -> Result<KMeansModel> {
    let npy_path = npy_path.as_ref();
    let centroids = read_matrix(npy_path)?.into_data();
    let mp = meta_path(npy_path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: KMeansMeta = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}:{}", mp.display(), e.line()), e.to_string()))?;
    if meta.k != centroids.nrows() || meta.dim != centroids.ncols() {
        return Err(Error::Shape(format!(
            "metadata says {}x{}, centroids are {}x{}",
            meta.k,
            meta.dim,
            centroids.nrows(),
            centroids.ncols()
        )));
    }
    Ok(KMeansModel {
        centroids,
        k: meta.k,
        inertia: meta.inertia,
        seed: meta.seed,
        history: Vec::new(),
    })
}

/// Mean of each column; the exact single-cluster solution.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
