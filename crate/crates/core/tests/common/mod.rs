//! Reference implementations used by the integration tests. Each one is
//! written from the textbook definition and shares no code with the crate.

#![allow(dead_code)]

use std::path::Path;

use layerprobe::pipeline::{ExperimentConfig, ExperimentKind, Paths, ProbeParams};
use layerprobe::segments::{Balancing, SamplePlan};
use layerprobe::synthetic::{generate_corpus, SyntheticCorpus, SyntheticSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() as f64;
    let ca = centre(a);
    let cb = centre(b);
    ca.transpose() * cb / (n - 1.0)
}

fn centre(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = a.clone();
    for j in 0..c.ncols() {
        let m = c.column(j).mean();
        c.column_mut(j).add_scalar_mut(-m);
    }
    c
}

/// Canonical correlations as square roots of the generalized eigenvalues of
/// `Σxy Σyy⁻¹ Σyx a = ρ² Σxx a`, reduced to a symmetric problem with a
/// Cholesky factor of `Σxx`. Sorted descending.
pub fn cca_oracle(x: &Array2<f64>, y: &Array2<f64>, eps: f64) -> Vec<f64> {
    let x = to_dmatrix(x);
    let y = to_dmatrix(y);
    let sxx = covariance(&x, &x) + DMatrix::identity(x.ncols(), x.ncols()) * eps;
    let syy = covariance(&y, &y) + DMatrix::identity(y.ncols(), y.ncols()) * eps;
    let sxy = covariance(&x, &y);
    let l = sxx.cholesky().expect("positive definite").l();
    let l_inv = l.try_inverse().expect("invertible");
    let syy_inv = syy.try_inverse().expect("invertible");
    let m = &l_inv * &sxy * syy_inv * sxy.transpose() * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut rho: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0).sqrt().min(1.0))
        .collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    rho.truncate(x.ncols().min(y.ncols()));
    rho
}

/// `Σ p(c,l) ln(p(c,l) / (p(c) p(l)))` over probabilities.
pub fn mi_oracle(counts: &[Vec<u64>]) -> (f64, f64, f64) {
    let total: u64 = counts.iter().flatten().sum();
    let n = total as f64;
    let rows = counts.len();
    let cols = counts[0].len();
    let pc: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let pl: Vec<f64> = (0..cols)
        .map(|j| counts.iter().map(|r| r[j]).sum::<u64>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for c in 0..rows {
        for l in 0..cols {
            let p = counts[c][l] as f64 / n;
            if p > 0.0 {
                mi += p * (p / (pc[c] * pl[l])).ln();
            }
        }
    }
    let h = |ps: &[f64]| -ps.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    (mi, h(&pl), h(&pc))
}

/// Average precision by sweeping every distinct score as a threshold.
/// Within a tied group the positives are credited after all tied negatives.
pub fn ap_oracle(scores: &[f64], same: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let total_pos = same.iter().filter(|&&s| s).count() as f64;
    let mut sum = 0.0;
    for t in thresholds {
        let above_pos = (0..scores.len()).filter(|&i| same[i] && scores[i] > t).count() as f64;
        let neg_at_or_above = (0..scores.len()).filter(|&i| !same[i] && scores[i] >= t).count() as f64;
        let tied_pos = (0..scores.len()).filter(|&i| same[i] && scores[i] == t).count();
        for r in 1..=tied_pos {
            let hits = above_pos + r as f64;
            sum += hits / (hits + neg_at_or_above);
        }
    }
    sum / total_pos
}

/// Ranks where tied values receive the mean of the positions they occupy,
/// found by counting rather than sorting.
pub fn rank_oracle(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of the rank oracle's output.
pub fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = rank_oracle(xs);
    let ry = rank_oracle(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Wagner-Fischer edit distance over chars.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

pub fn small(dir: &Path) -> SyntheticCorpus {
    generate_corpus(&SyntheticSpec::small(), dir.join("corpus")).unwrap()
}

/// Small-sample settings for each experiment on the `small()` corpus.
pub fn experiment_config(kind: ExperimentKind, c: &SyntheticCorpus, out: &Path) -> ExperimentConfig {
    let mut paths = Paths {
        layer_dir: Some(c.layer_dir.clone()),
        ..Paths::default()
    };
    let mut params = ProbeParams::default();
    let mut plan = SamplePlan::new(17, 1500);
    plan.n_sets = 2;
    match kind {
        ExperimentKind::CcaInter => paths.layer_dir_b = c.layer_dir_b.clone(),
        ExperimentKind::CcaMel => paths.audio_dir = c.audio_dir.clone(),
        ExperimentKind::CcaAgwe | ExperimentKind::CcaGlove => {
            paths.alignments = Some(c.train_alignments.clone());
            paths.embeddings = Some(if kind == ExperimentKind::CcaAgwe {
                c.agwe.clone()
            } else {
                c.glove.clone()
            });
            plan.target = 150;
        }
        ExperimentKind::MiPhone | ExperimentKind::MiWord => {
            paths.alignments = Some(c.train_alignments.clone());
            paths.dev_alignments = Some(c.dev_alignments.clone());
            plan.target = 400;
            params.k = Some(20);
            params.dev_target = Some(200);
        }
        ExperimentKind::WordDisc => {
            paths.alignments = Some(c.train_alignments.clone());
            plan.target = 120;
            plan.balancing = Balancing::PerLabelEqual;
        }
        ExperimentKind::WordSim => {
            paths.alignments = Some(c.train_alignments.clone());
            paths.embeddings = Some(c.agwe.clone());
            paths.benchmarks = vec![c.benchmarks_dir.clone()];
            plan.target = 200;
        }
        ExperimentKind::CcaIntra => {}
    }
    ExperimentConfig {
        experiment: kind,
        model_tag: "small".into(),
        paths,
        sample_plan: plan,
        params,
        output_dir: out.join(kind.name()),
    }
}
