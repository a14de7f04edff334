//! Word discrimination (average precision over same/different segment pairs)
//! and word similarity (Spearman correlation against human judgements).

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segments::PooledSet;
use crate::tensor_io::{write_atomic, EmbeddingTable, SegmentKind, WordSimBenchmark};

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "vectors have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Input("cosine of a zero vector is undefined".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scores for a list of pairs and whether each pair is a true match.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairSet {
    pub scores: Vec<f64>,
    pub is_same: Vec<bool>,
}

impl ScoredPairSet {
    pub fn new(scores: Vec<f64>, is_same: Vec<bool>) -> Result<Self> {
        if scores.len() != is_same.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} match flags",
                scores.len(),
                is_same.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::data(format!("pair {i}"), "non-finite score"));
        }
        Ok(ScoredPairSet { scores, is_same })
    }

    pub fn n_pairs(&self) -> usize {
        self.scores.len()
    }

    pub fn n_positive(&self) -> usize {
        self.is_same.iter().filter(|&&s| s).count()
    }
}

/// Non-interpolated average precision. Pairs are ranked by descending score;
/// among tied scores, negatives are ranked first.
pub fn average_precision(pairs: &ScoredPairSet) -> Result<f64> {
    let positives = pairs.n_positive();
    if positives == 0 {
        return Err(Error::Input(
            "average precision needs at least one positive pair".into(),
        ));
    }
    let mut order: Vec<usize> = (0..pairs.n_pairs()).collect();
    order.sort_by(|&a, &b| {
        pairs.scores[b]
            .total_cmp(&pairs.scores[a])
            .then(pairs.is_same[a].cmp(&pairs.is_same[b]))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if pairs.is_same[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    pub ap: f64,
    pub n_pairs: u64,
    pub n_positive: u64,
}

fn unit_rows(p: &PooledSet) -> Result<Array2<f64>> {
    let mut rows = p.vectors.data().to_owned();
    for (i, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!(
                "segment {i} ({:?}) has a zero vector; cosine is undefined",
                p.labels[i]
            )));
        }
        row /= norm;
    }
    Ok(rows)
}

fn pair_score(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0)
}

/// Average precision of same-word detection over all segment pairs scored by
/// cosine similarity.
///
/// Only the positive scores are kept in memory; negatives are streamed and
/// counted against them, so the `m(m-1)/2` pairs are never materialized.
/// The value equals [`average_precision`] on the full pair list.
pub fn word_discrimination_ap(p: &PooledSet) -> Result<DiscriminationResult> {
    if p.kind != SegmentKind::Word {
        return Err(Error::Precondition(
            "word discrimination needs word segments".into(),
        ));
    }
    let m = p.len();
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 segments, got {m}")));
    }
    let unit = unit_rows(p)?;

    let mut positives: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let unit = &unit;
            ((i + 1)..m)
                .filter(move |&j| p.labels[i] == p.labels[j])
                .map(move |j| pair_score(unit.row(i), unit.row(j)))
        })
        .collect();
    if positives.is_empty() {
        return Err(Error::Input(
            "no two segments share a label; average precision is undefined".into(),
        ));
    }
    positives.sort_by(|a, b| b.total_cmp(a));
    let n_pos = positives.len();

    // negatives_at_or_above[j]: negatives scoring >= positives[j], built from
    // a histogram over the descending positive list.
    let histogram = (0..m)
        .into_par_iter()
        .fold(
            || vec![0u64; n_pos + 1],
            |mut hist, i| {
                for j in (i + 1)..m {
                    if p.labels[i] == p.labels[j] {
                        continue;
                    }
                    let s = pair_score(unit.row(i), unit.row(j));
                    // First positive index whose score is <= s.
                    let slot = positives.partition_point(|&q| q > s);
                    hist[slot] += 1;
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; n_pos + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let mut negatives_above = 0u64;
    let mut sum = 0.0;
    for (j, _) in positives.iter().enumerate() {
        negatives_above += histogram[j];
        let hits = (j + 1) as f64;
        sum += hits / (hits + negatives_above as f64);
    }
    let n_pairs = (m as u64) * (m as u64 - 1) / 2;
    Ok(DiscriminationResult {
        ap: sum / n_pos as f64,
        n_pairs,
        n_positive: n_pos as u64,
    })
}

/// Fractional (average) ranks, 1-based.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "lists have lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Input(
            "Spearman correlation needs at least 2 values".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::data("spearman input", "non-finite value"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
        .ok_or_else(|| Error::Undefined("Spearman correlation of a constant list".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordSimResult {
    pub rho: f64,
    /// Fraction of benchmark pairs with both words in the table.
    pub coverage: f64,
    pub n_covered: usize,
}

/// Spearman correlation between embedding cosine similarities and human
/// scores over the pairs whose words are both in the table. Words are
/// matched case-insensitively; uncovered pairs are dropped and reported
/// through `coverage`.
pub fn word_similarity_eval(emb: &EmbeddingTable, bench: &WordSimBenchmark) -> Result<WordSimResult> {
    let folded = emb.case_folded();
    let mut model = Vec::new();
    let mut human = Vec::new();
    for pair in &bench.pairs {
        let a = folded.get(&pair.word_a.to_lowercase());
        let b = folded.get(&pair.word_b.to_lowercase());
        if let (Some(a), Some(b)) = (a, b) {
            model.push(cosine(a, b)?);
            human.push(pair.human_score);
        }
    }
    if model.len() < 2 {
        return Err(Error::Coverage(format!(
            "{}: only {} of {} pairs have both words in the embedding table",
            bench.name,
            model.len(),
            bench.pairs.len()
        )));
    }
    Ok(WordSimResult {
        rho: spearman(&model, &human).map_err(|e| e.context(bench.name.clone()))?,
        coverage: model.len() as f64 / bench.pairs.len() as f64,
        n_covered: model.len(),
    })
}

/// Negated character edit distance, so larger means more similar.
pub fn edit_distance_similarity(word_a: &str, word_b: &str) -> Result<f64> {
    if word_a.is_empty() || word_b.is_empty() {
        return Err(Error::Input("edit distance needs non-empty words".into()));
    }
    Ok(-(strsim::levenshtein(word_a, word_b) as f64))
}

/// Word-similarity baseline scoring every pair by negated edit distance.
pub fn edit_distance_wordsim(bench: &WordSimBenchmark) -> Result<WordSimResult> {
    let mut model = Vec::with_capacity(bench.pairs.len());
    for p in &bench.pairs {
        model.push(edit_distance_similarity(
            &p.word_a.to_lowercase(),
            &p.word_b.to_lowercase(),
        )?);
    }
    let human: Vec<f64> = bench.pairs.iter().map(|p| p.human_score).collect();
    Ok(WordSimResult {
        rho: spearman(&model, &human).map_err(|e| e.context(bench.name.clone()))?,
        coverage: 1.0,
        n_covered: bench.pairs.len(),
    })
}

/// One evaluation outcome row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub layer: usize,
    pub set: usize,
    pub task: String,
    pub rho_or_ap: f64,
    pub coverage: f64,
    pub n: u64,
}

/// Writes `layer,set,task,rho_or_ap,coverage,n` CSV.
pub fn write_task_results(rows: &[TaskResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::format(path.display().to_string(), e.to_string());
    for row in rows {
        w.serialize(row).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::SegmentSource;
    use crate::tensor_io::{FeatureMatrix, WordSimPair};
    use ndarray::array;

    fn pooled(rows: Array2<f64>, labels: &[&str]) -> PooledSet {
        let n = labels.len();
        PooledSet::new(
            FeatureMatrix::new(rows).unwrap(),
            labels.iter().map(|s| s.to_string()).collect(),
            SegmentKind::Word,
            vec![
                SegmentSource {
                    utterance_id: "u".into(),
                    start_s: 0.0,
                    end_s: 1.0
                };
                n
            ],
        )
        .unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn ap_small_example() {
        let pairs = ScoredPairSet::new(vec![0.9, 0.8, 0.7], vec![true, false, true]).unwrap();
        let ap = average_precision(&pairs).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn ap_ties_are_pessimistic() {
        // Tie at 0.5: the negative ranks first, so the positive sits at rank 2.
        let pairs = ScoredPairSet::new(vec![0.5, 0.5], vec![true, false]).unwrap();
        assert_eq!(average_precision(&pairs).unwrap(), 0.5);
        let none = ScoredPairSet::new(vec![0.5], vec![false]).unwrap();
        assert!(average_precision(&none).is_err());
    }

    #[test]
    fn discrimination_perfect_separation() {
        let p = pooled(
            array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]],
            &["apple", "apple", "berry", "berry"],
        );
        let r = word_discrimination_ap(&p).unwrap();
        assert_eq!(r.ap, 1.0);
        assert_eq!((r.n_pairs, r.n_positive), (6, 2));
    }

    #[test]
    fn discrimination_matches_materialized_ap() {
        let p = pooled(
            array![
                [1.0, 0.2],
                [0.3, 1.0],
                [0.7, 0.7],
                [1.0, -0.5],
                [0.2, 0.2],
                [-1.0, 0.4]
            ],
            &["a", "b", "a", "c", "b", "a"],
        );
        let mut scores = Vec::new();
        let mut same = Vec::new();
        let rows = p.vectors.data();
        for i in 0..6 {
            for j in (i + 1)..6 {
                scores.push(cosine(&rows.row(i).to_vec(), &rows.row(j).to_vec()).unwrap());
                same.push(p.labels[i] == p.labels[j]);
            }
        }
        let expected = average_precision(&ScoredPairSet::new(scores, same).unwrap()).unwrap();
        let got = word_discrimination_ap(&p).unwrap().ap;
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn discrimination_errors() {
        let p = pooled(array![[1.0], [2.0]], &["a", "b"]);
        assert!(matches!(word_discrimination_ap(&p), Err(Error::Input(_))));
        let mut phones = pooled(array![[1.0], [2.0]], &["a", "a"]);
        phones.kind = SegmentKind::Phone;
        assert!(matches!(
            word_discrimination_ap(&phones),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): Pearson = 4.5 / sqrt(4.5 * 5).
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Undefined(_))
        ));
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn bench(pairs: &[(&str, &str, f64)]) -> WordSimBenchmark {
        WordSimBenchmark {
            name: "toy".into(),
            pairs: pairs
                .iter()
                .map(|(a, b, s)| WordSimPair {
                    word_a: a.to_string(),
                    word_b: b.to_string(),
                    human_score: *s,
                })
                .collect(),
        }
    }

    #[test]
    fn wordsim_ordering_and_coverage() {
        let mut emb = EmbeddingTable::new(2);
        emb.insert("CAT", vec![1.0, 0.0]).unwrap();
        emb.insert("TIGER", vec![0.9, 0.1]).unwrap();
        emb.insert("CAR", vec![0.0, 1.0]).unwrap();
        let b = bench(&[
            ("cat", "tiger", 9.0),
            ("cat", "car", 1.0),
            ("tiger", "car", 2.0),
            ("cat", "zebra", 8.0),
        ]);
        let r = word_similarity_eval(&emb, &b).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.coverage, 0.75);
        assert_eq!(r.n_covered, 3);

        let uncovered = bench(&[("x", "y", 1.0), ("z", "w", 2.0)]);
        assert!(matches!(
            word_similarity_eval(&emb, &uncovered),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn edit_distance() {
        assert_eq!(edit_distance_similarity("kitten", "sitting").unwrap(), -3.0);
        assert_eq!(edit_distance_similarity("abc", "abc").unwrap(), 0.0);
        assert_eq!(edit_distance_similarity("a", "b").unwrap(), -1.0);
        assert!(edit_distance_similarity("", "b").is_err());
        let b = bench(&[("cat", "cats", 9.0), ("cat", "dog", 1.0), ("cat", "bat", 5.0)]);
        // Model ranks (2.5, 1, 2.5) vs human ranks (3, 1, 2): r = 1.5 / sqrt(1.5 * 2).
        let r = edit_distance_wordsim(&b).unwrap().rho;
        assert!((r - 1.5 / 3f64.sqrt()).abs() < 1e-15, "{r}");
    }

    #[test]
    fn task_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.csv");
        write_task_results(
            &[TaskResult {
                layer: 3,
                set: 0,
                task: "simlex".into(),
                rho_or_ap: 0.25,
                coverage: 0.5,
                n: 10,
            }],
            &path,
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "layer,set,task,rho_or_ap,coverage,n\n3,0,simlex,0.25,0.5,10\n"
        );
    }
}
