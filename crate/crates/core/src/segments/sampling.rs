use indexmap::IndexMap;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::tensor_io::{SegmentKind, SegmentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    /// Each label contributes at most `ceil(target / #labels)` items.
    PerLabelEqual,
    Uniform,
}

/// How many items each sample set holds and how they are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub seed: u64,
    #[serde(default = "default_n_sets")]
    pub n_sets: usize,
    pub target: usize,
    #[serde(default = "default_balancing")]
    pub balancing: Balancing,
}

fn default_n_sets() -> usize {
    4
}

fn default_balancing() -> Balancing {
    Balancing::Uniform
}

impl SamplePlan {
    pub fn new(seed: u64, target: usize) -> Self {
        SamplePlan {
            seed,
            n_sets: default_n_sets(),
            target,
            balancing: default_balancing(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sets == 0 || self.target == 0 {
            return Err(Error::Config(format!(
                "sample plan needs n_sets >= 1 and target >= 1, got {} and {}",
                self.n_sets, self.target
            )));
        }
        Ok(())
    }
}

/// Sample-set sizes used by the layer-wise experiments (averages per set).
pub mod sizes {
    pub const CCA_FRAMES: usize = 150_000;
    pub const CCA_WORD_SEGMENTS: usize = 4_800;
    pub const MI_PHONE_TRAIN: usize = 187_000;
    pub const MI_PHONE_DEV: usize = 7_600;
    pub const MI_WORD_TRAIN: usize = 427_000;
    pub const MI_WORD_DEV: usize = 6_900;
    pub const WORD_DISC_SEGMENTS: usize = 2_400;
}

/// SplitMix64 finalizer, used to derive independent seeds for sub-streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    /// One ascending list of item indices per sample set.
    pub sets: Vec<Vec<usize>>,
    pub warnings: Vec<Warning>,
}

/// Draws `plan.n_sets` subsets of `0..n`, each with its own seed and without
/// replacement inside a set. `labels` is required for per-label balancing.
pub fn draw_index_sets(n: usize, labels: Option<&[&str]>, plan: &SamplePlan) -> Result<IndexSets> {
    plan.validate()?;
    if n == 0 {
        return Err(Error::Input("cannot sample from zero records".into()));
    }
    let mut warnings = Vec::new();
    if n <= plan.target {
        if n < plan.target {
            warnings.push(
                Warning::SampleShortage {
                    requested: plan.target,
                    available: n,
                }
                .emit(),
            );
        }
        return Ok(IndexSets {
            sets: vec![(0..n).collect(); plan.n_sets],
            warnings,
        });
    }

    let groups: Option<IndexMap<&str, Vec<usize>>> = match plan.balancing {
        Balancing::Uniform => None,
        Balancing::PerLabelEqual => {
            let labels =
                labels.ok_or_else(|| Error::Precondition("per-label balancing needs item labels".into()))?;
            let mut g: IndexMap<&str, Vec<usize>> = IndexMap::new();
            for (i, l) in labels.iter().enumerate() {
                g.entry(*l).or_default().push(i);
            }
            Some(g)
        }
    };

    let sets = (0..plan.n_sets)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, s as u64));
            let mut picked = match &groups {
                None => index::sample(&mut rng, n, plan.target).into_vec(),
                Some(groups) => {
                    let cap = plan.target.div_ceil(groups.len());
                    groups
                        .values()
                        .flat_map(|members| {
                            let take = cap.min(members.len());
                            index::sample(&mut rng, members.len(), take)
                                .into_iter()
                                .map(|j| members[j])
                                .collect::<Vec<_>>()
                        })
                        .collect()
                }
            };
            picked.sort_unstable();
            picked
        })
        .collect();
    Ok(IndexSets { sets, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSets {
    pub sets: Vec<Vec<SegmentRecord>>,
    pub warnings: Vec<Warning>,
}

/// Draws sample sets of segment records; records keep their file order
/// within each set.
pub fn draw_sample_sets(records: &[SegmentRecord], plan: &SamplePlan) -> Result<SampleSets> {
    let labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
    let drawn = draw_index_sets(records.len(), Some(&labels), plan)?;
    Ok(SampleSets {
        sets: drawn
            .sets
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| records[i].clone()).collect())
            .collect(),
        warnings: drawn.warnings,
    })
}

/// Keeps word records whose label has at least `min_chars` characters and
/// whose duration is at least `min_dur_s`.
pub fn filter_word_records(
    records: &[SegmentRecord],
    min_chars: usize,
    min_dur_s: f64,
) -> Vec<SegmentRecord> {
    records
        .iter()
        .filter(|r| {
            r.kind == SegmentKind::Word
                && r.label.chars().count() >= min_chars
                && r.duration_s() >= min_dur_s - 1e-9
        })
        .cloned()
        .collect()
}

/// Restricts records to the `max_labels` most frequent labels (ties broken
/// by label text), preserving record order.
pub fn keep_top_labels(records: &[SegmentRecord], max_labels: usize) -> Vec<SegmentRecord> {
    let mut counts: IndexMap<&str, usize> = IndexMap::new();
    for r in records {
        *counts.entry(r.label.as_str()).or_default() += 1;
    }
    if counts.len() <= max_labels {
        return records.to_vec();
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let keep: std::collections::HashSet<&str> = ranked.into_iter().take(max_labels).map(|(l, _)| l).collect();
    records
        .iter()
        .filter(|r| keep.contains(r.label.as_str()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(labels: &[&str]) -> Vec<SegmentRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| SegmentRecord {
                utterance_id: format!("u{i}"),
                start_s: 0.0,
                end_s: 1.0,
                label: l.to_string(),
                kind: SegmentKind::Word,
            })
            .collect()
    }

    #[test]
    fn deterministic_for_seed() {
        let recs = words(&["a"; 10]);
        let plan = SamplePlan {
            seed: 7,
            n_sets: 1,
            target: 4,
            balancing: Balancing::Uniform,
        };
        let first = draw_sample_sets(&recs, &plan).unwrap();
        assert_eq!(first.sets[0].len(), 4);
        for _ in 0..5 {
            assert_eq!(draw_sample_sets(&recs, &plan).unwrap(), first);
        }
    }

    #[test]
    fn per_label_cap() {
        let mut labels = vec!["x"; 10];
        labels.extend(vec!["y"; 10]);
        let recs = words(&labels);
        let plan = SamplePlan {
            seed: 1,
            n_sets: 4,
            target: 10,
            balancing: Balancing::PerLabelEqual,
        };
        for set in draw_sample_sets(&recs, &plan).unwrap().sets {
            assert_eq!(set.iter().filter(|r| r.label == "x").count(), 5);
            assert_eq!(set.iter().filter(|r| r.label == "y").count(), 5);
        }
    }

    #[test]
    fn shortage_takes_everything() {
        let recs = words(&["a"; 10]);
        let out = draw_sample_sets(&recs, &SamplePlan::new(3, 100)).unwrap();
        assert!(out.sets.iter().all(|s| s.len() == 10));
        assert_eq!(
            out.warnings,
            vec![Warning::SampleShortage {
                requested: 100,
                available: 10
            }]
        );
        assert!(matches!(
            draw_sample_sets(&[], &SamplePlan::new(3, 1)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn sets_differ() {
        let recs = words(&["a"; 100]);
        let sets = draw_sample_sets(&recs, &SamplePlan::new(11, 20)).unwrap().sets;
        assert_eq!(sets.len(), 4);
        assert_ne!(sets[0], sets[1]);
        assert_ne!(sets[2], sets[3]);
    }

    #[test]
    fn word_filter() {
        let mut recs = words(&["hello", "the", "hello"]);
        recs[0].end_s = 0.6;
        recs[1].end_s = 0.9;
        recs[2].end_s = 0.4;
        let kept = filter_word_records(&recs, 5, 0.5);
        assert_eq!(kept, vec![recs[0].clone()]);
        // Exactly at the duration threshold despite decimal rounding.
        let mut edge = words(&["hello"]);
        edge[0].start_s = 0.29;
        edge[0].end_s = 0.79;
        assert_eq!(filter_word_records(&edge, 5, 0.5).len(), 1);
    }

    #[test]
    fn top_labels() {
        let recs = words(&["b", "a", "b", "c", "a", "b"]);
        let kept = keep_top_labels(&recs, 2);
        let labels: Vec<&str> = kept.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["b", "a", "b", "a", "b"]);
    }

    proptest! {
        #[test]
        fn sets_are_valid_subsets(n in 1usize..300, target in 1usize..200, seed in any::<u64>(), balanced in any::<bool>()) {
            let labels: Vec<String> = (0..n).map(|i| format!("l{}", i % 7)).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let plan = SamplePlan {
                seed,
                n_sets: 3,
                target,
                balancing: if balanced { Balancing::PerLabelEqual } else { Balancing::Uniform },
            };
            let drawn = draw_index_sets(n, Some(&refs), &plan).unwrap();
            for set in &drawn.sets {
                prop_assert!(set.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(set.iter().all(|&i| i < n));
                if !balanced || n <= target {
                    prop_assert_eq!(set.len(), target.min(n));
                }
            }
            prop_assert_eq!(drawn, draw_index_sets(n, Some(&refs), &plan).unwrap());
        }
    }
}
