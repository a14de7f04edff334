use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_io::{read_matrix, FeatureMatrix};

/// `layer_<i>.npy` file name for layer `i`.
pub fn layer_file_name(layer: usize) -> String {
    format!("layer_{layer}.npy")
}

fn parse_layer_file(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("layer_")?.strip_suffix(".npy")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// A directory of per-utterance subdirectories, each holding the same set
/// of `layer_<i>.npy` files.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCorpus {
    pub root: PathBuf,
    /// Sorted utterance ids (subdirectory names).
    pub utterances: Vec<String>,
    /// Sorted layer indices present for every utterance.
    pub layers: Vec<usize>,
}

impl LayerCorpus {
    /// Scans `root`. Every utterance must have the same layer files.
    pub fn discover(root: impl AsRef<Path>) -> Result<LayerCorpus> {
        let root = root.as_ref().to_path_buf();
        let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
        let mut per_utt: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&root, e))?;
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let utt = entry.file_name().to_string_lossy().into_owned();
            let mut layers = BTreeSet::new();
            for f in std::fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
                let f = f.map_err(|e| Error::io(&path, e))?;
                if let Some(i) = parse_layer_file(&f.file_name().to_string_lossy()) {
                    layers.insert(i);
                }
            }
            if !layers.is_empty() {
                per_utt.insert(utt, layers);
            }
        }
        let Some((first_utt, first)) = per_utt.iter().next() else {
            return Err(Error::Input(format!(
                "{} has no utterance directories with layer_<i>.npy files",
                root.display()
            )));
        };
        for (utt, layers) in &per_utt {
            if layers != first {
                return Err(Error::data(
                    root.join(utt).display().to_string(),
                    format!("layers {layers:?} differ from {first_utt}'s {first:?}"),
                ));
            }
        }
        Ok(LayerCorpus {
            layers: first.iter().copied().collect(),
            utterances: per_utt.into_keys().collect(),
            root,
        })
    }

    pub fn path(&self, utterance: &str, layer: usize) -> PathBuf {
        self.root.join(utterance).join(layer_file_name(layer))
    }

    pub fn has_utterance(&self, utterance: &str) -> bool {
        self.utterances
            .binary_search_by(|u| u.as_str().cmp(utterance))
            .is_ok()
    }

    /// Loads one layer for the given utterances.
    pub fn load<'a>(
        &self,
        layer: usize,
        utterances: impl IntoIterator<Item = &'a str>,
    ) -> Result<HashMap<String, FeatureMatrix>> {
        let utts: Vec<&str> = utterances.into_iter().collect();
        utts.par_iter()
            .map(|&u| {
                let m = read_matrix(self.path(u, layer))?;
                Ok((u.to_string(), m.with_layer_id(layer)))
            })
            .collect()
    }

    /// Loads one layer for every utterance, in utterance order.
    pub fn load_all(&self, layer: usize) -> Result<Vec<FeatureMatrix>> {
        self.utterances
            .par_iter()
            .map(|u| Ok(read_matrix(self.path(u, layer))?.with_layer_id(layer)))
            .collect()
    }
}

/// Stacks per-utterance matrices into one frame table.
pub fn stack_frames(parts: &[FeatureMatrix]) -> Result<Array2<f64>> {
    if parts.is_empty() {
        return Err(Error::Input("no frames to stack".into()));
    }
    let views: Vec<_> = parts.iter().map(|m| m.data().view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::write_matrix;

    #[test]
    fn layer_names() {
        assert_eq!(parse_layer_file("layer_12.npy"), Some(12));
        assert_eq!(parse_layer_file("layer_.npy"), None);
        assert_eq!(parse_layer_file("layer_1.meta.json"), None);
        assert_eq!(parse_layer_file("layer_-1.npy"), None);
    }

    #[test]
    fn discover_and_load() {
        let dir = tempfile::tempdir().unwrap();
        for utt in ["b", "a"] {
            for l in 0..3 {
                let m = FeatureMatrix::new(Array2::from_elem((2, 3), l as f64)).unwrap();
                std::fs::create_dir_all(dir.path().join(utt)).unwrap();
                write_matrix(&m, dir.path().join(utt).join(layer_file_name(l))).unwrap();
            }
        }
        let c = LayerCorpus::discover(dir.path()).unwrap();
        assert_eq!(c.utterances, vec!["a", "b"]);
        assert_eq!(c.layers, vec![0, 1, 2]);
        let all = c.load_all(2).unwrap();
        assert_eq!(stack_frames(&all).unwrap(), Array2::from_elem((4, 3), 2.0));
        assert!(c.has_utterance("b") && !c.has_utterance("c"));

        std::fs::remove_file(dir.path().join("b").join(layer_file_name(1))).unwrap();
        assert!(matches!(
            LayerCorpus::discover(dir.path()),
            Err(Error::Data { .. })
        ));
    }
}
