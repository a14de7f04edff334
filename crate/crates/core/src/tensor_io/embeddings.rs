use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result, Warning};

/// Word -> vector map with a fixed dimension. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces; returns true when the key already existed.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {key:?} has dimension {}, table has {}",
                vector.len(),
                self.dim
            )));
        }
        Ok(self.entries.insert(key, vector).is_some())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Lowercased view for matching words across corpora with different
    /// casing conventions. The first key (in table order) wins on collisions.
    pub fn case_folded(&self) -> HashMap<String, &[f64]> {
        let mut map = HashMap::with_capacity(self.len());
        for (k, v) in self.iter() {
            map.entry(k.to_lowercase()).or_insert(v);
        }
        map
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for (k, v) in self.iter() {
            out.push_str(k);
            for x in v {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        super::write_atomic(path.as_ref(), out.as_bytes())
    }
}

pub fn read_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (table, _) = parse_embedding_table(&text, &path.display().to_string())?;
    Ok(table)
}

/// Parses GloVe-style text, `word v1 ... vd` per line. Duplicate words keep
/// the last vector and produce a warning.
pub fn parse_embedding_table(text: &str, source: &str) -> Result<(EmbeddingTable, Vec<Warning>)> {
    let mut table: Option<EmbeddingTable> = None;
    let mut warnings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let loc = || format!("{source}:{lineno}");
        let mut tokens = line.split_whitespace();
        let Some(word) = tokens.next() else { continue };
        let vector = tokens
            .map(|t| {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::format(loc(), format!("{t:?} is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::data(loc(), format!("non-finite value {t}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(Error::format(loc(), format!("no vector values for {word:?}")));
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != table.dim {
            return Err(Error::format(
                loc(),
                format!(
                    "dimension {} differs from the first line's {}",
                    vector.len(),
                    table.dim
                ),
            ));
        }
        if table.insert(word, vector)? {
            warnings.push(
                Warning::DuplicateKey {
                    key: word.to_string(),
                    line: lineno,
                }
                .emit(),
            );
        }
    }
    let table = table.ok_or_else(|| Error::data(source, "embedding table has no entries"))?;
    Ok((table, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_words_two_dims() {
        let (t, w) = parse_embedding_table("cat 1.0 0.0\ndog 0.0 1.0\n", "e").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("dog"), Some(&[0.0, 1.0][..]));
        assert!(w.is_empty());
    }

    #[test]
    fn inconsistent_dimension() {
        let err = parse_embedding_table("a 1 2\nb 1 2 3\n", "e").unwrap_err();
        assert!(
            matches!(err, Error::Format { ref location, .. } if location == "e:2"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_last_wins_with_warning() {
        let (t, w) = parse_embedding_table("cat 1 1\ncat 2 2\n", "e").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat"), Some(&[2.0, 2.0][..]));
        assert_eq!(
            w,
            vec![Warning::DuplicateKey {
                key: "cat".into(),
                line: 2
            }]
        );
    }

    #[test]
    fn bad_values_and_empty_files() {
        assert!(matches!(
            parse_embedding_table("a 1 x\n", "e"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_embedding_table("a\n", "e"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_embedding_table("a nan\n", "e"),
            Err(Error::Data { .. })
        ));
        assert!(matches!(
            parse_embedding_table("\n\n", "e"),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn case_folding_prefers_first() {
        let (t, _) = parse_embedding_table("Cat 1\ncat 2\n", "e").unwrap();
        assert_eq!(t.case_folded()["cat"], &[1.0][..]);
    }

    #[test]
    fn write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![0.1, -3.5e-9]).unwrap();
        t.insert("b", vec![1.0, 2.0]).unwrap();
        t.write(&path).unwrap();
        assert_eq!(read_embedding_table(&path).unwrap(), t);
    }
}
