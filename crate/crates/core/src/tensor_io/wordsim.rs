use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WordSimPair {
    pub word_a: String,
    pub word_b: String,
    pub human_score: f64,
}

/// Human-rated word pairs, named after the file they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSimBenchmark {
    pub name: String,
    pub pairs: Vec<WordSimPair>,
}

pub fn read_wordsim_benchmark(path: impl AsRef<Path>) -> Result<WordSimBenchmark> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_wordsim_benchmark(&text, &name)
}

/// Parses `word1,word2,score` CSV (header required).
pub fn parse_wordsim_benchmark(text: &str, name: &str) -> Result<WordSimBenchmark> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::format(format!("{name}:{line}"), e.to_string())
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    let names: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
    if names != ["word1", "word2", "score"] {
        return Err(Error::format(
            format!("{name}:1"),
            format!("expected header word1,word2,score, found {}", names.join(",")),
        ));
    }

    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let loc = format!("{name}:{line}");
        let score_text = &record[2];
        let human_score: f64 = score_text
            .parse()
            .map_err(|_| Error::format(&loc, format!("score {score_text:?} is not a number")))?;
        if !human_score.is_finite() {
            return Err(Error::data(&loc, "score must be finite"));
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(Error::data(&loc, "empty word"));
        }
        pairs.push(WordSimPair {
            word_a: record[0].to_string(),
            word_b: record[1].to_string(),
            human_score,
        });
    }
    if pairs.len() < 2 {
        return Err(Error::data(
            name,
            format!("benchmark needs at least 2 pairs, found {}", pairs.len()),
        ));
    }
    Ok(WordSimBenchmark {
        name: name.to_string(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_rows() {
        let b =
            parse_wordsim_benchmark("word1,word2,score\ntiger,cat,7.35\nbook,paper,7.46\n", "ws").unwrap();
        assert_eq!(b.pairs[0].word_a, "tiger");
        assert_eq!(b.pairs[0].human_score, 7.35);
        assert_eq!(b.pairs.len(), 2);
    }

    #[test]
    fn header_only_is_data_error() {
        assert!(matches!(
            parse_wordsim_benchmark("word1,word2,score\n", "ws"),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn non_numeric_score_names_line() {
        let err = parse_wordsim_benchmark("word1,word2,score\na,b,1\ntiger,cat,abc\n", "ws").unwrap_err();
        assert!(
            matches!(err, Error::Format { ref location, .. } if location == "ws:3"),
            "{err}"
        );
    }

    #[test]
    fn wrong_header_or_width() {
        assert!(matches!(
            parse_wordsim_benchmark("a,b,c\nx,y,1\nz,w,2\n", "ws"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_wordsim_benchmark("word1,word2,score\nx,y\nz,w,2\n", "ws"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn name_is_file_stem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("simlex999.csv");
        std::fs::write(&path, "word1,word2,score\na,b,1\nc,d,2\n").unwrap();
        assert_eq!(read_wordsim_benchmark(&path).unwrap().name, "simlex999");
    }

    proptest! {
        #[test]
        fn parser_is_total(body in "[a-z0-9,.\n\"]{0,80}") {
            let _ = parse_wordsim_benchmark(&format!("word1,word2,score\n{body}"), "fuzz");
        }
    }
}
