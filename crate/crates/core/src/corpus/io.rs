use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Corpus, CorpusHeader, FeatureSample};
use crate::error::{Error, Result};

/// Header line followed by one JSON record per line. Floats are written as
/// shortest round-trip decimals.
pub(crate) fn to_jsonl(corpus: &Corpus) -> Vec<u8> {
    let mut out = serde_json::to_vec(corpus.header()).expect("header serializes");
    out.push(b'\n');
    for r in corpus.records() {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(corpus)).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing corpus header".into())),
    };
    let header: CorpusHeader =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    header.validate()?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureSample =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 2, e.to_string()))?;
        records.push(rec);
    }
    Corpus::new(header, records)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    #[test]
    fn empty_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let c = Corpus::new(header(4, 3), vec![]).unwrap();
        save_corpus(&c, &p).unwrap();
        let back = load_corpus(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, c);
    }

    #[test]
    fn missing_audio_loads_as_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let mut r = original("a", 4, 3, 0.25);
        r.h_a = None;
        let c = Corpus::new(header(4, 3), vec![r, original("b", 4, 3, -0.7)]).unwrap();
        save_corpus(&c, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"h_a\":null"));
        let back = load_corpus(&p).unwrap();
        assert!(back.get("a").unwrap().h_a.is_none());
        assert_eq!(back, c);
    }

    #[test]
    fn field_names_and_ignore_marker() {
        let c = Corpus::new(header(4, 3), vec![original("a", 4, 3, 0.25)]).unwrap();
        let text = String::from_utf8(to_jsonl(&c)).unwrap();
        let rec: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        let keys: Vec<&str> = rec.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in [
            "id",
            "h_v",
            "h_a",
            "h_t_raw",
            "polarity",
            "sentiment",
            "origin",
            "parent_id",
            "hidden_quality",
            "target_tokens",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(rec["target_tokens"][3], -100);
        assert_eq!(rec["origin"], "Original");
    }

    #[test]
    fn dim_mismatch_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let c = Corpus::new(header(4, 3), vec![original("a", 4, 3, 0.25)]).unwrap();
        save_corpus(&c, &p).unwrap();
        let text = std::fs::read_to_string(&p)
            .unwrap()
            .replacen("\"d\":4", "\"d\":5", 1);
        std::fs::write(&p, text).unwrap();
        let err = load_corpus(&p).unwrap_err();
        assert_eq!(err.to_string(), "record a: dim mismatch");
    }

    #[test]
    fn garbage_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let c = Corpus::new(header(4, 3), vec![]).unwrap();
        save_corpus(&c, &p).unwrap();
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("{not json\n");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_corpus(&p), Err(Error::Parse { line: 2, .. })));
    }
}
