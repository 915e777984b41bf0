//! Plain-text vocabulary (`token<TAB>id<TAB>df`) and bag-of-words
//! (`docid: tokid:count ...`) files.

use std::fmt::Write as _;
use std::path::Path;

use super::vocab::{BowCorpus, SparseCounts, TokenId, Vocabulary};
use super::PrepError;

pub fn write_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<(), PrepError> {
    let mut s = format!("# n_docs\t{}\n", vocab.n_docs());
    for (id, tok) in vocab.tokens().iter().enumerate() {
        writeln!(s, "{tok}\t{id}\t{}", vocab.df(id as TokenId)).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary, PrepError> {
    let text = std::fs::read_to_string(path)?;
    let mut n_docs = 0;
    let mut tokens = Vec::new();
    let mut df = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| PrepError::Format { what: "vocabulary", line: i + 1, message };
        if let Some(rest) = line.strip_prefix("# n_docs\t") {
            n_docs = rest.parse().map_err(|_| bad(format!("bad n_docs {rest:?}")))?;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [tok, id, d] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let id: usize = id.parse().map_err(|_| bad(format!("bad id {id:?}")))?;
        if id != tokens.len() {
            return Err(bad(format!("id {id} out of sequence")));
        }
        tokens.push(tok.to_string());
        df.push(d.parse().map_err(|_| bad(format!("bad df {d:?}")))?);
    }
    Ok(Vocabulary::from_parts(tokens, df, n_docs))
}

pub fn write_bow(bow: &BowCorpus, path: &Path) -> Result<(), PrepError> {
    let mut s = String::new();
    for (d, counts) in bow.docs.iter().enumerate() {
        write!(s, "{d}:").unwrap();
        for (t, c) in counts {
            write!(s, " {t}:{c}").unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_bow(path: &Path, vocab_size: usize) -> Result<BowCorpus, PrepError> {
    let text = std::fs::read_to_string(path)?;
    let mut docs: Vec<SparseCounts> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| PrepError::Format { what: "bag-of-words", line: i + 1, message };
        let (doc, rest) = line.split_once(':').ok_or_else(|| bad("missing docid".into()))?;
        let doc: usize = doc.parse().map_err(|_| bad(format!("bad docid {doc:?}")))?;
        if doc != docs.len() {
            return Err(bad(format!("docid {doc} out of sequence")));
        }
        let mut counts = SparseCounts::new();
        for pair in rest.split_whitespace() {
            let (t, c) = pair.split_once(':').ok_or_else(|| bad(format!("bad pair {pair:?}")))?;
            let t: TokenId = t.parse().map_err(|_| bad(format!("bad token id {t:?}")))?;
            let c: u32 = c.parse().map_err(|_| bad(format!("bad count {c:?}")))?;
            if t as usize >= vocab_size || c == 0 {
                return Err(bad(format!("invalid entry {pair}")));
            }
            counts.push((t, c));
        }
        docs.push(counts);
    }
    Ok(BowCorpus { docs, vocab_size })
}
