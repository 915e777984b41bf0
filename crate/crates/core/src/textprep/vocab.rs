use std::collections::{BTreeMap, HashMap, HashSet};

use super::PrepError;

pub type TokenId = u32;

/// `(token id, count)` pairs sorted by id; counts are positive.
pub type SparseCounts = Vec<(TokenId, u32)>;

/// Document-frequency-pruned token dictionary. Ids follow first appearance
/// in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub(crate) fn from_parts(tokens: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocabulary {
            tokens,
            index,
            df,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn df(&self, id: TokenId) -> usize {
        self.df[id as usize]
    }

    /// Map a token document onto ids, dropping out-of-vocabulary tokens.
    pub fn encode(&self, doc: &[String]) -> Vec<TokenId> {
        doc.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Retain tokens with `min_df <= df` and `df / n_docs <= max_df`.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_df: usize,
    max_df: f64,
) -> Result<Vocabulary, PrepError> {
    if min_df == 0 {
        return Err(PrepError::InvalidConfig("min_df must be at least 1".into()));
    }
    if !(max_df > 0.0 && max_df <= 1.0) {
        return Err(PrepError::InvalidConfig(format!("max_df must be in (0, 1], got {max_df}")));
    }
    if docs.is_empty() {
        return Err(PrepError::EmptyCorpus);
    }
    let n_docs = docs.len();

    let mut order: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for t in doc {
            let t = t.as_ref();
            if seen.insert(t) {
                let c = df.entry(t).or_insert(0);
                if *c == 0 {
                    order.push(t);
                }
                *c += 1;
            }
        }
    }

    let mut tokens = Vec::new();
    let mut dfs = Vec::new();
    for t in order {
        let d = df[t];
        if d >= min_df && d as f64 <= max_df * n_docs as f64 {
            tokens.push(t.to_string());
            dfs.push(d);
        }
    }
    Ok(Vocabulary::from_parts(tokens, dfs, n_docs))
}

pub fn to_bow<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> SparseCounts {
    let mut counts: BTreeMap<TokenId, u32> = BTreeMap::new();
    for t in doc {
        if let Some(id) = vocab.id(t.as_ref()) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts.into_iter().collect()
}

/// Sparse term counts for every document, aligned with corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BowCorpus {
    pub docs: Vec<SparseCounts>,
    pub vocab_size: usize,
}

impl BowCorpus {
    pub fn from_token_docs<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> Self {
        BowCorpus {
            docs: docs.iter().map(|d| to_bow(d, vocab)).collect(),
            vocab_size: vocab.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.docs[d].iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn total_tokens(&self) -> usize {
        (0..self.docs.len()).map(|d| self.doc_len(d)).sum()
    }

    /// Keep only the listed documents, in the given order.
    pub fn subset(&self, idx: &[usize]) -> BowCorpus {
        BowCorpus {
            docs: idx.iter().map(|&i| self.docs[i].clone()).collect(),
            vocab_size: self.vocab_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rare_token_excluded() {
        let mut docs: Vec<Vec<String>> = (0..6).map(|_| doc(&["common"])).collect();
        docs[0].push("rare".into());
        let v = build_vocabulary(&docs, 2, 1.0).unwrap();
        assert!(v.id("rare").is_none());
        assert!(v.id("common").is_some());
    }

    #[test]
    fn max_df_boundary() {
        let mk = |k: usize| -> Vec<Vec<String>> {
            (0..100)
                .map(|i| if i < k { doc(&["t", "x"]) } else { doc(&["y"]) })
                .collect()
        };
        assert!(build_vocabulary(&mk(96), 1, 0.95).unwrap().id("t").is_none());
        assert!(build_vocabulary(&mk(95), 1, 0.95).unwrap().id("t").is_some());
    }

    #[test]
    fn ids_follow_first_appearance() {
        let docs = vec![doc(&["b", "a"]), doc(&["c", "a", "b"])];
        let v = build_vocabulary(&docs, 1, 1.0).unwrap();
        assert_eq!(v.tokens(), &["b", "a", "c"]);
        assert_eq!(v.df(v.id("a").unwrap()), 2);
    }

    #[test]
    fn bow_examples() {
        let docs = vec![doc(&["speech", "disorder", "speech"])];
        let v = build_vocabulary(&docs, 1, 1.0).unwrap();
        let bow = to_bow(&docs[0], &v);
        let named: Vec<(&str, u32)> = bow.iter().map(|&(id, c)| (v.token(id), c)).collect();
        assert_eq!(named, vec![("speech", 2), ("disorder", 1)]);
        assert!(to_bow(&doc(&["zzz", "qqq"]), &v).is_empty());
    }

    #[test]
    fn empty_corpus_and_bad_config() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(build_vocabulary(&empty, 1, 0.9), Err(PrepError::EmptyCorpus)));
        let docs = vec![doc(&["a"])];
        assert!(build_vocabulary(&docs, 0, 0.9).is_err());
        assert!(build_vocabulary(&docs, 1, 0.0).is_err());
        assert!(build_vocabulary(&docs, 1, 1.5).is_err());
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Vec<String>>> {
        let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]).prop_map(String::from);
        prop::collection::vec(prop::collection::vec(word, 0..12), 1..25)
    }

    proptest! {
        #[test]
        fn pruning_bounds_hold(docs in arb_docs(), min_df in 1usize..4, max_df in 0.1f64..=1.0) {
            let v = build_vocabulary(&docs, min_df, max_df).unwrap();
            for id in 0..v.len() as TokenId {
                let true_df = docs.iter().filter(|d| d.iter().any(|t| t == v.token(id))).count();
                prop_assert_eq!(v.df(id), true_df);
                prop_assert!(min_df <= true_df);
                prop_assert!(true_df as f64 <= max_df * docs.len() as f64);
            }
        }

        #[test]
        fn bow_sum_equals_in_vocab_tokens(docs in arb_docs()) {
            let v = build_vocabulary(&docs, 2, 0.9).unwrap();
            for d in &docs {
                let bow = to_bow(d, &v);
                let total: u32 = bow.iter().map(|&(_, c)| c).sum();
                prop_assert_eq!(total as usize, d.iter().filter(|t| v.id(t).is_some()).count());
                prop_assert!(bow.windows(2).all(|w| w[0].0 < w[1].0));
            }
        }
    }
}
