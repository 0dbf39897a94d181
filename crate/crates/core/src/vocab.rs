use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scg::{Scg, ScgNodeKind};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("namespace does not start with the reserved entries")]
    MissingReserved,
    #[error("duplicate vocabulary entry {0:?}")]
    Duplicate(String),
}

/// One id space. Ids `0..4` are the reserved entries; learned entries follow
/// in descending frequency, ties broken by byte order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Namespace {
    itos: Vec<String>,
    stoi: HashMap<String, usize>,
}

impl Namespace {
    fn from_counts(counts: &BTreeMap<&str, usize>, limit: Option<usize>) -> Self {
        let mut entries: Vec<(&str, usize)> = counts
            .iter()
            .filter(|(s, _)| !RESERVED.contains(s))
            .map(|(s, c)| (*s, *c))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(limit) = limit {
            entries.truncate(limit);
        }
        let itos = RESERVED
            .iter()
            .copied()
            .chain(entries.into_iter().map(|(s, _)| s))
            .map(String::from)
            .collect();
        Namespace::from_itos(itos).expect("reserved entries are unique")
    }

    pub fn from_itos(itos: Vec<String>) -> Result<Self, VocabError> {
        if itos.len() < RESERVED.len() || itos.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(VocabError::MissingReserved);
        }
        let mut stoi = HashMap::with_capacity(itos.len());
        for (i, s) in itos.iter().enumerate() {
            if stoi.insert(s.clone(), i).is_some() {
                return Err(VocabError::Duplicate(s.clone()));
            }
        }
        Ok(Namespace { itos, stoi })
    }

    pub fn id(&self, s: &str) -> usize {
        self.stoi.get(s).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, s: &str) -> bool {
        self.stoi.contains_key(s)
    }

    pub fn token(&self, id: usize) -> &str {
        self.itos.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn len(&self) -> usize {
        self.itos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itos.is_empty()
    }

    /// Learned entries only, in id order.
    pub fn learned(&self) -> &[String] {
        &self.itos[RESERVED.len()..]
    }
}

impl Serialize for Namespace {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.itos.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Namespace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let itos = Vec::<String>::deserialize(d)?;
        Namespace::from_itos(itos).map_err(serde::de::Error::custom)
    }
}

/// Separate id spaces for token attributes, AST node types and summary
/// words, so an AST type and a token with the same spelling never share an
/// embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub tokens: Namespace,
    pub ast_types: Namespace,
    pub targets: Namespace,
}

impl Vocab {
    /// Most frequent entries up to the limits. The AST-type namespace is
    /// never truncated.
    pub fn build(corpus: &[Scg], max_src: usize, max_tgt: usize) -> Result<Vocab, VocabError> {
        if corpus.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let mut tokens = BTreeMap::new();
        let mut ast_types = BTreeMap::new();
        let mut targets = BTreeMap::new();
        for scg in corpus {
            for n in &scg.nodes {
                let counts = match n.kind {
                    ScgNodeKind::Token => &mut tokens,
                    ScgNodeKind::Ast => &mut ast_types,
                };
                *counts.entry(n.attr.as_str()).or_insert(0) += 1;
            }
            for w in &scg.summary {
                *targets.entry(w.as_str()).or_insert(0) += 1;
            }
        }
        Ok(Vocab {
            tokens: Namespace::from_counts(&tokens, Some(max_src)),
            ast_types: Namespace::from_counts(&ast_types, None),
            targets: Namespace::from_counts(&targets, Some(max_tgt)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{lex, parse_mini};
    use crate::scg::{build_scg, Variant, NUM_TOKEN};

    fn sample(src: &str, summary: &str) -> Scg {
        let ast = parse_mini(src).unwrap();
        build_scg(&ast, &lex(src).unwrap(), Variant::Standard)
            .unwrap()
            .with_summary(summary.split_whitespace().map(String::from).collect())
    }

    #[test]
    fn worked_example_vocabulary() {
        let v = Vocab::build(&[sample("a=b+5*c", "assign")], 50_000, 30_000).unwrap();
        let mut learned = v.tokens.learned().to_vec();
        learned.sort();
        let mut expected: Vec<String> = ["a", "=", "b", "+", NUM_TOKEN, "*", "c"].map(String::from).to_vec();
        expected.sort();
        assert_eq!(learned, expected);
        assert_eq!(v.tokens.len(), 11);
        assert_eq!(&v.tokens.learned()[..3], ["*", "+", "="]);
        assert_eq!(v.ast_types.len(), 4 + 5);
        assert_eq!(v.ast_types.token(v.ast_types.id("NameExpr")), "NameExpr");
    }

    #[test]
    fn limit_keeps_most_frequent() {
        let v = Vocab::build(&[sample("x = x + x", "s")], 1, 1).unwrap();
        assert_eq!(v.tokens.learned(), ["x"]);
        assert_eq!(v.tokens.id("="), UNK);
        assert_eq!(v.tokens.id("x"), 4);
    }

    #[test]
    fn frequency_ordered_ids() {
        // Counts: b=3, a=2, "="=2, c=1 ; ties broken by byte order ("=" < "a").
        let corpus = [sample("a = b", "get b"), sample("a = b b c", "get c c")];
        let v = Vocab::build(&corpus, 100, 100).unwrap();
        assert_eq!(v.tokens.learned(), ["b", "=", "a", "c"]);
        assert_eq!(v.targets.learned(), ["c", "get", "b"]);
    }

    #[test]
    fn namespaces_are_independent() {
        let corpus = [sample("Num = 1", "x")];
        let v = Vocab::build(&corpus, 100, 100).unwrap();
        assert!(v.tokens.contains("Num"));
        assert!(v.ast_types.contains("Num"));
        assert_ne!(v.tokens.id("Num"), v.ast_types.id("Num"));
        assert_eq!(v.targets.id("Num"), UNK);
    }

    #[test]
    fn empty_corpus_and_serde() {
        assert_eq!(Vocab::build(&[], 1, 1), Err(VocabError::EmptyCorpus));
        let v = Vocab::build(&[sample("a=b+5*c", "x y")], 10, 10).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        let bad = r#"{"tokens": ["a"], "ast_types": [], "targets": []}"#;
        assert!(serde_json::from_str::<Vocab>(bad).is_err());
    }
}
