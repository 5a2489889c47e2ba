//! Document ingestion: tokenization, bigram collocations, and the binary
//! document-term and document-metadata graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::hash::sha256_hex;

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// One input record, as read from JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Characters kept when they sit between two alphanumerics, e.g. `qlq-c30`.
    pub joiners: Vec<char>,
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            joiners: vec!['-', '/'],
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BigramConfig {
    pub enabled: bool,
    pub delta: f64,
    pub min_count: u64,
    pub threshold: f64,
}

impl Default for BigramConfig {
    fn default() -> Self {
        BigramConfig {
            enabled: true,
            delta: 5.0,
            min_count: 5,
            threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub tokenizer: TokenizerConfig,
    pub bigrams: BigramConfig,
    /// Drop terms found in fewer documents than this. 1 keeps everything.
    pub min_df: usize,
    /// Drop terms found in more than this fraction of documents.
    pub max_df: Option<f64>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            tokenizer: TokenizerConfig::default(),
            bigrams: BigramConfig::default(),
            min_df: 1,
            max_df: None,
        }
    }
}

/// Lowercased tokens split on non-alphanumeric boundaries. Joiner characters
/// survive only inside a token.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            if cfg.lowercase {
                cur.extend(c.to_lowercase());
            } else {
                cur.push(c);
            }
        } else if !cur.is_empty()
            && cfg.joiners.contains(&c)
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Bigram score `(count(a,b) - delta) / (count(a) * count(b))`.
pub fn bigram_score(pair_count: u64, count_a: u64, count_b: u64, delta: f64) -> f64 {
    (pair_count as f64 - delta) / (count_a as f64 * count_b as f64)
}

/// Single-pass collocation detection over adjacent token pairs within each
/// document. Returns joined `a_b` forms.
pub fn extract_bigrams(docs: &[Vec<String>], cfg: &BigramConfig) -> BTreeSet<String> {
    let mut unigrams: HashMap<&str, u64> = HashMap::new();
    let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
    for toks in docs {
        for t in toks {
            *unigrams.entry(t.as_str()).or_default() += 1;
        }
        for w in toks.windows(2) {
            *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += 1;
        }
    }
    pairs
        .into_iter()
        .filter(|&((a, b), c)| {
            c >= cfg.min_count
                && bigram_score(c, unigrams[a], unigrams[b], cfg.delta) > cfg.threshold
        })
        .map(|((a, b), _)| format!("{a}_{b}"))
        .collect()
}

/// Greedy, non-overlapping, left-to-right replacement of detected pairs.
pub fn apply_bigrams(tokens: &[String], bigrams: &BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            let joined = format!("{}_{}", tokens[i], tokens[i + 1]);
            if bigrams.contains(&joined) {
                out.push(joined);
                i += 2;
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    /// Total occurrences of each term across the corpus.
    pub counts: Vec<u64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub meta: BTreeMap<String, Vec<String>>,
    /// Sorted distinct vocabulary ids.
    pub terms: Vec<u32>,
    /// Occurrences of each entry of `terms` in this document.
    pub counts: Vec<u32>,
}

/// The ingested corpus artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub schema_version: u32,
    pub kind: String,
    /// Hash of the input this corpus was derived from (raw JSONL or parent corpus).
    pub upstream_hash: String,
    pub config: IngestConfig,
    pub bigrams: Vec<String>,
    pub vocabulary: Vocabulary,
    pub documents: Vec<CorpusDocument>,
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<(Vec<Document>, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let hash = sha256_hex(&bytes);
    let mut docs = Vec::new();
    for line in bytes.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line)?);
    }
    Ok((docs, hash))
}

fn validate_documents(docs: &[Document]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateDocument(d.id.clone()));
        }
        if d.meta.keys().any(|k| k.is_empty()) {
            return Err(Error::EmptyDimensionName(d.id.clone()));
        }
    }
    Ok(())
}

impl Corpus {
    /// Tokenize, detect bigrams, and index every document by its term set.
    pub fn ingest(docs: &[Document], cfg: &IngestConfig, upstream_hash: &str) -> Result<Corpus> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        validate_documents(docs)?;
        let tokenized: Vec<Vec<String>> = docs
            .iter()
            .map(|d| tokenize(&d.text, &cfg.tokenizer))
            .collect();
        let bigrams = if cfg.bigrams.enabled {
            extract_bigrams(&tokenized, &cfg.bigrams)
        } else {
            BTreeSet::new()
        };
        let rewritten: Vec<Vec<String>> = tokenized
            .iter()
            .map(|t| apply_bigrams(t, &bigrams))
            .collect();

        let mut per_doc: Vec<BTreeMap<&str, u32>> = Vec::with_capacity(docs.len());
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for toks in &rewritten {
            let mut m: BTreeMap<&str, u32> = BTreeMap::new();
            for t in toks {
                *m.entry(t.as_str()).or_default() += 1;
            }
            for t in m.keys() {
                *df.entry(t).or_default() += 1;
            }
            per_doc.push(m);
        }
        let n = docs.len() as f64;
        let keep = |t: &str| {
            let f = df[t];
            f >= cfg.min_df && cfg.max_df.is_none_or(|m| f as f64 <= m * n)
        };
        let terms: Vec<String> = df
            .keys()
            .filter(|t| keep(t))
            .map(|t| t.to_string())
            .collect();
        let index: HashMap<&str, u32> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();
        let mut counts = vec![0u64; terms.len()];
        let mut documents = Vec::with_capacity(docs.len());
        for (d, m) in docs.iter().zip(&per_doc) {
            let mut ids = Vec::new();
            let mut cs = Vec::new();
            for (t, &c) in m {
                if let Some(&i) = index.get(t) {
                    ids.push(i);
                    cs.push(c);
                    counts[i as usize] += c as u64;
                }
            }
            if ids.is_empty() {
                log::warn!("document `{}` has no terms; it will be an isolated node", d.id);
            }
            documents.push(CorpusDocument {
                id: d.id.clone(),
                title: d.title.clone(),
                url: d.url.clone(),
                meta: d.meta.clone(),
                terms: ids,
                counts: cs,
            });
        }
        Ok(Corpus {
            schema_version: CORPUS_SCHEMA_VERSION,
            kind: "corpus".into(),
            upstream_hash: upstream_hash.to_string(),
            config: cfg.clone(),
            bigrams: bigrams.into_iter().collect(),
            vocabulary: Vocabulary { terms, counts },
            documents,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn dimensions(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.documents.iter().flat_map(|d| d.meta.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Sub-corpus with the given documents, vocabulary compacted to the terms
    /// they use. Bigrams are not re-detected.
    pub fn subset(&self, doc_indices: &[usize], upstream_hash: &str) -> Corpus {
        let mut used = vec![false; self.vocabulary.len()];
        for &i in doc_indices {
            for &t in &self.documents[i].terms {
                used[t as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; used.len()];
        let mut terms = Vec::new();
        for (i, u) in used.iter().enumerate() {
            if *u {
                remap[i] = terms.len() as u32;
                terms.push(self.vocabulary.terms[i].clone());
            }
        }
        let mut counts = vec![0u64; terms.len()];
        let documents = doc_indices
            .iter()
            .map(|&i| {
                let d = &self.documents[i];
                let ids: Vec<u32> = d.terms.iter().map(|&t| remap[t as usize]).collect();
                for (&t, &c) in ids.iter().zip(&d.counts) {
                    counts[t as usize] += c as u64;
                }
                CorpusDocument {
                    terms: ids,
                    ..d.clone()
                }
            })
            .collect();
        let bigrams = self
            .bigrams
            .iter()
            .filter(|b| terms.binary_search(b).is_ok())
            .cloned()
            .collect();
        Corpus {
            schema_version: CORPUS_SCHEMA_VERSION,
            kind: "corpus".into(),
            upstream_hash: upstream_hash.to_string(),
            config: self.config.clone(),
            bigrams,
            vocabulary: Vocabulary { terms, counts },
            documents,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let s = self.to_json()?;
        std::fs::write(path.as_ref(), &s).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(sha256_hex(s.as_bytes()))
    }

    /// Loads a corpus artifact and returns it with the hash of its bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<(Corpus, String)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let corpus: Corpus = serde_json::from_slice(&bytes)?;
        if corpus.kind != "corpus" {
            return Err(Error::ArtifactKind {
                expected: "corpus".into(),
                found: corpus.kind,
            });
        }
        if corpus.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: corpus.schema_version,
                expected: CORPUS_SCHEMA_VERSION,
            });
        }
        Ok((corpus, sha256_hex(&bytes)))
    }
}

/// One left node per document, one right node per term used by at least one
/// document, an edge wherever a term is present.
pub fn build_doc_term_graph(corpus: &Corpus) -> Result<BipartiteGraph> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut used = vec![false; corpus.vocabulary.len()];
    for d in &corpus.documents {
        for &t in &d.terms {
            used[t as usize] = true;
        }
    }
    let mut remap = vec![u32::MAX; used.len()];
    let mut right = Vec::new();
    for (i, u) in used.iter().enumerate() {
        if *u {
            remap[i] = right.len() as u32;
            right.push(corpus.vocabulary.terms[i].clone());
        }
    }
    let mut edges = Vec::new();
    for (di, d) in corpus.documents.iter().enumerate() {
        if d.terms.is_empty() {
            log::warn!("document `{}` has no terms; kept as an isolated node", d.id);
        }
        edges.extend(d.terms.iter().map(|&t| (di as u32, remap[t as usize])));
    }
    let left = corpus.documents.iter().map(|d| d.id.clone()).collect();
    BipartiteGraph::new(left, right, edges)
}

/// Orders categorical values numerically when they all parse as numbers.
pub fn sort_categories(values: &mut [String]) {
    let all_numeric = values.iter().all(|v| v.trim().parse::<f64>().is_ok());
    if all_numeric {
        values.sort_by(|a, b| {
            let (x, y) = (
                a.trim().parse::<f64>().unwrap(),
                b.trim().parse::<f64>().unwrap(),
            );
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    } else {
        values.sort();
    }
}

/// Documents linked to the categorical values of one metadata dimension.
pub fn build_doc_meta_graph(corpus: &Corpus, dimension: &str) -> Result<BipartiteGraph> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut values: Vec<String> = corpus
        .documents
        .iter()
        .filter_map(|d| d.meta.get(dimension))
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !corpus.documents.iter().any(|d| d.meta.contains_key(dimension)) || values.is_empty() {
        return Err(Error::UnknownDimension {
            dimension: dimension.to_string(),
            available: corpus.dimensions(),
        });
    }
    sort_categories(&mut values);
    let index: HashMap<&str, u32> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i as u32))
        .collect();
    let mut edges = Vec::new();
    for (di, d) in corpus.documents.iter().enumerate() {
        if let Some(vs) = d.meta.get(dimension) {
            edges.extend(vs.iter().map(|v| (di as u32, index[v.as_str()])));
        }
    }
    let left = corpus.documents.iter().map(|d| d.id.clone()).collect();
    BipartiteGraph::new(left, values, edges)
}
