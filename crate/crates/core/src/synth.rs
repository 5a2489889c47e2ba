//! Synthetic corpora with planted structure, for tests, benchmarks and demos.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;

/// Documents in groups with disjoint vocabularies, optionally sharing a set
/// of stop-words present in every document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub groups: usize,
    pub docs_per_group: usize,
    pub vocab_per_group: usize,
    /// Probability that a document uses each term of its group.
    pub term_prob: f64,
    pub stop_words: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            groups: 2,
            docs_per_group: 20,
            vocab_per_group: 30,
            term_prob: 0.3,
            stop_words: 0,
        }
    }
}

pub fn stop_word(i: usize) -> String {
    format!("stop{i}")
}

pub fn group_term(group: usize, i: usize) -> String {
    format!("g{group}w{i}")
}

fn document(id: String, mut words: Vec<String>, meta: BTreeMap<String, Vec<String>>, rng: &mut impl Rng) -> Document {
    words.shuffle(rng);
    Document {
        title: format!("Synthetic {id}"),
        url: None,
        text: words.join(" "),
        id,
        meta,
    }
}

/// Returns the documents and the planted group of each.
pub fn planted_corpus<R: Rng>(cfg: &PlantedConfig, rng: &mut R) -> (Vec<Document>, Vec<usize>) {
    let mut docs = Vec::new();
    let mut truth = Vec::new();
    for g in 0..cfg.groups {
        for j in 0..cfg.docs_per_group {
            let mut words: Vec<String> = (0..cfg.vocab_per_group)
                .filter(|_| rng.gen_bool(cfg.term_prob))
                .map(|i| group_term(g, i))
                .collect();
            if words.is_empty() {
                words.push(group_term(g, rng.gen_range(0..cfg.vocab_per_group)));
            }
            words.extend((0..cfg.stop_words).map(stop_word));
            docs.push(document(format!("g{g}d{j}"), words, BTreeMap::new(), rng));
            truth.push(g);
        }
    }
    (docs, truth)
}

/// Two eras of publication years. Domains `a1`, `a2` publish in the first
/// era, `b1`, `b2` in the second, and `c` throughout. Each domain has its
/// own vocabulary and the domains of one era share an era vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EraConfig {
    pub docs_per_domain: usize,
    pub domain_vocab: usize,
    pub era_vocab: usize,
    /// Probability of using each own-domain term.
    pub domain_prob: f64,
    /// Probability of using each era term.
    pub era_prob: f64,
    /// Years per era; years are numbered from 1.
    pub years_per_era: usize,
}

impl Default for EraConfig {
    fn default() -> Self {
        EraConfig {
            docs_per_domain: 20,
            domain_vocab: 25,
            era_vocab: 25,
            domain_prob: 0.3,
            era_prob: 0.3,
            years_per_era: 3,
        }
    }
}

pub const ERA_DOMAINS: [&str; 5] = ["a1", "a2", "b1", "b2", "c"];

/// Era of a domain: 0, 1, or `None` for the domain spanning both.
pub fn domain_era(domain: &str) -> Option<usize> {
    match domain.as_bytes()[0] {
        b'a' => Some(0),
        b'b' => Some(1),
        _ => None,
    }
}

/// Returns the documents (with a `year` dimension) and each one's domain.
pub fn two_era_corpus<R: Rng>(cfg: &EraConfig, rng: &mut R) -> (Vec<Document>, Vec<&'static str>) {
    let mut docs = Vec::new();
    let mut truth = Vec::new();
    for domain in ERA_DOMAINS {
        for j in 0..cfg.docs_per_domain {
            let era = domain_era(domain).unwrap_or_else(|| rng.gen_range(0..2));
            let year = era * cfg.years_per_era + rng.gen_range(0..cfg.years_per_era) + 1;
            let mut words: Vec<String> = (0..cfg.domain_vocab)
                .filter(|_| rng.gen_bool(cfg.domain_prob))
                .map(|i| format!("{domain}w{i}"))
                .collect();
            if domain_era(domain).is_some() {
                words.extend(
                    (0..cfg.era_vocab)
                        .filter(|_| rng.gen_bool(cfg.era_prob))
                        .map(|i| format!("era{era}w{i}")),
                );
            }
            if words.is_empty() {
                words.push(format!("{domain}w0"));
            }
            let meta = BTreeMap::from([("year".to_string(), vec![year.to_string()])]);
            docs.push(document(format!("{domain}d{j}"), words, meta, rng));
            truth.push(domain);
        }
    }
    (docs, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planted_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = PlantedConfig {
            stop_words: 5,
            ..PlantedConfig::default()
        };
        let (docs, truth) = planted_corpus(&cfg, &mut rng);
        assert_eq!(docs.len(), 40);
        assert_eq!(truth.iter().filter(|&&g| g == 1).count(), 20);
        assert!(docs.iter().all(|d| d.text.contains("stop4")));
    }

    #[test]
    fn eras_have_contiguous_years() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (docs, truth) = two_era_corpus(&EraConfig::default(), &mut rng);
        assert_eq!(docs.len(), 100);
        for (d, dom) in docs.iter().zip(&truth) {
            let y: usize = d.meta["year"][0].parse().unwrap();
            match domain_era(dom) {
                Some(0) => assert!((1..=3).contains(&y)),
                Some(_) => assert!((4..=6).contains(&y)),
                None => assert!((1..=6).contains(&y)),
            }
        }
    }
}
