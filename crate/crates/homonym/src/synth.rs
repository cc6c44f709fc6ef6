//! Synthetic gold-labeled corpora for end-to-end testing.
//!
//! Every synthetic author owns namespaced home pools (terms, categories,
//! keywords, coauthor names, one affiliation, one email, a year range)
//! that are disjoint from every other author's. Each content draw of a
//! document (terms, categories, keywords, coauthors, references) switches
//! to a random other author of the same block with the configured overlap
//! probability, so zero overlap yields fully separable blocks and rising
//! overlap blends what authors write about and with whom. Affiliation,
//! email, and year always come from the author: identity features do not
//! rub off on namesakes.
//!
//! References never point at an author's own papers: each author gets two
//! bibliography documents authored by their coauthor pool, and citing
//! those keeps the reference evidence disjoint across authors too (the
//! block's shared name would otherwise leak through cited author lists).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{mention_id, AuthorSlot, DocumentRecord, YEAR_WINDOW};
use crate::{Error, Result};

/// Home pool sizes per author.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub terms: usize,
    pub cats: usize,
    pub keys: usize,
    pub coauthors: usize,
    /// Publication years per author span this many consecutive years.
    pub year_span: u32,
}

impl Default for VocabSizes {
    fn default() -> VocabSizes {
        VocabSizes {
            terms: 12,
            cats: 3,
            keys: 6,
            coauthors: 3,
            year_span: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// true cluster count -> number of blocks generated with that count.
    pub n_blocks_per_size: BTreeMap<usize, usize>,
    /// Inclusive range of documents per author.
    pub mentions_per_author: (usize, usize),
    pub vocab: VocabSizes,
    /// Probability that one content draw (terms, categories, keywords,
    /// coauthors, references) comes from another author of the same
    /// block. Single-author blocks always draw from the own pool.
    pub overlap: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// The balanced per-size layout: `per_size` blocks for every true
    /// cluster count 1..=max_size, 3 to 8 documents per author.
    pub fn balanced(max_size: usize, per_size: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_blocks_per_size: (1..=max_size).map(|s| (s, per_size)).collect(),
            mentions_per_author: (3, 8),
            vocab: VocabSizes::default(),
            overlap: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_blocks_per_size.is_empty() {
            return fail("no block sizes configured".to_string());
        }
        for (&size, &count) in &self.n_blocks_per_size {
            if size < 1 || count < 1 {
                return fail(format!("block size {size} with count {count}"));
            }
        }
        let (lo, hi) = self.mentions_per_author;
        if lo < 1 || lo > hi {
            return fail(format!("bad mentions_per_author range ({lo}, {hi})"));
        }
        let v = &self.vocab;
        if v.terms < 1 || v.cats < 1 || v.keys < 1 || v.coauthors < 1 || v.year_span < 1 {
            return fail(format!("vocab sizes must be at least 1: {v:?}"));
        }
        if !(self.overlap >= 0.0 && self.overlap <= 1.0) {
            return fail(format!("overlap must lie in [0, 1], got {}", self.overlap));
        }
        Ok(())
    }
}

/// Letters-only base-23 id ('x' is reserved as a separator), so encoded
/// indices survive term tokenization.
fn enc(mut n: usize) -> String {
    let mut bytes = Vec::new();
    loop {
        bytes.push(b'a' + (n % 23) as u8);
        n /= 23;
        if n == 0 {
            break;
        }
    }
    bytes.reverse();
    String::from_utf8(bytes).unwrap()
}

struct AuthorProfile {
    id: String,
    terms: Vec<String>,
    cats: Vec<String>,
    keys: Vec<String>,
    /// Raw coauthor names; also the author list of the bibliography docs.
    coauthors: Vec<String>,
    affiliation: String,
    email: String,
    year_base: i32,
}

fn profile(block: usize, author: usize, v: &VocabSizes) -> AuthorProfile {
    AuthorProfile {
        id: format!("blk{block}a{author}"),
        terms: (0..v.terms)
            .map(|i| format!("t{}x{}x{}", enc(block), enc(author), enc(i)))
            .collect(),
        cats: (0..v.cats).map(|i| format!("cat{block}.{author}.{i}")).collect(),
        keys: (0..v.keys).map(|i| format!("key{block}.{author}.{i}")).collect(),
        coauthors: (0..v.coauthors)
            .map(|i| format!("Co{}x{}x{}, B.", enc(block), enc(author), enc(i)))
            .collect(),
        affiliation: format!("Institute {block}-{author}"),
        email: format!("auth{block}x{author}@example.org"),
        // Spaced so the expanded year windows of same-block authors never
        // touch: ids reach window years beyond each side of the span.
        year_base: 1600 + author as i32 * (v.year_span as i32 + 2 * YEAR_WINDOW + 1),
    }
}

/// The shared sighting name of one block.
fn block_author_name(block: usize) -> String {
    format!("Name{}, A.", enc(block))
}

fn pick_source(rng: &mut ChaCha8Rng, own: usize, size: usize, overlap: f64) -> usize {
    if size > 1 && rng.random::<f64>() < overlap {
        let mut other = rng.random_range(0..size - 1);
        if other >= own {
            other += 1;
        }
        other
    } else {
        own
    }
}

/// Citable documents per author.
const BIBLIOGRAPHY_DOCS: usize = 2;

fn bibliography_doc(
    block: usize,
    author: usize,
    idx: usize,
    profiles: &[AuthorProfile],
    rng: &mut ChaCha8Rng,
) -> DocumentRecord {
    let own = &profiles[author];
    let mut authors: Vec<String> = (0..2)
        .map(|s| own.coauthors[(idx + s) % own.coauthors.len()].clone())
        .collect();
    authors.dedup();
    let title = (0..2)
        .map(|_| own.terms.choose(rng).unwrap().as_str())
        .collect::<Vec<_>>()
        .join(" ");
    DocumentRecord {
        doc_id: format!("r{block}x{author}x{idx}"),
        title,
        abstract_text: String::new(),
        year: Some(own.year_base),
        categories: Vec::new(),
        keywords: Vec::new(),
        author_slots: authors
            .into_iter()
            .map(|raw_name| AuthorSlot {
                raw_name,
                affiliations: Vec::new(),
                emails: Vec::new(),
                gold_author_id: None,
            })
            .collect(),
        references: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn author_doc(
    block: usize,
    author: usize,
    doc_idx: usize,
    size: usize,
    config: &SynthConfig,
    profiles: &[AuthorProfile],
    rng: &mut ChaCha8Rng,
    gold: &mut BTreeMap<String, String>,
) -> DocumentRecord {
    let v = &config.vocab;
    let src = |rng: &mut ChaCha8Rng| pick_source(rng, author, size, config.overlap);

    let draw_terms = |rng: &mut ChaCha8Rng, n: usize| -> String {
        (0..n)
            .map(|_| profiles[src(rng)].terms.choose(rng).unwrap().as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let title = draw_terms(rng, 3);
    let abstract_text = draw_terms(rng, 6);
    let categories: Vec<String> = (0..rng.random_range(1..=2))
        .map(|_| profiles[src(rng)].cats.choose(rng).unwrap().clone())
        .collect();
    let keywords: Vec<String> = (0..2)
        .map(|_| profiles[src(rng)].keys.choose(rng).unwrap().clone())
        .collect();
    let mut coauthor_names: Vec<String> = (0..2)
        .map(|_| profiles[src(rng)].coauthors.choose(rng).unwrap().clone())
        .collect();
    coauthor_names.sort();
    coauthor_names.dedup();
    // Always at least one reference: an empty bag would score as a
    // uniform column and blur authors across the block.
    let mut references: Vec<String> = (0..rng.random_range(1..=2))
        .map(|_| {
            format!(
                "r{block}x{}x{}",
                src(rng),
                rng.random_range(0..BIBLIOGRAPHY_DOCS)
            )
        })
        .collect();
    references.sort();
    references.dedup();
    let own = &profiles[author];
    let year = own.year_base + rng.random_range(0..v.year_span as i32);
    let aff = own.affiliation.clone();
    let email = own.email.clone();

    let mut author_slots: Vec<AuthorSlot> = coauthor_names
        .into_iter()
        .map(|raw_name| AuthorSlot {
            raw_name,
            affiliations: Vec::new(),
            emails: Vec::new(),
            gold_author_id: None,
        })
        .collect();
    let primary_pos = rng.random_range(0..=author_slots.len());
    author_slots.insert(
        primary_pos,
        AuthorSlot {
            raw_name: block_author_name(block),
            affiliations: vec![aff],
            emails: vec![email],
            gold_author_id: Some(profiles[author].id.clone()),
        },
    );
    let doc_id = format!("d{block}x{author}x{doc_idx}");
    gold.insert(mention_id(&doc_id, primary_pos), profiles[author].id.clone());
    DocumentRecord {
        doc_id,
        title,
        abstract_text,
        year: Some(year),
        categories,
        keywords,
        author_slots,
        references,
    }
}

/// Generates the configured corpus: bibliography documents first, then
/// every author's own documents, block by block. Returns the records and
/// the mention_id -> author_id gold map (primary author slots only).
/// Byte-identical for equal configs.
pub fn generate_corpus(
    config: &SynthConfig,
) -> Result<(Vec<DocumentRecord>, BTreeMap<String, String>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    let mut gold = BTreeMap::new();
    let mut block = 0usize;
    for (&size, &count) in &config.n_blocks_per_size {
        for _ in 0..count {
            let profiles: Vec<AuthorProfile> =
                (0..size).map(|j| profile(block, j, &config.vocab)).collect();
            for j in 0..size {
                for i in 0..BIBLIOGRAPHY_DOCS {
                    records.push(bibliography_doc(block, j, i, &profiles, &mut rng));
                }
            }
            let (lo, hi) = config.mentions_per_author;
            for j in 0..size {
                let n_docs = rng.random_range(lo..=hi);
                for k in 0..n_docs {
                    records.push(author_doc(
                        block, j, k, size, config, &profiles, &mut rng, &mut gold,
                    ));
                }
            }
            block += 1;
        }
    }
    Ok((records, gold))
}

/// Sizes drawn with probability proportional to k^(−s) over 1..=max_size.
pub fn zipf_block_sizes(
    n_blocks: usize,
    s_exponent: f64,
    max_size: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    assert!(s_exponent > 0.0, "the exponent must be positive");
    assert!(max_size >= 1);
    let cumulative: Vec<f64> = (1..=max_size)
        .scan(0.0, |acc, k| {
            *acc += (k as f64).powf(-s_exponent);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    (0..n_blocks)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cumulative.partition_point(|&c| c <= u) + 1
        })
        .collect()
}

/// Gold TSV rows "mention_id\tauthor_id", sorted by mention id.
pub fn write_gold<W: Write>(mut writer: W, gold: &BTreeMap<String, String>) -> Result<()> {
    for (mention, author) in gold {
        writeln!(writer, "{mention}\t{author}")?;
    }
    Ok(())
}

/// Reads a gold TSV written by [`write_gold`]; '#' comment lines are
/// skipped.
pub fn read_gold<R: BufRead>(reader: R, source: &str) -> Result<BTreeMap<String, String>> {
    let fail = |msg: String| Error::Format {
        path: source.to_string(),
        msg,
    };
    let mut gold = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (mention, author) = trimmed
            .split_once('\t')
            .ok_or_else(|| fail(format!("line {}: expected <mention>\\t<author>", idx + 1)))?;
        if gold.insert(mention.to_string(), author.to_string()).is_some() {
            return Err(fail(format!("duplicate mention id {mention:?}")));
        }
    }
    Ok(gold)
}
