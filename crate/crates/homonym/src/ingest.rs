//! Record parsing, name normalization, feature extraction and block
//! building.
//!
//! A document record lists author slots; every slot becomes one mention.
//! Mentions are keyed by the normalized form of their raw name (`LASTNAME,
//! INITS`), and all mentions sharing a normalized name form one block, the
//! unit the clustering stage works on.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::{feature_id, Block, FeatureBag, FeatureType, Mention};
use crate::{Error, Result};

/// Weight of a title word relative to an abstract word.
pub const TITLE_TERM_WEIGHT: f64 = 3.0;

/// Spread of the Gaussian year expansion.
pub const YEAR_SIGMA: f64 = 2.0;

/// Half-width of the year expansion window.
pub const YEAR_WINDOW: i32 = 6;

/// One author position on a document, as found in the input data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorSlot {
    pub raw_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affiliations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emails: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_author_id: Option<String>,
}

/// A bibliographic record as parsed from the line-delimited JSON input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub author_slots: Vec<AuthorSlot>,
    /// doc_ids of referenced documents; only in-collection ids contribute
    /// features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
}

impl DocumentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.doc_id.is_empty()
            || self.doc_id.chars().any(|c| c.is_whitespace() || c.is_control())
        {
            return Err(Error::InvalidRecord(format!(
                "doc_id {:?} must be non-empty without whitespace or control characters",
                self.doc_id
            )));
        }
        if let Some(y) = self.year {
            if !(1500..=2100).contains(&y) {
                return Err(Error::InvalidRecord(format!(
                    "document {:?} has implausible year {y}",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }
}

/// Tallies reported on standard error after an ingest run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: u64,
    pub mentions: u64,
    pub dangling_references: u64,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} records, {} mentions, {} dangling references skipped",
            self.records, self.mentions, self.dangling_references
        )
    }
}

/// The mention id of an author slot; unique because `(doc_id, slot)` is.
pub fn mention_id(doc_id: &str, slot: usize) -> String {
    format!("{doc_id}#{slot}")
}

// Surname particles absorbed into the last name when a name is written
// given-names-first. Sorted for binary search.
const PARTICLES: &[&str] = &[
    "al", "bin", "da", "das", "de", "del", "della", "den", "der", "di", "dos", "du", "el", "ibn",
    "la", "le", "op", "st", "ste", "ten", "ter", "van", "von",
];

fn is_particle(token: &str) -> bool {
    PARTICLES.binary_search(&token.to_lowercase().as_str()).is_ok()
}

/// Normalizes a raw author name to `LASTNAME, INITS`.
///
/// The part before the first comma is the last name (uppercased, periods
/// stripped, internal whitespace collapsed); every token after it
/// contributes initials. A hyphenated given name yields one initial per
/// hyphen part, and a token that is entirely uppercase letters is read as a
/// block of initials, which makes the function idempotent. Without a comma
/// the final token is the last name, along with any particles (van, de,
/// ...) directly before it, as long as a given-name token remains.
pub fn normalize_name(raw: &str) -> Result<String> {
    if !raw.chars().any(|c| c.is_alphabetic()) {
        return Err(Error::EmptyName(raw.to_string()));
    }
    let (last_part, given_part): (String, String) = match raw.find(',') {
        Some(pos) => (raw[..pos].to_string(), raw[pos + 1..].replace(',', " ")),
        None => split_without_comma(raw),
    };
    let last = normalize_last_name(&last_part);
    if last.is_empty() {
        return Err(Error::EmptyName(raw.to_string()));
    }
    let mut initials = String::new();
    for token in given_part.split_whitespace() {
        push_token_initials(token, &mut initials);
    }
    let name = if initials.is_empty() {
        last
    } else {
        format!("{last}, {initials}")
    };
    if !name.chars().any(|c| c.is_alphabetic()) {
        return Err(Error::EmptyName(raw.to_string()));
    }
    Ok(name)
}

fn split_without_comma(raw: &str) -> (String, String) {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() <= 1 {
        return (raw.trim().to_string(), String::new());
    }
    let mut start = tokens.len() - 1;
    while start > 1 && is_particle(tokens[start - 1]) {
        start -= 1;
    }
    (tokens[start..].join(" "), tokens[..start].join(" "))
}

fn normalize_last_name(part: &str) -> String {
    part.split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|&c| c != '.')
                .flat_map(char::to_uppercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn push_token_initials(token: &str, out: &mut String) {
    let is_initials_block =
        !token.is_empty() && token.chars().all(|c| c.is_alphabetic() && c.is_uppercase());
    if is_initials_block {
        out.push_str(token);
    } else {
        for part in token.split(['-', '.']) {
            if let Some(c) = part.chars().find(|c| c.is_alphabetic()) {
                // Only cased letters make stable initials; an uncased
                // letter would not be recognized as an initials block on
                // a second pass.
                let upper: String = c.to_uppercase().collect();
                if upper.chars().all(|u| u.is_alphabetic() && u.is_uppercase()) {
                    out.push_str(&upper);
                }
            }
        }
    }
}

/// Term features from title and abstract: lowercased alphabetic tokens of
/// at least two characters, stopwords removed, title occurrences counting
/// [`TITLE_TERM_WEIGHT`]-fold.
pub fn extract_terms(title: &str, abstract_text: &str) -> FeatureBag {
    extract_terms_with(title, abstract_text, &|t| t.to_string())
}

/// Like [`extract_terms`] with a token-normalizer hook (e.g. a stemmer).
/// Length and stopword filters apply to the normalized token.
pub fn extract_terms_with(
    title: &str,
    abstract_text: &str,
    normalize_token: &dyn Fn(&str) -> String,
) -> FeatureBag {
    let mut bag = FeatureBag::new();
    for (text, weight) in [(title, TITLE_TERM_WEIGHT), (abstract_text, 1.0)] {
        for raw in text.split(|c: char| !c.is_alphabetic()) {
            if raw.is_empty() {
                continue;
            }
            let token = normalize_token(&raw.to_lowercase());
            if token.chars().count() >= 2 && !is_stopword(&token) {
                bag.add(feature_id(FeatureType::Term, &token), weight);
            }
        }
    }
    bag
}

/// Year features for a Gaussian window around the publication year. The
/// center year keeps weight exactly 1.
pub fn expand_year(year: i32, sigma: f64, window: i32) -> FeatureBag {
    debug_assert!(sigma > 0.0 && window >= 0);
    let mut bag = FeatureBag::new();
    for k in -window..=window {
        let w = (-((k * k) as f64) / (2.0 * sigma * sigma)).exp();
        bag.add(feature_id(FeatureType::Year, &(year + k).to_string()), w);
    }
    bag
}

/// Lookup table from doc_id to record, for resolving references.
pub fn corpus_index(records: &[DocumentRecord]) -> HashMap<&str, &DocumentRecord> {
    records.iter().map(|r| (r.doc_id.as_str(), r)).collect()
}

/// Turns one record into one mention per author slot.
///
/// Document-level evidence (terms, categories, keywords, year) is shared
/// verbatim by every slot; affiliations and e-mails stay with their slot;
/// co-author names come from the other slots; reference authors come from
/// in-collection referenced records, with multiplicity. References to
/// unknown doc_ids are skipped and tallied in `report`.
pub fn extract_mentions(
    record: &DocumentRecord,
    index: &HashMap<&str, &DocumentRecord>,
    report: &mut IngestReport,
) -> Result<Vec<Mention>> {
    record.validate()?;
    let terms = extract_terms(&record.title, &record.abstract_text);
    let mut cats = FeatureBag::new();
    for c in &record.categories {
        let c = c.trim();
        if !c.is_empty() {
            cats.add(feature_id(FeatureType::Cat, c), 1.0);
        }
    }
    let mut keys = FeatureBag::new();
    for k in &record.keywords {
        let k = k.trim();
        if !k.is_empty() {
            keys.add(feature_id(FeatureType::Key, k), 1.0);
        }
    }
    let years = record
        .year
        .map(|y| expand_year(y, YEAR_SIGMA, YEAR_WINDOW))
        .unwrap_or_default();

    let mut ref_authors = FeatureBag::new();
    for rid in &record.references {
        match index.get(rid.as_str()) {
            Some(referenced) => {
                for slot in &referenced.author_slots {
                    ref_authors.add(
                        feature_id(FeatureType::Ref, &normalize_name(&slot.raw_name)?),
                        1.0,
                    );
                }
            }
            None => report.dangling_references += 1,
        }
    }

    let names: Vec<String> = record
        .author_slots
        .iter()
        .map(|s| normalize_name(&s.raw_name))
        .collect::<Result<_>>()?;

    let mut mentions = Vec::with_capacity(record.author_slots.len());
    for (slot_idx, slot) in record.author_slots.iter().enumerate() {
        let mut co = FeatureBag::new();
        for (other, name) in names.iter().enumerate() {
            if other != slot_idx {
                co.add(feature_id(FeatureType::Co, name), 1.0);
            }
        }
        let mut aff = FeatureBag::new();
        for a in &slot.affiliations {
            let a = a.trim();
            if !a.is_empty() {
                aff.add(feature_id(FeatureType::Aff, a), 1.0);
            }
        }
        let mut email = FeatureBag::new();
        for e in &slot.emails {
            let e = e.trim().to_lowercase();
            if !e.is_empty() {
                email.add(feature_id(FeatureType::Email, &e), 1.0);
            }
        }

        let mut mention = Mention {
            mention_id: mention_id(&record.doc_id, slot_idx),
            doc_id: record.doc_id.clone(),
            slot: slot_idx,
            normalized_name: names[slot_idx].clone(),
            bags: BTreeMap::new(),
            gold_author_id: slot.gold_author_id.clone(),
        };
        mention.set_bag(FeatureType::Term, terms.clone());
        mention.set_bag(FeatureType::Cat, cats.clone());
        mention.set_bag(FeatureType::Key, keys.clone());
        mention.set_bag(FeatureType::Year, years.clone());
        mention.set_bag(FeatureType::Ref, ref_authors.clone());
        mention.set_bag(FeatureType::Co, co);
        mention.set_bag(FeatureType::Aff, aff);
        mention.set_bag(FeatureType::Email, email);
        mentions.push(mention);
    }
    report.records += 1;
    report.mentions += mentions.len() as u64;
    Ok(mentions)
}

/// Groups mentions by normalized name into blocks, sorted by name.
/// Mention ids must be unique across the whole input.
pub fn build_blocks(mentions: Vec<Mention>) -> Result<Vec<Block>> {
    let mut ids = HashSet::with_capacity(mentions.len());
    for m in &mentions {
        if !ids.insert(m.mention_id.clone()) {
            return Err(Error::DuplicateMentionId(m.mention_id.clone()));
        }
    }
    let mut by_name: BTreeMap<String, Vec<Mention>> = BTreeMap::new();
    for m in mentions {
        by_name.entry(m.normalized_name.clone()).or_default().push(m);
    }
    by_name
        .into_iter()
        .map(|(name, ms)| Block::new(name, ms))
        .collect()
}

/// The full ingest stage: records in, name blocks and a report out.
pub fn ingest_records(records: &[DocumentRecord]) -> Result<(Vec<Block>, IngestReport)> {
    let index = corpus_index(records);
    let mut report = IngestReport::default();
    let mut mentions = Vec::new();
    for record in records {
        mentions.extend(extract_mentions(record, &index, &mut report)?);
    }
    let blocks = build_blocks(mentions)?;
    Ok((blocks, report))
}

/// Reads line-delimited JSON records. Blank lines and `#` comment lines
/// (such as provenance headers) are skipped; `source` names the input in
/// error messages.
pub fn read_records<R: BufRead>(reader: R, source: &str) -> Result<Vec<DocumentRecord>> {
    read_jsonl(reader, source)
}

pub fn write_records<W: Write>(mut writer: W, records: &[DocumentRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited JSON blocks, re-validating each one.
pub fn read_blocks<R: BufRead>(reader: R, source: &str) -> Result<Vec<Block>> {
    read_jsonl(reader, source)
}

pub fn write_blocks<W: Write>(mut writer: W, blocks: &[Block]) -> Result<()> {
    for b in blocks {
        serde_json::to_writer(&mut writer, b)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<R: BufRead, T: serde::de::DeserializeOwned>(
    reader: R,
    source: &str,
) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let item = serde_json::from_str(trimmed).map_err(|e| Error::Format {
            path: source.to_string(),
            msg: format!("line {}: {e}", lineno + 1),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

// English function words dropped from term extraction. Sorted for binary search.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];
