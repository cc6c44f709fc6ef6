//! Feature occurrence counts, either from one block or from the whole
//! collection, plus their TSV persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::model::{Block, FeatureType, Mention};
use crate::{Error, Result};

/// First line of every counts file; bump on layout changes.
pub const COUNTS_FORMAT: &str = "hcounts/1";

/// Per-type feature totals #(f), grand totals #(·) and the mention count N
/// of the counted population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalCounts {
    features: [BTreeMap<String, f64>; FeatureType::COUNT],
    grand: [f64; FeatureType::COUNT],
    n_mentions: u64,
}

impl GlobalCounts {
    pub fn new() -> GlobalCounts {
        GlobalCounts::default()
    }

    /// Adds every bag of one mention. The grand total accumulates mention
    /// sizes, so it matches the per-feature totals up to rounding.
    pub fn add_mention(&mut self, mention: &Mention) {
        for t in FeatureType::ALL {
            let bag = mention.bag(t);
            if bag.is_empty() {
                continue;
            }
            let map = &mut self.features[t.index()];
            for (id, w) in bag.iter() {
                *map.entry(id.to_string()).or_insert(0.0) += w;
            }
            self.grand[t.index()] += bag.total();
        }
        self.n_mentions += 1;
    }

    /// Merges another count table into this one.
    pub fn absorb(&mut self, other: &GlobalCounts) {
        for t in FeatureType::ALL {
            let map = &mut self.features[t.index()];
            for (id, &w) in &other.features[t.index()] {
                *map.entry(id.clone()).or_insert(0.0) += w;
            }
            self.grand[t.index()] += other.grand[t.index()];
        }
        self.n_mentions += other.n_mentions;
    }

    /// #(f) for one feature id, if the feature was ever seen.
    pub fn feature_total(&self, ftype: FeatureType, id: &str) -> Option<f64> {
        self.features[ftype.index()].get(id).copied()
    }

    /// #(·) for one feature type.
    pub fn grand_total(&self, ftype: FeatureType) -> f64 {
        self.grand[ftype.index()]
    }

    /// Number of mentions counted; the |X| of this count scope.
    pub fn mention_count(&self) -> u64 {
        self.n_mentions
    }

    pub fn n_features(&self, ftype: FeatureType) -> usize {
        self.features[ftype.index()].len()
    }

    /// Entries of one type in lexicographic id order.
    pub fn features(&self, ftype: FeatureType) -> impl Iterator<Item = (&str, f64)> {
        self.features[ftype.index()].iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Checks that grand totals agree with the per-feature sums to 1e-9
    /// relative. They are accumulated in different orders, so exact
    /// equality is not guaranteed.
    pub fn validate(&self) -> Result<()> {
        for t in FeatureType::ALL {
            let sum: f64 = self.features[t.index()].values().sum();
            let grand = self.grand[t.index()];
            let scale = grand.abs().max(1.0);
            if (sum - grand).abs() > 1e-9 * scale {
                return Err(Error::InvalidRecord(format!(
                    "grand total for {t} is {grand} but features sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Writes the TSV layout: a version line, feature rows `(ftype,
    /// feature, count)`, one `total` row per type, and a final `mentions`
    /// row whose presence marks the file complete.
    pub fn save<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{COUNTS_FORMAT}")?;
        for t in FeatureType::ALL {
            for (id, w) in self.features(t) {
                writeln!(writer, "{t}\t{id}\t{w}")?;
            }
        }
        for t in FeatureType::ALL {
            writeln!(writer, "total\t{t}\t{}", self.grand[t.index()])?;
        }
        writeln!(writer, "mentions\t\t{}", self.n_mentions)?;
        Ok(())
    }

    /// Reads the layout written by [`GlobalCounts::save`]. A wrong version
    /// line, a malformed row, or a missing `mentions` row (truncation) is a
    /// format error; `#` comment lines are allowed anywhere, including
    /// before the version line.
    pub fn load<R: BufRead>(reader: R, source: &str) -> Result<GlobalCounts> {
        let fail = |msg: String| Error::Format {
            path: source.to_string(),
            msg,
        };
        let mut lines = reader.lines();
        let version = loop {
            match lines.next().transpose()? {
                None => return Err(fail("empty file".into())),
                Some(line) if line.is_empty() || line.starts_with('#') => continue,
                Some(line) => break line,
            }
        };
        if version.trim_end() != COUNTS_FORMAT {
            return Err(fail(format!(
                "format version mismatch: expected {COUNTS_FORMAT:?}, found {:?}",
                version.trim_end()
            )));
        }
        let mut counts = GlobalCounts::new();
        let mut complete = false;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if complete {
                return Err(fail(format!("line {}: content after mentions row", lineno + 2)));
            }
            let mut cols = line.split('\t');
            let (kind, field, value) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), Some(c), None) => (a, b, c),
                _ => return Err(fail(format!("line {}: expected 3 tab-separated columns", lineno + 2))),
            };
            match kind {
                "total" => {
                    let t: FeatureType = field
                        .parse()
                        .map_err(|_| fail(format!("line {}: unknown type {field:?}", lineno + 2)))?;
                    counts.grand[t.index()] = parse_count(value)
                        .ok_or_else(|| fail(format!("line {}: bad total {value:?}", lineno + 2)))?;
                }
                "mentions" => {
                    counts.n_mentions = value
                        .parse()
                        .map_err(|_| fail(format!("line {}: bad mention count {value:?}", lineno + 2)))?;
                    complete = true;
                }
                _ => {
                    let t: FeatureType = kind
                        .parse()
                        .map_err(|_| fail(format!("line {}: unknown type {kind:?}", lineno + 2)))?;
                    let w = parse_count(value)
                        .ok_or_else(|| fail(format!("line {}: bad count {value:?}", lineno + 2)))?;
                    counts.features[t.index()].insert(field.to_string(), w);
                }
            }
        }
        if !complete {
            return Err(fail("missing mentions row; file is truncated".into()));
        }
        counts.validate().map_err(|e| fail(e.to_string()))?;
        Ok(counts)
    }
}

fn parse_count(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|w| w.is_finite() && *w >= 0.0)
}

/// Counts over an iterator of mentions; the overall scope is the counts of
/// every mention in the collection.
pub fn build_global_counts<'a>(mentions: impl IntoIterator<Item = &'a Mention>) -> GlobalCounts {
    let mut counts = GlobalCounts::new();
    for m in mentions {
        counts.add_mention(m);
    }
    counts
}

/// Counts restricted to one block; the within scope.
pub fn block_counts(block: &Block) -> GlobalCounts {
    build_global_counts(block.mentions())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{feature_id, FeatureBag};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn toy_mention(id: &str, entries: &[(&str, f64)]) -> Mention {
        let mut m = Mention {
            mention_id: id.to_string(),
            doc_id: id.to_string(),
            slot: 0,
            normalized_name: "DOE, J".to_string(),
            bags: BTreeMap::new(),
            gold_author_id: None,
        };
        let bag: FeatureBag = entries
            .iter()
            .map(|(v, w)| (feature_id(FeatureType::Term, v), *w))
            .collect();
        m.set_bag(FeatureType::Term, bag);
        m
    }

    /// Three mentions over features a, b, c, d with the weights used by the
    /// similarity fixtures.
    fn toy_block() -> Block {
        Block::new(
            "DOE, J",
            vec![
                toy_mention("x1", &[("a", 1.0), ("b", 1.0)]),
                toy_mention("x2", &[("a", 1.0), ("c", 1.0)]),
                toy_mention("x3", &[("d", 2.0)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn toy_block_counts() {
        let counts = block_counts(&toy_block());
        assert_eq!(counts.feature_total(FeatureType::Term, "term:a"), Some(2.0));
        assert_eq!(counts.feature_total(FeatureType::Term, "term:b"), Some(1.0));
        assert_eq!(counts.feature_total(FeatureType::Term, "term:c"), Some(1.0));
        assert_eq!(counts.feature_total(FeatureType::Term, "term:d"), Some(2.0));
        assert_eq!(counts.feature_total(FeatureType::Term, "term:z"), None);
        assert_eq!(counts.grand_total(FeatureType::Term), 6.0);
        assert_eq!(counts.mention_count(), 3);
        counts.validate().unwrap();
    }

    #[test]
    fn empty_corpus_counts_are_zero() {
        let counts = build_global_counts([]);
        assert_eq!(counts.mention_count(), 0);
        for t in FeatureType::ALL {
            assert_eq!(counts.grand_total(t), 0.0);
            assert_eq!(counts.n_features(t), 0);
        }
    }

    #[test]
    fn single_mention_block_counts_equal_its_bag() {
        let m = toy_mention("solo", &[("q", 2.5)]);
        let block = Block::new("DOE, J", vec![m]).unwrap();
        let counts = block_counts(&block);
        assert_eq!(counts.feature_total(FeatureType::Term, "term:q"), Some(2.5));
        assert_eq!(counts.grand_total(FeatureType::Term), 2.5);
        assert_eq!(counts.mention_count(), 1);
    }

    #[test]
    fn block_counts_never_exceed_overall() {
        let block = toy_block();
        let extra = toy_mention("y1", &[("a", 4.0)]);
        let mut all: Vec<Mention> = block.mentions().to_vec();
        all.push(extra);
        let overall = build_global_counts(&all);
        let within = block_counts(&block);
        for (id, w) in within.features(FeatureType::Term) {
            assert!(w <= overall.feature_total(FeatureType::Term, id).unwrap());
        }
        assert!(within.grand_total(FeatureType::Term) <= overall.grand_total(FeatureType::Term));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut counts = block_counts(&toy_block());
        // Awkward values that must survive the text round trip bit-for-bit.
        counts.features[FeatureType::Year.index()]
            .insert("year:2000".into(), 0.1 + 0.2);
        counts.grand[FeatureType::Year.index()] = 0.1 + 0.2;
        let mut buf = Vec::new();
        counts.save(&mut buf).unwrap();
        let back = GlobalCounts::load(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, counts);
    }

    #[test]
    fn truncated_and_mislabeled_files_are_rejected() {
        let mut buf = Vec::new();
        block_counts(&toy_block()).save(&mut buf).unwrap();

        let text = String::from_utf8(buf.clone()).unwrap();
        let without_tail: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        let err = GlobalCounts::load(without_tail.as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let wrong_version = text.replacen(COUNTS_FORMAT, "hcounts/9", 1);
        let err = GlobalCounts::load(wrong_version.as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let garbled = text.replace("term\tterm:a\t2", "term\tterm:a");
        assert!(GlobalCounts::load(garbled.as_bytes(), "t").is_err());
    }

    #[test]
    fn comment_lines_are_tolerated_after_version() {
        let mut buf = Vec::new();
        let counts = block_counts(&toy_block());
        counts.save(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let with_comment = text.replacen('\n', "\n# provenance: test\n", 1);
        let back = GlobalCounts::load(with_comment.as_bytes(), "t").unwrap();
        assert_eq!(back, counts);
    }

    proptest! {
        #[test]
        fn counting_is_additive_over_mention_sets(
            weights_a in prop::collection::vec((0usize..6, 0.5f64..4.0), 1..12),
            weights_b in prop::collection::vec((0usize..6, 0.5f64..4.0), 1..12),
        ) {
            let features = ["a", "b", "c", "d", "e", "f"];
            let to_mentions = |weights: &[(usize, f64)], tag: &str| -> Vec<Mention> {
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, (f, w))| toy_mention(&format!("{tag}{i}"), &[(features[*f], *w)]))
                    .collect()
            };
            let ms_a = to_mentions(&weights_a, "a");
            let ms_b = to_mentions(&weights_b, "b");
            let mut combined = build_global_counts(&ms_a);
            combined.absorb(&build_global_counts(&ms_b));
            let direct = build_global_counts(ms_a.iter().chain(ms_b.iter()));
            prop_assert_eq!(combined.mention_count(), direct.mention_count());
            for (id, w) in direct.features(FeatureType::Term) {
                let other = combined.feature_total(FeatureType::Term, id).unwrap();
                prop_assert!((w - other).abs() <= 1e-9 * w.abs().max(1.0));
            }
            combined.validate().unwrap();
        }
    }
}
