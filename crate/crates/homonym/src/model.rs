//! Core data types shared by every stage: feature bags, mentions, name
//! blocks, clusterings and scoring parameters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The kinds of evidence attached to a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    /// Title and abstract words.
    Term,
    /// Affiliation strings of the author slot.
    Aff,
    /// Subject categories of the document.
    Cat,
    /// Author keywords of the document.
    Key,
    /// Names of the other author slots on the document.
    Co,
    /// Author names of in-collection referenced documents.
    Ref,
    /// E-mail addresses of the author slot.
    Email,
    /// Publication year, expanded into a window of neighbouring years.
    Year,
}

impl FeatureType {
    pub const COUNT: usize = 8;

    pub const ALL: [FeatureType; Self::COUNT] = [
        FeatureType::Term,
        FeatureType::Aff,
        FeatureType::Cat,
        FeatureType::Key,
        FeatureType::Co,
        FeatureType::Ref,
        FeatureType::Email,
        FeatureType::Year,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::Term => "term",
            FeatureType::Aff => "aff",
            FeatureType::Cat => "cat",
            FeatureType::Key => "key",
            FeatureType::Co => "co",
            FeatureType::Ref => "ref",
            FeatureType::Email => "email",
            FeatureType::Year => "year",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureType> {
        FeatureType::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Whether values of this type are shared by every author slot of a
    /// document rather than belonging to one slot.
    pub fn is_unspecific(self) -> bool {
        matches!(
            self,
            FeatureType::Term | FeatureType::Cat | FeatureType::Key | FeatureType::Year
        )
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureType::from_name(s).ok_or_else(|| Error::InvalidParams(format!("unknown feature type {s:?}")))
    }
}

/// Builds the namespaced feature id for a raw value, e.g. `co:DOE, J`.
/// The prefix keeps ids from different types distinct everywhere they meet.
pub fn feature_id(ftype: FeatureType, value: &str) -> String {
    format!("{}:{}", ftype.name(), value)
}

/// Maps every feature type through `f` into a type-indexed array.
pub fn per_type<T>(mut f: impl FnMut(FeatureType) -> T) -> [T; FeatureType::COUNT] {
    FeatureType::ALL.map(&mut f)
}

/// Weighted multiset of namespaced feature ids. Weights are strictly
/// positive; an id that would get weight zero is simply absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureBag(BTreeMap<String, f64>);

impl FeatureBag {
    pub const fn new() -> FeatureBag {
        FeatureBag(BTreeMap::new())
    }

    /// Accumulates `weight` onto `id`. Non-positive weights are rejected.
    pub fn add(&mut self, id: impl Into<String>, weight: f64) {
        debug_assert!(weight > 0.0, "feature weights must be positive");
        if weight > 0.0 {
            *self.0.entry(id.into()).or_insert(0.0) += weight;
        }
    }

    pub fn get(&self, id: &str) -> f64 {
        self.0.get(id).copied().unwrap_or(0.0)
    }

    /// Sum of all weights; the mention size #(x) for this type.
    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in lexicographic id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn validate(&self, ftype: FeatureType) -> Result<()> {
        let prefix = format!("{}:", ftype.name());
        for (id, w) in self.iter() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidRecord(format!(
                    "feature {id:?} has non-positive weight {w}"
                )));
            }
            if !id.starts_with(&prefix) {
                return Err(Error::InvalidRecord(format!(
                    "feature {id:?} lacks the {prefix:?} namespace"
                )));
            }
        }
        Ok(())
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for FeatureBag {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut bag = FeatureBag::new();
        for (id, w) in iter {
            bag.add(id, w);
        }
        bag
    }
}

static EMPTY_BAG: FeatureBag = FeatureBag::new();

/// One author slot of one document, with all its evidence bags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub doc_id: String,
    /// Author position on the document; `(doc_id, slot)` fixes the canonical
    /// mention order inside a block.
    pub slot: usize,
    pub normalized_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bags: BTreeMap<FeatureType, FeatureBag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_author_id: Option<String>,
}

impl Mention {
    pub fn bag(&self, ftype: FeatureType) -> &FeatureBag {
        self.bags.get(&ftype).unwrap_or(&EMPTY_BAG)
    }

    /// Stores a bag, dropping empty ones so serialized mentions stay compact.
    pub fn set_bag(&mut self, ftype: FeatureType, bag: FeatureBag) {
        if bag.is_empty() {
            self.bags.remove(&ftype);
        } else {
            self.bags.insert(ftype, bag);
        }
    }

    /// The mention size #(x) for one feature type.
    pub fn size(&self, ftype: FeatureType) -> f64 {
        self.bag(ftype).total()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mention_id.is_empty() || self.doc_id.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "mention {:?} needs non-empty mention_id and doc_id",
                self.mention_id
            )));
        }
        if self.doc_id.chars().any(|c| c.is_control() || c.is_whitespace()) {
            return Err(Error::InvalidRecord(format!(
                "doc_id {:?} contains whitespace or control characters",
                self.doc_id
            )));
        }
        for (&t, bag) in &self.bags {
            bag.validate(t)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct BlockRaw {
    name: String,
    mentions: Vec<Mention>,
}

/// All mentions sharing one normalized name, in canonical `(doc_id, slot)`
/// order. Matrix row and column indices throughout the crate refer to this
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRaw", into = "BlockRaw")]
pub struct Block {
    name: String,
    mentions: Vec<Mention>,
}

impl Block {
    pub fn new(name: impl Into<String>, mut mentions: Vec<Mention>) -> Result<Block> {
        let name = name.into();
        if mentions.is_empty() {
            return Err(Error::InvalidRecord(format!("block {name:?} has no mentions")));
        }
        for m in &mentions {
            m.validate()?;
            if m.normalized_name != name {
                return Err(Error::InvalidRecord(format!(
                    "mention {:?} is named {:?}, not {name:?}",
                    m.mention_id, m.normalized_name
                )));
            }
        }
        mentions.sort_by(|a, b| (&a.doc_id, a.slot).cmp(&(&b.doc_id, b.slot)));
        let mut ids = HashSet::new();
        for pair in mentions.windows(2) {
            if pair[0].doc_id == pair[1].doc_id && pair[0].slot == pair[1].slot {
                return Err(Error::InvalidRecord(format!(
                    "mentions {:?} and {:?} occupy the same document slot",
                    pair[0].mention_id, pair[1].mention_id
                )));
            }
        }
        for m in &mentions {
            if !ids.insert(m.mention_id.as_str()) {
                return Err(Error::DuplicateMentionId(m.mention_id.clone()));
            }
        }
        drop(ids);
        Ok(Block { name, mentions })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    /// The reference clustering by gold author id, if every mention has one.
    pub fn gold_clustering(&self) -> Option<Clustering> {
        let labels: Option<Vec<&str>> = self
            .mentions
            .iter()
            .map(|m| m.gold_author_id.as_deref())
            .collect();
        labels.map(|l| Clustering::from_labels(&l))
    }
}

impl TryFrom<BlockRaw> for Block {
    type Error = Error;

    fn try_from(raw: BlockRaw) -> Result<Block> {
        Block::new(raw.name, raw.mentions)
    }
}

impl From<Block> for BlockRaw {
    fn from(b: Block) -> BlockRaw {
        BlockRaw {
            name: b.name,
            mentions: b.mentions,
        }
    }
}

/// A partition of a block's mentions. Cluster ids are dense: every id in
/// `0..n_clusters` names a non-empty cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Clustering {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl Clustering {
    /// Validates an explicit assignment: ids must cover `0..=max` with no gaps.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Clustering> {
        let n_clusters = assignment.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut seen = vec![false; n_clusters];
        for &c in &assignment {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidClustering(format!(
                "cluster id {missing} is empty but ids up to {} exist",
                n_clusters - 1
            )));
        }
        Ok(Clustering {
            assignment,
            n_clusters,
        })
    }

    /// Builds a clustering from arbitrary labels; ids are assigned in order
    /// of first occurrence, which makes the result canonical for the given
    /// mention order.
    pub fn from_labels<T: Eq + Hash>(labels: &[T]) -> Clustering {
        let mut ids: HashMap<&T, usize> = HashMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for label in labels {
            let next = ids.len();
            assignment.push(*ids.entry(label).or_insert(next));
        }
        Clustering {
            n_clusters: ids.len(),
            assignment,
        }
    }

    pub fn singletons(n: usize) -> Clustering {
        Clustering {
            assignment: (0..n).collect(),
            n_clusters: n,
        }
    }

    pub fn single_cluster(n: usize) -> Clustering {
        Clustering {
            assignment: vec![0; n],
            n_clusters: if n == 0 { 0 } else { 1 },
        }
    }

    pub fn n_mentions(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, mention: usize) -> usize {
        self.assignment[mention]
    }

    /// Cluster populations indexed by cluster id; the counts sum to the
    /// mention count.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Mention indices per cluster, ascending inside each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_clusters];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c].push(i);
        }
        members
    }

    /// The partition induced on a subset of mentions. `keep` lists mention
    /// indices; its order becomes the new mention order.
    pub fn restricted_to(&self, keep: &[usize]) -> Clustering {
        let labels: Vec<usize> = keep.iter().map(|&i| self.assignment[i]).collect();
        Clustering::from_labels(&labels)
    }

    /// Applies a vertex-disjoint set of cluster merges and re-indexes the
    /// result canonically.
    pub fn merge_pairs(&self, pairs: &[(usize, usize)]) -> Result<Clustering> {
        let mut target: Vec<usize> = (0..self.n_clusters).collect();
        let mut touched = vec![false; self.n_clusters];
        for &(i, j) in pairs {
            if i >= self.n_clusters || j >= self.n_clusters || i == j {
                return Err(Error::InvalidClustering(format!(
                    "merge pair ({i}, {j}) is out of range for {} clusters",
                    self.n_clusters
                )));
            }
            if touched[i] || touched[j] {
                return Err(Error::InvalidClustering(format!(
                    "merge pairs are not vertex-disjoint at ({i}, {j})"
                )));
            }
            touched[i] = true;
            touched[j] = true;
            let t = i.min(j);
            target[i] = t;
            target[j] = t;
        }
        let labels: Vec<usize> = self.assignment.iter().map(|&c| target[c]).collect();
        Ok(Clustering::from_labels(&labels))
    }
}

impl TryFrom<Vec<usize>> for Clustering {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Clustering> {
        Clustering::from_assignment(v)
    }
}

impl From<Clustering> for Vec<usize> {
    fn from(c: Clustering) -> Vec<usize> {
        c.assignment
    }
}

/// Which mention population the relative frequencies are counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountScope {
    /// Counts from the block being clustered.
    Within,
    /// Counts from the whole collection.
    Overall,
}

/// Whether merge scores use the conditional alone or multiply in the
/// cluster prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Conditional,
    Joint,
}

/// How mention-pair contributions combine into a cluster-pair value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Weighted sum over all mention pairs.
    Prob,
    /// Best single weighted mention pair.
    Max,
}

macro_rules! impl_flag_strings {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    _ => Err(Error::InvalidParams(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), s
                    ))),
                }
            }
        }
    };
}

impl_flag_strings!(CountScope { Within => "within", Overall => "overall" });
impl_flag_strings!(ScoreKind { Conditional => "conditional", Joint => "joint" });
impl_flag_strings!(Combine { Prob => "prob", Max => "max" });

/// Scoring configuration for one clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Smoothing mass; must be positive so empty bags stay comparable.
    pub epsilon: f64,
    /// Per-type mixing weights, kept normalized to sum 1.
    pub lambda: [f64; FeatureType::COUNT],
    /// Constant part of the merge quality limit.
    pub alpha: f64,
    /// Per-mention part of the merge quality limit.
    pub beta: f64,
    pub count_scope: CountScope,
    pub score_kind: ScoreKind,
    pub combine: Combine,
}

impl Default for Params {
    fn default() -> Params {
        Params {
            epsilon: 1e-4,
            lambda: [1.0 / FeatureType::COUNT as f64; FeatureType::COUNT],
            alpha: 0.0,
            beta: 7.5e-5,
            count_scope: CountScope::Overall,
            score_kind: ScoreKind::Conditional,
            combine: Combine::Prob,
        }
    }
}

impl Params {
    pub fn with_lambda(mut self, lambda: [f64; FeatureType::COUNT]) -> Result<Params> {
        self.lambda = normalize_lambda(lambda)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        for (label, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{label} must be non-negative and finite, got {v}"
                )));
            }
        }
        let total: f64 = self.lambda.iter().sum();
        if self.lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "lambda must be non-negative and sum to 1, got {:?}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Scales non-negative weights to sum 1; rejects negative or all-zero input.
pub fn normalize_lambda(lambda: [f64; FeatureType::COUNT]) -> Result<[f64; FeatureType::COUNT]> {
    if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "lambda entries must be non-negative and finite, got {lambda:?}"
        )));
    }
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParams("lambda entries sum to zero".into()));
    }
    Ok(lambda.map(|l| l / total))
}
