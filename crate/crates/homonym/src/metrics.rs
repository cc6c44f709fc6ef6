//! Clustering evaluation: modified pairwise F1, bCube, per-name macro
//! averages grouped by true cluster count, and descent-trace statistics.
//!
//! The pairwise metric counts singleton self-pairs alongside ordinary
//! pairs, so precision and recall stay defined for all-singleton
//! partitions. Both metrics come in a fast counting form and a literal
//! set-based form under [`reference`]; the two agree bit for bit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterTrace;
use crate::model::Clustering;
use crate::{Error, Result};

/// Precision, recall, and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// f1 = 2PR/(P+R), or 0 when both are 0.
    pub fn new(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

fn check_comparable(sys: &Clustering, cor: &Clustering) -> Result<usize> {
    let n = sys.n_mentions();
    if n != cor.n_mentions() {
        return Err(Error::MentionSetMismatch(format!(
            "system partitions {n} mentions, gold partitions {}",
            cor.n_mentions()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidClustering(
            "cannot score an empty clustering".to_string(),
        ));
    }
    Ok(n)
}

/// All unordered within-cluster pairs, plus one (x,x) self-pair per
/// mention. Pairs are (low, high) index tuples.
pub fn pairs(clustering: &Clustering) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for cluster in clustering.members() {
        for (i, &a) in cluster.iter().enumerate() {
            out.insert((a, a));
            for &b in &cluster[i + 1..] {
                out.insert((a, b));
            }
        }
    }
    out
}

/// n(n−1)/2 ordinary pairs plus n self-pairs, summed over clusters.
fn pair_count(sizes: &[usize]) -> u64 {
    sizes
        .iter()
        .map(|&n| {
            let n = n as u64;
            n * (n - 1) / 2 + n
        })
        .sum()
}

/// Joint cluster-membership cell counts n(s,c).
fn contingency(sys: &Clustering, cor: &Clustering) -> HashMap<(usize, usize), u64> {
    let mut table = HashMap::new();
    for (&s, &c) in sys.assignment().iter().zip(cor.assignment()) {
        *table.entry((s, c)).or_insert(0u64) += 1;
    }
    table
}

/// Pairwise precision/recall over the modified pair sets.
pub fn pair_f1(sys: &Clustering, cor: &Clustering) -> Result<Prf> {
    check_comparable(sys, cor)?;
    let inter: u64 = contingency(sys, cor)
        .values()
        .map(|&n| n * (n - 1) / 2 + n)
        .sum();
    let sys_pairs = pair_count(&sys.cluster_sizes());
    let cor_pairs = pair_count(&cor.cluster_sizes());
    Ok(Prf::new(
        inter as f64 / sys_pairs as f64,
        inter as f64 / cor_pairs as f64,
    ))
}

/// bCube precision/recall: per-mention cluster-overlap ratios, averaged.
pub fn bcube(sys: &Clustering, cor: &Clustering) -> Result<Prf> {
    let n = check_comparable(sys, cor)?;
    let table = contingency(sys, cor);
    let sys_sizes = sys.cluster_sizes();
    let cor_sizes = cor.cluster_sizes();
    let (mut psum, mut rsum) = (0.0, 0.0);
    for (&s, &c) in sys.assignment().iter().zip(cor.assignment()) {
        let overlap = table[&(s, c)] as f64;
        psum += overlap / sys_sizes[s] as f64;
        rsum += overlap / cor_sizes[c] as f64;
    }
    Ok(Prf::new(psum / n as f64, rsum / n as f64))
}

/// Literal definitional implementations, kept structurally independent of
/// the counting forms above. Used as exact-agreement oracles.
pub mod reference {
    use super::*;

    pub fn pair_f1(sys: &Clustering, cor: &Clustering) -> Result<Prf> {
        check_comparable(sys, cor)?;
        let sys_pairs = pairs(sys);
        let cor_pairs = pairs(cor);
        let inter = sys_pairs.intersection(&cor_pairs).count();
        Ok(Prf::new(
            inter as f64 / sys_pairs.len() as f64,
            inter as f64 / cor_pairs.len() as f64,
        ))
    }

    pub fn bcube(sys: &Clustering, cor: &Clustering) -> Result<Prf> {
        let n = check_comparable(sys, cor)?;
        let sa = sys.assignment();
        let ca = cor.assignment();
        let (mut psum, mut rsum) = (0.0, 0.0);
        for x in 0..n {
            let overlap = (0..n)
                .filter(|&y| sa[y] == sa[x] && ca[y] == ca[x])
                .count() as f64;
            let sys_size = (0..n).filter(|&y| sa[y] == sa[x]).count() as f64;
            let cor_size = (0..n).filter(|&y| ca[y] == ca[x]).count() as f64;
            psum += overlap / sys_size;
            rsum += overlap / cor_size;
        }
        Ok(Prf::new(psum / n as f64, rsum / n as f64))
    }
}

/// True-cluster-count bucket for report grouping: exact for 1..9, pooled
/// at ten and above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SizeBucket(usize);

impl SizeBucket {
    pub fn from_size(cor_size: usize) -> SizeBucket {
        SizeBucket(cor_size.min(10))
    }
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 >= 10 {
            write!(f, "10+")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Groups (true cluster count, block PRF) pairs by bucket and averages
/// precision and recall arithmetically; f1 is recomputed from the
/// averages, never averaged itself.
pub fn macro_average(
    per_block: impl IntoIterator<Item = (usize, Prf)>,
) -> BTreeMap<SizeBucket, (Prf, usize)> {
    let mut groups: BTreeMap<SizeBucket, Vec<Prf>> = BTreeMap::new();
    for (cor_size, prf) in per_block {
        groups
            .entry(SizeBucket::from_size(cor_size))
            .or_default()
            .push(prf);
    }
    groups
        .into_iter()
        .map(|(bucket, prfs)| {
            let n = prfs.len();
            let p = prfs.iter().map(|x| x.precision).sum::<f64>() / n as f64;
            let r = prfs.iter().map(|x| x.recall).sum::<f64>() / n as f64;
            (bucket, (Prf::new(p, r), n))
        })
        .collect()
}

/// Summary of one descent trace against gold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    /// Best recall among states with precision exactly 1.
    pub max_rec_at_perfect_precision: f64,
    /// Best precision among states with recall exactly 1.
    pub max_prec_at_perfect_recall: f64,
    /// Cluster count of the last state before hypothetical continuation.
    pub converged_size: usize,
}

/// Scans a trace whose records carry gold precision/recall.
pub fn trace_stats(trace: &ClusterTrace) -> Result<TraceStats> {
    let mut max_rec = 0.0f64;
    let mut max_prec = 0.0f64;
    let mut converged = None;
    for rec in &trace.records {
        let (Some(p), Some(r)) = (rec.precision, rec.recall) else {
            return Err(Error::InvalidClustering(format!(
                "trace for {:?} lacks gold precision/recall",
                trace.block_name
            )));
        };
        if p == 1.0 {
            max_rec = max_rec.max(r);
        }
        if r == 1.0 {
            max_prec = max_prec.max(p);
        }
        if rec.before_convergence {
            converged = Some(rec.n_clusters);
        }
    }
    let converged_size = converged.ok_or_else(|| {
        Error::InvalidClustering(format!("trace for {:?} is empty", trace.block_name))
    })?;
    Ok(TraceStats {
        max_rec_at_perfect_precision: max_rec,
        max_prec_at_perfect_recall: max_prec,
        converged_size,
    })
}

/// Everything measured about one block: method and single-cluster
/// baseline against gold, plus trace statistics when a traced run is
/// available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEval {
    pub block_name: String,
    pub n_mentions: usize,
    /// Number of gold clusters; the grouping key for macro averages.
    pub cor_size: usize,
    pub bcube: Prf,
    pub pair: Prf,
    pub bcube_baseline: Prf,
    pub pair_baseline: Prf,
    pub trace: Option<TraceStats>,
}

pub fn evaluate_block(
    block_name: &str,
    sys: &Clustering,
    cor: &Clustering,
    trace: Option<&ClusterTrace>,
) -> Result<BlockEval> {
    let baseline = Clustering::single_cluster(sys.n_mentions());
    Ok(BlockEval {
        block_name: block_name.to_string(),
        n_mentions: sys.n_mentions(),
        cor_size: cor.n_clusters(),
        bcube: bcube(sys, cor)?,
        pair: pair_f1(sys, cor)?,
        bcube_baseline: bcube(&baseline, cor)?,
        pair_baseline: pair_f1(&baseline, cor)?,
        trace: trace.map(trace_stats).transpose()?,
    })
}

/// One macro-averaged report line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub metric: &'static str,
    pub bucket: SizeBucket,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_blocks: usize,
}

/// Macro-averaged rows for method and baseline under both metrics, the
/// convergence-size histogram, and trace-summary means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// converged cluster count -> number of blocks; sums to the number of
    /// traced blocks.
    pub convergence_hist: BTreeMap<usize, usize>,
    pub mean_max_rec_at_perfect_precision: Option<f64>,
    pub mean_max_prec_at_perfect_recall: Option<f64>,
    pub n_blocks: usize,
}

impl EvalReport {
    /// Rows of one metric, keyed by bucket.
    pub fn metric_rows(&self, metric: &str) -> BTreeMap<SizeBucket, &ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.bucket, r))
            .collect()
    }
}

pub fn build_report(evals: &[BlockEval]) -> EvalReport {
    let selectors: [(&'static str, fn(&BlockEval) -> Prf); 4] = [
        ("bcube", |e| e.bcube),
        ("pairf1", |e| e.pair),
        ("bcube_baseline", |e| e.bcube_baseline),
        ("pairf1_baseline", |e| e.pair_baseline),
    ];
    let mut rows = Vec::new();
    for (metric, select) in selectors {
        let grouped = macro_average(evals.iter().map(|e| (e.cor_size, select(e))));
        for (bucket, (prf, n_blocks)) in grouped {
            rows.push(ReportRow {
                metric,
                bucket,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                n_blocks,
            });
        }
    }
    let mut convergence_hist = BTreeMap::new();
    let mut recs = Vec::new();
    let mut precs = Vec::new();
    for stats in evals.iter().filter_map(|e| e.trace.as_ref()) {
        *convergence_hist.entry(stats.converged_size).or_insert(0) += 1;
        recs.push(stats.max_rec_at_perfect_precision);
        precs.push(stats.max_prec_at_perfect_recall);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    EvalReport {
        rows,
        convergence_hist,
        mean_max_rec_at_perfect_precision: mean(&recs),
        mean_max_prec_at_perfect_recall: mean(&precs),
        n_blocks: evals.len(),
    }
}

/// Pair F1 with the pair sets pooled across blocks before dividing, the
/// alternative to per-name macro averaging.
pub fn pooled_pair_f1<'a>(
    per_block: impl IntoIterator<Item = (&'a Clustering, &'a Clustering)>,
) -> Result<Prf> {
    let (mut inter, mut sys_total, mut cor_total) = (0u64, 0u64, 0u64);
    let mut any = false;
    for (sys, cor) in per_block {
        check_comparable(sys, cor)?;
        any = true;
        inter += contingency(sys, cor)
            .values()
            .map(|&n| n * (n - 1) / 2 + n)
            .sum::<u64>();
        sys_total += pair_count(&sys.cluster_sizes());
        cor_total += pair_count(&cor.cluster_sizes());
    }
    if !any {
        return Err(Error::InvalidClustering(
            "no blocks to pool".to_string(),
        ));
    }
    Ok(Prf::new(
        inter as f64 / sys_total as f64,
        inter as f64 / cor_total as f64,
    ))
}

/// Report CSV: metric,size,precision,recall,f1,n_blocks. Baseline rows use
/// the *_baseline metric names; the two trace-summary means land in their
/// own rows with size "all".
pub fn write_report<W: Write>(writer: W, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "size", "precision", "recall", "f1", "n_blocks"])?;
    for row in &report.rows {
        w.write_record([
            row.metric,
            &row.bucket.to_string(),
            &row.precision.to_string(),
            &row.recall.to_string(),
            &row.f1.to_string(),
            &row.n_blocks.to_string(),
        ])?;
    }
    let traced = report.convergence_hist.values().sum::<usize>();
    if let Some(v) = report.mean_max_rec_at_perfect_precision {
        w.write_record([
            "max_rec_at_perfect_precision",
            "all",
            "",
            &v.to_string(),
            "",
            &traced.to_string(),
        ])?;
    }
    if let Some(v) = report.mean_max_prec_at_perfect_recall {
        w.write_record([
            "max_prec_at_perfect_recall",
            "all",
            &v.to_string(),
            "",
            "",
            &traced.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram CSV: size_at_convergence,count.
pub fn write_convergence_hist<W: Write>(writer: W, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["size_at_convergence", "count"])?;
    for (size, count) in &report.convergence_hist {
        w.write_record([&size.to_string(), &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-block trace summary CSV; blocks without traces are skipped.
pub fn write_trace_stats<W: Write>(writer: W, evals: &[BlockEval]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "block",
        "max_rec_at_perfect_precision",
        "max_prec_at_perfect_recall",
        "converged_size",
    ])?;
    for eval in evals {
        if let Some(stats) = &eval.trace {
            w.write_record([
                eval.block_name.as_str(),
                &stats.max_rec_at_perfect_precision.to_string(),
                &stats.max_prec_at_perfect_recall.to_string(),
                &stats.converged_size.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::IterationRecord;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_clustering(rng: &mut ChaCha8Rng, n: usize, max_clusters: usize) -> Clustering {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..max_clusters)).collect();
        Clustering::from_labels(&labels)
    }

    #[test]
    fn pairs_include_self_pairs() {
        let c = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
        let expected: BTreeSet<(usize, usize)> =
            [(0, 0), (0, 1), (1, 1), (2, 2)].into_iter().collect();
        assert_eq!(pairs(&c), expected);

        let singles = Clustering::singletons(4);
        assert_eq!(pairs(&singles).len(), 4);

        let one = Clustering::single_cluster(5);
        assert_eq!(pairs(&one).len(), 5 * 4 / 2 + 5);
    }

    #[test]
    fn pair_f1_fixture() {
        let sys = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
        let cor = Clustering::single_cluster(3);
        let prf = pair_f1(&sys, &cor).unwrap();
        assert_eq!(prf.precision, 1.0);
        assert_eq!(prf.recall, 4.0 / 6.0);
        assert!((prf.f1 - 0.8).abs() < 1e-12);

        let same = pair_f1(&sys, &sys).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));

        let singles = Clustering::singletons(4);
        let one = Clustering::single_cluster(4);
        let prf = pair_f1(&singles, &one).unwrap();
        assert_eq!(prf.precision, 1.0);
        assert_eq!(prf.recall, 4.0 / 10.0);
    }

    #[test]
    fn bcube_fixture() {
        let sys = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
        let cor = Clustering::single_cluster(3);
        let prf = bcube(&sys, &cor).unwrap();
        assert_eq!(prf.precision, 1.0);
        assert!((prf.recall - 5.0 / 9.0).abs() < 1e-12);

        let same = bcube(&cor, &cor).unwrap();
        assert_eq!((same.precision, same.recall), (1.0, 1.0));
    }

    #[test]
    fn single_cluster_baseline_against_singleton_gold() {
        let n = 7;
        let baseline = Clustering::single_cluster(n);
        let gold = Clustering::singletons(n);
        let prf = bcube(&baseline, &gold).unwrap();
        assert!((prf.precision - 1.0 / n as f64).abs() < 1e-12);
        assert_eq!(prf.recall, 1.0);
    }

    #[test]
    fn f1_is_zero_only_when_both_are_zero() {
        let zero = Prf::new(0.0, 0.0);
        assert_eq!(zero.f1, 0.0);
        let p_only = Prf::new(0.5, 0.0);
        assert_eq!(p_only.f1, 0.0);
        let both = Prf::new(0.5, 0.5);
        assert!((both.f1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatched_or_empty_inputs_are_rejected() {
        let a = Clustering::singletons(3);
        let b = Clustering::singletons(4);
        assert!(matches!(
            pair_f1(&a, &b).unwrap_err(),
            Error::MentionSetMismatch(_)
        ));
        assert!(bcube(&a, &b).is_err());
        let empty = Clustering::singletons(0);
        assert!(bcube(&empty, &empty).is_err());
    }

    #[test]
    fn swapping_arguments_swaps_precision_and_recall_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.random_range(1..=12);
            let a = random_clustering(&mut rng, n, 4);
            let b = random_clustering(&mut rng, n, 3);
            let metrics: [fn(&Clustering, &Clustering) -> Result<Prf>; 2] = [pair_f1, bcube];
            for f in metrics {
                let fwd = f(&a, &b).unwrap();
                let rev = f(&b, &a).unwrap();
                assert_eq!(fwd.precision.to_bits(), rev.recall.to_bits());
                assert_eq!(fwd.recall.to_bits(), rev.precision.to_bits());
            }
        }
    }

    #[test]
    fn counting_forms_match_reference_forms_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..200 {
            let n = rng.random_range(1..=15);
            let sys = random_clustering(&mut rng, n, 5);
            let cor = random_clustering(&mut rng, n, 4);
            let fast = pair_f1(&sys, &cor).unwrap();
            let slow = reference::pair_f1(&sys, &cor).unwrap();
            assert_eq!(fast.precision.to_bits(), slow.precision.to_bits());
            assert_eq!(fast.recall.to_bits(), slow.recall.to_bits());
            assert_eq!(fast.f1.to_bits(), slow.f1.to_bits());
            let fast = bcube(&sys, &cor).unwrap();
            let slow = reference::bcube(&sys, &cor).unwrap();
            assert_eq!(fast.precision.to_bits(), slow.precision.to_bits());
            assert_eq!(fast.recall.to_bits(), slow.recall.to_bits());
        }
    }

    #[test]
    fn refining_the_system_trades_recall_for_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut tested = 0;
        while tested < 100 {
            let n = rng.random_range(2..=14);
            let sys = random_clustering(&mut rng, n, 3);
            let cor = random_clustering(&mut rng, n, 4);
            let members = sys.members();
            let Some(big) = members.iter().position(|m| m.len() >= 2) else {
                continue;
            };
            // Split one cluster at a random cut point.
            let cut = rng.random_range(1..members[big].len());
            let mut labels: Vec<usize> = sys.assignment().to_vec();
            let fresh = sys.n_clusters();
            for &x in &members[big][cut..] {
                labels[x] = fresh;
            }
            let refined = Clustering::from_labels(&labels);
            assert_eq!(refined.n_clusters(), sys.n_clusters() + 1);
            let before = bcube(&sys, &cor).unwrap();
            let after = bcube(&refined, &cor).unwrap();
            assert!(after.precision >= before.precision - 1e-12);
            assert!(after.recall <= before.recall + 1e-12);
            tested += 1;
        }
    }

    #[test]
    fn macro_average_recomputes_f1_from_averages() {
        let blocks = vec![(2, Prf::new(1.0, 0.5)), (2, Prf::new(0.5, 1.0))];
        let grouped = macro_average(blocks);
        let (prf, n) = grouped[&SizeBucket::from_size(2)];
        assert_eq!(n, 2);
        assert!((prf.precision - 0.75).abs() < 1e-12);
        assert!((prf.recall - 0.75).abs() < 1e-12);
        assert!((prf.f1 - 0.75).abs() < 1e-12);
        // Averaging the per-block F1s would give 2/3 instead.
        let mean_f1 = (Prf::new(1.0, 0.5).f1 + Prf::new(0.5, 1.0).f1) / 2.0;
        assert!((mean_f1 - 2.0 / 3.0).abs() < 1e-12);

        let single = macro_average(vec![(3, Prf::new(0.9, 0.8))]);
        let (prf, n) = single[&SizeBucket::from_size(3)];
        assert_eq!(n, 1);
        assert_eq!(prf.precision, 0.9);
        assert_eq!(prf.recall, 0.8);
    }

    #[test]
    fn size_buckets_pool_ten_and_above() {
        assert_eq!(SizeBucket::from_size(3).to_string(), "3");
        assert_eq!(SizeBucket::from_size(10).to_string(), "10+");
        assert_eq!(SizeBucket::from_size(17), SizeBucket::from_size(10));
        assert!(SizeBucket::from_size(9) < SizeBucket::from_size(10));
    }

    fn rec(n: usize, p: f64, r: f64, before: bool) -> IterationRecord {
        IterationRecord {
            n_clusters: n,
            precision: Some(p),
            recall: Some(r),
            before_convergence: before,
        }
    }

    #[test]
    fn trace_stats_scans_perfect_states() {
        let trace = ClusterTrace {
            block_name: "B".to_string(),
            records: vec![
                rec(4, 1.0, 0.5, true),
                rec(3, 1.0, 0.75, true),
                rec(2, 0.9, 0.9, false),
                rec(1, 0.6, 1.0, false),
            ],
            converged_at: 3,
        };
        let stats = trace_stats(&trace).unwrap();
        assert_eq!(stats.max_rec_at_perfect_precision, 0.75);
        assert_eq!(stats.max_prec_at_perfect_recall, 0.6);
        assert_eq!(stats.converged_size, 3);
    }

    #[test]
    fn trace_stats_handles_a_singleton_only_trace() {
        // Never merging leaves only the all-singletons state: recall there
        // is the per-mention 1/|cor(x)| average, and no state reaches full
        // recall.
        let gold = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
        let singles = Clustering::singletons(3);
        let prf = bcube(&singles, &gold).unwrap();
        let trace = ClusterTrace {
            block_name: "B".to_string(),
            records: vec![rec(3, prf.precision, prf.recall, true)],
            converged_at: 3,
        };
        let stats = trace_stats(&trace).unwrap();
        let expected = (1.0 / 2.0 + 1.0 / 2.0 + 1.0) / 3.0;
        assert!((stats.max_rec_at_perfect_precision - expected).abs() < 1e-12);
        assert_eq!(stats.max_prec_at_perfect_recall, 0.0);
    }

    #[test]
    fn trace_stats_requires_gold_records() {
        let trace = ClusterTrace {
            block_name: "B".to_string(),
            records: vec![IterationRecord {
                n_clusters: 2,
                precision: None,
                recall: None,
                before_convergence: true,
            }],
            converged_at: 2,
        };
        assert!(trace_stats(&trace).is_err());
    }

    #[test]
    fn report_covers_all_metrics_and_sums_the_histogram() {
        let sys1 = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
        let cor1 = Clustering::single_cluster(3);
        let trace1 = ClusterTrace {
            block_name: "A".to_string(),
            records: vec![rec(3, 1.0, 5.0 / 9.0, true), rec(1, 5.0 / 9.0, 1.0, false)],
            converged_at: 3,
        };
        let e1 = evaluate_block("A", &sys1, &cor1, Some(&trace1)).unwrap();
        let sys2 = Clustering::singletons(2);
        let cor2 = Clustering::singletons(2);
        let trace2 = ClusterTrace {
            block_name: "B".to_string(),
            records: vec![rec(2, 1.0, 1.0, true), rec(1, 0.5, 1.0, false)],
            converged_at: 2,
        };
        let e2 = evaluate_block("B", &sys2, &cor2, Some(&trace2)).unwrap();

        let report = build_report(&[e1.clone(), e2.clone()]);
        assert_eq!(report.n_blocks, 2);
        assert_eq!(report.rows.len(), 8);
        assert_eq!(report.convergence_hist.values().sum::<usize>(), 2);
        let bcube_rows = report.metric_rows("bcube");
        assert_eq!(bcube_rows[&SizeBucket::from_size(1)].n_blocks, 1);
        assert_eq!(bcube_rows[&SizeBucket::from_size(2)].precision, 1.0);
        // Baseline precision for the singleton-gold block is 1/2.
        let base = report.metric_rows("bcube_baseline");
        assert_eq!(base[&SizeBucket::from_size(2)].precision, 0.5);
        assert!((report.mean_max_rec_at_perfect_precision.unwrap()
            - (5.0 / 9.0 + 1.0) / 2.0)
            .abs()
            < 1e-12);

        let mut bytes = Vec::new();
        write_report(&mut bytes, &report).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("metric,size,precision,recall,f1,n_blocks"));
        assert!(text.contains("bcube_baseline,1,"));
        assert!(text.contains("max_rec_at_perfect_precision,all,,"));

        let mut bytes = Vec::new();
        write_convergence_hist(&mut bytes, &report).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("size_at_convergence,count"));
        assert!(text.contains("2,1"));

        let mut bytes = Vec::new();
        write_trace_stats(&mut bytes, &[e1, e2]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn pooled_pairs_accumulate_before_dividing() {
        let sys_a = Clustering::single_cluster(2);
        let cor_a = Clustering::single_cluster(2);
        let sys_b = Clustering::singletons(2);
        let cor_b = Clustering::single_cluster(2);
        let pooled = pooled_pair_f1(vec![(&sys_a, &cor_a), (&sys_b, &cor_b)]).unwrap();
        assert_eq!(pooled.precision, 1.0);
        assert_eq!(pooled.recall, 5.0 / 6.0);
        assert!(pooled_pair_f1(Vec::new()).is_err());
    }
}
