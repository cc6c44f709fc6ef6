//! Acceptance checks for the whole pipeline: numeric cross-checks against
//! naive oracles, metric fixtures, clustering behavior, and an end-to-end
//! synthetic benchmark. Each check prints one `acceptance N: PASS/FAIL`
//! line (run with `--nocapture` to see the PASS lines) and asserts its
//! stated tolerance and runtime bound.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use homonym::cluster::{agglomerate, select_merges, write_traces, ClusterTrace};
use homonym::counts::{block_counts, build_global_counts, GlobalCounts};
use homonym::ingest::ingest_records;
use homonym::metrics::{
    bcube, build_report, pair_f1, reference, trace_stats, write_report, EvalReport, Prf,
    SizeBucket,
};
use homonym::model::{
    feature_id, Block, Clustering, Combine, CountScope, FeatureBag, FeatureType, Mention, Params,
};
use homonym::pipeline::{cluster_block, cluster_blocks, evaluate_blocks};
use homonym::similarity::{
    cluster_conditional, cluster_conditional_naive, mention_conditional,
    mention_conditional_naive, mention_sizes, Matrix,
};
use homonym::synth::{generate_corpus, SynthConfig};
use homonym::train::{fit_weights, sweep_stopping, weight_preset, FitHyper, TrainingSample};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Collects a failure message instead of panicking, so a run reports every
/// violated condition of one criterion at once.
macro_rules! check {
    ($fails:ident, $cond:expr, $($arg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            $fails.push(format!($($arg)+));
        }
    }};
}

fn conclude(criterion: usize, started: Instant, fails: Vec<String>, detail: String) {
    let secs = started.elapsed().as_secs_f64();
    if fails.is_empty() {
        println!("acceptance {criterion}: PASS — {detail} ({secs:.1}s)");
    } else {
        let shown: Vec<&str> = fails.iter().take(3).map(String::as_str).collect();
        println!(
            "acceptance {criterion}: FAIL — {} problem(s), e.g. {} ({secs:.1}s)",
            fails.len(),
            shown.join("; ")
        );
        panic!(
            "acceptance {criterion}: {} problem(s): {}",
            fails.len(),
            shown.join("; ")
        );
    }
}

/// Block of `n` mentions with random bags: up to `max_distinct` features
/// per type drawn from a pool twice that size, integer weights 1..=4, and
/// a 15% chance per type of an empty bag.
fn random_block(rng: &mut ChaCha8Rng, name: &str, n: usize, max_distinct: usize) -> Block {
    let mentions = (0..n)
        .map(|i| {
            let mut m = Mention {
                mention_id: format!("m{i:03}"),
                doc_id: format!("d{i:03}"),
                slot: 0,
                normalized_name: name.to_string(),
                bags: BTreeMap::new(),
                gold_author_id: None,
            };
            for t in FeatureType::ALL {
                if rng.random::<f64>() < 0.15 {
                    continue;
                }
                let k = rng.random_range(1..=max_distinct);
                let bag: FeatureBag = (0..k)
                    .map(|_| {
                        let f = rng.random_range(0..2 * max_distinct);
                        (feature_id(t, &format!("f{f}")), rng.random_range(1..=4) as f64)
                    })
                    .collect();
                m.set_bag(t, bag);
            }
            m
        })
        .collect();
    Block::new(name, mentions).unwrap()
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> Clustering {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Clustering::from_labels(&labels)
}

#[test]
fn acceptance_1_conditionals_match_their_naive_oracles() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst = 0.0f64;
    for round in 0..100 {
        let epsilon = [1e-4, 1e-1][round % 2];
        let n = rng.random_range(2..=12);
        let block = random_block(&mut rng, "DOE, J", n, 20);
        // Collection counts strictly larger than the block's own totals.
        let extra_n = rng.random_range(1..=6);
        let extra = random_block(&mut rng, "ROE, R", extra_n, 20);
        let counts = build_global_counts(block.mentions().iter().chain(extra.mentions()));
        for t in FeatureType::ALL {
            let fast = mention_conditional(&block, &counts, epsilon, t).unwrap();
            let naive = mention_conditional_naive(&block, &counts, epsilon, t).unwrap();
            let d = fast.max_abs_diff(&naive);
            worst = worst.max(d);
            check!(
                fails,
                d < 1e-9,
                "mention-level {t} off by {d:.3e} (n={n}, eps={epsilon})"
            );
            let sizes = mention_sizes(&block, t);
            for _ in 0..2 {
                let part = random_partition(&mut rng, n);
                for combine in [Combine::Prob, Combine::Max] {
                    let lifted =
                        cluster_conditional(&fast, &part, &sizes, epsilon, combine).unwrap();
                    let lifted_naive =
                        cluster_conditional_naive(&fast, &part, &sizes, epsilon, combine).unwrap();
                    let d = lifted.max_abs_diff(&lifted_naive);
                    worst = worst.max(d);
                    check!(
                        fails,
                        d < 1e-9,
                        "cluster-level {t} {combine:?} off by {d:.3e} (n={n}, eps={epsilon})"
                    );
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check!(fails, secs < 10.0, "oracle comparison took {secs:.1}s, bound 10s");
    conclude(
        1,
        t0,
        fails,
        format!("100 random blocks, both epsilons, every feature type; max |Δ| {worst:.2e}"),
    );
}

#[test]
fn acceptance_2_conditional_columns_are_stochastic() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    for round in 0..1000 {
        let epsilon = [1e-4, 1e-1][round % 2];
        let n = rng.random_range(2..=8);
        let block = random_block(&mut rng, "DOE, J", n, 8);
        let within = block_counts(&block);
        for t in FeatureType::ALL {
            let sim = mention_conditional(&block, &within, epsilon, t).unwrap();
            for col in 0..n {
                let sum: f64 = (0..n).map(|row| sim.get(row, col)).sum();
                check!(
                    fails,
                    (sum - 1.0).abs() < 1e-9,
                    "within-scope {t} mention column sums to {sum}"
                );
            }
            let part = random_partition(&mut rng, n);
            let sizes = mention_sizes(&block, t);
            let lifted = cluster_conditional(&sim, &part, &sizes, epsilon, Combine::Prob).unwrap();
            let k = part.n_clusters();
            for col in 0..k {
                let sum: f64 = (0..k).map(|row| lifted.get(row, col)).sum();
                check!(
                    fails,
                    (sum - 1.0).abs() < 1e-9,
                    "within-scope {t} cluster column sums to {sum} over a random partition"
                );
            }
        }
        // Over larger collection counts a column may only lose mass.
        let extra_n = rng.random_range(1..=5);
        let extra = random_block(&mut rng, "ROE, R", extra_n, 8);
        let overall = build_global_counts(block.mentions().iter().chain(extra.mentions()));
        for t in FeatureType::ALL {
            let sim = mention_conditional(&block, &overall, epsilon, t).unwrap();
            for col in 0..n {
                let sum: f64 = (0..n).map(|row| sim.get(row, col)).sum();
                check!(
                    fails,
                    sum <= 1.0 + 1e-9,
                    "overall-scope {t} mention column sums to {sum} > 1"
                );
            }
            let part = random_partition(&mut rng, n);
            let sizes = mention_sizes(&block, t);
            let lifted = cluster_conditional(&sim, &part, &sizes, epsilon, Combine::Prob).unwrap();
            let k = part.n_clusters();
            for col in 0..k {
                let sum: f64 = (0..k).map(|row| lifted.get(row, col)).sum();
                check!(
                    fails,
                    sum <= 1.0 + 1e-9,
                    "overall-scope {t} cluster column sums to {sum} > 1"
                );
            }
        }
    }
    conclude(
        2,
        t0,
        fails,
        "1000 random blocks: within-scope columns sum to 1, overall-scope columns stay ≤ 1"
            .to_string(),
    );
}

#[test]
fn acceptance_3_max_combination_never_exceeds_prob() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    for round in 0..1000 {
        let epsilon = [1e-4, 1e-1][round % 2];
        let n = rng.random_range(2..=8);
        let block = random_block(&mut rng, "DOE, J", n, 8);
        let counts = block_counts(&block);
        let part = random_partition(&mut rng, n);
        for t in FeatureType::ALL {
            let sim = mention_conditional(&block, &counts, epsilon, t).unwrap();
            let sizes = mention_sizes(&block, t);
            let prob = cluster_conditional(&sim, &part, &sizes, epsilon, Combine::Prob).unwrap();
            let max = cluster_conditional(&sim, &part, &sizes, epsilon, Combine::Max).unwrap();
            let k = part.n_clusters();
            for r in 0..k {
                for c in 0..k {
                    check!(
                        fails,
                        max.get(r, c) <= prob.get(r, c) + 1e-12,
                        "{t}: max {} exceeds prob {} at ({r},{c})",
                        max.get(r, c),
                        prob.get(r, c)
                    );
                }
            }
        }
    }
    conclude(
        3,
        t0,
        fails,
        "1000 random (block, partition) instances: max-combined scores dominated elementwise"
            .to_string(),
    );
}

fn prf_bits_equal(a: Prf, b: Prf) -> bool {
    a.precision.to_bits() == b.precision.to_bits()
        && a.recall.to_bits() == b.recall.to_bits()
        && a.f1.to_bits() == b.f1.to_bits()
}

#[test]
fn acceptance_4_metric_fixtures_and_random_oracle_agreement() {
    let t0 = Instant::now();
    let mut fails = Vec::new();

    // System {{1,2},{3}} against gold {{1,2,3}}.
    let sys = Clustering::from_assignment(vec![0, 0, 1]).unwrap();
    let cor = Clustering::from_assignment(vec![0, 0, 0]).unwrap();
    let b = bcube(&sys, &cor).unwrap();
    check!(fails, (b.precision - 1.0).abs() < 1e-12, "bCube precision {}", b.precision);
    check!(fails, (b.recall - 5.0 / 9.0).abs() < 1e-12, "bCube recall {}", b.recall);
    check!(fails, (b.f1 - 5.0 / 7.0).abs() < 1e-12, "bCube F1 {}", b.f1);
    let p = pair_f1(&sys, &cor).unwrap();
    check!(fails, (p.precision - 1.0).abs() < 1e-12, "pair precision {}", p.precision);
    check!(fails, (p.recall - 4.0 / 6.0).abs() < 1e-12, "pair recall {}", p.recall);
    check!(fails, (p.f1 - 0.8).abs() < 1e-12, "pair F1 {}", p.f1);

    // Bit-for-bit agreement with the definitional implementations.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let sys = random_partition(&mut rng, n);
        let cor = random_partition(&mut rng, n);
        let fast = bcube(&sys, &cor).unwrap();
        let slow = reference::bcube(&sys, &cor).unwrap();
        check!(fails, prf_bits_equal(fast, slow), "bCube {fast:?} != reference {slow:?}");
        let fast = pair_f1(&sys, &cor).unwrap();
        let slow = reference::pair_f1(&sys, &cor).unwrap();
        check!(fails, prf_bits_equal(fast, slow), "pair F1 {fast:?} != reference {slow:?}");
    }
    conclude(
        4,
        t0,
        fails,
        "fixture values exact to 1e-12; 1000 random partitions agree with the reference bit-for-bit"
            .to_string(),
    );
}

#[test]
fn acceptance_5_agglomeration_descends_and_replays_identically() {
    let t0 = Instant::now();
    let mut fails = Vec::new();

    // Merge selection on random score matrices: pairs are vertex-disjoint,
    // above the limit, and mutual-best under the symmetrized score.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    for _ in 0..200 {
        let k = rng.random_range(2..=12);
        let mut scores = Matrix::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                scores.set(r, c, rng.random::<f64>());
            }
        }
        let limit = rng.random::<f64>() * 0.8;
        let picked = select_merges(&scores, limit);
        let sym = |i: usize, j: usize| scores.get(i, j).max(scores.get(j, i));
        let mut used = vec![false; k];
        for &(i, j) in &picked {
            check!(fails, i < j && j < k, "pair ({i},{j}) is not ordered");
            check!(fails, !used[i] && !used[j], "pair ({i},{j}) reuses a cluster");
            used[i] = true;
            used[j] = true;
            check!(fails, sym(i, j) > limit, "picked score {} ≤ limit {limit}", sym(i, j));
            let best = |a: usize| {
                (0..k)
                    .filter(|&c| c != a)
                    .map(|c| sym(a, c))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            check!(
                fails,
                sym(i, j) == best(i) && sym(i, j) == best(j),
                "pair ({i},{j}) is not mutual-best"
            );
        }
    }

    // Full descents on random blocks up to 200 mentions, twice from the
    // same seed; traces must replay byte-identically.
    let run = |seed: u64| -> (Vec<ClusterTrace>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![200, 200];
        for _ in 0..26 {
            sizes.push(rng.random_range(5..=80));
        }
        let params = Params {
            count_scope: CountScope::Within,
            ..Params::default()
        };
        let mut traces = Vec::new();
        for (idx, &n) in sizes.iter().enumerate() {
            let name = format!("NAME{idx:02}, A");
            let block = random_block(&mut rng, &name, n, 10);
            let counts = block_counts(&block);
            let (clustering, trace) = agglomerate(&block, &params, &counts, None, true).unwrap();
            assert_eq!(clustering.n_clusters(), trace.converged_at);
            traces.push(trace);
        }
        (traces, sizes)
    };
    let (traces, sizes) = run(0xACC5_0001);
    for (trace, &n) in traces.iter().zip(&sizes) {
        let recs = &trace.records;
        check!(fails, recs[0].n_clusters == n, "first state has {} clusters, not {n}", recs[0].n_clusters);
        check!(
            fails,
            recs.len() <= n,
            "block of {n} took {} iterations, bound is {}",
            recs.len() - 1,
            n - 1
        );
        for w in recs.windows(2) {
            check!(
                fails,
                w[1].n_clusters < w[0].n_clusters,
                "cluster count failed to drop: {} -> {}",
                w[0].n_clusters,
                w[1].n_clusters
            );
        }
        check!(
            fails,
            recs.last().unwrap().n_clusters == 1,
            "hypothetical continuation stopped at {} clusters",
            recs.last().unwrap().n_clusters
        );
        check!(
            fails,
            (1..=n).contains(&trace.converged_at),
            "converged at {} clusters out of {n}",
            trace.converged_at
        );
    }
    let (traces_again, _) = run(0xACC5_0001);
    let mut bytes = Vec::new();
    write_traces(&mut bytes, &traces).unwrap();
    let mut bytes_again = Vec::new();
    write_traces(&mut bytes_again, &traces_again).unwrap();
    check!(fails, bytes == bytes_again, "replayed trace files differ");

    let secs = t0.elapsed().as_secs_f64();
    check!(fails, secs < 60.0, "descent suite took {secs:.1}s, bound 60s");
    conclude(
        5,
        t0,
        fails,
        format!(
            "{} descents up to 200 mentions: monotone, ≤ n−1 iterations, replay byte-identical",
            sizes.len()
        ),
    );
}

/// Benchmark state shared by the quality and baseline checks: a balanced
/// synthetic corpus, a stopping-limit sweep on one half, and the held-out
/// evaluation report, plus a fully separable control corpus.
struct Bench {
    tuned_alpha: f64,
    tuned_beta: f64,
    n_eval_blocks: usize,
    report: EvalReport,
    report_text: String,
    zero_report: EvalReport,
    build_secs: f64,
}

static BENCH: OnceLock<Bench> = OnceLock::new();

fn labeled_corpus(max_size: usize, per_size: usize, overlap: f64, seed: u64) -> (Vec<Block>, GlobalCounts) {
    let mut config = SynthConfig::balanced(max_size, per_size, seed);
    config.overlap = overlap;
    let (records, _) = generate_corpus(&config).unwrap();
    let (blocks, _) = ingest_records(&records).unwrap();
    let counts = build_global_counts(blocks.iter().flat_map(|b| b.mentions()));
    let labeled = blocks
        .into_iter()
        .filter(|b| b.gold_clustering().is_some())
        .collect();
    (labeled, counts)
}

fn bench() -> &'static Bench {
    BENCH.get_or_init(|| {
        let t0 = Instant::now();
        let (labeled, counts) = labeled_corpus(10, 50, 0.1, 20260817);
        // Tuning and held-out halves, stratified by true author count.
        let mut train = Vec::new();
        let mut eval = Vec::new();
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for block in labeled {
            let size = block.gold_clustering().unwrap().n_clusters();
            let turn = seen.entry(size).or_insert(0);
            if (*turn).is_multiple_of(2) {
                train.push(block);
            } else {
                eval.push(block);
            }
            *turn += 1;
        }
        let base = Params::default();
        let grid: Vec<(f64, f64)> = [0.02, 0.03, 0.05, 0.08]
            .into_iter()
            .flat_map(|alpha| [(alpha, 0.0), (alpha, 2.5e-4)])
            .collect();
        let rows = sweep_stopping(&train, &base, Some(&counts), &grid).unwrap();
        let best = &rows[0];
        let mut tuned = base.clone();
        tuned.alpha = best.alpha;
        tuned.beta = best.beta;
        let results = cluster_blocks(&eval, &tuned, Some(&counts), true).unwrap();
        let evals = evaluate_blocks(&eval, &results).unwrap();
        let report = build_report(&evals);
        let mut text = Vec::new();
        write_report(&mut text, &report).unwrap();

        // Control corpus without any cross-author contamination, clustered
        // under the same tuned stopping limit.
        let (zero_blocks, zero_counts) = labeled_corpus(10, 50, 0.0, 20260818);
        let zero_results = cluster_blocks(&zero_blocks, &tuned, Some(&zero_counts), true).unwrap();
        let zero_evals = evaluate_blocks(&zero_blocks, &zero_results).unwrap();
        let zero_report = build_report(&zero_evals);

        Bench {
            tuned_alpha: best.alpha,
            tuned_beta: best.beta,
            n_eval_blocks: eval.len(),
            report,
            report_text: String::from_utf8(text).unwrap(),
            zero_report,
            build_secs: t0.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn acceptance_6_synthetic_benchmark_reaches_quality_targets() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let b = bench();
    let rows = b.report.metric_rows("bcube");
    check!(fails, rows.len() == 10, "expected 10 size buckets, found {}", rows.len());
    for (bucket, row) in &rows {
        check!(
            fails,
            row.f1 >= 0.90,
            "size {bucket}: macro bCube F1 {:.4} below 0.90 over {} blocks",
            row.f1,
            row.n_blocks
        );
    }
    for size in 1..=3 {
        match rows.get(&SizeBucket::from_size(size)) {
            Some(row) => check!(
                fails,
                row.f1 >= 0.95,
                "size {size}: macro bCube F1 {:.4} below 0.95",
                row.f1
            ),
            None => fails.push(format!("no bCube bucket for size {size}")),
        }
    }
    let zero_rows = b.zero_report.metric_rows("bcube");
    check!(fails, zero_rows.len() == 10, "separable control: {} buckets", zero_rows.len());
    for (bucket, row) in &zero_rows {
        check!(
            fails,
            row.precision == 1.0 && row.recall == 1.0 && row.f1 == 1.0,
            "separable control at size {bucket}: ({}, {}, {}) is not exactly perfect",
            row.precision,
            row.recall,
            row.f1
        );
    }
    check!(
        fails,
        b.build_secs < 300.0,
        "benchmark build took {:.0}s, bound 300s",
        b.build_secs
    );
    conclude(
        6,
        t0,
        fails,
        format!(
            "swept limit alpha={} beta={} on half the corpus; {} held-out blocks meet 0.90/0.95 targets; separable control exact (built in {:.0}s)",
            b.tuned_alpha, b.tuned_beta, b.n_eval_blocks, b.build_secs
        ),
    );
}

#[test]
fn acceptance_7_single_cluster_baseline_brackets_the_method() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let b = bench();
    let method = b.report.metric_rows("bcube");
    let baseline = b.report.metric_rows("bcube_baseline");
    check!(
        fails,
        baseline.len() == method.len() && !baseline.is_empty(),
        "baseline rows incomplete: {} vs {} method rows",
        baseline.len(),
        method.len()
    );
    for bucket in method.keys() {
        check!(
            fails,
            b.report_text.contains(&format!("bcube_baseline,{bucket},")),
            "report text lacks the bCube baseline row for size {bucket}"
        );
        check!(
            fails,
            b.report_text.contains(&format!("pairf1_baseline,{bucket},")),
            "report text lacks the pair-F1 baseline row for size {bucket}"
        );
    }
    match baseline.get(&SizeBucket::from_size(1)) {
        Some(row) => check!(
            fails,
            row.precision == 1.0 && row.recall == 1.0 && row.f1 == 1.0,
            "single-cluster baseline at size 1 scores ({}, {}, {}), expected exact 1s",
            row.precision,
            row.recall,
            row.f1
        ),
        None => fails.push("no baseline bucket for size 1".to_string()),
    }
    for size in 3..=10 {
        let bucket = SizeBucket::from_size(size);
        match (method.get(&bucket), baseline.get(&bucket)) {
            (Some(m), Some(bl)) => check!(
                fails,
                bl.f1 < m.f1,
                "size {size}: baseline F1 {:.4} is not strictly below the method's {:.4}",
                bl.f1,
                m.f1
            ),
            _ => fails.push(format!("missing bCube rows for size {size}")),
        }
    }
    conclude(
        7,
        t0,
        fails,
        "baseline rows present for every bucket, exact at size 1, strictly dominated from size 3 up"
            .to_string(),
    );
}

#[test]
fn acceptance_8_trace_statistics_match_a_brute_force_scan() {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let (labeled, counts) = labeled_corpus(5, 6, 0.1, 20260819);
    let params = Params {
        alpha: 0.05,
        ..Params::default()
    };
    let results = cluster_blocks(&labeled, &params, Some(&counts), true).unwrap();
    let evals = evaluate_blocks(&labeled, &results).unwrap();
    check!(
        fails,
        evals.len() == labeled.len(),
        "{} evals for {} fully labeled blocks",
        evals.len(),
        labeled.len()
    );
    let mut checked = 0usize;
    for ((block, (_, trace)), eval) in labeled.iter().zip(&results).zip(&evals) {
        check!(fails, eval.block_name == block.name(), "eval order diverged at {}", block.name());
        let stats = trace_stats(trace).unwrap();
        // Brute-force rescan of the recorded states.
        let mut max_rec = 0.0f64;
        let mut max_prec = 0.0f64;
        let mut converged = 0usize;
        for rec in &trace.records {
            let (p, r) = (rec.precision.unwrap(), rec.recall.unwrap());
            if p == 1.0 {
                max_rec = max_rec.max(r);
            }
            if r == 1.0 {
                max_prec = max_prec.max(p);
            }
            if rec.before_convergence {
                converged = rec.n_clusters;
            }
        }
        check!(
            fails,
            stats.max_rec_at_perfect_precision.to_bits() == max_rec.to_bits(),
            "{}: reported best recall at perfect precision {} != rescanned {}",
            block.name(),
            stats.max_rec_at_perfect_precision,
            max_rec
        );
        check!(
            fails,
            stats.max_prec_at_perfect_recall.to_bits() == max_prec.to_bits(),
            "{}: reported best precision at perfect recall {} != rescanned {}",
            block.name(),
            stats.max_prec_at_perfect_recall,
            max_prec
        );
        check!(
            fails,
            stats.converged_size == converged && converged == trace.converged_at,
            "{}: converged size {} vs rescan {} vs trace {}",
            block.name(),
            stats.converged_size,
            converged,
            trace.converged_at
        );
        check!(
            fails,
            eval.trace == Some(stats),
            "{}: evaluation carries {:?}, trace scan says {:?}",
            block.name(),
            eval.trace,
            stats
        );
        checked += 1;
    }
    check!(fails, checked >= 30, "only {checked} traced blocks were checked");
    conclude(
        8,
        t0,
        fails,
        format!("{checked} traced blocks: reported statistics equal the brute-force rescan exactly"),
    );
}

#[test]
fn acceptance_9_weight_fitting_and_presets_run_end_to_end() {
    let t0 = Instant::now();
    let mut fails = Vec::new();

    // Training set where only coauthor overlap separates the classes.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC9);
    let separable = FeatureType::Co;
    let samples: Vec<TrainingSample> = (0..600)
        .map(|_| {
            let correct = rng.random::<f64>() < 0.5;
            let mut values = [0.0; FeatureType::COUNT];
            for t in FeatureType::ALL {
                values[t.index()] = if t == separable {
                    if correct {
                        0.75 + 0.2 * rng.random::<f64>()
                    } else {
                        0.05 * rng.random::<f64>()
                    }
                } else {
                    0.28 + 0.04 * rng.random::<f64>()
                };
            }
            TrainingSample { values, correct }
        })
        .collect();
    let fitted = fit_weights(&samples, FitHyper::default());
    let total: f64 = fitted.iter().sum();
    check!(fails, (total - 1.0).abs() <= 1e-9, "fitted weights sum to {total}");
    check!(
        fails,
        fitted[separable.index()] >= 0.9,
        "separable type got weight {:.4}, expected ≥ 0.9",
        fitted[separable.index()]
    );

    // Every preset validates and drives a clustering run to the end.
    let (labeled, counts) = labeled_corpus(3, 2, 0.1, 20260820);
    let block = labeled
        .iter()
        .max_by_key(|b| b.len())
        .expect("corpus has labeled blocks");
    let mut presets: Vec<String> = ["uniform", "author", "doc"].map(String::from).to_vec();
    for t in FeatureType::ALL {
        presets.push(format!("select:{}", t.name()));
        presets.push(format!("leave-out:{}", t.name()));
    }
    let mut ran = 0usize;
    let mut run_preset = |name: &str, base: Option<&[f64; FeatureType::COUNT]>, fails: &mut Vec<String>| {
        let lambda = match weight_preset(name, base) {
            Ok(l) => l,
            Err(e) => {
                fails.push(format!("preset {name} failed to load: {e}"));
                return;
            }
        };
        let total: f64 = lambda.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            fails.push(format!("preset {name} sums to {total}"));
            return;
        }
        let params = match Params::default().with_lambda(lambda) {
            Ok(p) => p,
            Err(e) => {
                fails.push(format!("preset {name} rejected by validation: {e}"));
                return;
            }
        };
        match cluster_block(block, &params, Some(&counts), true) {
            Ok((clustering, trace)) => {
                if clustering.n_mentions() != block.len() {
                    fails.push(format!("preset {name} lost mentions"));
                } else if trace.records.last().unwrap().n_clusters != 1 {
                    fails.push(format!("preset {name} did not descend to one cluster"));
                } else {
                    ran += 1;
                }
            }
            Err(e) => fails.push(format!("preset {name} failed to cluster: {e}")),
        }
    };
    for name in &presets {
        run_preset(name, None, &mut fails);
    }
    for name in ["trained", "opposed"] {
        run_preset(name, Some(&fitted), &mut fails);
    }
    let n_presets = presets.len() + 2;
    check!(fails, ran == n_presets, "only {ran} of {n_presets} presets ran end-to-end");
    for name in ["trained", "opposed"] {
        check!(
            fails,
            weight_preset(name, None).is_err(),
            "preset {name} must demand a base weight vector"
        );
    }
    check!(
        fails,
        weight_preset("no-such-preset", None).is_err(),
        "unknown preset names must be rejected"
    );
    conclude(
        9,
        t0,
        fails,
        format!(
            "fitted weight {:.3} on the separable type; {ran} presets loaded, normalized, and clustered end-to-end",
            fitted[separable.index()]
        ),
    );
}
