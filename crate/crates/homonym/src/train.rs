//! Feature-type weight learning and stopping-parameter search.
//!
//! Training data comes from gold-labeled blocks: for a mention x and a
//! size s, one cluster is carved from x's own gold cluster and one from a
//! different cluster, and the per-type probabilities p_t(x|C) of both form
//! a correct/incorrect sample pair. A small logistic regression over the
//! eight per-type values yields mixing weights; fixed preset vectors cover
//! the standard comparison settings.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counts::GlobalCounts;
use crate::metrics::{build_report, SizeBucket};
use crate::model::{normalize_lambda, Block, Clustering, FeatureType, Params};
use crate::pipeline::{cluster_blocks, evaluate_blocks};
use crate::similarity::{mention_conditional, mention_sizes, mention_to_cluster, Matrix};
use crate::{Error, Result};

/// One labeled comparison: p_t(x|C) per feature type, and whether C was
/// x's own gold cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub values: [f64; FeatureType::COUNT],
    pub correct: bool,
}

/// Gradient-descent hyperparameters for [`fit_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitHyper {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for FitHyper {
    fn default() -> FitHyper {
        FitHyper {
            learning_rate: 0.1,
            epochs: 500,
        }
    }
}

/// (x, s) sampling events drawn per block; each event yields one correct
/// and one incorrect sample. Events repeat freely once every feasible s
/// is covered.
pub const MAX_EVENTS_PER_BLOCK: usize = 200;

/// Sizes s for which both a correct and an incorrect cluster of size s
/// exist: s up to the second-largest gold cluster.
fn feasible_sizes(cluster_sizes: &[usize]) -> Vec<usize> {
    let mut sorted = cluster_sizes.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    match sorted.get(1) {
        Some(&second) => (1..=second).collect(),
        None => Vec::new(),
    }
}

/// Draws balanced training samples from one gold-labeled block. For each
/// event a mention x and size s are chosen, C is x plus s−1 mates from
/// its gold cluster, Ċ is s members of another cluster, and both sides
/// are scored per feature type. A single-cluster gold yields no samples.
pub fn sample_pairs(
    block: &Block,
    gold: &Clustering,
    counts: &GlobalCounts,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if gold.n_mentions() != block.len() {
        return Err(Error::MentionSetMismatch(format!(
            "gold partitions {} mentions, block {:?} has {}",
            gold.n_mentions(),
            block.name(),
            block.len()
        )));
    }
    let cluster_sizes = gold.cluster_sizes();
    let feasible = feasible_sizes(&cluster_sizes);
    if feasible.is_empty() {
        return Ok(Vec::new());
    }
    let mut sims: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(FeatureType::COUNT);
    for t in FeatureType::ALL {
        sims.push((
            mention_conditional(block, counts, epsilon, t)?,
            mention_sizes(block, t),
        ));
    }
    let assign = gold.assignment();
    let members = gold.members();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let score = |cluster: &[usize], x: usize| -> [f64; FeatureType::COUNT] {
        let mut values = [0.0; FeatureType::COUNT];
        for (t, (sim, sizes)) in sims.iter().enumerate() {
            values[t] = mention_to_cluster(sim, cluster, sizes, epsilon, x);
        }
        values
    };
    let mut out = Vec::new();
    for event in 0..MAX_EVENTS_PER_BLOCK {
        // Cover every feasible size once before sampling freely.
        let s = match feasible.get(event) {
            Some(&s) => s,
            None => *feasible.choose(&mut rng).unwrap(),
        };
        let eligible: Vec<usize> = (0..block.len())
            .filter(|&x| cluster_sizes[assign[x]] >= s)
            .collect();
        let &x = eligible.choose(&mut rng).unwrap();
        let own = assign[x];
        let mates: Vec<usize> = members[own].iter().copied().filter(|&y| y != x).collect();
        let mut correct: Vec<usize> = mates.choose_multiple(&mut rng, s - 1).copied().collect();
        correct.push(x);
        correct.sort_unstable();
        let others: Vec<usize> = (0..gold.n_clusters())
            .filter(|&c| c != own && cluster_sizes[c] >= s)
            .collect();
        let &foreign = others.choose(&mut rng).unwrap();
        let mut incorrect: Vec<usize> =
            members[foreign].choose_multiple(&mut rng, s).copied().collect();
        incorrect.sort_unstable();
        out.push(TrainingSample {
            values: score(&correct, x),
            correct: true,
        });
        out.push(TrainingSample {
            values: score(&incorrect, x),
            correct: false,
        });
    }
    Ok(out)
}

/// Fits per-type mixing weights by logistic regression (correct = 1) on
/// standardized sample values: full-batch gradient descent from zero,
/// then the positive-class coefficients are clamped at zero and scaled
/// to sum 1. Degenerate inputs (empty, single-class, or no positive
/// coefficient) fall back to uniform weights with a warning.
pub fn fit_weights(samples: &[TrainingSample], hyper: FitHyper) -> [f64; FeatureType::COUNT] {
    const D: usize = FeatureType::COUNT;
    let uniform = [1.0 / D as f64; D];
    let n_pos = samples.iter().filter(|s| s.correct).count();
    if samples.is_empty() || n_pos == 0 || n_pos == samples.len() {
        log::warn!(
            "degenerate training set ({} samples, {n_pos} correct): using uniform weights",
            samples.len()
        );
        return uniform;
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; D];
    for s in samples {
        for t in 0..D {
            mean[t] += s.values[t];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = [0.0; D];
    for s in samples {
        for t in 0..D {
            std[t] += (s.values[t] - mean[t]).powi(2);
        }
    }
    for v in &mut std {
        *v = (*v / n).sqrt();
    }
    // Constant dimensions standardize to zero and stay out of the fit.
    let rows: Vec<[f64; D]> = samples
        .iter()
        .map(|s| {
            let mut row = [0.0; D];
            for t in 0..D {
                if std[t] > 0.0 {
                    row[t] = (s.values[t] - mean[t]) / std[t];
                }
            }
            row
        })
        .collect();
    let mut w = [0.0; D];
    let mut bias = 0.0;
    for _ in 0..hyper.epochs {
        let mut grad_w = [0.0; D];
        let mut grad_b = 0.0;
        for (row, sample) in rows.iter().zip(samples) {
            let z = bias + row.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>();
            let target = if sample.correct { 1.0 } else { 0.0 };
            let err = 1.0 / (1.0 + (-z).exp()) - target;
            grad_b += err;
            for t in 0..D {
                grad_w[t] += err * row[t];
            }
        }
        bias -= hyper.learning_rate * grad_b / n;
        for t in 0..D {
            w[t] -= hyper.learning_rate * grad_w[t] / n;
        }
    }
    let lambda = w.map(|x| x.max(0.0));
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        log::warn!("no feature type got positive weight: using uniform weights");
        return uniform;
    }
    lambda.map(|x| x / total)
}

/// Fixed mixing-weight vectors by name: uniform, author (coauthors and
/// references only), doc (document-level types), select:<type>,
/// leave-out:<type>, opposed (ranks of `base` reversed), and trained
/// (`base` passed through, as loaded from a weights file).
pub fn weight_preset(
    name: &str,
    base: Option<&[f64; FeatureType::COUNT]>,
) -> Result<[f64; FeatureType::COUNT]> {
    const D: usize = FeatureType::COUNT;
    let needs_base = |base: Option<&[f64; D]>| {
        base.copied().ok_or_else(|| {
            Error::InvalidParams(format!("preset {name:?} needs a base weight vector"))
        })
    };
    let parse_type = |spec: &str| {
        FeatureType::from_name(spec).ok_or_else(|| Error::UnknownPreset(name.to_string()))
    };
    let lambda = if name == "uniform" {
        [1.0 / D as f64; D]
    } else if name == "author" {
        let mut l = [0.0; D];
        l[FeatureType::Co.index()] = 0.5;
        l[FeatureType::Ref.index()] = 0.5;
        l
    } else if name == "doc" {
        let mut l = [0.0; D];
        for t in [
            FeatureType::Term,
            FeatureType::Cat,
            FeatureType::Key,
            FeatureType::Co,
            FeatureType::Year,
        ] {
            l[t.index()] = 0.2;
        }
        l
    } else if let Some(spec) = name.strip_prefix("select:") {
        let t = parse_type(spec)?;
        let mut l = [0.0; D];
        l[t.index()] = 1.0;
        l
    } else if let Some(spec) = name.strip_prefix("leave-out:") {
        let t = parse_type(spec)?;
        let mut l = [1.0 / (D - 1) as f64; D];
        l[t.index()] = 0.0;
        l
    } else if name == "opposed" {
        let base = needs_base(base)?;
        let mut asc: Vec<usize> = (0..D).collect();
        asc.sort_by(|&a, &b| base[a].total_cmp(&base[b]).then(a.cmp(&b)));
        let mut desc: Vec<usize> = (0..D).collect();
        desc.sort_by(|&a, &b| base[b].total_cmp(&base[a]).then(a.cmp(&b)));
        let mut l = [0.0; D];
        for (rank, &slot) in asc.iter().enumerate() {
            l[slot] = base[desc[rank]];
        }
        l
    } else if name == "trained" {
        needs_base(base)?
    } else {
        return Err(Error::UnknownPreset(name.to_string()));
    };
    normalize_lambda(lambda)
}

/// Writes weights as TSV rows "<type>\t<weight>" in declaration order.
pub fn save_lambda<W: Write>(mut writer: W, lambda: &[f64; FeatureType::COUNT]) -> Result<()> {
    for t in FeatureType::ALL {
        writeln!(writer, "{}\t{}", t.name(), lambda[t.index()])?;
    }
    Ok(())
}

/// Reads a weights TSV written by [`save_lambda`]. Comment lines starting
/// with '#' are skipped; every type must appear exactly once and the
/// weights must be non-negative and sum to 1 within 1e-6.
pub fn load_lambda<R: BufRead>(reader: R, source: &str) -> Result<[f64; FeatureType::COUNT]> {
    let fail = |msg: String| Error::Format {
        path: source.to_string(),
        msg,
    };
    let mut lambda = [f64::NAN; FeatureType::COUNT];
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, value) = trimmed
            .split_once('\t')
            .ok_or_else(|| fail(format!("line {}: expected <type>\\t<weight>", idx + 1)))?;
        let t = FeatureType::from_name(name)
            .ok_or_else(|| fail(format!("line {}: unknown feature type {name:?}", idx + 1)))?;
        if !lambda[t.index()].is_nan() {
            return Err(fail(format!("duplicate weight for {name}")));
        }
        let w: f64 = value
            .trim()
            .parse()
            .map_err(|_| fail(format!("line {}: bad weight {value:?}", idx + 1)))?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(fail(format!("weight for {name} must be non-negative, got {w}")));
        }
        lambda[t.index()] = w;
    }
    for t in FeatureType::ALL {
        if lambda[t.index()].is_nan() {
            return Err(fail(format!("missing weight for {}", t.name())));
        }
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(fail(format!("weights sum to {total}, expected 1")));
    }
    Ok(lambda)
}

/// One grid point of a stopping-parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    /// Macro bCube F1 per true-size bucket.
    pub per_size_f1: BTreeMap<SizeBucket, f64>,
    /// Mean of the per-size F1 values; the ranking key.
    pub mean_f1: f64,
    pub convergence_hist: BTreeMap<usize, usize>,
}

/// Clusters every gold-labeled block once per (alpha, beta) grid point
/// and reports macro bCube F1 per size. Rows come back sorted best
/// first (descending mean F1, then ascending alpha, beta).
pub fn sweep_stopping(
    blocks: &[Block],
    base: &Params,
    overall: Option<&GlobalCounts>,
    grid: &[(f64, f64)],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty sweep grid".to_string()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(alpha, beta) in grid {
        let mut params = base.clone();
        params.alpha = alpha;
        params.beta = beta;
        params.validate()?;
        let results = cluster_blocks(blocks, &params, overall, true)?;
        let evals = evaluate_blocks(blocks, &results)?;
        if evals.is_empty() {
            return Err(Error::InvalidClustering(
                "sweep needs at least one gold-labeled block".to_string(),
            ));
        }
        let report = build_report(&evals);
        let per_size_f1: BTreeMap<SizeBucket, f64> = report
            .metric_rows("bcube")
            .into_iter()
            .map(|(bucket, row)| (bucket, row.f1))
            .collect();
        let mean_f1 = per_size_f1.values().sum::<f64>() / per_size_f1.len() as f64;
        rows.push(SweepRow {
            alpha,
            beta,
            per_size_f1,
            mean_f1,
            convergence_hist: report.convergence_hist,
        });
    }
    rows.sort_by(|a, b| {
        b.mean_f1
            .total_cmp(&a.mean_f1)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.beta.total_cmp(&b.beta))
    });
    Ok(rows)
}

/// Sweep CSV: alpha,beta,mean_f1,size,f1,n_sizes rows, best grid point
/// first.
pub fn write_sweep<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "beta", "mean_f1", "size", "f1"])?;
    for row in rows {
        for (bucket, f1) in &row.per_size_f1 {
            w.write_record([
                &row.alpha.to_string(),
                &row.beta.to_string(),
                &row.mean_f1.to_string(),
                &bucket.to_string(),
                &f1.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sweep convergence CSV: alpha,beta,size_at_convergence,count.
pub fn write_sweep_hist<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "beta", "size_at_convergence", "count"])?;
    for row in rows {
        for (size, count) in &row.convergence_hist {
            w.write_record([
                &row.alpha.to_string(),
                &row.beta.to_string(),
                &size.to_string(),
                &count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
