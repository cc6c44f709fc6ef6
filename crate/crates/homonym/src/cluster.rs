//! Agglomerative clustering of one block.
//!
//! Starting from singletons, each iteration scores every cluster pair,
//! merges the mutually-best pairs that exceed a size-dependent quality
//! limit, and stops when no pair passes. For evaluation the run can
//! continue past convergence on mutual-best alone, so the trace always
//! descends to a single cluster and shows what stopping later would cost.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::counts::GlobalCounts;
use crate::metrics::bcube;
use crate::model::{Block, Clustering, Params, ScoreKind};
use crate::similarity::{
    cluster_conditional, cluster_prior, joint_score, mention_conditional, mention_priors,
    mention_sizes, Matrix,
};
use crate::{Error, Result};

/// Merge quality limit l = α + |X|·β.
pub fn quality_limit(x_size: usize, alpha: f64, beta: f64) -> f64 {
    alpha + x_size as f64 * beta
}

/// Picks the merges for one iteration: symmetrize S′(i,j) =
/// max(S(i,j), S(j,i)), keep pairs that exceed `limit` and are row maxima
/// for both endpoints (ties count as best), then resolve overlaps greedily
/// in (descending score, ascending ids) order. The result is
/// vertex-disjoint. The diagonal is ignored.
pub fn select_merges(scores: &Matrix, limit: f64) -> Vec<(usize, usize)> {
    debug_assert!(scores.is_square());
    let k = scores.rows();
    if k < 2 {
        return Vec::new();
    }
    let sym = |i: usize, j: usize| scores.get(i, j).max(scores.get(j, i));
    let mut rowmax = vec![f64::NEG_INFINITY; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let s = sym(i, j);
            if s > rowmax[i] {
                rowmax[i] = s;
            }
            if s > rowmax[j] {
                rowmax[j] = s;
            }
        }
    }
    let mut candidates = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = sym(i, j);
            if s > limit && s == rowmax[i] && s == rowmax[j] {
                candidates.push((s, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
    let mut used = vec![false; k];
    let mut picked = Vec::new();
    for (_, i, j) in candidates {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            picked.push((i, j));
        }
    }
    picked
}

/// One clustering state along a run. Precision and recall are bCube
/// against the gold partition and absent when no gold was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n_clusters: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// True for every state up to and including the convergence state.
    pub before_convergence: bool,
}

/// The full descent of one block, from all-singletons down to wherever the
/// run stopped (a single cluster when hypothetical continuation is on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrace {
    pub block_name: String,
    pub records: Vec<IterationRecord>,
    /// Cluster count at convergence; the size of the returned clustering.
    pub converged_at: usize,
}

/// Per-block scoring state: the mention-level matrices are computed once,
/// then lifted to the current cluster level every iteration.
struct BlockScorer {
    epsilon: f64,
    combine: crate::model::Combine,
    /// (λ_t, mention conditional, #(x) sizes, priors when joint scoring).
    parts: Vec<(f64, Matrix, Vec<f64>, Option<Vec<f64>>)>,
}

impl BlockScorer {
    fn new(block: &Block, params: &Params, counts: &GlobalCounts) -> Result<BlockScorer> {
        let scope_size = counts.mention_count();
        let mut parts = Vec::new();
        for t in crate::model::FeatureType::ALL {
            let lambda = params.lambda[t.index()];
            if lambda == 0.0 {
                continue;
            }
            let sim = mention_conditional(block, counts, params.epsilon, t)?;
            let sizes = mention_sizes(block, t);
            let priors = match params.score_kind {
                ScoreKind::Conditional => None,
                ScoreKind::Joint => {
                    Some(mention_priors(block, counts, params.epsilon, scope_size, t))
                }
            };
            parts.push((lambda, sim, sizes, priors));
        }
        Ok(BlockScorer {
            epsilon: params.epsilon,
            combine: params.combine,
            parts,
        })
    }

    fn scores(&self, clustering: &Clustering) -> Result<Matrix> {
        let k = clustering.n_clusters();
        let mut out = Matrix::zeros(k, k);
        for (lambda, sim, sizes, priors) in &self.parts {
            let cond = cluster_conditional(sim, clustering, sizes, self.epsilon, self.combine)?;
            let scored = match priors {
                Some(p) => joint_score(&cond, &cluster_prior(clustering, p)?)?,
                None => cond,
            };
            out.add_scaled(&scored, *lambda);
        }
        Ok(out)
    }
}

/// Runs the merge loop on one block. `gold`, when given, must partition
/// the same mentions and adds bCube precision/recall to every trace
/// record. With `hypothetical` the run keeps merging past convergence
/// (limit-passing merges still take precedence whenever any exist) until
/// one cluster remains; the returned clustering is always the state at
/// convergence.
pub fn agglomerate(
    block: &Block,
    params: &Params,
    counts: &GlobalCounts,
    gold: Option<&Clustering>,
    hypothetical: bool,
) -> Result<(Clustering, ClusterTrace)> {
    params.validate()?;
    let n = block.len();
    if let Some(g) = gold {
        if g.n_mentions() != n {
            return Err(Error::MentionSetMismatch(format!(
                "gold partitions {} mentions, block {:?} has {n}",
                g.n_mentions(),
                block.name()
            )));
        }
    }
    let limit = quality_limit(n, params.alpha, params.beta);
    let scorer = BlockScorer::new(block, params, counts)?;

    let mut clustering = Clustering::singletons(n);
    let mut converged = false;
    let mut converged_at = 1;
    let mut final_clustering = None;
    let mut records = Vec::new();

    let record = |clustering: &Clustering, before: bool| -> Result<IterationRecord> {
        let (precision, recall) = match gold {
            Some(g) => {
                let prf = bcube(clustering, g)?;
                (Some(prf.precision), Some(prf.recall))
            }
            None => (None, None),
        };
        Ok(IterationRecord {
            n_clusters: clustering.n_clusters(),
            precision,
            recall,
            before_convergence: before,
        })
    };

    records.push(record(&clustering, true)?);
    while clustering.n_clusters() > 1 {
        let scores = scorer.scores(&clustering)?;
        let mut merges = select_merges(&scores, limit);
        if merges.is_empty() {
            if !converged {
                converged = true;
                converged_at = clustering.n_clusters();
                final_clustering = Some(clustering.clone());
                if !hypothetical {
                    break;
                }
            }
            merges = select_merges(&scores, f64::NEG_INFINITY);
        }
        clustering = clustering.merge_pairs(&merges)?;
        records.push(record(&clustering, !converged)?);
    }
    if !converged {
        // Merging carried straight through: the single-cluster end state
        // is the convergence state.
        converged_at = clustering.n_clusters();
        final_clustering = Some(clustering.clone());
    }
    let trace = ClusterTrace {
        block_name: block.name().to_string(),
        records,
        converged_at,
    };
    Ok((final_clustering.unwrap_or(clustering), trace))
}

/// The one-cluster reference partition every method run is compared to.
pub fn baseline_single_cluster(block: &Block) -> Clustering {
    Clustering::single_cluster(block.len())
}

/// Writes traces as CSV rows block,iteration,n_clusters,precision,recall,
/// before_convergence. Precision and recall stay empty without gold.
pub fn write_traces<W: Write>(writer: W, traces: &[ClusterTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "block",
        "iteration",
        "n_clusters",
        "precision",
        "recall",
        "before_convergence",
    ])?;
    for trace in traces {
        for (iteration, rec) in trace.records.iter().enumerate() {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                trace.block_name.as_str(),
                &iteration.to_string(),
                &rec.n_clusters.to_string(),
                &fmt(rec.precision),
                &fmt(rec.recall),
                if rec.before_convergence { "true" } else { "false" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads traces written by [`write_traces`]. Rows of one block must be
/// contiguous and in iteration order; converged_at is recovered from the
/// last before_convergence record.
pub fn read_traces<R: BufRead>(reader: R, source: &str) -> Result<Vec<ClusterTrace>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut traces: Vec<ClusterTrace> = Vec::new();
    for row in r.records() {
        let row = row?;
        if row.len() != 6 {
            return Err(Error::Format {
                path: source.to_string(),
                msg: format!("expected 6 columns, got {}", row.len()),
            });
        }
        let field = |i: usize| row.get(i).unwrap();
        let bad = |what: &str| Error::Format {
            path: source.to_string(),
            msg: format!("bad {what} in row {row:?}"),
        };
        let iteration: usize = field(1).parse().map_err(|_| bad("iteration"))?;
        let n_clusters: usize = field(2).parse().map_err(|_| bad("n_clusters"))?;
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("precision/recall"))
            }
        };
        let rec = IterationRecord {
            n_clusters,
            precision: opt(3)?,
            recall: opt(4)?,
            before_convergence: match field(5) {
                "true" => true,
                "false" => false,
                _ => return Err(bad("before_convergence")),
            },
        };
        let start_new = traces
            .last()
            .map(|t: &ClusterTrace| t.block_name != field(0))
            .unwrap_or(true);
        if start_new {
            if iteration != 0 {
                return Err(bad("iteration start"));
            }
            traces.push(ClusterTrace {
                block_name: field(0).to_string(),
                records: Vec::new(),
                converged_at: n_clusters,
            });
        }
        let trace = traces.last_mut().unwrap();
        if iteration != trace.records.len() {
            return Err(bad("iteration order"));
        }
        if rec.before_convergence {
            trace.converged_at = rec.n_clusters;
        }
        trace.records.push(rec);
    }
    Ok(traces)
}
