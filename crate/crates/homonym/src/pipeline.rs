//! Block-level drivers: resolve the counting scope, cluster blocks in
//! parallel, and evaluate results against whatever gold labels exist.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::cluster::{agglomerate, ClusterTrace};
use crate::counts::{block_counts, GlobalCounts};
use crate::metrics::{evaluate_block, BlockEval};
use crate::model::{Block, Clustering, CountScope, Params};
use crate::{Error, Result};

/// The counts the params ask for: the block's own counts for within
/// scope, the shared collection counts for overall scope.
pub fn scoped_counts<'a>(
    block: &Block,
    params: &Params,
    overall: Option<&'a GlobalCounts>,
) -> Result<Cow<'a, GlobalCounts>> {
    match params.count_scope {
        CountScope::Within => Ok(Cow::Owned(block_counts(block))),
        CountScope::Overall => overall.map(Cow::Borrowed).ok_or_else(|| {
            Error::InvalidParams(
                "overall count scope requires collection counts".to_string(),
            )
        }),
    }
}

/// Clusters one block, tracing against its embedded gold labels when
/// every mention carries one.
pub fn cluster_block(
    block: &Block,
    params: &Params,
    overall: Option<&GlobalCounts>,
    hypothetical: bool,
) -> Result<(Clustering, ClusterTrace)> {
    let counts = scoped_counts(block, params, overall)?;
    let gold = block.gold_clustering();
    agglomerate(block, params, counts.as_ref(), gold.as_ref(), hypothetical)
}

/// Clusters blocks in parallel. Results keep the input order; the rayon
/// pool size is whatever the caller configured.
pub fn cluster_blocks(
    blocks: &[Block],
    params: &Params,
    overall: Option<&GlobalCounts>,
    hypothetical: bool,
) -> Result<Vec<(Clustering, ClusterTrace)>> {
    blocks
        .par_iter()
        .map(|block| cluster_block(block, params, overall, hypothetical))
        .collect()
}

/// Gold partition over the gold-labeled subset of a block, along with the
/// mention indices it covers. None when no mention is labeled.
pub fn partial_gold(block: &Block) -> Option<(Vec<usize>, Clustering)> {
    let mentions = block.mentions();
    let keep: Vec<usize> = (0..mentions.len())
        .filter(|&i| mentions[i].gold_author_id.is_some())
        .collect();
    if keep.is_empty() {
        return None;
    }
    let labels: Vec<&str> = keep
        .iter()
        .map(|&i| mentions[i].gold_author_id.as_deref().unwrap())
        .collect();
    Some((keep, Clustering::from_labels(&labels)))
}

/// Scores one clustered block against its gold labels. Partially labeled
/// blocks are scored on the labeled subset only (which leaves no usable
/// trace); unlabeled blocks yield None.
pub fn evaluate_block_result(
    block: &Block,
    sys: &Clustering,
    trace: &ClusterTrace,
) -> Result<Option<BlockEval>> {
    let Some((keep, gold)) = partial_gold(block) else {
        return Ok(None);
    };
    let fully_labeled = keep.len() == block.len();
    let sys = sys.restricted_to(&keep);
    let trace = fully_labeled.then_some(trace);
    evaluate_block(block.name(), &sys, &gold, trace).map(Some)
}

/// Evaluates every gold-bearing block of a clustered run, in block order.
pub fn evaluate_blocks(
    blocks: &[Block],
    results: &[(Clustering, ClusterTrace)],
) -> Result<Vec<BlockEval>> {
    if blocks.len() != results.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} blocks but {} clustering results",
            blocks.len(),
            results.len()
        )));
    }
    let mut evals = Vec::new();
    for (block, (sys, trace)) in blocks.iter().zip(results) {
        if let Some(eval) = evaluate_block_result(block, sys, trace)? {
            evals.push(eval);
        }
    }
    Ok(evals)
}
