//! Probabilistic similarity kernels.
//!
//! The base quantity is the conditional p(x|ẋ) between two mentions of a
//! block: how much of ẋ's feature mass leads to x, measured by relative
//! feature frequencies and smoothed by a small ε. Cluster-level scores are
//! weighted aggregates of the mention-level matrix, so the expensive part
//! is computed once per block and reused by every clustering iteration.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::ops::Index;

use crate::counts::GlobalCounts;
use crate::model::{Block, Clustering, Combine, FeatureType, Mention};
use crate::{Error, Result};

/// Dense row-major matrix of f64 scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// self += factor·other, entrywise.
    pub fn add_scaled(&mut self, other: &Matrix, factor: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (dst, &src) in self.data.iter_mut().zip(&other.data) {
            *dst += factor * src;
        }
    }

    /// Largest absolute entry difference; the distance used by the oracle
    /// agreement checks.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (row, col): (usize, usize)) -> &f64 {
        &self.data[row * self.cols + col]
    }
}

/// Sparse per-mention feature rows of one block and type, indexed against
/// the block's lexicographically sorted feature list.
struct TypeVectors {
    /// (feature index, #(f,x)) per mention, ascending index.
    rows: Vec<Vec<(u32, f64)>>,
    /// rows with each weight divided by the scope total #(f).
    scaled: Vec<Vec<(u32, f64)>>,
    /// #(x) per mention.
    sizes: Vec<f64>,
}

fn type_vectors(block: &Block, counts: &GlobalCounts, ftype: FeatureType) -> Result<TypeVectors> {
    let ids: BTreeSet<&str> = block
        .mentions()
        .iter()
        .flat_map(|m| m.bag(ftype).iter().map(|(id, _)| id))
        .collect();
    let mut totals = Vec::with_capacity(ids.len());
    for id in &ids {
        let total = counts.feature_total(ftype, id).unwrap_or(0.0);
        if total <= 0.0 {
            return Err(Error::MissingFeature {
                ftype,
                feature: (*id).to_string(),
            });
        }
        totals.push(total);
    }
    let index: std::collections::HashMap<&str, u32> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i as u32))
        .collect();

    let mut rows = Vec::with_capacity(block.len());
    let mut scaled = Vec::with_capacity(block.len());
    let mut sizes = Vec::with_capacity(block.len());
    for m in block.mentions() {
        // Bag iteration is lexicographic, matching the index order, so the
        // rows come out sorted.
        let row: Vec<(u32, f64)> = m.bag(ftype).iter().map(|(id, w)| (index[id], w)).collect();
        let scaled_row: Vec<(u32, f64)> = row
            .iter()
            .map(|&(i, w)| (i, w / totals[i as usize]))
            .collect();
        sizes.push(m.size(ftype));
        rows.push(row);
        scaled.push(scaled_row);
    }
    Ok(TypeVectors { rows, scaled, sizes })
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// The n×n matrix of p(x|ẋ) for one feature type (row = x, column = ẋ):
///
///   p(x|ẋ) = (Σ_f #(f,x)·#(f,ẋ)/#(f) + ε/|X|) / (#(ẋ) + ε)
///
/// #(f) comes from `counts` (block or collection scope); |X| is always the
/// block's mention count. With within-scope counts every column sums to 1;
/// with a larger scope the sums can only shrink.
///
/// ε = 0 is permitted for analysis but leaves empty bags undefined;
/// clustering runs always use a positive ε.
pub fn mention_conditional(
    block: &Block,
    counts: &GlobalCounts,
    epsilon: f64,
    ftype: FeatureType,
) -> Result<Matrix> {
    let n = block.len();
    let tv = type_vectors(block, counts, ftype)?;
    let floor = epsilon / n as f64;
    let mut out = Matrix::zeros(n, n);
    for col in 0..n {
        let denom = tv.sizes[col] + epsilon;
        for row in 0..n {
            let overlap = sparse_dot(&tv.scaled[row], &tv.rows[col]);
            out.set(row, col, (overlap + floor) / denom);
        }
    }
    Ok(out)
}

/// Definitional triple loop over the union feature list. Kept structurally
/// independent of [`mention_conditional`] as its cross-check oracle.
pub fn mention_conditional_naive(
    block: &Block,
    counts: &GlobalCounts,
    epsilon: f64,
    ftype: FeatureType,
) -> Result<Matrix> {
    let n = block.len();
    let mentions = block.mentions();
    let mut ids: BTreeSet<String> = BTreeSet::new();
    for m in mentions {
        for (id, _) in m.bag(ftype).iter() {
            ids.insert(id.to_string());
        }
    }
    for id in &ids {
        if counts.feature_total(ftype, id).unwrap_or(0.0) <= 0.0 {
            return Err(Error::MissingFeature {
                ftype,
                feature: id.clone(),
            });
        }
    }
    let mut out = Matrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let mut overlap = 0.0;
            for id in &ids {
                let wx = mentions[row].bag(ftype).get(id);
                let wd = mentions[col].bag(ftype).get(id);
                if wx > 0.0 && wd > 0.0 {
                    overlap += wx * wd / counts.feature_total(ftype, id).unwrap();
                }
            }
            let p = (overlap + epsilon / n as f64) / (mentions[col].size(ftype) + epsilon);
            out.set(row, col, p);
        }
    }
    Ok(out)
}

/// #(x) of every mention for one type, in block order.
pub fn mention_sizes(block: &Block, ftype: FeatureType) -> Vec<f64> {
    block.mentions().iter().map(|m| m.size(ftype)).collect()
}

/// p(x) = (#(x)+ε)/(#(·)+|X|·ε). `scope_size` is the mention count of the
/// scope the counts were built over.
pub fn mention_prior(
    mention: &Mention,
    counts: &GlobalCounts,
    epsilon: f64,
    scope_size: u64,
    ftype: FeatureType,
) -> f64 {
    (mention.size(ftype) + epsilon) / (counts.grand_total(ftype) + scope_size as f64 * epsilon)
}

/// Priors of every mention of a block, in block order.
pub fn mention_priors(
    block: &Block,
    counts: &GlobalCounts,
    epsilon: f64,
    scope_size: u64,
    ftype: FeatureType,
) -> Vec<f64> {
    block
        .mentions()
        .iter()
        .map(|m| mention_prior(m, counts, epsilon, scope_size, ftype))
        .collect()
}

/// Lifts a mention conditional matrix to cluster level. Entry (C, Ċ) is
/// built from p(x|ẋ)·(#(ẋ)+ε) over C×Ċ, divided by #(Ċ)+|Ċ|·ε, so the
/// column weights sum to one: a weighted sum for [`Combine::Prob`], the
/// single best element for [`Combine::Max`]. The diagonal is as
/// well-defined as any entry; merge selection simply never reads it.
pub fn cluster_conditional(
    sim: &Matrix,
    clustering: &Clustering,
    mention_sizes: &[f64],
    epsilon: f64,
    combine: Combine,
) -> Result<Matrix> {
    let n = clustering.n_mentions();
    if sim.rows() != n || sim.cols() != n || mention_sizes.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "clustering over {n} mentions, sim {}x{}, sizes {}",
            sim.rows(),
            sim.cols(),
            mention_sizes.len()
        )));
    }
    let k = clustering.n_clusters();
    let assign = clustering.assignment();
    let mut acc = match combine {
        Combine::Prob => Matrix::zeros(k, k),
        Combine::Max => Matrix::filled(k, k, f64::NEG_INFINITY),
    };
    for x in 0..n {
        let cx = assign[x];
        for xdot in 0..n {
            let cell = acc.at_mut(cx, assign[xdot]);
            let v = sim.get(x, xdot) * (mention_sizes[xdot] + epsilon);
            match combine {
                Combine::Prob => *cell += v,
                Combine::Max => *cell = cell.max(v),
            }
        }
    }
    let csizes = clustering.cluster_sizes();
    let mut mass = vec![0.0; k];
    for (xdot, &c) in assign.iter().enumerate() {
        mass[c] += mention_sizes[xdot];
    }
    for cd in 0..k {
        let denom = mass[cd] + csizes[cd] as f64 * epsilon;
        for c in 0..k {
            *acc.at_mut(c, cd) /= denom;
        }
    }
    Ok(acc)
}

/// Definitional nested loop over cluster member lists; the cross-check
/// oracle for [`cluster_conditional`].
pub fn cluster_conditional_naive(
    sim: &Matrix,
    clustering: &Clustering,
    mention_sizes: &[f64],
    epsilon: f64,
    combine: Combine,
) -> Result<Matrix> {
    let n = clustering.n_mentions();
    if sim.rows() != n || sim.cols() != n || mention_sizes.len() != n {
        return Err(Error::ShapeMismatch("cluster_conditional_naive input".into()));
    }
    let members = clustering.members();
    let k = members.len();
    let mut out = Matrix::zeros(k, k);
    for (ci, left) in members.iter().enumerate() {
        for (cj, right) in members.iter().enumerate() {
            let mass: f64 = right.iter().map(|&xd| mention_sizes[xd]).sum();
            let denom = mass + right.len() as f64 * epsilon;
            let mut value = match combine {
                Combine::Prob => 0.0,
                Combine::Max => f64::NEG_INFINITY,
            };
            for &x in left {
                for &xd in right {
                    let term = sim.get(x, xd) * (mention_sizes[xd] + epsilon) / denom;
                    match combine {
                        Combine::Prob => value += term,
                        Combine::Max => value = value.max(term),
                    }
                }
            }
            out.set(ci, cj, value);
        }
    }
    Ok(out)
}

/// p(x|C) of one mention against an explicit member list, with the same
/// column weights as [`cluster_conditional`]. Used for sampling training
/// pairs.
pub fn mention_to_cluster(
    sim: &Matrix,
    members: &[usize],
    mention_sizes: &[f64],
    epsilon: f64,
    x: usize,
) -> f64 {
    let mass: f64 = members.iter().map(|&m| mention_sizes[m]).sum();
    let denom = mass + members.len() as f64 * epsilon;
    members
        .iter()
        .map(|&xd| sim.get(x, xd) * (mention_sizes[xd] + epsilon) / denom)
        .sum()
}

/// p(C) = Σ_{x∈C} p(x) per cluster.
pub fn cluster_prior(clustering: &Clustering, mention_priors: &[f64]) -> Result<Vec<f64>> {
    if mention_priors.len() != clustering.n_mentions() {
        return Err(Error::ShapeMismatch(format!(
            "{} priors for {} mentions",
            mention_priors.len(),
            clustering.n_mentions()
        )));
    }
    let mut priors = vec![0.0; clustering.n_clusters()];
    for (x, &c) in clustering.assignment().iter().enumerate() {
        priors[c] += mention_priors[x];
    }
    Ok(priors)
}

/// p(C,Ċ) = p(C|Ċ)·p(Ċ): scales each column of the conditional by the
/// prior of its cluster.
pub fn joint_score(conditional: &Matrix, cluster_priors: &[f64]) -> Result<Matrix> {
    if conditional.cols() != cluster_priors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} columns vs {} priors",
            conditional.cols(),
            cluster_priors.len()
        )));
    }
    let mut out = conditional.clone();
    for row in 0..out.rows() {
        for col in 0..out.cols() {
            *out.at_mut(row, col) *= cluster_priors[col];
        }
    }
    Ok(out)
}

/// score = Σ_t λ_t·M_t over the per-type matrices.
pub fn combined_score(
    per_type: &[Matrix; FeatureType::COUNT],
    lambda: &[f64; FeatureType::COUNT],
) -> Result<Matrix> {
    let (rows, cols) = (per_type[0].rows(), per_type[0].cols());
    for m in per_type.iter() {
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "per-type matrices disagree: {rows}x{cols} vs {}x{}",
                m.rows(),
                m.cols()
            )));
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for (m, &l) in per_type.iter().zip(lambda) {
        if l == 0.0 {
            continue;
        }
        out.add_scaled(m, l);
    }
    Ok(out)
}
