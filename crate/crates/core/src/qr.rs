//! Householder QR and its column-blocked (WY) and row-blocked (TSQR) variants.
//!
//! Every routine takes an [`ArithmeticContext`] and performs each scalar
//! operation through it, so the same code runs in uniform, mixed inner-product
//! and block-FMA arithmetic.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floatsim::ArithmeticContext;
use crate::matrix::Matrix;

/// `P = I - beta v vᵀ` with `v[0] = 1` and `P x = sigma e_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflector {
    pub v: Vec<f64>,
    pub beta: f64,
    pub sigma: f64,
}

/// Output of [`hqr`]: reflectors stored column-wise plus the triangular factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholderFactors {
    /// `m x n`; column `j` is zero above row `j` and one at row `j`.
    pub v: Matrix,
    pub beta: Vec<f64>,
    /// `n x n` upper triangular with exact zeros below the diagonal.
    pub r: Matrix,
}

/// `I - W Yᵀ`, the aggregate of a run of reflectors. `Y` is the reflector block.
#[derive(Debug, Clone, PartialEq)]
pub struct WyRep {
    pub w: Matrix,
    pub y: Matrix,
}

/// Thin QR factors: `Q` is `m x n`, `R` is `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: Matrix,
    pub r: Matrix,
}

/// The reduction tree of a TSQR factorization.
#[derive(Debug, Clone)]
pub struct TsqrTree {
    levels: u32,
    /// `nodes[i][j]`: factors of block `j` at level `i`; level `i` has `2^(L-i)` blocks.
    nodes: Vec<Vec<HouseholderFactors>>,
}

impl TsqrTree {
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn level(&self, i: usize) -> &[HouseholderFactors] {
        &self.nodes[i]
    }

    /// The final triangular factor.
    pub fn r(&self) -> &Matrix {
        &self.nodes[self.levels as usize][0].r
    }
}

/// `sign(0) = +1`.
fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Householder vector, constant and image of `x`, all arithmetic under `ctx`.
pub fn hhvec(x: &[f64], ctx: &ArithmeticContext) -> Result<Reflector> {
    if x.is_empty() {
        return Err(Error::Dimension("empty vector".into()));
    }
    let norm = ctx.sqrt(ctx.dot(x, x)?)?;
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let sigma = -sign(x[0]) * norm;
    // x[0] and -sigma share a sign, so this subtraction never cancels.
    let head = ctx.sub(x[0], sigma)?;
    let beta = ctx.div(-head, sigma)?;
    let mut v = Vec::with_capacity(x.len());
    v.push(1.0);
    for &xi in &x[1..] {
        v.push(ctx.div(xi, head)?);
    }
    Ok(Reflector { v, beta, sigma })
}

/// Applies `I - beta v vᵀ` to rows `r0..r0+v.len()` of columns `cols` of `a`.
pub(crate) fn reflect_in_place(
    v: &[f64],
    beta: f64,
    a: &mut Matrix,
    r0: usize,
    cols: Range<usize>,
    ctx: &ArithmeticContext,
) -> Result<()> {
    if beta == 0.0 {
        return Ok(());
    }
    let rows = r0..r0 + v.len();
    for j in cols {
        let y = &mut a.col_mut(j)[rows.clone()];
        let s = ctx.dot(v, y)?;
        let tau = ctx.mul(beta, s)?;
        if tau == 0.0 {
            continue;
        }
        for (yi, &vi) in y.iter_mut().zip(v) {
            *yi = ctx.sub(*yi, ctx.mul(tau, vi)?)?;
        }
    }
    Ok(())
}

/// `(I - beta v vᵀ) B`, one column at a time as an inner product and a rank-1 update.
pub fn apply_hh(v: &[f64], beta: f64, b: &Matrix, ctx: &ArithmeticContext) -> Result<Matrix> {
    if v.len() != b.rows() {
        return Err(Error::Dimension(format!(
            "reflector of length {} against {} rows",
            v.len(),
            b.rows()
        )));
    }
    let mut out = b.clone();
    reflect_in_place(v, beta, &mut out, 0, 0..b.cols(), ctx)?;
    Ok(out)
}

/// Level-2 Householder QR of an `m x n` matrix with `m >= n`.
pub fn hqr(a: &Matrix, ctx: &ArithmeticContext) -> Result<HouseholderFactors> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!("HQR needs m >= n, got {m}x{n}")));
    }
    let mut w = ctx.castdown(a)?;
    let mut v = Matrix::zeros(m, n);
    let mut beta = Vec::with_capacity(n);
    for i in 0..n {
        let refl = hhvec(&w.col(i)[i..], ctx).map_err(|e| match e {
            Error::ZeroVector => Error::RankDeficient(i),
            other => other,
        })?;
        let col = w.col_mut(i);
        col[i] = refl.sigma;
        col[i + 1..].fill(0.0);
        reflect_in_place(&refl.v, refl.beta, &mut w, i, i + 1..n, ctx)?;
        v.col_mut(i)[i..].copy_from_slice(&refl.v);
        beta.push(refl.beta);
    }
    let r = w.submatrix(0..n, 0..n).upper_triangle();
    Ok(HouseholderFactors { v, beta, r })
}

/// `P_1 ··· P_n B` for the reflectors in `f`.
pub fn apply_q(f: &HouseholderFactors, b: &Matrix, ctx: &ArithmeticContext) -> Result<Matrix> {
    if f.v.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "{} reflector rows against {} rows",
            f.v.rows(),
            b.rows()
        )));
    }
    let mut out = b.clone();
    for j in (0..f.beta.len()).rev() {
        reflect_in_place(&f.v.col(j)[j..], f.beta[j], &mut out, j, 0..b.cols(), ctx)?;
    }
    Ok(out)
}

/// `P_1 ··· P_n I`, thin (`m x n`) or full (`m x m`).
pub fn build_q(f: &HouseholderFactors, thin: bool, ctx: &ArithmeticContext) -> Result<Matrix> {
    let m = f.v.rows();
    let cols = if thin { f.beta.len() } else { m };
    let mut q = Matrix::identity(m, cols);
    // Columns before j are still unit vectors with zeros in rows j.., so P_j fixes them.
    for j in (0..f.beta.len()).rev() {
        reflect_in_place(&f.v.col(j)[j..], f.beta[j], &mut q, j, j..cols, ctx)?;
    }
    Ok(q)
}

/// Aggregates reflectors `V[:, 0..r]` into `I - W Vᵀ`.
pub fn build_wy(v: &Matrix, beta: &[f64], ctx: &ArithmeticContext) -> Result<WyRep> {
    let (m, r) = v.shape();
    if beta.len() != r {
        return Err(Error::Dimension(format!(
            "{} constants for {r} reflectors",
            beta.len()
        )));
    }
    let mut w = Matrix::zeros(m, r);
    let mut row = Vec::with_capacity(r);
    for j in 0..r {
        let vj = v.col(j);
        let proj = (0..j)
            .map(|k| ctx.dot(v.col(k), vj))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..m {
            let correction = if j == 0 {
                0.0
            } else {
                row.clear();
                row.extend((0..j).map(|k| w[(i, k)]));
                ctx.dot(&row, &proj)?
            };
            w[(i, j)] = ctx.mul(beta[j], ctx.sub(vj[i], correction)?)?;
        }
    }
    Ok(WyRep { w, y: v.clone() })
}

impl WyRep {
    /// `B - W (Yᵀ B)`, the action of `I - W Yᵀ`.
    pub fn apply(&self, b: &Matrix, ctx: &ArithmeticContext) -> Result<Matrix> {
        let x = ctx.matmul_tn(&self.y, b)?;
        ctx.sub_matrix(b, &ctx.matmul(&self.w, &x)?)
    }

    /// `B - Y (Wᵀ B)`, the action of `(I - W Yᵀ)ᵀ`.
    pub fn apply_transpose(&self, b: &Matrix, ctx: &ArithmeticContext) -> Result<Matrix> {
        let x = ctx.matmul_tn(&self.w, b)?;
        ctx.sub_matrix(b, &ctx.matmul(&self.y, &x)?)
    }

    pub fn castdown(&self, ctx: &ArithmeticContext) -> Result<WyRep> {
        Ok(WyRep {
            w: ctx.castdown(&self.w)?,
            y: ctx.castdown(&self.y)?,
        })
    }
}

fn offset_rank_error(e: Error, offset: usize) -> Error {
    match e {
        Error::RankDeficient(i) => Error::RankDeficient(i + offset),
        other => other,
    }
}

/// Blocked Householder QR with column panels of width `r` (the last may be narrower).
pub fn bqr(a: &Matrix, r: usize, ctx: &ArithmeticContext) -> Result<QrFactors> {
    bqr_with(a, r, ctx, ctx)
}

/// Panels are factored and aggregated under `panel`; the resulting `R`, `W` and
/// `V` are cast to `update`'s storage, and all level-3 updates run under `update`.
pub(crate) fn bqr_with(
    a: &Matrix,
    r: usize,
    panel: &ArithmeticContext,
    update: &ArithmeticContext,
) -> Result<QrFactors> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!("BQR needs m >= n, got {m}x{n}")));
    }
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!(
            "block width {r} outside 1..={n}"
        )));
    }
    let mut work = update.castdown(a)?;
    let mut blocks = Vec::with_capacity(n.div_ceil(r));
    for c0 in (0..n).step_by(r) {
        let c1 = (c0 + r).min(n);
        let f = hqr(&work.submatrix(c0..m, c0..c1), panel).map_err(|e| offset_rank_error(e, c0))?;
        let wy = build_wy(&f.v, &f.beta, panel)?.castdown(update)?;
        let mut reduced = Matrix::zeros(m - c0, c1 - c0);
        reduced.set_submatrix(0, 0, &update.castdown(&f.r)?);
        work.set_submatrix(c0, c0, &reduced);
        if c1 < n {
            let trailing = work.submatrix(c0..m, c1..n);
            work.set_submatrix(c0, c1, &wy.apply_transpose(&trailing, update)?);
        }
        blocks.push((c0, wy));
    }
    let mut q = Matrix::identity(m, n);
    // Columns before c0 are untouched unit vectors, as in `build_q`.
    for (c0, wy) in blocks.iter().rev() {
        let block = q.submatrix(*c0..m, *c0..n);
        q.set_submatrix(*c0, *c0, &wy.apply(&block, update)?);
    }
    let r = work.submatrix(0..n, 0..n).upper_triangle();
    Ok(QrFactors { q, r })
}

/// Parent index `⌈j/2⌉` of 1-based block `j`.
pub fn alpha(j: usize) -> usize {
    j.div_ceil(2)
}

/// Position `2 + j - 2α(j)` of 1-based block `j` within its parent, in `{1, 2}`.
pub fn phi(j: usize) -> usize {
    2 + j - 2 * alpha(j)
}

/// Row ranges of the `parts` leaf blocks; the first `m mod parts` are one row taller.
pub fn leaf_rows(m: usize, parts: usize) -> Vec<Range<usize>> {
    let base = m / parts;
    let extra = m % parts;
    let mut start = 0;
    (0..parts)
        .map(|j| {
            let len = base + usize::from(j < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

/// How TSQR rebuilds `Q` from the stored reflectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QApply {
    /// One reflector at a time.
    Reflectors,
    /// Through each node's WY form, cast to the apply context's storage.
    Wy,
}

/// Tall-skinny QR on a binary tree of `levels` levels.
pub fn tsqr(a: &Matrix, levels: u32, ctx: &ArithmeticContext) -> Result<QrFactors> {
    tsqr_with(a, levels, ctx, ctx, QApply::Reflectors)
}

/// Factors the reduction tree only; `R` is [`TsqrTree::r`].
pub fn tsqr_tree(a: &Matrix, levels: u32, ctx: &ArithmeticContext) -> Result<TsqrTree> {
    build_tree(a, levels, ctx, ctx).map(|(tree, _)| tree)
}

fn check_levels(m: usize, n: usize, levels: u32) -> Result<()> {
    let parts = 1usize.checked_shl(levels).filter(|_| levels < usize::BITS);
    match parts {
        Some(p) if levels >= 1 && p.checked_mul(n).is_some_and(|need| m >= need) => Ok(()),
        _ => Err(Error::InvalidLevels { m, n, levels }),
    }
}

/// Builds the tree; the triangular factors passed up each level are cast to
/// `apply`'s storage before being stacked.
fn build_tree(
    a: &Matrix,
    levels: u32,
    factor: &ArithmeticContext,
    apply: &ArithmeticContext,
) -> Result<(TsqrTree, Vec<Range<usize>>)> {
    let (m, n) = a.shape();
    check_levels(m, n, levels)?;
    let a = apply.castdown(a)?;
    let rows = leaf_rows(m, 1 << levels);
    let leaves = rows
        .par_iter()
        .map(|rg| hqr(&a.submatrix(rg.clone(), 0..n), factor))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = vec![leaves];
    for _ in 1..=levels {
        let below = nodes.last().expect("level 0 exists");
        let next = below
            .par_chunks(2)
            .map(|pair| {
                let stacked = apply
                    .castdown(&pair[0].r)?
                    .vstack(&apply.castdown(&pair[1].r)?)?;
                hqr(&stacked, factor)
            })
            .collect::<Result<Vec<_>>>()?;
        nodes.push(next);
    }
    Ok((TsqrTree { levels, nodes }, rows))
}

pub(crate) fn tsqr_with(
    a: &Matrix,
    levels: u32,
    factor: &ArithmeticContext,
    apply: &ArithmeticContext,
    mode: QApply,
) -> Result<QrFactors> {
    let n = a.cols();
    let (tree, _) = build_tree(a, levels, factor, apply)?;
    let node_q = |f: &HouseholderFactors, b: &Matrix| -> Result<Matrix> {
        match mode {
            QApply::Reflectors => apply_q(f, b, apply),
            QApply::Wy => build_wy(&f.v, &f.beta, factor)?
                .castdown(apply)?
                .apply(b, apply),
        }
    };
    let top = &tree.nodes[levels as usize][0];
    let mut upper = vec![node_q(top, &Matrix::identity(2 * n, n))?];
    for level in (0..levels as usize).rev() {
        upper = tree.nodes[level]
            .par_iter()
            .enumerate()
            .map(|(j0, f)| {
                let j = j0 + 1;
                let parent = &upper[alpha(j) - 1];
                let r0 = (phi(j) - 1) * n;
                let mut padded = Matrix::zeros(f.v.rows(), n);
                padded.set_submatrix(0, 0, &parent.submatrix(r0..r0 + n, 0..n));
                node_q(f, &padded)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    let mut q = upper[0].clone();
    for block in &upper[1..] {
        q = q.vstack(block)?;
    }
    let r = apply.castdown(tree.r())?;
    Ok(QrFactors { q, r })
}
