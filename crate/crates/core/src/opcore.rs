//! Operator model: dense matrices, truncated weighted shifts of any
//! multiplicity, block compositions, isometric embeddings, and the
//! lifting / dilation checkers.
//!
//! Truncated operators carry a per-coordinate exactness budget: the number
//! of factors of the operator that act on that coordinate exactly as the
//! untruncated operator would. `interior(k)` is the set of coordinates with
//! budget at least k.

use serde::{Deserialize, Serialize};

use crate::error::{IsolabError, Result};
use crate::numerics::{
    hstack, identity, max_abs, op_norm, real, validate, zeros, CMatrix, SparseMatrix, C64, ONE,
};

/// Default tolerance for embedding residuals.
pub const TOL_EMBED: f64 = 1e-8;

/// Matrix storage of an operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Mat {
    Dense(CMatrix),
    Sparse(SparseMatrix),
}

impl Mat {
    pub fn nrows(&self) -> usize {
        match self {
            Mat::Dense(a) => a.nrows(),
            Mat::Sparse(a) => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Mat::Dense(a) => a.ncols(),
            Mat::Sparse(a) => a.ncols(),
        }
    }

    pub fn identity(n: usize, sparse: bool) -> Mat {
        if sparse {
            Mat::Sparse(SparseMatrix::identity(n))
        } else {
            Mat::Dense(identity(n))
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Mat::Sparse(_))
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            Mat::Dense(a) => a.clone(),
            Mat::Sparse(a) => a.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            Mat::Dense(a) => SparseMatrix::from_dense(a),
            Mat::Sparse(a) => a.clone(),
        }
    }

    pub fn adjoint(&self) -> Mat {
        match self {
            Mat::Dense(a) => Mat::Dense(a.adjoint()),
            Mat::Sparse(a) => Mat::Sparse(a.adjoint()),
        }
    }

    pub fn mul(&self, other: &Mat) -> Result<Mat> {
        check_product(self.nrows(), self.ncols(), other.nrows(), other.ncols())?;
        Ok(match (self, other) {
            (Mat::Sparse(a), Mat::Sparse(b)) => Mat::Sparse(a.mul(b)?),
            (Mat::Sparse(a), Mat::Dense(b)) => Mat::Dense(a.mul_dense(b)?),
            (Mat::Dense(a), Mat::Sparse(b)) => Mat::Dense(b.adjoint().mul_dense(&a.adjoint())?.adjoint()),
            (Mat::Dense(a), Mat::Dense(b)) => Mat::Dense(a * b),
        })
    }

    pub fn mul_dense(&self, b: &CMatrix) -> Result<CMatrix> {
        check_product(self.nrows(), self.ncols(), b.nrows(), b.ncols())?;
        match self {
            Mat::Dense(a) => Ok(a * b),
            Mat::Sparse(a) => a.mul_dense(b),
        }
    }

    /// self + s·other
    pub fn add_scaled(&self, other: &Mat, s: C64) -> Result<Mat> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(IsolabError::Dimension("operator sum: shapes differ".into()));
        }
        Ok(match (self, other) {
            (Mat::Sparse(a), Mat::Sparse(b)) => Mat::Sparse(a.add_scaled(b, s)?),
            _ => Mat::Dense(self.to_dense() + other.to_dense() * s),
        })
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        match self {
            Mat::Dense(a) => CMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])]),
            Mat::Sparse(a) => a.select(rows, cols),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Mat::Dense(a) => op_norm(a),
            Mat::Sparse(a) => a.op_norm(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Mat::Dense(a) => validate(a).is_ok(),
            Mat::Sparse(a) => a.is_finite(),
        }
    }
}

fn check_product(ar: usize, ac: usize, br: usize, bc: usize) -> Result<()> {
    if ac != br {
        return Err(IsolabError::Dimension(format!("product {ar}x{ac} by {br}x{bc}")));
    }
    Ok(())
}

/// Extra coordinates appended after the last shift level. `feed` maps the
/// last level's fiber into them and `tail` acts among them.
#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub feed: CMatrix,
    pub tail: CMatrix,
}

impl Closure {
    pub fn dim(&self) -> usize {
        self.tail.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Unilateral,
    Bilateral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Dense,
    Shift {
        kind: ShiftKind,
        weights: Vec<f64>,
        trunc: usize,
        multiplicity: usize,
        closure: Option<Closure>,
    },
    Block {
        row_dims: Vec<usize>,
    },
}

impl Structure {
    pub fn tag(&self) -> &'static str {
        match self {
            Structure::Dense => "dense",
            Structure::Shift {
                kind: ShiftKind::Unilateral,
                ..
            } => "unilateral_shift",
            Structure::Shift {
                kind: ShiftKind::Bilateral,
                ..
            } => "bilateral_shift",
            Structure::Block { .. } => "block",
        }
    }
}

/// A finite matrix representation of a possibly truncated operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub mat: Mat,
    pub structure: Structure,
    /// Per-coordinate exactness budgets; `None` means no truncation.
    pub budgets: Option<Vec<usize>>,
    /// The matrix is the compression of the untruncated operator to a
    /// semi-invariant subspace, so compressions of its powers are exact.
    pub compression_exact: bool,
}

/// Result of `interior_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InteriorDim {
    pub count: usize,
    pub guaranteed: bool,
}

impl Operator {
    pub fn dense(a: CMatrix) -> Result<Operator> {
        if a.nrows() != a.ncols() {
            return Err(IsolabError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(IsolabError::Dimension("empty operator".into()));
        }
        validate(&a)?;
        Ok(Operator {
            mat: Mat::Dense(a),
            structure: Structure::Dense,
            budgets: None,
            compression_exact: true,
        })
    }

    pub fn from_mat(mat: Mat, structure: Structure, budgets: Option<Vec<usize>>) -> Result<Operator> {
        if mat.nrows() != mat.ncols() {
            return Err(IsolabError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if !mat.is_finite() {
            return Err(IsolabError::NonFinite);
        }
        if let Some(b) = &budgets {
            if b.len() != mat.nrows() {
                return Err(IsolabError::Dimension(format!(
                    "budget list has {} entries for dimension {}",
                    b.len(),
                    mat.nrows()
                )));
            }
        }
        Ok(Operator {
            mat,
            structure,
            budgets,
            compression_exact: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn to_dense(&self) -> CMatrix {
        self.mat.to_dense()
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn is_truncated(&self) -> bool {
        self.budgets.is_some()
    }

    /// Budget of each coordinate, `usize::MAX` when unlimited.
    pub fn budget_vec(&self) -> Vec<usize> {
        self.budgets.clone().unwrap_or_else(|| vec![usize::MAX; self.dim()])
    }

    /// Coordinates on which products of at most `degree` factors are exact.
    pub fn interior(&self, degree: usize) -> Vec<usize> {
        match &self.budgets {
            None => (0..self.dim()).collect(),
            Some(b) => (0..b.len()).filter(|&i| b[i] >= degree).collect(),
        }
    }

    pub fn interior_dim(&self, degree: usize) -> InteriorDim {
        InteriorDim {
            count: self.interior(degree).len(),
            guaranteed: self.budgets.is_some(),
        }
    }

    /// S applied to the columns of `x`.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        self.mat.mul_dense(x)
    }

    /// S^n applied to the columns of `x`.
    pub fn apply_power(&self, x: &CMatrix, n: usize) -> Result<CMatrix> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.mat.mul_dense(&y)?;
        }
        Ok(y)
    }

    pub fn adjoint_mat(&self) -> Mat {
        self.mat.adjoint()
    }

    /// Smallest budget over the coordinates where `map` has nonzero rows.
    pub fn budget_on(&self, map: &CMatrix) -> usize {
        let Some(b) = &self.budgets else {
            return usize::MAX;
        };
        (0..map.nrows())
            .filter(|&i| (0..map.ncols()).any(|j| map[(i, j)].norm() > 0.0))
            .map(|i| b[i])
            .min()
            .unwrap_or(usize::MAX)
    }
}

fn shift_budgets(kind: ShiftKind, n: usize, mult: usize, extra: usize) -> Vec<usize> {
    let levels = match kind {
        ShiftKind::Unilateral => n,
        ShiftKind::Bilateral => 2 * n,
    };
    let mut b = Vec::with_capacity(levels * mult + extra);
    for l in 0..levels {
        b.extend(std::iter::repeat_n(levels - 1 - l, mult));
    }
    b.extend(std::iter::repeat_n(0, extra));
    b
}

/// Truncated weighted shift with scalar weights repeated on each fiber.
///
/// Unilateral: coordinates are levels 0..N, `weights[s-1]` is the weight of
/// level s-1 → s, and only `weights[..N-1]` enter the matrix. Bilateral:
/// levels are the indices −N..N−1 in order and `weights[k]` is the weight of
/// index k−N → k−N+1; the outflow of the last index is cut.
pub fn make_weighted_shift(
    weights: &[f64],
    trunc: usize,
    multiplicity: usize,
    kind: ShiftKind,
) -> Result<Operator> {
    if trunc == 0 {
        return Err(IsolabError::InvalidParameter("truncation N must be positive".into()));
    }
    if multiplicity == 0 {
        return Err(IsolabError::InvalidParameter("multiplicity must be positive".into()));
    }
    let levels = match kind {
        ShiftKind::Unilateral => trunc,
        ShiftKind::Bilateral => 2 * trunc,
    };
    if weights.len() < levels {
        return Err(IsolabError::InvalidParameter(format!(
            "{} weights supplied, {} required",
            weights.len(),
            levels
        )));
    }
    for (k, &w) in weights.iter().take(levels).enumerate() {
        if !(w.is_finite() && w > 0.0) {
            let index = match kind {
                ShiftKind::Unilateral => k as i64 + 1,
                ShiftKind::Bilateral => k as i64 - trunc as i64,
            };
            return Err(IsolabError::NonpositiveWeight { index });
        }
    }
    let dim = levels * multiplicity;
    let mut t = Vec::with_capacity(dim);
    for l in 0..levels - 1 {
        for f in 0..multiplicity {
            t.push(((l + 1) * multiplicity + f, l * multiplicity + f, real(weights[l])));
        }
    }
    Ok(Operator {
        mat: Mat::Sparse(SparseMatrix::from_triplets(dim, dim, t)),
        structure: Structure::Shift {
            kind,
            weights: weights[..levels].to_vec(),
            trunc,
            multiplicity,
            closure: None,
        },
        budgets: Some(shift_budgets(kind, trunc, multiplicity, 0)),
        compression_exact: true,
    })
}

/// Append closure coordinates to a truncated shift.
pub fn attach_closure(op: &Operator, closure: Closure) -> Result<Operator> {
    let Structure::Shift {
        kind,
        weights,
        trunc,
        multiplicity,
        closure: None,
    } = &op.structure
    else {
        return Err(IsolabError::InvalidParameter(
            "closure needs a shift without closure".into(),
        ));
    };
    let t = closure.dim();
    if closure.feed.nrows() != t || closure.feed.ncols() != *multiplicity || closure.tail.ncols() != t {
        return Err(IsolabError::Dimension(format!(
            "closure feed {}x{} and tail {}x{} for multiplicity {}",
            closure.feed.nrows(),
            closure.feed.ncols(),
            closure.tail.nrows(),
            closure.tail.ncols(),
            multiplicity
        )));
    }
    validate(&closure.feed)?;
    validate(&closure.tail)?;
    let base = op.dim();
    let last = base - multiplicity;
    let mut trip: Vec<_> = op.mat.to_sparse().triplets().collect();
    for i in 0..t {
        for f in 0..*multiplicity {
            trip.push((base + i, last + f, closure.feed[(i, f)]));
        }
        for j in 0..t {
            trip.push((base + i, base + j, closure.tail[(i, j)]));
        }
    }
    let dim = base + t;
    Ok(Operator {
        mat: Mat::Sparse(SparseMatrix::from_triplets(dim, dim, trip)),
        structure: Structure::Shift {
            kind: *kind,
            weights: weights.clone(),
            trunc: *trunc,
            multiplicity: *multiplicity,
            closure: Some(closure),
        },
        budgets: Some(shift_budgets(*kind, *trunc, *multiplicity, t)),
        compression_exact: true,
    })
}

/// Isometric column map identifying a small space inside a big one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    pub map: CMatrix,
    pub iso_residual: f64,
    pub intertwine_residual: f64,
}

impl EmbeddingMap {
    pub fn new(map: CMatrix) -> Result<EmbeddingMap> {
        validate(&map)?;
        let iso_residual = op_norm(&(map.adjoint() * &map - identity(map.ncols())));
        Ok(EmbeddingMap {
            map,
            iso_residual,
            intertwine_residual: 0.0,
        })
    }

    /// Coordinates `offset..offset+small` of a space of dimension `big`.
    pub fn inclusion(big: usize, small: usize, offset: usize) -> Result<EmbeddingMap> {
        if offset + small > big {
            return Err(IsolabError::Dimension(format!(
                "cannot include {small} coordinates at {offset} in {big}"
            )));
        }
        let mut map = zeros(big, small);
        for i in 0..small {
            map[(offset + i, i)] = ONE;
        }
        EmbeddingMap::new(map)
    }

    /// Several coordinate blocks, stacked in order.
    pub fn inclusion_blocks(big: usize, blocks: &[(usize, usize)]) -> Result<EmbeddingMap> {
        let parts = blocks
            .iter()
            .map(|&(offset, len)| EmbeddingMap::inclusion(big, len, offset).map(|e| e.map))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CMatrix> = parts.iter().collect();
        EmbeddingMap::new(hstack(&refs)?)
    }

    pub fn big_dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn small_dim(&self) -> usize {
        self.map.ncols()
    }

    pub fn is_isometric(&self, tol: f64) -> bool {
        self.iso_residual <= tol
    }

    /// P_H = W W*
    pub fn projection(&self) -> CMatrix {
        &self.map * self.map.adjoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Lifting,
    Extension,
    Dilation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub relation: Relation,
    pub max_power: usize,
    /// The powers at which residuals were measured.
    pub powers: Vec<usize>,
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub verdict: bool,
}

impl RelationReport {
    fn new(relation: Relation, powers: Vec<usize>, residuals: Vec<f64>, tol: f64) -> Self {
        let verdict = residuals.iter().all(|&r| r <= tol);
        RelationReport {
            relation,
            max_power: powers.last().copied().unwrap_or(0),
            powers,
            residuals,
            tol,
            verdict,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn check_embedding_dims(s: &Operator, t: &Operator, w: &EmbeddingMap) -> Result<()> {
    if w.big_dim() != s.dim() || w.small_dim() != t.dim() {
        return Err(IsolabError::Dimension(format!(
            "embedding is {}x{}, S has dimension {}, T has dimension {}",
            w.big_dim(),
            w.small_dim(),
            s.dim(),
            t.dim()
        )));
    }
    Ok(())
}

/// ‖T W* − W* S‖, computed as ‖S* W − W T*‖.
pub fn lifting_residual(s: &Operator, t: &Operator, w: &EmbeddingMap) -> Result<f64> {
    check_embedding_dims(s, t, w)?;
    let lhs = s.adjoint_mat().mul_dense(&w.map)?;
    let rhs = t.adjoint_mat().adjoint().mul_dense(&w.map.adjoint())?.adjoint();
    Ok(op_norm(&(lhs - rhs)))
}

pub fn check_lifting(s: &Operator, t: &Operator, w: &EmbeddingMap, tol: f64) -> Result<RelationReport> {
    let r = lifting_residual(s, t, w)?;
    Ok(RelationReport::new(Relation::Lifting, vec![1], vec![r], tol))
}

/// The same relation read as S* extending T*.
pub fn check_extension(s: &Operator, t: &Operator, w: &EmbeddingMap, tol: f64) -> Result<RelationReport> {
    let r = lifting_residual(s, t, w)?;
    Ok(RelationReport::new(Relation::Extension, vec![1], vec![r], tol))
}

/// Residuals ‖W* S^n W − T^n‖ for n = 0..=max_power.
pub fn check_dilation(
    s: &Operator,
    t: &Operator,
    w: &EmbeddingMap,
    max_power: usize,
    tol: f64,
) -> Result<RelationReport> {
    check_embedding_dims(s, t, w)?;
    if !s.compression_exact {
        let budget = s.budget_on(&w.map);
        if max_power > budget {
            return Err(IsolabError::BudgetExceeded {
                requested: max_power,
                budget,
            });
        }
    }
    let td = t.to_dense();
    let mut sw = w.map.clone();
    let mut tn = identity(t.dim());
    let mut residuals = Vec::with_capacity(max_power + 1);
    for n in 0..=max_power {
        if n > 0 {
            sw = s.apply(&sw)?;
            tn = &td * tn;
        }
        residuals.push(op_norm(&(w.map.adjoint() * &sw - &tn)));
    }
    Ok(RelationReport::new(
        Relation::Dilation,
        (0..=max_power).collect(),
        residuals,
        tol,
    ))
}

/// Block operator from a grid of optional blocks. Every block row and
/// column needs at least one present block to fix its size.
pub fn block_operator(grid: &[Vec<Option<Operator>>]) -> Result<Operator> {
    block_from_mats(
        &grid
            .iter()
            .map(|row| row.iter().map(|b| b.as_ref().map(|o| o.mat.clone())).collect())
            .collect::<Vec<Vec<Option<Mat>>>>(),
    )
}

pub fn block_from_mats(grid: &[Vec<Option<Mat>>]) -> Result<Operator> {
    let nr = grid.len();
    let nc = grid.first().map_or(0, |r| r.len());
    if nr == 0 || nc == 0 || grid.iter().any(|r| r.len() != nc) {
        return Err(IsolabError::Dimension("block grid must be rectangular and nonempty".into()));
    }
    let mut row_dims = vec![None; nr];
    let mut col_dims = vec![None; nc];
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            if let Some(m) = b {
                for (slot, v) in [(&mut row_dims[i], m.nrows()), (&mut col_dims[j], m.ncols())] {
                    match slot {
                        Some(x) if *x != v => {
                            return Err(IsolabError::Dimension(format!("block ({i},{j}) has inconsistent size")))
                        }
                        _ => *slot = Some(v),
                    }
                }
            }
        }
    }
    let row_dims: Vec<usize> = row_dims
        .into_iter()
        .map(|d| d.ok_or_else(|| IsolabError::Dimension("block row with no blocks".into())))
        .collect::<Result<_>>()?;
    let col_dims: Vec<usize> = col_dims
        .into_iter()
        .map(|d| d.ok_or_else(|| IsolabError::Dimension("block column with no blocks".into())))
        .collect::<Result<_>>()?;
    let sparse: Vec<Vec<Option<SparseMatrix>>> = grid
        .iter()
        .map(|row| row.iter().map(|b| b.as_ref().map(|m| m.to_sparse())).collect())
        .collect();
    let refs: Vec<Vec<Option<&SparseMatrix>>> =
        sparse.iter().map(|row| row.iter().map(|b| b.as_ref()).collect()).collect();
    let big = SparseMatrix::from_blocks(&row_dims, &col_dims, &refs)?;
    let any_dense = grid.iter().flatten().flatten().any(|m| !m.is_sparse());
    let mat = if any_dense { Mat::Dense(big.to_dense()) } else { Mat::Sparse(big) };
    let mut op = Operator::from_mat(mat, Structure::Block { row_dims }, None)?;
    op.compression_exact = true;
    Ok(op)
}

/// Structural certificate of analyticity (∩ S^n K = {0}).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Analyticity {
    Structural { min_weight: f64 },
    NotCheckableAtTruncation,
}

pub fn analyticity(op: &Operator) -> Analyticity {
    match &op.structure {
        Structure::Shift {
            kind: ShiftKind::Unilateral,
            weights,
            ..
        } if weights.iter().all(|&w| w > 0.0) => Analyticity::Structural {
            min_weight: weights.iter().copied().fold(f64::INFINITY, f64::min),
        },
        _ => Analyticity::NotCheckableAtTruncation,
    }
}

/// Largest entry of S^d e_j computed from the matrix minus the closed-form
/// weight product, over coordinates in interior(d). Unilateral shifts only.
pub fn shift_power_error(op: &Operator, degree: usize) -> Result<f64> {
    let Structure::Shift {
        kind: ShiftKind::Unilateral,
        weights,
        multiplicity,
        ..
    } = &op.structure
    else {
        return Err(IsolabError::InvalidParameter("unilateral shift expected".into()));
    };
    let m = *multiplicity;
    let cols = op.interior(degree);
    let mut e = zeros(op.dim(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        e[(j, c)] = ONE;
    }
    let got = op.apply_power(&e, degree)?;
    let mut expect = zeros(op.dim(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        let level = j / m;
        let prod: f64 = weights[level..level + degree].iter().product();
        expect[(j + degree * m, c)] = real(prod);
    }
    Ok(max_abs(&(got - expect)))
}
