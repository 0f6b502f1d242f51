//! m-isometry defects, growth constants and class predicates.

use serde::{Deserialize, Serialize};

use crate::error::{IsolabError, Result};
use crate::numerics::{herm_eig, herm_norm, real, CMatrix, SparseMatrix, C64, ONE};
use crate::opcore::{Mat, Operator};

/// Default number of powers inspected by growth estimates.
pub const DEFAULT_N_MAX: usize = 200;

/// Predicate tolerance 1e-9 (1 + ‖T‖²).
pub fn default_tol(t: &Operator) -> f64 {
    let n = t.norm();
    1e-9 * (1.0 + n * n)
}

/// Δ_m(T) = Σ_j (−1)^j C(m,j) T*^j T^j on the full matrix, through the
/// recursion Δ_{k+1} = Δ_k − T* Δ_k T.
pub fn defect_full(t: &Operator, m: u32) -> Result<Mat> {
    let ta = t.adjoint_mat();
    let mut delta = Mat::identity(t.dim(), t.mat.is_sparse());
    for _ in 0..m {
        let next = ta.mul(&delta)?.mul(&t.mat)?;
        delta = delta.add_scaled(&next, real(-1.0))?;
    }
    Ok(delta)
}

fn interior_or_budget(t: &Operator, degree: usize) -> Result<Vec<usize>> {
    let idx = t.interior(degree);
    if idx.is_empty() {
        let budget = t.budget_vec().into_iter().max().unwrap_or(0);
        return Err(IsolabError::BudgetExceeded {
            requested: degree,
            budget,
        });
    }
    Ok(idx)
}

/// Δ_m(T) compressed to the interior coordinates where it is exact.
pub fn defect_operator(t: &Operator, m: u32) -> Result<CMatrix> {
    if m == 0 {
        return Err(IsolabError::InvalidParameter("defect order must be at least 1".into()));
    }
    let idx = interior_or_budget(t, m as usize)?;
    let full = defect_full(t, m)?;
    let d = full.select(&idx, &idx);
    Ok(crate::numerics::symmetrize(&d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub order: u32,
    pub defect_norm_interior: f64,
    pub interior_dim: usize,
    /// False when the operator carries no truncation metadata.
    pub interior_guaranteed: bool,
    pub verdict: bool,
    pub tol: f64,
}

/// Hermitian part of the principal submatrix on `idx`, kept sparse.
fn sparse_principal(a: &SparseMatrix, idx: &[usize]) -> SparseMatrix {
    let mut pos = vec![usize::MAX; a.nrows()];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = k;
    }
    let inside: Vec<(usize, usize, C64)> = a
        .triplets()
        .filter(|&(i, j, _)| pos[i] != usize::MAX && pos[j] != usize::MAX)
        .map(|(i, j, z)| (pos[i], pos[j], z))
        .collect();
    let half = |z: C64| z * 0.5;
    let entries = inside
        .iter()
        .map(|&(i, j, z)| (i, j, half(z)))
        .chain(inside.iter().map(|&(i, j, z)| (j, i, half(z.conj()))));
    SparseMatrix::from_triplets(idx.len(), idx.len(), entries)
}

/// ‖Δ_m(T)‖ on the interior. Sparse operators are diagonalized one
/// connected component at a time.
pub fn is_m_isometric(t: &Operator, m: u32, tol: f64) -> Result<DefectReport> {
    if m == 0 {
        return Err(IsolabError::InvalidParameter("defect order must be at least 1".into()));
    }
    let idx = interior_or_budget(t, m as usize)?;
    let (norm, dim) = match defect_full(t, m)? {
        Mat::Sparse(full) => {
            let h = sparse_principal(&full, &idx);
            let ev = h.herm_eigenvalues()?;
            (ev.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())), idx.len())
        }
        Mat::Dense(full) => {
            let d = crate::numerics::symmetrize(&Mat::Dense(full).select(&idx, &idx));
            (herm_norm(&d)?, d.nrows())
        }
    };
    Ok(DefectReport {
        order: m,
        defect_norm_interior: norm,
        interior_dim: dim,
        interior_guaranteed: t.is_truncated(),
        verdict: norm <= tol,
        tol,
    })
}

/// Least m ≤ m_max at which T passes, stopping early when the truncation
/// has no interior left at the next order.
pub fn min_isometry_order(t: &Operator, m_max: u32, tol: f64) -> Result<Option<u32>> {
    let ta = t.adjoint_mat();
    let mut delta = Mat::identity(t.dim(), t.mat.is_sparse());
    for m in 1..=m_max {
        let next = ta.mul(&delta)?.mul(&t.mat)?;
        delta = delta.add_scaled(&next, real(-1.0))?;
        let idx = t.interior(m as usize);
        if idx.is_empty() {
            return Ok(None);
        }
        if herm_norm(&delta.select(&idx, &idx))? <= tol {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// K = max(1, sup_n n^{−m/2} ‖T^n‖)
    Power,
    /// c = sup_n ‖T^n‖² / (n+1)
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub normalization: Normalization,
    pub exponent: u32,
    /// K for the power normalization, c for the affine one.
    pub k: f64,
    pub n_max: usize,
    /// ‖T^n‖ for n = 1..=n_max (shorter when the powers overflowed).
    pub sequence: Vec<f64>,
    pub diverging: bool,
}

/// ‖T^n‖ for n = 1..=n_max; restricted to interior(n) for truncated
/// operators. Stops at the first non-finite value.
pub fn power_norms(t: &Operator, n_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_max);
    match &t.mat {
        Mat::Dense(a) => {
            let mut p = a.clone();
            for n in 1..=n_max {
                if n > 1 {
                    p = a * p;
                }
                let v = crate::numerics::op_norm(&p);
                if !v.is_finite() {
                    break;
                }
                out.push(v);
            }
        }
        Mat::Sparse(a) => {
            let mut p = a.clone();
            for n in 1..=n_max {
                if n > 1 {
                    p = a.mul(&p)?;
                }
                let cols = t.interior(n);
                if cols.is_empty() {
                    break;
                }
                let v = restrict_cols(&p, &cols).op_norm();
                if !v.is_finite() {
                    break;
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn restrict_cols(a: &SparseMatrix, cols: &[usize]) -> SparseMatrix {
    if cols.len() == a.ncols() {
        return a.clone();
    }
    let mut keep = vec![false; a.ncols()];
    for &c in cols {
        keep[c] = true;
    }
    SparseMatrix::from_triplets(a.nrows(), a.ncols(), a.triplets().filter(|&(_, j, _)| keep[j]))
}

/// Running sup rose by more than 1% over the last quarter of the range.
fn trend_diverging(ratios: &[f64], n_max: usize) -> bool {
    if ratios.len() < n_max {
        return true;
    }
    if ratios.is_empty() {
        return false;
    }
    let q = (3 * ratios.len()) / 4;
    let sup_q = ratios[..q.max(1)].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sup = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    sup > 1.01 * sup_q
}

/// Factor by which the window is extended to confirm a suspected divergence.
pub const CONFIRM_FACTOR: usize = 4;

/// Normalized norms over 1..=n_max; when the trend test fires on a full
/// window, the window grows to CONFIRM_FACTOR·n_max and the flag stays only
/// if the longer sequence still trends upward.
fn growth_window(
    t: &Operator,
    n_max: usize,
    ratio: impl Fn(usize, f64) -> f64,
) -> Result<(Vec<f64>, Vec<f64>, usize, bool)> {
    let normalize = |seq: &[f64]| seq.iter().enumerate().map(|(i, &v)| ratio(i + 1, v)).collect::<Vec<f64>>();
    let seq = power_norms(t, n_max)?;
    let ratios = normalize(&seq);
    if seq.len() < n_max || !trend_diverging(&ratios, n_max) {
        let flagged = trend_diverging(&ratios, n_max);
        return Ok((seq, ratios, n_max, flagged));
    }
    let long = n_max * CONFIRM_FACTOR;
    let seq = power_norms(t, long)?;
    let ratios = normalize(&seq);
    let flagged = trend_diverging(&ratios, long);
    Ok((seq, ratios, long, flagged))
}

pub fn growth_constant(t: &Operator, m: u32, n_max: usize) -> Result<GrowthReport> {
    if n_max == 0 {
        return Err(IsolabError::InvalidParameter("n_max must be positive".into()));
    }
    let (seq, ratios, window, diverging) = growth_window(t, n_max, |n, v| v * (n as f64).powf(-(m as f64) / 2.0))?;
    let k = ratios.iter().copied().fold(1.0, f64::max);
    Ok(GrowthReport {
        normalization: Normalization::Power,
        exponent: m,
        k,
        n_max: window,
        diverging,
        sequence: seq,
    })
}

/// c = sup_{0≤n≤n_max} ‖T^n‖²/(n+1); the n = 0 term contributes 1.
pub fn growth_constant_affine(t: &Operator, n_max: usize) -> Result<GrowthReport> {
    if n_max == 0 {
        return Err(IsolabError::InvalidParameter("n_max must be positive".into()));
    }
    let (seq, ratios, window, diverging) = growth_window(t, n_max, |n, v| v * v / (n + 1) as f64)?;
    let c = ratios.iter().copied().fold(1.0, f64::max);
    Ok(GrowthReport {
        normalization: Normalization::Affine,
        exponent: 1,
        k: c,
        n_max: window,
        diverging,
        sequence: seq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub expansive: bool,
    pub contraction: bool,
    pub convex: bool,
    pub concave: bool,
    /// Some(K) when the power sequence stays bounded up to n_max.
    pub power_bounded: Option<f64>,
    pub lambda_min_delta1: f64,
    pub lambda_max_delta1: f64,
    pub lambda_min_convexity: f64,
    pub lambda_max_convexity: f64,
    pub tol: f64,
    pub n_max: usize,
}

impl Classification {
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (flag, name) in [
            (self.expansive, "expansive"),
            (self.contraction, "contraction"),
            (self.convex, "convex"),
            (self.concave, "concave"),
        ] {
            if flag {
                out.push(name.to_string());
            }
        }
        if let Some(k) = self.power_bounded {
            out.push(format!("power_bounded({k})"));
        }
        out
    }
}

fn eig_range(h: &CMatrix) -> Result<(f64, f64)> {
    let e = herm_eig(h)?;
    Ok((e.lambda_min(), e.lambda_max()))
}

pub fn classify(t: &Operator, tol: f64) -> Result<Classification> {
    classify_with(t, tol, DEFAULT_N_MAX)
}

pub fn classify_with(t: &Operator, tol: f64, n_max: usize) -> Result<Classification> {
    // T*T − I = −Δ_1 and T*²T² − 2T*T + I = Δ_2
    let (lo1, hi1) = eig_range(&(-defect_operator(t, 1)?))?;
    let (lo2, hi2) = eig_range(&defect_operator(t, 2)?)?;
    let growth = growth_constant(t, 0, n_max)?;
    Ok(Classification {
        expansive: lo1 >= -tol,
        contraction: hi1 <= tol,
        convex: lo2 >= -tol,
        concave: hi2 <= tol,
        power_bounded: (!growth.diverging).then_some(growth.k),
        lambda_min_delta1: lo1,
        lambda_max_delta1: hi1,
        lambda_min_convexity: lo2,
        lambda_max_convexity: hi2,
        tol,
        n_max,
    })
}

/// Binomial coefficient as f64.
pub fn binomial(m: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// Order-m defect of a weighted shift at a level, from its weight products:
/// Σ_j (−1)^j C(m,j) Π_{s<j} α²_{level+s+1}.
pub fn shift_defect_scalar(weights: &[f64], level: usize, m: u32) -> f64 {
    let mut acc = 0.0;
    let mut prod = 1.0;
    for j in 0..=m {
        if j > 0 {
            let w = weights[level + j as usize - 1];
            prod *= w * w;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(m, j) * prod;
    }
    acc
}

/// The identity operator, handy in tests and checks.
pub fn identity_operator(n: usize) -> Operator {
    Operator::dense(CMatrix::from_fn(n, n, |i, j| if i == j { ONE } else { real(0.0) }))
        .expect("identity is a valid operator")
}
