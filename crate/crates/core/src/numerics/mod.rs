//! Dense complex matrix kernel.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`. Everything here is a pure
//! function of its inputs. Hermitian inputs are symmetrized before any
//! spectral decomposition.

pub mod random;
mod sparse;

pub use sparse::SparseMatrix;

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{IsolabError, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative accuracy of the spectral kernel.
pub const EPS_NUM: f64 = 1e-10;
/// Absolute slack allowed on the norm of a DKW completion.
pub const TOL_DKW: f64 = 1e-8;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    CMatrix::from_fn(r, c, |i, j| real(rows[i][j]))
}

pub fn diag_real(d: &[f64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { real(d[i]) } else { ZERO })
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn validate(a: &CMatrix) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(IsolabError::NonFinite)
    }
}

pub fn ensure_square(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(IsolabError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// (H + H*) / 2
pub fn symmetrize(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermEig {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Q f(Λ) Q*
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let q = &self.eigenvectors;
        let n = q.nrows();
        let mut scaled = q.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = real(f(lam));
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * q.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|x| x)
    }
}

pub fn herm_eig(h: &CMatrix) -> Result<HermEig> {
    ensure_square(h)?;
    validate(h)?;
    let n = h.nrows();
    if n == 0 {
        return Ok(HermEig {
            eigenvalues: Vec::new(),
            eigenvectors: zeros(0, 0),
        });
    }
    let eig = symmetrize(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermEig {
        eigenvalues,
        eigenvectors,
    })
}

pub fn lambda_min(h: &CMatrix) -> Result<f64> {
    if h.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(herm_eig(h)?.lambda_min())
}

pub fn lambda_max(h: &CMatrix) -> Result<f64> {
    if h.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(herm_eig(h)?.lambda_max())
}

/// Spectral norm of a Hermitian matrix from its eigenvalues.
pub fn herm_norm(h: &CMatrix) -> Result<f64> {
    if h.nrows() == 0 {
        return Ok(0.0);
    }
    let e = herm_eig(h)?;
    Ok(e.lambda_min().abs().max(e.lambda_max().abs()))
}

/// Default eigenvalue clipping threshold 1e-10 (1 + ‖P‖).
pub fn default_clip(norm: f64) -> f64 {
    EPS_NUM * (1.0 + norm)
}

/// Hermitian PSD square root. Eigenvalues in [-clip, 0) are treated as 0.
pub fn psd_sqrt(p: &CMatrix, clip: f64) -> Result<CMatrix> {
    let e = herm_eig(p)?;
    if e.eigenvalues.is_empty() {
        return Ok(p.clone());
    }
    if e.lambda_min() < -clip {
        return Err(IsolabError::NotPsd {
            lambda_min: e.lambda_min(),
            clip,
        });
    }
    Ok(e.apply_fn(|x| x.max(0.0).sqrt()))
}

/// PSD square root with the default clipping threshold.
pub fn psd_sqrt_auto(p: &CMatrix) -> Result<CMatrix> {
    let e = herm_eig(p)?;
    if e.eigenvalues.is_empty() {
        return Ok(p.clone());
    }
    let norm = e.lambda_min().abs().max(e.lambda_max().abs());
    let clip = default_clip(norm);
    if e.lambda_min() < -clip {
        return Err(IsolabError::NotPsd {
            lambda_min: e.lambda_min(),
            clip,
        });
    }
    Ok(e.apply_fn(|x| x.max(0.0).sqrt()))
}

/// Pseudo-inverse square root: eigenvalues above `clip` map to λ^{-1/2},
/// the rest to 0.
pub fn pinv_sqrt(p: &CMatrix, clip: f64) -> Result<CMatrix> {
    let e = herm_eig(p)?;
    if e.eigenvalues.is_empty() {
        return Ok(p.clone());
    }
    Ok(e.apply_fn(|x| if x > clip { 1.0 / x.sqrt() } else { 0.0 }))
}

/// Moore-Penrose pseudo-inverse of a Hermitian PSD matrix.
pub fn pinv_psd(p: &CMatrix, clip: f64) -> Result<CMatrix> {
    let e = herm_eig(p)?;
    if e.eigenvalues.is_empty() {
        return Ok(p.clone());
    }
    Ok(e.apply_fn(|x| if x > clip { 1.0 / x } else { 0.0 }))
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if !is_finite(a) {
        return f64::NAN;
    }
    let (r, c) = (a.nrows(), a.ncols());
    // A thin matrix is cheaper through the small Gram matrix; the top
    // singular value keeps full relative accuracy that way.
    if r.min(c) * 8 <= r.max(c) {
        let g = if r < c { a * a.adjoint() } else { a.adjoint() * a };
        return herm_norm(&g).unwrap_or(f64::NAN).max(0.0).sqrt();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |m, &s| m.max(s))
}

pub fn hstack(blocks: &[&CMatrix]) -> Result<CMatrix> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(IsolabError::Dimension("hstack: row counts differ".into()));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    Ok(out)
}

pub fn vstack(blocks: &[&CMatrix]) -> Result<CMatrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(IsolabError::Dimension("vstack: column counts differ".into()));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

/// [[a, b], [c, d]]
pub fn block2(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> Result<CMatrix> {
    let top = hstack(&[a, b])?;
    let bottom = hstack(&[c, d])?;
    vstack(&[&top, &bottom])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn mat_pow(a: &CMatrix, n: usize) -> CMatrix {
    let mut out = identity(a.nrows());
    let mut base = a.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            out = &out * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    out
}

/// Constructive Parrott completion.
///
/// Returns X with ‖[[A, B], [C, X]]‖ ≤ mu (up to `TOL_DKW`), given
/// ‖[A B]‖ ≤ mu and ‖[A; C]‖ ≤ mu. Uses X = −Z A* W where
/// B = (mu² − AA*)^{1/2} W and C = Z (mu² − A*A)^{1/2}, with W and Z the
/// least-norm factors obtained from pseudo-inverse square roots.
pub fn dkw_complete(a: &CMatrix, b: &CMatrix, c: &CMatrix, mu: f64) -> Result<CMatrix> {
    if a.nrows() != b.nrows() || a.ncols() != c.ncols() {
        return Err(IsolabError::Dimension(format!(
            "dkw: A is {}x{}, B is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    for m in [a, b, c] {
        validate(m)?;
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(IsolabError::InvalidParameter(format!("mu = {mu}")));
    }
    let row = op_norm(&hstack(&[a, b])?);
    let col = op_norm(&vstack(&[a, c])?);
    let slack = EPS_NUM * mu.max(1.0);
    if row > mu + slack || col > mu + slack {
        return Err(IsolabError::MuTooSmall { row, col, mu });
    }
    let (p, q) = (a.nrows(), a.ncols());
    if c.nrows() == 0 || b.ncols() == 0 {
        return Ok(zeros(c.nrows(), b.ncols()));
    }
    let mu2 = mu * mu;
    let left = identity(p).scale(mu2) - a * a.adjoint();
    let right = identity(q).scale(mu2) - a.adjoint() * a;
    let w = pinv_sqrt(&left, default_clip(mu2))? * b;
    let z = c * pinv_sqrt(&right, default_clip(mu2))?;
    Ok(-(z * a.adjoint() * w))
}
