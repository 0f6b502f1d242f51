//! Polynomial inequalities against the extremal shift S_K, the Foguel
//! operator, and 3-isometric liftings of upper-triangular operators
//! [[C₀, C], [0, C₁]] with C C₁ = C₀ C built from Schäffer liftings and a
//! commutant lifting of C.

use serde::{Deserialize, Serialize};

use crate::certificate::{Check, LiftingCertificate, Provenance};
use crate::defect::{growth_constant, is_m_isometric, DEFAULT_N_MAX};
use crate::error::{IsolabError, Result};
use crate::numerics::{
    dkw_complete, herm_eig, hstack, identity, max_abs, op_norm, real, symmetrize, vstack, zeros, CMatrix, C64,
};
use crate::opcore::{
    block_from_mats, check_dilation, check_lifting, make_weighted_shift, EmbeddingMap, Mat, Operator, ShiftKind,
    Structure,
};
use crate::serial::SCHEMA;

pub const GRID_POINTS: usize = 4096;
pub const TOL_CL: f64 = 1e-8;

/// α_s = (2Ks+1)/(2K(s−1)+1) for s = 1..=n.
pub fn extremal_weights(k: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|s| (2.0 * k * s as f64 + 1.0) / (2.0 * k * (s as f64 - 1.0) + 1.0))
        .collect()
}

/// S_K truncated to N levels.
pub fn extremal_shift(k: f64, n: usize) -> Result<Operator> {
    if !(k > 1.0) {
        return Err(IsolabError::InvalidParameter(format!("K = {k} must exceed 1")));
    }
    make_weighted_shift(&extremal_weights(k, n), n, 1, ShiftKind::Unilateral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    /// Ascending degree.
    pub coefficients: Vec<C64>,
}

impl PolyCoeffs {
    pub fn new(coefficients: Vec<C64>) -> Result<PolyCoeffs> {
        if coefficients.is_empty() {
            return Err(IsolabError::InvalidParameter("polynomial needs a coefficient".into()));
        }
        if coefficients.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(IsolabError::NonFinite);
        }
        Ok(PolyCoeffs { coefficients })
    }

    pub fn real(coefficients: &[f64]) -> Result<PolyCoeffs> {
        PolyCoeffs::new(coefficients.iter().map(|&c| real(c)).collect())
    }

    /// Formal degree.
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coefficients.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// max |p| over `points` equally spaced points of the unit circle.
    pub fn sup_grid(&self, points: usize) -> f64 {
        (0..points)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
                self.eval(C64::from_polar(1.0, th)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// sec(nπ/2M): the circle sup is at most this times the grid sup.
    pub fn bernstein_factor(&self, points: usize) -> f64 {
        let x = self.degree() as f64 * std::f64::consts::PI / (2.0 * points as f64);
        if x < std::f64::consts::FRAC_PI_2 {
            1.0 / x.cos()
        } else {
            f64::INFINITY
        }
    }
}

/// Horner evaluation. Budgets and exactness carry over from A.
pub fn poly_eval(p: &PolyCoeffs, a: &Operator) -> Result<Operator> {
    let n = a.dim();
    let sparse = a.mat.is_sparse();
    let lead = *p.coefficients.last().expect("nonempty");
    let mut acc = Mat::Sparse(crate::numerics::SparseMatrix::identity(n).scale(lead));
    if !sparse {
        acc = Mat::Dense(acc.to_dense());
    }
    for &c in p.coefficients.iter().rev().skip(1) {
        acc = acc.mul(&a.mat)?.add_scaled(&Mat::identity(n, sparse), c)?;
    }
    let mut out = Operator::from_mat(acc, Structure::Dense, a.budgets.clone())?;
    out.compression_exact = a.compression_exact;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct VnAnchor {
    pub norm: f64,
    pub sup_grid: f64,
    pub bernstein_factor: f64,
    pub pass: bool,
}

/// ‖p(C)‖ against the grid sup of |p| for a contraction C.
pub fn von_neumann_check(p: &PolyCoeffs, c: &Operator) -> Result<VnAnchor> {
    let norm_c = c.norm();
    if norm_c > 1.0 + 1e-9 {
        return Err(IsolabError::NotContraction { norm: norm_c });
    }
    let norm = poly_eval(p, c)?.norm();
    let sup_grid = p.sup_grid(GRID_POINTS);
    Ok(VnAnchor {
        norm,
        sup_grid,
        bernstein_factor: p.bernstein_factor(GRID_POINTS),
        pass: norm <= sup_grid * (1.0 + 1e-6) + 1e-9,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VnReport {
    pub k: f64,
    /// Power bound of T measured up to n_max.
    pub k_measured: f64,
    pub n_max: usize,
    pub norm_pt: f64,
    /// (N, ‖p(S_K[N])‖)
    pub sweep: Vec<(usize, f64)>,
    pub monotone: bool,
    pub tol: f64,
    pub pass: bool,
}

/// ‖p(T)‖ ≤ ‖p(S_K)‖, with the right side approximated from below by
/// co-invariant compressions S_K[N].
pub fn vn_check(p: &PolyCoeffs, t: &Operator, k: f64, sweep: &[usize], tol: f64) -> Result<VnReport> {
    if !(k >= 1.0) {
        return Err(IsolabError::InvalidParameter(format!("K = {k} must be at least 1")));
    }
    if sweep.is_empty() {
        return Err(IsolabError::InvalidParameter("empty truncation sweep".into()));
    }
    let growth = growth_constant(t, 0, DEFAULT_N_MAX)?;
    if growth.diverging || growth.k > k * (1.0 + 1e-12) {
        return Err(IsolabError::NotPowerBounded(format!(
            "sup ‖T^n‖ over n ≤ {} is {} (diverging: {}), above K = {k}",
            DEFAULT_N_MAX, growth.k, growth.diverging
        )));
    }
    let norm_pt = poly_eval(p, t)?.norm();
    let mut rows = Vec::with_capacity(sweep.len());
    for &n in sweep {
        let s = make_weighted_shift(&extremal_weights(k, n), n, 1, ShiftKind::Unilateral)?;
        rows.push((n, poly_eval(p, &s)?.norm()));
    }
    let mut sorted = rows.clone();
    sorted.sort_by_key(|r| r.0);
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12));
    let best = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(VnReport {
        k,
        k_measured: growth.k,
        n_max: growth.n_max,
        norm_pt,
        sweep: rows,
        monotone,
        tol,
        pass: norm_pt <= best + tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoguelSpec {
    pub n_param: u32,
    pub trunc: usize,
    pub k_max: u32,
}

impl FoguelSpec {
    /// Lacunary indices 3^k, k = 1..=k_max, counted from 1.
    pub fn indices(&self) -> Vec<usize> {
        (1..=self.k_max).map(|k| 3usize.pow(k)).collect()
    }

    pub fn coupling(&self) -> f64 {
        1.0 / self.n_param as f64
    }

    /// (1/N + sqrt(4 + 1/N)) / 2
    pub fn power_bound(&self) -> f64 {
        let c = self.coupling();
        (c + (4.0 + c).sqrt()) / 2.0
    }

    fn validate(&self) -> Result<()> {
        if self.n_param == 0 {
            return Err(IsolabError::InvalidParameter("N must be positive".into()));
        }
        let need = 3usize.checked_pow(self.k_max).unwrap_or(usize::MAX);
        if self.trunc < need {
            return Err(IsolabError::InvalidParameter(format!(
                "truncation {} below 3^{} = {need}",
                self.trunc, self.k_max
            )));
        }
        Ok(())
    }
}

fn plain_shift(n: usize) -> CMatrix {
    let mut s = zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        s[(i + 1, i)] = real(1.0);
    }
    s
}

/// X = Σ E_{3^k,3^k} with 1-based positions.
pub fn foguel_x(spec: &FoguelSpec) -> Result<CMatrix> {
    spec.validate()?;
    let mut x = zeros(spec.trunc, spec.trunc);
    for i in spec.indices() {
        x[(i - 1, i - 1)] = real(1.0);
    }
    Ok(x)
}

fn foguel_with_coupling(spec: &FoguelSpec, coupling: f64) -> Result<Operator> {
    let x = foguel_x(spec)?.scale(coupling);
    let s = plain_shift(spec.trunc);
    let mut op = block_from_mats(&[
        vec![Some(Mat::Dense(s.adjoint())), Some(Mat::Dense(x))],
        vec![None, Some(Mat::Dense(s))],
    ])?;
    op.compression_exact = true;
    Ok(op)
}

/// F = [[S*, X/N], [0, S]]. Paths that leave the truncation through S never
/// return, so compressions of powers are exact.
pub fn foguel_operator(spec: &FoguelSpec) -> Result<Operator> {
    foguel_with_coupling(spec, spec.coupling())
}

/// F with the coupling X removed.
pub fn foguel_decoupled(spec: &FoguelSpec) -> Result<Operator> {
    foguel_with_coupling(spec, 0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoguelPowerReport {
    pub spec: FoguelSpec,
    pub n_max: usize,
    /// ‖Fⁿ‖ for n = 0..=n_max
    pub norms: Vec<f64>,
    /// ‖X_n‖ where Fⁿ has upper-right block X_n / N, n = 1..=n_max
    pub x_norms: Vec<f64>,
    pub sup: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn foguel_power_check(spec: &FoguelSpec, n_max: usize) -> Result<FoguelPowerReport> {
    let f = foguel_operator(spec)?.to_dense();
    let t = spec.trunc;
    let mut p = identity(2 * t);
    let mut norms = vec![1.0];
    let mut x_norms = Vec::with_capacity(n_max);
    for _ in 1..=n_max {
        p = &f * p;
        norms.push(op_norm(&p));
        let x = p.view((0, t), (t, t)).into_owned().scale(spec.n_param as f64);
        x_norms.push(op_norm(&x));
    }
    let sup = norms.iter().copied().fold(0.0, f64::max);
    let bound = spec.power_bound();
    let xmax = x_norms.iter().copied().fold(0.0, f64::max);
    Ok(FoguelPowerReport {
        spec: *spec,
        n_max,
        pass: sup <= bound + 1e-9 && xmax <= 1.0 + 1e-9,
        norms,
        x_norms,
        sup,
        bound,
    })
}

/// p_n(z) = Σ_{k=1}^n z^{3^k} for n = 1..=k_max.
pub fn lacunary_family(k_max: u32) -> Vec<PolyCoeffs> {
    (1..=k_max)
        .map(|n| {
            let mut c = vec![C64::new(0.0, 0.0); 3usize.pow(n) + 1];
            for k in 1..=n {
                c[3usize.pow(k)] = real(1.0);
            }
            PolyCoeffs { coefficients: c }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub norms: Vec<f64>,
    pub sups: Vec<f64>,
    /// ‖p(F)‖ / sup_grid |p|
    pub ratios: Vec<f64>,
    pub increasing: bool,
    /// Always "trend": a finite table cannot decide polynomial boundedness.
    pub kind: &'static str,
}

pub fn polybound_trend(f: &Operator, family: &[PolyCoeffs]) -> Result<TrendReport> {
    if family.is_empty() {
        return Err(IsolabError::InvalidParameter("empty polynomial family".into()));
    }
    let mut norms = Vec::new();
    let mut sups = Vec::new();
    for p in family {
        norms.push(poly_eval(p, f)?.norm());
        sups.push(p.sup_grid(GRID_POINTS));
    }
    let ratios: Vec<f64> = norms.iter().zip(&sups).map(|(n, s)| n / s).collect();
    Ok(TrendReport {
        increasing: ratios.windows(2).all(|w| w[1] > w[0]),
        norms,
        sups,
        ratios,
        kind: "trend",
    })
}

/// Rows E with E*E = P; one row per eigenvalue above the clip.
fn factor_rows(p: &CMatrix) -> Result<CMatrix> {
    let e = herm_eig(&symmetrize(p))?;
    let clip = crate::numerics::default_clip(e.lambda_max().abs().max(e.lambda_min().abs()));
    if e.lambda_min() < -clip {
        return Err(IsolabError::NotPsd {
            lambda_min: e.lambda_min(),
            clip,
        });
    }
    let keep: Vec<usize> = (0..e.eigenvalues.len()).filter(|&i| e.eigenvalues[i] > clip).collect();
    Ok(CMatrix::from_fn(keep.len(), p.nrows(), |r, c| {
        e.eigenvectors[(c, keep[r])].conj() * e.eigenvalues[keep[r]].sqrt()
    }))
}

/// Minimal isometric lifting V = [[C, 0], [D, S]] on H ⊕ ℓ²_N(D_C), with
/// the defect space taken at its rank.
#[derive(Debug, Clone)]
pub struct Schaffer {
    pub v: Operator,
    pub w: EmbeddingMap,
    pub d: usize,
    /// Rank of the defect.
    pub rank: usize,
    pub trunc: usize,
}

impl Schaffer {
    /// Dimension of levels 0..=k.
    pub fn prefix(&self, k: usize) -> usize {
        self.d + self.rank * k.min(self.trunc)
    }
}

pub fn schaffer_lifting(c: &Operator, trunc: usize) -> Result<Schaffer> {
    if trunc == 0 {
        return Err(IsolabError::InvalidParameter("truncation N must be positive".into()));
    }
    let cd = c.to_dense();
    let d = cd.nrows();
    let norm = op_norm(&cd);
    if norm > 1.0 + 1e-9 {
        return Err(IsolabError::NotContraction { norm });
    }
    let e = factor_rows(&(identity(d) - cd.adjoint() * &cd))?;
    let r = e.nrows();
    if r == 0 {
        let v = Operator::dense(cd)?;
        return Ok(Schaffer {
            w: EmbeddingMap::inclusion(d, d, 0)?,
            v,
            d,
            rank: 0,
            trunc,
        });
    }
    let n = d + r * trunc;
    let mut m = zeros(n, n);
    m.view_mut((0, 0), (d, d)).copy_from(&cd);
    m.view_mut((d, 0), (r, d)).copy_from(&e);
    for l in 1..trunc {
        for f in 0..r {
            m[(d + l * r + f, d + (l - 1) * r + f)] = real(1.0);
        }
    }
    let mut budgets = vec![trunc; d];
    for l in 1..=trunc {
        budgets.extend(std::iter::repeat_n(trunc - l, r));
    }
    let mut v = Operator::from_mat(Mat::Dense(m), Structure::Block { row_dims: vec![d, r * trunc] }, Some(budgets))?;
    v.compression_exact = true;
    Ok(Schaffer {
        w: EmbeddingMap::inclusion(n, d, 0)?,
        v,
        d,
        rank: r,
        trunc,
    })
}

/// ‖V*V − I‖ over interior(1).
pub fn isometry_residual(v: &Operator) -> f64 {
    let vd = v.to_dense();
    let g = vd.adjoint() * &vd - identity(v.dim());
    let idx = v.interior(1);
    op_norm(&CMatrix::from_fn(idx.len(), idx.len(), |i, j| g[(idx[i], idx[j])]))
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutantLift {
    #[serde(with = "crate::serial::matrix")]
    pub ctilde: CMatrix,
    /// ‖C̃V₁ − V₀C̃‖ on columns of levels < N
    pub intertwine_residual: f64,
    /// ‖P_{H₀}C̃ − C P_{H₁}‖
    pub compression_residual: f64,
    /// ‖C̃‖ − ‖C‖
    pub norm_excess: f64,
    /// For each column level of K₁, the norm of C̃ in the last row level of K₀.
    pub tail_profile: Vec<f64>,
    #[serde(skip)]
    pub v0: Option<Schaffer>,
    #[serde(skip)]
    pub v1: Option<Schaffer>,
}

/// Orthonormal basis of the complement of the range of isometric columns.
fn complement_basis(v: &CMatrix) -> Result<CMatrix> {
    let n = v.nrows();
    let k = n - v.ncols();
    if k == 0 {
        return Ok(zeros(n, 0));
    }
    let e = herm_eig(&(identity(n) - v * v.adjoint()))?;
    Ok(e.eigenvectors.columns(n - k, k).into_owned())
}

/// C̃ intertwining the Schäffer liftings of C₁ and C₀ with ‖C̃‖ = ‖C‖,
/// built level by level: at each step the new row block on the range of V₁
/// is forced by C̃V₁ = V₀C̃ and the corner on its complement is a Parrott
/// completion at norm ‖C‖.
pub fn commutant_lift(c: &CMatrix, c0: &Operator, c1: &Operator, trunc: usize) -> Result<CommutantLift> {
    let (a0, a1) = (c0.to_dense(), c1.to_dense());
    if c.nrows() != a0.nrows() || c.ncols() != a1.nrows() {
        return Err(IsolabError::Dimension(format!(
            "C is {}x{} between spaces of dimension {} and {}",
            c.nrows(),
            c.ncols(),
            a1.nrows(),
            a0.nrows()
        )));
    }
    let scale = 1.0 + op_norm(c);
    let hyp = op_norm(&(c * &a1 - &a0 * c));
    if hyp > 1e-9 * scale {
        return Err(IsolabError::Intertwining { residual: hyp });
    }
    let s0 = schaffer_lifting(c0, trunc)?;
    let s1 = schaffer_lifting(c1, trunc)?;
    let (v0, v1) = (s0.v.to_dense(), s1.v.to_dense());
    let mu = op_norm(c);
    let mut a = c.clone();
    let levels = |s: &Schaffer| if s.rank == 0 { 0 } else { trunc };
    let steps = levels(&s0).max(levels(&s1));
    for k in 0..steps {
        let (n0, n1) = (s0.prefix(k), s1.prefix(k));
        let (m0, m1) = (s0.prefix(k + 1), s1.prefix(k + 1));
        let v1k = v1.view((0, 0), (m1, n1)).into_owned();
        let v0k = v0.view((0, 0), (m0, n0)).into_owned();
        let known = &v0k * &a;
        let nb = complement_basis(&v1k)?;
        let xk = &a * nb.rows(0, n1);
        let aa = known.rows(0, n0).into_owned();
        let cc = known.rows(n0, m0 - n0).into_owned();
        let x = dkw_complete(&aa, &xk, &cc, mu)?;
        let top = hstack(&[&aa, &xk])?;
        let bottom = hstack(&[&cc, &x])?;
        let m = vstack(&[&top, &bottom])?;
        let basis = hstack(&[&v1k, &nb])?;
        a = m * basis.adjoint();
    }
    let (d0, d1) = (s0.d, s1.d);
    let n1 = s1.v.dim();
    let cols: Vec<usize> = s1.v.interior(1);
    let lhs = &a * &v1 - &v0 * &a;
    let intertwine_residual = op_norm(&CMatrix::from_fn(lhs.nrows(), cols.len(), |i, j| lhs[(i, cols[j])]));
    let mut expect = zeros(d0, n1);
    expect.view_mut((0, 0), (d0, d1)).copy_from(c);
    let compression_residual = op_norm(&(a.rows(0, d0) - expect));
    let norm_excess = op_norm(&a) - mu;
    let last0 = if s0.rank == 0 { (0, d0) } else { (s0.prefix(trunc - 1), s0.rank) };
    let mut tail_profile = Vec::new();
    let n_levels1 = if s1.rank == 0 { 0 } else { trunc };
    for l in 0..=n_levels1 {
        let (off, len) = if l == 0 { (0, d1) } else { (s1.prefix(l - 1), s1.rank) };
        tail_profile.push(op_norm(&a.view((last0.0, off), (last0.1, len)).into_owned()));
    }
    Ok(CommutantLift {
        ctilde: a,
        intertwine_residual,
        compression_residual,
        norm_excess,
        tail_profile,
        v0: Some(s0),
        v1: Some(s1),
    })
}

/// Finite Hankel matrix H_{ij} = c_{i+j}. With a symbol supported below n,
/// H S₊ = S₊* H holds exactly for the n-truncated shift.
pub fn hankel(symbol: &[C64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| symbol.get(i + j).copied().unwrap_or(C64::new(0.0, 0.0)))
}

/// Splits a 2×2 block operator into (C₀, C, C₁), requiring a zero lower-left block.
pub fn split_upper_triangular(t: &Operator) -> Result<(Operator, CMatrix, Operator)> {
    let Structure::Block { row_dims } = &t.structure else {
        return Err(IsolabError::InvalidParameter("block operator [[C0, C], [0, C1]] expected".into()));
    };
    if row_dims.len() != 2 {
        return Err(IsolabError::InvalidParameter("two block rows expected".into()));
    }
    let (d0, d1) = (row_dims[0], row_dims[1]);
    let td = t.to_dense();
    if max_abs(&td.view((d0, 0), (d1, d0)).into_owned()) != 0.0 {
        return Err(IsolabError::InvalidParameter("lower-left block must be zero".into()));
    }
    Ok((
        Operator::dense(td.view((0, 0), (d0, d0)).into_owned())?,
        td.view((0, d0), (d0, d1)).into_owned(),
        Operator::dense(td.view((d0, d0), (d1, d1)).into_owned())?,
    ))
}

pub fn upper_triangular(c0: &CMatrix, c: &CMatrix, c1: &CMatrix) -> Result<Operator> {
    block_from_mats(&[
        vec![Some(Mat::Dense(c0.clone())), Some(Mat::Dense(c.clone()))],
        vec![None, Some(Mat::Dense(c1.clone()))],
    ])
}

/// The 3-isometric lifting S = [[V₀, C̃], [0, V₁]] = V + Q of
/// T = [[C₀, C], [0, C₁]], with Q² = 0 and VQ = QV.
pub fn foguel_hankel_lift(c0: &Operator, c: &CMatrix, c1: &Operator, trunc: usize) -> Result<LiftingCertificate> {
    let cl = commutant_lift(c, c0, c1, trunc)?;
    let (s0, s1) = (cl.v0.as_ref().expect("lift keeps V0"), cl.v1.as_ref().expect("lift keeps V1"));
    let (k0, k1) = (s0.v.dim(), s1.v.dim());
    let (d0, d1) = (s0.d, s1.d);
    let grid = vec![
        vec![Some(s0.v.mat.clone()), Some(Mat::Dense(cl.ctilde.clone()))],
        vec![None, Some(s1.v.mat.clone())],
    ];
    let mut s = block_from_mats(&grid)?;
    s.compression_exact = false;
    // K₁ coordinates lose exactness once C̃ leaks mass past the last level
    let leak = 1e-6 * (1.0 + op_norm(c));
    let cut = cl.tail_profile.iter().position(|&x| x > leak).unwrap_or(cl.tail_profile.len());
    let mut budgets = s0.v.budget_vec();
    let b1 = s1.v.budget_vec();
    for (i, b) in b1.iter().enumerate() {
        let level = if i < d1 { 0 } else { 1 + (i - d1) / s1.rank.max(1) };
        let room = cut.saturating_sub(level + 1);
        budgets.push((*b).min(room));
    }
    s.budgets = Some(budgets);
    let t = upper_triangular(&c0.to_dense(), c, &c1.to_dense())?;
    let w = EmbeddingMap::inclusion_blocks(k0 + k1, &[(0, d0), (k0, d1)])?;
    let n = k0 + k1;
    let mut q = zeros(n, n);
    q.view_mut((0, k0), (k0, k1)).copy_from(&cl.ctilde);
    let mut v = zeros(n, n);
    v.view_mut((0, 0), (k0, k0)).copy_from(&s0.v.to_dense());
    v.view_mut((k0, k0), (k1, k1)).copy_from(&s1.v.to_dense());
    let q2 = max_abs(&(&q * &q));
    let comm = &v * &q - &q * &v;
    let cols = s.interior(1);
    let comm_interior = op_norm(&CMatrix::from_fn(n, cols.len(), |i, j| comm[(i, cols[j])]));
    let defect = is_m_isometric(&s, 3, TOL_CL)?;
    let lifting = check_lifting(&s, &t, &w, TOL_CL)?;
    let checks = vec![
        Check::le("q_squared", q2, 0.0),
        Check::le("vq_minus_qv", comm_interior, TOL_CL),
        Check::le("ctilde_norm_excess", cl.norm_excess, TOL_CL),
        Check::le("compression_residual", cl.compression_residual, TOL_CL),
        Check::le("intertwine_residual", cl.intertwine_residual, TOL_CL),
        Check::ge("interior_nonempty", defect.interior_dim as f64, 1.0),
    ];
    Ok(LiftingCertificate {
        schema: SCHEMA,
        provenance: Provenance::FoguelHankelLifting,
        t,
        s,
        w,
        defect: Some(defect),
        relations: vec![lifting],
        checks,
        params: serde_json::json!({
            "trunc": trunc,
            "defect_ranks": [s0.rank, s1.rank],
            "tail_profile": cl.tail_profile,
            "exact_levels": cut,
        }),
    })
}

/// Minimal unitary extension U of the Schäffer lifting of a contraction T:
/// levels −N..−1 of D_{T*}, then H, then levels 1..N of D_T, coupled by
/// the rotation [[T, D_{T*}], [D_T, −T*]].
pub fn unitary_extension(t: &Operator, trunc: usize) -> Result<UnitaryExtension> {
    let td = t.to_dense();
    let d = td.nrows();
    let norm = op_norm(&td);
    if norm > 1.0 + 1e-9 {
        return Err(IsolabError::NotContraction { norm });
    }
    if trunc == 0 {
        return Err(IsolabError::InvalidParameter("truncation N must be positive".into()));
    }
    let e = factor_rows(&(identity(d) - td.adjoint() * &td))?;
    let f = factor_rows(&(identity(d) - &td * td.adjoint()))?;
    let (r, rs) = (e.nrows(), f.nrows());
    let neg = if rs == 0 { 0 } else { trunc };
    let pos = if r == 0 { 0 } else { trunc };
    let h0 = neg * rs;
    let n = h0 + d + pos * r;
    let mut u = zeros(n, n);
    u.view_mut((h0, h0), (d, d)).copy_from(&td);
    for l in 0..neg.saturating_sub(1) {
        for i in 0..rs {
            u[((l + 1) * rs + i, l * rs + i)] = real(1.0);
        }
    }
    let hp = h0 + d;
    for l in 0..pos.saturating_sub(1) {
        for i in 0..r {
            u[(hp + (l + 1) * r + i, hp + l * r + i)] = real(1.0);
        }
    }
    if rs > 0 {
        // D_{T*} in the coordinates of its range: F*
        u.view_mut((h0, h0 - rs), (d, rs)).copy_from(&f.adjoint());
    }
    if r > 0 {
        u.view_mut((hp, h0), (r, d)).copy_from(&e);
    }
    if r > 0 && rs > 0 {
        // −T* read from range D_{T*} into range D_T, in orthonormal coordinates
        let corner = -(orth_rows(&e)? * td.adjoint() * orth_rows(&f)?.adjoint());
        u.view_mut((hp, h0 - rs), (r, rs)).copy_from(&corner);
    }
    let budgets: Vec<usize> = if pos == 0 {
        vec![usize::MAX; n]
    } else {
        let mut b = Vec::with_capacity(n);
        for l in 0..neg {
            b.extend(std::iter::repeat_n(pos + neg - l, rs));
        }
        b.extend(std::iter::repeat_n(pos, d));
        for l in 1..=pos {
            b.extend(std::iter::repeat_n(pos - l, r));
        }
        b
    };
    let budgets = budgets.iter().any(|&b| b != usize::MAX).then_some(budgets);
    let mut op = Operator::from_mat(Mat::Dense(u), Structure::Dense, budgets)?;
    op.compression_exact = true;
    Ok(UnitaryExtension {
        u: op,
        h_offset: h0,
        first_level: rs.min(h0),
    })
}

#[derive(Debug, Clone)]
pub struct UnitaryExtension {
    pub u: Operator,
    /// Index of the first coordinate of H.
    pub h_offset: usize,
    /// Size of the lowest negative level, where U U* = I fails by truncation.
    pub first_level: usize,
}

/// Rows forming an orthonormal basis of the row space of a full-row-rank
/// factor E (E = Σ^{1/2} V*, so the rows of V* are recovered by scaling).
fn orth_rows(e: &CMatrix) -> Result<CMatrix> {
    let g = symmetrize(&(e * e.adjoint()));
    let inv = crate::numerics::pinv_sqrt(&g, 0.0)?;
    Ok(inv * e)
}

/// S̃ = [[U, U], [0, U]] as a power dilation of T̃ = [[T, T], [0, T]].
pub fn unitary_extension_dilation(t: &Operator, trunc: usize, n_max: usize) -> Result<LiftingCertificate> {
    let ext = unitary_extension(t, trunc)?;
    let (u, h0) = (&ext.u, ext.h_offset);
    let d = t.dim();
    let n = u.dim();
    let ud = u.to_dense();
    let mut st = zeros(2 * n, 2 * n);
    st.view_mut((0, 0), (n, n)).copy_from(&ud);
    st.view_mut((0, n), (n, n)).copy_from(&ud);
    st.view_mut((n, n), (n, n)).copy_from(&ud);
    let budgets = u.budgets.clone().map(|b| [b.clone(), b].concat());
    let mut s = Operator::from_mat(Mat::Dense(st), Structure::Block { row_dims: vec![n, n] }, budgets)?;
    s.compression_exact = true;
    let td = t.to_dense();
    let tt = upper_triangular(&td, &td, &td)?;
    let w = EmbeddingMap::inclusion_blocks(2 * n, &[(h0, d), (n + h0, d)])?;
    let dilation = check_dilation(&s, &tt, &w, n_max, 1e-10)?;
    let uu = ud.adjoint() * &ud - identity(n);
    let ut = &ud * ud.adjoint() - identity(n);
    let top = u.interior(1);
    let bottom: Vec<usize> = (ext.first_level..n).collect();
    let pick = |m: &CMatrix, idx: &[usize]| op_norm(&CMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]));
    let defect = is_m_isometric(&s, 3, 1e-8)?;
    Ok(LiftingCertificate {
        schema: SCHEMA,
        provenance: Provenance::UnitaryExtensionDilation,
        t: tt,
        s,
        w,
        defect: Some(defect),
        relations: vec![dilation],
        checks: vec![
            Check::le("u_star_u", pick(&uu, &top), 1e-10),
            Check::le("u_u_star", pick(&ut, &bottom), 1e-10),
        ],
        params: serde_json::json!({ "trunc": trunc, "h_offset": h0 }),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport {
    pub n_max: usize,
    /// ‖T̃ⁿ‖ / n for n = 1..=n_max, T̃ = [[T, I − T], [0, T]]
    pub tilde_over_n: Vec<f64>,
    /// ‖Tⁿ⁺¹ − Tⁿ‖ for n = 0..n_max
    pub differences: Vec<f64>,
    pub tilde_over_n_vanishing: bool,
    pub differences_vanishing: bool,
    /// (re, im) of the eigenvalues of T
    pub eigenvalues: Vec<(f64, f64)>,
    /// Every eigenvalue in the open disk or equal to 1.
    pub spectrum_disk_or_one: bool,
}

fn vanishing(seq: &[f64]) -> bool {
    let Some(&last) = seq.last() else {
        return true;
    };
    let peak = seq.iter().copied().fold(0.0, f64::max);
    last <= 1e-12 || last <= 0.1 * peak
}

pub fn ergodic_diagnostic(t: &Operator, n_max: usize) -> Result<ErgodicReport> {
    let td = t.to_dense();
    let d = td.nrows();
    let tt = upper_triangular(&td, &(identity(d) - &td), &td)?.to_dense();
    let mut p = identity(2 * d);
    let mut tilde_over_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        p = &tt * p;
        tilde_over_n.push(op_norm(&p) / n as f64);
    }
    let mut tn = identity(d);
    let mut differences = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let next = &td * &tn;
        differences.push(op_norm(&(&next - &tn)));
        tn = next;
    }
    let tri = td.clone().schur().unpack().1;
    let eigenvalues: Vec<(f64, f64)> = (0..d).map(|i| (tri[(i, i)].re, tri[(i, i)].im)).collect();
    let spectrum_disk_or_one = eigenvalues.iter().all(|&(re, im)| {
        let z = C64::new(re, im);
        z.norm() < 1.0 - 1e-9 || (z - 1.0).norm() <= 1e-9
    });
    Ok(ErgodicReport {
        n_max,
        tilde_over_n_vanishing: vanishing(&tilde_over_n),
        differences_vanishing: vanishing(&differences),
        tilde_over_n,
        differences,
        eigenvalues,
        spectrum_disk_or_one,
    })
}
