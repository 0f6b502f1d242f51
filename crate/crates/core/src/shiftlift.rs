//! Weighted-shift liftings of operators with polynomially growing powers,
//! and the invertible bilateral-shift dilation.
//!
//! For T with ‖T^n‖ ≤ K n^{m/2}, the forward shift S with weights
//! α_s = ((2Ks+1)/(2K(s−1)+1))^{p/2}, p = m+2, is an (m+3)-isometry and
//! W h = (b_s^{1/2} M^{1/2} T^{*s} h)_s, b_s = (2Ks+1)^{−p}, satisfies
//! S* W = W T*, where M solves M + Σ_{s≥1} b_s T^s M T^{*s} = I.
//!
//! The truncated shift is closed off by one extra block of coordinates
//! spanned by the tail (levels ≥ N) of the range of W. That subspace is
//! co-invariant for S, so the truncated lifting is exact rather than
//! approximate. The infinite sums are evaluated by quadrature over a
//! Laplace representation of (2Ks+1)^{−p}.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::certificate::{Check, LiftingCertificate, Provenance};
use crate::defect::{growth_constant, is_m_isometric, power_norms};
use crate::error::{IsolabError, Result};
use crate::numerics::{
    herm_eig, identity, kron, lambda_min, max_abs, op_norm, psd_sqrt_auto, symmetrize, vstack, zeros,
    CMatrix,
};
use crate::opcore::{
    analyticity, attach_closure, check_dilation, check_lifting, lifting_residual, make_weighted_shift,
    Analyticity, Closure, EmbeddingMap, Operator, ShiftKind, TOL_EMBED,
};
use crate::serial::SCHEMA;

pub const DEFAULT_TRUNC: usize = 256;
/// Powers checked by the dilation relation in certificates.
pub const DEFAULT_DILATION_POWERS: usize = 8;

/// α_s for s = 1..=n.
pub fn lift_weights(k: f64, p: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|s| {
            let s = s as f64;
            ((2.0 * k * s + 1.0) / (2.0 * k * (s - 1.0) + 1.0)).powf(p / 2.0)
        })
        .collect()
}

/// b_s = (2Ks+1)^{−p} for s = 0..=n.
pub fn lift_b(k: f64, p: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|s| (2.0 * k * s as f64 + 1.0).powf(-p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftLiftPlan {
    pub m: u32,
    pub exponent: f64,
    pub k: f64,
    pub n_max: usize,
    pub trunc: usize,
    /// α_1..α_N
    pub weights: Vec<f64>,
    /// b_0..b_N
    pub b: Vec<f64>,
    /// Σ_{s=1}^{N} b_s ‖T^s‖²
    pub q: f64,
    /// K² Σ_{s>N} s^m (2Ks+1)^{−p}, bounded by an integral.
    pub tail_bound: f64,
}

impl ShiftLiftPlan {
    pub fn margin(&self) -> f64 {
        self.q + self.tail_bound
    }
}

pub fn plan_shift_lift(t: &Operator, m: u32, trunc: usize, n_max: usize) -> Result<ShiftLiftPlan> {
    plan_with_exponent(t, m, (m + 2) as f64, trunc, n_max)
}

pub fn plan_with_exponent(t: &Operator, m: u32, p: f64, trunc: usize, n_max: usize) -> Result<ShiftLiftPlan> {
    if trunc == 0 {
        return Err(IsolabError::InvalidParameter("truncation N must be positive".into()));
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(IsolabError::InvalidParameter(format!("exponent {p} must be positive")));
    }
    let growth = growth_constant(t, m, n_max)?;
    if growth.diverging {
        return Err(IsolabError::DivergingGrowth { m });
    }
    let k = growth.k;
    let b = lift_b(k, p, trunc);
    let norms = power_norms(t, trunc)?;
    let q = if norms.len() < trunc {
        f64::INFINITY
    } else {
        norms.iter().enumerate().map(|(i, v)| b[i + 1] * v * v).sum()
    };
    let gap = p - m as f64 - 1.0;
    let tail_bound = if gap > 0.0 {
        k * k * (2.0 * k).powf(-p) * (trunc as f64).powf(-gap) / gap
    } else {
        f64::INFINITY
    };
    Ok(ShiftLiftPlan {
        m,
        exponent: p,
        k,
        n_max,
        trunc,
        weights: lift_weights(k, p, trunc),
        b,
        q,
        tail_bound,
    })
}

/// Σ_{s≥n} (2Ks+1)^{−p} A^s for a square A of spectral radius ≤ 1.
///
/// Uses (2Ks+1)^{−p} = Γ(p)^{−1} ∫ t^{p−1} e^{−(2Ks+1)t} dt, which turns the
/// sum into ∫ t^{p−1} e^{−t} r^n (I − rA)^{−1} A^n dt with r = e^{−2Kt}, and
/// the trapezoidal rule in u = ln t.
pub fn power_series_tail(a: &CMatrix, n: usize, k: f64, p: f64) -> Result<CMatrix> {
    let dim = a.nrows();
    let an = crate::numerics::mat_pow(a, n);
    let i_minus_a = identity(dim) - a;
    let rate = 1.0 + 2.0 * k * n as f64;
    // the omitted piece near 0 is O(t_lo^{p-1}/K); below this 1 - r drowns in roundoff
    let (u_lo, u_hi) = ((1e-14 / (2.0 * k)).ln(), (42.0 / rate).ln());
    let h = 0.1;
    let steps = ((u_hi - u_lo) / h).ceil() as usize;
    let h = (u_hi - u_lo) / steps as f64;
    let norm = 1.0 / gamma(p);
    let mut acc = zeros(dim, dim);
    for i in 0..=steps {
        let u = u_lo + h * i as f64;
        let t = u.exp();
        let one_minus_r = -(-2.0 * k * t).exp_m1();
        let r = 1.0 - one_minus_r;
        let resolvent = identity(dim).scale(one_minus_r) + i_minus_a.scale(r);
        let x = resolvent
            .lu()
            .solve(&an)
            .ok_or_else(|| IsolabError::Infeasible("singular resolvent in tail series".into()))?;
        let endpoint = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let wgt = endpoint * h * norm * (p * u - rate * t).exp();
        acc += x.scale(wgt);
    }
    Ok(acc)
}

fn vec_of(x: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(x.len(), 1, x.as_slice())
}

fn unvec(v: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

#[derive(Debug, Clone)]
pub struct EmbeddingSolution {
    pub m: CMatrix,
    /// Σ_{s≥N} b_s T^s M T^{*s}
    pub tail_gram: CMatrix,
    /// Rows: levels 0..N−1, then the tail block.
    pub map: CMatrix,
    pub closure: Closure,
    pub iterations: usize,
    pub fixed_point_residual: f64,
    /// ‖M_neumann − M_direct‖ against a direct d²-dimensional solve.
    pub direct_solve_gap: f64,
    pub lambda_min_m: f64,
    /// (1−2q)/(1−q)
    pub margin_bound: f64,
    pub tail_rank: usize,
}

/// M by Neumann iteration, then W and the tail closure of the shift.
pub fn solve_embedding(t: &Operator, plan: &ShiftLiftPlan, tol: f64) -> Result<EmbeddingSolution> {
    let q = plan.margin();
    if !(q < 0.5) {
        return Err(IsolabError::EmbeddingMargin { q });
    }
    let td = t.to_dense();
    let d = td.nrows();
    let n = plan.trunc;
    let a = kron(&td.map(|z| z.conj()), &td);
    let mut head = zeros(d * d, d * d);
    let mut pow = identity(d * d);
    for s in 1..n {
        pow = &a * pow;
        head += pow.scale(plan.b[s]);
    }
    let tail = power_series_tail(&a, n, plan.k, plan.exponent)?;
    let big_b = &head + &tail;
    let e = vec_of(&identity(d));
    let mut x = e.clone();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < 10_000 {
        let next = &e - &big_b * &x;
        change = max_abs(&(&next - &x));
        x = next;
        iterations += 1;
        if change <= 1e-15 {
            break;
        }
    }
    if change > tol {
        return Err(IsolabError::NoConvergence {
            iterations,
            last_change: change,
        });
    }
    let m = symmetrize(&unvec(&x, d));
    let direct = (identity(d * d) + &big_b)
        .lu()
        .solve(&e)
        .ok_or_else(|| IsolabError::Infeasible("singular embedding system".into()))?;
    let direct_solve_gap = max_abs(&(unvec(&direct, d) - &m));
    let fixed_point_residual = op_norm(&(&m + unvec(&(&big_b * vec_of(&m)), d) - identity(d)));
    let lambda_min_m = lambda_min(&m)?;
    let qq = plan.q;
    let margin_bound = (1.0 - 2.0 * qq) / (1.0 - qq);

    let g = symmetrize(&unvec(&(&tail * vec_of(&m)), d));
    let ge = herm_eig(&g)?;
    let cut = 1e-14 * ge.lambda_max().max(0.0) + f64::MIN_POSITIVE;
    let r = ge.apply_fn(|x| if x > cut { x.sqrt() } else { 0.0 });
    let r_pinv = ge.apply_fn(|x| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
    let tail_rank = ge.eigenvalues.iter().filter(|&&x| x > cut).count();

    let m_half = psd_sqrt_auto(&m)?;
    let t_adj = td.adjoint();
    let mut rows = Vec::with_capacity(n + 1);
    let mut ts = identity(d);
    for s in 0..n {
        if s > 0 {
            ts = &t_adj * ts;
        }
        rows.push((&m_half * &ts).scale(plan.b[s].sqrt()));
    }
    rows.push(r.clone());
    let refs: Vec<&CMatrix> = rows.iter().collect();
    let map = vstack(&refs)?;

    let t_n = crate::numerics::mat_pow(&td, n);
    let feed = (&r_pinv * t_n * &m_half).scale(plan.b[n - 1].sqrt());
    let tail_block = &r_pinv * &td * &r;
    Ok(EmbeddingSolution {
        m,
        tail_gram: g,
        map,
        closure: Closure {
            feed,
            tail: tail_block,
        },
        iterations,
        fixed_point_residual,
        direct_solve_gap,
        lambda_min_m,
        margin_bound,
        tail_rank,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub iterations: usize,
    pub fixed_point_residual: f64,
    pub direct_solve_gap: f64,
    pub lambda_min_m: f64,
    pub margin_bound: f64,
    pub tail_rank: usize,
}

impl From<&EmbeddingSolution> for EmbeddingStats {
    fn from(e: &EmbeddingSolution) -> Self {
        EmbeddingStats {
            iterations: e.iterations,
            fixed_point_residual: e.fixed_point_residual,
            direct_solve_gap: e.direct_solve_gap,
            lambda_min_m: e.lambda_min_m,
            margin_bound: e.margin_bound,
            tail_rank: e.tail_rank,
        }
    }
}

/// Default defect tolerance for a shift whose weight products over
/// `order` steps reach `scale`: roundoff grows with the largest term.
pub fn shift_defect_tol(weights: &[f64], order: u32) -> f64 {
    let o = order as usize;
    let mut worst: f64 = 1.0;
    for l in 0..weights.len().saturating_sub(o) {
        let mut prod = 1.0;
        let mut total = 1.0;
        for j in 1..=o {
            prod *= weights[l + j - 1] * weights[l + j - 1];
            total += crate::defect::binomial(order, j as u32) * prod;
        }
        worst = worst.max(total);
    }
    1e-9 + 1e-13 * worst
}

/// The (m+3)-isometric weighted-shift lifting of T.
pub fn build_shift_lift(t: &Operator, m: u32, trunc: usize, n_max: usize) -> Result<LiftingCertificate> {
    let plan = plan_shift_lift(t, m, trunc, n_max)?;
    build_from_plan(t, &plan)
}

fn build_from_plan(t: &Operator, plan: &ShiftLiftPlan) -> Result<LiftingCertificate> {
    let d = t.dim();
    let sol = solve_embedding(t, plan, TOL_EMBED)?;
    let s = make_weighted_shift(&plan.weights, plan.trunc, d, ShiftKind::Unilateral)?;
    let s = attach_closure(&s, sol.closure.clone())?;
    let mut w = EmbeddingMap::new(sol.map.clone())?;
    w.intertwine_residual = lifting_residual(&s, t, &w)?;
    let order = plan.m + 3;
    let defect = is_m_isometric(&s, order, shift_defect_tol(&plan.weights, order))?;
    let lifting = check_lifting(&s, t, &w, TOL_EMBED)?;
    let dilation = check_dilation(&s, t, &w, DEFAULT_DILATION_POWERS, TOL_EMBED)?;
    let min_weight = plan.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let analytic = matches!(analyticity(&s), Analyticity::Structural { .. });
    let mut checks = vec![
        Check::le("embedding_isometry", w.iso_residual, TOL_EMBED),
        Check::ge("min_weight", min_weight, 1.0),
        Check::ge(
            "lambda_min_m_over_margin",
            sol.lambda_min_m - sol.margin_bound,
            -1e-9,
        ),
        Check::flag("analytic_structural", analytic),
    ];
    if plan.exponent == (plan.m + 2) as f64 {
        checks.push(Check::le(
            "series_bound",
            plan.margin(),
            std::f64::consts::PI.powi(2) / 24.0 + 1e-9,
        ));
    }
    Ok(LiftingCertificate {
        schema: SCHEMA,
        provenance: Provenance::WeightedShiftLifting,
        t: t.clone(),
        s,
        w,
        defect: Some(defect),
        relations: vec![lifting, dilation],
        checks,
        params: serde_json::json!({
            "plan": plan,
            "embedding": EmbeddingStats::from(&sol),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilateralPlan {
    pub m: u32,
    pub k: f64,
    pub exponent_used: f64,
    pub trunc: usize,
    /// w_n for n = −N..=N
    pub w: Vec<f64>,
    /// sqrt(w_{n+1}/w_n) for n = −N..N−1
    pub weights: Vec<f64>,
    pub min_weight: f64,
}

/// w_n = (2Kn+1)^p. Negative bases need an even integer exponent.
pub fn bilateral_weights(k: f64, p: f64, trunc: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = trunc as i64;
    let even = p.fract() == 0.0 && (p as i64) % 2 == 0;
    let mut w = Vec::with_capacity(2 * trunc + 1);
    if !even {
        if let Some(idx) = (-n..0).rev().find(|&i| 2.0 * k * i as f64 + 1.0 <= 0.0) {
            return Err(IsolabError::NonpositiveWeight { index: idx });
        }
    }
    for idx in -n..=n {
        w.push((2.0 * k * idx as f64 + 1.0).abs().powf(p));
    }
    let ratios: Vec<f64> = (0..2 * trunc).map(|i| (w[i + 1] / w[i]).sqrt()).collect();
    if let Some(i) = ratios.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(IsolabError::NonpositiveWeight {
            index: i as i64 - n,
        });
    }
    Ok((w, ratios))
}

/// Bilateral shift on indices −N..N−1 whose nonnegative half is the
/// lifting shift, closed off the same way.
pub fn build_bilateral_dilation(
    t: &Operator,
    m: u32,
    trunc: usize,
    exponent_used: Option<f64>,
    n_max: usize,
    powers: usize,
) -> Result<LiftingCertificate> {
    let p = exponent_used.unwrap_or((m + 2) as f64);
    let plan = plan_with_exponent(t, m, p, trunc, n_max)?;
    let (w_list, weights) = bilateral_weights(plan.k, p, trunc)?;
    let sol = solve_embedding(t, &plan, TOL_EMBED)?;
    let d = t.dim();
    let s = make_weighted_shift(&weights, trunc, d, ShiftKind::Bilateral)?;
    let s = attach_closure(&s, sol.closure.clone())?;
    let offset = trunc * d;
    let mut map = zeros(s.dim(), d);
    map.view_mut((offset, 0), (trunc * d, d))
        .copy_from(&sol.map.rows(0, trunc * d));
    map.view_mut((2 * trunc * d, 0), (d, d))
        .copy_from(&sol.map.rows(trunc * d, d));
    let w = EmbeddingMap::new(map)?;
    let dilation = check_dilation(&s, t, &w, powers, TOL_EMBED)?;
    let min_weight = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let order = (p.round() as u32) + 1;
    let defect = if p.fract() == 0.0 {
        Some(is_m_isometric(&s, order, shift_defect_tol(&weights, order))?)
    } else {
        None
    };
    let bplan = BilateralPlan {
        m,
        k: plan.k,
        exponent_used: p,
        trunc,
        w: w_list,
        weights: weights.clone(),
        min_weight,
    };
    Ok(LiftingCertificate {
        schema: SCHEMA,
        provenance: Provenance::BilateralShiftDilation,
        t: t.clone(),
        s,
        w,
        defect,
        relations: vec![dilation],
        checks: vec![
            Check::ge("min_weight_positive", min_weight, f64::MIN_POSITIVE),
            Check::le("embedding_isometry", EmbeddingMap::new(sol.map.clone())?.iso_residual, TOL_EMBED),
        ],
        params: serde_json::json!({
            "plan": bplan,
            "series": plan,
            "embedding": EmbeddingStats::from(&sol),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCheck {
    pub exponent: f64,
    pub k: f64,
    pub truncations: Vec<usize>,
    /// Σ_{s=1}^{N} (2Ks+1)^{−p} ‖T^s‖² at each truncation.
    pub partial_sums: Vec<f64>,
    /// Partial sums reach the embedding margin 1/2 or keep growing.
    pub flagged: bool,
}

/// Partial sums of the embedding series for a given weight exponent.
pub fn series_check(t: &Operator, k: f64, p: f64, truncations: &[usize]) -> Result<SeriesCheck> {
    let top = truncations.iter().copied().max().unwrap_or(0);
    let norms = power_norms(t, top)?;
    let mut partial = Vec::with_capacity(truncations.len());
    for &n in truncations {
        let s: f64 = (1..=n.min(norms.len()))
            .map(|s| (2.0 * k * s as f64 + 1.0).powf(-p) * norms[s - 1] * norms[s - 1])
            .sum();
        partial.push(if n > norms.len() { f64::INFINITY } else { s });
    }
    let growing = partial.windows(2).last().is_some_and(|w| w[1] > 1.01 * w[0]);
    let flagged = partial.iter().any(|&x| !(x < 0.5)) || growing;
    Ok(SeriesCheck {
        exponent: p,
        k,
        truncations: truncations.to_vec(),
        partial_sums: partial,
        flagged,
    })
}

/// ‖S^n e_0‖² from the weights, n = 0..N−1.
pub fn orbit_norms_sq(weights: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 1.0;
    out.push(acc);
    for s in 1..n {
        acc *= weights[s - 1] * weights[s - 1];
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::random::{random_contraction, random_power_bounded};
    use crate::numerics::{c64, diag_real, from_real_rows, C64};
    use crate::opcore::Relation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_tail(a: C64, n: usize, k: f64, p: f64, terms: usize) -> C64 {
        (n..n + terms)
            .map(|s| a.powu(s as u32) * (2.0 * k * s as f64 + 1.0).powf(-p))
            .sum()
    }

    #[test]
    fn tail_series_scalar_decaying() {
        for (a, k, p, n) in [
            (c64(0.9 * 0.7f64.cos(), 0.9 * 0.7f64.sin()), 1.0, 2.0, 16),
            (c64(0.5, 0.0), 2.5, 3.0, 5),
            (c64(-0.95, 0.0), 1.3, 4.0, 64),
        ] {
            let got = power_series_tail(&CMatrix::from_element(1, 1, a), n, k, p).unwrap()[(0, 0)];
            let want = brute_tail(a, n, k, p, 4000);
            assert!((got - want).norm() < 1e-13 * want.norm().max(1e-3), "{got} vs {want}");
        }
    }

    #[test]
    fn tail_series_on_unit_circle() {
        // a = 1: Euler-Maclaurin reference for Σ_{s≥n} (2Ks+1)^{-2}
        let (k, n) = (1.0, 10);
        let cut = 200_000usize;
        let direct: f64 = (n..cut).rev().map(|s| (2.0 * k * s as f64 + 1.0).powi(-2)).sum();
        let x = 2.0 * k * cut as f64 + 1.0;
        let em = 1.0 / (2.0 * k * x) + 0.5 * x.powi(-2) + 4.0 * k / 12.0 * x.powi(-3);
        let want = direct + em;
        let got = power_series_tail(&CMatrix::from_element(1, 1, c64(1.0, 0.0)), n, k, 2.0).unwrap()[(0, 0)];
        assert!((got.re - want).abs() < 1e-12 * want, "{} vs {}", got.re, want);
        // a = e^{iθ}: alternating-type partial sums averaged over a period
        let a = c64(0.0, 1.0);
        let got = power_series_tail(&CMatrix::from_element(1, 1, a), 8, 1.0, 3.0).unwrap()[(0, 0)];
        let want = brute_tail(a, 8, 1.0, 3.0, 400_000);
        assert!((got - want).norm() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn tail_series_matrix_matches_brute_force() {
        let a = CMatrix::from_fn(2, 2, |i, j| c64(0.4 * (i as f64 - j as f64) + 0.3, 0.2 * j as f64));
        let got = power_series_tail(&a, 12, 1.7, 2.0).unwrap();
        let mut want = zeros(2, 2);
        let mut pw = crate::numerics::mat_pow(&a, 12);
        for s in 12..3000 {
            want += pw.scale((2.0 * 1.7 * s as f64 + 1.0).powi(-2));
            pw = &a * pw;
        }
        assert!(max_abs(&(got - want)) < 1e-13);
    }

    #[test]
    fn weights_at_k1_m0() {
        let w = lift_weights(1.0, 2.0, 4);
        for (got, want) in w.iter().zip([3.0, 5.0 / 3.0, 7.0 / 5.0, 9.0 / 7.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(w.windows(2).all(|p| p[0] >= p[1] && p[1] >= 1.0));
    }

    #[test]
    fn orbit_norms_follow_weight_law() {
        for k in [1.0, 2.0, 5.5] {
            for m in 0..3u32 {
                let p = (m + 2) as f64;
                let w = lift_weights(k, p, 64);
                let s = make_weighted_shift(&w, 64, 1, ShiftKind::Unilateral).unwrap();
                let mut e = zeros(64, 1);
                e[(0, 0)] = c64(1.0, 0.0);
                for n in 0..64 {
                    let got = s.apply_power(&e, n).unwrap().norm_squared();
                    let want = (2.0 * k * n as f64 + 1.0).powf(p);
                    assert!((got - want).abs() <= 1e-12 * want);
                }
            }
        }
    }

    #[test]
    fn zero_operator_embeds_at_level_zero() {
        let t = Operator::dense(zeros(2, 2)).unwrap();
        let plan = plan_shift_lift(&t, 0, 16, 50).unwrap();
        let sol = solve_embedding(&t, &plan, 1e-10).unwrap();
        assert!(max_abs(&(&sol.m - identity(2))) < 1e-15);
        let mut expect = zeros(sol.map.nrows(), 2);
        expect[(0, 0)] = c64(1.0, 0.0);
        expect[(1, 1)] = c64(1.0, 0.0);
        assert!(max_abs(&(&sol.map - expect)) < 1e-15);
    }

    #[test]
    fn half_identity_against_direct_solve() {
        let t = real_diag(&[0.5, 0.5]);
        let plan = plan_shift_lift(&t, 0, 32, 50).unwrap();
        let sol = solve_embedding(&t, &plan, 1e-12).unwrap();
        assert!(sol.direct_solve_gap < 1e-13);
        assert!(sol.fixed_point_residual < 1e-13);
        // scalar oracle: M = 1 / (1 + Σ_{s≥1} b_s 4^{-s})
        let sum: f64 = (1..200).map(|s| (2.0 * plan.k * s as f64 + 1.0).powi(-2) * 0.25f64.powi(s)).sum();
        assert!((sol.m[(0, 0)].re - 1.0 / (1.0 + sum)).abs() < 1e-14);
        let cert = build_shift_lift(&t, 0, 32, 50).unwrap();
        assert!(cert.w.iso_residual < 1e-10);
        assert!(cert.w.intertwine_residual < 1e-10);
    }

    fn real_diag(d: &[f64]) -> Operator {
        Operator::dense(diag_real(d)).unwrap()
    }

    #[test]
    fn random_contraction_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = Operator::dense(random_contraction(&mut rng, 4, 0.95)).unwrap();
        let plan = plan_shift_lift(&t, 0, 64, 200).unwrap();
        let sol = solve_embedding(&t, &plan, 1e-12).unwrap();
        assert!(sol.lambda_min_m >= sol.margin_bound - 1e-9);
    }

    #[test]
    fn lifting_certificate_power_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = Operator::dense(random_power_bounded(&mut rng, 3, 2.0)).unwrap();
        let cert = build_shift_lift(&t, 0, 64, 200).unwrap();
        let d = cert.defect.as_ref().unwrap();
        assert!(d.defect_norm_interior < 1e-9, "{d:?}");
        let lift = cert.relation(Relation::Lifting).unwrap();
        assert!(lift.residuals[0] < 1e-9, "{lift:?}");
        let dil = cert.relation(Relation::Dilation).unwrap();
        assert!(dil.max_residual() < 1e-9, "{dil:?}");
        assert!(cert.verdict(), "{:?}", cert.checks);
    }

    #[test]
    fn isometry_still_gets_weighted_shift() {
        let t = Operator::dense(from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let cert = build_shift_lift(&t, 0, 32, 100).unwrap();
        assert!(cert.verdict());
        assert!((cert.params["plan"]["k"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jordan_gets_five_isometric_lifting() {
        let t = Operator::dense(from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]])).unwrap();
        let cert = build_shift_lift(&t, 2, 64, 200).unwrap();
        let d = cert.defect.as_ref().unwrap();
        assert_eq!(d.order, 5);
        assert!(d.verdict, "{d:?}");
        assert!(cert.verdict(), "{:?} {:?}", cert.checks, cert.relations);
    }

    #[test]
    fn diverging_growth_refused() {
        let t = Operator::dense(from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]])).unwrap();
        assert!(matches!(plan_shift_lift(&t, 0, 16, 200), Err(IsolabError::DivergingGrowth { m: 0 })));
    }

    #[test]
    fn bilateral_dilation_and_restriction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = Operator::dense(random_power_bounded(&mut rng, 2, 1.5)).unwrap();
        let cert = build_bilateral_dilation(&t, 0, 32, None, 200, 8).unwrap();
        assert!(cert.verdict(), "{:?} {:?} {:?}", cert.checks, cert.relations, cert.defect);
        assert!(cert.relations[0].residuals[0] < 1e-12);
        let uni = build_shift_lift(&t, 0, 32, 200).unwrap();
        let (sb, su) = (cert.s.to_dense(), uni.s.to_dense());
        let (n, d) = (32, 2);
        let nonneg: Vec<usize> = (n * d..2 * n * d).collect();
        let head: Vec<usize> = (0..n * d).collect();
        let pick = |a: &CMatrix, r: &[usize]| CMatrix::from_fn(r.len(), r.len(), |i, j| a[(r[i], r[j])]);
        assert!(max_abs(&(pick(&sb, &nonneg) - pick(&su, &head))) < 1e-13);
    }

    #[test]
    fn odd_exponent_rejected() {
        let t = real_diag(&[0.5]);
        let r = build_bilateral_dilation(&t, 1, 16, None, 50, 4);
        assert!(matches!(r, Err(IsolabError::NonpositiveWeight { index: -1 })), "{:?}", r.err());
    }

    #[test]
    fn literal_exponent_series_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Operator::dense(random_power_bounded(&mut rng, 2, 1.5)).unwrap();
        let k = growth_constant(&t, 0, 200).unwrap().k;
        let lit = series_check(&t, k, 0.0, &[64, 128, 256]).unwrap();
        assert!(lit.flagged);
        assert!(lit.partial_sums.windows(2).all(|w| w[1] > w[0]));
        let ok = series_check(&t, k, 2.0, &[64, 128, 256]).unwrap();
        assert!(!ok.flagged);
        assert!(matches!(
            build_bilateral_dilation(&t, 0, 16, Some(0.0), 200, 4),
            Err(IsolabError::EmbeddingMargin { .. }) | Err(IsolabError::InvalidParameter(_))
        ));
    }
}
