//! Seeded random test matrices.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{c64, diag_real, op_norm, CMatrix};

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c64(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar unitary: QR of a complex Gaussian with the phases of R divided out.
pub fn random_unitary(rng: &mut impl Rng, d: usize) -> CMatrix {
    let qr = gaussian(rng, d, d).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { c64(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Gaussian matrix rescaled to operator norm `norm`.
pub fn random_contraction(rng: &mut impl Rng, d: usize, norm: f64) -> CMatrix {
    let g = gaussian(rng, d, d);
    let n = op_norm(&g);
    g.scale(norm / n)
}

/// D U D^{-1} with U unitary and D positive diagonal with entries in [1, cond).
pub fn random_power_bounded(rng: &mut impl Rng, d: usize, cond: f64) -> CMatrix {
    let u = random_unitary(rng, d);
    let dv: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { rng.random_range(1.0..cond) }).collect();
    let inv: Vec<f64> = dv.iter().map(|x| 1.0 / x).collect();
    diag_real(&dv) * u * diag_real(&inv)
}
