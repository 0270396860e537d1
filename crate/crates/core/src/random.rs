//! Seeded samplers for unitaries, states, channels and generators.
//!
//! Used by the property tests and the randomized canonical-form extraction;
//! exposed so downstream tests can draw the same families.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::numerics::{c, full_svd, hermitian_part, CMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for trial `index` of a run seeded by `seed`.
pub fn trial_rng(seed: u64, index: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    c(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
    hermitian_part(&ginibre(n, n, rng))
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn haar_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let g = ginibre(n, n, rng);
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        let scaled = q.column(j) * phase;
        q.set_column(j, &scaled);
    }
    q
}

/// Haar isometry `C^cols → C^rows` (`rows ≥ cols`).
pub fn haar_isometry(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    let u = haar_unitary(rows, rng);
    u.columns(0, cols).into_owned()
}

/// Full-rank density matrix whose eigenvalues are bounded below by
/// `floor / n`.
pub fn random_density(n: usize, floor: f64, rng: &mut impl Rng) -> CMatrix {
    let g = ginibre(n, n, rng);
    let mut rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho /= c(tr, 0.0);
    let mix = CMatrix::identity(n, n) / c(n as f64, 0.0);
    rho.scale(1.0 - floor) + mix.scale(floor)
}

/// Kraus operators of a random CPTP channel on `C^dim` with `count` Kraus
/// operators, obtained by slicing a Haar isometry `C^dim → C^{count·dim}`.
pub fn random_cptp_kraus(dim: usize, count: usize, rng: &mut impl Rng) -> Vec<CMatrix> {
    let v = haar_isometry(dim * count, dim, rng);
    (0..count)
        .map(|k| v.view((k * dim, 0), (dim, dim)).into_owned())
        .collect()
}

/// Random matrix scaled to Frobenius norm `norm`.
pub fn random_with_norm(rows: usize, cols: usize, norm: f64, rng: &mut impl Rng) -> CMatrix {
    let g = ginibre(rows, cols, rng);
    let f = g.norm();
    if f == 0.0 {
        return g;
    }
    g.scale(norm / f)
}

/// Smallest singular value, used by samplers to reject near-degenerate draws.
pub fn min_singular_value(m: &CMatrix) -> f64 {
    full_svd(m).singular_values.last().copied().unwrap_or(0.0)
}
