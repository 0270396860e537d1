//! Projector channels (`P∘P = P`): block canonical form, reconstruction from
//! block data, and a Lindblad generator whose long-time limit is `P`.
//!
//! A canonical form stores a unitary `U` whose leading `d0` columns span the
//! part of the space the fixed points do not see, followed by one group of
//! `D_k·m_k` columns per block. Inside a block the columns are ordered as the
//! product basis `|a⟩⊗|b⟩` (`a < D_k`, `b < m_k`), column `a·m_k + b`, and
//! the fixed points there are exactly `x ⊗ σ_k`.

use rand::Rng;
use serde::Serialize;

use crate::channels::{is_projector_channel, validate_density, vectorize, SuperOp};
use crate::error::{Error, Result};
use crate::lindblad::{channel_at, Lindblad};
use crate::numerics::{
    approx_eq, conj, fro_norm, full_svd, hermitian_eigen, hermitian_part, identity, kron,
    psd_sqrt_pair, range_basis, rank, re, sparse_product, CMatrix, CVector, C64,
};
use crate::random;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub dk: usize,
    pub mk: usize,
    pub sigma: CMatrix,
}

#[derive(Clone, Debug)]
pub struct ProjectorCanonicalForm {
    pub dim: usize,
    pub basis_change: CMatrix,
    pub d0: usize,
    pub blocks: Vec<Block>,
}

impl ProjectorCanonicalForm {
    pub fn new(basis_change: CMatrix, d0: usize, blocks: Vec<Block>) -> Result<Self> {
        let cf = Self {
            dim: basis_change.nrows(),
            basis_change,
            d0,
            blocks,
        };
        cf.validate()?;
        Ok(cf)
    }

    /// Canonical form with `U = I`.
    pub fn standard(d0: usize, blocks: Vec<Block>) -> Result<Self> {
        let dim = d0 + blocks.iter().map(|b| b.dk * b.mk).sum::<usize>();
        Self::new(identity(dim), d0, blocks)
    }

    pub fn validate(&self) -> Result<()> {
        let u = &self.basis_change;
        if u.nrows() != u.ncols() {
            return Err(Error::NotSquare {
                rows: u.nrows(),
                cols: u.ncols(),
            });
        }
        if !approx_eq(&(u.adjoint() * u), &identity(self.dim), 1e-10) {
            return Err(Error::InvalidArgument("basis change is not unitary".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidArgument("no blocks".into()));
        }
        let total = self.d0 + self.blocks.iter().map(|b| b.dk * b.mk).sum::<usize>();
        if total != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "d0 + Σ D_k·m_k = {total} but the space has dimension {}",
                self.dim
            )));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.dk == 0 || b.mk == 0 {
                return Err(Error::InvalidArgument(format!("block {k} has a zero size")));
            }
            if b.sigma.shape() != (b.mk, b.mk) {
                return Err(Error::DimensionMismatch(format!(
                    "block {k}: sigma is {}x{}, expected {}x{}",
                    b.sigma.nrows(),
                    b.sigma.ncols(),
                    b.mk,
                    b.mk
                )));
            }
            validate_density(&b.sigma, 1e-9, true)
                .map_err(|e| Error::InvalidArgument(format!("block {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn block_offset(&self, k: usize) -> usize {
        self.d0 + self.blocks[..k].iter().map(|b| b.dk * b.mk).sum::<usize>()
    }

    /// Isometry from the block's product space into `C^dim`.
    pub fn block_isometry(&self, k: usize) -> CMatrix {
        let b = &self.blocks[k];
        self.basis_change
            .columns(self.block_offset(k), b.dk * b.mk)
            .into_owned()
    }

    /// Orthogonal projector `π_k` onto block `k`.
    pub fn block_projector(&self, k: usize) -> CMatrix {
        let w = self.block_isometry(k);
        &w * w.adjoint()
    }
}

/// Superoperator on `C^dk ⊗ C^mk` that keeps the first factor and replaces
/// the second by `σ`: `X ↦ tr_2(X) ⊗ σ`.
fn block_map(dk: usize, mk: usize, sigma: &CMatrix) -> CMatrix {
    let n = dk * mk;
    let mut s = CMatrix::zeros(n * n, n * n);
    for a in 0..dk {
        for c in 0..dk {
            for b in 0..mk {
                for bp in 0..mk {
                    for dp in 0..mk {
                        let row = (a * mk + bp) * n + (c * mk + dp);
                        let col = (a * mk + b) * n + (c * mk + b);
                        s[(row, col)] += sigma[(bp, dp)];
                    }
                }
            }
        }
    }
    s
}

pub fn build_projector(cf: &ProjectorCanonicalForm) -> Result<SuperOp> {
    cf.validate()?;
    if cf.d0 != 0 {
        return Err(Error::Unsupported(format!(
            "canonical forms with a nonzero d0 block (d0 = {}) do not define a trace-preserving map by blockwise action",
            cf.d0
        )));
    }
    let d = cf.dim;
    let mut p = CMatrix::zeros(d * d, d * d);
    for (k, b) in cf.blocks.iter().enumerate() {
        let w = cf.block_isometry(k);
        let lift = kron(&w, &conj(&w));
        p += sparse_product(&sparse_product(&lift, &block_map(b.dk, b.mk, &b.sigma)), &lift.adjoint());
    }
    SuperOp::new(p)
}

/// Recovers the canonical form of a projector channel. The block structure
/// is read off random elements of the fixed-point algebra drawn from `seed`;
/// an unlucky draw is detected by rebuilding `P` and retried with the next
/// seed.
pub fn canonical_form(p: &SuperOp, tol: f64, seed: u64) -> Result<ProjectorCanonicalForm> {
    if !is_projector_channel(p, tol.max(1e-12)) {
        return Err(Error::NotProjectorChannel(
            "input is not an idempotent CPTP map".into(),
        ));
    }
    let mut last_err = None;
    for attempt in 0..4 {
        let mut rng = random::trial_rng(seed, attempt);
        match extract_form(p, tol, &mut rng) {
            Ok(cf) => {
                if cf.d0 > 0 {
                    return Ok(cf);
                }
                let rebuilt = build_projector(&cf)?;
                let err = fro_norm(&(&rebuilt.matrix - &p.matrix));
                if err <= 1e-6_f64.max(tol) * fro_norm(&p.matrix).max(1.0) {
                    return Ok(cf);
                }
                last_err = Some(Error::NotProjectorChannel(format!(
                    "reconstruction error {err:.3e}"
                )));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::NotProjectorChannel("extraction failed".into())))
}

fn extract_form(p: &SuperOp, tol: f64, rng: &mut random::SeededRng) -> Result<ProjectorCanonicalForm> {
    let d = p.dim;
    let stol = tol.max(1e-8);
    let rho = hermitian_part(&p.apply(&identity(d)));
    let (vals, vecs) = hermitian_eigen(&rho);
    let lmax = vals.first().copied().unwrap_or(0.0);
    let support: Vec<usize> = (0..d).filter(|&i| vals[i] > stol * lmax).collect();
    let n = support.len();
    let d0 = d - n;
    let w = CMatrix::from_fn(d, n, |i, k| vecs[(i, support[k])]);
    let complement = CMatrix::from_fn(d, d0, |i, k| vecs[(i, n + k)]);

    let rho_s = w.adjoint() * &rho * &w;
    let (_, rho_isqrt) = psd_sqrt_pair(&rho_s)?;
    let fixed = range_basis(&p.matrix, stol)?;
    let algebra: Vec<CMatrix> = (0..fixed.dim())
        .map(|j| {
            let f = crate::channels::unvectorize(&fixed.vectors.column(j).into_owned(), d);
            &rho_isqrt * (w.adjoint() * f * &w) * &rho_isqrt
        })
        .collect();
    let r = algebra.len();

    // Center of the algebra: combinations commuting with every element.
    let mut comm = CMatrix::zeros(r * n * n, r);
    for j in 0..r {
        for i in 0..r {
            let c = &algebra[j] * &algebra[i] - &algebra[i] * &algebra[j];
            comm.view_mut((i * n * n, j), (n * n, 1))
                .copy_from(&vectorize(&c));
        }
    }
    // Eigenvalues of the Gram matrix are squared commutator norms; rounding
    // puts the central ones near eps·‖gram‖, far below the others.
    let gram = comm.adjoint() * &comm;
    let (gvals, gvecs) = hermitian_eigen(&gram);
    let gmax = gvals.first().copied().unwrap_or(0.0);
    let floor = (1e-10 * algebra.iter().map(fro_norm).fold(0.0, f64::max).powi(2)).powi(2);
    let center: Vec<CMatrix> = (0..r)
        .filter(|&l| gvals[l] <= stol.max(1e-9) * gmax || gvals[l] <= floor)
        .flat_map(|l| {
            let z = combine(&algebra, &gvecs.column(l).into_owned());
            let zi = z.map(|x| x * C64::new(0.0, 1.0));
            [hermitian_part(&z), hermitian_part(&zi)]
        })
        .collect();
    let probe = random_real_combination(&center, rng);
    let clusters = eigen_clusters(&probe, 1e-6);

    let mut blocks = Vec::new();
    for cluster in clusters {
        let bk = cluster.ncols();
        let local: Vec<CMatrix> = algebra
            .iter()
            .map(|a| cluster.adjoint() * a * &cluster)
            .collect();
        let stacked = CMatrix::from_columns(
            &local.iter().map(vectorize).collect::<Vec<CVector>>(),
        );
        let alg_dim = rank(&stacked, stol);
        let dk = (alg_dim as f64).sqrt().round() as usize;
        if dk == 0 || dk * dk != alg_dim || bk % dk != 0 {
            return Err(Error::NotProjectorChannel(format!(
                "block of size {bk} carries an algebra of dimension {alg_dim}"
            )));
        }
        let mk = bk / dk;
        let product = product_basis(&local, dk, mk, rng)?;
        let g = &cluster * product;
        let rho_k = g.adjoint() * &rho_s * &g;
        let mut sigma = CMatrix::zeros(mk, mk);
        for a in 0..dk {
            sigma += rho_k.view((a * mk, a * mk), (mk, mk));
        }
        let tr = sigma.trace();
        sigma = hermitian_part(&(sigma / tr));
        blocks.push((Block { dk, mk, sigma }, &w * g));
    }
    blocks.sort_by(|(a, _), (b, _)| {
        (a.dk, a.mk)
            .cmp(&(b.dk, b.mk))
            .then(purity(&a.sigma).total_cmp(&purity(&b.sigma)))
    });
    let mut u = CMatrix::zeros(d, d);
    u.columns_mut(0, d0).copy_from(&complement);
    let mut offset = d0;
    for (b, iso) in &blocks {
        let width = b.dk * b.mk;
        u.columns_mut(offset, width).copy_from(iso);
        offset += width;
    }
    ProjectorCanonicalForm::new(u, d0, blocks.into_iter().map(|(b, _)| b).collect())
}

fn purity(sigma: &CMatrix) -> f64 {
    (sigma * sigma).trace().re
}

fn combine(mats: &[CMatrix], coeffs: &CVector) -> CMatrix {
    let (r, c) = mats[0].shape();
    mats.iter()
        .zip(coeffs.iter())
        .fold(CMatrix::zeros(r, c), |acc, (m, &x)| acc + m.map(|z| z * x))
}

fn random_real_combination(mats: &[CMatrix], rng: &mut random::SeededRng) -> CMatrix {
    let (r, c) = mats[0].shape();
    let largest = mats.iter().map(fro_norm).fold(0.0, f64::max);
    mats.iter().fold(CMatrix::zeros(r, c), |acc, m| {
        let nrm = fro_norm(m);
        // Rounding residue (e.g. the Hermitian part of iI) must not be
        // amplified into a spurious direction.
        if nrm <= 1e-8 * largest {
            return acc;
        }
        let x: f64 = rng.random_range(-1.0..1.0);
        acc + m.scale(x / nrm)
    })
}

/// Groups the eigenvectors of a Hermitian matrix by eigenvalue, splitting
/// where consecutive eigenvalues differ by more than `gap·max|λ|`.
fn eigen_clusters(h: &CMatrix, gap: f64) -> Vec<CMatrix> {
    let (vals, vecs) = hermitian_eigen(h);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || (vals[i - 1] - vals[i]) > gap * scale {
            out.push(vecs.columns(start, i - start).into_owned());
            start = i;
        }
    }
    out
}

/// Basis `g_{a,b}` (column `a·m + b`) of a block in which the local algebra
/// acts as `M_dk ⊗ I_mk`.
fn product_basis(
    local: &[CMatrix],
    dk: usize,
    mk: usize,
    rng: &mut random::SeededRng,
) -> Result<CMatrix> {
    let bk = dk * mk;
    if dk == 1 {
        return Ok(identity(bk));
    }
    let hermitians: Vec<CMatrix> = local
        .iter()
        .flat_map(|a| [hermitian_part(a), hermitian_part(&a.map(|z| z * C64::new(0.0, 1.0)))])
        .collect();
    let y = random_real_combination(&hermitians, rng);
    let spaces = eigen_clusters(&y, 1e-6);
    if spaces.len() != dk || spaces.iter().any(|s| s.ncols() != mk) {
        return Err(Error::NotProjectorChannel(
            "could not split a block into a tensor product".into(),
        ));
    }
    let coeffs = CVector::from_fn(local.len(), |_, _| random::complex_normal(rng));
    let z = combine(local, &coeffs);
    let first = &spaces[0];
    let mut g = CMatrix::zeros(bk, bk);
    for (a, space) in spaces.iter().enumerate() {
        let cols = if a == 0 {
            first.clone()
        } else {
            let mapped = space * space.adjoint() * &z * first;
            let scale = fro_norm(&mapped) / (mk as f64).sqrt();
            if scale < 1e-8 * fro_norm(&z) {
                return Err(Error::NotProjectorChannel(
                    "random algebra element does not connect the blocks".into(),
                ));
            }
            mapped.unscale(scale)
        };
        for b in 0..mk {
            g.set_column(a * mk + b, &cols.column(b));
        }
    }
    // Re-orthonormalize to clean up rounding.
    let svd = full_svd(&g);
    Ok(&svd.u * svd.v.adjoint())
}

/// Lindblad generator `L̃` with `e^{tL̃} → P` as `t → ∞`: `H = 0`, ladder
/// jumps built from the eigenbasis of each `σ_k`, and the block projector as
/// the jump for blocks with `m_k = 1`.
pub fn thermo_liouvillian(cf: &ProjectorCanonicalForm) -> Result<Lindblad> {
    cf.validate()?;
    if cf.d0 != 0 {
        return Err(Error::Unsupported(format!(
            "thermodynamic generator requires d0 = 0, got d0 = {}",
            cf.d0
        )));
    }
    let d = cf.dim;
    let mut jumps = Vec::new();
    for (k, b) in cf.blocks.iter().enumerate() {
        let w = cf.block_isometry(k);
        if b.mk == 1 {
            if cf.blocks.len() > 1 {
                jumps.push(&w * w.adjoint());
            }
            continue;
        }
        let (vals, vecs) = hermitian_eigen(&b.sigma);
        let theta: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        let mut up = CMatrix::zeros(b.mk, b.mk);
        let mut down = CMatrix::zeros(b.mk, b.mk);
        for i in 0..b.mk - 1 {
            let vi = vecs.column(i);
            let vn = vecs.column(i + 1);
            up += (vi * vn.adjoint()).scale(theta[i]);
            down += (vn * vi.adjoint()).scale(theta[i + 1]);
        }
        let id = identity(b.dk);
        jumps.push(&w * kron(&id, &up) * w.adjoint());
        jumps.push(&w * kron(&id, &down) * w.adjoint());
    }
    Lindblad::new(CMatrix::zeros(d, d), jumps)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermoPoint {
    pub t: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermoReport {
    pub points: Vec<ThermoPoint>,
    pub passed: bool,
}

/// Tabulates `‖e^{tL̃} − P‖_F` over `t_grid`; passes when the last value is
/// within `tol` and the last three values do not increase.
pub fn verify_thermo_limit(p: &SuperOp, g: &Lindblad, t_grid: &[f64], tol: f64) -> Result<ThermoReport> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be increasing".into()));
    }
    if g.dim != p.dim {
        return Err(Error::DimensionMismatch(format!(
            "generator on C^{} but projector on C^{}",
            g.dim, p.dim
        )));
    }
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let e = channel_at(g, t)?;
        points.push(ThermoPoint {
            t,
            distance: fro_norm(&(e.matrix - &p.matrix)),
        });
    }
    let last = points.last().map_or(f64::INFINITY, |p| p.distance);
    let tail = &points[points.len().saturating_sub(3)..];
    let monotone = tail
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance + 1e-14);
    Ok(ThermoReport {
        passed: last <= tol && monotone,
        points,
    })
}

/// The fixed point `x ⊗ σ_k` of block `k`, embedded in `C^dim`.
pub fn block_fixed_point(cf: &ProjectorCanonicalForm, k: usize, x: &CMatrix) -> CMatrix {
    let w = cf.block_isometry(k);
    &w * kron(x, &cf.blocks[k].sigma) * w.adjoint()
}

/// Samples a random canonical form on `C^dim` with `d0 = 0`.
pub fn random_canonical_form(dim: usize, rng: &mut random::SeededRng) -> ProjectorCanonicalForm {
    let mut blocks = Vec::new();
    let mut left = dim;
    while left > 0 {
        let size = rng.random_range(1..=left);
        let divisors: Vec<usize> = (1..=size).filter(|x| size % x == 0).collect();
        let dk = divisors[rng.random_range(0..divisors.len())];
        let mk = size / dk;
        blocks.push(Block {
            dk,
            mk,
            sigma: random::random_density(mk, 0.3, rng),
        });
        left -= size;
    }
    let u = random::haar_unitary(dim, rng);
    ProjectorCanonicalForm::new(u, 0, blocks).expect("sampled form is valid")
}

/// Samples Lindblad data whose Liouvillian `L` satisfies `PL = PLP` for the
/// projector of `cf`, i.e. `L` maps `ker P` into itself. Every term acts on a
/// block either as `h ⊗ I + I ⊗ c`, as a jump `T ⊗ U` with `U` unitary, as a
/// jump `I ⊗ W`, or moves block `k` into a block `l` with the same `m` via
/// `X ⊗ U`. `scale` bounds the Frobenius norm of each sampled factor.
pub fn random_compatible_lindblad(
    cf: &ProjectorCanonicalForm,
    scale: f64,
    rng: &mut random::SeededRng,
) -> Result<Lindblad> {
    if cf.d0 != 0 {
        return Err(Error::Unsupported("compatible generators need d0 = 0".into()));
    }
    let d = cf.dim;
    let mut h = CMatrix::zeros(d, d);
    let mut product_jump = CMatrix::zeros(d, d);
    let mut local_jump = CMatrix::zeros(d, d);
    let mut jumps = Vec::new();
    for (k, b) in cf.blocks.iter().enumerate() {
        let w = cf.block_isometry(k);
        let hk = random::random_hermitian(b.dk, rng).scale(scale / 2.0);
        let ck = random::random_hermitian(b.mk, rng).scale(scale / 2.0);
        let local_h = kron(&hk, &identity(b.mk)) + kron(&identity(b.dk), &ck);
        h += &w * local_h * w.adjoint();
        let t = random::random_with_norm(b.dk, b.dk, scale * rng.random_range(0.2..1.0), rng);
        let u = random::haar_unitary(b.mk, rng);
        product_jump += &w * kron(&t, &u) * w.adjoint();
        let wk = random::random_with_norm(b.mk, b.mk, scale * rng.random_range(0.2..1.0), rng);
        local_jump += &w * kron(&identity(b.dk), &wk) * w.adjoint();
    }
    jumps.push(product_jump);
    jumps.push(local_jump);
    for (k, bk) in cf.blocks.iter().enumerate() {
        for (l, bl) in cf.blocks.iter().enumerate() {
            if k == l || bk.mk != bl.mk || rng.random_bool(0.5) {
                continue;
            }
            let x = random::random_with_norm(bl.dk, bk.dk, scale * rng.random_range(0.2..1.0), rng);
            let u = random::haar_unitary(bk.mk, rng);
            jumps.push(cf.block_isometry(l) * kron(&x, &u) * cf.block_isometry(k).adjoint());
        }
    }
    Lindblad::new(hermitian_part(&h), jumps)
}

/// Diagonal density matrix from its eigenvalues.
pub fn real_sigma(values: &[f64]) -> CMatrix {
    CMatrix::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            re(values[i])
        } else {
            C64::default()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{builtin, kraus_to_superop, Builtin};
    use crate::lindblad::liouvillian_matrix;
    use crate::numerics::{ket_bra, null_space, real_diag};
    use proptest::prelude::*;

    fn one() -> CMatrix {
        identity(1)
    }

    #[test]
    fn build_identity_pinching_depolarize() {
        let id = ProjectorCanonicalForm::standard(0, vec![Block { dk: 3, mk: 1, sigma: one() }]).unwrap();
        assert!(approx_eq(&build_projector(&id).unwrap().matrix, &identity(9), 1e-14));

        let pinch = ProjectorCanonicalForm::standard(
            0,
            vec![Block { dk: 1, mk: 1, sigma: one() }; 3],
        )
        .unwrap();
        let expected = kraus_to_superop(&builtin(&Builtin::Pinching(identity(3))).unwrap());
        assert!(approx_eq(&build_projector(&pinch).unwrap().matrix, &expected.matrix, 1e-14));

        let dep = ProjectorCanonicalForm::standard(
            0,
            vec![Block { dk: 1, mk: 3, sigma: identity(3).scale(1.0 / 3.0) }],
        )
        .unwrap();
        let expected = kraus_to_superop(&builtin(&Builtin::Depolarize(identity(3).scale(1.0 / 3.0))).unwrap());
        assert!(approx_eq(&build_projector(&dep).unwrap().matrix, &expected.matrix, 1e-14));
    }

    #[test]
    fn build_rejects_inconsistent_forms() {
        assert!(ProjectorCanonicalForm::new(identity(3), 0, vec![Block { dk: 1, mk: 2, sigma: identity(2).scale(0.5) }]).is_err());
        assert!(ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 2, sigma: identity(2) }]).is_err());
        let with_zero = ProjectorCanonicalForm::standard(1, vec![Block { dk: 1, mk: 1, sigma: one() }]).unwrap();
        assert!(matches!(build_projector(&with_zero), Err(Error::Unsupported(_))));
    }

    #[test]
    fn canonical_form_examples() {
        let pinch = SuperOp::new(real_diag(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        let cf = canonical_form(&pinch, 1e-9, 0).unwrap();
        assert_eq!(cf.d0, 0);
        assert_eq!(cf.blocks.len(), 2);
        assert!(cf.blocks.iter().all(|b| b.dk == 1 && b.mk == 1));

        let dep = kraus_to_superop(&builtin(&Builtin::Depolarize(identity(2).scale(0.5))).unwrap());
        let cf = canonical_form(&dep, 1e-9, 0).unwrap();
        assert_eq!(cf.blocks.len(), 1);
        assert_eq!((cf.blocks[0].dk, cf.blocks[0].mk), (1, 2));
        assert!(approx_eq(&cf.blocks[0].sigma, &identity(2).scale(0.5), 1e-10));

        let cf = canonical_form(&SuperOp::identity(3), 1e-9, 0).unwrap();
        assert_eq!(cf.blocks.len(), 1);
        assert_eq!((cf.blocks[0].dk, cf.blocks[0].mk), (3, 1));
    }

    #[test]
    fn canonical_form_detects_zero_block() {
        // ρ ↦ tr(ρ)|0⟩⟨0| fixes only |0⟩⟨0|; the second level is transient.
        let ch = crate::channels::KrausChannel::new(vec![ket_bra(2, 0, 0), ket_bra(2, 0, 1)]).unwrap();
        let cf = canonical_form(&kraus_to_superop(&ch), 1e-9, 0).unwrap();
        assert_eq!(cf.d0, 1);
        assert_eq!(cf.blocks.len(), 1);
    }

    #[test]
    fn canonical_form_rejects_non_projectors() {
        let e = SuperOp::new(real_diag(&[1.0, 0.5, 0.5, 1.0])).unwrap();
        assert!(matches!(canonical_form(&e, 1e-9, 0), Err(Error::NotProjectorChannel(_))));
    }

    #[test]
    fn thermo_examples() {
        let pinch = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 1, sigma: one() }; 3]).unwrap();
        let g = thermo_liouvillian(&pinch).unwrap();
        assert_eq!(g.jumps.len(), 3);
        for (m, r) in g.jumps.iter().enumerate() {
            assert!(approx_eq(r, &ket_bra(3, m, m), 1e-14));
        }

        let dep = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 2, sigma: identity(2).scale(0.5) }]).unwrap();
        let g = thermo_liouvillian(&dep).unwrap();
        assert_eq!(g.jumps.len(), 2);
        let s = 0.5f64.sqrt();
        let expected = liouvillian_matrix(
            &Lindblad::new(CMatrix::zeros(2, 2), vec![ket_bra(2, 0, 1).scale(s), ket_bra(2, 1, 0).scale(s)]).unwrap(),
        );
        assert!(approx_eq(&liouvillian_matrix(&g).matrix, &expected.matrix, 1e-14));

        let three = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 3, sigma: real_sigma(&[0.5, 0.25, 0.25]) }]).unwrap();
        let g = thermo_liouvillian(&three).unwrap();
        assert_eq!(g.jumps.len(), 2);
        let (vals, _) = hermitian_eigen(&three.blocks[0].sigma);
        let theta: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
        assert!((theta[0] - 0.5f64.sqrt()).abs() < 1e-14 && (theta[1] - 0.5).abs() < 1e-14);
        let p = build_projector(&three).unwrap();
        let report = verify_thermo_limit(&p, &g, &[20.0, 40.0, 80.0, 160.0], 1e-8).unwrap();
        assert!(report.passed, "{report:?}");

        let with_zero = ProjectorCanonicalForm::standard(1, vec![Block { dk: 1, mk: 1, sigma: one() }]).unwrap();
        assert!(matches!(thermo_liouvillian(&with_zero), Err(Error::Unsupported(_))));
    }

    #[test]
    fn thermo_convergence_examples() {
        let pinch_cf = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 1, sigma: one() }; 2]).unwrap();
        let p = build_projector(&pinch_cf).unwrap();
        let g = thermo_liouvillian(&pinch_cf).unwrap();
        let r = verify_thermo_limit(&p, &g, &[1.0, 5.0, 10.0, 40.0], 1e-12).unwrap();
        assert!(r.passed);
        for pt in &r.points {
            let closed = 2f64.sqrt() * (-pt.t).exp();
            assert!((pt.distance - closed).abs() < 1e-13 * closed.max(1e-3));
        }

        let dep_cf = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 2, sigma: identity(2).scale(0.5) }]).unwrap();
        let p = build_projector(&dep_cf).unwrap();
        let g = thermo_liouvillian(&dep_cf).unwrap();
        assert!(verify_thermo_limit(&p, &g, &[10.0, 20.0, 40.0], 1e-8).unwrap().passed);

        let id_cf = ProjectorCanonicalForm::standard(0, vec![Block { dk: 2, mk: 1, sigma: one() }]).unwrap();
        let g = thermo_liouvillian(&id_cf).unwrap();
        assert!(g.jumps.is_empty());
        let r = verify_thermo_limit(&SuperOp::identity(2), &g, &[1.0, 2.0], 1e-12).unwrap();
        assert!(r.points.iter().all(|p| p.distance == 0.0));
    }

    #[test]
    fn thermo_rejects_bad_grid() {
        let g = Lindblad::zero(2);
        assert!(verify_thermo_limit(&SuperOp::identity(2), &g, &[2.0, 1.0], 1e-9).is_err());
    }

    /// Fixed points of `L̃` and the image of `P` coincide.
    fn assert_fixed_space_matches(cf: &ProjectorCanonicalForm) {
        let p = build_projector(cf).unwrap();
        let l = liouvillian_matrix(&thermo_liouvillian(cf).unwrap());
        let kernel = null_space(&l.matrix, 1e-10).unwrap();
        let image = range_basis(&p.matrix, 1e-10).unwrap();
        assert_eq!(kernel.dim(), image.dim());
        let overlap = kernel.projector() * image.projector() * kernel.projector();
        assert!(approx_eq(&overlap, &kernel.projector(), 1e-8));
    }

    #[test]
    fn thermo_fixed_points_on_case_fixtures() {
        let dep = ProjectorCanonicalForm::standard(0, vec![Block { dk: 1, mk: 3, sigma: real_sigma(&[0.5, 0.3, 0.2]) }]).unwrap();
        let product = ProjectorCanonicalForm::standard(0, vec![Block { dk: 2, mk: 2, sigma: real_sigma(&[0.7, 0.3]) }]).unwrap();
        let multi = ProjectorCanonicalForm::standard(
            0,
            vec![
                Block { dk: 1, mk: 2, sigma: real_sigma(&[0.6, 0.4]) },
                Block { dk: 1, mk: 1, sigma: one() },
                Block { dk: 1, mk: 3, sigma: real_sigma(&[0.2, 0.3, 0.5]) },
            ],
        )
        .unwrap();
        for cf in [&dep, &product, &multi] {
            assert_fixed_space_matches(cf);
            // Geometric decay between doubling times.
            let p = build_projector(cf).unwrap();
            let g = thermo_liouvillian(cf).unwrap();
            let r = verify_thermo_limit(&p, &g, &[4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0], 1e-6).unwrap();
            assert!(r.passed, "{r:?}");
            for w in r.points.windows(2) {
                if w[0].distance > 1e-10 {
                    assert!(w[1].distance < w[0].distance);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn canonical_round_trip(seed in any::<u64>(), dim in 1usize..=6) {
            let mut r = random::rng(seed);
            let cf = random_canonical_form(dim, &mut r);
            let p = build_projector(&cf).unwrap();
            prop_assert!(is_projector_channel(&p, 1e-9));
            let back = canonical_form(&p, 1e-9, seed).unwrap();
            prop_assert!(approx_eq(&build_projector(&back).unwrap().matrix, &p.matrix, 1e-8));
            let mut sizes: Vec<(usize, usize)> = cf.blocks.iter().map(|b| (b.dk, b.mk)).collect();
            sizes.sort();
            let got: Vec<(usize, usize)> = back.blocks.iter().map(|b| (b.dk, b.mk)).collect();
            prop_assert_eq!(got, sizes);
        }

        #[test]
        fn random_thermo_fixed_points(seed in any::<u64>(), dim in 1usize..=4) {
            let mut r = random::rng(seed);
            let cf = random_canonical_form(dim, &mut r);
            assert_fixed_space_matches(&cf);
        }
    }
}
