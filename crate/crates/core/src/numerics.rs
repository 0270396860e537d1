//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on [`CMatrix`] (a dynamically sized
//! `nalgebra` matrix of `Complex64`). Sizes are small (the superoperators
//! of a bond dimension `D` are `D² × D²`), so the routines favour accuracy
//! and robustness over raw speed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default tolerance for verdict-style operations.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Absolute gap below which two eigenvalues are treated as one cluster.
pub const EIGEN_CLUSTER_GAP: f64 = 1e-7;

/// Eigenvector-matrix condition number above which a matrix is handled as
/// defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

/// Inputs to [`expm`] with a larger 1-norm are rejected.
pub const EXPM_NORM_LIMIT: f64 = 1e6;

/// Margin on `|arg λ − π|` that puts an eigenvalue on the logarithm's cut.
pub const BRANCH_CUT_MARGIN: f64 = 1e-6;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

/// Builds a matrix from row-major nested data.
pub fn from_rows(rows: &[Vec<C64>]) -> CMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    CMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    CMatrix::from_fn(r, c, |i, j| re(rows[i][j]))
}

pub fn diag(values: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(values))
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    CMatrix::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            re(values[i])
        } else {
            C64::default()
        }
    })
}

/// `|i⟩⟨j|` in dimension `n`.
pub fn ket_bra(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = zeros(n, n);
    m[(i, j)] = re(1.0);
    m
}

pub fn pauli_x() -> CMatrix {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]])
}

pub fn pauli_z() -> CMatrix {
    from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

pub fn fro_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub fn ensure_finite(a: &CMatrix, what: &'static str) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    fro_norm(&(a - a.adjoint()))
}

/// `‖A − B‖_F ≤ tol·max(1, ‖B‖_F)`.
pub fn approx_eq(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && fro_norm(&(a - b)) <= tol * fro_norm(b).max(1.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Singular value decomposition `A = U Σ V†` with full square `U` and `V`
/// and singular values sorted in descending order.
pub struct FullSvd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

pub fn full_svd(a: &CMatrix) -> FullSvd {
    let (r, c) = a.shape();
    let n = r.max(c);
    if n == 0 {
        return FullSvd {
            u: zeros(r, r),
            singular_values: Vec::new(),
            v: zeros(c, c),
        };
    }
    // Pad to square so that both singular bases are complete.
    let mut sq = zeros(n, n);
    sq.view_mut((0, 0), (r, c)).copy_from(a);
    let (u, values, v) = jacobi_svd(&sq);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let u_full = CMatrix::from_fn(n, n, |i, k| u[(i, order[k])]);
    let v_full = CMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    // With padding, the leading min(r, c) singular triplets are the genuine
    // ones; the trailing singular vectors span the complements.
    let u = u_full.view((0, 0), (r, n)).into_owned();
    let v = v_full.view((0, 0), (c, n)).into_owned();
    let u = complete_columns(&u, r);
    let v = complete_columns(&v, c);
    FullSvd {
        u,
        singular_values: sv.into_iter().take(r.min(c)).collect(),
        v,
    }
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix: `A = U Σ V†`.
///
/// nalgebra's complex bidiagonal SVD occasionally returns factors that do
/// not reconstruct the input, so rank and subspace decisions go through this
/// routine instead. Columns of `U` belonging to zero singular values are
/// left unnormalized; [`full_svd`] completes them.
fn jacobi_svd(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for m in [&mut w, &mut v] {
                    for i in 0..m.nrows() {
                        let xp = m[(i, p)];
                        let xq = m[(i, q)] * phase.conj();
                        m[(i, p)] = xp * cs - xq * sn;
                        m[(i, q)] = (xp * sn + xq * cs) * phase;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let values: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    for k in 0..n {
        if values[k] > 0.0 {
            let col = w.column(k) / re(values[k]);
            w.set_column(k, &col);
        }
    }
    (w, values, v)
}

/// Keeps the orthonormal columns of `m` (which may carry padding columns)
/// and returns exactly `dim` of them forming a unitary matrix.
fn complete_columns(m: &CMatrix, dim: usize) -> CMatrix {
    let mut basis: Vec<CVector> = Vec::with_capacity(dim);
    let candidates = (0..m.ncols())
        .map(|j| m.column(j).into_owned())
        .chain((0..dim).map(|k| {
            let mut e = CVector::zeros(dim);
            e[k] = re(1.0);
            e
        }));
    for mut v in candidates {
        if basis.len() == dim {
            break;
        }
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        v /= re(norm0);
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        let nrm = v.norm();
        if nrm > 0.5 {
            basis.push(v / re(nrm));
        }
    }
    CMatrix::from_columns(&basis)
}

/// Numerical rank: number of singular values above `tol·σ_max`.
pub fn rank(a: &CMatrix, tol: f64) -> usize {
    let sv = full_svd(a).singular_values;
    let smax = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > tol * smax && s > 0.0).count()
}

/// 2-norm condition number.
pub fn condition_number(a: &CMatrix) -> f64 {
    let sv = full_svd(a).singular_values;
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// An orthonormal set of column vectors spanning a subspace of `C^n`.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    pub dim_ambient: usize,
    pub vectors: CMatrix,
    pub tol_used: f64,
}

impl SubspaceBasis {
    pub fn new(vectors: CMatrix, tol_used: f64) -> Self {
        Self {
            dim_ambient: vectors.nrows(),
            vectors,
            tol_used,
        }
    }

    pub fn empty(dim_ambient: usize, tol_used: f64) -> Self {
        Self::new(zeros(dim_ambient, 0), tol_used)
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> CMatrix {
        &self.vectors * self.vectors.adjoint()
    }
}

/// Right singular vectors whose singular value is `≤ tol·σ_max`.
pub fn null_space(m: &CMatrix, tol: f64) -> Result<SubspaceBasis> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be ≥ 0")));
    }
    ensure_finite(m, "null_space input")?;
    let cols = m.ncols();
    let svd = full_svd(m);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let threshold = tol * smax;
    let keep: Vec<usize> = (0..cols)
        .filter(|&k| svd.singular_values.get(k).map_or(true, |&s| s <= threshold))
        .collect();
    let vectors = CMatrix::from_fn(cols, keep.len(), |i, k| svd.v[(i, keep[k])]);
    Ok(SubspaceBasis::new(vectors, tol))
}

/// Left singular vectors whose singular value is `> tol·σ_max`.
pub fn range_basis(m: &CMatrix, tol: f64) -> Result<SubspaceBasis> {
    ensure_finite(m, "range_basis input")?;
    let svd = full_svd(m);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > tol * smax && svd.singular_values[k] > 0.0)
        .collect();
    let vectors = CMatrix::from_fn(m.nrows(), keep.len(), |i, k| svd.u[(i, keep[k])]);
    Ok(SubspaceBasis::new(vectors, tol))
}

/// Projector onto `range` along `kernel`, i.e. `Π v = v` on the range and
/// `Π w = 0` on the kernel.
pub fn oblique_projector(range: &SubspaceBasis, kernel: &SubspaceBasis) -> Result<CMatrix> {
    let n = range.dim_ambient;
    if kernel.dim_ambient != n {
        return Err(Error::DimensionMismatch(format!(
            "range lives in C^{n}, kernel in C^{}",
            kernel.dim_ambient
        )));
    }
    if range.dim() + kernel.dim() != n {
        return Err(Error::NoObliqueProjector(format!(
            "dimensions {} + {} do not add up to {n}",
            range.dim(),
            kernel.dim()
        )));
    }
    if kernel.is_empty() {
        return Ok(identity(n));
    }
    if range.is_empty() {
        return Ok(zeros(n, n));
    }
    let mut stacked = zeros(n, n);
    stacked.view_mut((0, 0), (n, range.dim())).copy_from(&range.vectors);
    stacked
        .view_mut((0, range.dim()), (n, kernel.dim()))
        .copy_from(&kernel.vectors);
    let cond = condition_number(&stacked);
    if !(cond <= DEFECTIVE_CONDITION) {
        return Err(Error::NoObliqueProjector(format!(
            "range and kernel are not complementary (condition number {cond:.3e})"
        )));
    }
    let inv = stacked
        .try_inverse()
        .ok_or_else(|| Error::NoObliqueProjector("stacked basis is singular".into()))?;
    let rows = inv.view((0, 0), (range.dim(), n)).into_owned();
    Ok(&range.vectors * rows)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3 to 13 (Higham 2005).
///
/// `tol` must lie in `(0, 1e-6]`; the approximant degrees are chosen for
/// double-precision unit roundoff, which satisfies every admissible `tol`.
pub fn expm(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let n = ensure_square(m)?;
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!(
            "expm tolerance {tol} outside (0, 1e-6]"
        )));
    }
    ensure_finite(m, "expm input")?;
    let norm = one_norm(m);
    if norm > EXPM_NORM_LIMIT {
        return Err(Error::ExpmOverflow {
            norm,
            limit: EXPM_NORM_LIMIT,
        });
    }
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let id = identity(n);
    for &(deg, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(m, coeffs, &id);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.scale(0.5f64.powi(s));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.scale(b[1]);
    let u = &a * inner_u;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.scale(b[0]);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    ensure_finite(&r, "expm result")?;
    Ok(r)
}

fn pade_low(a: &CMatrix, b: &[f64], id: &CMatrix) -> Result<CMatrix> {
    let a2 = a * a;
    let mut u = id.scale(b[1]);
    let mut v = id.scale(b[0]);
    let mut power = id.clone();
    let mut k = 2;
    while k < b.len() {
        power = &power * &a2;
        v += power.scale(b[k]);
        if k + 1 < b.len() {
            u += power.scale(b[k + 1]);
        }
        k += 2;
    }
    let u = a * u;
    pade_solve(&u, &v)
}

fn pade_solve(u: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidArgument("Padé denominator is singular".into()))
}

/// Complex Schur form `M = Z T Z†` with `T` upper triangular.
pub fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    ensure_square(m)?;
    ensure_finite(m, "Schur input")?;
    if m.nrows() == 0 {
        return Ok((zeros(0, 0), zeros(0, 0)));
    }
    let s = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 100_000)
        .ok_or(Error::NoConvergence("Schur decomposition"))?;
    let (z, mut t) = s.unpack();
    for j in 0..t.ncols() {
        for i in (j + 1)..t.nrows() {
            t[(i, j)] = C64::default();
        }
    }
    Ok((z, t))
}

/// Eigenvalues of a general square matrix (diagonal of the Schur form).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let (_, t) = schur(m)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Determinant via LU.
pub fn determinant(m: &CMatrix) -> Result<C64> {
    ensure_square(m)?;
    Ok(m.clone().determinant())
}

fn on_branch_cut(z: C64) -> bool {
    (z.arg().abs() - std::f64::consts::PI).abs() < BRANCH_CUT_MARGIN
}

/// Principal matrix logarithm.
///
/// Uses the eigendecomposition when the matrix is diagonalizable to working
/// precision (well-separated eigenvalues, eigenvector condition number at
/// most [`DEFECTIVE_CONDITION`]); otherwise inverse scaling and squaring on
/// the Schur form.
pub fn logm_principal(m: &CMatrix) -> Result<CMatrix> {
    let n = ensure_square(m)?;
    ensure_finite(m, "logm input")?;
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let (z, t) = schur(m)?;
    let scale = one_norm(m).max(f64::MIN_POSITIVE);
    let lambdas: Vec<C64> = t.diagonal().iter().copied().collect();
    for &l in &lambdas {
        if l.norm() <= 1e-14 * scale {
            return Err(Error::Singular(l));
        }
        if on_branch_cut(l) {
            return Err(Error::BranchCut(l));
        }
    }
    let log_t = match triangular_eigenvectors(&t) {
        Some(v) if condition_number(&v) <= DEFECTIVE_CONDITION => {
            let v_inv = v.clone().try_inverse().ok_or(Error::NoConvergence("eigenvector inversion"))?;
            let logs: Vec<C64> = lambdas.iter().map(|l| l.ln()).collect();
            &v * diag(&logs) * v_inv
        }
        _ => log_triangular_iss(&t)?,
    };
    let out = &z * log_t * z.adjoint();
    ensure_finite(&out, "logm result")?;
    Ok(out)
}

/// Eigenvectors of an upper triangular matrix by back substitution. Returns
/// `None` when two eigenvalues fall within [`EIGEN_CLUSTER_GAP`].
fn triangular_eigenvectors(t: &CMatrix) -> Option<CMatrix> {
    let n = t.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (t[(i, i)] - t[(j, j)]).norm() < EIGEN_CLUSTER_GAP {
                return None;
            }
        }
    }
    let mut v = zeros(n, n);
    for k in 0..n {
        v[(k, k)] = re(1.0);
        for i in (0..k).rev() {
            let mut s = C64::default();
            for j in (i + 1)..=k {
                s += t[(i, j)] * v[(j, k)];
            }
            v[(i, k)] = -s / (t[(i, i)] - t[(k, k)]);
        }
        let nrm = v.column(k).norm();
        v.column_mut(k).unscale_mut(nrm);
    }
    Some(v)
}

/// Principal square root of an upper triangular matrix (Björck–Hammarling).
fn sqrt_triangular(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut u = zeros(n, n);
    for i in 0..n {
        u[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..(n - d) {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = s / (u[(i, i)] + u[(j, j)]);
        }
    }
    u
}

const GAUSS_LEGENDRE_10: [(f64, f64); 5] = [
    (0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
    (0.433_395_394_129_247_2, 0.269_266_719_309_996_3),
    (0.679_409_568_299_024_4, 0.219_086_362_515_982_0),
    (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
];

/// Inverse scaling and squaring: take square roots until `‖T − I‖₁ ≤ 1/4`,
/// then evaluate the [10/10] Padé approximant of `log(I + X)` in its
/// partial-fraction (Gauss–Legendre) form.
fn log_triangular_iss(t: &CMatrix) -> Result<CMatrix> {
    let n = t.nrows();
    let id = identity(n);
    let mut r = t.clone();
    let mut k = 0;
    while one_norm(&(&r - &id)) > 0.25 {
        if k >= 64 {
            return Err(Error::NoConvergence("inverse scaling and squaring"));
        }
        r = sqrt_triangular(&r);
        k += 1;
    }
    let x = &r - &id;
    let mut acc = zeros(n, n);
    for &(node, weight) in &GAUSS_LEGENDRE_10 {
        for s in [0.5 * (1.0 - node), 0.5 * (1.0 + node)] {
            let denom = &id + x.scale(s);
            let solved = denom
                .lu()
                .solve(&x)
                .ok_or_else(|| Error::InvalidArgument("singular Padé denominator".into()))?;
            acc += solved.scale(0.5 * weight);
        }
    }
    Ok(acc.scale(2f64.powi(k)))
}

/// `A·B` skipping exact zeros of whichever factor has fewer nonzeros.
/// Superoperators in a block basis are mostly zeros; dense inputs cost the
/// same as an ordinary product.
pub fn sparse_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let zero = C64::default();
    let nnz = |m: &CMatrix| m.iter().filter(|z| **z != zero).count();
    let mut out = CMatrix::zeros(a.nrows(), b.ncols());
    if nnz(a) <= nnz(b) {
        for k in 0..a.ncols() {
            let entries: Vec<(usize, C64)> = (0..a.nrows())
                .map(|i| (i, a[(i, k)]))
                .filter(|(_, x)| *x != zero)
                .collect();
            for j in 0..b.ncols() {
                let y = b[(k, j)];
                if y != zero {
                    for &(i, x) in &entries {
                        out[(i, j)] += x * y;
                    }
                }
            }
        }
    } else {
        for j in 0..b.ncols() {
            for k in 0..b.nrows() {
                let x = b[(k, j)];
                if x != zero {
                    out.column_mut(j).axpy(x, &a.column(k), re(1.0));
                }
            }
        }
    }
    out
}

/// `M^k` for `k ≥ 0` by repeated squaring.
pub fn matrix_power(m: &CMatrix, mut k: usize) -> CMatrix {
    let mut result = identity(m.nrows());
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Hermitian square root (and inverse square root) of a positive definite
/// matrix.
pub fn psd_sqrt_pair(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (vals, vecs) = hermitian_eigen(a);
    if vals.last().map_or(false, |&v| v <= 0.0) {
        return Err(Error::InvalidArgument(
            "matrix is not positive definite".into(),
        ));
    }
    let sq: Vec<C64> = vals.iter().map(|v| re(v.sqrt())).collect();
    let isq: Vec<C64> = vals.iter().map(|v| re(1.0 / v.sqrt())).collect();
    Ok((
        &vecs * diag(&sq) * vecs.adjoint(),
        &vecs * diag(&isq) * vecs.adjoint(),
    ))
}

/// Orthonormalises the given vectors (modified Gram–Schmidt, dropping those
/// whose residual norm falls below `tol` times their original norm).
pub fn orthonormalize(vectors: &[CVector], tol: f64) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        let orig = v.norm();
        if orig == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w -= b * proj;
            }
        }
        let nrm = w.norm();
        if nrm > tol * orig {
            basis.push(w / re(nrm));
        }
    }
    basis
}
