//! Quantum channels as Kraus lists, superoperator matrices and Choi matrices.
//!
//! Vectorization is row-major, `|X⟩ = Σ X_ij |i⟩|j⟩`, so that `A X B†`
//! becomes `(A ⊗ B̄)|X⟩` and trace preservation is the left fixed-vector
//! condition `⟨⟨I| E = ⟨⟨I|`. Every module goes through [`vectorize`] and
//! [`unvectorize`]; nothing else assumes the layout.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    approx_eq, conj, ensure_finite, ensure_square, fro_norm, hermitian_eigen, hermiticity_defect,
    identity, kron, re, trace, CMatrix, CVector, C64,
};

/// Row-major vectorization of a square matrix.
pub fn vectorize(x: &CMatrix) -> CVector {
    let (r, c) = x.shape();
    CVector::from_fn(r * c, |k, _| x[(k / c, k % c)])
}

/// Inverse of [`vectorize`] for a `dim × dim` matrix.
pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| v[i * dim + j])
}

/// `|I⟩` as a column vector of length `dim²`.
pub fn vec_identity(dim: usize) -> CVector {
    vectorize(&identity(dim))
}

/// The swap `S|i⟩|j⟩ = |j⟩|i⟩` on `C^dim ⊗ C^dim`.
pub fn swap(dim: usize) -> CMatrix {
    let n = dim * dim;
    let mut s = CMatrix::zeros(n, n);
    for i in 0..dim {
        for j in 0..dim {
            s[(j * dim + i, i * dim + j)] = re(1.0);
        }
    }
    s
}

fn sqrt_dim(n: usize) -> Option<usize> {
    let d = (n as f64).sqrt().round() as usize;
    (d * d == n).then_some(d)
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    pub dim: usize,
    pub kraus: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty Kraus list".into()))?;
        let dim = ensure_square(first)?;
        for (i, k) in kraus.iter().enumerate() {
            if k.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator {i} is {}x{}, expected {dim}x{dim}",
                    k.nrows(),
                    k.ncols()
                )));
            }
            ensure_finite(k, "Kraus operator")?;
        }
        Ok(Self { dim, kraus })
    }

    /// `Σ A_i† A_i`, which equals the identity for a trace-preserving channel.
    pub fn completeness(&self) -> CMatrix {
        self.kraus
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, a| acc + a.adjoint() * a)
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        self.kraus
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, a| acc + a * rho * a.adjoint())
    }
}

#[derive(Clone, Debug)]
pub struct SuperOp {
    pub dim: usize,
    pub matrix: CMatrix,
}

impl SuperOp {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let n = ensure_square(&matrix)?;
        ensure_finite(&matrix, "superoperator")?;
        let dim = sqrt_dim(n).ok_or_else(|| {
            Error::DimensionMismatch(format!("superoperator size {n} is not a perfect square"))
        })?;
        Ok(Self { dim, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: identity(dim * dim),
        }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }
}

#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    pub dim: usize,
    pub matrix: CMatrix,
}

/// Reshuffle `J_{(i,k),(j,l)} = E_{(i,j),(k,l)}`; an involution, so it also
/// maps Choi matrices back to superoperators.
pub fn reshuffle(m: &CMatrix, dim: usize) -> CMatrix {
    let n = dim * dim;
    CMatrix::from_fn(n, n, |row, col| {
        let (i, k) = (row / dim, row % dim);
        let (j, l) = (col / dim, col % dim);
        m[(i * dim + j, k * dim + l)]
    })
}

/// Choi matrix `Σ |A_i⟩⟨A_i|` of the map (not Hermitized).
pub fn choi(e: &SuperOp) -> ChoiMatrix {
    ChoiMatrix {
        dim: e.dim,
        matrix: reshuffle(&e.matrix, e.dim),
    }
}

pub fn kraus_to_superop(ch: &KrausChannel) -> SuperOp {
    let n = ch.dim * ch.dim;
    let matrix = ch
        .kraus
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, a| acc + kron(a, &conj(a)));
    SuperOp {
        dim: ch.dim,
        matrix,
    }
}

/// Kraus operators from the Choi eigendecomposition, keeping eigenvalues
/// above `tol·λ_max`. The operators are Hilbert–Schmidt orthogonal.
pub fn superop_to_kraus(e: &SuperOp, tol: f64) -> Result<KrausChannel> {
    let j = choi(e).matrix;
    let scale = fro_norm(&j).max(1.0);
    let asym = hermiticity_defect(&j);
    if asym > tol * scale {
        return Err(Error::NotHermiticityPreserving(asym));
    }
    let (vals, vecs) = hermitian_eigen(&j);
    let lmax = vals.first().copied().unwrap_or(0.0);
    let lmin = vals.last().copied().unwrap_or(0.0);
    if lmin < -tol * lmax.max(1.0) {
        return Err(Error::NotCompletelyPositive(lmin));
    }
    let mut kraus: Vec<CMatrix> = vals
        .iter()
        .enumerate()
        .take_while(|(_, &l)| l > tol * lmax && l > 0.0)
        .map(|(k, &l)| unvectorize(&vecs.column(k).into_owned(), e.dim).scale(l.sqrt()))
        .collect();
    if kraus.is_empty() {
        kraus.push(CMatrix::zeros(e.dim, e.dim));
    }
    KrausChannel::new(kraus)
}

#[derive(Clone, Debug, Serialize)]
pub struct CptpReport {
    pub completely_positive: bool,
    pub trace_preserving: bool,
    pub min_choi_eigenvalue: f64,
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
}

impl CptpReport {
    pub fn ok(&self) -> bool {
        self.completely_positive && self.trace_preserving
    }
}

/// `⟨⟨I| E − ⟨⟨I|` in Frobenius norm.
pub fn trace_defect(e: &SuperOp) -> f64 {
    let vi = vec_identity(e.dim);
    let left = vi.transpose() * &e.matrix;
    (left - vi.transpose()).norm()
}

pub fn is_cptp(e: &SuperOp, tol: f64) -> CptpReport {
    let j = choi(e).matrix;
    let herm = hermiticity_defect(&j);
    let (vals, _) = hermitian_eigen(&j);
    let min = vals.last().copied().unwrap_or(0.0);
    let scale = fro_norm(&j).max(1.0);
    let td = trace_defect(e);
    CptpReport {
        completely_positive: herm <= tol * scale && min >= -tol,
        trace_preserving: td <= tol * (e.dim as f64).sqrt().max(1.0),
        min_choi_eigenvalue: min,
        hermiticity_defect: herm,
        trace_defect: td,
    }
}

pub fn idempotence_defect(e: &SuperOp) -> f64 {
    fro_norm(&(&e.matrix * &e.matrix - &e.matrix))
}

pub fn is_projector_channel(e: &SuperOp, tol: f64) -> bool {
    idempotence_defect(e) <= tol * fro_norm(&e.matrix).max(1.0) && is_cptp(e, tol).ok()
}

pub fn compose(e1: &SuperOp, e2: &SuperOp) -> Result<SuperOp> {
    if e1.dim != e2.dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose channels on C^{} and C^{}",
            e1.dim, e2.dim
        )));
    }
    Ok(SuperOp {
        dim: e1.dim,
        matrix: &e1.matrix * &e2.matrix,
    })
}

/// Checks that `sigma` is Hermitian, positive semidefinite and unit trace.
/// With `strict` the smallest eigenvalue must exceed `tol`.
pub fn validate_density(sigma: &CMatrix, tol: f64, strict: bool) -> Result<()> {
    ensure_square(sigma)?;
    ensure_finite(sigma, "density matrix")?;
    if hermiticity_defect(sigma) > tol.max(1e-10) * fro_norm(sigma).max(1.0) {
        return Err(Error::NotDensityMatrix("not Hermitian".into()));
    }
    let tr = trace(sigma);
    if (tr - C64::new(1.0, 0.0)).norm() > tol.max(1e-9) {
        return Err(Error::NotDensityMatrix(format!(
            "trace {:.6} differs from 1",
            tr.re
        )));
    }
    let (vals, _) = hermitian_eigen(sigma);
    let min = vals.last().copied().unwrap_or(0.0);
    if (strict && min <= tol) || min < -tol {
        return Err(Error::NotDensityMatrix(format!(
            "smallest eigenvalue {min:.3e} is not positive"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum Builtin {
    Identity(usize),
    /// Pinching onto the orthonormal columns of the given unitary.
    Pinching(CMatrix),
    /// `ρ ↦ tr(ρ) σ`.
    Depolarize(CMatrix),
}

pub fn builtin(kind: &Builtin) -> Result<KrausChannel> {
    match kind {
        Builtin::Identity(d) => {
            if *d == 0 {
                return Err(Error::InvalidArgument("dimension must be positive".into()));
            }
            KrausChannel::new(vec![identity(*d)])
        }
        Builtin::Pinching(basis) => {
            let d = ensure_square(basis)?;
            if !approx_eq(&(basis.adjoint() * basis), &identity(d), 1e-9) {
                return Err(Error::InvalidArgument(
                    "pinching basis is not orthonormal".into(),
                ));
            }
            KrausChannel::new(
                (0..d)
                    .map(|k| {
                        let v = basis.column(k);
                        &v * v.adjoint()
                    })
                    .collect(),
            )
        }
        Builtin::Depolarize(sigma) => {
            validate_density(sigma, 1e-9, false)?;
            let d = sigma.nrows();
            let (vals, vecs) = hermitian_eigen(sigma);
            let mut kraus = Vec::new();
            for (j, &l) in vals.iter().enumerate() {
                if l <= 1e-15 {
                    continue;
                }
                for i in 0..d {
                    let mut k = CMatrix::zeros(d, d);
                    k.set_column(i, &vecs.column(j).scale(l.sqrt()));
                    kraus.push(k);
                }
            }
            KrausChannel::new(kraus)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ket_bra, pauli_x, real_diag};
    use crate::random;
    use proptest::prelude::*;

    fn depolarizing_matrix() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for &(r, c) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(r, c)] = re(0.5);
        }
        m
    }

    fn depolarizing_kraus() -> KrausChannel {
        let s = 0.5f64.sqrt();
        KrausChannel::new(vec![
            ket_bra(2, 0, 0).scale(s),
            ket_bra(2, 0, 1).scale(s),
            ket_bra(2, 1, 0).scale(s),
            ket_bra(2, 1, 1).scale(s),
        ])
        .unwrap()
    }

    #[test]
    fn vectorization_convention() {
        let a = CMatrix::from_fn(2, 2, |i, j| C64::new((i * 2 + j) as f64, 0.3));
        let b = CMatrix::from_fn(2, 2, |i, j| C64::new(1.0 - j as f64, i as f64));
        let x = CMatrix::from_fn(2, 2, |i, j| C64::new(i as f64 + 0.5, -(j as f64)));
        let lhs = vectorize(&(&a * &x * b.adjoint()));
        let rhs = kron(&a, &conj(&b)) * vectorize(&x);
        assert!((lhs - rhs).norm() < 1e-14);
        assert_eq!(unvectorize(&vectorize(&x), 2), x);
    }

    #[test]
    fn kraus_to_superop_examples() {
        let pinch = KrausChannel::new(vec![ket_bra(2, 0, 0), ket_bra(2, 1, 1)]).unwrap();
        assert_eq!(
            kraus_to_superop(&pinch).matrix,
            real_diag(&[1.0, 0.0, 0.0, 1.0])
        );
        let id = KrausChannel::new(vec![identity(2)]).unwrap();
        assert_eq!(kraus_to_superop(&id).matrix, identity(4));
        let dep = kraus_to_superop(&depolarizing_kraus());
        assert!(fro_norm(&(dep.matrix - depolarizing_matrix())) < 1e-15);
    }

    #[test]
    fn kraus_shape_mismatch() {
        assert!(KrausChannel::new(vec![identity(2), identity(3)]).is_err());
        assert!(KrausChannel::new(vec![]).is_err());
    }

    #[test]
    fn superop_to_kraus_examples() {
        let pinch = SuperOp::new(real_diag(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        let k = superop_to_kraus(&pinch, 1e-9).unwrap();
        assert_eq!(k.kraus.len(), 2);
        assert!(approx_eq(&kraus_to_superop(&k).matrix, &pinch.matrix, 1e-12));
        // Each operator is diagonal (a unitary mixing of the two projectors).
        for a in &k.kraus {
            assert!(a[(0, 1)].norm() < 1e-12 && a[(1, 0)].norm() < 1e-12);
        }

        let k = superop_to_kraus(&SuperOp::identity(2), 1e-9).unwrap();
        assert_eq!(k.kraus.len(), 1);
        let a = &k.kraus[0];
        assert!(approx_eq(a, &identity(2).map(|z| z * a[(0, 0)]), 1e-12));
        assert!((a[(0, 0)].norm() - 1.0).abs() < 1e-12);

        let dep = SuperOp::new(depolarizing_matrix()).unwrap();
        assert_eq!(superop_to_kraus(&dep, 1e-9).unwrap().kraus.len(), 4);
    }

    #[test]
    fn superop_to_kraus_rejects_non_cp() {
        let flip = SuperOp::new(swap(2)).unwrap(); // transpose map
        assert!(matches!(
            superop_to_kraus(&flip, 1e-9),
            Err(Error::NotCompletelyPositive(_))
        ));
        let mut m = identity(4);
        m[(0, 1)] = re(1.0);
        assert!(matches!(
            superop_to_kraus(&SuperOp::new(m).unwrap(), 1e-9),
            Err(Error::NotHermiticityPreserving(_))
        ));
    }

    #[test]
    fn cptp_examples() {
        assert!(is_cptp(&SuperOp::identity(2), 1e-9).ok());
        let x = SuperOp::new(kron(&pauli_x(), &pauli_x())).unwrap();
        assert!(is_cptp(&x, 1e-9).ok());
        let two = SuperOp::new(identity(4).scale(2.0)).unwrap();
        let r = is_cptp(&two, 1e-9);
        assert!(r.completely_positive && !r.trace_preserving);
    }

    #[test]
    fn projector_channel_examples() {
        assert!(is_projector_channel(
            &SuperOp::new(real_diag(&[1.0, 0.0, 0.0, 1.0])).unwrap(),
            1e-9
        ));
        assert!(is_projector_channel(&SuperOp::identity(2), 1e-9));
        let p = (1.0 + (-2f64).exp()) / 2.0;
        let q = (1.0 - (-2f64).exp()) / 2.0;
        let mut bracket = CMatrix::zeros(4, 4);
        bracket[(0, 0)] = re(p);
        bracket[(3, 3)] = re(p);
        bracket[(0, 3)] = re(q);
        bracket[(3, 0)] = re(q);
        assert!(!is_projector_channel(&SuperOp::new(bracket).unwrap(), 1e-9));
    }

    #[test]
    fn compose_examples() {
        let pinch = SuperOp::new(real_diag(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(compose(&pinch, &pinch).unwrap().matrix, pinch.matrix);
        assert_eq!(
            compose(&pinch, &SuperOp::identity(2)).unwrap().matrix,
            pinch.matrix
        );
        assert!(compose(&pinch, &SuperOp::identity(3)).is_err());
    }

    #[test]
    fn builtin_examples() {
        let pinch = builtin(&Builtin::Pinching(identity(2))).unwrap();
        assert_eq!(
            kraus_to_superop(&pinch).matrix,
            real_diag(&[1.0, 0.0, 0.0, 1.0])
        );
        let dep = builtin(&Builtin::Depolarize(identity(2).scale(0.5))).unwrap();
        assert!(fro_norm(&(kraus_to_superop(&dep).matrix - depolarizing_matrix())) < 1e-15);
        let id = builtin(&Builtin::Identity(3)).unwrap();
        assert_eq!(kraus_to_superop(&id).matrix, identity(9));
        assert!(builtin(&Builtin::Depolarize(identity(2))).is_err());
    }

    #[test]
    fn depolarize_acts_as_replacement() {
        let mut r = random::rng(11);
        let sigma = random::random_density(3, 0.1, &mut r);
        let ch = builtin(&Builtin::Depolarize(sigma.clone())).unwrap();
        let rho = random::random_density(3, 0.0, &mut r);
        assert!(approx_eq(&ch.apply(&rho), &sigma, 1e-12));
    }

    #[test]
    fn choi_of_kraus_is_sum_of_projectors() {
        let mut r = random::rng(5);
        let ks = random::random_cptp_kraus(2, 3, &mut r);
        let e = kraus_to_superop(&KrausChannel::new(ks.clone()).unwrap());
        let j = ks.iter().fold(CMatrix::zeros(4, 4), |acc, a| {
            let v = vectorize(a);
            acc + &v * v.adjoint()
        });
        assert!(approx_eq(&choi(&e).matrix, &j, 1e-13));
        assert!(approx_eq(&reshuffle(&j, 2), &e.matrix, 1e-13));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kraus_round_trip(seed in any::<u64>(), dim in 1usize..=4, count in 1usize..=4) {
            let mut r = random::rng(seed);
            let ch = KrausChannel::new(random::random_cptp_kraus(dim, count, &mut r)).unwrap();
            let e = kraus_to_superop(&ch);
            let back = superop_to_kraus(&e, 1e-12).unwrap();
            prop_assert!(back.kraus.len() <= count);
            prop_assert!(approx_eq(&kraus_to_superop(&back).matrix, &e.matrix, 1e-9));
            prop_assert!(is_cptp(&e, 1e-9).ok());
            // Hilbert–Schmidt orthogonality of the extracted operators.
            for i in 0..back.kraus.len() {
                for j in 0..i {
                    let ip = (back.kraus[i].adjoint() * &back.kraus[j]).trace();
                    prop_assert!(ip.norm() < 1e-9);
                }
            }
        }

        #[test]
        fn cp_matches_choi_sign(seed in any::<u64>(), dim in 1usize..=3) {
            let mut r = random::rng(seed);
            let h = random::random_hermitian(dim * dim, &mut r);
            let e = SuperOp::new(reshuffle(&h, dim)).unwrap();
            let (vals, _) = hermitian_eigen(&h);
            let min = *vals.last().unwrap();
            prop_assume!(min.abs() > 1e-6);
            prop_assert_eq!(is_cptp(&e, 1e-9).completely_positive, min >= 0.0);
        }

        #[test]
        fn projector_rank_equals_trace(seed in any::<u64>(), dim in 1usize..=4) {
            let mut r = random::rng(seed);
            let sigma = random::random_density(dim, 0.2, &mut r);
            let p = kraus_to_superop(&builtin(&Builtin::Depolarize(sigma)).unwrap());
            prop_assert!(is_projector_channel(&p, 1e-9));
            let rank = crate::numerics::rank(&p.matrix, 1e-9) as f64;
            prop_assert!((trace(&p.matrix).re - rank).abs() < 1e-6);
        }
    }
}
