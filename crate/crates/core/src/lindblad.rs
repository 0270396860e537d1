//! Lindblad generators `L(ρ) = Qρ + ρQ† + Σ R_α ρ R_α†` with
//! `Q = −iH − ½ Σ R_α†R_α`, their superoperator matrices, and the
//! conditional-positivity test used to recognise valid generators.

use serde::Serialize;

use crate::channels::{reshuffle, swap, unvectorize, vec_identity, vectorize, SuperOp};
use crate::error::{Error, Result};
use crate::numerics::{
    conj, determinant, eigenvalues, ensure_finite, ensure_square, expm, fro_norm, hermitian_eigen,
    hermitian_part, hermiticity_defect, identity, kron, logm_principal, re, CMatrix, C64,
    EIGEN_CLUSTER_GAP,
};

#[derive(Clone, Debug)]
pub struct Lindblad {
    pub dim: usize,
    pub hamiltonian: CMatrix,
    pub jumps: Vec<CMatrix>,
}

impl Lindblad {
    pub fn new(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self> {
        let dim = ensure_square(&hamiltonian)?;
        ensure_finite(&hamiltonian, "Hamiltonian")?;
        let defect = hermiticity_defect(&hamiltonian);
        if defect > 1e-10 * fro_norm(&hamiltonian).max(1.0) {
            return Err(Error::NotHermitian(format!(
                "Hamiltonian anti-Hermitian part has norm {defect:.3e}"
            )));
        }
        for (i, r) in jumps.iter().enumerate() {
            if r.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "jump {i} is {}x{}, expected {dim}x{dim}",
                    r.nrows(),
                    r.ncols()
                )));
            }
            ensure_finite(r, "jump operator")?;
        }
        Ok(Self {
            dim,
            hamiltonian: hermitian_part(&hamiltonian),
            jumps,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            hamiltonian: CMatrix::zeros(dim, dim),
            jumps: Vec::new(),
        }
    }

    /// Number of jump operators `q`.
    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn q(&self) -> CMatrix {
        q_unchecked(&self.hamiltonian, &self.jumps)
    }
}

#[derive(Clone, Debug)]
pub struct LiouvillianMatrix {
    pub dim: usize,
    pub matrix: CMatrix,
}

impl LiouvillianMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let s = SuperOp::new(matrix)?;
        Ok(Self {
            dim: s.dim,
            matrix: s.matrix,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            matrix: CMatrix::zeros(dim * dim, dim * dim),
        }
    }
}

fn q_unchecked(h: &CMatrix, jumps: &[CMatrix]) -> CMatrix {
    let d = h.nrows();
    let damping = jumps
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, r| acc + r.adjoint() * r);
    h.map(|z| z * C64::new(0.0, -1.0)) - damping.scale(0.5)
}

/// `Q = −iH − ½ Σ R_α†R_α`.
pub fn q_from(h: &CMatrix, jumps: &[CMatrix]) -> Result<CMatrix> {
    let g = Lindblad::new(h.clone(), jumps.to_vec())?;
    Ok(g.q())
}

/// `Q ⊗ I + I ⊗ Q̄ + Σ R_α ⊗ R̄_α` for an arbitrary drift `q` and jumps, with
/// the jump terms weighted by `signs` (all `+1` for the plain Liouvillian).
pub fn assemble(q: &CMatrix, jumps: &[CMatrix], signs: &[f64]) -> CMatrix {
    let d = q.nrows();
    let id = identity(d);
    let mut l = kron(q, &id) + kron(&id, &conj(q));
    for (r, &s) in jumps.iter().zip(signs) {
        l += kron(r, &conj(r)).scale(s);
    }
    l
}

pub fn liouvillian_matrix(g: &Lindblad) -> LiouvillianMatrix {
    let signs = vec![1.0; g.jumps.len()];
    LiouvillianMatrix {
        dim: g.dim,
        matrix: assemble(&g.q(), &g.jumps, &signs),
    }
}

/// `e^{tL}` as a superoperator.
pub fn channel_at(g: &Lindblad, t: f64) -> Result<SuperOp> {
    exp_generator(&liouvillian_matrix(g), t)
}

pub fn exp_generator(l: &LiouvillianMatrix, t: f64) -> Result<SuperOp> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} must be ≥ 0")));
    }
    let e = expm(&l.matrix.scale(t), 1e-12)?;
    let out = SuperOp {
        dim: l.dim,
        matrix: e,
    };
    debug_assert!(
        crate::channels::is_cptp(&out, 1e-6).ok() || !is_generator(l, 1e-9).is_generator,
        "exponential of a generator must be CPTP"
    );
    Ok(out)
}

/// Projects onto the Hermiticity-preserving part: `(L + S L̄ S) / 2`.
pub fn hp_symmetrize(m: &CMatrix, dim: usize) -> CMatrix {
    let s = swap(dim);
    (m + &s * conj(m) * &s).scale(0.5)
}

/// Projector `I − |ω⟩⟨ω|` onto the complement of the maximally entangled
/// direction `ω = |I⟩/√D`.
pub fn complement_of_identity(dim: usize) -> CMatrix {
    let w = vec_identity(dim) / re((dim as f64).sqrt());
    identity(dim * dim) - &w * w.adjoint()
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorReport {
    pub is_generator: bool,
    /// `‖⟨⟨I| L‖`.
    pub trace_annihilation_defect: f64,
    pub hermiticity_defect: f64,
    /// Smallest eigenvalue of the Choi matrix compressed to `ω⊥`.
    pub min_conditional_eigenvalue: f64,
}

pub fn is_generator(l: &LiouvillianMatrix, tol: f64) -> GeneratorReport {
    let d = l.dim;
    let scale = fro_norm(&l.matrix).max(1.0);
    let vi = vec_identity(d);
    let ta = (vi.transpose() * &l.matrix).norm();
    let j = reshuffle(&l.matrix, d);
    let herm = hermiticity_defect(&j);
    let perp = complement_of_identity(d);
    let k = &perp * hermitian_part(&j) * &perp;
    let (vals, _) = hermitian_eigen(&k);
    let min = vals.last().copied().unwrap_or(0.0);
    GeneratorReport {
        is_generator: ta <= tol * scale && herm <= tol * scale && min >= -tol * scale,
        trace_annihilation_defect: ta,
        hermiticity_defect: herm,
        min_conditional_eigenvalue: min,
    }
}

/// Splits a generator into a Hamiltonian and a minimal set of traceless jump
/// operators (one per positive eigenvalue of the dissipative Choi block).
/// The trace of `H` is fixed to zero.
pub fn decompose_generator(l: &LiouvillianMatrix, tol: f64) -> Result<Lindblad> {
    let d = l.dim;
    let report = is_generator(l, tol);
    if !report.is_generator {
        return Err(Error::NotGenerator(format!(
            "trace defect {:.3e}, Hermiticity defect {:.3e}, conditional eigenvalue {:.3e}",
            report.trace_annihilation_defect,
            report.hermiticity_defect,
            report.min_conditional_eigenvalue
        )));
    }
    let lm = hp_symmetrize(&l.matrix, d);
    let j = hermitian_part(&reshuffle(&lm, d));
    let perp = complement_of_identity(d);
    let k = &perp * &j * &perp;
    let (vals, vecs) = hermitian_eigen(&k);
    let scale = fro_norm(&lm).max(1.0);
    let lmax = vals.first().copied().unwrap_or(0.0);
    let cutoff = tol * scale.max(lmax);
    let mut jumps = Vec::new();
    let mut dissipative = CMatrix::zeros(d * d, d * d);
    for (idx, &lam) in vals.iter().enumerate() {
        if lam <= cutoff {
            break;
        }
        let v = vecs.column(idx).into_owned();
        dissipative += (&v * v.adjoint()).scale(lam);
        jumps.push(unvectorize(&v, d).scale(lam.sqrt()));
    }
    let jm = &j - dissipative;
    let vi = vec_identity(d);
    let tr_q = (vi.adjoint() * &jm * &vi)[(0, 0)].re / (2.0 * d as f64);
    let qv = (&jm * &vi - vi.scale(tr_q)) / re(d as f64);
    let q = unvectorize(&qv, d);
    let damping = jumps
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, r| acc + r.adjoint() * r);
    let minus_i_h = &q + damping.scale(0.5);
    let mut h = hermitian_part(&minus_i_h.map(|z| z * C64::new(0.0, 1.0)));
    let shift = h.trace() / re(d as f64);
    for i in 0..d {
        h[(i, i)] -= shift;
    }
    Lindblad::new(h, jumps)
}

#[derive(Clone, Debug)]
pub enum MarkovianVerdict {
    Yes(LiouvillianMatrix),
    No(String),
    Inconclusive(String),
}

/// Principal-branch Markovianity test.
///
/// A singular channel or one with negative determinant has no
/// Hermiticity-preserving logarithm, so the answer is `No`. A principal
/// logarithm that fails the generator test is only conclusive when the
/// spectrum is real, positive and non-degenerate, because then it is the
/// unique Hermiticity-preserving logarithm.
pub fn markovian_test(e: &SuperOp, tol: f64) -> MarkovianVerdict {
    let d = e.dim;
    let log = match logm_principal(&e.matrix) {
        Ok(l) => l,
        Err(Error::Singular(z)) => {
            return MarkovianVerdict::No(format!(
                "channel is singular (eigenvalue {:.3e}); Markovian channels are invertible",
                z.norm()
            ))
        }
        Err(Error::BranchCut(z)) => {
            return match determinant(&e.matrix) {
                Ok(det) if det.re < 0.0 && det.im.abs() <= 1e-9 * det.norm().max(1e-300) => {
                    MarkovianVerdict::No(format!(
                        "determinant {:.6e} is negative, so no real logarithm exists",
                        det.re
                    ))
                }
                _ => MarkovianVerdict::Inconclusive(format!(
                    "eigenvalue {:.6}{:+.6}i on the branch cut of the principal logarithm",
                    z.re, z.im
                )),
            }
        }
        Err(other) => return MarkovianVerdict::Inconclusive(other.to_string()),
    };
    let l = LiouvillianMatrix {
        dim: d,
        matrix: hp_symmetrize(&log, d),
    };
    let report = is_generator(&l, tol);
    if report.is_generator {
        return MarkovianVerdict::Yes(l);
    }
    let detail = format!(
        "principal logarithm is not a generator (trace defect {:.3e}, conditional eigenvalue {:.3e})",
        report.trace_annihilation_defect, report.min_conditional_eigenvalue
    );
    match eigenvalues(&e.matrix) {
        Ok(ev) if unique_real_log(&ev) => MarkovianVerdict::No(detail),
        _ => MarkovianVerdict::Inconclusive(format!(
            "{detail}; other logarithm branches were not searched"
        )),
    }
}

fn unique_real_log(ev: &[C64]) -> bool {
    let real_positive = ev.iter().all(|z| z.im.abs() < EIGEN_CLUSTER_GAP && z.re > 0.0);
    let distinct = ev.iter().enumerate().all(|(i, a)| {
        ev.iter()
            .skip(i + 1)
            .all(|b| (a - b).norm() >= EIGEN_CLUSTER_GAP)
    });
    real_positive && distinct
}

/// Convenience: vectorized action of a generator on a matrix.
pub fn apply_generator(l: &LiouvillianMatrix, rho: &CMatrix) -> CMatrix {
    unvectorize(&(&l.matrix * vectorize(rho)), l.dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::is_cptp;
    use crate::numerics::{approx_eq, ket_bra, pauli_x, pauli_z, real_diag};
    use crate::random;
    use proptest::prelude::*;

    fn bracket(gamma: f64) -> Lindblad {
        Lindblad::new(CMatrix::zeros(2, 2), vec![pauli_x().scale(gamma.sqrt())]).unwrap()
    }

    fn depolarizing_generator() -> Lindblad {
        let s = 0.5f64.sqrt();
        Lindblad::new(
            CMatrix::zeros(2, 2),
            vec![ket_bra(2, 0, 1).scale(s), ket_bra(2, 1, 0).scale(s)],
        )
        .unwrap()
    }

    pub(crate) fn random_lindblad(dim: usize, jumps: usize, rng: &mut random::SeededRng) -> Lindblad {
        let h = random::random_hermitian(dim, rng).scale(0.3);
        let rs = (0..jumps)
            .map(|_| random::ginibre(dim, dim, rng).scale(0.4))
            .collect();
        Lindblad::new(h, rs).unwrap()
    }

    #[test]
    fn q_examples() {
        assert_eq!(q_from(&CMatrix::zeros(2, 2), &[]).unwrap(), CMatrix::zeros(2, 2));
        let q = q_from(&CMatrix::zeros(2, 2), &[pauli_x().scale(0.7f64.sqrt())]).unwrap();
        assert!(approx_eq(&q, &identity(2).scale(-0.35), 1e-15));
        let q = q_from(&pauli_z(), &[ket_bra(2, 0, 1)]).unwrap();
        let expected = pauli_z().map(|z| z * C64::new(0.0, -1.0)) - ket_bra(2, 1, 1).scale(0.5);
        assert!(approx_eq(&q, &expected, 1e-15));
        assert!(q_from(&ket_bra(2, 0, 1), &[]).is_err());
    }

    #[test]
    fn liouvillian_examples() {
        assert_eq!(liouvillian_matrix(&Lindblad::zero(2)).matrix, CMatrix::zeros(4, 4));
        let l = liouvillian_matrix(&bracket(1.0)).matrix;
        let expected = kron(&pauli_x(), &pauli_x()) - identity(4);
        assert!(approx_eq(&l, &expected, 1e-15));

        let thermo = Lindblad::new(CMatrix::zeros(2, 2), vec![ket_bra(2, 0, 0), ket_bra(2, 1, 1)])
            .unwrap();
        let lt = liouvillian_matrix(&thermo);
        for i in 0..2 {
            for j in 0..2 {
                let out = apply_generator(&lt, &ket_bra(2, i, j));
                let want = if i == j { 0.0 } else { -1.0 };
                assert!(approx_eq(&out, &ket_bra(2, i, j).scale(want), 1e-15));
            }
        }
    }

    #[test]
    fn liouvillian_annihilates_trace() {
        let mut r = random::rng(1);
        let g = random_lindblad(3, 2, &mut r);
        let l = liouvillian_matrix(&g);
        assert!((vec_identity(3).transpose() * &l.matrix).norm() < 1e-14);
    }

    #[test]
    fn channel_at_examples() {
        assert!(approx_eq(&channel_at(&bracket(1.0), 0.0).unwrap().matrix, &identity(4), 1e-15));
        assert!(channel_at(&bracket(1.0), -1.0).is_err());
        let e = channel_at(&bracket(1.0), 1.0).unwrap();
        let mut ev: Vec<f64> = eigenvalues(&e.matrix).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        let e2 = (-2f64).exp();
        for (got, want) in ev.iter().zip([e2, e2, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn depolarizing_closed_form() {
        let g = depolarizing_generator();
        let rs = &g.jumps;
        for &l in &[0.5, 2.0, 10.0] {
            let e = channel_at(&g, l).unwrap();
            let mut closed = identity(4);
            for a in 0..2 {
                let r = &rs[a];
                let rr = r * &rs[(a + 1) % 2];
                closed += kron(r, &conj(r)).scale(2.0 * (l / 2.0).sinh());
                closed += kron(&rr, &conj(&rr)).scale(4.0 * ((l / 2.0).cosh() - 1.0));
            }
            closed = closed.scale((-l / 2.0).exp());
            assert!(fro_norm(&(e.matrix - closed)) < 1e-12, "l = {l}");
        }
    }

    #[test]
    fn generator_examples() {
        let b = liouvillian_matrix(&bracket(1.0));
        assert!(is_generator(&b, 1e-9).is_generator);
        let flipped = LiouvillianMatrix::new(identity(4) - kron(&pauli_x(), &pauli_x())).unwrap();
        assert!(!is_generator(&flipped, 1e-9).is_generator);
        assert!(is_generator(&LiouvillianMatrix::zero(2), 1e-9).is_generator);
    }

    #[test]
    fn markovian_examples() {
        let l = liouvillian_matrix(&bracket(1.0));
        let e = exp_generator(&l, 0.7).unwrap();
        match markovian_test(&e, 1e-9) {
            MarkovianVerdict::Yes(rec) => {
                assert!(fro_norm(&(rec.matrix - l.matrix.scale(0.7))) < 1e-7)
            }
            other => panic!("expected yes, got {other:?}"),
        }
        let ferro = SuperOp::new(real_diag(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(markovian_test(&ferro, 1e-9), MarkovianVerdict::No(_)));
        let aklt = SuperOp::new(real_diag(&[1.0, -1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0])).unwrap();
        assert!(matches!(markovian_test(&aklt, 1e-9), MarkovianVerdict::No(_)));
    }

    #[test]
    fn markovian_test_rejects_non_markovian_invertible_channel() {
        // A Pauli channel is a semigroup element only if λx ≥ λy·λz (and
        // cyclic); 0.3 < 0.35·0.9 violates this while staying CPTP.
        let (lx, ly, lz) = (0.3, 0.35, 0.9);
        let e = pauli_diagonal_channel(lx, ly, lz);
        assert!(is_cptp(&e, 1e-9).ok());
        assert!(matches!(markovian_test(&e, 1e-9), MarkovianVerdict::No(_)));
    }

    fn pauli_diagonal_channel(lx: f64, ly: f64, lz: f64) -> SuperOp {
        // Pauli channel with eigenvalues 1, lx, ly, lz on I, σx, σy, σz.
        let paulis = [identity(2), pauli_x(), crate::numerics::pauli_y(), pauli_z()];
        let lambdas = [1.0, lx, ly, lz];
        let mut m = CMatrix::zeros(4, 4);
        for (p, l) in paulis.iter().zip(lambdas) {
            let v = vectorize(p);
            m += (&v * v.adjoint()).scale(l / 2.0);
        }
        SuperOp::new(m).unwrap()
    }

    #[test]
    fn decompose_recovers_bracket() {
        let g = decompose_generator(&liouvillian_matrix(&bracket(1.0)), 1e-9).unwrap();
        assert_eq!(g.jumps.len(), 1);
        let r = &g.jumps[0];
        let rr = kron(r, &conj(r));
        assert!(approx_eq(&rr, &kron(&pauli_x(), &pauli_x()), 1e-12));
        assert!(fro_norm(&g.hamiltonian) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn semigroup_law(seed in any::<u64>(), dim in 1usize..=3, q in 0usize..=3, s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let mut r = random::rng(seed);
            let g = random_lindblad(dim, q, &mut r);
            let a = channel_at(&g, s).unwrap().matrix;
            let b = channel_at(&g, t).unwrap().matrix;
            let ab = channel_at(&g, s + t).unwrap().matrix;
            prop_assert!(approx_eq(&(a * b), &ab, 1e-8));
        }

        #[test]
        fn exponentials_are_cptp(seed in any::<u64>(), dim in 1usize..=3, q in 0usize..=3) {
            let mut r = random::rng(seed);
            let g = random_lindblad(dim, q, &mut r);
            for &t in &[0.1, 1.0, 10.0] {
                prop_assert!(is_cptp(&channel_at(&g, t).unwrap(), 1e-9).ok());
            }
        }

        #[test]
        fn markovian_round_trip(seed in any::<u64>(), dim in 1usize..=3, q in 1usize..=3) {
            let mut r = random::rng(seed);
            let g = random_lindblad(dim, q, &mut r);
            let l = liouvillian_matrix(&g);
            let e = channel_at(&g, 1.0).unwrap();
            let ev = eigenvalues(&l.matrix).unwrap();
            prop_assume!(ev.iter().all(|z| z.im.abs() < 3.0));
            match markovian_test(&e, 1e-9) {
                MarkovianVerdict::Yes(rec) => prop_assert!(approx_eq(&rec.matrix, &l.matrix, 1e-6)),
                other => prop_assert!(false, "expected yes, got {:?}", other),
            }
        }

        #[test]
        fn expm_logm_round_trip(seed in any::<u64>(), dim in 1usize..=3, q in 0usize..=3) {
            let mut r = random::rng(seed);
            let g = random_lindblad(dim, q, &mut r);
            let mut l = liouvillian_matrix(&g).matrix;
            let n = fro_norm(&l);
            if n > 2.0 {
                l = l.scale(2.0 / n);
            }
            let back = logm_principal(&expm(&l, 1e-12).unwrap()).unwrap();
            prop_assert!(fro_norm(&(back - &l)) <= 1e-7);
        }

        #[test]
        fn decompose_round_trip(seed in any::<u64>(), dim in 1usize..=3, q in 0usize..=3) {
            let mut r = random::rng(seed);
            let g = random_lindblad(dim, q, &mut r);
            let l = liouvillian_matrix(&g);
            let back = decompose_generator(&l, 1e-9).unwrap();
            prop_assert!(back.jumps.len() <= q.max(0).min(dim * dim - 1));
            prop_assert!(approx_eq(&liouvillian_matrix(&back).matrix, &l.matrix, 1e-9));
        }
    }
}
