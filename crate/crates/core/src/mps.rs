//! Translationally invariant MPS: transfer matrix, small dense states,
//! discrete expectation values and the continuum-limit verdict.

use crate::channels::SuperOp;
use crate::divisibility::{is_infinitely_divisible, DivisibilityVerdict};
use crate::error::{Error, Result};
use crate::numerics::{
    conj, eigenvalues, ensure_finite, fro_norm, identity, ket_bra, kron, matrix_power,
    pauli_x, pauli_y, pauli_z, psd_sqrt_pair, re, CMatrix, CVector, C64,
};

/// Largest number of coefficients `dense_state` will allocate.
pub const DENSE_STATE_LIMIT: usize = 10_000_000;

#[derive(Clone, Debug)]
pub struct MpsTensor {
    pub d: usize,
    pub bond_dim: usize,
    pub matrices: Vec<CMatrix>,
    pub spacing: f64,
}

impl MpsTensor {
    pub fn new(matrices: Vec<CMatrix>, spacing: f64) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidArgument("tensor needs at least one matrix".into()))?;
        let bond = first.nrows();
        if bond == 0 {
            return Err(Error::InvalidArgument("bond dimension must be positive".into()));
        }
        for (i, a) in matrices.iter().enumerate() {
            if a.nrows() != bond || a.ncols() != bond {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {i} is {}x{}, expected {bond}x{bond}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            ensure_finite(a, "tensor matrix")?;
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing} must be positive")));
        }
        Ok(Self {
            d: matrices.len(),
            bond_dim: bond,
            matrices,
            spacing,
        })
    }
}

/// `Σ_i A_i ⊗ Ā_i`.
pub fn transfer_matrix(t: &MpsTensor) -> SuperOp {
    let n = t.bond_dim;
    let mut m = CMatrix::zeros(n * n, n * n);
    for a in &t.matrices {
        m += kron(a, &conj(a));
    }
    SuperOp { dim: n, matrix: m }
}

/// Gauge and rescale the tensor so that its transfer matrix is trace
/// preserving: `A_i ↦ X^{1/2} A_i X^{-1/2} / √λ` with `X` the dominant fixed
/// point of the dual map and `λ` its eigenvalue.
pub fn normalize_tp(t: &MpsTensor) -> Result<MpsTensor> {
    let e = transfer_matrix(t);
    let lambda = eigenvalues(&e.matrix)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if lambda <= 0.0 {
        return Err(Error::Singular(re(0.0)));
    }
    // Averaged power iteration on Y ↦ Σ A†YA / λ; the average removes the
    // peripheral phases that plain iteration would cycle through.
    let n = t.bond_dim;
    let dual = |y: &CMatrix| -> CMatrix {
        let mut out = CMatrix::zeros(n, n);
        for a in &t.matrices {
            out += a.adjoint() * y * a;
        }
        out.unscale(lambda)
    };
    let mut y = identity(n);
    let mut converged = false;
    for _ in 0..20_000 {
        let next = (&y + dual(&y)).scale(0.5);
        let next = next.unscale(fro_norm(&next));
        let delta = fro_norm(&(&next - &y));
        y = next;
        if delta < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged || fro_norm(&(dual(&y) - &y)) > 1e-10 {
        return Err(Error::NoConvergence("dominant fixed point search"));
    }
    let (sqrt, inv_sqrt) = psd_sqrt_pair(&crate::numerics::hermitian_part(&y))?;
    let s = 1.0 / lambda.sqrt();
    let matrices = t
        .matrices
        .iter()
        .map(|a| (&sqrt * a * &inv_sqrt).scale(s))
        .collect();
    MpsTensor::new(matrices, t.spacing)
}

/// Coefficients `tr(A_{i_1}⋯A_{i_N})` of the unnormalized state, with the
/// first site as the most significant digit.
pub fn dense_state(t: &MpsTensor, n: usize) -> Result<CVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("state needs at least one site".into()));
    }
    let size = (0..n).try_fold(1usize, |acc, _| {
        acc.checked_mul(t.d).filter(|&s| s <= DENSE_STATE_LIMIT)
    });
    let size = size.ok_or_else(|| {
        Error::SizeGuard(format!("d^N = {}^{n} exceeds {DENSE_STATE_LIMIT}", t.d))
    })?;
    let mut out = CVector::zeros(size);
    // prefix[k] = A_{i_1}⋯A_{i_k}; updated like an odometer.
    let mut digits = vec![0usize; n];
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(identity(t.bond_dim));
    for k in 0..n {
        let next = &prefix[k] * &t.matrices[0];
        prefix.push(next);
    }
    for slot in out.iter_mut() {
        *slot = prefix[n].trace();
        // Advance the odometer and rebuild the changed suffix.
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < t.d {
                break;
            }
            digits[pos] = 0;
        }
        if digits.iter().all(|&x| x == 0) {
            break;
        }
        for k in pos..n {
            prefix[k + 1] = &prefix[k] * &t.matrices[digits[k]];
        }
    }
    Ok(out)
}

/// Site transfer matrix with an operator inserted: `Σ_{ij} O_{ij} A_j ⊗ Ā_i`.
pub fn transfer_with(t: &MpsTensor, op: &CMatrix) -> Result<CMatrix> {
    if op.nrows() != t.d || op.ncols() != t.d {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, physical dimension is {}",
            op.nrows(),
            op.ncols(),
            t.d
        )));
    }
    let n = t.bond_dim;
    let mut m = CMatrix::zeros(n * n, n * n);
    for i in 0..t.d {
        let ai = conj(&t.matrices[i]);
        for j in 0..t.d {
            let o = op[(i, j)];
            if o != C64::new(0.0, 0.0) {
                m += kron(&t.matrices[j], &ai) * o;
            }
        }
    }
    Ok(m)
}

/// `⟨V_N|O₁(s₁) O₂(s₂)|V_N⟩ / ⟨V_N|V_N⟩` by transfer-matrix contraction.
/// When both sites coincide the product `O₁O₂` is inserted.
pub fn discrete_two_point(
    t: &MpsTensor,
    n: usize,
    op1: &CMatrix,
    site1: usize,
    op2: &CMatrix,
    site2: usize,
) -> Result<C64> {
    if site1 >= n || site2 >= n {
        return Err(Error::InvalidArgument(format!(
            "sites {site1}, {site2} outside a chain of {n}"
        )));
    }
    let e = transfer_matrix(t).matrix;
    let norm = matrix_power(&e, n).trace();
    if norm.norm() <= f64::MIN_POSITIVE {
        return Err(Error::InvalidArgument("state has zero norm".into()));
    }
    let value = if site1 == site2 {
        let with = transfer_with(t, &(op1 * op2))?;
        (matrix_power(&e, site1) * with * matrix_power(&e, n - site1 - 1)).trace()
    } else {
        let ((s1, o1), (s2, o2)) = if site1 < site2 {
            ((site1, op1), (site2, op2))
        } else {
            ((site2, op2), (site1, op1))
        };
        let e1 = transfer_with(t, o1)?;
        let e2 = transfer_with(t, o2)?;
        (matrix_power(&e, s1) * e1 * matrix_power(&e, s2 - s1 - 1) * e2 * matrix_power(&e, n - s2 - 1))
            .trace()
    };
    Ok(value / norm)
}

/// One-point function `⟨O(site)⟩`.
pub fn discrete_one_point(t: &MpsTensor, n: usize, op: &CMatrix, site: usize) -> Result<C64> {
    discrete_two_point(t, n, op, site, &identity(t.d), site)
}

pub fn has_continuum_limit(t: &MpsTensor, tol: f64) -> Result<DivisibilityVerdict> {
    is_infinitely_divisible(&transfer_matrix(t), t.spacing, tol)
}

/// Orthonormal basis `{I, σx, σy, σz}/√2` as columns of vectorized matrices.
pub fn pauli_basis() -> CMatrix {
    let mats = [identity(2), pauli_x(), pauli_y(), pauli_z()];
    let mut out = CMatrix::zeros(4, 4);
    for (k, m) in mats.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                out[(i * 2 + j, k)] = m[(i, j)] / std::f64::consts::SQRT_2;
            }
        }
    }
    out
}

/// Named fixture tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preset {
    Ferro,
    Antiferro,
    Depolarizing,
    Bracket { gamma: f64 },
    Aklt,
    Identity,
}

impl Preset {
    pub const NAMES: [&'static str; 6] = ["ferro", "antiferro", "depolarizing", "bracket", "aklt", "identity"];

    pub fn parse(name: &str, gamma: f64) -> Result<Self> {
        Ok(match name {
            "ferro" => Self::Ferro,
            "antiferro" => Self::Antiferro,
            "depolarizing" => Self::Depolarizing,
            "bracket" => Self::Bracket { gamma },
            "aklt" => Self::Aklt,
            "identity" => Self::Identity,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown preset {other:?}, expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn tensor(self, spacing: f64) -> Result<MpsTensor> {
        let k = |i, j| ket_bra(2, i, j);
        let matrices = match self {
            Self::Ferro => vec![k(0, 0), k(1, 1)],
            Self::Antiferro => vec![k(0, 1), k(1, 0)],
            Self::Depolarizing => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                vec![k(0, 0).scale(s), k(0, 1).scale(s), k(1, 0).scale(s), k(1, 1).scale(s)]
            }
            Self::Bracket { gamma } => {
                if !(gamma >= 0.0) || !gamma.is_finite() {
                    return Err(Error::InvalidArgument(format!("gamma {gamma} must be nonnegative")));
                }
                let (p, q) = bracket_weights(gamma);
                vec![
                    k(0, 0).scale(p.sqrt()),
                    k(1, 1).scale(p.sqrt()),
                    k(0, 1).scale(q.sqrt()),
                    k(1, 0).scale(q.sqrt()),
                ]
            }
            Self::Aklt => {
                let a0 = pauli_z().scale(1.0 / 3f64.sqrt());
                let w = (2.0f64 / 3.0).sqrt();
                vec![a0, k(1, 0).scale(w), k(0, 1).scale(-w)]
            }
            Self::Identity => vec![identity(2)],
        };
        MpsTensor::new(matrices, spacing)
    }
}

/// `(p, q) = ((1 + e^{-2γ})/2, (1 − e^{-2γ})/2)`.
pub fn bracket_weights(gamma: f64) -> (f64, f64) {
    let r = (-2.0 * gamma).exp();
    ((1.0 + r) / 2.0, (1.0 - r) / 2.0)
}

/// Number operator counting brackets in the four-letter bracket alphabet.
pub fn bracket_number_operator() -> CMatrix {
    let mut n = CMatrix::zeros(4, 4);
    n[(2, 2)] = re(1.0);
    n[(3, 3)] = re(1.0);
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divisibility::DivisibilityStatus;
    use crate::numerics::{approx_eq, real_diag};
    use proptest::prelude::*;

    fn preset(p: Preset) -> MpsTensor {
        p.tensor(1.0).unwrap()
    }

    #[test]
    fn transfer_examples() {
        assert!(approx_eq(
            &transfer_matrix(&preset(Preset::Ferro)).matrix,
            &real_diag(&[1.0, 0.0, 0.0, 1.0]),
            1e-15
        ));
        let (p, q) = bracket_weights(1.0);
        let e = transfer_matrix(&preset(Preset::Bracket { gamma: 1.0 })).matrix;
        // Independent oracle: entry-wise Kraus sum for the four rank-one matrices.
        let mut want = CMatrix::zeros(4, 4);
        want[(0, 0)] = re(p);
        want[(3, 3)] = re(p);
        want[(0, 3)] = re(q);
        want[(3, 0)] = re(q);
        assert!(approx_eq(&e, &want, 1e-15));
        let ferro = transfer_matrix(&preset(Preset::Ferro)).matrix;
        let anti = transfer_matrix(&preset(Preset::Antiferro)).matrix;
        assert!(approx_eq(&e, &(ferro.scale(p) + anti.scale(q)), 1e-15));
        let b = pauli_basis();
        let aklt = b.adjoint() * transfer_matrix(&preset(Preset::Aklt)).matrix * &b;
        assert!(approx_eq(&aklt, &real_diag(&[1.0, -1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]), 1e-14));
    }

    #[test]
    fn dense_state_examples() {
        let v = dense_state(&preset(Preset::Ferro), 3).unwrap();
        for (i, z) in v.iter().enumerate() {
            let want = if i == 0 || i == 7 { 1.0 } else { 0.0 };
            assert!((z - re(want)).norm() < 1e-15);
        }
        let (p, q) = bracket_weights(1.0);
        let v = dense_state(&preset(Preset::Bracket { gamma: 1.0 }), 2).unwrap();
        for (i, z) in v.iter().enumerate() {
            let want = match (i / 4, i % 4) {
                (0, 0) | (1, 1) => p,
                (2, 3) | (3, 2) => q,
                _ => 0.0,
            };
            assert!((z - re(want)).norm() < 1e-15, "index {i}");
        }
        let t = preset(Preset::Aklt);
        let v = dense_state(&t, 1).unwrap();
        for (z, a) in v.iter().zip(&t.matrices) {
            assert!((z - a.trace()).norm() < 1e-15);
        }
        assert!(matches!(dense_state(&t, 20), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn bracket_strings_are_balanced() {
        // A string survives when each symbol's "inside" state on the right
        // matches the next symbol's state on the left, cyclically:
        // dot stays outside, dash stays inside, '(' opens, ')' closes.
        let left = [0, 1, 0, 1];
        let right = [0, 1, 1, 0];
        let v = dense_state(&preset(Preset::Bracket { gamma: 0.7 }), 5).unwrap();
        for (idx, z) in v.iter().enumerate() {
            let digits: Vec<usize> = (0..5).rev().map(|k| idx / 4usize.pow(k) % 4).collect();
            let ok = (0..5).all(|k| right[digits[k]] == left[digits[(k + 1) % 5]]);
            assert_eq!(z.norm() > 1e-14, ok, "string {digits:?}");
        }
    }

    #[test]
    fn two_point_examples() {
        let t = preset(Preset::Ferro);
        let z = pauli_z();
        let one = discrete_two_point(&t, 6, &identity(2), 1, &identity(2), 4).unwrap();
        assert!((one - re(1.0)).norm() < 1e-12);
        for (s1, s2) in [(0, 5), (2, 3), (4, 1), (3, 3)] {
            let g = discrete_two_point(&t, 6, &z, s1, &z, s2).unwrap();
            assert!((g - re(1.0)).norm() < 1e-12);
        }
        assert!(discrete_two_point(&t, 6, &z, 6, &z, 0).is_err());
    }

    #[test]
    fn bracket_number_density_matches_closed_form() {
        // ⟨n⟩ = q (1 − r^{N−1}) / (1 + r^N) with r = e^{−2γ}; derived from
        // the spectral decomposition of the 2×2 population block.
        let gamma = 0.3;
        let t = preset(Preset::Bracket { gamma });
        let (_, q) = bracket_weights(gamma);
        let r = (-2.0 * gamma).exp();
        for n in [2usize, 5, 12] {
            let want = q * (1.0 - r.powi(n as i32 - 1)) / (1.0 + r.powi(n as i32));
            let got = discrete_one_point(&t, n, &bracket_number_operator(), 1).unwrap();
            assert!((got - re(want)).norm() < 1e-12, "N = {n}");
        }
    }

    #[test]
    fn continuum_verdicts() {
        let v = has_continuum_limit(&preset(Preset::Ferro), 1e-9).unwrap();
        assert_eq!(v.status, DivisibilityStatus::Divisible);
        assert!(fro_norm(&v.generator.unwrap().matrix) < 1e-12);
        let v = has_continuum_limit(&preset(Preset::Bracket { gamma: 1.0 }), 1e-9).unwrap();
        assert_eq!(v.status, DivisibilityStatus::Divisible);
        let v = has_continuum_limit(&preset(Preset::Aklt), 1e-9).unwrap();
        assert_eq!(v.status, DivisibilityStatus::NotDivisible);
        let v = has_continuum_limit(&preset(Preset::Identity), 1e-9).unwrap();
        assert_eq!(v.status, DivisibilityStatus::Markovian);
        let v = has_continuum_limit(&preset(Preset::Depolarizing), 1e-9).unwrap();
        assert_eq!(v.status, DivisibilityStatus::Divisible);
    }

    #[test]
    fn normalize_tp_fixes_scale_and_gauge() {
        let t = preset(Preset::Bracket { gamma: 0.4 });
        let g = crate::numerics::from_real_rows(&[&[2.0, 0.5], &[0.0, 1.0]]);
        let gi = g.clone().try_inverse().unwrap();
        let skewed = MpsTensor::new(t.matrices.iter().map(|a| (&g * a * &gi).scale(1.7)).collect(), 1.0).unwrap();
        let fixed = normalize_tp(&skewed).unwrap();
        let report = crate::channels::is_cptp(&transfer_matrix(&fixed), 1e-9);
        assert!(report.trace_preserving, "{report:?}");
    }

    fn arb_tensor() -> impl Strategy<Value = MpsTensor> {
        (1usize..=3, 1usize..=3, any::<u64>()).prop_map(|(d, bond, seed)| {
            let mut rng = crate::random::rng(seed);
            let mats = (0..d).map(|_| crate::random::ginibre(bond, bond, &mut rng).scale(0.5)).collect();
            MpsTensor::new(mats, 1.0).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn trace_of_power_is_squared_norm(t in arb_tensor(), n in 1usize..=6) {
            prop_assume!(t.d.pow(n as u32) <= 4096);
            let v = dense_state(&t, n).unwrap();
            let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let tr = matrix_power(&transfer_matrix(&t).matrix, n).trace();
            prop_assert!((tr - re(norm2)).norm() <= 1e-8 * norm2.max(1e-300) + 1e-14);
        }

        #[test]
        fn identity_insertions_give_one(t in arb_tensor(), n in 1usize..=8, s1 in 0usize..8, s2 in 0usize..8) {
            let norm = matrix_power(&transfer_matrix(&t).matrix, n).trace();
            prop_assume!(norm.norm() > 1e-6);
            let id = identity(t.d);
            let g = discrete_two_point(&t, n, &id, s1 % n, &id, s2 % n).unwrap();
            prop_assert!((g - re(1.0)).norm() < 1e-10);
        }
    }
}
