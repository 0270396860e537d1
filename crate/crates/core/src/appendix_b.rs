//! Structured `PL = PLP` classifier. The projector acts on
//! `C^n ⊗ C^{D1} ⊗ C^{m1}` as pinching on the first factor, identity on the
//! second and `tr(·) σ_k` on the third; the generator has a single
//! Hamiltonian term `A⊗B⊗C` and a single jump `S⊗T⊗V`. `classify` evaluates
//! the necessary conditions for `PL = PLP`; `verify_numeric` checks the
//! identity on the full matrices.

use rand::Rng;
use serde::Serialize;

use crate::channels::validate_density;
use crate::divisibility::check_plp;
use crate::error::{Error, Result};
use crate::lindblad::{liouvillian_matrix, Lindblad};
use crate::numerics::{fro_norm, hermiticity_defect, identity, kron, re, CMatrix};
use crate::projectors::{build_projector, Block, ProjectorCanonicalForm};
use crate::random::{self, SeededRng};

#[derive(Clone, Debug)]
pub struct StructuredSpec {
    pub n: usize,
    pub d1: usize,
    pub m1: usize,
    pub s: CMatrix,
    pub t: CMatrix,
    pub v: CMatrix,
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub sigmas: Vec<CMatrix>,
}

impl StructuredSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: CMatrix,
        t: CMatrix,
        v: CMatrix,
        a: CMatrix,
        b: CMatrix,
        c: CMatrix,
        sigmas: Vec<CMatrix>,
    ) -> Result<Self> {
        let (n, d1, m1) = (s.nrows(), t.nrows(), v.nrows());
        let shapes = [
            ("S", &s, n),
            ("T", &t, d1),
            ("V", &v, m1),
            ("A", &a, n),
            ("B", &b, d1),
            ("C", &c, m1),
        ];
        for (name, m, k) in shapes {
            if m.shape() != (k, k) || k == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if hermiticity_defect(m) > 1e-10 * fro_norm(m).max(1.0) {
                return Err(Error::NotHermitian(format!("{name} is not Hermitian")));
            }
        }
        if fro_norm(&s) * fro_norm(&t) * fro_norm(&v) == 0.0 {
            return Err(Error::InvalidArgument("jump operator S⊗T⊗V vanishes".into()));
        }
        if sigmas.len() != n {
            return Err(Error::DimensionMismatch(format!("{} sigmas for {n} blocks", sigmas.len())));
        }
        for sigma in &sigmas {
            if sigma.shape() != (m1, m1) {
                return Err(Error::DimensionMismatch("sigma has the wrong size".into()));
            }
            validate_density(sigma, 1e-9, true)?;
        }
        Ok(Self {
            n,
            d1,
            m1,
            s,
            t,
            v,
            a,
            b,
            c,
            sigmas,
        })
    }

    pub fn hamiltonian(&self) -> CMatrix {
        kron(&kron(&self.a, &self.b), &self.c)
    }

    pub fn jump(&self) -> CMatrix {
        kron(&kron(&self.s, &self.t), &self.v)
    }

    pub fn canonical_form(&self) -> Result<ProjectorCanonicalForm> {
        let blocks = self
            .sigmas
            .iter()
            .map(|sigma| Block {
                dk: self.d1,
                mk: self.m1,
                sigma: sigma.clone(),
            })
            .collect();
        ProjectorCanonicalForm::standard(0, blocks)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionDetail {
    pub name: &'static str,
    pub passed: bool,
    /// Relative violation; zero when the condition holds exactly.
    pub violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub hamiltonian_ok: bool,
    pub case: Option<Case>,
    pub conditions: Vec<ConditionDetail>,
}

impl ClassificationReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionDetail> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn off_diagonal_norm(m: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                s += m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// `‖M − cI‖_F / ‖M‖_F` with the least-squares `c = tr M / n`.
fn proportionality_to_identity(m: &CMatrix) -> f64 {
    let norm = fro_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let c = m.trace() / re(n as f64);
    fro_norm(&(m - identity(n) * c)) / norm
}

/// `V ∝ U` iff `V†V ∝ I`.
fn proportionality_to_unitary(v: &CMatrix) -> f64 {
    proportionality_to_identity(&(v.adjoint() * v))
}

fn relative_to(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        value / scale
    }
}

/// `max |S_{kl} S̄_{km}|` over distinct `k, l, m`.
fn pinching_products(s: &CMatrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for k in 0..n {
        for l in 0..n {
            for m in 0..n {
                if k != l && k != m && l != m {
                    worst = worst.max((s[(k, l)] * s[(k, m)].conj()).norm());
                }
            }
        }
    }
    relative_to(worst, fro_norm(s).powi(2))
}

/// `max |S_{kk} S̄_{kl} − S_{lk} S̄_{ll}|` over `k ≠ l`.
fn pinching_symmetry(s: &CMatrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                let lhs = s[(k, k)] * s[(k, l)].conj();
                let rhs = s[(l, k)] * s[(l, l)].conj();
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    relative_to(worst, fro_norm(s).powi(2))
}

/// Largest second-largest modulus over the rows.
fn extra_row_entries(s: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for row in s.row_iter() {
        let mut mags: Vec<f64> = row.iter().map(|z| z.norm()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        worst = worst.max(mags.get(1).copied().unwrap_or(0.0));
    }
    relative_to(worst, fro_norm(s))
}

pub fn classify(spec: &StructuredSpec, tol: f64) -> ClassificationReport {
    let mut conditions = Vec::new();
    let mut check = |name: &'static str, violation: f64| {
        let passed = violation <= tol;
        conditions.push(ConditionDetail {
            name,
            passed,
            violation,
        });
        passed
    };
    let h_norm = fro_norm(&spec.a) * fro_norm(&spec.b) * fro_norm(&spec.c);
    let h_zero = check("hamiltonian_zero", h_norm);
    let a_diag = check("a_diagonal", relative_to(off_diagonal_norm(&spec.a), fro_norm(&spec.a)));
    let b_prop = check("b_proportional_identity", proportionality_to_identity(&spec.b));
    let c_prop = check("c_proportional_identity", proportionality_to_identity(&spec.c));
    let p1 = check("s_pinching_products", pinching_products(&spec.s));
    let p2 = check("s_pinching_symmetry", pinching_symmetry(&spec.s));
    let one_per_row = check("s_one_nonzero_per_row", extra_row_entries(&spec.s));
    let s_diag = check("s_diagonal", relative_to(off_diagonal_norm(&spec.s), fro_norm(&spec.s)));
    let t_prop = check("t_proportional_identity", proportionality_to_identity(&spec.t));
    let v_unit = check("v_proportional_unitary", proportionality_to_unitary(&spec.v));
    let hamiltonian_ok = h_zero || (a_diag && (b_prop || c_prop));
    let case = if !hamiltonian_ok {
        None
    } else if p1 && p2 && t_prop && v_unit {
        Some(Case::A)
    } else if one_per_row && !t_prop && v_unit {
        Some(Case::B)
    } else if s_diag && t_prop && !v_unit {
        Some(Case::C)
    } else {
        None
    };
    ClassificationReport {
        hamiltonian_ok,
        case,
        conditions,
    }
}

/// Full-matrix `PL = PLP` check.
pub fn verify_numeric(spec: &StructuredSpec, tol: f64) -> Result<bool> {
    let p = build_projector(&spec.canonical_form()?)?;
    let l = liouvillian_matrix(&Lindblad::new(spec.hamiltonian(), vec![spec.jump()])?);
    Ok(check_plp(&p, &l, tol))
}

/// Sizes to sample; `None` draws from `1..=3`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SizeChoice {
    pub n: Option<usize>,
    pub d1: Option<usize>,
    pub m1: Option<usize>,
}

fn scalar(rng: &mut SeededRng) -> crate::numerics::C64 {
    let z = random::complex_normal(rng);
    if z.norm() < 1e-3 {
        re(1.0)
    } else {
        z
    }
}

fn sample_s(n: usize, rng: &mut SeededRng) -> CMatrix {
    let mut s = CMatrix::zeros(n, n);
    match rng.random_range(0..6) {
        // Diagonal.
        0 => (0..n).for_each(|k| s[(k, k)] = scalar(rng)),
        // Permutation times diagonal.
        1 => {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            (0..n).for_each(|k| s[(k, perm[k])] = scalar(rng));
        }
        // A single nonzero column.
        2 => {
            let col = rng.random_range(0..n);
            (0..n).for_each(|k| s[(k, col)] = scalar(rng));
        }
        // One entry per row at random positions.
        3 => (0..n).for_each(|k| {
            let j = rng.random_range(0..n);
            s[(k, j)] = scalar(rng);
        }),
        // Real symmetric off-diagonal pair plus equal diagonal.
        4 => {
            let d = scalar(rng);
            (0..n).for_each(|k| s[(k, k)] = d);
            if n > 1 {
                let (i, j) = (0, 1);
                let x = re(rng.random_range(0.2..1.5));
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        _ => s = random::ginibre(n, n, rng),
    }
    if fro_norm(&s) == 0.0 {
        s[(0, 0)] = re(1.0);
    }
    s
}

fn sample_proportional_or_generic(k: usize, unitary: bool, rng: &mut SeededRng) -> CMatrix {
    if rng.random_bool(0.5) {
        let base = if unitary {
            random::haar_unitary(k, rng)
        } else {
            identity(k)
        };
        base * scalar(rng)
    } else {
        random::ginibre(k, k, rng)
    }
}

fn sample_hermitian_factor(k: usize, diagonal_bias: bool, rng: &mut SeededRng) -> CMatrix {
    match rng.random_range(0..3) {
        0 if diagonal_bias => CMatrix::from_fn(k, k, |i, j| {
            if i == j {
                re(random::complex_normal(rng).re)
            } else {
                re(0.0)
            }
        }),
        0 | 1 => identity(k).scale(rng.random_range(-1.0..1.0)),
        _ => random::random_hermitian(k, rng),
    }
}

/// Random structured instance. The factors are drawn from families that
/// satisfy each individual condition with fair probability, so that both
/// outcomes of `PL = PLP` show up.
pub fn sample_spec(sizes: SizeChoice, rng: &mut SeededRng) -> StructuredSpec {
    let mut pick = |choice: Option<usize>| choice.unwrap_or_else(|| rng.random_range(1..=3));
    let (n, d1, m1) = (pick(sizes.n), pick(sizes.d1), pick(sizes.m1));
    let s = sample_s(n, rng);
    let t = sample_proportional_or_generic(d1, false, rng);
    let v = sample_proportional_or_generic(m1, true, rng);
    let (a, b, c) = if rng.random_bool(0.25) {
        (CMatrix::zeros(n, n), identity(d1), identity(m1))
    } else {
        (
            sample_hermitian_factor(n, true, rng),
            sample_hermitian_factor(d1, false, rng),
            sample_hermitian_factor(m1, false, rng),
        )
    };
    let uniform = rng.random_bool(0.5);
    let sigmas = (0..n)
        .map(|_| {
            if uniform {
                identity(m1).unscale(m1 as f64)
            } else {
                random::random_density(m1, 0.3, rng)
            }
        })
        .collect();
    StructuredSpec::new(s, t, v, a, b, c, sigmas).expect("sampled spec is valid")
}

#[derive(Clone, Debug, Serialize)]
pub struct Disagreement {
    pub trial: u64,
    pub sizes: (usize, usize, usize),
    pub report: ClassificationReport,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FuzzReport {
    pub trials: u64,
    /// Trials where `PL = PLP` held numerically.
    pub verified: u64,
    /// Verified trials per case `a`, `b`, `c`.
    pub verified_by_case: [u64; 3],
    pub disagreements: Vec<Disagreement>,
}

/// Samples `trials` specs (trial `i` from stream `i` of `seed`) and records
/// every one where `PL = PLP` holds but the classifier finds no case or a
/// failing Hamiltonian condition. Work is split across threads; the result
/// does not depend on the split.
pub fn fuzz_agreement(seed: u64, trials: u64, tol: f64, sizes: SizeChoice) -> Result<FuzzReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(trials as usize) as u64;
    let results: Vec<Result<Vec<(u64, bool, Option<Case>, Option<Disagreement>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for trial in (w..trials).step_by(workers as usize) {
                        let mut rng = random::trial_rng(seed, trial);
                        let spec = sample_spec(sizes, &mut rng);
                        let holds = verify_numeric(&spec, tol)?;
                        let report = classify(&spec, tol);
                        let case = report.case;
                        let bad = holds && (!report.hamiltonian_ok || case.is_none());
                        let disagreement = bad.then(|| Disagreement {
                            trial,
                            sizes: (spec.n, spec.d1, spec.m1),
                            report,
                        });
                        out.push((trial, holds, case, disagreement));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fuzz worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| r.0);
    let mut report = FuzzReport {
        trials,
        ..FuzzReport::default()
    };
    for (_, holds, case, disagreement) in rows {
        if holds {
            report.verified += 1;
            if let Some(c) = case {
                report.verified_by_case[c as usize] += 1;
            }
        }
        report.disagreements.extend(disagreement);
    }
    Ok(report)
}

/// Cases a verified instance may land in when some sizes are 1.
pub fn permitted_cases(n: usize, d1: usize, m1: usize) -> &'static [Case] {
    match (n == 1, d1 == 1, m1 == 1) {
        (_, true, true) => &[Case::A],
        (_, true, false) => &[Case::A, Case::C],
        (_, false, true) => &[Case::A, Case::B],
        _ => &[Case::A, Case::B, Case::C],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ket_bra, pauli_x, pauli_z};

    fn half() -> CMatrix {
        identity(2).scale(0.5)
    }

    fn pinching_spec(s: CMatrix, v: CMatrix) -> StructuredSpec {
        StructuredSpec::new(
            s,
            identity(1),
            v,
            CMatrix::zeros(2, 2),
            identity(1),
            identity(2),
            vec![half(), half()],
        )
        .unwrap()
    }

    #[test]
    fn worked_instances() {
        let a = pinching_spec(pauli_x(), pauli_z());
        assert_eq!(classify(&a, 1e-9).case, Some(Case::A));
        assert!(verify_numeric(&a, 1e-9).unwrap());
        let c = pinching_spec(pauli_z(), ket_bra(2, 0, 1));
        assert_eq!(classify(&c, 1e-9).case, Some(Case::C));
        assert!(verify_numeric(&c, 1e-9).unwrap());
    }

    #[test]
    fn pinching_violation_is_rejected() {
        // Row 0 has two off-diagonal entries: S_01 S̄_02 ≠ 0.
        let mut s = CMatrix::zeros(3, 3);
        s[(0, 1)] = re(1.0);
        s[(0, 2)] = re(1.0);
        s[(1, 1)] = re(0.5);
        let sigmas = vec![half(), half(), half()];
        let spec = StructuredSpec::new(
            s,
            identity(1),
            pauli_z(),
            CMatrix::zeros(3, 3),
            identity(1),
            identity(2),
            sigmas,
        )
        .unwrap();
        let report = classify(&spec, 1e-9);
        assert_eq!(report.case, None);
        assert!(!report.condition("s_pinching_products").unwrap().passed);
        assert!(!verify_numeric(&spec, 1e-9).unwrap());
    }

    #[test]
    fn non_diagonal_hamiltonian_fails() {
        let spec = StructuredSpec::new(
            pauli_z(),
            identity(2),
            identity(2),
            pauli_x(),
            identity(2),
            identity(2),
            vec![half(), half()],
        )
        .unwrap();
        assert!(!classify(&spec, 1e-9).hamiltonian_ok);
        assert!(!verify_numeric(&spec, 1e-9).unwrap());
    }

    #[test]
    fn rejects_invalid_specs() {
        let z = CMatrix::zeros(2, 2);
        assert!(StructuredSpec::new(z.clone(), identity(1), identity(2), z.clone(), identity(1), identity(2), vec![half(), half()]).is_err());
        assert!(StructuredSpec::new(pauli_x(), identity(1), identity(2), ket_bra(2, 0, 1), identity(1), identity(2), vec![half(), half()]).is_err());
        assert!(StructuredSpec::new(pauli_x(), identity(1), identity(2), z, identity(1), identity(2), vec![half()]).is_err());
    }

    #[test]
    fn fuzz_is_deterministic_and_sound() {
        let a = fuzz_agreement(7, 60, 1e-9, SizeChoice::default()).unwrap();
        let b = fuzz_agreement(7, 60, 1e-9, SizeChoice::default()).unwrap();
        assert_eq!(a.verified, b.verified);
        assert!(a.disagreements.is_empty(), "{:?}", a.disagreements);
        assert!(a.verified > 0);
    }

    #[test]
    fn size_one_factors_land_in_permitted_cases() {
        let sizes = [
            (Some(1), None, None),
            (None, Some(1), None),
            (None, None, Some(1)),
            (None, Some(1), Some(1)),
            (Some(1), Some(1), None),
            (Some(1), None, Some(1)),
        ];
        for (n, d1, m1) in sizes {
            let choice = SizeChoice { n, d1, m1 };
            let mut seen = 0;
            for trial in 0..150 {
                let mut rng = random::trial_rng(99, trial);
                let spec = sample_spec(choice, &mut rng);
                if !verify_numeric(&spec, 1e-9).unwrap() {
                    continue;
                }
                seen += 1;
                let case = classify(&spec, 1e-9).case.expect("verified instance has a case");
                assert!(
                    permitted_cases(spec.n, spec.d1, spec.m1).contains(&case),
                    "sizes {:?} landed in {case:?}",
                    (spec.n, spec.d1, spec.m1)
                );
            }
            assert!(seen > 0, "no verified instance for {choice:?}");
        }
    }
}
