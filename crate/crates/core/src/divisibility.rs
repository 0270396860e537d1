//! Infinite divisibility of a channel: find a projector channel `P` and a
//! generator `L` with `E = P e^{aL}` and `PL = PLP`.
//!
//! `P` is forced: it is the projector onto `ran E` along `ker E`. `E` only
//! fixes `PL`, through `log(E|ran P)/a`. Adding any `X` with `PX = 0` keeps
//! both `PL = PLP` and `P e^{aL}`. The cheap completion takes `X = 0`; when
//! that is not a valid generator, `X` is searched by Douglas–Rachford
//! splitting between the affine set of completions and the cone of
//! conditionally positive maps.

use serde::Serialize;

use crate::channels::{is_cptp, is_projector_channel, reshuffle, SuperOp};
use crate::error::{Error, Result};
use crate::lindblad::{
    complement_of_identity, exp_generator, hp_symmetrize, is_generator, markovian_test,
    LiouvillianMatrix, MarkovianVerdict,
};
use crate::numerics::{
    determinant, eigenvalues, fro_norm, hermitian_eigen, hermitian_part, identity, logm_principal,
    matrix_power, null_space, sparse_product, oblique_projector, range_basis, re, CMatrix, C64,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisibilityStatus {
    Divisible,
    Markovian,
    NotDivisible,
    Inconclusive,
}

impl DivisibilityStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Divisible => "divisible",
            Self::Markovian => "markovian",
            Self::NotDivisible => "not_divisible",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DivisibilityVerdict {
    pub status: DivisibilityStatus,
    pub projector: Option<SuperOp>,
    /// Normalized so that `E = P e^{aL}`.
    pub generator: Option<LiouvillianMatrix>,
    pub spacing: f64,
    pub diagnostics: Vec<String>,
}

impl DivisibilityVerdict {
    fn negative(status: DivisibilityStatus, spacing: f64, diagnostics: Vec<String>) -> Self {
        Self {
            status,
            projector: None,
            generator: None,
            spacing,
            diagnostics,
        }
    }
}

/// Oblique projector onto `ran E` along `ker E`.
pub fn extract_projector(e: &SuperOp, tol: f64) -> Result<SuperOp> {
    let kernel = null_space(&e.matrix, tol)?;
    let range = range_basis(&e.matrix, tol)?;
    let p = oblique_projector(&range, &kernel)?;
    // Clean up rounding so that the result is exactly Hermiticity preserving.
    SuperOp::new(hp_symmetrize(&p, e.dim))
}

/// `‖PL − PLP‖_F ≤ tol·max(1, ‖PL‖_F)`.
pub fn check_plp(p: &SuperOp, l: &LiouvillianMatrix, tol: f64) -> bool {
    let pl = sparse_product(&p.matrix, &l.matrix);
    let defect = fro_norm(&(sparse_product(&pl, &p.matrix) - &pl));
    defect <= tol * fro_norm(&pl).max(1.0)
}

pub fn plp_defect(p: &SuperOp, l: &LiouvillianMatrix) -> f64 {
    let pl = sparse_product(&p.matrix, &l.matrix);
    fro_norm(&(sparse_product(&pl, &p.matrix) - &pl))
}

#[derive(Clone, Debug)]
pub enum GeneratorOutcome {
    Found(LiouvillianMatrix),
    Inconclusive(String),
}

/// Iteration cap of the completion search.
const SEARCH_ITERATIONS: usize = 5000;

/// Generator `L` with `E = P e^{aL}` and `PL = PLP`, if one can be found on
/// the principal branch.
///
/// Fails with [`Error::NotDivisible`] when `E` is structurally incompatible
/// with `P` or when `E` restricted to `ran P` has no real logarithm.
pub fn extract_generator(e: &SuperOp, p: &SuperOp, a: f64, tol: f64) -> Result<GeneratorOutcome> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("spacing {a} must be positive")));
    }
    if e.dim != p.dim {
        return Err(Error::DimensionMismatch("channel and projector differ in dimension".into()));
    }
    let d = e.dim;
    let scale = fro_norm(&e.matrix).max(1.0);
    let pe = fro_norm(&(&p.matrix * &e.matrix - &e.matrix));
    let ep = fro_norm(&(&e.matrix * &p.matrix - &e.matrix));
    if pe > tol * scale || ep > tol * scale {
        return Err(Error::NotDivisible(format!(
            "channel is not supported on the projector (‖PE − E‖ = {pe:.3e}, ‖EP − E‖ = {ep:.3e})"
        )));
    }
    let n2 = d * d;
    let g = &e.matrix + identity(n2) - &p.matrix;
    let log = match logm_principal(&g) {
        Ok(l) => l,
        Err(Error::Singular(z)) => {
            return Err(Error::NotDivisible(format!(
                "channel is not invertible on its range (eigenvalue {:.3e})",
                z.norm()
            )))
        }
        Err(Error::BranchCut(z)) => {
            let det = determinant(&g)?;
            if det.re <= 0.0 && det.im.abs() <= 1e-9 * det.norm().max(1e-300) {
                return Err(Error::NotDivisible(format!(
                    "determinant {:.6e} of the channel on its range is not positive, so it has no real logarithm",
                    det.re
                )));
            }
            return Ok(GeneratorOutcome::Inconclusive(format!(
                "eigenvalue {:.6}{:+.6}i lies on the branch cut of the principal logarithm",
                z.re, z.im
            )));
        }
        Err(other) => return Ok(GeneratorOutcome::Inconclusive(other.to_string())),
    };
    let m = hp_symmetrize(&log.unscale(a), d);
    let cheap = LiouvillianMatrix { dim: d, matrix: m.clone() };
    if is_generator(&cheap, tol).is_generator {
        return Ok(GeneratorOutcome::Found(cheap));
    }
    let kernel = null_space(&p.matrix, tol.max(1e-12))?;
    if kernel.is_empty() {
        return Ok(GeneratorOutcome::Inconclusive(
            "principal logarithm is not a generator and the projector leaves no completion freedom"
                .into(),
        ));
    }
    let n = kernel.projector();
    match search_completion(&m, &n, d, tol) {
        Some(l) => Ok(GeneratorOutcome::Found(LiouvillianMatrix { dim: d, matrix: l })),
        None => Ok(GeneratorOutcome::Inconclusive(format!(
            "no generator found among completions of the principal logarithm on ker P (conditional eigenvalue of the cheap completion {:.3e})",
            is_generator(&cheap, tol).min_conditional_eigenvalue
        ))),
    }
}

/// Feasibility search between `A = {M + X : PX = 0, X Hermiticity
/// preserving}` (orthogonal projector `N X` onto the admissible `X`) and the
/// cone `C` of maps whose Choi matrix is positive on the complement of the
/// maximally entangled vector.
fn search_completion(m: &CMatrix, n: &CMatrix, d: usize, tol: f64) -> Option<CMatrix> {
    let perp = complement_of_identity(d);
    let basis = {
        let (vals, vecs) = hermitian_eigen(&perp);
        let keep = vals.iter().filter(|&&v| v > 0.5).count();
        vecs.columns(0, keep).into_owned()
    };
    let project_affine = |y: &CMatrix| -> CMatrix { m + hp_symmetrize(&(n * (y - m)), d) };
    let project_cone = |y: &CMatrix| -> CMatrix {
        let j = hermitian_part(&reshuffle(y, d));
        let k = basis.adjoint() * &j * &basis;
        let (vals, vecs) = hermitian_eigen(&k);
        if vals.last().map_or(true, |&v| v >= 0.0) {
            return reshuffle(&j, d);
        }
        let clipped: Vec<C64> = vals.iter().map(|&v| re(v.max(0.0))).collect();
        let k_new = &vecs * crate::numerics::diag(&clipped) * vecs.adjoint();
        let j_new = j + &basis * (k_new - k) * basis.adjoint();
        reshuffle(&j_new, d)
    };
    // Douglas–Rachford: z ← z + P_A(2 P_C z − z) − P_C z. The shadow
    // P_A(P_C z) is tested for being a generator after every step.
    let mut z = m.clone();
    for _ in 0..SEARCH_ITERATIONS {
        let x = project_cone(&z);
        let candidate = LiouvillianMatrix { dim: d, matrix: project_affine(&x) };
        if is_generator(&candidate, tol).is_generator {
            return Some(candidate.matrix);
        }
        let reflected = project_affine(&(x.scale(2.0) - &z));
        z += reflected - x;
    }
    None
}

/// Full pipeline: projector, generator, verdict.
pub fn is_infinitely_divisible(e: &SuperOp, a: f64, tol: f64) -> Result<DivisibilityVerdict> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("spacing {a} must be positive")));
    }
    let cptp = is_cptp(e, tol.max(1e-12));
    if !cptp.ok() {
        return Err(Error::NotChannel(format!(
            "minimum Choi eigenvalue {:.3e}, trace defect {:.3e}",
            cptp.min_choi_eigenvalue, cptp.trace_defect
        )));
    }
    let kernel = null_space(&e.matrix, tol)?;
    if kernel.is_empty() {
        return Ok(markovian_branch(e, a, tol));
    }
    let p = match extract_projector(e, tol) {
        Ok(p) => p,
        Err(Error::NoObliqueProjector(msg)) => {
            return Ok(DivisibilityVerdict::negative(
                DivisibilityStatus::NotDivisible,
                a,
                vec![format!("range and kernel of the channel are not complementary: {msg}")],
            ))
        }
        Err(other) => return Err(other),
    };
    if !is_projector_channel(&p, tol.max(1e-12).sqrt().min(1e-6)) {
        return Ok(DivisibilityVerdict::negative(
            DivisibilityStatus::NotDivisible,
            a,
            vec!["the projector onto the range along the kernel is not a quantum channel".into()],
        ));
    }
    match extract_generator(e, &p, a, tol) {
        Ok(GeneratorOutcome::Found(l)) => {
            let mut diagnostics = Vec::new();
            let rebuilt = &p.matrix * exp_generator(&l, a)?.matrix;
            let err = fro_norm(&(rebuilt - &e.matrix));
            let plp = check_plp(&p, &l, tol);
            if err > tol.max(1e-12) * fro_norm(&e.matrix).max(1.0) * 1e2 || !plp {
                diagnostics.push(format!(
                    "re-verification failed: reconstruction error {err:.3e}, PL = PLP {plp}"
                ));
                return Ok(DivisibilityVerdict {
                    status: DivisibilityStatus::Inconclusive,
                    projector: Some(p),
                    generator: None,
                    spacing: a,
                    diagnostics,
                });
            }
            Ok(DivisibilityVerdict {
                status: DivisibilityStatus::Divisible,
                projector: Some(p),
                generator: Some(l),
                spacing: a,
                diagnostics,
            })
        }
        Ok(GeneratorOutcome::Inconclusive(msg)) => Ok(DivisibilityVerdict {
            status: DivisibilityStatus::Inconclusive,
            projector: Some(p),
            generator: None,
            spacing: a,
            diagnostics: vec![msg],
        }),
        Err(Error::NotDivisible(msg)) => Ok(DivisibilityVerdict {
            status: DivisibilityStatus::NotDivisible,
            projector: Some(p),
            generator: None,
            spacing: a,
            diagnostics: vec![msg],
        }),
        Err(other) => Err(other),
    }
}

/// An invertible channel is infinitely divisible exactly when it is
/// Markovian (the projector must then be the identity).
fn markovian_branch(e: &SuperOp, a: f64, tol: f64) -> DivisibilityVerdict {
    match markovian_test(e, tol) {
        MarkovianVerdict::Yes(l) => DivisibilityVerdict {
            status: DivisibilityStatus::Markovian,
            projector: Some(SuperOp::identity(e.dim)),
            generator: Some(LiouvillianMatrix {
                dim: l.dim,
                matrix: l.matrix.unscale(a),
            }),
            spacing: a,
            diagnostics: Vec::new(),
        },
        MarkovianVerdict::No(msg) => DivisibilityVerdict::negative(
            DivisibilityStatus::NotDivisible,
            a,
            vec![format!("channel is invertible, so only P = I is possible, and it is not Markovian: {msg}")],
        ),
        MarkovianVerdict::Inconclusive(msg) => DivisibilityVerdict::negative(
            DivisibilityStatus::Inconclusive,
            a,
            vec![msg],
        ),
    }
}

#[derive(Clone, Debug)]
pub struct CoarseDivisibility {
    pub power: usize,
    /// Generator with `E^p = e^L`.
    pub generator: LiouvillianMatrix,
}

/// Smallest `p ∈ [2, p_max]` for which `E^p` is Markovian.
pub fn coarse_divisibility(e: &SuperOp, p_max: usize, tol: f64) -> Result<Option<CoarseDivisibility>> {
    if p_max < 2 {
        return Err(Error::InvalidArgument(format!("p_max = {p_max} must be at least 2")));
    }
    for p in 2..=p_max {
        let ep = SuperOp {
            dim: e.dim,
            matrix: matrix_power(&e.matrix, p),
        };
        if let MarkovianVerdict::Yes(l) = markovian_test(&ep, tol) {
            return Ok(Some(CoarseDivisibility {
                power: p,
                generator: l,
            }));
        }
    }
    Ok(None)
}

/// Spectrum of a channel sorted by decreasing modulus.
pub fn spectrum(e: &SuperOp) -> Result<Vec<C64>> {
    let mut ev = eigenvalues(&e.matrix)?;
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
    Ok(ev)
}
