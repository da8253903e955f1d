//! Two-outcome partial projections in the computational basis.
//!
//! A partial projection is fixed by two measurement fidelities: `p`, the
//! probability that `|0⟩` reports outcome 0, and `q`, the probability that
//! `|1⟩` reports outcome 1. Its Kraus pair is
//!
//! ```text
//! D0 = √p |0⟩⟨0| + √(1−q) |1⟩⟨1|
//! D1 = √(1−p) |0⟩⟨0| + √q |1⟩⟨1|
//! ```
//!
//! `p = q = 1` is the projective measurement and `p + q = 1` is no
//! measurement at all.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{herm_eig, re, ComplexMatrix, C64};

/// Conditioning on a branch below this probability is refused.
pub const ZERO_BRANCH_TOL: f64 = 1e-12;

/// Tolerance for density-matrix validation.
pub const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PartialProjParams {
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
struct RawParams {
    p: f64,
    q: f64,
}

impl TryFrom<RawParams> for PartialProjParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.p, raw.q)
    }
}

impl PartialProjParams {
    /// Both parameters must lie in `[0, 1]`; `p + q >= 1` is not required.
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability { name: "p", value: p });
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidProbability { name: "q", value: q });
        }
        Ok(Self { p, q })
    }

    pub const PROJECTIVE: Self = Self { p: 1.0, q: 1.0 };

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `|p + q − 1|`: 1 for a projective measurement, 0 for none.
    pub fn strength(&self) -> f64 {
        (self.p + self.q - 1.0).abs()
    }

    /// `p − q`; the state-averaged probability of outcome 0 is `(1 + p − q)/2`.
    pub fn asymmetry(&self) -> f64 {
        self.p - self.q
    }

    /// The Kraus pair `(D0, D1)`.
    pub fn dops(&self) -> (ComplexMatrix, ComplexMatrix) {
        dops(*self)
    }
}

/// The Kraus pair `(D0, D1)` of a partial projection.
pub fn dops(params: PartialProjParams) -> (ComplexMatrix, ComplexMatrix) {
    let (p, q) = (params.p, params.q);
    (
        ComplexMatrix::from_real_diag(&[p.sqrt(), (1.0 - q).sqrt()]),
        ComplexMatrix::from_real_diag(&[(1.0 - p).sqrt(), q.sqrt()]),
    )
}

/// `|p + q − 1|`.
pub fn strength(params: PartialProjParams) -> f64 {
    params.strength()
}

/// A single-qubit density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct QubitState {
    rho: ComplexMatrix,
}

impl TryFrom<ComplexMatrix> for QubitState {
    type Error = Error;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::from_matrix(m)
    }
}

impl From<QubitState> for ComplexMatrix {
    fn from(s: QubitState) -> Self {
        s.rho
    }
}

impl QubitState {
    /// Validates Hermiticity, unit trace and positivity within [`STATE_TOL`].
    pub fn from_matrix(rho: ComplexMatrix) -> Result<Self> {
        validate_density(&rho, 2)?;
        Ok(Self { rho })
    }

    /// Normalizes and wraps a pure state vector.
    pub fn pure(amplitudes: [C64; 2]) -> Self {
        let n = (amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr()).sqrt();
        let v = [amplitudes[0] / n, amplitudes[1] / n];
        Self {
            rho: ComplexMatrix::outer(&v, &v),
        }
    }

    pub fn zero() -> Self {
        Self::pure([re(1.0), re(0.0)])
    }

    pub fn one() -> Self {
        Self::pure([re(0.0), re(1.0)])
    }

    pub fn plus() -> Self {
        Self::pure([re(1.0), re(1.0)])
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: ComplexMatrix::identity(2).scale_re(0.5),
        }
    }

    /// Haar-random pure state.
    pub fn random_pure<R: Rng + ?Sized>(rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut g = || -> f64 { StandardNormal.sample(rng) };
        Self::pure([C64::new(g(), g()), C64::new(g(), g())])
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.rho
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Population of `|0⟩`.
    pub fn p0(&self) -> f64 {
        self.rho[(0, 0)].re
    }

    /// `K ρ K†` renormalized, or `None` when the trace falls below `tol`.
    /// Also returns the unnormalized trace.
    pub fn transformed(&self, k: &ComplexMatrix, tol: f64) -> (Option<Self>, f64) {
        let out = &(k * &self.rho) * &k.adjoint();
        let tr = out.trace().re;
        if tr < tol {
            return (None, tr);
        }
        (Some(Self { rho: out.scale_re(1.0 / tr).hermitian_part() }), tr)
    }

    /// Unitary evolution `U ρ U†`.
    pub fn evolve(&self, u: &ComplexMatrix) -> Self {
        Self {
            rho: (&(u * &self.rho) * &u.adjoint()).hermitian_part(),
        }
    }

    /// Wraps a matrix without validation; callers guarantee it is a state.
    pub(crate) fn from_matrix_unchecked(rho: ComplexMatrix) -> Self {
        Self { rho }
    }
}

/// Checks that `rho` is a `dim`-dimensional density matrix within [`STATE_TOL`].
pub fn validate_density(rho: &ComplexMatrix, dim: usize) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho.dim(),
        });
    }
    let h = rho.hermiticity_defect();
    if h > STATE_TOL {
        return Err(Error::NotDensityMatrix {
            reason: format!("not Hermitian (deviation {h:.3e})"),
        });
    }
    let tr = rho.trace();
    if (tr - re(1.0)).norm() > STATE_TOL {
        return Err(Error::NotDensityMatrix {
            reason: format!("trace {tr} is not 1"),
        });
    }
    let (vals, _) = herm_eig(rho, STATE_TOL)?;
    if vals[0] < -STATE_TOL {
        return Err(Error::NotDensityMatrix {
            reason: format!("negative eigenvalue {:.3e}", vals[0]),
        });
    }
    Ok(())
}

/// Outcome probabilities `P_k = Tr(D_k† D_k ρ)`.
pub fn outcome_probabilities(params: PartialProjParams, state: &QubitState) -> (f64, f64) {
    // D_k†D_k is diagonal, so only the populations enter.
    let rho00 = state.rho[(0, 0)].re;
    let rho11 = state.rho[(1, 1)].re;
    let p0 = params.p * rho00 + (1.0 - params.q) * rho11;
    let p1 = (1.0 - params.p) * rho00 + params.q * rho11;
    (p0, p1)
}

/// Post-measurement state `D_k ρ D_k† / Tr(D_k ρ D_k†)` for outcome `k`.
pub fn apply_outcome(params: PartialProjParams, outcome: u8, state: &QubitState) -> Result<QubitState> {
    apply_outcome_with_tol(params, outcome, state, ZERO_BRANCH_TOL)
}

pub fn apply_outcome_with_tol(
    params: PartialProjParams,
    outcome: u8,
    state: &QubitState,
    tol: f64,
) -> Result<QubitState> {
    let (d0, d1) = dops(params);
    let k = match outcome {
        0 => d0,
        1 => d1,
        _ => {
            return Err(Error::Format(format!("outcome must be 0 or 1, got {outcome}")));
        }
    };
    match state.transformed(&k, tol) {
        (Some(s), _) => Ok(s),
        (None, probability) => Err(Error::ZeroProbabilityBranch { outcome, probability }),
    }
}

/// Samples an outcome and returns it with the collapsed state.
pub fn measure<R: Rng + ?Sized>(
    params: PartialProjParams,
    state: &QubitState,
    rng: &mut R,
) -> Result<(u8, QubitState)> {
    let (p0, _) = outcome_probabilities(params, state);
    let outcome = if rng.gen::<f64>() < p0 { 0 } else { 1 };
    Ok((outcome, apply_outcome(params, outcome, state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    fn params(p: f64, q: f64) -> PartialProjParams {
        PartialProjParams::new(p, q).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(PartialProjParams::new(1.1, 0.5).is_err());
        assert!(PartialProjParams::new(0.5, -0.1).is_err());
        assert!(PartialProjParams::new(f64::NAN, 0.5).is_err());
        // p + q < 1 is allowed
        assert!(PartialProjParams::new(0.2, 0.3).is_ok());
    }

    #[test]
    fn dops_examples() {
        let (d0, d1) = dops(params(1.0, 1.0));
        assert_eq!(d0, ComplexMatrix::from_real_diag(&[1.0, 0.0]));
        assert_eq!(d1, ComplexMatrix::from_real_diag(&[0.0, 1.0]));

        let (d0, d1) = dops(params(0.5, 0.5));
        let h = ComplexMatrix::identity(2).scale_re(0.5f64.sqrt());
        assert!(d0.approx_eq(&h, 1e-15) && d1.approx_eq(&h, 1e-15));

        let (d0, d1) = dops(params(0.8, 0.6));
        let want0 = ComplexMatrix::from_real_diag(&[0.89443, 0.63246]);
        let want1 = ComplexMatrix::from_real_diag(&[0.44721, 0.77460]);
        assert!(d0.approx_eq(&want0, 1e-5) && d1.approx_eq(&want1, 1e-5));
    }

    #[test]
    fn probability_examples() {
        let (p0, p1) = outcome_probabilities(params(1.0, 1.0), &QubitState::zero());
        assert_eq!((p0, p1), (1.0, 0.0));
        let (p0, p1) = outcome_probabilities(params(0.8, 0.6), &QubitState::plus());
        assert!((p0 - 0.6).abs() < 1e-15 && (p1 - 0.4).abs() < 1e-15);
        let (p, q) = (0.7, 0.9);
        let (p0, p1) = outcome_probabilities(params(p, q), &QubitState::maximally_mixed());
        assert!((p0 - (1.0 + p - q) / 2.0).abs() < 1e-15);
        assert!((p1 - (1.0 + q - p) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn apply_outcome_examples() {
        let rho = QubitState::pure([c(0.6, 0.0), c(0.0, 0.8)]);
        let out = apply_outcome(params(1.0, 1.0), 0, &rho).unwrap();
        assert!(out.matrix().approx_eq(QubitState::zero().matrix(), 1e-15));

        let out = apply_outcome(params(0.5, 0.5), 0, &rho).unwrap();
        assert!(out.matrix().approx_eq(rho.matrix(), 1e-15));

        let out = apply_outcome(params(0.8, 0.6), 0, &QubitState::plus()).unwrap();
        assert!((out.p0() - 2.0 / 3.0).abs() < 1e-14);
        let want = QubitState::pure([re(0.8f64.sqrt()), re(0.4f64.sqrt())]);
        assert!(out.matrix().approx_eq(want.matrix(), 1e-14));
    }

    #[test]
    fn zero_probability_branch_is_an_error() {
        let err = apply_outcome(params(1.0, 1.0), 1, &QubitState::zero()).unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityBranch { outcome: 1, .. }));
    }

    #[test]
    fn strength_examples() {
        assert_eq!(strength(params(1.0, 1.0)), 1.0);
        assert_eq!(strength(params(0.5, 0.5)), 0.0);
        assert!((strength(params(0.8, 0.6)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn state_validation() {
        assert!(QubitState::from_matrix(ComplexMatrix::identity(2)).is_err());
        assert!(QubitState::from_matrix(ComplexMatrix::from_real_diag(&[1.2, -0.2])).is_err());
        assert!(QubitState::from_matrix(ComplexMatrix::from_real_diag(&[0.3, 0.7])).is_ok());
    }

    #[test]
    fn averaged_probability_matches_asymmetry() {
        for (p, q) in [(0.9, 0.6), (0.3, 0.2), (1.0, 0.0)] {
            let (d0, _) = dops(params(p, q));
            let avg = (&(&d0.adjoint() * &d0) * &ComplexMatrix::identity(2).scale_re(0.5)).trace().re;
            assert!((avg - (1.0 + p - q) / 2.0).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn completeness(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let (d0, d1) = dops(params(p, q));
            let sum = &(&d0.adjoint() * &d0) + &(&d1.adjoint() * &d1);
            prop_assert!(sum.approx_eq(&ComplexMatrix::identity(2), 1e-15));
        }

        #[test]
        fn probabilities_add_up_and_purity_is_kept(
            p in 0.0f64..=1.0, q in 0.0f64..=1.0,
            a in -1.0f64..1.0, b in -1.0f64..1.0, cc in -1.0f64..1.0, d in -1.0f64..1.0,
        ) {
            prop_assume!(a * a + b * b + cc * cc + d * d > 1e-3);
            let state = QubitState::pure([c(a, b), c(cc, d)]);
            let pp = params(p, q);
            let (p0, p1) = outcome_probabilities(pp, &state);
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
            for (k, pk) in [(0u8, p0), (1u8, p1)] {
                if pk > 1e-9 {
                    let out = apply_outcome(pp, k, &state).unwrap();
                    prop_assert!((out.purity() - 1.0).abs() < 1e-10);
                }
            }
        }
    }
}
