//! Process matrices and fidelities of quantum operations and of
//! multi-outcome measurements.
//!
//! Processes are written in the Pauli basis `{E_i}` of `d = 2^N` dimensions,
//! `ρ ↦ Σ_ij χ_ij E_i ρ E_j†`. A measurement is a [`ProcessSet`]: one process
//! per outcome, with outcome probability `p_k = Tr χ^(k)` for a maximally
//! mixed input.
//!
//! | name | definition |
//! |------|------------|
//! | F1 | `Σ √(p_k q_k)` |
//! | F2 | `F1²` |
//! | F3 | `Tr √(√σ ρ √σ)` |
//! | F4 | `F3²` |
//! | F5 | `Tr(ρσ)` |
//! | F6 | `Tr(χ χ')` |
//! | F7 | `[Tr √(√χ' χ √χ')]²` |
//! | F8 | `Tr(χ χ') / (Tr χ · Tr χ')` |
//! | F9 | `[Tr √(√χ' χ √χ')]² / (Tr χ · Tr χ')` |

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuous_readout::trajectory_rng;
use crate::decomposition::KrausSet;
use crate::error::{Error, Result};
use crate::linalg::{herm_eig, pauli_expand, spectral_map, ComplexMatrix, PauliBasis, C64};
use crate::partial_projection::validate_density;

/// Hermiticity and positivity tolerance for process matrices and POVM elements.
pub const PSD_TOL: f64 = 1e-10;

/// Trace and completeness tolerance.
pub const TRACE_TOL: f64 = 1e-9;

/// Relative size of the second eigenvalue below which a process counts as rank one.
pub const RANK_TOL: f64 = 1e-10;

/// Probabilities at or below this are treated as zero.
pub const ZERO_PROB: f64 = 1e-14;

/// Eigenvalues below `RANK_CUTOFF · ε · dim · λ_max` are dropped before
/// square roots, which would otherwise turn rounding noise into `O(1e-8)`.
const RANK_CUTOFF: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProcess")]
pub struct ProcessMatrix {
    dim: usize,
    chi: ComplexMatrix,
}

#[derive(Deserialize)]
struct RawProcess {
    dim: usize,
    chi: ComplexMatrix,
}

impl TryFrom<RawProcess> for ProcessMatrix {
    type Error = Error;
    fn try_from(raw: RawProcess) -> Result<Self> {
        Self::new(raw.dim, raw.chi)
    }
}

impl ProcessMatrix {
    /// Validates shape, Hermiticity and positivity.
    pub fn new(dim: usize, chi: ComplexMatrix) -> Result<Self> {
        PauliBasis::for_dim(dim)?;
        if chi.dim() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: chi.dim(),
            });
        }
        let deviation = chi.hermiticity_defect();
        if deviation > PSD_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let (vals, _) = herm_eig(&chi, PSD_TOL)?;
        if vals[0] < -PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: vals[0] });
        }
        Ok(Self {
            dim,
            chi: chi.hermitian_part(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chi(&self) -> &ComplexMatrix {
        &self.chi
    }

    /// `Tr χ`, the outcome probability averaged over input states.
    pub fn trace(&self) -> f64 {
        self.chi.trace().re
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            chi: self.chi.scale_re(c),
        }
    }

    /// `‖Σ_ij χ_ij E_j†E_i − I‖_F ≤ tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let p = povm_from_process(self);
        (&p.matrix - &ComplexMatrix::identity(self.dim)).frobenius_norm() <= tol
    }

    /// Whether all but the leading eigenvalue vanish, and the second eigenvalue.
    pub fn rank_one(&self) -> (bool, f64) {
        let (vals, _) = herm_eig(&self.chi, f64::INFINITY).expect("validated Hermitian");
        let n = vals.len();
        let second = if n > 1 { vals[n - 2] } else { 0.0 };
        (second <= RANK_TOL * vals[n - 1].abs().max(1.0), second)
    }
}

impl std::ops::Add for &ProcessMatrix {
    type Output = ProcessMatrix;
    fn add(self, other: &ProcessMatrix) -> ProcessMatrix {
        assert_eq!(self.dim, other.dim);
        ProcessMatrix {
            dim: self.dim,
            chi: &self.chi + &other.chi,
        }
    }
}

/// `χ = Σ_m |α^(m)⟩⟨α^(m)|` with `α^(m)` the Pauli coefficients of `ops[m]`.
pub fn chi_from_kraus(ops: &[ComplexMatrix], d: usize) -> Result<ProcessMatrix> {
    let basis = PauliBasis::for_dim(d)?;
    let mut chi = ComplexMatrix::zeros(d * d);
    for op in ops {
        let a = pauli_expand(op, &basis)?;
        chi = &chi + &ComplexMatrix::outer(&a, &a);
    }
    ProcessMatrix::new(d, chi)
}

/// `Σ_ij χ_ij E_i ρ E_j†`.
pub fn apply_process(chi: &ProcessMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.dim() != chi.dim {
        return Err(Error::DimensionMismatch {
            expected: chi.dim,
            got: rho.dim(),
        });
    }
    let basis = PauliBasis::new(chi.dim.trailing_zeros() as usize);
    let e = basis.elements();
    let left: Vec<ComplexMatrix> = e.iter().map(|ei| ei * rho).collect();
    let mut out = ComplexMatrix::zeros(chi.dim);
    for (i, li) in left.iter().enumerate() {
        for (j, ej) in e.iter().enumerate() {
            let x = chi.chi[(i, j)];
            if x != C64::new(0.0, 0.0) {
                out = &out + &(li * &ej.adjoint()).scale(x);
            }
        }
    }
    Ok(out)
}

/// A positive operator of a POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPovm")]
pub struct POVMElement {
    pub dim: usize,
    pub matrix: ComplexMatrix,
}

#[derive(Deserialize)]
struct RawPovm {
    dim: usize,
    matrix: ComplexMatrix,
}

impl TryFrom<RawPovm> for POVMElement {
    type Error = Error;
    fn try_from(raw: RawPovm) -> Result<Self> {
        Self::new(raw.matrix).and_then(|p| {
            if p.dim == raw.dim {
                Ok(p)
            } else {
                Err(Error::DimensionMismatch {
                    expected: raw.dim,
                    got: p.dim,
                })
            }
        })
    }
}

impl POVMElement {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let deviation = matrix.hermiticity_defect();
        if deviation > PSD_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let (vals, _) = herm_eig(&matrix, PSD_TOL)?;
        if vals[0] < -PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: vals[0] });
        }
        Ok(Self {
            dim: matrix.dim(),
            matrix: matrix.hermitian_part(),
        })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

/// `P = Σ_ij χ_ij E_j†E_i`.
pub fn povm_from_process(chi: &ProcessMatrix) -> POVMElement {
    let basis = PauliBasis::new(chi.dim.trailing_zeros() as usize);
    let e = basis.elements();
    let mut p = ComplexMatrix::zeros(chi.dim);
    for (i, ei) in e.iter().enumerate() {
        for (j, ej) in e.iter().enumerate() {
            let x = chi.chi[(i, j)];
            if x != C64::new(0.0, 0.0) {
                p = &p + &(&ej.adjoint() * ei).scale(x);
            }
        }
    }
    POVMElement {
        dim: chi.dim,
        matrix: p.hermitian_part(),
    }
}

/// Checks `Σ_k P_k = I` within [`TRACE_TOL`].
pub fn validate_povm_set(set: &[POVMElement]) -> Result<()> {
    let d = set.first().map(|p| p.dim).ok_or(Error::IncompleteSet { deviation: f64::INFINITY })?;
    let mut sum = ComplexMatrix::identity(d).scale_re(-1.0);
    for p in set {
        if p.dim != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim });
        }
        sum = &sum + &p.matrix;
    }
    let deviation = sum.frobenius_norm();
    if deviation > TRACE_TOL {
        return Err(Error::IncompleteSet { deviation });
    }
    Ok(())
}

/// Labelled outcome processes of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSet {
    dim: usize,
    outcomes: Vec<(String, ProcessMatrix)>,
}

impl ProcessSet {
    pub fn new(outcomes: Vec<(String, ProcessMatrix)>) -> Result<Self> {
        let dim = outcomes
            .first()
            .map(|(_, c)| c.dim)
            .ok_or_else(|| Error::Format("process set has no outcomes".into()))?;
        for (i, (label, chi)) in outcomes.iter().enumerate() {
            if chi.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: chi.dim });
            }
            if outcomes[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::LabelMismatch(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { dim, outcomes })
    }

    /// Ideal processes `|M_k⟩⟨M_k|` of a Kraus set.
    pub fn from_kraus_set(set: &KrausSet) -> Result<Self> {
        Self::from_operators(&set.labels, &set.ops)
    }

    /// One single-Kraus process per labelled operator.
    pub fn from_operators(labels: &[String], ops: &[ComplexMatrix]) -> Result<Self> {
        if labels.len() != ops.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: ops.len(),
            });
        }
        let d = ops.first().map(|m| m.dim()).unwrap_or(2);
        let outcomes = labels
            .iter()
            .zip(ops)
            .map(|(l, m)| Ok((l.clone(), chi_from_kraus(std::slice::from_ref(m), d)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(outcomes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[(String, ProcessMatrix)] {
        &self.outcomes
    }

    pub fn labels(&self) -> Vec<&str> {
        self.outcomes.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn get(&self, label: &str) -> Option<&ProcessMatrix> {
        self.outcomes.iter().find(|(l, _)| l == label).map(|(_, c)| c)
    }

    /// `p_k = Tr χ^(k)` in outcome order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.outcomes.iter().map(|(_, c)| c.trace()).collect()
    }

    /// `Σ_k χ^(k)`.
    pub fn nonselective(&self) -> ProcessMatrix {
        let mut it = self.outcomes.iter().map(|(_, c)| c);
        let first = it.next().expect("non-empty set").clone();
        it.fold(first, |acc, c| &acc + c)
    }

    pub fn povm(&self) -> Vec<POVMElement> {
        self.outcomes.iter().map(|(_, c)| povm_from_process(c)).collect()
    }

    /// Each χ^(k) rescaled to match outcome frequencies from `shots`
    /// multinomial draws, modelling finite sampling of the outcome statistics.
    pub fn with_sampling_noise(&self, shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidConfig {
                reason: "sampling noise needs at least one shot".into(),
            });
        }
        let mut rng = trajectory_rng(seed, 0);
        let probs = self.probabilities();
        let total: f64 = probs.iter().sum();
        let mut remaining_n = shots;
        let mut remaining_p = 1.0;
        let mut outcomes = Vec::with_capacity(self.len());
        for (k, ((label, chi), p)) in self.outcomes.iter().zip(&probs).enumerate() {
            let p = (p / total).max(0.0);
            let count = if k + 1 == self.len() {
                remaining_n
            } else if remaining_n == 0 || remaining_p <= 0.0 {
                0
            } else {
                let frac = (p / remaining_p).clamp(0.0, 1.0);
                Binomial::new(remaining_n, frac).expect("valid binomial").sample(&mut rng)
            };
            remaining_n -= count;
            remaining_p -= p;
            let freq = count as f64 / shots as f64;
            let c = if p > ZERO_PROB { chi.scaled(freq / p) } else { chi.clone() };
            outcomes.push((label.clone(), c));
        }
        Self::new(outcomes)
    }
}

#[derive(Serialize, Deserialize)]
struct OutcomeJson {
    label: String,
    p: f64,
    chi: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct ProcessSetJson {
    dim: usize,
    outcomes: Vec<OutcomeJson>,
}

impl Serialize for ProcessSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProcessSetJson {
            dim: self.dim,
            outcomes: self
                .outcomes
                .iter()
                .map(|(label, c)| OutcomeJson {
                    label: label.clone(),
                    p: c.trace(),
                    chi: c.chi.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProcessSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ProcessSetJson::deserialize(d)?;
        let mut outcomes = Vec::with_capacity(raw.outcomes.len());
        for o in raw.outcomes {
            let chi = ProcessMatrix::new(raw.dim, o.chi).map_err(D::Error::custom)?;
            if (chi.trace() - o.p).abs() > TRACE_TOL {
                return Err(D::Error::custom(format!(
                    "outcome {:?}: p = {} but Tr chi = {}",
                    o.label,
                    o.p,
                    chi.trace()
                )));
            }
            outcomes.push((o.label, chi));
        }
        ProcessSet::new(outcomes).map_err(D::Error::custom)
    }
}

/// A probability distribution over outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = probabilities.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidProbability { name: "probability", value: bad });
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability { name: "total probability", value: sum });
        }
        Ok(Self(probabilities))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassicalVariant {
    /// F1
    Bhattacharyya,
    /// F2
    Squared,
    /// `½ Σ |a_k − b_k|`, a distance rather than a fidelity.
    Kolmogorov,
}

pub fn classical_fidelity(a: &ProbDist, b: &ProbDist, variant: ClassicalVariant) -> Result<f64> {
    classical(a.as_slice(), b.as_slice(), variant)
}

fn classical(a: &[f64], b: &[f64], variant: ClassicalVariant) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let f1 = || a.iter().zip(b).map(|(x, y)| (x * y).max(0.0).sqrt()).sum::<f64>().min(1.0);
    Ok(match variant {
        ClassicalVariant::Bhattacharyya => f1(),
        ClassicalVariant::Squared => f1().powi(2),
        ClassicalVariant::Kolmogorov => (0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateVariant {
    /// F3
    Uhlmann,
    /// F4
    UhlmannSquared,
}

/// Uhlmann fidelity of two density matrices, with `sigma` the reference.
pub fn state_fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix, variant: StateVariant) -> Result<f64> {
    validate_density(rho, rho.dim())?;
    validate_density(sigma, rho.dim())?;
    let f3 = uhlmann_root(rho, sigma)?.min(1.0);
    Ok(match variant {
        StateVariant::Uhlmann => f3,
        StateVariant::UhlmannSquared => f3 * f3,
    })
}

/// F5: `Tr(ρσ)`, equal to F4 when `sigma` is pure.
pub fn overlap_fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            got: rho.dim(),
        });
    }
    Ok(trace_product(rho, sigma))
}

/// `Re Tr(AB)`.
fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    t
}

fn cutoff(vals: &[f64]) -> f64 {
    let top = vals.iter().cloned().fold(0.0, f64::max);
    RANK_CUTOFF * f64::EPSILON * vals.len() as f64 * top
}

/// Square root of a PSD matrix with rounding-level eigenvalues dropped.
fn clean_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (vals, vecs) = herm_eig(m, f64::INFINITY)?;
    let cut = cutoff(&vals);
    Ok(spectral_map(&vals, &vecs, |x| if x > cut { x.sqrt() } else { 0.0 }))
}

/// `Tr √(√b a √b)` for positive semidefinite `a`, `b`.
fn uhlmann_root(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let sb = clean_sqrt(b)?;
    let inner = (&(&sb * a) * &sb).hermitian_part();
    let (vals, _) = herm_eig(&inner, f64::INFINITY)?;
    let cut = cutoff(&vals);
    Ok(vals.iter().filter(|&&x| x > cut).map(|x| x.sqrt()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessVariant {
    F6,
    F7,
    F8,
    F9,
}

fn check_same_dim(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: b.dim,
            got: a.dim,
        });
    }
    Ok(())
}

fn check_unit_trace(c: &ProcessMatrix) -> Result<()> {
    let trace = c.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::TraceNotUnit { trace });
    }
    Ok(())
}

fn positive_traces(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<(f64, f64)> {
    let (ta, tb) = (a.trace(), b.trace());
    if ta <= ZERO_PROB || tb <= ZERO_PROB {
        return Err(Error::ZeroTrace);
    }
    Ok((ta, tb))
}

/// Process fidelity of `chi` against the reference `chi_ideal`.
pub fn process_fidelity(chi: &ProcessMatrix, chi_ideal: &ProcessMatrix, variant: ProcessVariant) -> Result<f64> {
    check_same_dim(chi, chi_ideal)?;
    let f = match variant {
        ProcessVariant::F6 => {
            check_unit_trace(chi)?;
            check_unit_trace(chi_ideal)?;
            trace_product(&chi.chi, &chi_ideal.chi)
        }
        ProcessVariant::F7 => {
            check_unit_trace(chi)?;
            check_unit_trace(chi_ideal)?;
            uhlmann_root(&chi.chi, &chi_ideal.chi)?.powi(2)
        }
        ProcessVariant::F8 => {
            let (rank_one, second) = chi_ideal.rank_one();
            if !rank_one {
                return Err(Error::RankViolation { second });
            }
            let (t, ti) = positive_traces(chi, chi_ideal)?;
            trace_product(&chi.chi, &chi_ideal.chi) / (t * ti)
        }
        ProcessVariant::F9 => {
            let (t, ti) = positive_traces(chi, chi_ideal)?;
            uhlmann_root(&chi.chi, &chi_ideal.chi)?.powi(2) / (t * ti)
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Per-outcome fidelity, insensitive to rescaling of `chi_k`. Uses the
/// overlap form for a rank-one ideal and the Uhlmann form otherwise.
pub fn partial_fidelity(chi_k: &ProcessMatrix, chi_k_ideal: &ProcessMatrix) -> Result<f64> {
    if chi_k_ideal.rank_one().0 {
        process_fidelity(chi_k, chi_k_ideal, ProcessVariant::F8)
    } else {
        process_fidelity(chi_k, chi_k_ideal, ProcessVariant::F9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TotalVariant {
    /// `Σ_k √(p_k p_k') F^(k)`
    Sum,
    /// `[Σ_k √(p_k p_k' F^(k))]²`
    SqrtSquared,
    /// `[Σ_k √(p_k p_k') F9_k^α]^(1/α)`
    Parametric(f64),
}

/// Outcome pairs `(label, actual, ideal)` matched by label, in ideal order.
fn match_outcomes<'a>(
    actual: &'a ProcessSet,
    ideal: &'a ProcessSet,
) -> Result<Vec<(&'a str, &'a ProcessMatrix, &'a ProcessMatrix)>> {
    if actual.dim != ideal.dim {
        return Err(Error::DimensionMismatch {
            expected: ideal.dim,
            got: actual.dim,
        });
    }
    if actual.len() != ideal.len() {
        return Err(Error::LabelMismatch(format!(
            "{} actual outcomes vs {} ideal outcomes",
            actual.len(),
            ideal.len()
        )));
    }
    ideal
        .outcomes
        .iter()
        .map(|(label, ci)| {
            let ca = actual
                .get(label)
                .ok_or_else(|| Error::LabelMismatch(format!("outcome {label:?} missing from actual set")))?;
            Ok((label.as_str(), ca, ci))
        })
        .collect()
}

/// Overall fidelity of a measurement against a reference measurement.
///
/// `Sum` and `SqrtSquared` use the overlap formulas when every reference
/// outcome is rank one, and otherwise their `Parametric(1)` and
/// `Parametric(1/2)` equivalents. Outcomes with a zero probability on
/// either side contribute nothing.
pub fn total_fidelity(actual: &ProcessSet, ideal: &ProcessSet, variant: TotalVariant) -> Result<f64> {
    let pairs = match_outcomes(actual, ideal)?;
    let all_rank_one = || pairs.iter().all(|(_, _, ci)| ci.rank_one().0);
    let f = match variant {
        TotalVariant::Sum if all_rank_one() => pairs
            .iter()
            .map(|(_, ca, ci)| {
                let w = ca.trace() * ci.trace();
                if w > ZERO_PROB * ZERO_PROB {
                    trace_product(&ca.chi, &ci.chi) / w.sqrt()
                } else {
                    0.0
                }
            })
            .sum::<f64>(),
        TotalVariant::SqrtSquared if all_rank_one() => pairs
            .iter()
            .map(|(_, ca, ci)| trace_product(&ca.chi, &ci.chi).max(0.0).sqrt())
            .sum::<f64>()
            .powi(2),
        TotalVariant::Sum => parametric(&pairs, 1.0)?,
        TotalVariant::SqrtSquared => parametric(&pairs, 0.5)?,
        TotalVariant::Parametric(alpha) => parametric(&pairs, alpha)?,
    };
    Ok(f.clamp(0.0, 1.0))
}

fn parametric(pairs: &[(&str, &ProcessMatrix, &ProcessMatrix)], alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidConfig {
            reason: format!("parametric exponent must be positive, got {alpha}"),
        });
    }
    let mut s = 0.0;
    for (_, ca, ci) in pairs {
        let (p, pi) = (ca.trace(), ci.trace());
        if p <= ZERO_PROB || pi <= ZERO_PROB {
            continue;
        }
        let f9 = process_fidelity(ca, ci, ProcessVariant::F9)?;
        s += (p * pi).sqrt() * f9.powf(alpha);
    }
    Ok(s.powf(1.0 / alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PovmVariant {
    Fp,
    FpTilde,
}

/// Probability-only fidelity between two complete POVMs, element by element.
pub fn povm_fidelity(actual: &[POVMElement], ideal: &[POVMElement], variant: PovmVariant) -> Result<f64> {
    if actual.len() != ideal.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: ideal.len(),
        });
    }
    validate_povm_set(actual)?;
    validate_povm_set(ideal)?;
    if actual[0].dim != ideal[0].dim {
        return Err(Error::DimensionMismatch {
            expected: ideal[0].dim,
            got: actual[0].dim,
        });
    }
    let d = ideal[0].dim as f64;
    let mut s = 0.0;
    for (a, i) in actual.iter().zip(ideal) {
        let root = uhlmann_root(&a.matrix, &i.matrix)?;
        s += match variant {
            PovmVariant::Fp => {
                let w = (a.trace() * i.trace()).sqrt();
                if w > ZERO_PROB {
                    root * root / w
                } else {
                    0.0
                }
            }
            PovmVariant::FpTilde => root,
        };
    }
    let f = match variant {
        PovmVariant::Fp => s / d,
        PovmVariant::FpTilde => (s / d).powi(2),
    };
    Ok(f.clamp(0.0, 1.0))
}

/// [`povm_fidelity`] on the POVMs of two process sets, matched by label.
pub fn povm_fidelity_of_sets(actual: &ProcessSet, ideal: &ProcessSet, variant: PovmVariant) -> Result<f64> {
    let pairs = match_outcomes(actual, ideal)?;
    let a: Vec<POVMElement> = pairs.iter().map(|(_, ca, _)| povm_from_process(ca)).collect();
    let i: Vec<POVMElement> = pairs.iter().map(|(_, _, ci)| povm_from_process(ci)).collect();
    povm_fidelity(&a, &i, variant)
}

/// Haar-random pure state of dimension `d`.
pub fn haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..d)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Monte Carlo average over Haar-random pure inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageFidelity {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Average of F4 between the outputs of `chi` and of a unitary reference,
/// over `samples` Haar-random pure inputs. Sample `i` uses stream `i` of `seed`.
pub fn average_state_fidelity(chi: &ProcessMatrix, chi_ideal_unitary: &ProcessMatrix, samples: usize, seed: u64) -> Result<f64> {
    Ok(average_state_fidelity_stats(chi, chi_ideal_unitary, samples, seed)?.mean)
}

pub fn average_state_fidelity_stats(
    chi: &ProcessMatrix,
    chi_ideal_unitary: &ProcessMatrix,
    samples: usize,
    seed: u64,
) -> Result<AverageFidelity> {
    check_same_dim(chi, chi_ideal_unitary)?;
    check_unit_trace(chi)?;
    check_unit_trace(chi_ideal_unitary)?;
    let d = chi.dim;
    let values = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            let psi = haar_state(d, &mut rng);
            let rho = ComplexMatrix::outer(&psi, &psi);
            let out = apply_process(chi, &rho)?.hermitian_part();
            let want = apply_process(chi_ideal_unitary, &rho)?.hermitian_part();
            state_fidelity(&out, &want, StateVariant::UhlmannSquared)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(AverageFidelity {
        mean,
        std_err: (var / n).sqrt(),
        samples,
    })
}

/// Average state fidelity implied by a process fidelity: `1 − (1 − F6)/(1 + 1/d)`.
pub fn average_fidelity_from_process(f6: f64, d: usize) -> f64 {
    1.0 - (1.0 - f6) / (1.0 + 1.0 / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub label: String,
    pub p: f64,
    pub p_ideal: f64,
    /// `None` when the reference probability vanishes.
    pub partial_fidelity: Option<f64>,
    /// Set when the reference expects the outcome but it never occurs.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub outcomes: Vec<OutcomeReport>,
    pub total_sum: f64,
    pub total_sqrt_squared: f64,
    pub povm_fp: f64,
    pub povm_fp_tilde: f64,
    pub bhattacharyya: f64,
    pub bhattacharyya_squared: f64,
    pub kolmogorov: f64,
}

/// Every fidelity of `actual` against `ideal`.
pub fn fidelity_report(actual: &ProcessSet, ideal: &ProcessSet) -> Result<FidelityReport> {
    let pairs = match_outcomes(actual, ideal)?;
    let mut outcomes = Vec::with_capacity(pairs.len());
    let (mut pa, mut pi) = (Vec::new(), Vec::new());
    for (label, ca, ci) in &pairs {
        let (p, p_ideal) = (ca.trace(), ci.trace());
        pa.push(p);
        pi.push(p_ideal);
        let (partial, flagged) = if p_ideal <= ZERO_PROB {
            (None, false)
        } else if p <= ZERO_PROB {
            (Some(0.0), true)
        } else {
            (Some(partial_fidelity(ca, ci)?), false)
        };
        outcomes.push(OutcomeReport {
            label: label.to_string(),
            p,
            p_ideal,
            partial_fidelity: partial,
            flagged,
        });
    }
    Ok(FidelityReport {
        outcomes,
        total_sum: total_fidelity(actual, ideal, TotalVariant::Sum)?,
        total_sqrt_squared: total_fidelity(actual, ideal, TotalVariant::SqrtSquared)?,
        povm_fp: povm_fidelity_of_sets(actual, ideal, PovmVariant::Fp)?,
        povm_fp_tilde: povm_fidelity_of_sets(actual, ideal, PovmVariant::FpTilde)?,
        bhattacharyya: classical(&pa, &pi, ClassicalVariant::Bhattacharyya)?,
        bhattacharyya_squared: classical(&pa, &pi, ClassicalVariant::Squared)?,
        kolmogorov: classical(&pa, &pi, ClassicalVariant::Kolmogorov)?,
    })
}
