//! Reduction of arbitrary qubit measurements to chains of partial projections.
//!
//! A two-outcome measurement `{N0, N1}` factors as `N_k = U_k D_k V†` with a
//! shared right unitary, so it can be run as "rotate, partially project,
//! rotate back depending on the outcome". An `n`-outcome measurement
//! `{M_k}` is reduced to at most `n − 1` such steps: step `j` either stops
//! on outcome 0 (leaf `j`) or passes on outcome 1 to the next step, and the
//! last outcome-1 branch ends with a fixed unitary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ancilla_circuit::{circuit_for, run_circuit, CircuitVariant};
use crate::continuous_readout::{
    finite_thresholds_from_pq, simulate_with_rng, trajectory_rng, ReadoutConfig, NO_MEASUREMENT_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{
    herm_eig, spectral_map, svd2, unitary_from_scaled_columns, ComplexMatrix, C64, EIG_TOL, SVD_TIE_TOL,
};
use crate::partial_projection::{self, dops, PartialProjParams, QubitState};

/// Allowed `‖Σ M_k†M_k − I‖_F`.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Allowed excess of `N0†N0` over the identity.
pub const NORM_TOL: f64 = 1e-9;

/// Smallest singular value of an intermediate `N1` that is still inverted.
pub const INVERSE_CUTOFF: f64 = 1e-8;

/// Eigenvalues of `N0†N0` this close to 1 count as exactly 1 in [`remainder`].
pub const ROUNDING_GAP: f64 = 8.0 * f64::EPSILON;

/// Unitarity tolerance for protocol validation.
pub const UNITARY_TOL: f64 = 1e-10;

/// An ordered, labelled set of single-qubit Kraus operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausSet {
    pub ops: Vec<ComplexMatrix>,
    pub labels: Vec<String>,
}

impl KrausSet {
    /// Builds and validates a set.
    pub fn new(ops: Vec<ComplexMatrix>, labels: Vec<String>) -> Result<Self> {
        let set = Self { ops, labels };
        validate_kraus_set(&set)?;
        Ok(set)
    }

    /// Labels `"0"`, `"1"`, ...
    pub fn unlabeled(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let labels = (0..ops.len()).map(|k| k.to_string()).collect();
        Self::new(ops, labels)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `‖Σ M_k†M_k − I‖_F`.
    pub fn completeness_defect(&self) -> f64 {
        completeness_defect(&self.ops)
    }

    /// Projective measurement in the computational basis.
    pub fn projective() -> Self {
        let ops = vec![
            ComplexMatrix::from_real_diag(&[1.0, 0.0]),
            ComplexMatrix::from_real_diag(&[0.0, 1.0]),
        ];
        Self::unlabeled(ops).expect("projective set is complete")
    }

    /// The pair `(D0, D1)` of a partial projection.
    pub fn partial_projection(params: PartialProjParams) -> Self {
        let (d0, d1) = dops(params);
        Self {
            ops: vec![d0, d1],
            labels: vec!["0".into(), "1".into()],
        }
    }

    /// Trine measurement `√(2/3)|t_k⟩⟨t_k|` with `|t_k⟩` at Bloch angles
    /// 0°, 120° and 240° in the X–Z plane.
    pub fn trine() -> Self {
        let ops = (0..3)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let t = [C64::new((theta / 2.0).cos(), 0.0), C64::new((theta / 2.0).sin(), 0.0)];
                ComplexMatrix::outer(&t, &t).scale_re((2.0f64 / 3.0).sqrt())
            })
            .collect();
        Self::unlabeled(ops).expect("trine set is complete")
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn completeness_defect(ops: &[ComplexMatrix]) -> f64 {
    let mut sum = ComplexMatrix::identity(2).scale_re(-1.0);
    for m in ops {
        sum = &sum + &(&m.adjoint() * m);
    }
    sum.frobenius_norm()
}

/// Checks shape, labels and completeness of a Kraus set.
pub fn validate_kraus_set(s: &KrausSet) -> Result<()> {
    if s.ops.is_empty() {
        return Err(Error::EmptyKrausSet);
    }
    if s.labels.len() != s.ops.len() {
        return Err(Error::LengthMismatch {
            left: s.ops.len(),
            right: s.labels.len(),
        });
    }
    for m in &s.ops {
        if m.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: m.dim() });
        }
    }
    for (i, l) in s.labels.iter().enumerate() {
        if s.labels[..i].contains(l) {
            return Err(Error::Format(format!("duplicate label {l:?}")));
        }
    }
    let deviation = s.completeness_defect();
    if !(deviation <= COMPLETENESS_TOL) {
        return Err(Error::NotComplete { deviation });
    }
    Ok(())
}

/// One two-outcome step: apply `V†`, partially project, then apply `U0` or `U1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoOutcomeStep {
    pub pre_unitary: ComplexMatrix,
    #[serde(flatten)]
    pub params: PartialProjParams,
    pub post_unitary_0: ComplexMatrix,
    pub post_unitary_1: ComplexMatrix,
}

impl TwoOutcomeStep {
    /// Realized operators `(U0 D0 V†, U1 D1 V†)`.
    pub fn operators(&self) -> (ComplexMatrix, ComplexMatrix) {
        let (d0, d1) = dops(self.params);
        (
            &(&self.post_unitary_0 * &d0) * &self.pre_unitary,
            &(&self.post_unitary_1 * &d1) * &self.pre_unitary,
        )
    }

    pub fn operator(&self, outcome: u8) -> ComplexMatrix {
        let (n0, n1) = self.operators();
        if outcome == 0 {
            n0
        } else {
            n1
        }
    }

    /// `(U1 D1 V†)⁻¹ = V D1⁻¹ U1†`, or the offending singular value.
    fn n1_inverse(&self, cutoff: f64) -> std::result::Result<ComplexMatrix, f64> {
        let s = [(1.0 - self.params.p()).sqrt(), self.params.q().sqrt()];
        let smallest = s[0].min(s[1]);
        if smallest < cutoff {
            return Err(smallest);
        }
        let dinv = ComplexMatrix::from_real_diag(&[1.0 / s[0], 1.0 / s[1]]);
        Ok(&(&self.pre_unitary.adjoint() * &dinv) * &self.post_unitary_1.adjoint())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, u) in [
            ("pre_unitary", &self.pre_unitary),
            ("post_unitary_0", &self.post_unitary_0),
            ("post_unitary_1", &self.post_unitary_1),
        ] {
            check_unitary(name, u)?;
        }
        Ok(())
    }
}

fn check_unitary(name: &str, u: &ComplexMatrix) -> Result<()> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: u.dim() });
    }
    let d = u.unitarity_defect();
    if !(d <= UNITARY_TOL) {
        return Err(Error::Format(format!("{name} is not unitary (deviation {d:.3e})")));
    }
    Ok(())
}

/// A chain of two-outcome steps realizing an `n`-outcome measurement.
///
/// `leaf_labels[j]` names outcome 0 of step `j`; the last entry names the
/// branch that saw outcome 1 at every step and then `final_unitary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProtocol {
    pub steps: Vec<TwoOutcomeStep>,
    pub final_unitary: ComplexMatrix,
    pub leaf_labels: Vec<String>,
}

impl MeasurementProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.leaf_labels.len() != self.steps.len() + 1 {
            return Err(Error::LengthMismatch {
                left: self.steps.len() + 1,
                right: self.leaf_labels.len(),
            });
        }
        for s in &self.steps {
            s.validate()?;
        }
        check_unitary("final_unitary", &self.final_unitary)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_labels.len()
    }

    /// Branch operator of the `i`-th leaf.
    pub fn branch(&self, i: usize) -> ComplexMatrix {
        let mut acc = ComplexMatrix::identity(2);
        for step in &self.steps[..i.min(self.steps.len())] {
            acc = &step.operator(1) * &acc;
        }
        match self.steps.get(i) {
            Some(step) => &step.operator(0) * &acc,
            None => &self.final_unitary * &acc,
        }
    }

    /// All branch operators in leaf order.
    pub fn branches(&self) -> Vec<ComplexMatrix> {
        (0..self.num_leaves()).map(|i| self.branch(i)).collect()
    }

    /// Largest phase-aligned deviation between the branches and the
    /// operators of `target` with the same labels.
    pub fn max_deviation(&self, target: &KrausSet) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, label) in self.leaf_labels.iter().enumerate() {
            let k = target
                .index_of(label)
                .ok_or_else(|| Error::UnknownLeaf(label.clone()))?;
            worst = worst.max(self.branch(i).phase_distance(&target.ops[k]));
        }
        Ok(worst)
    }
}

/// Factors a complete pair as `N_k = U_k D_k V†`.
///
/// `V` diagonalizes `N0†N0` with the larger eigenvalue first, which makes
/// `p + q >= 1`. Columns of `V` are phased so their largest entry is real
/// and positive; a degenerate `N0†N0` gives `V = I`.
pub fn svd_decompose_pair(n0: &ComplexMatrix, n1: &ComplexMatrix) -> Result<TwoOutcomeStep> {
    for m in [n0, n1] {
        if m.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: m.dim() });
        }
    }
    let deviation = completeness_defect(&[n0.clone(), n1.clone()]);
    if !(deviation <= COMPLETENESS_TOL) {
        return Err(Error::NotComplete { deviation });
    }

    let (vals, vecs) = herm_eig(&(&n0.adjoint() * n0), f64::INFINITY)?;
    let tied = vals[1] - vals[0] <= SVD_TIE_TOL;
    let v = if tied {
        ComplexMatrix::identity(2)
    } else {
        let mut v = ComplexMatrix::zeros(2);
        v.set_column(0, &phase_fixed(vecs.column(1)));
        v.set_column(1, &phase_fixed(vecs.column(0)));
        v
    };
    let b = n0 * &v;
    let c = n1 * &v;
    let sq = |m: &ComplexMatrix, j: usize| m.column(j).iter().map(|x| x.norm_sqr()).sum::<f64>();
    let (b0, b1, c0, c1) = (sq(&b, 0), sq(&b, 1), sq(&c, 0), sq(&c, 1));

    // read small quantities directly, large ones through the complement
    let (p, q) = if tied {
        let p = 0.5 * (b0 + b1);
        (p, 1.0 - p)
    } else {
        let p = if b0 <= 0.5 { b0 } else { 1.0 - c0 };
        let q = if c1 <= 0.5 { c1 } else { 1.0 - b1 };
        (p, q)
    };
    let params = PartialProjParams::new(p.clamp(0.0, 1.0), q.clamp(0.0, 1.0))?;
    let (u0, _) = unitary_from_scaled_columns(&b);
    let (u1, _) = unitary_from_scaled_columns(&c);
    Ok(TwoOutcomeStep {
        pre_unitary: v.adjoint(),
        params,
        post_unitary_0: u0,
        post_unitary_1: u1,
    })
}

fn phase_fixed(mut col: Vec<C64>) -> Vec<C64> {
    let big = if col[0].norm() >= col[1].norm() { col[0] } else { col[1] };
    if big.norm() > 0.0 {
        let ph = big.conj() / big.norm();
        for x in col.iter_mut() {
            *x *= ph;
        }
    }
    col
}

/// `√(I − N0†N0)`.
pub fn remainder(n0: &ComplexMatrix) -> Result<ComplexMatrix> {
    if n0.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: n0.dim() });
    }
    let (vals, vecs) = herm_eig(&(&n0.adjoint() * n0), EIG_TOL)?;
    let top = vals[vals.len() - 1];
    if top > 1.0 + NORM_TOL {
        return Err(Error::NormExceeded { eigenvalue: top });
    }
    // the square root would turn rounding at 1 into an 1e-8 singular value
    Ok(spectral_map(&vals, &vecs, |x| {
        let gap = 1.0 - x;
        if gap <= ROUNDING_GAP {
            0.0
        } else {
            gap.sqrt()
        }
    }))
}

/// Reduces `s` to a chain of two-outcome steps, taking the operators in
/// the given `order` (identity when `None`).
///
/// With `cancel_u1` the outcome-1 rotation of every step is dropped and
/// absorbed into later steps.
pub fn reduce(s: &KrausSet, order: Option<&[usize]>, cancel_u1: bool) -> Result<MeasurementProtocol> {
    validate_kraus_set(s)?;
    let n = s.len();
    let order: Vec<usize> = match order {
        None => (0..n).collect(),
        Some(o) => {
            check_permutation(o, n)?;
            o.to_vec()
        }
    };

    let mut steps = Vec::with_capacity(n - 1);
    // realized product of the outcome-1 operators so far, and its inverse
    let mut prefix = ComplexMatrix::identity(2);
    let mut prefix_inv = ComplexMatrix::identity(2);
    for j in 0..n - 1 {
        let n0 = &s.ops[order[j]] * &prefix_inv;
        let n1 = remainder(&n0)?;
        let mut step = svd_decompose_pair(&n0, &n1)?;
        if cancel_u1 {
            step.post_unitary_1 = ComplexMatrix::identity(2);
        }
        prefix = &step.operator(1) * &prefix;
        if j + 2 < n {
            let inv = step.n1_inverse(INVERSE_CUTOFF).map_err(|sv| Error::SingularRemainder {
                step: j,
                singular_value: sv,
            })?;
            prefix_inv = &prefix_inv * &inv;
        }
        steps.push(step);
    }

    let final_unitary = closing_unitary(&prefix, &s.ops[order[n - 1]]);
    Ok(MeasurementProtocol {
        steps,
        final_unitary,
        leaf_labels: order.iter().map(|&k| s.labels[k].clone()).collect(),
    })
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidOrder(format!("expected {n} entries, got {}", order.len())));
    }
    let mut seen = vec![false; n];
    for &k in order {
        if k >= n || seen[k] {
            return Err(Error::InvalidOrder(format!("{order:?} is not a permutation of 0..{n}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Unitary `W` with `W P = M`, given `P†P = M†M`. Works for singular `P`.
fn closing_unitary(prefix: &ComplexMatrix, target: &ComplexMatrix) -> ComplexMatrix {
    let svd = svd2(prefix);
    let v = svd.vdag.adjoint();
    let (um, _) = unitary_from_scaled_columns(&(target * &v));
    &um * &svd.u.adjoint()
}

/// Operator product along the branch ending in `leaf`.
pub fn compose_branch(p: &MeasurementProtocol, leaf: &str) -> Result<ComplexMatrix> {
    let i = p
        .leaf_labels
        .iter()
        .position(|l| l == leaf)
        .ok_or_else(|| Error::UnknownLeaf(leaf.to_string()))?;
    Ok(p.branch(i))
}

/// How each two-outcome step is carried out during execution.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Exact,
    Ancilla(CircuitVariant),
    Continuous(ReadoutConfig),
}

impl Backend {
    /// Checks that every step of `p` can be run on this backend.
    pub fn check(&self, p: &MeasurementProtocol) -> Result<()> {
        if let Backend::Continuous(config) = self {
            config.validate()?;
            for step in &p.steps {
                if step.params.strength() > NO_MEASUREMENT_TOL {
                    finite_thresholds_from_pq(step.params)?;
                }
            }
        }
        Ok(())
    }

    /// Outcome, post-measurement state and elapsed readout time.
    fn measure<R: Rng + ?Sized>(
        &self,
        params: PartialProjParams,
        state: &QubitState,
        rng: &mut R,
    ) -> Result<(u8, QubitState, f64)> {
        match self {
            Backend::Exact => partial_projection::measure(params, state, rng).map(|(k, s)| (k, s, 0.0)),
            Backend::Ancilla(v) => run_circuit(&circuit_for(*v, params), state, rng).map(|(k, s)| (k, s, 0.0)),
            Backend::Continuous(config) => {
                if params.strength() <= NO_MEASUREMENT_TOL {
                    // both operators are multiples of the identity
                    let outcome = if rng.gen::<f64>() < params.p() { 0 } else { 1 };
                    return Ok((outcome, state.clone(), 0.0));
                }
                let th = finite_thresholds_from_pq(params)?;
                let rec = simulate_with_rng(config, th, state, rng)?;
                // undo the readout-dependent z rotation
                let theta = 0.5 * rec.final_r * config.alpha.tan();
                let fix = ComplexMatrix::from_diag(&[C64::from_polar(1.0, theta), C64::from_polar(1.0, -theta)]);
                let rho = QubitState::from_matrix_unchecked(rec.final_state);
                Ok((rec.outcome, rho.evolve(&fix), rec.duration))
            }
        }
    }
}

/// One execution of a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub leaf: String,
    pub state: QubitState,
    /// Total readout time; zero for the exact and ancilla backends.
    pub duration: f64,
}

/// Runs the protocol once with a generator seeded from `seed`.
pub fn execute_protocol(
    p: &MeasurementProtocol,
    initial: &QubitState,
    seed: u64,
    backend: &Backend,
) -> Result<(String, QubitState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    execute_with_rng(p, initial, backend, &mut rng)
}

pub fn execute_with_rng<R: Rng + ?Sized>(
    p: &MeasurementProtocol,
    initial: &QubitState,
    backend: &Backend,
    rng: &mut R,
) -> Result<(String, QubitState)> {
    execute_run(p, initial, backend, rng).map(|r| (r.leaf, r.state))
}

pub fn execute_run<R: Rng + ?Sized>(
    p: &MeasurementProtocol,
    initial: &QubitState,
    backend: &Backend,
    rng: &mut R,
) -> Result<Run> {
    let mut state = initial.clone();
    let mut duration = 0.0;
    for (j, step) in p.steps.iter().enumerate() {
        let rotated = state.evolve(&step.pre_unitary);
        let (outcome, after, dt) = backend.measure(step.params, &rotated, rng)?;
        duration += dt;
        if outcome == 0 {
            return Ok(Run {
                leaf: p.leaf_labels[j].clone(),
                state: after.evolve(&step.post_unitary_0),
                duration,
            });
        }
        state = after.evolve(&step.post_unitary_1);
    }
    let last = p.leaf_labels.last().expect("validated protocol has a leaf").clone();
    Ok(Run {
        leaf: last,
        state: state.evolve(&p.final_unitary),
        duration,
    })
}

/// `shots` independent runs; run `i` uses stream `i` of `seed`.
pub fn execute_batch(
    p: &MeasurementProtocol,
    initial: &QubitState,
    seed: u64,
    shots: usize,
    backend: &Backend,
) -> Result<Vec<(String, QubitState)>> {
    execute_runs(p, initial, seed, shots, backend).map(|v| v.into_iter().map(|r| (r.leaf, r.state)).collect())
}

pub fn execute_runs(
    p: &MeasurementProtocol,
    initial: &QubitState,
    seed: u64,
    shots: usize,
    backend: &Backend,
) -> Result<Vec<Run>> {
    backend.check(p)?;
    (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            execute_run(p, initial, backend, &mut rng)
        })
        .collect()
}

/// Number of runs ending in each leaf, in leaf order.
pub fn leaf_counts(p: &MeasurementProtocol, runs: &[(String, QubitState)]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = p.leaf_labels.iter().map(|l| (l.clone(), 0)).collect();
    for (label, _) in runs {
        if let Some(entry) = counts.iter_mut().find(|(l, _)| l == label) {
            entry.1 += 1;
        }
    }
    counts
}

/// Haar-random 2×2 unitary.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            g[(i, j)] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    // Gram-Schmidt of a Ginibre matrix
    unitary_from_scaled_columns(&g).0
}

/// Random complete set of `n` operators: `n − 1` random contractions scaled
/// so that their sum stays strictly below the identity, the remainder as the
/// last operator, and an independent random unitary on each.
pub fn random_kraus_set<R: Rng + ?Sized>(n: usize, rng: &mut R) -> KrausSet {
    assert!(n >= 1);
    let mut ops: Vec<ComplexMatrix> = (0..n - 1)
        .map(|_| {
            let mut a = ComplexMatrix::zeros(2);
            for i in 0..2 {
                for j in 0..2 {
                    a[(i, j)] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                }
            }
            a
        })
        .collect();
    if n > 1 {
        let mut gram = ComplexMatrix::zeros(2);
        for a in &ops {
            gram = &gram + &(&a.adjoint() * a);
        }
        let (vals, _) = herm_eig(&gram, f64::INFINITY).expect("Gram matrix is Hermitian");
        let slack = rng.gen_range(1.05..2.0);
        let scale = 1.0 / (vals[1] * slack).sqrt();
        for a in ops.iter_mut() {
            *a = a.scale_re(scale);
        }
    }
    let mut gram = ComplexMatrix::zeros(2);
    for a in &ops {
        gram = &gram + &(&a.adjoint() * a);
    }
    let (vals, vecs) = herm_eig(&gram, f64::INFINITY).expect("Gram matrix is Hermitian");
    ops.push(spectral_map(&vals, &vecs, |x| (1.0 - x).max(0.0).sqrt()));
    let ops = ops.into_iter().map(|m| &random_unitary(rng) * &m).collect();
    KrausSet::unlabeled(ops).expect("generated set is complete")
}
