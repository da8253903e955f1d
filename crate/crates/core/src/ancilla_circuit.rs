//! Partial projections realized with an ancilla qubit.
//!
//! The ancilla starts in `|0⟩`, is entangled with the main qubit so that
//! the two main-qubit basis states rotate it by `±φ`, is rotated by
//! `ε − π/2` and is finally measured in the computational basis. Three
//! equivalent circuits are provided, differing in the entangling gate:
//!
//! * [`CircuitVariant::Direct`]: a Z-controlled Y rotation `exp(−iφ σz⊗σy/2)`;
//! * [`CircuitVariant::CPhase`]: a controlled-phase `CZ(2φ)` dressed by
//!   ancilla X rotations, plus phase corrections;
//! * [`CircuitVariant::FixedCZ`]: a fixed `CZ(π)` after an ancilla `Ry(φ)`.
//!
//! Two-qubit matrices use `main ⊗ ancilla` ordering, i.e. basis index
//! `2·main + ancilla`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, re, ComplexMatrix, C64};
use crate::partial_projection::{PartialProjParams, QubitState, ZERO_BRANCH_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    RyGivenZ,
    CZ,
    MeasureAncillaZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Main,
    Ancilla,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    pub target: Target,
}

impl Gate {
    pub fn rx(angle: f64, target: Target) -> Self {
        Self { kind: GateKind::Rx, angle: Some(angle), target }
    }

    pub fn ry(angle: f64, target: Target) -> Self {
        Self { kind: GateKind::Ry, angle: Some(angle), target }
    }

    pub fn rz(angle: f64, target: Target) -> Self {
        Self { kind: GateKind::Rz, angle: Some(angle), target }
    }

    pub fn ry_given_z(angle: f64) -> Self {
        Self { kind: GateKind::RyGivenZ, angle: Some(angle), target: Target::Both }
    }

    /// Controlled phase with total phase `angle` on `|11⟩`.
    pub fn cz(angle: f64) -> Self {
        Self { kind: GateKind::CZ, angle: Some(angle), target: Target::Both }
    }

    pub fn measure() -> Self {
        Self { kind: GateKind::MeasureAncillaZ, angle: None, target: Target::Ancilla }
    }

    /// Checks the wire/angle combination.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => {
                self.angle.is_some() && matches!(self.target, Target::Main | Target::Ancilla)
            }
            GateKind::RyGivenZ | GateKind::CZ => self.angle.is_some() && self.target == Target::Both,
            GateKind::MeasureAncillaZ => self.angle.is_none() && self.target == Target::Ancilla,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Format(format!("invalid gate {self:?}")))
        }
    }
}

pub fn rx(theta: f64) -> ComplexMatrix {
    let (s, co) = (0.5 * theta).sin_cos();
    ComplexMatrix::from_rows(&[vec![re(co), c(0.0, -s)], vec![c(0.0, -s), re(co)]])
}

pub fn ry(theta: f64) -> ComplexMatrix {
    let (s, co) = (0.5 * theta).sin_cos();
    ComplexMatrix::from_real_rows(&[vec![co, -s], vec![s, co]])
}

pub fn rz(theta: f64) -> ComplexMatrix {
    ComplexMatrix::from_diag(&[C64::from_polar(1.0, -0.5 * theta), C64::from_polar(1.0, 0.5 * theta)])
}

/// `exp(−iφ σz⊗σy/2)`: block-diagonal `Ry(φ) ⊕ Ry(−φ)` on the ancilla.
pub fn ry_given_z(phi: f64) -> ComplexMatrix {
    let (s, co) = (0.5 * phi).sin_cos();
    ComplexMatrix::from_real_rows(&[
        vec![co, -s, 0.0, 0.0],
        vec![s, co, 0.0, 0.0],
        vec![0.0, 0.0, co, s],
        vec![0.0, 0.0, -s, co],
    ])
}

pub fn cphase(theta: f64) -> ComplexMatrix {
    ComplexMatrix::from_diag(&[re(1.0), re(1.0), re(1.0), C64::from_polar(1.0, theta)])
}

/// Unitary of a gate: 2×2 for single-wire gates, 4×4 for two-wire gates.
/// Measurement has no unitary and maps to the 4×4 identity.
pub fn gate_matrix(g: &Gate) -> ComplexMatrix {
    let a = g.angle.unwrap_or(0.0);
    match g.kind {
        GateKind::Rx => rx(a),
        GateKind::Ry => ry(a),
        GateKind::Rz => rz(a),
        GateKind::RyGivenZ => ry_given_z(a),
        GateKind::CZ => cphase(a),
        GateKind::MeasureAncillaZ => ComplexMatrix::identity(4),
    }
}

/// The gate lifted to the two-qubit space.
pub fn gate_matrix_two_qubit(g: &Gate) -> ComplexMatrix {
    let m = gate_matrix(g);
    match (g.kind, g.target) {
        (GateKind::Rx | GateKind::Ry | GateKind::Rz, Target::Main) => m.kron(&ComplexMatrix::identity(2)),
        (GateKind::Rx | GateKind::Ry | GateKind::Rz, _) => ComplexMatrix::identity(2).kron(&m),
        _ => m,
    }
}

/// Circuit angles for `(p, q)`:
/// `φ = [asin(2p−1) + asin(2q−1)]/2`, `ε = [asin(2p−1) − asin(2q−1)]/2`.
pub fn angles_from_pq(params: PartialProjParams) -> (f64, f64) {
    let a = (2.0 * params.p() - 1.0).asin();
    let b = (2.0 * params.q() - 1.0).asin();
    (0.5 * (a + b), 0.5 * (a - b))
}

/// `p = [1 + sin(φ+ε)]/2`, `q = [1 + sin(φ−ε)]/2`.
pub fn pq_from_angles(phi: f64, epsilon: f64) -> Result<PartialProjParams> {
    let slack = 1e-12;
    if (phi + epsilon).abs() > FRAC_PI_2 + slack || (phi - epsilon).abs() > FRAC_PI_2 + slack {
        return Err(Error::OutOfRange { phi, epsilon });
    }
    let p = 0.5 * (1.0 + (phi + epsilon).sin());
    let q = 0.5 * (1.0 + (phi - epsilon).sin());
    PartialProjParams::new(p.clamp(0.0, 1.0), q.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitVariant {
    Direct,
    CPhase,
    FixedCZ,
}

impl CircuitVariant {
    pub const ALL: [CircuitVariant; 3] = [Self::Direct, Self::CPhase, Self::FixedCZ];
}

impl fmt::Display for CircuitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Direct => "direct",
            Self::CPhase => "cphase",
            Self::FixedCZ => "fixed-cz",
        };
        f.write_str(s)
    }
}

impl FromStr for CircuitVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "direct" => Ok(Self::Direct),
            "cphase" | "c-phase" => Ok(Self::CPhase),
            "fixed-cz" | "fixedcz" | "cz" => Ok(Self::FixedCZ),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitCircuit {
    pub variant: CircuitVariant,
    pub phi: f64,
    pub epsilon: f64,
    pub gates: Vec<Gate>,
}

impl TwoQubitCircuit {
    /// Exactly one measurement, in last position, and every gate well formed.
    pub fn validate(&self) -> Result<()> {
        for g in &self.gates {
            g.validate()?;
        }
        let measures = self
            .gates
            .iter()
            .filter(|g| g.kind == GateKind::MeasureAncillaZ)
            .count();
        if measures != 1 || self.gates.last().map(|g| g.kind) != Some(GateKind::MeasureAncillaZ) {
            return Err(Error::Format(
                "circuit must end with its single ancilla measurement".into(),
            ));
        }
        Ok(())
    }

    /// Product of all unitary gates, first gate rightmost.
    pub fn unitary(&self) -> ComplexMatrix {
        self.gates
            .iter()
            .filter(|g| g.kind != GateKind::MeasureAncillaZ)
            .fold(ComplexMatrix::identity(4), |acc, g| &gate_matrix_two_qubit(g) * &acc)
    }
}

/// Gate list for the chosen variant. The ancilla preparation in `|0⟩` is implicit.
pub fn build_circuit(variant: CircuitVariant, phi: f64, epsilon: f64) -> TwoQubitCircuit {
    use Target::*;
    let readout = Gate::ry(epsilon - FRAC_PI_2, Ancilla);
    let gates = match variant {
        CircuitVariant::Direct => vec![Gate::ry_given_z(phi), readout, Gate::measure()],
        CircuitVariant::CPhase => vec![
            // the X dressing turns the |11⟩ phase into Ry(−2φ) on the ancilla
            Gate::rx(-FRAC_PI_2, Ancilla),
            Gate::cz(2.0 * phi),
            Gate::rx(FRAC_PI_2, Ancilla),
            Gate::ry(phi, Ancilla),
            Gate::rz(-phi, Main),
            readout,
            Gate::measure(),
        ],
        CircuitVariant::FixedCZ => vec![
            Gate::ry(phi, Ancilla),
            Gate::cz(std::f64::consts::PI),
            readout,
            Gate::measure(),
        ],
    };
    TwoQubitCircuit { variant, phi, epsilon, gates }
}

/// Convenience: circuit realizing `params`.
pub fn circuit_for(variant: CircuitVariant, params: PartialProjParams) -> TwoQubitCircuit {
    let (phi, epsilon) = angles_from_pq(params);
    build_circuit(variant, phi, epsilon)
}

/// Main-qubit Kraus pair `K_a = ⟨a|_anc U |0⟩_anc`.
pub fn kraus_from_circuit(circuit: &TwoQubitCircuit) -> (ComplexMatrix, ComplexMatrix) {
    let u = circuit.unitary();
    let mut k = [ComplexMatrix::zeros(2), ComplexMatrix::zeros(2)];
    for (a, ka) in k.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                ka[(i, j)] = u[(2 * i + a, 2 * j)];
            }
        }
    }
    let [k0, k1] = k;
    (k0, k1)
}

/// Runs the circuit on `ρ ⊗ |0⟩⟨0|`, samples the ancilla and returns the
/// outcome with the reduced post-measurement state of the main qubit.
pub fn run_circuit<R: Rng + ?Sized>(
    circuit: &TwoQubitCircuit,
    state: &QubitState,
    rng: &mut R,
) -> Result<(u8, QubitState)> {
    let anc0 = ComplexMatrix::from_real_diag(&[1.0, 0.0]);
    let u = circuit.unitary();
    let joint = &(&u * &state.matrix().kron(&anc0)) * &u.adjoint();
    // populations of the ancilla
    let p0: f64 = (0..2).map(|i| joint[(2 * i, 2 * i)].re).sum();
    let outcome: u8 = if rng.gen::<f64>() < p0 { 0 } else { 1 };
    let a = outcome as usize;
    let mut reduced = ComplexMatrix::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            reduced[(i, j)] = joint[(2 * i + a, 2 * j + a)];
        }
    }
    let tr = reduced.trace().re;
    if tr < ZERO_BRANCH_TOL {
        return Err(Error::ZeroProbabilityBranch {
            outcome,
            probability: tr,
        });
    }
    Ok((
        outcome,
        QubitState::from_matrix_unchecked(reduced.scale_re(1.0 / tr).hermitian_part()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partial_projection::dops;
    use std::f64::consts::PI;

    fn params(p: f64, q: f64) -> PartialProjParams {
        PartialProjParams::new(p, q).unwrap()
    }

    #[test]
    fn angle_examples() {
        let (phi, eps) = angles_from_pq(params(1.0, 1.0));
        assert!((phi - FRAC_PI_2).abs() < 1e-15 && eps.abs() < 1e-15);
        for p in [0.1, 0.5, 0.77, 1.0] {
            assert_eq!(angles_from_pq(params(p, p)).1, 0.0);
        }
        let (phi, eps) = angles_from_pq(params(0.8, 0.6));
        assert!((phi - 0.42243).abs() < 1e-5 && (eps - 0.22107).abs() < 1e-5);
        let (phi, _) = angles_from_pq(params(0.7, 0.3));
        assert!(phi.abs() < 1e-15);
    }

    #[test]
    fn inverse_angle_examples() {
        let pq = pq_from_angles(0.0, 0.0).unwrap();
        assert_eq!((pq.p(), pq.q()), (0.5, 0.5));
        let pq = pq_from_angles(FRAC_PI_2, 0.0).unwrap();
        assert_eq!((pq.p(), pq.q()), (1.0, 1.0));
        let pq = pq_from_angles(0.42243, 0.22107).unwrap();
        assert!((pq.p() - 0.8).abs() < 1e-5 && (pq.q() - 0.6).abs() < 1e-5);
        assert!(matches!(pq_from_angles(1.5, 0.2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn angles_round_trip() {
        for i in 0..=20 {
            for j in 0..=20 {
                let (p, q) = (i as f64 / 20.0, j as f64 / 20.0);
                let (phi, eps) = angles_from_pq(params(p, q));
                let back = pq_from_angles(phi, eps).unwrap();
                assert!((back.p() - p).abs() < 1e-12 && (back.q() - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gate_matrix_examples() {
        let phi = 0.37;
        let want = ComplexMatrix::from_diag(&[C64::from_polar(1.0, -phi / 2.0), C64::from_polar(1.0, phi / 2.0)]);
        assert!(gate_matrix(&Gate::rz(phi, Target::Main)).approx_eq(&want, 1e-15));

        let want = ComplexMatrix::from_real_diag(&[1.0, 1.0, 1.0, -1.0]);
        assert!(gate_matrix(&Gate::cz(PI)).approx_eq(&want, 1e-15));

        // Ry|z on |ψ⟩|0⟩ = cos(φ/2)|ψ⟩|0⟩ + sin(φ/2)(σz|ψ⟩)|1⟩
        let psi = [c(0.6, 0.0), c(0.0, 0.8)];
        let input = [psi[0], re(0.0), psi[1], re(0.0)];
        let out = ry_given_z(phi).mul_vec(&input);
        let (s, co) = (0.5 * phi).sin_cos();
        let want = [psi[0] * co, psi[0] * s, psi[1] * co, -psi[1] * s];
        for (x, y) in out.iter().zip(want) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn ry_given_z_is_the_exponential() {
        // exp(−iφ Z⊗Y/2) = cos(φ/2) I − i sin(φ/2) Z⊗Y
        let p = crate::linalg::paulis();
        let zy = p[3].kron(&p[2]);
        let phi: f64 = 1.1;
        let want = &ComplexMatrix::identity(4).scale_re((phi / 2.0).cos()) - &zy.scale(c(0.0, (phi / 2.0).sin()));
        assert!(ry_given_z(phi).approx_eq(&want, 1e-15));
    }

    #[test]
    fn z_rotation_from_x_and_y() {
        let phi = 0.9;
        let composed = &(&rx(FRAC_PI_2) * &ry(phi)) * &rx(-FRAC_PI_2);
        assert!(composed.approx_eq(&rz(phi), 1e-14));
    }

    #[test]
    fn circuit_shapes() {
        let d = build_circuit(CircuitVariant::Direct, FRAC_PI_2, 0.0);
        assert_eq!(d.gates.len(), 3);
        let f = build_circuit(CircuitVariant::FixedCZ, 0.3, 0.1);
        assert_eq!(f.gates.len(), 4);
        let cp = build_circuit(CircuitVariant::CPhase, 0.3, 0.1);
        assert_eq!(cp.gates.len(), 7);
        for circ in [d, f, cp] {
            circ.validate().unwrap();
        }
        assert!(matches!("bogus".parse::<CircuitVariant>(), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn direct_kraus_closed_form() {
        for (phi, eps) in [(0.42243, 0.22107), (0.1, -0.3), (1.2, 0.3)] {
            let (k0, k1) = kraus_from_circuit(&build_circuit(CircuitVariant::Direct, phi, eps));
            let want0 = ComplexMatrix::from_real_diag(&[
                ((1.0 + (phi + eps).sin()) / 2.0).sqrt(),
                ((1.0 - (phi - eps).sin()) / 2.0).sqrt(),
            ]);
            let want1 = ComplexMatrix::from_real_diag(&[
                ((1.0 - (phi + eps).sin()) / 2.0).sqrt(),
                ((1.0 + (phi - eps).sin()) / 2.0).sqrt(),
            ]);
            assert!(k0.approx_eq_up_to_phase(&want0, 1e-12));
            assert!(k1.approx_eq_up_to_phase(&want1, 1e-12));
        }
    }

    #[test]
    fn limiting_circuits() {
        let (k0, k1) = kraus_from_circuit(&build_circuit(CircuitVariant::Direct, 0.0, 0.0));
        let h = ComplexMatrix::identity(2).scale_re(0.5f64.sqrt());
        assert!(k0.approx_eq_up_to_phase(&h, 1e-15) && k1.approx_eq_up_to_phase(&h, 1e-15));
        let (k0, k1) = kraus_from_circuit(&build_circuit(CircuitVariant::Direct, FRAC_PI_2, 0.0));
        let (d0, d1) = dops(params(1.0, 1.0));
        assert!(k0.approx_eq_up_to_phase(&d0, 1e-15) && k1.approx_eq_up_to_phase(&d1, 1e-15));
    }

    #[test]
    fn variants_realize_dops() {
        for (p, q) in [(0.8, 0.6), (0.3, 0.9), (1.0, 0.4), (0.5, 0.5), (1.0, 1.0)] {
            let (d0, d1) = dops(params(p, q));
            for v in CircuitVariant::ALL {
                let (k0, k1) = kraus_from_circuit(&circuit_for(v, params(p, q)));
                assert!(k0.approx_eq_up_to_phase(&d0, 1e-12), "{v} {p} {q}: {k0:?}");
                assert!(k1.approx_eq_up_to_phase(&d1, 1e-12), "{v} {p} {q}: {k1:?}");
                let sum = &(&k0.adjoint() * &k0) + &(&k1.adjoint() * &k1);
                assert!(sum.approx_eq(&ComplexMatrix::identity(2), 1e-12));
            }
        }
    }

    #[test]
    fn fixed_cz_equals_direct_exactly() {
        let (phi, eps) = angles_from_pq(params(0.8, 0.6));
        let a = kraus_from_circuit(&build_circuit(CircuitVariant::Direct, phi, eps));
        let b = kraus_from_circuit(&build_circuit(CircuitVariant::FixedCZ, phi, eps));
        assert!(a.0.approx_eq(&b.0, 1e-15) && a.1.approx_eq(&b.1, 1e-15));
    }

    #[test]
    fn null_result_never_reports_one_for_ket_zero() {
        let (phi, eps) = angles_from_pq(params(1.0, 0.35));
        assert!((phi + eps - FRAC_PI_2).abs() < 1e-12);
        let (_, k1) = kraus_from_circuit(&build_circuit(CircuitVariant::Direct, phi, eps));
        let v = k1.mul_vec(&[re(1.0), re(0.0)]);
        assert!(v.iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn circuit_json_shape() {
        let circ = build_circuit(CircuitVariant::FixedCZ, 0.4, 0.1);
        let v = serde_json::to_value(&circ).unwrap();
        let g0 = &v["gates"][0];
        assert_eq!(g0["kind"], "Ry");
        assert_eq!(g0["target"], "ancilla");
        assert!(v["gates"][3].get("angle").is_none());
        let back: TwoQubitCircuit = serde_json::from_value(v).unwrap();
        assert_eq!(back, circ);
    }

    #[test]
    fn run_circuit_matches_kraus_statistics() {
        use rand::SeedableRng;
        let circ = circuit_for(CircuitVariant::CPhase, params(0.8, 0.6));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 20000;
        let mut zeros = 0;
        for _ in 0..n {
            let (o, s) = run_circuit(&circ, &QubitState::zero(), &mut rng).unwrap();
            if o == 0 {
                zeros += 1;
            }
            assert!(s.matrix().approx_eq(QubitState::zero().matrix(), 1e-12));
        }
        let f = zeros as f64 / n as f64;
        assert!((f - 0.8).abs() < 4.0 * (0.16f64 / n as f64).sqrt());
    }
}
