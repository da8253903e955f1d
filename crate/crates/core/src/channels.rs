//! Single-qubit noise channels for building imperfect measurement branches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::continuous_readout::trajectory_rng;
use crate::decomposition::KrausSet;
use crate::error::{Error, Result};
use crate::fidelity::{chi_from_kraus, ProcessMatrix, ProcessSet};
use crate::linalg::{c, paulis, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Depolarizing,
    Dephasing,
    AmplitudeDamping,
    UnitaryJitter,
}

/// A noise channel. `strength` is the channel parameter in `[0, 1]`, or for
/// [`NoiseKind::UnitaryJitter`] the standard deviation in radians of each
/// rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Whether noise acts after or before the ideal branch operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOrder {
    #[default]
    After,
    Before,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, strength: f64) -> Result<Self> {
        let spec = Self { kind, strength, seed: 0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn depolarizing(lambda: f64) -> Result<Self> {
        Self::new(NoiseKind::Depolarizing, lambda)
    }

    pub fn dephasing(strength: f64) -> Result<Self> {
        Self::new(NoiseKind::Dephasing, strength)
    }

    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        Self::new(NoiseKind::AmplitudeDamping, gamma)
    }

    pub fn unitary_jitter(sigma: f64, seed: u64) -> Result<Self> {
        let mut spec = Self::new(NoiseKind::UnitaryJitter, sigma)?;
        spec.seed = seed;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            NoiseKind::UnitaryJitter => self.strength.is_finite() && self.strength >= 0.0,
            _ => (0.0..=1.0).contains(&self.strength),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidProbability {
                name: "strength",
                value: self.strength,
            })
        }
    }

    /// Kraus operators of the channel. Jitter draws its rotation from stream
    /// `stream` of `seed`.
    pub fn kraus(&self, stream: u64) -> Result<Vec<ComplexMatrix>> {
        self.validate()?;
        let [id, x, y, z] = paulis();
        let s = self.strength;
        Ok(match self.kind {
            NoiseKind::Depolarizing => {
                let a = (s / 4.0).sqrt();
                vec![id.scale_re((1.0 - 0.75 * s).sqrt()), x.scale_re(a), y.scale_re(a), z.scale_re(a)]
            }
            NoiseKind::Dephasing => vec![id.scale_re((1.0 - 0.5 * s).sqrt()), z.scale_re((0.5 * s).sqrt())],
            NoiseKind::AmplitudeDamping => vec![
                ComplexMatrix::from_real_diag(&[1.0, (1.0 - s).sqrt()]),
                ComplexMatrix::from_real_rows(&[vec![0.0, s.sqrt()], vec![0.0, 0.0]]),
            ],
            NoiseKind::UnitaryJitter => {
                let mut rng = if stream == 0 {
                    ChaCha8Rng::seed_from_u64(self.seed)
                } else {
                    trajectory_rng(self.seed, stream)
                };
                let normal = Normal::new(0.0, s).expect("validated standard deviation");
                let theta = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
                vec![rotation(theta)]
            }
        })
    }
}

/// `exp(−i θ·σ / 2)`.
pub fn rotation(theta: [f64; 3]) -> ComplexMatrix {
    let [_, x, y, z] = paulis();
    let angle = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if angle == 0.0 {
        return ComplexMatrix::identity(2);
    }
    let n = theta.map(|t| t / angle);
    let axis = &(&x.scale_re(n[0]) + &y.scale_re(n[1])) + &z.scale_re(n[2]);
    let (s, co) = (0.5 * angle).sin_cos();
    &ComplexMatrix::identity(2).scale_re(co) - &axis.scale(c(0.0, s))
}

/// Process matrix of `noise ∘ ideal`.
pub fn noisy_branch(ideal_kraus: &ComplexMatrix, spec: &NoiseSpec) -> Result<ProcessMatrix> {
    noisy_branch_ordered(ideal_kraus, spec, NoiseOrder::After)
}

pub fn noisy_branch_ordered(ideal_kraus: &ComplexMatrix, spec: &NoiseSpec, order: NoiseOrder) -> Result<ProcessMatrix> {
    chi_from_kraus(&branch_kraus(ideal_kraus, spec, order, 0)?, 2)
}

fn branch_kraus(ideal: &ComplexMatrix, spec: &NoiseSpec, order: NoiseOrder, stream: u64) -> Result<Vec<ComplexMatrix>> {
    let noise = spec.kraus(stream)?;
    Ok(noise
        .iter()
        .map(|k| match order {
            NoiseOrder::After => k * ideal,
            NoiseOrder::Before => ideal * k,
        })
        .collect())
}

/// Noisy version of every branch of `set`. Jitter after the branch uses
/// stream `k` for branch `k`; jitter before it is shared by all branches.
pub fn noisy_process_set(set: &KrausSet, spec: &NoiseSpec, order: NoiseOrder) -> Result<ProcessSet> {
    let mut outcomes = Vec::with_capacity(set.len());
    for (k, (m, label)) in set.ops.iter().zip(&set.labels).enumerate() {
        // noise ahead of the measurement cannot depend on its outcome
        let stream = if spec.kind == NoiseKind::UnitaryJitter && order == NoiseOrder::After {
            k as u64
        } else {
            0
        };
        outcomes.push((label.clone(), chi_from_kraus(&branch_kraus(m, spec, order, stream)?, 2)?));
    }
    ProcessSet::new(outcomes)
}
