//! Partial projections realized by thresholding a continuous readout.
//!
//! The integrated readout `R` of a quantum-limited QND measurement fixes
//! the back-action operator
//!
//! ```text
//! M_R ∝ e^{R/2} e^{−i(R/2)tan α} |0⟩⟨0| + e^{−R/2} e^{i(R/2)tan α} |1⟩⟨1|
//! ```
//!
//! so stopping the measurement the first time `R` reaches `R0 > 0` or
//! `R1 < 0` implements the partial projection with
//! `R0 = ½ ln(p/(1−q))` and `R1 = −½ ln(q/(1−p))`.
//!
//! The simulator works directly in the dimensionless `R` domain. Each time
//! step draws the readout increment from the mixture
//! `ρ00·N(+dt/τ, dt/τ) + ρ11·N(−dt/τ, dt/τ)` of the current posterior, which
//! is a function of `R` alone. A step that overshoots a threshold is refined
//! by Brownian-bridge bisection until the crossing is localized to within
//! [`LOCALIZATION_TOL`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::partial_projection::{PartialProjParams, QubitState};

/// Distance from the threshold at which a crossing counts as localized.
pub const LOCALIZATION_TOL: f64 = 1e-6;

/// `|p + q − 1|` below this is treated as "no measurement".
pub const NO_MEASUREMENT_TOL: f64 = 1e-12;

/// Default cap on a trajectory, in units of `dt`.
pub const DEFAULT_MAX_STEPS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutConfig {
    /// Measurement time at the optimal quadrature.
    pub tau_min: f64,
    /// Quadrature angle in radians, `|alpha| < π/2`.
    pub alpha: f64,
    pub dt: f64,
    /// Quantum efficiency η ∈ (0, 1].
    pub efficiency: f64,
    pub seed: u64,
    /// Hard cap on the trajectory duration.
    pub max_duration: f64,
    /// Keep the sampled `R` values on each [`TrajectoryRecord`].
    #[serde(default = "default_true")]
    pub record_path: bool,
}

fn default_true() -> bool {
    true
}

impl ReadoutConfig {
    /// Configuration with `dt = τ/100` (τ the effective measurement time),
    /// unit efficiency and seed 0.
    pub fn new(tau_min: f64, alpha: f64) -> Result<Self> {
        let tau = tau_min / alpha.cos().powi(2);
        let dt = tau / 100.0;
        let cfg = Self {
            tau_min,
            alpha,
            dt,
            efficiency: 1.0,
            seed: 0,
            max_duration: DEFAULT_MAX_STEPS * dt,
            record_path: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets `dt` and rescales the duration cap to `10⁶·dt`.
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self.max_duration = DEFAULT_MAX_STEPS * dt;
        self
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Self {
        self.efficiency = efficiency;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_duration(mut self, max_duration: f64) -> Self {
        self.max_duration = max_duration;
        self
    }

    pub fn with_record_path(mut self, record: bool) -> Self {
        self.record_path = record;
        self
    }

    /// Effective measurement time `τ_min / cos² α`.
    pub fn tau(&self) -> f64 {
        self.tau_min / self.alpha.cos().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.tau_min > 0.0 && self.tau_min.is_finite()) {
            return bad("tau_min must be positive");
        }
        if !(self.alpha.abs() < std::f64::consts::FRAC_PI_2) {
            return bad("|alpha| must be below pi/2");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("efficiency must lie in (0, 1]");
        }
        if !(self.max_duration > 0.0) {
            return bad("max_duration must be positive");
        }
        Ok(())
    }
}

/// Threshold pair for the integrated readout. Infinite values are allowed
/// here (they encode projective limits) but refused by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub r0: f64,
    pub r1: f64,
}

impl Thresholds {
    pub fn new(r0: f64, r1: f64) -> Self {
        Self { r0, r1 }
    }

    pub fn is_finite(&self) -> bool {
        self.r0.is_finite() && self.r1.is_finite()
    }

    fn check_simulable(&self) -> Result<()> {
        if !self.is_finite() || self.r0 < 0.0 || self.r1 > 0.0 || self.r0.is_nan() || self.r1.is_nan() {
            return Err(Error::NonFiniteThreshold {
                r0: self.r0,
                r1: self.r1,
            });
        }
        Ok(())
    }
}

/// One simulated readout run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub outcome: u8,
    pub duration: f64,
    #[serde(skip)]
    pub r_path: Vec<f64>,
    #[serde(rename = "final_R")]
    pub final_r: f64,
    pub final_state: ComplexMatrix,
    pub purity: f64,
}

/// Thresholds realizing `params`: `R0 = ½ ln(p/(1−q))`, `R1 = −½ ln(q/(1−p))`.
///
/// `q = 1` gives `R0 = +∞` and `p = 1` gives `R1 = −∞`; these are returned as
/// explicit infinities. `p + q = 1` gives `(0, 0)`; `p + q < 1` is rejected.
pub fn thresholds_from_pq(params: PartialProjParams) -> Result<Thresholds> {
    let (p, q) = (params.p(), params.q());
    let excess = p + q - 1.0;
    if excess.abs() <= NO_MEASUREMENT_TOL {
        return Ok(Thresholds::new(0.0, 0.0));
    }
    if excess < 0.0 {
        return Err(Error::InvalidOrdering { sum: p + q });
    }
    let r0 = if q == 1.0 {
        f64::INFINITY
    } else {
        0.5 * (p / (1.0 - q)).ln()
    };
    let r1 = if p == 1.0 {
        f64::NEG_INFINITY
    } else {
        -0.5 * (q / (1.0 - p)).ln()
    };
    Ok(Thresholds::new(r0, r1))
}

/// Like [`thresholds_from_pq`], but infinite thresholds become
/// [`Error::InfiniteThreshold`].
pub fn finite_thresholds_from_pq(params: PartialProjParams) -> Result<Thresholds> {
    let t = thresholds_from_pq(params)?;
    if !t.is_finite() {
        return Err(Error::InfiniteThreshold {
            p: params.p(),
            q: params.q(),
        });
    }
    Ok(t)
}

/// Inverse of [`thresholds_from_pq`]. `(0, 0)` maps to `p = q = ½`.
pub fn pq_from_thresholds(t: Thresholds) -> Result<PartialProjParams> {
    t.check_simulable()?;
    if t.r0 == 0.0 && t.r1 == 0.0 {
        return PartialProjParams::new(0.5, 0.5);
    }
    let e0 = (2.0 * t.r0).exp_m1();
    let e1 = (2.0 * t.r1).exp_m1();
    let denom = e0 - e1;
    let q = e0 / denom;
    let one_minus_q = -e1 / denom;
    let p = (2.0 * t.r0).exp() * one_minus_q;
    PartialProjParams::new(p.clamp(0.0, 1.0), q.clamp(0.0, 1.0))
}

/// Back-action operator `M_R` for integrated readout `r` at quadrature
/// angle `alpha` (unnormalized).
pub fn measurement_operator(r: f64, alpha: f64) -> ComplexMatrix {
    let phase = 0.5 * r * alpha.tan();
    ComplexMatrix::from_diag(&[
        C64::from_polar((0.5 * r).exp(), -phase),
        C64::from_polar((-0.5 * r).exp(), phase),
    ])
}

/// `C0 = √(p(1−q))`, `C1 = √(q(1−p))`, so that `D_k = √C_k (e^{R_k/2}|0⟩⟨0| + e^{−R_k/2}|1⟩⟨1|)`.
pub fn normalization_constants(params: PartialProjParams) -> (f64, f64) {
    let (p, q) = (params.p(), params.q());
    ((p * (1.0 - q)).sqrt(), (q * (1.0 - p)).sqrt())
}

/// Random stream for trajectory `index` of a batch seeded with `seed`.
///
/// Streams are derived from the counter, so batches are reproducible and
/// independent of evaluation order.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs one trajectory with the generator derived from `config.seed`.
pub fn simulate_trajectory(
    config: &ReadoutConfig,
    thresholds: Thresholds,
    initial: &QubitState,
) -> Result<TrajectoryRecord> {
    simulate_with_rng(config, thresholds, initial, &mut trajectory_rng(config.seed, 0))
}

/// Runs `count` independent trajectories in parallel; trajectory `i` uses
/// stream `i` of `config.seed`.
pub fn simulate_batch(
    config: &ReadoutConfig,
    thresholds: Thresholds,
    initial: &QubitState,
    count: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_with_rng(config, thresholds, initial, &mut trajectory_rng(config.seed, i)))
        .collect()
}

/// Posterior population of `|0⟩` after integrated readout `r`.
fn posterior_p0(a: f64, b: f64, r: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if b == 0.0 {
        return 1.0;
    }
    // a e^{2r} / (a e^{2r} + b), evaluated as a logistic
    let x = 2.0 * r + (a / b).ln();
    1.0 / (1.0 + (-x).exp())
}

/// Single trajectory with a caller-supplied generator.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    config: &ReadoutConfig,
    thresholds: Thresholds,
    initial: &QubitState,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    thresholds.check_simulable()?;
    let Thresholds { r0, r1 } = thresholds;

    if r0 == 0.0 && r1 == 0.0 {
        // no measurement: stop immediately with an unbiased coin
        let outcome = if rng.gen::<f64>() < 0.5 { 0 } else { 1 };
        return Ok(TrajectoryRecord {
            outcome,
            duration: 0.0,
            r_path: vec![0.0],
            final_r: 0.0,
            final_state: initial.matrix().clone(),
            purity: initial.purity(),
        });
    }

    let tau = config.tau();
    let a = initial.matrix()[(0, 0)].re.max(0.0);
    let b = initial.matrix()[(1, 1)].re.max(0.0);
    let mut path = Vec::new();
    let mut r = 0.0;
    let mut t = 0.0;
    if config.record_path {
        path.push(r);
    }

    let (final_t, final_r, outcome) = if r >= r0 {
        (0.0, 0.0, 0u8)
    } else if r <= r1 {
        (0.0, 0.0, 1u8)
    } else {
        loop {
            if t >= config.max_duration {
                return Err(Error::MaxDurationExceeded {
                    max_duration: config.max_duration,
                });
            }
            let h = config.dt;
            let r_next = r + increment(rng, posterior_p0(a, b, r), h / tau);
            if r_next >= r0 || r_next <= r1 {
                let hit = localize(rng, thresholds, t, r, h, r_next, tau);
                if config.record_path {
                    path.push(hit.1);
                }
                break hit;
            }
            // both ends inside, but the path may have touched a threshold in between
            if let Some(hit) = bridge_crossing(rng, thresholds, t, r, h, r_next, tau) {
                if config.record_path {
                    path.push(hit.1);
                }
                break hit;
            }
            t += h;
            r = r_next;
            if config.record_path {
                path.push(r);
            }
        }
    };

    let final_state = readout_state(initial, final_r, final_t, config);
    let purity = (&final_state * &final_state).trace().re;
    Ok(TrajectoryRecord {
        outcome,
        duration: final_t,
        r_path: path,
        final_r,
        final_state,
        purity,
    })
}

/// Draws `ΔR` from the posterior mixture of drifts `±s` with variance `s`.
fn increment<R: Rng + ?Sized>(rng: &mut R, p0: f64, s: f64) -> f64 {
    let sign = if rng.gen::<f64>() < p0 { 1.0 } else { -1.0 };
    let z: f64 = rng.sample(StandardNormal);
    sign * s + s.sqrt() * z
}

/// Decides whether the Brownian bridge between two interior points crossed
/// a threshold. A bridge of variance `v` from `x` to `y` reaches a barrier
/// `u` with probability `exp(−2(u−x)(u−y)/v)`; the crossing time is taken
/// at the middle of the step.
fn bridge_crossing<R: Rng + ?Sized>(
    rng: &mut R,
    th: Thresholds,
    t: f64,
    x: f64,
    h: f64,
    y: f64,
    tau: f64,
) -> Option<(f64, f64, u8)> {
    let v = h / tau;
    let up = (-2.0 * (th.r0 - x) * (th.r0 - y) / v).exp();
    let down = (-2.0 * (x - th.r1) * (y - th.r1) / v).exp();
    if up + down < 1e-300 {
        return None;
    }
    let u: f64 = rng.gen();
    if u < up {
        Some((t + 0.5 * h, th.r0, 0))
    } else if u < up + down {
        Some((t + 0.5 * h, th.r1, 1))
    } else {
        None
    }
}

/// Bisects the step `(t, r_start) → (t + h, r_end)`, whose end lies beyond a
/// threshold, with Brownian-bridge midpoints until the crossing point is
/// within [`LOCALIZATION_TOL`] of the threshold.
fn localize<R: Rng + ?Sized>(
    rng: &mut R,
    th: Thresholds,
    mut t: f64,
    mut r_start: f64,
    mut h: f64,
    mut r_end: f64,
    tau: f64,
) -> (f64, f64, u8) {
    let beyond = |x: f64| x >= th.r0 || x <= th.r1;
    loop {
        let (target, outcome) = if r_end >= th.r0 { (th.r0, 0) } else { (th.r1, 1) };
        if (r_end - target).abs() <= LOCALIZATION_TOL || h <= f64::MIN_POSITIVE {
            return (t + h, r_end, outcome);
        }
        let half = 0.5 * h;
        let z: f64 = rng.sample(StandardNormal);
        // bridge midpoint: drift-independent, variance (h/τ)/4
        let mid = 0.5 * (r_start + r_end) + (0.25 * h / tau).sqrt() * z;
        if beyond(mid) {
            r_end = mid;
        } else {
            t += half;
            r_start = mid;
        }
        h = half;
    }
}

/// State after integrated readout `r` over duration `t`: the back-action of
/// [`measurement_operator`] followed by inefficiency dephasing.
pub fn readout_state(initial: &QubitState, r: f64, t: f64, config: &ReadoutConfig) -> ComplexMatrix {
    let m = measurement_operator(r, config.alpha);
    let mut rho = &(&m * initial.matrix()) * &m.adjoint();
    let tr = rho.trace().re;
    rho = rho.scale_re(1.0 / tr);
    let eta = config.efficiency;
    if eta < 1.0 {
        let decay = (-(1.0 - eta) / (2.0 * eta) * t / config.tau()).exp();
        rho[(0, 1)] *= decay;
        rho[(1, 0)] *= decay;
    }
    rho.hermitian_part()
}

/// Summary of a batch of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub outcome_counts: [usize; 2],
    pub mean_duration: f64,
    pub std_duration: f64,
    pub max_duration: f64,
}

pub fn summarize(records: &[TrajectoryRecord]) -> BatchSummary {
    let n = records.len();
    let mut counts = [0usize; 2];
    for r in records {
        counts[r.outcome as usize] += 1;
    }
    let mean = if n > 0 {
        records.iter().map(|r| r.duration).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let var = if n > 1 {
        records.iter().map(|r| (r.duration - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    BatchSummary {
        count: n,
        outcome_counts: counts,
        mean_duration: mean,
        std_duration: var.sqrt(),
        max_duration: records.iter().map(|r| r.duration).fold(0.0, f64::max),
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: std::io::Write>(records: &[TrajectoryRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
