//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its own PASS/FAIL line; exits non-zero on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::time::{Duration, Instant};

use genmeas::ancilla_circuit::{angles_from_pq, circuit_for, kraus_from_circuit, CircuitVariant};
use genmeas::channels::{noisy_process_set, rotation, NoiseOrder, NoiseSpec};
use genmeas::continuous_readout::{
    finite_thresholds_from_pq, simulate_batch, thresholds_from_pq, ReadoutConfig, TrajectoryRecord,
};
use genmeas::decomposition::{execute_batch, leaf_counts, random_kraus_set, random_unitary, reduce, Backend, KrausSet};
use genmeas::error::Error;
use genmeas::fidelity::*;
use genmeas::linalg::{ComplexMatrix, C64};
use genmeas::partial_projection::{apply_outcome, dops, PartialProjParams, QubitState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<(), String>;
type Criterion = (&'static str, fn() -> Check, Duration);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn pq(p: f64, q: f64) -> PartialProjParams {
    PartialProjParams::new(p, q).unwrap()
}

fn state_fid(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    state_fidelity(a, b, StateVariant::UhlmannSquared).unwrap()
}

fn limiting_cases() -> Check {
    let tol = 1e-12;
    let t = thresholds_from_pq(pq(1.0, 1.0)).unwrap();
    ensure!(t.r0 == f64::INFINITY && t.r1 == f64::NEG_INFINITY, "(1,1) thresholds {t:?}");
    ensure!(
        matches!(finite_thresholds_from_pq(pq(1.0, 1.0)), Err(Error::InfiniteThreshold { .. })),
        "(1,1) not flagged"
    );
    let (phi, eps) = angles_from_pq(pq(1.0, 1.0));
    ensure!(close(phi, FRAC_PI_2, tol) && close(eps, 0.0, tol), "(1,1) angles ({phi}, {eps})");

    for p in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        let q = 1.0 - p;
        let t = thresholds_from_pq(pq(p, q)).unwrap();
        if p > 0.0 && p < 1.0 {
            ensure!(close(t.r0, 0.0, tol) && close(t.r1, 0.0, tol), "p+q=1 at p={p}: {t:?}");
        }
        let (phi, _) = angles_from_pq(pq(p, q));
        ensure!(close(phi, 0.0, tol), "p+q=1 at p={p}: phi {phi}");
    }
    for q in [0.05, 0.3, 0.5, 0.8, 1.0] {
        let t = thresholds_from_pq(pq(1.0, q)).unwrap();
        ensure!(t.r1 == f64::NEG_INFINITY, "p=1, q={q}: R1 = {}", t.r1);
        let (phi, eps) = angles_from_pq(pq(1.0, q));
        ensure!(close(phi + eps, FRAC_PI_2, tol), "p=1, q={q}: phi+eps = {}", phi + eps);
    }
    for p in [0.05, 0.2, 0.5, 0.6, 0.95, 1.0] {
        // thresholds exist only for p + q >= 1
        if p >= 0.5 {
            let t = thresholds_from_pq(pq(p, p)).unwrap();
            if p < 1.0 {
                ensure!(close(t.r1, -t.r0, tol), "p=q={p}: {t:?}");
            } else {
                ensure!(t.r1 == -t.r0, "p=q=1: {t:?}");
            }
        } else {
            ensure!(
                matches!(thresholds_from_pq(pq(p, p)), Err(Error::InvalidOrdering { .. })),
                "p=q={p} accepted"
            );
        }
        let (_, eps) = angles_from_pq(pq(p, p));
        ensure!(close(eps, 0.0, tol), "p=q={p}: eps {eps}");
    }
    Ok(())
}

fn circuit_equivalence() -> Check {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            points.push((0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64));
        }
    }
    points.extend([(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (1.0, 0.3), (0.3, 1.0), (0.0, 0.6), (0.5, 0.5)]);
    let mut worst: f64 = 0.0;
    for (p, q) in points {
        let (d0, d1) = dops(pq(p, q));
        let pairs: Vec<(ComplexMatrix, ComplexMatrix)> = CircuitVariant::ALL
            .iter()
            .map(|v| kraus_from_circuit(&circuit_for(*v, pq(p, q))))
            .collect();
        for (a0, a1) in &pairs {
            worst = worst.max(a0.phase_distance(&d0)).max(a1.phase_distance(&d1));
            for (b0, b1) in &pairs {
                worst = worst.max(a0.phase_distance(b0)).max(a1.phase_distance(b1));
            }
        }
    }
    ensure!(worst <= 1e-12, "max deviation {worst:.3e}");
    Ok(())
}

fn decomposition_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut worst_completeness: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=6);
        let set = random_kraus_set(n, &mut rng);
        let p = reduce(&set, None, false).map_err(|e| format!("set {i}: {e}"))?;
        worst = worst.max(p.max_deviation(&set).unwrap());
        let sum = p
            .branches()
            .iter()
            .fold(ComplexMatrix::zeros(2), |acc, b| &acc + &(&b.adjoint() * b));
        worst_completeness = worst_completeness.max((&sum - &ComplexMatrix::identity(2)).frobenius_norm());
    }
    ensure!(worst <= 1e-9, "branch deviation {worst:.3e}");
    ensure!(worst_completeness <= 1e-9, "completeness {worst_completeness:.3e}");
    Ok(())
}

fn binomial_ok(count: usize, n: usize, p: f64) -> bool {
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - n as f64 * p).abs() <= 4.0 * sigma
}

fn readout_config(alpha: f64, seed: u64) -> ReadoutConfig {
    ReadoutConfig::new(1.0, alpha).unwrap().with_seed(seed).with_record_path(false)
}

fn continuous_statistics() -> Check {
    let params = pq(0.8, 0.6);
    let th = finite_thresholds_from_pq(params).unwrap();
    let n = 100_000;
    let plus = QubitState::plus();
    for (state, outcome, want, seed) in [(QubitState::zero(), 0u8, 0.8, 1), (QubitState::one(), 1u8, 0.6, 2)] {
        let recs = simulate_batch(&readout_config(0.0, seed), th, &state, n).map_err(|e| e.to_string())?;
        let hits = recs.iter().filter(|r| r.outcome == outcome).count();
        ensure!(binomial_ok(hits, n, want), "outcome {outcome}: {hits}/{n} vs {want}");
        check_conditional_states(&recs, params, &state)?;
    }
    // a superposition makes the conditional states nontrivial
    let recs = simulate_batch(&readout_config(0.0, 3), th, &plus, 10_000).map_err(|e| e.to_string())?;
    let hits = recs.iter().filter(|r| r.outcome == 0).count();
    ensure!(binomial_ok(hits, 10_000, 0.5 * (0.8 + 0.4)), "|+>: {hits}/10000");
    check_conditional_states(&recs, params, &plus)
}

fn check_conditional_states(recs: &[TrajectoryRecord], params: PartialProjParams, initial: &QubitState) -> Check {
    let expected = [
        apply_outcome(params, 0, initial).ok(),
        apply_outcome(params, 1, initial).ok(),
    ];
    let mut worst: f64 = 1.0;
    for r in recs {
        let want = expected[r.outcome as usize]
            .as_ref()
            .ok_or_else(|| format!("outcome {} should be impossible", r.outcome))?;
        worst = worst.min(state_fid(&r.final_state, want.matrix()));
    }
    ensure!(worst >= 1.0 - 1e-6, "worst conditional-state fidelity {worst}");
    Ok(())
}

fn quadrature_check() -> Check {
    let params = pq(0.8, 0.6);
    let th = finite_thresholds_from_pq(params).unwrap();
    let n = 10_000;
    let plus = QubitState::plus();
    let base = simulate_batch(&readout_config(0.0, 5), th, &plus, n).map_err(|e| e.to_string())?;
    let rotated = simulate_batch(&readout_config(FRAC_PI_4, 6), th, &plus, n).map_err(|e| e.to_string())?;
    let mean = |v: &[TrajectoryRecord]| v.iter().map(|r| r.duration).sum::<f64>() / v.len() as f64;
    let ratio = mean(&rotated) / mean(&base);
    ensure!((ratio - 2.0).abs() <= 0.1, "duration ratio {ratio}");

    let expected = [
        apply_outcome(params, 0, &plus).unwrap(),
        apply_outcome(params, 1, &plus).unwrap(),
    ];
    let mut worst: f64 = 1.0;
    for r in &rotated {
        // α = 0 result followed by the readout-dependent z rotation
        let theta = 0.5 * r.final_r * FRAC_PI_4.tan();
        let z = ComplexMatrix::from_diag(&[C64::from_polar(1.0, -theta), C64::from_polar(1.0, theta)]);
        let want = &(&z * expected[r.outcome as usize].matrix()) * &z.adjoint();
        worst = worst.min(state_fid(&r.final_state, &want));
    }
    ensure!(worst >= 1.0 - 1e-6, "worst phase-corrected fidelity {worst}");
    // the phase is really there: without it the states disagree
    let off = rotated
        .iter()
        .map(|r| state_fid(&r.final_state, expected[r.outcome as usize].matrix()))
        .fold(1.0, f64::min);
    ensure!(off < 0.99, "no visible phase (fidelity {off})");
    Ok(())
}

fn chi1(m: &ComplexMatrix) -> ProcessMatrix {
    chi_from_kraus(std::slice::from_ref(m), m.dim()).unwrap()
}

fn haar_density(rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let v = haar_state(2, rng);
    ComplexMatrix::outer(&v, &v)
}

fn mixed_density(rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let w: f64 = rng.gen();
    &haar_density(rng).scale_re(w) + &haar_density(rng).scale_re(1.0 - w)
}

fn fidelity_identities() -> Check {
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (rho, sigma) = (mixed_density(&mut rng), mixed_density(&mut rng));
        let f3 = state_fidelity(&rho, &sigma, StateVariant::Uhlmann).unwrap();
        let f4 = state_fidelity(&rho, &sigma, StateVariant::UhlmannSquared).unwrap();
        ensure!(close(f4, f3 * f3, tol), "F4 {f4} vs F3² {}", f3 * f3);

        let pure = haar_density(&mut rng);
        let f4 = state_fidelity(&rho, &pure, StateVariant::UhlmannSquared).unwrap();
        let f5 = overlap_fidelity(&rho, &pure).unwrap();
        ensure!(close(f4, f5, tol), "F5 {f5} vs F4 {f4}");

        let u = random_unitary(&mut rng);
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        let conj = |m: ComplexMatrix| &(&u * &m) * &u.adjoint();
        let ra = conj(ComplexMatrix::from_real_diag(&[a, 1.0 - a]));
        let rb = conj(ComplexMatrix::from_real_diag(&[b, 1.0 - b]));
        let f3 = state_fidelity(&ra, &rb, StateVariant::Uhlmann).unwrap();
        let bc = (a * b).sqrt() + ((1.0 - a) * (1.0 - b)).sqrt();
        ensure!(close(f3, bc, tol), "commuting F3 {f3} vs {bc}");

        let v = random_unitary(&mut rng);
        let f6 = process_fidelity(&chi1(&u), &chi1(&v), ProcessVariant::F6).unwrap();
        let want = (&v.adjoint() * &u).trace().norm_sqr() / 4.0;
        ensure!(close(f6, want, tol), "F6 {f6} vs {want}");

        let set = random_kraus_set(3, &mut rng);
        let actual = chi_from_kraus(&set.ops[..2], 2).unwrap();
        let ideal = chi1(&set.ops[2]);
        let scale = rng.gen_range(0.01..100.0);
        let f8 = process_fidelity(&actual, &ideal, ProcessVariant::F8).unwrap();
        let f8s = process_fidelity(&actual.scaled(scale), &ideal, ProcessVariant::F8).unwrap();
        ensure!(close(f8, f8s, tol), "F8 scale {f8} vs {f8s}");
    }

    for i in 0..300 {
        let n = 2 + i % 5;
        let ideal_set = random_kraus_set(n, &mut rng);
        let ideal = ProcessSet::from_kraus_set(&ideal_set).unwrap();
        let strength = rng.gen_range(0.0..0.5);
        let spec = match i % 4 {
            0 => NoiseSpec::depolarizing(strength),
            1 => NoiseSpec::dephasing(strength),
            2 => NoiseSpec::amplitude_damping(strength),
            _ => NoiseSpec::unitary_jitter(strength, i as u64),
        }
        .unwrap();
        let actual = noisy_process_set(&ideal_set, &spec, NoiseOrder::After).unwrap();

        let sum = total_fidelity(&actual, &ideal, TotalVariant::Sum).unwrap();
        let sq = total_fidelity(&actual, &ideal, TotalVariant::SqrtSquared).unwrap();
        let (mut s1, mut s2) = (0.0, 0.0);
        for (label, ci) in ideal.outcomes() {
            let ca = actual.get(label).unwrap();
            let w = (ca.trace() * ci.trace()).sqrt();
            let f = partial_fidelity(ca, ci).unwrap();
            s1 += w * f;
            s2 += w * f.sqrt();
        }
        ensure!(close(sum, s1, tol), "Sum dual path {sum} vs {s1}");
        ensure!(close(sq, s2 * s2, tol), "SqrtSquared dual path {sq} vs {}", s2 * s2);
        let p1 = total_fidelity(&actual, &ideal, TotalVariant::Parametric(1.0)).unwrap();
        let ph = total_fidelity(&actual, &ideal, TotalVariant::Parametric(0.5)).unwrap();
        ensure!(close(p1, sum, tol), "Parametric(1) {p1} vs {sum}");
        ensure!(close(ph, sq, tol), "Parametric(1/2) {ph} vs {sq}");

        let povm = actual.povm();
        let total = povm.iter().fold(ComplexMatrix::zeros(2), |acc, e| &acc + &e.matrix);
        ensure!(
            (&total - &ComplexMatrix::identity(2)).frobenius_norm() <= 1e-9,
            "POVM sum deviates"
        );
        for ((_, chi), e) in actual.outcomes().iter().zip(&povm) {
            ensure!(close(e.trace(), 2.0 * chi.trace(), 1e-9), "Tr P_k != d p_k");
        }

        let other = ProcessSet::from_kraus_set(&random_kraus_set(n, &mut rng)).unwrap();
        for v in [TotalVariant::Sum, TotalVariant::SqrtSquared] {
            let ab = total_fidelity(&ideal, &other, v).unwrap();
            let ba = total_fidelity(&other, &ideal, v).unwrap();
            ensure!(close(ab, ba, tol), "{v:?} not symmetric: {ab} vs {ba}");
            let same = total_fidelity(&ideal, &ideal, v).unwrap();
            ensure!(close(same, 1.0, tol), "{v:?} of identical sets {same}");
        }

        // perturbations of size 1e-3 on one branch
        let k = i % n;
        let axis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]][i % 3];
        let mut rotated = ideal_set.clone();
        rotated.ops[k] = &rotation(axis.map(|a| a * 1e-3)) * &ideal_set.ops[k];
        let rotated = ProcessSet::from_kraus_set(&rotated).unwrap();
        let mut outcomes = ideal.outcomes().to_vec();
        let dep: Vec<ComplexMatrix> = NoiseSpec::depolarizing(1e-3)
            .unwrap()
            .kraus(0)
            .unwrap()
            .iter()
            .map(|d| d * &ideal_set.ops[k])
            .collect();
        outcomes[k].1 = chi_from_kraus(&dep, 2).unwrap();
        let depolarized = ProcessSet::new(outcomes).unwrap();
        for perturbed in [&rotated, &depolarized] {
            for v in [TotalVariant::Sum, TotalVariant::SqrtSquared] {
                let f = total_fidelity(perturbed, &ideal, v).unwrap();
                ensure!(f < 1.0, "{v:?} stays at 1 under a perturbation");
            }
        }
    }
    Ok(())
}

fn linear_relation() -> Check {
    let ci = chi1(&ComplexMatrix::identity(2));
    let d = 2.0;
    let mut channels: Vec<(String, ProcessMatrix, Option<f64>)> = [0.1, 0.3, 0.5]
        .iter()
        .map(|&l| {
            let chi = chi_from_kraus(&NoiseSpec::depolarizing(l).unwrap().kraus(0).unwrap(), 2).unwrap();
            (format!("depolarizing {l}"), chi, Some(1.0 - l / 2.0))
        })
        .collect();
    // channels whose samples actually vary
    for spec in [NoiseSpec::amplitude_damping(0.3).unwrap(), NoiseSpec::dephasing(0.4).unwrap()] {
        let chi = chi_from_kraus(&spec.kraus(0).unwrap(), 2).unwrap();
        channels.push((format!("{:?}", spec.kind), chi, None));
    }
    for (i, (name, chi, analytic)) in channels.iter().enumerate() {
        let f6 = process_fidelity(chi, &ci, ProcessVariant::F6).unwrap();
        let stats = average_state_fidelity_stats(chi, &ci, 10_000, 100 + i as u64).unwrap();
        let band = 4.0 * stats.std_err + 1e-12;
        if let Some(want) = analytic {
            ensure!(close(stats.mean, *want, band), "{name}: mean {} vs {want}", stats.mean);
            ensure!(close(1.0 - f6, (1.0 - want) * (1.0 + 1.0 / d), 1e-12), "{name}: analytic relation");
        }
        let predicted = 1.0 - (1.0 - f6) / (1.0 + 1.0 / d);
        ensure!(
            close(stats.mean, predicted, band),
            "{name}: Monte Carlo {} vs {predicted} (4σ = {band:.2e})",
            stats.mean
        );
    }
    Ok(())
}

fn trine_end_to_end() -> Check {
    let trine = KrausSet::trine();
    let protocol = reduce(&trine, None, false).map_err(|e| e.to_string())?;
    let n = 100_000;
    let mixed = QubitState::maximally_mixed();
    for (name, backend) in [("exact", Backend::Exact), ("ancilla", Backend::Ancilla(CircuitVariant::CPhase))] {
        let runs = execute_batch(&protocol, &mixed, 17, n, &backend).map_err(|e| e.to_string())?;
        for (label, count) in leaf_counts(&protocol, &runs) {
            ensure!(binomial_ok(count, n, 1.0 / 3.0), "{name}: leaf {label} has {count}");
        }
    }

    let ideal = ProcessSet::from_kraus_set(&trine).unwrap();
    // branches as executed by each circuit variant
    for variant in CircuitVariant::ALL {
        let mut ops = Vec::new();
        let mut prefix = ComplexMatrix::identity(2);
        for step in &protocol.steps {
            let (k0, k1) = kraus_from_circuit(&circuit_for(variant, step.params));
            let v = &step.pre_unitary;
            ops.push(&(&(&step.post_unitary_0 * &k0) * v) * &prefix);
            prefix = &(&(&step.post_unitary_1 * &k1) * v) * &prefix;
        }
        ops.push(&protocol.final_unitary * &prefix);
        let executed = ProcessSet::from_operators(&protocol.leaf_labels, &ops).unwrap();
        for v in [TotalVariant::Sum, TotalVariant::SqrtSquared] {
            let f = total_fidelity(&executed, &ideal, v).unwrap();
            ensure!(close(f, 1.0, 1e-9), "{variant}: noiseless {v:?} = {f}");
        }
    }

    let noisy = |l: f64| noisy_process_set(&trine, &NoiseSpec::depolarizing(l).unwrap(), NoiseOrder::After).unwrap();
    let (weak, strong) = (noisy(0.05), noisy(0.1));
    for v in [TotalVariant::Sum, TotalVariant::SqrtSquared] {
        let a = total_fidelity(&weak, &ideal, v).unwrap();
        let b = total_fidelity(&strong, &ideal, v).unwrap();
        ensure!(b < a, "{v:?}: λ=0.1 gives {b}, λ=0.05 gives {a}");
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 limiting-case table", limiting_cases, Duration::from_secs(1)),
        ("2 circuit-variant equivalence", circuit_equivalence, Duration::from_secs(5)),
        ("3 decomposition round trip", decomposition_round_trip, Duration::from_secs(30)),
        ("4 continuous-readout statistics", continuous_statistics, Duration::from_secs(60)),
        ("5 quadrature check", quadrature_check, Duration::from_secs(60)),
        ("6 fidelity identity suite", fidelity_identities, Duration::from_secs(10)),
        ("7 linear relation", linear_relation, Duration::from_secs(10)),
        ("8 trine end to end", trine_end_to_end, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            if elapsed <= budget {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:.0?}"))
            }
        });
        match result {
            Ok(()) => println!("PASS  criterion {name} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
