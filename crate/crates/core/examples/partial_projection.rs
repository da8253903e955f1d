//! Sample a partial projection on |+⟩ and compare frequencies and
//! post-measurement states with the closed forms.

use genmeas::partial_projection::{apply_outcome, measure, outcome_probabilities, PartialProjParams, QubitState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), genmeas::error::Error> {
    let params = PartialProjParams::new(0.8, 0.6)?;
    let state = QubitState::plus();
    let (p0, p1) = outcome_probabilities(params, &state);
    println!("strength {:.2}, P(0) = {p0:.3}, P(1) = {p1:.3}", params.strength());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shots = 10_000;
    let mut zeros = 0;
    for _ in 0..shots {
        let (k, _) = measure(params, &state, &mut rng)?;
        zeros += (k == 0) as usize;
    }
    println!("sampled P(0) = {:.3} over {shots} shots", zeros as f64 / shots as f64);

    for k in [0, 1] {
        let after = apply_outcome(params, k, &state)?;
        let rho = after.matrix();
        println!(
            "after outcome {k}: rho00 = {:.4}, rho01 = {:.4}, purity {:.6}",
            rho[(0, 0)].re,
            rho[(0, 1)],
            after.purity()
        );
    }
    Ok(())
}
