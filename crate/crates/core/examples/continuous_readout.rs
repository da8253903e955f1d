//! Thresholded continuous readout: the stopping rule that turns a weak QND
//! measurement into the partial projection (p, q).

use genmeas::continuous_readout::{finite_thresholds_from_pq, simulate_batch, summarize, ReadoutConfig};
use genmeas::partial_projection::{PartialProjParams, QubitState};

fn main() -> Result<(), genmeas::error::Error> {
    let params = PartialProjParams::new(0.8, 0.6)?;
    let th = finite_thresholds_from_pq(params)?;
    println!("R0 = {:.4}, R1 = {:.4}", th.r0, th.r1);

    for alpha in [0.0, std::f64::consts::FRAC_PI_4] {
        let config = ReadoutConfig::new(1.0, alpha)?.with_seed(7).with_record_path(false);
        for (name, state) in [("|0>", QubitState::zero()), ("|1>", QubitState::one())] {
            let s = summarize(&simulate_batch(&config, th, &state, 20_000)?);
            println!(
                "alpha {alpha:.3} from {name}: outcome 0 in {:.3} of runs, mean duration {:.3} tau",
                s.outcome_counts[0] as f64 / s.count as f64,
                s.mean_duration
            );
        }
    }
    Ok(())
}
