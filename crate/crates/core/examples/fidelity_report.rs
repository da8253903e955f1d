//! All fidelity measures for a slightly miscalibrated two-outcome
//! measurement against the ideal projective one.

use genmeas::decomposition::KrausSet;
use genmeas::fidelity::{fidelity_report, ProcessSet};
use genmeas::partial_projection::PartialProjParams;

fn main() -> Result<(), genmeas::error::Error> {
    let ideal = ProcessSet::from_kraus_set(&KrausSet::projective())?;
    let actual = ProcessSet::from_kraus_set(&KrausSet::partial_projection(PartialProjParams::new(0.97, 0.93)?))?;
    let r = fidelity_report(&actual, &ideal)?;
    for o in &r.outcomes {
        println!(
            "outcome {}: p = {:.3} (ideal {:.3}), F = {:.5}",
            o.label,
            o.p,
            o.p_ideal,
            o.partial_fidelity.unwrap_or(f64::NAN)
        );
    }
    println!("total (sum)           {:.5}", r.total_sum);
    println!("total (sqrt squared)  {:.5}", r.total_sqrt_squared);
    println!("POVM Fp / Fp~         {:.5} / {:.5}", r.povm_fp, r.povm_fp_tilde);
    println!("Bhattacharyya         {:.5}", r.bhattacharyya);
    println!("Kolmogorov distance   {:.5}", r.kolmogorov);
    Ok(())
}
