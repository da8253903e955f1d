//! How the total fidelities of the trine fall off as different noise
//! channels act after each branch.

use genmeas::channels::{noisy_process_set, NoiseOrder, NoiseSpec};
use genmeas::decomposition::KrausSet;
use genmeas::fidelity::{average_fidelity_from_process, process_fidelity, total_fidelity, ProcessSet, ProcessVariant, TotalVariant};

fn main() -> Result<(), genmeas::error::Error> {
    let trine = KrausSet::trine();
    let ideal = ProcessSet::from_kraus_set(&trine)?;
    println!("{:>8} {:>12} {:>12} {:>12}", "strength", "depolarizing", "dephasing", "damping");
    for i in 0..=5 {
        let s = 0.05 * i as f64;
        let mut row = format!("{s:>8.2}");
        for spec in [NoiseSpec::depolarizing(s)?, NoiseSpec::dephasing(s)?, NoiseSpec::amplitude_damping(s)?] {
            let noisy = noisy_process_set(&trine, &spec, NoiseOrder::After)?;
            row += &format!(" {:>12.5}", total_fidelity(&noisy, &ideal, TotalVariant::Sum)?);
        }
        println!("{row}");
    }

    // the same noise alone, scored as a channel
    let chi = genmeas::fidelity::chi_from_kraus(&NoiseSpec::depolarizing(0.1)?.kraus(0)?, 2)?;
    let id = genmeas::fidelity::chi_from_kraus(&[genmeas::linalg::ComplexMatrix::identity(2)], 2)?;
    let f6 = process_fidelity(&chi, &id, ProcessVariant::F6)?;
    println!("depolarizing 0.1: process fidelity {f6:.4}, average state fidelity {:.4}", average_fidelity_from_process(f6, 2));
    Ok(())
}
