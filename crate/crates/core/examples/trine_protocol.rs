//! Reduce the trine measurement to partial projections and run the
//! resulting protocol on the exact and ancilla backends.

use genmeas::ancilla_circuit::CircuitVariant;
use genmeas::decomposition::{execute_batch, leaf_counts, reduce, Backend, KrausSet};
use genmeas::partial_projection::QubitState;

fn main() -> Result<(), genmeas::error::Error> {
    let trine = KrausSet::trine();
    let protocol = reduce(&trine, None, false)?;
    for (j, step) in protocol.steps.iter().enumerate() {
        println!("step {j}: p = {:.4}, q = {:.4}", step.params.p(), step.params.q());
    }
    println!("max branch deviation {:.2e}", protocol.max_deviation(&trine)?);

    let shots = 30_000;
    for (name, backend) in [("exact", Backend::Exact), ("ancilla", Backend::Ancilla(CircuitVariant::CPhase))] {
        let runs = execute_batch(&protocol, &QubitState::maximally_mixed(), 3, shots, &backend)?;
        let freqs: Vec<String> = leaf_counts(&protocol, &runs)
            .iter()
            .map(|(l, c)| format!("{l}: {:.3}", *c as f64 / shots as f64))
            .collect();
        println!("{name:>8}  {}", freqs.join("  "));
    }
    Ok(())
}
