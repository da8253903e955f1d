//! The three two-qubit circuits that realize a partial projection with an
//! ancilla, and the Kraus operators they induce on the main qubit.

use genmeas::ancilla_circuit::{angles_from_pq, circuit_for, kraus_from_circuit, CircuitVariant};
use genmeas::partial_projection::{dops, PartialProjParams};

fn main() -> Result<(), genmeas::error::Error> {
    let params = PartialProjParams::new(0.9, 0.7)?;
    let (phi, eps) = angles_from_pq(params);
    println!("phi = {phi:.4}, epsilon = {eps:.4}");
    let (d0, d1) = dops(params);
    for v in CircuitVariant::ALL {
        let c = circuit_for(v, params);
        let gates: Vec<String> = c
            .gates
            .iter()
            .map(|g| match g.angle {
                Some(a) => format!("{:?}({a:.3})@{:?}", g.kind, g.target),
                None => format!("{:?}", g.kind),
            })
            .collect();
        let (k0, k1) = kraus_from_circuit(&c);
        println!("{v}: {}", gates.join(" "));
        println!(
            "    distance to D0 {:.1e}, to D1 {:.1e} (up to phase)",
            k0.phase_distance(&d0),
            k1.phase_distance(&d1)
        );
    }
    Ok(())
}
