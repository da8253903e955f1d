// negated comparisons are deliberate: NaN must fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod partial_projection;
pub mod continuous_readout;
pub mod ancilla_circuit;
pub mod decomposition;
pub mod fidelity;
pub mod channels;
pub mod format;
pub mod cli;
