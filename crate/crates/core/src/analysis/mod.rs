//! Gate statistics, per-token gate traces and the gradient check.

mod dd;
mod gates;
mod gradcheck;
mod reference;

pub use gates::{
    collect_gate_histograms, trace_sentence, GateHistogram, GateKind, TimestepGateTrace, HISTOGRAM_BINS,
    SATURATION_HIGH, SATURATION_LOW,
};
#[cfg(test)]
pub(crate) use gradcheck::check_with;
pub use gradcheck::{
    grad_check, grad_check_case, grad_check_tampered, relative_error, scalar_grad_check, BlockError, GradCheckCase,
    GradCheckReport,
};
