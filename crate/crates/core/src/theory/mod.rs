//! Deterministic side: the ReLU dual function, variance profiles,
//! width-first kernel recursions, the depth-limit flow and its Euler scheme.

mod dual;
mod flow;
mod kernel;
mod recursion;

pub use dual::{
    clamp_correlation, relu_dual, relu_dual_prime, relu_dual_prime_closed, relu_dual_unchecked,
    CORRELATION_SLACK,
};
pub use flow::{covariance_flow, euler_trace, flow_endpoint, FlowField, FlowSolution, DEFAULT_FLOW_STEP};
pub use kernel::{InputPair, KernelTriple};
pub use recursion::{
    infinite_width_trace, mlp_correlation_trace, mlp_kernel_trace, series_limit_kernel,
    shaped_mlp_kernel_trace, shaped_relu_gain, shaped_resnet_kernel_trace, variance_profile,
    KernelTrace, SeriesLimit,
};
