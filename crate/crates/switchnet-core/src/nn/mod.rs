//! Network layers with exact forward semantics and hand-derived backward
//! passes, plus ADAM and finite-difference gradient checking.
//!
//! Complex-valued signals flow through the vect/switch/square stages; conv
//! and pointwise-multiply stages act on real tensors (complex fields are
//! split into two real channels at the boundary, since ReLU on complex
//! numbers is undefined).

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod perm;
pub mod pm;
pub mod switch;
pub mod tensor;

pub use adam::AdamState;
pub use conv::{conv_backward, conv_forward, Activation, ConvGrads, ConvParams, ConvTape};
pub use perm::{square, vect, vect_perm};
pub use pm::{pm_backward, pm_forward, PmGrads, PmParams, PmTape};
pub use switch::{switch_backward, switch_forward, SwitchGrads, SwitchParams, SwitchTape};
pub use tensor::RealTensor;

/// Glorot uniform half-width `sqrt(6 / (fan_in + fan_out))`; every real
/// component (including real and imaginary parts of complex weights) is drawn
/// uniformly from `(-s, s)`.
pub fn glorot_scale(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
