//! Dense-tensor reverse-mode automatic differentiation, sized for small MLPs.

mod adam;
mod nn;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use nn::{Dense, Mlp};
pub use tape::{Activation, Gradients, Tape, Unit, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
