//! Layers, networks, the classification loss and gradient verification.

pub mod gradcheck;
mod layer;
pub mod loss;
mod network;

pub use gradcheck::{gradient_check, GradCheckReport, LayerCheck};
pub use layer::{softmax, Layer, LayerKind, ParamGrads};
pub use loss::{cross_entropy, cross_entropy_grad};
pub use network::{Architecture, Gradients, InputSpec, Network};
