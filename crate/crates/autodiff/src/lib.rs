//! Minimal dense-tensor engine with a recorded graph for reverse-mode
//! differentiation.
//!
//! Every tensor is a row-major 2-D matrix; scalars are `1 x 1`. Forward ops are
//! methods on [`Graph`] that return a [`Var`] handle, and [`Graph::backward`]
//! walks the recorded nodes in reverse creation order (which is a reverse
//! topological order, since inputs always precede outputs).

mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use error::{Error, Result};
pub use graph::{Axis, Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
