//! Actor-critic policies for choosing an aggressiveness level from a window
//! of recent checkpoint states.
//!
//! A shared MLP embeds every column of the window. The embeddings then pass
//! through a stacked LSTM (reading its final hidden state) or a pre-norm
//! Transformer encoder (reading a prepended class token). Two linear heads
//! emit action logits and a value estimate.

mod config;
mod error;
mod policy;
mod trunk;

pub use config::{Architecture, LstmPolicyConfig, MlpEncoderConfig, PolicyConfig, TransformerPolicyConfig};
pub use error::{Error, Result};
pub use policy::{greedy, log_softmax, softmax, ActMode, Decision, Forward, Policy, PolicyOutput};
pub use trunk::attention;
