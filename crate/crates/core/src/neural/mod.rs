//! Dense tanh networks with hand-written backpropagation, RMSProp and the Huber loss.
//!
//! Everything is `f64`. Layers store weights row-major as `outputs x inputs`.

mod huber;
mod mlp;
mod rmsprop;

pub use huber::huber;
pub use mlp::{Dense, ForwardCache, MlpParams, PARAMS_FORMAT_VERSION};
pub use rmsprop::RmsPropState;
