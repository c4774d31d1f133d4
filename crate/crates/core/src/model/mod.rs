//! The operator itself: embedding, lift, spectral–spatial blocks and the
//! output head, evaluated on an autodiff tape.

mod checkpoint;
mod config;
mod context;
mod flops;
mod forward;
mod gradcheck;
mod layout;

pub use checkpoint::{Checkpoint, Prediction};
pub use config::{Collaboration, Variant, VirsoConfig};
pub use context::{GraphContext, TapeContext};
pub use flops::{flop_count, FlopCount};
pub use forward::assemble_node_features;
pub use layout::{BlockParams, GateParams, VirsoModel};
