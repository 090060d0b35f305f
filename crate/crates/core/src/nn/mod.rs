//! Networks as layer sequences with cached-activation reverse mode.

pub mod conv;
pub mod gradcheck;
pub mod layer;
pub mod network;
pub mod params;

pub use layer::{softmax_last, Layer, LayerSpec};
pub use network::{Block, Mode, NetBuilder, Network, Trace};
pub use params::{GradientMap, ParamId, ParamRef, ParamStore};
