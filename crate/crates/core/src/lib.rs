//! Glauber and block dynamics for proper colorings and the hard-core model on
//! sparse graphs.
//!
//! The crate is organised around the pieces a block-dynamics experiment
//! needs: graphs ([`graph`]), the sparse block partition ([`partition`]),
//! exact block resampling ([`blocksampler`]), the chains ([`dynamics`]),
//! coupled chains ([`coupling`]), disagreement percolation
//! ([`percolation`]), available-color tracking ([`uniformity`]) and exact
//! spectral checks on tiny instances ([`spectral`]).

pub mod bias;
pub mod blocksampler;
pub mod cost;
pub mod coupling;
pub mod dynamics;
pub mod graph;
pub mod params;
pub mod partition;
pub mod percolation;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod uniformity;

pub use graph::{gen_gnp, CycleList, Graph, GraphError};
pub use params::Params;
pub use partition::{build_partition, validate_partition, Block, BlockKind, BlockPartition};
