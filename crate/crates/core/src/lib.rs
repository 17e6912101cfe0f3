//! deltadex: an exact compressive-search engine.
//!
//! Datasets are clustered into a divisive metric-ball hierarchy, points are
//! stored as delta encodings against cluster centers (choosing unitary or
//! recursive compression per subtree by measured cost), and exact rho-NN and
//! k-NN queries run directly on the compressed index, decompressing only the
//! clusters a query actually touches.

pub mod analysis;
pub mod bench;
pub mod compress;
pub mod dataio;
pub mod error;
pub mod metric;
pub mod point;
pub mod search;
pub mod store;
pub mod synth;
pub mod tree;
pub(crate) mod varint;

pub use metric::{CompressiveMetric, Encoding, EncodingKind, Metric};
pub use point::{Payload, PayloadKind, Point};
