//! Learned indexes that reuse pre-trained models instead of training one per
//! node. Key sets are compared by histogram distance; a close enough pool
//! entry is adapted to the new key range with two affine maps.

pub mod distribution;
pub mod error;
pub mod index;
pub mod models;
pub mod pool;

pub use distribution::{build_histogram, histogram_distance, ks_distance, Histogram, KeySet, KeySpan};
pub use error::{Error, FormatError, Result};
pub use index::{
    build_rmi, build_rmrt, DeleteOutcome, Hit, IndexStats, InsertOutcome, LearnedIndex, ModelSource, RmiIndex,
    RmrtIndex,
};
pub use models::{AdaptedModel, ErrorBounds, ModelKind, Provenance, TrainParams};
pub use pool::{agile_model_reuse, load_pool, pretrain_pool, save_pool, ModelPool};
