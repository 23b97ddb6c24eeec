//! Index structures built from reused or freshly trained models: a two-layer
//! RMI and the adaptive recursive model reuse tree (RMRT).
//!
//! Each leaf owns its key sequence, so an insertion shifts positions only
//! inside one leaf and never touches sibling bounds.

mod leaf;
mod rmi;
mod rmrt;

pub use leaf::{insert_budget, LeafSegment};
pub use rmi::{build_rmi, RmiIndex};
pub use rmrt::{build_rmrt, RmrtIndex, RmrtNode, Router};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{AdaptedModel, ModelKind, Provenance, TrainParams};
use crate::pool::{agile_model_reuse, ModelPool};

/// Leaf-local lookup result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub leaf: usize,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    Inserted,
    InsertedWithRebuild,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeleteOutcome {
    Deleted,
    Absent,
}

/// Where an index gets its models from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ModelSource {
    /// Agile reuse over a pool that grows with every model trained.
    Reuse(ModelPool),
    /// Always train; the classic RMI.
    TrainOnly {
        kind: ModelKind,
        params: TrainParams,
        #[serde(default)]
        training_runs: u64,
    },
}

impl ModelSource {
    pub fn train_only(kind: ModelKind) -> Self {
        ModelSource::TrainOnly {
            kind,
            params: TrainParams::default(),
            training_runs: 0,
        }
    }

    pub fn obtain(&mut self, keys: &[u64], eps: f64) -> Result<AdaptedModel> {
        match self {
            ModelSource::Reuse(pool) => agile_model_reuse(keys, pool, eps),
            ModelSource::TrainOnly {
                kind,
                params,
                training_runs,
            } => {
                let span = crate::distribution::KeySpan::of(keys).ok_or(crate::error::Error::EmptyKeySet)?;
                let core = crate::models::train(*kind, keys, span, params)?;
                *training_runs += 1;
                AdaptedModel::from_trained(core, keys)
            }
        }
    }

    pub fn training_runs(&self) -> u64 {
        match self {
            ModelSource::Reuse(pool) => pool.training_runs(),
            ModelSource::TrainOnly { training_runs, .. } => *training_runs,
        }
    }

    pub fn pool(&self) -> Option<&ModelPool> {
        match self {
            ModelSource::Reuse(pool) => Some(pool),
            ModelSource::TrainOnly { .. } => None,
        }
    }

    pub fn into_pool(self) -> Option<ModelPool> {
        match self {
            ModelSource::Reuse(pool) => Some(pool),
            ModelSource::TrainOnly { .. } => None,
        }
    }
}

/// Summary of an index's models and maintenance history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub models: usize,
    pub trained: usize,
    pub reused: usize,
    /// `reused / models`; absent when there are no models.
    pub reuse_rate: Option<f64>,
    pub leaves: usize,
    pub max_depth: usize,
    pub mean_depth: f64,
    pub param_bytes: usize,
    /// Mean `err_u - err_l` over nonempty leaves.
    pub mean_window: f64,
    pub rebuilds: usize,
    pub subtree_rebuilds: usize,
    /// Leaves whose transferred bounds had to be widened to cover their keys.
    pub window_repairs: usize,
    pub live_keys: usize,
    pub training_runs: u64,
}

#[derive(Default)]
pub(crate) struct StatsBuilder {
    models: usize,
    trained: usize,
    reused: usize,
    leaves: usize,
    depth_sum: usize,
    max_depth: usize,
    param_bytes: usize,
    window_sum: u64,
    windowed_leaves: usize,
    repairs: usize,
    live: usize,
}

impl StatsBuilder {
    pub(crate) fn model(&mut self, m: &AdaptedModel) {
        self.param_bytes += m.param_bytes();
        match m.provenance {
            Provenance::Trained => {
                self.models += 1;
                self.trained += 1;
            }
            Provenance::Reused { .. } => {
                self.models += 1;
                self.reused += 1;
            }
            Provenance::Empty => {}
        }
    }

    pub(crate) fn leaf(&mut self, leaf: &LeafSegment, depth: usize) {
        self.model(leaf.model());
        self.leaves += 1;
        self.depth_sum += depth;
        self.max_depth = self.max_depth.max(depth);
        self.live += leaf.live_len();
        if !leaf.is_empty() {
            self.window_sum += leaf.model().bounds.width();
            self.windowed_leaves += 1;
        }
        if leaf.repaired() {
            self.repairs += 1;
        }
    }

    pub(crate) fn extra_bytes(&mut self, bytes: usize) {
        self.param_bytes += bytes;
    }

    pub(crate) fn finish(self, rebuilds: usize, subtree_rebuilds: usize, training_runs: u64) -> IndexStats {
        IndexStats {
            models: self.models,
            trained: self.trained,
            reused: self.reused,
            reuse_rate: (self.models > 0).then(|| self.reused as f64 / self.models as f64),
            leaves: self.leaves,
            max_depth: self.max_depth,
            mean_depth: if self.leaves > 0 {
                self.depth_sum as f64 / self.leaves as f64
            } else {
                0.0
            },
            param_bytes: self.param_bytes,
            mean_window: if self.windowed_leaves > 0 {
                self.window_sum as f64 / self.windowed_leaves as f64
            } else {
                0.0
            },
            rebuilds,
            subtree_rebuilds,
            window_repairs: self.repairs,
            live_keys: self.live,
            training_runs,
        }
    }
}

/// Operations shared by every index kind.
pub trait LearnedIndex: Send + Sync {
    fn lookup(&self, key: u64) -> Option<Hit>;
    fn insert(&mut self, key: u64) -> Result<InsertOutcome>;
    fn delete(&mut self, key: u64) -> DeleteOutcome;
    /// Key stored at a hit, tombstoned or not.
    fn key_at(&self, hit: Hit) -> Option<u64>;
    fn stats(&self) -> IndexStats;
}
