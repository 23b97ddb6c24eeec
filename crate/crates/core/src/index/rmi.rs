use serde::{Deserialize, Serialize};

use super::{DeleteOutcome, Hit, IndexStats, InsertOutcome, LearnedIndex, LeafSegment, ModelSource, StatsBuilder};
use crate::error::{Error, Result};
use crate::models::AdaptedModel;

/// Two-layer RMI: a root model routes each key to one of `fanout` leaves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RmiIndex {
    root: AdaptedModel,
    root_len: usize,
    fanout: usize,
    leaves: Vec<LeafSegment>,
    eps: f64,
    verify: bool,
    source: ModelSource,
    rebuilds: usize,
}

/// Builds an RMI over sorted `keys`. With `verify`, leaf bounds that miss a
/// key are widened at build and rebuild time.
pub fn build_rmi(keys: &[u64], fanout: usize, mut source: ModelSource, eps: f64, verify: bool) -> Result<RmiIndex> {
    if fanout == 0 {
        return Err(Error::InvalidParameter("fanout must be positive".into()));
    }
    if let Some(i) = crate::distribution::first_unsorted(keys) {
        return Err(Error::Unsorted { index: i });
    }
    let root = if keys.is_empty() {
        AdaptedModel::empty()
    } else {
        source.obtain(keys, eps)?
    };
    let mut index = RmiIndex {
        root,
        root_len: keys.len(),
        fanout,
        leaves: Vec::with_capacity(fanout),
        eps,
        verify,
        source,
        rebuilds: 0,
    };
    let mut parts: Vec<Vec<u64>> = vec![Vec::new(); fanout];
    for &k in keys {
        parts[index.route(k)].push(k);
    }
    for part in parts {
        let leaf = LeafSegment::build(part, &mut index.source, eps, verify)?;
        index.leaves.push(leaf);
    }
    Ok(index)
}

impl RmiIndex {
    /// Leaf for `key`: `clamp(floor(pred / (n - 1) * F), 0, F - 1)`.
    #[inline]
    pub fn route(&self, key: u64) -> usize {
        let denom = self.root_len.saturating_sub(1).max(1) as f64;
        let r = self.root.predict_position(key) / denom * self.fanout as f64;
        if r.is_nan() || r < 0.0 {
            0
        } else {
            (r.floor() as usize).min(self.fanout - 1)
        }
    }

    pub fn root(&self) -> &AdaptedModel {
        &self.root
    }

    pub fn leaves(&self) -> &[LeafSegment] {
        &self.leaves
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn source(&self) -> &ModelSource {
        &self.source
    }
}

impl LearnedIndex for RmiIndex {
    fn lookup(&self, key: u64) -> Option<Hit> {
        let leaf = self.route(key);
        self.leaves[leaf].lookup(key).map(|offset| Hit { leaf, offset })
    }

    fn insert(&mut self, key: u64) -> Result<InsertOutcome> {
        let leaf = self.route(key);
        if self.leaves[leaf].insert(key) {
            self.leaves[leaf].rebuild(&mut self.source, self.eps, self.verify)?;
            self.rebuilds += 1;
            return Ok(InsertOutcome::InsertedWithRebuild);
        }
        Ok(InsertOutcome::Inserted)
    }

    fn delete(&mut self, key: u64) -> DeleteOutcome {
        let leaf = self.route(key);
        if self.leaves[leaf].delete(key) {
            DeleteOutcome::Deleted
        } else {
            DeleteOutcome::Absent
        }
    }

    fn key_at(&self, hit: Hit) -> Option<u64> {
        self.leaves.get(hit.leaf)?.keys().get(hit.offset).copied()
    }

    fn stats(&self) -> IndexStats {
        let mut s = StatsBuilder::default();
        s.model(&self.root);
        for leaf in &self.leaves {
            s.leaf(leaf, 1);
        }
        s.finish(self.rebuilds, 0, self.source.training_runs())
    }
}
