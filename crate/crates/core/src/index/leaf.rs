use serde::{Deserialize, Serialize};

use super::ModelSource;
use crate::distribution::TOLERANCE;
use crate::error::Result;
use crate::models::{bounds_of_predictions, AdaptedModel};

/// Insertions a leaf absorbs before its model must be rebuilt:
/// `floor((sim - eps) / (1 + eps - sim) * n)`, never negative.
pub fn insert_budget(sim: f64, eps: f64, n: usize) -> usize {
    let slack = sim - eps;
    if slack <= 0.0 {
        return 0;
    }
    ((slack / (1.0 + eps - sim)) * n as f64 + TOLERANCE).floor() as usize
}

/// A leaf: its keys, tombstones, model and insertion budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafSegment {
    keys: Vec<u64>,
    tombstones: Vec<bool>,
    model: AdaptedModel,
    sim: f64,
    insert_count: usize,
    insert_budget: usize,
    base_len: usize,
    repaired: bool,
}

impl LeafSegment {
    /// Obtains a model for `keys` and sizes the insertion budget. With
    /// `verify`, bounds that miss any key are widened to cover it.
    pub fn build(keys: Vec<u64>, source: &mut ModelSource, eps: f64, verify: bool) -> Result<Self> {
        let model = if keys.is_empty() {
            AdaptedModel::empty()
        } else {
            source.obtain(&keys, eps)?
        };
        Ok(Self::with_model(keys, model, eps, verify))
    }

    pub fn with_model(keys: Vec<u64>, mut model: AdaptedModel, eps: f64, verify: bool) -> Self {
        let mut repaired = false;
        if verify && !keys.is_empty() {
            let actual = bounds_of_predictions(&keys, |k| model.predict_position(k));
            let merged = model.bounds.union(&actual);
            if merged != model.bounds {
                model.bounds = merged;
                repaired = true;
            }
        }
        let sim = model.provenance.similarity();
        let n = keys.len();
        Self {
            tombstones: vec![false; n],
            keys,
            insert_budget: insert_budget(sim, eps, n),
            model,
            sim,
            insert_count: 0,
            base_len: n,
            repaired,
        }
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn model(&self) -> &AdaptedModel {
        &self.model
    }

    pub fn similarity(&self) -> f64 {
        self.sim
    }

    pub fn insert_count(&self) -> usize {
        self.insert_count
    }

    pub fn insert_budget(&self) -> usize {
        self.insert_budget
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn repaired(&self) -> bool {
        self.repaired
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn live_len(&self) -> usize {
        self.tombstones.iter().filter(|&&t| !t).count()
    }

    pub fn live_keys(&self) -> Vec<u64> {
        self.keys
            .iter()
            .zip(&self.tombstones)
            .filter(|(_, &t)| !t)
            .map(|(&k, _)| k)
            .collect()
    }

    pub fn is_tombstoned(&self, offset: usize) -> bool {
        self.tombstones.get(offset).copied().unwrap_or(false)
    }

    /// Offset of the first live copy of `key` inside its predicted window.
    #[inline]
    pub fn lookup(&self, key: u64) -> Option<usize> {
        if self.keys.is_empty() {
            return None;
        }
        let (lo, hi) = self.model.window(key, self.keys.len());
        if lo > hi {
            return None;
        }
        let mut at = lo + self.keys[lo..=hi].partition_point(|&k| k < key);
        while at <= hi && self.keys[at] == key {
            if !self.tombstones[at] {
                return Some(at);
            }
            at += 1;
        }
        None
    }

    /// Inserts `key` after any equal keys. Returns true when the insertion
    /// budget is now exceeded and the leaf needs a rebuild.
    pub fn insert(&mut self, key: u64) -> bool {
        let at = self.keys.partition_point(|&k| k <= key);
        self.keys.insert(at, key);
        self.tombstones.insert(at, false);
        // One insertion shifts any existing position by at most one.
        self.model.bounds = self.model.bounds.widened(1);
        let residual = at as f64 - self.model.predict_position(key);
        if !self.model.bounds.contains_residual(residual) {
            self.model.bounds = self
                .model
                .bounds
                .union(&crate::models::ErrorBounds::from_residuals(residual, residual));
        }
        self.insert_count += 1;
        self.insert_count > self.insert_budget
    }

    /// Tombstones the live copy of `key` found by lookup.
    pub fn delete(&mut self, key: u64) -> bool {
        match self.lookup(key) {
            Some(at) => {
                self.tombstones[at] = true;
                true
            }
            None => false,
        }
    }

    /// Rebuilds over the live keys, dropping tombstones.
    pub fn rebuild(&mut self, source: &mut ModelSource, eps: f64, verify: bool) -> Result<()> {
        *self = Self::build(self.live_keys(), source, eps, verify)?;
        Ok(())
    }

    /// Live keys whose position falls outside their predicted window.
    pub fn window_violations(&self) -> usize {
        let len = self.keys.len();
        self.keys
            .iter()
            .enumerate()
            .filter(|(i, &k)| {
                let (lo, hi) = self.model.window(k, len);
                !self.tombstones[*i] && !(lo <= *i && *i <= hi)
            })
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn budget_arithmetic() {
        assert_eq!(insert_budget(1.0, 0.9, 900), 100);
        assert_eq!(insert_budget(0.9, 0.9, 900), 0);
        assert_eq!(insert_budget(0.85, 0.9, 900), 0);
        assert_eq!(insert_budget(1.0, 0.5, 10), 10);
    }

    #[test]
    fn insert_delete_lookup() {
        let mut source = ModelSource::train_only(ModelKind::Linear);
        let keys: Vec<u64> = (0..100).map(|i| i * 10).collect();
        let mut leaf = LeafSegment::build(keys, &mut source, 0.9, true).unwrap();
        assert_eq!(leaf.insert_budget(), 11);
        assert_eq!(leaf.lookup(500), Some(50));
        assert_eq!(leaf.lookup(505), None);
        assert!(leaf.delete(500));
        assert_eq!(leaf.lookup(500), None);
        assert!(!leaf.delete(500));
        assert_eq!(leaf.lookup(490), Some(49));
        assert!(!leaf.insert(500));
        assert!(leaf.lookup(500).is_some());
        assert_eq!(leaf.window_violations(), 0);
    }

    #[test]
    fn out_of_range_inserts_stay_findable() {
        let mut source = ModelSource::train_only(ModelKind::Linear);
        let keys: Vec<u64> = (100..200).collect();
        let mut leaf = LeafSegment::build(keys, &mut source, 0.5, true).unwrap();
        for k in [0, 1, 5_000, 99, 250, u64::MAX] {
            leaf.insert(k);
            assert!(leaf.lookup(k).is_some(), "{k}");
        }
        assert_eq!(leaf.window_violations(), 0);
    }
}
