use reuse_index::{DeleteOutcome, Hit, IndexStats, InsertOutcome, LearnedIndex, Result};
use serde::{Deserialize, Serialize};

/// Plain binary search over one sorted array.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SortedArray {
    keys: Vec<u64>,
    tombstones: Vec<bool>,
}

impl SortedArray {
    pub fn new(keys: Vec<u64>) -> Self {
        Self {
            tombstones: vec![false; keys.len()],
            keys,
        }
    }
}

impl LearnedIndex for SortedArray {
    fn lookup(&self, key: u64) -> Option<Hit> {
        let mut at = self.keys.partition_point(|&k| k < key);
        while at < self.keys.len() && self.keys[at] == key {
            if !self.tombstones[at] {
                return Some(Hit { leaf: 0, offset: at });
            }
            at += 1;
        }
        None
    }

    fn insert(&mut self, key: u64) -> Result<InsertOutcome> {
        let at = self.keys.partition_point(|&k| k <= key);
        self.keys.insert(at, key);
        self.tombstones.insert(at, false);
        Ok(InsertOutcome::Inserted)
    }

    fn delete(&mut self, key: u64) -> DeleteOutcome {
        match self.lookup(key) {
            Some(hit) => {
                self.tombstones[hit.offset] = true;
                DeleteOutcome::Deleted
            }
            None => DeleteOutcome::Absent,
        }
    }

    fn key_at(&self, hit: Hit) -> Option<u64> {
        (hit.leaf == 0).then(|| self.keys.get(hit.offset).copied()).flatten()
    }

    fn stats(&self) -> IndexStats {
        IndexStats {
            leaves: 1,
            param_bytes: 0,
            live_keys: self.tombstones.iter().filter(|&&t| !t).count(),
            ..IndexStats::default()
        }
    }
}
