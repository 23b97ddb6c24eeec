use serde::{Deserialize, Serialize};

use super::{DeleteOutcome, Hit, IndexStats, InsertOutcome, LearnedIndex, LeafSegment, ModelSource, StatsBuilder};
use crate::error::{Error, Result};
use crate::models::AdaptedModel;

/// How an internal node picks a child.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Router {
    /// `clamp(floor(pred / (len - 1) * children))`.
    Model { model: AdaptedModel, len: usize },
    /// Child `i` holds keys in `[separators[i-1], separators[i])`.
    Quantile { separators: Vec<u64> },
}

impl Router {
    #[inline]
    fn route(&self, key: u64, children: usize) -> usize {
        match self {
            Router::Model { model, len } => {
                let denom = len.saturating_sub(1).max(1) as f64;
                let r = model.predict_position(key) / denom * children as f64;
                if r.is_nan() || r < 0.0 {
                    0
                } else {
                    (r.floor() as usize).min(children - 1)
                }
            }
            Router::Quantile { separators } => separators.partition_point(|&s| s <= key),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum RmrtNode {
    Internal { router: Router, children: Vec<RmrtNode> },
    /// Index into the leaf arena.
    Leaf(usize),
}

/// Adaptive recursive model reuse tree. Nodes with more than `leaf_cap` keys
/// split into up to `branch` children; smaller ones become leaves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RmrtIndex {
    root: RmrtNode,
    leaves: Vec<LeafSegment>,
    free: Vec<usize>,
    leaf_cap: usize,
    branch: usize,
    eps: f64,
    verify: bool,
    source: ModelSource,
    rebuilds: usize,
    subtree_rebuilds: usize,
    quantile_splits: usize,
}

struct Builder<'a> {
    leaves: &'a mut Vec<LeafSegment>,
    free: &'a mut Vec<usize>,
    source: &'a mut ModelSource,
    leaf_cap: usize,
    branch: usize,
    eps: f64,
    verify: bool,
    quantile_splits: &'a mut usize,
}

impl Builder<'_> {
    fn leaf(&mut self, keys: Vec<u64>) -> Result<RmrtNode> {
        let leaf = LeafSegment::build(keys, self.source, self.eps, self.verify)?;
        let slot = match self.free.pop() {
            Some(slot) => {
                self.leaves[slot] = leaf;
                slot
            }
            None => {
                self.leaves.push(leaf);
                self.leaves.len() - 1
            }
        };
        Ok(RmrtNode::Leaf(slot))
    }

    fn node(&mut self, keys: Vec<u64>) -> Result<RmrtNode> {
        let n = keys.len();
        if n <= self.leaf_cap || keys[0] == keys[n - 1] {
            return self.leaf(keys);
        }
        let model = self.source.obtain(&keys, self.eps)?;
        let mut router = Router::Model { model, len: n };
        let mut parts = partition(&keys, &router, self.branch);
        if parts.iter().any(|p| p.len() == n) {
            router = Router::Quantile {
                separators: quantile_separators(&keys, self.branch),
            };
            parts = partition(&keys, &router, parts_len(&router, self.branch));
            *self.quantile_splits += 1;
        }
        drop(keys);
        let children = parts.into_iter().map(|p| self.node(p)).collect::<Result<Vec<_>>>()?;
        Ok(RmrtNode::Internal { router, children })
    }
}

fn parts_len(router: &Router, branch: usize) -> usize {
    match router {
        Router::Model { .. } => branch,
        Router::Quantile { separators } => separators.len() + 1,
    }
}

fn partition(keys: &[u64], router: &Router, children: usize) -> Vec<Vec<u64>> {
    let mut parts = vec![Vec::new(); children];
    for &k in keys {
        parts[router.route(k, children)].push(k);
    }
    parts
}

/// Distinct separators strictly above the smallest key, so at least two
/// children are nonempty. Requires a key set that is not all equal.
fn quantile_separators(keys: &[u64], branch: usize) -> Vec<u64> {
    let n = keys.len();
    let mut seps: Vec<u64> = (1..branch)
        .map(|i| keys[i * n / branch])
        .filter(|&s| s > keys[0])
        .collect();
    seps.dedup();
    if seps.is_empty() {
        seps.push(keys[keys.partition_point(|&k| k <= keys[0])]);
    }
    seps
}

/// Builds an RMRT over sorted `keys` with leaf capacity `leaf_cap` and
/// branching factor `branch`.
pub fn build_rmrt(
    keys: &[u64],
    leaf_cap: usize,
    branch: usize,
    source: ModelSource,
    eps: f64,
    verify: bool,
) -> Result<RmrtIndex> {
    if leaf_cap == 0 || branch < 2 {
        return Err(Error::InvalidParameter(format!(
            "need leaf capacity >= 1 and branching >= 2, got {leaf_cap} and {branch}"
        )));
    }
    if let Some(i) = crate::distribution::first_unsorted(keys) {
        return Err(Error::Unsorted { index: i });
    }
    let mut index = RmrtIndex {
        root: RmrtNode::Leaf(0),
        leaves: Vec::new(),
        free: Vec::new(),
        leaf_cap,
        branch,
        eps,
        verify,
        source,
        rebuilds: 0,
        subtree_rebuilds: 0,
        quantile_splits: 0,
    };
    let RmrtIndex {
        leaves,
        free,
        source,
        quantile_splits,
        ..
    } = &mut index;
    let mut b = Builder {
        leaves,
        free,
        source,
        leaf_cap,
        branch,
        eps,
        verify,
        quantile_splits,
    };
    index.root = b.node(keys.to_vec())?;
    Ok(index)
}

impl RmrtIndex {
    fn locate(&self, key: u64) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                RmrtNode::Leaf(slot) => return *slot,
                RmrtNode::Internal { router, children } => node = &children[router.route(key, children.len())],
            }
        }
    }

    pub fn root(&self) -> &RmrtNode {
        &self.root
    }

    pub fn leaf(&self, slot: usize) -> Option<&LeafSegment> {
        self.leaves.get(slot).filter(|_| !self.free.contains(&slot))
    }

    pub fn leaf_cap(&self) -> usize {
        self.leaf_cap
    }

    pub fn branch(&self) -> usize {
        self.branch
    }

    pub fn source(&self) -> &ModelSource {
        &self.source
    }

    /// Internal nodes that fell back to quantile separators.
    pub fn quantile_splits(&self) -> usize {
        self.quantile_splits
    }

    /// Leaves in key order with their depth.
    pub fn leaves_in_order(&self) -> Vec<(&LeafSegment, usize)> {
        fn walk<'a>(node: &RmrtNode, depth: usize, arena: &'a [LeafSegment], out: &mut Vec<(&'a LeafSegment, usize)>) {
            match node {
                RmrtNode::Leaf(slot) => out.push((&arena[*slot], depth)),
                RmrtNode::Internal { children, .. } => {
                    for c in children {
                        walk(c, depth + 1, arena, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &self.leaves, &mut out);
        out
    }
}

impl LearnedIndex for RmrtIndex {
    fn lookup(&self, key: u64) -> Option<Hit> {
        let leaf = self.locate(key);
        self.leaves[leaf].lookup(key).map(|offset| Hit { leaf, offset })
    }

    fn insert(&mut self, key: u64) -> Result<InsertOutcome> {
        let RmrtIndex {
            root,
            leaves,
            free,
            source,
            leaf_cap,
            branch,
            eps,
            verify,
            rebuilds,
            subtree_rebuilds,
            quantile_splits,
        } = self;
        let mut node = root;
        loop {
            match node {
                RmrtNode::Internal { router, children } => {
                    let c = router.route(key, children.len());
                    node = &mut children[c];
                }
                RmrtNode::Leaf(slot) => {
                    let slot = *slot;
                    let over_budget = leaves[slot].insert(key);
                    if leaves[slot].len() > 2 * *leaf_cap {
                        let live = leaves[slot].live_keys();
                        if live.len() > 2 * *leaf_cap {
                            free.push(slot);
                            let mut b = Builder {
                                leaves,
                                free,
                                source,
                                leaf_cap: *leaf_cap,
                                branch: *branch,
                                eps: *eps,
                                verify: *verify,
                                quantile_splits,
                            };
                            *node = b.node(live)?;
                            *subtree_rebuilds += 1;
                            return Ok(InsertOutcome::InsertedWithRebuild);
                        }
                    }
                    if over_budget || leaves[slot].len() > 2 * *leaf_cap {
                        leaves[slot].rebuild(source, *eps, *verify)?;
                        *rebuilds += 1;
                        return Ok(InsertOutcome::InsertedWithRebuild);
                    }
                    return Ok(InsertOutcome::Inserted);
                }
            }
        }
    }

    fn delete(&mut self, key: u64) -> DeleteOutcome {
        let leaf = self.locate(key);
        if self.leaves[leaf].delete(key) {
            DeleteOutcome::Deleted
        } else {
            DeleteOutcome::Absent
        }
    }

    fn key_at(&self, hit: Hit) -> Option<u64> {
        self.leaf(hit.leaf)?.keys().get(hit.offset).copied()
    }

    fn stats(&self) -> IndexStats {
        fn walk(node: &RmrtNode, depth: usize, arena: &[LeafSegment], s: &mut StatsBuilder) {
            match node {
                RmrtNode::Leaf(slot) => s.leaf(&arena[*slot], depth),
                RmrtNode::Internal { router, children } => {
                    match router {
                        Router::Model { model, .. } => s.model(model),
                        Router::Quantile { separators } => s.extra_bytes(8 * separators.len()),
                    }
                    for c in children {
                        walk(c, depth + 1, arena, s);
                    }
                }
            }
        }
        let mut s = StatsBuilder::default();
        walk(&self.root, 0, &self.leaves, &mut s);
        s.finish(self.rebuilds, self.subtree_rebuilds, self.source.training_runs())
    }
}
