//! The model pool: synthetic CDF families, their pre-trained models, and the
//! first-fit reuse scan over them.

mod format;

pub use format::{decode_pool, encode_pool, load_pool, save_pool, FORMAT_VERSION, MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{build_histogram, histogram_distance_bins, Histogram, KeySet, KeySpan, TOLERANCE};
use crate::error::{Error, Result};
use crate::models::{
    adapt_error_bounds, compute_error_bounds_over, domain_error_bounds, make_maps, train, AdaptedModel, AffineMap, ErrorBounds,
    ModelKind, Provenance, RankPredictor, Span, TrainParams,
};

/// Keys per synthetic dataset unless configured otherwise.
pub const DEFAULT_SYNTHETIC_SIZE: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: u32,
    /// Bin frequencies over the normalized `[0, 1]` domain.
    pub histogram: Vec<f64>,
    /// Rank model over normalized keys of its source set.
    pub model: RankPredictor,
    /// Position-space bounds over the whole normalized domain of the source
    /// set, not only at its keys.
    pub bounds: ErrorBounds,
    pub max_abs_err: f64,
    pub source_len: usize,
}

/// Entries kept in ascending `max_abs_err` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    kind: ModelKind,
    eps: f64,
    bins: usize,
    synthetic_size: usize,
    params: TrainParams,
    entries: Vec<PoolEntry>,
    next_id: u32,
    #[serde(skip)]
    training_runs: u64,
}

impl ModelPool {
    pub fn new(kind: ModelKind, eps: f64, bins: usize, synthetic_size: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::ZeroBins);
        }
        Ok(Self {
            kind,
            eps,
            bins,
            synthetic_size,
            params: TrainParams::default(),
            entries: Vec::new(),
            next_id: 0,
            training_runs: 0,
        })
    }

    /// An empty pool with the default bin count for `eps`.
    pub fn empty(kind: ModelKind, eps: f64) -> Result<Self> {
        Self::new(kind, eps, default_bins(eps)?, DEFAULT_SYNTHETIC_SIZE)
    }

    pub fn with_params(mut self, params: TrainParams) -> Self {
        self.params = params;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn synthetic_size(&self) -> usize {
        self.synthetic_size
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of models trained through [`agile_model_reuse`] on this pool.
    pub fn training_runs(&self) -> u64 {
        self.training_runs
    }

    /// Inserts after every entry with an error no larger than the new one's,
    /// so equal errors keep arrival order.
    pub fn enqueue(&mut self, mut entry: PoolEntry) -> u32 {
        entry.id = self.next_id;
        self.next_id += 1;
        let at = self.entries.partition_point(|e| e.max_abs_err <= entry.max_abs_err);
        let id = entry.id;
        self.entries.insert(at, entry);
        id
    }

    pub(crate) fn from_parts(
        kind: ModelKind,
        eps: f64,
        bins: usize,
        synthetic_size: usize,
        entries: Vec<PoolEntry>,
    ) -> Self {
        let next_id = entries.iter().map(|e| e.id + 1).max().unwrap_or(0);
        Self {
            kind,
            eps,
            bins,
            synthetic_size,
            params: TrainParams::default(),
            entries,
            next_id,
            training_runs: 0,
        }
    }
}

/// Size of one bin-mass unit, `(1 - eps) / 2`, and how many units make 1.
fn unit_count(eps: f64) -> Result<Option<usize>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
    }
    let unit = (1.0 - eps) / 2.0;
    let units = (1.0 / unit).round();
    Ok(((units * unit - 1.0).abs() <= TOLERANCE).then_some(units as usize))
}

/// `ceil(2 / (1 - eps))`, except 12 bins at `eps = 0.9`.
pub fn default_bins(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
    }
    if (eps - 0.9).abs() <= TOLERANCE {
        return Ok(12);
    }
    Ok((2.0 / (1.0 - eps) - TOLERANCE).ceil() as usize)
}

/// Every histogram of `m` bins with masses in `{0, (1-eps)/2, 1-eps}` that
/// sums to one, in lexicographic order of the masses.
pub fn enumerate_histograms(eps: f64, m: usize) -> Result<Vec<Histogram>> {
    if m == 0 {
        return Err(Error::ZeroBins);
    }
    let Some(units) = unit_count(eps)? else {
        log::warn!("eps {eps}: (1 - eps) / 2 does not divide 1; no synthetic histograms");
        return Ok(Vec::new());
    };
    if units > 2 * m {
        log::warn!("eps {eps}: {units} half-units cannot fit in {m} bins");
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut parts = vec![0usize; m];
    compositions(&mut parts, 0, units, &mut |p| {
        let bins = p.iter().map(|&k| k as f64 / units as f64).collect();
        out.push(Histogram {
            bins,
            span: KeySpan::FULL,
        });
    });
    Ok(out)
}

/// Visits compositions of `left` into the remaining slots with parts in
/// `{0, 1, 2}`, smallest part first at each slot.
fn compositions(parts: &mut [usize], at: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    let slots = parts.len() - at;
    if slots == 0 {
        if left == 0 {
            visit(parts);
        }
        return;
    }
    for part in 0..=2usize.min(left) {
        if left - part > 2 * (slots - 1) {
            continue;
        }
        parts[at] = part;
        compositions(parts, at + 1, left - part, visit);
    }
    parts[at] = 0;
}

/// Largest-remainder apportionment of `ns` keys over the bin masses.
pub fn apportion(bins: &[f64], ns: usize) -> Vec<usize> {
    let raw: Vec<f64> = bins
        .iter()
        .map(|&h| {
            let r = h * ns as f64;
            if (r - r.round()).abs() <= TOLERANCE {
                r.round()
            } else {
                r
            }
        })
        .collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor().max(0.0) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..bins.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(ns.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Draws `ns` keys following `histogram` over the full `u64` domain.
pub fn synthesize_dataset(histogram: &[f64], ns: usize, seed: u64) -> KeySet {
    let m = histogram.len();
    let counts = apportion(histogram, ns);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = Vec::with_capacity(ns);
    // A small margin keeps fixed-point rounding from pushing a key over an edge.
    const MARGIN: f64 = 1e-6;
    for (bin, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let u = rng.gen_range(MARGIN..1.0 - MARGIN);
            let x = (bin as f64 + u) / m as f64;
            keys.push((x * 18_446_744_073_709_551_616.0) as u64);
        }
    }
    KeySet::from_unsorted(keys)
}

fn entry_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Pre-trains one model per synthetic histogram.
pub fn pretrain_pool(
    eps: f64,
    kind: ModelKind,
    synthetic_size: usize,
    seed: u64,
    bins: Option<usize>,
    params: &TrainParams,
) -> Result<ModelPool> {
    if synthetic_size < 2 {
        return Err(Error::InvalidParameter("synthetic datasets need at least 2 keys".into()));
    }
    let m = match bins {
        Some(m) => m,
        None => default_bins(eps)?,
    };
    let mut pool = ModelPool::new(kind, eps, m, synthetic_size)?.with_params(*params);
    for (index, h) in enumerate_histograms(eps, m)?.into_iter().enumerate() {
        let keys = synthesize_dataset(&h.bins, synthetic_size, entry_seed(seed, index));
        let model = train(kind, &keys, KeySpan::FULL, params).map_err(|e| Error::PoolTraining {
            entry: index,
            source: Box::new(e),
        })?;
        let at_keys = compute_error_bounds_over(&model, &keys, KeySpan::FULL);
        pool.enqueue(PoolEntry {
            id: 0,
            histogram: h.bins,
            model,
            bounds: domain_error_bounds(&model, &keys, KeySpan::FULL),
            max_abs_err: at_keys.max_abs_err(),
            source_len: synthetic_size,
        });
    }
    Ok(pool)
}

/// `dist <= 1 - eps` with the shared tolerance.
pub fn within_threshold(dist: f64, eps: f64) -> bool {
    dist <= 1.0 - eps + TOLERANCE
}

/// Adapts a pool entry to `keys` at histogram distance `dist`.
pub fn adapt_entry(entry: &PoolEntry, keys: &[u64], dist: f64) -> Result<AdaptedModel> {
    let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
    let n = keys.len();
    let (t_in, t_out) = make_maps(
        Span::new(0.0, 1.0),
        Span::new(0.0, (entry.source_len - 1) as f64),
        Span::new(0.0, span.width() as f64),
        Span::new(0.0, (n - 1) as f64),
    )?;
    // The entry predicts ranks; scale to source positions before T_out.
    let output = AffineMap {
        scale: t_out.scale * (entry.source_len - 1) as f64,
        shift: t_out.shift,
    };
    let mut model = AdaptedModel::assemble(
        span.lo,
        entry.model,
        t_in,
        output,
        Provenance::Reused {
            similarity: 1.0 - dist,
            entry: entry.id,
        },
        n,
    );
    // Positions scale by (n - 1) / (ns - 1) while ranks scale by n / ns; for
    // n > ns the two drift apart by up to (n - ns) / (ns - 1) positions.
    let a = entry.source_len as f64;
    let drift = ((n as f64 - a) / (a - 1.0)).max(0.0);
    model.bounds = adapt_error_bounds(&entry.bounds, dist, n, t_out.scale).widened((drift - TOLERANCE).ceil().max(0.0) as i64);
    Ok(model)
}

/// First qualifying entry in error order, with its histogram distance.
pub fn find_reusable<'a>(pool: &'a ModelPool, target: &Histogram, eps: f64) -> Result<Option<(&'a PoolEntry, f64)>> {
    for entry in &pool.entries {
        if entry.source_len < 2 {
            continue;
        }
        let dist = histogram_distance_bins(&entry.histogram, &target.bins)?;
        if within_threshold(dist, eps) {
            return Ok(Some((entry, dist)));
        }
    }
    Ok(None)
}

/// Returns a model for `keys`: the first pool entry (in ascending error
/// order) within `1 - eps` histogram distance, adapted; otherwise a freshly
/// trained model, which is also enqueued for later reuse.
pub fn agile_model_reuse(keys: &[u64], pool: &mut ModelPool, eps: f64) -> Result<AdaptedModel> {
    let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
    let target = build_histogram(keys, pool.bins)?;
    if let Some((entry, dist)) = find_reusable(pool, &target, eps)? {
        return adapt_entry(entry, keys, dist);
    }
    let core = train(pool.kind, keys, span, &pool.params)?;
    pool.training_runs += 1;
    let model = AdaptedModel::from_trained(core, keys)?;
    // A single key has no position range to adapt from.
    if keys.len() >= 2 {
        let at_keys = compute_error_bounds_over(&core, keys, span);
        pool.enqueue(PoolEntry {
            id: 0,
            histogram: target.bins,
            model: core,
            bounds: domain_error_bounds(&core, keys, span),
            max_abs_err: at_keys.max_abs_err(),
            source_len: keys.len(),
        });
    }
    Ok(model)
}
