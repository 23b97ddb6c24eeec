//! Empirical CDFs, the exact two-sample KS distance and the histogram sketch
//! that over-approximates it.
//!
//! All comparisons happen on span-normalized data: each key set is mapped
//! affinely from its own `[min, max]` onto `[0, 1]` before binning or
//! measuring, so a target histogram lines up bin-for-bin with the synthetic
//! histograms of a model pool.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for comparing fractions.
pub const TOLERANCE: f64 = 1e-9;

/// Sorted sequence of 64-bit keys. Duplicates are allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySet {
    keys: Vec<u64>,
}

impl KeySet {
    /// Wraps `keys`, rejecting unsorted input.
    pub fn new(keys: Vec<u64>) -> Result<Self> {
        if let Some(index) = first_unsorted(&keys) {
            return Err(Error::Unsorted { index });
        }
        Ok(Self { keys })
    }

    pub fn from_unsorted(mut keys: Vec<u64>) -> Self {
        keys.sort_unstable();
        Self { keys }
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.keys
    }

    pub fn span(&self) -> Option<KeySpan> {
        KeySpan::of(&self.keys)
    }
}

impl std::ops::Deref for KeySet {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.keys
    }
}

/// Index of the first key that is smaller than its predecessor.
pub fn first_unsorted(keys: &[u64]) -> Option<usize> {
    keys.windows(2).position(|w| w[0] > w[1]).map(|i| i + 1)
}

/// Closed key range `[lo, hi]` used to normalize keys onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySpan {
    pub lo: u64,
    pub hi: u64,
}

impl KeySpan {
    /// The whole `u64` domain; synthetic pool data lives here.
    pub const FULL: KeySpan = KeySpan { lo: 0, hi: u64::MAX };

    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidParameter(format!("span lo {lo} > hi {hi}")));
        }
        Ok(Self { lo, hi })
    }

    /// Span of a sorted slice, `None` when empty.
    pub fn of(keys: &[u64]) -> Option<Self> {
        Some(Self {
            lo: *keys.first()?,
            hi: *keys.last()?,
        })
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Signed distance of `key` from `lo`, computed exactly in integers
    /// before the conversion to `f64`.
    #[inline]
    pub fn offset(&self, key: u64) -> f64 {
        if key >= self.lo {
            (key - self.lo) as f64
        } else {
            -((self.lo - key) as f64)
        }
    }

    /// Maps `key` onto `[0, 1]` (values outside the span extrapolate).
    /// A degenerate span sends everything to 0.
    #[inline]
    pub fn normalize(&self, key: u64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.offset(key) / self.width() as f64
        }
    }
}

fn require_nonempty(keys: &[u64]) -> Result<KeySpan> {
    KeySpan::of(keys).ok_or(Error::EmptyKeySet)
}

/// Fraction of keys `<= x`.
pub fn empirical_cdf_at(keys: &[u64], x: u64) -> Result<f64> {
    require_nonempty(keys)?;
    let count = keys.partition_point(|&k| k <= x);
    Ok(count as f64 / keys.len() as f64)
}

/// Exact KS distance `sup_x |F_a(x) - F_b(x)|` between two sorted key sets,
/// each normalized onto `[0, 1]` by its own span.
pub fn ks_distance(a: &[u64], b: &[u64]) -> Result<f64> {
    let span_a = require_nonempty(a)?;
    let span_b = require_nonempty(b)?;
    Ok(ks_distance_with(a, span_a, b, span_b))
}

/// KS distance with explicit normalization spans.
///
/// Both empirical CDFs are right-continuous step functions, so the gap is
/// piecewise constant between breakpoints. The left limit at a breakpoint
/// equals the value after the previous breakpoint, so evaluating right after
/// every breakpoint (plus the zero gap before the first) covers the sup.
pub fn ks_distance_with(a: &[u64], span_a: KeySpan, b: &[u64], span_b: KeySpan) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let xa = a.get(i).map(|&k| span_a.normalize(k));
        let xb = b.get(j).map(|&k| span_b.normalize(k));
        let x = match (xa, xb) {
            (Some(p), Some(q)) => p.min(q),
            (Some(p), None) => p,
            (None, Some(q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && span_a.normalize(a[i]) <= x {
            i += 1;
        }
        while j < b.len() && span_b.normalize(b[j]) <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Relative-frequency histogram over a normalized `[0, 1]` domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<f64>,
    pub span: KeySpan,
}

impl Histogram {
    pub fn new(bins: Vec<f64>, span: KeySpan) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::ZeroBins);
        }
        Ok(Self { bins, span })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn max_mass(&self) -> f64 {
        self.bins.iter().copied().fold(0.0, f64::max)
    }
}

/// Equal-width histogram of `keys` over their own span.
pub fn build_histogram(keys: &[u64], m: usize) -> Result<Histogram> {
    let span = require_nonempty(keys)?;
    build_histogram_over(keys, span, m)
}

/// Equal-width histogram over an explicit span. Bin `i` covers
/// `[i/m, (i+1)/m)` in normalized units; the last bin is closed on the right.
/// Bin counts come from one binary search per edge, `O(m log n)`.
pub fn build_histogram_over(keys: &[u64], span: KeySpan, m: usize) -> Result<Histogram> {
    require_nonempty(keys)?;
    if m == 0 {
        return Err(Error::ZeroBins);
    }
    let n = keys.len() as f64;
    let mut bins = Vec::with_capacity(m);
    let mut below = 0usize;
    for i in 0..m {
        let upto = if i + 1 == m {
            keys.len()
        } else {
            let edge = (i + 1) as f64 / m as f64;
            keys.partition_point(|&k| span.normalize(k) < edge)
        };
        bins.push((upto - below) as f64 / n);
        below = upto;
    }
    Ok(Histogram { bins, span })
}

/// Histogram-based upper bound on the KS distance.
///
/// Walks the bins with running prefix masses `P_S`, `P_T`; inside bin `i`
/// the source CDF is at most `P_S + H_S[i]` while the target CDF is at least
/// `P_T`, and symmetrically.
pub fn histogram_distance(hs: &Histogram, ht: &Histogram) -> Result<f64> {
    histogram_distance_bins(&hs.bins, &ht.bins)
}

pub fn histogram_distance_bins(hs: &[f64], ht: &[f64]) -> Result<f64> {
    if hs.len() != ht.len() {
        return Err(Error::BinMismatch {
            left: hs.len(),
            right: ht.len(),
        });
    }
    let (mut dist, mut ps, mut pt) = (0.0f64, 0.0f64, 0.0f64);
    for (&s, &t) in hs.iter().zip(ht) {
        dist = dist.max(s + ps - pt).max(t + pt - ps);
        ps += s;
        pt += t;
    }
    Ok(dist.clamp(0.0, 1.0))
}
