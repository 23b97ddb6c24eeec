//! Rank predictors, their error bounds, and the affine adaptation that lets a
//! model trained on one key range serve another.
//!
//! Every trainable model maps a normalized key in `[0, 1]` to a normalized
//! rank in `[0, 1]`; a position is `rank * (n - 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{KeySpan, TOLERANCE};
use crate::error::{Error, Result};

pub trait RankModel {
    fn predict_rank(&self, x: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearModel {
    pub const ZERO: LinearModel = LinearModel {
        slope: 0.0,
        intercept: 0.0,
    };

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Same line with its output multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> LinearModel {
        LinearModel {
            slope: self.slope * factor,
            intercept: self.intercept * factor,
        }
    }
}

impl RankModel for LinearModel {
    fn predict_rank(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

/// Training pairs `(normalized key, i / (n - 1))`.
fn training_pairs(keys: &[u64], span: KeySpan) -> (Vec<f64>, Vec<f64>) {
    let denom = (keys.len().max(2) - 1) as f64;
    let xs = keys.iter().map(|&k| span.normalize(k)).collect();
    let ys = (0..keys.len()).map(|i| i as f64 / denom).collect();
    (xs, ys)
}

/// Training pairs for at most `cap` keys spread evenly over the set, always
/// including both ends. Ranks stay those of the full set.
fn sampled_pairs(keys: &[u64], span: KeySpan, cap: usize) -> (Vec<f64>, Vec<f64>) {
    let n = keys.len();
    if cap == 0 || n <= cap {
        return training_pairs(keys, span);
    }
    let denom = (n - 1) as f64;
    let last = cap.max(2) - 1;
    (0..=last)
        .map(|j| {
            let i = ((j as u128 * (n - 1) as u128) / last as u128) as usize;
            (span.normalize(keys[i]), i as f64 / denom)
        })
        .unzip()
}

/// Closed-form least squares over the keys' own span.
pub fn fit_linear(keys: &[u64]) -> Result<LinearModel> {
    let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
    fit_linear_over(keys, span)
}

pub fn fit_linear_over(keys: &[u64], span: KeySpan) -> Result<LinearModel> {
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    if keys.len() == 1 {
        return Ok(LinearModel::ZERO);
    }
    let n = keys.len() as f64;
    let denom = n - 1.0;
    let mean_x = keys.iter().map(|&k| span.normalize(k)).sum::<f64>() / n;
    let mean_y = 0.5;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &k) in keys.iter().enumerate() {
        let dx = span.normalize(k) - mean_x;
        sxy += dx * (i as f64 / denom - mean_y);
        sxx += dx * dx;
    }
    if sxx <= 0.0 {
        return Ok(LinearModel {
            slope: 0.0,
            intercept: mean_y,
        });
    }
    let slope = sxy / sxx;
    Ok(LinearModel {
        slope,
        intercept: mean_y - slope * mean_x,
    })
}

pub const HIDDEN: usize = 4;

/// One hidden layer of four rectified units and a linear output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyNet {
    pub w_in: [f64; HIDDEN],
    pub b_in: [f64; HIDDEN],
    pub w_out: [f64; HIDDEN],
    pub b_out: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Gradient descent sees at most this many evenly strided keys
    /// (0 = all). Error bounds always cover every key.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
}

fn default_max_samples() -> usize {
    0
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            seed: 42,
            max_samples: default_max_samples(),
        }
    }
}

impl TinyNet {
    pub const PARAM_COUNT: usize = 3 * HIDDEN + 1;

    /// Seeded initialization. Hinges are spread over `[0, 1]` with the first
    /// one just left of the domain so the net starts with a unit that is
    /// active everywhere.
    pub fn init(seed: u64) -> TinyNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = TinyNet {
            w_in: [0.0; HIDDEN],
            b_in: [0.0; HIDDEN],
            w_out: [0.0; HIDDEN],
            b_out: 0.0,
        };
        for k in 0..HIDDEN {
            let w = rng.gen_range(0.5..1.5);
            let hinge = (k as f64 - 1.0 + rng.gen_range(0.0..1.0)) / HIDDEN as f64;
            net.w_in[k] = w;
            net.b_in[k] = -w * hinge;
            net.w_out[k] = rng.gen_range(-0.5..0.5);
        }
        net
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let mut y = self.b_out;
        for k in 0..HIDDEN {
            let z = self.w_in[k] * x + self.b_in[k];
            if z > 0.0 {
                y += self.w_out[k] * z;
            }
        }
        y
    }

    /// Parameters in layer order: input weights, input biases, output
    /// weights, output bias.
    pub fn to_params(&self) -> [f64; Self::PARAM_COUNT] {
        let mut p = [0.0; Self::PARAM_COUNT];
        p[..4].copy_from_slice(&self.w_in);
        p[4..8].copy_from_slice(&self.b_in);
        p[8..12].copy_from_slice(&self.w_out);
        p[12] = self.b_out;
        p
    }

    pub fn from_params(p: &[f64; Self::PARAM_COUNT]) -> TinyNet {
        let mut net = TinyNet {
            w_in: [0.0; HIDDEN],
            b_in: [0.0; HIDDEN],
            w_out: [0.0; HIDDEN],
            b_out: p[12],
        };
        net.w_in.copy_from_slice(&p[..4]);
        net.b_in.copy_from_slice(&p[4..8]);
        net.w_out.copy_from_slice(&p[8..12]);
        net
    }

    /// Mean of `0.5 * (f(x) - y)^2` and its gradient, laid out like
    /// [`TinyNet::to_params`].
    pub fn loss_and_gradient(&self, xs: &[f64], ys: &[f64]) -> (f64, [f64; Self::PARAM_COUNT]) {
        let mut gw_in = [0.0; HIDDEN];
        let mut gb_in = [0.0; HIDDEN];
        let mut gw_out = [0.0; HIDDEN];
        let mut gb_out = 0.0;
        let mut loss = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let mut z = [0.0; HIDDEN];
            let mut out = self.b_out;
            for k in 0..HIDDEN {
                z[k] = (self.w_in[k] * x + self.b_in[k]).max(0.0);
                out += self.w_out[k] * z[k];
            }
            let e = out - y;
            loss += 0.5 * e * e;
            gb_out += e;
            for k in 0..HIDDEN {
                let on = if z[k] > 0.0 { e * self.w_out[k] } else { 0.0 };
                gw_out[k] += e * z[k];
                gw_in[k] += on * x;
                gb_in[k] += on;
            }
        }
        let inv = 1.0 / xs.len().max(1) as f64;
        let mut g = [0.0; Self::PARAM_COUNT];
        for k in 0..HIDDEN {
            g[k] = gw_in[k] * inv;
            g[4 + k] = gb_in[k] * inv;
            g[8 + k] = gw_out[k] * inv;
        }
        g[12] = gb_out * inv;
        (loss * inv, g)
    }
}

impl RankModel for TinyNet {
    fn predict_rank(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

/// Full-batch gradient descent on squared error over the keys' own span.
pub fn fit_tinynet(keys: &[u64], params: &TrainParams) -> Result<TinyNet> {
    let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
    fit_tinynet_over(keys, span, params)
}

pub fn fit_tinynet_over(keys: &[u64], span: KeySpan, params: &TrainParams) -> Result<TinyNet> {
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    let (xs, ys) = sampled_pairs(keys, span, params.max_samples);
    let mut net = TinyNet::init(params.seed);
    let mut p = net.to_params();
    for epoch in 0..params.epochs {
        let (loss, g) = net.loss_and_gradient(&xs, &ys);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        for (v, d) in p.iter_mut().zip(g) {
            *v -= params.learning_rate * d;
        }
        net = TinyNet::from_params(&p);
    }
    Ok(net)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    TinyNet,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Linear => 0,
            ModelKind::TinyNet => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Linear),
            1 => Some(ModelKind::TinyNet),
            _ => None,
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            ModelKind::Linear => 2,
            ModelKind::TinyNet => TinyNet::PARAM_COUNT,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "tinynet" => Ok(ModelKind::TinyNet),
            other => Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A trained rank model of either kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RankPredictor {
    Linear(LinearModel),
    TinyNet(TinyNet),
}

impl RankPredictor {
    pub fn kind(&self) -> ModelKind {
        match self {
            RankPredictor::Linear(_) => ModelKind::Linear,
            RankPredictor::TinyNet(_) => ModelKind::TinyNet,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            RankPredictor::Linear(m) => vec![m.slope, m.intercept],
            RankPredictor::TinyNet(n) => n.to_params().to_vec(),
        }
    }

    pub fn from_params(kind: ModelKind, p: &[f64]) -> Option<Self> {
        match kind {
            ModelKind::Linear => match p {
                [slope, intercept] => Some(RankPredictor::Linear(LinearModel {
                    slope: *slope,
                    intercept: *intercept,
                })),
                _ => None,
            },
            ModelKind::TinyNet => {
                let arr: &[f64; TinyNet::PARAM_COUNT] = p.try_into().ok()?;
                Some(RankPredictor::TinyNet(TinyNet::from_params(arr)))
            }
        }
    }
}

impl RankModel for RankPredictor {
    #[inline]
    fn predict_rank(&self, x: f64) -> f64 {
        match self {
            RankPredictor::Linear(m) => m.eval(x),
            RankPredictor::TinyNet(n) => n.eval(x),
        }
    }
}

/// Trains a model of `kind` over `keys` normalized by `span`.
pub fn train(kind: ModelKind, keys: &[u64], span: KeySpan, params: &TrainParams) -> Result<RankPredictor> {
    Ok(match kind {
        ModelKind::Linear => RankPredictor::Linear(fit_linear_over(keys, span)?),
        ModelKind::TinyNet => RankPredictor::TinyNet(fit_tinynet_over(keys, span, params)?),
    })
}

/// Signed position offsets: a key at position `i` with predicted position
/// `p` satisfies `p + lower <= i <= p + upper`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub lower: i64,
    pub upper: i64,
}

impl ErrorBounds {
    pub const ZERO: ErrorBounds = ErrorBounds { lower: 0, upper: 0 };

    /// Rounds real-valued residual extremes outward to integers. Values
    /// within [`TOLERANCE`] of an integer snap to it; positions are integers
    /// and windows are floored/ceiled again at lookup, so snapping cannot
    /// exclude a position.
    pub fn from_residuals(min: f64, max: f64) -> Self {
        Self {
            lower: (min + TOLERANCE).floor() as i64,
            upper: (max - TOLERANCE).ceil() as i64,
        }
    }

    pub fn max_abs_err(&self) -> f64 {
        self.lower.unsigned_abs().max(self.upper.unsigned_abs()) as f64
    }

    pub fn width(&self) -> u64 {
        (self.upper - self.lower).unsigned_abs()
    }

    pub fn widened(&self, by: i64) -> Self {
        Self {
            lower: self.lower - by,
            upper: self.upper + by,
        }
    }

    pub fn union(&self, other: &ErrorBounds) -> Self {
        Self {
            lower: self.lower.min(other.lower),
            upper: self.upper.max(other.upper),
        }
    }

    pub fn contains_residual(&self, residual: f64) -> bool {
        residual >= self.lower as f64 - TOLERANCE && residual <= self.upper as f64 + TOLERANCE
    }
}

/// Residual range of arbitrary position predictions over `keys`.
pub fn bounds_of_predictions(keys: &[u64], mut predict: impl FnMut(u64) -> f64) -> ErrorBounds {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &k) in keys.iter().enumerate() {
        let r = i as f64 - predict(k);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if keys.is_empty() {
        return ErrorBounds::ZERO;
    }
    ErrorBounds::from_residuals(lo, hi)
}

/// Error bounds of a rank model over `keys` (normalized by their own span).
pub fn compute_error_bounds(model: &impl RankModel, keys: &[u64]) -> Result<ErrorBounds> {
    let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
    Ok(compute_error_bounds_over(model, keys, span))
}

pub fn compute_error_bounds_over(model: &impl RankModel, keys: &[u64], span: KeySpan) -> ErrorBounds {
    let scale = (keys.len().max(1) - 1) as f64;
    bounds_of_predictions(keys, |k| model.predict_rank(span.normalize(k)) * scale)
}

/// Bounds that hold for every normalized input in `[0, 1]`, not only at the
/// keys. Predictions are clamped to `[0, n - 1]`. An input `u` strictly
/// between keys `i - 1` and `i` may sit at any position from `i` (first
/// position at or after it) back to `i - 1` (last position at or before it),
/// so the upper bound covers `i - 1 - p(u)` and the lower bound `i - p(u)`.
/// Between keys a piecewise-linear model peaks at an endpoint or a kink.
pub fn domain_error_bounds(model: &RankPredictor, keys: &[u64], span: KeySpan) -> ErrorBounds {
    let n = keys.len();
    if n == 0 {
        return ErrorBounds::ZERO;
    }
    let last = (n - 1) as f64;
    let predict = |u: f64| (model.predict_rank(u) * last).clamp(0.0, last);
    let kinks: Vec<f64> = match model {
        RankPredictor::Linear(_) => Vec::new(),
        RankPredictor::TinyNet(net) => {
            let mut k: Vec<f64> = (0..HIDDEN)
                .filter(|&j| net.w_in[j] != 0.0)
                .map(|j| -net.b_in[j] / net.w_in[j])
                .filter(|u| (0.0..=1.0).contains(u))
                .collect();
            k.sort_by(f64::total_cmp);
            k
        }
    };
    let xs: Vec<f64> = keys.iter().map(|&k| span.normalize(k).clamp(0.0, 1.0)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=n {
        let left = if i == 0 { 0.0 } else { xs[i - 1] };
        let right = if i == n { 1.0 } else { xs[i] };
        let (mut p_min, mut p_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let inner = kinks.iter().copied().filter(|&u| u > left && u < right);
        for u in [left, right].into_iter().chain(inner) {
            let p = predict(u);
            p_min = p_min.min(p);
            p_max = p_max.max(p);
        }
        hi = hi.max(i as f64 - 1.0 - p_min);
        lo = lo.min(i as f64 - p_max);
    }
    ErrorBounds::from_residuals(lo, hi)
}

/// Closed real interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// `f(x) = scale * x + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        scale: 1.0,
        shift: 0.0,
    };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }
}

/// Input and output maps that align a target's key and position ranges with
/// the ranges a source model was trained on.
///
/// `T_in` sends the target key range onto the source key range endpoint to
/// endpoint; a degenerate target key range maps everything to the source
/// start. `T_out` sends source positions onto target positions.
pub fn make_maps(
    src_keys: Span,
    src_positions: Span,
    tgt_keys: Span,
    tgt_positions: Span,
) -> Result<(AffineMap, AffineMap)> {
    let t_in = if tgt_keys.length() > 0.0 {
        let scale = src_keys.length() / tgt_keys.length();
        AffineMap {
            scale,
            shift: src_keys.start - tgt_keys.start * scale,
        }
    } else {
        AffineMap {
            scale: 0.0,
            shift: src_keys.start,
        }
    };
    if src_positions.length() <= 0.0 {
        return Err(Error::InvalidParameter(
            "source position range is degenerate".into(),
        ));
    }
    let scale = tgt_positions.length() / src_positions.length();
    let t_out = AffineMap {
        scale,
        shift: tgt_positions.start - src_positions.start * scale,
    };
    Ok((t_in, t_out))
}

/// Folds `t_out(model(t_in(x)))` into a single line.
pub fn fold_affine(model: &LinearModel, t_in: &AffineMap, t_out: &AffineMap) -> LinearModel {
    LinearModel {
        slope: model.slope * t_in.scale * t_out.scale,
        intercept: (model.slope * t_in.shift + model.intercept) * t_out.scale + t_out.shift,
    }
}

/// Transfers source error bounds to a target of `n_target` keys at
/// distribution distance `dist`, rounding outward.
pub fn adapt_error_bounds(bounds: &ErrorBounds, dist: f64, n_target: usize, position_scale: f64) -> ErrorBounds {
    let shift = dist * n_target as f64;
    ErrorBounds::from_residuals(
        -shift + bounds.lower as f64 * position_scale,
        shift + bounds.upper as f64 * position_scale,
    )
}

/// Where a model came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Trained,
    Reused { similarity: f64, entry: u32 },
    /// Constant placeholder for an empty partition.
    Empty,
}

impl Provenance {
    pub fn similarity(&self) -> f64 {
        match self {
            Provenance::Reused { similarity, .. } => *similarity,
            Provenance::Trained | Provenance::Empty => 1.0,
        }
    }
}

/// A model bound to one target key set: predicts positions in
/// `[0, target_len - 1]` directly from raw keys.
///
/// Linear cores carry their maps folded in; net cores keep explicit maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedModel {
    pub origin: u64,
    pub core: RankPredictor,
    pub input: AffineMap,
    pub output: AffineMap,
    pub bounds: ErrorBounds,
    pub provenance: Provenance,
    pub target_len: usize,
}

impl AdaptedModel {
    /// Wraps a rank model trained on `keys` (own span) and computes exact
    /// bounds over them.
    pub fn from_trained(core: RankPredictor, keys: &[u64]) -> Result<Self> {
        let span = KeySpan::of(keys).ok_or(Error::EmptyKeySet)?;
        let input = AffineMap {
            scale: if span.is_degenerate() { 0.0 } else { 1.0 / span.width() as f64 },
            shift: 0.0,
        };
        let output = AffineMap {
            scale: (keys.len() - 1) as f64,
            shift: 0.0,
        };
        let mut model = Self::assemble(span.lo, core, input, output, Provenance::Trained, keys.len());
        model.bounds = bounds_of_predictions(keys, |k| model.predict_position(k));
        Ok(model)
    }

    /// Builds a model from its parts, folding the maps into linear cores.
    pub fn assemble(
        origin: u64,
        core: RankPredictor,
        input: AffineMap,
        output: AffineMap,
        provenance: Provenance,
        target_len: usize,
    ) -> Self {
        let (core, input, output) = match core {
            RankPredictor::Linear(m) => (
                RankPredictor::Linear(fold_affine(&m, &input, &output)),
                AffineMap::IDENTITY,
                AffineMap::IDENTITY,
            ),
            net => (net, input, output),
        };
        Self {
            origin,
            core,
            input,
            output,
            bounds: ErrorBounds::ZERO,
            provenance,
            target_len,
        }
    }

    /// Constant model for an empty partition.
    pub fn empty() -> Self {
        Self {
            origin: 0,
            core: RankPredictor::Linear(LinearModel::ZERO),
            input: AffineMap::IDENTITY,
            output: AffineMap::IDENTITY,
            bounds: ErrorBounds::ZERO,
            provenance: Provenance::Empty,
            target_len: 0,
        }
    }

    /// Predicted position, clamped to `[0, target_len - 1]`.
    #[inline]
    pub fn predict_position(&self, key: u64) -> f64 {
        let x = if key >= self.origin {
            (key - self.origin) as f64
        } else {
            -((self.origin - key) as f64)
        };
        let p = match &self.core {
            RankPredictor::Linear(m) => m.eval(x),
            RankPredictor::TinyNet(n) => self.output.apply(n.eval(self.input.apply(x))),
        };
        p.clamp(0.0, self.target_len.saturating_sub(1) as f64)
    }

    /// Inclusive search window for `key` in a sequence of `len` items,
    /// clamped to `[0, len - 1]`. `len` must be nonzero.
    #[inline]
    pub fn window(&self, key: u64, len: usize) -> (usize, usize) {
        let p = self.predict_position(key);
        let last = (len - 1) as f64;
        let lo = (p + self.bounds.lower as f64).floor().clamp(0.0, last);
        let hi = (p + self.bounds.upper as f64).ceil().clamp(0.0, last);
        // NaN predictions clamp to NaN; fall back to the full range.
        if lo.is_nan() || hi.is_nan() {
            return (0, len - 1);
        }
        (lo as usize, hi as usize)
    }

    /// Bytes of model parameters (core plus maps plus bounds).
    pub fn param_bytes(&self) -> usize {
        let maps = match self.core {
            RankPredictor::Linear(_) => 0,
            RankPredictor::TinyNet(_) => 4,
        };
        (self.core.kind().param_count() + maps) * 8 + 2 * 8
    }
}
