//! Synthetic key generators: uniform and power skew `floor(u^alpha * 2^63)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const SCALE: f64 = 9_223_372_036_854_775_808.0; // 2^63

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DataKind {
    Uniform,
    Skew { alpha: u32 },
}

impl DataKind {
    /// Skew with `alpha = 1` is the uniform generator.
    pub fn skew(alpha: u32) -> Result<Self, String> {
        if alpha == 0 || alpha % 2 == 0 {
            return Err(format!("alpha must be a positive odd integer, got {alpha}"));
        }
        Ok(if alpha == 1 { DataKind::Uniform } else { DataKind::Skew { alpha } })
    }

    pub fn alpha(self) -> u32 {
        match self {
            DataKind::Uniform => 1,
            DataKind::Skew { alpha } => alpha,
        }
    }

    #[inline]
    pub fn draw(self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.gen();
        (u.powi(self.alpha() as i32) * SCALE).floor() as u64
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataKind::Uniform => write!(f, "uniform"),
            DataKind::Skew { alpha } => write!(f, "skew{alpha}"),
        }
    }
}

impl FromStr for DataKind {
    type Err = String;

    /// `uniform`, `skew` (alpha 3) or `skewA`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(DataKind::Uniform),
            "skew" => DataKind::skew(3),
            _ => match s.strip_prefix("skew").map(str::parse::<u32>) {
                Some(Ok(a)) => DataKind::skew(a),
                _ => Err(format!("unknown data kind `{s}`")),
            },
        }
    }
}

/// `n` sorted keys; duplicates are kept.
pub fn generate(kind: DataKind, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<u64> = (0..n).map(|_| kind.draw(&mut rng)).collect();
    keys.sort_unstable();
    keys
}

/// Draws keys following the empirical distribution of a sorted set: a
/// uniform rank, then a uniform key between it and its successor.
pub struct EmpiricalSampler<'a> {
    keys: &'a [u64],
}

impl<'a> EmpiricalSampler<'a> {
    pub fn new(keys: &'a [u64]) -> Self {
        assert!(!keys.is_empty(), "sampler needs at least one key");
        Self { keys }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u64 {
        let i = rng.gen_range(0..self.keys.len());
        let lo = self.keys[i];
        let hi = self.keys.get(i + 1).copied().unwrap_or(lo);
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }
}
