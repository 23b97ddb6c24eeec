use std::fs::OpenOptions;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reuse_index::index::{build_rmi, build_rmrt, RmiIndex, RmrtIndex};
use reuse_index::{
    load_pool, DeleteOutcome, Hit, IndexStats, InsertOutcome, LearnedIndex, ModelKind, ModelPool, ModelSource,
    TrainParams,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::SortedArray;
use crate::datagen::{self, DataKind, EmpiricalSampler};
use crate::sosd::{self, SosdError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    /// Recursive model reuse tree.
    Rmrt,
    /// Two-layer RMI with model reuse.
    RmiMr,
    /// Two-layer RMI, every model trained.
    Rmi,
    /// Binary search over a sorted array.
    #[value(alias = "binary-search")]
    #[serde(alias = "binary-search")]
    Bsearch,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Rmrt => "rmrt",
            IndexKind::RmiMr => "rmi-mr",
            IndexKind::Rmi => "rmi",
            IndexKind::Bsearch => "bsearch",
        }
    }

    pub fn uses_pool(self) -> bool {
        matches!(self, IndexKind::Rmrt | IndexKind::RmiMr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source")]
pub enum DataSource {
    File { path: PathBuf },
    Generated { generator: DataKind, n: usize, seed: u64 },
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::File { path } => path.display().to_string(),
            DataSource::Generated { generator, n, .. } => format!("{generator}-{n}"),
        }
    }

    pub fn load(&self) -> Result<Vec<u64>, SosdError> {
        match self {
            DataSource::File { path } => Ok(sosd::read(path)?.into_vec()),
            DataSource::Generated { generator, n, seed } => Ok(datagen::generate(*generator, *n, *seed)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub data: DataSource,
    pub index: IndexKind,
    pub model: ModelKind,
    pub eps: f64,
    pub fanout: usize,
    pub branch: usize,
    pub leaf_cap: usize,
    pub pool: Option<PathBuf>,
    pub lookups: usize,
    /// Inserted keys as a percentage of the dataset size.
    pub insert_ratio: f64,
    /// Percentage of timed lookups that ask for keys not in the set.
    pub absent_ratio: f64,
    pub seed: u64,
    /// Above 1, lookups are also replayed on this many threads for throughput.
    pub threads: usize,
    pub train: TrainParams,
    pub verify_windows: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            data: DataSource::Generated {
                generator: DataKind::Uniform,
                n: 1_000_000,
                seed: 1,
            },
            index: IndexKind::Rmrt,
            model: ModelKind::Linear,
            eps: 0.9,
            fanout: 1024,
            branch: 16,
            leaf_cap: 10_000,
            pool: None,
            lookups: 100_000,
            insert_ratio: 0.0,
            absent_ratio: 0.0,
            seed: 42,
            threads: 1,
            train: TrainParams::default(),
            verify_windows: true,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidSpec(m));
        if !(0.0..=100.0).contains(&self.insert_ratio) {
            return bad(format!("insert ratio {} outside [0, 100]", self.insert_ratio));
        }
        if !(0.0..=100.0).contains(&self.absent_ratio) {
            return bad(format!("absent ratio {} outside [0, 100]", self.absent_ratio));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps {} outside (0, 1]", self.eps));
        }
        if self.fanout == 0 || self.branch < 2 || self.leaf_cap == 0 || self.threads == 0 {
            return bad("fanout, leaf capacity and threads must be positive and branching at least 2".into());
        }
        Ok(())
    }
}

/// Any index the bench can build, in a form that can be saved and reloaded.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum BuiltIndex {
    Rmrt(RmrtIndex),
    RmiMr(RmiIndex),
    Rmi(RmiIndex),
    Bsearch(SortedArray),
}

impl BuiltIndex {
    fn inner(&self) -> &dyn LearnedIndex {
        match self {
            BuiltIndex::Rmrt(i) => i,
            BuiltIndex::RmiMr(i) | BuiltIndex::Rmi(i) => i,
            BuiltIndex::Bsearch(i) => i,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn LearnedIndex {
        match self {
            BuiltIndex::Rmrt(i) => i,
            BuiltIndex::RmiMr(i) | BuiltIndex::Rmi(i) => i,
            BuiltIndex::Bsearch(i) => i,
        }
    }

    pub fn kind(&self) -> IndexKind {
        match self {
            BuiltIndex::Rmrt(_) => IndexKind::Rmrt,
            BuiltIndex::RmiMr(_) => IndexKind::RmiMr,
            BuiltIndex::Rmi(_) => IndexKind::Rmi,
            BuiltIndex::Bsearch(_) => IndexKind::Bsearch,
        }
    }
}

impl LearnedIndex for BuiltIndex {
    #[inline]
    fn lookup(&self, key: u64) -> Option<Hit> {
        match self {
            BuiltIndex::Rmrt(i) => i.lookup(key),
            BuiltIndex::RmiMr(i) | BuiltIndex::Rmi(i) => i.lookup(key),
            BuiltIndex::Bsearch(i) => i.lookup(key),
        }
    }

    fn insert(&mut self, key: u64) -> reuse_index::Result<InsertOutcome> {
        self.inner_mut().insert(key)
    }

    fn delete(&mut self, key: u64) -> DeleteOutcome {
        self.inner_mut().delete(key)
    }

    fn key_at(&self, hit: Hit) -> Option<u64> {
        self.inner().key_at(hit)
    }

    fn stats(&self) -> IndexStats {
        self.inner().stats()
    }
}

/// Builds the index named by `spec` over sorted `keys`. Pool-based kinds use
/// `pool` when given, else the spec's pool file, else an empty pool.
pub fn build_index(spec: &WorkloadSpec, keys: &[u64], pool: Option<ModelPool>) -> Result<BuiltIndex, WorkloadError> {
    let pool = match (spec.index.uses_pool(), pool, &spec.pool) {
        (false, _, _) => None,
        (true, Some(p), _) => Some(p),
        (true, None, Some(path)) => Some(load_pool(path)?),
        (true, None, None) => Some(ModelPool::empty(spec.model, spec.eps)?),
    };
    if let Some(p) = &pool {
        if p.kind() != spec.model {
            return Err(WorkloadError::InvalidSpec(format!(
                "pool holds {:?} models but the spec asks for {:?}",
                p.kind(),
                spec.model
            )));
        }
    }
    let reuse = || ModelSource::Reuse(pool.clone().expect("pool kinds").with_params(spec.train));
    let train_only = ModelSource::TrainOnly {
        kind: spec.model,
        params: spec.train,
        training_runs: 0,
    };
    Ok(match spec.index {
        IndexKind::Rmrt => BuiltIndex::Rmrt(build_rmrt(
            keys,
            spec.leaf_cap,
            spec.branch,
            reuse(),
            spec.eps,
            spec.verify_windows,
        )?),
        IndexKind::RmiMr => BuiltIndex::RmiMr(build_rmi(keys, spec.fanout, reuse(), spec.eps, spec.verify_windows)?),
        IndexKind::Rmi => BuiltIndex::Rmi(build_rmi(keys, spec.fanout, train_only, spec.eps, spec.verify_windows)?),
        IndexKind::Bsearch => BuiltIndex::Bsearch(SortedArray::new(keys.to_vec())),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub index: String,
    pub model: String,
    pub data: String,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub build_ms: f64,
    pub timed_lookups: usize,
    pub lookup_mean_ns: f64,
    pub lookup_median_ns: f64,
    pub lookup_p99_ns: f64,
    pub threads: usize,
    pub lookup_throughput_per_s: Option<f64>,
    pub inserts: usize,
    pub insert_throughput_per_s: Option<f64>,
    pub rebuilds: usize,
    pub subtree_rebuilds: usize,
    pub reuse_rate: Option<f64>,
    pub models: usize,
    pub trained: usize,
    pub reused: usize,
    pub training_runs: u64,
    pub param_bytes: usize,
    pub max_depth: usize,
    pub mean_depth: f64,
    pub mean_window: f64,
    pub window_repairs: usize,
    /// Present-key lookups that returned the key.
    pub found: usize,
    /// Present-key lookups issued.
    pub total: usize,
    pub absent_correct: usize,
    pub absent_total: usize,
}

impl MetricsReport {
    pub fn all_correct(&self) -> bool {
        self.found == self.total && self.absent_correct == self.absent_total
    }

    /// Appends one row, writing the header first when the file is new or
    /// empty.
    pub fn append_csv(&self, path: impl AsRef<Path>) -> Result<(), WorkloadError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(self)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub key: u64,
    pub expected_present: bool,
    pub returned: Option<u64>,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Data(#[from] SosdError),
    #[error(transparent)]
    Index(#[from] reuse_index::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error("{} of {} lookups wrong; first: {:?}", .report.total - .report.found + .report.absent_total - .report.absent_correct, .report.total + .report.absent_total, .mismatches.first())]
    Correctness {
        report: Box<MetricsReport>,
        mismatches: Vec<Mismatch>,
    },
}

impl From<reuse_index::FormatError> for WorkloadError {
    fn from(e: reuse_index::FormatError) -> Self {
        WorkloadError::Index(e.into())
    }
}

const MISMATCH_SAMPLE: usize = 10;

struct Checker {
    found: usize,
    total: usize,
    absent_correct: usize,
    absent_total: usize,
    mismatches: Vec<Mismatch>,
}

impl Checker {
    fn new() -> Self {
        Self {
            found: 0,
            total: 0,
            absent_correct: 0,
            absent_total: 0,
            mismatches: Vec::new(),
        }
    }

    fn check(&mut self, index: &impl LearnedIndex, key: u64, expected_present: bool, hit: Option<Hit>) {
        let returned = hit.and_then(|h| index.key_at(h));
        let ok = if expected_present {
            self.total += 1;
            returned == Some(key)
        } else {
            self.absent_total += 1;
            hit.is_none()
        };
        if ok {
            if expected_present {
                self.found += 1;
            } else {
                self.absent_correct += 1;
            }
        } else if self.mismatches.len() < MISMATCH_SAMPLE {
            self.mismatches.push(Mismatch {
                key,
                expected_present,
                returned,
            });
        }
    }
}

enum KeyDraw<'a> {
    Generator(DataKind),
    Empirical(EmpiricalSampler<'a>),
}

impl KeyDraw<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            KeyDraw::Generator(kind) => kind.draw(rng),
            KeyDraw::Empirical(s) => s.draw(rng),
        }
    }
}

fn percentile(sorted: &[u64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

/// Loads the spec's dataset and runs it.
pub fn run_workload(spec: &WorkloadSpec) -> Result<MetricsReport, WorkloadError> {
    spec.validate()?;
    let keys = spec.data.load()?;
    run_on(spec, &keys, None)
}

/// Builds, runs timed lookups, then interleaved inserts and lookups, checking
/// every answer against binary search over the live keys.
pub fn run_on(spec: &WorkloadSpec, keys: &[u64], pool: Option<ModelPool>) -> Result<MetricsReport, WorkloadError> {
    spec.validate()?;
    if keys.is_empty() {
        return Err(WorkloadError::InvalidSpec("dataset is empty".into()));
    }
    if let Some(index) = reuse_index::distribution::first_unsorted(keys) {
        return Err(SosdError::Unsorted { index }.into());
    }
    let started = Instant::now();
    let mut index = build_index(spec, keys, pool)?;
    let build = started.elapsed();

    let draw = match &spec.data {
        DataSource::Generated { generator, .. } => KeyDraw::Generator(*generator),
        DataSource::File { .. } => KeyDraw::Empirical(EmpiricalSampler::new(keys)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut queries = Vec::with_capacity(spec.lookups);
    for _ in 0..spec.lookups {
        let absent = rng.gen::<f64>() * 100.0 < spec.absent_ratio;
        let key = if absent {
            (0..64)
                .map(|_| draw.draw(&mut rng))
                .find(|k| keys.binary_search(k).is_err())
                .unwrap_or_else(|| keys[rng.gen_range(0..keys.len())])
        } else {
            keys[rng.gen_range(0..keys.len())]
        };
        queries.push(key);
    }

    let mut checker = Checker::new();
    let warmup = spec.lookups / 10;
    let mut latencies: Vec<u64> = Vec::with_capacity(spec.lookups - warmup);
    for (i, &key) in queries.iter().enumerate() {
        let t = Instant::now();
        let hit = black_box(index.lookup(black_box(key)));
        let dt = t.elapsed();
        if i >= warmup {
            latencies.push(dt.as_nanos() as u64);
        }
        checker.check(&index, key, keys.binary_search(&key).is_ok(), hit);
    }

    let throughput = (spec.threads > 1 && !queries.is_empty()).then(|| {
        let per = queries.len().div_ceil(spec.threads);
        let shared = &index;
        let t = Instant::now();
        std::thread::scope(|s| {
            for chunk in queries.chunks(per) {
                s.spawn(move || {
                    for &k in chunk {
                        black_box(shared.lookup(black_box(k)));
                    }
                });
            }
        });
        queries.len() as f64 / t.elapsed().as_secs_f64()
    });

    let inserts = ((keys.len() as f64) * spec.insert_ratio / 100.0).round() as usize;
    let mut insert_time = Duration::ZERO;
    if inserts > 0 {
        let mut insert_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0123_4567_89AB_CDEF);
        let mut live: Vec<u64> = keys.to_vec();
        for _ in 0..inserts {
            let key = draw.draw(&mut insert_rng);
            let t = Instant::now();
            index.insert(key)?;
            insert_time += t.elapsed();
            live.push(key);
            checker.check(&index, key, true, index.lookup(key));
            let probe = live[insert_rng.gen_range(0..live.len())];
            checker.check(&index, probe, true, index.lookup(probe));
        }
    }

    latencies.sort_unstable();
    let stats = index.stats();
    let report = MetricsReport {
        index: spec.index.name().into(),
        model: if spec.index == IndexKind::Bsearch {
            "none".into()
        } else {
            format!("{:?}", spec.model).to_lowercase()
        },
        data: spec.data.label(),
        n: keys.len(),
        eps: spec.eps,
        seed: spec.seed,
        build_ms: build.as_secs_f64() * 1e3,
        timed_lookups: latencies.len(),
        lookup_mean_ns: if latencies.is_empty() {
            0.0
        } else {
            latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
        },
        lookup_median_ns: percentile(&latencies, 50.0),
        lookup_p99_ns: percentile(&latencies, 99.0),
        threads: spec.threads,
        lookup_throughput_per_s: throughput,
        inserts,
        insert_throughput_per_s: (inserts > 0).then(|| inserts as f64 / insert_time.as_secs_f64().max(1e-12)),
        rebuilds: stats.rebuilds,
        subtree_rebuilds: stats.subtree_rebuilds,
        reuse_rate: if spec.index.uses_pool() { stats.reuse_rate } else { None },
        models: stats.models,
        trained: stats.trained,
        reused: stats.reused,
        training_runs: stats.training_runs,
        param_bytes: stats.param_bytes,
        max_depth: stats.max_depth,
        mean_depth: stats.mean_depth,
        mean_window: stats.mean_window,
        window_repairs: stats.window_repairs,
        found: checker.found,
        total: checker.total,
        absent_correct: checker.absent_correct,
        absent_total: checker.absent_total,
    };
    if !report.all_correct() {
        return Err(WorkloadError::Correctness {
            report: Box::new(report),
            mismatches: checker.mismatches,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(index: IndexKind) -> WorkloadSpec {
        WorkloadSpec {
            data: DataSource::Generated {
                generator: DataKind::Skew { alpha: 3 },
                n: 20_000,
                seed: 4,
            },
            index,
            lookups: 2_000,
            insert_ratio: 10.0,
            absent_ratio: 20.0,
            leaf_cap: 500,
            fanout: 64,
            ..WorkloadSpec::default()
        }
    }

    #[test]
    fn every_kind_is_correct() {
        for kind in [IndexKind::Rmrt, IndexKind::RmiMr, IndexKind::Rmi, IndexKind::Bsearch] {
            let r = run_workload(&small(kind)).unwrap();
            assert!(r.all_correct());
            assert_eq!(r.inserts, 2_000);
            assert_eq!(r.timed_lookups, 1_800);
            assert!(r.absent_total > 0);
            assert_eq!(r.reuse_rate.is_some(), kind.uses_pool(), "{kind:?}");
        }
    }

    #[test]
    fn non_timing_fields_are_deterministic() {
        let strip = |mut r: MetricsReport| {
            r.build_ms = 0.0;
            r.lookup_mean_ns = 0.0;
            r.lookup_median_ns = 0.0;
            r.lookup_p99_ns = 0.0;
            r.insert_throughput_per_s = None;
            r
        };
        let a = strip(run_workload(&small(IndexKind::Rmrt)).unwrap());
        let b = strip(run_workload(&small(IndexKind::Rmrt)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let mut s = small(IndexKind::Rmrt);
        s.insert_ratio = 120.0;
        assert!(matches!(s.validate(), Err(WorkloadError::InvalidSpec(_))));
        let mut s = small(IndexKind::Rmrt);
        s.branch = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip_with_defaults() {
        let s: WorkloadSpec = serde_json::from_str(r#"{"index":"rmi-mr","eps":0.5}"#).unwrap();
        assert_eq!(s.index, IndexKind::RmiMr);
        assert_eq!(s.fanout, 1024);
        let back: WorkloadSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn percentiles() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }
}
