//! Configuration-driven Monte Carlo runs: seeding, the per-trial pipeline,
//! aggregation and file output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{build_centered_adjacency, critical_time, evolve_exact, sample_constrained_goe, CenteredMatrix};
use crate::error::{LabError, Result};
use crate::graph::sample_regular_graph;
use crate::linalg::{GraphOperator, LanczosOptions, SymmetricOperator};
use crate::metrics::{
    build_mollifier, fit_rate, ks_distance_to_normal, multivariate_gaussian_distance, smoothed_expectation_gap,
    two_sample_ks, EcdfSummary, RateFit,
};
use crate::overlap::{
    compute_overlaps, delocalization_stats, estimate_decorrelation, estimate_moments, joint_covariance,
    make_test_vector, Delocalization, JointOverlapMatrix, OverlapSample, TestVector, TestVectorKind,
};
use crate::rng::{splitmix64, stream_seed, tags};
use crate::spectral::{
    decompose_eigenvalues, decompose_top, edge_spacing_profile, gap_sum_statistic,
    local_law_deviation_profile_lanczos, LocalLawGrid, LocalLawProfile, SpectralDecomposition,
};

/// Environment variable selecting the worker count.
pub const WORKERS_ENV: &str = "EDGELAB_WORKERS";

/// Seed of trial `trial_index` at size `size_index`:
/// `mix(mix(mix(base) ^ size_index) ^ trial_index)` with `mix` the
/// splitmix64 finaliser.
pub fn derive_trial_seed(base_seed: u64, size_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ size_index) ^ trial_index)
}

/// Residual tolerance used for experiment eigenpairs.
pub const EXPERIMENT_LANCZOS_TOLERANCE: f64 = 1e-9;

fn lanczos_options(seed: u64) -> LanczosOptions {
    LanczosOptions { tolerance: EXPERIMENT_LANCZOS_TOLERANCE, seed: stream_seed(seed, tags::LANCZOS), ..Default::default() }
}

/// Leading `k` non-constraint eigenpairs of the centered adjacency of the
/// random graph drawn from `seed`.
pub fn graph_top_pairs(n: usize, d: usize, seed: u64, k: usize) -> Result<SpectralDecomposition> {
    let g = sample_regular_graph(n, d, stream_seed(seed, tags::GRAPH))?;
    decompose_top(&GraphOperator::new(&g), k, &lanczos_options(seed))
}

/// Leading `k` non-constraint eigenpairs of a constrained GOE drawn from `seed`.
pub fn goe_top_pairs(n: usize, seed: u64, k: usize) -> Result<SpectralDecomposition> {
    let w = sample_constrained_goe(n, stream_seed(seed, tags::GOE))?;
    decompose_top(&w, k, &lanczos_options(seed))
}

/// An evolution time of the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    Zero,
    Critical,
    Custom(f64),
}

impl TimeSpec {
    pub fn resolve(self, n: usize, epsilon: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Critical => critical_time(n, epsilon),
            Self::Custom(t) => t,
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::Zero => "0".into(),
            Self::Critical => "tstar".into(),
            Self::Custom(t) => format!("{t}"),
        }
    }
}

impl FromStr for TimeSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "0" => Ok(Self::Zero),
            "tstar" => Ok(Self::Critical),
            other => match other.parse::<f64>() {
                Ok(t) if t > 0.0 && t.is_finite() => Ok(Self::Custom(t)),
                _ => Err(format!("`{other}` is neither 0, tstar nor a positive time")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Statistic {
    Moments,
    Decorrelation,
    Joint,
    Ks,
    LocalLaw,
    Spacing,
    GapSum,
    Delocalization,
    Universality,
    Rate,
}

impl Statistic {
    pub const ALL: [Statistic; 10] = [
        Self::Moments,
        Self::Decorrelation,
        Self::Joint,
        Self::Ks,
        Self::LocalLaw,
        Self::Spacing,
        Self::GapSum,
        Self::Delocalization,
        Self::Universality,
        Self::Rate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Moments => "moments",
            Self::Decorrelation => "decorrelation",
            Self::Joint => "joint",
            Self::Ks => "ks",
            Self::LocalLaw => "local_law",
            Self::Spacing => "spacing",
            Self::GapSum => "gap_sum",
            Self::Delocalization => "delocalization",
            Self::Universality => "universality",
            Self::Rate => "rate",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown statistic `{s}`"))
    }
}

/// All experiment parameters. See [`ExperimentConfig::parse`] for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub times: Vec<TimeSpec>,
    pub test_vectors: Vec<TestVectorKind>,
    pub joint_k: usize,
    pub joint_m: usize,
    pub statistics: Vec<Statistic>,
    pub output_dir: PathBuf,
    /// `None` selects `N^{-5/36}`.
    pub mollifier_delta: Option<f64>,
    pub local_law_energies: usize,
    pub local_law_etas: usize,
    pub spacing_k_max: usize,
    pub projections: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sizes: vec![500, 1000, 2000, 4000],
            degree: 3,
            epsilon: 0.1,
            trials: 4000,
            base_seed: 0,
            times: vec![TimeSpec::Zero],
            test_vectors: vec![TestVectorKind::CoordinateDifference],
            joint_k: 4,
            joint_m: 1,
            statistics: Statistic::ALL.to_vec(),
            output_dir: PathBuf::from("edgelab-out"),
            mollifier_delta: None,
            local_law_energies: 5,
            local_law_etas: 8,
            spacing_k_max: 40,
            projections: 50,
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> LabError {
    LabError::Config { field: field.into(), message: message.into() }
}

fn parse_list<T>(field: &str, value: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(s).map_err(|m| config_error(field, m)))
        .collect()
}

fn parse_scalar<T: FromStr>(field: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| config_error(field, format!("`{value}`: {e}")))
}

impl ExperimentConfig {
    /// Parses flat `key = value` text. Blank lines and `#` comments are
    /// ignored; list values are comma separated. Unset keys keep their
    /// defaults.
    ///
    /// Keys: `sizes`, `degree`, `epsilon`, `trials`, `base_seed`, `times`
    /// (`0`, `tstar` or a positive number), `test_vectors`, `joint_k`,
    /// `joint_m`, `statistics`, `output_dir`, `mollifier_delta` (`auto` or a
    /// number), `local_law_energies`, `local_law_etas`, `spacing_k_max`,
    /// `projections`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sizes" => cfg.sizes = parse_list(key, value, |s| s.parse().map_err(|e| format!("`{s}`: {e}")))?,
                "degree" => cfg.degree = parse_scalar(key, value)?,
                "epsilon" => cfg.epsilon = parse_scalar(key, value)?,
                "trials" => cfg.trials = parse_scalar(key, value)?,
                "base_seed" => cfg.base_seed = parse_scalar(key, value)?,
                "times" => cfg.times = parse_list(key, value, str::parse)?,
                "test_vectors" => {
                    cfg.test_vectors = parse_list(key, value, |s| TestVectorKind::parse(s).map_err(|e| e.to_string()))?
                }
                "joint_k" => cfg.joint_k = parse_scalar(key, value)?,
                "joint_m" => cfg.joint_m = parse_scalar(key, value)?,
                "statistics" => cfg.statistics = parse_list(key, value, str::parse)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "mollifier_delta" => {
                    cfg.mollifier_delta = if value == "auto" { None } else { Some(parse_scalar(key, value)?) }
                }
                "local_law_energies" => cfg.local_law_energies = parse_scalar(key, value)?,
                "local_law_etas" => cfg.local_law_etas = parse_scalar(key, value)?,
                "spacing_k_max" => cfg.spacing_k_max = parse_scalar(key, value)?,
                "projections" => cfg.projections = parse_scalar(key, value)?,
                other => return Err(config_error(other, "unknown key")),
            }
        }
        cfg.statistics.sort();
        cfg.statistics.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(config_error("sizes", "at least one size is required"));
        }
        if self.degree < 3 {
            return Err(config_error("degree", format!("must be at least 3, got {}", self.degree)));
        }
        for &n in &self.sizes {
            if n < 50 {
                return Err(config_error("sizes", format!("every size must be at least 50, got {n}")));
            }
            if n * self.degree % 2 == 1 {
                return Err(config_error("sizes", format!("N * d must be even, got N = {n}, d = {}", self.degree)));
            }
            if n <= self.degree {
                return Err(config_error("sizes", format!("N must exceed d, got N = {n}")));
            }
        }
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(config_error("epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.times.is_empty() {
            return Err(config_error("times", "at least one time is required"));
        }
        if self.test_vectors.is_empty() {
            return Err(config_error("test_vectors", "at least one kind is required"));
        }
        if self.joint_k == 0 {
            return Err(config_error("joint_k", "must be at least 1"));
        }
        if self.joint_m == 0 || self.joint_m > self.test_vectors.len() {
            return Err(config_error(
                "joint_m",
                format!("must lie in 1..={} (the number of test vectors)", self.test_vectors.len()),
            ));
        }
        if let Some(delta) = self.mollifier_delta {
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(config_error("mollifier_delta", "must be positive"));
            }
        }
        if self.local_law_energies == 0 || self.local_law_etas == 0 {
            return Err(config_error("local_law_energies", "local-law grid dimensions must be positive"));
        }
        if self.statistics.contains(&Statistic::Spacing) {
            let smallest = *self.sizes.iter().min().expect("sizes checked non-empty");
            if self.spacing_k_max == 0 || self.spacing_k_max > smallest / 10 {
                return Err(config_error("spacing_k_max", format!("must lie in 1..={}", smallest / 10)));
            }
        }
        if self.statistics.contains(&Statistic::Joint) && self.projections == 0 {
            return Err(config_error("projections", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical `key = value` text: fixed key order, normalised values.
    pub fn canonical(&self) -> String {
        let join = |items: Vec<String>| items.join(",");
        let lines = [
            ("sizes", join(self.sizes.iter().map(|n| n.to_string()).collect())),
            ("degree", self.degree.to_string()),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("trials", self.trials.to_string()),
            ("base_seed", self.base_seed.to_string()),
            ("times", join(self.times.iter().map(|t| t.label()).collect())),
            ("test_vectors", join(self.test_vectors.iter().map(|k| k.name().to_string()).collect())),
            ("joint_k", self.joint_k.to_string()),
            ("joint_m", self.joint_m.to_string()),
            ("statistics", join(self.statistics.iter().map(|s| s.name().to_string()).collect())),
            ("output_dir", self.output_dir.display().to_string()),
            ("mollifier_delta", self.mollifier_delta.map_or("auto".into(), |d| format!("{d:?}"))),
            ("local_law_energies", self.local_law_energies.to_string()),
            ("local_law_etas", self.local_law_etas.to_string()),
            ("spacing_k_max", self.spacing_k_max.to_string()),
            ("projections", self.projections.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn wants(&self, s: Statistic) -> bool {
        self.statistics.contains(&s)
    }

    /// Number of leading non-constraint eigenpairs every trial needs.
    fn eigenpairs_needed(&self) -> usize {
        let mut k = 2;
        if self.wants(Statistic::Joint) {
            k = k.max(self.joint_k);
        }
        if self.wants(Statistic::Spacing) {
            k = k.max(self.spacing_k_max);
        }
        k
    }
}

/// One summary row in the JSON outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub statistic_name: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    /// Serialized as `null` when not applicable.
    #[serde(deserialize_with = "nan_if_null")]
    pub epsilon: f64,
    pub t: String,
    pub trials: usize,
    /// Serialized as `null` when not estimated.
    #[serde(deserialize_with = "nan_if_null")]
    pub value: f64,
    pub std_error: Option<f64>,
    pub seed_range: [u64; 2],
    pub excluded_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_vector_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// A rate fit across sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub statistic_name: String,
    pub d: usize,
    pub epsilon: f64,
    pub t: String,
    pub sizes: Vec<usize>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSeeds {
    #[serde(rename = "N")]
    pub n: usize,
    pub seeds: Vec<u64>,
}

/// Deterministic outcome of a run. Wall-clock data lives in the separate
/// timing file so this record is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    pub software_version: String,
    pub config: String,
    pub trial_seeds: Vec<TrialSeeds>,
    pub summaries: Vec<Summary>,
    pub rates: Vec<RateSummary>,
    pub trial_failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub config_hash: String,
    pub total_seconds: f64,
    pub per_size_seconds: Vec<(usize, f64)>,
    pub workers: usize,
}

/// Per-trial output, kept private to the trial until the ordered reduce.
#[derive(Debug, Clone, Default)]
struct TrialOutcome {
    seed: u64,
    overlaps: Vec<OverlapSample>,
    local_law: Option<LocalLawProfile>,
    spacing: Option<Vec<(usize, f64)>>,
    gap_sum: Option<std::result::Result<f64, String>>,
    delocalization: Option<Delocalization>,
    goe_overlap: Option<f64>,
    failure: Option<String>,
}

struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    n: usize,
    t: f64,
    test_vectors: &'a [TestVector],
    grid: Option<&'a LocalLawGrid>,
}

fn run_trial(ctx: &TrialContext<'_>, seed: u64) -> TrialOutcome {
    let mut out = TrialOutcome { seed, ..Default::default() };
    if let Err(e) = fill_trial(ctx, seed, &mut out) {
        out.failure = Some(e.to_string());
    }
    out
}

fn fill_trial(ctx: &TrialContext<'_>, seed: u64, out: &mut TrialOutcome) -> Result<()> {
    let cfg = ctx.cfg;
    let n = ctx.n;
    let g = sample_regular_graph(n, cfg.degree, stream_seed(seed, tags::GRAPH))?;
    let graph_op;
    let evolved: Option<CenteredMatrix>;
    let op: &dyn SymmetricOperator = if ctx.t == 0.0 {
        evolved = None;
        graph_op = GraphOperator::new(&g);
        &graph_op
    } else {
        let h0 = build_centered_adjacency(&g)?;
        evolved = Some(evolve_exact(&h0, ctx.t, stream_seed(seed, tags::EVOLUTION))?);
        evolved.as_ref().expect("just set")
    };
    let k = cfg.eigenpairs_needed();
    let sd = decompose_top(op, k, &lanczos_options(seed))?;
    let indices: Vec<usize> = (2..=k + 1).collect();
    for q in ctx.test_vectors {
        out.overlaps.push(compute_overlaps(&sd, q, &indices, stream_seed(seed, q.kind as u64))?);
    }
    if let Some(grid) = ctx.grid {
        let q = &ctx.test_vectors[0].coords;
        out.local_law = Some(local_law_deviation_profile_lanczos(op, q, grid, cfg.epsilon)?);
    }
    if cfg.wants(Statistic::Spacing) {
        out.spacing = Some(edge_spacing_profile(&sd, cfg.spacing_k_max)?);
    }
    if cfg.wants(Statistic::Delocalization) {
        out.delocalization = Some(delocalization_stats(&sd, seed)?);
    }
    if cfg.wants(Statistic::GapSum) {
        let dense = match evolved {
            Some(ref m) => m.clone(),
            None => build_centered_adjacency(&g)?,
        };
        let values = decompose_eigenvalues(&dense)?;
        out.gap_sum = Some(gap_sum_statistic(&values, 2).map_err(|e| e.to_string()));
    }
    if cfg.wants(Statistic::Universality) {
        let goe = goe_top_pairs(n, seed, 1)?;
        let q = &ctx.test_vectors[0];
        out.goe_overlap = Some(compute_overlaps(&goe, q, &[2], stream_seed(seed, tags::GOE))?.values[0]);
    }
    Ok(())
}

/// Median, averaging the two middle values for even counts; NaN when empty.
pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Empirical quantile by the nearest-rank rule.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Writes and reads the per-trial overlap CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub t: String,
    pub index: usize,
    pub test_vector_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub k: usize,
    pub edge_distance: f64,
}

fn csv_error(e: csv::Error) -> LabError {
    LabError::Parse(format!("csv: {e}"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_to_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Parse(e.to_string()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Groups overlap rows into per-trial samples, one per (seed, test vector),
/// in order of first appearance.
pub fn samples_from_rows(rows: &[OverlapRow]) -> Vec<OverlapSample> {
    let mut order: Vec<(u64, String, String)> = Vec::new();
    let mut map: BTreeMap<(u64, String, String), OverlapSample> = BTreeMap::new();
    for r in rows {
        let key = (r.seed, r.test_vector_id.clone(), r.t.clone());
        let entry = map.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            OverlapSample {
                indices: Vec::new(),
                values: Vec::new(),
                test_vector_id: r.test_vector_id.clone(),
                seed: r.seed,
                constraint_index_flagged: false,
            }
        });
        entry.indices.push(r.index);
        entry.values.push(r.value);
    }
    order.into_iter().map(|k| map.remove(&k).expect("key recorded")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::InvalidInput(format!("thread pool: {e}")))
}

/// Worker count from [`WORKERS_ENV`], defaulting to the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every selected statistic and writes the output files into
/// `config.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let workers = worker_count();
    let threads = pool(workers)?;
    fs::create_dir_all(&cfg.output_dir)?;

    let mut record = ExperimentRecord {
        config_hash: cfg.hash(),
        software_version: format!("edgelab {}", env!("CARGO_PKG_VERSION")),
        config: cfg.canonical(),
        trial_seeds: Vec::new(),
        summaries: Vec::new(),
        rates: Vec::new(),
        trial_failures: Vec::new(),
    };
    let mut per_size_seconds = Vec::new();
    // KS distances per time label, for the rate fit.
    let mut ks_by_time: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();

    for (size_index, &n) in cfg.sizes.iter().enumerate() {
        let size_started = Instant::now();
        let seeds: Vec<u64> = (0..cfg.trials as u64)
            .map(|trial| derive_trial_seed(cfg.base_seed, size_index as u64, trial))
            .collect();
        record.trial_seeds.push(TrialSeeds { n, seeds: seeds.clone() });
        let seed_range = [0, cfg.trials as u64 - 1];
        let test_vectors: Vec<TestVector> = cfg
            .test_vectors
            .iter()
            .map(|&k| make_test_vector(k, n, cfg.base_seed))
            .collect::<Result<_>>()?;
        let grid = if cfg.wants(Statistic::LocalLaw) {
            Some(LocalLawGrid::edge_window(n, cfg.epsilon, cfg.local_law_energies, cfg.local_law_etas)?)
        } else {
            None
        };

        let mut overlap_rows = Vec::new();
        let mut summaries = Vec::new();
        for &time in &cfg.times {
            let t = time.resolve(n, cfg.epsilon);
            let label = time.label();
            let ctx = TrialContext { cfg, n, t, test_vectors: &test_vectors, grid: grid.as_ref() };
            let outcomes: Vec<TrialOutcome> = threads.install(|| seeds.par_iter().map(|&s| run_trial(&ctx, s)).collect());

            let failed = outcomes.iter().filter(|o| o.failure.is_some()).count();
            for (trial, o) in outcomes.iter().enumerate() {
                if let Some(f) = &o.failure {
                    record.trial_failures.push(format!("N={n} t={label} trial={trial} seed={}: {f}", o.seed));
                }
            }
            let good: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
            let summary = |name: &str, value: f64, std_error: Option<f64>, excluded: usize| Summary {
                statistic_name: name.to_string(),
                n,
                d: cfg.degree,
                epsilon: cfg.epsilon,
                t: label.clone(),
                trials: cfg.trials - excluded,
                value,
                std_error,
                seed_range,
                excluded_trials: excluded,
                test_vector_id: None,
                note: None,
            };

            for o in &good {
                for s in &o.overlaps {
                    for (&index, &value) in s.indices.iter().zip(&s.values) {
                        overlap_rows.push(OverlapRow {
                            n,
                            d: cfg.degree,
                            seed: o.seed,
                            t: label.clone(),
                            index,
                            test_vector_id: s.test_vector_id.clone(),
                            value,
                        });
                    }
                }
            }

            for (qi, q) in test_vectors.iter().enumerate() {
                let samples: Vec<OverlapSample> = good.iter().map(|o| o.overlaps[qi].clone()).collect();
                let tagged = |mut s: Summary| {
                    s.test_vector_id = Some(q.id().to_string());
                    s
                };
                let too_few = samples.len() < crate::overlap::MIN_TRIALS;
                let not_estimated = |name: &str| {
                    let mut s = tagged(summary(name, f64::NAN, None, failed));
                    s.note = Some(format!(
                        "not estimated: {} trials, the estimator needs at least {}",
                        samples.len(),
                        crate::overlap::MIN_TRIALS
                    ));
                    s
                };
                if cfg.wants(Statistic::Moments) {
                    if too_few {
                        summaries.push(not_estimated("moments_X2"));
                    } else {
                        let m = estimate_moments(&samples, 2)?;
                        summaries.push(tagged(summary("mean_X2", m.mean, Some(m.mean_se), failed)));
                        summaries.push(tagged(summary("second_moment_X2", m.second, Some(m.second_se), failed)));
                        summaries.push(tagged(summary("fourth_moment_X2", m.fourth, Some(m.fourth_se), failed)));
                    }
                }
                if cfg.wants(Statistic::Decorrelation) {
                    if too_few {
                        summaries.push(not_estimated("product_mean_X2_X3"));
                    } else {
                        let c = estimate_decorrelation(&samples, 2, 3)?;
                        summaries.push(tagged(summary("product_mean_X2_X3", c.value, Some(c.std_error), failed)));
                    }
                }
                if cfg.wants(Statistic::Ks) && !samples.is_empty() {
                    let x2: Vec<f64> = samples.iter().map(|s| s.values[0]).collect();
                    let ks = ks_distance_to_normal(&EcdfSummary::new(x2)?);
                    summaries.push(tagged(summary("ks_distance_X2", ks, None, failed)));
                    if qi == 0 {
                        ks_by_time.entry(label.clone()).or_default().push((n, ks));
                    }
                }
            }

            if cfg.wants(Statistic::Joint) {
                let k = cfg.joint_k;
                let m = cfg.joint_m;
                let per_trial: Vec<Vec<OverlapSample>> = good.iter().map(|o| o.overlaps[..m].to_vec()).collect();
                let joint = JointOverlapMatrix::from_samples(k, &per_trial)?;
                if joint.trials() >= 10 * joint.width() {
                    let cov = joint_covariance(&joint)?;
                    let mut s = summary("joint_covariance_deviation", cov.deviation_norm, None, failed);
                    s.note = Some(format!(
                        "K = {k}, m = {m}, operator norm of E[Z Z^T] - I{}",
                        if cov.rank_deficient { "; trial matrix rank deficient" } else { "" }
                    ));
                    summaries.push(s);
                }
                if joint.trials() >= 100 {
                    let proxy = multivariate_gaussian_distance(&joint, cfg.projections, cfg.base_seed)?;
                    let mut s = summary("projection_proxy_max_ks", proxy, None, failed);
                    s.note = Some(format!(
                        "proxy only: maximum one-dimensional KS distance over {} random projections, not the convex-set distance",
                        cfg.projections
                    ));
                    summaries.push(s);
                }
            }

            if let Some(grid) = &grid {
                let mut rows = Vec::new();
                let mut sups = Vec::new();
                for o in &good {
                    let prof = o.local_law.as_ref().expect("local law requested");
                    sups.push(prof.supremum);
                    for (z, dev) in &prof.rows {
                        rows.push(LocalLawRow { n, d: cfg.degree, seed: o.seed, energy: z.energy(), eta: z.eta(), deviation: *dev });
                    }
                }
                write_csv(&cfg.output_dir.join(format!("local_law_N{n}_t{label}.csv")), &rows)?;
                let mut s = summary("local_law_supremum_median", median(sups), None, failed);
                s.note = Some(format!("{} energies x {} etas", grid.energies.len(), grid.etas.len()));
                summaries.push(s);
            }

            if cfg.wants(Statistic::Spacing) {
                let mut rows = Vec::new();
                let kmax = cfg.spacing_k_max;
                let mut means = vec![0.0; kmax];
                for o in &good {
                    for &(k, dist) in o.spacing.as_ref().expect("spacing requested") {
                        rows.push(SpacingRow { n, d: cfg.degree, seed: o.seed, k, edge_distance: dist });
                        means[k - 1] += dist / good.len() as f64;
                    }
                }
                write_csv(&cfg.output_dir.join(format!("spacing_N{n}_t{label}.csv")), &rows)?;
                let lo = 4.min(kmax);
                let pts: Vec<(f64, f64)> = (lo..=kmax).map(|k| (k as f64 / n as f64, means[k - 1])).collect();
                if let Ok(fit) = fit_rate(&pts) {
                    let mut s = summary("edge_spacing_exponent", fit.exponent, None, failed);
                    s.note = Some(format!("log-log slope of mean(2 - lambda_(k+1)) against k/N over k in [{lo}, {kmax}]"));
                    summaries.push(s);
                }
            }

            if cfg.wants(Statistic::GapSum) {
                let values: Vec<f64> =
                    good.iter().filter_map(|o| o.gap_sum.as_ref().and_then(|r| r.as_ref().ok().copied())).collect();
                let degenerate = good.len() - values.len();
                let mut s = summary("gap_sum_median", median(values), None, failed + degenerate);
                s.note = Some(format!("{degenerate} trials excluded for a degenerate gap"));
                summaries.push(s);
            }

            if cfg.wants(Statistic::Delocalization) {
                let scaled: Vec<f64> =
                    good.iter().map(|o| o.delocalization.expect("requested").scaled_sup_norm).collect();
                summaries.push(summary("delocalization_scaled_sup_p99", quantile(&scaled, 0.99), None, failed));
                let mass: Vec<f64> = good.iter().map(|o| o.delocalization.expect("requested").mass_deviation).collect();
                let (mean, se) = crate::overlap::mean_with_error(&mass);
                summaries.push(summary("mass_concentration_deviation_mean", mean, Some(se), failed));
            }

            if cfg.wants(Statistic::Universality) {
                let graph: Vec<f64> = good.iter().map(|o| o.overlaps[0].values[0]).collect();
                let goe: Vec<f64> = good.iter().map(|o| o.goe_overlap.expect("requested")).collect();
                if !graph.is_empty() {
                    let test = two_sample_ks(&graph, &goe)?;
                    let mut s = summary("graph_vs_goe_ks_pvalue", test.p_value, None, failed);
                    s.note = Some(format!("two-sample KS statistic {}", test.statistic));
                    summaries.push(s);
                    let delta = cfg.mollifier_delta.unwrap_or_else(|| (n as f64).powf(-5.0 / 36.0));
                    let moll = build_mollifier(0.0, delta)?;
                    let gap = smoothed_expectation_gap(&graph, &goe, &moll)?;
                    let mut s = summary("graph_vs_goe_smoothed_gap", gap.value, Some(gap.std_error), failed);
                    s.note = Some(format!(
                        "boundary x = 0, delta = {delta}{}",
                        if cfg.mollifier_delta.is_none() { " (N^(-5/36))" } else { " (configured)" }
                    ));
                    summaries.push(s);
                }
            }
        }
        write_csv(&cfg.output_dir.join(format!("overlaps_N{n}.csv")), &overlap_rows)?;
        let mut by_stat: BTreeMap<String, Vec<Summary>> = BTreeMap::new();
        for s in &summaries {
            by_stat.entry(s.statistic_name.clone()).or_default().push(s.clone());
        }
        for (name, list) in &by_stat {
            write_json(&cfg.output_dir.join(format!("summary_{name}_N{n}.json")), list)?;
        }
        record.summaries.extend(summaries);
        per_size_seconds.push((n, size_started.elapsed().as_secs_f64()));
    }

    if cfg.wants(Statistic::Rate) && cfg.wants(Statistic::Ks) {
        for (label, points) in &ks_by_time {
            let pts: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
            if let Ok(RateFit { exponent, intercept, residual }) = fit_rate(&pts) {
                record.rates.push(RateSummary {
                    statistic_name: "ks_distance_X2".into(),
                    d: cfg.degree,
                    epsilon: cfg.epsilon,
                    t: label.clone(),
                    sizes: points.iter().map(|p| p.0).collect(),
                    values: points.iter().map(|p| p.1).collect(),
                    exponent,
                    intercept,
                    residual,
                });
            }
        }
        write_json(&cfg.output_dir.join("rate_ks_distance_X2.json"), &record.rates)?;
    }

    write_json(&cfg.output_dir.join("record.json"), &record)?;
    let timing = TimingRecord {
        config_hash: record.config_hash.clone(),
        total_seconds: started.elapsed().as_secs_f64(),
        per_size_seconds,
        workers,
    };
    write_json(&cfg.output_dir.join("timing.json"), &timing)?;
    Ok(record)
}
