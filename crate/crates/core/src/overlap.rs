//! Test vectors, normalised overlaps `X_i = √N ⟨q, u_i⟩`, their moment and
//! correlation estimators, and the overlap SDE in spectral coordinates.

use std::fmt;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::{evolve_exact, CenteredMatrix};
use crate::error::{invalid, LabError, Result};
use crate::rng::{rng_from_seed, stream_seed, tags};
use crate::spectral::{decompose, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestVectorKind {
    /// `(e_1 - e_2) / √2`.
    CoordinateDifference,
    /// A normalised Gaussian vector with its mean removed.
    RandomOrthogonal,
    /// Normalised centred indicator of a random set of size `⌊n^{3/4}⌋`.
    IndicatorSet,
}

impl TestVectorKind {
    pub const ALL: [TestVectorKind; 3] = [Self::CoordinateDifference, Self::RandomOrthogonal, Self::IndicatorSet];

    pub fn name(self) -> &'static str {
        match self {
            Self::CoordinateDifference => "coordinate-difference",
            Self::RandomOrthogonal => "random-orthogonal",
            Self::IndicatorSet => "indicator-set",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Parse(format!("unknown test-vector kind `{s}`")))
    }
}

impl fmt::Display for TestVectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A unit vector orthogonal to the all-ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVector {
    pub coords: Vec<f64>,
    pub kind: TestVectorKind,
}

impl TestVector {
    pub fn id(&self) -> &'static str {
        self.kind.name()
    }
}

fn normalise_off_ones(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Size of the indicator set used for mass concentration: `⌊n^{3/4}⌋`.
pub fn indicator_set_size(n: usize) -> usize {
    // The nudge keeps exact powers such as 16^{3/4} = 8 from rounding down.
    ((n as f64).powf(0.75) + 1e-9).floor().max(1.0) as usize
}

/// A seed-chosen subset of `0..n` of size `⌊n^{3/4}⌋`, sorted.
pub fn random_indicator_set(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(stream_seed(seed, tags::TEST_VECTOR));
    let mut set = sample_indices(&mut rng, n, indicator_set_size(n).min(n)).into_vec();
    set.sort_unstable();
    set
}

pub fn make_test_vector(kind: TestVectorKind, n: usize, seed: u64) -> Result<TestVector> {
    if n < 2 {
        return Err(invalid(format!("test vectors need n >= 2, got {n}")));
    }
    let coords = match kind {
        TestVectorKind::CoordinateDifference => {
            let mut v = vec![0.0; n];
            v[0] = std::f64::consts::FRAC_1_SQRT_2;
            v[1] = -std::f64::consts::FRAC_1_SQRT_2;
            v
        }
        TestVectorKind::RandomOrthogonal => {
            let mut rng = rng_from_seed(stream_seed(seed, tags::TEST_VECTOR));
            normalise_off_ones((0..n).map(|_| rng.sample(StandardNormal)).collect())
        }
        TestVectorKind::IndicatorSet => {
            let set = random_indicator_set(n, seed);
            if set.len() == n {
                return Err(invalid("indicator set covers every vertex; its centred indicator vanishes"));
            }
            let mut v = vec![0.0; n];
            for i in set {
                v[i] = 1.0;
            }
            normalise_off_ones(v)
        }
    };
    Ok(TestVector { coords, kind })
}

/// Overlaps of one trial at the requested (1-based) eigen indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSample {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub test_vector_id: String,
    pub seed: u64,
    /// Set when index 1 was requested; its value is reported as 0.
    pub constraint_index_flagged: bool,
}

impl OverlapSample {
    pub fn value_at(&self, index: usize) -> Option<f64> {
        self.indices.iter().position(|&i| i == index).map(|k| self.values[k])
    }
}

/// `√N ⟨q, u_i⟩` without any sign convention applied.
pub fn raw_overlaps(sd: &SpectralDecomposition, q: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
    let root_n = (sd.source_dim() as f64).sqrt();
    indices
        .iter()
        .map(|&i| {
            if i == 1 {
                return Ok(0.0);
            }
            let u = sd.eigenvector(i)?;
            Ok(root_n * u.iter().zip(q).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect()
}

/// Overlaps with an independent uniform sign per eigenvector, drawn from
/// a stream derived from `seed`.
pub fn compute_overlaps(sd: &SpectralDecomposition, q: &TestVector, indices: &[usize], seed: u64) -> Result<OverlapSample> {
    if q.coords.len() != sd.source_dim() {
        return Err(invalid("test vector dimension does not match decomposition"));
    }
    let mut values = raw_overlaps(sd, &q.coords, indices)?;
    let mut rng = rng_from_seed(stream_seed(seed, tags::SIGNS));
    for v in values.iter_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    Ok(OverlapSample {
        indices: indices.to_vec(),
        values,
        test_vector_id: q.id().to_string(),
        seed,
        constraint_index_flagged: indices.contains(&1),
    })
}

/// Plug-in moments of one overlap index with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub second: f64,
    pub fourth: f64,
    pub mean_se: f64,
    pub second_se: f64,
    pub fourth_se: f64,
    pub trials: usize,
}

/// Minimum number of trials accepted by the moment estimators.
pub const MIN_TRIALS: usize = 100;

fn values_at(samples: &[OverlapSample], index: usize) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            s.value_at(index)
                .ok_or_else(|| invalid(format!("trial {} lacks overlap index {index}", s.seed)))
        })
        .collect()
}

/// Mean of `xs` with its delete-one jackknife standard error; for a plain
/// mean this is `s / √n`.
pub fn mean_with_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n * (n - 1.0))).sqrt())
}

pub fn moments_of(xs: &[f64]) -> Result<MomentEstimate> {
    if xs.len() < MIN_TRIALS {
        return Err(LabError::TooFewSamples { needed: MIN_TRIALS, got: xs.len() });
    }
    let (mean, mean_se) = mean_with_error(xs);
    let (second, second_se) = mean_with_error(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
    let (fourth, fourth_se) = mean_with_error(&xs.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
    Ok(MomentEstimate { mean, second, fourth, mean_se, second_se, fourth_se, trials: xs.len() })
}

pub fn estimate_moments(samples: &[OverlapSample], index: usize) -> Result<MomentEstimate> {
    if samples.len() < MIN_TRIALS {
        return Err(LabError::TooFewSamples { needed: MIN_TRIALS, got: samples.len() });
    }
    moments_of(&values_at(samples, index)?)
}

/// Empirical `E[X_i X_j]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Decorrelation {
    pub value: f64,
    pub std_error: f64,
    pub trials: usize,
}

pub fn product_mean(xi: &[f64], xj: &[f64]) -> Result<Decorrelation> {
    if xi.len() != xj.len() {
        return Err(invalid("paired samples differ in length"));
    }
    if xi.len() < MIN_TRIALS {
        return Err(LabError::TooFewSamples { needed: MIN_TRIALS, got: xi.len() });
    }
    let prod: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a * b).collect();
    let (value, std_error) = mean_with_error(&prod);
    Ok(Decorrelation { value, std_error, trials: prod.len() })
}

pub fn estimate_decorrelation(samples: &[OverlapSample], i: usize, j: usize) -> Result<Decorrelation> {
    if i == j {
        return Err(invalid("decorrelation needs i != j; use the moment estimator for i = j"));
    }
    if i < 2 || j < 2 {
        return Err(invalid("decorrelation indices must be at least 2"));
    }
    if samples.len() < MIN_TRIALS {
        return Err(LabError::TooFewSamples { needed: MIN_TRIALS, got: samples.len() });
    }
    product_mean(&values_at(samples, i)?, &values_at(samples, j)?)
}

/// Per-trial vectors `Z = (X_i^{(q_a)})` for `i = 2..=K+1`, `a = 1..=m`,
/// laid out test-vector-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOverlapMatrix {
    k: usize,
    m: usize,
    rows: Vec<Vec<f64>>,
}

impl JointOverlapMatrix {
    pub fn new(k: usize, m: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(invalid("joint overlaps need K >= 1 and m >= 1"));
        }
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k * m) {
            return Err(invalid(format!("trial {t} has {} entries, expected {}", r.len(), k * m)));
        }
        Ok(Self { k, m, rows })
    }

    /// Builds `Z` from one overlap sample per test vector per trial. Each
    /// inner slice holds the `m` samples of a trial.
    pub fn from_samples(k: usize, per_trial: &[Vec<OverlapSample>]) -> Result<Self> {
        let m = per_trial.first().map_or(0, Vec::len);
        let rows = per_trial
            .iter()
            .map(|trial| {
                let mut row = Vec::with_capacity(k * m);
                for s in trial {
                    for i in 2..k + 2 {
                        row.push(s.value_at(i).ok_or_else(|| invalid(format!("missing overlap index {i}")))?);
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(k, m, rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.k * self.m
    }

    pub fn trials(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Second-moment matrix `E[Z Z^T]` and its distance to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    pub matrix: Vec<Vec<f64>>,
    /// Operator norm of `matrix - I`.
    pub deviation_norm: f64,
    pub rank_deficient: bool,
}

pub fn joint_covariance(joint: &JointOverlapMatrix) -> Result<JointCovariance> {
    let w = joint.width();
    let needed = 10 * w;
    if joint.trials() < needed {
        return Err(LabError::TooFewSamples { needed, got: joint.trials() });
    }
    let t = joint.trials() as f64;
    let mut matrix = vec![vec![0.0; w]; w];
    for row in joint.rows() {
        for a in 0..w {
            for b in a..w {
                matrix[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..w {
        for b in a..w {
            matrix[a][b] /= t;
            matrix[b][a] = matrix[a][b];
        }
    }
    let cov = faer::Mat::<f64>::from_fn(w, w, |a, b| matrix[a][b]);
    let eig = cov
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| LabError::EigenFailure {
            reason: "covariance eigenvalues did not converge".into(),
            dump: format!("{matrix:?}"),
        })?;
    let deviation_norm = eig.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
    let top = eig.last().copied().unwrap_or(0.0).abs();
    let rank_deficient = eig.first().copied().unwrap_or(0.0) <= 1e-10 * top.max(f64::MIN_POSITIVE);
    Ok(JointCovariance { matrix, deviation_norm, rank_deficient })
}

/// Delocalisation measurements of one unit vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Delocalization {
    pub sup_norm: f64,
    /// `√N ‖u‖_∞ / √(log N)`.
    pub scaled_sup_norm: f64,
    /// `|Σ_{i∈S} u_i^2 - |S|/N|`.
    pub mass_deviation: f64,
}

pub fn vector_delocalization(u: &[f64], set: &[usize]) -> Result<Delocalization> {
    let n = u.len();
    if n < 2 {
        return Err(invalid("delocalisation needs n >= 2"));
    }
    if let Some(&i) = set.iter().find(|&&i| i >= n) {
        return Err(invalid(format!("set index {i} out of range")));
    }
    let nf = n as f64;
    let sup_norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mass: f64 = set.iter().map(|&i| u[i] * u[i]).sum();
    Ok(Delocalization {
        sup_norm,
        scaled_sup_norm: nf.sqrt() * sup_norm / nf.ln().sqrt(),
        mass_deviation: (mass - set.len() as f64 / nf).abs(),
    })
}

/// Delocalisation of `u_2` with a seed-chosen set of size `⌊N^{3/4}⌋`.
pub fn delocalization_stats(sd: &SpectralDecomposition, set_seed: u64) -> Result<Delocalization> {
    let set = random_indicator_set(sd.source_dim(), set_seed);
    vector_delocalization(sd.eigenvector(2)?, &set)
}

/// Which overlap dynamics to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeForm {
    /// Itô dynamics induced by the matrix flow:
    /// `dX_i = N^{-1/2} Σ_j X_j dβ_ij/(λ_i-λ_j) - (2N)^{-1} Σ_j X_i dt/(λ_i-λ_j)^2`
    /// with symmetric `β_ij = β_ji`.
    MatrixFlow,
    /// `dX_i = Σ_j (X_j - X_i)/(λ_i-λ_j) dB_ij - X_i dt/2` with an
    /// independent unit Brownian motion per ordered pair.
    Stated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeOptions {
    pub t_max: f64,
    pub n_steps: usize,
    pub form: SdeForm,
    /// With `false` every martingale term, eigenvalue noise included, is dropped.
    pub noise: bool,
    /// Keep every this-many steps in the trajectory (the last state is always kept).
    pub record_every: usize,
}

/// Recorded states of `(λ_2..λ_N, X_2..X_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeTrajectory {
    pub times: Vec<f64>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub overlaps: Vec<Vec<f64>>,
}

impl SdeTrajectory {
    pub fn final_overlaps(&self) -> &[f64] {
        self.overlaps.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gap below which the integrator no longer resolves a pair: `√(2 dt / N)`.
pub fn sde_gap_threshold(dt: f64, n: usize) -> f64 {
    (2.0 * dt / n as f64).sqrt()
}

fn min_gap(desc: &[f64]) -> f64 {
    desc.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
}

/// Euler–Maruyama integration of the overlap SDE with β = 1 Dyson
/// eigenvalue dynamics
/// `dλ_i = -λ_i/2 dt + N^{-1} Σ_j dt/(λ_i-λ_j) + √(2/N) dB_i`.
///
/// `eigenvalues` are `λ_2 ≥ … ≥ λ_N` and `overlaps` the matching `X_i`;
/// `n` is the ambient dimension `N`.
pub fn simulate_overlap_sde(
    overlaps: &[f64],
    eigenvalues: &[f64],
    n: usize,
    opts: &SdeOptions,
    seed: u64,
) -> Result<SdeTrajectory> {
    let p = eigenvalues.len();
    if p != overlaps.len() || p < 2 {
        return Err(invalid("overlap SDE needs matching eigenvalue and overlap vectors of length >= 2"));
    }
    if opts.n_steps == 0 || !(opts.t_max > 0.0) || !opts.t_max.is_finite() {
        return Err(invalid("overlap SDE needs t_max > 0 and n_steps >= 1"));
    }
    if eigenvalues.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(invalid("initial eigenvalues must be strictly decreasing"));
    }
    let dt = opts.t_max / opts.n_steps as f64;
    let threshold = sde_gap_threshold(dt, n);
    let gap0 = min_gap(eigenvalues);
    if gap0 <= 10.0 * threshold {
        return Err(LabError::GapCollapse { gap: gap0, threshold: 10.0 * threshold, time: 0.0 });
    }
    let nf = n as f64;
    let sqdt = dt.sqrt();
    let mut rng = rng_from_seed(stream_seed(seed, tags::SDE));
    let mut lam = eigenvalues.to_vec();
    let mut x = overlaps.to_vec();
    let mut next_lam = vec![0.0; p];
    let mut next_x = vec![0.0; p];
    let mut inv_gap = vec![0.0; p * p];
    let mut noise = vec![0.0; p * p];
    let record_every = opts.record_every.max(1);
    let mut traj = SdeTrajectory { times: vec![0.0], eigenvalues: vec![lam.clone()], overlaps: vec![x.clone()] };

    for step in 1..=opts.n_steps {
        for a in 0..p {
            for b in a + 1..p {
                let g = 1.0 / (lam[a] - lam[b]);
                inv_gap[a * p + b] = g;
                inv_gap[b * p + a] = -g;
            }
        }
        if opts.noise {
            match opts.form {
                SdeForm::MatrixFlow => {
                    for a in 0..p {
                        for b in a + 1..p {
                            let z: f64 = rng.sample(StandardNormal);
                            noise[a * p + b] = z;
                            noise[b * p + a] = z;
                        }
                    }
                }
                SdeForm::Stated => {
                    for a in 0..p {
                        for b in 0..p {
                            noise[a * p + b] = if a == b { 0.0 } else { rng.sample(StandardNormal) };
                        }
                    }
                }
            }
        }
        for a in 0..p {
            let row = &inv_gap[a * p..(a + 1) * p];
            let repulsion: f64 = row.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, g)| g).sum();
            let mut dl = (-0.5 * lam[a] + repulsion / nf) * dt;
            if opts.noise {
                let z: f64 = rng.sample(StandardNormal);
                dl += (2.0 / nf).sqrt() * sqdt * z;
            }
            next_lam[a] = lam[a] + dl;

            let nrow = &noise[a * p..(a + 1) * p];
            let dx = match opts.form {
                SdeForm::MatrixFlow => {
                    let sq: f64 = row.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, g)| g * g).sum();
                    let mut dx = -x[a] * sq / (2.0 * nf) * dt;
                    if opts.noise {
                        let m: f64 = (0..p).filter(|&b| b != a).map(|b| x[b] * row[b] * nrow[b]).sum();
                        dx += m * sqdt / nf.sqrt();
                    }
                    dx
                }
                SdeForm::Stated => {
                    let mut dx = -0.5 * x[a] * dt;
                    if opts.noise {
                        let m: f64 = (0..p).filter(|&b| b != a).map(|b| (x[b] - x[a]) * row[b] * nrow[b]).sum();
                        dx += m * sqdt;
                    }
                    dx
                }
            };
            next_x[a] = x[a] + dx;
        }
        std::mem::swap(&mut lam, &mut next_lam);
        std::mem::swap(&mut x, &mut next_x);
        let t = step as f64 * dt;
        let gap = min_gap(&lam);
        if !(gap >= threshold) {
            return Err(LabError::GapCollapse { gap, threshold, time: t });
        }
        if step % record_every == 0 || step == opts.n_steps {
            traj.times.push(t);
            traj.eigenvalues.push(lam.clone());
            traj.overlaps.push(x.clone());
        }
    }
    Ok(traj)
}

/// Paired draws of `X_2(t)` from the spectral-coordinate SDE and from exact
/// matrix evolution, started from the same matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeComparison {
    pub sde: Vec<f64>,
    pub exact: Vec<f64>,
    /// SDE trials aborted for a gap collapse.
    pub aborted: usize,
}

/// Runs `trials` SDE trajectories and `trials` exact evolutions from `h0`.
///
/// Both sides fix the sign of each eigenvector by continuity with the
/// initial one: the SDE does so intrinsically, and for the exact side
/// `u_i(t)` is flipped so that `⟨u_i(t), u_i(0)⟩ ≥ 0`.
pub fn compare_sde_with_exact(
    h0: &CenteredMatrix,
    q: &TestVector,
    opts: &SdeOptions,
    trials: usize,
    seed: u64,
) -> Result<SdeComparison> {
    let n = h0.dim();
    let sd0 = decompose(h0)?;
    let indices: Vec<usize> = (2..=n).collect();
    let x0 = raw_overlaps(&sd0, &q.coords, &indices)?;
    let lam0: Vec<f64> = sd0.eigenvalues()[1..].to_vec();
    let u2_0 = sd0.eigenvector(2)?.to_vec();
    let root_n = (n as f64).sqrt();

    let mut sde = Vec::with_capacity(trials);
    let mut aborted = 0;
    for trial in 0..trials {
        let s = stream_seed(seed, 2 * trial as u64);
        match simulate_overlap_sde(&x0, &lam0, n, opts, s) {
            Ok(traj) => sde.push(traj.final_overlaps()[0]),
            Err(LabError::GapCollapse { time, .. }) if time > 0.0 => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    let mut exact = Vec::with_capacity(trials);
    for trial in 0..trials {
        let s = stream_seed(seed, 2 * trial as u64 + 1);
        let ht = evolve_exact(h0, opts.t_max, s)?;
        let sd = decompose(&ht)?;
        let u2 = sd.eigenvector(2)?;
        let sign = if u2.iter().zip(&u2_0).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
        exact.push(sign * root_n * u2.iter().zip(&q.coords).map(|(a, b)| a * b).sum::<f64>());
    }
    Ok(SdeComparison { sde, exact, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_centered_adjacency, sample_constrained_goe};
    use crate::graph::sample_regular_graph;

    #[test]
    fn coordinate_difference_at_four() {
        let q = make_test_vector(TestVectorKind::CoordinateDifference, 4, 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(q.coords, vec![h, -h, 0.0, 0.0]);
        assert!(make_test_vector(TestVectorKind::RandomOrthogonal, 1, 0).is_err());
    }

    #[test]
    fn every_kind_is_unit_and_centred() {
        for kind in TestVectorKind::ALL {
            for n in [2usize, 3, 16, 257] {
                let q = make_test_vector(kind, n, 99).unwrap();
                let norm = q.coords.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
                assert!(q.coords.iter().sum::<f64>().abs() < 1e-12 * (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn indicator_set_size_is_floor_power() {
        assert_eq!(indicator_set_size(16), 8);
        assert_eq!(indicator_set_size(81), 27);
        assert_eq!(indicator_set_size(1000), 177);
        assert_eq!(random_indicator_set(1000, 5).len(), 177);
    }

    #[test]
    fn full_overlaps_satisfy_parseval_and_self_test() {
        let h = build_centered_adjacency(&sample_regular_graph(80, 3, 3).unwrap()).unwrap();
        let sd = decompose(&h).unwrap();
        let q = make_test_vector(TestVectorKind::RandomOrthogonal, 80, 4).unwrap();
        let all: Vec<usize> = (1..=80).collect();
        let s = compute_overlaps(&sd, &q, &all, 7).unwrap();
        assert!(s.constraint_index_flagged);
        assert_eq!(s.values[0], 0.0);
        let total: f64 = s.values.iter().map(|x| x * x).sum();
        assert!((total - 80.0).abs() < 1e-6 * 80.0);

        let u2 = TestVector { coords: sd.eigenvector(2).unwrap().to_vec(), kind: TestVectorKind::RandomOrthogonal };
        let s = compute_overlaps(&sd, &u2, &all[1..], 1).unwrap();
        assert!((s.values[0].abs() - 80f64.sqrt()).abs() < 1e-9);
        assert!(s.values[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn constant_samples_have_zero_errors() {
        let m = moments_of(&[1.0; 150]).unwrap();
        assert_eq!((m.mean, m.second, m.fourth), (1.0, 1.0, 1.0));
        assert_eq!((m.mean_se, m.second_se, m.fourth_se), (0.0, 0.0, 0.0));
        assert!(moments_of(&[1.0; 99]).is_err());
    }

    #[test]
    fn decorrelation_examples() {
        let mut rng = rng_from_seed(11);
        let a: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let c = product_mean(&a, &b).unwrap();
        assert!(c.value.abs() <= 3.0 * c.std_error);
        let signs: Vec<f64> = (0..200).map(|k| if k % 3 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(product_mean(&signs, &signs).unwrap().value, 1.0);
        let sample = |i: usize| OverlapSample {
            indices: vec![2, 3],
            values: vec![a[i], b[i]],
            test_vector_id: "x".into(),
            seed: i as u64,
            constraint_index_flagged: false,
        };
        let samples: Vec<_> = (0..200).map(sample).collect();
        assert!(estimate_decorrelation(&samples, 2, 2).is_err());
        assert!(estimate_decorrelation(&samples, 2, 3).is_ok());
    }

    #[test]
    fn joint_covariance_reduces_to_second_moment() {
        let mut rng = rng_from_seed(12);
        let xs: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let joint = JointOverlapMatrix::new(1, 1, xs.iter().map(|&x| vec![x]).collect()).unwrap();
        let cov = joint_covariance(&joint).unwrap();
        let m = moments_of(&xs).unwrap();
        assert!((cov.matrix[0][0] - m.second).abs() < 1e-12);
        assert!((cov.deviation_norm - (m.second - 1.0).abs()).abs() < 1e-12);
        assert!(JointOverlapMatrix::new(2, 1, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn coupled_columns_are_rank_deficient() {
        let mut rng = rng_from_seed(13);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                vec![x, x]
            })
            .collect();
        let cov = joint_covariance(&JointOverlapMatrix::new(2, 1, rows).unwrap()).unwrap();
        assert!(cov.rank_deficient);
    }

    #[test]
    fn delocalisation_examples() {
        let u = vec![0.25; 16];
        let d = vector_delocalization(&u, &(0..16).collect::<Vec<_>>()).unwrap();
        assert_eq!(d.sup_norm, 0.25);
        assert!(d.mass_deviation.abs() < 1e-15);
    }

    #[test]
    fn zero_noise_stated_form_decays() {
        let lam = [1.5, 0.5, -0.5, -1.5];
        let x = [1.0, -0.5, 2.0, 0.25];
        let opts = SdeOptions { t_max: 0.2, n_steps: 2000, form: SdeForm::Stated, noise: false, record_every: 100 };
        let traj = simulate_overlap_sde(&x, &lam, 5, &opts, 1).unwrap();
        let decay = (-0.1f64).exp();
        for (got, x0) in traj.final_overlaps().iter().zip(x) {
            assert!((got - x0 * decay).abs() < 1e-4 * x0.abs());
        }
        assert_eq!(traj.times.len(), 21);
    }

    #[test]
    fn sde_rejects_close_initial_gaps() {
        let opts = SdeOptions { t_max: 0.05, n_steps: 5000, form: SdeForm::MatrixFlow, noise: true, record_every: 1 };
        let r = simulate_overlap_sde(&[1.0, 1.0], &[0.0, -1e-4], 100, &opts, 1);
        assert!(matches!(r, Err(LabError::GapCollapse { .. })));
    }

    #[test]
    fn short_time_variance_matches_quadratic_variation() {
        // Widely separated eigenvalues: over a short horizon the variance of
        // X_1 grows like Σ_j (X_j - X_1)^2 / (λ_1 - λ_j)^2 · t.
        let lam = [30.0, 10.0, -10.0, -30.0];
        let x = [0.5, 1.5, -1.0, 2.0];
        let t = 1e-3;
        let opts = SdeOptions { t_max: t, n_steps: 10, form: SdeForm::Stated, noise: true, record_every: 10 };
        let finals: Vec<f64> = (0..20_000)
            .map(|s| simulate_overlap_sde(&x, &lam, 4, &opts, s).unwrap().final_overlaps()[0])
            .collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let predicted: f64 = (1..4).map(|j| (x[j] - x[0]).powi(2) / (lam[0] - lam[j]).powi(2)).sum::<f64>() * t;
        let se = predicted * (2.0 / n).sqrt();
        assert!((var - predicted).abs() < 5.0 * se, "{var} vs {predicted}");
    }

    #[test]
    fn matrix_flow_preserves_norm_in_expectation() {
        // Σ X_i^2 = N is conserved by the exact dynamics; the Itô drift makes
        // it a martingale for the discretisation up to O(dt).
        let w = sample_constrained_goe(12, 3).unwrap();
        let sd = decompose(&w).unwrap();
        let q = make_test_vector(TestVectorKind::CoordinateDifference, 12, 0).unwrap();
        let idx: Vec<usize> = (2..=12).collect();
        let x0 = raw_overlaps(&sd, &q.coords, &idx).unwrap();
        let lam0 = sd.eigenvalues()[1..].to_vec();
        let opts = SdeOptions { t_max: 0.01, n_steps: 200, form: SdeForm::MatrixFlow, noise: true, record_every: 200 };
        let mut total = 0.0;
        let mut ok = 0;
        for s in 0..200 {
            if let Ok(tr) = simulate_overlap_sde(&x0, &lam0, 12, &opts, s) {
                total += tr.final_overlaps().iter().map(|v| v * v).sum::<f64>();
                ok += 1;
            }
        }
        let mean = total / ok as f64;
        assert!((mean - 12.0).abs() < 0.3, "{mean}");
    }
}
