//! Distances to the normal law, smoothed indicators, cumulants and rate fits.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, LabError, Result};
use crate::overlap::JointOverlapMatrix;
use crate::rng::{rng_from_seed, stream_seed, tags};

/// Standard normal distribution function, via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Sorted samples of an empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfSummary {
    sorted: Vec<f64>,
}

impl EcdfSummary {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(LabError::TooFewSamples { needed: 1, got: 0 });
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(invalid("NaN among ECDF samples"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `F_n(x) = #{x_i ≤ x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.len() as f64
    }

    /// `sup_x |F_n(x) - F(x)|` for a continuous `F`, evaluated at the jumps.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    }
}

pub fn ks_distance_to_normal(e: &EcdfSummary) -> f64 {
    e.ks_distance(normal_cdf)
}

/// Outcome of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsTest {
    pub fn rejected_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2 j^2 λ^2}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form, accurate for small arguments.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * (y + y.powi(9) + y.powi(25) + y.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        (2.0 * (x - x.powi(4) + x.powi(9))).clamp(0.0, 1.0)
    }
}

/// Two-sample KS test with the asymptotic p-value
/// `Q((√n_e + 0.12 + 0.11/√n_e) D)`, `n_e = n m / (n + m)`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsTest> {
    let ea = EcdfSummary::new(a.to_vec())?;
    let eb = EcdfSummary::new(b.to_vec())?;
    let (xa, xb) = (ea.sorted_samples(), eb.sorted_samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(KsTest { statistic: d, p_value: kolmogorov_survival((en + 0.12 + 0.11 / en) * d) })
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Smoothed indicator of `A = (-∞, x]`: the convolution of the indicator
/// of `A_δ = (-∞, x + δ)` with the bump `φ_δ(u) = φ(u/δ)/δ`,
/// `φ(u) ∝ exp(-1/(1-u^2))` on `(-1, 1)`.
///
/// Equals 1 for `y ≤ x`, 0 for `y ≥ x + 2δ`, and lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    delta: f64,
    boundary: f64,
    bump_mass: f64,
}

/// Quadrature tolerance used for the bump integrals.
const BUMP_TOLERANCE: f64 = 1e-15;

pub fn build_mollifier(x: f64, delta: f64) -> Result<Mollifier> {
    if !(delta > 0.0) || !delta.is_finite() || !x.is_finite() {
        return Err(invalid(format!("mollifier needs finite x and delta > 0, got x = {x}, delta = {delta}")));
    }
    let half = adaptive_simpson(&bump, 0.0, 1.0, BUMP_TOLERANCE);
    Ok(Mollifier { delta, boundary: x, bump_mass: 2.0 * half })
}

impl Mollifier {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    /// Normalised bump `φ(u)`.
    pub fn bump(&self, u: f64) -> f64 {
        bump(u) / self.bump_mass
    }

    /// `Ψ(v) = ∫_{-1}^{v} φ`.
    pub fn bump_cdf(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let partial = adaptive_simpson(&bump, 0.0, v.abs(), BUMP_TOLERANCE) / self.bump_mass;
        0.5 + partial.copysign(v)
    }

    /// `f_δ(y) = 1 - Ψ((y - x)/δ - 1)`.
    pub fn eval(&self, y: f64) -> f64 {
        1.0 - self.bump_cdf((y - self.boundary) / self.delta - 1.0)
    }
}

/// Difference of means with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanGap {
    pub value: f64,
    pub std_error: f64,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// `E[f_δ(X^a)] - E[f_δ(X^b)]` over two sample sets.
pub fn smoothed_expectation_gap(samples_a: &[f64], samples_b: &[f64], mollifier: &Mollifier) -> Result<MeanGap> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(LabError::TooFewSamples { needed: 1, got: 0 });
    }
    let fa: Vec<f64> = samples_a.iter().map(|&x| mollifier.eval(x)).collect();
    let fb: Vec<f64> = samples_b.iter().map(|&x| mollifier.eval(x)).collect();
    let (ma, va) = mean_and_var(&fa);
    let (mb, vb) = mean_and_var(&fb);
    Ok(MeanGap {
        value: ma - mb,
        std_error: (va / fa.len() as f64 + vb / fb.len() as f64).sqrt(),
    })
}

/// Power sums `S_1..S_4` of already-centered data.
#[derive(Debug, Clone, Copy, Default)]
struct PowerSums([f64; 4]);

impl PowerSums {
    fn of(xs: &[f64]) -> Self {
        let mut s = [0.0; 4];
        for &x in xs {
            let x2 = x * x;
            s[0] += x;
            s[1] += x2;
            s[2] += x2 * x;
            s[3] += x2 * x2;
        }
        Self(s)
    }

    fn without(&self, x: f64) -> Self {
        let x2 = x * x;
        Self([self.0[0] - x, self.0[1] - x2, self.0[2] - x2 * x, self.0[3] - x2 * x2])
    }

    /// k-statistics `k_2, k_3, k_4` for `n` samples.
    fn k_statistics(&self, n: f64) -> [f64; 3] {
        let [s1, s2, s3, s4] = self.0;
        let k2 = (n * s2 - s1 * s1) / (n * (n - 1.0));
        let k3 = (2.0 * s1.powi(3) - 3.0 * n * s1 * s2 + n * n * s3) / (n * (n - 1.0) * (n - 2.0));
        let k4 = (-6.0 * s1.powi(4) + 12.0 * n * s1 * s1 * s2 - 3.0 * n * (n - 1.0) * s2 * s2
            - 4.0 * n * (n + 1.0) * s1 * s3
            + n * n * (n + 1.0) * s4)
            / (n * (n - 1.0) * (n - 2.0) * (n - 3.0));
        [k2, k3, k4]
    }
}

/// Unbiased cumulant estimates `κ_1..κ_4` with delete-one jackknife errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    pub values: [f64; 4],
    pub std_errors: [f64; 4],
    pub n: usize,
}

/// Minimum sample count for fourth-order cumulants.
pub const MIN_CUMULANT_SAMPLES: usize = 1000;

pub fn estimate_cumulants(samples: &[f64]) -> Result<Cumulants> {
    if samples.len() < MIN_CUMULANT_SAMPLES {
        return Err(LabError::TooFewSamples { needed: MIN_CUMULANT_SAMPLES, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let sums = PowerSums::of(&centered);
    let [k2, k3, k4] = sums.k_statistics(n);
    let values = [mean, k2, k3, k4];

    let mut acc = [0.0f64; 4];
    let mut acc2 = [0.0f64; 4];
    for &x in &centered {
        let left = sums.without(x);
        let [j2, j3, j4] = left.k_statistics(n - 1.0);
        let j1 = mean + left.0[0] / (n - 1.0);
        for (k, v) in [j1, j2, j3, j4].into_iter().enumerate() {
            acc[k] += v;
            acc2[k] += v * v;
        }
    }
    let mut std_errors = [0.0; 4];
    for k in 0..4 {
        let m = acc[k] / n;
        let ss = (acc2[k] - n * m * m).max(0.0);
        std_errors[k] = ((n - 1.0) / n * ss).sqrt();
    }
    Ok(Cumulants { values, std_errors, n: samples.len() })
}

/// Least-squares fit of `log y = exponent · log N + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(LabError::TooFewSamples { needed: 3, got: points.len() });
    }
    if let Some(&(n, y)) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(invalid(format!("rate fit needs positive N and statistic, got ({n}, {y})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, y)| (n.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs at least two distinct N"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let sse: f64 = logs.iter().map(|p| (p.1 - intercept - exponent * p.0).powi(2)).sum();
    Ok(RateFit { exponent, intercept, residual: (sse / k).sqrt() })
}

/// Maximum KS distance to `Φ` of the projections `⟨v, Z⟩` over the given
/// unit directions.
pub fn projected_ks_distance(joint: &JointOverlapMatrix, directions: &[Vec<f64>]) -> Result<f64> {
    let width = joint.width();
    let mut worst = 0.0f64;
    for v in directions {
        if v.len() != width {
            return Err(invalid(format!("projection has dimension {}, expected {width}", v.len())));
        }
        let proj: Vec<f64> = joint
            .rows()
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        worst = worst.max(ks_distance_to_normal(&EcdfSummary::new(proj)?));
    }
    Ok(worst)
}

/// Random-projection proxy for the convex-set distance between the law of
/// `Z_N` and the standard Gaussian: the largest one-dimensional KS distance
/// over `n_projections` uniformly random unit directions.
///
/// This is a lower-bound proxy, not the convex-set distance itself.
pub fn multivariate_gaussian_distance(joint: &JointOverlapMatrix, n_projections: usize, seed: u64) -> Result<f64> {
    if joint.trials() < 100 {
        return Err(LabError::TooFewSamples { needed: 100, got: joint.trials() });
    }
    let mut rng = rng_from_seed(stream_seed(seed, tags::PROJECTIONS));
    let width = joint.width();
    let directions: Vec<Vec<f64>> = (0..n_projections)
        .map(|_| {
            let g: Vec<f64> = (0..width).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    projected_ks_distance(joint, &directions)
}
