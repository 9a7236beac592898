//! Centered matrices, the constrained GOE, and constrained Dyson Brownian
//! motion (CDBM).
//!
//! The constraint space is the set of real symmetric matrices `M` with
//! `M e = 0`, where `e` is the all-ones vector. Everything here lives in
//! that space; `P = I - e e^T / N` is the orthogonal projector onto `e^⊥`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, LabError, Result};
use crate::graph::{audit_regularity, RegularGraph};
use crate::rng::{rng_from_seed, LabRng};

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(invalid(format!("expected {} entries for a {dim}x{dim} matrix, got {}", dim * dim, data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Writes `value` at `(i, j)` and `(j, i)`.
    pub fn set_symmetric(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// First `(i, j)` with `i < j` where the entry differs from its mirror.
    pub fn asymmetry(&self) -> Option<(usize, usize, f64)> {
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if a != b {
                    return Some((i, j, (a - b).abs()));
                }
            }
        }
        None
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn max_abs_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `a * self + b * other`, entrywise.
    pub fn linear_combination(&self, a: f64, other: &SquareMatrix, b: f64) -> SquareMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        SquareMatrix { dim: self.dim, data }
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    /// Text dump: the dimension on the first line, then one line per row
    /// with 17 significant digits per entry.
    pub fn to_dump(&self) -> String {
        let mut out = String::with_capacity(24 * self.dim * self.dim + 16);
        let _ = writeln!(out, "{}", self.dim);
        for i in 0..self.dim {
            let row = self.row(i);
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let dim: usize = tokens
            .next()
            .ok_or_else(|| LabError::Parse("empty matrix dump".into()))?
            .parse()
            .map_err(|e| LabError::Parse(format!("bad dimension header: {e}")))?;
        let data = tokens
            .map(|t| t.parse::<f64>().map_err(|e| LabError::Parse(format!("bad entry `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_row_major(dim, data)
    }
}

/// Symmetric matrix with the all-ones vector in its kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix(SquareMatrix);

impl CenteredMatrix {
    /// Row-sum tolerance: `1e-10 * dim`.
    pub fn row_sum_tolerance(dim: usize) -> f64 {
        1e-10 * dim as f64
    }

    /// Validates exact symmetry and the row-sum constraint.
    pub fn new(m: SquareMatrix) -> Result<Self> {
        if let Some((row, col, gap)) = m.asymmetry() {
            return Err(LabError::NotSymmetric { row, col, gap });
        }
        let max_row_sum = m.max_abs_row_sum();
        let tolerance = Self::row_sum_tolerance(m.dim());
        if max_row_sum.is_nan() || max_row_sum > tolerance {
            return Err(LabError::ConstraintViolated { max_row_sum, tolerance });
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// `tr(H^2) / N`.
    pub fn trace_moment_2(&self) -> f64 {
        self.0.data.iter().map(|x| x * x).sum::<f64>() / self.dim() as f64
    }
}

/// `H = A / sqrt(d-1) - d / sqrt(d-1) * e e^T / N`.
pub fn build_centered_adjacency(g: &RegularGraph) -> Result<CenteredMatrix> {
    check_graph(g)?;
    let n = g.n_vertices();
    let d = g.degree() as f64;
    let scale = 1.0 / (d - 1.0).sqrt();
    let shift = d * scale / n as f64;
    let mut m = SquareMatrix::from_fn(n, |_, _| -shift);
    for &(u, v) in g.edges() {
        m.set_symmetric(u, v, scale - shift);
    }
    // Row sums are d*scale - n*shift = 0 up to rounding.
    CenteredMatrix::new(m)
}

fn check_graph(g: &RegularGraph) -> Result<()> {
    if g.degree() < 3 {
        return Err(invalid(format!("degree must be at least 3, got {}", g.degree())));
    }
    if !audit_regularity(g) {
        return Err(invalid("graph fails the regularity audit"));
    }
    Ok(())
}

/// `P M P` for symmetric `M`, computed in O(N^2) from row sums.
pub fn project_to_constraint(m: &SquareMatrix) -> Result<CenteredMatrix> {
    if let Some((row, col, gap)) = m.asymmetry() {
        return Err(LabError::NotSymmetric { row, col, gap });
    }
    Ok(project_symmetric_unchecked(m.clone()))
}

fn project_symmetric_unchecked(mut m: SquareMatrix) -> CenteredMatrix {
    let n = m.dim;
    let nf = n as f64;
    let r = m.row_sums();
    let total: f64 = r.iter().sum();
    let c = total / (nf * nf);
    for i in 0..n {
        for j in i..n {
            let v = m.get(i, j) - r[i] / nf - r[j] / nf + c;
            m.set_symmetric(i, j, v);
        }
    }
    CenteredMatrix(m)
}

/// Standard GOE sample: off-diagonal variance `1/N`, diagonal `2/N`.
pub fn sample_goe(n: usize, rng: &mut LabRng) -> SquareMatrix {
    let off = (1.0 / n as f64).sqrt();
    let diag = (2.0 / n as f64).sqrt();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        m.data[i * n + i] = diag * z;
        for j in i + 1..n {
            let z: f64 = rng.sample(StandardNormal);
            m.set_symmetric(i, j, off * z);
        }
    }
    m
}

/// Constrained GOE `W = P G P`.
///
/// Entry covariance:
/// `E[W_ij W_kl] = (δ_ik δ_jl + δ_il δ_jk - (δ_ik + δ_jl + δ_il + δ_jk)/N + 2/N^2) / N`.
pub fn sample_constrained_goe(n: usize, seed: u64) -> Result<CenteredMatrix> {
    if n < 2 {
        return Err(invalid(format!("constrained GOE needs n >= 2, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    Ok(sample_constrained_goe_with(n, &mut rng))
}

pub fn sample_constrained_goe_with(n: usize, rng: &mut LabRng) -> CenteredMatrix {
    project_symmetric_unchecked(sample_goe(n, rng))
}

/// Closed-form second moment `E[W_ij W_kl]` of the constrained GOE.
pub fn constrained_goe_covariance(n: usize, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let nf = n as f64;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)
        - (delta(i, k) + delta(j, l) + delta(i, l) + delta(j, k)) / nf
        + 2.0 / (nf * nf))
        / nf
}

/// `(e^{-t/2}, sqrt(1 - e^{-t}))`, the coefficients of the exact OU solution.
pub fn ou_coefficients(t: f64) -> (f64, f64) {
    ((-0.5 * t).exp(), (-(-t).exp_m1()).sqrt())
}

/// The critical time `N^{-1/3 + ε}`.
pub fn critical_time(n: usize, epsilon: f64) -> f64 {
    (n as f64).powf(-1.0 / 3.0 + epsilon)
}

/// One exact sample of the CDBM at time `t`:
/// `H_t = e^{-t/2} H_0 + sqrt(1 - e^{-t}) W`.
pub fn evolve_exact(h0: &CenteredMatrix, t: f64, seed: u64) -> Result<CenteredMatrix> {
    let mut rng = rng_from_seed(seed);
    evolve_exact_with(h0, t, &mut rng)
}

pub fn evolve_exact_with(h0: &CenteredMatrix, t: f64, rng: &mut LabRng) -> Result<CenteredMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("evolution time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(h0.clone());
    }
    let (decay, diffusion) = ou_coefficients(t);
    let w = sample_constrained_goe_with(h0.dim(), rng);
    Ok(CenteredMatrix(h0.0.linear_combination(decay, &w.0, diffusion)))
}

/// `R = H_t - (H_0 - t/2 H_0 + sqrt(t) W)` for the exact solution built
/// from the same `W`: the remainder of the first-order expansion.
pub fn decomposition_remainder(h0: &CenteredMatrix, w: &CenteredMatrix, t: f64) -> SquareMatrix {
    let (decay, diffusion) = ou_coefficients(t);
    h0.0.linear_combination(decay - 1.0 + 0.5 * t, &w.0, diffusion - t.sqrt())
}

/// A recorded CDBM trajectory.
#[derive(Debug, Clone)]
pub struct CdbmPath {
    pub times: Vec<f64>,
    pub states: Vec<CenteredMatrix>,
    pub seed: u64,
}

impl CdbmPath {
    pub fn final_state(&self) -> &CenteredMatrix {
        self.states.last().expect("a path always holds its initial state")
    }
}

/// Euler–Maruyama for `dH = -H/2 dt + N^{-1/2} dW` with constrained noise,
/// recording every step.
pub fn evolve_path(h0: &CenteredMatrix, t_max: f64, n_steps: usize, seed: u64) -> Result<CdbmPath> {
    evolve_path_recorded(h0, t_max, n_steps, 1, seed)
}

/// As [`evolve_path`], but keeps only every `record_every`-th state (the
/// initial and final states are always kept).
pub fn evolve_path_recorded(
    h0: &CenteredMatrix,
    t_max: f64,
    n_steps: usize,
    record_every: usize,
    seed: u64,
) -> Result<CdbmPath> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(invalid(format!("t_max must be positive, got {t_max}")));
    }
    if n_steps == 0 || record_every == 0 {
        return Err(invalid("n_steps and record_every must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let dt = t_max / n_steps as f64;
    let decay = 1.0 - 0.5 * dt;
    let noise = dt.sqrt();
    let mut times = vec![0.0];
    let mut states = vec![h0.clone()];
    let mut current = h0.0.clone();
    for step in 1..=n_steps {
        let w = sample_constrained_goe_with(h0.dim(), &mut rng);
        current = current.linear_combination(decay, &w.0, noise);
        if step % record_every == 0 || step == n_steps {
            times.push(step as f64 * dt);
            states.push(CenteredMatrix(current.clone()));
        }
    }
    Ok(CdbmPath { times, states, seed })
}
