//! Matrix-free symmetric eigensolvers.
//!
//! Lanczos with full reorthogonalisation, restricted to the complement of
//! the all-ones vector. Two uses: the top few eigenpairs of a centered
//! matrix (edge eigenvectors), and the Gauss quadrature of the spectral
//! measure of a fixed test vector (resolvent quadratic forms).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::CenteredMatrix;
use crate::error::{invalid, LabError, Result};
use crate::graph::RegularGraph;
use crate::rng::rng_from_seed;

/// A real symmetric linear map on `R^dim`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for CenteredMatrix {
    fn dim(&self) -> usize {
        CenteredMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix().matvec(x, y);
    }
}

/// The centered adjacency of a regular graph, applied in O(N d).
#[derive(Debug, Clone)]
pub struct GraphOperator {
    adjacency: Vec<Vec<usize>>,
    scale: f64,
    shift: f64,
}

impl GraphOperator {
    pub fn new(g: &RegularGraph) -> Self {
        let d = g.degree() as f64;
        let scale = 1.0 / (d - 1.0).sqrt();
        Self {
            adjacency: g.adjacency(),
            scale,
            shift: d * scale / g.n_vertices() as f64,
        }
    }
}

impl SymmetricOperator for GraphOperator {
    fn dim(&self) -> usize {
        self.adjacency.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let total: f64 = x.iter().sum();
        let rank_one = self.shift * total;
        for (yi, nbrs) in y.iter_mut().zip(&self.adjacency) {
            let s: f64 = nbrs.iter().map(|&j| x[j]).sum();
            *yi = self.scale * s - rank_one;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL, tracking
/// selected rows of the eigenvector matrix.
///
/// `diag` has length `m`, `off` has length `m - 1`. Each entry of `rows`
/// names a row index `r`; on return `tracked[k][j]` is the `r`-th component
/// of the eigenvector belonging to `values[j]`. Values are not sorted.
pub fn tridiagonal_ql(diag: &[f64], off: &[f64], rows: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut row = vec![0.0; n];
            row[r] = 1.0;
            row
        })
        .collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                return Err(LabError::EigenFailure {
                    reason: "tridiagonal QL exceeded 200 sweeps".into(),
                    dump: format!("diag = {diag:?}\noff = {off:?}"),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Solves `(T - shift) x = b` for tridiagonal `T` by Gaussian elimination
/// with partial pivoting. Zero pivots are replaced by a tiny value, which is
/// what inverse iteration wants.
fn tridiagonal_shifted_solve(diag: &[f64], off: &[f64], shift: f64, b: &mut [f64]) {
    let n = diag.len();
    if n == 1 {
        let p = diag[0] - shift;
        b[0] /= if p.abs() < 1e-300 { 1e-300 } else { p };
        return;
    }
    let tiny = 1e-14 * (diag.iter().chain(off).fold(0.0f64, |m, x| m.max(x.abs())) + shift.abs()).max(1e-300);
    // Row k after elimination: u0[k] x_k + u1[k] x_{k+1} + u2[k] x_{k+2}.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut cur_d = diag[0] - shift;
    let mut cur_u = off[0];
    for k in 0..n - 1 {
        let sub = off[k];
        let next_d = diag[k + 1] - shift;
        let next_u = if k + 1 < n - 1 { off[k + 1] } else { 0.0 };
        if cur_d.abs() >= sub.abs() {
            let piv = if cur_d.abs() < tiny { tiny.copysign(cur_d) } else { cur_d };
            let mult = sub / piv;
            u0[k] = piv;
            u1[k] = cur_u;
            u2[k] = 0.0;
            b[k + 1] -= mult * b[k];
            cur_d = next_d - mult * cur_u;
            cur_u = next_u;
        } else {
            let mult = cur_d / sub;
            u0[k] = sub;
            u1[k] = next_d;
            u2[k] = next_u;
            b.swap(k, k + 1);
            b[k + 1] -= mult * b[k];
            cur_d = cur_u - mult * next_d;
            cur_u = -mult * next_u;
        }
    }
    u0[n - 1] = if cur_d.abs() < tiny { tiny.copysign(cur_d) } else { cur_d };
    for k in (0..n).rev() {
        let mut v = b[k];
        if k + 1 < n {
            v -= u1[k] * b[k + 1];
        }
        if k + 2 < n {
            v -= u2[k] * b[k + 2];
        }
        b[k] = v / u0[k];
    }
}

/// Eigenvector of the tridiagonal matrix for the (already accurate)
/// eigenvalue `value`, orthogonalised against `previous`.
fn tridiagonal_eigenvector(diag: &[f64], off: &[f64], value: f64, previous: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let n = diag.len();
    let mut rng = rng_from_seed(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let scale = diag.iter().chain(off).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let shift = value + 1e-13 * scale;
    for _ in 0..3 {
        tridiagonal_shifted_solve(diag, off, shift, &mut x);
        for p in previous {
            let c = dot(&x, p);
            axpy(-c, p, &mut x);
        }
        let nx = norm(&x);
        for v in x.iter_mut() {
            *v /= nx;
        }
    }
    x
}

/// Controls for [`top_eigenpairs`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance `‖A y - θ y‖` for every requested pair.
    pub tolerance: f64,
    /// Hard cap on the Krylov dimension (clamped to `dim - 1`).
    pub max_steps: usize,
    /// Convergence is checked every this many steps.
    pub check_every: usize,
    /// Seed of the random starting vector.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_steps: 3000, check_every: 20, seed: 0x5eed }
    }
}

/// The largest eigenpairs of an operator restricted to `e^⊥`, in
/// descending order of eigenvalue.
#[derive(Debug, Clone)]
pub struct TopEigenpairs {
    pub dim: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub steps: usize,
}

struct Krylov {
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    exhausted: bool,
}

impl Krylov {
    fn start(mut v: Vec<f64>) -> Result<Self> {
        remove_mean(&mut v);
        let nv = norm(&v);
        if !(nv > 0.0) {
            return Err(invalid("Lanczos start vector vanishes on the complement of e"));
        }
        v.iter_mut().for_each(|x| *x /= nv);
        Ok(Self { basis: vec![v], alpha: Vec::new(), beta: Vec::new(), exhausted: false })
    }

    fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// One Lanczos step with two passes of classical Gram–Schmidt.
    fn step(&mut self, op: &dyn SymmetricOperator, scratch: &mut Vec<f64>) {
        let j = self.alpha.len();
        let n = op.dim();
        scratch.resize(n, 0.0);
        op.apply(&self.basis[j], scratch);
        let a = dot(scratch, &self.basis[j]);
        axpy(-a, &self.basis[j], scratch);
        if j > 0 {
            axpy(-self.beta[j - 1], &self.basis[j - 1], scratch);
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.basis.iter().map(|v| dot(scratch, v)).collect();
            for (c, v) in coeffs.iter().zip(&self.basis) {
                axpy(-c, v, scratch);
            }
            remove_mean(scratch);
        }
        self.alpha.push(a);
        let b = norm(scratch);
        let limit = n - 1;
        if self.alpha.len() >= limit || b <= 1e-12 * (a.abs() + self.beta.last().copied().unwrap_or(0.0)).max(1e-300) {
            self.exhausted = true;
            return;
        }
        self.beta.push(b);
        self.basis.push(scratch.iter().map(|x| x / b).collect());
    }

    fn tridiagonal(&self) -> (&[f64], &[f64]) {
        let m = self.alpha.len();
        (&self.alpha, &self.beta[..m - 1])
    }
}

/// Largest `k` eigenpairs of `op` on the complement of the all-ones vector.
pub fn top_eigenpairs(op: &dyn SymmetricOperator, k: usize, opts: &LanczosOptions) -> Result<TopEigenpairs> {
    let n = op.dim();
    if n < 2 || k == 0 || k > n - 1 {
        return Err(invalid(format!("cannot extract {k} eigenpairs from a {n}-dimensional operator")));
    }
    let mut rng = rng_from_seed(opts.seed);
    let start: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut kry = Krylov::start(start)?;
    let max_steps = opts.max_steps.min(n - 1).max(k);
    let mut scratch = Vec::with_capacity(n);
    let check_every = opts.check_every.max(1);
    loop {
        kry.step(op, &mut scratch);
        let m = kry.steps();
        let at_check = m >= k + 2 && m % check_every == 0;
        if !(kry.exhausted || m >= max_steps || at_check) {
            continue;
        }
        let (diag, off) = kry.tridiagonal();
        let (values, last) = tridiagonal_ql(diag, off, &[m - 1])?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let beta_next = if kry.exhausted { 0.0 } else { kry.beta[m - 1] };
        let residuals: Vec<f64> = order[..k.min(m)].iter().map(|&j| (beta_next * last[0][j]).abs()).collect();
        let converged = m >= k && residuals.iter().all(|&r| r <= opts.tolerance);
        if !(converged || kry.exhausted || m >= max_steps) {
            continue;
        }
        if !converged && !kry.exhausted {
            return Err(LabError::EigenFailure {
                reason: format!(
                    "Lanczos did not converge in {m} steps (worst residual {:e})",
                    residuals.iter().fold(0.0f64, |a, &b| a.max(b))
                ),
                dump: String::from("(matrix-free operator; no dense dump)"),
            });
        }
        if m < k {
            return Err(invalid(format!("Krylov space exhausted at dimension {m} < {k}")));
        }
        let mut small: Vec<Vec<f64>> = Vec::with_capacity(k);
        for (idx, &j) in order[..k].iter().enumerate() {
            let s = tridiagonal_eigenvector(diag, off, values[j], &small, opts.seed ^ (idx as u64 + 1));
            small.push(s);
        }
        let vectors = small
            .iter()
            .map(|s| {
                let mut y = vec![0.0; n];
                for (c, v) in s.iter().zip(&kry.basis) {
                    axpy(*c, v, &mut y);
                }
                let ny = norm(&y);
                y.iter_mut().for_each(|x| *x /= ny);
                y
            })
            .collect();
        return Ok(TopEigenpairs {
            dim: n,
            values: order[..k].iter().map(|&j| values[j]).collect(),
            vectors,
            residuals,
            steps: m,
        });
    }
}

/// Discrete measure `Σ_i w_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    /// `Σ_i w_i / (x_i - z)`.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w / (Complex64::new(x, 0.0) - z))
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `[(T - z)^{-1}]_{11}` for the Jacobi matrix `T`, by backward continued fraction.
fn jacobi_resolvent_11(diag: &[f64], off: &[f64], z: Complex64) -> Complex64 {
    let m = diag.len();
    let mut f = Complex64::new(0.0, 0.0);
    for j in (0..m).rev() {
        let tail = if j + 1 < m { off[j] * off[j] * f } else { Complex64::new(0.0, 0.0) };
        f = 1.0 / (Complex64::new(diag[j], 0.0) - z - tail);
    }
    f
}

/// Gauss quadrature of the spectral measure of unit vector `q ⊥ e`,
/// grown until the Stieltjes transform at every probe point is stable to
/// relative `tolerance`, or the Krylov space is exhausted (then exact).
pub fn spectral_measure_of(
    op: &dyn SymmetricOperator,
    q: &[f64],
    probes: &[Complex64],
    tolerance: f64,
) -> Result<SpectralMeasure> {
    let n = op.dim();
    if q.len() != n {
        return Err(invalid("test vector dimension does not match operator"));
    }
    let mut kry = Krylov::start(q.to_vec())?;
    let mut scratch = Vec::with_capacity(n);
    let block = 10;
    let mut previous: Option<Vec<Complex64>> = None;
    loop {
        kry.step(op, &mut scratch);
        let m = kry.steps();
        if !kry.exhausted && m % block != 0 {
            continue;
        }
        let (diag, off) = kry.tridiagonal();
        let current: Vec<Complex64> = probes.iter().map(|&z| jacobi_resolvent_11(diag, off, z)).collect();
        let stable = previous.as_ref().is_some_and(|prev| {
            prev.iter().zip(&current).all(|(a, b)| (a - b).norm() <= tolerance * b.norm())
        });
        if stable || kry.exhausted {
            let (nodes, first) = tridiagonal_ql(diag, off, &[0])?;
            let weights = first[0].iter().map(|c| c * c).collect();
            return Ok(SpectralMeasure { nodes, weights });
        }
        previous = Some(current);
    }
}
