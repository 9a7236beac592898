//! Eigendecompositions in constraint-first order, the semicircle Stieltjes
//! transform, and the edge statistics built on them.
//!
//! Ordering: index 1 is the eigenpair whose vector overlaps `e/√N` most,
//! indices `2..=N` follow in descending eigenvalue order with ties broken by
//! the solver's (ascending) original index. All public indices are 1-based.

use num_complex::Complex64;

use crate::ensemble::CenteredMatrix;
use crate::error::{invalid, LabError, Result};
use crate::linalg::{self, LanczosOptions, SpectralMeasure, SymmetricOperator};

/// A point `E + iη` of the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexPoint {
    energy: f64,
    eta: f64,
}

impl ComplexPoint {
    pub fn new(energy: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() || !energy.is_finite() {
            return Err(invalid(format!("need finite E and eta > 0, got E = {energy}, eta = {eta}")));
        }
        Ok(Self { energy, eta })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.energy, self.eta)
    }
}

/// Stieltjes transform of the semicircle law: the root of
/// `m^2 + z m + 1 = 0` in the upper half plane.
pub fn m_sc(z: ComplexPoint) -> Complex64 {
    let z = z.as_complex();
    let s = (z - 2.0).sqrt() * (z + 2.0).sqrt();
    let m = -2.0 / (z + s);
    if m.im > 0.0 {
        m
    } else {
        1.0 / m
    }
}

/// Eigenpairs of a centered matrix in constraint-first order.
///
/// A decomposition is either complete (`len() == source_dim`) or holds only
/// the leading indices `1..=len()`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    source_dim: usize,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.source_dim
    }

    /// `λ_index`, 1-based.
    pub fn eigenvalue(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.eigenvalues[index - 1])
    }

    /// `u_index`, 1-based.
    pub fn eigenvector(&self, index: usize) -> Result<&[f64]> {
        self.check_index(index)?;
        Ok(&self.eigenvectors[index - 1])
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.len() {
            return Err(invalid(format!(
                "eigen index {index} outside the available range 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    fn require_complete(&self, what: &str) -> Result<()> {
        if !self.is_complete() {
            return Err(invalid(format!(
                "{what} needs the full spectrum, decomposition holds {} of {}",
                self.len(),
                self.source_dim
            )));
        }
        Ok(())
    }

    /// `Σ_i λ_i u_i u_i^T` as a row-major buffer.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.source_dim;
        let mut out = vec![0.0; n * n];
        for (lambda, u) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for i in 0..n {
                let a = lambda * u[i];
                for j in 0..n {
                    out[i * n + j] += a * u[j];
                }
            }
        }
        out
    }

    /// Spectral measure of `q`: nodes `λ_i`, weights `⟨q, u_i⟩^2`.
    pub fn spectral_measure(&self, q: &[f64]) -> Result<SpectralMeasure> {
        self.require_complete("a spectral measure")?;
        check_test_vector(q, self.source_dim)?;
        Ok(SpectralMeasure {
            nodes: self.eigenvalues.clone(),
            weights: self.eigenvectors.iter().map(|u| dot(u, q).powi(2)).collect(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_faer(m: &CenteredMatrix) -> faer::Mat<f64> {
    faer::Mat::<f64>::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
}

fn eigen_failure(m: &CenteredMatrix) -> LabError {
    LabError::EigenFailure {
        reason: "dense symmetric eigensolver reported no convergence".into(),
        dump: m.matrix().to_dump(),
    }
}

/// Paper-order permutation of solver output given in ascending order.
fn constraint_first_order(values: &[f64], pinned: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..values.len()).filter(|&k| k != pinned).collect();
    rest.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    std::iter::once(pinned).chain(rest).collect()
}

/// Full eigendecomposition with the constraint eigenpair pinned at index 1.
pub fn decompose(m: &CenteredMatrix) -> Result<SpectralDecomposition> {
    let n = m.dim();
    let eig = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| eigen_failure(m))?;
    let u = eig.U();
    let s = eig.S().column_vector();
    let values: Vec<f64> = (0..n).map(|k| s[k]).collect();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let pinned = (0..n)
        .map(|k| (k, ((0..n).map(|i| u[(i, k)]).sum::<f64>() * inv_sqrt_n).abs()))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    let mut vectors: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| u[(i, k)]).collect()).collect();
    split_constraint_direction(&values, &mut vectors, pinned);
    let order = constraint_first_order(&values, pinned);
    Ok(SpectralDecomposition {
        eigenvalues: order.iter().map(|&k| values[k]).collect(),
        eigenvectors: order.iter().map(|&k| std::mem::take(&mut vectors[k])).collect(),
        source_dim: n,
    })
}

/// When the constraint eigenvalue is degenerate the solver may return any
/// basis of its eigenspace. Rotates that basis so the pinned vector is
/// exactly `e/√N` and the rest are orthonormal on `e^⊥`.
fn split_constraint_direction(values: &[f64], vectors: &mut [Vec<f64>], pinned: usize) {
    let n = vectors.len();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let cluster: Vec<usize> =
        (0..n).filter(|&k| k != pinned && (values[k] - values[pinned]).abs() <= 1e-8 * scale).collect();
    let unit = 1.0 / (n as f64).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![vec![unit; n]];
    // Candidates from the whole cluster; the weakest after projection is
    // the one that carried the constraint direction.
    let mut candidates: Vec<Vec<f64>> =
        cluster.iter().chain(std::iter::once(&pinned)).map(|&k| vectors[k].clone()).collect();
    while basis.len() <= cluster.len() {
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in candidates.iter_mut().enumerate() {
            for b in &basis {
                let p = dot(v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let norm = dot(v, v).sqrt();
            if best.is_none_or(|(_, m)| norm > m) {
                best = Some((c, norm));
            }
        }
        let (c, norm) = best.expect("cluster candidates remain");
        let mut v = candidates.swap_remove(c);
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut basis = basis.into_iter();
    vectors[pinned] = basis.next().expect("constraint vector");
    for (&k, v) in cluster.iter().zip(basis) {
        vectors[k] = v;
    }
}

/// All eigenvalues in constraint-first order, without eigenvectors.
///
/// The constraint direction is identified by shifting it far above the
/// spectrum (`H + c e e^T / N`), so no eigenvector is needed to pin it.
pub fn decompose_eigenvalues(m: &CenteredMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    let shift = 4.0 + m.matrix().frobenius_norm();
    let nf = n as f64;
    let shifted = faer::Mat::<f64>::from_fn(n, n, |i, j| m.get(i, j) + shift / nf);
    let values = shifted
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| eigen_failure(m))?;
    let pinned = n - 1;
    let mut ordered: Vec<f64> = constraint_first_order(&values, pinned).iter().map(|&k| values[k]).collect();
    ordered[0] -= shift;
    Ok(ordered)
}

/// The constraint pair `(0, e/√N)` followed by the `k` largest eigenpairs
/// on `e^⊥`, computed matrix-free by Lanczos.
pub fn decompose_top(op: &dyn SymmetricOperator, k: usize, opts: &LanczosOptions) -> Result<SpectralDecomposition> {
    let n = op.dim();
    let top = linalg::top_eigenpairs(op, k, opts)?;
    let unit = 1.0 / (n as f64).sqrt();
    let mut eigenvalues = Vec::with_capacity(k + 1);
    let mut eigenvectors = Vec::with_capacity(k + 1);
    eigenvalues.push(0.0);
    eigenvectors.push(vec![unit; n]);
    eigenvalues.extend(top.values);
    eigenvectors.extend(top.vectors);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors, source_dim: n })
}

/// Checks `‖q‖ = 1` within 1e-10 and `|⟨q, e⟩| ≤ 1e-10 √N`.
pub fn check_test_vector(q: &[f64], n: usize) -> Result<()> {
    if q.len() != n {
        return Err(invalid(format!("test vector has dimension {}, expected {n}", q.len())));
    }
    let norm = dot(q, q).sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("test vector is not unit: norm = {norm}")));
    }
    let along_e: f64 = q.iter().sum();
    if along_e.abs() > 1e-10 * (n as f64).sqrt() {
        return Err(invalid(format!("test vector is not orthogonal to e: <q, e> = {along_e:e}")));
    }
    Ok(())
}

/// `⟨q, (H - z)^{-1} q⟩` by the spectral sum.
pub fn resolvent_quadratic_form(d: &SpectralDecomposition, q: &[f64], z: ComplexPoint) -> Result<Complex64> {
    Ok(d.spectral_measure(q)?.stieltjes(z.as_complex()))
}

/// Spectral-parameter grid for the edge local law: energies with
/// `|E - 2| ≤ N^{-2/3+ε}` and `N^{-2/3} ≤ η ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLawGrid {
    pub energies: Vec<f64>,
    pub etas: Vec<f64>,
}

impl LocalLawGrid {
    /// Uniform energies across the edge window and geometric η from
    /// `N^{-2/3}` to 1.
    pub fn edge_window(n: usize, epsilon: f64, n_energies: usize, n_etas: usize) -> Result<Self> {
        if n_energies == 0 || n_etas == 0 {
            return Err(invalid("local-law grid must be non-empty"));
        }
        let nf = n as f64;
        let half_width = nf.powf(-2.0 / 3.0 + epsilon);
        let energies = if n_energies == 1 {
            vec![2.0]
        } else {
            (0..n_energies)
                .map(|k| 2.0 - half_width + 2.0 * half_width * k as f64 / (n_energies - 1) as f64)
                .collect()
        };
        let lo = nf.powf(-2.0 / 3.0);
        let etas = if n_etas == 1 {
            vec![1.0]
        } else {
            (0..n_etas)
                .map(|k| lo * (1.0 / lo).powf(k as f64 / (n_etas - 1) as f64))
                .collect()
        };
        Ok(Self { energies, etas })
    }

    /// Rejects grid points outside the edge regime, naming the constraint.
    pub fn validate(&self, n: usize, epsilon: f64) -> Result<()> {
        if self.energies.is_empty() || self.etas.is_empty() {
            return Err(invalid("local-law grid must be non-empty"));
        }
        let nf = n as f64;
        let slack = 1.0 + 1e-12;
        let half_width = nf.powf(-2.0 / 3.0 + epsilon);
        if let Some(e) = self.energies.iter().find(|e| !((**e - 2.0).abs() <= half_width * slack)) {
            return Err(LabError::Regime(format!(
                "|E - 2| <= N^(-2/3+eps) = {half_width:e} violated by E = {e}"
            )));
        }
        let eta_min = nf.powf(-2.0 / 3.0);
        if let Some(eta) = self.etas.iter().find(|h| !(**h >= eta_min / slack)) {
            return Err(LabError::Regime(format!("eta >= N^(-2/3) = {eta_min:e} violated by eta = {eta:e}")));
        }
        if let Some(eta) = self.etas.iter().find(|h| !(**h <= slack)) {
            return Err(LabError::Regime(format!("eta <= 1 violated by eta = {eta}")));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<ComplexPoint> {
        self.energies
            .iter()
            .flat_map(|&e| self.etas.iter().map(move |&h| ComplexPoint { energy: e, eta: h }))
            .collect()
    }
}

/// Deviation `|⟨q, G(z) q⟩ - m_sc(z)|` over a grid, with its supremum.
#[derive(Debug, Clone)]
pub struct LocalLawProfile {
    pub rows: Vec<(ComplexPoint, f64)>,
    pub supremum: f64,
}

/// Local-law profile of a known spectral measure of `q`.
pub fn local_law_profile_of_measure(
    measure: &SpectralMeasure,
    grid: &LocalLawGrid,
    n: usize,
    epsilon: f64,
) -> Result<LocalLawProfile> {
    grid.validate(n, epsilon)?;
    let rows: Vec<(ComplexPoint, f64)> = grid
        .points()
        .into_iter()
        .map(|z| (z, (measure.stieltjes(z.as_complex()) - m_sc(z)).norm()))
        .collect();
    let supremum = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    Ok(LocalLawProfile { rows, supremum })
}

pub fn local_law_deviation_profile(
    d: &SpectralDecomposition,
    q: &[f64],
    grid: &LocalLawGrid,
    epsilon: f64,
) -> Result<LocalLawProfile> {
    let measure = d.spectral_measure(q)?;
    local_law_profile_of_measure(&measure, grid, d.source_dim, epsilon)
}

/// Matrix-free variant: the spectral measure of `q` comes from Lanczos
/// Gauss quadrature, converged at every grid point to relative 1e-8.
pub fn local_law_deviation_profile_lanczos(
    op: &dyn SymmetricOperator,
    q: &[f64],
    grid: &LocalLawGrid,
    epsilon: f64,
) -> Result<LocalLawProfile> {
    let n = op.dim();
    grid.validate(n, epsilon)?;
    check_test_vector(q, n)?;
    let probes: Vec<Complex64> = grid.points().iter().map(ComplexPoint::as_complex).collect();
    let measure = linalg::spectral_measure_of(op, q, &probes, 1e-8)?;
    local_law_profile_of_measure(&measure, grid, n, epsilon)
}

/// `(k, 2 - λ_{k+1})` for `k = 1..=k_max`.
pub fn edge_spacing_profile(d: &SpectralDecomposition, k_max: usize) -> Result<Vec<(usize, f64)>> {
    if k_max == 0 || k_max > d.source_dim / 10 {
        return Err(invalid(format!(
            "k_max must lie in 1..=N/10 = {}, got {k_max}",
            d.source_dim / 10
        )));
    }
    (1..=k_max).map(|k| Ok((k, 2.0 - d.eigenvalue(k + 1)?))).collect()
}

/// `Σ_{j ≥ 2, j ≠ i} (λ_i - λ_j)^{-2}` over constraint-first ordered
/// eigenvalues. Gaps below 1e-12 yield [`LabError::DegenerateSpectrum`].
pub fn gap_sum_statistic(eigenvalues: &[f64], i: usize) -> Result<f64> {
    let n = eigenvalues.len();
    if i < 2 || i > n {
        return Err(invalid(format!("gap-sum index must lie in 2..={n}, got {i}")));
    }
    let li = eigenvalues[i - 1];
    let mut total = 0.0;
    for (j0, &lj) in eigenvalues.iter().enumerate().skip(1) {
        let j = j0 + 1;
        if j == i {
            continue;
        }
        let gap = (li - lj).abs();
        if gap < 1e-12 {
            return Err(LabError::DegenerateSpectrum { i, j, gap });
        }
        total += 1.0 / (gap * gap);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_centered_adjacency, sample_constrained_goe, SquareMatrix};
    use crate::graph::{sample_regular_graph, RegularGraph};

    #[test]
    fn k4_spectrum() {
        let h = build_centered_adjacency(&RegularGraph::complete(4)).unwrap();
        let d = decompose(&h).unwrap();
        assert!(d.eigenvalue(1).unwrap().abs() < 1e-12);
        for i in 2..=4 {
            assert!((d.eigenvalue(i).unwrap() + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let g = sample_regular_graph(60, 3, 5).unwrap();
        let h = build_centered_adjacency(&g).unwrap();
        let d = decompose(&h).unwrap();
        let rec = d.reconstruct();
        let err = rec.iter().zip(h.matrix().as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8);
        for a in 0..60 {
            for b in 0..60 {
                let g = dot(&d.eigenvectors()[a], &d.eigenvectors()[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 1e-8);
            }
        }
        let u1 = d.eigenvector(1).unwrap();
        let s = u1.iter().sum::<f64>().signum();
        let dev: f64 = u1.iter().map(|x| (s * x - 1.0 / 60f64.sqrt()).powi(2)).sum::<f64>().sqrt();
        assert!(dev < 1e-6);
        let ev = d.eigenvalues();
        assert!(ev[1..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvalue_only_path_matches_full() {
        let h = sample_constrained_goe(80, 9).unwrap();
        let full = decompose(&h).unwrap();
        let vals = decompose_eigenvalues(&h).unwrap();
        for (a, b) in vals.iter().zip(full.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ties_break_by_original_index() {
        // diag(0, 1, 1) projected has a repeated eigenvalue; the order must
        // be stable across repeated calls.
        let m = SquareMatrix::from_fn(4, |i, j| if i == j { [1.0, 1.0, -1.0, -1.0][i] } else { 0.0 });
        let h = crate::ensemble::project_to_constraint(&m).unwrap();
        let a = decompose(&h).unwrap();
        let b = decompose(&h).unwrap();
        assert_eq!(a.eigenvectors(), b.eigenvectors());
        assert!(a.eigenvalue(1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn m_sc_examples() {
        let z = ComplexPoint::new(0.0, 1.0).unwrap();
        let m = m_sc(z);
        assert!(m.re.abs() < 1e-15);
        assert!((m.im - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        let z = ComplexPoint::new(0.7, 1e3).unwrap();
        let zc = z.as_complex();
        assert!(((m_sc(z) + 1.0 / zc) / (-1.0 / zc)).norm() <= 1.0 / zc.norm_sqr());
    }

    #[test]
    fn complex_point_rejects_lower_half_plane() {
        assert!(ComplexPoint::new(1.0, 0.0).is_err());
        assert!(ComplexPoint::new(1.0, -1.0).is_err());
        assert!(ComplexPoint::new(f64::NAN, 1.0).is_err());
    }

    fn unit_difference(n: usize) -> Vec<f64> {
        let mut q = vec![0.0; n];
        q[0] = std::f64::consts::FRAC_1_SQRT_2;
        q[1] = -std::f64::consts::FRAC_1_SQRT_2;
        q
    }

    #[test]
    fn resolvent_far_away_is_minus_inverse_z() {
        let h = build_centered_adjacency(&sample_regular_graph(50, 3, 2).unwrap()).unwrap();
        let d = decompose(&h).unwrap();
        let z = ComplexPoint::new(0.3, 1e3).unwrap();
        let v = resolvent_quadratic_form(&d, &unit_difference(50), z).unwrap();
        assert!((v + 1.0 / z.as_complex()).norm() < 1e-6);
        assert!(v.im > 0.0);
    }

    #[test]
    fn resolvent_rejects_bad_test_vectors() {
        let h = sample_constrained_goe(10, 1).unwrap();
        let d = decompose(&h).unwrap();
        let z = ComplexPoint::new(0.0, 1.0).unwrap();
        let mut q = vec![0.0; 10];
        q[0] = 1.0;
        assert!(resolvent_quadratic_form(&d, &q, z).is_err());
        let q: Vec<f64> = unit_difference(10).iter().map(|x| 2.0 * x).collect();
        assert!(resolvent_quadratic_form(&d, &q, z).is_err());
    }

    #[test]
    fn lanczos_profile_matches_dense_profile() {
        let g = sample_regular_graph(400, 3, 8).unwrap();
        let h = build_centered_adjacency(&g).unwrap();
        let d = decompose(&h).unwrap();
        let q = unit_difference(400);
        let grid = LocalLawGrid::edge_window(400, 0.1, 5, 6).unwrap();
        let dense = local_law_deviation_profile(&d, &q, &grid, 0.1).unwrap();
        let op = crate::linalg::GraphOperator::new(&g);
        let sparse = local_law_deviation_profile_lanczos(&op, &q, &grid, 0.1).unwrap();
        for (a, b) in dense.rows.iter().zip(&sparse.rows) {
            assert!((a.1 - b.1).abs() < 1e-6, "{} vs {}", a.1, b.1);
        }
    }

    #[test]
    fn grid_regime_violations_are_named() {
        let mut grid = LocalLawGrid::edge_window(1000, 0.1, 3, 3).unwrap();
        assert!(grid.validate(1000, 0.1).is_ok());
        grid.energies.push(2.5);
        let msg = grid.validate(1000, 0.1).unwrap_err().to_string();
        assert!(msg.contains("|E - 2|"), "{msg}");
        let grid = LocalLawGrid { energies: vec![2.0], etas: vec![1e-4] };
        let msg = grid.validate(1000, 0.1).unwrap_err().to_string();
        assert!(msg.contains("N^(-2/3)"), "{msg}");
        let grid = LocalLawGrid { energies: vec![2.0], etas: vec![2.0] };
        assert!(grid.validate(1000, 0.1).unwrap_err().to_string().contains("eta <= 1"));
        assert!(LocalLawGrid::edge_window(1000, 0.1, 0, 3).is_err());
    }

    #[test]
    fn edge_spacing_examples() {
        let h = build_centered_adjacency(&sample_regular_graph(200, 3, 4).unwrap()).unwrap();
        let d = decompose(&h).unwrap();
        let prof = edge_spacing_profile(&d, 20).unwrap();
        assert_eq!(prof[0], (1, 2.0 - d.eigenvalue(2).unwrap()));
        assert!(prof.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(edge_spacing_profile(&d, 21).is_err());
    }

    #[test]
    fn gap_sum_single_term_and_degeneracy() {
        let vals = [0.0, 0.5, -0.25];
        let expected = 1.0 / 0.75f64.powi(2);
        assert!((gap_sum_statistic(&vals, 2).unwrap() - expected).abs() < 1e-15);
        let degenerate = [0.0, 1.0, 1.0, -1.0];
        assert!(matches!(
            gap_sum_statistic(&degenerate, 2),
            Err(LabError::DegenerateSpectrum { i: 2, j: 3, .. })
        ));
        assert!(gap_sum_statistic(&vals, 1).is_err());
    }

    #[test]
    fn top_decomposition_agrees_with_dense() {
        let g = sample_regular_graph(300, 3, 21).unwrap();
        let h = build_centered_adjacency(&g).unwrap();
        let dense = decompose(&h).unwrap();
        let op = crate::linalg::GraphOperator::new(&g);
        let top = decompose_top(&op, 5, &LanczosOptions::default()).unwrap();
        assert!(!top.is_complete());
        for i in 1..=6 {
            assert!((top.eigenvalue(i).unwrap() - dense.eigenvalue(i).unwrap()).abs() < 1e-9);
        }
        assert!(top.spectral_measure(&unit_difference(300)).is_err());
    }
}
