use edgelab::experiment::graph_top_pairs;
use edgelab::overlap::{compute_overlaps, make_test_vector, OverlapSample, TestVectorKind};

fn graph_samples(n: usize, trials: u64, indices: &[usize]) -> Vec<OverlapSample> {
    let q = make_test_vector(TestVectorKind::RandomOrthogonal, n, 1).unwrap();
    (0..trials)
        .map(|s| compute_overlaps(&graph_top_pairs(n, 3, s, indices.len()).unwrap(), &q, indices, s).unwrap())
        .collect()
}

#[test]
fn randomized_signs_make_odd_moments_vanish() {
    let samples = graph_samples(200, 2000, &[2, 3]);
    for idx in 0..2 {
        for power in [1, 3] {
            let xs: Vec<f64> = samples.iter().map(|s| s.values[idx].powi(power)).collect();
            let m = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / m;
            let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
            assert!(mean.abs() <= 4.0 * se, "index {} power {power}: {mean} (se {se})", idx + 2);
        }
    }
}

#[test]
fn distinct_random_test_vectors_are_nearly_orthogonal() {
    for n in [100usize, 400] {
        let a = make_test_vector(TestVectorKind::RandomOrthogonal, n, 3).unwrap();
        let b = make_test_vector(TestVectorKind::RandomOrthogonal, n, 4).unwrap();
        let dot: f64 = a.coords.iter().zip(&b.coords).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 0.5);
        assert_ne!(a.coords, b.coords);
    }
}
