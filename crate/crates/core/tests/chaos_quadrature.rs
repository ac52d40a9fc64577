use lrsg_core::chaos::{build_index_set, SpectralBasis};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Golub-Welsch Gauss-Legendre rule on `[−1, 1]`, weights summing to 1.
fn golub_welsch(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

/// Orthonormal Legendre polynomial for the uniform density on `[−√3, √3]`,
/// from Bonnet's recurrence for `P_n`.
fn pi_n(n: usize, xi: f64) -> f64 {
    let t = xi / 3f64.sqrt();
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return 1.0;
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    ((2 * n + 1) as f64).sqrt() * p1
}

fn psi(alpha: &[u16], xi: &[f64]) -> f64 {
    alpha.iter().zip(xi).map(|(&a, &x)| pi_n(a as usize, x)).product()
}

/// Tensor rule in `dim` variables, nodes scaled to `[−√3, √3]`.
fn tensor_rule(dim: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let rule = golub_welsch(n);
    let mut pts = vec![(Vec::new(), 1.0)];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|(x, w)| {
                rule.iter().map(move |&(t, v)| {
                    let mut y = x.clone();
                    y.push(3f64.sqrt() * t);
                    (y, w * v)
                })
            })
            .collect();
    }
    pts
}

#[test]
fn first_coefficient_by_quadrature() {
    let basis = SpectralBasis::total_degree(1, 1).unwrap();
    let g = basis.stochastic_matrices();
    let b: f64 = tensor_rule(1, 64).iter().map(|(x, w)| w * x[0] * pi_n(0, x[0]) * pi_n(1, x[0])).sum();
    assert_eq!(g.gl[0].get(0, 0), 0.0);
    assert_eq!(g.gl[0].get(1, 1), 0.0);
    assert!((g.gl[0].get(0, 1) - b).abs() <= 1e-13);
    assert!((g.gl[0].get(1, 0) - b).abs() <= 1e-13);
}

#[test]
fn matrices_match_quadrature() {
    for (dim, p) in [(2, 2), (3, 3), (2, 5)] {
        let basis = SpectralBasis::total_degree(dim, p).unwrap();
        let set = build_index_set(dim, p).unwrap();
        let g = basis.stochastic_matrices();
        let rule = tensor_rule(dim, p + 2);
        let n = set.len();
        for l in 0..dim {
            for i in 0..n {
                for j in 0..n {
                    let q: f64 = rule
                        .iter()
                        .map(|(x, w)| w * x[l] * psi(set.get(i), x) * psi(set.get(j), x))
                        .sum();
                    assert!((g.gl[l].get(i, j) - q).abs() <= 1e-12, "dim={dim} p={p} l={l} ({i},{j})");
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let q: f64 = rule.iter().map(|(x, w)| w * psi(set.get(i), x) * psi(set.get(j), x)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((q - want).abs() <= 1e-12);
                assert_eq!(g.g0.get(i, j), want);
            }
        }
    }
}

#[test]
fn evaluation_matches_explicit_polynomials() {
    let basis = SpectralBasis::total_degree(3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let xi: Vec<f64> = (0..3).map(|_| (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt()).collect();
        for s in 0..basis.len() {
            let want = psi(basis.index_set.get(s), &xi);
            assert!((basis.eval(s, &xi).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn unit_variance_of_uniform_germ() {
    let v: f64 = tensor_rule(1, 8).iter().map(|(x, w)| w * x[0] * x[0]).sum();
    assert!((v - 1.0).abs() <= 1e-14);
}

#[test]
fn sampled_gram_is_near_identity() {
    let basis = SpectralBasis::total_degree(2, 2).unwrap();
    let n = basis.len();
    let samples = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut vals = vec![0.0; n];
    for _ in 0..samples {
        let xi = [
            (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
        ];
        for (s, v) in vals.iter_mut().enumerate() {
            *v = basis.eval(s, &xi).unwrap();
        }
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] += vals[i] * vals[j];
            }
        }
    }
    gram /= samples as f64;
    assert!((gram - DMatrix::identity(n, n)).amax() <= 5e-3);
}
