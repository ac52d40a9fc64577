//! Brute-force collocation oracle for the 1D exponential-kernel eigenproblem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trapezoid-rule collocation of `∫ exp(−|x−y|/c) a(y) dy` on `[−L/2, L/2]`
/// with `n` intervals, applied in the symmetric form `W^½ K W^½`.
pub struct Nystrom {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `exp(−h/c)`: on a uniform grid `K_ij = r^|i−j|`.
    r: f64,
    c: f64,
}

impl Nystrom {
    pub fn new(c: f64, length: f64, n: usize) -> Self {
        let h = length / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|i| -0.5 * length + i as f64 * h).collect();
        let weights: Vec<f64> = (0..=n).map(|i| if i == 0 || i == n { 0.5 * h } else { h }).collect();
        Self { nodes, weights, r: (-h / c).exp(), c }
    }

    /// `W^½ K W^½ x` in linear time via the two one-sided geometric sums.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let v: Vec<f64> = (0..n).map(|i| self.weights[i].sqrt() * x[(i, j)]).collect();
            let mut fwd = vec![0.0; n];
            let mut bwd = vec![0.0; n];
            for i in 0..n {
                fwd[i] = v[i] + if i > 0 { self.r * fwd[i - 1] } else { 0.0 };
            }
            for i in (0..n).rev() {
                bwd[i] = v[i] + if i + 1 < n { self.r * bwd[i + 1] } else { 0.0 };
            }
            for i in 0..n {
                out[(i, j)] = self.weights[i].sqrt() * (fwd[i] + bwd[i] - v[i]);
            }
        }
        out
    }

    /// Leading `k` eigenpairs by block subspace iteration with Rayleigh-Ritz.
    /// Vectors are returned as nodal values normalised in the discrete L² sense.
    pub fn leading(&self, k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
        let n = self.nodes.len();
        let block = k + 8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5).qr().q();
        let mut prev = vec![0.0; k];
        let mut ritz = Vec::new();
        for _ in 0..5000 {
            let q = self.apply(&v).qr().q();
            let small = q.transpose() * self.apply(&q);
            let eig = SymmetricEigen::new(small);
            let mut order: Vec<usize> = (0..block).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            ritz = order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>();
            let vecs = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
            v = q * vecs;
            let change = ritz[..k].iter().zip(&prev).map(|(a, b)| ((a - b) / a).abs()).fold(0.0, f64::max);
            prev.copy_from_slice(&ritz[..k]);
            if change < 1e-14 {
                break;
            }
        }
        let vecs = (0..k)
            .map(|j| {
                DVector::from_iterator(n, (0..n).map(|i| v[(i, j)] / self.weights[i].sqrt()))
            })
            .collect();
        (ritz[..k].to_vec(), vecs)
    }

    /// Natural interpolant `φ(x) = (1/λ) Σ_j w_j k(x, y_j) φ_j`.
    pub fn interpolate(&self, lambda: f64, phi: &DVector<f64>, x: f64) -> f64 {
        let s: f64 = (0..self.nodes.len())
            .map(|j| self.weights[j] * (-(x - self.nodes[j]).abs() / self.c).exp() * phi[j])
            .sum();
        s / lambda
    }
}

/// Richardson-extrapolated leading eigenvalues from 2048 and 1024 intervals.
pub fn extrapolated_eigenvalues(c: f64, length: f64, count: usize) -> Vec<f64> {
    let (fine, _) = Nystrom::new(c, length, 2048).leading(count);
    let (coarse, _) = Nystrom::new(c, length, 1024).leading(count);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}
