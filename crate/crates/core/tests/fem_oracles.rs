use lrsg_core::fem::{
    assemble_convection_diffusion, assemble_diffusion, assemble_stiffness, make_grid, Grid, Stretch,
};
use lrsg_core::randfield::{build_kl, ExponentialCovariance, KLExpansion, KlTruncation, Rect};
use lrsg_core::sparse::{BandedCholesky, BandedLu, CsrMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kl(sigma: f64, c: f64, domain: Rect, m: usize) -> KLExpansion {
    let cov = ExponentialCovariance::new(sigma, c, domain).unwrap();
    build_kl(&cov, 1.0, KlTruncation::Terms(m)).unwrap()
}

fn to_na(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplets() {
        d[(i, j)] += v;
    }
    d
}

/// Nodal value of the solution at the grid point closest to `(x, y)`.
fn value_at(grid: &Grid, interior: &[usize], u: &[f64], x: f64, y: f64) -> f64 {
    let (k, _) = interior
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let (px, py) = grid.node_xy(id);
            (k, (px - x).powi(2) + (py - y).powi(2))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    u[k]
}

#[test]
fn poisson_centre_value_matches_series() {
    // −Δu = 1 on the unit square: u = Σ_{m,n odd} 16 sin(mπx) sin(nπy) / (π⁴ m n (m² + n²)).
    let pi = std::f64::consts::PI;
    let mut series = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            series += 16.0 * (mf * pi * 0.5).sin() * (nf * pi * 0.5).sin() / (pi.powi(4) * mf * nf * (mf * mf + nf * nf));
        }
    }
    assert!((series - 0.07367).abs() < 1e-5);

    let grid = make_grid(6, Rect::UNIT, Stretch::Uniform).unwrap();
    let sm = assemble_diffusion(&grid, &kl(0.0, 4.0, Rect::UNIT, 0)).unwrap();
    let mut u = sm.f0.clone();
    BandedCholesky::factor(&sm.k[0]).unwrap().solve_in_place(&mut u);
    let centre = value_at(&grid, &sm.interior_nodes, &u, 0.5, 0.5);
    assert!(((centre - series) / series).abs() < 5e-4, "{centre} vs {series}");
}

#[test]
fn mean_stiffness_is_spd_across_levels() {
    let field = kl(0.3, 3.0, Rect::UNIT, 4);
    for level in 1..=6 {
        let grid = make_grid(level, Rect::UNIT, Stretch::Uniform).unwrap();
        let sm = assemble_diffusion(&grid, &field).unwrap();
        assert!(sm.k[0].is_symmetric(1e-14));
        assert!(sm.k.iter().all(|k| k.is_symmetric(1e-14)));
        BandedCholesky::factor(&sm.k[0]).unwrap();
    }
}

#[test]
fn assembly_is_linear_in_the_coefficient() {
    let field = kl(0.4, 2.0, Rect::UNIT, 6);
    let grid = make_grid(3, Rect::UNIT, Stretch::Uniform).unwrap();
    let sm = assemble_diffusion(&grid, &field).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let xi: Vec<f64> = (0..field.len()).map(|_| (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt()).collect();
        let mut terms = vec![(1.0, &sm.k[0])];
        terms.extend(xi.iter().zip(&sm.k[1..]).map(|(&x, k)| (x, k)));
        let frozen = to_na(&CsrMatrix::linear_combination(&terms).unwrap());
        let direct = to_na(&assemble_stiffness(&grid, |x, y| field.field(x, y, &xi).unwrap()));
        assert!((frozen - direct).amax() <= 1e-12);
    }
}

#[test]
fn streamline_term_is_symmetric_semidefinite() {
    let domain = Rect::square(-1.0, 1.0).unwrap();
    let grid = make_grid(4, domain, Stretch::Uniform).unwrap();
    let (sm, _) = assemble_convection_diffusion(&grid, &kl(0.0, 4.0, domain, 0), 1.0 / 200.0, (0.0, 1.0)).unwrap();
    let s = to_na(sm.streamline.as_ref().unwrap());
    assert!((&s - s.transpose()).amax() <= 1e-15);
    let eig = SymmetricEigen::new(s.clone());
    assert!(eig.eigenvalues.min() >= -1e-12 * s.amax());
}

#[test]
fn deterministic_boundary_layer_profile() {
    let nu = 1.0 / 20.0;
    let domain = Rect::square(-1.0, 1.0).unwrap();
    let grid = make_grid(6, domain, Stretch::Uniform).unwrap();
    let (sm, _) = assemble_convection_diffusion(&grid, &kl(0.0, 4.0, domain, 0), nu, (0.0, 1.0)).unwrap();
    let a = &sm.operator_terms()[0];
    let lift = sm.lift.as_ref().unwrap();
    let mut u: Vec<f64> = lift.term_vectors[0].iter().map(|v| -v).collect();
    BandedLu::factor(a).unwrap().solve_in_place(&mut u);
    let column = |i: usize| -> Vec<(f64, f64)> {
        (1..grid.y.len() - 1)
            .map(|j| {
                let id = grid.node_id(i, j);
                let k = sm.interior_nodes.iter().position(|&n| n == id).unwrap();
                (grid.y[j], u[k])
            })
            .collect()
    };
    // Next to the right wall the solution follows g_D = 1 until the outflow layer.
    let wall = column(grid.x.len() - 2);
    assert!(wall.iter().filter(|(y, _)| *y <= 0.8).all(|(_, v)| *v >= 0.95));
    assert!(wall.windows(2).filter(|w| w[0].0 >= 0.8).all(|w| w[1].1 < w[0].1));
    // Away from the side walls the layer follows `1 − exp(−(1−y)/ν)`.
    let mid = column(3 * (grid.x.len() - 1) / 4);
    let bulk = mid.iter().find(|(y, _)| (*y - 0.5).abs() < 1e-12).unwrap().1;
    assert!((bulk - 0.5).abs() < 1e-3);
    for &(y, v) in &mid[mid.len() - 2..] {
        let layer = bulk * (1.0 - (-(1.0 - y) / nu).exp());
        assert!(((v - layer) / layer).abs() <= 0.05, "y={y}: {v} vs {layer}");
    }
}
