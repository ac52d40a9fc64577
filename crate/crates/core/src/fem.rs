//! Q1 finite elements on structured rectangular grids.
//!
//! Nodes are numbered lexicographically by `(y, x)`: node `(i, j)` with
//! `x = x_i`, `y = y_j` has id `j·(n+1) + i`. Element-local nodes run
//! `(x0,y0), (x1,y0), (x1,y1), (x0,y1)`. All integrals use 2×2 Gauss points.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ln, powi, sqrt};
use crate::randfield::KLExpansion;
pub use crate::randfield::Rect;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Vertical grading of the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stretch {
    Uniform,
    /// Element heights form a geometric progression shrinking by `ratio`
    /// towards `y = y_hi`.
    Geometric(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub level: usize,
    pub domain: Rect,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stretch: Stretch,
}

pub fn make_grid(level: usize, domain: Rect, stretch: Stretch) -> Result<Grid> {
    if level == 0 || level > 15 {
        return Err(Error::InvalidParameter(alloc::format!("grid level must be in 1..=15, got {level}")));
    }
    let n = 1usize << level;
    let x: Vec<f64> = (0..=n)
        .map(|i| domain.x_lo + domain.width() * i as f64 / n as f64)
        .collect();
    let y = match stretch {
        Stretch::Uniform => (0..=n)
            .map(|j| domain.y_lo + domain.height() * j as f64 / n as f64)
            .collect(),
        Stretch::Geometric(r) => {
            if !(r > 1.0) || !r.is_finite() {
                return Err(Error::InvalidParameter(alloc::format!("stretch ratio must be > 1, got {r}")));
            }
            let heights: Vec<f64> = (0..n).map(|k| powi(r, (n - 1 - k) as i32)).collect();
            let total: f64 = heights.iter().sum();
            let mut y = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            y.push(domain.y_lo);
            for h in &heights[..n - 1] {
                acc += h;
                y.push(domain.y_lo + domain.height() * acc / total);
            }
            y.push(domain.y_hi);
            y
        }
    };
    Ok(Grid {
        level,
        domain,
        x,
        y,
        stretch,
    })
}

/// Geometric ratio that makes the element next to `y_hi` about `nu` high on a
/// level-`level` grid of height `height`, capped at 1.5. Returns `None` when
/// the uniform grid already resolves `nu`.
pub fn auto_stretch_ratio(level: usize, height: f64, nu: f64) -> Option<f64> {
    const CAP: f64 = 1.5;
    let n = (1usize << level) as i32;
    if height / n as f64 <= nu {
        return None;
    }
    let wall = |r: f64| height * (r - 1.0) / (powi(r, n) - 1.0);
    if wall(CAP) > nu {
        return Some(CAP);
    }
    let (mut lo, mut hi) = (1.0 + 1e-12, CAP);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if wall(mid) > nu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

impl Grid {
    /// Elements per side.
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len() * self.y.len()
    }

    /// Interior node count `(2^ℓ − 1)²`.
    pub fn n_interior(&self) -> usize {
        let n = self.n();
        (n - 1) * (n - 1)
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * self.x.len() + i
    }

    pub fn node_xy(&self, id: usize) -> (f64, f64) {
        let nx = self.x.len();
        (self.x[id % nx], self.y[id / nx])
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        let nx = self.x.len();
        let (i, j) = (id % nx, id / nx);
        i == 0 || j == 0 || i == nx - 1 || j == self.y.len() - 1
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| self.is_boundary(k)).collect()
    }

    pub fn element_heights(&self) -> Vec<f64> {
        self.y.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_element_height(&self) -> f64 {
        self.element_heights().into_iter().fold(f64::INFINITY, f64::min)
    }

    fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        let n = self.n();
        (0..n).flat_map(move |ey| {
            (0..n).map(move |ex| Element {
                index: ey * n + ex,
                nodes: [
                    self.node_id(ex, ey),
                    self.node_id(ex + 1, ey),
                    self.node_id(ex + 1, ey + 1),
                    self.node_id(ex, ey + 1),
                ],
                x0: self.x[ex],
                y0: self.y[ey],
                hx: self.x[ex + 1] - self.x[ex],
                hy: self.y[ey + 1] - self.y[ey],
            })
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Element {
    index: usize,
    nodes: [usize; 4],
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
}

/// Shape data at one Gauss point.
struct Qp {
    x: f64,
    y: f64,
    w: f64,
    phi: [f64; 4],
    dx: [f64; 4],
    dy: [f64; 4],
}

fn gauss_points(e: &Element) -> [Qp; 4] {
    let g = 1.0 / sqrt(3.0);
    let pts = [(-g, -g), (g, -g), (g, g), (-g, g)];
    pts.map(|(gx, gy)| {
        let mut phi = [0.0; 4];
        let mut dx = [0.0; 4];
        let mut dy = [0.0; 4];
        for a in 0..4 {
            phi[a] = 0.25 * (1.0 + XI[a] * gx) * (1.0 + ETA[a] * gy);
            dx[a] = 0.25 * XI[a] * (1.0 + ETA[a] * gy) * 2.0 / e.hx;
            dy[a] = 0.25 * ETA[a] * (1.0 + XI[a] * gx) * 2.0 / e.hy;
        }
        Qp {
            x: e.x0 + 0.5 * (gx + 1.0) * e.hx,
            y: e.y0 + 0.5 * (gy + 1.0) * e.hy,
            w: 0.25 * e.hx * e.hy,
            phi,
            dx,
            dy,
        }
    })
}

/// Full-node stiffness matrices for several coefficients, sharing one loop.
fn assemble_full_stiffness(grid: &Grid, coefs: &[&dyn Fn(f64, f64) -> f64]) -> Vec<CsrMatrix> {
    let nn = grid.n_nodes();
    let mut trip: Vec<Vec<(usize, usize, f64)>> = vec![Vec::with_capacity(16 * grid.n() * grid.n()); coefs.len()];
    for e in grid.elements() {
        let qps = gauss_points(&e);
        for (t, coef) in trip.iter_mut().zip(coefs) {
            let mut ke = [[0.0; 4]; 4];
            for q in &qps {
                let a = q.w * coef(q.x, q.y);
                for i in 0..4 {
                    for j in 0..4 {
                        ke[i][j] += a * (q.dx[i] * q.dx[j] + q.dy[i] * q.dy[j]);
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    t.push((e.nodes[i], e.nodes[j], ke[i][j]));
                }
            }
        }
    }
    trip.into_iter()
        .map(|t| CsrMatrix::from_triplets(nn, nn, &t).expect("indices in range"))
        .collect()
}

fn assemble_full_load(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_nodes()];
    for e in grid.elements() {
        for q in gauss_points(&e) {
            let v = q.w * f(q.x, q.y);
            for a in 0..4 {
                out[e.nodes[a]] += v * q.phi[a];
            }
        }
    }
    out
}

/// Stiffness matrix `∫ a ∇φ_i·∇φ_j` on interior nodes.
pub fn assemble_stiffness(grid: &Grid, coef: impl Fn(f64, f64) -> f64) -> CsrMatrix {
    let interior = grid.interior_nodes();
    assemble_full_stiffness(grid, &[&coef]).remove(0).submatrix(&interior, &interior)
}

/// Element Peclet numbers and streamline-diffusion weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PecletData {
    pub peclet: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Length of the element along the wind direction.
fn streamline_length(hx: f64, hy: f64, wind: (f64, f64)) -> f64 {
    let wn = libm::hypot(wind.0, wind.1);
    let (ux, uy) = (libm::fabs(wind.0) / wn, libm::fabs(wind.1) / wn);
    let lx = if ux > 0.0 { hx / ux } else { f64::INFINITY };
    let ly = if uy > 0.0 { hy / uy } else { f64::INFINITY };
    lx.min(ly)
}

pub fn peclet_data(grid: &Grid, nu: f64, wind: (f64, f64)) -> PecletData {
    let wn = libm::hypot(wind.0, wind.1);
    let mut peclet = Vec::with_capacity(grid.n() * grid.n());
    let mut delta = Vec::with_capacity(grid.n() * grid.n());
    for e in grid.elements() {
        if wn == 0.0 {
            peclet.push(0.0);
            delta.push(0.0);
            continue;
        }
        let h = streamline_length(e.hx, e.hy, wind);
        let p = wn * h / (2.0 * nu);
        peclet.push(p);
        delta.push(if p > 1.0 { h / (2.0 * wn) * (1.0 - 1.0 / p) } else { 0.0 });
    }
    PecletData { peclet, delta }
}

/// Full-node convection `∫ φ_i (w·∇φ_j)` and streamline diffusion
/// `Σ_k δ_k ∫ (w·∇φ_i)(w·∇φ_j)`.
fn assemble_full_convection(grid: &Grid, wind: (f64, f64), delta: &[f64]) -> (CsrMatrix, CsrMatrix) {
    let nn = grid.n_nodes();
    let mut tn = Vec::with_capacity(16 * grid.n() * grid.n());
    let mut ts = Vec::with_capacity(16 * grid.n() * grid.n());
    for e in grid.elements() {
        let d = delta[e.index];
        let mut ne = [[0.0; 4]; 4];
        let mut se = [[0.0; 4]; 4];
        for q in gauss_points(&e) {
            let mut wg = [0.0; 4];
            for a in 0..4 {
                wg[a] = wind.0 * q.dx[a] + wind.1 * q.dy[a];
            }
            for i in 0..4 {
                for j in 0..4 {
                    ne[i][j] += q.w * q.phi[i] * wg[j];
                    se[i][j] += q.w * d * wg[i] * wg[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                tn.push((e.nodes[i], e.nodes[j], ne[i][j]));
                ts.push((e.nodes[i], e.nodes[j], se[i][j]));
            }
        }
    }
    (
        CsrMatrix::from_triplets(nn, nn, &tn).expect("indices in range"),
        CsrMatrix::from_triplets(nn, nn, &ts).expect("indices in range"),
    )
}

/// Non-homogeneous Dirichlet data eliminated from the interior system.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLift {
    pub boundary_nodes: Vec<usize>,
    /// Nodal values `g_D` on `boundary_nodes`.
    pub values: Vec<f64>,
    /// `A_l^{IB} g_D` for each operator term `l` (same order as
    /// [`SpatialMatrices::operator_terms`]). The right-hand side picks up
    /// `−Σ_l (G_l e_1) ⊗ (A_l^{IB} g_D)`.
    pub term_vectors: Vec<Vec<f64>>,
}

impl BoundaryLift {
    pub fn is_zero(&self) -> bool {
        self.term_vectors.iter().all(|v| v.iter().all(|x| *x == 0.0))
    }
}

#[derive(Clone, Debug)]
pub struct SpatialMatrices {
    /// `K_0 … K_M` on interior nodes (scaled by `ν` for convection-diffusion).
    pub k: Vec<CsrMatrix>,
    pub convection: Option<CsrMatrix>,
    pub streamline: Option<CsrMatrix>,
    pub f0: Vec<f64>,
    pub lift: Option<BoundaryLift>,
    pub interior_nodes: Vec<usize>,
}

impl SpatialMatrices {
    pub fn n_x(&self) -> usize {
        self.f0.len()
    }

    /// Spatial matrices paired with `G_0, G_1, …, G_M`: the convection and
    /// streamline terms are folded into the first one.
    pub fn operator_terms(&self) -> Vec<CsrMatrix> {
        let mut terms = self.k.clone();
        let mut extra: Vec<(f64, &CsrMatrix)> = vec![(1.0, &self.k[0])];
        if let Some(n) = &self.convection {
            extra.push((1.0, n));
        }
        if let Some(s) = &self.streamline {
            extra.push((1.0, s));
        }
        if extra.len() > 1 {
            terms[0] = CsrMatrix::linear_combination(&extra).expect("same shape");
        }
        terms
    }
}

/// Diffusion problem `−∇·(a ∇u) = 1` with `u = 0` on the boundary.
pub fn assemble_diffusion(grid: &Grid, kl: &KLExpansion) -> Result<SpatialMatrices> {
    check_domain(grid, kl)?;
    let a0 = kl.mean_a0;
    let mean = move |_: f64, _: f64| a0;
    let modes: Vec<_> = (0..kl.len())
        .map(|i| move |x: f64, y: f64| kl.eval_mode(i, x, y).unwrap_or(0.0))
        .collect();
    let mut coefs: Vec<&dyn Fn(f64, f64) -> f64> = vec![&mean];
    coefs.extend(modes.iter().map(|m| m as &dyn Fn(f64, f64) -> f64));
    let interior = grid.interior_nodes();
    let k = assemble_full_stiffness(grid, &coefs)
        .into_iter()
        .map(|m| m.submatrix(&interior, &interior))
        .collect();
    let full_load = assemble_full_load(grid, |_, _| 1.0);
    let f0 = interior.iter().map(|&i| full_load[i]).collect();
    Ok(SpatialMatrices {
        k,
        convection: None,
        streamline: None,
        f0,
        lift: None,
        interior_nodes: interior,
    })
}

/// Dirichlet data of the convection-diffusion benchmark: linear from −1 to 1
/// along the bottom, −1 on the left, 1 on the right, 0 on the whole top row.
pub fn cd_boundary_value(domain: &Rect, grid: &Grid, id: usize) -> f64 {
    let nx = grid.x.len();
    let (i, j) = (id % nx, id / nx);
    let (x, _) = grid.node_xy(id);
    if j == grid.y.len() - 1 {
        0.0
    } else if j == 0 {
        2.0 * (x - domain.x_lo) / domain.width() - 1.0
    } else if i == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Convection-diffusion problem `−ν∇·(a∇u) + w·∇u = 0` with streamline
/// diffusion and the benchmark's Dirichlet data.
pub fn assemble_convection_diffusion(
    grid: &Grid,
    kl: &KLExpansion,
    nu: f64,
    wind: (f64, f64),
) -> Result<(SpatialMatrices, PecletData)> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("viscosity must be > 0, got {nu}")));
    }
    check_domain(grid, kl)?;
    let a0 = kl.mean_a0;
    let mean = move |_: f64, _: f64| a0;
    let modes: Vec<_> = (0..kl.len())
        .map(|i| move |x: f64, y: f64| kl.eval_mode(i, x, y).unwrap_or(0.0))
        .collect();
    let mut coefs: Vec<&dyn Fn(f64, f64) -> f64> = vec![&mean];
    coefs.extend(modes.iter().map(|m| m as &dyn Fn(f64, f64) -> f64));

    let pec = peclet_data(grid, nu, wind);
    let full_k: Vec<CsrMatrix> = assemble_full_stiffness(grid, &coefs)
        .into_iter()
        .map(|m| m.scaled(nu))
        .collect();
    let (full_n, full_s) = assemble_full_convection(grid, wind, &pec.delta);

    let interior = grid.interior_nodes();
    let boundary = grid.boundary_nodes();
    let values: Vec<f64> = boundary.iter().map(|&b| cd_boundary_value(&grid.domain, grid, b)).collect();

    let k: Vec<CsrMatrix> = full_k.iter().map(|m| m.submatrix(&interior, &interior)).collect();
    let n_ii = full_n.submatrix(&interior, &interior);
    let s_ii = full_s.submatrix(&interior, &interior);

    let mut term_vectors = Vec::with_capacity(k.len());
    let first_full = CsrMatrix::linear_combination(&[(1.0, &full_k[0]), (1.0, &full_n), (1.0, &full_s)])?;
    for m in core::iter::once(&first_full).chain(full_k[1..].iter()) {
        term_vectors.push(m.submatrix(&interior, &boundary).mul_vec(&values));
    }

    let n_x = interior.len();
    let streamline = pec.delta.iter().any(|d| *d > 0.0).then_some(s_ii);
    Ok((
        SpatialMatrices {
            k,
            convection: Some(n_ii),
            streamline,
            f0: vec![0.0; n_x],
            lift: Some(BoundaryLift {
                boundary_nodes: boundary,
                values,
                term_vectors,
            }),
            interior_nodes: interior,
        },
        pec,
    ))
}

/// Operator terms of the convection-diffusion problem on every grid node,
/// boundary rows included, in the order of
/// [`SpatialMatrices::operator_terms`]. Meant for imposing the Dirichlet data
/// directly, e.g. in a dense reference solve.
pub fn convection_diffusion_full_terms(grid: &Grid, kl: &KLExpansion, nu: f64, wind: (f64, f64)) -> Result<Vec<CsrMatrix>> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("viscosity must be > 0, got {nu}")));
    }
    check_domain(grid, kl)?;
    let a0 = kl.mean_a0;
    let mean = move |_: f64, _: f64| a0;
    let modes: Vec<_> = (0..kl.len())
        .map(|i| move |x: f64, y: f64| kl.eval_mode(i, x, y).unwrap_or(0.0))
        .collect();
    let mut coefs: Vec<&dyn Fn(f64, f64) -> f64> = vec![&mean];
    coefs.extend(modes.iter().map(|m| m as &dyn Fn(f64, f64) -> f64));
    let pec = peclet_data(grid, nu, wind);
    let mut terms: Vec<CsrMatrix> = assemble_full_stiffness(grid, &coefs)
        .into_iter()
        .map(|m| m.scaled(nu))
        .collect();
    let (n, st) = assemble_full_convection(grid, wind, &pec.delta);
    terms[0] = CsrMatrix::linear_combination(&[(1.0, &terms[0]), (1.0, &n), (1.0, &st)])?;
    Ok(terms)
}

fn check_domain(grid: &Grid, kl: &KLExpansion) -> Result<()> {
    let (g, d) = (grid.domain, kl.domain);
    let tol = 1e-12 * d.width().max(d.height());
    if g.x_lo < d.x_lo - tol || g.x_hi > d.x_hi + tol || g.y_lo < d.y_lo - tol || g.y_hi > d.y_hi + tol {
        return Err(Error::InvalidParameter("grid extends outside the random field's domain".into()));
    }
    Ok(())
}

/// `min_x (a_0 − √3 Σ_l |ã_l(x)|)` over all Gauss points: the smallest value
/// the field takes over the parameter hypercube.
pub fn coercivity_min(grid: &Grid, kl: &KLExpansion) -> f64 {
    let s3 = sqrt(3.0);
    let mut m = f64::INFINITY;
    for e in grid.elements() {
        for q in gauss_points(&e) {
            let spread: f64 = (0..kl.len())
                .map(|i| libm::fabs(kl.eval_mode(i, q.x, q.y).unwrap_or(0.0)))
                .sum();
            m = m.min(kl.mean_a0 - s3 * spread);
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProblemKind {
    Diffusion,
    /// `stretched` selects the auto-graded mesh of [`auto_stretch_ratio`].
    ConvectionDiffusion { nu: f64, stretched: bool },
}

/// Smallest level whose element size resolves the most oscillatory KL mode
/// with `points_per_halfwave` points per half wave (grid points counted per
/// full wave of `2·π/θ`, i.e. `h ≤ 2·(π/θ)/pph`). For convection-diffusion the
/// smallest element height must also be below the layer width `ν ln 100`.
pub fn recommend_coarse_level(kl: &KLExpansion, points_per_halfwave: f64, kind: ProblemKind) -> usize {
    const MAX_LEVEL: usize = 12;
    let side = kl.domain.width().max(kl.domain.height());
    let (_, half) = kl.max_theta_and_halfwave();
    let target = 2.0 * half / points_per_halfwave;
    let mut level = 1;
    while level < MAX_LEVEL && side / (1usize << level) as f64 > target * (1.0 + 1e-12) {
        level += 1;
    }
    if let ProblemKind::ConvectionDiffusion { nu, stretched } = kind {
        let width = nu * ln(100.0);
        let height = kl.domain.height();
        let wall = |l: usize| {
            let uniform = height / (1usize << l) as f64;
            if !stretched {
                return uniform;
            }
            match auto_stretch_ratio(l, height, nu) {
                None => uniform,
                Some(r) => height * (r - 1.0) / (powi(r, 1 << l) - 1.0),
            }
        };
        let mut cd = 1;
        while cd < MAX_LEVEL && wall(cd) > width {
            cd += 1;
        }
        level = level.max(cd);
    }
    level
}
