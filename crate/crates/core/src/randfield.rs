//! Karhunen-Loève expansion of a random field with separable exponential
//! covariance `σ² exp(−|x₁−y₁|/c − |x₂−y₂|/c)` on a rectangle.
//!
//! The 1D eigenpairs on `[−a, a]` are known in closed form: `cos(θx)` modes
//! with `1/c − θ tan(θa) = 0`, `sin(θx)` modes with `θ + tan(θa)/c = 0`, and
//! eigenvalue `λ = 2c / (1 + c²θ²)`. The 2D eigenpairs are products of the
//! 1D ones along each axis.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::math::{abs, cos, exp, sin, sqrt, tan};
use crate::{Error, Result};

/// Axis-aligned rectangle `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x_lo: 0.0,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: 1.0,
    };

    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(x_hi > x_lo && y_hi > y_lo) || ![x_lo, x_hi, y_lo, y_hi].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "degenerate rectangle [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]"
            )));
        }
        Ok(Self { x_lo, x_hi, y_lo, y_hi })
    }

    /// The square `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tx = 1e-12 * self.width();
        let ty = 1e-12 * self.height();
        x >= self.x_lo - tx && x <= self.x_hi + tx && y >= self.y_lo - ty && y <= self.y_hi + ty
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialCovariance {
    sigma: f64,
    corr_len: f64,
    domain: Rect,
}

impl ExponentialCovariance {
    pub fn new(sigma: f64, corr_len: f64, domain: Rect) -> Result<Self> {
        // σ = 0 is allowed: it is the deterministic limit.
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("sigma must be >= 0, got {sigma}")));
        }
        if !(corr_len > 0.0) || !corr_len.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "correlation length must be > 0, got {corr_len}"
            )));
        }
        let domain = Rect::new(domain.x_lo, domain.x_hi, domain.y_lo, domain.y_hi)?;
        Ok(Self { sigma, corr_len, domain })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn corr_len(&self) -> f64 {
        self.corr_len
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn kernel(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        self.sigma * self.sigma * exp(-abs(x.0 - y.0) / self.corr_len - abs(x.1 - y.1) / self.corr_len)
    }

    /// Side length along `axis` (0 = x, 1 = y).
    pub fn axis_length(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.domain.width()
        } else {
            self.domain.height()
        }
    }

    /// The leading `count` eigenpairs of the 1D kernel along `axis`.
    pub fn eigenpairs_1d(&self, axis: usize, count: usize) -> Result<Vec<Eigenpair1D>> {
        if axis > 1 {
            return Err(Error::OutOfRange { index: axis, len: 2 });
        }
        solve_1d_eigenproblem(self.corr_len, self.axis_length(axis), count)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// `cos(θx)` mode.
    Even,
    /// `sin(θx)` mode.
    Odd,
}

/// One eigenpair of `∫ exp(−|x−y|/c) a(y) dy = λ a(x)` on `[−a, a]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenpair1D {
    pub theta: f64,
    pub lambda: f64,
    pub parity: Parity,
    /// `h` such that `h·cos(θx)` or `h·sin(θx)` has unit L² norm.
    pub norm_const: f64,
    pub half_length: f64,
}

impl Eigenpair1D {
    /// Value at the centred coordinate `t ∈ [−a, a]`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.parity {
            Parity::Even => self.norm_const * cos(self.theta * t),
            Parity::Odd => self.norm_const * sin(self.theta * t),
        }
    }

    /// Residual of the transcendental equation defining `theta`.
    pub fn equation_residual(&self, corr_len: f64) -> f64 {
        let ta = tan(self.theta * self.half_length);
        match self.parity {
            Parity::Even => 1.0 / corr_len - self.theta * ta,
            Parity::Odd => self.theta + ta / corr_len,
        }
    }
}

/// Leading `count` eigenpairs of the exponential kernel with correlation
/// length `corr_len` on an interval of length `length`, sorted by decreasing
/// eigenvalue.
pub fn solve_1d_eigenproblem(corr_len: f64, length: f64, count: usize) -> Result<Vec<Eigenpair1D>> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one eigenpair".into()));
    }
    if !(corr_len > 0.0 && length > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "corr_len and length must be positive (got {corr_len}, {length})"
        )));
    }
    let c = corr_len;
    let a = 0.5 * length;
    let shrink = 1e-9 / a;
    let even = |t: f64| t * tan(t * a) - 1.0 / c;
    let odd = |t: f64| t + tan(t * a) / c;

    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        let kp = k as f64 * PI;
        let index = out.len();
        let lo = kp / a;
        let mid = (kp + FRAC_PI_2) / a;
        let theta = bisect(even, lo, mid - shrink).ok_or(Error::RootBracket { index })?;
        out.push(make_pair(theta, c, a, Parity::Even));
        if out.len() == count {
            break;
        }
        let index = out.len();
        let hi = (kp + PI) / a;
        let theta = bisect(odd, mid + shrink, hi).ok_or(Error::RootBracket { index })?;
        out.push(make_pair(theta, c, a, Parity::Odd));
        k += 1;
    }
    Ok(out)
}

fn make_pair(theta: f64, c: f64, a: f64, parity: Parity) -> Eigenpair1D {
    let s = sin(2.0 * theta * a) / (2.0 * theta);
    let sq = match parity {
        Parity::Even => a + s,
        Parity::Odd => a - s,
    };
    Eigenpair1D {
        theta,
        lambda: 2.0 * c / (1.0 + c * c * theta * theta),
        parity,
        norm_const: 1.0 / sqrt(sq),
        half_length: a,
    }
}

/// Bisection for a sign change on `[lo, hi]`, run to machine precision.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || (flo > 0.0) == (fhi > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * abs(hi) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// How the number of retained KL terms is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KlTruncation {
    /// Smallest `M` capturing this fraction of the total variance.
    Capture(f64),
    /// Exactly `M` terms.
    Terms(usize),
}

/// One retained 2D mode `a_i(x) = φ_kx(x₁) φ_ky(x₂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlMode {
    pub lambda: f64,
    pub kx: usize,
    pub ky: usize,
    pub x_factor: Eigenpair1D,
    pub y_factor: Eigenpair1D,
}

impl KlMode {
    pub fn max_theta(&self) -> f64 {
        self.x_factor.theta.max(self.y_factor.theta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KLExpansion {
    pub mean_a0: f64,
    pub sigma: f64,
    pub corr_len: f64,
    pub domain: Rect,
    pub modes: Vec<KlMode>,
    /// `Σ λ_i / |D|` over the retained modes.
    pub capture_ratio: f64,
}

/// Default number of 1D eigenpairs per axis considered when selecting modes.
pub const DEFAULT_MODES_PER_AXIS: usize = 64;

pub fn build_kl(cov: &ExponentialCovariance, mean_a0: f64, trunc: KlTruncation) -> Result<KLExpansion> {
    build_kl_with(cov, mean_a0, trunc, DEFAULT_MODES_PER_AXIS)
}

/// As [`build_kl`], with an explicit number of 1D modes per axis.
pub fn build_kl_with(
    cov: &ExponentialCovariance,
    mean_a0: f64,
    trunc: KlTruncation,
    modes_per_axis: usize,
) -> Result<KLExpansion> {
    if !mean_a0.is_finite() {
        return Err(Error::InvalidParameter("mean must be finite".into()));
    }
    match trunc {
        KlTruncation::Capture(f) if !(f > 0.0 && f < 1.0) => {
            return Err(Error::InvalidParameter(alloc::format!("capture must lie in (0, 1), got {f}")));
        }
        KlTruncation::Terms(m) if m > modes_per_axis * modes_per_axis => {
            return Err(Error::InvalidParameter(alloc::format!(
                "{m} terms requested from {modes_per_axis} modes per axis"
            )));
        }
        _ => {}
    }
    let ex = cov.eigenpairs_1d(0, modes_per_axis)?;
    let ey = cov.eigenpairs_1d(1, modes_per_axis)?;
    let mut products: Vec<(f64, usize, usize)> = Vec::with_capacity(modes_per_axis * modes_per_axis);
    for (i, px) in ex.iter().enumerate() {
        for (j, py) in ey.iter().enumerate() {
            products.push((px.lambda * py.lambda, i, j));
        }
    }
    products.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let total = cov.domain().area();
    let m = match trunc {
        KlTruncation::Terms(m) => m,
        KlTruncation::Capture(f) => {
            let mut sum = 0.0;
            let mut found = None;
            for (idx, p) in products.iter().enumerate() {
                sum += p.0;
                if sum / total >= f {
                    found = Some(idx + 1);
                    break;
                }
            }
            found.ok_or(Error::CaptureUnreachable {
                requested: f,
                reached: sum / total,
                modes: modes_per_axis,
            })?
        }
    };
    // Products involving a 1D mode beyond the computed ones are bounded by this.
    let bound = (ex[0].lambda * ey[modes_per_axis - 1].lambda).max(ex[modes_per_axis - 1].lambda * ey[0].lambda);
    if m > 0 && products[m - 1].0 < bound {
        let reached = products[..m].iter().map(|p| p.0).sum::<f64>() / total;
        return Err(Error::CaptureUnreachable {
            requested: match trunc {
                KlTruncation::Capture(f) => f,
                KlTruncation::Terms(_) => reached,
            },
            reached,
            modes: modes_per_axis,
        });
    }
    let modes: Vec<KlMode> = products[..m]
        .iter()
        .map(|&(lambda, i, j)| KlMode {
            lambda,
            kx: i,
            ky: j,
            x_factor: ex[i],
            y_factor: ey[j],
        })
        .collect();
    let capture_ratio = modes.iter().map(|md| md.lambda).sum::<f64>() / total;
    Ok(KLExpansion {
        mean_a0,
        sigma: cov.sigma(),
        corr_len: cov.corr_len(),
        domain: cov.domain(),
        modes,
        capture_ratio,
    })
}

impl KLExpansion {
    /// Number of retained terms `M`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    fn centre(&self) -> (f64, f64) {
        (
            0.5 * (self.domain.x_lo + self.domain.x_hi),
            0.5 * (self.domain.y_lo + self.domain.y_hi),
        )
    }

    /// Unweighted orthonormal eigenfunction `a_i(x)` (0-based `i`), no domain check.
    pub fn eigenfunction(&self, i: usize, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.centre();
        let m = &self.modes[i];
        m.x_factor.eval(x - cx) * m.y_factor.eval(y - cy)
    }

    /// `ã_i(x) = σ √λ_i a_i(x)`, the coefficient of `ξ_i` in the field.
    /// Modes are 0-based here.
    pub fn eval_mode(&self, i: usize, x: f64, y: f64) -> Result<f64> {
        if i >= self.modes.len() {
            return Err(Error::OutOfRange {
                index: i,
                len: self.modes.len(),
            });
        }
        if !self.domain.contains(x, y) {
            return Err(Error::OutsideDomain { x, y });
        }
        Ok(self.sigma * sqrt(self.modes[i].lambda) * self.eigenfunction(i, x, y))
    }

    /// Field value `a(x, ξ) = a_0 + Σ ã_i(x) ξ_i`.
    pub fn field(&self, x: f64, y: f64, xi: &[f64]) -> Result<f64> {
        let mut v = self.mean_a0;
        for (i, &z) in xi.iter().enumerate().take(self.modes.len()) {
            v += self.eval_mode(i, x, y)? * z;
        }
        Ok(v)
    }

    /// Largest transcendental root among the retained modes and the matching
    /// half wavelength `π/θ`.
    pub fn max_theta_and_halfwave(&self) -> (f64, f64) {
        let theta = self.modes.iter().map(KlMode::max_theta).fold(0.0, f64::max);
        (theta, if theta > 0.0 { PI / theta } else { f64::INFINITY })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defining_equations_hold() {
        for &c in &[4.0, 3.0, 2.5, 2.0, 1.0] {
            let pairs = solve_1d_eigenproblem(c, 1.0, 20).unwrap();
            for p in &pairs {
                assert!(p.equation_residual(c).abs() <= 1e-10, "c={c} theta={}", p.theta);
            }
            assert!(pairs.windows(2).all(|w| w[0].lambda > w[1].lambda && w[0].theta < w[1].theta));
            assert_eq!(pairs[0].parity, Parity::Even);
            assert_eq!(pairs[1].parity, Parity::Odd);
        }
    }

    #[test]
    fn roots_lie_in_brackets() {
        let pairs = solve_1d_eigenproblem(4.0, 1.0, 10).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let lo = k as f64 * PI / 1.0;
            let hi = (k + 1) as f64 * PI / 1.0;
            assert!(p.theta > lo && p.theta < hi);
        }
    }

    #[test]
    fn constant_kernel_limit() {
        let p = solve_1d_eigenproblem(1e6, 1.0, 1).unwrap();
        assert!((p[0].lambda - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn trace_bounded_by_length() {
        let pairs = solve_1d_eigenproblem(2.0, 1.5, 200).unwrap();
        let s: f64 = pairs.iter().map(|p| p.lambda).sum();
        assert!(s < 1.5 && s > 1.5 - 1e-2);
    }

    #[test]
    fn norm_constants_by_quadrature() {
        let pairs = solve_1d_eigenproblem(2.0, 2.0, 6).unwrap();
        let n = 20000;
        for p in &pairs {
            let h = 2.0 / n as f64;
            // Midpoint rule on [−1, 1].
            let s: f64 = (0..n).map(|k| p.eval(-1.0 + (k as f64 + 0.5) * h).powi(2) * h).sum();
            assert!((s - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn capture_rule_picks_single_mode_for_tiny_fraction() {
        let cov = ExponentialCovariance::new(1.0, 4.0, Rect::UNIT).unwrap();
        let kl = build_kl(&cov, 1.0, KlTruncation::Capture(1e-6)).unwrap();
        assert_eq!(kl.len(), 1);
    }

    #[test]
    fn odd_factor_vanishes_at_centre() {
        let cov = ExponentialCovariance::new(0.5, 3.0, Rect::UNIT).unwrap();
        let kl = build_kl(&cov, 1.0, KlTruncation::Terms(6)).unwrap();
        for (i, m) in kl.modes.iter().enumerate() {
            let v = kl.eval_mode(i, 0.5, 0.5).unwrap();
            if m.x_factor.parity == Parity::Odd || m.y_factor.parity == Parity::Odd {
                assert!(v.abs() < 1e-15);
            } else {
                assert!(v.abs() > 0.0);
            }
        }
    }

    #[test]
    fn ties_ordered_by_axis_index() {
        let cov = ExponentialCovariance::new(1.0, 4.0, Rect::UNIT).unwrap();
        let kl = build_kl(&cov, 1.0, KlTruncation::Terms(3)).unwrap();
        assert_eq!((kl.modes[1].kx, kl.modes[1].ky), (0, 1));
        assert_eq!((kl.modes[2].kx, kl.modes[2].ky), (1, 0));
    }

    #[test]
    fn outside_domain_is_rejected() {
        let cov = ExponentialCovariance::new(1.0, 4.0, Rect::UNIT).unwrap();
        let kl = build_kl(&cov, 1.0, KlTruncation::Terms(2)).unwrap();
        assert!(matches!(kl.eval_mode(0, 1.5, 0.5), Err(Error::OutsideDomain { .. })));
        assert!(matches!(kl.eval_mode(2, 0.5, 0.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn capture_unreachable_with_few_modes() {
        let cov = ExponentialCovariance::new(1.0, 0.5, Rect::UNIT).unwrap();
        let err = build_kl_with(&cov, 1.0, KlTruncation::Capture(0.99), 3).unwrap_err();
        assert!(matches!(err, Error::CaptureUnreachable { modes: 3, .. }));
    }

    #[test]
    fn invalid_parameters() {
        assert!(ExponentialCovariance::new(-1.0, 1.0, Rect::UNIT).is_err());
        assert!(ExponentialCovariance::new(1.0, 0.0, Rect::UNIT).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(solve_1d_eigenproblem(1.0, 1.0, 0).is_err());
    }
}
