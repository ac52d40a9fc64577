//! Matrix-free Krylov solvers for ordinary vectors: preconditioned conjugate
//! gradients and restarted GMRES with right preconditioning.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{axpy, dot, hypot, norm2};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned CG for a symmetric positive definite operator.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(r, z)` writes `P⁻¹ r` into `z`.
pub fn cg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Outcome> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(Outcome {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    if x0.is_some() {
        apply(&x, &mut ax);
        axpy(-1.0, &ax, &mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(Outcome {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Stagnation {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm2(&r) / bnorm;
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    if rel <= tol {
        return Ok(Outcome {
            x,
            iterations: max_iter,
            rel_residual: rel,
        });
    }
    Err(Error::Stagnation {
        iterations: max_iter,
        residual: rel,
    })
}

/// Restarted GMRES(`restart`) with right preconditioning.
///
/// Convergence is judged on the true residual `‖b − A x‖ / ‖b‖` recomputed at
/// each restart.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Outcome> {
    let n = b.len();
    let m = restart.max(1);
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(Outcome {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut tmp = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut total = 0;
    loop {
        let mut r = b.to_vec();
        apply(&x, &mut tmp);
        axpy(-1.0, &tmp, &mut r);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(Outcome {
                x,
                iterations: total,
                rel_residual: rel,
            });
        }
        if total >= max_iter {
            return Err(Error::Stagnation {
                iterations: total,
                residual: rel,
            });
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        // Hessenberg columns, already rotated.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < max_iter {
            precond(&v[k], &mut tmp);
            apply(&tmp, &mut w);
            total += 1;
            let mut hk = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                hk[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            // One step of reorthogonalization keeps the basis clean.
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                hk[i] += c;
                axpy(-c, vi, &mut w);
            }
            let wn = norm2(&w);
            hk[k + 1] = wn;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (hk[i], hk[i + 1]);
                hk[i] = c * a + s * bb;
                hk[i + 1] = -s * a + c * bb;
            }
            let d = hypot(hk[k], hk[k + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (hk[k] / d, hk[k + 1] / d) };
            hk[k] = d;
            hk[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push((c, s));
            h.push(hk);
            k += 1;
            if wn == 0.0 || crate::math::abs(g[k]) / bnorm <= tol {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        // Back substitution for the k×k triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { s / h[i][i] };
        }
        let mut dx = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            axpy(*yi, vi, &mut dx);
        }
        precond(&dx, &mut tmp);
        axpy(1.0, &tmp, &mut x);
    }
}
