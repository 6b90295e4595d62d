//! Krylov solvers: flexible GMRES for the outer saddle solves, and
//! CG / restarted GMRES used inside preconditioner applications.

use crate::sparse::{axpy, dot, norm2};

#[derive(Debug, Clone, Default)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Right-preconditioned flexible GMRES without restart.
///
/// `op` applies the system matrix, `precond` maps a residual-space vector
/// to a solution-space correction and may vary between iterations (hence
/// flexible). Convergence is relative to the initial residual norm, or to
/// the absolute floor when the right-hand side is tiny.
pub fn fgmres<A, M>(
    op: A,
    mut precond: M,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats)
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = x0.to_vec();
    let mut r = b.to_vec();
    let ax = op(&x);
    axpy(-1.0, &ax, &mut r);
    let beta = norm2(&r);
    let target = tol * beta.max(1e-300);
    if beta <= 1e-300 || beta <= tol * 1e-300 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                residual_norm: beta,
                converged: true,
            },
        );
    }

    let mut v: Vec<Vec<f64>> = vec![{
        let mut v0 = r.clone();
        for e in &mut v0 {
            *e /= beta;
        }
        v0
    }];
    let mut z: Vec<Vec<f64>> = Vec::new();
    // Hessenberg stored by column, plus Givens rotations.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut res = beta;
    let mut iters = 0;

    for j in 0..max_iter {
        iters = j + 1;
        let zj = precond(&v[j]);
        let mut w = op(&zj);
        if w.iter().any(|e| !e.is_finite()) {
            // a broken (preconditioned) direction cannot improve the basis;
            // stop with the residual estimate of the previous iteration
            iters = j;
            break;
        }
        z.push(zj);
        let mut hj = vec![0.0; j + 2];
        // modified Gram-Schmidt
        for (i, vi) in v.iter().enumerate() {
            hj[i] = dot(&w, vi);
            axpy(-hj[i], vi, &mut w);
        }
        hj[j + 1] = norm2(&w);
        // lucky breakdown: the Krylov space became invariant, the least
        // squares solution is exact and further iterations only divide by
        // (numerical) zero
        let breakdown = hj[j + 1] <= 1e-14 * beta;
        if !breakdown {
            let inv = 1.0 / hj[j + 1];
            let mut vn = w;
            for e in &mut vn {
                *e *= inv;
            }
            v.push(vn);
        } else {
            v.push(vec![0.0; n]);
        }
        // apply existing rotations
        for i in 0..j {
            let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
            hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
            hj[i] = t;
        }
        let denom = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
        let (c, s) = if denom > 1e-300 {
            (hj[j] / denom, hj[j + 1] / denom)
        } else {
            (1.0, 0.0)
        };
        cs.push(c);
        sn.push(s);
        hj[j] = denom;
        hj[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(hj);
        res = g[j + 1].abs();
        if res <= target || breakdown {
            break;
        }
    }

    // back substitution on the upper triangular system
    let m = iters;
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for k in (i + 1)..m {
            s -= h[k][i] * y[k];
        }
        y[i] = s / h[i][i];
    }
    for i in 0..m {
        axpy(y[i], &z[i], &mut x);
    }

    (
        x,
        KrylovStats {
            iterations: iters,
            residual_norm: res,
            converged: res <= target,
        },
    )
}

/// Preconditioned conjugate gradients for SPD systems, with optional
/// deflation of the constant vector (for consistent singular systems
/// whose kernel is spanned by constants).
pub fn cg<A, M>(
    op: A,
    precond: M,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    deflate_constants: bool,
) -> (Vec<f64>, KrylovStats)
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let remove_mean = |v: &mut Vec<f64>| {
        if deflate_constants && n > 0 {
            let mean: f64 = v.iter().sum::<f64>() / n as f64;
            for e in v.iter_mut() {
                *e -= mean;
            }
        }
    };
    let mut x = x0.to_vec();
    remove_mean(&mut x);
    let mut r = b.to_vec();
    let ax = op(&x);
    axpy(-1.0, &ax, &mut r);
    remove_mean(&mut r);
    let b0 = norm2(&r);
    let target = tol * b0.max(1e-300);
    if b0 <= 1e-300 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                residual_norm: b0,
                converged: true,
            },
        );
    }
    let mut zv = precond(&r);
    remove_mean(&mut zv);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    let mut res = b0;
    let mut iters = 0;
    for k in 0..max_iter {
        iters = k + 1;
        let mut ap = op(&p);
        remove_mean(&mut ap);
        let pap = dot(&p, &ap);
        // rounding can push pᵀAp through zero on ill-conditioned systems;
        // the short recurrence then diverges, so stop at the current iterate
        if !pap.is_finite() || pap <= 1e-300 * dot(&p, &p) {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let res_new = norm2(&r);
        if !res_new.is_finite() {
            axpy(-alpha, &p, &mut x);
            break;
        }
        res = res_new;
        if res <= target {
            break;
        }
        zv = precond(&r);
        remove_mean(&mut zv);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
    }
    (
        x,
        KrylovStats {
            iterations: iters,
            residual_norm: res,
            converged: res <= target,
        },
    )
}

/// Restarted GMRES(m) with a fixed right preconditioner, for the
/// nonsymmetric inner solves.
pub fn gmres_restarted<A, M>(
    op: A,
    precond: M,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats)
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let b0 = {
        let mut r = b.to_vec();
        let ax = op(&x);
        axpy(-1.0, &ax, &mut r);
        norm2(&r)
    };
    if b0 <= 1e-300 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                residual_norm: b0,
                converged: true,
            },
        );
    }
    let mut total = 0;
    let mut res = b0;
    while total < max_iter {
        let cycle = restart.min(max_iter - total);
        // absolute tolerance for the cycle so the overall criterion stays
        // relative to the original residual
        let rel = tol * b0 / res.max(1e-300);
        let (xn, stats) = fgmres(&op, |v: &[f64]| precond(v), b, &x, rel.min(1.0), cycle);
        x = xn;
        total += stats.iterations;
        res = stats.residual_norm;
        if res <= tol * b0 || stats.iterations == 0 {
            break;
        }
    }
    (
        x,
        KrylovStats {
            iterations: total,
            residual_norm: res,
            converged: res <= tol * b0,
        },
    )
}
