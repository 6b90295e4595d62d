//! Aggregation-based algebraic multigrid.
//!
//! Coarsening is two passes of pairwise aggregation (aggregate size up to
//! four) on the strength graph |a_ij|/sqrt(a_ii a_jj) >= 0.25, with
//! piecewise-constant prolongation and Galerkin coarse operators. The
//! V-cycle uses one symmetric Gauss-Seidel sweep for pre- and
//! post-smoothing and a dense factorization on the coarsest level.

use crate::krylov::{cg, gmres_restarted, KrylovStats};
use crate::sparse::{axpy, CsrMatrix};

const STRENGTH_THRESHOLD: f64 = 0.25;
const COARSEST_MAX: usize = 64;
const INNER_CAP: usize = 200;

struct Level {
    a: CsrMatrix,
    p: CsrMatrix, // prolongation to this level's fine grid (absent on coarsest)
}

pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarse_a: CsrMatrix,
    coarse_lu: DenseLu,
}

/// Dense LU with partial pivoting; falls back to a rank-revealing
/// Gauss-Jordan pseudo-solve when the matrix is singular (e.g. a pure
/// Neumann operator reaching the coarsest level).
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    singular: bool,
    dense: Vec<f64>, // original matrix, kept for the pseudo-solve path
}

impl DenseLu {
    fn factor(a: &CsrMatrix) -> DenseLu {
        let n = a.rows;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (j, val) in c.iter().zip(v) {
                m[i * n + j] = *val;
            }
        }
        DenseLu::factor_dense(n, m)
    }

    fn factor_dense(n: usize, m: Vec<f64>) -> DenseLu {
        let mut m = m;
        let dense = m.clone();
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let mut piv = vec![0usize; n];
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = m[k * n + k].abs();
            for i in (k + 1)..n {
                if m[i * n + k].abs() > best {
                    best = m[i * n + k].abs();
                    p = i;
                }
            }
            piv[k] = p;
            if best <= 1e-13 * scale {
                singular = true;
                break;
            }
            if p != k {
                for j in 0..n {
                    m.swap(k * n + j, p * n + j);
                }
            }
            let d = m[k * n + k];
            for i in (k + 1)..n {
                let f = m[i * n + k] / d;
                m[i * n + k] = f;
                for j in (k + 1)..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
        DenseLu {
            n,
            lu: m,
            piv,
            singular,
            dense,
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        if self.singular {
            return self.pseudo_solve(b);
        }
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            for i in (k + 1)..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    fn pseudo_solve(&self, b: &[f64]) -> Vec<f64> {
        // Gauss-Jordan with full pivoting on [A | b]; free variables are
        // set to zero, giving a particular solution of the consistent
        // system (inconsistent components are dropped).
        let n = self.n;
        let mut m = self.dense.clone();
        let mut rhs = b.to_vec();
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let mut pivot_col_of_row: Vec<Option<usize>> = vec![None; n];
        let mut used_col = vec![false; n];
        for row in 0..n {
            let mut best = 0.0;
            let mut bc = None;
            for (i, pc) in pivot_col_of_row.iter().enumerate() {
                if pc.is_some() {
                    continue;
                }
                for j in 0..n {
                    if !used_col[j] && m[i * n + j].abs() > best {
                        best = m[i * n + j].abs();
                        bc = Some((i, j));
                    }
                }
            }
            let _ = row;
            let (pi, pj) = match bc {
                Some(x) if best > 1e-12 * scale => x,
                _ => break,
            };
            pivot_col_of_row[pi] = Some(pj);
            used_col[pj] = true;
            let d = m[pi * n + pj];
            for j in 0..n {
                m[pi * n + j] /= d;
            }
            rhs[pi] /= d;
            for i in 0..n {
                if i == pi {
                    continue;
                }
                let f = m[i * n + pj];
                if f != 0.0 {
                    for j in 0..n {
                        m[i * n + j] -= f * m[pi * n + j];
                    }
                    rhs[i] -= f * rhs[pi];
                }
            }
        }
        let mut x = vec![0.0; n];
        for (i, pc) in pivot_col_of_row.iter().enumerate() {
            if let Some(j) = pc {
                x[*j] = rhs[i];
            }
        }
        x
    }
}

/// Dense factorization of a symmetric positive semidefinite operator whose
/// kernel is spanned by constants, regularized by a rank-one shift
/// σ/n·11ᵀ so plain LU applies. For range-space right-hand sides the
/// kernel component introduced by the shift is removed by the caller's
/// mean projection.
pub struct DenseSpsdSolver {
    lu: DenseLu,
}

impl DenseSpsdSolver {
    pub fn factor(a: &CsrMatrix) -> DenseSpsdSolver {
        let n = a.rows;
        let sigma: f64 = a.diag().iter().sum::<f64>() / n as f64;
        let mut m = vec![sigma / n as f64; n * n];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (j, val) in c.iter().zip(v) {
                m[i * n + j] += *val;
            }
        }
        DenseSpsdSolver {
            lu: DenseLu::factor_dense(n, m),
        }
    }

    /// Solve with one step of iterative refinement: the factors are
    /// backward stable but ‖S‖·‖x‖ can exceed ‖Sx‖ by many orders on the
    /// ill-conditioned Schur complements this is used for, and the callers
    /// need the residual small relative to b, not to ‖S‖·‖x‖.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x = self.lu.solve(b);
        let mut r = b.to_vec();
        for i in 0..n {
            let row = &self.lu.dense[i * n..(i + 1) * n];
            let mut s = 0.0;
            for (a, v) in row.iter().zip(&x) {
                s += a * v;
            }
            r[i] -= s;
        }
        let dx = self.lu.solve(&r);
        axpy(1.0, &dx, &mut x);
        x
    }
}

/// One pass of pairwise aggregation; returns the aggregate index of each
/// node and the number of aggregates.
fn pairwise_aggregate(a: &CsrMatrix) -> (Vec<usize>, usize) {
    let n = a.rows;
    let d: Vec<f64> = (0..n).map(|i| a.get(i, i).abs().max(1e-300)).collect();
    let mut agg = vec![usize::MAX; n];
    let mut count = 0;
    for i in 0..n {
        if agg[i] != usize::MAX {
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in cols.iter().zip(vals) {
            if *j == i || agg[*j] != usize::MAX {
                continue;
            }
            let s = v.abs() / (d[i] * d[*j]).sqrt();
            if s >= STRENGTH_THRESHOLD && best.map(|(_, bs)| s > bs).unwrap_or(true) {
                best = Some((*j, s));
            }
        }
        agg[i] = count;
        if let Some((j, _)) = best {
            agg[j] = count;
        }
        count += 1;
    }
    (agg, count)
}

fn prolongation(agg: &[usize], n_coarse: usize) -> CsrMatrix {
    let t: Vec<(usize, usize, f64)> = agg.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect();
    CsrMatrix::from_triplets(agg.len(), n_coarse, &t)
}

/// One symmetric Gauss-Seidel sweep (forward then backward) on Ax = b,
/// updating x in place.
fn sgs_sweep(a: &CsrMatrix, b: &[f64], x: &mut [f64]) {
    let n = a.rows;
    let sweep = |x: &mut [f64], forward: bool| {
        let order: Box<dyn Iterator<Item = usize>> = if forward {
            Box::new(0..n)
        } else {
            Box::new((0..n).rev())
        };
        for i in order {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            let mut d = 0.0;
            for (j, v) in cols.iter().zip(vals) {
                if *j == i {
                    d = *v;
                } else {
                    s -= v * x[*j];
                }
            }
            if d.abs() > 1e-300 {
                x[i] = s / d;
            }
        }
    };
    sweep(x, true);
    sweep(x, false);
}

pub fn amg_setup(a: &CsrMatrix) -> AmgHierarchy {
    assert_eq!(a.rows, a.cols, "AMG needs a square operator");
    let mut levels = Vec::new();
    let mut cur = a.clone();
    while cur.rows > COARSEST_MAX {
        // two pairwise passes composed into one prolongation
        let (agg1, n1) = pairwise_aggregate(&cur);
        let p1 = prolongation(&agg1, n1);
        let a1 = p1.transpose().matmul(&cur).matmul(&p1);
        let (agg2, n2) = pairwise_aggregate(&a1);
        let p2 = prolongation(&agg2, n2);
        let p = p1.matmul(&p2);
        let a2 = p2.transpose().matmul(&a1).matmul(&p2);
        if n2 >= cur.rows * 9 / 10 {
            break; // coarsening stalled
        }
        levels.push(Level { a: cur, p });
        cur = a2;
    }
    let coarse_lu = DenseLu::factor(&cur);
    AmgHierarchy {
        levels,
        coarse_a: cur,
        coarse_lu,
    }
}

impl AmgHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn coarsest_size(&self) -> usize {
        self.coarse_a.rows
    }

    /// One V-cycle applied to the residual equation, i.e. the action of
    /// an approximate inverse on `b` starting from zero.
    pub fn vcycle(&self, b: &[f64]) -> Vec<f64> {
        self.vcycle_level(0, b)
    }

    fn vcycle_level(&self, level: usize, b: &[f64]) -> Vec<f64> {
        if level == self.levels.len() {
            return self.coarse_lu.solve(b);
        }
        let lv = &self.levels[level];
        let mut x = vec![0.0; lv.a.rows];
        sgs_sweep(&lv.a, b, &mut x);
        let mut r = b.to_vec();
        axpy(-1.0, &lv.a.matvec(&x), &mut r);
        let rc = lv.p.matvec_transpose(&r);
        let ec = self.vcycle_level(level + 1, &rc);
        let e = lv.p.matvec(&ec);
        axpy(1.0, &e, &mut x);
        sgs_sweep(&lv.a, b, &mut x);
        x
    }

    /// AMG-preconditioned CG for SPD (or consistent singular SPD)
    /// systems. `deflate_constants` removes the constant component for
    /// operators whose kernel is spanned by constants.
    pub fn solve_spd(
        &self,
        a: &CsrMatrix,
        b: &[f64],
        x0: &[f64],
        tol: f64,
        deflate_constants: bool,
    ) -> (Vec<f64>, KrylovStats) {
        cg(
            |v| a.matvec(v),
            |r| self.vcycle(r),
            b,
            x0,
            tol,
            INNER_CAP,
            deflate_constants,
        )
    }

    /// AMG-preconditioned GMRES(30) for general systems.
    pub fn solve_general(
        &self,
        a: &CsrMatrix,
        b: &[f64],
        x0: &[f64],
        tol: f64,
    ) -> (Vec<f64>, KrylovStats) {
        gmres_restarted(|v| a.matvec(v), |r| self.vcycle(r), b, x0, tol, 30, INNER_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{dot, norm2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize, neumann: bool) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            let boundary = i == 0 || i == n - 1;
            let d = if neumann && boundary { 1.0 } else { 2.0 };
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn hierarchy_depth_and_coarsest_size() {
        let a = laplacian_1d(100, false);
        let h = amg_setup(&a);
        assert!(h.num_levels() >= 2, "levels {}", h.num_levels());
        assert!(h.coarsest_size() <= 64, "coarsest {}", h.coarsest_size());
    }

    #[test]
    fn galerkin_coarse_operator() {
        let a = laplacian_1d(100, false);
        let h = amg_setup(&a);
        // each coarse operator equals P^T A P of the level above
        let lv = &h.levels[0];
        let next = if h.levels.len() > 1 {
            &h.levels[1].a
        } else {
            &h.coarse_a
        };
        let g = lv.p.transpose().matmul(&lv.a).matmul(&lv.p);
        let diff = g.add_scaled(next, 1.0, -1.0);
        assert!(diff.max_abs() <= 1e-12, "galerkin mismatch {}", diff.max_abs());
    }

    #[test]
    fn vcycle_is_symmetric() {
        // symmetric smoothing + Galerkin coarse grids make the V-cycle a
        // symmetric operator: <M^{-1} u, v> = <u, M^{-1} v>
        let a = laplacian_1d(80, false);
        let h = amg_setup(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let u: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mu = h.vcycle(&u);
            let mv = h.vcycle(&v);
            let lhs = dot(&mu, &v);
            let rhs = dot(&u, &mv);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn spd_solve_converges() {
        let n = 200;
        let a = laplacian_1d(n, false);
        let b = vec![1.0; n];
        let h = amg_setup(&a);
        let (x, stats) = h.solve_spd(&a, &b, &vec![0.0; n], 1e-10, false);
        assert!(stats.converged);
        assert!(stats.iterations < 60, "iters {}", stats.iterations);
        let mut r = b.clone();
        axpy(-1.0, &a.matvec(&x), &mut r);
        assert!(norm2(&r) <= 1e-8 * norm2(&b));
    }

    #[test]
    fn singular_neumann_deflated_solve() {
        let n = 150;
        let a = laplacian_1d(n, true);
        let mut b: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.21).cos()).collect();
        let mean: f64 = b.iter().sum::<f64>() / n as f64;
        for e in &mut b {
            *e -= mean;
        }
        let h = amg_setup(&a);
        let (x, stats) = h.solve_spd(&a, &b, &vec![0.0; n], 1e-9, true);
        assert!(stats.converged, "res {}", stats.residual_norm);
        let mut r = b.clone();
        axpy(-1.0, &a.matvec(&x), &mut r);
        assert!(norm2(&r) <= 1e-7 * norm2(&b));
        let xm: f64 = x.iter().sum::<f64>() / n as f64;
        assert!(xm.abs() <= 1e-8);
    }

    #[test]
    fn general_solve_nonsymmetric() {
        // upwind convection-diffusion, nonsymmetric
        let n = 120;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 1.0));
            if i > 0 {
                t.push((i, i - 1, -1.0 - 1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b = vec![1.0; n];
        let h = amg_setup(&a);
        let (x, stats) = h.solve_general(&a, &b, &vec![0.0; n], 1e-9);
        assert!(stats.converged);
        let mut r = b.clone();
        axpy(-1.0, &a.matvec(&x), &mut r);
        assert!(norm2(&r) <= 1e-7 * norm2(&b));
    }
}
