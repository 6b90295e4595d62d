//! The four right preconditioners for the reduced saddle-point system,
//! plus the commutator identity diagnostic behind the BB Schur
//! approximation.
//!
//! All appliers are inexact (inner AMG-Krylov solves) and therefore used
//! inside flexible GMRES. Each kind designates one inner system whose
//! iterations are accumulated in `inner_iterations`; that is the number
//! reported as Inner/Outer.

use crate::amg::{amg_setup, AmgHierarchy, DenseSpsdSolver};
use crate::error::Result;
use crate::mesh::CoarseMesh;
use crate::ops::{assemble_b_tilde, assemble_spatial_coarse, projector_apply, projector_apply_t};
use crate::sparse::CsrMatrix;
use crate::state::{Problem, PrimalDualState, SaddleSystem};

pub const HSS_ALPHA: f64 = 0.5;
/// inner tolerance for the designated solves (ε_in); BB block solves use
/// the looser [`BB_BLOCK_TOL`] instead
pub const INNER_TOL: f64 = 1e-1;
pub const BB_BLOCK_TOL: f64 = 5e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecondKind {
    Hss { alpha: f64 },
    PrimalSchur,
    Simple,
    Bb,
}

impl PrecondKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrecondKind::Hss { .. } => "hss",
            PrecondKind::PrimalSchur => "primal-schur",
            PrecondKind::Simple => "simple",
            PrecondKind::Bb => "bb",
        }
    }

    pub fn parse(s: &str) -> Option<PrecondKind> {
        match s {
            "hss" => Some(PrecondKind::Hss { alpha: HSS_ALPHA }),
            "primal-schur" => Some(PrecondKind::PrimalSchur),
            "simple" => Some(PrecondKind::Simple),
            "bb" => Some(PrecondKind::Bb),
            _ => None,
        }
    }

    /// The BB preconditioner works on the shifted formulation (φ̃, λ).
    pub fn shifted(&self) -> bool {
        matches!(self, PrecondKind::Bb)
    }
}

enum PrecondData {
    Hss {
        alpha: f64,
        /// 1/√|diag| of the skew-form matrix, potential part then density part
        dis1: Vec<f64>,
        dis2: Vec<f64>,
        /// (Â_k + αI, hierarchy), K+1 blocks
        a_shift: Vec<(CsrMatrix, AmgHierarchy)>,
        /// (Ĉ + αI)⁻¹ diagonal
        c_shift_inv: Vec<f64>,
        b_hat: CsrMatrix,
        /// αI + B̂B̂ᵀ/α
        k_mat: CsrMatrix,
        k_amg: AmgHierarchy,
    },
    PrimalSchur {
        c_inv: Vec<f64>,
        s_mat: CsrMatrix,
        solver: SchurSolver,
    },
    Simple {
        a_diag_inv: Vec<f64>,
        /// −S̃ = C + BÂ⁻¹Bᵀ (SPD)
        s_mat: CsrMatrix,
        s_amg: AmgHierarchy,
    },
    Bb {
        /// block-diagonal coarse weighted Laplacian, K blocks
        a_tilde: CsrMatrix,
        b_tilde: CsrMatrix,
        /// Eq. 4.26 matrix C·M̄⁻¹·Ã − B·M⁻¹·B̃
        w_mat: CsrMatrix,
        w_amg: AmgHierarchy,
        /// hierarchies for the singular fine blocks A_k
        a_amgs: Vec<AmgHierarchy>,
        /// 1/M̄ repeated over the K density slices
        mbar_inv: Vec<f64>,
    },
}

pub struct Precond {
    pub kind: PrecondKind,
    data: PrecondData,
    /// iterations of the designated inner system, accumulated per solve
    pub inner_iterations: usize,
    /// number of preconditioner applications (outer FGMRES iterations)
    pub applications: usize,
    /// inner solves that hit the cap without converging
    pub stall_events: usize,
    pub inner_tol: f64,
    pub block_tol: f64,
}

fn safe_inv_sqrt(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|&v| {
            let a = v.abs();
            if a > 0.0 {
                1.0 / a.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

pub fn setup(
    kind: PrecondKind,
    p: &Problem,
    sys: &SaddleSystem,
    st: &PrimalDualState,
) -> Result<Precond> {
    let data = match kind {
        PrecondKind::Hss { alpha } => setup_hss(sys, alpha),
        PrecondKind::PrimalSchur => setup_primal_schur(sys),
        PrecondKind::Simple => setup_simple(sys),
        PrecondKind::Bb => setup_bb(p, sys, st),
    };
    Ok(Precond {
        kind,
        data,
        inner_iterations: 0,
        applications: 0,
        stall_events: 0,
        inner_tol: INNER_TOL,
        block_tol: BB_BLOCK_TOL,
    })
}

fn setup_hss(sys: &SaddleSystem, alpha: f64) -> PrecondData {
    assert!(alpha > 0.0, "HSS shift must be positive");
    let nt = sys.nt;
    let mut d1 = Vec::with_capacity(sys.n);
    for a in &sys.a_blocks {
        d1.extend(a.diag());
    }
    let dis1 = safe_inv_sqrt(&d1);
    let dis2 = safe_inv_sqrt(&sys.c_diag);
    let eye = CsrMatrix::identity(nt);
    let a_shift: Vec<(CsrMatrix, AmgHierarchy)> = sys
        .a_blocks
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let d = &dis1[k * nt..(k + 1) * nt];
            let ahat = a.scale_rows(d).scale_cols(d);
            let shifted = ahat.add_scaled(&eye, 1.0, alpha);
            let amg = amg_setup(&shifted);
            (shifted, amg)
        })
        .collect();
    let c_shift_inv: Vec<f64> = sys
        .c_diag
        .iter()
        .zip(&dis2)
        .map(|(c, d)| 1.0 / (c * d * d + alpha))
        .collect();
    let b_hat = sys.b.scale_rows(&dis2).scale_cols(&dis1);
    let mut bbt = b_hat.matmul(&b_hat.transpose());
    bbt.scale(1.0 / alpha);
    let k_mat = bbt.add_scaled(&CsrMatrix::identity(sys.m), 1.0, alpha);
    let k_amg = amg_setup(&k_mat);
    PrecondData::Hss {
        alpha,
        dis1,
        dis2,
        a_shift,
        c_shift_inv,
        b_hat,
        k_mat,
        k_amg,
    }
}

/// Inner solver for the primal Schur complement S = A + BᵀC⁻¹B.
///
/// The triangular application is only as accurate as the residual of the
/// S-solve measured against the original right-hand side, and the primal
/// Schur rhs w = r1 + BᵀC⁻¹r2 is amplified by ‖C⁻¹‖ (→ ∞ as μ → 0), so an
/// iterative solve with a relaxed relative tolerance injects noise that
/// dwarfs the signal at small μ. At desk scales a regularized dense
/// factorization applies S⁻¹ to machine accuracy instead; the multigrid
/// path remains for systems too large to factor densely.
enum SchurSolver {
    Direct(DenseSpsdSolver),
    Amg(AmgHierarchy),
}

/// largest S factored densely (n² doubles of storage, n³/3 flops once)
const PRIMAL_DIRECT_MAX: usize = 4096;

fn setup_primal_schur(sys: &SaddleSystem) -> PrecondData {
    let c_inv: Vec<f64> = sys.c_diag.iter().map(|c| 1.0 / c).collect();
    let btc = sys.b.transpose().scale_cols(&c_inv);
    let s_mat = sys.a_matrix().add_scaled(&btc.matmul(&sys.b), 1.0, 1.0);
    let solver = if sys.n <= PRIMAL_DIRECT_MAX {
        SchurSolver::Direct(DenseSpsdSolver::factor(&s_mat))
    } else {
        SchurSolver::Amg(amg_setup(&s_mat))
    };
    PrecondData::PrimalSchur { c_inv, s_mat, solver }
}

fn setup_simple(sys: &SaddleSystem) -> PrecondData {
    let mut a_diag = Vec::with_capacity(sys.n);
    for a in &sys.a_blocks {
        a_diag.extend(a.diag());
    }
    let a_diag_inv: Vec<f64> = a_diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let badbt = sys.b.scale_cols(&a_diag_inv).matmul(&sys.b.transpose());
    let s_mat = badbt.add_scaled(&CsrMatrix::from_diag(&sys.c_diag), 1.0, 1.0);
    let s_amg = amg_setup(&s_mat);
    PrecondData::Simple {
        a_diag_inv,
        s_mat,
        s_amg,
    }
}

/// Arithmetic reconstruction onto coarse internal edges (the coarse-mesh
/// analog of R).
pub fn coarse_r_edges(c: &CoarseMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(2 * c.internal_edges.len());
    for (e, edge) in c.internal_edges.iter().enumerate() {
        let v0 = c.vertices[edge.v0];
        let v1 = c.vertices[edge.v1];
        let dist = |cc: [f64; 2]| -> f64 {
            let ex = v1[0] - v0[0];
            let ey = v1[1] - v0[1];
            let len = (ex * ex + ey * ey).sqrt();
            ((ex * (cc[1] - v0[1]) - ey * (cc[0] - v0[0])) / len).abs()
        };
        let dl = dist(c.circumcenters[edge.left]);
        let dr = dist(c.circumcenters[edge.right]);
        let lam = if dl + dr > 0.0 { dl / (dl + dr) } else { 0.5 };
        t.push((e, edge.left, lam));
        t.push((e, edge.right, 1.0 - lam));
    }
    CsrMatrix::from_triplets(c.internal_edges.len(), c.num_cells(), &t)
}

/// Ã_k = −div̄·diag(R̄(ρᵏ))·grad̄ on the coarse mesh, one block per
/// interior density level.
pub fn assemble_a_tilde(p: &Problem, rho: &[f64]) -> CsrMatrix {
    let nbar = p.nbar();
    let r_bar = coarse_r_edges(&p.two.coarse);
    let blocks: Vec<CsrMatrix> = (0..p.grid.k)
        .map(|k| {
            let rho_e = r_bar.matvec(&rho[k * nbar..(k + 1) * nbar]);
            let mut a = p
                .coarse_sp
                .div
                .scale_cols(&rho_e)
                .matmul(&p.coarse_sp.grad);
            a.scale(-1.0);
            a
        })
        .collect();
    let refs: Vec<&CsrMatrix> = blocks.iter().collect();
    CsrMatrix::block_diag(&refs)
}

/// The Eq. 4.26 matrix C·M̄⁻¹·Ã − B·M⁻¹·B̃.
pub fn assemble_bb_schur(
    p: &Problem,
    sys: &SaddleSystem,
    a_tilde: &CsrMatrix,
    b_tilde: &CsrMatrix,
) -> CsrMatrix {
    let nbar = p.nbar();
    let row_w: Vec<f64> = (0..sys.m)
        .map(|i| sys.c_diag[i] / p.two.mass_coarse[i % nbar])
        .collect();
    let a_part = a_tilde.scale_rows(&row_w);
    let m_inv: Vec<f64> = (0..sys.n)
        .map(|i| 1.0 / p.two.mass_fine[i % p.nt()])
        .collect();
    let b_part = sys.b.scale_cols(&m_inv).matmul(b_tilde);
    a_part.add_scaled(&b_part, 1.0, -1.0)
}

fn setup_bb(p: &Problem, sys: &SaddleSystem, st: &PrimalDualState) -> PrecondData {
    let a_tilde = assemble_a_tilde(p, &st.rho);
    let b_tilde = assemble_b_tilde(&p.two, &p.grid, &p.fine_sp, &p.recon, &st.phi, &sys.blocks);
    let w_mat = assemble_bb_schur(p, sys, &a_tilde, &b_tilde);
    let w_amg = amg_setup(&w_mat);
    let a_amgs: Vec<AmgHierarchy> = sys.a_blocks.iter().map(amg_setup).collect();
    let mbar_inv: Vec<f64> = (0..sys.m)
        .map(|i| 1.0 / p.two.mass_coarse[i % p.nbar()])
        .collect();
    PrecondData::Bb {
        a_tilde,
        b_tilde,
        w_mat,
        w_amg,
        a_amgs,
        mbar_inv,
    }
}

/// Matrix-vector product of the outer system a preconditioner kind is
/// paired with: the plain saddle form, or the projected system of the
/// shifted formulation for BB.
pub fn system_apply(kind: PrecondKind, p: &Problem, sys: &SaddleSystem, x: &[f64]) -> Vec<f64> {
    if !kind.shifted() {
        return sys.apply(x);
    }
    let (xp, xr) = x.split_at(sys.n);
    let ptx = projector_apply_t(&p.two, &p.grid, xr);
    let mut top = sys.a_apply(xp);
    for (t, v) in top.iter_mut().zip(&sys.b.matvec_transpose(&ptx)) {
        *t += v;
    }
    let bx = sys.b.matvec(xp);
    let cpt: Vec<f64> = ptx.iter().zip(&sys.c_diag).map(|(v, c)| c * v).collect();
    let diff: Vec<f64> = bx.iter().zip(&cpt).map(|(a, b)| a - b).collect();
    let mut out = top;
    out.extend(projector_apply(&p.two, &p.grid, &diff));
    out
}

/// Right-hand side of the outer system: (f; g̃), projected for BB.
pub fn system_rhs(kind: PrecondKind, p: &Problem, sys: &SaddleSystem) -> Vec<f64> {
    let mut rhs = sys.f.clone();
    if kind.shifted() {
        rhs.extend(projector_apply(&p.two, &p.grid, &sys.g_tilde));
    } else {
        rhs.extend(sys.g_tilde.iter().copied());
    }
    rhs
}

impl Precond {
    pub fn apply(&mut self, p: &Problem, sys: &SaddleSystem, r: &[f64]) -> Vec<f64> {
        self.applications += 1;
        let (r1, r2) = r.split_at(sys.n);
        match &self.data {
            PrecondData::Hss {
                alpha,
                dis1,
                dis2,
                a_shift,
                c_shift_inv,
                b_hat,
                k_mat,
                k_amg,
            } => {
                // skew flip and symmetric diagonal scaling
                let rh1: Vec<f64> = r1.iter().zip(dis1).map(|(v, d)| v * d).collect();
                let rh2: Vec<f64> = r2.iter().zip(dis2).map(|(v, d)| -v * d).collect();
                // K_α⁻¹ via the dual Schur route (Eq. 4.6)
                let mut rhs2 = b_hat.matvec(&rh1);
                for (o, v) in rhs2.iter_mut().zip(&rh2) {
                    *o = *o / alpha + v;
                }
                let (y2, stats) =
                    k_amg.solve_general(k_mat, &rhs2, &vec![0.0; sys.m], self.inner_tol);
                self.inner_iterations += stats.iterations;
                if !stats.converged {
                    self.stall_events += 1;
                }
                let bty2 = b_hat.matvec_transpose(&y2);
                let y1: Vec<f64> = rh1
                    .iter()
                    .zip(&bty2)
                    .map(|(v, b)| (v - b) / alpha)
                    .collect();
                // H_α⁻¹: K+1 shifted-Laplacian solves and a diagonal solve
                let nt = sys.nt;
                let mut z1 = vec![0.0; sys.n];
                for (k, (mat, amg)) in a_shift.iter().enumerate() {
                    let (zk, _) = amg.solve_spd(
                        mat,
                        &y1[k * nt..(k + 1) * nt],
                        &vec![0.0; nt],
                        self.inner_tol,
                        false,
                    );
                    z1[k * nt..(k + 1) * nt].copy_from_slice(&zk);
                }
                let z2: Vec<f64> = y2.iter().zip(c_shift_inv).map(|(v, c)| v * c).collect();
                let mut out: Vec<f64> = z1.iter().zip(dis1).map(|(v, d)| v * d).collect();
                out.extend(z2.iter().zip(dis2).map(|(v, d)| v * d));
                out
            }
            PrecondData::PrimalSchur { c_inv, s_mat, solver } => {
                // upper factor: w = r1 + BᵀC⁻¹r2
                let t: Vec<f64> = r2.iter().zip(c_inv).map(|(v, c)| v * c).collect();
                let mut w = sys.b.matvec_transpose(&t);
                for (o, v) in w.iter_mut().zip(r1) {
                    *o += v;
                }
                // S is symmetric positive semidefinite with constant kernel;
                // project onto its range before and after the solve
                remove_mean(&mut w);
                let mut z1 = match solver {
                    SchurSolver::Direct(lu) => {
                        self.inner_iterations += 1;
                        lu.solve(&w)
                    }
                    SchurSolver::Amg(s_amg) => {
                        let (z1, stats) =
                            s_amg.solve_spd(s_mat, &w, &vec![0.0; sys.n], self.inner_tol, true);
                        self.inner_iterations += stats.iterations;
                        if !stats.converged {
                            self.stall_events += 1;
                        }
                        z1
                    }
                };
                remove_mean(&mut z1);
                // lower factor: z2 = C⁻¹(Bz1 − r2)
                let bz = sys.b.matvec(&z1);
                let z2: Vec<f64> = bz
                    .iter()
                    .zip(r2)
                    .zip(c_inv)
                    .map(|((b, v), c)| (b - v) * c)
                    .collect();
                let mut out = z1;
                out.extend(z2);
                out
            }
            PrecondData::Simple {
                a_diag_inv,
                s_mat,
                s_amg,
            } => {
                let u1: Vec<f64> = r1.iter().zip(a_diag_inv).map(|(v, d)| v * d).collect();
                // S̃z2 = r2 − Bu1 with S̃ = −(C + BÂ⁻¹Bᵀ); solve the SPD
                // negative instead
                let bu = sys.b.matvec(&u1);
                let rhs: Vec<f64> = bu.iter().zip(r2).map(|(b, v)| b - v).collect();
                let (z2, stats) =
                    s_amg.solve_spd(s_mat, &rhs, &vec![0.0; sys.m], self.inner_tol, false);
                self.inner_iterations += stats.iterations;
                if !stats.converged {
                    self.stall_events += 1;
                }
                let btz = sys.b.matvec_transpose(&z2);
                let z1: Vec<f64> = u1
                    .iter()
                    .zip(&btz)
                    .zip(a_diag_inv)
                    .map(|((u, b), d)| u - b * d)
                    .collect();
                let mut out = z1;
                out.extend(z2);
                out
            }
            PrecondData::Bb {
                a_tilde,
                w_mat,
                w_amg,
                a_amgs,
                mbar_inv,
                ..
            } => {
                // (i) Schur approximation solve (Eq. 4.26)
                let neg_r2: Vec<f64> = r2.iter().map(|v| -v).collect();
                let (z, stats) =
                    w_amg.solve_general(w_mat, &neg_r2, &vec![0.0; sys.m], self.inner_tol);
                self.inner_iterations += stats.iterations;
                if !stats.converged {
                    self.stall_events += 1;
                }
                // (ii) y = Pᵀ·(M̄⁻¹Ãz)
                let az = a_tilde.matvec(&z);
                let y0: Vec<f64> = az.iter().zip(mbar_inv).map(|(v, m)| v * m).collect();
                let y = projector_apply_t(&p.two, &p.grid, &y0);
                // (iii) K+1 deflated block solves on r1 − Bᵀy
                let bty = sys.b.matvec_transpose(&y);
                let t: Vec<f64> = r1.iter().zip(&bty).map(|(a, b)| a - b).collect();
                let nt = sys.nt;
                let mut x = vec![0.0; sys.n];
                for (k, amg) in a_amgs.iter().enumerate() {
                    let mut bk = t[k * nt..(k + 1) * nt].to_vec();
                    remove_mean(&mut bk);
                    let (mut xk, _) =
                        amg.solve_spd(&sys.a_blocks[k], &bk, &vec![0.0; nt], self.block_tol, true);
                    remove_mean(&mut xk);
                    x[k * nt..(k + 1) * nt].copy_from_slice(&xk);
                }
                x.extend(y);
                x
            }
        }
    }

    /// Export handles for `export-system`: auxiliary matrices with stable
    /// names.
    pub fn export_matrices(&self) -> Vec<(&'static str, &CsrMatrix)> {
        match &self.data {
            PrecondData::Hss { k_mat, .. } => vec![("hss_k", k_mat)],
            PrecondData::PrimalSchur { s_mat, .. } => vec![("schur_s", s_mat)],
            PrecondData::Simple { s_mat, .. } => vec![("simple_s", s_mat)],
            PrecondData::Bb {
                a_tilde,
                b_tilde,
                w_mat,
                ..
            } => vec![
                ("bb_a_tilde", a_tilde),
                ("bb_b_tilde", b_tilde),
                ("bb_schur", w_mat),
            ],
        }
    }
}

/// Recover the eliminated shift increment of the BB formulation:
/// δλ = (Ē g̃ − Ē B δφ̃ + Ē C δρ)/|Ω|.
pub fn bb_recover_shift(p: &Problem, sys: &SaddleSystem, dphi: &[f64], drho: &[f64]) -> Vec<f64> {
    let nbar = p.nbar();
    let omega = p.two.coarse.domain_area;
    let b_dphi = sys.b.matvec(dphi);
    (0..p.grid.k)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..nbar {
                let idx = k * nbar + i;
                s += sys.g_tilde[idx] - b_dphi[idx] + sys.c_diag[idx] * drho[idx];
            }
            s / omega
        })
        .collect()
}

/// δφᵏ = δφ̃ᵏ + Σ_{i<k} Δt·δλⁱ, the return map from the shifted to the
/// original potential.
pub fn bb_unshift_phi(p: &Problem, dphi_tilde: &[f64], dlambda: &[f64]) -> Vec<f64> {
    let nt = p.nt();
    let mut out = dphi_tilde.to_vec();
    let mut cum = 0.0;
    for k in 0..=p.grid.k {
        if k > 0 {
            cum += p.grid.dt * dlambda[k - 1];
        }
        for v in &mut out[k * nt..(k + 1) * nt] {
            *v += cum;
        }
    }
    out
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m: f64 = v.iter().sum::<f64>() / v.len() as f64;
    for e in v.iter_mut() {
        *e -= m;
    }
}

/// Per-mesh output of [`commutator_residual`]: the relative norm of the
/// identity defect (corrections included) and the relative size of the
/// two correction terms themselves.
#[derive(Debug, Clone, Copy)]
pub struct CommutatorReport {
    pub residual: f64,
    pub corrections: f64,
}

/// Discrete check of the commutator identity behind the BB Schur
/// approximation (Prop. 4.1). For each mesh, both sides of the identity
/// are evaluated on a smooth test function; the relative norm of
/// LHS − RHS (corrections included) is returned, together with the norm
/// of the neglected correction terms.
///
/// `rho(t, x)` must be positive and smooth; `phi(x)` is time-independent;
/// the test function should be compactly supported inside the domain so
/// the no-flux discrete boundary does not pollute the comparison. The
/// pointwise comparison is only meaningful on meshes where the two-point
/// flux is pointwise consistent (e.g. uniform acute triangulations).
pub fn commutator_residual<R, F, U>(
    rho: R,
    phi: F,
    u: U,
    meshes: &[CoarseMesh],
    t: f64,
) -> Vec<CommutatorReport>
where
    R: Fn(f64, [f64; 2]) -> f64,
    F: Fn([f64; 2]) -> f64,
    U: Fn(f64, [f64; 2]) -> f64,
{
    let hs = 1e-5; // spatial FD step for the analytic fields
    let ht = 1e-4; // temporal FD step
    let grad_phi = |x: [f64; 2]| -> [f64; 2] {
        [
            (phi([x[0] + hs, x[1]]) - phi([x[0] - hs, x[1]])) / (2.0 * hs),
            (phi([x[0], x[1] + hs]) - phi([x[0], x[1] - hs])) / (2.0 * hs),
        ]
    };
    let grad_u = |tv: f64, x: [f64; 2]| -> [f64; 2] {
        [
            (u(tv, [x[0] + hs, x[1]]) - u(tv, [x[0] - hs, x[1]])) / (2.0 * hs),
            (u(tv, [x[0], x[1] + hs]) - u(tv, [x[0], x[1] - hs])) / (2.0 * hs),
        ]
    };
    let hess_phi = |x: [f64; 2]| -> [[f64; 2]; 2] {
        let gxp = grad_phi([x[0] + hs, x[1]]);
        let gxm = grad_phi([x[0] - hs, x[1]]);
        let gyp = grad_phi([x[0], x[1] + hs]);
        let gym = grad_phi([x[0], x[1] - hs]);
        [
            [
                (gxp[0] - gxm[0]) / (2.0 * hs),
                (gyp[0] - gym[0]) / (2.0 * hs),
            ],
            [
                (gxp[1] - gxm[1]) / (2.0 * hs),
                (gyp[1] - gym[1]) / (2.0 * hs),
            ],
        ]
    };
    meshes
        .iter()
        .map(|mesh| {
            let sp = assemble_spatial_coarse(mesh);
            let r_bar = coarse_r_edges(mesh);
            let nc = mesh.num_cells();
            let centers = &mesh.circumcenters;
            let sample = |f: &dyn Fn([f64; 2]) -> f64| -> Vec<f64> {
                centers.iter().map(|&c| f(c)).collect()
            };
            // discrete −Δ_ρ at time tv applied to a cell vector
            let lap_rho = |tv: f64, v: &[f64]| -> Vec<f64> {
                let rho_c: Vec<f64> = centers.iter().map(|&c| rho(tv, c)).collect();
                let rho_e = r_bar.matvec(&rho_c);
                let gv = sp.grad.matvec(v);
                let flux: Vec<f64> = rho_e.iter().zip(&gv).map(|(r, g)| r * g).collect();
                let dv = sp.div.matvec(&flux);
                dv.iter()
                    .zip(&mesh.cell_areas)
                    .map(|(q, a)| -q / a)
                    .collect()
            };
            // discrete Div(v∇φ) for a cell vector v
            let phi_c = sample(&|x| phi(x));
            let gphi_e = sp.grad.matvec(&phi_c);
            let transport = |v: &[f64]| -> Vec<f64> {
                let ve = r_bar.matvec(v);
                let flux: Vec<f64> = ve.iter().zip(&gphi_e).map(|(a, b)| a * b).collect();
                sp.div
                    .matvec(&flux)
                    .iter()
                    .zip(&mesh.cell_areas)
                    .map(|(q, a)| q / a)
                    .collect()
            };
            // discrete divergence of an analytic vector field via edge
            // normal fluxes
            let div_field = |field: &dyn Fn([f64; 2]) -> [f64; 2]| -> Vec<f64> {
                let mut out = vec![0.0; nc];
                for (e, edge) in mesh.internal_edges.iter().enumerate() {
                    let cl = centers[edge.left];
                    let cr = centers[edge.right];
                    let w = mesh.center_distances[e];
                    let n = [(cr[0] - cl[0]) / w, (cr[1] - cl[1]) / w];
                    let v0 = mesh.vertices[edge.v0];
                    let v1 = mesh.vertices[edge.v1];
                    let mid = [(v0[0] + v1[0]) / 2.0, (v0[1] + v1[1]) / 2.0];
                    let f = field(mid);
                    let q = (f[0] * n[0] + f[1] * n[1]) * mesh.edge_lengths[e];
                    out[edge.left] += q;
                    out[edge.right] -= q;
                }
                out.iter().zip(&mesh.cell_areas).map(|(q, a)| q / a).collect()
            };
            let u_c = |tv: f64| -> Vec<f64> { centers.iter().map(|&c| u(tv, c)).collect() };
            // LHS = d/dt[−Δ_ρ u] + Div((−Δ_ρ u)∇φ)
            let v_now = lap_rho(t, &u_c(t));
            let v_p = lap_rho(t + ht, &u_c(t + ht));
            let v_m = lap_rho(t - ht, &u_c(t - ht));
            let tv = transport(&v_now);
            let lhs: Vec<f64> = (0..nc)
                .map(|i| (v_p[i] - v_m[i]) / (2.0 * ht) + tv[i])
                .collect();
            // RHS1 = −Δ_ρ(∂t u + ∇φ·∇u)
            let adv: Vec<f64> = centers
                .iter()
                .map(|&c| {
                    let du = (u(t + ht, c) - u(t - ht, c)) / (2.0 * ht);
                    let gp = grad_phi(c);
                    let gu = grad_u(t, c);
                    du + gp[0] * gu[0] + gp[1] * gu[1]
                })
                .collect();
            let rhs1 = lap_rho(t, &adv);
            // correction 1: −Div((∂tρ + Div(ρ∇φ))∇u)
            let wfun: Vec<f64> = centers
                .iter()
                .map(|&c| {
                    let drho = (rho(t + ht, c) - rho(t - ht, c)) / (2.0 * ht);
                    // Div(ρ∇φ) by analytic FD of the product field
                    let fld = |x: [f64; 2]| -> [f64; 2] {
                        let g = grad_phi(x);
                        [rho(t, x) * g[0], rho(t, x) * g[1]]
                    };
                    let dx = (fld([c[0] + hs, c[1]])[0] - fld([c[0] - hs, c[1]])[0]) / (2.0 * hs);
                    let dy = (fld([c[0], c[1] + hs])[1] - fld([c[0], c[1] - hs])[1]) / (2.0 * hs);
                    drho + dx + dy
                })
                .collect();
            let corr1 = {
                let we = r_bar.matvec(&wfun);
                let gu_e = sp.grad.matvec(&u_c(t));
                let flux: Vec<f64> = we.iter().zip(&gu_e).map(|(a, b)| a * b).collect();
                let dv = sp.div.matvec(&flux);
                dv.iter()
                    .zip(&mesh.cell_areas)
                    .map(|(q, a)| -q / a)
                    .collect::<Vec<f64>>()
            };
            // correction 2: 2·Div(ρ∇²φ∇u)
            let corr2 = div_field(&|x: [f64; 2]| {
                let h = hess_phi(x);
                let gu = grad_u(t, x);
                let r = rho(t, x);
                [
                    2.0 * r * (h[0][0] * gu[0] + h[0][1] * gu[1]),
                    2.0 * r * (h[1][0] * gu[0] + h[1][1] * gu[1]),
                ]
            });
            let mut num = 0.0;
            let mut corr = 0.0;
            let mut den = 0.0;
            for i in 0..nc {
                let d = lhs[i] - rhs1[i] - corr1[i] - corr2[i];
                let c = corr1[i] + corr2[i];
                num += mesh.cell_areas[i] * d * d;
                corr += mesh.cell_areas[i] * c * c;
                den += mesh.cell_areas[i] * lhs[i] * lhs[i];
            }
            let den = den.max(1e-300);
            CommutatorReport {
                residual: (num / den).sqrt(),
                corrections: (corr / den).sqrt(),
            }
        })
        .collect()
}
