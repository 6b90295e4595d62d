//! Inexact Newton interior-point driver with μ-continuation.

use crate::error::Result;
use crate::krylov::fgmres;
use crate::precond::{bb_recover_shift, setup, system_apply, system_rhs, PrecondKind};
use crate::state::{
    assemble_saddle, initial_state, recover_slack, renormalize, residual_norm, step_length,
    PrimalDualState, Problem,
};
use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct IpConfig {
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_min: f64,
    /// inexact-Newton forcing term: outer FGMRES stops at ε_out·‖(f;g;h)‖
    pub eps_out: f64,
    /// Newton stops at ‖F‖ ≤ newton_tol·(1 + ‖F‖ at the start of the μ step)
    pub newton_tol: f64,
    pub newton_max: usize,
    /// fraction-to-boundary parameter
    pub tau: f64,
    pub density_floor: f64,
    pub fgmres_cap: usize,
    /// override for the designated inner-solve tolerance (ε_in)
    pub inner_tol: Option<f64>,
}

impl Default for IpConfig {
    fn default() -> IpConfig {
        IpConfig {
            mu0: 1.0,
            mu_factor: 5.0,
            mu_min: 5e-7,
            eps_out: 1e-5,
            newton_tol: 1e-6,
            newton_max: 20,
            tau: 0.05,
            density_floor: 1e-10,
            fgmres_cap: 400,
            inner_tol: None,
        }
    }
}

/// Aggregated counters for one interior-point iteration (one μ value).
#[derive(Debug, Clone, Copy)]
pub struct IpIterMetrics {
    pub ip_iter: usize,
    pub mu: f64,
    /// number of linear systems (Newton steps) at this μ
    pub linsys: usize,
    pub outer_per_linsys: f64,
    pub inner_per_outer: f64,
    pub cpu_per_linsys_s: f64,
    /// fraction of CPU time spent in setup (assembly + AMG hierarchies)
    pub setup_fraction: f64,
    pub converged: bool,
}

pub struct SolveReport {
    pub state: PrimalDualState,
    pub metrics: Vec<IpIterMetrics>,
    pub converged: bool,
    /// description of the numerical failure that ended the run early
    pub failure: Option<String>,
}

struct NewtonOutcome {
    linsys: usize,
    outer_total: usize,
    inner_total: usize,
    cpu_seconds: f64,
    setup_seconds: f64,
    converged: bool,
    failure: Option<String>,
}

fn newton_solve(
    p: &Problem,
    kind: PrecondKind,
    st: &mut PrimalDualState,
    cfg: &IpConfig,
) -> Result<NewtonOutcome> {
    let shifted = kind.shifted();
    let f0 = residual_norm(p, st, shifted);
    // the barrier problem at each μ is solved to a fixed relative
    // reduction of its entry residual; this keeps the Newton step count
    // per IP iteration flat along the continuation
    let target = (cfg.newton_tol * f0).max(1e-14);
    let mut out = NewtonOutcome {
        linsys: 0,
        outer_total: 0,
        inner_total: 0,
        cpu_seconds: 0.0,
        setup_seconds: 0.0,
        converged: false,
        failure: None,
    };
    let mut best = f0;
    let mut stalled = 0usize;
    for _ in 0..cfg.newton_max {
        let fnorm = residual_norm(p, st, shifted);
        if fnorm <= target {
            out.converged = true;
            return Ok(out);
        }
        if fnorm < best * (1.0 - 1e-12) {
            best = fnorm;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 5 {
                out.failure = Some(format!(
                    "Newton stagnated at mu={} (residual {fnorm:.3e} not decreasing)",
                    st.mu
                ));
                return Ok(out);
            }
        }
        let t_step = Instant::now();
        let sys = assemble_saddle(p, st, shifted)?;
        let mut pc = setup(kind, p, &sys, st)?;
        if let Some(t) = cfg.inner_tol {
            pc.inner_tol = t;
        }
        let setup_s = t_step.elapsed().as_secs_f64();
        let rhs = system_rhs(kind, p, &sys);
        let rhs_norm = crate::sparse::norm2(&rhs).max(1e-300);
        // FGMRES convergence is relative to ‖rhs‖; rescale so the stop
        // matches ε_out·‖(f;g;h)‖. The reduced right-hand side amplifies h
        // by ρ⁻¹, so near vacuum it can exceed the full residual norm by
        // many orders; demanding less than ε_out relative to it would ask
        // for cancellation below double precision, hence the floor.
        let tol = (cfg.eps_out * sys.scaling_norm / rhs_norm).clamp(cfg.eps_out, 0.5);
        let x0 = vec![0.0; rhs.len()];
        let (x, stats) = fgmres(
            |v| system_apply(kind, p, &sys, v),
            |r| pc.apply(p, &sys, r),
            &rhs,
            &x0,
            tol,
            cfg.fgmres_cap,
        );
        out.linsys += 1;
        out.outer_total += stats.iterations;
        out.inner_total += pc.inner_iterations;
        if !stats.converged {
            out.failure = Some(format!(
                "FGMRES hit the iteration cap at mu={} (residual ratio {:.3e})",
                st.mu, stats.residual_norm
            ));
            return Ok(out);
        }
        let (dphi_raw, drho) = x.split_at(sys.n);
        let mut dphi = dphi_raw.to_vec();
        let ds = recover_slack(st, drho, &sys.h);
        let alpha = step_length(st, drho, &ds, cfg.tau);
        if std::env::var_os("OTBB_TRACE").is_some() {
            eprintln!(
                "trace mu={:.3e} fnorm={:.6e} alpha={:.3e} outer={} tol={:.2e} rhs={:.3e} scaling={:.3e}",
                st.mu, fnorm, alpha, stats.iterations, tol, rhs_norm, sys.scaling_norm
            );
        }
        if shifted {
            // zero fine-mass-weighted mean per slice, then update the shift
            let nt = p.nt();
            let total: f64 = p.two.mass_fine.iter().sum();
            for k in 0..=p.grid.k {
                let s: f64 = (0..nt).map(|i| p.two.mass_fine[i] * dphi[k * nt + i]).sum();
                for v in &mut dphi[k * nt..(k + 1) * nt] {
                    *v -= s / total;
                }
            }
            let dlambda = bb_recover_shift(p, &sys, &dphi, drho);
            for (l, d) in st.lambda.iter_mut().zip(&dlambda) {
                *l += alpha * d;
            }
        } else {
            // remove the global M-weighted mean (constant kernel of A)
            let wsum: f64 = (0..sys.n).map(|i| p.two.mass_fine[i % p.nt()]).sum();
            let s: f64 = dphi
                .iter()
                .enumerate()
                .map(|(i, v)| p.two.mass_fine[i % p.nt()] * v)
                .sum();
            for v in &mut dphi {
                *v -= s / wsum;
            }
        }
        for (v, d) in st.phi.iter_mut().zip(&dphi) {
            *v += alpha * d;
        }
        for (v, d) in st.rho.iter_mut().zip(drho) {
            *v = (*v + alpha * d).max(cfg.density_floor);
        }
        for (v, d) in st.s.iter_mut().zip(&ds) {
            *v = (*v + alpha * d).max(cfg.density_floor);
        }
        renormalize(p, st)?;
        out.cpu_seconds += t_step.elapsed().as_secs_f64();
        out.setup_seconds += setup_s;
    }
    if residual_norm(p, st, shifted) <= target {
        out.converged = true;
    } else {
        out.failure = Some(format!(
            "Newton did not converge in {} steps at mu={}",
            cfg.newton_max, st.mu
        ));
    }
    Ok(out)
}

/// Interior-point continuation: solve the barrier problem at μ₀, divide μ
/// by `mu_factor` down to `mu_min`, warm-starting each step from the last
/// iterate.
pub fn ip_solve(p: &Problem, kind: PrecondKind, cfg: &IpConfig) -> Result<SolveReport> {
    let mut st = initial_state(p, cfg.mu0);
    let (metrics, failure) = ip_continue(p, kind, cfg, &mut st)?;
    let converged = failure.is_none() && metrics.iter().all(|m| m.converged);
    Ok(SolveReport {
        state: st,
        metrics,
        converged,
        failure,
    })
}

/// The continuation loop on an existing state (used for warm restarts
/// from a checkpoint). A numerical failure stops the schedule and is
/// reported alongside the metrics collected so far; hard errors (invalid
/// state) still propagate.
pub fn ip_continue(
    p: &Problem,
    kind: PrecondKind,
    cfg: &IpConfig,
    st: &mut PrimalDualState,
) -> Result<(Vec<IpIterMetrics>, Option<String>)> {
    let mut metrics = Vec::new();
    let mut mu = st.mu;
    let mut ip_iter = 0;
    while mu >= cfg.mu_min {
        ip_iter += 1;
        st.mu = mu;
        let outcome = newton_solve(p, kind, st, cfg)?;
        let outer = outcome.outer_total as f64;
        metrics.push(IpIterMetrics {
            ip_iter,
            mu,
            linsys: outcome.linsys,
            outer_per_linsys: outer / (outcome.linsys.max(1) as f64),
            inner_per_outer: outcome.inner_total as f64 / outer.max(1.0),
            cpu_per_linsys_s: outcome.cpu_seconds / (outcome.linsys.max(1) as f64),
            setup_fraction: if outcome.cpu_seconds > 0.0 {
                outcome.setup_seconds / outcome.cpu_seconds
            } else {
                0.0
            },
            converged: outcome.converged,
        });
        if let Some(msg) = outcome.failure {
            return Ok((metrics, Some(msg)));
        }
        mu /= cfg.mu_factor;
    }
    Ok((metrics, None))
}

/// Discrete kinetic energy (transport cost): (1/2)·Σ_k Δt·φᵏᵀA_kφᵏ.
/// Slice constants are in the kernel of A_k, so the shifted potential of
/// the BB formulation gives the same value.
pub fn transport_cost(p: &Problem, st: &PrimalDualState) -> Result<f64> {
    let sys = assemble_saddle(p, st, false)?;
    let nt = p.nt();
    let mut cost = 0.0;
    for (k, a) in sys.a_blocks.iter().enumerate() {
        let phi_k = &st.phi[k * nt..(k + 1) * nt];
        let aphi = a.matvec(phi_k);
        cost += 0.5 * p.grid.dt * crate::sparse::dot(phi_k, &aphi);
    }
    Ok(cost)
}
