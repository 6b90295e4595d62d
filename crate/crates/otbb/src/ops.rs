//! Discrete operators on the two-level mesh pair: TPFA gradient and
//! divergence, the coarse-to-fine-edge reconstruction and its adjoint,
//! the staggered-time block operators, and the zero-mean projector.
//!
//! Vector layout is slice-major: a potential trajectory stores K+1
//! slices of N_T fine values, a density trajectory K slices of N_T̄
//! coarse values.
//!
//! The time-coupling blocks of the Jacobian are built in the exactly
//! variational form: the Hamilton-Jacobi residual uses Iᵀ M (φᵏ⁺¹−φᵏ)/Δt
//! so that its φ-derivative is the exact transpose of the ρ-derivative
//! of the continuity residual (with the paper's M̄ Iᵀ form the two
//! off-diagonal blocks differ by the subcell/parent area ratio).

use crate::mesh::{CoarseMesh, FineMesh, TwoLevelMesh};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct SpatialOps {
    /// ±1 incidence, (cells × edges); +1 on the left (lower-index) cell
    pub incidence: CsrMatrix,
    /// diag(|w|)⁻¹ · incidenceᵀ, (edges × cells)
    pub grad: CsrMatrix,
    /// −incidence · diag(|e|), (cells × edges)
    pub div: CsrMatrix,
    pub edge_w: Vec<f64>,
    pub edge_len: Vec<f64>,
    /// |w|·|e| per edge (the duality weight)
    pub we: Vec<f64>,
}

fn spatial_from_parts(
    num_cells: usize,
    adj: &[(usize, usize)],
    edge_w: Vec<f64>,
    edge_len: Vec<f64>,
) -> SpatialOps {
    let ne = adj.len();
    let mut t = Vec::with_capacity(2 * ne);
    for (e, &(l, r)) in adj.iter().enumerate() {
        t.push((l, e, 1.0));
        t.push((r, e, -1.0));
    }
    let incidence = CsrMatrix::from_triplets(num_cells, ne, &t);
    let inv_w: Vec<f64> = edge_w.iter().map(|w| 1.0 / w).collect();
    let grad = incidence.transpose().scale_rows(&inv_w);
    let we: Vec<f64> = edge_w.iter().zip(&edge_len).map(|(w, e)| w * e).collect();
    // built from grad so that div = −gradᵀ·diag(|w||e|) holds exactly,
    // bit for bit, rather than only up to rounding
    let mut div = grad.transpose().scale_cols(&we);
    div.scale(-1.0);
    SpatialOps {
        incidence,
        grad,
        div,
        edge_w,
        edge_len,
        we,
    }
}

pub fn assemble_spatial_fine(f: &FineMesh) -> SpatialOps {
    let adj: Vec<(usize, usize)> = f.internal_edges.iter().map(|e| (e.left, e.right)).collect();
    spatial_from_parts(
        f.num_cells,
        &adj,
        f.center_distances.clone(),
        f.edge_lengths.clone(),
    )
}

pub fn assemble_spatial_coarse(c: &CoarseMesh) -> SpatialOps {
    let adj: Vec<(usize, usize)> = c.internal_edges.iter().map(|e| (e.left, e.right)).collect();
    spatial_from_parts(
        c.num_cells(),
        &adj,
        c.center_distances.clone(),
        c.edge_lengths.clone(),
    )
}

#[derive(Debug, Clone)]
pub struct ReconOps {
    /// interpolation weight toward the left cell, per fine edge
    pub lambda: Vec<f64>,
    /// coarse densities -> fine edge values, (N_ε × N_T̄)
    pub r_edges: CsrMatrix,
    /// adjoint reconstruction R_edgesᵀ·diag(|w||e|), (N_T̄ × N_ε)
    pub drecon: CsrMatrix,
    /// fine-cell variant used by the BB Schur approximation, (N_ε × N_T)
    pub r_edges_fine: CsrMatrix,
    /// R_edges_fineᵀ·diag(|w||e|), (N_T × N_ε)
    pub drecon_fine: CsrMatrix,
}

fn point_to_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    // perpendicular distance to the supporting line of the edge
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if len < 1e-300 {
        return ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
    }
    ((p[0] - a[0]) * d[1] - (p[1] - a[1]) * d[0]).abs() / len
}

pub fn assemble_recon(two: &TwoLevelMesh, fine_sp: &SpatialOps) -> ReconOps {
    let f = &two.fine;
    let ne = f.internal_edges.len();
    let mut lambda = Vec::with_capacity(ne);
    let mut t_coarse = Vec::with_capacity(2 * ne);
    let mut t_fine = Vec::with_capacity(2 * ne);
    for (e, edge) in f.internal_edges.iter().enumerate() {
        let di = point_to_segment_distance(f.cell_points[edge.left], edge.p0, edge.p1);
        let dj = point_to_segment_distance(f.cell_points[edge.right], edge.p0, edge.p1);
        let lam = if di + dj < 1e-14 { 0.5 } else { dj / (di + dj) };
        lambda.push(lam);
        t_fine.push((e, edge.left, lam));
        t_fine.push((e, edge.right, 1.0 - lam));
        t_coarse.push((e, f.parent_map[edge.left], lam));
        t_coarse.push((e, f.parent_map[edge.right], 1.0 - lam));
    }
    let r_edges = CsrMatrix::from_triplets(ne, two.coarse.num_cells(), &t_coarse);
    let r_edges_fine = CsrMatrix::from_triplets(ne, f.num_cells, &t_fine);
    let drecon = r_edges.transpose().scale_cols(&fine_sp.we);
    let drecon_fine = r_edges_fine.transpose().scale_cols(&fine_sp.we);
    ReconOps {
        lambda,
        r_edges,
        drecon,
        r_edges_fine,
        drecon_fine,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    /// number of interior density time levels
    pub k: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(k: usize) -> TimeGrid {
        assert!(k >= 1);
        TimeGrid {
            k,
            dt: 1.0 / (k as f64 + 1.0),
        }
    }

    /// total potential length: N_T·(K+1)
    pub fn n(&self, two: &TwoLevelMesh) -> usize {
        two.fine.num_cells * (self.k + 1)
    }

    /// total density length: N_T̄·K
    pub fn m(&self, two: &TwoLevelMesh) -> usize {
        two.coarse.num_cells() * self.k
    }
}

/// Time-difference matrix: K block rows over K+1 block columns of size
/// `nb`, entries −1/Δt on block k−1 and +1/Δt on block k.
pub fn dt_matrix(grid: &TimeGrid, nb: usize) -> CsrMatrix {
    let inv = 1.0 / grid.dt;
    let mut t = Vec::with_capacity(2 * grid.k * nb);
    for k in 0..grid.k {
        for i in 0..nb {
            t.push((k * nb + i, k * nb + i, -inv));
            t.push((k * nb + i, (k + 1) * nb + i, inv));
        }
    }
    CsrMatrix::from_triplets(grid.k * nb, (grid.k + 1) * nb, &t)
}

/// Time-average matrix: K block rows over K+1 block columns, entries 1/2
/// on blocks k−1 and k.
pub fn h_matrix(grid: &TimeGrid, nb: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(2 * grid.k * nb);
    for k in 0..grid.k {
        for i in 0..nb {
            t.push((k * nb + i, k * nb + i, 0.5));
            t.push((k * nb + i, (k + 1) * nb + i, 0.5));
        }
    }
    CsrMatrix::from_triplets(grid.k * nb, (grid.k + 1) * nb, &t)
}

#[derive(Debug, Clone)]
pub struct BlockOps {
    /// the full (m × n) coupling block of the Newton system
    pub b: CsrMatrix,
    /// block-diagonal repetition of the injection over K+1 levels
    pub it_blk: CsrMatrix,
    /// block-diagonal fine gradient over K+1 levels
    pub dx: CsrMatrix,
    /// block-diagonal fine divergence over K+1 levels
    pub divx: CsrMatrix,
    /// block-diagonal of G_k = DRecon·diag(grad φᵏ)
    pub g: CsrMatrix,
    /// Dt over coarse slices, (m × N_T̄(K+1))
    pub dt_mat: CsrMatrix,
    /// H over coarse slices, (m × N_T̄(K+1))
    pub h_mat: CsrMatrix,
}

/// Assemble the blocks of the Jacobian coupling operator
/// B = B_time + H·𝒢·𝒟x for a given potential trajectory.
pub fn assemble_blocks(
    two: &TwoLevelMesh,
    grid: &TimeGrid,
    fine_sp: &SpatialOps,
    recon: &ReconOps,
    phi: &[f64],
) -> BlockOps {
    let nt = two.fine.num_cells;
    let nbar = two.coarse.num_cells();
    assert_eq!(phi.len(), nt * (grid.k + 1), "phi slice count");
    let it_blk = CsrMatrix::block_diag_repeat(&two.injection, grid.k + 1);
    let dx = CsrMatrix::block_diag_repeat(&fine_sp.grad, grid.k + 1);
    let divx = CsrMatrix::block_diag_repeat(&fine_sp.div, grid.k + 1);
    let g_slices: Vec<CsrMatrix> = (0..=grid.k)
        .map(|k| {
            let gphi = fine_sp.grad.matvec(&phi[k * nt..(k + 1) * nt]);
            recon.drecon.scale_cols(&gphi)
        })
        .collect();
    let g_refs: Vec<&CsrMatrix> = g_slices.iter().collect();
    let g = CsrMatrix::block_diag(&g_refs);
    let dt_mat = dt_matrix(grid, nbar);
    let h_mat = h_matrix(grid, nbar);

    // time coupling: block row k has −IᵀM/Δt at φ-slice k and +IᵀM/Δt at
    // φ-slice k+1 (variational form, see module docs)
    let itm = two.injection.transpose().scale_cols(&two.mass_fine);
    let inv = 1.0 / grid.dt;
    let mut t = Vec::new();
    for k in 0..grid.k {
        for i in 0..nbar {
            let (cols, vals) = itm.row(i);
            for (j, v) in cols.iter().zip(vals) {
                t.push((k * nbar + i, k * nt + j, -v * inv));
                t.push((k * nbar + i, (k + 1) * nt + j, v * inv));
            }
        }
    }
    let b_time = CsrMatrix::from_triplets(grid.k * nbar, (grid.k + 1) * nt, &t);
    let b_spatial = h_matrix(grid, nbar).matmul(&g).matmul(&dx);
    let b = b_time.add_scaled(&b_spatial, 1.0, 1.0);
    BlockOps {
        b,
        it_blk,
        dx,
        divx,
        g,
        dt_mat,
        h_mat,
    }
}

/// B̃ of the BB Schur approximation: −M·It·Dtᵀ + 𝒢_f·𝒟x·It·Hᵀ, shape
/// (n × m), built with the fine-cell reconstruction. Two adjustments to
/// the written form It·Dtᵀ·M̄: the sign, because Dtᵀ is the discrete
/// −∂t while B̃ must carry +∂t for the commutation identity, and the
/// fine mass on the left, so that Bᵗ·M⁻¹·B̃ᵗ collapses to the coarse
/// mass exactly (IᵀM·M⁻¹·MI = M̄ = IᵀMI, whereas IᵀI = 3·Id is off by
/// the per-quad area ratios).
pub fn assemble_b_tilde(
    two: &TwoLevelMesh,
    grid: &TimeGrid,
    fine_sp: &SpatialOps,
    recon: &ReconOps,
    phi: &[f64],
    blocks: &BlockOps,
) -> CsrMatrix {
    let nt = two.fine.num_cells;
    let mass_rows: Vec<f64> = (0..=grid.k)
        .flat_map(|_| two.mass_fine.iter().copied())
        .collect();
    let mut time_part = blocks
        .it_blk
        .matmul(&blocks.dt_mat.transpose())
        .scale_rows(&mass_rows);
    time_part.scale(-1.0);
    let gf_slices: Vec<CsrMatrix> = (0..=grid.k)
        .map(|k| {
            let gphi = fine_sp.grad.matvec(&phi[k * nt..(k + 1) * nt]);
            recon.drecon_fine.scale_cols(&gphi)
        })
        .collect();
    let gf_refs: Vec<&CsrMatrix> = gf_slices.iter().collect();
    let gf = CsrMatrix::block_diag(&gf_refs);
    let spatial = gf
        .matmul(&blocks.dx)
        .matmul(&blocks.it_blk)
        .matmul(&blocks.h_mat.transpose());
    time_part.add_scaled(&spatial, 1.0, 1.0)
}

fn blocks_mass_slice(mbar_blk: &[f64], k: usize) -> Vec<f64> {
    // Dtᵀ has K column blocks; It·Dtᵀ columns carry the K interior
    // coarse slices of M̄
    let nbar = mbar_blk.len() / (k + 1);
    mbar_blk[..k * nbar].to_vec()
}

/// P x, with P = I − (1/|Ω|)·M̄·Ēᵀ·Ē applied per density slice.
pub fn projector_apply(two: &TwoLevelMesh, grid: &TimeGrid, x: &[f64]) -> Vec<f64> {
    let nbar = two.coarse.num_cells();
    assert_eq!(x.len(), nbar * grid.k);
    let omega = two.coarse.domain_area;
    let mut y = x.to_vec();
    for k in 0..grid.k {
        let s: f64 = x[k * nbar..(k + 1) * nbar].iter().sum();
        for i in 0..nbar {
            y[k * nbar + i] -= s / omega * two.mass_coarse[i];
        }
    }
    y
}

/// Pᵀ x; each output slice has zero |c̄|-weighted mean.
pub fn projector_apply_t(two: &TwoLevelMesh, grid: &TimeGrid, x: &[f64]) -> Vec<f64> {
    let nbar = two.coarse.num_cells();
    assert_eq!(x.len(), nbar * grid.k);
    let omega = two.coarse.domain_area;
    let mut y = x.to_vec();
    for k in 0..grid.k {
        let s: f64 = (0..nbar).map(|i| two.mass_coarse[i] * x[k * nbar + i]).sum();
        for i in 0..nbar {
            y[k * nbar + i] -= s / omega;
        }
    }
    y
}
