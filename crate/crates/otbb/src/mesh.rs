//! Two-level TPFA mesh pair: an acute coarse triangulation and the fine
//! quadrilateral mesh obtained by splitting every triangle into three
//! quads (edge midpoints joined to the circumcenter).
//!
//! Fine-mesh anchor points: for the quad containing vertex v of a
//! triangle with circumcenter c, the anchor is (v + c)/2. Across a
//! midpoint-circumcenter edge the anchor difference is (v_i - v_j)/2,
//! parallel to the coarse edge and hence orthogonal to the fine edge;
//! across a half coarse edge it is (c_1 - c_2)/2, orthogonal to the
//! coarse edge. Admissibility is validated at construction, not assumed.

use crate::error::{OtError, Result};
use crate::sparse::CsrMatrix;
use std::collections::HashMap;
use std::path::Path;

pub const ORTHO_TOL: f64 = 1e-8;
pub const MIN_W_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct InternalEdge {
    pub v0: usize,
    pub v1: usize,
    /// adjacent cell with the lower index
    pub left: usize,
    /// adjacent cell with the higher index
    pub right: usize,
}

#[derive(Debug, Clone)]
pub struct CoarseMesh {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub internal_edges: Vec<InternalEdge>,
    pub circumcenters: Vec<[f64; 2]>,
    pub edge_lengths: Vec<f64>,
    pub center_distances: Vec<f64>,
    pub cell_areas: Vec<f64>,
    pub domain_area: f64,
}

/// Fine edge geometry: endpoints are explicit points (edge midpoints and
/// circumcenters are not coarse vertices).
#[derive(Debug, Clone)]
pub struct FineEdge {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone)]
pub struct FineMesh {
    /// quad 3t + l sits at vertex l of coarse triangle t
    pub num_cells: usize,
    pub cell_points: Vec<[f64; 2]>,
    pub internal_edges: Vec<FineEdge>,
    pub edge_lengths: Vec<f64>,
    pub center_distances: Vec<f64>,
    pub cell_areas: Vec<f64>,
    pub parent_map: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TwoLevelMesh {
    pub coarse: CoarseMesh,
    pub fine: FineMesh,
    pub injection: CsrMatrix,
    /// |c| (fine cell areas, the diagonal of M)
    pub mass_fine: Vec<f64>,
    /// |c̄| (coarse cell areas, the diagonal of M̄)
    pub mass_coarse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EdgeReport {
    pub edge: usize,
    pub angle_error: f64,
    pub w: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub edges: Vec<EdgeReport>,
    pub all_pass: bool,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    dot2(a, a).sqrt()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Result<[f64; 2]> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-300 {
        return Err(OtError::Geometry("degenerate triangle".into()));
    }
    let a2 = dot2(a, a);
    let b2 = dot2(b, b);
    let c2 = dot2(c, c);
    Ok([
        (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d,
        (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d,
    ])
}

fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    cross(sub(b, a), sub(c, a)) / 2.0
}

fn check_acute(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Result<()> {
    // strict acuteness by the law of cosines in squared form:
    // the angle opposite the side of squared length s2 is acute
    // iff the other two squared lengths sum to more than s2
    let l = [dist(b, c), dist(a, c), dist(a, b)];
    let scale = l.iter().fold(0.0f64, |m, x| m.max(*x));
    let s: Vec<f64> = l.iter().map(|x| x * x).collect();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        if s[j] + s[k] - s[i] <= 1e-12 * scale * scale {
            return Err(OtError::Geometry(format!(
                "triangle ({a:?}, {b:?}, {c:?}) is not strictly acute"
            )));
        }
    }
    Ok(())
}

impl CoarseMesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_internal_edges(&self) -> usize {
        self.internal_edges.len()
    }

    pub fn diameter(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        dist(lo, hi)
    }

    /// Assemble from raw vertices and triangles; computes all geometry
    /// and validates acuteness and TPFA admissibility.
    pub fn from_raw(vertices: Vec<[f64; 2]>, mut cells: Vec<[usize; 3]>) -> Result<CoarseMesh> {
        // reject duplicate vertices
        for i in 0..vertices.len() {
            for j in (i + 1)..vertices.len() {
                if dist(vertices[i], vertices[j]) < 1e-14 {
                    return Err(OtError::Geometry(format!("duplicate vertices {i} and {j}")));
                }
            }
        }
        for cell in &mut cells {
            let [a, b, c] = *cell;
            if a >= vertices.len() || b >= vertices.len() || c >= vertices.len() {
                return Err(OtError::Parse("vertex index out of range".into()));
            }
            if triangle_area(vertices[a], vertices[b], vertices[c]) < 0.0 {
                cell.swap(1, 2); // normalize to counter-clockwise
            }
        }
        let mut circumcenters = Vec::with_capacity(cells.len());
        let mut cell_areas = Vec::with_capacity(cells.len());
        for cell in &cells {
            let (a, b, c) = (vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            check_acute(a, b, c)?;
            circumcenters.push(circumcenter(a, b, c)?);
            let ar = triangle_area(a, b, c);
            if ar <= 0.0 {
                return Err(OtError::Geometry("degenerate or mis-oriented triangle".into()));
            }
            cell_areas.push(ar);
        }
        // internal edges: shared by exactly two triangles; left = lower index
        let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, cell) in cells.iter().enumerate() {
            for i in 0..3 {
                let (u, v) = (cell[i], cell[(i + 1) % 3]);
                let key = (u.min(v), u.max(v));
                edge_map.entry(key).or_default().push(t);
            }
        }
        let mut keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        let mut internal_edges = Vec::new();
        let mut edge_lengths = Vec::new();
        let mut center_distances = Vec::new();
        for key in keys {
            let tris = &edge_map[&key];
            match tris.len() {
                1 => {} // boundary edge
                2 => {
                    let (left, right) = (tris[0].min(tris[1]), tris[0].max(tris[1]));
                    internal_edges.push(InternalEdge {
                        v0: key.0,
                        v1: key.1,
                        left,
                        right,
                    });
                    edge_lengths.push(dist(vertices[key.0], vertices[key.1]));
                    center_distances.push(dist(circumcenters[left], circumcenters[right]));
                }
                _ => {
                    return Err(OtError::Geometry(format!(
                        "non-manifold edge ({}, {})",
                        key.0, key.1
                    )))
                }
            }
        }
        let domain_area = cell_areas.iter().sum();
        let mesh = CoarseMesh {
            vertices,
            cells,
            internal_edges,
            circumcenters,
            edge_lengths,
            center_distances,
            cell_areas,
            domain_area,
        };
        let report = mesh.validate_admissibility();
        if !report.all_pass {
            let bad = report.edges.iter().find(|e| !e.pass).unwrap();
            return Err(OtError::Geometry(format!(
                "coarse edge {} fails admissibility: angle error {:.3e}, |w| = {:.3e}",
                bad.edge, bad.angle_error, bad.w
            )));
        }
        Ok(mesh)
    }

    /// Orthogonality and positivity report for every internal edge.
    pub fn validate_admissibility(&self) -> AdmissibilityReport {
        let diam = self.diameter();
        let mut edges = Vec::with_capacity(self.internal_edges.len());
        let mut all_pass = true;
        for (i, e) in self.internal_edges.iter().enumerate() {
            let d = sub(self.circumcenters[e.right], self.circumcenters[e.left]);
            let t = sub(self.vertices[e.v1], self.vertices[e.v0]);
            let w = norm(d);
            let angle_error = if w > 0.0 {
                (dot2(d, t) / (w * norm(t))).abs().asin()
            } else {
                std::f64::consts::FRAC_PI_2
            };
            let pass = angle_error <= ORTHO_TOL && w >= MIN_W_REL * diam;
            all_pass &= pass;
            edges.push(EdgeReport {
                edge: i,
                angle_error,
                w,
                pass,
            });
        }
        AdmissibilityReport { edges, all_pass }
    }

    /// Uniform 4-split by edge midpoints; children are similar to the
    /// parent, so acuteness is preserved.
    pub fn refine(&self) -> CoarseMesh {
        let mut vertices = self.vertices.clone();
        let mut mid_cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |u: usize, v: usize, verts: &mut Vec<[f64; 2]>| -> usize {
            let key = (u.min(v), u.max(v));
            *mid_cache.entry(key).or_insert_with(|| {
                verts.push(midpoint(verts[u], verts[v]));
                verts.len() - 1
            })
        };
        let mut cells = Vec::with_capacity(self.cells.len() * 4);
        for cell in &self.cells {
            let [a, b, c] = *cell;
            let mab = mid(a, b, &mut vertices);
            let mbc = mid(b, c, &mut vertices);
            let mca = mid(c, a, &mut vertices);
            cells.push([a, mab, mca]);
            cells.push([mab, b, mbc]);
            cells.push([mca, mbc, c]);
            cells.push([mab, mbc, mca]);
        }
        CoarseMesh::from_raw(vertices, cells).expect("refinement of a valid mesh stays valid")
    }

    /// Build the quadrilateral subcell mesh. Quad 3t + l contains vertex
    /// l of triangle t.
    pub fn build_fine(&self) -> Result<FineMesh> {
        let nt = self.cells.len();
        let num_cells = 3 * nt;
        let mut cell_points = Vec::with_capacity(num_cells);
        let mut cell_areas = Vec::with_capacity(num_cells);
        let mut parent_map = Vec::with_capacity(num_cells);
        for (t, cell) in self.cells.iter().enumerate() {
            let cc = self.circumcenters[t];
            for l in 0..3 {
                let v = self.vertices[cell[l]];
                let next = self.vertices[cell[(l + 1) % 3]];
                let prev = self.vertices[cell[(l + 2) % 3]];
                // quad v -> mid(v,next) -> circumcenter -> mid(v,prev)
                let m1 = midpoint(v, next);
                let m2 = midpoint(v, prev);
                let area = triangle_area(v, m1, cc) + triangle_area(v, cc, m2);
                if area <= 0.0 {
                    return Err(OtError::Geometry(format!(
                        "non-positive quad area in triangle {t}"
                    )));
                }
                cell_points.push([(v[0] + cc[0]) / 2.0, (v[1] + cc[1]) / 2.0]);
                cell_areas.push(area);
                parent_map.push(t);
            }
        }
        // local index of coarse vertex v in triangle t
        let local = |t: usize, v: usize| -> usize {
            self.cells[t].iter().position(|&x| x == v).expect("vertex in cell")
        };
        let mut internal_edges = Vec::new();
        // two halves of every coarse internal edge
        for e in &self.internal_edges {
            let m = midpoint(self.vertices[e.v0], self.vertices[e.v1]);
            for &v in &[e.v0, e.v1] {
                let qa = 3 * e.left + local(e.left, v);
                let qb = 3 * e.right + local(e.right, v);
                internal_edges.push(FineEdge {
                    p0: self.vertices[v],
                    p1: m,
                    left: qa.min(qb),
                    right: qa.max(qb),
                });
            }
        }
        // three midpoint-circumcenter segments per triangle
        for (t, cell) in self.cells.iter().enumerate() {
            let cc = self.circumcenters[t];
            for l in 0..3 {
                let (u, v) = (cell[l], cell[(l + 1) % 3]);
                let m = midpoint(self.vertices[u], self.vertices[v]);
                let qa = 3 * t + l;
                let qb = 3 * t + (l + 1) % 3;
                internal_edges.push(FineEdge {
                    p0: m,
                    p1: cc,
                    left: qa.min(qb),
                    right: qa.max(qb),
                });
            }
        }
        let edge_lengths: Vec<f64> = internal_edges.iter().map(|e| dist(e.p0, e.p1)).collect();
        let center_distances: Vec<f64> = internal_edges
            .iter()
            .map(|e| dist(cell_points[e.left], cell_points[e.right]))
            .collect();
        let fine = FineMesh {
            num_cells,
            cell_points,
            internal_edges,
            edge_lengths,
            center_distances,
            cell_areas,
            parent_map,
        };
        let report = fine.validate_admissibility(self.diameter());
        if !report.all_pass {
            let bad = report.edges.iter().find(|e| !e.pass).unwrap();
            return Err(OtError::Geometry(format!(
                "fine edge {} fails admissibility: angle error {:.3e}, |w| = {:.3e}",
                bad.edge, bad.angle_error, bad.w
            )));
        }
        Ok(fine)
    }
}

impl FineMesh {
    pub fn num_internal_edges(&self) -> usize {
        self.internal_edges.len()
    }

    pub fn validate_admissibility(&self, diameter: f64) -> AdmissibilityReport {
        let mut edges = Vec::with_capacity(self.internal_edges.len());
        let mut all_pass = true;
        for (i, e) in self.internal_edges.iter().enumerate() {
            let d = sub(self.cell_points[e.right], self.cell_points[e.left]);
            let t = sub(e.p1, e.p0);
            let w = norm(d);
            let angle_error = if w > 0.0 && norm(t) > 0.0 {
                (dot2(d, t) / (w * norm(t))).abs().asin()
            } else {
                std::f64::consts::FRAC_PI_2
            };
            let pass = angle_error <= ORTHO_TOL && w >= MIN_W_REL * diameter;
            all_pass &= pass;
            edges.push(EdgeReport {
                edge: i,
                angle_error,
                w,
                pass,
            });
        }
        AdmissibilityReport { edges, all_pass }
    }
}

impl TwoLevelMesh {
    pub fn build(coarse: CoarseMesh) -> Result<TwoLevelMesh> {
        let fine = coarse.build_fine()?;
        let injection = injection_matrix(&fine, coarse.num_cells());
        let mass_fine = fine.cell_areas.clone();
        let mass_coarse = coarse.cell_areas.clone();
        Ok(TwoLevelMesh {
            coarse,
            fine,
            injection,
            mass_fine,
            mass_coarse,
        })
    }
}

/// 0/1 matrix of shape (fine cells, coarse cells): exactly one nonzero
/// per row, column sums exactly 3.
pub fn injection_matrix(fine: &FineMesh, num_coarse: usize) -> CsrMatrix {
    let t: Vec<(usize, usize, f64)> = fine
        .parent_map
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, p, 1.0))
        .collect();
    CsrMatrix::from_triplets(fine.num_cells, num_coarse, &t)
}

/// All-acute 8-triangle triangulation of the unit square (largest angle
/// about 85.6 degrees): corners, the midpoints of the bottom and top
/// edges, and two interior points just below center height.
pub fn embedded_mesh() -> CoarseMesh {
    let vertices = vec![
        [0.0, 0.0],       // 0 bottom-left
        [1.0, 0.0],       // 1 bottom-right
        [1.0, 1.0],       // 2 top-right
        [0.0, 1.0],       // 3 top-left
        [0.5, 0.0],       // 4 bottom midpoint
        [0.5, 1.0],       // 5 top midpoint
        [0.4375, 0.1875], // 6 interior left
        [0.5625, 0.1875], // 7 interior right
    ];
    let cells = vec![
        [0, 4, 6],
        [4, 7, 6],
        [4, 1, 7],
        [1, 2, 7],
        [0, 6, 3],
        [3, 6, 5],
        [5, 6, 7],
        [5, 7, 2],
    ];
    CoarseMesh::from_raw(vertices, cells).expect("embedded mesh is valid")
}

/// Text format: line 1 `nv nt`; nv lines `x y`; nt lines `i j k`
/// (0-based, counter-clockwise).
pub fn parse_mesh(text: &str) -> Result<CoarseMesh> {
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| OtError::Parse(format!("unexpected end of mesh file, expected {what}")))
    };
    let nv: usize = next("vertex count")?
        .parse()
        .map_err(|_| OtError::Parse("bad vertex count".into()))?;
    let nt: usize = next("cell count")?
        .parse()
        .map_err(|_| OtError::Parse("bad cell count".into()))?;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let x: f64 = next("x")?.parse().map_err(|_| OtError::Parse(format!("bad x for vertex {i}")))?;
        let y: f64 = next("y")?.parse().map_err(|_| OtError::Parse(format!("bad y for vertex {i}")))?;
        vertices.push([x, y]);
    }
    let mut cells = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut c = [0usize; 3];
        for e in &mut c {
            *e = next("vertex index")?
                .parse()
                .map_err(|_| OtError::Parse(format!("bad vertex index in cell {t}")))?;
        }
        cells.push(c);
    }
    CoarseMesh::from_raw(vertices, cells)
}

pub fn load_mesh(path: &Path) -> Result<CoarseMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OtError::Parse(format!("cannot read mesh file {}: {e}", path.display())))?;
    parse_mesh(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equilateral() -> CoarseMesh {
        let h = 3.0f64.sqrt() / 2.0;
        CoarseMesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn embedded_mesh_is_acute_and_valid() {
        let m = embedded_mesh();
        assert_eq!(m.num_cells(), 8);
        assert!((m.domain_area - 1.0).abs() <= 1e-14);
        // law-of-cosines check, independent of the constructor's own test
        for cell in &m.cells {
            let p: Vec<[f64; 2]> = cell.iter().map(|&v| m.vertices[v]).collect();
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let (lab, lac, lbc) = (dist(a, b), dist(a, c), dist(b, c));
                assert!(
                    lab * lab + lac * lac > lbc * lbc + 1e-12,
                    "angle at {a:?} of {p:?} not acute"
                );
            }
        }
        assert!(m.validate_admissibility().all_pass);
    }

    #[test]
    fn right_triangle_rejected() {
        let r = CoarseMesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        );
        assert!(matches!(r, Err(OtError::Geometry(_))));
    }

    #[test]
    fn right_triangles_shared_hypotenuse_rejected() {
        // circumcenters coincide at the hypotenuse midpoint: |w| = 0
        let r = CoarseMesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn single_equilateral() {
        let m = equilateral();
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.num_internal_edges(), 0);
        let f = m.build_fine().unwrap();
        assert_eq!(f.num_cells, 3);
        assert_eq!(f.num_internal_edges(), 3);
        for a in &f.cell_areas {
            assert!((a - m.domain_area / 3.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn refine_preserves_area_and_multiplies_cells() {
        let mut m = embedded_mesh();
        for _ in 0..3 {
            let r = m.refine();
            assert_eq!(r.num_cells(), 4 * m.num_cells());
            assert!((r.domain_area - m.domain_area).abs() <= 1e-14 * m.domain_area);
            m = r;
        }
        assert_eq!(m.num_cells(), 512);
    }

    #[test]
    fn fine_counting_identities() {
        let mut m = embedded_mesh();
        for _ in 0..3 {
            let f = m.build_fine().unwrap();
            assert_eq!(f.num_cells, 3 * m.num_cells());
            assert_eq!(
                f.num_internal_edges(),
                2 * m.num_internal_edges() + 3 * m.num_cells()
            );
            // quad areas aggregate to triangle areas
            let mut agg = vec![0.0; m.num_cells()];
            for (q, &p) in f.parent_map.iter().enumerate() {
                agg[p] += f.cell_areas[q];
            }
            for (s, a) in agg.iter().zip(&m.cell_areas) {
                assert!((s - a).abs() <= 1e-14);
            }
            m = m.refine();
        }
    }

    #[test]
    fn fine_orthogonality_everywhere() {
        let m = embedded_mesh().refine();
        let f = m.build_fine().unwrap();
        let rep = f.validate_admissibility(m.diameter());
        assert!(rep.all_pass);
        for e in &rep.edges {
            assert!(e.angle_error <= 1e-10, "edge {} error {}", e.edge, e.angle_error);
            assert!(e.w > 0.0);
        }
    }

    #[test]
    fn injection_properties() {
        let m = embedded_mesh();
        let two = TwoLevelMesh::build(m).unwrap();
        let inj = &two.injection;
        assert_eq!(inj.rows, two.fine.num_cells);
        assert_eq!(inj.cols, two.coarse.num_cells());
        // one 1 per row
        for i in 0..inj.rows {
            let (c, v) = inj.row(i);
            assert_eq!(c.len(), 1);
            assert_eq!(v[0], 1.0);
        }
        // column sums 3
        let colsum = inj.matvec_transpose(&vec![1.0; inj.rows]);
        assert!(colsum.iter().all(|&s| s == 3.0));
        // |c|^T I = |c̄|^T
        let agg = inj.matvec_transpose(&two.mass_fine);
        for (s, a) in agg.iter().zip(&two.mass_coarse) {
            assert!((s - a).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn single_parent_injection_is_column_of_ones() {
        let m = equilateral();
        let two = TwoLevelMesh::build(m).unwrap();
        assert_eq!(two.injection.rows, 3);
        assert_eq!(two.injection.cols, 1);
        assert_eq!(two.injection.matvec(&[1.0]), vec![1.0; 3]);
    }

    #[test]
    fn parse_and_load_roundtrip() {
        let m = embedded_mesh();
        let mut text = format!("{} {}\n", m.vertices.len(), m.cells.len());
        for v in &m.vertices {
            text.push_str(&format!("{} {}\n", v[0], v[1]));
        }
        for c in &m.cells {
            text.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
        }
        let p = parse_mesh(&text).unwrap();
        assert_eq!(p.num_cells(), m.num_cells());
        assert_eq!(p.num_internal_edges(), m.num_internal_edges());
        assert!(matches!(parse_mesh("oops"), Err(OtError::Parse(_))));
        assert!(matches!(parse_mesh("3 1\n0 0\n1 0\n"), Err(OtError::Parse(_))));
    }

    #[test]
    fn equilateral_strip_admissible() {
        // row of equilateral triangles: perfectly symmetric TPFA geometry
        let h = 3.0f64.sqrt() / 2.0;
        let m = CoarseMesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.5, h], [1.5, h]],
            vec![[0, 1, 3], [1, 4, 3], [1, 2, 4]],
        )
        .unwrap();
        let rep = m.validate_admissibility();
        assert!(rep.all_pass);
        for e in &rep.edges {
            assert!(e.angle_error < 1e-12);
        }
    }
}
