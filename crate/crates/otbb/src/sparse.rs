//! Compressed sparse row matrices and the kernels used by every assembly
//! routine and solver in this crate.
//!
//! Column indices are kept sorted and duplicate-free within each row.
//! Only structural zeros produced by exact cancellation are dropped; no
//! threshold dropping is ever applied.

use crate::error::{OtError, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(i, _, _) in triplets {
            debug_assert!(i < rows);
            counts[i + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut cidx = vec![0usize; triplets.len()];
        let mut vals = vec![0.0f64; triplets.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in triplets {
            debug_assert!(j < cols);
            let p = cursor[i];
            cidx[p] = j;
            vals[p] = v;
            cursor[i] += 1;
        }
        // sort each row and merge duplicates
        let mut row_offsets = vec![0usize; rows + 1];
        let mut out_c = Vec::with_capacity(triplets.len());
        let mut out_v = Vec::with_capacity(triplets.len());
        for i in 0..rows {
            let (a, b) = (counts[i], counts[i + 1]);
            let mut entries: Vec<(usize, f64)> =
                (a..b).map(|p| (cidx[p], vals[p])).collect();
            entries.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < entries.len() {
                let j = entries[k].0;
                let mut s = 0.0;
                while k < entries.len() && entries[k].0 == j {
                    s += entries[k].1;
                    k += 1;
                }
                out_c.push(j);
                out_v.push(s);
            }
            row_offsets[i + 1] = out_c.len();
        }
        CsrMatrix {
            rows,
            cols,
            row_offsets,
            col_indices: out_c,
            values: out_v,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec shape mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[i] = s;
        }
        y
    }

    /// y += alpha * A x
    pub fn matvec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[i] += alpha * s;
        }
    }

    /// y = A^T x without materializing the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transpose shape mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let mut cidx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut cursor = counts.clone();
        for i in 0..self.rows {
            let (cols, v) = self.row(i);
            for (c, val) in cols.iter().zip(v) {
                let p = cursor[*c];
                cidx[p] = i;
                vals[p] = *val;
                cursor[*c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets: counts,
            col_indices: cidx,
            values: vals,
        }
    }

    /// C = A B (exact structural product, zero entries kept only if they
    /// appear from summation; rows stay sorted).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut out_c: Vec<usize> = Vec::new();
        let mut out_v: Vec<f64> = Vec::new();
        let mut acc = vec![0.0f64; other.cols];
        let mut marker = vec![usize::MAX; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.rows {
            touched.clear();
            let (acols, avals) = self.row(i);
            for (k, av) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(*k);
                for (j, bv) in bcols.iter().zip(bvals) {
                    if marker[*j] != i {
                        marker[*j] = i;
                        acc[*j] = 0.0;
                        touched.push(*j);
                    }
                    acc[*j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                out_c.push(j);
                out_v.push(acc[j]);
            }
            row_offsets[i + 1] = out_c.len();
        }
        CsrMatrix {
            rows: self.rows,
            cols: other.cols,
            row_offsets,
            col_indices: out_c,
            values: out_v,
        }
    }

    /// alpha*A + beta*B
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64, beta: f64) -> CsrMatrix {
        assert_eq!(self.rows, other.rows, "add shape mismatch");
        assert_eq!(self.cols, other.cols, "add shape mismatch");
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut out_c = Vec::new();
        let mut out_v = Vec::new();
        for i in 0..self.rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                if q >= bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    out_c.push(ac[p]);
                    out_v.push(alpha * av[p]);
                    p += 1;
                } else if p >= ac.len() || bc[q] < ac[p] {
                    out_c.push(bc[q]);
                    out_v.push(beta * bv[q]);
                    q += 1;
                } else {
                    out_c.push(ac[p]);
                    out_v.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_offsets[i + 1] = out_c.len();
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices: out_c,
            values: out_v,
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// diag(d) * A
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for i in 0..self.rows {
            let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
            for p in a..b {
                out.values[p] *= d[i];
            }
        }
        out
    }

    /// A * diag(d)
    pub fn scale_cols(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for p in 0..out.values.len() {
            out.values[p] *= d[out.col_indices[p]];
        }
        out
    }

    pub fn diag(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    /// Block diagonal concatenation.
    pub fn block_diag(blocks: &[&CsrMatrix]) -> CsrMatrix {
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let nnz: usize = blocks.iter().map(|b| b.nnz()).sum();
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut out_c = Vec::with_capacity(nnz);
        let mut out_v = Vec::with_capacity(nnz);
        row_offsets.push(0);
        let mut col_base = 0;
        for b in blocks {
            for i in 0..b.rows {
                let (c, v) = b.row(i);
                for (j, val) in c.iter().zip(v) {
                    out_c.push(col_base + j);
                    out_v.push(*val);
                }
                row_offsets.push(out_c.len());
            }
            col_base += b.cols;
        }
        CsrMatrix {
            rows,
            cols,
            row_offsets,
            col_indices: out_c,
            values: out_v,
        }
    }

    /// Repeat one block `count` times along the diagonal.
    pub fn block_diag_repeat(block: &CsrMatrix, count: usize) -> CsrMatrix {
        let blocks: Vec<&CsrMatrix> = (0..count).map(|_| block).collect();
        CsrMatrix::block_diag(&blocks)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.row_offsets.len() != self.rows + 1 {
            return Err(OtError::Shape("row_offsets length".into()));
        }
        for i in 0..self.rows {
            if self.row_offsets[i] > self.row_offsets[i + 1] {
                return Err(OtError::Shape("non-monotone offsets".into()));
            }
            let (c, v) = self.row(i);
            for w in c.windows(2) {
                if w[0] >= w[1] {
                    return Err(OtError::Shape("unsorted or duplicate columns".into()));
                }
            }
            for x in v {
                if !x.is_finite() {
                    return Err(OtError::Shape("non-finite value".into()));
                }
            }
        }
        Ok(())
    }

    /// Write in Matrix Market coordinate format (real, general, 1-based).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (j, val) in c.iter().zip(v) {
                writeln!(f, "{} {} {:.17e}", i + 1, j + 1, val)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| OtError::Parse("empty matrix market file".into()))??;
        if !header.starts_with("%%MatrixMarket matrix coordinate real") {
            return Err(OtError::Parse(format!("unsupported header: {header}")));
        }
        let symmetric = header.contains("symmetric");
        let mut size_line = None;
        for line in lines.by_ref() {
            let line = line?;
            if line.starts_with('%') || line.trim().is_empty() {
                continue;
            }
            size_line = Some(line);
            break;
        }
        let size_line = size_line.ok_or_else(|| OtError::Parse("missing size line".into()))?;
        let dims: Vec<usize> = size_line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| OtError::Parse(e.to_string())))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(OtError::Parse("bad size line".into()));
        }
        let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('%') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(OtError::Parse(format!("bad entry line: {line}")));
            }
            let i: usize = toks[0].parse().map_err(|_| OtError::Parse(line.clone()))?;
            let j: usize = toks[1].parse().map_err(|_| OtError::Parse(line.clone()))?;
            let v: f64 = toks[2].parse().map_err(|_| OtError::Parse(line.clone()))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(OtError::Parse(format!("index out of range: {line}")));
            }
            triplets.push((i - 1, j - 1, v));
            if symmetric && i != j {
                triplets.push((j - 1, i - 1, v));
            }
        }
        Ok(CsrMatrix::from_triplets(rows, cols, &triplets))
    }
}

/// Dense vector helpers shared across solvers.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale_vec(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}
