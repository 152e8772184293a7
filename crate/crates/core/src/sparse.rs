//! Compressed sparse row matrices and direct solves.
//!
//! Factorization is delegated to `faer`'s sparse LU (fill-reducing ordering
//! plus partial pivoting). Every solve is followed by a residual check so
//! callers get the `||Ax - b|| <= 1e-10 ||b||` contract or an error.

use std::io::Write;
use std::path::Path;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;

use crate::error::{Error, Result};

/// Relative residual every direct solve must reach.
pub const SOLVE_RESIDUAL_BOUND: f64 = 1e-10;

/// CSR matrix with sorted, unique column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(row, col, _) in entries {
            if row >= nrows || col >= ncols {
                return Err(Error::TripletOutOfRange {
                    row,
                    col,
                    nrows,
                    ncols,
                });
            }
        }
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in entries {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t).expect("indices in range")
    }

    /// `alpha * self + beta * other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<CsrMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, alpha * v))
            .collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, beta * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol * self.max_abs().max(1.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[i][j] = v;
            }
        }
        d
    }

    /// Replace row `i` by the unit row `e_i`.
    pub(crate) fn set_identity_row(&mut self, i: usize) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        for k in range {
            self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
        }
    }

    /// Drop explicitly stored zeros.
    pub fn prune(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().filter(|e| e.2 != 0.0).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t).expect("indices in range")
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::DimensionMismatch(format!("{e:?}")))
    }

    /// Whether a sparse Cholesky factorization succeeds (numerical SPD test).
    pub fn cholesky_succeeds(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        match self.to_faer() {
            Ok(m) => m.sp_cholesky(Side::Lower).is_ok(),
            Err(_) => false,
        }
    }

    /// Matrix Market coordinate export.
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let mut body = String::new();
        body.push_str("%%MatrixMarket matrix coordinate real general\n");
        body.push_str(&format!("{} {} {}\n", self.nrows, self.ncols, self.nnz()));
        for (i, j, v) in self.triplets() {
            body.push_str(&format!("{} {} {:.17e}\n", i + 1, j + 1, v));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `A[rows, cols]` with renumbered indices. Index sets must be sorted.
pub fn extract_submatrix(a: &CsrMatrix, rows: &[usize], cols: &[usize]) -> CsrMatrix {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (new, &c) in cols.iter().enumerate() {
        col_map[c] = new;
    }
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for &r in rows {
        for (c, v) in a.row(r) {
            let m = col_map[c];
            if m != usize::MAX {
                col_idx.push(m);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        nrows: rows.len(),
        ncols: cols.len(),
        row_ptr,
        col_idx,
        values,
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A reusable LU factorization of a square sparse matrix.
pub struct LuFactorization {
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

static SEQUENTIAL_FAER: std::sync::Once = std::sync::Once::new();

impl LuFactorization {
    /// Factors `a`. The first call switches `faer` to sequential execution so
    /// repeated runs produce bitwise-identical results.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        SEQUENTIAL_FAER.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "cannot factor a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        if (0..a.nrows()).any(|i| a.row(i).all(|(_, v)| v == 0.0)) {
            return Err(Error::SingularMatrix("matrix has a zero row".into()));
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
        Ok(LuFactorization {
            matrix: a.clone(),
            lu,
        })
    }

    /// Solve `A x = b` to the relative residual contract, refining up to
    /// three times.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (x, residual) = self.solve_refined(b)?;
        if residual > SOLVE_RESIDUAL_BOUND {
            return Err(Error::InaccurateSolve {
                residual,
                bound: SOLVE_RESIDUAL_BOUND,
            });
        }
        Ok(x)
    }

    /// Best-effort solve returning the achieved relative residual instead of
    /// enforcing the contract. Only non-finite results are errors.
    pub fn solve_refined(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.matrix.nrows();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, matrix has {n} rows",
                b.len()
            )));
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], 0.0));
        }
        let mut x = self.raw_solve(b);
        let mut residual = self.relative_residual(&x, b, bnorm);
        for _ in 0..3 {
            if !residual.is_finite() || residual <= SOLVE_RESIDUAL_BOUND {
                break;
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
            residual = self.relative_residual(&x, b, bnorm);
        }
        if !residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("factorization produced non-finite values".into()));
        }
        Ok((x, residual))
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[i]).collect()
    }

    fn relative_residual(&self, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: f64 = ax.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        r / bnorm
    }
}

/// Direct solve of `A x = b` meeting the relative residual contract.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    LuFactorization::new(a)?.solve(b)
}
