//! Compressed sparse row storage, triplet assembly, and a fill-reducing
//! sparse Cholesky factorization.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
    #[error("malformed matrix file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Accumulates `(row, col, value)` contributions. Duplicates are summed on
/// finalization.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sums duplicates and produces CSR storage. Explicit zeros produced by
    /// cancellation are kept so that the pattern only depends on the inputs.
    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
            symmetric: false,
        }
    }

    /// Like [`TripletBuilder::build`] but symmetrizes as `(A + Aᵀ)/2` and
    /// marks the result symmetric, so exact symmetry holds bitwise.
    pub fn build_symmetric(self) -> SparseMatrix {
        let a = self.build();
        let mut m = a.add_scaled(&a.transpose(), 0.5, 0.5);
        m.symmetric = true;
        m
    }
}

/// CSR matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, triplets.len());
        for &(i, j, v) in triplets {
            b.push(i, j, v);
        }
        b.build()
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
            symmetric: true,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    b.push(i, j, a[(i, j)]);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// y = Aᵀ x without forming the transpose.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] += self.data[k] * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        let mut t = b.build();
        t.symmetric = self.symmetric;
        t
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, other: &SparseMatrix, alpha: f64, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets() {
            b.push(i, j, alpha * v);
        }
        for (i, j, v) in other.triplets() {
            b.push(i, j, beta * v);
        }
        let mut m = b.build();
        m.symmetric = self.symmetric && other.symmetric;
        m
    }

    pub fn scale(&self, alpha: f64) -> SparseMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Extracts `A[rows, cols]`, renumbering in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    b.push(new_i, nj, v);
                }
            }
        }
        let mut m = b.build();
        m.symmetric = self.symmetric && rows == cols;
        m
    }

    /// Relative symmetry defect `max |a_ij - a_ji| / max |a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst / scale
    }

    /// Number of rows holding at least one nonzero value.
    pub fn nonzero_rows(&self) -> usize {
        (0..self.nrows)
            .filter(|&i| self.row(i).any(|(_, v)| v != 0.0))
            .count()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] += v;
        }
        a
    }

    /// Coordinate text dump: a comment header, a size line, then one
    /// 0-based `i j value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket-compatible coordinate real general (0-based)\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.16e}", i, j, v);
        }
        s
    }

    pub fn read_coordinate_text<R: BufRead>(reader: R) -> Result<SparseMatrix, SparseError> {
        let mut dims: Option<(usize, usize)> = None;
        let mut trip = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
                continue;
            }
            let parse_err = |msg: &str| SparseError::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err("expected three fields"));
            }
            match dims {
                None => {
                    let r = f[0].parse().map_err(|_| parse_err("bad row count"))?;
                    let c = f[1].parse().map_err(|_| parse_err("bad column count"))?;
                    dims = Some((r, c));
                }
                Some((r, c)) => {
                    let i: usize = f[0].parse().map_err(|_| parse_err("bad row index"))?;
                    let j: usize = f[1].parse().map_err(|_| parse_err("bad column index"))?;
                    let v: f64 = f[2].parse().map_err(|_| parse_err("bad value"))?;
                    if i >= r || j >= c {
                        return Err(parse_err("index out of range"));
                    }
                    trip.push((i, j, v));
                }
            }
        }
        let (r, c) = dims.ok_or(SparseError::Parse {
            line: 0,
            msg: "missing size line".into(),
        })?;
        Ok(SparseMatrix::from_triplets(r, c, &trip))
    }
}

/// Sparse Cholesky factor `P A Pᵀ = L Lᵀ` with an approximate minimum
/// degree ordering. Up-looking, one row of `L` per step.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self, SparseError> {
        if a.nrows != a.ncols {
            return Err(SparseError::Dimension(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.nrows, a.ncols
            )));
        }
        let n = a.nrows;
        // a positive diagonal is necessary, and it keeps nnz >= n for the ordering
        for (k, d) in a.diagonal().into_iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(SparseError::NotPositiveDefinite {
                    column: k,
                    pivot: d,
                });
            }
        }
        let perm = amd_order(a)?;
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        // upper triangle of C = P A Pᵀ in column-compressed form
        let (cp, ci, cx) = permuted_upper(a, &pinv);
        let parent = etree(n, &cp, &ci);

        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut stack, &mut mark);
            for &i in &stack[top..n] {
                counts[i] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + counts[k];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next = lp[..n].to_vec();
        let mut x = vec![0.0f64; n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);

        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in cp[k]..cp[k + 1] {
                x[ci[p]] = cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in (lp[i] + 1)..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(SparseError::NotPositiveDefinite {
                    column: perm[k],
                    pivot: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            lp,
            li,
            lx,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lx.len()
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L y = b; column j of L is stored with its diagonal first
        for j in 0..n {
            y[j] /= self.lx[self.lp[j]];
            let yj = y[j];
            for p in (self.lp[j] + 1)..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in (self.lp[j] + 1)..self.lp[j + 1] {
                s -= self.lx[p] * y[self.li[p]];
            }
            y[j] = s / self.lx[self.lp[j]];
        }
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }
}

fn amd_order(a: &SparseMatrix) -> Result<Vec<usize>, SparseError> {
    let n = a.nrows;
    if n == 0 {
        return Ok(Vec::new());
    }
    // AMD reads the pattern of A + Aᵀ; a symmetric CSR is its own CSC.
    let ap: Vec<usize> = a.indptr.clone();
    let ai: Vec<usize> = a.indices.clone();
    let (p, _pinv, _info) = amd::order::<usize>(n, &ap, &ai, &amd::Control::default())
        .map_err(|s| SparseError::Ordering(format!("{s:?}")))?;
    Ok(p)
}

/// Upper triangle (row <= col) of `P A Pᵀ`, column-compressed, rows sorted.
fn permuted_upper(a: &SparseMatrix, pinv: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let n = a.nrows;
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in a.triplets() {
        let (pi, pj) = (pinv[i], pinv[j]);
        if pi <= pj {
            cols[pj].push((pi, v));
        }
    }
    let mut cp = vec![0usize; n + 1];
    let mut ci = Vec::new();
    let mut cx = Vec::new();
    for (j, col) in cols.iter_mut().enumerate() {
        col.sort_by_key(|e| e.0);
        for &(i, v) in col.iter() {
            ci.push(i);
            cx.push(v);
        }
        cp[j + 1] = ci.len();
    }
    (cp, ci, cx)
}

const NONE: usize = usize::MAX;

fn etree(n: usize, cp: &[usize], ci: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in cp[k]..cp[k + 1] {
            let mut i = ci[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, written to `stack[top..n]` in
/// topological order.
fn ereach(
    k: usize,
    cp: &[usize],
    ci: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for p in cp[k]..cp[k + 1] {
        let mut i = ci[p];
        if i > k {
            continue;
        }
        let mut len = 0usize;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
            if i == NONE {
                break;
            }
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}
