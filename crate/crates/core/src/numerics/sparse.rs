use super::{herm_eig, validate, zeros, CMatrix, C64, ONE, ZERO};
use crate::error::{IsolabError, Result};

/// Compressed sparse row matrix with complex entries.
///
/// Structured operators (truncated shifts, tower steps) have a handful of
/// nonzeros per row, so products and Hermitian functions stay cheap even at
/// a few thousand coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![ONE; n])
    }

    pub fn diagonal(d: &[C64]) -> Self {
        Self::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Duplicates are summed; exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut out = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = ZERO;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                if v != ZERO {
                    out.col_idx.push(j);
                    out.values.push(v);
                }
            }
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        out
    }

    pub fn from_dense(a: &CMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != ZERO {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut a = zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i).find(|e| e.0 == j).map_or(ZERO, |e| e.1)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// self + s·other
    pub fn add_scaled(&self, other: &Self, s: C64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(IsolabError::Dimension("sparse add: shapes differ".into()));
        }
        Ok(Self::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().chain(other.triplets().map(|(i, j, v)| (i, j, v * s))),
        ))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(IsolabError::Dimension(format!(
                "sparse product {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut acc = vec![ZERO; other.ncols];
        let mut seen = vec![usize::MAX; other.ncols];
        let mut out = Self::zeros(self.nrows, other.ncols);
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if seen[j] != i {
                        seen[j] = i;
                        acc[j] = ZERO;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != ZERO {
                    out.col_idx.push(j);
                    out.values.push(acc[j]);
                }
            }
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    pub fn mul_dense(&self, b: &CMatrix) -> Result<CMatrix> {
        if self.ncols != b.nrows() {
            return Err(IsolabError::Dimension(format!(
                "sparse-dense product {}x{} by {}x{}",
                self.nrows,
                self.ncols,
                b.nrows(),
                b.ncols()
            )));
        }
        let mut out = zeros(self.nrows, b.ncols());
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for c in 0..b.ncols() {
                    out[(i, c)] += a * b[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// Dense submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        let mut pos = vec![usize::MAX; self.ncols];
        for (c, &j) in cols.iter().enumerate() {
            pos[j] = c;
        }
        let mut out = zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    out[(r, pos[j])] = v;
                }
            }
        }
        out
    }

    /// Connected components of the symmetrized sparsity pattern of a square
    /// matrix. A Hermitian matrix is block diagonal over these index sets.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nrows;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (i, j, _) in self.triplets() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        groups
    }

    fn ensure_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(IsolabError::NotSquare {
                rows: self.nrows,
                cols: self.ncols,
            });
        }
        if !self.is_finite() {
            return Err(IsolabError::NonFinite);
        }
        Ok(())
    }

    /// Eigenvalues of the Hermitian part, ascending, computed blockwise.
    pub fn herm_eigenvalues(&self) -> Result<Vec<f64>> {
        self.ensure_square()?;
        let mut all = Vec::with_capacity(self.nrows);
        for comp in self.components() {
            let block = self.select(&comp, &comp);
            all.extend(herm_eig(&block)?.eigenvalues);
        }
        all.sort_by(f64::total_cmp);
        Ok(all)
    }

    /// f applied to the Hermitian part, blockwise over components.
    pub fn herm_apply_fn(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.ensure_square()?;
        let mut t = Vec::new();
        for comp in self.components() {
            let block = self.select(&comp, &comp);
            let fb = herm_eig(&block)?.apply_fn(&f);
            validate(&fb)?;
            for (a, &i) in comp.iter().enumerate() {
                for (b, &j) in comp.iter().enumerate() {
                    let v = fb[(a, b)];
                    if v.norm() > 0.0 {
                        t.push((i, j, v));
                    }
                }
            }
        }
        Ok(Self::from_triplets(self.nrows, self.ncols, t))
    }

    /// Hermitian PSD square root; eigenvalues in [-clip, 0) become 0.
    pub fn psd_sqrt(&self, clip: f64) -> Result<Self> {
        let lam = self.herm_eigenvalues()?;
        if let Some(&lo) = lam.first() {
            if lo < -clip {
                return Err(IsolabError::NotPsd { lambda_min: lo, clip });
            }
        }
        self.herm_apply_fn(|x| x.max(0.0).sqrt())
    }

    /// Largest singular value via the components of A*A.
    pub fn op_norm(&self) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let gram = match self.adjoint().mul(self) {
            Ok(g) => g,
            Err(_) => return f64::NAN,
        };
        match gram.herm_eigenvalues() {
            Ok(lam) => lam.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
            Err(_) => f64::NAN,
        }
    }

    /// Block matrix from a grid; `None` is a zero block. Row heights and
    /// column widths are taken from `row_dims` and `col_dims`.
    pub fn from_blocks(
        row_dims: &[usize],
        col_dims: &[usize],
        blocks: &[Vec<Option<&SparseMatrix>>],
    ) -> Result<Self> {
        if blocks.len() != row_dims.len() || blocks.iter().any(|r| r.len() != col_dims.len()) {
            return Err(IsolabError::Dimension("block grid shape".into()));
        }
        let roff: Vec<usize> = prefix(row_dims);
        let coff: Vec<usize> = prefix(col_dims);
        let mut t = Vec::new();
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, blk) in row.iter().enumerate() {
                if let Some(b) = blk {
                    if b.nrows != row_dims[bi] || b.ncols != col_dims[bj] {
                        return Err(IsolabError::Dimension(format!(
                            "block ({bi},{bj}) is {}x{}, expected {}x{}",
                            b.nrows, b.ncols, row_dims[bi], col_dims[bj]
                        )));
                    }
                    t.extend(b.triplets().map(|(i, j, v)| (i + roff[bi], j + coff[bj], v)));
                }
            }
        }
        Ok(Self::from_triplets(
            roff[row_dims.len()],
            coff[col_dims.len()],
            t,
        ))
    }
}

fn prefix(d: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(d.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &x in d {
        acc += x;
        out.push(acc);
    }
    out
}
