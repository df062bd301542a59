//! Compressed-row sparse matrices and a sparse Cholesky factorization
//! (minimum-degree ordering, up-looking numeric phase). Sized for the
//! desk-scale direct local solves of the reference solver variants.

use super::dense::DenseMatrix;
use super::LinalgError;

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed,
    /// column indices end up sorted, explicit zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet index out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let lo = self.indptr[i];
            let hi = self.indptr[i + 1];
            let mut s = 0.0;
            for p in lo..hi {
                s += self.values[p] * x[self.indices[p]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.values[p] * xi;
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn from_dense(d: &DenseMatrix) -> CsrMatrix {
        let mut trip = Vec::new();
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                if d[(i, j)] != 0.0 {
                    trip.push((i, j, d[(i, j)]));
                }
            }
        }
        Self::from_triplets(d.rows(), d.cols(), &trip)
    }

    /// Extract the (rows, cols) submatrix given index lists; `rows`/`cols`
    /// map new indices to old ones.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_of: Vec<Option<usize>> = vec![None; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_of[old] = Some(new);
        }
        let mut trip = Vec::new();
        for (new_i, &old_i) in rows.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if let Some(new_j) = col_of[j] {
                    trip.push((new_i, new_j, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Sparse Cholesky factorization P A P^T = L L^T with a greedy
/// minimum-degree fill-reducing permutation and an up-looking numeric
/// phase. L is stored by columns.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "sparse Cholesky of {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let perm = minimum_degree_order(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Permuted upper-triangular pattern, row-wise: for new row k the
        // entries (j, value) with j <= k in new numbering.
        let mut up_indptr = Vec::with_capacity(n + 1);
        let mut up_indices: Vec<usize> = Vec::new();
        let mut up_values: Vec<f64> = Vec::new();
        up_indptr.push(0);
        for k in 0..n {
            let old_row = perm[k];
            let mut entries: Vec<(usize, f64)> = a
                .row(old_row)
                .filter_map(|(old_col, v)| {
                    let j = iperm[old_col];
                    (j <= k).then_some((j, v))
                })
                .collect();
            entries.sort_by_key(|&(j, _)| j);
            for (j, v) in entries {
                up_indices.push(j);
                up_values.push(v);
            }
            up_indptr.push(up_indices.len());
        }

        // Elimination tree.
        let mut parent: Vec<isize> = vec![-1; n];
        let mut ancestor: Vec<isize> = vec![-1; n];
        for k in 0..n {
            for p in up_indptr[k]..up_indptr[k + 1] {
                let mut i = up_indices[p] as isize;
                while i != -1 && (i as usize) < k {
                    let next = ancestor[i as usize];
                    ancestor[i as usize] = k as isize;
                    if next == -1 {
                        parent[i as usize] = k as isize;
                        break;
                    }
                    i = next;
                }
            }
        }

        // Column counts via the row-subtree reach of each row.
        let mut counts = vec![1usize; n]; // diagonal entries
        let mut flag: Vec<usize> = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            for p in up_indptr[k]..up_indptr[k + 1] {
                let mut i = up_indices[p];
                while i < k && flag[i] != k {
                    counts[i] += 1;
                    flag[i] = k;
                    i = match parent[i] {
                        -1 => break,
                        v => v as usize,
                    };
                }
            }
        }

        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + counts[j];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next = lp.clone(); // next insertion slot per column

        // Numeric up-looking phase.
        let mut x = vec![0.0f64; n];
        let mut flag2: Vec<usize> = vec![usize::MAX; n];
        let mut s: Vec<usize> = vec![0; n];
        let mut w: Vec<usize> = vec![0; n];
        for k in 0..n {
            // Pattern of row k of L: reach of the row entries in the etree.
            let mut top = n;
            flag2[k] = k;
            let mut d = 0.0;
            for p in up_indptr[k]..up_indptr[k + 1] {
                let j = up_indices[p];
                let v = up_values[p];
                if j == k {
                    d = v;
                    continue;
                }
                x[j] = v;
                let mut i = j;
                let mut len = 0;
                while flag2[i] != k {
                    w[len] = i;
                    len += 1;
                    flag2[i] = k;
                    i = match parent[i] {
                        -1 => break,
                        q => q as usize,
                    };
                    if i >= k {
                        break;
                    }
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    s[top] = w[len];
                }
            }
            // Sparse triangular solve along the pattern; append L[k, i].
            while top < n {
                let i = s[top];
                top += 1;
                let lii = lx[lp[i]];
                let lki = x[i] / lii;
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
            if d <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite { index: k, pivot: d });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }

        Ok(SparseCholesky {
            n,
            perm,
            lp,
            li,
            lx,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // y = P b
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        // L z = y (forward, column-oriented)
        for j in 0..n {
            let yj = y[j] / self.lx[self.lp[j]];
            y[j] = yj;
            for p in (self.lp[j] + 1)..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        // L^T x = z (backward)
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in (self.lp[j] + 1)..self.lp[j + 1] {
                s -= self.lx[p] * y[self.li[p]];
            }
            y[j] = s / self.lx[self.lp[j]];
        }
        // x = P^T y
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.perm[k]] = y[k];
        }
        x
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }
}

/// Greedy minimum-degree ordering on the symmetric sparsity pattern.
fn minimum_degree_order(a: &CsrMatrix) -> Vec<usize> {
    use std::collections::BTreeSet;
    let n = a.nrows();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if !alive[v] || adj[v].len() != deg {
            continue; // stale heap entry
        }
        alive[v] = false;
        order.push(v);
        let neighbors: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &neighbors {
            adj[u].remove(&v);
        }
        for (ai, &u) in neighbors.iter().enumerate() {
            for &t in &neighbors[ai + 1..] {
                adj[u].insert(t);
                adj[t].insert(u);
            }
        }
        adj[v].clear();
        for &u in &neighbors {
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}
