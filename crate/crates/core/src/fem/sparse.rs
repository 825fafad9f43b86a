//! Compressed-row symmetric storage, reverse Cuthill-McKee ordering and a
//! skyline LDLᵀ factorization for (possibly indefinite) shifted operators.

use std::collections::VecDeque;

use super::FemError;

/// Square sparse matrix in compressed-row form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets. Duplicate
    /// entries are summed in the order given, so identical triplet streams
    /// give bitwise-identical matrices.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = fill[r];
            cols[k] = c;
            vals[k] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..n {
            let (a, b) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(a..b);
            // stable sort keeps insertion order among duplicates
            order.sort_by_key(|&k| cols[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(cols[k]) {
                    *values.last_mut().expect("entry exists") += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = Some(cols[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.values[k] * y[self.col_idx[k]];
            }
            s += x[i] * r;
        }
        s
    }

    /// Largest `|A_ij − A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                scale = scale.max(v.abs());
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Principal submatrix on `keep` (new index → old index).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut new_of = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            new_of[old] = new;
        }
        let mut trip = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if new_of[j] != usize::MAX {
                    trip.push((new_i, new_of[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &trip)
    }

    /// `self + alpha · other` (same dimension).
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            trip.extend(self.row(i).map(|(j, v)| (i, j, v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph. Returns the
/// permutation as new index → old index.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut neighbours = Vec::new();

    let bfs_levels = |start: usize| -> (usize, usize) {
        // returns (eccentricity, last node of the deepest level with min degree)
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        level[start] = 0;
        q.push_back(start);
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for (w, _) in a.row(v) {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    q.push_back(w);
                }
            }
        }
        let ecc = level[last];
        let far = (0..n).filter(|&v| level[v] == ecc).min_by_key(|&v| (degree[v], v)).unwrap_or(last);
        (ecc, far)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node within this component
        let mut start = (seed..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)).unwrap_or(seed);
        let (mut ecc, mut far) = bfs_levels(start);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        if visited[start] {
            start = seed;
        }
        let mut q = VecDeque::new();
        visited[start] = true;
        q.push_back(start);
        while let Some(v) = q.pop_front() {
            order.push(v);
            neighbours.clear();
            neighbours.extend(a.row(v).map(|(w, _)| w).filter(|&w| !visited[w]));
            neighbours.sort_by_key(|&w| (degree[w], w));
            for &w in &neighbours {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `LDLᵀ` factorization in skyline (variable band) storage, without pivoting.
#[derive(Debug, Clone)]
pub struct SkylineLdl {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
    negative_pivots: usize,
}

impl SkylineLdl {
    /// Factors `a` after reordering with `perm` (new → old). Fails with
    /// [`FemError::SingularShift`] when a pivot vanishes relative to the
    /// original diagonal.
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self, FemError> {
        let n = a.dim();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (j, _) in a.row(old_i) {
                let nj = inv[j];
                if nj < first[new_i] {
                    first[new_i] = nj;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        let mut diag_scale = vec![0.0; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (j, v) in a.row(old_i) {
                let nj = inv[j];
                if nj <= new_i {
                    data[offset[new_i] + nj - first[new_i]] += v;
                }
                if nj == new_i {
                    diag_scale[new_i] = v.abs();
                }
            }
        }
        let max_diag = diag_scale.iter().cloned().fold(0.0, f64::max);
        let mut negative_pivots = 0;
        for i in 0..n {
            let fi = first[i];
            let row_start = offset[i];
            // u_ij = l_ij d_j, computed left to right
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                if k0 < j {
                    let (head, tail) = data.split_at_mut(row_start);
                    let row_j = &head[offset[j] + k0 - fj..offset[j] + j - fj];
                    let row_i = &tail[k0 - fi..j - fi];
                    let s: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                    tail[j - fi] -= s;
                }
            }
            let mut d = data[row_start + i - fi];
            for j in fi..i {
                let dj = data[offset[j + 1] - 1];
                let u = data[row_start + j - fi];
                let l = u / dj;
                d -= u * l;
                data[row_start + j - fi] = l;
            }
            let tol = 1e-12 * diag_scale[i].max(1e-3 * max_diag);
            if !(d.abs() > tol) {
                return Err(FemError::SingularShift { pivot_index: i, pivot: d });
            }
            if d < 0.0 {
                negative_pivots += 1;
            }
            data[row_start + i - fi] = d;
        }
        Ok(SkylineLdl { perm, first, offset, data, negative_pivots })
    }

    /// Number of negative pivots, i.e. eigenvalues of the factored pencil
    /// shift lying below the shift.
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    pub fn profile_len(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1] - 1];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, z)| l * z).sum();
            y[i] -= s;
        }
        for i in 0..n {
            y[i] /= self.data[self.offset[i + 1] - 1];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1] - 1];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}
