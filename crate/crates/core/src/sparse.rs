//! Compressed-row view of a real symmetric operator, used for block
//! matrix-vector products inside the subspace eigensolver.

use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct SparseSymmetric<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> SparseSymmetric<T> {
    /// Assembles from upper-triangle contributions `(i, j, v)` with `i <= j`.
    /// Repeated entries are summed and the lower triangle is mirrored.
    pub fn from_upper_triplets(dim: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut full: Vec<(usize, usize, T)> = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            debug_assert!(i <= j && j < dim);
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(full.len());
        let mut vals: Vec<T> = Vec::with_capacity(full.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in full {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols, vals }
    }

    /// Extracts the nonzeros of a dense row-major symmetric matrix.
    pub fn from_dense(dim: usize, data: &[T]) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for (j, &v) in data[i * dim..(i + 1) * dim].iter().enumerate() {
                if v != T::zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal_entry(&self, i: usize) -> T {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&i) {
            Ok(k) => self.vals[a + k],
            Err(_) => T::zero(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.dim {
            let mut acc = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            y[i] = acc;
        }
    }

    /// `Y = A X` for column-major blocks with `cols` columns.
    pub fn apply_block(&self, x: &[T], y: &mut [T], ncols: usize) {
        let n = self.dim;
        for c in 0..ncols {
            self.apply(&x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
        }
    }

    /// `Y = A X` for row-major blocks with `ncols` columns.
    pub fn apply_block_rows(&self, x: &[T], y: &mut [T], ncols: usize) {
        for i in 0..self.dim {
            let out = &mut y[i * ncols..(i + 1) * ncols];
            out.iter_mut().for_each(|v| *v = T::zero());
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[p];
                let c = self.cols[p];
                for (o, xv) in out.iter_mut().zip(&x[c * ncols..(c + 1) * ncols]) {
                    *o += a * *xv;
                }
            }
        }
    }

    /// Upper bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_upper(&self) -> T {
        self.gershgorin(true)
    }

    pub fn gershgorin_lower(&self) -> T {
        self.gershgorin(false)
    }

    fn gershgorin(&self, upper: bool) -> T {
        let mut bound = if upper { T::neg_infinity() } else { T::infinity() };
        for i in 0..self.dim {
            let mut diag = T::zero();
            let mut radius = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[p] == i {
                    diag += self.vals[p];
                } else {
                    radius += self.vals[p].abs();
                }
            }
            bound = if upper { bound.max(diag + radius) } else { bound.min(diag - radius) };
        }
        bound
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<T> {
        let n = self.dim;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i * n + self.cols[p]] = self.vals[p];
            }
        }
        out
    }
}
