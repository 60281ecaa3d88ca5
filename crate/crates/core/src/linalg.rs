//! Dense real symmetric kernels: Householder tridiagonalization with implicit
//! QL iteration, pivoted Cholesky, and block orthonormalization.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigen-decomposition of a dense symmetric matrix.
///
/// `a` is row-major `n×n`; only the lower triangle is read. Returns ascending
/// eigenvalues and, when requested, eigenvectors stored column-major
/// (vector k occupies `vecs[k*n..(k+1)*n]`).
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize, want_vectors: bool) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != n * n {
        return Err(Error::InvalidInput(format!("expected {} entries, got {}", n * n, a.len())));
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix contains non-finite entries".into()));
    }
    let mut v = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e, n, want_vectors);
    // rows of vt are the columns of the accumulated transform
    let mut vt = if want_vectors { transpose(&v, n) } else { Vec::new() };
    drop(v);
    tql2(&mut d, &mut e, &mut vt, n, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut out = Vec::with_capacity(n * n);
        for &i in &order {
            out.extend_from_slice(&vt[i * n..(i + 1) * n]);
        }
        out
    } else {
        Vec::new()
    };
    Ok((values, vectors))
}

fn transpose<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

// Householder reduction to tridiagonal form (EISPACK tred2 ordering).
fn tred2<T: Real>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize, accumulate: bool) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    let vkj = v[idx(k, j)];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    if accumulate {
        for i in 0..(n - 1) {
            v[idx(n - 1, i)] = v[idx(i, i)];
            v[idx(i, i)] = T::one();
            let h = d[i + 1];
            if h != T::zero() {
                for k in 0..=i {
                    d[k] = v[idx(k, i + 1)] / h;
                }
                for j in 0..=i {
                    let mut g = T::zero();
                    for k in 0..=i {
                        g += v[idx(k, i + 1)] * v[idx(k, j)];
                    }
                    for k in 0..=i {
                        v[idx(k, j)] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                v[idx(k, i + 1)] = T::zero();
            }
        }
        for j in 0..n {
            d[j] = v[idx(n - 1, j)];
            v[idx(n - 1, j)] = T::zero();
        }
        v[idx(n - 1, n - 1)] = T::one();
    } else {
        // without accumulation the reduced diagonal is left on v's diagonal
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = v[idx(j, j)];
        }
    }
    e[0] = T::zero();
}

// Implicit QL on the tridiagonal (d, e). `vt` holds transform columns as rows.
fn tql2<T: Real>(d: &mut [T], e: &mut [T], vt: &mut [T], n: usize, want_vectors: bool) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    let max_iter = 30 * n.max(1) + 60;
    let mut total_iter = 0usize;
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > max_iter {
                    return Err(Error::SolverFailure {
                        iterations: total_iter,
                        detail: format!("QL iteration stalled at index {l} (|e|={})", e[l].abs()),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::two() * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        let (lo, hi) = vt.split_at_mut((i + 1) * n);
                        let row_i = &mut lo[i * n..];
                        let row_next = &mut hi[..n];
                        for (a, b) in row_i.iter_mut().zip(row_next.iter_mut()) {
                            let hk = *b;
                            *b = s * *a + c * hk;
                            *a = c * *a - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Eigenvalues of [[a, b], [b, c]] in ascending order.
pub fn eigen2x2<T: Real>(a: T, b: T, c: T) -> [T; 2] {
    let mean = T::half() * (a + c);
    let radius = (T::half() * (a - c)).hypot(b);
    [mean - radius, mean + radius]
}

/// Result of a pivoted Cholesky factorization of a symmetric PSD matrix.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    n: usize,
    /// Lower factor of the permuted matrix, row-major, first `rank` columns valid.
    l: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedCholesky {
    /// Factors `a` (row-major). Pivots below `rel_tol · max diag` count as zero.
    pub fn new(a: &[f64], n: usize, rel_tol: f64) -> Self {
        let mut w = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        let threshold = rel_tol * max_diag.max(f64::MIN_POSITIVE);
        let mut rank = 0;
        for k in 0..n {
            let (piv, best) = (k..n).map(|i| (i, w[i * n + i])).fold((k, f64::NEG_INFINITY), |acc, x| {
                if x.1 > acc.1 {
                    x
                } else {
                    acc
                }
            });
            if !(best > threshold) {
                break;
            }
            if piv != k {
                swap_sym(&mut w, n, k, piv);
                perm.swap(k, piv);
            }
            let lkk = w[k * n + k].sqrt();
            w[k * n + k] = lkk;
            for i in (k + 1)..n {
                w[i * n + k] /= lkk;
            }
            for j in (k + 1)..n {
                let ljk = w[j * n + k];
                for i in j..n {
                    w[i * n + j] -= w[i * n + k] * ljk;
                }
            }
            rank += 1;
        }
        Self { n, l: w, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Original indices whose pivots were rejected.
    pub fn deficient_indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.perm[self.rank..].to_vec();
        out.sort_unstable();
        out
    }

    /// Solves A x = b; only valid at full rank.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Full inverse of A; only valid at full rank.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut unit = vec![0.0; n];
        for j in 0..n {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[j] = 1.0;
            let col = self.solve(&unit);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

// Swaps rows/cols p and q of a symmetric matrix stored in its lower triangle.
fn swap_sym(w: &mut [f64], n: usize, p: usize, q: usize) {
    for c in 0..n {
        w.swap(p * n + c, q * n + c);
    }
    for r in 0..n {
        w.swap(r * n + p, r * n + q);
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Orthonormalizes the `ncols` columns of a column-major block in place with
/// two passes of modified Gram-Schmidt. Columns that collapse are replaced by
/// `refill(col_index, column)` and re-orthogonalized.
pub fn orthonormalize<T: Real>(block: &mut [T], dim: usize, ncols: usize, mut refill: impl FnMut(usize, &mut [T])) {
    let collapse = T::lit(1e-8);
    let mut j = 0;
    let mut attempts = 0;
    while j < ncols {
        let (done, rest) = block.split_at_mut(j * dim);
        let col = &mut rest[..dim];
        let before = norm(col);
        for _ in 0..2 {
            for k in 0..j {
                let q = &done[k * dim..(k + 1) * dim];
                let c = dot(q, col);
                for (x, y) in col.iter_mut().zip(q) {
                    *x -= c * *y;
                }
            }
        }
        let after = norm(col);
        if after <= collapse * before || after == T::zero() || !after.is_finite() {
            attempts += 1;
            assert!(attempts < 64, "unable to complete an orthonormal block");
            refill(j, col);
            continue;
        }
        let inv = after.recip();
        col.iter_mut().for_each(|x| *x *= inv);
        j += 1;
        attempts = 0;
    }
}
