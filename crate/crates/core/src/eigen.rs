//! Eigendecompositions with verified residuals and the truncation search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, orthonormalize, symmetric_eigen};
use crate::operators::HermitianOperator;
use crate::scalar::Real;
use crate::sparse::SparseSymmetric;

/// Relative residual bound every returned eigenpair satisfies.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Matrices larger than this are better served by [`lowest_eigenpairs`]
/// when only the bottom of the spectrum is needed.
pub const DENSE_DIM_LIMIT: usize = 240;

/// Eigenvalues in ascending order with orthonormal eigenvectors.
///
/// A system may hold the full spectrum or only its lowest part.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem<T> {
    values: Vec<T>,
    vectors: Vec<T>,
    dim: usize,
    residual_norm: T,
}

impl<T: Real> EigenSystem<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.values
    }

    /// Number of eigenpairs held.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dimension of the underlying space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_partial(&self) -> bool {
        self.values.len() < self.dim
    }

    pub fn vector(&self, k: usize) -> &[T] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// All vectors, column-major.
    pub fn vectors(&self) -> &[T] {
        &self.vectors
    }

    /// Largest ‖Hv_k − λ_k v_k‖₂ over the held pairs, in GHz.
    pub fn residual_norm(&self) -> T {
        self.residual_norm
    }

    /// Largest |⟨v_j|v_k⟩ − δ_jk|.
    pub fn orthonormality_error(&self) -> T {
        let mut worst = T::zero();
        for j in 0..self.len() {
            for k in j..self.len() {
                let target = if j == k { T::one() } else { T::zero() };
                worst = worst.max((dot(self.vector(j), self.vector(k)) - target).abs());
            }
        }
        worst
    }

    // Overwrites vectors start.. with an orthonormal basis of the same subspace.
    pub(crate) fn replace_vectors(&mut self, start: usize, vectors: &[Vec<T>]) {
        for (k, v) in vectors.iter().enumerate() {
            let j = start + k;
            self.vectors[j * self.dim..(j + 1) * self.dim].copy_from_slice(v);
        }
    }

    /// Keeps only the lowest `count` pairs.
    pub fn truncated(mut self, count: usize) -> Self {
        if count < self.values.len() {
            self.values.truncate(count);
            self.vectors.truncate(count * self.dim);
        }
        self
    }
}

fn max_residual<T: Real>(apply: impl Fn(&[T], &mut [T]), values: &[T], vectors: &[T], dim: usize) -> T {
    let mut hv = vec![T::zero(); dim];
    let mut worst = T::zero();
    for (k, &lambda) in values.iter().enumerate() {
        let v = &vectors[k * dim..(k + 1) * dim];
        apply(v, &mut hv);
        let r: T = hv.iter().zip(v).map(|(a, b)| (*a - lambda * *b).powi(2)).sum();
        worst = worst.max(r.sqrt());
    }
    worst
}

/// Full eigendecomposition of a dense Hermitian operator.
pub fn eigh<T: Real>(h: &HermitianOperator<T>) -> Result<EigenSystem<T>> {
    let n = h.dim();
    let (values, vectors) = symmetric_eigen(h.data(), n, true)?;
    let residual_norm = max_residual(|x, y| h.apply(x, y), &values, &vectors, n);
    let scale = h.max_abs().max(T::min_positive_value());
    if !(residual_norm <= T::lit(RESIDUAL_TOL) * scale) {
        return Err(Error::SolverFailure {
            iterations: 0,
            detail: format!("residual {residual_norm} exceeds tolerance for ‖H‖_max = {scale}"),
        });
    }
    Ok(EigenSystem { values, vectors, dim: n, residual_norm })
}

/// Eigenvalues only, ascending.
pub fn eigvalsh<T: Real>(h: &HermitianOperator<T>) -> Result<Vec<T>> {
    Ok(symmetric_eigen(h.data(), h.dim(), false)?.0)
}

/// Tuning of the partial solver.
#[derive(Clone, Copy, Debug)]
pub struct PartialOptions {
    /// Residual target relative to ‖H‖_max.
    pub rel_tol: f64,
    /// Chebyshev filter degree.
    pub degree: usize,
    pub max_iterations: usize,
    /// Extra search vectors beyond the requested count; `None` picks one.
    pub buffer: Option<usize>,
    pub seed: u64,
}

impl Default for PartialOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-11, degree: 30, max_iterations: 400, buffer: None, seed: 0x5eed }
    }
}

impl PartialOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Lowest `count` eigenpairs of a sparse symmetric matrix by Chebyshev-filtered
/// subspace iteration. `guess` may hold up to the block size of column-major
/// starting vectors, typically the result at a nearby parameter value.
pub fn lowest_eigenpairs<T: Real>(
    h: &SparseSymmetric<T>,
    count: usize,
    opts: &PartialOptions,
    guess: Option<&[T]>,
) -> Result<EigenSystem<T>> {
    let dim = h.dim();
    if count == 0 {
        return Err(Error::InvalidParameter("requested zero eigenpairs".into()));
    }
    if count > dim {
        return Err(Error::InvalidParameter(format!("requested {count} eigenpairs of a {dim}-dimensional matrix")));
    }
    let buffer = opts.buffer.unwrap_or_else(|| (count / 3).max(10));
    let m = count + buffer;
    if 3 * m >= dim {
        let (values, vectors) = symmetric_eigen(&h.to_dense(), dim, true)?;
        let values = values[..count].to_vec();
        let vectors = vectors[..count * dim].to_vec();
        let residual_norm = max_residual(|x, y| h.apply(x, y), &values, &vectors, dim);
        return Ok(EigenSystem { values, vectors, dim, residual_norm });
    }

    let scale = h.max_abs().max(T::min_positive_value());
    let tol = T::lit(opts.rel_tol) * scale;
    let upper = h.gershgorin_upper();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_column = |col: &mut [T]| {
        for x in col.iter_mut() {
            *x = T::lit(rng.random_range(-1.0..1.0));
        }
    };

    let mut x = vec![T::zero(); dim * m];
    let provided = guess.map(|g| (g.len() / dim).min(m)).unwrap_or(0);
    if let Some(g) = guess {
        x[..provided * dim].copy_from_slice(&g[..provided * dim]);
    }
    if provided < m {
        // unit vectors on the smallest diagonal entries, lightly randomized
        let diag: Vec<T> = (0..dim).map(|i| h.diagonal_entry(i)).collect();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap_or(std::cmp::Ordering::Equal));
        for (slot, &i) in (provided..m).zip(order.iter()) {
            let col = &mut x[slot * dim..(slot + 1) * dim];
            random_column(col);
            col.iter_mut().for_each(|v| *v *= T::lit(1e-3));
            col[i] += T::one();
        }
    }

    let mut hx = vec![T::zero(); dim * m];
    let mut work_a = vec![T::zero(); dim * m];
    let mut work_b = vec![T::zero(); dim * m];
    let mut ritz = vec![T::zero(); m];
    for iteration in 0..=opts.max_iterations {
        orthonormalize(&mut x, dim, m, |_, col| random_column(col));
        h.apply_block(&x, &mut hx, m);
        rayleigh_ritz(&mut x, &mut hx, &mut ritz, dim, m, &mut work_a)?;

        let mut worst = T::zero();
        for k in 0..count {
            let lambda = ritz[k];
            let r: T = hx[k * dim..(k + 1) * dim]
                .iter()
                .zip(&x[k * dim..(k + 1) * dim])
                .map(|(a, b)| (*a - lambda * *b).powi(2))
                .sum();
            worst = worst.max(r.sqrt());
        }
        if worst <= tol {
            if std::env::var("QDBG").is_ok() { eprintln!("iters {iteration} tol {tol}"); }
            let values = ritz[..count].to_vec();
            x.truncate(count * dim);
            return Ok(EigenSystem { values, vectors: x, dim, residual_norm: worst });
        }
        if iteration == opts.max_iterations {
            return Err(Error::SolverFailure {
                iterations: iteration,
                detail: format!("subspace iteration residual {worst} above {tol}"),
            });
        }
        chebyshev_filter(h, &mut x, &mut work_a, &mut work_b, m, opts.degree, ritz[0], ritz[m - 1], upper);
    }
    unreachable!()
}

// Projects onto span(x), rotates x and hx to Ritz vectors, writes Ritz values.
fn rayleigh_ritz<T: Real>(x: &mut [T], hx: &mut [T], ritz: &mut [T], dim: usize, m: usize, work: &mut [T]) -> Result<()> {
    let mut g = vec![T::zero(); m * m];
    for i in 0..m {
        for j in i..m {
            let v = dot(&x[i * dim..(i + 1) * dim], &hx[j * dim..(j + 1) * dim]);
            g[i * m + j] = v;
            g[j * m + i] = v;
        }
    }
    let (vals, w) = symmetric_eigen(&g, m, true)?;
    ritz.copy_from_slice(&vals);
    rotate(x, &w, dim, m, work);
    rotate(hx, &w, dim, m, work);
    Ok(())
}

// block ← block · w, with w column-major m×m.
fn rotate<T: Real>(block: &mut [T], w: &[T], dim: usize, m: usize, work: &mut [T]) {
    work.iter_mut().for_each(|v| *v = T::zero());
    for k in 0..m {
        let out = &mut work[k * dim..(k + 1) * dim];
        for j in 0..m {
            let c = w[k * m + j];
            if c == T::zero() {
                continue;
            }
            for (o, b) in out.iter_mut().zip(&block[j * dim..(j + 1) * dim]) {
                *o += c * *b;
            }
        }
    }
    block.copy_from_slice(&work[..dim * m]);
}

// Scaled Chebyshev filter damping [cut, upper] relative to the lowest Ritz
// value. Works on a row-major copy so the sparse product runs over
// contiguous rows of the block.
#[allow(clippy::too_many_arguments)]
fn chebyshev_filter<T: Real>(
    h: &SparseSymmetric<T>,
    x: &mut [T],
    y: &mut Vec<T>,
    y_next: &mut Vec<T>,
    m: usize,
    degree: usize,
    lowest: T,
    cut: T,
    upper: T,
) {
    let dim = h.dim();
    let e = T::half() * (upper - cut);
    let c = T::half() * (upper + cut);
    if !(e > T::zero()) {
        return;
    }
    let mut prev = transpose_block(x, dim, m);
    let mut sigma = e / (lowest - c);
    let tau = T::two() / sigma;
    h.apply_block_rows(&prev, y, m);
    let f = sigma / e;
    for (yv, xv) in y.iter_mut().zip(prev.iter()) {
        *yv = (*yv - c * *xv) * f;
    }
    for _ in 2..=degree {
        let sigma_next = (tau - sigma).recip();
        h.apply_block_rows(y, y_next, m);
        let a = T::two() * sigma_next / e;
        let b = sigma * sigma_next;
        for ((yn, yv), xv) in y_next.iter_mut().zip(y.iter()).zip(prev.iter()) {
            *yn = (*yn - c * *yv) * a - b * *xv;
        }
        std::mem::swap(&mut prev, y);
        std::mem::swap(y, y_next);
        sigma = sigma_next;
    }
    for i in 0..dim {
        for k in 0..m {
            x[k * dim + i] = y[i * m + k];
        }
    }
    // keep magnitudes bounded before orthonormalization
    for k in 0..m {
        let col = &mut x[k * dim..(k + 1) * dim];
        let nrm = norm(col);
        if nrm > T::zero() && nrm.is_finite() {
            let inv = nrm.recip();
            col.iter_mut().for_each(|v| *v *= inv);
        }
    }
}

fn transpose_block<T: Real>(x: &[T], dim: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); dim * m];
    for k in 0..m {
        for i in 0..dim {
            out[i * m + k] = x[k * dim + i];
        }
    }
    out
}

/// Lowest `count` eigenvalues of a dense operator.
pub fn lowest_eigenvalues<T: Real>(h: &HermitianOperator<T>, count: usize) -> Result<Vec<T>> {
    if count > h.dim() {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenvalues of a {}-dimensional operator",
            h.dim()
        )));
    }
    if h.dim() > DENSE_DIM_LIMIT && 4 * count < h.dim() {
        let sys = lowest_eigenpairs(&h.to_sparse(), count, &PartialOptions::default(), None)?;
        return Ok(sys.values);
    }
    let mut v = eigvalsh(h)?;
    v.truncate(count);
    Ok(v)
}

/// Upper bound on the truncation tried by [`converge_truncation`].
pub const MAX_SEARCH_NMAX: usize = 4096;

/// Smallest truncation `n ≥ start` for which the lowest `levels` eigenvalues
/// move by less than `tol` when the truncation grows to ⌈1.5 n⌉.
///
/// `builder` maps a truncation to the operator; errors it returns (such as a
/// dimension cap) end the search.
pub fn converge_truncation<T: Real, F>(builder: F, start: usize, levels: usize, tol: T) -> Result<usize>
where
    F: Fn(usize) -> Result<HermitianOperator<T>>,
{
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be >= 1".into()));
    }
    if tol.is_nan() || tol <= T::zero() {
        return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
    }
    let start = start.max(1);
    if tol.is_infinite() {
        return Ok(start);
    }
    let passes = |n: usize| -> Result<bool> {
        let small = builder(n)?;
        if small.dim() < levels {
            return Ok(false);
        }
        let big = builder(n + n.div_ceil(2))?;
        let a = lowest_eigenvalues(&small, levels)?;
        let b = lowest_eigenvalues(&big, levels)?;
        Ok(a.iter().zip(&b).all(|(x, y)| (*x - *y).abs() < tol))
    };
    if passes(start)? {
        return Ok(start);
    }
    let mut lo = start;
    let mut hi = start;
    loop {
        hi *= 2;
        if hi > MAX_SEARCH_NMAX {
            let dim = builder(lo).map(|h| h.dim()).unwrap_or(0);
            return Err(Error::TruncationTooLarge { dim, cap: dim });
        }
        if passes(hi)? {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluxmap::FluxPoint;
    use crate::operators::{build_multimode_hamiltonian, build_sparse_hamiltonian, ModeParams, ModelVariant};
    use approx::assert_relative_eq;

    fn device(nmax: usize) -> HermitianOperator<f64> {
        let fp = FluxPoint::optimal(3.198).unwrap();
        let m = ModeParams::new(1, 2.360, 0.265, nmax).unwrap();
        build_multimode_hamiltonian(&fp, &[m], ModelVariant::Rabi).unwrap()
    }

    #[test]
    fn invariants_hold_for_rabi() {
        let h = device(30);
        let sys = eigh(&h).unwrap();
        assert!(sys.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        assert!(sys.residual_norm() <= 1e-9 * h.max_abs());
        assert!(sys.orthonormality_error() <= 1e-10);
        let sum: f64 = sys.eigenvalues().iter().sum();
        assert!((sum - h.trace()).abs() <= 1e-9 * h.dim() as f64 * h.max_abs());
    }

    #[test]
    fn reconstruction() {
        let h = device(12);
        let sys = eigh(&h).unwrap();
        let n = h.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| sys.vector(k)[i] * sys.eigenvalues()[k] * sys.vector(k)[j]).sum();
                worst = worst.max((r - h.get(i, j)).abs());
            }
        }
        assert!(worst <= 1e-9 * h.max_abs());
    }

    #[test]
    fn ground_energy_near_bloch_siegert_value() {
        // −½(ω_q − ω_r) − ω_BS relative to the zero-point ½ω_r
        let sys = eigh(&device(30)).unwrap();
        let w_bs = 0.265f64.powi(2) / (3.198 + 2.360);
        let expected = -0.5 * (3.198 - 2.360) - w_bs;
        assert!((sys.eigenvalues()[0] - expected).abs() < 1e-3);
    }

    #[test]
    fn decoupled_multiset() {
        let fp = FluxPoint::optimal(3.198).unwrap();
        let modes = [ModeParams::new(1, 2.36, 0.0, 4).unwrap(), ModeParams::new(3, 7.078, 0.0, 2).unwrap()];
        let h = build_multimode_hamiltonian(&fp, &modes, ModelVariant::Rabi).unwrap();
        let sys = eigh(&h).unwrap();
        let mut expected: Vec<f64> = Vec::new();
        for s in [-1.0, 1.0] {
            for n1 in 0..=4 {
                for n3 in 0..=2 {
                    expected.push(0.5 * s * 3.198 + (n1 as f64 + 0.5) * 2.36 + (n3 as f64 + 0.5) * 7.078);
                }
            }
        }
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in sys.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn partial_matches_dense() {
        let fp = FluxPoint::optimal(3.198).unwrap();
        let modes = [ModeParams::new(1, 2.36, 0.265, 20).unwrap(), ModeParams::new(3, 7.078, 0.459, 5).unwrap()];
        let dense = build_multimode_hamiltonian(&fp, &modes, ModelVariant::Rabi).unwrap();
        let (_, sparse) = build_sparse_hamiltonian(&fp, &modes, ModelVariant::Rabi, 10_000).unwrap();
        let full = eigh(&dense).unwrap();
        let part = lowest_eigenpairs(&sparse, 12, &PartialOptions::default(), None).unwrap();
        for k in 0..12 {
            assert_relative_eq!(part.eigenvalues()[k], full.eigenvalues()[k], epsilon = 1e-10);
        }
        assert!(part.residual_norm() <= 1e-9 * dense.max_abs());
        assert!(part.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn f32_decomposition() {
        let fp = FluxPoint::<f32>::optimal(3.198).unwrap();
        let m = ModeParams::new(1, 2.36f32, 0.265, 6).unwrap();
        let h = build_multimode_hamiltonian(&fp, &[m], ModelVariant::Rabi).unwrap();
        let (vals, _) = symmetric_eigen(h.data(), h.dim(), false).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn truncation_search_examples() {
        let fp = FluxPoint::optimal(3.198).unwrap();
        let build = |g: f64| {
            move |n: usize| {
                let m = ModeParams::new(1, 2.36, g, n)?;
                build_multimode_hamiltonian(&fp, &[m], ModelVariant::Rabi)
            }
        };
        assert_eq!(converge_truncation(build(0.265), 7, 20, f64::INFINITY).unwrap(), 7);
        let n = converge_truncation(build(0.265), 10, 20, 1e-6).unwrap();
        assert!(n <= 40, "converged at {n}");
        let n0 = converge_truncation(build(0.0), 1, 6, 1e-9).unwrap();
        let h = build(0.0)(n0).unwrap();
        assert!(h.dim() >= 6);
        assert!(converge_truncation(build(0.265), 10, 0, 1e-6).is_err());
    }
}
