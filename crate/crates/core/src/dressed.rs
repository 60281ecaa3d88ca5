//! Dressed-state labeling by adiabatic continuation, numeric transition
//! frequencies, and the closed-form Bloch-Siegert expressions.

use std::collections::BTreeMap;
use std::fmt;

use crate::basis::{BasisDescriptor, QubitLevel, StateLabel};
use crate::eigen::{eigh, lowest_eigenpairs, EigenSystem, PartialOptions, DENSE_DIM_LIMIT};
use crate::error::{Error, Result};
use crate::fluxmap::FluxPoint;
use crate::linalg::dot;
use crate::operators::{
    bare_energies, build_multimode_hamiltonian_capped, build_sparse_hamiltonian, vacuum_bs_shift, ModeParams,
    ModelVariant, DEFAULT_DIM_CAP,
};
use crate::scalar::Real;

/// Overlaps at or below this value trigger step refinement.
pub const MIN_OVERLAP: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Maximum number of step halvings before a labeling error.
pub const MAX_BISECTIONS: u32 = 6;

/// Which model produced a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelTag {
    Numeric(ModelVariant),
    AnalyticBs,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Numeric(v) => v.name(),
            ModelTag::AnalyticBs => "analytic_bs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("analytic_bs") {
            Ok(ModelTag::AnalyticBs)
        } else {
            ModelVariant::parse(s).map(ModelTag::Numeric)
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A labeled transition `from → to`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord<T> {
    pub from: StateLabel,
    pub to: StateLabel,
    /// E_to − E_from in GHz.
    pub frequency: T,
    pub weight: T,
    pub model: ModelTag,
    /// ⟨to|(a_m + a_m†)|from⟩ per mode, in basis order. Empty for analytic records.
    pub matrix_elements: Vec<T>,
}

/// Continuation settings.
#[derive(Clone, Copy, Debug)]
pub struct LabelOptions {
    /// Number of coupling steps from s = 0 to s = 1.
    pub steps: usize,
    /// Dimension cap for the Hamiltonian.
    pub dim_cap: usize,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self { steps: 20, dim_cap: DEFAULT_DIM_CAP }
    }
}

/// Eigenstates with dressed labels attached.
#[derive(Clone, Debug)]
pub struct LabeledSystem<T> {
    system: EigenSystem<T>,
    basis: BasisDescriptor,
    labels: Vec<StateLabel>,
    index: BTreeMap<StateLabel, usize>,
    min_overlap: T,
    degenerate: bool,
}

impl<T: Real> LabeledSystem<T> {
    pub fn system(&self) -> &EigenSystem<T> {
        &self.system
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    /// Tracked labels in order of their s = 0 energies.
    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    pub fn eigenindex(&self, label: &StateLabel) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    pub fn energy(&self, label: &StateLabel) -> Result<T> {
        Ok(self.system.eigenvalues()[self.eigenindex(label)?])
    }

    pub fn vector(&self, label: &StateLabel) -> Result<&[T]> {
        Ok(self.system.vector(self.eigenindex(label)?))
    }

    /// Smallest step-to-step overlap met during continuation.
    pub fn min_overlap(&self) -> T {
        self.min_overlap
    }

    /// True when a degenerate cluster had to be aligned to its predecessors.
    pub fn flagged_degenerate(&self) -> bool {
        self.degenerate
    }

    /// ⟨to|(a_k + a_k†)|from⟩ for the mode at basis position `k`.
    pub fn quadrature_element(&self, from: &StateLabel, to: &StateLabel, k: usize) -> Result<T> {
        let vf = self.vector(from)?;
        let vt = self.vector(to)?;
        Ok(quadrature_between(&self.basis, k, vf, vt))
    }

    /// Transition record between two labeled states with per-mode matrix elements.
    pub fn transition(&self, from: &StateLabel, to: &StateLabel, variant: ModelVariant) -> Result<TransitionRecord<T>> {
        let frequency = self.energy(to)? - self.energy(from)?;
        let matrix_elements = (0..self.basis.num_modes())
            .map(|k| self.quadrature_element(from, to, k))
            .collect::<Result<Vec<_>>>()?;
        let weight = matrix_elements.iter().map(|m| *m * *m).sum();
        Ok(TransitionRecord {
            from: from.clone(),
            to: to.clone(),
            frequency,
            weight,
            model: ModelTag::Numeric(variant),
            matrix_elements,
        })
    }
}

/// ⟨v_to|(a_k + a_k†)|v_from⟩.
pub fn quadrature_between<T: Real>(basis: &BasisDescriptor, k: usize, from: &[T], to: &[T]) -> T {
    let stride = basis.stride(k);
    let levels = basis.modes()[k].nmax + 1;
    let mut acc = T::zero();
    for i in 0..basis.dim() {
        let n = (i / stride) % levels;
        if n + 1 < levels {
            let j = i + stride;
            let amp = T::from_usize_lossy(n + 1).sqrt();
            // a† takes i to j, a takes j to i
            acc += amp * (to[j] * from[i] + to[i] * from[j]);
        }
    }
    acc
}

fn scaled<T: Real>(modes: &[ModeParams<T>], s: T) -> Vec<ModeParams<T>> {
    modes.iter().map(|m| m.with_coupling(m.coupling * s)).collect()
}

struct Solver<'a, T> {
    fp: &'a FluxPoint<T>,
    modes: &'a [ModeParams<T>],
    variant: ModelVariant,
    count: usize,
    dim_cap: usize,
}

impl<T: Real> Solver<'_, T> {
    fn solve(&self, s: T, warm: Option<&[T]>, last: bool) -> Result<EigenSystem<T>> {
        let modes = scaled(self.modes, s);
        let dim: usize = 2 * modes.iter().map(|m| m.nmax + 1).product::<usize>();
        if dim <= DENSE_DIM_LIMIT || 3 * self.count >= dim {
            let h = build_multimode_hamiltonian_capped(self.fp, &modes, self.variant, self.dim_cap)?;
            return Ok(eigh(&h)?.truncated(self.count));
        }
        let (_, h) = build_sparse_hamiltonian(self.fp, &modes, self.variant, self.dim_cap)?;
        // intermediate steps only feed overlaps, so a loose residual suffices
        let opts = PartialOptions::default().with_rel_tol(if last { 1e-11 } else { 1e-5 });
        lowest_eigenpairs(&h, self.count, &opts, warm)
    }
}

/// Labels the lowest `levels` bare states by following them from zero
/// coupling to full coupling.
pub fn label_eigenstates<T: Real>(
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    variant: ModelVariant,
    levels: usize,
    opts: &LabelOptions,
) -> Result<LabeledSystem<T>> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("continuation needs at least one step".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be >= 1".into()));
    }
    let (basis, bare) = bare_energies(fp, modes)?;
    let dim = basis.dim();
    if dim > opts.dim_cap {
        return Err(Error::TruncationTooLarge { dim, cap: opts.dim_cap });
    }
    if levels > dim {
        return Err(Error::InvalidParameter(format!("levels {levels} exceed the dimension {dim}")));
    }
    let mut sorted_modes = modes.to_vec();
    sorted_modes.sort_by_key(|m| m.mode_index);

    // s = 0: product states ordered by energy, then label
    let mut order: Vec<usize> = (0..dim).collect();
    let bare_labels: Vec<StateLabel> = (0..dim).map(|i| basis.label_of(i)).collect();
    order.sort_by(|&a, &b| {
        bare[a]
            .partial_cmp(&bare[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| bare_labels[a].cmp(&bare_labels[b]))
    });
    let tracked: Vec<usize> = order[..levels].to_vec();
    let labels: Vec<StateLabel> = tracked.iter().map(|&i| bare_labels[i].clone()).collect();
    let mut previous = vec![T::zero(); levels * dim];
    for (t, &i) in tracked.iter().enumerate() {
        previous[t * dim + i] = T::one();
    }

    let count = (levels + 4).min(dim);
    let solver = Solver { fp, modes: &sorted_modes, variant, count, dim_cap: opts.dim_cap };
    let scale = bare.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let mut min_overlap = T::one();
    let mut degenerate = false;
    let mut warm: Option<Vec<T>> = None;
    let mut assignment: Vec<usize> = Vec::new();
    let mut current: Option<EigenSystem<T>> = None;

    let steps_t = T::from_usize_lossy(opts.steps);
    for k in 1..=opts.steps {
        let s_prev = T::from_usize_lossy(k - 1) / steps_t;
        let s_next = T::from_usize_lossy(k) / steps_t;
        let mut s = s_prev;
        let mut h = s_next - s_prev;
        let mut halvings = 0u32;
        while s < s_next {
            let target = if s + h >= s_next { s_next } else { s + h };
            let last = k == opts.steps && target == s_next;
            let mut sys = solver.solve(target, warm.as_deref(), last)?;
            let flagged = align_degenerate(&mut sys, &previous, levels, scale);
            match match_states(&sys, &previous, levels) {
                Ok((assign, worst)) => {
                    degenerate |= flagged;
                    min_overlap = min_overlap.min(worst);
                    for (t, &j) in assign.iter().enumerate() {
                        let v = sys.vector(j);
                        let sign = if dot(&previous[t * dim..(t + 1) * dim], v) < T::zero() { -T::one() } else { T::one() };
                        for (p, x) in previous[t * dim..(t + 1) * dim].iter_mut().zip(v) {
                            *p = sign * *x;
                        }
                    }
                    warm = Some(sys.vectors().to_vec());
                    assignment = assign;
                    current = Some(sys);
                    s = target;
                }
                Err((t, overlap)) => {
                    halvings += 1;
                    if halvings > MAX_BISECTIONS {
                        return Err(Error::Labeling {
                            label: labels[t].to_string(),
                            s: target.to_f64_lossy(),
                            overlap: overlap.to_f64_lossy(),
                        });
                    }
                    h = h * T::half();
                }
            }
        }
    }

    let system = current.expect("at least one continuation step ran");
    let index = labels.iter().cloned().zip(assignment.iter().copied()).collect();
    Ok(LabeledSystem { system, basis, labels, index, min_overlap, degenerate })
}

// Matches tracked predecessors to eigenvectors by maximal |overlap|.
// Returns the first failing tracked index with its best overlap on failure.
fn match_states<T: Real>(sys: &EigenSystem<T>, previous: &[T], levels: usize) -> std::result::Result<(Vec<usize>, T), (usize, T)> {
    let dim = sys.dim();
    let threshold = T::lit(MIN_OVERLAP);
    let mut assign = Vec::with_capacity(levels);
    let mut worst = T::one();
    for t in 0..levels {
        let p = &previous[t * dim..(t + 1) * dim];
        let (best_j, best) = (0..sys.len())
            .map(|j| (j, dot(p, sys.vector(j)).abs()))
            .fold((0, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(best > threshold) {
            return Err((t, best.max(T::zero())));
        }
        worst = worst.min(best);
        assign.push(best_j);
    }
    Ok((assign, worst))
}

// Within each exactly degenerate cluster, rotates the eigenvectors to follow
// the predecessors' projections. Returns whether any cluster was touched.
fn align_degenerate<T: Real>(sys: &mut EigenSystem<T>, previous: &[T], levels: usize, scale: T) -> bool {
    let dim = sys.dim();
    let tol = T::lit(1e-9) * scale;
    let vals = sys.eigenvalues().to_vec();
    let mut touched = false;
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && vals[end] - vals[end - 1] <= tol {
            end += 1;
        }
        // clusters cut by the end of the computed block are left alone
        if end - start > 1 && end < vals.len() {
            touched |= align_cluster(sys, previous, levels, start, end, dim);
        }
        start = end;
    }
    touched
}

fn align_cluster<T: Real>(sys: &mut EigenSystem<T>, previous: &[T], levels: usize, start: usize, end: usize, dim: usize) -> bool {
    let size = end - start;
    let cluster: Vec<Vec<T>> = (start..end).map(|j| sys.vector(j).to_vec()).collect();
    let mut weighted: Vec<(usize, T, Vec<T>)> = (0..levels)
        .map(|t| {
            let p = &previous[t * dim..(t + 1) * dim];
            let coeffs: Vec<T> = cluster.iter().map(|v| dot(p, v)).collect();
            let w: T = coeffs.iter().map(|c| *c * *c).sum();
            (t, w, coeffs)
        })
        .filter(|(_, w, _)| *w > T::half())
        .collect();
    if weighted.is_empty() {
        return false;
    }
    weighted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut new_basis: Vec<Vec<T>> = Vec::with_capacity(size);
    let candidates = weighted
        .iter()
        .map(|(_, _, c)| c.clone())
        .chain((0..size).map(|j| (0..size).map(|i| if i == j { T::one() } else { T::zero() }).collect()));
    for coeffs in candidates {
        if new_basis.len() == size {
            break;
        }
        let mut v = vec![T::zero(); dim];
        for (c, u) in coeffs.iter().zip(&cluster) {
            for (x, y) in v.iter_mut().zip(u) {
                *x += *c * *y;
            }
        }
        for _ in 0..2 {
            for b in &new_basis {
                let c = dot(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * *y;
                }
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > T::lit(1e-6) {
            let inv = n.recip();
            v.iter_mut().for_each(|x| *x *= inv);
            new_basis.push(v);
        }
    }
    if new_basis.len() != size {
        return false;
    }
    sys.replace_vectors(start, &new_basis);
    true
}

/// Number of tracked levels that keeps every requested label inside the
/// tracked set: all bare states up to the highest requested energy plus a
/// margin of a few couplings.
pub fn levels_covering<T: Real>(fp: &FluxPoint<T>, modes: &[ModeParams<T>], required: &[StateLabel]) -> Result<usize> {
    let (basis, bare) = bare_energies(fp, modes)?;
    let mut top = T::neg_infinity();
    for label in required {
        let i = basis.index_of(label).ok_or_else(|| Error::MissingLabel(label.to_string()))?;
        top = top.max(bare[i]);
    }
    let g_max = modes.iter().fold(T::zero(), |m, p| m.max(p.coupling));
    let margin = T::lit(0.25) + T::lit(2.0) * g_max;
    let count = bare.iter().filter(|&&e| e <= top + margin).count();
    Ok(count.min(basis.dim()))
}

/// Labels |g, N, 0…⟩ and |e, N, 0…⟩ for N in 0..=n_max.
pub fn qubit_transition_labels(n_max: u32, num_modes: usize) -> Vec<StateLabel> {
    (0..=n_max)
        .flat_map(|n| {
            [QubitLevel::Ground, QubitLevel::Excited].map(|q| StateLabel::first_mode(q, n, num_modes))
        })
        .collect()
}

/// E(e, N, 0…) − E(g, N, 0…).
pub fn numeric_qubit_transition<T: Real>(ls: &LabeledSystem<T>, n: u32) -> Result<T> {
    let modes = ls.basis().num_modes();
    let e = ls.energy(&StateLabel::first_mode(QubitLevel::Excited, n, modes))?;
    let g = ls.energy(&StateLabel::first_mode(QubitLevel::Ground, n, modes))?;
    Ok(e - g)
}

/// δ_N = ω_q − ω_r + 2Nω_BS.
pub fn bs_detuning<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>) -> T {
    fp.omega_q - mode.omega_r + T::two() * T::lit(n as f64) * vacuum_bs_shift(fp, mode)
}

/// S_N = √(δ_N² + 4 g_N²) with g_N² = g² sin²θ N, using a given ω_BS.
fn splitting<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>, w_bs: T) -> T {
    let nf = T::lit(n as f64);
    let delta = fp.omega_q - mode.omega_r + T::two() * nf * w_bs;
    let gs = mode.coupling * fp.sin_theta();
    (delta * delta + T::lit(4.0) * gs * gs * nf).sqrt()
}

fn qubit_transition_with<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>, w_bs: T) -> T {
    let nf = T::lit(n as f64);
    let delta_n = fp.omega_q - mode.omega_r + T::two() * nf * w_bs;
    let sum = splitting(n + 1, fp, mode, w_bs) + splitting(n, fp, mode, w_bs);
    if delta_n > T::zero() {
        mode.omega_r + T::half() * sum
    } else {
        mode.omega_r - T::half() * sum
    }
}

/// Photon-dressed qubit transition from the Bloch-Siegert Hamiltonian.
pub fn analytic_qubit_transition<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>) -> T {
    qubit_transition_with(n, fp, mode, vacuum_bs_shift(fp, mode))
}

/// The same expression with ω_BS = 0, the Jaynes-Cummings result.
pub fn jc_qubit_transition<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>) -> T {
    qubit_transition_with(n, fp, mode, T::zero())
}

/// Qubit state that dresses a photon transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhotonBranch {
    /// |g, N⟩ → |g, N+1⟩.
    Ground,
    /// |e, N−1⟩ → |e, N⟩, defined for N ≥ 1.
    Excited,
}

/// Qubit-state-dressed photon transition from the Bloch-Siegert Hamiltonian.
pub fn analytic_photon_transition<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>, branch: PhotonBranch) -> Result<T> {
    let w_bs = vacuum_bs_shift(fp, mode);
    let diff = splitting(n + 1, fp, mode, w_bs) - splitting(n, fp, mode, w_bs);
    let upper_next = bs_detuning(n + 1, fp, mode) < T::zero();
    match branch {
        PhotonBranch::Ground => Ok(if upper_next {
            mode.omega_r + T::half() * diff
        } else {
            mode.omega_r - T::half() * diff
        }),
        PhotonBranch::Excited => {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "the excited-state photon branch starts at N = 1 (|e,0⟩ → |e,1⟩)".into(),
                ));
            }
            Ok(if upper_next {
                mode.omega_r - T::half() * diff
            } else {
                mode.omega_r + T::half() * diff
            })
        }
    }
}

/// Dispersive-limit shift requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DispersiveKind {
    Qubit,
    PhotonGround,
    PhotonExcited,
}

/// (2N+1)ω_BS, −ω_BS or +ω_BS.
pub fn dispersive_shift<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>, kind: DispersiveKind) -> T {
    let w = vacuum_bs_shift(fp, mode);
    match kind {
        DispersiveKind::Qubit => (T::two() * T::lit(n as f64) + T::one()) * w,
        DispersiveKind::PhotonGround => -w,
        DispersiveKind::PhotonExcited => w,
    }
}

/// χ_BS,N for N in 0..=n_max: the Rabi qubit transition minus the one under
/// `baseline`, both labeled with identical truncations.
pub fn bs_shifts<T: Real>(
    n_max: u32,
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    baseline: ModelVariant,
    opts: &LabelOptions,
) -> Result<Vec<T>> {
    if matches!(baseline, ModelVariant::Rabi | ModelVariant::BlochSiegert) {
        return Err(Error::InvalidParameter(format!("{} is not a Jaynes-Cummings baseline", baseline.name())));
    }
    let required = qubit_transition_labels(n_max, modes.len());
    let levels = levels_covering(fp, modes, &required)?;
    let rabi = label_eigenstates(fp, modes, ModelVariant::Rabi, levels, opts)?;
    let jc = label_eigenstates(fp, modes, baseline, levels, opts)?;
    (0..=n_max)
        .map(|n| Ok(numeric_qubit_transition(&rabi, n)? - numeric_qubit_transition(&jc, n)?))
        .collect()
}

/// Single χ_BS,N.
pub fn bs_shift<T: Real>(
    n: u32,
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    baseline: ModelVariant,
    opts: &LabelOptions,
) -> Result<T> {
    Ok(bs_shifts(n, fp, modes, baseline, opts)?[n as usize])
}
