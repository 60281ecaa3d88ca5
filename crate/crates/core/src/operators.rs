//! Hamiltonians of the flux qubit coupled to resonator modes, assembled in the
//! qubit eigenbasis of an ordered tensor-product space.
//!
//! Every operator here is real: the Hamiltonians contain only σ_x, σ_z, and
//! a + a†, so a Hermitian matrix in this basis is a real symmetric one.
//! Builders emit upper-triangle contributions and mirror them, which makes
//! `H == Hᵀ` hold element-wise without rounding.

use crate::basis::{BasisDescriptor, ModeFactor, QubitLevel};
use crate::error::{Error, Result};
use crate::fluxmap::FluxPoint;
use crate::scalar::Real;
use crate::sparse::SparseSymmetric;

/// Largest Hilbert-space dimension a builder accepts unless told otherwise.
pub const DEFAULT_DIM_CAP: usize = 10_000;

/// One resonator mode: frequency, coupling to the qubit, and truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeParams<T> {
    /// Mode number m of the mλ/2 mode (odd, positive).
    pub mode_index: u32,
    /// ω_{r,m} in GHz.
    pub omega_r: T,
    /// g_m in GHz.
    pub coupling: T,
    /// Fock truncation: levels 0..=nmax.
    pub nmax: usize,
}

impl<T: Real> ModeParams<T> {
    pub fn new(mode_index: u32, omega_r: T, coupling: T, nmax: usize) -> Result<Self> {
        let m = Self { mode_index, omega_r, coupling, nmax };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_index == 0 || self.mode_index % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "mode index must be an odd positive integer, got {}",
                self.mode_index
            )));
        }
        if !self.omega_r.is_finite() || self.omega_r <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "mode {} frequency must be > 0, got {}",
                self.mode_index, self.omega_r
            )));
        }
        if !self.coupling.is_finite() || self.coupling < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "mode {} coupling must be >= 0, got {}",
                self.mode_index, self.coupling
            )));
        }
        if self.nmax < 1 {
            return Err(Error::InvalidParameter(format!("mode {} needs nmax >= 1", self.mode_index)));
        }
        Ok(())
    }

    pub fn with_coupling(mut self, coupling: T) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_nmax(mut self, nmax: usize) -> Self {
        self.nmax = nmax;
        self
    }
}

/// Which light-matter coupling the Hamiltonian keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Full coupling g[cosθ σ_z − sinθ σ_x](a† + a).
    Rabi,
    /// Rotating terms only: −g sinθ (a†σ₋ + aσ₊).
    JcFullRwa,
    /// Rotating terms plus the longitudinal g cosθ σ_z(a† + a).
    JcKeepLongitudinal,
    /// Single-mode Bloch-Siegert Hamiltonian.
    BlochSiegert,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Rabi => "rabi",
            ModelVariant::JcFullRwa => "jc_full_rwa",
            ModelVariant::JcKeepLongitudinal => "jc_keep_longitudinal",
            ModelVariant::BlochSiegert => "bloch_siegert",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rabi" => Ok(ModelVariant::Rabi),
            "jc_full_rwa" | "jc" => Ok(ModelVariant::JcFullRwa),
            "jc_keep_longitudinal" => Ok(ModelVariant::JcKeepLongitudinal),
            "bloch_siegert" | "bs" => Ok(ModelVariant::BlochSiegert),
            other => Err(Error::InvalidParameter(format!("unknown model variant '{other}'"))),
        }
    }
}

/// Dense real symmetric matrix tied to a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator<T> {
    dim: usize,
    data: Vec<T>,
    basis: BasisDescriptor,
}

impl<T: Real> HermitianOperator<T> {
    /// Assembles from upper-triangle contributions; duplicates are summed.
    pub fn from_upper_triplets(basis: BasisDescriptor, triplets: &[(usize, usize, T)]) -> Self {
        let dim = basis.dim();
        let mut data = vec![T::zero(); dim * dim];
        for &(i, j, v) in triplets {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            data[i * dim + j] += v;
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                data[j * dim + i] = data[i * dim + j];
            }
        }
        Self { dim, data, basis }
    }

    /// Symmetrizes a dense row-major matrix by copying its upper triangle.
    pub fn from_upper_dense(basis: BasisDescriptor, mut data: Vec<T>) -> Result<Self> {
        let dim = basis.dim();
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "matrix has {} entries, basis needs {}",
                data.len(),
                dim * dim
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                data[j * dim + i] = data[i * dim + j];
            }
        }
        Ok(Self { dim, data, basis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    /// Row-major entries.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// ‖H‖_max, the largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Exact element-wise symmetry check.
    pub fn is_hermitian(&self) -> bool {
        (0..self.dim).all(|i| ((i + 1)..self.dim).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            *yi = self.data[i * self.dim..(i + 1) * self.dim].iter().zip(x).map(|(a, b)| *a * *b).sum();
        }
    }

    /// ‖[H, D]‖_max for a diagonal operator D given by its diagonal.
    pub fn commutator_max_with_diagonal(&self, diag: &[T]) -> T {
        let n = self.dim;
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let c = self.data[i * n + j] * (diag[j] - diag[i]);
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Element-wise difference `self − other` (same basis required).
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.basis != other.basis {
            return Err(Error::InvalidInput("operators act on different bases".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect();
        Ok(Self { dim: self.dim, data, basis: self.basis.clone() })
    }

    pub fn to_sparse(&self) -> SparseSymmetric<T> {
        SparseSymmetric::from_dense(self.dim, &self.data)
    }
}

/// Basis of the given modes (sorted by mode index).
pub fn basis_for<T: Real>(modes: &[ModeParams<T>]) -> Result<BasisDescriptor> {
    BasisDescriptor::new(modes.iter().map(|m| ModeFactor { mode_index: m.mode_index, nmax: m.nmax }).collect())
}

fn sorted_modes<T: Real>(modes: &[ModeParams<T>]) -> Result<Vec<ModeParams<T>>> {
    if modes.is_empty() {
        return Err(Error::InvalidParameter("at least one resonator mode is required".into()));
    }
    for m in modes {
        m.validate()?;
    }
    let mut sorted = modes.to_vec();
    sorted.sort_by_key(|m| m.mode_index);
    Ok(sorted)
}

fn check_cap(basis: &BasisDescriptor, cap: usize) -> Result<()> {
    if basis.dim() > cap {
        return Err(Error::TruncationTooLarge { dim: basis.dim(), cap });
    }
    Ok(())
}

/// ω_BS = g² sin²θ / (ω_q + ω_r).
pub fn vacuum_bs_shift<T: Real>(fp: &FluxPoint<T>, mode: &ModeParams<T>) -> T {
    let gs = mode.coupling * fp.sin_theta();
    gs * gs / (fp.omega_q + mode.omega_r)
}

/// Upper-triangle entries of the Hamiltonian. The qubit-mode coupling of
/// mode k only connects |q, n_k⟩ with |q', n_k + 1⟩, so each basis state
/// emits at most two entries per mode.
fn hamiltonian_triplets<T: Real>(
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    variant: ModelVariant,
    basis: &BasisDescriptor,
) -> Vec<(usize, usize, T)> {
    let half = T::half();
    let sin = fp.sin_theta();
    let cos = fp.cos_theta();
    let bs_shift = match variant {
        ModelVariant::BlochSiegert => vacuum_bs_shift(fp, &modes[0]),
        _ => T::zero(),
    };
    let boson_dim = basis.boson_dim();
    let mut photons = vec![0usize; modes.len()];
    let mut out = Vec::with_capacity(basis.dim() * (1 + 2 * modes.len()));
    for i in 0..basis.dim() {
        let q = basis.decode_into(i, &mut photons);
        let sz = T::lit(q.sigma_z() as f64);
        let mut diag = half * fp.omega_q * sz;
        for (m, &n) in modes.iter().zip(&photons) {
            diag += m.omega_r * (T::from_usize_lossy(n) + half);
        }
        if variant == ModelVariant::BlochSiegert {
            let n = T::from_usize_lossy(photons[0]);
            diag += bs_shift * (sz * (n + half) - half);
        }
        out.push((i, i, diag));

        for (k, m) in modes.iter().enumerate() {
            let n = photons[k];
            if n >= m.nmax || m.coupling == T::zero() {
                continue;
            }
            let amp = T::from_usize_lossy(n + 1).sqrt();
            let raised = i + basis.stride(k);
            let flipped_raised = match q {
                QubitLevel::Ground => raised + boson_dim,
                QubitLevel::Excited => raised - boson_dim,
            };
            let longitudinal = m.coupling * cos * sz * amp;
            let transverse = -m.coupling * sin * amp;
            match variant {
                ModelVariant::Rabi => {
                    out.push((i, raised, longitudinal));
                    push_upper(&mut out, i, flipped_raised, transverse);
                }
                ModelVariant::JcFullRwa | ModelVariant::BlochSiegert => {
                    // a†σ₋ : |e, n⟩ → |g, n + 1⟩
                    if q == QubitLevel::Excited {
                        push_upper(&mut out, i, flipped_raised, transverse);
                    }
                }
                ModelVariant::JcKeepLongitudinal => {
                    out.push((i, raised, longitudinal));
                    if q == QubitLevel::Excited {
                        push_upper(&mut out, i, flipped_raised, transverse);
                    }
                }
            }
        }
    }
    out
}

fn push_upper<T>(out: &mut Vec<(usize, usize, T)>, i: usize, j: usize, v: T) {
    if i <= j {
        out.push((i, j, v));
    } else {
        out.push((j, i, v));
    }
}

fn prepare<T: Real>(
    modes: &[ModeParams<T>],
    variant: ModelVariant,
    cap: usize,
) -> Result<(Vec<ModeParams<T>>, BasisDescriptor)> {
    let modes = sorted_modes(modes)?;
    if variant == ModelVariant::BlochSiegert && modes.len() != 1 {
        return Err(Error::InvalidParameter(
            "the Bloch-Siegert Hamiltonian is defined for a single mode".into(),
        ));
    }
    let basis = basis_for(&modes)?;
    check_cap(&basis, cap)?;
    Ok((modes, basis))
}

/// Multi-mode Hamiltonian in GHz for the requested coupling variant.
pub fn build_multimode_hamiltonian<T: Real>(
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    variant: ModelVariant,
) -> Result<HermitianOperator<T>> {
    build_multimode_hamiltonian_capped(fp, modes, variant, DEFAULT_DIM_CAP)
}

pub fn build_multimode_hamiltonian_capped<T: Real>(
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    variant: ModelVariant,
    cap: usize,
) -> Result<HermitianOperator<T>> {
    let (modes, basis) = prepare(modes, variant, cap)?;
    let triplets = hamiltonian_triplets(fp, &modes, variant, &basis);
    Ok(HermitianOperator::from_upper_triplets(basis, &triplets))
}

/// Same Hamiltonian in compressed-row form, without the dense intermediate.
pub fn build_sparse_hamiltonian<T: Real>(
    fp: &FluxPoint<T>,
    modes: &[ModeParams<T>],
    variant: ModelVariant,
    cap: usize,
) -> Result<(BasisDescriptor, SparseSymmetric<T>)> {
    let (modes, basis) = prepare(modes, variant, cap)?;
    let triplets = hamiltonian_triplets(fp, &modes, variant, &basis);
    let sparse = SparseSymmetric::from_upper_triplets(basis.dim(), &triplets);
    Ok((basis, sparse))
}

/// Single-mode Bloch-Siegert Hamiltonian
/// ½ω_qσ_z + ω_r(n + ½) + ω_BS[σ_z(n + ½) − ½] − g sinθ (a†σ₋ + aσ₊).
pub fn build_bs_hamiltonian<T: Real>(fp: &FluxPoint<T>, mode: &ModeParams<T>) -> Result<HermitianOperator<T>> {
    build_multimode_hamiltonian(fp, std::slice::from_ref(mode), ModelVariant::BlochSiegert)
}

/// Bare (uncoupled) energies of every basis state, in basis order.
pub fn bare_energies<T: Real>(fp: &FluxPoint<T>, modes: &[ModeParams<T>]) -> Result<(BasisDescriptor, Vec<T>)> {
    let modes = sorted_modes(modes)?;
    let basis = basis_for(&modes)?;
    let mut photons = vec![0usize; modes.len()];
    let energies = (0..basis.dim())
        .map(|i| {
            let q = basis.decode_into(i, &mut photons);
            let mut e = T::half() * fp.omega_q * T::lit(q.sigma_z() as f64);
            for (m, &n) in modes.iter().zip(&photons) {
                e += m.omega_r * (T::from_usize_lossy(n) + T::half());
            }
            e
        })
        .collect();
    Ok((basis, energies))
}

/// The 2×2 block of H_BS in the basis {|g, N+1⟩, |e, N⟩}.
///
/// The off-diagonal is g_{N+1} = −g sinθ √(N+1); its sign is kept although
/// only its square enters any frequency.
pub fn bs_block<T: Real>(n: u32, fp: &FluxPoint<T>, mode: &ModeParams<T>) -> [[T; 2]; 2] {
    let nf = T::lit(n as f64);
    let half = T::half();
    let w_bs = vacuum_bs_shift(fp, mode);
    let g_next = -mode.coupling * fp.sin_theta() * (nf + T::one()).sqrt();
    let lower = -half * fp.omega_q + (nf + T::lit(1.5)) * mode.omega_r - (nf + T::two()) * w_bs;
    let upper = half * fp.omega_q + (nf + half) * mode.omega_r + nf * w_bs;
    [[lower, g_next], [g_next, upper]]
}

/// Z2 parity Π = −σ_z ⊗ exp(iπ Σ n_m), as its diagonal.
///
/// The sign is chosen so that |g, 0, …⟩ has parity +1: on the qubit factor
/// alone Π = diag(+1, −1) in the (|g⟩, |e⟩) order.
pub fn parity_diagonal<T: Real>(basis: &BasisDescriptor) -> Vec<T> {
    let mut photons = vec![0usize; basis.num_modes()];
    (0..basis.dim())
        .map(|i| {
            let q = basis.decode_into(i, &mut photons);
            let total: usize = photons.iter().sum();
            let sign = -q.sigma_z() * if total % 2 == 0 { 1 } else { -1 };
            T::lit(sign as f64)
        })
        .collect()
}

pub fn parity_operator<T: Real>(basis: &BasisDescriptor) -> HermitianOperator<T> {
    let d = parity_diagonal::<T>(basis);
    let triplets: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
    HermitianOperator::from_upper_triplets(basis.clone(), &triplets)
}

/// Diagonal of N_exc = σ₊σ₋ + Σ n_m.
pub fn excitation_number_diagonal<T: Real>(basis: &BasisDescriptor) -> Vec<T> {
    let mut photons = vec![0usize; basis.num_modes()];
    (0..basis.dim())
        .map(|i| {
            let q = basis.decode_into(i, &mut photons);
            T::from_usize_lossy(q.index() + photons.iter().sum::<usize>())
        })
        .collect()
}

/// Matrix of (a_k + a_k†) for the mode at basis position `k`, as upper triplets.
pub fn quadrature_triplets<T: Real>(basis: &BasisDescriptor, k: usize) -> Vec<(usize, usize, T)> {
    let mut photons = vec![0usize; basis.num_modes()];
    let nmax = basis.modes()[k].nmax;
    let mut out = Vec::new();
    for i in 0..basis.dim() {
        basis.decode_into(i, &mut photons);
        if photons[k] < nmax {
            out.push((i, i + basis.stride(k), T::from_usize_lossy(photons[k] + 1).sqrt()));
        }
    }
    out
}
