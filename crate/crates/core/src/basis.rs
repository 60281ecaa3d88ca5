//! Ordered tensor-product basis: qubit first (|g⟩, |e⟩), then resonator modes
//! in ascending mode index, each truncated to Fock levels 0..=nmax.
//!
//! The last mode varies fastest, so a basis index is
//! `q · Π(d_m) + Σ n_m · stride_m`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QubitLevel {
    Ground,
    Excited,
}

impl QubitLevel {
    pub fn index(self) -> usize {
        match self {
            QubitLevel::Ground => 0,
            QubitLevel::Excited => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            QubitLevel::Ground
        } else {
            QubitLevel::Excited
        }
    }

    /// Eigenvalue of σ_z: −1 on |g⟩, +1 on |e⟩.
    pub fn sigma_z(self) -> i32 {
        match self {
            QubitLevel::Ground => -1,
            QubitLevel::Excited => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            QubitLevel::Ground => QubitLevel::Excited,
            QubitLevel::Excited => QubitLevel::Ground,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            QubitLevel::Ground => 'g',
            QubitLevel::Excited => 'e',
        }
    }
}

/// A bosonic factor of the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeFactor {
    pub mode_index: u32,
    pub nmax: usize,
}

impl ModeFactor {
    pub fn levels(&self) -> usize {
        self.nmax + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisDescriptor {
    modes: Vec<ModeFactor>,
    strides: Vec<usize>,
    dim: usize,
}

impl BasisDescriptor {
    /// Builds a basis; modes must have distinct indices and are sorted ascending.
    pub fn new(mut modes: Vec<ModeFactor>) -> Result<Self> {
        modes.sort_by_key(|m| m.mode_index);
        if modes.windows(2).any(|w| w[0].mode_index == w[1].mode_index) {
            return Err(Error::InvalidParameter("duplicate mode index".into()));
        }
        if let Some(m) = modes.iter().find(|m| m.nmax == 0) {
            return Err(Error::InvalidParameter(format!(
                "mode {} has nmax = 0; at least one excitation is required",
                m.mode_index
            )));
        }
        let mut strides = vec![0; modes.len()];
        let mut stride = 1usize;
        for (k, m) in modes.iter().enumerate().rev() {
            strides[k] = stride;
            stride = stride
                .checked_mul(m.levels())
                .ok_or(Error::TruncationTooLarge { dim: usize::MAX, cap: usize::MAX })?;
        }
        let dim = stride
            .checked_mul(2)
            .ok_or(Error::TruncationTooLarge { dim: usize::MAX, cap: usize::MAX })?;
        Ok(Self { modes, strides, dim })
    }

    /// Qubit-only basis.
    pub fn qubit_only() -> Self {
        Self { modes: Vec::new(), strides: Vec::new(), dim: 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[ModeFactor] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Stride of the given mode factor (position in `modes()`).
    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    /// Dimension of the bosonic part.
    pub fn boson_dim(&self) -> usize {
        self.dim / 2
    }

    pub fn index(&self, qubit: QubitLevel, photons: &[usize]) -> Option<usize> {
        if photons.len() != self.modes.len() {
            return None;
        }
        let mut idx = qubit.index() * self.boson_dim();
        for ((n, m), s) in photons.iter().zip(&self.modes).zip(&self.strides) {
            if *n > m.nmax {
                return None;
            }
            idx += n * s;
        }
        Some(idx)
    }

    pub fn decode(&self, index: usize) -> (QubitLevel, Vec<usize>) {
        let mut photons = vec![0; self.modes.len()];
        self.decode_into(index, &mut photons);
        (QubitLevel::from_index(index / self.boson_dim()), photons)
    }

    /// Decodes without allocating; returns the qubit level.
    pub fn decode_into(&self, index: usize, photons: &mut [usize]) -> QubitLevel {
        let mut rest = index % self.boson_dim();
        for (k, m) in self.modes.iter().enumerate() {
            photons[k] = rest / self.strides[k];
            rest %= self.strides[k];
            debug_assert!(photons[k] <= m.nmax);
        }
        QubitLevel::from_index(index / self.boson_dim())
    }

    pub fn label_of(&self, index: usize) -> StateLabel {
        let (qubit, photons) = self.decode(index);
        StateLabel { qubit, photons: photons.into_iter().map(|n| n as u32).collect() }
    }

    pub fn index_of(&self, label: &StateLabel) -> Option<usize> {
        let photons: Vec<usize> = label.photons.iter().map(|&n| n as usize).collect();
        self.index(label.qubit, &photons)
    }
}

/// Bare-state label (qubit level, photon number per mode in basis order).
///
/// Text form is `g:0:1:0`: the qubit symbol followed by photon numbers.
/// Ordering is lexicographic on (qubit level, photon tuple).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateLabel {
    pub qubit: QubitLevel,
    pub photons: Vec<u32>,
}

impl StateLabel {
    pub fn new(qubit: QubitLevel, photons: Vec<u32>) -> Self {
        Self { qubit, photons }
    }

    /// `N` photons in the first mode and vacuum elsewhere.
    pub fn first_mode(qubit: QubitLevel, n: u32, num_modes: usize) -> Self {
        let mut photons = vec![0; num_modes];
        if num_modes > 0 {
            photons[0] = n;
        }
        Self { qubit, photons }
    }

    pub fn total_photons(&self) -> u32 {
        self.photons.iter().sum()
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.qubit.symbol())?;
        for n in &self.photons {
            write!(f, ":{n}")?;
        }
        Ok(())
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let qubit = match parts.next() {
            Some("g") => QubitLevel::Ground,
            Some("e") => QubitLevel::Excited,
            _ => return Err(Error::InvalidInput(format!("bad state label '{s}'"))),
        };
        let photons = parts
            .map(|p| p.parse::<u32>().map_err(|_| Error::InvalidInput(format!("bad state label '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { qubit, photons })
    }
}
