//! Flux sweeps of labeled transitions, photon-number distributions and
//! synthetic two-tone spectra.

use std::io::Write;

use rayon::prelude::*;
use statrs::function::factorial::ln_factorial;

use crate::basis::{QubitLevel, StateLabel};
use crate::dressed::{label_eigenstates, LabelOptions, TransitionRecord};
use crate::error::{Error, Result};
use crate::fluxmap::{flux_to_qubit, QubitParams};
use crate::numfmt::sig12;
use crate::operators::{bare_energies, ModeParams, ModelVariant};

/// Strictly increasing flux grid in mΦ0.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxGrid {
    points: Vec<f64>,
}

impl FluxGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("flux grid is empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("flux grid has non-finite points".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("flux grid must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `start, start + step, …` up to `stop` inclusive (with a small slack).
    pub fn from_range(start: f64, stop: f64, step: f64) -> Result<Self> {
        Ok(Self { points: linear_axis("flux", start, stop, step)? })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn linear_axis(what: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} range must be finite")));
    }
    if step <= 0.0 {
        return Err(Error::InvalidParameter(format!("{what} step must be > 0")));
    }
    if stop < start {
        return Err(Error::InvalidParameter(format!("{what} range is empty: stop {stop} < start {start}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

/// Which transitions a sweep records.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// Initial states; transitions start only from these labels.
    pub from_labels: Vec<StateLabel>,
    /// Upper frequency limit in GHz.
    pub max_freq: f64,
    /// Tracked levels; `None` covers every bare state up to `max_freq`
    /// above the highest initial state.
    pub levels: Option<usize>,
    pub label: LabelOptions,
}

/// Transitions at one flux point, or the labeling failure that left a gap.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub flux: f64,
    pub transitions: Vec<TransitionRecord<f64>>,
    pub error: Option<Error>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub variant: ModelVariant,
    /// Modes in basis order.
    pub modes: Vec<ModeParams<f64>>,
}

impl SweepResult {
    pub fn flux(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.flux).collect()
    }

    /// Points whose labeling failed.
    pub fn gaps(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_some())
    }
}

fn auto_levels(qubit: &QubitParams<f64>, grid: &FluxGrid, modes: &[ModeParams<f64>], spec: &SweepSpec) -> Result<usize> {
    let mut levels = 0;
    for &x in grid.points() {
        let fp = flux_to_qubit(x, qubit)?;
        let (basis, bare) = bare_energies(&fp, modes)?;
        let mut top = f64::NEG_INFINITY;
        for label in &spec.from_labels {
            let i = basis.index_of(label).ok_or_else(|| Error::MissingLabel(label.to_string()))?;
            top = top.max(bare[i]);
        }
        let g_max = modes.iter().fold(0.0f64, |m, p| m.max(p.coupling));
        let ceiling = top + spec.max_freq + 0.25 + 2.0 * g_max;
        levels = levels.max(bare.iter().filter(|&&e| e <= ceiling).count());
    }
    Ok(levels)
}

/// Labeled transitions from the selected initial states at every flux point.
///
/// Points are processed in parallel on the current rayon pool. A labeling
/// failure is recorded on its point and the sweep carries on.
pub fn sweep_transitions(
    grid: &FluxGrid,
    qubit: &QubitParams<f64>,
    modes: &[ModeParams<f64>],
    variant: ModelVariant,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    qubit.validate()?;
    if spec.from_labels.is_empty() {
        return Err(Error::InvalidParameter("no initial states selected".into()));
    }
    let mut sorted = modes.to_vec();
    sorted.sort_by_key(|m| m.mode_index);
    for label in &spec.from_labels {
        if label.photons.len() != sorted.len() {
            return Err(Error::InvalidParameter(format!(
                "label {label} has {} photon numbers for {} modes",
                label.photons.len(),
                sorted.len()
            )));
        }
    }
    let levels = match spec.levels {
        Some(l) => l,
        None => auto_levels(qubit, grid, &sorted, spec)?,
    };
    let points = grid
        .points()
        .par_iter()
        .map(|&x| match sweep_point(x, qubit, &sorted, variant, levels, spec) {
            Ok(transitions) => SweepPoint { flux: x, transitions, error: None },
            Err(e) => SweepPoint { flux: x, transitions: Vec::new(), error: Some(e) },
        })
        .collect();
    Ok(SweepResult { points, variant, modes: sorted })
}

fn sweep_point(
    x: f64,
    qubit: &QubitParams<f64>,
    modes: &[ModeParams<f64>],
    variant: ModelVariant,
    levels: usize,
    spec: &SweepSpec,
) -> Result<Vec<TransitionRecord<f64>>> {
    let fp = flux_to_qubit(x, qubit)?;
    let ls = label_eigenstates(&fp, modes, variant, levels, &spec.label)?;
    let mut out = Vec::new();
    for from in &spec.from_labels {
        let e_from = ls.energy(from)?;
        let mut targets: Vec<&StateLabel> = ls.labels().iter().filter(|l| *l != from).collect();
        targets.sort();
        for to in targets {
            let f = ls.energy(to)? - e_from;
            if f > 0.0 && f <= spec.max_freq {
                out.push(ls.transition(from, to, variant)?);
            }
        }
    }
    out.sort_by(|a, b| {
        a.from.cmp(&b.from).then(a.frequency.partial_cmp(&b.frequency).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

/// Photon-number statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistributionKind {
    /// Bose-Einstein.
    Thermal,
    /// Poisson.
    Coherent,
}

impl DistributionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Thermal => "thermal",
            DistributionKind::Coherent => "coherent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thermal" | "bose-einstein" => Ok(DistributionKind::Thermal),
            "coherent" | "poisson" => Ok(DistributionKind::Coherent),
            other => Err(Error::InvalidParameter(format!("unknown distribution '{other}'"))),
        }
    }
}

/// P(n) for mean occupation `mean`.
pub fn photon_distribution(kind: DistributionKind, mean: f64, n: u32) -> Result<f64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("mean photon number must be >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    Ok(match kind {
        DistributionKind::Thermal => (mean / (mean + 1.0)).powi(n as i32) / (mean + 1.0),
        DistributionKind::Coherent => (-mean + n as f64 * mean.ln() - ln_factorial(n as u64)).exp(),
    })
}

/// Linewidths (full width at half maximum) in GHz.
#[derive(Clone, Debug, PartialEq)]
pub struct LinewidthConfig {
    pub qubit: f64,
    /// (mode index, Γ_r) pairs.
    pub modes: Vec<(u32, f64)>,
}

/// Default qubit linewidth, 25 MHz.
pub const DEFAULT_QUBIT_LINEWIDTH: f64 = 0.025;
/// Default resonator linewidth, 0.8 MHz.
pub const DEFAULT_MODE_LINEWIDTH: f64 = 0.0008;

impl LinewidthConfig {
    pub fn new(qubit: f64, modes: Vec<(u32, f64)>) -> Result<Self> {
        let lw = Self { qubit, modes };
        lw.validate()?;
        Ok(lw)
    }

    pub fn for_modes(modes: &[ModeParams<f64>]) -> Self {
        Self {
            qubit: DEFAULT_QUBIT_LINEWIDTH,
            modes: modes.iter().map(|m| (m.mode_index, DEFAULT_MODE_LINEWIDTH)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.qubit > 0.0 && self.qubit.is_finite()) {
            return Err(Error::InvalidParameter(format!("qubit linewidth must be > 0, got {}", self.qubit)));
        }
        for &(m, g) in &self.modes {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("mode {m} linewidth must be > 0, got {g}")));
            }
        }
        Ok(())
    }

    pub fn mode(&self, mode_index: u32) -> f64 {
        self.modes.iter().find(|(m, _)| *m == mode_index).map(|p| p.1).unwrap_or(DEFAULT_MODE_LINEWIDTH)
    }
}

/// Unit-peak Lorentzian of full width `gamma` at half maximum.
pub fn lorentzian(detuning: f64, gamma: f64) -> f64 {
    let x = 2.0 * detuning / gamma;
    1.0 / (1.0 + x * x)
}

/// Amplitude over (flux, drive frequency), row-major over flux then frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumImage {
    flux: Vec<f64>,
    freq: Vec<f64>,
    amplitude: Vec<f64>,
}

impl SpectrumImage {
    pub fn new(flux: Vec<f64>, freq: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("flux", &flux), ("frequency", &freq)] {
            if axis.is_empty() {
                return Err(Error::InvalidInput(format!("{name} axis is empty")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidInput(format!("{name} axis must be strictly increasing")));
            }
        }
        if amplitude.len() != flux.len() * freq.len() {
            return Err(Error::InvalidInput(format!(
                "amplitude has {} entries for a {}×{} image",
                amplitude.len(),
                flux.len(),
                freq.len()
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput("amplitudes must be finite and >= 0".into()));
        }
        Ok(Self { flux, freq, amplitude })
    }

    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    /// Amplitudes of one flux column.
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.freq.len();
        &self.amplitude[i * n..(i + 1) * n]
    }
}

/// Drive-frequency axis for [`synth_two_tone`].
pub fn frequency_axis(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    linear_axis("frequency", start, stop, step)
}

/// Photon number of the initial state that sets its population: the
/// occupation of the lowest mode.
pub fn initial_photons(label: &StateLabel) -> u32 {
    label.photons.first().copied().unwrap_or(0)
}

fn line_width(t: &TransitionRecord<f64>, modes: &[ModeParams<f64>], lw: &LinewidthConfig) -> f64 {
    if t.from.qubit != t.to.qubit {
        return lw.qubit;
    }
    // photon-like: the mode whose occupation changes the most
    let k = t
        .from
        .photons
        .iter()
        .zip(&t.to.photons)
        .enumerate()
        .max_by_key(|(_, (a, b))| a.abs_diff(**b))
        .map(|(k, _)| k)
        .unwrap_or(0);
    lw.mode(modes[k].mode_index)
}

/// Renders a two-tone spectrum from a labeled sweep.
///
/// Each transition contributes P(n₀)·|Σ_m λ_m M_m|²·L(ω_d − ω_t; Γ), where n₀
/// is the initial state's photon number in the lowest mode and
/// M_m = ⟨f|(a_m + a_m†)|i⟩. Γ is the qubit linewidth for transitions that
/// flip the qubit and the relevant mode's linewidth otherwise. The result is
/// scaled to a maximum of 1 (an all-zero image stays zero).
pub fn synth_two_tone(
    sweep: &SweepResult,
    dist: (DistributionKind, f64),
    lw: &LinewidthConfig,
    drive: &[f64],
    freq: &[f64],
) -> Result<SpectrumImage> {
    lw.validate()?;
    if drive.len() != sweep.modes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} drive weights for {} modes",
            drive.len(),
            sweep.modes.len()
        )));
    }
    photon_distribution(dist.0, dist.1, 0)?;
    let nf = freq.len();
    let columns: Vec<Result<Vec<f64>>> = sweep
        .points
        .par_iter()
        .map(|p| {
            let mut col = vec![0.0; nf];
            for t in &p.transitions {
                let pop = photon_distribution(dist.0, dist.1, initial_photons(&t.from))?;
                let m: f64 = t.matrix_elements.iter().zip(drive).map(|(a, b)| a * b).sum();
                let strength = pop * m * m;
                if strength == 0.0 {
                    continue;
                }
                let gamma = line_width(t, &sweep.modes, lw);
                for (c, &w) in col.iter_mut().zip(freq) {
                    *c += strength * lorentzian(w - t.frequency, gamma);
                }
            }
            Ok(col)
        })
        .collect();
    let mut amplitude = Vec::with_capacity(nf * sweep.points.len());
    for c in columns {
        amplitude.extend(c?);
    }
    let max = amplitude.iter().fold(0.0f64, |m, v| m.max(*v));
    if max > 0.0 {
        amplitude.iter_mut().for_each(|a| *a /= max);
    }
    SpectrumImage::new(sweep.flux(), freq.to_vec(), amplitude)
}

/// Peak amplitude of each labeled line at one flux column, before
/// normalization: P(n₀)·|Σλ M|². Keyed by (from, to).
pub fn line_strengths(
    point: &SweepPoint,
    dist: (DistributionKind, f64),
    drive: &[f64],
) -> Result<Vec<(StateLabel, StateLabel, f64)>> {
    point
        .transitions
        .iter()
        .map(|t| {
            let pop = photon_distribution(dist.0, dist.1, initial_photons(&t.from))?;
            let m: f64 = t.matrix_elements.iter().zip(drive).map(|(a, b)| a * b).sum();
            Ok((t.from.clone(), t.to.clone(), pop * m * m))
        })
        .collect()
}

/// Initial labels |g, N, 0…⟩ for N in 0..=n_max.
pub fn ground_branch_labels(n_max: u32, num_modes: usize) -> Vec<StateLabel> {
    (0..=n_max).map(|n| StateLabel::first_mode(QubitLevel::Ground, n, num_modes)).collect()
}

pub fn write_sweep_csv<W: Write>(sweep: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flux_mPhi0", "from_label", "to_label", "freq_GHz", "weight", "model"]).map_err(csv_err)?;
    for p in &sweep.points {
        for t in &p.transitions {
            w.write_record([
                sig12(p.flux),
                t.from.to_string(),
                t.to.to_string(),
                sig12(t.frequency),
                sig12(t.weight),
                t.model.name().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_image_csv<W: Write>(img: &SpectrumImage, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flux_mPhi0", "freq_GHz", "amplitude"]).map_err(csv_err)?;
    for (i, &x) in img.flux().iter().enumerate() {
        for (&f, &a) in img.freq().iter().zip(img.column(i)) {
            w.write_record([sig12(x), sig12(f), sig12(a)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn distribution_examples() {
        assert_eq!(photon_distribution(DistributionKind::Thermal, 3.0, 0).unwrap(), 0.25);
        let p = photon_distribution(DistributionKind::Coherent, 3.0, 3).unwrap();
        assert_relative_eq!(p, (-3.0f64).exp() * 27.0 / 6.0, max_relative = 1e-13);
        for kind in [DistributionKind::Thermal, DistributionKind::Coherent] {
            let total: f64 = (0..=200).map(|n| photon_distribution(kind, 3.0, n).unwrap()).sum();
            assert!(total >= 1.0 - 1e-12);
            assert_eq!(photon_distribution(kind, 0.0, 0).unwrap(), 1.0);
            assert_eq!(photon_distribution(kind, 0.0, 2).unwrap(), 0.0);
            assert!(photon_distribution(kind, -1.0, 0).is_err());
        }
    }

    #[test]
    fn lorentzian_half_width() {
        assert_eq!(lorentzian(0.0, 0.02), 1.0);
        assert_relative_eq!(lorentzian(0.01, 0.02), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(FluxGrid::new(vec![]).is_err());
        assert!(FluxGrid::new(vec![0.0, 0.0]).is_err());
        assert_eq!(FluxGrid::from_range(-1.0, 1.0, 0.5).unwrap().len(), 5);
        assert!(FluxGrid::from_range(1.0, -1.0, 0.5).is_err());
        assert!(FluxGrid::from_range(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn decoupled_sweep_is_bare_lines() {
        let q = QubitParams::new(360.0, 3.198).unwrap();
        let modes = [ModeParams::new(1, 2.36, 0.0, 6).unwrap()];
        let grid = FluxGrid::from_range(-1.0, 1.0, 0.5).unwrap();
        let spec = SweepSpec {
            from_labels: ground_branch_labels(0, 1),
            max_freq: 6.0,
            levels: None,
            label: LabelOptions::default(),
        };
        let sweep = sweep_transitions(&grid, &q, &modes, ModelVariant::Rabi, &spec).unwrap();
        for p in &sweep.points {
            let wq = flux_to_qubit(p.flux, &q).unwrap().omega_q;
            for t in &p.transitions {
                let n = t.to.photons[0] as f64;
                let expected = if t.to.qubit == QubitLevel::Excited { wq + n * 2.36 } else { n * 2.36 };
                assert!((t.frequency - expected).abs() < 1e-12);
            }
            assert!(p.transitions.iter().any(|t| t.to.to_string() == "e:0"));
        }
    }

    #[test]
    fn single_line_image() {
        let label0: StateLabel = "g:0".parse().unwrap();
        let label1: StateLabel = "e:0".parse().unwrap();
        let t = TransitionRecord {
            from: label0,
            to: label1,
            frequency: 3.0,
            weight: 1.0,
            model: crate::dressed::ModelTag::Numeric(ModelVariant::Rabi),
            matrix_elements: vec![1.0],
        };
        let sweep = SweepResult {
            points: vec![SweepPoint { flux: 0.0, transitions: vec![t], error: None }],
            variant: ModelVariant::Rabi,
            modes: vec![ModeParams::new(1, 2.36, 0.1, 3).unwrap()],
        };
        let freq = frequency_axis(2.9, 3.1, 0.0125).unwrap();
        let lw = LinewidthConfig::new(0.05, vec![(1, 0.001)]).unwrap();
        let img = synth_two_tone(&sweep, (DistributionKind::Thermal, 0.0), &lw, &[1.0], &freq).unwrap();
        let col = img.column(0);
        let peak = col.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, 1.0);
        let at = |f: f64| col[freq.iter().position(|x| (x - f).abs() < 1e-9).unwrap()];
        assert_relative_eq!(at(3.025), 0.5, epsilon = 1e-9);
        assert_relative_eq!(at(2.975), 0.5, epsilon = 1e-9);
    }
}
