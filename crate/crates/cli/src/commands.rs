//! Subcommand bodies. Each returns the bytes of its output document so the
//! caller decides where they go.

use rayon::prelude::*;
use serde_json::json;

use qrabi::dressed::bs_shifts;
use qrabi::eigen::converge_truncation;
use qrabi::fitsuite::{fit_bose_einstein, fit_model_params, read_depths_csv, read_peaks_csv, ModelFitSpec};
use qrabi::numfmt::{round12, sig12};
use qrabi::operators::build_multimode_hamiltonian;
use qrabi::spectra::{
    frequency_axis, ground_branch_labels, synth_two_tone, sweep_transitions, write_image_csv, write_sweep_csv,
    FluxGrid, SweepResult, SweepSpec,
};
use qrabi::{flux_to_qubit, Error};

use crate::config::RunConfig;
use crate::CliError;

pub fn flux_grid(cfg: &RunConfig) -> Result<FluxGrid, CliError> {
    FluxGrid::from_range(cfg.flux_start, cfg.flux_stop, cfg.flux_step).map_err(CliError::from)
}

fn report_gaps(sweep: &SweepResult) -> Result<(), CliError> {
    let mut gaps = 0;
    for p in sweep.gaps() {
        gaps += 1;
        if let Some(e) = &p.error {
            eprintln!("warning: flux {} mPhi0 skipped: {e}", sig12(p.flux));
        }
    }
    if gaps > 0 && gaps == sweep.points.len() {
        return Err(CliError::Numerical("labeling failed at every flux point".into()));
    }
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig, from: Vec<qrabi::StateLabel>) -> Result<SweepResult, CliError> {
    let spec = SweepSpec { from_labels: from, max_freq: cfg.transitions_max_freq, levels: None, label: cfg.label_options() };
    let sweep = sweep_transitions(&flux_grid(cfg)?, &cfg.qubit, &cfg.mode_params(), cfg.variant, &spec)?;
    report_gaps(&sweep)?;
    Ok(sweep)
}

/// Labeled transition table, one row per (flux, from, to).
pub fn cmd_transitions(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let from = cfg.from_labels().map_err(CliError::Input)?;
    let sweep = run_sweep(cfg, from)?;
    let mut out = Vec::new();
    write_sweep_csv(&sweep, &mut out)?;
    Ok(out)
}

/// χ_BS,N against flux for N = 0..=bs.n_max.
pub fn cmd_bs_shift(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let grid = flux_grid(cfg)?;
    let modes = cfg.mode_params();
    let opts = cfg.label_options();
    let rows: Vec<Result<(f64, Vec<f64>), Error>> = grid
        .points()
        .par_iter()
        .map(|&x| {
            let fp = flux_to_qubit(x, &cfg.qubit)?;
            Ok((x, bs_shifts(cfg.bs_n_max, &fp, &modes, cfg.jc_variant, &opts)?))
        })
        .collect();
    let mut s = String::from("flux_mPhi0,N,chi_GHz\n");
    for r in rows {
        let (x, chi) = r?;
        for (n, c) in chi.iter().enumerate() {
            s.push_str(&format!("{},{n},{}\n", sig12(x), sig12(*c)));
        }
    }
    Ok(s.into_bytes())
}

/// Normalized two-tone image from the ground branch |g, N⟩, N ≤ spectrum.n_max.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let freq = frequency_axis(cfg.spectrum_freq_start, cfg.spectrum_freq_stop, cfg.spectrum_freq_step)?;
    let sweep = run_sweep(cfg, ground_branch_labels(cfg.spectrum_n_max, cfg.modes.len()))?;
    let img = synth_two_tone(&sweep, (cfg.dist_kind, cfg.dist_mean), &cfg.linewidths(), &cfg.drive_weights(), &freq)?;
    let mut out = Vec::new();
    write_image_csv(&img, &mut out)?;
    Ok(out)
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn open(path: &str) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::Input(format!("{path}: {e}")))
}

fn with_path(path: &str, e: Error) -> CliError {
    match e {
        Error::Parse { line, msg } => CliError::Input(format!("{path}: line {line}: {msg}")),
        other => other.into(),
    }
}

/// Fits the free parameters to a peak list; config values are the initial guess.
pub fn cmd_fit(cfg: &RunConfig, peaks_path: &str) -> Result<Vec<u8>, CliError> {
    let peaks = read_peaks_csv(open(peaks_path)?).map_err(|e| with_path(peaks_path, e))?;
    let mut spec = ModelFitSpec {
        qubit: cfg.qubit,
        modes: cfg.mode_params(),
        variant: cfg.variant,
        free: cfg.fit_free.clone(),
        curves: cfg.fit_curves,
        options: Default::default(),
    };
    spec.options.max_iterations = cfg.fit_max_iterations;
    let fit = fit_model_params(&peaks, &spec)?;
    Ok(json_bytes(&fit.to_json()))
}

pub fn cmd_fit_thermal(depths_path: &str) -> Result<Vec<u8>, CliError> {
    let depths = read_depths_csv(open(depths_path)?).map_err(|e| with_path(depths_path, e))?;
    Ok(json_bytes(&fit_bose_einstein(&depths)?.to_json()))
}

/// Smallest truncation per mode, the other modes held at their configured
/// cutoffs, for which the lowest `converge.levels` eigenvalues move by less
/// than `converge.tol_ghz` when that mode's cutoff grows by half.
pub fn cmd_converge(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let fp = flux_to_qubit(cfg.converge_flux, &cfg.qubit)?;
    let modes = cfg.mode_params();
    let mut chosen = serde_json::Map::new();
    for k in 0..modes.len() {
        let builder = |n: usize| {
            let mut m = modes.clone();
            m[k].nmax = n;
            build_multimode_hamiltonian(&fp, &m, cfg.variant)
        };
        let n = converge_truncation(builder, cfg.converge_start, cfg.converge_levels, cfg.converge_tol)?;
        chosen.insert(modes[k].mode_index.to_string(), json!(n));
    }
    Ok(json_bytes(&json!({
        "flux_mPhi0": round12(cfg.converge_flux),
        "levels": cfg.converge_levels,
        "tol_GHz": round12(cfg.converge_tol),
        "variant": cfg.variant.name(),
        "nmax": chosen,
    })))
}
