//! Invariant suite behind the `validate` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrabi::dressed::{analytic_qubit_transition, bs_detuning, bs_shifts, label_eigenstates, LabelOptions};
use qrabi::eigen::{eigh, lowest_eigenvalues};
use qrabi::fitsuite::{bose_einstein_depth, fit_bose_einstein};
use qrabi::linalg::eigen2x2;
use qrabi::operators::{
    bs_block, build_multimode_hamiltonian, excitation_number_diagonal, parity_diagonal, vacuum_bs_shift,
};
use qrabi::spectra::{photon_distribution, DistributionKind};
use qrabi::{flux_to_qubit, FluxPoint, ModeParams, ModelVariant, QubitParams, StateLabel};

use crate::config::RunConfig;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Summary on success, first counterexample on failure.
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

type Check = Result<String, String>;

fn e2s(e: qrabi::Error) -> String {
    e.to_string()
}

/// Runs every check in order. `seed` drives the randomized draws.
pub fn run_suite(cfg: &RunConfig, seed: u64) -> Vec<CheckOutcome> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("hermiticity", Box::new(|| hermiticity(cfg))),
        ("parity", Box::new(|| parity(cfg))),
        ("excitation-number", Box::new(|| excitation_number(cfg))),
        ("flux-mirror", Box::new(|| flux_mirror(cfg))),
        ("eigensolver", Box::new(|| eigensolver(cfg))),
        ("analytic-identity", Box::new(|| analytic_identity(seed, 1000))),
        ("vacuum-shift", Box::new(|| vacuum_shift(cfg))),
        ("photon-dressing", Box::new(|| photon_dressing(cfg))),
        ("dispersive-limit", Box::new(dispersive_limit)),
        ("distributions", Box::new(|| distributions(cfg))),
        ("truncation", Box::new(|| truncation(cfg))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let r = f();
            CheckOutcome { name, passed: r.is_ok(), detail: r.unwrap_or_else(|e| e) }
        })
        .collect()
}

fn variants(num_modes: usize) -> Vec<ModelVariant> {
    let mut v = vec![ModelVariant::Rabi, ModelVariant::JcFullRwa, ModelVariant::JcKeepLongitudinal];
    if num_modes == 1 {
        v.push(ModelVariant::BlochSiegert);
    }
    v
}

fn probe_flux(cfg: &RunConfig) -> Vec<f64> {
    let mut xs = vec![cfg.flux_start, 0.0, cfg.flux_stop];
    xs.dedup();
    xs
}

fn hermiticity(cfg: &RunConfig) -> Check {
    let modes = cfg.mode_params();
    for x in probe_flux(cfg) {
        let fp = flux_to_qubit(x, &cfg.qubit).map_err(e2s)?;
        for v in variants(modes.len()) {
            let h = build_multimode_hamiltonian(&fp, &modes, v).map_err(e2s)?;
            if !h.is_hermitian() {
                return Err(format!("{} at {x} mPhi0 is not symmetric", v.name()));
            }
        }
    }
    Ok("all variants exactly symmetric".into())
}

fn parity(cfg: &RunConfig) -> Check {
    let fp = FluxPoint::optimal(cfg.qubit.gap).map_err(e2s)?;
    let h = build_multimode_hamiltonian(&fp, &cfg.mode_params(), ModelVariant::Rabi).map_err(e2s)?;
    let c = h.commutator_max_with_diagonal(&parity_diagonal(h.basis()));
    let bound = 1e-12 * h.max_abs();
    if c <= bound {
        Ok(format!("max |[H,P]| = {c:e} at the optimal point"))
    } else {
        Err(format!("max |[H,P]| = {c:e} > {bound:e}"))
    }
}

fn excitation_number(cfg: &RunConfig) -> Check {
    for x in probe_flux(cfg) {
        let fp = flux_to_qubit(x, &cfg.qubit).map_err(e2s)?;
        let h = build_multimode_hamiltonian(&fp, &cfg.mode_params(), ModelVariant::JcFullRwa).map_err(e2s)?;
        let c = h.commutator_max_with_diagonal(&excitation_number_diagonal(h.basis()));
        if c > 1e-12 * h.max_abs() {
            return Err(format!("max |[H_JC,N]| = {c:e} at {x} mPhi0"));
        }
    }
    Ok("jc_full_rwa conserves excitation number".into())
}

fn flux_mirror(cfg: &RunConfig) -> Check {
    let modes = cfg.mode_params();
    let mut worst = 0.0f64;
    for x in probe_flux(cfg).into_iter().filter(|x| *x != 0.0) {
        let spectrum = |x: f64| -> Result<Vec<f64>, String> {
            let fp = flux_to_qubit(x, &cfg.qubit).map_err(e2s)?;
            let h = build_multimode_hamiltonian(&fp, &modes, cfg.variant).map_err(e2s)?;
            lowest_eigenvalues(&h, 10.min(h.dim())).map_err(e2s)
        };
        let (a, b) = (spectrum(x)?, spectrum(-x)?);
        for (k, (p, q)) in a.iter().zip(&b).enumerate() {
            let d = (p - q).abs();
            if d > 1e-10 {
                return Err(format!("level {k} differs by {d:e} GHz between +{x} and -{x} mPhi0"));
            }
            worst = worst.max(d);
        }
    }
    Ok(format!("max mirror difference {worst:e} GHz"))
}

fn eigensolver(cfg: &RunConfig) -> Check {
    let fp = flux_to_qubit(cfg.flux_start, &cfg.qubit).map_err(e2s)?;
    let h = build_multimode_hamiltonian(&fp, &cfg.mode_params()[..1], cfg.variant).map_err(e2s)?;
    let es = eigh(&h).map_err(e2s)?;
    let ortho = es.orthonormality_error();
    let res = es.residual_norm();
    if ortho > 1e-10 || res > 1e-9 * h.max_abs().max(1.0) {
        return Err(format!("residual {res:e}, orthonormality error {ortho:e} (dim {})", h.dim()));
    }
    Ok(format!("residual {res:e}, orthonormality error {ortho:e}"))
}

/// Analytic qubit transition against the block eigenvalues for random draws.
pub fn analytic_identity(seed: u64, draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let q: QubitParams<f64> = QubitParams { persistent_current: rng.random_range(100.0..600.0), gap: rng.random_range(1.0..8.0) };
        let fp = flux_to_qubit(rng.random_range(-5.0..5.0), &q).map_err(e2s)?;
        let mode: ModeParams<f64> = ModeParams { mode_index: 1, omega_r: rng.random_range(1.0..12.0), coupling: rng.random_range(0.0..0.8), nmax: 12 };
        let n: u32 = rng.random_range(0..=10);
        let w_bs = vacuum_bs_shift(&fp, &mode);
        let upper = |k: u32| {
            let b = bs_block(k, &fp, &mode);
            eigen2x2(b[0][0], b[0][1], b[1][1])
        };
        let ground = -0.5 * fp.omega_q + 0.5 * mode.omega_r - w_bs;
        let this = upper(n);
        let prev = if n == 0 { [ground, ground] } else { upper(n - 1) };
        let block = if bs_detuning(n, &fp, &mode) > 0.0 { this[1] - prev[0] } else { this[0] - prev[1] };
        let d = (analytic_qubit_transition(n, &fp, &mode) - block).abs();
        if d > 1e-12 {
            return Err(format!(
                "N={n}, Ip={}, Delta={}, omega_r={}, g={}: mismatch {d:e} GHz",
                q.persistent_current, q.gap, mode.omega_r, mode.coupling
            ));
        }
        worst = worst.max(d);
    }
    Ok(format!("{draws} draws, max difference {worst:e} GHz"))
}

fn vacuum_shift(cfg: &RunConfig) -> Check {
    let fp = FluxPoint::optimal(cfg.qubit.gap).map_err(e2s)?;
    let mode = cfg.mode_params()[0];
    let chi0 = bs_shifts(0, &fp, &[mode], cfg.jc_variant, &cfg.label_options()).map_err(e2s)?[0];
    let w = vacuum_bs_shift(&fp, &mode);
    if chi0 > 0.0 && chi0 < w {
        Ok(format!("chi_0 = {chi0:.9} GHz below g^2/(omega_q+omega_r) = {w:.9} GHz"))
    } else {
        Err(format!("chi_0 = {chi0:.9} GHz outside (0, {w:.9}) GHz"))
    }
}

fn photon_dressing(cfg: &RunConfig) -> Check {
    let fp = FluxPoint::optimal(cfg.qubit.gap).map_err(e2s)?;
    let chi = bs_shifts(cfg.bs_n_max, &fp, &cfg.mode_params(), cfg.jc_variant, &cfg.label_options()).map_err(e2s)?;
    for n in 1..chi.len() {
        if chi[n] <= chi[n - 1] {
            return Err(format!("chi_{} = {} <= chi_{} = {} GHz at 0 mPhi0", n, chi[n], n - 1, chi[n - 1]));
        }
    }
    Ok(format!("chi_N increasing for N <= {} at 0 mPhi0", cfg.bs_n_max))
}

/// Relative deviations of the numeric shifts from their dispersive limits at
/// a detuning of 20g: qubit shifts for N = 0..=n_max, ground-branch photon
/// shifts |g,N⟩→|g,N+1⟩ for N = 0..=n_max, and excited-branch photon shifts
/// |e,N−1⟩→|e,N⟩ for N = 1..=n_max.
pub fn dispersive_deviations(n_max: u32) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String> {
    let g = 0.05;
    let mode = ModeParams { mode_index: 1, omega_r: 5.0, coupling: g, nmax: 40 };
    let fp = FluxPoint::optimal(5.0 + 20.0 * g).map_err(e2s)?;
    let w = vacuum_bs_shift(&fp, &mode);
    let opts = LabelOptions::default();
    let required = qrabi::dressed::qubit_transition_labels(n_max + 1, 1);
    let levels = qrabi::dressed::levels_covering(&fp, &[mode], &required).map_err(e2s)?;
    let rabi = label_eigenstates(&fp, &[mode], ModelVariant::Rabi, levels, &opts).map_err(e2s)?;
    let jc = label_eigenstates(&fp, &[mode], ModelVariant::JcFullRwa, levels, &opts).map_err(e2s)?;
    let e = |ls: &qrabi::Labeled, q: qrabi::QubitLevel, n: u32| ls.energy(&StateLabel::first_mode(q, n, 1)).map_err(e2s);
    use qrabi::QubitLevel::{Excited, Ground};
    let (mut qubit, mut pg, mut pe) = (Vec::new(), Vec::new(), Vec::new());
    for n in 0..=n_max {
        let chi = (e(&rabi, Excited, n)? - e(&rabi, Ground, n)?) - (e(&jc, Excited, n)? - e(&jc, Ground, n)?);
        qubit.push(chi / ((2 * n + 1) as f64 * w) - 1.0);
        let sg = (e(&rabi, Ground, n + 1)? - e(&rabi, Ground, n)?) - (e(&jc, Ground, n + 1)? - e(&jc, Ground, n)?);
        pg.push(sg / -w - 1.0);
        if n > 0 {
            let se = (e(&rabi, Excited, n)? - e(&rabi, Excited, n - 1)?) - (e(&jc, Excited, n)? - e(&jc, Excited, n - 1)?);
            pe.push(se / w - 1.0);
        }
    }
    Ok((qubit, pg, pe))
}

fn dispersive_limit() -> Check {
    let (q, pg, pe) = dispersive_deviations(4)?;
    for (what, devs) in [("qubit", &q), ("photon g", &pg), ("photon e", &pe)] {
        let first = if what == "photon e" { 1 } else { 0 };
        if let Some((k, d)) = devs.iter().enumerate().find(|(_, d)| d.abs() > 0.05) {
            return Err(format!("{what} shift at N={} deviates {:.2}% from the dispersive value", k + first, 100.0 * d));
        }
    }
    let worst = q.iter().chain(&pg).chain(&pe).fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(format!("max deviation {:.3}% at detuning 20g", 100.0 * worst))
}

fn distributions(cfg: &RunConfig) -> Check {
    let mean = if cfg.dist_mean > 0.0 { cfg.dist_mean } else { 3.0 };
    let p = |k, n| photon_distribution(k, mean, n).map_err(e2s);
    for n in 0..12 {
        if p(DistributionKind::Thermal, n + 1)? >= p(DistributionKind::Thermal, n)? {
            return Err(format!("thermal P({}) >= P({n}) at mean {mean}", n + 1));
        }
    }
    let depths: Vec<(u32, f64)> = (0..8).map(|n| (n, bose_einstein_depth(0.8, mean, n))).collect();
    let fit = fit_bose_einstein(&depths).map_err(e2s)?;
    let got = fit.value("mean_n").unwrap_or(f64::NAN);
    if (got - mean).abs() > 1e-8 * mean {
        return Err(format!("thermal fit returned mean {got} for exact data with mean {mean}"));
    }
    Ok(format!("thermal profile decreasing, fit recovers mean {mean}"))
}

fn truncation(cfg: &RunConfig) -> Check {
    let fp = flux_to_qubit(cfg.converge_flux, &cfg.qubit).map_err(e2s)?;
    let mode = cfg.mode_params()[0];
    let levels = cfg.converge_levels;
    let spectrum = |n: usize| -> Result<Vec<f64>, String> {
        let h = build_multimode_hamiltonian(&fp, &[mode.with_nmax(n)], cfg.variant).map_err(e2s)?;
        lowest_eigenvalues(&h, levels.min(h.dim())).map_err(e2s)
    };
    let (a, b) = (spectrum(40)?, spectrum(60)?);
    let worst = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if worst < cfg.converge_tol {
        Ok(format!("lowest {levels} levels move {worst:e} GHz from nmax 40 to 60"))
    } else {
        Err(format!("lowest {levels} levels move {worst:e} GHz from nmax 40 to 60"))
    }
}
