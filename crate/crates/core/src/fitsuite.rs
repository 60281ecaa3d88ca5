//! Peak extraction from spectrum images and least-squares fits of model
//! parameters and thermal occupation.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::eigen::lowest_eigenvalues;
use crate::error::{Error, Result};
use crate::fluxmap::{flux_to_qubit, QubitParams};
use crate::linalg::PivotedCholesky;
use crate::numfmt::{round12, sig12};
use crate::operators::{build_multimode_hamiltonian, ModeParams, ModelVariant};
use crate::spectra::{csv_err, SpectrumImage};

/// One spectral feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Peak {
    pub flux: f64,
    pub freq: f64,
    pub depth: f64,
    pub n_tag: Option<u32>,
}

/// Peaks sorted by flux, then frequency.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeakList {
    entries: Vec<Peak>,
}

impl PeakList {
    pub fn new(mut entries: Vec<Peak>) -> Result<Self> {
        for p in &entries {
            if !(p.flux.is_finite() && p.freq.is_finite() && p.depth.is_finite()) {
                return Err(Error::InvalidInput("peak values must be finite".into()));
            }
            if p.depth < 0.0 {
                return Err(Error::InvalidInput(format!("negative peak depth {}", p.depth)));
            }
        }
        entries.sort_by(|a, b| (a.flux, a.freq).partial_cmp(&(b.flux, b.freq)).unwrap_or(std::cmp::Ordering::Equal));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Peak] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags the peaks of every flux column 0, 1, 2, … in order of frequency.
    pub fn tag_by_frequency_order(&mut self) {
        let mut k = 0;
        for i in 0..self.entries.len() {
            if i > 0 && self.entries[i].flux != self.entries[i - 1].flux {
                k = 0;
            }
            self.entries[i].n_tag = Some(k);
            k += 1;
        }
    }

    /// Groups of entry indices sharing a flux value.
    fn columns(&self) -> Vec<(f64, Vec<usize>)> {
        let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, p) in self.entries.iter().enumerate() {
            match out.last_mut() {
                Some((x, idx)) if *x == p.flux => idx.push(i),
                _ => out.push((p.flux, vec![i])),
            }
        }
        out
    }
}

/// Whether features are maxima of the amplitude or dips in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Peaks,
    Dips,
}

/// Local maxima of each flux column (of 1 − amplitude for dips) whose
/// prominence is at least `prominence` times the largest signal in the
/// image, refined by a 3-point parabola. At most `max_per_column` of the
/// most prominent peaks are kept per column.
pub fn extract_peaks(img: &SpectrumImage, prominence: f64, max_per_column: usize, polarity: Polarity) -> Result<PeakList> {
    if img.amplitude().is_empty() {
        return Err(Error::InvalidInput("spectrum image is empty".into()));
    }
    if !(0.0..=1.0).contains(&prominence) {
        return Err(Error::InvalidParameter(format!("prominence must lie in [0, 1], got {prominence}")));
    }
    let signal = |a: f64| match polarity {
        Polarity::Peaks => a,
        Polarity::Dips => 1.0 - a,
    };
    let global = img.amplitude().iter().map(|&a| signal(a)).fold(f64::NEG_INFINITY, f64::max);
    let threshold = prominence * global.max(0.0);
    let freq = img.freq();
    let mut entries = Vec::new();
    for (c, &x) in img.flux().iter().enumerate() {
        let s: Vec<f64> = img.column(c).iter().map(|&a| signal(a)).collect();
        let mut found: Vec<(f64, Peak)> = Vec::new();
        for i in 1..s.len().saturating_sub(1) {
            if !(s[i] > s[i - 1] && s[i] >= s[i + 1]) {
                continue;
            }
            let prom = topographic_prominence(&s, i);
            if prom < threshold || prom <= 0.0 {
                continue;
            }
            let (y0, y1, y2) = (s[i - 1], s[i], s[i + 1]);
            let curvature = y0 - 2.0 * y1 + y2;
            let offset = if curvature < 0.0 { 0.5 * (y0 - y2) / curvature } else { 0.0 };
            let step = if offset >= 0.0 { freq[i + 1] - freq[i] } else { freq[i] - freq[i - 1] };
            let depth = (y1 - 0.25 * (y0 - y2) * offset).max(0.0);
            found.push((prom, Peak { flux: x, freq: freq[i] + offset * step, depth, n_tag: None }));
        }
        found.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        found.truncate(max_per_column);
        entries.extend(found.into_iter().map(|(_, p)| p));
    }
    PeakList::new(entries)
}

// Height above the higher of the two lowest points separating the peak from
// taller terrain (or the column edge) on either side.
fn topographic_prominence(s: &[f64], i: usize) -> f64 {
    let h = s[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if s[j] > h {
            break;
        }
        left_min = left_min.min(s[j]);
    }
    let mut right_min = h;
    for &v in &s[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// A fitted parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct FitParam {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ‖Jᵀr‖ at the final point, in log-parameter coordinates.
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }

    pub fn to_json(&self) -> Value {
        let mut params = Map::new();
        for p in &self.params {
            params.insert(
                p.name.clone(),
                json!({ "value": round12(p.value), "unit": p.unit, "stderr": round12(p.stderr) }),
            );
        }
        json!({
            "params": params,
            "rss": round12(self.rss),
            "iterations": self.iterations,
            "converged": self.converged,
        })
    }
}

/// Stopping rules for [`gauss_newton`].
#[derive(Clone, Copy, Debug)]
pub struct GaussNewtonOptions {
    pub max_iterations: usize,
    pub rel_rss_tol: f64,
    pub gradient_tol: f64,
    pub max_halvings: usize,
    /// Relative forward-difference step per parameter.
    pub fd_step: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { max_iterations: 200, rel_rss_tol: 1e-10, gradient_tol: 1e-8, max_halvings: 10, fd_step: 1e-6 }
    }
}

/// Outcome of a Gauss-Newton run in log-parameter space.
#[derive(Clone, Debug)]
pub struct GaussNewtonOutcome {
    /// Final parameters (not logarithms).
    pub params: Vec<f64>,
    /// Standard errors of the parameters by the delta method.
    pub stderr: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes Σ r_k(p)² over positive parameters using Gauss-Newton on
/// x = ln p with a forward-difference Jacobian and step halving.
///
/// `residuals` receives the parameters and returns the residual vector; it
/// is called concurrently for the Jacobian columns. `prepare` runs once
/// per iteration before the Jacobian, to refresh any data assignment.
pub fn gauss_newton<R, P>(
    residuals: R,
    mut prepare: P,
    init: &[f64],
    names: &[String],
    opts: &GaussNewtonOptions,
) -> Result<GaussNewtonOutcome>
where
    R: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    P: FnMut(&[f64]) -> Result<()>,
{
    let np = init.len();
    if init.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial parameters must be positive, got {init:?}")));
    }
    let mut x: Vec<f64> = init.iter().map(|p| p.ln()).collect();
    let to_p = |x: &[f64]| x.iter().map(|v| v.exp()).collect::<Vec<_>>();
    prepare(&to_p(&x))?;
    let mut r = residuals(&to_p(&x))?;
    let nr = r.len();
    if nr == 0 {
        return Err(Error::InvalidInput("no residuals to fit".into()));
    }
    let mut rss = rss_of(&r);
    let h = (1.0 + opts.fd_step).ln();
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient_norm;
    let mut jac: Vec<f64>;
    loop {
        jac = jacobian(&residuals, &x, &r, h)?;
        let (jtj, grad) = normal_equations(&jac, &r, nr, np);
        gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gradient_norm < opts.gradient_tol || rss == 0.0 {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        let step = solve_normal(&jtj, &grad, np, names)?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
            if let Ok(rt) = residuals(&to_p(&trial)) {
                let rss_t = rss_of(&rt);
                if rss_t.is_finite() && rss_t <= rss {
                    accepted = Some((trial, rss_t));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((trial, rss_t)) = accepted else {
            // no descent along the Gauss-Newton direction: at the noise floor
            converged = rss == 0.0 || gradient_norm < opts.gradient_tol.sqrt();
            break;
        };
        let improvement = if rss > 0.0 { (rss - rss_t) / rss } else { 0.0 };
        x = trial;
        prepare(&to_p(&x))?;
        r = residuals(&to_p(&x))?;
        rss = rss_of(&r);
        if improvement < opts.rel_rss_tol {
            jac = jacobian(&residuals, &x, &r, h)?;
            let (_, grad) = normal_equations(&jac, &r, nr, np);
            gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            converged = true;
            break;
        }
    }

    let params = to_p(&x);
    let (jtj, _) = normal_equations(&jac, &r, nr, np);
    let stderr = if nr > np {
        let sigma2 = rss / (nr - np) as f64;
        match checked_cholesky(&jtj, np, names) {
            Ok(ch) => {
                let inv = ch.inverse();
                (0..np).map(|i| params[i] * (sigma2 * inv[i * np + i]).max(0.0).sqrt()).collect()
            }
            Err(_) => vec![f64::NAN; np],
        }
    } else {
        vec![0.0; np]
    };
    Ok(GaussNewtonOutcome { params, stderr, rss, iterations, converged, gradient_norm })
}

fn jacobian<R>(residuals: &R, x: &[f64], r: &[f64], h: f64) -> Result<Vec<f64>>
where
    R: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let np = x.len();
    let nr = r.len();
    let cols: Vec<Result<Vec<f64>>> = (0..np)
        .into_par_iter()
        .map(|j| {
            let mut xp = x.to_vec();
            xp[j] += h;
            let p: Vec<f64> = xp.iter().map(|v| v.exp()).collect();
            let rp = residuals(&p)?;
            if rp.len() != nr {
                return Err(Error::InvalidInput("residual count changed under perturbation".into()));
            }
            Ok(rp.iter().zip(r).map(|(a, b)| (a - b) / h).collect())
        })
        .collect();
    // row-major nr × np
    let mut jac = vec![0.0; nr * np];
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            jac[i * np + j] = v;
        }
    }
    Ok(jac)
}

fn normal_equations(jac: &[f64], r: &[f64], nr: usize, np: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; np * np];
    let mut grad = vec![0.0; np];
    for i in 0..nr {
        let row = &jac[i * np..(i + 1) * np];
        for a in 0..np {
            grad[a] += row[a] * r[i];
            for b in 0..np {
                jtj[a * np + b] += row[a] * row[b];
            }
        }
    }
    (jtj, grad)
}

fn checked_cholesky(jtj: &[f64], np: usize, names: &[String]) -> Result<PivotedCholesky> {
    let ch = PivotedCholesky::new(jtj, np, 1e-13);
    if ch.rank() < np {
        let bad = ch.deficient_indices().into_iter().map(|i| names.get(i).cloned().unwrap_or_else(|| format!("p{i}"))).collect();
        return Err(Error::RankDeficient(bad));
    }
    Ok(ch)
}

// Solves (JᵀJ) δ = Jᵀr after diagonal scaling.
fn solve_normal(jtj: &[f64], grad: &[f64], np: usize, names: &[String]) -> Result<Vec<f64>> {
    let d: Vec<f64> = (0..np).map(|i| jtj[i * np + i].sqrt()).collect();
    if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::RankDeficient(vec![names.get(i).cloned().unwrap_or_else(|| format!("p{i}"))]));
    }
    let scaled: Vec<f64> = (0..np * np).map(|k| jtj[k] / (d[k / np] * d[k % np])).collect();
    let g: Vec<f64> = grad.iter().zip(&d).map(|(a, b)| a / b).collect();
    let ch = checked_cholesky(&scaled, np, names)?;
    Ok(ch.solve(&g).iter().zip(&d).map(|(a, b)| a / b).collect())
}

/// A parameter that a model fit may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitParameter {
    PersistentCurrent,
    Gap,
    /// Coupling of the mode with this index.
    Coupling(u32),
}

impl FitParameter {
    pub fn name(self) -> String {
        match self {
            FitParameter::PersistentCurrent => "Ip".into(),
            FitParameter::Gap => "Delta".into(),
            FitParameter::Coupling(m) => format!("g{m}"),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            FitParameter::PersistentCurrent => "nA",
            _ => "GHz",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "Ip" | "ip" => Ok(FitParameter::PersistentCurrent),
            "Delta" | "delta" => Ok(FitParameter::Gap),
            _ => s
                .strip_prefix('g')
                .and_then(|m| m.parse().ok())
                .map(FitParameter::Coupling)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown fit parameter '{s}'"))),
        }
    }
}

/// Forward model for [`fit_model_params`]: ground-state transition
/// frequencies E_k − E_0 of the Hamiltonian, k = 1..=curves.
#[derive(Clone, Debug)]
pub struct ModelFitSpec {
    pub qubit: QubitParams<f64>,
    pub modes: Vec<ModeParams<f64>>,
    pub variant: ModelVariant,
    pub free: Vec<FitParameter>,
    /// Number of model curves peaks may be assigned to.
    pub curves: usize,
    pub options: GaussNewtonOptions,
}

impl ModelFitSpec {
    fn apply(&self, p: &[f64]) -> (QubitParams<f64>, Vec<ModeParams<f64>>) {
        let mut q = self.qubit;
        let mut modes = self.modes.clone();
        for (param, &v) in self.free.iter().zip(p) {
            match param {
                FitParameter::PersistentCurrent => q.persistent_current = v,
                FitParameter::Gap => q.gap = v,
                FitParameter::Coupling(m) => {
                    if let Some(mode) = modes.iter_mut().find(|x| x.mode_index == *m) {
                        mode.coupling = v;
                    }
                }
            }
        }
        (q, modes)
    }

    fn initial(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|param| match param {
                FitParameter::PersistentCurrent => self.qubit.persistent_current,
                FitParameter::Gap => self.qubit.gap,
                FitParameter::Coupling(m) => {
                    self.modes.iter().find(|x| x.mode_index == *m).map(|x| x.coupling).unwrap_or(f64::NAN)
                }
            })
            .collect()
    }
}

/// Transition curves E_k − E_0 (k = 1..=curves) at one flux point.
pub fn ground_transition_curves(
    delta_phi: f64,
    qubit: &QubitParams<f64>,
    modes: &[ModeParams<f64>],
    variant: ModelVariant,
    curves: usize,
) -> Result<Vec<f64>> {
    let fp = flux_to_qubit(delta_phi, qubit)?;
    let h = build_multimode_hamiltonian(&fp, modes, variant)?;
    let vals = lowest_eigenvalues(&h, (curves + 1).min(h.dim()))?;
    Ok(vals[1..].iter().map(|e| e - vals[0]).collect())
}

/// Order-preserving one-to-one assignment of sorted peak frequencies to
/// sorted curve frequencies minimizing the squared distance.
pub fn assign_peaks(peaks: &[f64], curves: &[f64]) -> Option<Vec<usize>> {
    let (p, c) = (peaks.len(), curves.len());
    if p > c {
        return None;
    }
    // cost[i][j]: best cost placing the first i peaks among the first j curves
    let inf = f64::INFINITY;
    let mut cost = vec![inf; (p + 1) * (c + 1)];
    let mut take = vec![false; (p + 1) * (c + 1)];
    let at = |i: usize, j: usize| i * (c + 1) + j;
    for j in 0..=c {
        cost[at(0, j)] = 0.0;
    }
    for i in 1..=p {
        for j in i..=c {
            let skip = cost[at(i, j - 1)];
            let d = peaks[i - 1] - curves[j - 1];
            let use_it = cost[at(i - 1, j - 1)] + d * d;
            if use_it <= skip {
                cost[at(i, j)] = use_it;
                take[at(i, j)] = true;
            } else {
                cost[at(i, j)] = skip;
            }
        }
    }
    let mut out = vec![0; p];
    let (mut i, mut j) = (p, c);
    while i > 0 {
        if take[at(i, j)] {
            out[i - 1] = j - 1;
            i -= 1;
        }
        j -= 1;
    }
    Some(out)
}

/// Fits the free parameters so that model transition curves pass through
/// the peaks. Peaks are reassigned to curves at every iteration.
pub fn fit_model_params(peaks: &PeakList, spec: &ModelFitSpec) -> Result<FitResult> {
    if peaks.is_empty() {
        return Err(Error::InvalidInput("peak list is empty".into()));
    }
    if spec.free.is_empty() {
        return Err(Error::InvalidParameter("no free parameters".into()));
    }
    for param in &spec.free {
        if let FitParameter::Coupling(m) = param {
            if !spec.modes.iter().any(|x| x.mode_index == *m) {
                return Err(Error::InvalidParameter(format!("no mode {m} for parameter {}", param.name())));
            }
        }
    }
    let columns = peaks.columns();
    let curves_at = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
        let (q, modes) = spec.apply(p);
        columns
            .iter()
            .map(|(x, _)| ground_transition_curves(*x, &q, &modes, spec.variant, spec.curves))
            .collect()
    };
    let assignment = std::sync::RwLock::new(Vec::<Vec<usize>>::new());
    let prepare = |p: &[f64]| -> Result<()> {
        let curves = curves_at(p)?;
        let mut all = Vec::with_capacity(columns.len());
        for ((x, idx), c) in columns.iter().zip(&curves) {
            let f: Vec<f64> = idx.iter().map(|&i| peaks.entries()[i].freq).collect();
            let a = assign_peaks(&f, c).ok_or_else(|| {
                Error::InvalidInput(format!("{} peaks at flux {x} exceed the {} model curves", f.len(), c.len()))
            })?;
            all.push(a);
        }
        *assignment.write().expect("assignment lock") = all;
        Ok(())
    };
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let curves = curves_at(p)?;
        let assign = assignment.read().expect("assignment lock");
        let mut r = Vec::with_capacity(peaks.len());
        for (((_, idx), c), a) in columns.iter().zip(&curves).zip(assign.iter()) {
            for (&i, &k) in idx.iter().zip(a) {
                r.push(c[k] - peaks.entries()[i].freq);
            }
        }
        Ok(r)
    };
    let names: Vec<String> = spec.free.iter().map(|p| p.name()).collect();
    let out = gauss_newton(residuals, prepare, &spec.initial(), &names, &spec.options)?;
    Ok(FitResult {
        params: spec
            .free
            .iter()
            .zip(out.params.iter().zip(&out.stderr))
            .map(|(param, (&value, &stderr))| FitParam { name: param.name(), unit: param.unit().into(), value, stderr })
            .collect(),
        rss: out.rss,
        iterations: out.iterations,
        converged: out.converged,
        gradient_norm: out.gradient_norm,
    })
}

/// A·m̄ⁿ/(m̄+1)ⁿ⁺¹.
pub fn bose_einstein_depth(amplitude: f64, mean: f64, n: u32) -> f64 {
    amplitude * (mean / (mean + 1.0)).powi(n as i32) / (mean + 1.0)
}

/// Fits depth(n) ≈ A·m̄ⁿ/(m̄+1)ⁿ⁺¹ over (A, m̄). Returns parameters
/// `A` and `mean_n`.
pub fn fit_bose_einstein(depths: &[(u32, f64)]) -> Result<FitResult> {
    if depths.len() < 2 {
        return Err(Error::InvalidInput("at least two (n, depth) points are required".into()));
    }
    let mut ns: Vec<u32> = depths.iter().map(|d| d.0).collect();
    ns.sort_unstable();
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("photon numbers must be distinct".into()));
    }
    if depths.iter().any(|d| !d.1.is_finite()) {
        return Err(Error::InvalidInput("depths must be finite".into()));
    }
    if depths.iter().all(|d| d.1 == 0.0) {
        return Err(Error::DegenerateData("all depths are zero".into()));
    }
    let mean0 = initial_mean(depths);
    let a0 = depths
        .iter()
        .filter(|d| d.1 > 0.0)
        .map(|d| d.1 / bose_einstein_depth(1.0, mean0, d.0))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(depths.iter().map(|&(n, d)| bose_einstein_depth(p[0], p[1], n) - d).collect())
    };
    let names = vec!["A".to_string(), "mean_n".to_string()];
    let out = gauss_newton(residuals, |_| Ok(()), &[a0, mean0], &names, &GaussNewtonOptions::default())?;
    Ok(FitResult {
        params: vec![
            FitParam { name: "A".into(), unit: "".into(), value: out.params[0], stderr: out.stderr[0] },
            FitParam { name: "mean_n".into(), unit: "photons".into(), value: out.params[1], stderr: out.stderr[1] },
        ],
        rss: out.rss,
        iterations: out.iterations,
        converged: out.converged,
        gradient_norm: out.gradient_norm,
    })
}

// Median of the consecutive-depth ratio r = m̄/(m̄+1), mapped back to m̄.
fn initial_mean(depths: &[(u32, f64)]) -> f64 {
    let mut sorted = depths.to_vec();
    sorted.sort_by_key(|d| d.0);
    let mut ratios: Vec<f64> = sorted
        .windows(2)
        .filter(|w| w[0].1 > 0.0 && w[1].1 > 0.0)
        .map(|w| (w[1].1 / w[0].1).powf(1.0 / (w[1].0 - w[0].0) as f64))
        .collect();
    if ratios.is_empty() {
        return 1.0;
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let r = ratios[ratios.len() / 2].clamp(0.01, 0.99);
    r / (1.0 - r)
}

/// Multiplies each value by (1 + level·ξ) with ξ standard normal, seeded.
pub fn multiplicative_noise(values: &[f64], level: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    values.iter().map(|v| v * (1.0 + level * normal.sample(&mut rng))).collect()
}

pub fn write_peaks_csv<W: Write>(peaks: &PeakList, out: W) -> Result<()> {
    let tagged = peaks.entries().iter().any(|p| p.n_tag.is_some());
    let mut w = csv::Writer::from_writer(out);
    if tagged {
        w.write_record(["flux_mPhi0", "freq_GHz", "depth", "n_tag"]).map_err(csv_err)?;
    } else {
        w.write_record(["flux_mPhi0", "freq_GHz", "depth"]).map_err(csv_err)?;
    }
    for p in peaks.entries() {
        let mut rec = vec![sig12(p.flux), sig12(p.freq), sig12(p.depth)];
        if tagged {
            rec.push(p.n_tag.map(|t| t.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, what: &str) -> Result<T> {
    let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
    let raw = rec.get(k).ok_or_else(|| Error::Parse { line, msg: format!("missing column {what}") })?;
    raw.trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid {what} '{raw}'") })
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], optional: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
    let ok = got.len() >= expected.len()
        && got.len() <= expected.len() + optional.len()
        && got.iter().zip(expected.iter().chain(optional)).all(|(a, b)| a == b);
    if ok {
        Ok(())
    } else {
        Err(Error::Parse { line: 1, msg: format!("expected header {}", [expected, optional].concat().join(",")) })
    }
}

pub fn read_peaks_csv<R: Read>(input: R) -> Result<PeakList> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input);
    check_header(&rd.headers().map_err(csv_err)?.clone(), &["flux_mPhi0", "freq_GHz", "depth"], &["n_tag"])?;
    let mut entries = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let n_tag = match rec.get(3).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(parse_field::<u32>(&rec, 3, "n_tag")?),
        };
        let peak = Peak {
            flux: parse_field(&rec, 0, "flux_mPhi0")?,
            freq: parse_field(&rec, 1, "freq_GHz")?,
            depth: parse_field(&rec, 2, "depth")?,
            n_tag,
        };
        if !(peak.flux.is_finite() && peak.freq.is_finite() && peak.depth.is_finite()) || peak.depth < 0.0 {
            return Err(Error::Parse { line, msg: "values must be finite and depth >= 0".into() });
        }
        entries.push(peak);
    }
    PeakList::new(entries)
}

/// Reads `n, depth` rows for the thermal fit.
pub fn read_depths_csv<R: Read>(input: R) -> Result<Vec<(u32, f64)>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input);
    check_header(&rd.headers().map_err(csv_err)?.clone(), &["n", "depth"], &[])?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        out.push((parse_field(&rec, 0, "n")?, parse_field(&rec, 1, "depth")?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::lorentzian;
    use approx::assert_relative_eq;

    fn image_with(lines: &[(f64, f64)], gamma: f64) -> SpectrumImage {
        let freq: Vec<f64> = (0..401).map(|k| 3.0 + k as f64 * 0.005).collect();
        let amp: Vec<f64> = freq.iter().map(|&w| lines.iter().map(|(c, a)| a * lorentzian(w - c, gamma)).sum()).collect();
        SpectrumImage::new(vec![0.0], freq, amp).unwrap()
    }

    #[test]
    fn single_peak_refined() {
        let img = image_with(&[(3.5012, 1.0)], 0.03);
        let peaks = extract_peaks(&img, 0.1, 5, Polarity::Peaks).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks.entries()[0].freq - 3.5012).abs() < 0.1 * 0.005);
    }

    #[test]
    fn two_separated_peaks() {
        let img = image_with(&[(3.4, 1.0), (3.4 + 5.0 * 0.02, 0.6)], 0.02);
        let peaks = extract_peaks(&img, 0.1, 5, Polarity::Peaks).unwrap();
        assert_eq!(peaks.len(), 2);
    }

    #[test]
    fn dips_polarity() {
        let base = image_with(&[(3.7, 0.8)], 0.05);
        let inverted: Vec<f64> = base.amplitude().iter().map(|a| 1.0 - a).collect();
        let img = SpectrumImage::new(base.flux().to_vec(), base.freq().to_vec(), inverted).unwrap();
        let peaks = extract_peaks(&img, 0.1, 5, Polarity::Dips).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks.entries()[0].freq - 3.7).abs() < 5e-4);
    }

    #[test]
    fn assignment_skips_unobserved_curves() {
        let a = assign_peaks(&[1.0, 3.1], &[0.9, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a, vec![0, 2]);
        assert!(assign_peaks(&[1.0, 2.0], &[1.0]).is_none());
    }

    #[test]
    fn bose_einstein_round_trip() {
        let data: Vec<(u32, f64)> = (0..5).map(|n| (n, bose_einstein_depth(1.0, 3.0, n))).collect();
        let fit = fit_bose_einstein(&data).unwrap();
        assert!(fit.converged);
        assert!((fit.value("mean_n").unwrap() - 3.0).abs() <= 1e-8);
        assert!((fit.value("A").unwrap() - 1.0).abs() <= 1e-8);
        assert!(fit_bose_einstein(&[(0, 0.0), (1, 0.0)]).is_err());
        assert!(fit_bose_einstein(&[(0, 1.0)]).is_err());
        assert!(fit_bose_einstein(&[(1, 1.0), (1, 0.5)]).is_err());
    }

    #[test]
    fn rank_deficiency_is_named() {
        // residuals depend on p0·p1 only
        let res = |p: &[f64]| -> Result<Vec<f64>> { Ok((0..4).map(|k| p[0] * p[1] * k as f64 - 2.0 * k as f64).collect()) };
        let names = vec!["a".to_string(), "b".to_string()];
        let err = gauss_newton(res, |_| Ok(()), &[1.0, 1.0], &names, &GaussNewtonOptions::default()).unwrap_err();
        match err {
            Error::RankDeficient(v) => assert_eq!(v.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn peaks_csv_round_trip() {
        let mut peaks = PeakList::new(vec![
            Peak { flux: 0.5, freq: 3.4, depth: 0.2, n_tag: None },
            Peak { flux: 0.0, freq: 3.3, depth: 1.0, n_tag: None },
            Peak { flux: 0.0, freq: 3.2, depth: 0.7, n_tag: None },
        ])
        .unwrap();
        peaks.tag_by_frequency_order();
        assert_eq!(peaks.entries()[1].n_tag, Some(1));
        let mut buf = Vec::new();
        write_peaks_csv(&peaks, &mut buf).unwrap();
        let back = read_peaks_csv(buf.as_slice()).unwrap();
        assert_eq!(back, peaks);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "flux_mPhi0,freq_GHz,depth\n0,3.2,1\n0.5,abc,1\n";
        match read_peaks_csv(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_mode_fit_round_trip() {
        let truth = QubitParams::new(360.0, 3.198).unwrap();
        let mode = ModeParams::new(1, 2.36, 0.265, 12).unwrap();
        let mut entries = Vec::new();
        for k in 0..9 {
            let x = -2.0 + 0.5 * k as f64;
            let c = ground_transition_curves(x, &truth, &[mode], ModelVariant::Rabi, 3).unwrap();
            for f in c {
                entries.push(Peak { flux: x, freq: f, depth: 1.0, n_tag: None });
            }
        }
        let peaks = PeakList::new(entries).unwrap();
        let spec = ModelFitSpec {
            qubit: QubitParams::new(360.0 * 1.2, 3.198 * 0.8).unwrap(),
            modes: vec![mode.with_coupling(0.265 * 1.2)],
            variant: ModelVariant::Rabi,
            free: vec![FitParameter::PersistentCurrent, FitParameter::Gap, FitParameter::Coupling(1)],
            curves: 5,
            options: GaussNewtonOptions::default(),
        };
        let fit = fit_model_params(&peaks, &spec).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.value("Ip").unwrap(), 360.0, max_relative = 1e-6);
        assert_relative_eq!(fit.value("Delta").unwrap(), 3.198, max_relative = 1e-6);
        assert_relative_eq!(fit.value("g1").unwrap(), 0.265, max_relative = 1e-6);
        let js = fit.to_json();
        assert!(js["params"]["g1"]["stderr"].as_f64().unwrap() >= 0.0);
    }
}
