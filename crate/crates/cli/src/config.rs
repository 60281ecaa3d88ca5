//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Modes are declared by index:
//! `mode.<m>.omega_ghz`, `mode.<m>.g_ghz`, `mode.<m>.nmax`,
//! `mode.<m>.linewidth_ghz`, `mode.<m>.drive`. Any key can be overridden by
//! an environment variable named `QRABI_` followed by the key in upper case
//! with dots replaced by underscores (`QRABI_MODE_1_G_GHZ`).
//!
//! Declaring any `mode.` key replaces the default mode list with the
//! declared indices. A declared index that also exists in the defaults
//! inherits the fields it does not set.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use qrabi::dressed::LabelOptions;
use qrabi::fitsuite::FitParameter;
use qrabi::spectra::{DistributionKind, LinewidthConfig, DEFAULT_MODE_LINEWIDTH, DEFAULT_QUBIT_LINEWIDTH};
use qrabi::{ModeParams, ModelVariant, QubitParams, StateLabel};

pub const ENV_PREFIX: &str = "QRABI_";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line in the config text, 0 for environment or whole-file issues.
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "config line {}: {}", self.line, self.msg)
        } else {
            write!(f, "config: {}", self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError { line, msg: msg.into() }
}

/// One resonator mode with its spectroscopy settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeConfig {
    pub params: ModeParams<f64>,
    pub linewidth: f64,
    /// Drive weight λ_m.
    pub drive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub qubit: QubitParams<f64>,
    /// Sorted by mode index.
    pub modes: Vec<ModeConfig>,
    pub flux_start: f64,
    pub flux_stop: f64,
    pub flux_step: f64,
    pub variant: ModelVariant,
    pub jc_variant: ModelVariant,
    pub steps: usize,
    pub dist_kind: DistributionKind,
    pub dist_mean: f64,
    pub qubit_linewidth: f64,
    pub spectrum_freq_start: f64,
    pub spectrum_freq_stop: f64,
    pub spectrum_freq_step: f64,
    pub spectrum_n_max: u32,
    pub transitions_from: Vec<String>,
    pub transitions_max_freq: f64,
    pub bs_n_max: u32,
    pub converge_levels: usize,
    pub converge_tol: f64,
    pub converge_start: usize,
    pub converge_flux: f64,
    pub fit_free: Vec<FitParameter>,
    pub fit_curves: usize,
    pub fit_max_iterations: usize,
    pub out: Option<String>,
    pub jobs: usize,
}

/// Default truncation for a mode index.
pub fn default_nmax(mode_index: u32) -> usize {
    match mode_index {
        1 => 30,
        3 => 6,
        _ => 4,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            qubit: QubitParams { persistent_current: 360.0, gap: 3.198 },
            modes: vec![ModeConfig {
                params: ModeParams { mode_index: 1, omega_r: 2.360, coupling: 0.265, nmax: 30 },
                linewidth: DEFAULT_MODE_LINEWIDTH,
                drive: 1.0,
            }],
            flux_start: -1.0,
            flux_stop: 1.0,
            flux_step: 0.1,
            variant: ModelVariant::Rabi,
            jc_variant: ModelVariant::JcFullRwa,
            steps: 20,
            dist_kind: DistributionKind::Thermal,
            dist_mean: 3.0,
            qubit_linewidth: DEFAULT_QUBIT_LINEWIDTH,
            spectrum_freq_start: 3.0,
            spectrum_freq_stop: 4.5,
            spectrum_freq_step: 0.002,
            spectrum_n_max: 4,
            transitions_from: vec!["g:0".into()],
            transitions_max_freq: 8.0,
            bs_n_max: 4,
            converge_levels: 20,
            converge_tol: 1e-6,
            converge_start: 10,
            converge_flux: 0.0,
            fit_free: vec![FitParameter::PersistentCurrent, FitParameter::Gap, FitParameter::Coupling(1)],
            fit_curves: 6,
            fit_max_iterations: 200,
            out: None,
            jobs: 1,
        }
    }
}

const SCALAR_KEYS: &[&str] = &[
    "qubit.ip_na",
    "qubit.delta_ghz",
    "flux.start",
    "flux.stop",
    "flux.step",
    "model.variant",
    "model.jc_variant",
    "model.steps",
    "dist.kind",
    "dist.mean",
    "linewidth.qubit_ghz",
    "spectrum.freq_start_ghz",
    "spectrum.freq_stop_ghz",
    "spectrum.freq_step_ghz",
    "spectrum.n_max",
    "transitions.from",
    "transitions.max_freq_ghz",
    "bs.n_max",
    "converge.levels",
    "converge.tol_ghz",
    "converge.start",
    "converge.flux",
    "fit.free",
    "fit.curves",
    "fit.max_iterations",
    "out",
    "jobs",
];

const MODE_FIELDS: &[&str] = &["omega_ghz", "g_ghz", "nmax", "linewidth_ghz", "drive"];

fn is_known(key: &str) -> bool {
    if SCALAR_KEYS.contains(&key) {
        return true;
    }
    mode_key(key).is_some()
}

fn mode_key(key: &str) -> Option<(u32, &str)> {
    let rest = key.strip_prefix("mode.")?;
    let (idx, field) = rest.split_once('.')?;
    let m: u32 = idx.parse().ok()?;
    MODE_FIELDS.contains(&field).then_some((m, field))
}

/// Environment variable name for a config key.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "_"))
}

fn key_from_env(name: &str) -> Option<String> {
    let rest = name.strip_prefix(ENV_PREFIX)?;
    for key in SCALAR_KEYS {
        if env_name(key) == name {
            return Some(key.to_string());
        }
    }
    let tail = rest.strip_prefix("MODE_")?;
    let (idx, field) = tail.split_once('_')?;
    let m: u32 = idx.parse().ok()?;
    let field = field.to_ascii_lowercase();
    MODE_FIELDS.contains(&field.as_str()).then(|| format!("mode.{m}.{field}"))
}

/// Key/value entries with the line they came from.
type Entries = BTreeMap<String, (usize, String)>;

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| err(line, format!("expected key = value, got '{t}'")))?;
        let key = key.trim().to_string();
        if !is_known(&key) {
            return Err(err(line, format!("unknown key '{key}'")));
        }
        if entries.contains_key(&key) {
            return Err(err(line, format!("duplicate key '{key}'")));
        }
        entries.insert(key, (line, value.trim().to_string()));
    }
    Ok(entries)
}

fn num<T: std::str::FromStr>(key: &str, (line, v): &(usize, String)) -> Result<T, ConfigError> {
    v.parse().map_err(|_| err(*line, format!("invalid value '{v}' for {key}")))
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        Self::from_entries(entries)
    }

    /// Parses config text and applies overrides from `env` (name, value) pairs.
    pub fn parse_with_env<I>(text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut entries = parse_entries(text)?;
        for (name, value) in env {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = key_from_env(&name).ok_or_else(|| err(0, format!("unknown environment override {name}")))?;
            entries.insert(key, (0, value.trim().to_string()));
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: Entries) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut mode_entries: BTreeMap<u32, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        for (key, entry) in &entries {
            let line = entry.0;
            let v = entry.1.as_str();
            if let Some((m, field)) = mode_key(key) {
                mode_entries.entry(m).or_default().insert(field.to_string(), entry.clone());
                continue;
            }
            match key.as_str() {
                "qubit.ip_na" => c.qubit.persistent_current = num(key, entry)?,
                "qubit.delta_ghz" => c.qubit.gap = num(key, entry)?,
                "flux.start" => c.flux_start = num(key, entry)?,
                "flux.stop" => c.flux_stop = num(key, entry)?,
                "flux.step" => c.flux_step = num(key, entry)?,
                "model.variant" => c.variant = ModelVariant::parse(v).map_err(|e| err(line, e.to_string()))?,
                "model.jc_variant" => c.jc_variant = ModelVariant::parse(v).map_err(|e| err(line, e.to_string()))?,
                "model.steps" => c.steps = num(key, entry)?,
                "dist.kind" => c.dist_kind = DistributionKind::parse(v).map_err(|e| err(line, e.to_string()))?,
                "dist.mean" => c.dist_mean = num(key, entry)?,
                "linewidth.qubit_ghz" => c.qubit_linewidth = num(key, entry)?,
                "spectrum.freq_start_ghz" => c.spectrum_freq_start = num(key, entry)?,
                "spectrum.freq_stop_ghz" => c.spectrum_freq_stop = num(key, entry)?,
                "spectrum.freq_step_ghz" => c.spectrum_freq_step = num(key, entry)?,
                "spectrum.n_max" => c.spectrum_n_max = num(key, entry)?,
                "transitions.from" => {
                    c.transitions_from = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                }
                "transitions.max_freq_ghz" => c.transitions_max_freq = num(key, entry)?,
                "bs.n_max" => c.bs_n_max = num(key, entry)?,
                "converge.levels" => c.converge_levels = num(key, entry)?,
                "converge.tol_ghz" => c.converge_tol = num(key, entry)?,
                "converge.start" => c.converge_start = num(key, entry)?,
                "converge.flux" => c.converge_flux = num(key, entry)?,
                "fit.free" => {
                    c.fit_free = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| FitParameter::parse(s).map_err(|e| err(line, e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "fit.curves" => c.fit_curves = num(key, entry)?,
                "fit.max_iterations" => c.fit_max_iterations = num(key, entry)?,
                "out" => c.out = if v.is_empty() { None } else { Some(v.to_string()) },
                "jobs" => c.jobs = num(key, entry)?,
                _ => return Err(err(line, format!("unknown key '{key}'"))),
            }
        }
        if !mode_entries.is_empty() {
            c.modes = mode_entries
                .into_iter()
                .map(|(m, fields)| {
                    let base = c.modes.iter().find(|x| x.params.mode_index == m);
                    mode_from_fields(m, &fields, base)
                })
                .collect::<Result<_, _>>()?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks cross-field invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.qubit.validate().map_err(|e| err(0, e.to_string()))?;
        for m in &self.modes {
            m.params.validate().map_err(|e| err(0, e.to_string()))?;
            if !(m.linewidth > 0.0) {
                return Err(err(0, format!("mode {} linewidth must be > 0", m.params.mode_index)));
            }
            if !m.drive.is_finite() {
                return Err(err(0, format!("mode {} drive weight must be finite", m.params.mode_index)));
            }
        }
        if self.modes.is_empty() {
            return Err(err(0, "at least one mode is required"));
        }
        qrabi::spectra::FluxGrid::from_range(self.flux_start, self.flux_stop, self.flux_step)
            .map_err(|e| err(0, e.to_string()))?;
        if self.jobs < 1 {
            return Err(err(0, "jobs must be >= 1"));
        }
        if self.steps < 1 {
            return Err(err(0, "model.steps must be >= 1"));
        }
        if matches!(self.jc_variant, ModelVariant::Rabi | ModelVariant::BlochSiegert) {
            return Err(err(0, "model.jc_variant must be jc_full_rwa or jc_keep_longitudinal"));
        }
        if !(self.dist_mean >= 0.0) {
            return Err(err(0, "dist.mean must be >= 0"));
        }
        if !(self.qubit_linewidth > 0.0) {
            return Err(err(0, "linewidth.qubit_ghz must be > 0"));
        }
        if !(self.converge_tol > 0.0) || self.converge_levels < 1 {
            return Err(err(0, "converge.tol_ghz must be > 0 and converge.levels >= 1"));
        }
        if self.transitions_from.is_empty() {
            return Err(err(0, "transitions.from is empty"));
        }
        self.from_labels().map_err(|e| err(0, e))?;
        if let Some(out) = &self.out {
            let parent = std::path::Path::new(out).parent().filter(|p| !p.as_os_str().is_empty());
            if parent.is_some_and(|p| !p.is_dir()) || std::path::Path::new(out).is_dir() {
                return Err(err(0, format!("output path {out} is not a writable file location")));
            }
        }
        Ok(())
    }

    pub fn mode_params(&self) -> Vec<ModeParams<f64>> {
        self.modes.iter().map(|m| m.params).collect()
    }

    pub fn drive_weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.drive).collect()
    }

    pub fn linewidths(&self) -> LinewidthConfig {
        LinewidthConfig {
            qubit: self.qubit_linewidth,
            modes: self.modes.iter().map(|m| (m.params.mode_index, m.linewidth)).collect(),
        }
    }

    pub fn label_options(&self) -> LabelOptions {
        LabelOptions { steps: self.steps, ..LabelOptions::default() }
    }

    /// Initial labels; a label with fewer photon numbers than modes is
    /// padded with zeros (`g:2` means |g, 2, 0, …⟩).
    pub fn from_labels(&self) -> Result<Vec<StateLabel>, String> {
        self.transitions_from
            .iter()
            .map(|s| {
                let mut l: StateLabel = s.parse().map_err(|e: qrabi::Error| e.to_string())?;
                if l.photons.len() > self.modes.len() {
                    return Err(format!("label {s} has more photon numbers than there are modes"));
                }
                l.photons.resize(self.modes.len(), 0);
                Ok(l)
            })
            .collect()
    }

    /// Effective configuration as text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("qubit.ip_na", self.qubit.persistent_current.to_string());
        kv("qubit.delta_ghz", self.qubit.gap.to_string());
        for m in &self.modes {
            let i = m.params.mode_index;
            kv(&format!("mode.{i}.omega_ghz"), m.params.omega_r.to_string());
            kv(&format!("mode.{i}.g_ghz"), m.params.coupling.to_string());
            kv(&format!("mode.{i}.nmax"), m.params.nmax.to_string());
            kv(&format!("mode.{i}.linewidth_ghz"), m.linewidth.to_string());
            kv(&format!("mode.{i}.drive"), m.drive.to_string());
        }
        kv("flux.start", self.flux_start.to_string());
        kv("flux.stop", self.flux_stop.to_string());
        kv("flux.step", self.flux_step.to_string());
        kv("model.variant", self.variant.name().into());
        kv("model.jc_variant", self.jc_variant.name().into());
        kv("model.steps", self.steps.to_string());
        kv("dist.kind", self.dist_kind.name().into());
        kv("dist.mean", self.dist_mean.to_string());
        kv("linewidth.qubit_ghz", self.qubit_linewidth.to_string());
        kv("spectrum.freq_start_ghz", self.spectrum_freq_start.to_string());
        kv("spectrum.freq_stop_ghz", self.spectrum_freq_stop.to_string());
        kv("spectrum.freq_step_ghz", self.spectrum_freq_step.to_string());
        kv("spectrum.n_max", self.spectrum_n_max.to_string());
        kv("transitions.from", self.transitions_from.join(","));
        kv("transitions.max_freq_ghz", self.transitions_max_freq.to_string());
        kv("bs.n_max", self.bs_n_max.to_string());
        kv("converge.levels", self.converge_levels.to_string());
        kv("converge.tol_ghz", self.converge_tol.to_string());
        kv("converge.start", self.converge_start.to_string());
        kv("converge.flux", self.converge_flux.to_string());
        kv("fit.free", self.fit_free.iter().map(|p| p.name()).collect::<Vec<_>>().join(","));
        kv("fit.curves", self.fit_curves.to_string());
        kv("fit.max_iterations", self.fit_max_iterations.to_string());
        kv("out", self.out.clone().unwrap_or_default());
        kv("jobs", self.jobs.to_string());
        s
    }
}

// Fields missing from a mode group fall back to `base` (the default mode
// with the same index), then to per-index defaults.
fn mode_from_fields(
    m: u32,
    fields: &BTreeMap<String, (usize, String)>,
    base: Option<&ModeConfig>,
) -> Result<ModeConfig, ConfigError> {
    let get = |f: &str| fields.get(f);
    let any_line = fields.values().map(|e| e.0).min().unwrap_or(0);
    let key = |f: &str| format!("mode.{m}.{f}");
    let required = |f: &str, fallback: Option<f64>| -> Result<f64, ConfigError> {
        match (get(f), fallback) {
            (Some(e), _) => num(&key(f), e),
            (None, Some(v)) => Ok(v),
            (None, None) => Err(err(any_line, format!("mode {m} needs {}", key(f)))),
        }
    };
    let params = ModeParams {
        mode_index: m,
        omega_r: required("omega_ghz", base.map(|b| b.params.omega_r))?,
        coupling: required("g_ghz", base.map(|b| b.params.coupling))?,
        nmax: match get("nmax") {
            Some(e) => num(&key("nmax"), e)?,
            None => base.map(|b| b.params.nmax).unwrap_or_else(|| default_nmax(m)),
        },
    };
    params.validate().map_err(|e| err(any_line, e.to_string()))?;
    Ok(ModeConfig {
        params,
        linewidth: match get("linewidth_ghz") {
            Some(e) => num(&key("linewidth_ghz"), e)?,
            None => base.map(|b| b.linewidth).unwrap_or(DEFAULT_MODE_LINEWIDTH),
        },
        drive: match get("drive") {
            Some(e) => num(&key("drive"), e)?,
            None => base.map(|b| b.drive).unwrap_or(1.0),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn multimode_round_trip() {
        let text = "mode.3.omega_ghz = 7.078\nmode.3.g_ghz = 0.459\nmode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0.265\n\
                    mode.5.omega_ghz = 11.789\nmode.5.g_ghz = 0.592\nmode.5.drive = 0.5\nfit.free = Ip, g3\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.modes.iter().map(|m| m.params.nmax).collect::<Vec<_>>(), vec![30, 6, 4]);
        assert_eq!(c.fit_free, vec![FitParameter::PersistentCurrent, FitParameter::Coupling(3)]);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = RunConfig::parse("# comment\nqubit.ip_na = 300\nqubit.colour = red\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = RunConfig::parse("qubit.ip_na = abc\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(RunConfig::parse("jobs = 1\njobs = 2\n").is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(RunConfig::parse("flux.start = 1\nflux.stop = 0\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("QRABI_QUBIT_IP_NA".to_string(), "350".to_string()),
            ("QRABI_MODE_1_G_GHZ".to_string(), "0.1".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let c = RunConfig::parse_with_env("qubit.ip_na = 300\n", env).unwrap();
        assert_eq!(c.qubit.persistent_current, 350.0);
        assert_eq!(c.modes[0].params.coupling, 0.1);
        assert_eq!(env_name("mode.3.nmax"), "QRABI_MODE_3_NMAX");
        let bad = vec![("QRABI_NOPE".to_string(), "1".to_string())];
        assert!(RunConfig::parse_with_env("", bad).is_err());
    }

    #[test]
    fn labels_are_padded() {
        let c = RunConfig::parse(
            "mode.1.omega_ghz = 2.36\nmode.1.g_ghz = 0.265\nmode.3.omega_ghz = 7.078\nmode.3.g_ghz = 0.459\ntransitions.from = g:0, g:2\n",
        )
        .unwrap();
        let l = c.from_labels().unwrap();
        assert_eq!(l[1].to_string(), "g:2:0");
    }
}
