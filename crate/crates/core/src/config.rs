//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [run]
//! mode = simulate
//! seed = 7
//!
//! [model]
//! rho = 0.5
//! L = 16
//! ```
//!
//! Sections: `[run]`, `[model]`, `[integrator]`, `[simulate]`, `[sweep]`,
//! `[hydro]`, `[rg]`, `[analyze]`. Every key is optional except `mode`;
//! unknown sections and keys are rejected. [`RunConfig::to_text`] writes the
//! canonical form with every key spelled out.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::{DynamicsError, Inertia, IntegratorConfig, MeanFieldScope, NoiseModel};
use crate::params::{Dimension, ModelParams, ParamError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    Duplicate {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: key `{key}` appears before any section header")]
    NoSection { line: usize, key: String },
    #[error("missing required key `{key}` in [{section}]")]
    Missing { section: String, key: String },
    #[error("line {line}: key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{}key `{key}`: {reason}", line_prefix(*.line))]
    Invalid {
        /// 0 when the offending value came from a default.
        line: usize,
        key: String,
        reason: String,
    },
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Sweep,
    Hydro,
    Rg,
    Analyze,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Hydro => "hydro",
            Mode::Rg => "rg",
            Mode::Analyze => "analyze",
        }
    }
}

impl FromStr for Mode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "sweep" => Mode::Sweep,
            "hydro" => Mode::Hydro,
            "rg" => Mode::Rg,
            "analyze" => Mode::Analyze,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HydroSystem {
    Full,
    Goldstone,
}

/// Particle runs (also the per-point settings of a sweep).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateSettings {
    pub n_steps: u64,
    /// Defaults to half of `n_steps`.
    pub transient: u64,
    /// Write a snapshot every this many steps; 0 writes only the final state.
    pub snapshot_every: u64,
    /// Record a band report every this many post-transient steps; 0 disables.
    pub band_every: u64,
    pub n_bins: usize,
    pub threshold_factor: f64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            transient: 500,
            snapshot_every: 0,
            band_every: 0,
            n_bins: 64,
            threshold_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub gamma_s_inv: Vec<f64>,
    pub xi: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            gamma_s_inv: vec![0.2, 1.0, 5.0],
            xi: vec![0.1, 0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroSettings {
    pub system: HydroSystem,
    pub grid: [usize; 3],
    pub dx: f64,
    pub dt: f64,
    pub n_steps: u64,
    pub xi_align: f64,
    pub a_i: f64,
    pub lambda_cut: f64,
    pub noise: bool,
    /// Amplitude of the seeded random perturbation of the initial fields.
    pub perturbation: f64,
    pub snapshot_every: u64,
    /// Wave indices probed by the Goldstone dispersion measurement.
    pub modes: Vec<usize>,
}

impl Default for HydroSettings {
    fn default() -> Self {
        Self {
            system: HydroSystem::Full,
            grid: [16, 16, 16],
            dx: 1.0,
            dt: 0.01,
            n_steps: 1000,
            xi_align: 1.0,
            a_i: 1.0,
            lambda_cut: 1.0,
            noise: false,
            perturbation: 0.01,
            snapshot_every: 0,
            modes: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgSettings {
    pub f31: f64,
    pub lambda_bar_sq: f64,
    pub l_max: f64,
    pub dl: f64,
}

impl Default for RgSettings {
    fn default() -> Self {
        Self {
            f31: 1.0,
            lambda_bar_sq: 0.1,
            l_max: 30.0,
            dl: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSettings {
    pub snapshot: Option<PathBuf>,
    pub n_bins: usize,
    pub threshold_factor: f64,
    pub correlation_bins: usize,
    pub r_max: f64,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        Self {
            snapshot: None,
            n_bins: 64,
            threshold_factor: 1.5,
            correlation_bins: 32,
            r_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output: PathBuf,
    pub model: ModelParams,
    pub box_length: f64,
    /// `integrator.seed` always equals `seed`.
    pub integrator: IntegratorConfig,
    pub simulate: SimulateSettings,
    pub sweep: SweepSettings,
    pub hydro: HydroSettings,
    pub rg: RgSettings,
    pub analyze: AnalyzeSettings,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            seed: 1,
            output: PathBuf::from("qvm-out"),
            model: ModelParams::default(),
            box_length: 32.0,
            integrator: IntegratorConfig::default(),
            simulate: SimulateSettings::default(),
            sweep: SweepSettings::default(),
            hydro: HydroSettings::default(),
            rg: RgSettings::default(),
            analyze: AnalyzeSettings::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.integrator.seed = seed;
        self
    }

    /// Checks everything [`parse_config`] checks after reading values.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let at = |_: &str| 0;
        validate_with_lines(self, &at)
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let m = &self.model;
        let i = &self.integrator;
        let s = &self.simulate;
        let h = &self.hydro;
        let r = &self.rg;
        let a = &self.analyze;
        let _ = writeln!(o, "[run]\nmode = {}\nseed = {}\noutput = {}", self.mode, self.seed, self.output.display());
        let _ = writeln!(
            o,
            "\n[model]\nm = {}\nu = {}\nJ = {}\ngamma = {}\ngamma_s = {}\nbeta = {}\nrho = {}\nr_c = {}\nxi_noise = {}\nkappa = {}\nd = {}\nL = {}",
            m.mass, m.speed, m.coupling, m.friction, m.spin_relaxation, m.beta, m.density,
            m.interaction_radius, m.noise_amplitude, m.kappa, m.dims, self.box_length
        );
        let _ = writeln!(
            o,
            "\n[integrator]\ndt = {}\nnoise_model = {}\ntranslational_noise = {}\nmean_field = {}\ninertia = {}",
            i.dt,
            noise_model_name(i.noise_model),
            i.translational_noise,
            mean_field_name(i.mean_field),
            inertia_name(i.inertia)
        );
        let _ = writeln!(
            o,
            "\n[simulate]\nn_steps = {}\ntransient = {}\nsnapshot_every = {}\nband_every = {}\nn_bins = {}\nthreshold_factor = {}",
            s.n_steps, s.transient, s.snapshot_every, s.band_every, s.n_bins, s.threshold_factor
        );
        let _ = writeln!(
            o,
            "\n[sweep]\ngamma_s_inv = {}\nxi = {}",
            join(&self.sweep.gamma_s_inv),
            join(&self.sweep.xi)
        );
        let _ = writeln!(
            o,
            "\n[hydro]\nsystem = {}\ngrid = {}\ndx = {}\ndt = {}\nn_steps = {}\nxi_align = {}\nA_I = {}\nlambda_cut = {}\nnoise = {}\nperturbation = {}\nsnapshot_every = {}\nmodes = {}",
            match h.system {
                HydroSystem::Full => "full",
                HydroSystem::Goldstone => "goldstone",
            },
            join(&h.grid),
            h.dx,
            h.dt,
            h.n_steps,
            h.xi_align,
            h.a_i,
            h.lambda_cut,
            h.noise,
            h.perturbation,
            h.snapshot_every,
            join(&h.modes)
        );
        let _ = writeln!(
            o,
            "\n[rg]\nF31 = {}\nlambda_bar_sq = {}\nl_max = {}\ndl = {}",
            r.f31, r.lambda_bar_sq, r.l_max, r.dl
        );
        let _ = write!(o, "\n[analyze]\n");
        if let Some(p) = &a.snapshot {
            let _ = writeln!(o, "snapshot = {}", p.display());
        }
        let _ = writeln!(
            o,
            "n_bins = {}\nthreshold_factor = {}\ncorrelation_bins = {}\nr_max = {}",
            a.n_bins, a.threshold_factor, a.correlation_bins, a.r_max
        );
        o
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn noise_model_name(n: NoiseModel) -> &'static str {
    match n {
        NoiseModel::GaussianWhite => "gaussian-white",
        NoiseModel::Vectorial => "vectorial",
    }
}

fn mean_field_name(m: MeanFieldScope) -> &'static str {
    match m {
        MeanFieldScope::Local => "local",
        MeanFieldScope::Global => "global",
    }
}

fn inertia_name(i: Inertia) -> &'static str {
    match i {
        Inertia::Overdamped => "overdamped",
        Inertia::Inertial => "inertial",
    }
}

const SECTIONS: [&str; 8] = ["run", "model", "integrator", "simulate", "sweep", "hydro", "rg", "analyze"];

struct Entry {
    value: String,
    line: usize,
}

/// Raw `(section, key) -> value` table; keys are removed as they are consumed.
struct Table {
    entries: BTreeMap<(String, String), Entry>,
    lines: BTreeMap<String, usize>,
}

impl Table {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::UnknownSection {
                        line,
                        section: name.to_string(),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: content.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            }
            let Some(sec) = &section else {
                return Err(ConfigError::NoSection {
                    line,
                    key: key.to_string(),
                });
            };
            let slot = (sec.clone(), key.to_string());
            if entries.contains_key(&slot) {
                return Err(ConfigError::Duplicate {
                    line,
                    section: sec.clone(),
                    key: key.to_string(),
                });
            }
            entries.insert(
                slot,
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            entries,
            lines: BTreeMap::new(),
        })
    }

    fn take_raw(&mut self, section: &str, key: &str) -> Option<Entry> {
        let e = self.entries.remove(&(section.to_string(), key.to_string()))?;
        self.lines.insert(key.to_string(), e.line);
        Some(e)
    }

    fn get<T: FromStr>(
        &mut self,
        section: &str,
        key: &str,
        expected: &'static str,
        slot: &mut T,
    ) -> Result<(), ConfigError> {
        if let Some(e) = self.take_raw(section, key) {
            *slot = e.value.parse().map_err(|_| ConfigError::Type {
                line: e.line,
                key: key.to_string(),
                value: e.value.clone(),
                expected,
            })?;
        }
        Ok(())
    }

    fn get_with<T>(
        &mut self,
        section: &str,
        key: &str,
        expected: &'static str,
        slot: &mut T,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(), ConfigError> {
        if let Some(e) = self.take_raw(section, key) {
            *slot = parse(&e.value).ok_or_else(|| ConfigError::Type {
                line: e.line,
                key: key.to_string(),
                value: e.value.clone(),
                expected,
            })?;
        }
        Ok(())
    }

    fn get_list<T: FromStr>(
        &mut self,
        section: &str,
        key: &str,
        expected: &'static str,
        slot: &mut Vec<T>,
    ) -> Result<(), ConfigError> {
        self.get_with(section, key, expected, slot, |v| {
            v.split(',').map(|x| x.trim().parse().ok()).collect()
        })
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut t = Table::parse(text)?;
    let mode_entry = t.take_raw("run", "mode").ok_or_else(|| ConfigError::Missing {
        section: "run".into(),
        key: "mode".into(),
    })?;
    let mode: Mode = mode_entry.value.parse().map_err(|_| ConfigError::Type {
        line: mode_entry.line,
        key: "mode".into(),
        value: mode_entry.value.clone(),
        expected: "one of simulate, sweep, hydro, rg, analyze",
    })?;
    let mut c = RunConfig::new(mode);

    t.get("run", "seed", "unsigned 64-bit integer", &mut c.seed)?;
    t.get("run", "output", "path", &mut c.output)?;
    c.integrator.seed = c.seed;

    const F: &str = "number";
    const U: &str = "non-negative integer";
    const B: &str = "true or false";
    let m = &mut c.model;
    t.get("model", "m", F, &mut m.mass)?;
    t.get("model", "u", F, &mut m.speed)?;
    t.get("model", "J", F, &mut m.coupling)?;
    t.get("model", "gamma", F, &mut m.friction)?;
    t.get("model", "gamma_s", F, &mut m.spin_relaxation)?;
    t.get("model", "beta", F, &mut m.beta)?;
    t.get("model", "rho", F, &mut m.density)?;
    t.get("model", "r_c", F, &mut m.interaction_radius)?;
    t.get("model", "xi_noise", F, &mut m.noise_amplitude)?;
    t.get("model", "kappa", F, &mut m.kappa)?;
    t.get_with("model", "d", "2 or 3", &mut m.dims, |v| {
        v.parse().ok().and_then(Dimension::from_usize)
    })?;
    t.get("model", "L", F, &mut c.box_length)?;

    let i = &mut c.integrator;
    t.get("integrator", "dt", F, &mut i.dt)?;
    t.get_with("integrator", "noise_model", "vectorial or gaussian-white", &mut i.noise_model, |v| match v {
        "vectorial" => Some(NoiseModel::Vectorial),
        "gaussian-white" => Some(NoiseModel::GaussianWhite),
        _ => None,
    })?;
    t.get("integrator", "translational_noise", B, &mut i.translational_noise)?;
    t.get_with("integrator", "mean_field", "local or global", &mut i.mean_field, |v| match v {
        "local" => Some(MeanFieldScope::Local),
        "global" => Some(MeanFieldScope::Global),
        _ => None,
    })?;
    t.get_with("integrator", "inertia", "overdamped or inertial", &mut i.inertia, |v| match v {
        "overdamped" => Some(Inertia::Overdamped),
        "inertial" => Some(Inertia::Inertial),
        _ => None,
    })?;

    let s = &mut c.simulate;
    t.get("simulate", "n_steps", U, &mut s.n_steps)?;
    s.transient = s.n_steps / 2;
    t.get("simulate", "transient", U, &mut s.transient)?;
    t.get("simulate", "snapshot_every", U, &mut s.snapshot_every)?;
    t.get("simulate", "band_every", U, &mut s.band_every)?;
    t.get("simulate", "n_bins", U, &mut s.n_bins)?;
    t.get("simulate", "threshold_factor", F, &mut s.threshold_factor)?;

    t.get_list("sweep", "gamma_s_inv", "comma-separated numbers", &mut c.sweep.gamma_s_inv)?;
    t.get_list("sweep", "xi", "comma-separated numbers", &mut c.sweep.xi)?;

    let h = &mut c.hydro;
    t.get_with("hydro", "system", "full or goldstone", &mut h.system, |v| match v {
        "full" => Some(HydroSystem::Full),
        "goldstone" => Some(HydroSystem::Goldstone),
        _ => None,
    })?;
    t.get_with("hydro", "grid", "three comma-separated integers", &mut h.grid, |v| {
        let xs: Vec<usize> = v.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
        xs.try_into().ok()
    })?;
    t.get("hydro", "dx", F, &mut h.dx)?;
    t.get("hydro", "dt", F, &mut h.dt)?;
    t.get("hydro", "n_steps", U, &mut h.n_steps)?;
    t.get("hydro", "xi_align", F, &mut h.xi_align)?;
    t.get("hydro", "A_I", F, &mut h.a_i)?;
    t.get("hydro", "lambda_cut", F, &mut h.lambda_cut)?;
    t.get("hydro", "noise", B, &mut h.noise)?;
    t.get("hydro", "perturbation", F, &mut h.perturbation)?;
    t.get("hydro", "snapshot_every", U, &mut h.snapshot_every)?;
    t.get_list("hydro", "modes", "comma-separated integers", &mut h.modes)?;

    let r = &mut c.rg;
    t.get("rg", "F31", F, &mut r.f31)?;
    t.get("rg", "lambda_bar_sq", F, &mut r.lambda_bar_sq)?;
    t.get("rg", "l_max", F, &mut r.l_max)?;
    t.get("rg", "dl", F, &mut r.dl)?;

    let a = &mut c.analyze;
    let mut snapshot = PathBuf::new();
    if t.entries.contains_key(&("analyze".to_string(), "snapshot".to_string())) {
        t.get("analyze", "snapshot", "path", &mut snapshot)?;
        a.snapshot = Some(snapshot);
    }
    t.get("analyze", "n_bins", U, &mut a.n_bins)?;
    t.get("analyze", "threshold_factor", F, &mut a.threshold_factor)?;
    t.get("analyze", "correlation_bins", U, &mut a.correlation_bins)?;
    t.get("analyze", "r_max", F, &mut a.r_max)?;

    if let Some(((section, key), e)) = t.entries.iter().next() {
        return Err(ConfigError::UnknownKey {
            line: e.line,
            section: section.clone(),
            key: key.clone(),
        });
    }
    let lines = std::mem::take(&mut t.lines);
    validate_with_lines(&c, &|k| lines.get(k).copied().unwrap_or(0))?;
    Ok(c)
}

fn validate_with_lines(c: &RunConfig, line_of: &dyn Fn(&str) -> usize) -> Result<(), ConfigError> {
    let invalid = |key: &str, reason: String| ConfigError::Invalid {
        line: line_of(key),
        key: key.to_string(),
        reason,
    };
    c.model.validate().map_err(|e| match e {
        ParamError::Invalid { name, reason } => invalid(name, reason),
        other => invalid("J", other.to_string()),
    })?;
    if !(c.box_length > 0.0 && c.box_length.is_finite()) {
        return Err(invalid("L", format!("must be positive, got {}", c.box_length)));
    }
    if c.box_length < c.model.interaction_radius {
        return Err(invalid("L", "must be at least r_c".into()));
    }
    c.integrator.validate(&c.model).map_err(|e| match e {
        DynamicsError::Config { name, reason } => invalid(name, reason),
        other => invalid("dt", other.to_string()),
    })?;
    let s = &c.simulate;
    if s.transient > s.n_steps {
        return Err(invalid(
            "transient",
            format!("must not exceed n_steps = {}", s.n_steps),
        ));
    }
    if s.n_bins < 3 {
        return Err(invalid("n_bins", "need at least 3 bins".into()));
    }
    if !(s.threshold_factor > 1.0) {
        return Err(invalid("threshold_factor", "must exceed 1".into()));
    }
    if c.mode == Mode::Sweep {
        if c.sweep.gamma_s_inv.is_empty() || c.sweep.gamma_s_inv.iter().any(|&g| !(g > 0.0)) {
            return Err(invalid("gamma_s_inv", "must be a non-empty list of positive values".into()));
        }
        if c.sweep.xi.is_empty() || c.sweep.xi.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("xi", "must be a non-empty list of non-negative values".into()));
        }
        for &g in &c.sweep.gamma_s_inv {
            if c.integrator.dt / g >= 1.0 {
                return Err(invalid("gamma_s_inv", format!("dt / {g} must be below 1")));
            }
        }
    }
    let h = &c.hydro;
    if h.grid.contains(&0) {
        return Err(invalid("grid", "every dimension must be positive".into()));
    }
    for (key, v) in [("dx", h.dx), ("dt", h.dt), ("lambda_cut", h.lambda_cut)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(key, format!("must be positive, got {v}")));
        }
    }
    if !h.a_i.is_finite() || !h.xi_align.is_finite() || !h.perturbation.is_finite() {
        return Err(invalid("hydro", "coefficients must be finite".into()));
    }
    if h.modes.iter().any(|&k| k == 0 || 2 * k > h.grid[1]) {
        return Err(invalid("modes", "must lie in 1..=grid[1]/2".into()));
    }
    let r = &c.rg;
    if !(r.f31 > 0.0) {
        return Err(invalid("F31", format!("must be positive, got {}", r.f31)));
    }
    if !(r.lambda_bar_sq >= 0.0) {
        return Err(invalid("lambda_bar_sq", "must be non-negative".into()));
    }
    if !(r.dl > 0.0) || !(r.l_max >= 0.0) {
        return Err(invalid("dl", "need dl > 0 and l_max >= 0".into()));
    }
    let a = &c.analyze;
    if c.mode == Mode::Analyze && a.snapshot.is_none() {
        return Err(ConfigError::Missing {
            section: "analyze".into(),
            key: "snapshot".into(),
        });
    }
    if a.n_bins < 3 || a.correlation_bins == 0 || !(a.r_max > 0.0) || !(a.threshold_factor > 1.0) {
        return Err(invalid(
            "analyze",
            "need n_bins >= 3, correlation_bins >= 1, r_max > 0, threshold_factor > 1".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_section_gives_defaults() {
        let c = parse_config("[run]\nmode = simulate\n[model]\n").unwrap();
        assert_eq!(c.model.density, 0.5);
        assert_eq!(c.model.speed, 0.5);
        assert_eq!(c.model.interaction_radius, 1.0);
        assert_eq!(c.box_length, 32.0);
    }

    #[test]
    fn negative_density_names_key_and_line() {
        let err = parse_config("[run]\nmode = simulate\n[model]\nrho = -1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rho"), "{msg}");
        assert!(msg.contains("positive"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("[run]\nmode = rg\n[rg]\nfoo = 1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 4,
                section: "rg".into(),
                key: "foo".into()
            }
        );
    }

    #[test]
    fn missing_mode_and_bad_types() {
        assert!(matches!(parse_config("[run]\nseed = 3\n"), Err(ConfigError::Missing { .. })));
        let err = parse_config("[run]\nmode = rg\n[model]\nL = big\n").unwrap_err();
        assert!(matches!(err, ConfigError::Type { line: 4, .. }));
        assert!(matches!(
            parse_config("[run]\nmode = rg\n[nope]\n"),
            Err(ConfigError::UnknownSection { line: 3, .. })
        ));
        assert!(matches!(
            parse_config("[run]\nmode = rg\nmode = sweep\n"),
            Err(ConfigError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn comments_and_lists() {
        let c = parse_config(
            "# header\n[run]\nmode = sweep # trailing\n[sweep]\ngamma_s_inv = 0.2, 5\nxi = 0.1,1.5\n",
        )
        .unwrap();
        assert_eq!(c.sweep.gamma_s_inv, vec![0.2, 5.0]);
        assert_eq!(c.sweep.xi, vec![0.1, 1.5]);
    }

    #[test]
    fn serialization_round_trip() {
        let text = "[run]\nmode = hydro\nseed = 99\n[model]\nrho = 0.25\nd = 2\n[hydro]\nsystem = goldstone\ngrid = 32, 32, 1\nmodes = 1, 4\n[analyze]\nsnapshot = a/b.qvm\n";
        let c = parse_config(text).unwrap();
        let canonical = c.to_text();
        let again = parse_config(&canonical).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), canonical);
    }

    #[test]
    fn transient_defaults_to_half_the_run() {
        let c = parse_config("[run]\nmode = simulate\n[simulate]\nn_steps = 300\n").unwrap();
        assert_eq!(c.simulate.transient, 150);
        let c = parse_config("[run]\nmode = simulate\n[simulate]\nn_steps = 300\ntransient = 0\n").unwrap();
        assert_eq!(c.simulate.transient, 0);
    }

    #[test]
    fn seed_propagates_to_integrator() {
        let c = parse_config("[run]\nmode = simulate\nseed = 42\n").unwrap();
        assert_eq!(c.integrator.seed, 42);
    }

    #[test]
    fn analyze_requires_snapshot() {
        let err = parse_config("[run]\nmode = analyze\n").unwrap_err();
        assert!(err.to_string().contains("snapshot"));
    }
}
