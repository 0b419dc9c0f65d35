//! Experiment configuration file.
//!
//! ```toml
//! name = "DA2"
//! mode = "da"                  # "free_run" or "da"
//! bias_correction = true       # requires bias_file
//! scenario = "scenario/scenario.toml"
//! observations = "obs/observations.toml"
//! bias_file = "bias.csv"
//! seed = 1
//!
//! [enkf]                       # only in da mode
//! n_e = 24
//! tau = 0.15
//! window = 43200.0             # seconds
//! t_shift = 21600.0
//! spinup = 10800.0
//! lambda1 = 0.3
//! lambda2 = 0.7
//! forecast_leads = [21600.0, 43200.0, 64800.0, 86400.0]
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use floodlab::uncertainty::{ControlPrior, N_CONTROL};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FreeRun,
    Da,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnkfSection {
    #[serde(default = "default_n_e")]
    pub n_e: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_t_shift")]
    pub t_shift: f64,
    #[serde(default = "default_spinup")]
    pub spinup: f64,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default = "default_leads")]
    pub forecast_leads: Vec<f64>,
    /// Stop after this many cycles.
    #[serde(default)]
    pub max_cycles: Option<usize>,
}

fn default_n_e() -> usize {
    24
}
fn default_tau() -> f64 {
    0.15
}
fn default_window() -> f64 {
    43_200.0
}
fn default_t_shift() -> f64 {
    21_600.0
}
fn default_spinup() -> f64 {
    10_800.0
}
fn default_lambda1() -> f64 {
    0.3
}
fn default_lambda2() -> f64 {
    0.7
}
fn default_leads() -> Vec<f64> {
    vec![21_600.0, 43_200.0, 64_800.0, 86_400.0]
}

impl Default for EnkfSection {
    fn default() -> Self {
        Self {
            n_e: default_n_e(),
            tau: default_tau(),
            window: default_window(),
            t_shift: default_t_shift(),
            spinup: default_spinup(),
            lambda1: default_lambda1(),
            lambda2: default_lambda2(),
            forecast_leads: default_leads(),
            max_cycles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub mean: [f64; N_CONTROL],
    pub sigma: [f64; N_CONTROL],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub bias_correction: bool,
    pub scenario: PathBuf,
    pub observations: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Station scores use observations in `[from, to]` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enkf: Option<EnkfSection>,
    /// Ignored by the echo in the run manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parse, resolve relative paths against the file's directory and validate.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        cfg.scenario = resolve(&cfg.scenario);
        cfg.observations = resolve(&cfg.observations);
        cfg.bias_file = cfg.bias_file.as_ref().map(resolve);
        cfg.output = cfg.output.as_ref().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(field("name", "must be a non-empty plain name"));
        }
        match (self.bias_correction, &self.bias_file) {
            (true, None) => return Err(field("bias_file", "required when bias_correction = true")),
            (false, Some(_)) => return Err(field("bias_file", "given but bias_correction = false")),
            _ => {}
        }
        if let Some([a, b]) = self.score_window {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(field("score_window", format!("[{a}, {b}] is not an interval")));
            }
        }
        if self.prior.is_some() {
            self.prior().validate().map_err(|e| field("prior", e))?;
        }
        match (self.mode, &self.enkf) {
            (Mode::FreeRun, Some(_)) => Err(field("enkf", "free_run mode takes no [enkf] section (n_e = 1, no tau)")),
            (Mode::FreeRun, None) => Ok(()),
            (Mode::Da, None) => Err(field("enkf", "da mode needs an [enkf] section")),
            (Mode::Da, Some(e)) => e.validate(),
        }
    }

    pub fn prior(&self) -> ControlPrior {
        match &self.prior {
            Some(p) => ControlPrior { mean: floodlab::ControlVector::from_array(p.mean), sigma: p.sigma },
            None => ControlPrior::default(),
        }
    }

    /// The config as echoed in a run manifest: absolute inputs, no output location.
    pub fn echo(&self) -> Self {
        Self { output: None, ..self.clone() }
    }
}

impl EnkfSection {
    fn validate(&self) -> Result<(), CliError> {
        if self.n_e < 2 {
            return Err(field("enkf.n_e", format!("{} < 2", self.n_e)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(field("enkf.tau", format!("{} must be positive", self.tau)));
        }
        if !(self.window > 0.0) {
            return Err(field("enkf.window", "must be positive"));
        }
        if !(self.t_shift > 0.0 && self.t_shift <= self.window) {
            return Err(field("enkf.t_shift", "must lie in (0, window]"));
        }
        if !(self.spinup >= 0.0 && self.spinup <= self.t_shift) {
            return Err(field("enkf.spinup", "must lie in [0, t_shift]"));
        }
        for (name, l) in [("enkf.lambda1", self.lambda1), ("enkf.lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(field(name, format!("{l} must be >= 0")));
            }
        }
        if self.forecast_leads.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(field("enkf.forecast_leads", "leads must be >= 0"));
        }
        if self.max_cycles == Some(0) {
            return Err(field("enkf.max_cycles", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DA: &str = r#"
name = "DA2"
mode = "da"
bias_correction = true
bias_file = "bias.csv"
scenario = "s/scenario.toml"
observations = "o/observations.toml"
seed = 4
[enkf]
n_e = 24
"#;

    #[test]
    fn defaults_fill_the_enkf_section() {
        let cfg = ExperimentConfig::from_toml(DA).unwrap();
        cfg.validate().unwrap();
        let e = cfg.enkf.unwrap();
        assert_eq!((e.tau, e.lambda1, e.lambda2), (0.15, 0.3, 0.7));
        assert_eq!(e.forecast_leads.len(), 4);
    }

    #[test]
    fn field_level_errors() {
        let bad = DA.replace("n_e = 24", "n_e = 1");
        let err = ExperimentConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("enkf.n_e"), "{err}");

        let fr = "name='FR'\nmode='free_run'\nscenario='a'\nobservations='b'\n[enkf]\ntau=0.1\n";
        let err = ExperimentConfig::from_toml(fr).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("enkf"), "{err}");

        let no_bias = DA.replace("bias_file = \"bias.csv\"\n", "");
        assert!(ExperimentConfig::from_toml(&no_bias).unwrap().validate().is_err());

        assert!(ExperimentConfig::from_toml(&DA.replace("seed = 4", "sed = 4")).is_err());
    }

    #[test]
    fn echo_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, DA).unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert!(cfg.scenario.starts_with(dir.path()));
        let text = toml::to_string(&cfg.echo()).unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back, cfg.echo());
    }
}
