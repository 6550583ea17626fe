//! Scenario documents. One TOML file carries every section; each subcommand
//! reads the sections it needs and rejects the run when one is missing.

use std::path::Path;

use num_complex::Complex64;
use ringlab_core::paramap::{InversionMode, LatticeModel, ParamBox, ParameterPoint};
use ringlab_core::signal::{HarmonicTerm, NoiseSpec, ObservationSetup, TailSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub lattice: Option<LatticeModel>,
    pub truth: Option<ParameterPoint>,
    pub modes: Option<ModesConfig>,
    #[serde(default)]
    pub tail: TailSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub contamination: Option<Contamination>,
    pub observation: Option<ObservationSetup>,
    pub window: Option<WindowConfig>,
    pub inversion: Option<InversionConfig>,
    pub sweep: Option<SweepConfig>,
    pub extract: Option<ExtractConfig>,
    pub prony: Option<PronyConfig>,
    pub band: Option<BandConfig>,
    pub pseudospectrum: Option<PseudoConfig>,
    pub window_check: Option<WindowCheckConfig>,
}

/// Amplitudes of the lattice modes placed in each sector signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    #[serde(default = "unit")]
    pub amp_plus: Complex64,
    #[serde(default = "unit")]
    pub amp_minus: Complex64,
    /// Amplitude of every lower layer `j < n` in both sectors.
    #[serde(default)]
    pub lower_amp: Complex64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self { amp_plus: unit(), amp_minus: unit(), lower_amp: Complex64::new(0.0, 0.0) }
    }
}

fn unit() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Like the core noise spec, with the LCG hold defaulting to the grid step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Harmonic { terms: Vec<HarmonicTerm> },
    Lcg { seed: u64, amplitude: f64, hold: Option<f64> },
}

impl NoiseConfig {
    pub fn to_spec(&self, dt: f64) -> NoiseSpec {
        match self {
            NoiseConfig::None => NoiseSpec::None,
            NoiseConfig::Harmonic { terms } => NoiseSpec::Harmonic { terms: terms.clone() },
            NoiseConfig::Lcg { seed, amplitude, hold } => {
                NoiseSpec::Lcg { seed: *seed, amplitude: *amplitude, hold: hold.unwrap_or(dt) }
            }
        }
    }

    /// Rescales so that `sup |eta|` becomes `amp`.
    pub fn with_amplitude(&self, amp: f64) -> Result<Self, CliError> {
        match self {
            NoiseConfig::None => Err(CliError::Config("noise_amp sweep needs a noise section".into())),
            NoiseConfig::Harmonic { terms } => {
                let total: f64 = terms.iter().map(|h| h.c.abs()).sum();
                if total == 0.0 {
                    return Err(CliError::Config("harmonic noise has zero amplitude".into()));
                }
                let terms = terms.iter().map(|h| HarmonicTerm { c: h.c * amp / total, ..*h }).collect();
                Ok(NoiseConfig::Harmonic { terms })
            }
            NoiseConfig::Lcg { seed, hold, .. } => Ok(NoiseConfig::Lcg { seed: *seed, amplitude: amp, hold: *hold }),
        }
    }
}

/// A co-moving perturbation `rel_amp * a * e^{-i (omega + offset) t}` added to
/// each sector signal. Its relative size does not depend on `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contamination {
    pub offset: Complex64,
    pub rel_amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowPath {
    #[default]
    Modal,
    Fd,
}

/// Where window nodes and branch priors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    /// The true poles.
    #[default]
    Exact,
    /// The lattice pseudopoles, which differ from the true poles by `lattice.pole_offset`.
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    #[serde(default)]
    pub path: WindowPath,
    /// Order of the zero at the origin; defaults to `n + 2`.
    pub m0: Option<u32>,
    #[serde(default)]
    pub prior: PriorSource,
    #[serde(default = "default_stencil")]
    pub stencil_order: usize,
}

fn default_stencil() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    #[serde(default = "default_mode")]
    pub mode: InversionMode,
    #[serde(rename = "box")]
    pub bounds: ParamBox,
    /// Newton start; the true point when absent.
    pub guess: Option<ParameterPoint>,
    #[serde(default = "default_newton_tol")]
    pub tol: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
}

fn default_mode() -> InversionMode {
    InversionMode::TwoParam
}

fn default_newton_tol() -> f64 {
    1e-12
}

fn default_grid_n() -> usize {
    9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    T0,
    T,
    Delta,
    #[serde(rename = "ell")]
    Ell,
    #[serde(rename = "noise_amp")]
    NoiseAmp,
    /// Modulus of the contamination offset.
    #[serde(rename = "separation")]
    Separation,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::T0 => "T0",
            SweepAxis::T => "T",
            SweepAxis::Delta => "Delta",
            SweepAxis::Ell => "ell",
            SweepAxis::NoiseAmp => "noise_amp",
            SweepAxis::Separation => "separation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub freq: Complex64,
    pub amp: Complex64,
}

/// Direct one-mode extraction: the first mode is the target, the rest of
/// the signal (other modes, tail, noise) counts as residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub modes: Vec<ModeSpec>,
    /// Branch prior; the target frequency when absent.
    pub prior: Option<Complex64>,
    pub c_sep: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PronyCase {
    /// Four samples `y0..y3`, or generated from `amplitudes` and `nodes`.
    pub samples: Option<[Complex64; 4]>,
    pub amplitudes: Option<[Complex64; 2]>,
    pub nodes: Option<[Complex64; 2]>,
    pub priors: Option<[Complex64; 2]>,
    /// Perturbation size for the conditioning report (generated cases only).
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PronyConfig {
    pub cases: Vec<PronyCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleSpec {
    pub omega: Complex64,
    /// `laurent[q-1]` multiplies `(w - omega)^{-q}`; each matrix is a list of rows.
    pub laurent: Vec<Vec<Vec<Complex64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub k: u32,
    #[serde(default)]
    pub beta: f64,
    pub payload: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowNodes {
    pub nodes: Vec<Complex64>,
    pub target: usize,
    pub m0: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub dim: usize,
    pub poles: Vec<PoleSpec>,
    #[serde(default)]
    pub hol: Vec<Vec<Vec<Complex64>>>,
    pub forcing: ForcingConfig,
    pub window: Option<WindowNodes>,
    pub nu1: f64,
    pub nu2: f64,
    pub times: Vec<f64>,
    #[serde(default = "default_band_tol")]
    pub tol: f64,
    pub sigma_max: Option<f64>,
    /// Threshold on `|difference - residue_sum|`.
    #[serde(default = "default_mismatch_tol")]
    pub mismatch_tol: f64,
    /// Points per side of the emitted sigma grid (0 disables it).
    #[serde(default)]
    pub plot_points: usize,
}

fn default_band_tol() -> f64 {
    1e-9
}

fn default_mismatch_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalWindow {
    pub center: Complex64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoConfig {
    pub poles: Vec<Complex64>,
    pub e_plus: f64,
    pub e_minus: f64,
    #[serde(default)]
    pub hol_bound: f64,
    pub eps: Vec<f64>,
    #[serde(default = "default_pseudo_n")]
    pub grid_n: usize,
    /// One window per pole, half-width `2 C eps`.
    #[serde(default = "yes")]
    pub zoom: bool,
    pub global: Option<GlobalWindow>,
}

fn default_pseudo_n() -> usize {
    400
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowCheckConfig {
    pub nodes: Vec<Complex64>,
    pub target: usize,
    pub m0: Option<u32>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Perturbation radius as a fraction of `d_sharp`.
    #[serde(default = "default_delta_frac")]
    pub delta_frac: f64,
    #[serde(default)]
    pub seed: u64,
    /// Stencil orders for the FD-versus-modal convergence check.
    #[serde(default)]
    pub fd_orders: Vec<usize>,
}

fn default_draws() -> usize {
    200
}

fn default_delta_frac() -> f64 {
    0.125
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn observation(&self) -> Result<ObservationSetup, CliError> {
        let obs = self.observation.ok_or_else(|| missing("observation"))?;
        obs.validate()?;
        Ok(obs)
    }

    /// Physical checks that do not depend on the subcommand.
    pub fn validate_common(&self) -> Result<(), CliError> {
        if let Some(obs) = &self.observation {
            obs.validate()?;
            if obs.t_len <= 3.0 * obs.delta {
                return Err(CliError::Config(format!(
                    "T={} must exceed 3 Delta={} for the energy bounds",
                    obs.t_len,
                    3.0 * obs.delta
                )));
            }
        }
        if self.tail.c_tail < 0.0 || self.tail.leak < 0.0 || self.tail.nu < 0.0 {
            return Err(CliError::Config("tail constants must be non-negative".into()));
        }
        if let Some(l) = &self.lattice {
            l.validate()?;
        }
        if let Some(p) = &self.truth {
            p.validate()?;
        }
        if let Some(inv) = &self.inversion {
            inv.bounds.validate()?;
            if !(inv.tol > 0.0) || inv.grid_n < 2 {
                return Err(CliError::Config("inversion needs tol > 0 and grid_n >= 2".into()));
            }
        }
        if let Some(c) = &self.contamination {
            if !(c.rel_amp >= 0.0) {
                return Err(CliError::Config("contamination rel_amp must be non-negative".into()));
            }
        }
        if let Some(w) = &self.window {
            if w.stencil_order == 0 || w.stencil_order % 2 != 0 {
                return Err(CliError::Config("window stencil_order must be even and positive".into()));
            }
        }
        Ok(())
    }
}

pub(crate) fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml("[observation]\nt0 = 1.0\nt_len = 8.0\ndelta = 1.0\ndt = 0.5\nfoo = 1\n");
        assert!(matches!(err, Err(CliError::Config(_))));
        assert!(ScenarioConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn parses_core_sections() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            [lattice]
            ell = 100
            v_fn = { kind = "kappa-a", kappa = 0.3 }
            [truth]
            M = 1.0
            a = 0.1
            [tail]
            c_tail = 1.0
            nu = 0.5
            m = 2
            [noise]
            kind = "lcg"
            seed = 3
            amplitude = 1e-4
            [observation]
            t0 = 4.0
            t_len = 10.0
            delta = 1.0
            dt = 0.01
            [inversion]
            mode = "2p"
            box = { m = [0.9, 1.1], a = [0.05, 0.15] }
            [sweep]
            axis = "T0"
            values = [2.0, 4.0]
            "#,
        )
        .unwrap();
        cfg.validate_common().unwrap();
        assert_eq!(cfg.lattice.unwrap().ell, 100);
        assert_eq!(cfg.noise.to_spec(0.01), NoiseSpec::Lcg { seed: 3, amplitude: 1e-4, hold: 0.01 });
        assert_eq!(cfg.sweep.unwrap().axis, SweepAxis::T0);
    }

    #[test]
    fn energy_window_is_checked() {
        let cfg = ScenarioConfig::from_toml("[observation]\nt0 = 1.0\nt_len = 3.0\ndelta = 1.0\ndt = 0.5\n").unwrap();
        assert!(cfg.validate_common().is_err());
    }

    #[test]
    fn noise_rescaling() {
        let n = NoiseConfig::Harmonic {
            terms: vec![HarmonicTerm { c: 2.0, mu: 1.0, phi: 0.0 }, HarmonicTerm { c: -2.0, mu: 3.0, phi: 0.0 }],
        };
        let spec = n.with_amplitude(1e-3).unwrap().to_spec(0.1);
        assert!((spec.sup_bound() - 1e-3).abs() < 1e-18);
        assert!(NoiseConfig::None.with_amplitude(1.0).is_err());
    }
}
