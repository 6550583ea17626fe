//! One-mode frequency extraction by the shift Rayleigh quotient.
//!
//! `z_hat = <S_Delta y, y>_w / <y, y>_w` estimates `z = e^{-i omega Delta}`;
//! the logarithm is taken relative to a prior frequency so that the branch is
//! fixed by the prior rather than by the principal cut alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RinglabError};
use crate::signal::{
    closed_form_inner, continuous_inner, continuous_norm, mode_energy_lower_bound, sample, shift,
    weighted_inner, weighted_norm, ComplexFrequency, Mode, NoiseSpec, ObservationSetup, SampledSignal,
    Scene, TailSpec,
};
use crate::I;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub setup: ObservationSetup,
    pub prior: ComplexFrequency,
    #[serde(default)]
    pub amp_floor: f64,
    /// Separation scale of the labeled frequency disk, if known.
    #[serde(default)]
    pub c_sep: Option<f64>,
}

impl ExtractionConfig {
    pub fn new(setup: ObservationSetup, prior: ComplexFrequency) -> Self {
        Self { setup, prior, amp_floor: 0.0, c_sep: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        if !(self.prior.re.is_finite() && self.prior.im.is_finite()) {
            return Err(RinglabError::Config("prior frequency must be finite".into()));
        }
        if self.amp_floor < 0.0 {
            return Err(RinglabError::Config("amp_floor must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// `eps <= min(1/8, |z|/20)`
    pub eps_small: bool,
    /// `|z - z_prior| <= |z_prior|/4` and `|z_hat - z| <= |z|/2`
    pub branch_hyp: bool,
    /// `eps <= (c_sep/40) Delta |z|`; `None` without a separation scale.
    pub disk_hyp: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSizes {
    pub eps0: f64,
    pub eps1: f64,
    pub eps: f64,
}

impl ResidualSizes {
    fn from_norms(r0: f64, r1: f64, y0: f64) -> Result<Self> {
        if !(y0 > 0.0) {
            return Err(RinglabError::Detectability("reference mode has zero weighted energy".into()));
        }
        let (eps0, eps1) = (r0 / y0, r1 / y0);
        Ok(Self { eps0, eps1, eps: eps0.max(eps1) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub z_hat: Complex64,
    pub omega_hat: ComplexFrequency,
    /// Residual sizes; NaN when no reference mode was supplied.
    pub eps0: f64,
    pub eps1: f64,
    pub eps: f64,
    pub bound_z: f64,
    pub bound_omega: f64,
    pub hypotheses: HypothesisFlags,
    /// `e^{-i omega Delta}` of the reference mode, when known.
    pub z_true: Option<Complex64>,
}

pub fn rayleigh_quotient(y: &SampledSignal, setup: &ObservationSetup) -> Result<Complex64> {
    let den = weighted_inner(y, y, setup)?.re;
    if !(den > f64::MIN_POSITIVE) {
        return Err(RinglabError::Degenerate("<y, y>_w vanishes".into()));
    }
    let sy = shift(y, setup.delta)?;
    Ok(weighted_inner(&sy, y, setup)? / den)
}

/// Continuous-level quotient by adaptive quadrature; `breaks` are kinks of `y`.
pub fn rayleigh_quotient_continuous<F: Fn(f64) -> Complex64>(
    y: F,
    setup: &ObservationSetup,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<Complex64> {
    let all = shifted_breaks(breaks, setup.delta);
    let den = continuous_inner(&y, &y, setup, &all, rel_tol).re;
    if !(den > f64::MIN_POSITIVE) {
        return Err(RinglabError::Degenerate("<y, y>_w vanishes".into()));
    }
    let num = continuous_inner(|t| y(t + setup.delta), &y, setup, &all, rel_tol);
    Ok(num / den)
}

fn shifted_breaks(breaks: &[f64], delta: f64) -> Vec<f64> {
    breaks.iter().flat_map(|b| [*b, *b - delta]).collect()
}

/// `eps0 = ||r||_w / ||y0||_w`, `eps1 = ||S_Delta r||_w / ||y0||_w`.
pub fn residual_sizes(y0_modes: &[Mode], r: &SampledSignal, setup: &ObservationSetup) -> Result<ResidualSizes> {
    let y0_norm = if y0_modes.iter().all(|m| m.poly_degree == 0) {
        closed_form_inner(y0_modes, y0_modes, setup)?.re.max(0.0).sqrt()
    } else {
        let setup_r = ObservationSetup { dt: r.dt, ..*setup };
        weighted_norm(&sample(y0_modes, &TailSpec::zero(), &NoiseSpec::None, &setup_r)?, setup)?
    };
    let r0 = weighted_norm(r, setup)?;
    let r1 = weighted_norm(&shift(r, setup.delta)?, setup)?;
    ResidualSizes::from_norms(r0, r1, y0_norm)
}

pub fn residual_sizes_continuous<F: Fn(f64) -> Complex64>(
    y0_modes: &[Mode],
    r: F,
    setup: &ObservationSetup,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<ResidualSizes> {
    let all = shifted_breaks(breaks, setup.delta);
    let y0_norm = closed_form_inner(y0_modes, y0_modes, setup)?.re.max(0.0).sqrt();
    let r0 = continuous_norm(&r, setup, &all, rel_tol);
    let r1 = continuous_norm(|t| r(t + setup.delta), setup, &all, rel_tol);
    ResidualSizes::from_norms(r0, r1, y0_norm)
}

/// `(eps0 + eps1)(1 + eps0)/(1 - 2 eps0)`, valid for `eps0 <= 1/4`.
pub fn stability_bound(eps0: f64, eps1: f64) -> Result<f64> {
    if eps0 > 0.25 {
        return Err(RinglabError::Hypothesis(format!("eps0 = {eps0} exceeds 1/4")));
    }
    Ok((eps0 + eps1) * (1.0 + eps0) / (1.0 - 2.0 * eps0))
}

/// `3 eps`, valid for `eps <= 1/8`.
pub fn stability_bound_crude(eps: f64) -> Result<f64> {
    if eps > 0.125 {
        return Err(RinglabError::Hypothesis(format!("eps = {eps} exceeds 1/8")));
    }
    Ok(3.0 * eps)
}

/// `(2/|z|) |z_hat - z|`, valid when `|z_hat - z| <= |z|/2`.
pub fn log_lip_bound(z: Complex64, z_hat: Complex64) -> Result<f64> {
    let d = (z_hat - z).norm();
    if d > 0.5 * z.norm() {
        return Err(RinglabError::Hypothesis(format!(
            "|z_hat - z| = {d} exceeds |z|/2 = {}",
            0.5 * z.norm()
        )));
    }
    Ok(2.0 * d / z.norm())
}

/// `omega_hat = (i/Delta)(Log(z_hat/z_prior) - i omega_prior Delta)`.
pub fn branch_log(z_hat: Complex64, prior: ComplexFrequency, delta: f64) -> Result<ComplexFrequency> {
    let z_prior = prior.shift_eigenvalue(delta);
    let ratio = z_hat / z_prior;
    if !ratio.is_finite() || (ratio - 1.0).norm() > 0.625 {
        return Err(RinglabError::Branch(format!(
            "|z_hat/z_prior - 1| = {} is outside the admissible disk of radius 5/8",
            (ratio - 1.0).norm()
        )));
    }
    if ratio.im == 0.0 && ratio.re <= 0.0 {
        return Err(RinglabError::Branch("ratio lies on the principal cut".into()));
    }
    Ok(ComplexFrequency::from_complex(I / delta * ratio.ln() + prior.as_complex()))
}

/// `(10/(Delta |z|)) eps`
pub fn omega_error_bound(eps: f64, z: Complex64, delta: f64) -> f64 {
    10.0 * eps / (delta * z.norm())
}

pub fn branch_hypotheses(z: Complex64, z_hat: Complex64, prior: ComplexFrequency, delta: f64) -> bool {
    let zs = prior.shift_eigenvalue(delta);
    (z - zs).norm() <= 0.25 * zs.norm() && (z_hat - z).norm() <= 0.5 * z.norm()
}

fn assemble(
    z_hat: Complex64,
    omega_hat: ComplexFrequency,
    sizes: Option<(ResidualSizes, Complex64)>,
    cfg: &ExtractionConfig,
) -> ExtractionResult {
    let delta = cfg.setup.delta;
    match sizes {
        None => ExtractionResult {
            z_hat,
            omega_hat,
            eps0: f64::NAN,
            eps1: f64::NAN,
            eps: f64::NAN,
            bound_z: f64::NAN,
            bound_omega: f64::NAN,
            hypotheses: HypothesisFlags::default(),
            z_true: None,
        },
        Some((s, z)) => {
            let bound_z = stability_bound(s.eps0, s.eps1).unwrap_or(f64::INFINITY);
            let hypotheses = HypothesisFlags {
                eps_small: s.eps <= 0.125f64.min(z.norm() / 20.0),
                branch_hyp: branch_hypotheses(z, z_hat, cfg.prior, delta),
                disk_hyp: cfg.c_sep.map(|c| s.eps <= c / 40.0 * delta * z.norm()),
            };
            ExtractionResult {
                z_hat,
                omega_hat,
                eps0: s.eps0,
                eps1: s.eps1,
                eps: s.eps,
                bound_z,
                bound_omega: omega_error_bound(s.eps, z, delta),
                hypotheses,
                z_true: Some(z),
            }
        }
    }
}

/// Rayleigh quotient followed by prior-relative logarithm.
///
/// With a reference `y0` (the synthetic mode content) the residual sizes,
/// certified bounds and hypothesis flags are filled in. The reference must be
/// a single mode for the bounds to be meaningful; the first mode sets `z`.
pub fn extract(y: &SampledSignal, cfg: &ExtractionConfig, y0_reference: Option<&[Mode]>) -> Result<ExtractionResult> {
    cfg.validate()?;
    let z_hat = rayleigh_quotient(y, &cfg.setup)?;
    let omega_hat = branch_log(z_hat, cfg.prior, cfg.setup.delta)?;
    let sizes = match y0_reference {
        Some(modes) if !modes.is_empty() => {
            let setup_y = ObservationSetup { dt: y.dt, ..cfg.setup };
            let y0 = sample(modes, &TailSpec::zero(), &NoiseSpec::None, &setup_y)?;
            let r = y.sub(&y0)?;
            let s = residual_sizes(modes, &r, &cfg.setup)?;
            Some((s, modes[0].freq.shift_eigenvalue(cfg.setup.delta)))
        }
        _ => None,
    };
    Ok(assemble(z_hat, omega_hat, sizes, cfg))
}

/// Continuous-level extraction on a synthetic scene: every inner product is
/// evaluated by adaptive quadrature (or in closed form for the mode part).
pub fn extract_continuous(scene: &Scene, cfg: &ExtractionConfig, rel_tol: f64) -> Result<ExtractionResult> {
    cfg.validate()?;
    let s = &cfg.setup;
    let breaks = scene.noise.breakpoints(s.t0 - s.delta, s.t0 + s.t_len + s.delta);
    let z_hat = if scene.is_pure_modes() {
        let y = SampledSignal { t_start: s.t0, dt: s.dt, values: Vec::new(), analytic: Some(scene.modes.clone()) };
        rayleigh_quotient(&y, s)?
    } else {
        rayleigh_quotient_continuous(|t| scene.eval(t), s, &breaks, rel_tol)?
    };
    let omega_hat = branch_log(z_hat, cfg.prior, s.delta)?;
    let sizes = if scene.modes.is_empty() {
        None
    } else {
        let rs = residual_sizes_continuous(&scene.modes, |t| scene.residual(t), s, &breaks, rel_tol)?;
        Some((rs, scene.modes[0].freq.shift_eigenvalue(s.delta)))
    };
    Ok(assemble(z_hat, omega_hat, sizes, cfg))
}

/// Pipeline-level detectability: `|a| >= amp_floor * scale`.
pub fn detectable(amp: Complex64, amp_floor: f64, perturbation_scale: f64) -> bool {
    amp.norm() >= amp_floor * perturbation_scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_tail_bound: f64,
    pub eps_meas_bound: f64,
    pub eps_bound: f64,
    /// Lower bound for `||y0||_w` used as the denominator.
    pub energy_lb: f64,
}

/// A priori bound on `eps` split into tail and measurement parts.
///
/// The tail part uses `sup |rho| <= c e^{-nu T0}(1+T0)^{-m} + leak` on the
/// window, hence `||rho||_{L^2} <= sup * sqrt(T)`; `noise_l2` is the
/// `L^2([T0, T0+T])` norm of the measurement perturbation.
pub fn epsilon_budget(
    amp: Complex64,
    freq: ComplexFrequency,
    tail: &TailSpec,
    noise_l2: f64,
    setup: &ObservationSetup,
    detector_norm: f64,
    data_norm: f64,
) -> Result<EpsilonBudget> {
    if !(freq.im < 0.0) {
        return Err(RinglabError::Domain(format!("mode damping must be positive (Im omega = {})", freq.im)));
    }
    let energy_lb = mode_energy_lower_bound(amp, freq, setup)?.sqrt();
    if !(energy_lb > 0.0) {
        return Err(RinglabError::Detectability("mode energy lower bound vanishes".into()));
    }
    let sup_tail = tail.eval(setup.t0);
    let eps_tail_bound = sup_tail * setup.t_len.sqrt() * detector_norm * data_norm / energy_lb;
    let eps_meas_bound = noise_l2 / energy_lb;
    Ok(EpsilonBudget { eps_tail_bound, eps_meas_bound, eps_bound: eps_tail_bound + eps_meas_bound, energy_lb })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskCheck {
    /// `|omega_hat - prior| <= c_sep/2`
    pub inside: bool,
    /// `eps <= (c_sep/40) Delta |z|`, when `eps` and `z` are supplied
    pub residual_condition: Option<bool>,
}

pub fn disk_check(
    omega_hat: ComplexFrequency,
    prior: ComplexFrequency,
    c_sep: f64,
    eps_z_delta: Option<(f64, Complex64, f64)>,
) -> DiskCheck {
    let inside = (omega_hat.as_complex() - prior.as_complex()).norm() <= 0.5 * c_sep;
    let residual_condition = eps_z_delta.map(|(eps, z, delta)| eps <= c_sep / 40.0 * delta * z.norm());
    DiskCheck { inside, residual_condition }
}
