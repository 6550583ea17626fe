//! Damped-exponential scenes, tapers, sampled signals and weighted inner
//! products.
//!
//! Two evaluation paths coexist. Sampled data goes through trapezoid
//! quadrature on the sampling grid. Signals that are known to be finite sums
//! of pure exponentials carry their modes along (`SampledSignal::analytic`),
//! and inner products between such signals are evaluated in closed form.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RinglabError};
use crate::quad::{integrate_pieces, QuadOptions};
use crate::{exp_integral, I};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexFrequency {
    pub re: f64,
    pub im: f64,
}

impl ComplexFrequency {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn as_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn from_complex(w: Complex64) -> Self {
        Self { re: w.re, im: w.im }
    }

    /// Shift eigenvalue `e^{-i omega delta}`.
    pub fn shift_eigenvalue(self, delta: f64) -> Complex64 {
        (-I * self.as_complex() * delta).exp()
    }
}

impl From<Complex64> for ComplexFrequency {
    fn from(w: Complex64) -> Self {
        Self::from_complex(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq: ComplexFrequency,
    pub amp: Complex64,
    #[serde(default)]
    pub poly_degree: u32,
}

impl Mode {
    pub fn pure(freq: Complex64, amp: Complex64) -> Self {
        Self { freq: freq.into(), amp, poly_degree: 0 }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let base = self.amp * (-I * self.freq.as_complex() * t).exp();
        if self.poly_degree == 0 {
            base
        } else {
            base * t.powi(self.poly_degree as i32)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub c_tail: f64,
    pub nu: f64,
    #[serde(default)]
    pub m: u32,
    #[serde(default)]
    pub leak: f64,
}

impl Default for TailSpec {
    fn default() -> Self {
        Self { c_tail: 0.0, nu: 1.0, m: 0, leak: 0.0 }
    }
}

impl TailSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.c_tail == 0.0 && self.leak == 0.0
    }

    /// `c e^{-nu t} (1+t)^{-m} + leak`
    pub fn eval(&self, t: f64) -> f64 {
        self.envelope(t) + self.leak
    }

    /// The decaying part without the leakage floor.
    pub fn envelope(&self, t: f64) -> f64 {
        if self.c_tail == 0.0 {
            return 0.0;
        }
        self.c_tail * (-self.nu * t).exp() * (1.0 + t).powi(-(self.m as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub c: f64,
    pub mu: f64,
    #[serde(default)]
    pub phi: f64,
}

const LCG_A: u64 = 6364136223846793005;
const LCG_C: u64 = 1442695040888963407;

/// Deterministic measurement perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    Harmonic { terms: Vec<HarmonicTerm> },
    /// Piecewise-constant LCG stream; step `k` covers `[k*hold, (k+1)*hold)`.
    Lcg { seed: u64, amplitude: f64, hold: f64 },
}

impl NoiseSpec {
    pub fn is_none(&self) -> bool {
        match self {
            NoiseSpec::None => true,
            NoiseSpec::Harmonic { terms } => terms.iter().all(|h| h.c == 0.0),
            NoiseSpec::Lcg { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Harmonic { terms } => {
                terms.iter().map(|h| h.c * (h.mu * t + h.phi).cos()).sum()
            }
            NoiseSpec::Lcg { seed, amplitude, hold } => {
                let k = (t / hold + 1e-9).floor().max(0.0) as u64;
                let x = lcg_jump(*seed, k + 1);
                amplitude * (2.0 * (x as f64 / 18446744073709551616.0) - 1.0)
            }
        }
    }

    /// Discontinuities of the noise inside `(a, b)`, for quadrature.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            NoiseSpec::Lcg { hold, amplitude, .. } if *amplitude != 0.0 => {
                let mut out = Vec::new();
                let mut k = (a / hold).floor() as i64 + 1;
                loop {
                    let t = k as f64 * hold;
                    if t >= b {
                        break;
                    }
                    if t > a {
                        out.push(t);
                    }
                    k += 1;
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Upper bound on `sup |eta|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Harmonic { terms } => terms.iter().map(|h| h.c.abs()).sum(),
            NoiseSpec::Lcg { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// State after `n` LCG steps from `seed`, by affine doubling.
fn lcg_jump(seed: u64, mut n: u64) -> u64 {
    let (mut acc_a, mut acc_c) = (1u64, 0u64);
    let (mut a, mut c) = (LCG_A, LCG_C);
    while n > 0 {
        if n & 1 == 1 {
            acc_a = acc_a.wrapping_mul(a);
            acc_c = acc_c.wrapping_mul(a).wrapping_add(c);
        }
        c = c.wrapping_mul(a).wrapping_add(c);
        a = a.wrapping_mul(a);
        n >>= 1;
    }
    acc_a.wrapping_mul(seed).wrapping_add(acc_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Taper {
    Rectangular,
    #[default]
    RaisedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSetup {
    pub t0: f64,
    pub t_len: f64,
    pub delta: f64,
    pub dt: f64,
    #[serde(default)]
    pub taper: Taper,
}

/// Rounds `x / dt` to an integer, failing when it is not one.
pub fn grid_steps(x: f64, dt: f64) -> Result<usize> {
    let r = x / dt;
    let k = r.round();
    if k < 0.0 || (r - k).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(RinglabError::GridMismatch(format!(
            "{x} is not an integer multiple of the step {dt}"
        )));
    }
    Ok(k as usize)
}

impl ObservationSetup {
    pub fn new(t0: f64, t_len: f64, delta: f64, dt: f64) -> Self {
        Self { t0, t_len, delta, dt, taper: Taper::RaisedCosine }
    }

    pub fn with_taper(mut self, taper: Taper) -> Self {
        self.taper = taper;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t0, self.t_len, self.delta, self.dt].iter().all(|v| v.is_finite());
        if !finite || self.t0 < 0.0 || self.t_len <= 0.0 || self.dt <= 0.0 {
            return Err(RinglabError::Config(format!("invalid observation setup {self:?}")));
        }
        if !(self.delta > 0.0 && self.delta < self.t_len) {
            return Err(RinglabError::Config(format!(
                "shift step {} must lie in (0, T={})",
                self.delta, self.t_len
            )));
        }
        grid_steps(self.delta, self.dt)
            .map_err(|_| RinglabError::Config(format!("delta={} is not a multiple of dt={}", self.delta, self.dt)))?;
        grid_steps(self.t_len, self.dt)
            .map_err(|_| RinglabError::Config(format!("T={} is not a multiple of dt={}", self.t_len, self.dt)))?;
        Ok(())
    }

    pub fn shift_steps(&self) -> usize {
        (self.delta / self.dt).round() as usize
    }

    /// Samples covering `[T0, T0+T]`.
    pub fn n_samples(&self) -> usize {
        (self.t_len / self.dt).round() as usize + 1
    }

    pub fn support_end(&self) -> f64 {
        self.t0 + self.t_len - self.delta
    }

    pub fn plateau(&self) -> (f64, f64) {
        (self.t0 + self.delta, self.t0 + self.t_len - 2.0 * self.delta)
    }

    /// Kinks of the weight, in increasing order.
    pub fn weight_breaks(&self) -> Vec<f64> {
        let (b, c) = self.plateau();
        match self.taper {
            Taper::Rectangular => vec![b, c],
            Taper::RaisedCosine => vec![self.t0, b, c, self.support_end()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
    /// Present when the signal is exactly a sum of these pure modes.
    pub analytic: Option<Vec<Mode>>,
}

impl SampledSignal {
    pub fn new(t_start: f64, dt: f64, values: Vec<Complex64>) -> Self {
        Self { t_start, dt, values, analytic: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// Drops the analytic tag, forcing the quadrature path.
    pub fn sampled_only(mut self) -> Self {
        self.analytic = None;
        self
    }

    pub fn sub(&self, other: &SampledSignal) -> Result<SampledSignal> {
        check_same_grid(self, other)?;
        let n = self.len().min(other.len());
        let values = (0..n).map(|k| self.values[k] - other.values[k]).collect();
        Ok(SampledSignal::new(self.t_start, self.dt, values))
    }
}

fn check_same_grid(f: &SampledSignal, g: &SampledSignal) -> Result<()> {
    let tol = 1e-12 * f.dt.abs().max(1.0);
    if (f.dt - g.dt).abs() > tol || (f.t_start - g.t_start).abs() > 1e-9 * f.dt {
        return Err(RinglabError::GridMismatch(format!(
            "grids differ: (t_start={}, dt={}) vs (t_start={}, dt={})",
            f.t_start, f.dt, g.t_start, g.dt
        )));
    }
    Ok(())
}

/// A full synthetic observation: modes, tail and measurement perturbation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub modes: Vec<Mode>,
    pub tail: TailSpec,
    pub noise: NoiseSpec,
}

impl Scene {
    pub fn new(modes: Vec<Mode>, tail: TailSpec, noise: NoiseSpec) -> Self {
        Self { modes, tail, noise }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        eval_scene(&self.modes, &self.tail, &self.noise, t)
    }

    /// Everything except the modes.
    pub fn residual(&self, t: f64) -> Complex64 {
        Complex64::new(self.tail.eval(t) + self.noise.eval(t), 0.0)
    }

    pub fn is_pure_modes(&self) -> bool {
        self.tail.is_zero() && self.noise.is_none() && self.modes.iter().all(|m| m.poly_degree == 0)
    }

    pub fn sample(&self, setup: &ObservationSetup) -> Result<SampledSignal> {
        sample(&self.modes, &self.tail, &self.noise, setup)
    }
}

pub fn eval_scene(modes: &[Mode], tail: &TailSpec, noise: &NoiseSpec, t: f64) -> Complex64 {
    let mut y: Complex64 = modes.iter().map(|m| m.eval(t)).sum();
    y.re += tail.eval(t) + noise.eval(t);
    y
}

pub fn sample(
    modes: &[Mode],
    tail: &TailSpec,
    noise: &NoiseSpec,
    setup: &ObservationSetup,
) -> Result<SampledSignal> {
    setup.validate()?;
    let n = setup.n_samples();
    if n < 4 {
        return Err(RinglabError::InsufficientSamples { needed: 4, available: n });
    }
    let values = (0..n)
        .map(|k| eval_scene(modes, tail, noise, setup.t0 + k as f64 * setup.dt))
        .collect();
    let pure = tail.is_zero() && noise.is_none() && modes.iter().all(|m| m.poly_degree == 0);
    Ok(SampledSignal {
        t_start: setup.t0,
        dt: setup.dt,
        values,
        analytic: pure.then(|| modes.to_vec()),
    })
}

pub fn weight_eval(setup: &ObservationSetup, t: f64) -> f64 {
    let a = setup.t0;
    let d = setup.support_end();
    if t < a || t > d {
        return 0.0;
    }
    let (b, c) = setup.plateau();
    match setup.taper {
        Taper::Rectangular => {
            if t >= b && t <= c {
                1.0
            } else {
                0.0
            }
        }
        Taper::RaisedCosine => {
            let mut w: f64 = 1.0;
            if t < b {
                w = w.min(0.5 * (1.0 - (PI * (t - a) / setup.delta).cos()));
            }
            if t > c {
                w = w.min(0.5 * (1.0 + (PI * (t - c) / setup.delta).cos()));
            }
            w.clamp(0.0, 1.0)
        }
    }
}

/// Trapezoid weights on the grid `T0 + i*dt`, `i = 0..=(T-Delta)/dt`.
///
/// For the rectangular taper the plateau end points get half weight so the
/// rule is the plain trapezoid rule on the plateau.
pub fn quadrature_weights(setup: &ObservationSetup, dt: f64) -> Result<Vec<f64>> {
    let m = grid_steps(setup.t_len - setup.delta, dt)? + 1;
    match setup.taper {
        Taper::RaisedCosine => {
            Ok((0..m).map(|i| dt * weight_eval(setup, setup.t0 + i as f64 * dt)).collect())
        }
        Taper::Rectangular => {
            let p0 = grid_steps(setup.delta, dt)?;
            let span = setup.t_len - 3.0 * setup.delta;
            if span < 0.0 {
                return Ok(vec![0.0; m]);
            }
            let p1 = p0 + grid_steps(span, dt)?;
            Ok((0..m)
                .map(|i| {
                    if i < p0 || i > p1 || p0 == p1 {
                        0.0
                    } else if i == p0 || i == p1 {
                        0.5 * dt
                    } else {
                        dt
                    }
                })
                .collect())
        }
    }
}

/// `\int_0^L e^{beta s} ds`
fn e0(beta: Complex64, len: f64) -> Complex64 {
    exp_integral(beta, 0.0, len)
}

/// `\int w(t) e^{alpha t} dt` in closed form.
pub fn weight_transform(setup: &ObservationSetup, alpha: Complex64) -> Complex64 {
    let (b, c) = setup.plateau();
    let mut total = if c > b { exp_integral(alpha, b, c) } else { Complex64::new(0.0, 0.0) };
    if setup.taper == Taper::RaisedCosine {
        let d = setup.delta;
        let k = Complex64::new(0.0, PI / d);
        let half = 0.5 * e0(alpha, d);
        let osc = 0.25 * (e0(alpha + k, d) + e0(alpha - k, d));
        total += (alpha * setup.t0).exp() * (half - osc);
        total += (alpha * c).exp() * (half + osc);
    }
    total
}

/// Closed-form `<f, g>_w` for finite sums of pure modes.
pub fn closed_form_inner(f: &[Mode], g: &[Mode], setup: &ObservationSetup) -> Result<Complex64> {
    if f.iter().chain(g).any(|m| m.poly_degree != 0) {
        return Err(RinglabError::Unsupported(
            "closed-form inner products need pure exponentials".into(),
        ));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for mf in f {
        for mg in g {
            let alpha = -I * mf.freq.as_complex() + I * mg.freq.as_complex().conj();
            acc += mf.amp * mg.amp.conj() * weight_transform(setup, alpha);
        }
    }
    Ok(acc)
}

/// Unweighted `\int_a^b f conj(g) dt` for pure-mode sums.
pub fn closed_form_plain_inner(f: &[Mode], g: &[Mode], a: f64, b: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for mf in f {
        for mg in g {
            let alpha = -I * mf.freq.as_complex() + I * mg.freq.as_complex().conj();
            acc += mf.amp * mg.amp.conj() * exp_integral(alpha, a, b);
        }
    }
    acc
}

/// `<f, g>_w = \int_{T0}^{T0+T-Delta} w f conj(g) dt`.
pub fn weighted_inner(f: &SampledSignal, g: &SampledSignal, setup: &ObservationSetup) -> Result<Complex64> {
    if let (Some(mf), Some(mg)) = (&f.analytic, &g.analytic) {
        return closed_form_inner(mf, mg, setup);
    }
    trapezoid_inner(f, g, setup)
}

/// Quadrature path only, ignoring any analytic tags.
pub fn trapezoid_inner(f: &SampledSignal, g: &SampledSignal, setup: &ObservationSetup) -> Result<Complex64> {
    check_same_grid(f, g)?;
    if setup.t0 < f.t_start - 1e-9 * f.dt {
        return Err(RinglabError::GridMismatch("grid starts after T0".into()));
    }
    let i0 = grid_steps(setup.t0 - f.t_start, f.dt)?;
    let weights = quadrature_weights(setup, f.dt)?;
    let need = i0 + weights.len();
    let avail = f.len().min(g.len());
    if avail < need {
        return Err(RinglabError::GridMismatch(format!(
            "grid covers {avail} samples, inner product needs {need}"
        )));
    }
    Ok(weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, w)| f.values[i0 + i] * g.values[i0 + i].conj() * *w)
        .sum())
}

pub fn weighted_norm(f: &SampledSignal, setup: &ObservationSetup) -> Result<f64> {
    Ok(weighted_inner(f, f, setup)?.re.max(0.0).sqrt())
}

/// `(S_Delta f)(t) = f(t + Delta)`; the output is `Delta/dt` samples shorter.
pub fn shift(f: &SampledSignal, delta: f64) -> Result<SampledSignal> {
    let k = grid_steps(delta, f.dt)?;
    // a purely analytic signal carries no samples to drop
    let analytic_only = f.analytic.is_some() && f.values.is_empty();
    if k >= f.len() && !analytic_only {
        return Err(RinglabError::InsufficientSamples { needed: k + 1, available: f.len() });
    }
    let analytic = f.analytic.as_ref().map(|modes| {
        modes
            .iter()
            .map(|m| Mode { amp: m.amp * m.freq.shift_eigenvalue(delta), ..m.clone() })
            .collect()
    });
    Ok(SampledSignal { t_start: f.t_start, dt: f.dt, values: f.values[k.min(f.len())..].to_vec(), analytic })
}

/// Squared lower bound `|a|^2 \int_{T0+Delta}^{T0+T-2Delta} e^{2 Im(omega) t} dt`.
pub fn mode_energy_lower_bound(amp: Complex64, freq: ComplexFrequency, setup: &ObservationSetup) -> Result<f64> {
    let (b, c) = setup.plateau();
    if c <= b {
        return Err(RinglabError::Hypothesis(format!(
            "energy bound needs T > 3*Delta (T={}, Delta={})",
            setup.t_len, setup.delta
        )));
    }
    let g = 2.0 * freq.im;
    let integral = if g.abs() * (c - b) < 1e-12 {
        c - b
    } else {
        // e^{g b} (e^{g (c-b)} - 1) / g, positive for either sign of g
        (g * b).exp() * (g * (c - b)).exp_m1() / g
    };
    Ok(amp.norm_sqr() * integral)
}

/// Crude norm bound `|a| e^{Im(omega)(T0+T-2Delta)} sqrt(T - 3 Delta)`.
pub fn mode_energy_crude(amp: Complex64, freq: ComplexFrequency, setup: &ObservationSetup) -> Result<f64> {
    let span = setup.t_len - 3.0 * setup.delta;
    if span <= 0.0 {
        return Err(RinglabError::Hypothesis(format!(
            "crude energy bound needs T > 3*Delta (T={}, Delta={})",
            setup.t_len, setup.delta
        )));
    }
    let (_, c) = setup.plateau();
    Ok(amp.norm() * (freq.im * c).exp() * span.sqrt())
}

/// `||r||_{L^2([T0, T0+T])}` by the trapezoid rule (closed form for pure modes).
pub fn residual_l2(r: &SampledSignal, setup: &ObservationSetup) -> Result<f64> {
    if let Some(modes) = &r.analytic {
        if modes.iter().all(|m| m.poly_degree == 0) {
            let v = closed_form_plain_inner(modes, modes, setup.t0, setup.t0 + setup.t_len);
            return Ok(v.re.max(0.0).sqrt());
        }
    }
    let i0 = grid_steps(setup.t0 - r.t_start, r.dt)?;
    let n = grid_steps(setup.t_len, r.dt)? + 1;
    if r.len() < i0 + n {
        return Err(RinglabError::GridMismatch(format!(
            "grid covers {} samples, residual norm needs {}",
            r.len(),
            i0 + n
        )));
    }
    let mut s = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        s += w * r.values[i0 + i].norm_sqr();
    }
    Ok((s * r.dt).sqrt())
}

/// Continuous-level `<f(.+sf), g(.+sg)>_w` by adaptive quadrature.
///
/// `extra_breaks` lists points where `f` or `g` are not smooth.
pub fn continuous_inner<F, G>(
    f: F,
    g: G,
    setup: &ObservationSetup,
    extra_breaks: &[f64],
    rel_tol: f64,
) -> Complex64
where
    F: Fn(f64) -> Complex64,
    G: Fn(f64) -> Complex64,
{
    let breaks = merged_breaks(setup, extra_breaks);
    if breaks.len() < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let opts = QuadOptions { rel_tol, abs_tol: 1e-300, max_intervals: 20_000 };
    integrate_pieces(|t| f(t) * g(t).conj() * weight_eval(setup, t), &breaks, opts).value
}

pub fn continuous_norm<F: Fn(f64) -> Complex64>(
    f: F,
    setup: &ObservationSetup,
    extra_breaks: &[f64],
    rel_tol: f64,
) -> f64 {
    continuous_inner(&f, &f, setup, extra_breaks, rel_tol).re.max(0.0).sqrt()
}

/// `||f||_{L^2([T0, T0+T])}` by adaptive quadrature.
pub fn continuous_l2<F: Fn(f64) -> Complex64>(f: F, setup: &ObservationSetup, extra_breaks: &[f64], rel_tol: f64) -> f64 {
    let (a, b) = (setup.t0, setup.t0 + setup.t_len);
    let mut breaks = vec![a, b];
    breaks.extend(extra_breaks.iter().copied().filter(|t| *t > a && *t < b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let opts = QuadOptions { rel_tol, abs_tol: 1e-300, max_intervals: 20_000 };
    integrate_pieces(|t| f(t).norm_sqr(), &breaks, opts).value.max(0.0).sqrt()
}

fn merged_breaks(setup: &ObservationSetup, extra: &[f64]) -> Vec<f64> {
    let wb = setup.weight_breaks();
    let (lo, hi) = (wb[0], wb[wb.len() - 1]);
    if hi <= lo {
        return Vec::new();
    }
    let mut breaks = wb;
    breaks.extend(extra.iter().copied().filter(|t| *t > lo && *t < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    breaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn canonical() -> ObservationSetup {
        ObservationSetup::new(1.0, 10.0, 1.0, 0.01).with_taper(Taper::Rectangular)
    }

    #[test]
    fn eval_scene_examples() {
        let z = eval_scene(&[], &TailSpec::zero(), &NoiseSpec::None, 5.0);
        assert_eq!(z, c(0.0, 0.0));
        let m = Mode::pure(c(1.0, -0.1), c(1.0, 0.0));
        let y = eval_scene(std::slice::from_ref(&m), &TailSpec::zero(), &NoiseSpec::None, 0.0);
        assert!((y - 1.0).norm() < 1e-15);
        let tail = TailSpec { c_tail: 0.05, nu: 0.5, m: 0, leak: 0.0 };
        let y = eval_scene(&[m], &tail, &NoiseSpec::None, 2.0);
        let expect = c(-0.2, -2.0).exp() + 0.05 * (-1.0f64).exp();
        assert!((y - expect).norm() < 1e-15);
    }

    #[test]
    fn sample_checks() {
        let setup = ObservationSetup::new(0.0, 4.0, 1.0, 4.0);
        let r = sample(&[], &TailSpec::zero(), &NoiseSpec::None, &setup);
        assert!(r.is_err());
        let setup = ObservationSetup::new(0.0, 4.0, 1.0, 0.3);
        assert!(matches!(
            sample(&[], &TailSpec::zero(), &NoiseSpec::None, &setup),
            Err(RinglabError::Config(_))
        ));
        let setup = ObservationSetup::new(1.0, 10.0, 1.0, 0.5);
        let m = Mode::pure(c(0.0, 0.0), c(1.0, 0.0));
        let s = sample(&[m], &TailSpec::zero(), &NoiseSpec::None, &setup).unwrap();
        assert!(s.values.iter().all(|v| (*v - 1.0).norm() == 0.0));

        let m = Mode::pure(c(1.0, -0.1), c(1.0, 0.0));
        let tail = TailSpec { c_tail: 0.05, nu: 0.5, m: 0, leak: 0.0 };
        let s = sample(std::slice::from_ref(&m), &tail, &NoiseSpec::None, &setup).unwrap();
        assert_eq!(s.len(), 21);
        for (k, v) in s.values.iter().enumerate() {
            let t = 1.0 + 0.5 * k as f64;
            assert!((v - eval_scene(std::slice::from_ref(&m), &tail, &NoiseSpec::None, t)).norm() < 1e-15);
        }
    }

    #[test]
    fn weight_examples() {
        let setup = ObservationSetup::new(1.0, 10.0, 1.0, 0.01);
        assert_eq!(weight_eval(&setup, 11.0), 0.0);
        assert_eq!(weight_eval(&setup, 1.0 + 1.0 + 3.5), 1.0);
        assert!((weight_eval(&setup, 1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_inner_examples() {
        let setup = canonical();
        let zero = SampledSignal::new(1.0, 0.01, vec![c(0.0, 0.0); 1001]);
        assert_eq!(weighted_inner(&zero, &zero, &setup).unwrap(), c(0.0, 0.0));

        let f = Mode::pure(c(0.0, -0.1), c(1.0, 0.0));
        let s = f_sample(&f, &setup);
        let exact = ((-0.4f64).exp() - (-1.8f64).exp()) / 0.2;
        assert!((weighted_inner(&s, &s, &setup).unwrap().re - exact).abs() < 1e-12);
        assert!((exact - 2.525105).abs() < 1e-6);
        let trap = trapezoid_inner(&s, &s, &setup).unwrap().re;
        assert!((trap - exact).abs() < 1e-4);

        // e^{it} against e^{2it}: closed form vs trapezoid at O(dt^2)
        let f = Mode::pure(c(-1.0, 0.0), c(1.0, 0.0));
        let g = Mode::pure(c(-2.0, 0.0), c(1.0, 0.0));
        let exact = (c(0.0, -9.0).exp() - c(0.0, -2.0).exp()) / c(0.0, -1.0);
        let cf = closed_form_inner(std::slice::from_ref(&f), std::slice::from_ref(&g), &setup).unwrap();
        assert!((cf - exact).norm() < 1e-13);
        let mut errs = Vec::new();
        for dt in [0.1, 0.05, 0.025] {
            let su = ObservationSetup { dt, ..setup };
            let v = trapezoid_inner(&f_sample(&f, &su), &f_sample(&g, &su), &su).unwrap();
            errs.push((v - exact).norm());
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    fn f_sample(m: &Mode, setup: &ObservationSetup) -> SampledSignal {
        sample(std::slice::from_ref(m), &TailSpec::zero(), &NoiseSpec::None, setup).unwrap()
    }

    #[test]
    fn raised_cosine_closed_form_matches_quadrature() {
        let setup = ObservationSetup::new(1.5, 7.0, 0.5, 0.01);
        let f = Mode::pure(c(1.3, -0.2), c(0.7, 0.4));
        let g = Mode::pure(c(0.4, -0.05), c(-0.2, 1.0));
        let cf = closed_form_inner(std::slice::from_ref(&f), std::slice::from_ref(&g), &setup).unwrap();
        let q = continuous_inner(|t| f.eval(t), |t| g.eval(t), &setup, &[], 1e-13);
        assert!((cf - q).norm() < 1e-11 * cf.norm().max(1.0), "{cf} vs {q}");
    }

    #[test]
    fn shift_examples() {
        let setup = ObservationSetup::new(0.0, 4.0, 0.03, 0.01);
        let one = f_sample(&Mode::pure(c(0.0, 0.0), c(2.0, 0.0)), &setup);
        let s = shift(&one, 0.03).unwrap();
        assert_eq!(s.len(), one.len() - 3);
        assert!(s.values.iter().all(|v| *v == c(2.0, 0.0)));
        assert!(shift(&one, 0.025).is_err());

        let w = c(1.2, -0.3);
        let m = Mode::pure(w, c(1.0, 0.5));
        let y = f_sample(&m, &ObservationSetup::new(0.0, 4.0, 0.5, 0.25));
        let sy = shift(&y, 0.5).unwrap();
        let z = (-I * w * 0.5).exp();
        for k in 0..sy.len() {
            assert!((sy.values[k] - z * y.values[k]).norm() < 1e-14);
        }

        let bare = SampledSignal { t_start: 0.0, dt: 0.25, values: Vec::new(), analytic: Some(vec![m.clone()]) };
        let sb = shift(&bare, 0.5).unwrap();
        assert!(sb.values.is_empty());
        assert_eq!(sb.analytic.unwrap()[0].amp, m.amp * z);
    }

    #[test]
    fn energy_examples() {
        let setup = canonical();
        let fr = ComplexFrequency::new(1.0, -0.1);
        let e = mode_energy_lower_bound(c(1.0, 0.0), fr, &setup).unwrap();
        assert!((e - 2.525105).abs() < 1e-6);
        assert_eq!(mode_energy_lower_bound(c(0.0, 0.0), fr, &setup).unwrap(), 0.0);
        let crude = mode_energy_crude(c(1.0, 0.0), fr, &setup).unwrap();
        assert!((crude - (-0.9f64).exp() * 7f64.sqrt()).abs() < 1e-14);
        assert!((crude - 1.075682).abs() < 1e-6);
        let bad = ObservationSetup::new(1.0, 3.0, 1.0, 0.5);
        assert!(mode_energy_crude(c(1.0, 0.0), fr, &bad).is_err());
    }

    #[test]
    fn residual_examples() {
        let setup = ObservationSetup::new(0.0, 4.0, 1.0, 0.01);
        let zero = SampledSignal::new(0.0, 0.01, vec![c(0.0, 0.0); 401]);
        assert_eq!(residual_l2(&zero, &setup).unwrap(), 0.0);
        let one = SampledSignal::new(0.0, 0.01, vec![c(1.0, 0.0); 401]);
        assert!((residual_l2(&one, &setup).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lcg_is_reproducible_and_jump_matches_stepping() {
        let mut x = 42u64;
        for n in 1..50 {
            x = x.wrapping_mul(LCG_A).wrapping_add(LCG_C);
            assert_eq!(lcg_jump(42, n), x);
        }
        let noise = NoiseSpec::Lcg { seed: 7, amplitude: 0.1, hold: 0.01 };
        let setup = ObservationSetup::new(1.0, 2.0, 0.5, 0.01);
        let a = sample(&[], &TailSpec::zero(), &noise, &setup).unwrap();
        let b = sample(&[], &TailSpec::zero(), &noise, &setup).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.values.iter().all(|v| v.re.abs() <= 0.1 && v.im == 0.0));
        // each grid point reads its own step
        assert_ne!(a.values[0], a.values[1]);
    }

    proptest! {
        #[test]
        fn weight_sandwich(t0 in 0.0..5.0f64, tl in 4.0..12.0f64, d in 0.2..1.2f64, s in -1.0..14.0f64,
                           rect in any::<bool>()) {
            let setup = ObservationSetup::new(t0, tl, d, 0.01)
                .with_taper(if rect { Taper::Rectangular } else { Taper::RaisedCosine });
            let w = weight_eval(&setup, t0 + s);
            prop_assert!((0.0..=1.0).contains(&w));
            let (b, c) = setup.plateau();
            if t0 + s >= b && t0 + s <= c {
                prop_assert_eq!(w, 1.0);
            }
            if t0 + s > setup.support_end() || s < 0.0 {
                prop_assert_eq!(w, 0.0);
            }
        }

        #[test]
        fn shift_eigenrelation(re in -3.0..3.0f64, im in -0.5..0.0f64, k in 1usize..8) {
            let setup = ObservationSetup::new(0.5, 6.0, 0.25 * k as f64, 0.25);
            let w = c(re, im);
            let y = f_sample(&Mode::pure(w, c(1.0, 0.0)), &setup);
            let sy = shift(&y, setup.delta).unwrap();
            let z = (-I * w * setup.delta).exp();
            for j in 0..sy.len() {
                prop_assert!((sy.values[j] - z * y.values[j]).norm() <= 1e-13);
            }
        }

        #[test]
        fn energy_lower_bound_holds(re in -3.0..3.0f64, im in -0.8..-0.01f64, t0 in 0.0..6.0f64,
                                     ar in -2.0..2.0f64, ai in -2.0..2.0f64, rect in any::<bool>()) {
            let setup = ObservationSetup::new(t0, 10.0, 1.0, 0.01)
                .with_taper(if rect { Taper::Rectangular } else { Taper::RaisedCosine });
            let m = Mode::pure(c(re, im), c(ar, ai));
            let e2 = closed_form_inner(std::slice::from_ref(&m), std::slice::from_ref(&m), &setup).unwrap().re;
            let lb = mode_energy_lower_bound(m.amp, m.freq, &setup).unwrap();
            prop_assert!(e2 >= lb * (1.0 - 1e-12));
            let crude = mode_energy_crude(m.amp, m.freq, &setup).unwrap();
            prop_assert!(lb.sqrt() >= crude * (1.0 - 1e-12));
        }

        #[test]
        fn tail_envelope_nonincreasing(cc in 0.0..5.0f64, nu in 0.01..2.0f64, m in 0u32..5,
                                       t in 0.0..30.0f64, dt in 0.0..5.0f64) {
            let tail = TailSpec { c_tail: cc, nu, m, leak: 0.0 };
            prop_assert!(tail.eval(t + dt) <= tail.eval(t));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn residual_domination(cc in 0.0..2.0f64, nu in 0.05..1.5f64, m in 0u32..3, leak in 0.0..0.1f64,
                               hc in 0.0..0.2f64, mu in 0.0..8.0f64, phi in 0.0..6.3f64,
                               t0 in 0.0..5.0f64, rect in any::<bool>()) {
            let setup = ObservationSetup::new(t0, 8.0, 1.0, 0.05)
                .with_taper(if rect { Taper::Rectangular } else { Taper::RaisedCosine });
            let tail = TailSpec { c_tail: cc, nu, m, leak };
            let noise = NoiseSpec::Harmonic { terms: vec![HarmonicTerm { c: hc, mu, phi }] };
            let r = sample(&[], &tail, &noise, &setup).unwrap();
            let n0 = weighted_norm(&r, &setup).unwrap();
            let n1 = weighted_norm(&shift(&r, setup.delta).unwrap(), &setup).unwrap();
            let full = residual_l2(&r, &setup).unwrap();
            prop_assert!(n0.max(n1) <= full * (1.0 + 1e-12));
        }
    }
}
