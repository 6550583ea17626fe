//! Synthetic pseudopole lattice over `(M, a, Lambda)`, the normalized
//! observables, local inversion of the data maps and the parameter-bias
//! calculators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RinglabError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPoint {
    #[serde(rename = "M")]
    pub m: f64,
    pub a: f64,
    #[serde(rename = "Lambda", default)]
    pub lambda: f64,
}

impl ParameterPoint {
    pub fn new(m: f64, a: f64, lambda: f64) -> Self {
        Self { m, a, lambda }
    }

    /// `M > 0`, `Lambda >= 0` and `9 Lambda M^2 < 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(RinglabError::Domain(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !self.a.is_finite() {
            return Err(RinglabError::Domain(format!("invalid parameters {self:?}")));
        }
        if 9.0 * self.lambda * self.m * self.m >= 1.0 {
            return Err(RinglabError::Domain(format!(
                "9 Lambda M^2 = {} >= 1: no real photon-sphere frequency",
                9.0 * self.lambda * self.m * self.m
            )));
        }
        Ok(())
    }

    fn to_vec(self, mode: InversionMode) -> Vec<f64> {
        match mode {
            InversionMode::TwoParam => vec![self.m, self.a],
            InversionMode::ThreeParam => vec![self.m, self.a, self.lambda],
        }
    }

    fn with_vec(self, x: &[f64]) -> Self {
        Self { m: x[0], a: x[1], lambda: if x.len() > 2 { x[2] } else { self.lambda } }
    }

    pub fn distance(&self, other: &Self, mode: InversionMode) -> f64 {
        let (a, b) = (self.to_vec(mode), other.to_vec(mode));
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

/// `sqrt(1 - 9 Lambda M^2) / (3 sqrt(3) M)`.
pub fn photon_sphere_frequency(m: f64, lambda: f64) -> Result<f64> {
    ParameterPoint::new(m, 0.0, lambda).validate()?;
    Ok((1.0 - 9.0 * lambda * m * m).sqrt() / (3.0 * 3f64.sqrt() * m))
}

/// Smooth scalar maps of the parameters used for `u`, `v` and `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParamFn {
    PhotonSphere,
    /// `kappa * a`
    KappaA { kappa: f64 },
    Constant { value: f64 },
    /// `c0 + c_m M + c_a a + c_lambda Lambda`
    Linear { c0: f64, c_m: f64, c_a: f64, c_lambda: f64 },
}

impl ParamFn {
    pub fn eval(&self, p: &ParameterPoint) -> Result<f64> {
        Ok(match *self {
            ParamFn::PhotonSphere => photon_sphere_frequency(p.m, p.lambda)?,
            ParamFn::KappaA { kappa } => kappa * p.a,
            ParamFn::Constant { value } => value,
            ParamFn::Linear { c0, c_m, c_a, c_lambda } => c0 + c_m * p.m + c_a * p.a + c_lambda * p.lambda,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InversionMode {
    #[serde(rename = "2p")]
    TwoParam,
    #[serde(rename = "3p")]
    ThreeParam,
}

impl InversionMode {
    pub fn dim(&self) -> usize {
        match self {
            InversionMode::TwoParam => 2,
            InversionMode::ThreeParam => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sector {
    pub fn sign(&self) -> f64 {
        match self {
            Sector::Plus => 1.0,
            Sector::Minus => -1.0,
        }
    }
}

/// Pseudopoles `ell (u +- v) - i (j + 1/2) lam`. The true poles are the
/// pseudopoles plus `pole_offset` (zero by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeModel {
    #[serde(default = "default_u")]
    pub u_fn: ParamFn,
    #[serde(default = "default_v")]
    pub v_fn: ParamFn,
    #[serde(default = "default_u")]
    pub lam_fn: ParamFn,
    /// Overtone index of the observed layer.
    #[serde(default)]
    pub n: u32,
    pub ell: u32,
    /// Offsets `[plus, minus]` of the true poles from the pseudopoles.
    #[serde(default)]
    pub pole_offset: [Complex64; 2],
}

fn default_u() -> ParamFn {
    ParamFn::PhotonSphere
}

fn default_v() -> ParamFn {
    ParamFn::KappaA { kappa: 0.3 }
}

impl LatticeModel {
    pub fn new(ell: u32, n: u32) -> Self {
        Self { u_fn: default_u(), v_fn: default_v(), lam_fn: default_u(), n, ell, pole_offset: [Complex64::new(0.0, 0.0); 2] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(RinglabError::Config("ell must be at least 1".into()));
        }
        Ok(())
    }

    pub fn u(&self, p: &ParameterPoint) -> Result<f64> {
        self.u_fn.eval(p)
    }

    pub fn v(&self, p: &ParameterPoint) -> Result<f64> {
        self.v_fn.eval(p)
    }

    pub fn lam(&self, p: &ParameterPoint) -> Result<f64> {
        self.lam_fn.eval(p)
    }

    /// True pole of the observed layer in a sector.
    pub fn pole(&self, sector: Sector, p: &ParameterPoint) -> Result<Complex64> {
        let off = match sector {
            Sector::Plus => self.pole_offset[0],
            Sector::Minus => self.pole_offset[1],
        };
        Ok(pseudopole(self, self.n, sector, p)? + off)
    }
}

pub fn pseudopole(model: &LatticeModel, j: u32, sector: Sector, p: &ParameterPoint) -> Result<Complex64> {
    model.validate()?;
    p.validate()?;
    let ell = model.ell as f64;
    let re = ell * (model.u(p)? + sector.sign() * model.v(p)?);
    let im = -(j as f64 + 0.5) * model.lam(p)?;
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "W")]
    pub w_tilde: f64,
}

impl Observables {
    pub fn as_vec(&self, mode: InversionMode) -> Vec<f64> {
        match mode {
            InversionMode::TwoParam => vec![self.u, self.v],
            InversionMode::ThreeParam => vec![self.u, self.v, self.w_tilde],
        }
    }
}

/// `U = Re(w+ + w-)/(2 ell)`, `V = Re(w+ - w-)/(2 ell)`, `W = -Im w+ / (n + 1/2)`.
pub fn observables(omega_plus: Complex64, omega_minus: Complex64, ell: u32, n: u32) -> Result<Observables> {
    if ell == 0 {
        return Err(RinglabError::Config("ell must be at least 1".into()));
    }
    let two_ell = 2.0 * ell as f64;
    Ok(Observables {
        u: (omega_plus + omega_minus).re / two_ell,
        v: (omega_plus - omega_minus).re / two_ell,
        w_tilde: -omega_plus.im / (n as f64 + 0.5),
    })
}

/// The observables applied to extracted frequencies.
pub fn estimated_data(omega_hat_plus: Complex64, omega_hat_minus: Complex64, ell: u32, n: u32) -> Result<Observables> {
    observables(omega_hat_plus, omega_hat_minus, ell, n)
}

/// `(sqrt 2 / (2 ell)) (|dw+| + |dw-|)`.
pub fn data_error_bound_2p(dw_plus: Complex64, dw_minus: Complex64, ell: u32) -> f64 {
    2f64.sqrt() / (2.0 * ell as f64) * (dw_plus.norm() + dw_minus.norm())
}

/// Two-component bound plus `|dw+| / (n + 1/2)`.
pub fn data_error_bound_3p(dw_plus: Complex64, dw_minus: Complex64, ell: u32, n: u32) -> f64 {
    data_error_bound_2p(dw_plus, dw_minus, ell) + dw_plus.norm() / (n as f64 + 0.5)
}

/// Data map evaluated from the lattice pseudopoles.
pub fn data_map(model: &LatticeModel, mode: InversionMode, p: &ParameterPoint) -> Result<Vec<f64>> {
    let wp = pseudopole(model, model.n, Sector::Plus, p)?;
    let wm = pseudopole(model, model.n, Sector::Minus, p)?;
    Ok(observables(wp, wm, model.ell, model.n)?.as_vec(mode))
}

/// Relative central-difference step.
pub const JACOBIAN_STEP: f64 = 1e-6;

fn fd_scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

/// Central-difference Jacobian of the data map, step `1e-6 * max(1, |x_i|)`.
///
/// At the edge of the parameter domain (e.g. `Lambda = 0`) the column falls
/// back to a second-order one-sided difference into the domain.
pub fn data_jacobian(model: &LatticeModel, mode: InversionMode, p: &ParameterPoint) -> Result<DMatrix<f64>> {
    let x = p.to_vec(mode);
    let d = x.len();
    let f0 = data_map(model, mode, p)?;
    let eval = |i: usize, k: f64, h: f64| -> Result<Vec<f64>> {
        let mut y = x.clone();
        y[i] += k * h;
        let q = p.with_vec(&y);
        q.validate()?;
        data_map(model, mode, &q)
    };
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..d {
        let h = JACOBIAN_STEP * fd_scale(x[i]);
        let col: Vec<f64> = match (eval(i, 1.0, h), eval(i, -1.0, h)) {
            (Ok(fp), Ok(fm)) => fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect(),
            (Ok(f1), Err(_)) => {
                let f2 = eval(i, 2.0, h)?;
                (0..d).map(|r| (-3.0 * f0[r] + 4.0 * f1[r] - f2[r]) / (2.0 * h)).collect()
            }
            (Err(_), Ok(f1)) => {
                let f2 = eval(i, -2.0, h)?;
                (0..d).map(|r| (3.0 * f0[r] - 4.0 * f1[r] + f2[r]) / (2.0 * h)).collect()
            }
            (Err(e), Err(_)) => return Err(e),
        };
        for r in 0..d {
            jac[(r, i)] = col[r];
        }
    }
    Ok(jac)
}

/// Compact parameter box. `a_min > 0` excludes `|a| < a_min`, where the
/// split observable stops determining the sign of `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub m: (f64, f64),
    pub a: (f64, f64),
    #[serde(default)]
    pub lambda: (f64, f64),
    #[serde(default)]
    pub a_min: f64,
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("M", self.m), ("a", self.a), ("Lambda", self.lambda)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(RinglabError::Config(format!("box range for {name} is invalid: [{lo}, {hi}]")));
            }
        }
        if !(self.a_min >= 0.0) {
            return Err(RinglabError::Config("a_min must be non-negative".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ParameterPoint, mode: InversionMode) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.m, self.m)
            && inside(p.a, self.a)
            && p.a.abs() >= self.a_min
            && (mode == InversionMode::TwoParam || inside(p.lambda, self.lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub point: ParameterPoint,
    pub iterations: usize,
    pub residual: f64,
}

pub const MAX_NEWTON_ITERATIONS: usize = 50;

/// Reciprocal condition number below which a finite-difference Jacobian is
/// treated as singular. Central differences with step `1e-6` carry relative
/// noise near `1e-10`, so the threshold sits well above that.
pub const SINGULAR_RCOND: f64 = 1e-8;

fn residual_vec(model: &LatticeModel, mode: InversionMode, p: &ParameterPoint, data: &[f64]) -> Result<Vec<f64>> {
    let g = data_map(model, mode, p)?;
    Ok(g.iter().zip(data).map(|(a, b)| a - b).collect())
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration on `p -> data_map(p)`. In two-parameter mode
/// `Lambda` stays at the guess value. With a box, iterates must keep
/// `|a| >= a_min`; leaving that region is an inversion error.
pub fn invert_data(
    model: &LatticeModel,
    mode: InversionMode,
    data: &[f64],
    guess: ParameterPoint,
    tol: f64,
    bounds: Option<&ParamBox>,
) -> Result<Inversion> {
    if data.len() != mode.dim() {
        return Err(RinglabError::Config(format!("expected {} data components, got {}", mode.dim(), data.len())));
    }
    let admissible = |p: &ParameterPoint| -> bool {
        p.validate().is_ok() && bounds.is_none_or(|b| p.a.abs() >= b.a_min)
    };
    if !admissible(&guess) {
        return Err(RinglabError::Inversion(format!("initial guess {guess:?} is outside the admissible set")));
    }
    let mut p = guess;
    let mut r = residual_vec(model, mode, &p, data)?;
    let mut rn = l2(&r);
    for it in 0..=MAX_NEWTON_ITERATIONS {
        if rn < tol {
            return Ok(Inversion { point: p, iterations: it, residual: rn });
        }
        if it == MAX_NEWTON_ITERATIONS {
            break;
        }
        let jac = data_jacobian(model, mode, &p)?;
        let sv = jac.clone().singular_values();
        let smax = sv.max();
        if !(sv.min() > SINGULAR_RCOND * smax.max(f64::MIN_POSITIVE)) {
            return Err(RinglabError::Inversion(format!("singular Jacobian at {p:?}")));
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(r.clone()))
            .ok_or_else(|| RinglabError::Inversion(format!("singular Jacobian at {p:?}")))?;
        let x = p.to_vec(mode);
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi - damping * si).collect();
            let pn = p.with_vec(&xn);
            if admissible(&pn) {
                let rr = residual_vec(model, mode, &pn, data)?;
                let nn = l2(&rr);
                if nn < rn || nn < tol {
                    accepted = Some((pn, rr, nn));
                    break;
                }
            }
            damping *= 0.5;
        }
        match accepted {
            Some((pn, rr, nn)) => {
                p = pn;
                r = rr;
                rn = nn;
            }
            None => {
                return Err(RinglabError::Inversion(format!(
                    "no admissible descent step from {p:?} (residual {rn:.3e})"
                )))
            }
        }
    }
    Err(RinglabError::Inversion(format!(
        "Newton did not converge in {MAX_NEWTON_ITERATIONS} iterations (residual {rn:.3e})"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseConstants {
    /// `c*`: smallest `|det DG|` on the grid.
    pub jac_det_min: f64,
    /// `C*`: largest `||(DG)^{-1}||_2` on the grid.
    pub c_star: f64,
    pub grid_n: usize,
    pub points: usize,
    pub step_rel: f64,
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == hi || n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid evaluation of the inverse-stability constants over a box. Points
/// with `|a| < a_min` are skipped; in two-parameter mode the `Lambda` range
/// is swept as well and the worst value kept.
pub fn inverse_constants(model: &LatticeModel, mode: InversionMode, bounds: &ParamBox, grid_n: usize) -> Result<InverseConstants> {
    bounds.validate()?;
    if grid_n == 0 {
        return Err(RinglabError::Config("grid_n must be at least 1".into()));
    }
    let mut det_min = f64::INFINITY;
    let mut c_star = 0.0f64;
    let mut points = 0;
    for &m in &axis(bounds.m.0, bounds.m.1, grid_n) {
        for &a in &axis(bounds.a.0, bounds.a.1, grid_n) {
            if a.abs() < bounds.a_min {
                continue;
            }
            for &lambda in &axis(bounds.lambda.0, bounds.lambda.1, grid_n) {
                let p = ParameterPoint::new(m, a, lambda);
                let jac = data_jacobian(model, mode, &p)?;
                let sv = jac.clone().singular_values();
                let smin = sv.min();
                if !(smin > SINGULAR_RCOND * sv.max().max(f64::MIN_POSITIVE)) {
                    return Err(RinglabError::Inversion(format!("singular data-map Jacobian at {p:?}")));
                }
                det_min = det_min.min(jac.determinant().abs());
                c_star = c_star.max(1.0 / smin);
                points += 1;
            }
        }
    }
    if points == 0 {
        return Err(RinglabError::Config("parameter box contains no admissible grid point".into()));
    }
    Ok(InverseConstants { jac_det_min: det_min, c_star, grid_n, points, step_rel: JACOBIAN_STEP })
}

/// `eps <= min(1/8, |z|/20)`.
pub fn bias_hypothesis(eps: f64, z_abs: f64) -> bool {
    eps <= (0.125f64).min(z_abs / 20.0)
}

/// `(5 sqrt 2 C* / (Delta ell)) (eps+/|z+| + eps-/|z-|)`.
pub fn bias_bound_2p(eps_plus: f64, eps_minus: f64, z_plus: f64, z_minus: f64, delta: f64, ell: u32, c_star: f64) -> f64 {
    5.0 * 2f64.sqrt() * c_star / (delta * ell as f64) * (eps_plus / z_plus + eps_minus / z_minus)
}

/// Two-parameter form with `C*^(3)` plus `(10 C*^(3) / (Delta (n + 1/2))) eps+/|z+|`.
#[allow(clippy::too_many_arguments)]
pub fn bias_bound_3p(
    eps_plus: f64,
    eps_minus: f64,
    z_plus: f64,
    z_minus: f64,
    delta: f64,
    ell: u32,
    n: u32,
    c_star3: f64,
) -> f64 {
    bias_bound_2p(eps_plus, eps_minus, z_plus, z_minus, delta, ell, c_star3)
        + 10.0 * c_star3 / (delta * (n as f64 + 0.5)) * eps_plus / z_plus
}

/// Tail and measurement parts of the two-parameter bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasSplit {
    pub tail: f64,
    pub meas: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn bias_split(
    eps_tail: (f64, f64),
    eps_meas: (f64, f64),
    z_plus: f64,
    z_minus: f64,
    delta: f64,
    ell: u32,
    c_star: f64,
) -> BiasSplit {
    BiasSplit {
        tail: bias_bound_2p(eps_tail.0, eps_tail.1, z_plus, z_minus, delta, ell, c_star),
        meas: bias_bound_2p(eps_meas.0, eps_meas.1, z_plus, z_minus, delta, ell, c_star),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasConstants {
    pub c_star: f64,
    pub jac_det_min: f64,
    pub ell: u32,
    pub delta: f64,
    pub z_plus: f64,
    pub z_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasReport {
    pub delta_omega_plus: Complex64,
    pub delta_omega_minus: Complex64,
    pub data_err: f64,
    pub param_err: f64,
    pub bound_2p: f64,
    pub bound_3p: f64,
    pub bound_tail: f64,
    pub bound_meas: f64,
    pub constants: BiasConstants,
}
