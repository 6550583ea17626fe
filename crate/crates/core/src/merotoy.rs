//! A small meromorphic laboratory: rational matrix resolvents with explicit
//! Laurent data, their inverse-Laplace line integrals, band isolation by
//! contour subtraction, rank-one residues and localized pseudospectra.
//!
//! Conventions. The time-domain transform is
//! `u(t) = (1/2pi) \int_{Im w = -nu} e^{-iwt} R(w) G(w) dw`, integrated left to
//! right, where `G = g F` is the windowed forcing transform.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, RinglabError};
use crate::quad::{integrate, integrate_pieces, QuadOptions};
use crate::window::WindowPolynomial;
use crate::I;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// A pole with its principal Laurent part. `laurent[q - 1]` multiplies
/// `(w - omega)^{-q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pole {
    pub omega: Complex64,
    pub laurent: Vec<CMatrix>,
}

impl Pole {
    pub fn simple(omega: Complex64, residue: CMatrix) -> Self {
        Self { omega, laurent: vec![residue] }
    }

    pub fn order(&self) -> usize {
        self.laurent.len()
    }
}

/// `R(w) = sum_poles sum_q Pi^[q] (w - w_j)^{-q} + sum_k H_k w^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalResolvent {
    pub dim: usize,
    pub poles: Vec<Pole>,
    /// Polynomial part, lowest degree first.
    pub hol: Vec<CMatrix>,
}

impl RationalResolvent {
    pub fn new(dim: usize, poles: Vec<Pole>, hol: Vec<CMatrix>) -> Result<Self> {
        let r = Self { dim, poles, hol };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(RinglabError::Config("resolvent dimension must be at least 1".into()));
        }
        for (j, p) in self.poles.iter().enumerate() {
            if p.laurent.is_empty() {
                return Err(RinglabError::Config(format!("pole {j} has no Laurent coefficients")));
            }
            if !(p.omega.re.is_finite() && p.omega.im.is_finite()) {
                return Err(RinglabError::Config(format!("pole {j} is not finite")));
            }
            for m in &p.laurent {
                if m.shape() != (self.dim, self.dim) {
                    return Err(RinglabError::Config(format!("pole {j}: Laurent coefficient has wrong shape")));
                }
                if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                    return Err(RinglabError::Config(format!("pole {j}: non-finite Laurent coefficient")));
                }
            }
            for q in &self.poles[j + 1..] {
                if q.omega == p.omega {
                    return Err(RinglabError::Config(format!("repeated pole {}", p.omega)));
                }
            }
        }
        if self.hol.iter().any(|m| m.shape() != (self.dim, self.dim)) {
            return Err(RinglabError::Config("polynomial part has wrong shape".into()));
        }
        Ok(())
    }

    pub fn eval(&self, w: Complex64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for p in &self.poles {
            let inv = (w - p.omega).inv();
            let mut f = inv;
            for m in &p.laurent {
                out += m * f;
                f *= inv;
            }
        }
        let mut wk = ONE;
        for h in &self.hol {
            out += h * wk;
            wk *= w;
        }
        out
    }

    /// `R(w) v` without forming the matrix.
    pub fn apply(&self, w: Complex64, v: &CVector) -> CVector {
        let mut out = CVector::zeros(self.dim);
        for p in &self.poles {
            let inv = (w - p.omega).inv();
            let mut f = inv;
            for m in &p.laurent {
                out += (m * v) * f;
                f *= inv;
            }
        }
        let mut wk = ONE;
        for h in &self.hol {
            out += (h * v) * wk;
            wk *= w;
        }
        out
    }
}

/// Compactly supported forcing `f(t) = (t(1-t))^k e^{beta t} * payload` on
/// `[0, 1]`. Its first `k - 1` derivatives vanish at both ends and the `k`-th
/// jumps, so `|F(sigma - i nu)|` decays like `|sigma|^{-(k+1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub k: u32,
    pub beta: f64,
    pub payload: CVector,
}

impl ForcingSpec {
    pub fn new(k: u32, beta: f64, payload: CVector) -> Result<Self> {
        if k == 0 {
            return Err(RinglabError::Config("forcing smoothness k must be at least 1".into()));
        }
        if !beta.is_finite() {
            return Err(RinglabError::Config("forcing exponent must be finite".into()));
        }
        Ok(Self { k, beta, payload })
    }

    pub fn shape(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        (t * (1.0 - t)).powi(self.k as i32) * (self.beta * t).exp()
    }

    /// Scalar part `\int_0^1 e^{iwt} f(t) dt` of the transform, by adaptive
    /// quadrature.
    pub fn shape_transform(&self, w: Complex64) -> Complex64 {
        let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-10, max_intervals: 2000 };
        let alpha = I * w + self.beta;
        let k = self.k as i32;
        integrate(|t: f64| (alpha * t).exp() * (t * (1.0 - t)).powi(k), 0.0, 1.0, opts).value
    }

    /// Same integral without adaptivity. With `p(t) = (t(1-t))^k` and
    /// `alpha = beta + iw`, integrating by parts until `p` is exhausted gives
    /// `sum_{j=k}^{2k} p^{(j)}(0) (e^alpha - (-1)^j) / alpha^{j+1}`, using
    /// `p^{(j)}(1) = (-1)^j p^{(j)}(0)`. Every term already carries the
    /// final decay, so the sum is stable once `|alpha|` exceeds `2k`; below
    /// that a fixed composite Kronrod rule is exact to rounding.
    pub fn shape_transform_exact(&self, w: Complex64) -> Complex64 {
        let alpha = I * w + self.beta;
        let k = self.k as usize;
        if alpha.norm() < 4.0 * k as f64 + 8.0 {
            let ki = k as i32;
            let f = |t: f64| (alpha * t).exp() * (t * (1.0 - t)).powi(ki);
            let panels = 8;
            let mut acc = ZERO;
            for j in 0..panels {
                let a = j as f64 / panels as f64;
                acc += gk15_fixed(&f, a, a + 1.0 / panels as f64);
            }
            return acc;
        }
        let ea = alpha.exp();
        let inv = alpha.inv();
        let mut binom = 1.0f64;
        let mut fact = (1..=k).map(|v| v as f64).product::<f64>();
        let mut apow = inv.powu(k as u32 + 1);
        let mut acc = ZERO;
        for i in 0..=k {
            let j = k + i;
            if i > 0 {
                binom *= (k + 1 - i) as f64 / i as f64;
                fact *= j as f64;
                apow *= inv;
            }
            // p^{(j)}(0) = j! C(k, j-k) (-1)^{j-k}
            let dj = fact * binom * if i % 2 == 0 { 1.0 } else { -1.0 };
            let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += apow * (dj * (ea - sign));
        }
        acc
    }
}

fn gk15_fixed<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Complex64 {
    crate::quad::gk15(&mut |t| f(t), a, b).0
}

pub fn forcing_transform(f: &ForcingSpec, w: Complex64) -> CVector {
    if f.payload.iter().all(|v| *v == ZERO) {
        return CVector::zeros(f.payload.len());
    }
    &f.payload * f.shape_transform(w)
}

/// Closed-form counterpart of [`forcing_transform`], used inside contour
/// integrals where the transform is evaluated many thousands of times.
pub fn forcing_transform_exact(f: &ForcingSpec, w: Complex64) -> CVector {
    &f.payload * f.shape_transform_exact(w)
}

/// Derivatives `F^{(r)}(w0)`, `r = 0..=max_order`, by the trapezoid rule on a
/// Cauchy circle of radius `rho`. Spectrally accurate for entire `F`.
pub fn cauchy_derivatives<F>(f: &F, w0: Complex64, max_order: usize, rho: f64, n: usize) -> Vec<CVector>
where
    F: Fn(Complex64) -> CVector,
{
    let samples: Vec<(Complex64, CVector)> = (0..n)
        .map(|k| {
            let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
            (e, f(w0 + e * rho))
        })
        .collect();
    let dim = samples[0].1.len();
    let mut out = Vec::with_capacity(max_order + 1);
    let mut fact = 1.0;
    for r in 0..=max_order {
        if r > 0 {
            fact *= r as f64;
        }
        let mut acc = CVector::zeros(dim);
        for (e, v) in &samples {
            acc += v * e.powi(-(r as i32));
        }
        out.push(acc * Complex64::new(fact / (n as f64 * rho.powi(r as i32)), 0.0));
    }
    out
}

const CAUCHY_RADIUS: f64 = 0.25;
const CAUCHY_POINTS: usize = 32;

/// `i e^{-i w0 t} sum_q sum_r (-it)^{q-1-r} / ((q-1-r)! r!) Pi^[q] F^{(r)}(w0)`,
/// i.e. `i Res_{w0} [e^{-iwt} R(w) F(w)]`.
pub fn residue_time_term<F>(pole: &Pole, f: &F, t: f64) -> CVector
where
    F: Fn(Complex64) -> CVector,
{
    let m = pole.order();
    let derivs = if m == 1 {
        vec![f(pole.omega)]
    } else {
        cauchy_derivatives(f, pole.omega, m - 1, CAUCHY_RADIUS, CAUCHY_POINTS)
    };
    let dim = pole.laurent[0].nrows();
    let mit = -I * t;
    let mut acc = CVector::zeros(dim);
    let mut fact = vec![1.0f64; m + 1];
    for j in 1..=m {
        fact[j] = fact[j - 1] * j as f64;
    }
    for q in 1..=m {
        let mut inner = CVector::zeros(dim);
        for (r, d) in derivs.iter().enumerate().take(q) {
            let s = q - 1 - r;
            inner += d * (mit.powu(s as u32) / (fact[s] * fact[r]));
        }
        acc += &pole.laurent[q - 1] * inner;
    }
    acc * (I * (-I * pole.omega * t).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineIntegral {
    pub value: CVector,
    pub sigma_max: f64,
    /// Envelope estimate of the discarded tails `|sigma| > sigma_max`.
    pub truncation_estimate: f64,
    pub quadrature_error: f64,
    pub converged: bool,
}

fn check_line(r: &RationalResolvent, nu: f64) -> Result<()> {
    for p in &r.poles {
        if (p.omega.im + nu).abs() <= 1e-12 * (1.0 + nu.abs()) {
            return Err(RinglabError::Contour(format!("pole {} lies on the line Im w = {}", p.omega, -nu)));
        }
    }
    Ok(())
}

struct Envelope {
    value: f64,
    decay: f64,
}

/// Largest integrand norm sampled over `[s, 2s)` on one side, and the local
/// power-law decay measured against `[2s, 4s)`.
fn side_envelope<H: Fn(f64) -> f64>(h: &H, s: f64, sign: f64) -> Envelope {
    let sample = |a: f64| (0..24).map(|j| h(sign * a * (1.0 + j as f64 / 24.0))).fold(0.0, f64::max);
    let e1 = sample(s);
    let e2 = sample(2.0 * s);
    let decay = if e1 > 0.0 && e2 > 0.0 { (e1 / e2).log2() } else if e1 == 0.0 { f64::INFINITY } else { 0.0 };
    Envelope { value: e1, decay }
}

fn tail_estimate<H: Fn(f64) -> f64>(h: &H, s: f64) -> f64 {
    let mut total = 0.0;
    for sign in [-1.0, 1.0] {
        let env = side_envelope(h, s, sign);
        if env.value == 0.0 {
            continue;
        }
        total += if env.decay > 1.05 { env.value * s / (env.decay - 1.0) } else { f64::INFINITY };
    }
    total / (2.0 * std::f64::consts::PI)
}

const SIGMA_CAP: f64 = 1.0e6;

fn choose_sigma_max<H: Fn(f64) -> f64>(h: &H, start: f64, tol: f64) -> (f64, f64) {
    let mut s = start;
    loop {
        let est = tail_estimate(h, s);
        if est < tol / 10.0 || 2.0 * s > SIGMA_CAP {
            return (s, est);
        }
        s *= 2.0;
    }
}

fn default_sigma_start(r: &RationalResolvent) -> f64 {
    let reach = r.poles.iter().map(|p| p.omega.re.abs()).fold(0.0, f64::max);
    (2.0 * reach + 8.0).max(16.0)
}

/// Line integral for an arbitrary entire weight `G` (already including any
/// window and forcing transform).
pub fn line_integral_with<G>(
    r: &RationalResolvent,
    gf: &G,
    nu: f64,
    t: f64,
    sigma_max: Option<f64>,
    tol: f64,
) -> Result<LineIntegral>
where
    G: Fn(Complex64) -> CVector,
{
    if !(t > 0.0) {
        return Err(RinglabError::Config(format!("time must be positive, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(RinglabError::Config("tolerance must be positive".into()));
    }
    check_line(r, nu)?;
    let integrand = |s: f64| -> CVector {
        let w = Complex64::new(s, -nu);
        r.apply(w, &gf(w)) * (-I * w * t).exp()
    };
    let norm = |s: f64| integrand(s).norm();
    let (smax, est) = match sigma_max {
        Some(s) if s > 0.0 => (s, tail_estimate(&norm, s)),
        Some(s) => return Err(RinglabError::Config(format!("sigma_max must be positive, got {s}"))),
        None => choose_sigma_max(&norm, default_sigma_start(r), tol),
    };
    Ok(integrate_line(r, &integrand, nu, smax, est, tol))
}

fn integrate_line<H>(r: &RationalResolvent, integrand: &H, nu: f64, smax: f64, est: f64, tol: f64) -> LineIntegral
where
    H: Fn(f64) -> CVector,
{
    let mut breaks = vec![-smax, 0.0, smax];
    for p in &r.poles {
        if (p.omega.im + nu).abs() < 1.0 && p.omega.re.abs() < smax {
            breaks.push(p.omega.re);
        }
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let two_pi = 2.0 * std::f64::consts::PI;
    let opts = QuadOptions { abs_tol: two_pi * tol / 20.0 / breaks.len() as f64, rel_tol: 1e-13, max_intervals: 20000 };
    let res = integrate_pieces(|s: f64| integrand(s).as_slice().to_vec(), &breaks, opts);
    LineIntegral {
        value: CVector::from_vec(res.value) / Complex64::new(two_pi, 0.0),
        sigma_max: smax,
        truncation_estimate: est,
        quadrature_error: res.error / two_pi,
        converged: res.converged,
    }
}

/// `G(w) = g(w) F(w)` for the forcing transform and an optional window.
pub fn windowed_forcing<'a>(f: &'a ForcingSpec, g: Option<&'a WindowPolynomial>) -> impl Fn(Complex64) -> CVector + 'a {
    move |w| {
        let v = forcing_transform_exact(f, w);
        match g {
            Some(g) => v * g.eval(w),
            None => v,
        }
    }
}

pub fn line_integral(
    r: &RationalResolvent,
    f: &ForcingSpec,
    g: Option<&WindowPolynomial>,
    nu: f64,
    t: f64,
    sigma_max: Option<f64>,
    tol: f64,
) -> Result<LineIntegral> {
    if f.payload.len() != r.dim {
        return Err(RinglabError::Config("forcing payload dimension differs from resolvent".into()));
    }
    line_integral_with(r, &windowed_forcing(f, g), nu, t, sigma_max, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    /// `I_{nu1}(t) - I_{nu2}(t)`.
    pub difference: CVector,
    /// Residue-theorem value of the strip: `-sum residue_time_term`.
    pub residue_sum: CVector,
    pub mismatch: f64,
    /// Indices of the poles with `-nu2 < Im w < -nu1`.
    pub strip_poles: Vec<usize>,
    pub sigma_max: f64,
    pub truncation_estimate: f64,
}

/// Contour subtraction between the lines `Im w = -nu1` (upper) and
/// `Im w = -nu2` (lower). The upper line minus the lower line is the
/// clockwise boundary of the strip, so the difference equals
/// `-2 pi i / 2 pi` times the enclosed residues, which is
/// `-sum_j residue_time_term_j`.
pub fn band_subtract_with<G>(
    r: &RationalResolvent,
    gf: &G,
    nu1: f64,
    nu2: f64,
    t: f64,
    sigma_max: Option<f64>,
    tol: f64,
) -> Result<BandResult>
where
    G: Fn(Complex64) -> CVector,
{
    if !(nu1 < nu2) {
        return Err(RinglabError::Config(format!("need nu1 < nu2, got {nu1} and {nu2}")));
    }
    if !(t > 0.0) {
        return Err(RinglabError::Config(format!("time must be positive, got {t}")));
    }
    check_line(r, nu1)?;
    check_line(r, nu2)?;
    let make = |nu: f64| {
        move |s: f64| -> CVector {
            let w = Complex64::new(s, -nu);
            r.apply(w, &gf(w)) * (-I * w * t).exp()
        }
    };
    let (h1, h2) = (make(nu1), make(nu2));
    let smax = match sigma_max {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(RinglabError::Config(format!("sigma_max must be positive, got {s}"))),
        None => {
            let start = default_sigma_start(r);
            let a = choose_sigma_max(&|s: f64| h1(s).norm(), start, tol).0;
            let b = choose_sigma_max(&|s: f64| h2(s).norm(), start, tol).0;
            a.max(b)
        }
    };
    let e1 = tail_estimate(&|s: f64| h1(s).norm(), smax);
    let e2 = tail_estimate(&|s: f64| h2(s).norm(), smax);
    let l1 = integrate_line(r, &h1, nu1, smax, e1, tol);
    let l2 = integrate_line(r, &h2, nu2, smax, e2, tol);
    let difference = &l1.value - &l2.value;

    let mut residue_sum = CVector::zeros(r.dim);
    let mut strip_poles = Vec::new();
    for (j, p) in r.poles.iter().enumerate() {
        if p.omega.im < -nu1 && p.omega.im > -nu2 {
            strip_poles.push(j);
            residue_sum -= residue_time_term(p, gf, t);
        }
    }
    let mismatch = (&difference - &residue_sum).norm();
    Ok(BandResult { difference, residue_sum, mismatch, strip_poles, sigma_max: smax, truncation_estimate: e1 + e2 })
}

#[allow(clippy::too_many_arguments)]
pub fn band_subtract(
    r: &RationalResolvent,
    f: &ForcingSpec,
    g: Option<&WindowPolynomial>,
    nu1: f64,
    nu2: f64,
    t: f64,
    sigma_max: Option<f64>,
    tol: f64,
) -> Result<BandResult> {
    if f.payload.len() != r.dim {
        return Err(RinglabError::Config("forcing payload dimension differs from resolvent".into()));
    }
    band_subtract_with(r, &windowed_forcing(f, g), nu1, nu2, t, sigma_max, tol)
}

/// `P(w) = P0 + (w - w0) P1 + (w - w0)^2 P2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPencil {
    pub omega0: Complex64,
    pub p0: CMatrix,
    pub p1: CMatrix,
    pub p2: Option<CMatrix>,
}

impl MatrixPencil {
    pub fn new(omega0: Complex64, p0: CMatrix, p1: CMatrix, p2: Option<CMatrix>) -> Result<Self> {
        let d = p0.nrows();
        let square = |m: &CMatrix| m.nrows() == d && m.ncols() == d;
        if d == 0 || !square(&p0) || !square(&p1) || p2.as_ref().is_some_and(|m| !square(m)) {
            return Err(RinglabError::Config("pencil matrices must be square and of equal size".into()));
        }
        Ok(Self { omega0, p0, p1, p2 })
    }

    pub fn dim(&self) -> usize {
        self.p0.nrows()
    }

    pub fn eval(&self, w: Complex64) -> CMatrix {
        let dw = w - self.omega0;
        let mut m = &self.p0 + &self.p1 * dw;
        if let Some(p2) = &self.p2 {
            m += p2 * (dw * dw);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneResidue {
    pub projector: CMatrix,
    pub u0: CVector,
    pub v0: CVector,
    /// `<P1 u0, v0> = v0^H P1 u0`; small values signal strong non-normal
    /// amplification.
    pub denom: Complex64,
}

impl RankOneResidue {
    pub fn apply(&self, f: &CVector) -> CVector {
        &self.projector * f
    }
}

/// Relative size below which a singular value counts as zero.
pub const KERNEL_REL_TOL: f64 = 1e-10;

/// Residue of `P(w)^{-1}` at `w0` from the kernel of `P(w0)`:
/// `Pi f = <f, v0> u0 / <P1 u0, v0>` with `<x, y> = y^H x`.
pub fn rank_one_residue(p: &MatrixPencil, omega0: Complex64) -> Result<RankOneResidue> {
    let p0 = p.eval(omega0);
    let mut p1 = p.p1.clone();
    if let Some(p2) = &p.p2 {
        p1 += p2 * (2.0 * (omega0 - p.omega0));
    }
    let svd = p0.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(RinglabError::Structure("singular value decomposition failed".into())),
    };
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(RinglabError::Structure("P(w0) vanishes identically".into()));
    }
    let thresh = KERNEL_REL_TOL * smax;
    let small: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= thresh).collect();
    if small.len() != 1 {
        return Err(RinglabError::Structure(format!("kernel dimension is {}, expected 1", small.len())));
    }
    let i0 = small[0];
    let u0: CVector = vt.row(i0).adjoint();
    let v0: CVector = u.column(i0).into_owned();
    let denom = v0.dotc(&(&p1 * &u0));
    if denom.norm() <= 1e-14 * op_norm(&p1).max(f64::MIN_POSITIVE) {
        return Err(RinglabError::Structure("vanishing normalization <P1 u0, v0>".into()));
    }
    let projector = (&u0 * v0.adjoint()) / denom;
    Ok(RankOneResidue { projector, u0, v0, denom })
}

/// `(1/2 pi i) \oint P(w)^{-1} dw` on a circle, by the trapezoid rule.
pub fn contour_inverse_residue(p: &MatrixPencil, center: Complex64, radius: f64, n: usize) -> Result<CMatrix> {
    let d = p.dim();
    let mut acc = CMatrix::zeros(d, d);
    for k in 0..n {
        let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        let inv = p
            .eval(center + e * radius)
            .try_inverse()
            .ok_or_else(|| RinglabError::Contour("pencil singular on the contour".into()))?;
        acc += inv * (e * radius);
    }
    Ok(acc / Complex64::new(n as f64, 0.0))
}

/// Scalar detector amplitude
/// `a = (<F(w0), v0> / <P1 u0, v0>) detector(u0)`, with the detector applied
/// as the bilinear pairing `sum_i d_i u_i`.
pub fn amplitude_pairing(
    f_at_pole: &CVector,
    u0: &CVector,
    v0: &CVector,
    p1: &CMatrix,
    detector: &CVector,
) -> Result<Complex64> {
    let denom = v0.dotc(&(p1 * u0));
    if denom == ZERO || denom.norm() <= 1e-14 * op_norm(p1) * u0.norm() * v0.norm() {
        return Err(RinglabError::Structure("excitation singularity: <P1 u0, v0> = 0".into()));
    }
    Ok(v0.dotc(f_at_pole) / denom * detector.dot(u0))
}

/// Scalar model of a localized resolvent near labeled poles:
/// `N(w) = hol + E+ E- / |q(w)|` with `q(w) = prod_j (w - w_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoModel {
    pub poles: Vec<Complex64>,
    pub e_plus: f64,
    pub e_minus: f64,
    pub hol_bound: f64,
}

impl PseudoModel {
    pub fn new(poles: Vec<Complex64>, e_plus: f64, e_minus: f64, hol_bound: f64) -> Result<Self> {
        if poles.is_empty() {
            return Err(RinglabError::Config("pseudospectrum model needs at least one pole".into()));
        }
        if !(e_plus > 0.0 && e_minus > 0.0 && hol_bound >= 0.0) {
            return Err(RinglabError::Config("need E+ > 0, E- > 0 and hol >= 0".into()));
        }
        if crate::window::min_separation(&poles) == 0.0 {
            return Err(RinglabError::Config("pseudospectrum poles must be distinct".into()));
        }
        Ok(Self { poles, e_plus, e_minus, hol_bound })
    }

    pub fn q(&self, w: Complex64) -> Complex64 {
        self.poles.iter().fold(ONE, |acc, p| acc * (w - p))
    }

    pub fn norm(&self, w: Complex64) -> f64 {
        self.hol_bound + self.e_plus * self.e_minus / self.q(w).norm()
    }

    /// `|q'(w_j)|`.
    pub fn q_derivative_at(&self, j: usize) -> f64 {
        let wj = self.poles[j];
        self.poles
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .fold(1.0, |acc, (_, p)| acc * (wj - p).norm())
    }

    /// Constant with `|q(w)| >= c_q dist(w, poles)` everywhere: on the cell
    /// nearest to `w_j`, every other factor is at least half the distance
    /// between the poles, so `c_q = min_j |q'(w_j)| / 2^{N-1}`.
    pub fn c_q(&self) -> f64 {
        let n = self.poles.len() as i32;
        (0..self.poles.len()).map(|j| self.q_derivative_at(j)).fold(f64::INFINITY, f64::min) / 2f64.powi(n - 1)
    }

    /// `C = 2 E+ E- / c_q`; valid for `hol * eps <= 1/2`.
    pub fn inclusion_constant(&self) -> f64 {
        2.0 * self.e_plus * self.e_minus / self.c_q()
    }

    /// First-order radius of the disk around pole `j`.
    pub fn expected_radius(&self, j: usize, eps: f64) -> f64 {
        self.e_plus * self.e_minus * eps / self.q_derivative_at(j)
    }

    pub fn dist_to_poles(&self, w: Complex64) -> f64 {
        self.poles.iter().map(|p| (w - p).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Square `n x n` scan window centred at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanWindow {
    pub center: Complex64,
    pub half_width: f64,
    pub n: usize,
}

impl ScanWindow {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n.max(2) - 1) as f64
    }

    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        let h = self.spacing();
        self.center + Complex64::new(-self.half_width + ix as f64 * h, -self.half_width + iy as f64 * h)
    }

    pub fn contains(&self, w: Complex64) -> bool {
        let d = w - self.center;
        d.re.abs() <= self.half_width && d.im.abs() <= self.half_width
    }
}

/// One window per pole, wide enough to hold the predicted disk twice over.
pub fn zoom_windows(model: &PseudoModel, eps: f64, n: usize) -> Vec<ScanWindow> {
    let half = 2.0 * model.inclusion_constant() * eps;
    model.poles.iter().map(|&c| ScanWindow { center: c, half_width: half, n }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoScan {
    pub eps: f64,
    pub c_q: f64,
    pub c_const: f64,
    pub radius: f64,
    pub points: usize,
    pub marked: usize,
    /// Marked points farther than `C eps` from every pole.
    pub excluded_outside: usize,
    pub max_marked_dist: f64,
    pub hol_ok: bool,
    pub inclusion_holds: bool,
}

/// Marks the grid points with `N(w) > 1/eps` and checks that they lie in
/// `U_j B(w_j, C eps)`.
pub fn pseudospectrum_scan(model: &PseudoModel, windows: &[ScanWindow], eps: f64) -> Result<PseudoScan> {
    if !(eps > 0.0) {
        return Err(RinglabError::Config(format!("eps must be positive, got {eps}")));
    }
    for w in windows {
        if w.n < 2 || !(w.half_width > 0.0) {
            return Err(RinglabError::Config("scan window needs n >= 2 and positive width".into()));
        }
        for (j, p) in model.poles.iter().enumerate() {
            let r = model.expected_radius(j, eps);
            if w.contains(*p) && w.spacing() > 0.5 * r {
                return Err(RinglabError::Resolution(format!(
                    "grid spacing {:.3e} does not resolve the disk of radius {:.3e} around {}",
                    w.spacing(),
                    r,
                    p
                )));
            }
        }
    }
    let c_q = model.c_q();
    let c_const = model.inclusion_constant();
    let radius = c_const * eps;
    let level = 1.0 / eps;
    let (mut points, mut marked, mut outside) = (0usize, 0usize, 0usize);
    let mut max_dist = 0.0f64;
    for w in windows {
        for iy in 0..w.n {
            for ix in 0..w.n {
                let z = w.point(ix, iy);
                points += 1;
                if model.norm(z) > level {
                    marked += 1;
                    let d = model.dist_to_poles(z);
                    max_dist = max_dist.max(d);
                    if d > radius {
                        outside += 1;
                    }
                }
            }
        }
    }
    let hol_ok = model.hol_bound * eps <= 0.5;
    Ok(PseudoScan {
        eps,
        c_q,
        c_const,
        radius,
        points,
        marked,
        excluded_outside: outside,
        max_marked_dist: max_dist,
        hol_ok,
        inclusion_holds: outside == 0,
    })
}

/// `log10 N(w)` on a window, row-major in `Im w`.
pub fn model_norm_grid(model: &PseudoModel, w: &ScanWindow) -> Vec<(Complex64, f64)> {
    let mut out = Vec::with_capacity(w.n * w.n);
    for iy in 0..w.n {
        for ix in 0..w.n {
            let z = w.point(ix, iy);
            out.push((z, model.norm(z).log10()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: Complex64) -> CMatrix {
        CMatrix::from_element(1, 1, v)
    }

    fn one_pole(omega: Complex64) -> RationalResolvent {
        RationalResolvent::new(1, vec![Pole::simple(omega, scalar(ONE))], vec![]).unwrap()
    }

    fn bump(k: u32) -> ForcingSpec {
        ForcingSpec::new(k, 0.3, CVector::from_element(1, ONE)).unwrap()
    }

    #[test]
    fn forcing_transform_at_zero_is_the_mass() {
        let f = ForcingSpec::new(2, 0.0, CVector::from_element(1, ONE)).unwrap();
        // \int_0^1 t^2 (1-t)^2 dt = 1/30
        let v = forcing_transform(&f, ZERO)[0];
        assert!((v - 1.0 / 30.0).norm() < 1e-14);
        let zero = ForcingSpec::new(3, 0.1, CVector::zeros(2)).unwrap();
        assert_eq!(forcing_transform(&zero, c(3.0, -1.0)), CVector::zeros(2));
    }

    #[test]
    fn exact_transform_matches_adaptive() {
        for k in [1u32, 2, 4, 8] {
            let f = ForcingSpec::new(k, -0.4, CVector::from_element(1, ONE)).unwrap();
            for w in [c(0.0, 0.0), c(3.0, -0.5), c(-17.0, -2.0), c(45.0, 0.3), c(400.0, -1.0)] {
                let a = f.shape_transform(w);
                let b = f.shape_transform_exact(w);
                // at large |w| the adaptive value is a cancellation of O(1)
                // contributions, so compare on the integrand scale too
                assert!((a - b).norm() <= 1e-10 * a.norm() + 1e-13, "k={k} w={w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn forcing_transform_decays_like_k_plus_one() {
        for k in [2u32, 4] {
            let f = bump(k);
            let env = |s: f64| (0..64).map(|j| f.shape_transform(c(s + j as f64 * 0.1, -0.5)).norm()).fold(0.0, f64::max);
            let order = (env(20.0) / env(80.0)).ln() / 4f64.ln();
            assert!((order - (k as f64 + 1.0)).abs() < 0.3, "k={k} order={order}");
        }
    }

    #[test]
    fn simple_residue_term() {
        let w0 = c(1.0, -1.0);
        let pole = Pole::simple(w0, CMatrix::identity(2, 2));
        let v = CVector::from_vec(vec![c(1.0, 0.5), c(-2.0, 0.0)]);
        let out = residue_time_term(&pole, &|_| v.clone(), 1.0);
        let expect = &v * (I * (-I * w0).exp());
        assert!((out - expect).norm() < 1e-14);
        let zero = residue_time_term(&pole, &|_| CVector::zeros(2), 1.0);
        assert_eq!(zero, CVector::zeros(2));
    }

    #[test]
    fn double_pole_term_is_affine_in_t() {
        let w0 = c(0.5, -0.4);
        let pole = Pole { omega: w0, laurent: vec![scalar(c(0.7, 0.1)), scalar(c(-0.3, 0.9))] };
        let f = |w: Complex64| CVector::from_element(1, (0.3 * w).exp() + w * w);
        let (f0, f1) = ((0.3 * w0).exp() + w0 * w0, 0.3 * (0.3 * w0).exp() + 2.0 * w0);
        // i e^{-i w0 t} [P1 F + P2 (F' - i t F)]
        let alpha = pole.laurent[0][(0, 0)] * f0 + pole.laurent[1][(0, 0)] * f1;
        let beta = -I * pole.laurent[1][(0, 0)] * f0;
        for t in [1.0, 2.0] {
            let got = residue_time_term(&pole, &f, t)[0];
            let expect = I * (-I * w0 * t).exp() * (alpha + beta * t);
            assert!((got - expect).norm() < 1e-12, "t={t}: {got} vs {expect}");
        }
    }

    #[test]
    fn line_integral_rejects_pole_on_line() {
        let r = one_pole(c(1.0, -1.0));
        let err = line_integral(&r, &bump(4), None, 1.0, 1.0, Some(10.0), 1e-8).unwrap_err();
        assert!(matches!(err, RinglabError::Contour(_)));
        let zero = ForcingSpec::new(4, 0.0, CVector::zeros(1)).unwrap();
        let li = line_integral(&r, &zero, None, 0.5, 1.0, None, 1e-8).unwrap();
        assert_eq!(li.value[0], ZERO);
    }

    #[test]
    fn line_above_all_poles_decays_like_e_minus_nu_t() {
        let r = one_pole(c(0.8, -1.0));
        let f = bump(6);
        let nu = 0.5;
        let v: Vec<f64> = [6.0, 12.0]
            .iter()
            .map(|&t| line_integral(&r, &f, None, nu, t, None, 1e-12).unwrap().value.norm())
            .collect();
        // the line integral is the solution after the forcing ends, which
        // decays like e^{Im w0 t}; the envelope e^{-nu t} bounds it
        assert!(v[0] <= (-nu * 6.0f64).exp() * 1.0);
        let rate = (v[0] / v[1]).ln() / 6.0;
        assert!((rate - 1.0).abs() < 1e-3, "rate {rate}");
    }

    #[test]
    fn band_single_simple_pole() {
        let w0 = c(1.0, -1.0);
        let r = one_pole(w0);
        let f = bump(6);
        for t in [1.0, 2.0, 5.0] {
            let b = band_subtract(&r, &f, None, 0.5, 2.0, t, None, 1e-8).unwrap();
            assert_eq!(b.strip_poles, vec![0]);
            let oracle = I * (-I * w0 * t).exp() * forcing_transform(&f, w0)[0];
            assert!((b.difference[0] + oracle).norm() < 1e-7, "t={t}");
            assert!(b.mismatch < 1e-6, "t={t} mismatch {}", b.mismatch);
        }
    }

    #[test]
    fn band_without_poles_is_zero() {
        let r = one_pole(c(1.0, -3.0));
        let b = band_subtract(&r, &bump(6), None, 0.5, 2.0, 2.0, None, 1e-8).unwrap();
        assert!(b.strip_poles.is_empty());
        assert!(b.difference.norm() < 1e-7);
        assert_eq!(b.residue_sum, CVector::zeros(1));
    }

    #[test]
    fn window_zero_at_strip_pole_removes_it() {
        let w0 = c(1.0, -1.0);
        let r = one_pole(w0);
        let nodes = crate::window::PseudopoleSet::new(vec![c(0.5, -0.2), w0]).unwrap();
        let g = crate::window::lagrange_weight(&nodes, 0).unwrap();
        let b = band_subtract(&r, &bump(8), Some(&g), 0.5, 2.0, 2.0, None, 1e-8).unwrap();
        assert!(b.residue_sum.norm() < 1e-12);
        assert!(b.difference.norm() < 1e-6);
    }

    #[test]
    fn band_five_poles_with_double() {
        let poles = vec![
            Pole::simple(c(0.3, -0.2), scalar(c(1.0, 0.0))),
            Pole::simple(c(-1.2, -0.9), scalar(c(0.5, -0.2))),
            Pole { omega: c(0.7, -1.4), laurent: vec![scalar(c(0.3, 0.3)), scalar(c(-0.4, 0.1))] },
            Pole::simple(c(2.0, -2.5), scalar(c(1.0, 1.0))),
            Pole::simple(c(-0.4, -3.1), scalar(c(-0.8, 0.0))),
        ];
        let r = RationalResolvent::new(1, poles, vec![scalar(c(0.2, 0.0))]).unwrap();
        let b = band_subtract(&r, &bump(6), None, 0.6, 2.0, 2.0, None, 1e-8).unwrap();
        assert_eq!(b.strip_poles, vec![1, 2]);
        assert!(b.mismatch < 1e-6, "mismatch {}", b.mismatch);
    }

    #[test]
    fn diagonal_rank_one_residue() {
        let w0 = c(0.4, -0.3);
        let p0 = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, ONE]));
        let p = MatrixPencil::new(w0, p0, CMatrix::identity(2, 2), None).unwrap();
        let res = rank_one_residue(&p, w0).unwrap();
        let f = CVector::from_vec(vec![c(2.0, 1.0), c(-3.0, 0.5)]);
        let pf = res.apply(&f);
        assert!((pf[0] - f[0]).norm() < 1e-14 && pf[1].norm() < 1e-14);
        let detector = CVector::from_vec(vec![ONE, ZERO]);
        let e1 = CVector::from_vec(vec![ONE, ZERO]);
        let a = amplitude_pairing(&e1, &res.u0, &res.v0, &p.p1, &detector).unwrap();
        let expect = res.v0.dotc(&e1) / res.denom * res.u0[0];
        assert!((a - expect).norm() < 1e-15);
        assert!((a - ONE).norm() < 1e-14);
        let blind = CVector::from_vec(vec![ZERO, ONE]);
        assert_eq!(amplitude_pairing(&e1, &res.u0, &res.v0, &p.p1, &blind).unwrap().norm(), 0.0);
        assert!(amplitude_pairing(&blind, &res.u0, &res.v0, &p.p1, &detector).unwrap().norm() < 1e-15);
    }

    #[test]
    fn rank_one_scales_with_denominator() {
        let w0 = c(0.0, -1.0);
        let p0 = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, c(2.0, 0.0)]));
        let p = MatrixPencil::new(w0, p0.clone(), CMatrix::identity(2, 2), None).unwrap();
        let ps = MatrixPencil::new(w0, p0, CMatrix::identity(2, 2) * c(3.0, 0.0), None).unwrap();
        let a = rank_one_residue(&p, w0).unwrap();
        let b = rank_one_residue(&ps, w0).unwrap();
        assert!((&a.projector / c(3.0, 0.0) - &b.projector).norm() < 1e-14);
        assert!((a.u0.clone() - b.u0.clone()).norm() < 1e-14);
    }

    #[test]
    fn rank_one_structure_errors() {
        let w0 = c(0.0, 0.0);
        let p = MatrixPencil::new(w0, CMatrix::zeros(2, 2), CMatrix::identity(2, 2), None).unwrap();
        assert!(matches!(rank_one_residue(&p, w0), Err(RinglabError::Structure(_))));
        let p0 = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, ONE, ONE]));
        let q = MatrixPencil::new(w0, p0.clone(), CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, ONE, ONE])), None).unwrap();
        assert!(matches!(rank_one_residue(&q, w0), Err(RinglabError::Structure(_))));
        let two = MatrixPencil::new(w0, CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, ZERO, ONE])), CMatrix::identity(3, 3), None).unwrap();
        assert!(matches!(rank_one_residue(&two, w0), Err(RinglabError::Structure(_))));
    }

    #[test]
    fn scalar_pseudospectrum_is_a_disk() {
        let w0 = c(1.0, -0.5);
        let cc = 0.7;
        let m = PseudoModel::new(vec![w0], cc, cc, 0.0).unwrap();
        let eps = 1e-2;
        let r = cc * cc * eps;
        let win = ScanWindow { center: w0, half_width: 2.0 * r, n: 201 };
        let scan = pseudospectrum_scan(&m, &[win], eps).unwrap();
        assert!(scan.inclusion_holds);
        let mut inside = 0;
        for iy in 0..win.n {
            for ix in 0..win.n {
                let z = win.point(ix, iy);
                let d = (z - w0).norm();
                if (d - r).abs() > 1e-9 * r {
                    assert_eq!(m.norm(z) > 1.0 / eps, d < r);
                }
                inside += usize::from(d < r);
            }
        }
        assert!(scan.marked.abs_diff(inside) <= 8);
    }

    #[test]
    fn pseudospectrum_resolution_and_shrinking() {
        let m = PseudoModel::new(vec![c(0.0, -0.5), c(1.0, -0.5)], 1.0, 1.0, 0.1).unwrap();
        assert!((m.c_q() - 0.5).abs() < 1e-15);
        let coarse = ScanWindow { center: c(0.5, -0.5), half_width: 1.0, n: 400 };
        assert!(matches!(pseudospectrum_scan(&m, &[coarse], 1e-4), Err(RinglabError::Resolution(_))));
        let off = ScanWindow { center: c(0.5, 1.0), half_width: 0.2, n: 50 };
        let scan = pseudospectrum_scan(&m, &[off], 1e-3).unwrap();
        assert_eq!(scan.marked, 0);
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let s = pseudospectrum_scan(&m, &zoom_windows(&m, eps, 200), eps).unwrap();
            assert!(s.inclusion_holds && s.marked > 0, "eps={eps}");
        }
    }

    fn arb_c() -> impl Strategy<Value = Complex64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn rank_one_matches_contour(
            entries in proptest::collection::vec(arb_c(), 32),
            others in proptest::collection::vec((0.5..2.0f64, 0.0..6.3f64), 3),
        ) {
            // P(w) = A diag(w - w0, w - l2, w - l3, w - l4) B has a simple
            // eigenvalue at w0 and the others at distance >= 0.5
            let w0 = c(0.3, -0.7);
            let a = CMatrix::from_iterator(4, 4, entries[..16].iter().cloned()) + CMatrix::identity(4, 4) * c(1.5, 0.0);
            let b = CMatrix::from_iterator(4, 4, entries[16..].iter().cloned()) + CMatrix::identity(4, 4) * c(1.5, 0.0);
            let mut shifts = vec![ZERO];
            shifts.extend(others.iter().map(|(r, th)| -Complex64::from_polar(*r, *th)));
            let p0 = &a * CMatrix::from_diagonal(&CVector::from_vec(shifts)) * &b;
            let p1 = &a * &b;
            let p = MatrixPencil::new(w0, p0, p1, None).unwrap();
            let res = rank_one_residue(&p, w0);
            prop_assume!(res.is_ok());
            let res = res.unwrap();
            let oracle = contour_inverse_residue(&p, w0, 0.25, 512).unwrap();
            let err = (&oracle - &res.projector).norm() / res.projector.norm().max(1.0);
            prop_assert!(err < 1e-8, "err {}", err);
        }
    }
}
