//! Entire interpolation windows built from pseudopole nodes.
//!
//! A window is stored twice: as the node product (used for evaluation, which
//! is better conditioned) and as expanded monomial coefficients (used for
//! derivatives and for the time-domain operator `g(i d/dt)`).

use num_complex::Complex64;

use crate::error::{Result, RinglabError};
use crate::signal::{Mode, SampledSignal};
use crate::I;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudopoleSet {
    nodes: Vec<Complex64>,
    min_sep: f64,
}

impl PseudopoleSet {
    pub fn new(nodes: Vec<Complex64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(RinglabError::Config("pseudopole set is empty".into()));
        }
        let min_sep = min_separation(&nodes);
        if nodes.len() > 1 && !(min_sep > 0.0) {
            return Err(RinglabError::RepeatedNodes(min_sep));
        }
        Ok(Self { nodes, min_sep })
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    /// `d_sharp`; infinite for a single node.
    pub fn min_sep(&self) -> f64 {
        self.min_sep
    }

    /// Polynomial degree `n` of the Lagrange weights (node count minus one).
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }
}

pub fn min_separation(nodes: &[Complex64]) -> f64 {
    let mut d = f64::INFINITY;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            d = d.min((a - b).norm());
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPolynomial {
    pub nodes: PseudopoleSet,
    pub target: usize,
    pub m0: u32,
    pub target_value: Complex64,
    /// Monomial coefficients, lowest degree first.
    coefficients: Vec<Complex64>,
}

impl WindowPolynomial {
    /// The constant window `g = 1`.
    pub fn identity() -> Self {
        let nodes = PseudopoleSet::new(vec![Complex64::new(1.0, 0.0)]).expect("single node");
        Self::build(nodes, 0, 0)
    }

    fn build(nodes: PseudopoleSet, target: usize, m0: u32) -> Self {
        let om = nodes.nodes[target];
        let mut coefficients = vec![Complex64::new(1.0, 0.0)];
        let mut scale = Complex64::new(1.0, 0.0);
        for (j, oj) in nodes.nodes.iter().enumerate() {
            if j == target {
                continue;
            }
            scale *= om - oj;
            // multiply by (w - oj)
            let mut next = vec![Complex64::new(0.0, 0.0); coefficients.len() + 1];
            for (k, ck) in coefficients.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= ck * oj;
            }
            coefficients = next;
        }
        if m0 > 0 {
            scale *= om.powu(m0);
            let mut shifted = vec![Complex64::new(0.0, 0.0); m0 as usize];
            shifted.extend(coefficients);
            coefficients = shifted;
        }
        let inv = scale.inv();
        for ck in &mut coefficients {
            *ck *= inv;
        }
        Self { nodes, target, m0, target_value: om, coefficients }
    }

    pub fn degree(&self) -> usize {
        self.nodes.degree() + self.m0 as usize
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Node-product evaluation.
    pub fn eval(&self, w: Complex64) -> Complex64 {
        let om = self.target_value;
        let mut v = Complex64::new(1.0, 0.0);
        for (j, oj) in self.nodes.nodes.iter().enumerate() {
            if j != self.target {
                v *= (w - oj) / (om - oj);
            }
        }
        if self.m0 > 0 {
            v *= (w / om).powu(self.m0);
        }
        v
    }

    /// `r`-th derivative from the monomial coefficients.
    pub fn derivative(&self, r: usize, w: Complex64) -> Complex64 {
        if r == 0 {
            return self.eval(w);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (r..self.coefficients.len()).rev() {
            let falling: f64 = ((k - r + 1)..=k).map(|v| v as f64).product();
            acc = acc * w + self.coefficients[k] * falling;
        }
        acc
    }
}

pub fn lagrange_weight(nodes: &PseudopoleSet, m: usize) -> Result<WindowPolynomial> {
    if m >= nodes.nodes.len() {
        return Err(RinglabError::Config(format!("target index {m} out of range")));
    }
    Ok(WindowPolynomial::build(nodes.clone(), m, 0))
}

/// `(w / Omega_target)^{m0} G_target(w)`, with `m0 = n + 2` by default.
pub fn modified_window(nodes: &PseudopoleSet, target: usize, m0: Option<u32>) -> Result<WindowPolynomial> {
    if target >= nodes.nodes.len() {
        return Err(RinglabError::Config(format!("target index {target} out of range")));
    }
    let m0 = m0.unwrap_or(nodes.degree() as u32 + 2);
    if m0 > 0 && nodes.nodes[target] == Complex64::new(0.0, 0.0) {
        return Err(RinglabError::ZeroNormalizer);
    }
    Ok(WindowPolynomial::build(nodes.clone(), target, m0))
}

/// `|d^r g(sigma - i nu)|` on a grid of `sigma`.
pub fn growth_profile(w: &WindowPolynomial, nu: f64, sigma_grid: &[f64], r: usize) -> Vec<f64> {
    sigma_grid
        .iter()
        .map(|s| w.derivative(r, Complex64::new(*s, -nu)).norm())
        .collect()
}

/// `4 (5/3)^n`
pub fn lagrange_robustness_constant(n: usize) -> f64 {
    4.0 * (5.0f64 / 3.0).powi(n as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub dev_target: f64,
    pub dev_off: Vec<f64>,
    pub delta: f64,
    pub d_sharp: f64,
    /// `C_n delta / d_sharp`
    pub bound: f64,
    /// `delta <= d_sharp / 8`
    pub hypothesis_ok: bool,
}

impl RobustnessReport {
    pub fn max_deviation(&self) -> f64 {
        self.dev_off.iter().copied().fold(self.dev_target, f64::max)
    }

    pub fn within_bound(&self) -> bool {
        self.max_deviation() <= self.bound * (1.0 + 1e-12) + 1e-15
    }
}

/// Evaluates the Lagrange weight built on `nodes` at the perturbed nodes.
pub fn interp_robustness(nodes: &PseudopoleSet, m: usize, perturbed: &[Complex64]) -> Result<RobustnessReport> {
    if perturbed.len() != nodes.nodes.len() {
        return Err(RinglabError::Config("perturbed node count differs".into()));
    }
    let g = lagrange_weight(nodes, m)?;
    let delta = nodes
        .nodes
        .iter()
        .zip(perturbed)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let d_sharp = nodes.min_sep;
    let mut dev_off = Vec::new();
    let mut dev_target = 0.0;
    for (j, p) in perturbed.iter().enumerate() {
        if j == m {
            dev_target = (g.eval(*p) - 1.0).norm();
        } else {
            dev_off.push(g.eval(*p).norm());
        }
    }
    let n = nodes.degree();
    Ok(RobustnessReport {
        dev_target,
        dev_off,
        delta,
        d_sharp,
        bound: lagrange_robustness_constant(n) * delta / d_sharp,
        hypothesis_ok: delta <= d_sharp / 8.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorMismatch {
    pub delta: f64,
    pub d_sharp: f64,
    pub ratio: f64,
}

pub fn prior_mismatch(nodes_p: &[Complex64], nodes_ptilde: &[Complex64]) -> Result<PriorMismatch> {
    if nodes_p.len() != nodes_ptilde.len() {
        return Err(RinglabError::Config("node sets have different sizes".into()));
    }
    let delta = nodes_p
        .iter()
        .zip(nodes_ptilde)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let d_sharp = min_separation(nodes_ptilde);
    Ok(PriorMismatch { delta, d_sharp, ratio: delta / d_sharp })
}

/// Multiplies each amplitude by `g(omega_j)`.
pub fn apply_window_modal(modes: &[Mode], w: &WindowPolynomial) -> Result<Vec<Mode>> {
    modes
        .iter()
        .map(|m| {
            if m.poly_degree != 0 {
                return Err(RinglabError::Unsupported(
                    "modal windowing of polynomial-prefactor modes".into(),
                ));
            }
            Ok(Mode { amp: m.amp * w.eval(m.freq.as_complex()), ..m.clone() })
        })
        .collect()
}

/// Finite-difference weights for derivatives `0..=max_deriv` at `x0` on the
/// nodes `xs` (Fornberg's recursion for the local moment system).
pub fn fd_weights(x0: f64, xs: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Half-width of the centered stencil for derivative `k` at accuracy `p`.
pub fn stencil_half_width(k: usize, p: usize) -> usize {
    if k == 0 {
        return 0;
    }
    k.div_ceil(2) - 1 + p / 2
}

/// Centered stencil (offsets `-h..=h`) for derivative `k` at accuracy `p`, unit spacing.
pub fn centered_stencil(k: usize, p: usize) -> Vec<f64> {
    let h = stencil_half_width(k, p) as i64;
    let xs: Vec<f64> = (-h..=h).map(|j| j as f64).collect();
    fd_weights(0.0, &xs, k).swap_remove(k)
}

/// Applies `g(i d/dt)` with centered stencils of accuracy `stencil_order`.
///
/// The output grid is trimmed by the widest stencil on each side.
pub fn apply_window_fd(signal: &SampledSignal, w: &WindowPolynomial, stencil_order: usize) -> Result<SampledSignal> {
    if stencil_order == 0 || !stencil_order.is_multiple_of(2) {
        return Err(RinglabError::Config(format!("stencil order must be even, got {stencil_order}")));
    }
    let coeffs = w.coefficients();
    let deg = coeffs.len() - 1;
    let h = (1..=deg).map(|k| stencil_half_width(k, stencil_order)).max().unwrap_or(0);
    let n = signal.len();
    if n < 2 * h + 1 {
        return Err(RinglabError::InsufficientSamples { needed: 2 * h + 1, available: n });
    }
    // operator stencil: sum_k c_k i^k D_k, folded into one set of weights
    let mut op = vec![Complex64::new(0.0, 0.0); 2 * h + 1];
    op[h] += coeffs[0];
    let mut ik = Complex64::new(1.0, 0.0);
    for (k, ck) in coeffs.iter().enumerate().skip(1) {
        ik *= I;
        if *ck == Complex64::new(0.0, 0.0) {
            continue;
        }
        let st = centered_stencil(k, stencil_order);
        let hk = (st.len() - 1) / 2;
        let scale = ck * ik / signal.dt.powi(k as i32);
        for (j, s) in st.iter().enumerate() {
            op[h - hk + j] += scale * *s;
        }
    }
    let values = (h..n - h)
        .map(|i| {
            op.iter()
                .enumerate()
                .map(|(j, o)| o * signal.values[i + j - h])
                .sum()
        })
        .collect();
    Ok(SampledSignal::new(signal.time(h), signal.dt, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample, NoiseSpec, ObservationSetup, TailSpec};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lagrange_examples() {
        let set = PseudopoleSet::new(vec![c(0.0, 0.0), c(0.0, -1.0)]).unwrap();
        let g = lagrange_weight(&set, 1).unwrap();
        assert!((g.eval(c(0.0, -1.0)) - 1.0).norm() < 1e-15);
        assert!(g.eval(c(0.0, 0.0)).norm() < 1e-15);
        let w = c(0.3, 0.7);
        assert!((g.eval(w) - I * w).norm() < 1e-15);
        assert!((g.coefficients()[1] - I).norm() < 1e-15);

        let one = lagrange_weight(&PseudopoleSet::new(vec![c(1.0, 0.0)]).unwrap(), 0).unwrap();
        assert_eq!(one.eval(c(5.0, -3.0)), c(1.0, 0.0));

        let set = PseudopoleSet::new(vec![c(10.0, -0.5), c(10.0, -1.5)]).unwrap();
        let g = lagrange_weight(&set, 1).unwrap();
        assert!((g.eval(c(10.0, -1.0)) - 0.5).norm() < 1e-14);

        let rep = PseudopoleSet::new(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(rep, Err(RinglabError::RepeatedNodes(_))));
    }

    #[test]
    fn modified_window_examples() {
        let set = PseudopoleSet::new(vec![c(10.0, -0.5), c(10.0, -1.5)]).unwrap();
        let g = modified_window(&set, 1, Some(3)).unwrap();
        assert_eq!(g.eval(c(0.0, 0.0)), c(0.0, 0.0));
        assert!((g.eval(c(10.0, -1.5)) - 1.0).norm() < 1e-14);
        assert!(g.eval(c(10.0, -0.5)).norm() < 1e-14);
        assert_eq!(g.degree(), 4);
        assert_eq!(modified_window(&set, 1, None).unwrap().m0, 3);
        let zero = PseudopoleSet::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(modified_window(&zero, 0, None), Err(RinglabError::ZeroNormalizer));
    }

    #[test]
    fn growth_examples() {
        let id = WindowPolynomial::identity();
        assert!(growth_profile(&id, 0.5, &[0.0, 10.0, 1e4], 0).iter().all(|v| (*v - 1.0).abs() < 1e-15));

        let set = PseudopoleSet::new(vec![c(1.0, -0.5), c(1.2, -1.5)]).unwrap();
        let g = modified_window(&set, 1, None).unwrap();
        let d = g.degree() as i32;
        let lead = g.coefficients().last().unwrap().norm();
        let prof = growth_profile(&g, 0.5, &[1e3, 1e5], 0);
        assert!((prof[1] / 1e5f64.powi(d) / lead - 1.0).abs() < 1e-4);
        assert!(prof[0] / 1e3f64.powi(d) < 2.0 * lead);

        // scaled nodes: the sup over a fixed sigma range does not grow with ell
        let mut sups = Vec::new();
        for ell in [10.0, 100.0, 1000.0] {
            let set = PseudopoleSet::new(vec![c(0.2 * ell, -0.1), c(0.2 * ell, -0.3)]).unwrap();
            let g = modified_window(&set, 1, None).unwrap();
            let grid: Vec<f64> = (0..=200).map(|k| -5.0 + 0.05 * k as f64).collect();
            sups.push(growth_profile(&g, 0.2, &grid, 0).into_iter().fold(0.0, f64::max));
        }
        assert!(sups[1] <= sups[0] * 1.01 && sups[2] <= sups[1] * 1.01, "{sups:?}");
    }

    #[test]
    fn derivative_matches_coefficients() {
        let set = PseudopoleSet::new(vec![c(1.0, -0.5), c(2.0, -1.5), c(-1.0, -0.2)]).unwrap();
        let g = modified_window(&set, 2, None).unwrap();
        // the first m0-1 derivatives vanish at the origin
        for r in 0..g.m0 as usize {
            assert!(g.derivative(r, c(0.0, 0.0)).norm() < 1e-14);
        }
        assert!(g.derivative(g.m0 as usize, c(0.0, 0.0)).norm() > 1e-6);
        let w = c(0.4, -0.3);
        let h = 1e-5;
        let fd = (g.eval(w + h) - g.eval(w - h)) / (2.0 * h);
        assert!((fd - g.derivative(1, w)).norm() < 1e-8);
    }

    #[test]
    fn robustness_examples() {
        let set = PseudopoleSet::new(vec![c(0.0, -0.5), c(0.0, -1.5)]).unwrap();
        let r = interp_robustness(&set, 1, set.nodes()).unwrap();
        assert_eq!(r.max_deviation(), 0.0);
        let pert = [c(0.05, -0.5), c(0.0, -1.55)];
        let r = interp_robustness(&set, 1, &pert).unwrap();
        assert!(r.hypothesis_ok);
        assert!((r.bound - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.within_bound());
    }

    #[test]
    fn prior_mismatch_examples() {
        let a = vec![c(0.0, -0.5), c(0.0, -1.5)];
        assert_eq!(prior_mismatch(&a, &a).unwrap().delta, 0.0);
        let b = vec![c(0.02, -0.5), c(0.0, -1.5)];
        let pm = prior_mismatch(&b, &a).unwrap();
        assert!((pm.ratio - 0.02).abs() < 1e-15);
        // lattice scaling: delta linear in ell
        let deltas: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|ell| {
                let p = [c(0.19 * ell, -0.1), c(0.21 * ell, -0.1)];
                let q = [c(0.191 * ell, -0.1), c(0.2105 * ell, -0.1)];
                prior_mismatch(&p, &q).unwrap().delta
            })
            .collect();
        let slope = (deltas[2] / deltas[0]).log2() / 2.0;
        assert!((slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn modal_examples() {
        let m = vec![Mode::pure(c(1.0, -0.2), c(0.5, 0.5))];
        assert_eq!(apply_window_modal(&m, &WindowPolynomial::identity()).unwrap(), m);
        let set = PseudopoleSet::new(vec![c(1.0, -0.2), c(1.0, -0.6)]).unwrap();
        let g = modified_window(&set, 1, None).unwrap();
        assert!(apply_window_modal(&m, &g).unwrap()[0].amp.norm() < 1e-14);
        let eps = 1e-6;
        let near = vec![Mode::pure(c(1.0, -0.6) + eps, c(1.0, 0.0))];
        let out = apply_window_modal(&near, &g).unwrap()[0].amp;
        let predicted = 1.0 + g.derivative(1, c(1.0, -0.6)) * eps;
        assert!((out - predicted).norm() < 1e-10);
        let poly = vec![Mode { poly_degree: 1, ..m[0].clone() }];
        assert!(apply_window_modal(&poly, &g).is_err());
    }

    #[test]
    fn stencils_are_exact_on_polynomials() {
        for k in 1..=5 {
            for p in [2, 4, 8] {
                let st = centered_stencil(k, p);
                let h = (st.len() - 1) as i64 / 2;
                for deg in 0..(st.len()) {
                    let v: f64 = st.iter().enumerate().map(|(j, s)| s * ((j as i64 - h) as f64).powi(deg as i32)).sum();
                    let expect = if deg == k { (1..=k).map(|x| x as f64).product() } else { 0.0 };
                    let scale = (h as f64).powi(deg as i32).max(1.0);
                    assert!((v - expect).abs() < 1e-12 * scale * expect.max(1.0), "k={k} p={p} deg={deg}: {v}");
                }
            }
        }
        assert_eq!(centered_stencil(1, 2), vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn fd_identity_and_convergence() {
        let setup = ObservationSetup::new(0.0, 8.0, 1.0, 0.1);
        let w = c(1.3, -0.2);
        let y = sample(&[Mode::pure(w, c(1.0, 0.0))], &TailSpec::zero(), &NoiseSpec::None, &setup).unwrap();
        let out = apply_window_fd(&y, &WindowPolynomial::identity(), 8).unwrap();
        assert_eq!(out.values, y.values);

        let set = PseudopoleSet::new(vec![c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        // G_1(w) = (w - i)/(-i) = 1 + i w: affine in w
        let g = lagrange_weight(&set, 1).unwrap();
        let p = 4;
        let mut errs = Vec::new();
        for dt in [0.2, 0.1] {
            let su = ObservationSetup { dt, ..setup };
            let y = sample(&[Mode::pure(w, c(1.0, 0.0))], &TailSpec::zero(), &NoiseSpec::None, &su).unwrap();
            let out = apply_window_fd(&y, &g, p).unwrap();
            let k = out.len() / 2;
            let t = out.time(k);
            let amp = out.values[k] / (-I * w * t).exp();
            errs.push((amp - g.eval(w)).norm());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - p as f64).abs() < 0.5, "order {order}");
    }

    proptest! {
        #[test]
        fn interpolation_identities(re in proptest::collection::vec(-5.0..5.0f64, 2..6),
                                    im in proptest::collection::vec(-3.0..0.0f64, 6), m0 in 0u32..5) {
            let nodes: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| c(*a, *b)).collect();
            prop_assume!(min_separation(&nodes) >= 1e-3);
            let set = PseudopoleSet::new(nodes.clone()).unwrap();
            for m in 0..nodes.len() {
                prop_assume!(nodes[m].norm() > 1e-3);
                let g = modified_window(&set, m, Some(m0)).unwrap();
                for (j, oj) in nodes.iter().enumerate() {
                    let v = g.eval(*oj);
                    if j == m {
                        prop_assert!((v - 1.0).norm() < 1e-12);
                    } else {
                        prop_assert!(v.norm() < 1e-12);
                    }
                }
                // coefficient and product faces agree
                let w = c(0.37, -0.81);
                let horner = g.coefficients().iter().rev().fold(c(0.0, 0.0), |acc, ck| acc * w + ck);
                prop_assert!((horner - g.eval(w)).norm() <= 1e-9 * g.eval(w).norm().max(1.0));
            }
        }
    }
}
