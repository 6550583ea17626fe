//! Two-node Prony from four samples, with a confluent fallback.
//!
//! Samples `y_j = a1 z1^j + a2 z2^j` satisfy `y_{j+2} = s1 y_{j+1} - s2 y_j`
//! with `s1 = z1 + z2`, `s2 = z1 z2`. Solving the 2x2 Hankel system for
//! `(s1, s2)` and factoring `lambda^2 - s1 lambda + s2` recovers the nodes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RinglabError};

/// Calibrated conditioning constant for `|dz| <= C eta / (|a1 a2| |z1-z2|^3)`.
///
/// Twice the worst ratio observed by [`calibrate_c_hat`] on
/// [`calibration_grid`]; the unit tests recompute it.
pub const C_HAT: f64 = 2.0 * CALIBRATED_MAX_RATIO;
const CALIBRATED_MAX_RATIO: f64 = 4.607_643_172_252_809;

/// Smallness constant `c0` in `eta <= c0 |a1 a2| |z1-z2|^4`.
pub const C0: f64 = 1e-2;

/// Relative Hankel-determinant level below which data are treated as confluent.
pub const CONFLUENCE_REL: f64 = 1e-8;

/// Number of deterministic perturbation directions used in conditioning sweeps.
pub const N_DIRECTIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    /// `perm[k]` is the root index assigned to prior `k`.
    pub perm: [usize; 2],
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfluentFit {
    pub b0: Complex64,
    pub b1: Complex64,
    pub z: Complex64,
    /// `sqrt(|y2 - model_2|^2 + |y3 - model_3|^2)`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronyResult {
    pub s1: Complex64,
    pub s2: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
    pub delta0: Complex64,
    pub confluent: bool,
    /// Two-node amplitudes (from `y0, y1`); `None` on the confluent path.
    pub a1: Option<Complex64>,
    pub a2: Option<Complex64>,
    pub b0: Option<Complex64>,
    pub b1: Option<Complex64>,
    /// Misfit of the fitted model on `y2, y3`.
    pub residual: f64,
    pub labels: Option<Labeling>,
}

/// `y0 y2 - y1^2`
pub fn hankel_det(y0: Complex64, y1: Complex64, y2: Complex64) -> Complex64 {
    y0 * y2 - y1 * y1
}

pub fn confluence_threshold(y: &[Complex64; 4]) -> f64 {
    let s = y[..3].iter().map(|v| v.norm()).fold(1.0, f64::max);
    CONFLUENCE_REL * s * s
}

/// Roots of `lambda^2 - s1 lambda + s2`, avoiding cancellation.
pub fn quadratic_roots(s1: Complex64, s2: Complex64) -> (Complex64, Complex64) {
    let sq = (s1 * s1 - 4.0 * s2).sqrt();
    let (qa, qb) = (s1 + sq, s1 - sq);
    let q = if qa.norm() >= qb.norm() { qa } else { qb } * 0.5;
    if q == Complex64::new(0.0, 0.0) {
        return (q, q);
    }
    (q, s2 / q)
}

/// Four-sample Prony; near-singular Hankel data go to [`confluent_fit`].
pub fn prony4(y: [Complex64; 4]) -> Result<PronyResult> {
    let delta0 = hankel_det(y[0], y[1], y[2]);
    if delta0.norm() < confluence_threshold(&y) {
        let fit = confluent_fit(y, None)?;
        return Ok(PronyResult {
            s1: 2.0 * fit.z,
            s2: fit.z * fit.z,
            z1: fit.z,
            z2: fit.z,
            delta0,
            confluent: true,
            a1: None,
            a2: None,
            b0: Some(fit.b0),
            b1: Some(fit.b1),
            residual: fit.residual,
            labels: None,
        });
    }
    prony4_two_node(y)
}

/// Two-node solve regardless of the confluence threshold.
pub fn prony4_two_node(y: [Complex64; 4]) -> Result<PronyResult> {
    let delta0 = hankel_det(y[0], y[1], y[2]);
    if delta0 == Complex64::new(0.0, 0.0) {
        return Err(RinglabError::Coalesced("Hankel determinant is exactly zero".into()));
    }
    let s1 = (y[0] * y[3] - y[1] * y[2]) / delta0;
    let s2 = (y[1] * y[3] - y[2] * y[2]) / delta0;
    let (z1, z2) = quadratic_roots(s1, s2);
    let (a1, a2, residual) = if z1 != z2 {
        let a1 = (y[1] - z2 * y[0]) / (z1 - z2);
        let a2 = (z1 * y[0] - y[1]) / (z1 - z2);
        let r2 = y[2] - (a1 * z1 * z1 + a2 * z2 * z2);
        let r3 = y[3] - (a1 * z1.powu(3) + a2 * z2.powu(3));
        (Some(a1), Some(a2), (r2.norm_sqr() + r3.norm_sqr()).sqrt())
    } else {
        (None, None, f64::INFINITY)
    };
    Ok(PronyResult {
        s1,
        s2,
        z1,
        z2,
        delta0,
        confluent: false,
        a1,
        a2,
        b0: None,
        b1: None,
        residual,
        labels: None,
    })
}

/// Prony followed by labeling against two priors.
pub fn prony4_labeled(y: [Complex64; 4], priors: (Complex64, Complex64)) -> Result<PronyResult> {
    let mut r = prony4(y)?;
    if !r.confluent {
        let lab = label_roots((r.z1, r.z2), priors)?;
        if lab.perm == [1, 0] {
            std::mem::swap(&mut r.z1, &mut r.z2);
            std::mem::swap(&mut r.a1, &mut r.a2);
        }
        r.labels = Some(lab);
    }
    Ok(r)
}

/// Matches roots to priors; flags ambiguity when a root sits in neither
/// disk of radius `|p1 - p2|/4` around the priors.
pub fn label_roots(roots: (Complex64, Complex64), priors: (Complex64, Complex64)) -> Result<Labeling> {
    let sep = (priors.0 - priors.1).norm();
    if sep == 0.0 {
        return Err(RinglabError::Config("priors must be distinct".into()));
    }
    let d = |a: Complex64, b: Complex64| (a - b).norm();
    let keep = d(roots.0, priors.0) + d(roots.1, priors.1);
    let swap = d(roots.1, priors.0) + d(roots.0, priors.1);
    let perm = if swap < keep { [1, 0] } else { [0, 1] };
    let r = 0.25 * sep;
    let rs = [roots.0, roots.1];
    let in_disk = |z: Complex64| d(z, priors.0) <= r || d(z, priors.1) <= r;
    let matched = d(rs[perm[0]], priors.0) <= r && d(rs[perm[1]], priors.1) <= r;
    let ambiguous = !(in_disk(roots.0) && in_disk(roots.1)) || !matched || swap == keep;
    Ok(Labeling { perm, ambiguous })
}

/// Fits `y_j = (b0 + b1 j) z^j` from four samples.
///
/// `z` is a double root of the recurrence (`s1 = 2z`, `s2 = z^2`), i.e. a
/// root of `y0 z^2 - 2 y1 z + y2 = 0`; the candidate that best satisfies the
/// next recurrence step (or lies nearest `z_prior`) is kept.
pub fn confluent_fit(y: [Complex64; 4], z_prior: Option<Complex64>) -> Result<ConfluentFit> {
    let zero = Complex64::new(0.0, 0.0);
    let mut candidates = Vec::new();
    if y[0] != zero {
        let sq = (y[1] * y[1] - y[0] * y[2]).sqrt();
        candidates.push((y[1] + sq) / y[0]);
        candidates.push((y[1] - sq) / y[0]);
    } else if y[1] != zero {
        candidates.push(y[2] / (2.0 * y[1]));
    }
    candidates.retain(|z| z.is_finite() && *z != zero);
    if candidates.is_empty() {
        return Err(RinglabError::Degenerate("confluent node is zero".into()));
    }
    let score = |z: &Complex64| match z_prior {
        Some(p) => (z - p).norm(),
        None => (y[3] - 2.0 * z * y[2] + z * z * y[1]).norm(),
    };
    let z = candidates
        .into_iter()
        .min_by(|a, b| score(a).total_cmp(&score(b)))
        .expect("non-empty");
    let b0 = y[0];
    let b1 = y[1] / z - y[0];
    let r2 = y[2] - (b0 + 2.0 * b1) * z * z;
    let r3 = y[3] - (b0 + 3.0 * b1) * z.powu(3);
    Ok(ConfluentFit { b0, b1, z, residual: (r2.norm_sqr() + r3.norm_sqr()).sqrt() })
}

pub fn two_mode_samples(a1: Complex64, a2: Complex64, z1: Complex64, z2: Complex64) -> [Complex64; 4] {
    std::array::from_fn(|j| a1 * z1.powu(j as u32) + a2 * z2.powu(j as u32))
}

pub fn confluent_samples(b0: Complex64, b1: Complex64, z: Complex64) -> [Complex64; 4] {
    std::array::from_fn(|j| (b0 + b1 * j as f64) * z.powu(j as u32))
}

/// Deterministic unit-modulus perturbation pattern number `k`.
pub fn perturbation_direction(k: usize) -> [Complex64; 4] {
    const PHI: f64 = 0.618_033_988_749_894_9;
    std::array::from_fn(|j| {
        let x = ((k + 1) as f64 * PHI * (j as f64 + 1.0) + 0.1 * j as f64).fract();
        Complex64::from_polar(1.0, std::f64::consts::TAU * x)
    })
}

/// Worst root error over the deterministic directions at sup-norm `eta`.
pub fn worst_case_root_error(a1: Complex64, a2: Complex64, z1: Complex64, z2: Complex64, eta: f64) -> f64 {
    let y = two_mode_samples(a1, a2, z1, z2);
    let mut worst: f64 = 0.0;
    for k in 0..N_DIRECTIONS {
        let dir = perturbation_direction(k);
        let yp: [Complex64; 4] = std::array::from_fn(|j| y[j] + dir[j] * eta);
        let err = match prony4_two_node(yp) {
            Ok(r) => {
                let keep = (r.z1 - z1).norm().max((r.z2 - z2).norm());
                let swap = (r.z2 - z1).norm().max((r.z1 - z2).norm());
                keep.min(swap)
            }
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    worst
}

/// `eta / (|a1 a2| |z1 - z2|^3)`
pub fn conditioning_scale(a1: Complex64, a2: Complex64, z1: Complex64, z2: Complex64, eta: f64) -> f64 {
    eta / ((a1 * a2).norm() * (z1 - z2).norm().powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub delta0_mag: f64,
    pub smallness_ok: bool,
    pub bound: f64,
    /// Log-log slope of the worst root error against `|z1 - z2|`, probed at
    /// the given separation and its halvings down to 1/8.
    pub scaling_exponent_probe: f64,
}

pub fn conditioning_report(a1: Complex64, a2: Complex64, z1: Complex64, z2: Complex64, eta: f64) -> Result<ConditioningReport> {
    if z1 == z2 {
        return Err(RinglabError::Coalesced("z1 = z2".into()));
    }
    if a1 * a2 == Complex64::new(0.0, 0.0) {
        return Err(RinglabError::Degenerate("a1 a2 = 0".into()));
    }
    let d = (z1 - z2).norm();
    let delta0_mag = (a1 * a2).norm() * d * d;
    let smallness_ok = eta <= C0 * (a1 * a2).norm() * d.powi(4);
    let bound = C_HAT * conditioning_scale(a1, a2, z1, z2, eta);
    let scaling_exponent_probe = if eta > 0.0 {
        let mid = 0.5 * (z1 + z2);
        let half = 0.5 * (z1 - z2);
        let seps: Vec<f64> = (0..4).map(|k| 0.5f64.powi(k)).collect();
        let pts: Vec<(f64, f64)> = seps
            .iter()
            .map(|s| {
                let e = worst_case_root_error(a1, a2, mid + half * *s, mid - half * *s, eta);
                ((d * s).ln(), e.ln())
            })
            .collect();
        loglog_slope(&pts)
    } else {
        f64::NAN
    };
    Ok(ConditioningReport { delta0_mag, smallness_ok, bound, scaling_exponent_probe })
}

/// Least-squares slope of `y` against `x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub a1: Complex64,
    pub a2: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
}

fn grid(seps: &[f64], mags: &[f64], centers: &[Complex64], angles: &[f64], phase: f64) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &d in seps {
        for &m1 in mags {
            for &m2 in mags {
                for &c in centers {
                    for &th in angles {
                        let h = Complex64::from_polar(0.5 * d, th);
                        let (z1, z2) = (c + h, c - h);
                        if z1.norm() > 1.0 || z2.norm() > 1.0 {
                            continue;
                        }
                        out.push(GridPoint {
                            a1: Complex64::from_polar(m1, phase),
                            a2: Complex64::from_polar(m2, -0.7 * phase + 0.4),
                            z1,
                            z2,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Coarse grid: separations 0.1..0.5, amplitudes 0.5..2, nodes in the unit disk.
pub fn calibration_grid() -> Vec<GridPoint> {
    grid(
        &[0.1, 0.2, 0.3, 0.4, 0.5],
        &[0.5, 1.0, 2.0],
        &[Complex64::new(0.5, 0.0), Complex64::new(-0.3, 0.4), Complex64::new(0.0, -0.6)],
        &[0.0, 1.2, 2.4],
        0.3,
    )
}

/// Finer grid, disjoint from the calibration grid.
pub fn validation_grid() -> Vec<GridPoint> {
    grid(
        &[0.12, 0.17, 0.23, 0.29, 0.36, 0.44],
        &[0.6, 0.9, 1.4, 1.9],
        &[Complex64::new(0.45, 0.1), Complex64::new(-0.35, 0.3), Complex64::new(0.1, -0.55), Complex64::new(-0.2, -0.2)],
        &[0.4, 1.6, 2.8],
        1.1,
    )
}

/// Largest `worst_error / (eta / (|a1 a2| |z1-z2|^3))` over a grid.
pub fn max_conditioning_ratio(points: &[GridPoint], eta: f64) -> f64 {
    points
        .iter()
        .map(|p| worst_case_root_error(p.a1, p.a2, p.z1, p.z2, eta) / conditioning_scale(p.a1, p.a2, p.z1, p.z2, eta))
        .fold(0.0, f64::max)
}

/// Calibration rule for [`C_HAT`]: twice the worst ratio on the coarse grid.
pub fn calibrate_c_hat(eta: f64) -> f64 {
    2.0 * max_conditioning_ratio(&calibration_grid(), eta)
}

/// Perturbation level used for the calibration.
pub const CALIBRATION_ETA: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }
    fn r(x: f64) -> Complex64 {
        c(x, 0.0)
    }

    #[test]
    fn prony_fixture() {
        let y = two_mode_samples(r(1.0), r(1.0), r(0.9), r(0.5));
        let expect = [2.0, 1.4, 1.06, 0.854];
        for (a, b) in y.iter().zip(expect) {
            assert!((a.re - b).abs() < 1e-15);
        }
        let p = prony4(y).unwrap();
        assert!(!p.confluent);
        assert!((p.s1 - 1.4).norm() < 1e-14 && (p.s2 - 0.45).norm() < 1e-14);
        assert!((p.delta0 - 0.16).norm() < 1e-15);
        let mut roots = [p.z1.re, p.z2.re];
        roots.sort_by(f64::total_cmp);
        assert!((roots[0] - 0.5).abs() < 1e-14 && (roots[1] - 0.9).abs() < 1e-14);

        let single = two_mode_samples(r(1.0), r(0.0), r(0.9), r(0.5));
        let p = prony4(single).unwrap();
        assert_eq!(p.delta0, r(0.0));
        assert!(p.confluent);
        assert!((p.z1 - 0.9).norm() < 1e-14);
    }

    #[test]
    fn perturbed_fixture_within_conditioning_bound() {
        let (a1, a2, z1, z2) = (r(1.0), r(1.0), r(0.9), r(0.5));
        let eta = 1e-6;
        let worst = worst_case_root_error(a1, a2, z1, z2, eta);
        let rep = conditioning_report(a1, a2, z1, z2, eta).unwrap();
        assert!(worst <= rep.bound, "{worst} > {}", rep.bound);
    }

    #[test]
    fn hankel_examples() {
        assert!((hankel_det(r(2.0), r(1.4), r(1.06)) - 0.16).norm() < 1e-15);
        let y = two_mode_samples(r(1.0), r(2.0), r(0.9), c(0.8, 0.1));
        assert!((hankel_det(y[0], y[1], y[2]) - c(0.0, -0.04)).norm() < 1e-15);
        let y = two_mode_samples(r(1.0), r(2.0), r(0.7), r(0.7));
        assert!(hankel_det(y[0], y[1], y[2]).norm() < 1e-15);
    }

    #[test]
    fn labeling_examples() {
        let p = (r(0.9), r(0.5));
        assert_eq!(label_roots(p, p).unwrap(), Labeling { perm: [0, 1], ambiguous: false });
        assert_eq!(label_roots((r(0.5), r(0.9)), p).unwrap(), Labeling { perm: [1, 0], ambiguous: false });
        assert!(label_roots((r(0.7), r(0.7)), p).unwrap().ambiguous);
        assert!(label_roots(p, (r(1.0), r(1.0))).is_err());
        let lab = prony4_labeled(two_mode_samples(r(1.0), r(3.0), r(0.5), r(0.9)), (r(0.9), r(0.5))).unwrap();
        assert!((lab.z1 - 0.9).norm() < 1e-13 && (lab.a1.unwrap() - 3.0).norm() < 1e-12);
    }

    #[test]
    fn conditioning_examples() {
        let (a1, a2) = (r(1.0), r(1.0));
        let rep = conditioning_report(a1, a2, r(0.9), r(0.5), 0.0).unwrap();
        assert_eq!(rep.bound, 0.0);
        let b1 = conditioning_report(a1, a2, r(0.7), r(0.5), 1e-8).unwrap().bound;
        let b2 = conditioning_report(a1, a2, r(0.6), r(0.5), 1e-8).unwrap().bound;
        assert!((b2 / b1 - 8.0).abs() < 1e-9);
        assert!(conditioning_report(a1, a2, r(0.6), r(0.6), 1e-8).is_err());
    }

    #[test]
    fn calibration_constant_matches_rule() {
        let c_hat = calibrate_c_hat(CALIBRATION_ETA);
        assert!((c_hat / C_HAT - 1.0).abs() < 1e-6, "recalibrated {c_hat} vs frozen {C_HAT}");
    }

    #[test]
    fn smallness_implies_determinant_stability_on_calibration_grid() {
        for p in calibration_grid() {
            let d = (p.z1 - p.z2).norm();
            let eta = C0 * (p.a1 * p.a2).norm() * d.powi(4);
            let y = two_mode_samples(p.a1, p.a2, p.z1, p.z2);
            let d0 = hankel_det(y[0], y[1], y[2]).norm();
            for k in 0..N_DIRECTIONS {
                let dir = perturbation_direction(k);
                let yp: [Complex64; 4] = std::array::from_fn(|j| y[j] + dir[j] * eta);
                assert!(hankel_det(yp[0], yp[1], yp[2]).norm() >= 0.5 * d0);
            }
        }
    }

    #[test]
    fn confluent_examples() {
        let y = confluent_samples(r(1.0), r(1.0), r(0.9));
        let expect = [1.0, 1.8, 2.43, 2.916];
        for (a, b) in y.iter().zip(expect) {
            assert!((a.re - b).abs() < 1e-14);
        }
        let f = confluent_fit(y, None).unwrap();
        assert!((f.b0 - 1.0).norm() < 1e-14 && (f.b1 - 1.0).norm() < 1e-14 && (f.z - 0.9).norm() < 1e-14);
        assert!(f.residual < 1e-14);
        // the double-root recurrence s1 = 2z, s2 = z^2 reproduces y2, y3
        let (s1, s2) = (2.0 * f.z, f.z * f.z);
        assert!((s1 * y[1] - s2 * y[0] - y[2]).norm() < 1e-14);
        assert!((s1 * y[2] - s2 * y[1] - y[3]).norm() < 1e-14);

        let f = confluent_fit(confluent_samples(r(1.0), r(0.0), r(0.9)), None).unwrap();
        assert!((f.z - 0.9).norm() < 1e-14 && f.b1.norm() < 1e-14);

        let y = two_mode_samples(r(1.0), r(1.0), r(0.8), r(0.5));
        let two = prony4_two_node(y).unwrap();
        let conf = confluent_fit(y, None).unwrap();
        assert!(conf.residual > two.residual);

        assert!(confluent_fit([r(0.0); 4], None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn hankel_identity(m1 in 0.1..3.0f64, p1 in 0.0..6.3f64, m2 in 0.1..3.0f64, p2 in 0.0..6.3f64,
                           r1 in 0.1..1.0f64, t1 in 0.0..6.3f64, r2 in 0.1..1.0f64, t2 in 0.0..6.3f64) {
            let (a1, a2) = (Complex64::from_polar(m1, p1), Complex64::from_polar(m2, p2));
            let (z1, z2) = (Complex64::from_polar(r1, t1), Complex64::from_polar(r2, t2));
            let y = two_mode_samples(a1, a2, z1, z2);
            let d = hankel_det(y[0], y[1], y[2]);
            let expect = a1 * a2 * (z1 - z2) * (z1 - z2);
            // scale of the individual products that cancel in y0 y2 - y1^2
            let scale = (m1 + m2) * (m1 * r1 * r1 + m2 * r2 * r2);
            prop_assert!((d - expect).norm() <= 1e-12 * expect.norm().max(1e-3 * scale));
        }

        #[test]
        fn exact_recovery(m1 in 0.5..2.0f64, p1 in 0.0..6.3f64, m2 in 0.5..2.0f64, p2 in 0.0..6.3f64,
                          r1 in 0.3..1.0f64, t1 in 0.0..6.3f64, r2 in 0.3..1.0f64, t2 in 0.0..6.3f64) {
            let (a1, a2) = (Complex64::from_polar(m1, p1), Complex64::from_polar(m2, p2));
            let (z1, z2) = (Complex64::from_polar(r1, t1), Complex64::from_polar(r2, t2));
            prop_assume!((z1 - z2).norm() >= 0.05);
            let p = prony4_labeled(two_mode_samples(a1, a2, z1, z2), (z1, z2)).unwrap();
            prop_assert!(!p.confluent);
            prop_assert!((p.s1 - (z1 + z2)).norm() <= 1e-10 * (z1 + z2).norm().max(1.0));
            prop_assert!((p.s2 - z1 * z2).norm() <= 1e-10 * (z1 * z2).norm().max(1.0));
            prop_assert!((p.z1 - z1).norm() <= 1e-10 && (p.z2 - z2).norm() <= 1e-10);
            // roots solve the characteristic polynomial
            prop_assert!((p.z1 * p.z1 - p.s1 * p.z1 + p.s2).norm() < 1e-10);
        }

        #[test]
        fn confluent_exactness(b0r in -2.0..2.0f64, b0i in -2.0..2.0f64, b1r in -2.0..2.0f64, b1i in -2.0..2.0f64,
                               rz in 0.3..1.0f64, tz in 0.0..6.3f64) {
            let (b0, b1, z) = (c(b0r, b0i), c(b1r, b1i), Complex64::from_polar(rz, tz));
            prop_assume!(b0.norm() > 0.1);
            let f = confluent_fit(confluent_samples(b0, b1, z), None).unwrap();
            prop_assert!((f.z - z).norm() < 1e-8);
            prop_assert!((f.b0 - b0).norm() < 1e-8 && (f.b1 - b1).norm() < 1e-8);
        }
    }
}
