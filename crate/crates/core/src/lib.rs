//! Deterministic ringdown numerics.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`] builds damped-exponential scenes, tapers and the weighted
//!   inner products used by the estimator.
//! * [`window`] constructs entire interpolation windows from pseudopole nodes.
//! * [`extractor`] is the shift Rayleigh-quotient frequency extractor with its
//!   certified error bounds.
//! * [`prony`] solves the four-sample two-node problem.
//! * [`merotoy`] is a small laboratory of rational resolvents for residue and
//!   contour experiments.
//! * [`paramap`] maps extracted frequencies back to parameters and evaluates
//!   bias bounds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extractor;
pub mod merotoy;
pub mod paramap;
pub mod prony;
pub mod quad;
pub mod signal;
pub mod window;

pub use error::{Result, RinglabError};
pub use num_complex::Complex64;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Numerically stable `exp(z) - 1` for complex `z`.
pub fn expm1_c(z: Complex64) -> Complex64 {
    let (a, b) = (z.re, z.im);
    let half = (0.5 * b).sin();
    // cos(b) - 1 = -2 sin^2(b/2)
    let re = a.exp_m1() * b.cos() - 2.0 * half * half;
    let im = a.exp() * b.sin();
    Complex64::new(re, im)
}

/// `\int_a^b e^{alpha t} dt` without cancellation for small `alpha (b - a)`.
pub fn exp_integral(alpha: Complex64, a: f64, b: f64) -> Complex64 {
    let len = b - a;
    let x = alpha * len;
    let scale = (alpha * a).exp();
    if x.norm() < 1e-8 {
        return scale * len * (1.0 + 0.5 * x + x * x / 6.0);
    }
    scale * expm1_c(x) / alpha
}
