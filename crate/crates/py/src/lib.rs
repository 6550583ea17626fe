//! Python bindings: observation setups, extraction, Prony fits, windows,
//! the lattice data map and the config-driven runs of the `ringlab` CLI.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use ringlab_cli::{run_subcommand, CliError, ScenarioConfig, SUBCOMMANDS};
use ringlab_core::extractor::{self, ExtractionConfig};
use ringlab_core::paramap::{self, InversionMode, ParamBox, ParameterPoint, Sector};
use ringlab_core::prony;
use ringlab_core::signal::{self, ComplexFrequency, Mode, NoiseSpec, SampledSignal, TailSpec, Taper};
use ringlab_core::window::{self, PseudopoleSet, WindowPolynomial};
use ringlab_core::RinglabError;

create_exception!(ringlab, RinglabException, PyException);

fn core_err(e: RinglabError) -> PyErr {
    match e {
        RinglabError::Config(_) | RinglabError::GridMismatch(_) | RinglabError::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => RinglabException::new_err(other.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        RinglabException::new_err(e.to_string())
    }
}

fn parse_mode(mode: &str) -> PyResult<InversionMode> {
    match mode {
        "2p" => Ok(InversionMode::TwoParam),
        "3p" => Ok(InversionMode::ThreeParam),
        other => Err(PyValueError::new_err(format!("mode must be '2p' or '3p', got {other:?}"))),
    }
}

#[pyclass(name = "ObservationSetup", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PySetup {
    inner: signal::ObservationSetup,
}

#[pymethods]
impl PySetup {
    #[new]
    #[pyo3(signature = (t0, t_len, delta, dt, taper = "raised-cosine"))]
    fn new(t0: f64, t_len: f64, delta: f64, dt: f64, taper: &str) -> PyResult<Self> {
        let taper = match taper {
            "raised-cosine" => Taper::RaisedCosine,
            "rectangular" => Taper::Rectangular,
            other => return Err(PyValueError::new_err(format!("unknown taper {other:?}"))),
        };
        let inner = signal::ObservationSetup::new(t0, t_len, delta, dt).with_taper(taper);
        inner.validate().map_err(core_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    #[getter]
    fn t_len(&self) -> f64 {
        self.inner.t_len
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("ObservationSetup(t0={}, t_len={}, delta={}, dt={})", s.t0, s.t_len, s.delta, s.dt)
    }
}

#[pyclass(name = "ExtractionResult", frozen)]
pub struct PyExtraction {
    #[pyo3(get)]
    z_hat: Complex64,
    #[pyo3(get)]
    omega_hat: Complex64,
    #[pyo3(get)]
    eps0: f64,
    #[pyo3(get)]
    eps1: f64,
    #[pyo3(get)]
    eps: f64,
    #[pyo3(get)]
    bound_z: f64,
    #[pyo3(get)]
    bound_omega: f64,
}

#[pymethods]
impl PyExtraction {
    fn __repr__(&self) -> String {
        format!("ExtractionResult(omega_hat={}, eps={:e})", self.omega_hat, self.eps)
    }
}

fn modes_from(freqs: Vec<Complex64>, amps: Vec<Complex64>) -> PyResult<Vec<Mode>> {
    if freqs.len() != amps.len() {
        return Err(PyValueError::new_err("freqs and amps differ in length"));
    }
    Ok(freqs.into_iter().zip(amps).map(|(w, a)| Mode::pure(w, a)).collect())
}

/// Samples `sum_k a_k e^{-i w_k t}` plus the tail `c e^{-nu t}(1+t)^{-m}` on
/// the setup's grid, starting at `t0 - delta`.
#[pyfunction]
#[pyo3(signature = (setup, freqs, amps, tail = None))]
fn sample_modes(
    setup: PyRef<'_, PySetup>,
    freqs: Vec<Complex64>,
    amps: Vec<Complex64>,
    tail: Option<(f64, f64, u32)>,
) -> PyResult<(f64, Vec<Complex64>)> {
    let modes = modes_from(freqs, amps)?;
    let tail = tail.map_or(TailSpec::zero(), |(c_tail, nu, m)| TailSpec { c_tail, nu, m, leak: 0.0 });
    let y = signal::sample(&modes, &tail, &NoiseSpec::None, &setup.inner).map_err(core_err)?;
    Ok((y.t_start, y.values))
}

/// Shift-Rayleigh extraction on samples starting at `t_start`. With
/// `reference = (freqs, amps)` the residual sizes and bounds are filled in.
#[pyfunction]
#[pyo3(signature = (setup, t_start, values, prior, reference = None))]
fn extract(
    setup: PyRef<'_, PySetup>,
    t_start: f64,
    values: Vec<Complex64>,
    prior: Complex64,
    reference: Option<(Vec<Complex64>, Vec<Complex64>)>,
) -> PyResult<PyExtraction> {
    let y = SampledSignal::new(t_start, setup.inner.dt, values);
    let cfg = ExtractionConfig::new(setup.inner, ComplexFrequency::from_complex(prior));
    let refs = match reference {
        Some((f, a)) => Some(modes_from(f, a)?),
        None => None,
    };
    let r = extractor::extract(&y, &cfg, refs.as_deref()).map_err(core_err)?;
    Ok(PyExtraction {
        z_hat: r.z_hat,
        omega_hat: r.omega_hat.as_complex(),
        eps0: r.eps0,
        eps1: r.eps1,
        eps: r.eps,
        bound_z: r.bound_z,
        bound_omega: r.bound_omega,
    })
}

#[pyclass(name = "PronyResult", frozen)]
pub struct PyProny {
    #[pyo3(get)]
    s1: Complex64,
    #[pyo3(get)]
    s2: Complex64,
    #[pyo3(get)]
    z1: Complex64,
    #[pyo3(get)]
    z2: Complex64,
    #[pyo3(get)]
    delta0: Complex64,
    #[pyo3(get)]
    confluent: bool,
    #[pyo3(get)]
    residual: f64,
}

fn four(y: Vec<Complex64>) -> PyResult<[Complex64; 4]> {
    y.try_into().map_err(|v: Vec<Complex64>| PyValueError::new_err(format!("need 4 samples, got {}", v.len())))
}

/// Two-node Prony fit of four samples (confluent fallback near coalescence).
#[pyfunction]
#[pyo3(signature = (y, priors = None))]
fn prony4(y: Vec<Complex64>, priors: Option<(Complex64, Complex64)>) -> PyResult<PyProny> {
    let y = four(y)?;
    let r = match priors {
        Some(p) => prony::prony4_labeled(y, p),
        None => prony::prony4(y),
    }
    .map_err(core_err)?;
    Ok(PyProny { s1: r.s1, s2: r.s2, z1: r.z1, z2: r.z2, delta0: r.delta0, confluent: r.confluent, residual: r.residual })
}

/// `y_j = (b0 + b1 j) z^j`; returns `(b0, b1, z, residual)`.
#[pyfunction]
#[pyo3(signature = (y, z_prior = None))]
fn confluent_fit(y: Vec<Complex64>, z_prior: Option<Complex64>) -> PyResult<(Complex64, Complex64, Complex64, f64)> {
    let f = prony::confluent_fit(four(y)?, z_prior).map_err(core_err)?;
    Ok((f.b0, f.b1, f.z, f.residual))
}

#[pyclass(name = "Window", frozen)]
pub struct PyWindow {
    inner: WindowPolynomial,
}

#[pymethods]
impl PyWindow {
    fn __call__(&self, w: Complex64) -> Complex64 {
        self.inner.eval(w)
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    /// Monomial coefficients, lowest degree first.
    #[getter]
    fn coefficients(&self) -> Vec<Complex64> {
        self.inner.coefficients().to_vec()
    }
}

/// Window equal to 1 at `nodes[target]` and 0 at the other nodes, with a
/// zero of order `m0` at the origin.
#[pyfunction]
#[pyo3(signature = (nodes, target, m0 = None))]
fn modified_window(nodes: Vec<Complex64>, target: usize, m0: Option<u32>) -> PyResult<PyWindow> {
    let set = PseudopoleSet::new(nodes).map_err(core_err)?;
    Ok(PyWindow { inner: window::modified_window(&set, target, m0).map_err(core_err)? })
}

#[pyclass(name = "LatticeModel", frozen)]
pub struct PyLattice {
    inner: paramap::LatticeModel,
}

#[pymethods]
impl PyLattice {
    #[new]
    #[pyo3(signature = (ell, n = 0))]
    fn new(ell: u32, n: u32) -> PyResult<Self> {
        let inner = paramap::LatticeModel::new(ell, n);
        inner.validate().map_err(core_err)?;
        Ok(Self { inner })
    }

    /// Pseudopole of layer `j` in sector `"+"` or `"-"`.
    fn pseudopole(&self, j: u32, sector: &str, m: f64, a: f64, lam: f64) -> PyResult<Complex64> {
        let sector = match sector {
            "+" => Sector::Plus,
            "-" => Sector::Minus,
            other => return Err(PyValueError::new_err(format!("sector must be '+' or '-', got {other:?}"))),
        };
        paramap::pseudopole(&self.inner, j, sector, &ParameterPoint::new(m, a, lam)).map_err(core_err)
    }

    #[pyo3(signature = (m, a, lam = 0.0, mode = "2p"))]
    fn data_map(&self, m: f64, a: f64, lam: f64, mode: &str) -> PyResult<Vec<f64>> {
        paramap::data_map(&self.inner, parse_mode(mode)?, &ParameterPoint::new(m, a, lam)).map_err(core_err)
    }

    /// Newton inversion of `data`; returns `(M, a, Lambda, iterations)`.
    #[pyo3(signature = (data, guess, mode = "2p", tol = 1e-12, m_range = None, a_range = None))]
    fn invert(
        &self,
        data: Vec<f64>,
        guess: (f64, f64, f64),
        mode: &str,
        tol: f64,
        m_range: Option<(f64, f64)>,
        a_range: Option<(f64, f64)>,
    ) -> PyResult<(f64, f64, f64, usize)> {
        let bounds = match (m_range, a_range) {
            (Some(m), Some(a)) => Some(ParamBox { m, a, lambda: (guess.2, guess.2), a_min: 0.0 }),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both m_range and a_range, or neither")),
        };
        let g = ParameterPoint::new(guess.0, guess.1, guess.2);
        let inv = paramap::invert_data(&self.inner, parse_mode(mode)?, &data, g, tol, bounds.as_ref()).map_err(core_err)?;
        Ok((inv.point.m, inv.point.a, inv.point.lambda, inv.iterations))
    }
}

/// `(U, V, W)` from the two observed frequencies.
#[pyfunction]
fn observables(omega_plus: Complex64, omega_minus: Complex64, ell: u32, n: u32) -> PyResult<(f64, f64, f64)> {
    let o = paramap::observables(omega_plus, omega_minus, ell, n).map_err(core_err)?;
    Ok((o.u, o.v, o.w_tilde))
}

/// Runs a CLI subcommand on a TOML config string; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (subcommand, config_toml, jobs = None))]
fn run(py: Python<'_>, subcommand: &str, config_toml: &str, jobs: Option<usize>) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(config_toml).map_err(cli_err)?;
    let rep = py.detach(|| run_subcommand(subcommand, &cfg, jobs)).map_err(cli_err)?;
    rep.to_json().map_err(cli_err)
}

#[pymodule]
fn ringlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RinglabError", m.py().get_type::<RinglabException>())?;
    m.add("SUBCOMMANDS", SUBCOMMANDS.to_vec())?;
    m.add_class::<PySetup>()?;
    m.add_class::<PyExtraction>()?;
    m.add_class::<PyProny>()?;
    m.add_class::<PyWindow>()?;
    m.add_class::<PyLattice>()?;
    m.add_function(wrap_pyfunction!(sample_modes, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(prony4, m)?)?;
    m.add_function(wrap_pyfunction!(confluent_fit, m)?)?;
    m.add_function(wrap_pyfunction!(modified_window, m)?)?;
    m.add_function(wrap_pyfunction!(observables, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
