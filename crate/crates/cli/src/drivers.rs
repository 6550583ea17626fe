//! Per-module drivers behind the `extract`, `prony`, `band-isolate`,
//! `pseudospectrum` and `window-check` subcommands.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringlab_core::extractor::{extract, ExtractionConfig};
use ringlab_core::merotoy::{
    band_subtract, windowed_forcing, CMatrix, ForcingSpec, PseudoModel, Pole, RationalResolvent, ScanWindow,
    model_norm_grid, pseudospectrum_scan, zoom_windows,
};
use ringlab_core::prony::{
    conditioning_report, loglog_slope, prony4, prony4_labeled, two_mode_samples, worst_case_root_error, C0, C_HAT,
};
use ringlab_core::signal::{sample, ComplexFrequency, Mode, SampledSignal};
use ringlab_core::window::{
    apply_window_fd, centered_stencil, interp_robustness, modified_window, PseudopoleSet, WindowPolynomial,
};
use ringlab_core::RinglabError;

use crate::config::{missing, BandConfig, PronyCase, ScenarioConfig};
use crate::report::{PlotData, Row, RunReport};
use crate::{CliError, ROUNDING_REL};

fn cnum(row: &mut Row, key: &str, z: Complex64) {
    row.num(&format!("{key}_re"), z.re).num(&format!("{key}_im"), z.im);
}

fn nan_c() -> Complex64 {
    Complex64::new(f64::NAN, f64::NAN)
}

/// Rounding allowances for `|z_hat - z|` and `|omega_hat - omega|`.
pub fn rounding_floors(z: Complex64, omega: Complex64, delta: f64) -> (f64, f64) {
    let fz = ROUNDING_REL * z.norm().max(1.0);
    (fz, fz / (delta * z.norm()) + 4.0 * f64::EPSILON * omega.norm())
}

pub fn run_extract(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    cfg.validate_common()?;
    let ex = cfg.extract.as_ref().ok_or_else(|| missing("extract"))?;
    let setup = cfg.observation()?;
    if ex.modes.is_empty() {
        return Err(CliError::Config("extract needs at least one mode".into()));
    }
    let modes: Vec<Mode> = ex.modes.iter().map(|m| Mode::pure(m.freq, m.amp)).collect();
    let omega = ex.modes[0].freq;
    let prior = ex.prior.unwrap_or(omega);
    let mut rep = RunReport::new("extract");
    let mut row = Row::new(0);
    let body = |row: &mut Row| -> Result<(), RinglabError> {
        let y = sample(&modes, &cfg.tail, &cfg.noise.to_spec(setup.dt), &setup)?;
        let mut ecfg = ExtractionConfig::new(setup, ComplexFrequency::from_complex(prior));
        ecfg.c_sep = ex.c_sep;
        let res = extract(&y, &ecfg, Some(&modes[..1]))?;
        let z = res.z_true.unwrap_or_else(nan_c);
        cnum(row, "omega", omega);
        cnum(row, "prior", prior);
        cnum(row, "z", z);
        cnum(row, "z_hat", res.z_hat);
        cnum(row, "omega_hat", res.omega_hat.as_complex());
        row.num("eps0", res.eps0).num("eps1", res.eps1).num("eps", res.eps);
        let err_z = (res.z_hat - z).norm();
        let err_w = (res.omega_hat.as_complex() - omega).norm();
        row.num("err_z", err_z).num("bound_z", res.bound_z);
        row.num("err_omega", err_w).num("bound_omega", res.bound_omega);
        row.flag("eps_small", res.hypotheses.eps_small).flag("branch_hyp", res.hypotheses.branch_hyp);
        if let Some(d) = res.hypotheses.disk_hyp {
            row.flag("disk_hyp", d);
        }
        row.flag("closed_form", y.analytic.is_some());
        let (fz, fw) = rounding_floors(z, omega, setup.delta);
        row.check_floor("z", err_z, res.bound_z, fz, &[("eps_le_1/8", res.eps <= 0.125)]);
        row.check_floor(
            "omega",
            err_w,
            res.bound_omega,
            fw,
            &[("eps_small", res.hypotheses.eps_small), ("branch_hyp", res.hypotheses.branch_hyp)],
        );
        Ok(())
    };
    if let Err(e) = body(&mut row) {
        row.fail(e);
    }
    rep.rows.push(row);
    Ok(rep)
}

fn prony_row(i: usize, case: &PronyCase) -> Row {
    let mut row = Row::new(i);
    let body = |row: &mut Row| -> Result<(), CliError> {
        let generated = match (case.amplitudes, case.nodes) {
            (Some(a), Some(z)) => Some((a, z)),
            (None, None) => None,
            _ => return Err(CliError::Config("prony case needs both amplitudes and nodes".into())),
        };
        let y = match (case.samples, generated) {
            (Some(y), None) => y,
            (None, Some((a, z))) => two_mode_samples(a[0], a[1], z[0], z[1]),
            _ => return Err(CliError::Config("prony case needs either samples or amplitudes/nodes".into())),
        };
        for (j, v) in y.iter().enumerate() {
            cnum(row, &format!("y{j}"), *v);
        }
        let p = match case.priors {
            Some(pr) => prony4_labeled(y, (pr[0], pr[1]))?,
            None => prony4(y)?,
        };
        cnum(row, "s1", p.s1);
        cnum(row, "s2", p.s2);
        cnum(row, "delta0", p.delta0);
        cnum(row, "z1", p.z1);
        cnum(row, "z2", p.z2);
        row.flag("confluent", p.confluent);
        cnum(row, "a1", p.a1.unwrap_or_else(nan_c));
        cnum(row, "a2", p.a2.unwrap_or_else(nan_c));
        cnum(row, "b0", p.b0.unwrap_or_else(nan_c));
        cnum(row, "b1", p.b1.unwrap_or_else(nan_c));
        row.num("residual", p.residual);
        row.flag("ambiguous", p.labels.is_some_and(|l| l.ambiguous));
        if let (Some((a, z)), Some(eta)) = (generated, case.eta) {
            let worst = worst_case_root_error(a[0], a[1], z[0], z[1], eta);
            let rep = conditioning_report(a[0], a[1], z[0], z[1], eta)?;
            row.num("eta", eta).num("worst_root_error", worst).num("conditioning_bound", rep.bound);
            row.flag("smallness_ok", rep.smallness_ok);
            row.check("conditioning", worst, rep.bound, &[("smallness", rep.smallness_ok)]);
        }
        Ok(())
    };
    if let Err(e) = body(&mut row) {
        row.fail(e);
    }
    row
}

pub fn run_prony(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let pc = cfg.prony.as_ref().ok_or_else(|| missing("prony"))?;
    let mut rep = RunReport::new("prony");
    rep.rows = pc.cases.iter().enumerate().map(|(i, c)| prony_row(i, c)).collect();
    rep.metadata.constants.insert("c_hat".into(), C_HAT);
    rep.metadata.constants.insert("c0".into(), C0);
    Ok(rep)
}

fn matrix(rows: &[Vec<Complex64>], dim: usize, what: &str) -> Result<CMatrix, CliError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Config(format!("{what} must be a {dim}x{dim} matrix")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn build_band(bc: &BandConfig) -> Result<(RationalResolvent, ForcingSpec, Option<WindowPolynomial>), CliError> {
    let poles = bc
        .poles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let laurent = p
                .laurent
                .iter()
                .map(|m| matrix(m, bc.dim, &format!("laurent coefficient of pole {i}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Pole { omega: p.omega, laurent })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let hol = bc.hol.iter().map(|m| matrix(m, bc.dim, "holomorphic coefficient")).collect::<Result<Vec<_>, _>>()?;
    let r = RationalResolvent::new(bc.dim, poles, hol)?;
    let f = ForcingSpec::new(bc.forcing.k, bc.forcing.beta, DVector::from_vec(bc.forcing.payload.clone()))?;
    let g = match &bc.window {
        Some(w) => Some(modified_window(&PseudopoleSet::new(w.nodes.clone())?, w.target, w.m0)?),
        None => None,
    };
    Ok((r, f, g))
}

pub fn run_band(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let bc = cfg.band.as_ref().ok_or_else(|| missing("band"))?;
    if !(bc.nu1 < bc.nu2) {
        return Err(CliError::Config("band needs nu1 < nu2".into()));
    }
    if bc.times.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Config("band times must be positive".into()));
    }
    let (r, f, g) = build_band(bc)?;
    let mut rep = RunReport::new("band-isolate");
    rep.metadata.tolerances.insert("line_tol".into(), bc.tol);
    rep.metadata.tolerances.insert("mismatch_tol".into(), bc.mismatch_tol);
    let mut sigma_used = None;
    for (i, t) in bc.times.iter().enumerate() {
        let mut row = Row::new(i);
        row.num("t", *t).num("nu1", bc.nu1).num("nu2", bc.nu2);
        match band_subtract(&r, &f, g.as_ref(), bc.nu1, bc.nu2, *t, bc.sigma_max, bc.tol) {
            Ok(b) => {
                row.num("difference_norm", b.difference.norm());
                row.num("residue_sum_norm", b.residue_sum.norm());
                row.num("mismatch", b.mismatch);
                row.int("strip_poles", b.strip_poles.len() as i64);
                row.num("sigma_max", b.sigma_max).num("truncation_estimate", b.truncation_estimate);
                row.check("mismatch", b.mismatch, bc.mismatch_tol, &[]);
                sigma_used.get_or_insert((b.sigma_max, *t));
            }
            Err(e) => {
                row.fail(e);
            }
        }
        rep.rows.push(row);
    }
    if let (true, Some((smax, t))) = (bc.plot_points > 0, sigma_used) {
        let gf = windowed_forcing(&f, g.as_ref());
        let k = bc.plot_points;
        let mut rows = Vec::with_capacity(2 * k + 1);
        for j in 0..=2 * k {
            let s = -smax + smax * j as f64 / k as f64;
            let mut line = vec![s];
            for nu in [bc.nu1, bc.nu2] {
                let w = Complex64::new(s, -nu);
                let v = r.apply(w, &gf(w)) * (-Complex64::i() * w * t).exp();
                line.push(v.norm());
            }
            rows.push(line);
        }
        rep.plotdata.push(PlotData {
            name: "band_sigma_grid".into(),
            columns: vec!["sigma".into(), "abs_integrand_nu1".into(), "abs_integrand_nu2".into()],
            rows,
        });
    }
    Ok(rep)
}

fn scan_row(row: &mut Row, model: &PseudoModel, windows: &[ScanWindow], eps: f64) -> Result<(), RinglabError> {
    let s = pseudospectrum_scan(model, windows, eps)?;
    row.num("c_q", s.c_q).num("C", s.c_const).num("radius", s.radius);
    row.int("points", s.points as i64).int("marked", s.marked as i64);
    row.int("excluded_outside", s.excluded_outside as i64);
    row.num("max_marked_dist", s.max_marked_dist);
    row.flag("hol_ok", s.hol_ok).flag("inclusion_holds", s.inclusion_holds);
    row.check("inclusion", s.excluded_outside as f64, 0.0, &[("hol_ok", s.hol_ok)]);
    Ok(())
}

pub fn run_pseudospectrum(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let pc = cfg.pseudospectrum.as_ref().ok_or_else(|| missing("pseudospectrum"))?;
    if pc.eps.iter().any(|e| !(*e > 0.0)) || pc.grid_n < 2 {
        return Err(CliError::Config("pseudospectrum needs eps > 0 and grid_n >= 2".into()));
    }
    let model = PseudoModel::new(pc.poles.clone(), pc.e_plus, pc.e_minus, pc.hol_bound)?;
    let mut rep = RunReport::new("pseudospectrum");
    rep.metadata.constants.insert("c_q".into(), model.c_q());
    rep.metadata.constants.insert("C".into(), model.inclusion_constant());
    let mut idx = 0;
    for eps in &pc.eps {
        if pc.zoom {
            let mut row = Row::new(idx);
            row.num("eps", *eps).text("window", "zoom");
            if let Err(e) = scan_row(&mut row, &model, &zoom_windows(&model, *eps, pc.grid_n), *eps) {
                row.fail(e);
            }
            rep.rows.push(row);
            idx += 1;
        }
        if let Some(gw) = pc.global {
            let mut row = Row::new(idx);
            row.num("eps", *eps).text("window", "global");
            let win = ScanWindow { center: gw.center, half_width: gw.half_width, n: pc.grid_n };
            match scan_row(&mut row, &model, &[win], *eps) {
                Ok(()) => {}
                Err(RinglabError::Resolution(msg)) => {
                    row.skip(msg);
                }
                Err(e) => {
                    row.fail(e);
                }
            }
            rep.rows.push(row);
            idx += 1;
        }
    }
    let plot_window = match (pc.global, pc.eps.first()) {
        (Some(gw), _) => Some(ScanWindow { center: gw.center, half_width: gw.half_width, n: pc.grid_n }),
        (None, Some(eps)) => zoom_windows(&model, *eps, pc.grid_n).into_iter().next(),
        (None, None) => None,
    };
    if let Some(w) = plot_window {
        let rows = model_norm_grid(&model, &w).into_iter().map(|(z, l)| vec![z.re, z.im, l]).collect();
        rep.plotdata.push(PlotData {
            name: "pseudospectrum_grid".into(),
            columns: vec!["re".into(), "im".into(), "log10_norm".into()],
            rows,
        });
    }
    Ok(rep)
}

const FD_SPAN: f64 = 4.0;
const FD_MIN_SAMPLES: usize = 64;
/// Steps whose error is below this multiple of the rounding estimate are
/// left out of the order fit.
const FD_ROUNDING_MARGIN: f64 = 1e3;

/// Floating-point error scale of the folded FD operator at step `dt`:
/// `eps * sum_k |c_k| ||D_k||_1 / dt^k`, per unit signal size.
pub fn fd_rounding_estimate(g: &WindowPolynomial, order: usize, dt: f64) -> f64 {
    g.coefficients()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let w: f64 = if k == 0 { 1.0 } else { centered_stencil(k, order).iter().map(|x| x.abs()).sum() };
            c.norm() * w / dt.powi(k as i32)
        })
        .sum::<f64>()
        * f64::EPSILON
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdConvergence {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub rounding: Vec<f64>,
    /// Number of trailing (smallest) usable steps in the fit.
    pub used: usize,
    pub order: f64,
}

/// Max error of the FD window against the modal oracle on `modes`, for each
/// step in `dts` (decreasing). The order is fitted on the three smallest
/// steps whose error stays well above the rounding estimate.
pub fn fd_convergence(g: &WindowPolynomial, modes: &[Mode], order: usize, dts: &[f64]) -> Result<FdConvergence, RinglabError> {
    let oracle_modes: Vec<Mode> = modes
        .iter()
        .map(|m| Mode { amp: m.amp * g.eval(m.freq.as_complex()), ..m.clone() })
        .collect();
    let mut errors = Vec::with_capacity(dts.len());
    let mut rounding = Vec::with_capacity(dts.len());
    for dt in dts {
        let n = ((FD_SPAN / dt).ceil() as usize + 1).max(FD_MIN_SAMPLES);
        let values: Vec<Complex64> = (0..n).map(|k| modes.iter().map(|m| m.eval(k as f64 * dt)).sum()).collect();
        let size = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let y = SampledSignal::new(0.0, *dt, values);
        let out = apply_window_fd(&y, g, order)?;
        let mut e: f64 = 0.0;
        for (k, v) in out.values.iter().enumerate() {
            let t = out.time(k);
            let exact: Complex64 = oracle_modes.iter().map(|m| m.eval(t)).sum();
            e = e.max((v - exact).norm());
        }
        errors.push(e);
        rounding.push(fd_rounding_estimate(g, order, *dt) * size);
    }
    let usable: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors.iter().zip(&rounding))
        .take_while(|(_, (e, r))| **e > FD_ROUNDING_MARGIN * **r)
        .map(|(d, (e, _))| (d.ln(), e.ln()))
        .collect();
    let tail = &usable[usable.len().saturating_sub(3)..];
    let order = if tail.len() >= 2 { loglog_slope(tail) } else { f64::NAN };
    Ok(FdConvergence { dts: dts.to_vec(), errors, rounding, used: tail.len(), order })
}

/// Steps with `|omega| dt` from 0.8 down by halving.
pub fn fd_steps(max_freq: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| 0.8 / max_freq * 0.5f64.powi(k as i32)).collect()
}

pub fn run_window_check(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let wc = cfg.window_check.as_ref().ok_or_else(|| missing("window_check"))?;
    if !(wc.delta_frac > 0.0) {
        return Err(CliError::Config("delta_frac must be positive".into()));
    }
    let set = PseudopoleSet::new(wc.nodes.clone())?;
    let g = modified_window(&set, wc.target, wc.m0)?;
    let mut rep = RunReport::new("window-check");
    let mut idx = 0;

    let mut row = Row::new(idx);
    row.text("kind", "identity").int("degree", g.degree() as i64);
    let mut ident: f64 = 0.0;
    for (j, w) in wc.nodes.iter().enumerate() {
        let want = if j == wc.target { 1.0 } else { 0.0 };
        ident = ident.max((g.eval(*w) - want).norm());
    }
    row.num("identity_error", ident);
    row.check("identity", ident, 1e-12, &[]);
    rep.rows.push(row);
    idx += 1;

    let mut rng = ChaCha8Rng::seed_from_u64(wc.seed);
    let d_sharp = set.min_sep();
    for draw in 0..wc.draws {
        let delta = wc.delta_frac * d_sharp;
        let perturbed: Vec<Complex64> = wc
            .nodes
            .iter()
            .map(|w| {
                let r = delta * rng.random::<f64>().sqrt();
                let th = std::f64::consts::TAU * rng.random::<f64>();
                w + Complex64::from_polar(r, th)
            })
            .collect();
        let mut row = Row::new(idx);
        row.text("kind", "robustness").int("draw", draw as i64);
        match interp_robustness(&set, wc.target, &perturbed) {
            Ok(rr) => {
                row.num("delta", rr.delta).num("d_sharp", rr.d_sharp);
                row.num("max_deviation", rr.max_deviation()).num("bound", rr.bound);
                row.flag("hypothesis_ok", rr.hypothesis_ok);
                row.check("robustness", rr.max_deviation(), rr.bound, &[("delta_le_dsharp/8", rr.hypothesis_ok)]);
            }
            Err(e) => {
                row.fail(e);
            }
        }
        rep.rows.push(row);
        idx += 1;
    }

    if !wc.fd_orders.is_empty() {
        let target = wc.nodes[wc.target];
        let modes = vec![
            Mode::pure(target, Complex64::new(1.0, 0.0)),
            Mode::pure(target * Complex64::new(0.8, 0.0) + Complex64::new(0.1, -0.05), Complex64::new(0.0, 0.5)),
        ];
        let fmax = modes.iter().map(|m| m.freq.as_complex().norm()).fold(1e-3, f64::max);
        for order in &wc.fd_orders {
            let mut row = Row::new(idx);
            row.text("kind", "fd").int("stencil_order", *order as i64);
            match fd_convergence(&g, &modes, *order, &fd_steps(fmax, 8)) {
                Ok(fc) => {
                    for (k, (e, r)) in fc.errors.iter().zip(&fc.rounding).enumerate() {
                        row.num(&format!("dt_{k}"), fc.dts[k]).num(&format!("fd_err_{k}"), *e);
                        row.num(&format!("rounding_{k}"), *r);
                    }
                    row.int("fit_points", fc.used as i64).num("measured_order", fc.order);
                    row.check("fd_order", (fc.order - *order as f64).abs(), 0.5, &[("fit_points_ge_2", fc.used >= 2)]);
                }
                Err(e) => {
                    row.fail(e);
                }
            }
            rep.rows.push(row);
            idx += 1;
        }
    }
    Ok(rep)
}
