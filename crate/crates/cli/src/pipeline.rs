//! End-to-end chain: lattice poles at the true point, one-mode signals per
//! sector, optional analytic window, extraction, inversion and the bias
//! ledger with every bound evaluated next to the empirical value.

use num_complex::Complex64;
use rayon::prelude::*;
use ringlab_core::extractor::{epsilon_budget, extract, EpsilonBudget, ExtractionConfig, ExtractionResult};
use ringlab_core::paramap::{
    bias_bound_2p, bias_bound_3p, bias_hypothesis, data_error_bound_2p, data_error_bound_3p, estimated_data,
    inverse_constants, invert_data, observables, pseudopole, InversionMode, LatticeModel, ParameterPoint, Sector,
};
use ringlab_core::signal::{continuous_l2, sample, ComplexFrequency, Mode, NoiseSpec, ObservationSetup, SampledSignal};
use ringlab_core::window::{apply_window_fd, apply_window_modal, modified_window, stencil_half_width, PseudopoleSet, WindowPolynomial};
use ringlab_core::RinglabError;

use crate::config::{missing, PriorSource, ScenarioConfig, SweepAxis, WindowPath};
use crate::report::{Row, RunReport};
use crate::drivers::rounding_floors;
use crate::{CliError, ROUNDING_REL};

/// Relative tolerance of the quadrature behind the measurement L2 norm.
pub const BUDGET_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct SectorOutcome {
    omega: Complex64,
    prior: Complex64,
    res: ExtractionResult,
    budget: EpsilonBudget,
    budget_applicable: bool,
}

fn sector_index(s: Sector) -> usize {
    match s {
        Sector::Plus => 0,
        Sector::Minus => 1,
    }
}

fn fd_padded_signal(
    modes: &[Mode],
    cfg: &ScenarioConfig,
    noise: &NoiseSpec,
    setup: &ObservationSetup,
    g: &WindowPolynomial,
    order: usize,
) -> Result<SampledSignal, RinglabError> {
    let h = (1..=g.degree()).map(|k| stencil_half_width(k, order)).max().unwrap_or(0);
    let pad = h as f64 * setup.dt;
    if setup.t0 < pad {
        return Err(RinglabError::Config(format!("T0 must be at least {pad} for the FD window")));
    }
    let wide = ObservationSetup { t0: setup.t0 - pad, t_len: setup.t_len + 2.0 * pad, ..*setup };
    let raw = sample(modes, &cfg.tail, noise, &wide)?.sampled_only();
    apply_window_fd(&raw, g, order)
}

fn run_sector(
    cfg: &ScenarioConfig,
    model: &LatticeModel,
    p: &ParameterPoint,
    sector: Sector,
    setup: &ObservationSetup,
) -> Result<SectorOutcome, RinglabError> {
    let modes_cfg = cfg.modes.unwrap_or_default();
    let amp = match sector {
        Sector::Plus => modes_cfg.amp_plus,
        Sector::Minus => modes_cfg.amp_minus,
    };
    let offset = model.pole_offset[sector_index(sector)];
    let n = model.n;
    let pseudo: Vec<Complex64> = (0..=n).map(|j| pseudopole(model, j, sector, p)).collect::<Result<_, _>>()?;
    let truth: Vec<Complex64> = pseudo.iter().map(|w| w + offset).collect();
    let source = cfg.window.map(|w| w.prior).unwrap_or_default();
    let priors = match source {
        PriorSource::Exact => truth.clone(),
        PriorSource::Offset => pseudo.clone(),
    };
    let omega = truth[n as usize];

    let mut modes = vec![Mode::pure(omega, amp)];
    if modes_cfg.lower_amp != Complex64::new(0.0, 0.0) {
        modes.extend(truth[..n as usize].iter().map(|w| Mode::pure(*w, modes_cfg.lower_amp)));
    }
    if let Some(c) = cfg.contamination {
        if c.rel_amp != 0.0 {
            modes.push(Mode::pure(omega + c.offset, amp * c.rel_amp));
        }
    }
    let noise = cfg.noise.to_spec(setup.dt);

    let (y, modes_w, budget_applicable) = match cfg.window {
        None => (sample(&modes, &cfg.tail, &noise, setup)?, modes.clone(), true),
        Some(wc) => {
            let g = modified_window(&PseudopoleSet::new(priors.clone())?, n as usize, wc.m0)?;
            let modes_w = apply_window_modal(&modes, &g)?;
            match wc.path {
                WindowPath::Modal => (sample(&modes_w, &cfg.tail, &noise, setup)?, modes_w, true),
                WindowPath::Fd => (fd_padded_signal(&modes, cfg, &noise, setup, &g, wc.stencil_order)?, modes_w, false),
            }
        }
    };
    let reference = modes_w[0].clone();
    let ecfg = ExtractionConfig::new(*setup, ComplexFrequency::from_complex(priors[n as usize]));
    let res = extract(&y, &ecfg, Some(std::slice::from_ref(&reference)))?;

    // everything in the residual except the tail counts as measurement error
    let others = modes_w[1..].to_vec();
    let breaks = noise.breakpoints(setup.t0, setup.t0 + setup.t_len);
    let meas = |t: f64| -> Complex64 {
        let mut v: Complex64 = others.iter().map(|m| m.eval(t)).sum();
        v.re += noise.eval(t);
        v
    };
    let noise_l2 = continuous_l2(meas, setup, &breaks, BUDGET_QUAD_TOL);
    let budget = epsilon_budget(reference.amp, reference.freq, &cfg.tail, noise_l2, setup, 1.0, 1.0)?;
    Ok(SectorOutcome { omega, prior: priors[n as usize], res, budget, budget_applicable })
}

fn push_sector(row: &mut Row, tag: &str, s: &SectorOutcome, delta: f64) {
    let r = &s.res;
    let z = r.z_true.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    let k = |name: &str| format!("{name}_{tag}");
    row.num(&k("omega_re"), s.omega.re).num(&k("omega_im"), s.omega.im);
    row.num(&k("prior_re"), s.prior.re).num(&k("prior_im"), s.prior.im);
    row.num(&k("z_re"), z.re).num(&k("z_im"), z.im);
    row.num(&k("z_hat_re"), r.z_hat.re).num(&k("z_hat_im"), r.z_hat.im);
    row.num(&k("omega_hat_re"), r.omega_hat.re).num(&k("omega_hat_im"), r.omega_hat.im);
    row.num(&k("eps0"), r.eps0).num(&k("eps1"), r.eps1).num(&k("eps"), r.eps);
    row.num(&k("err_z"), (r.z_hat - z).norm()).num(&k("bound_z"), r.bound_z);
    row.num(&k("err_omega"), (r.omega_hat.as_complex() - s.omega).norm()).num(&k("bound_omega"), r.bound_omega);
    row.num(&k("eps_budget"), s.budget.eps_bound);
    row.num(&k("eps_budget_tail"), s.budget.eps_tail_bound).num(&k("eps_budget_meas"), s.budget.eps_meas_bound);
    row.flag(&k("eps_small"), r.hypotheses.eps_small).flag(&k("branch_hyp"), r.hypotheses.branch_hyp);
    row.flag(&k("budget_applicable"), s.budget_applicable);

    let eps_stab = r.eps <= 0.125;
    let (fz, fw) = rounding_floors(z, s.omega, delta);
    row.check_floor(&k("z"), (r.z_hat - z).norm(), r.bound_z, fz, &[("eps_le_1/8", eps_stab)]);
    row.check_floor(
        &k("omega"),
        (r.omega_hat.as_complex() - s.omega).norm(),
        r.bound_omega,
        fw,
        &[("eps_small", r.hypotheses.eps_small), ("branch_hyp", r.hypotheses.branch_hyp)],
    );
    row.check(&k("eps_budget"), r.eps, s.budget.eps_bound, &[("budget_applicable", s.budget_applicable)]);
}

fn bias_bound(mode: InversionMode, eps: (f64, f64), z: (f64, f64), delta: f64, model: &LatticeModel, c_star: f64) -> f64 {
    match mode {
        InversionMode::TwoParam => bias_bound_2p(eps.0, eps.1, z.0, z.1, delta, model.ell, c_star),
        InversionMode::ThreeParam => bias_bound_3p(eps.0, eps.1, z.0, z.1, delta, model.ell, model.n, c_star),
    }
}

fn scenario_body(cfg: &ScenarioConfig, row: &mut Row) -> Result<(), CliError> {
    let model = cfg.lattice.clone().ok_or_else(|| missing("lattice"))?;
    let p = cfg.truth.ok_or_else(|| missing("truth"))?;
    let setup = cfg.observation()?;
    let inv = cfg.inversion.ok_or_else(|| missing("inversion"))?;
    let mode = inv.mode;

    row.int("ell", model.ell as i64).int("n", model.n as i64);
    row.num("T0", setup.t0).num("T", setup.t_len).num("Delta", setup.delta).num("dt", setup.dt);
    row.text("mode", match mode {
        InversionMode::TwoParam => "2p",
        InversionMode::ThreeParam => "3p",
    });
    row.text("window", match cfg.window.map(|w| w.path) {
        None => "none",
        Some(WindowPath::Modal) => "modal",
        Some(WindowPath::Fd) => "fd",
    });
    row.num("M", p.m).num("a", p.a).num("Lambda", p.lambda);

    let plus = run_sector(cfg, &model, &p, Sector::Plus, &setup)?;
    let minus = run_sector(cfg, &model, &p, Sector::Minus, &setup)?;
    push_sector(row, "plus", &plus, setup.delta);
    push_sector(row, "minus", &minus, setup.delta);

    let g_true = observables(plus.omega, minus.omega, model.ell, model.n)?;
    let g_hat = estimated_data(plus.res.omega_hat.as_complex(), minus.res.omega_hat.as_complex(), model.ell, model.n)?;
    let dw_plus = plus.res.omega_hat.as_complex() - plus.omega;
    let dw_minus = minus.res.omega_hat.as_complex() - minus.omega;
    let data_hat = g_hat.as_vec(mode);
    let data_err = data_hat.iter().zip(g_true.as_vec(mode)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let data_bound = match mode {
        InversionMode::TwoParam => data_error_bound_2p(dw_plus, dw_minus, model.ell),
        InversionMode::ThreeParam => data_error_bound_3p(dw_plus, dw_minus, model.ell, model.n),
    };
    row.num("U_hat", g_hat.u).num("V_hat", g_hat.v).num("W_hat", g_hat.w_tilde);
    row.num("U", g_true.u).num("V", g_true.v).num("W", g_true.w_tilde);
    row.num("data_err", data_err).num("data_bound", data_bound);
    let g_scale = g_true.as_vec(mode).iter().map(|v| v.abs()).fold(0.0, f64::max);
    row.check_floor("data", data_err, data_bound, ROUNDING_REL * g_scale, &[]);

    let mut guess = inv.guess.unwrap_or(p);
    if mode == InversionMode::TwoParam {
        guess.lambda = p.lambda;
    }
    let inverse = invert_data(&model, mode, &data_hat, guess, inv.tol, Some(&inv.bounds))?;
    let p_hat = inverse.point;
    let bias = p_hat.distance(&p, mode);
    row.num("M_hat", p_hat.m).num("a_hat", p_hat.a).num("Lambda_hat", p_hat.lambda);
    row.int("newton_iterations", inverse.iterations as i64).num("newton_residual", inverse.residual);
    row.num("bias", bias);

    let consts = inverse_constants(&model, mode, &inv.bounds, inv.grid_n)?;
    let z = (
        plus.res.z_true.map_or(f64::NAN, |z| z.norm()),
        minus.res.z_true.map_or(f64::NAN, |z| z.norm()),
    );
    let eps = (plus.res.eps, minus.res.eps);
    let eps_budget = (plus.budget.eps_bound, minus.budget.eps_bound);
    let bound = bias_bound(mode, eps, z, setup.delta, &model, consts.c_star);
    let bound_budget = bias_bound(mode, eps_budget, z, setup.delta, &model, consts.c_star);
    let bound_tail = bias_bound(
        mode,
        (plus.budget.eps_tail_bound, minus.budget.eps_tail_bound),
        z,
        setup.delta,
        &model,
        consts.c_star,
    );
    let bound_meas = bias_bound(
        mode,
        (plus.budget.eps_meas_bound, minus.budget.eps_meas_bound),
        z,
        setup.delta,
        &model,
        consts.c_star,
    );
    // the Newton stopping rule leaves |data(p_hat) - data_hat| <= residual
    let slack = consts.c_star * (inverse.residual + ROUNDING_REL * g_scale);
    row.num("bias_bound", bound).num("bias_bound_budget", bound_budget);
    row.num("bias_bound_tail", bound_tail).num("bias_bound_meas", bound_meas);
    row.num("newton_slack", slack);
    row.num("c_star", consts.c_star).num("jac_det_min", consts.jac_det_min);

    let hyp_eps = bias_hypothesis(eps.0, z.0) && bias_hypothesis(eps.1, z.1);
    let hyp_branch = plus.res.hypotheses.branch_hyp && minus.res.hypotheses.branch_hyp;
    let hyp_box = inv.bounds.contains(&p, mode) && inv.bounds.contains(&p_hat, mode);
    let hyp_lattice = model.pole_offset.iter().all(|w| *w == Complex64::new(0.0, 0.0));
    let hyp_budget_eps = bias_hypothesis(eps_budget.0, z.0) && bias_hypothesis(eps_budget.1, z.1);
    let hyp_budget_app = plus.budget_applicable && minus.budget_applicable;
    row.flag("hyp_eps", hyp_eps).flag("hyp_branch", hyp_branch).flag("hyp_box", hyp_box);
    row.flag("hyp_exact_lattice", hyp_lattice).flag("hyp_budget_eps", hyp_budget_eps);
    row.check(
        "bias",
        bias,
        bound + slack,
        &[("eps", hyp_eps), ("branch", hyp_branch), ("box", hyp_box), ("exact_lattice", hyp_lattice)],
    );
    row.check(
        "bias_budget",
        bias,
        bound_budget + slack,
        &[
            ("budget_eps", hyp_budget_eps),
            ("budget_applicable", hyp_budget_app),
            ("branch", hyp_branch),
            ("box", hyp_box),
            ("exact_lattice", hyp_lattice),
        ],
    );
    Ok(())
}

/// One scenario; module errors mark the row failed instead of aborting.
pub fn run_scenario(cfg: &ScenarioConfig, index: usize) -> Row {
    let mut row = Row::new(index);
    if let Err(e) = scenario_body(cfg, &mut row) {
        row.fail(e);
    }
    row
}

fn fill_metadata(rep: &mut RunReport, cfg: &ScenarioConfig) {
    if let Some(inv) = cfg.inversion {
        rep.metadata.tolerances.insert("newton_tol".into(), inv.tol);
        rep.metadata.tolerances.insert("inverse_grid_n".into(), inv.grid_n as f64);
    }
    rep.metadata.tolerances.insert("budget_quad_rel_tol".into(), BUDGET_QUAD_TOL);
    rep.metadata.constants.insert("c_hat".into(), ringlab_core::prony::C_HAT);
    if let Some(c) = rep.rows.iter().find_map(|r| r.get_f64("c_star")) {
        rep.metadata.constants.insert("c_star".into(), c);
    }
}

pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    cfg.validate_common()?;
    let mut rep = RunReport::new("pipeline");
    rep.rows.push(run_scenario(cfg, 0));
    fill_metadata(&mut rep, cfg);
    Ok(rep)
}

/// The scenario with one axis set to `value`.
pub fn apply_axis(cfg: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig, CliError> {
    let mut c = cfg.clone();
    let obs = c.observation.as_mut().ok_or_else(|| missing("observation"));
    match axis {
        SweepAxis::T0 => obs?.t0 = value,
        SweepAxis::T => obs?.t_len = value,
        SweepAxis::Delta => obs?.delta = value,
        SweepAxis::Ell => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(CliError::Config(format!("ell must be a positive integer, got {value}")));
            }
            c.lattice.as_mut().ok_or_else(|| missing("lattice"))?.ell = value as u32;
        }
        SweepAxis::NoiseAmp => c.noise = c.noise.with_amplitude(value)?,
        SweepAxis::Separation => {
            let cont = c.contamination.as_mut().ok_or_else(|| missing("contamination"))?;
            let r = cont.offset.norm();
            if r == 0.0 {
                return Err(CliError::Config("separation sweep needs a nonzero contamination offset".into()));
            }
            cont.offset *= value / r;
        }
    }
    c.validate_common()?;
    Ok(c)
}

/// Sweep points run concurrently; rows come back in sweep order.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    cfg.validate_common()?;
    let sweep = cfg.sweep.clone().ok_or_else(|| missing("sweep"))?;
    if sweep.values.is_empty() {
        return Err(CliError::Config("sweep values are empty".into()));
    }
    let configs: Vec<ScenarioConfig> =
        sweep.values.iter().map(|v| apply_axis(cfg, sweep.axis, *v)).collect::<Result<_, _>>()?;
    let rows: Vec<Row> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut head = Row::new(i);
            head.text("axis", sweep.axis.name()).num("value", sweep.values[i]);
            let row = run_scenario(c, i);
            head.status = row.status;
            head.error = row.error;
            head.values.extend(row.values);
            head.checks = row.checks;
            head
        })
        .collect();
    let mut rep = RunReport::new("sweep");
    rep.rows = rows;
    fill_metadata(&mut rep, cfg);
    Ok(rep)
}
