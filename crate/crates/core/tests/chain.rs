use approx::assert_relative_eq;
use num_complex::Complex64 as C;

use ringlab_core::extractor::{extract, ExtractionConfig};
use ringlab_core::paramap::{
    bias_bound_2p, data_map, estimated_data, inverse_constants, invert_data, InversionMode, LatticeModel, ParamBox,
    ParameterPoint, Sector,
};
use ringlab_core::signal::{sample, Mode, NoiseSpec, ObservationSetup, TailSpec};

fn bounds() -> ParamBox {
    ParamBox { m: (0.9, 1.1), a: (0.05, 0.15), lambda: (0.0, 0.0), a_min: 0.0 }
}

#[test]
fn pure_modes_invert_to_truth() {
    let model = LatticeModel::new(100, 0);
    let p = ParameterPoint::new(1.0, 0.1, 0.0);
    let setup = ObservationSetup::new(4.0, 10.0, 1.0, 0.01);
    let mut omega_hat = Vec::new();
    for sector in [Sector::Plus, Sector::Minus] {
        let w = model.pole(sector, &p).unwrap();
        let y = sample(&[Mode::pure(w, C::new(1.0, 0.2))], &TailSpec::zero(), &NoiseSpec::None, &setup).unwrap();
        let r = extract(&y.sampled_only(), &ExtractionConfig::new(setup, w.into()), None).unwrap();
        assert!((r.omega_hat.as_complex() - w).norm() < 1e-10);
        omega_hat.push(r.omega_hat.as_complex());
    }
    let data = estimated_data(omega_hat[0], omega_hat[1], model.ell, model.n).unwrap().as_vec(InversionMode::TwoParam);
    assert_relative_eq!(data[0], data_map(&model, InversionMode::TwoParam, &p).unwrap()[0], max_relative = 1e-12);
    let guess = ParameterPoint::new(0.95, 0.12, 0.0);
    let inv = invert_data(&model, InversionMode::TwoParam, &data, guess, 1e-13, Some(&bounds())).unwrap();
    assert_relative_eq!(inv.point.m, 1.0, epsilon = 1e-9);
    assert_relative_eq!(inv.point.a, 0.1, epsilon = 1e-9);
}

#[test]
fn tail_bias_within_bound() {
    let model = LatticeModel::new(100, 0);
    let p = ParameterPoint::new(1.0, 0.1, 0.0);
    let setup = ObservationSetup::new(4.0, 10.0, 1.0, 0.01);
    let tail = TailSpec { c_tail: 1.0, nu: 0.5, m: 2, leak: 0.0 };
    let mut eps = Vec::new();
    let mut z = Vec::new();
    let mut omega_hat = Vec::new();
    for sector in [Sector::Plus, Sector::Minus] {
        let w = model.pole(sector, &p).unwrap();
        let mode = Mode::pure(w, C::new(1.0, 0.0));
        let y = sample(std::slice::from_ref(&mode), &tail, &NoiseSpec::None, &setup).unwrap();
        let r = extract(&y, &ExtractionConfig::new(setup, w.into()), Some(std::slice::from_ref(&mode))).unwrap();
        eps.push(r.eps);
        z.push(r.z_true.unwrap().norm());
        omega_hat.push(r.omega_hat.as_complex());
    }
    let data = estimated_data(omega_hat[0], omega_hat[1], model.ell, model.n).unwrap().as_vec(InversionMode::TwoParam);
    let inv = invert_data(&model, InversionMode::TwoParam, &data, p, 1e-13, Some(&bounds())).unwrap();
    let c = inverse_constants(&model, InversionMode::TwoParam, &bounds(), 9).unwrap();
    let bound = bias_bound_2p(eps[0], eps[1], z[0], z[1], setup.delta, model.ell, c.c_star);
    let bias = inv.point.distance(&p, InversionMode::TwoParam);
    assert!(bias > 0.0 && bias <= bound, "bias {bias:e} vs bound {bound:e}");
}
