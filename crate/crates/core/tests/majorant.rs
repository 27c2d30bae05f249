use std::f64::consts::PI;

use clusterforge::majorant::{
    check_proposition_g, default_r_grid, g_majorant, g_majorant_default, hat_abs_f_quadrature,
    MajorantConstants,
};
use clusterforge::{EnsembleParams, PairPotential};

fn hs_half() -> (PairPotential, EnsembleParams) {
    let hs = PairPotential::hard_sphere(1.0).unwrap();
    let zmax = 3.0 / (4.0 * PI * std::f64::consts::E);
    (hs, EnsembleParams::new(1.0, 0.5 * zmax, 12.0, 0.5).unwrap())
}

#[test]
fn g_integral_matches_hat_zero() {
    let (hs, params) = hs_half();
    let g = g_majorant_default(&hs, &params).unwrap();
    let integral = g.g.radial_integral();
    assert!((integral / g.g_hat0 - 1.0).abs() < 0.01, "{integral} vs {}", g.g_hat0);
    let rep = check_proposition_g(&g.g);
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn g_matches_convolution_series() {
    let (hs, params) = hs_half();
    let g = g_majorant_default(&hs, &params).unwrap();
    let w = g.constants.w;
    let c = g.constants.c_beta;
    let tail = w.powi(4) * c * c / (1.0 - w * c);
    for &r in &[0.0, 0.3, 0.9, 1.2, 1.7, 2.5, 3.5] {
        let f = if r < 1.0 { 1.0 } else { 0.0 };
        let overlap = if r < 2.0 { PI / 12.0 * (4.0 + r) * (2.0 - r).powi(2) } else { 0.0 };
        let two = w * w * f + w.powi(3) * overlap;
        let got = g.at(r);
        assert!(got >= two - 1e-9 && got <= two + tail + 1e-9, "r={r}: {got} vs [{two}, {}]", two + tail);
    }
}

#[test]
fn zero_weight_gives_zero_g() {
    let (hs, params) = hs_half();
    let mut c = MajorantConstants::new(&hs, &params).unwrap();
    c.w = 0.0;
    let hat = hat_abs_f_quadrature(&hs, 1.0).unwrap();
    let g = g_majorant(&c, &hs, &hat, &default_r_grid(&hs, 64)).unwrap();
    assert!(g.g.values.iter().all(|&v| v == 0.0));
    assert!(check_proposition_g(&g.g).passed);
}
