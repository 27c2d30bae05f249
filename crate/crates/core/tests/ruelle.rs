use clusterforge::potential::Perturbation;
use clusterforge::quadrature::{McSpec, QuadratureSpec};
use clusterforge::rng::Stream;
use clusterforge::ruelle::*;
use clusterforge::PairPotential;

fn random_config(s: &mut Stream, n: usize, side: f64) -> Vec<[f64; 3]> {
    (0..n).map(|_| s.point_in_box(side)).collect()
}

fn splits(n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (1..=n)
        .map(|ni| ((0..ni).collect(), (ni..n).collect()))
        .collect()
}

#[test]
fn recursions_match_direct_sums() {
    let pot = PairPotential::square_well(1.0, 1.5, 0.5).unwrap();
    let mut s = Stream::new(7, &[1], 0);
    for n in 1..=5 {
        for _ in 0..100 {
            let ctx = PhiContext::new(&pot, 1.0, random_config(&mut s, n, 2.0));
            for (i, j) in splits(n) {
                let scale = phi_abs_mass(&ctx, &i, &j).unwrap().max(1e-300);
                let d = phi_direct(&ctx, &i, &j).unwrap();
                let r = phi_recursive(&ctx, &i, &j).unwrap();
                assert!((d - r).abs() <= 1e-12 * scale, "{d} vs {r}");
                let pd = psi(&ctx, &i, &j).unwrap();
                let pr = psi_recursive(&ctx, &i, &j).unwrap();
                assert!((pd - pr).abs() <= 1e-12 * pd.max(1e-300), "{pd} vs {pr}");
                verify_tree_graph_inequality(&ctx, &i, &j).unwrap();
            }
        }
    }
}

#[test]
fn phi_prime_is_linear_and_second_order() {
    let pot = PairPotential::square_well(1.0, 1.5, 0.5).unwrap();
    let v1 = Perturbation::bump(1.25, 0.2, 0.05);
    let v2 = Perturbation::bump(1.6, 0.3, -0.02);
    let cfg = vec![[0.0; 3], [1.2, 0.1, 0.0], [0.3, 1.3, 0.2], [1.1, 1.0, 0.9]];
    let at = |v: &Perturbation| {
        let ctx = PhiContext::new(&pot, 1.0, cfg.clone()).with_perturbation(v.clone(), 1.0).unwrap();
        phi_prime(&ctx, &[0], &[1, 2, 3]).unwrap()
    };
    let combo = Perturbation::combine(2.0, &v1, -3.0, &v2);
    let lhs = at(&combo);
    let rhs = 2.0 * at(&v1) - 3.0 * at(&v2);
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    let ctx = PhiContext::new(&pot, 1.0, cfg.clone()).with_perturbation(v1, 1.0).unwrap();
    let slope = phi_prime_fd_slope(&ctx, &[0], &[1, 2, 3], &[1e-2, 1e-3, 1e-4]).unwrap();
    assert!((slope - 2.0).abs() <= 0.2, "slope {slope}");
}

#[test]
fn remainder_and_integrated_bounds_hold() {
    let pot = PairPotential::square_well(1.0, 1.5, 0.5).unwrap();
    let v = Perturbation::bump(1.25, 0.2, 0.05);
    let cfg = vec![[0.0; 3]; 3];
    let ctx = PhiContext::new(&pot, 1.0, cfg).with_perturbation(v, 1.0).unwrap();
    let settings = RemainderSettings {
        box_side: 3.0,
        quadrature: QuadratureSpec::MonteCarlo(McSpec { base_samples: 4000, seed: 3, shards: 8 }),
    };
    let rep = verify_remainder_bounds(&ctx, &[0], &[1, 2], &settings).unwrap();
    assert!(rep.passed);
    let ib = check_ruelle_integrated_bound(&ctx, &[0], &[1, 2], &settings).unwrap();
    assert!(ib.passed, "{ib:?}");
}
