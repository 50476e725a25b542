use kpss::coupling::{contraction_grid, coupled_step, ray_pairs, sharpness_probe, CoupledPair};
use kpss::geometry::{Direction, PolarPoint};
use kpss::kernels::step;
use kpss::phi::PhiSpec;
use kpss::rng::RngStream;
use kpss::stats::ks_two_sample;
use kpss::targets::Target;

#[test]
fn coupled_marginals_are_kernel_draws() {
    let targets = [
        Target::dk(3, 2.0, PhiSpec::linear(1.0).unwrap()).unwrap(),
        Target::std_t(2, 2.0).unwrap(),
        Target::pareto_shell(3, 1.0, 2.0, 1.0).unwrap(),
    ];
    let theta = Direction::axis(3);
    for (i, t) in targets.iter().enumerate() {
        let theta = if t.d() == 3 { theta.clone() } else { Direction::axis(t.d()) };
        let x = PolarPoint::new(2.0, theta.clone());
        let y = PolarPoint::new(5.0, theta);
        let mut rng = RngStream::new(21, i as u64);
        let n = 100_000;
        let mut coupled = Vec::with_capacity(n);
        let mut independent = Vec::with_capacity(n);
        for _ in 0..n {
            coupled.push(coupled_step(t, &x, &y, &mut rng).unwrap().0.radius);
            independent.push(step(t, &x, &mut rng).unwrap().r_new);
        }
        let res = ks_two_sample(&coupled, &independent).unwrap();
        assert!(res.passes(0.01), "{}: {res:?}", t.name());
    }
}

#[test]
fn pss_contracts_at_one_half() {
    let t = Target::dk(3, 1.0, PhiSpec::linear(1.0).unwrap()).unwrap();
    let pairs = ray_pairs(3, &[0.5, 2.0, 5.0]);
    for est in contraction_grid(&t, &pairs, 20_000, 22) {
        let est = est.unwrap();
        assert_eq!(est.theoretical_rate, 0.5);
        assert!(est.empirical_rate <= 0.5 + 3.0 * est.std_error, "{est:?}");
    }
}

#[test]
fn off_ray_pairs_are_supported() {
    let t = Target::pareto_shell(2, 1.0, 2.0, 1.0).unwrap();
    let x = PolarPoint::from_cartesian(&[3.0, 0.0]).unwrap();
    let y = PolarPoint::from_cartesian(&[0.0, 2.0]).unwrap();
    let est = kpss::coupling::contraction_ratio(&t, &CoupledPair::new(x, y), 20_000, &mut RngStream::new(23, 0)).unwrap();
    assert!(est.empirical_rate.is_finite() && est.empirical_rate >= 0.0);
}

#[test]
fn std_t_sharpness_approaches_the_rate_from_below() {
    let t = Target::std_t(2, 2.0).unwrap();
    let theta = Direction::axis(2);
    let vals: Vec<f64> = [10.0, 100.0, 1e4]
        .iter()
        .map(|&r| sharpness_probe(&t, r, &theta, 10, &mut RngStream::new(24, 0)).unwrap().quadrature.unwrap())
        .collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]), "{vals:?}");
    assert!((vals[2] - 8.0 / 9.0).abs() < 1e-4, "{vals:?}");
}
