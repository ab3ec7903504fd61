use num_complex::Complex64;
use pnp_buqo::bayes::{in_credible_region, CredibleRegion, DEFAULT_REL_TOL};
use pnp_buqo::linalg::distance_c;
use pnp_buqo::operators::{make_gradient_op, FourierOperator, LinearOperator, SamplingPattern};
use pnp_buqo::sim::{generate_phantom, simulate_measurements, simulate_noiseless, StructureSpec};

#[test]
fn data_ball_covers_the_noise() {
    let n = 32;
    let x = generate_phantom(n, &StructureSpec::default(), 3).unwrap().image;
    let phi = FourierOperator::new(&SamplingPattern::radial(n, 12).unwrap());
    let clean = phi.apply(x.as_slice()).unwrap();
    let inside = (0..1000u64)
        .filter(|&s| {
            let d = simulate_measurements(&x, &phi, 25.0, s).unwrap();
            distance_c(&d.y, &clean) <= d.epsilon
        })
        .count();
    assert!(inside as f64 / 1000.0 >= 0.93, "{inside}/1000");
}

#[test]
fn noise_level_follows_isnr() {
    let n = 32;
    let x = generate_phantom(n, &StructureSpec::default(), 3).unwrap().image;
    let phi = FourierOperator::new(&SamplingPattern::radial(n, 12).unwrap());
    let mut last = f64::INFINITY;
    for isnr in [0.0, 10.0, 20.0, 35.0, 60.0] {
        let d = simulate_noiseless(&x, &phi, isnr).unwrap();
        assert!(d.delta < last && d.delta > 0.0);
        last = d.delta;
        assert_eq!(d.y, phi.apply(x.as_slice()).unwrap());
    }
    assert!(simulate_noiseless(&x, &phi, 61.0).is_err());
    let a = simulate_measurements(&x, &phi, 20.0, 9).unwrap();
    let b = simulate_measurements(&x, &phi, 20.0, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn membership_diagnostics() {
    let n = 32;
    let x = generate_phantom(n, &StructureSpec::default(), 3).unwrap().image;
    let phi = FourierOperator::new(&SamplingPattern::radial(n, 12).unwrap());
    let psi = make_gradient_op(n).unwrap();
    let clean = phi.apply(x.as_slice()).unwrap();
    // Data chosen so that ||Phi x - y|| is any prescribed multiple of epsilon.
    let dir: Vec<Complex64> = (0..clean.len()).map(|i| Complex64::new((i as f64).cos(), 0.3)).collect();
    let dn = pnp_buqo::linalg::norm_c(&dir);
    let eps = 0.05;
    let region = CredibleRegion::from_map(&x, &psi, 1.0, eps, 0.01).unwrap();
    let at = |scale: f64| -> Vec<Complex64> { clean.iter().zip(&dir).map(|(c, d)| c + d * (scale * eps / dn)).collect() };

    let m = in_credible_region(&x, &region, &phi, &psi, &at(2.0), DEFAULT_REL_TOL).unwrap();
    assert!(!m.inside);
    assert!((m.data_slack - 2.0).abs() < 1e-9);
    let m = in_credible_region(&x, &region, &phi, &psi, &at(1.0 + DEFAULT_REL_TOL / 2.0), DEFAULT_REL_TOL).unwrap();
    assert!(m.inside);
    let m = in_credible_region(&x, &region, &phi, &psi, &clean, DEFAULT_REL_TOL).unwrap();
    assert!(m.inside && m.l1_slack < 1.0 && m.box_violation == 0.0);
}
