use pnp_buqo::bayes::{in_credible_region, CredibleRegion, DEFAULT_REL_TOL};
use pnp_buqo::map_solver::{solve_map, MapOptions};
use pnp_buqo::operators::{make_gradient_op, FourierOperator, LinearOperator, SamplingPattern};
use pnp_buqo::sim::{generate_phantom, simulate_measurements, simulate_noiseless, StructureSpec};
use pnp_buqo::Image;

fn phantom(n: usize) -> Image {
    generate_phantom(n, &StructureSpec::default(), 1).unwrap().image
}

#[test]
fn full_sampling_noiseless_recovers_phantom() {
    let n = 32;
    let x = phantom(n);
    let phi = FourierOperator::new(&SamplingPattern::full(n).unwrap());
    let psi = make_gradient_op(n).unwrap();
    let mut data = simulate_noiseless(&x, &phi, 60.0).unwrap();
    data.epsilon = 1e-6 * x.norm();
    let r = solve_map(&data.y, &phi, &psi, 1e-3, data.epsilon, &MapOptions::default(), None).unwrap();
    let err = r.x.distance(&x) / x.norm();
    assert!(err <= 1e-2, "relative error {err}");
}

#[test]
fn desk_scale_map_is_feasible() {
    let n = 64;
    let x = phantom(n);
    let phi = FourierOperator::new(&SamplingPattern::reference_equivalent(n, 150).unwrap());
    let psi = make_gradient_op(n).unwrap();
    let data = simulate_measurements(&x, &phi, 30.0, 7).unwrap();
    let r = solve_map(&data.y, &phi, &psi, 1.0, data.epsilon, &MapOptions::default(), None).unwrap();
    assert!(r.converged);
    assert!(r.final_residual() <= data.epsilon * (1.0 + 1e-3));
    assert!(r.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    // Eventually feasible and staying so.
    let tail = &r.trace.data_residual[r.trace.len().saturating_sub(50)..];
    assert!(tail.iter().all(|&d| d <= data.epsilon * (1.0 + 1e-3)));

    let region = CredibleRegion::from_map(&r.x, &psi, 1.0, data.epsilon, 0.01).unwrap();
    let m = in_credible_region(&r.x, &region, &phi, &psi, &data.y, DEFAULT_REL_TOL).unwrap();
    assert!(m.inside, "{m:?}");
}

#[test]
fn map_is_deterministic() {
    let n = 32;
    let x = phantom(n);
    let phi = FourierOperator::new(&SamplingPattern::radial(n, 10).unwrap());
    let psi = make_gradient_op(n).unwrap();
    let data = simulate_measurements(&x, &phi, 25.0, 3).unwrap();
    let opts = MapOptions { max_iter: 300, ..Default::default() };
    let a = solve_map(&data.y, &phi, &psi, 1.0, data.epsilon, &opts, None).unwrap();
    let b = solve_map(&data.y, &phi, &psi, 1.0, data.epsilon, &opts, None).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.trace, b.trace);
    assert_eq!(phi.in_len(), n * n);
}
