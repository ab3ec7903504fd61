use num_complex::Complex64;
use pnp_buqo::linalg::{dot, dot_c, norm, norm_c, norm_l1};
use pnp_buqo::prox::{moreau_dual_step, project_box, project_l1_ball, project_l2_ball, soft_threshold, Ball2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Threshold search by bisection on `sum max(|z| - t, 0) = r`.
fn l1_oracle(z: &[f64], r: f64) -> Vec<f64> {
    if z.iter().map(|v| v.abs()).sum::<f64>() <= r {
        return z.to_vec();
    }
    let (mut lo, mut hi) = (0.0, z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = z.iter().map(|v| (v.abs() - mid).max(0.0)).sum();
        if s > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    z.iter().map(|v| v.signum() * (v.abs() - t).max(0.0)).collect()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

fn firmly_nonexpansive(pu: &[f64], pv: &[f64], u: &[f64], v: &[f64]) -> bool {
    let dp: Vec<f64> = pu.iter().zip(pv).map(|(a, b)| a - b).collect();
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    dot(&dp, &dp) <= dot(&dp, &d) + 1e-10
}

#[test]
fn l1_projection_matches_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let len = rng.random_range(1..=64);
        let z = random_vec(&mut rng, len, 3.0);
        let r = rng.random::<f64>() * norm_l1(&z) * 1.2;
        let p = project_l1_ball(&z, r);
        let o = l1_oracle(&z, r);
        for (a, b) in p.iter().zip(&o) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        assert!(norm_l1(&p) <= r * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn l1_examples() {
    assert_eq!(project_l1_ball(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
    let a = project_l1_ball(&[3.0, 0.0], 1.0);
    assert!((a[0] - 1.0).abs() < 1e-10 && a[1].abs() < 1e-10);
    let b = project_l1_ball(&[2.0, 1.0], 1.0);
    assert!((b[0] - 1.0).abs() < 1e-10 && b[1].abs() < 1e-10);
}

#[test]
fn l2_examples() {
    let b = Ball2::new(vec![0.0, 0.0], 5.0);
    assert_eq!(b.project(&[6.0, 8.0]), vec![3.0, 4.0]);
    assert_eq!(b.project(&[1.0, 2.0]), vec![1.0, 2.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let c: Vec<Complex64> = (0..12).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let z: Vec<Complex64> = (0..12).map(|_| Complex64::new(rng.random::<f64>() * 9.0, -rng.random::<f64>() * 4.0)).collect();
        let ball = Ball2::new(c.clone(), 0.7);
        let p = project_l2_ball(&z, &ball);
        let dp: Vec<Complex64> = p.iter().zip(&c).map(|(a, b)| a - b).collect();
        let dz: Vec<Complex64> = z.iter().zip(&c).map(|(a, b)| a - b).collect();
        assert!(norm_c(&dp) <= 0.7 * (1.0 + 1e-12));
        // parallel: cosine of the real-inner-product angle equals one
        let cos = dot_c(&dp, &dz) / (norm_c(&dp) * norm_c(&dz));
        assert!((cos - 1.0).abs() < 1e-12);
    }
}

#[test]
fn projections_are_idempotent_and_firmly_nonexpansive() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let len = rng.random_range(1..=64);
        let u = random_vec(&mut rng, len, 2.0);
        let v = random_vec(&mut rng, len, 2.0);
        let c = random_vec(&mut rng, len, 0.5);
        let r = rng.random::<f64>() * 3.0;

        let l1 = |z: &[f64]| project_l1_ball(z, r);
        let ball = Ball2::new(c.clone(), r);
        let l2 = |z: &[f64]| ball.project(z);
        let bx = |z: &[f64]| project_box(z, -0.3, 0.8);
        let projs: [&dyn Fn(&[f64]) -> Vec<f64>; 3] = [&l1, &l2, &bx];
        for p in projs {
            let pu = p(&u);
            let pv = p(&v);
            let ppu = p(&pu);
            assert!(pu.iter().zip(&ppu).all(|(a, b)| (a - b).abs() <= 1e-10));
            assert!(firmly_nonexpansive(&pu, &pv, &u, &v));
        }
    }
}

#[test]
fn box_and_soft_threshold_examples() {
    assert_eq!(project_box(&[-1.0, 0.5, 2.0], 0.0, 1.0), vec![0.0, 0.5, 1.0]);
    assert_eq!(soft_threshold(&[2.0, -0.5, 0.1], 1.0), vec![1.0, 0.0, 0.0]);
    assert_eq!(soft_threshold(&[2.0, -0.5, 0.1], 0.0), vec![2.0, -0.5, 0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let z = random_vec(&mut rng, 20, 4.0);
        assert!(norm_l1(&soft_threshold(&z, rng.random())) <= norm_l1(&z));
    }
}

#[test]
fn moreau_dual_step_is_the_conjugate_prox() {
    // For f = lam ||.||_1 the conjugate prox is the clip to [-lam, lam].
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let w = random_vec(&mut rng, 30, 5.0);
        let mu = 0.05 + rng.random::<f64>() * 4.0;
        let lam = 0.1 + rng.random::<f64>() * 2.0;
        let v = moreau_dual_step(&w, mu, |z| soft_threshold(z, lam / mu));
        let direct: Vec<f64> = w.iter().map(|x| x.clamp(-lam, lam)).collect();
        let diff: Vec<f64> = v.iter().zip(&direct).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-10);
    }
}

#[test]
fn l1_radius_within_rounding_of_the_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..2000 {
        let len = rng.random_range(2..=64);
        let z = random_vec(&mut rng, len, 2.0);
        let r = f64::from_bits(norm_l1(&z).to_bits() - 1);
        let p = project_l1_ball(&z, r);
        assert!(norm_l1(&p) <= r * (1.0 + 1e-14));
        assert!(p.iter().zip(&z).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}
