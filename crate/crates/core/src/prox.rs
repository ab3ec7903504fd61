//! Projections and proximity operators.

use crate::linalg::{norm_l1, Scalar};

/// Euclidean ball `B_2(center, radius)` over real or complex vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball2<S> {
    pub center: Vec<S>,
    pub radius: f64,
}

impl<S: Scalar> Ball2<S> {
    pub fn new(center: Vec<S>, radius: f64) -> Self {
        assert!(radius >= 0.0, "ball radius must be non-negative");
        Self { center, radius }
    }

    pub fn project(&self, z: &[S]) -> Vec<S> {
        project_l2_ball(z, self)
    }

    /// `||z - center||`.
    pub fn distance_to_center(&self, z: &[S]) -> f64 {
        let d: Vec<S> = z.iter().zip(&self.center).map(|(&a, &c)| a.sub(c)).collect();
        S::norm(&d)
    }
}

/// `l1` ball centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball1 {
    pub radius: f64,
}

impl Ball1 {
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        project_l1_ball(z, self.radius)
    }
}

pub fn project_l2_ball<S: Scalar>(z: &[S], ball: &Ball2<S>) -> Vec<S> {
    let diff: Vec<S> = z
        .iter()
        .zip(&ball.center)
        .map(|(&a, &c)| a.sub(c))
        .collect();
    let d = S::norm(&diff);
    if d <= ball.radius {
        return z.to_vec();
    }
    let s = ball.radius / d;
    ball.center
        .iter()
        .zip(diff)
        .map(|(&c, e)| c.add(e.scale(s)))
        .collect()
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` by sorting magnitudes.
pub fn project_l1_ball(z: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius >= 0.0, "l1 ball radius must be non-negative");
    if norm_l1(z) <= radius {
        return z.to_vec();
    }
    if radius == 0.0 {
        return vec![0.0; z.len()];
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    // Summation order differs from `norm_l1`; a radius within rounding of
    // the norm can leave `theta` slightly negative.
    soft_threshold(z, theta.max(0.0))
}

pub fn project_box(z: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo <= hi, "empty box");
    z.iter().map(|v| v.clamp(lo, hi)).collect()
}

pub fn project_box_in_place(z: &mut [f64], lo: f64, hi: f64) {
    z.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Proximity operator of `t ||.||_1`.
pub fn soft_threshold(z: &[f64], t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "threshold must be non-negative");
    z.iter()
        .map(|&v| v.signum() * (v.abs() - t).max(0.0))
        .collect()
}

/// Dual ascent step of a primal-dual splitting through the Moreau identity:
/// `v+ = w - mu * proj(w / mu)` where `proj` is the prox of the primal
/// function at scale `1/mu`.
pub fn moreau_dual_step<S: Scalar>(w: &[S], mu: f64, prox: impl FnOnce(&[S]) -> Vec<S>) -> Vec<S> {
    let scaled: Vec<S> = w.iter().map(|&e| e.scale(1.0 / mu)).collect();
    let p = prox(&scaled);
    w.iter().zip(p).map(|(&e, q)| e.sub(q.scale(mu))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bisection on the threshold: the independent oracle for l1 projection.
    pub(crate) fn l1_projection_by_bisection(z: &[f64], r: f64) -> Vec<f64> {
        if norm_l1(z) <= r {
            return z.to_vec();
        }
        let mass = |t: f64| z.iter().map(|v| (v.abs() - t).max(0.0)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        z.iter()
            .map(|&v| v.signum() * (v.abs() - t).max(0.0))
            .collect()
    }

    #[test]
    fn l2_inside_is_unchanged() {
        let b = Ball2::new(vec![0.0, 0.0], 5.0);
        assert_eq!(b.project(&[1.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn l2_radial_scaling() {
        let b = Ball2::new(vec![0.0, 0.0], 5.0);
        let p = b.project(&[6.0, 8.0]);
        assert!((p[0] - 3.0).abs() < 1e-15 && (p[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn l2_complex_projection_is_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(rng.random(), rng.random()))
                .collect();
            let z: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(4.0 * rng.random::<f64>(), -4.0 * rng.random::<f64>()))
                .collect();
            let b = Ball2::new(c.clone(), 0.7);
            let p = b.project(&z);
            assert!(b.distance_to_center(&p) <= 0.7 * (1.0 + 1e-12));
            // out - c = s (z - c) for one real s >= 0
            let s = (p[0] - c[0]).re / (z[0] - c[0]).re;
            for k in 0..8 {
                assert!(((p[k] - c[k]) - (z[k] - c[k]) * s).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(project_l1_ball(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let oracle = l1_projection_by_bisection(&[3.0, 0.0], 1.0);
        let p = project_l1_ball(&[3.0, 0.0], 1.0);
        assert!((p[0] - oracle[0]).abs() < 1e-10 && (p[0] - 1.0).abs() < 1e-10);
        assert_eq!(p[1], 0.0);
        let p = project_l1_ball(&[2.0, 1.0], 1.0);
        let oracle = l1_projection_by_bisection(&[2.0, 1.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-10 && p[1].abs() < 1e-10);
        assert!((p[0] - oracle[0]).abs() < 1e-10 && (p[1] - oracle[1]).abs() < 1e-10);
    }

    #[test]
    fn l1_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let len = rng.random_range(1..=64);
            let z: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = rng.random_range(0.0..norm_l1(&z) * 1.2);
            let p = project_l1_ball(&z, r);
            let o = l1_projection_by_bisection(&z, r);
            for (a, b) in p.iter().zip(&o) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn box_examples() {
        assert_eq!(project_box(&[-1.0, 0.5, 2.0], 0.0, 1.0), vec![0.0, 0.5, 1.0]);
        let once = project_box(&[-1.0, 0.5, 2.0], 0.0, 1.0);
        assert_eq!(project_box(&once, 0.0, 1.0), once);
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.0, -0.5, 0.1], 1.0), vec![1.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&[2.0, -0.5], 0.0), vec![2.0, -0.5]);
    }

    #[test]
    fn moreau_dual_step_of_l1_is_clipping() {
        // w - mu * soft(w / mu, lambda / mu) == clip(w, -lambda, lambda)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let mu = rng.random_range(0.1..3.0);
            let lambda = rng.random_range(0.0..2.0);
            let w: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
            let step = moreau_dual_step(&w, mu, |s| soft_threshold(s, lambda / mu));
            // conjugate of lambda||.||_1 is the indicator of the lambda-box; its prox is clipping.
            let conj = project_box(&w, -lambda, lambda);
            for (a, b) in step.iter().zip(&conj) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    fn firmly_nonexpansive(p: impl Fn(&[f64]) -> Vec<f64>, u: &[f64], v: &[f64]) -> bool {
        let (pu, pv) = (p(u), p(v));
        let d: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let e: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        let idem = p(&pu).iter().zip(&pu).all(|(a, b)| (a - b).abs() < 1e-12);
        idem && norm(&d).powi(2) <= dot(&d, &e) + 1e-10
    }

    proptest! {
        #[test]
        fn projections_are_firmly_nonexpansive(
            u in prop::collection::vec(-4.0f64..4.0, 12),
            v in prop::collection::vec(-4.0f64..4.0, 12),
            r in 0.0f64..6.0,
        ) {
            prop_assert!(firmly_nonexpansive(|z| project_l1_ball(z, r), &u, &v));
            prop_assert!(firmly_nonexpansive(|z| project_box(z, -0.5, 1.0), &u, &v));
            let ball = Ball2::new(vec![0.3; 12], r);
            prop_assert!(firmly_nonexpansive(|z| ball.project(z), &u, &v));
            prop_assert!(norm_l1(&soft_threshold(&u, r)) <= norm_l1(&u));
        }
    }
}
