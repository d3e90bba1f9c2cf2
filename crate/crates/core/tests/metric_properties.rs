#[path = "support/lp_oracle.rs"]
mod lp_oracle;

use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screwgrasp::geometry::{AntipodalPair, RigidTransform, Screw};
use screwgrasp::metric::{
    env_contact, grasp_metric_for, solve, FrictionModel, Physics, TaskInstance,
};
use screwgrasp::socp::SolveStatus;

type V3 = Vector3<f64>;

fn unit(rng: &mut ChaCha8Rng) -> V3 {
    loop {
        let v = V3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn point(rng: &mut ChaCha8Rng, r: f64) -> V3 {
    V3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

/// Antipodal pair, random screw, and 0-2 supporting environment contacts
/// (gravity on only when supported).
fn random_instance(seed: u64) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = point(&mut rng, 0.05);
    let axis = unit(&mut rng);
    let half = rng.random_range(0.02..0.05);
    let pair = AntipodalPair::from_points(center - axis * half, center + axis * half).unwrap();
    let n_env = rng.random_range(0..=2usize);
    let mut l = unit(&mut rng);
    if n_env == 0 {
        // Unsupported grasps only produce couples perpendicular to the grasp axis.
        l = (l - axis * axis.dot(&l)).normalize();
    }
    let screw = Screw::from_point_dir(point(&mut rng, 0.1), l).unwrap();
    let fm = FrictionModel::default();
    let env: Vec<_> = (0..n_env)
        .map(|_| {
            let mut c = point(&mut rng, 0.1);
            c.z = -0.1;
            env_contact(c, V3::z(), &fm)
        })
        .collect();
    let physics = if n_env > 0 {
        Physics {
            mass: 0.5,
            ..Physics::default()
        }
    } else {
        Physics::gravity_free(10.0)
    };
    let mu = rng.random_range(0.2..0.6);
    TaskInstance::from_pair(&pair, &screw, &env, mu, &physics, point(&mut rng, 0.05))
}

/// Moment a robot grip alone can exert; floors the relative gap near η = 0.
fn grip_scale(t: &TaskInstance) -> f64 {
    let [a, b] = &t.robot_contacts;
    a.mu * a.f_normal_max * (a.position - b.position).norm()
}

#[test]
fn polyhedral_sandwich_on_random_instances() {
    let mut checked = 0;
    for seed in 0..50 {
        let t = random_instance(seed);
        let sol = solve(&t);
        let inner8 = lp_oracle::polyhedral_eta(&t, 8, false);
        let outer8 = lp_oracle::polyhedral_eta(&t, 8, true);
        let inner64 = lp_oracle::polyhedral_eta(&t, 64, false);
        match sol.status {
            SolveStatus::Optimal => {
                let eta = sol.eta;
                if let Some(lo) = inner8 {
                    assert!(lo <= eta + 1e-6, "seed {seed}: inner8 {lo} > {eta}");
                }
                let hi = outer8.expect("outer cone contains the feasible set");
                assert!(eta <= hi + 1e-6, "seed {seed}: {eta} > outer8 {hi}");
                let lo64 = inner64.expect("64-gon feasible");
                assert!(
                    (eta - lo64).abs() <= 0.02 * eta.abs().max(grip_scale(&t)),
                    "seed {seed}: {eta} vs inner64 {lo64}"
                );
                checked += 1;
            }
            SolveStatus::Infeasible => assert!(inner8.is_none(), "seed {seed}"),
            other => panic!("seed {seed}: status {other:?}"),
        }
    }
    assert!(checked >= 40, "only {checked} feasible instances");
}

fn gravity_free_instance(seed: u64) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = point(&mut rng, 0.05);
    let axis = unit(&mut rng);
    let pair = AntipodalPair::from_points(center - axis * 0.03, center + axis * 0.03).unwrap();
    let l = unit(&mut rng);
    let l = (l - axis * axis.dot(&l)).normalize();
    let screw = Screw::from_point_dir(point(&mut rng, 0.1), l).unwrap();
    TaskInstance::from_pair(&pair, &screw, &[], 0.3, &Physics::gravity_free(5.0), V3::zeros())
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = unit(rng);
    let angle = rng.random_range(-3.0..3.0);
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn friction_monotonicity(seed in 0u64..10_000, mu1 in 0.05f64..0.5, dmu in 0.01f64..0.4) {
        let t = random_instance(seed);
        let a = solve(&t.with_robot_mu(mu1));
        let b = solve(&t.with_robot_mu(mu1 + dmu));
        if a.status == SolveStatus::Optimal {
            prop_assert_eq!(b.status, SolveStatus::Optimal);
            prop_assert!(b.eta >= a.eta - 1e-6);
        }
    }

    #[test]
    fn grip_bound_monotonicity(seed in 0u64..10_000, scale in 1.0f64..4.0) {
        let t = gravity_free_instance(seed);
        let mut stronger = t.clone();
        for c in &mut stronger.robot_contacts {
            c.f_normal_max *= scale;
        }
        let a = solve(&t).eta;
        let b = solve(&stronger).eta;
        prop_assert!(b >= a - 1e-6);
    }

    #[test]
    fn scale_covariance(seed in 0u64..10_000, s in 0.2f64..5.0) {
        let t = gravity_free_instance(seed);
        let mut scaled = t.clone();
        for c in &mut scaled.robot_contacts {
            c.position *= s;
        }
        scaled.com *= s;
        scaled.screw = Screw::from_point_dir(t.screw.point_on_line() * s, t.screw.direction()).unwrap();
        let a = solve(&t).eta;
        let b = solve(&scaled).eta;
        prop_assert!((b - s * a).abs() <= 1e-6 * (s * a).abs().max(1e-9));
    }

    #[test]
    fn frame_invariance(seed in 0u64..10_000, tseed in 0u64..10_000) {
        let t = random_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(tseed);
        let tf = RigidTransform::new(random_rotation(&mut rng), point(&mut rng, 1.0));
        let a = solve(&t);
        let b = solve(&t.transformed(&tf));
        prop_assert_eq!(a.status, b.status);
        if a.status == SolveStatus::Optimal {
            prop_assert!((a.eta - b.eta).abs() <= 1e-7 * a.eta.abs().max(1.0));
        }
    }

    #[test]
    fn solutions_satisfy_constraints(seed in 0u64..10_000) {
        let t = random_instance(seed);
        let sol = solve(&t);
        if sol.status == SolveStatus::Optimal {
            let p = t.screw.point_on_line();
            let mut force = t.gravity * t.mass;
            let mut moment = (t.com - p).cross(&(t.gravity * t.mass));
            for (c, f) in t.contacts().zip(&sol.contact_forces) {
                let fn_ = f.dot(&c.inward_normal);
                let ft = (f - c.inward_normal * fn_).norm();
                prop_assert!(ft <= c.mu * fn_ + 1e-6);
                prop_assert!(fn_ >= -1e-6 && fn_ <= c.f_normal_max + 1e-6);
                force += f;
                moment += (c.position - p).cross(f);
            }
            prop_assert!(force.norm() <= 1e-5);
            prop_assert!((moment - t.screw.direction() * sol.eta).norm() <= 1e-5);
        }
    }
}

#[test]
fn symmetric_couple_monte_carlo_mean() {
    let (d, fmax) = (0.5, 1.0);
    let pair = AntipodalPair::from_points(V3::new(-d, 0.0, 0.0), V3::new(d, 0.0, 0.0)).unwrap();
    let screw = Screw::from_point_dir(V3::zeros(), V3::z()).unwrap();
    let t = TaskInstance::from_pair(&pair, &screw, &[], 0.3, &Physics::gravity_free(fmax), V3::zeros());
    let fm = FrictionModel::default();
    let est = grasp_metric_for(&t, &fm).unwrap();
    // Closed form per draw is 2 μ f_max d; compare to the empirical draw mean.
    let mus = fm.sample_mus();
    let mean_mu = mus.iter().sum::<f64>() / mus.len() as f64;
    assert_relative_eq!(est.eta, 2.0 * fmax * d * mean_mu, epsilon = 1e-5);
    let bound = 2.0 * fm.mu_std / (fm.n_samples as f64).sqrt();
    assert!((est.eta - 0.3 * 2.0 * fmax * d).abs() <= bound * 2.0 * fmax * d);
    assert_eq!(est.eta, grasp_metric_for(&t, &fm).unwrap().eta);
}
