use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, RowVector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpv_lanekeep::controller::blend_gains;
use lpv_lanekeep::lmi::{eig_extreme, project_negdef, solve, violation, LmiProblem, Sense, SolveOptions};
use lpv_lanekeep::pipeline;
use lpv_lanekeep::polytope::{combine_systems, convex_coordinates, select_simplex, Polytope, PolytopeConfig};
use lpv_lanekeep::scheduling::{
    assemble_system, build_theta, fraction_of_variation, reconstruct, reduce_point, PcaReduction, Trajectory,
};
use lpv_lanekeep::vehicle::{
    coefficient_block, desired_speed, plant_stiffness, roll_derivative, RollState, StiffnessModel, VehicleParams,
};

fn random_trajectory(seed: u64, n: usize) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            build_theta(rng.random_range(8.0..30.0), rng.random_range(4e4..7e4), rng.random_range(4e4..7e4)).unwrap()
        })
        .collect();
    Trajectory { period: 0.01, samples }
}

/// Reduction and simplex shared by the geometric properties.
fn fixture() -> &'static (Trajectory, PcaReduction, Polytope) {
    static F: OnceLock<(Trajectory, PcaReduction, Polytope)> = OnceLock::new();
    F.get_or_init(|| {
        let traj = random_trajectory(5, 300);
        let (red, h) = pipeline::reduce(&traj, 3).unwrap();
        let poly = select_simplex(&h, &red, &VehicleParams::default(), &PolytopeConfig::default()).unwrap();
        (traj, red, poly)
    })
}

fn simplex_weights(raw: &[f64]) -> DVector<f64> {
    let w = DVector::from_iterator(raw.len(), raw.iter().map(|v| v + 1e-6));
    let s = w.sum();
    w / s
}

proptest! {
    #[test]
    fn roll_is_odd_at_small_angles(phi in -0.05..0.05f64, rate in -1.0..1.0f64, a_y in -8.0..8.0f64) {
        let p = VehicleParams { small_angle: true, ..VehicleParams::default() };
        let plus = roll_derivative(RollState { phi, phi_dot: rate }, a_y, &p);
        let minus = roll_derivative(RollState { phi: -phi, phi_dot: -rate }, -a_y, &p);
        prop_assert!((plus + minus).abs() <= 1e-9);
    }

    #[test]
    fn speed_cap_recovers_roll_limit(r in 10.0..2000.0f64, phi_max in 0.005..0.1f64) {
        let p = VehicleParams { phi_max, ..VehicleParams::default() };
        let v = desired_speed(r, &p).unwrap();
        let back = v * v * p.m_s * p.h_rc / (r * (p.k_roll - p.m_s * p.g * p.h_rc));
        prop_assert!((back - phi_max).abs() <= 1e-12 * phi_max);
    }

    #[test]
    fn coefficient_identities(vx in 0.5..60.0f64, caf in 1e3..2e5f64, car in 1e3..2e5f64) {
        let c = coefficient_block(vx, caf, car, &VehicleParams::default()).unwrap();
        prop_assert!((c.a23 + c.a22 * vx).abs() <= 1e-12 * c.a23.abs().max(1e-300));
        prop_assert!((c.a43 + c.a42).abs() <= 1e-12 * c.a43.abs().max(1e-300));
    }

    #[test]
    fn stiffness_stays_between_floor_and_nominal(
        phi in -0.3..0.3f64, a_y in -15.0..15.0f64, droop in 0.0..3.0f64, floor in 0.1..1.0f64
    ) {
        let p = VehicleParams::default();
        let model = StiffnessModel { droop, floor };
        let (caf, car) = plant_stiffness(RollState { phi, phi_dot: 0.0 }, a_y, &p, &model);
        prop_assert!(caf <= p.c_af0 && caf >= floor * p.c_af0 - 1e-9);
        prop_assert!(car <= p.c_ar0 && car >= floor * p.c_ar0 - 1e-9);
    }

    #[test]
    fn pca_basis_is_orthonormal_and_contracts(seed in 0u64..1000, m in 1usize..=5, x in prop::array::uniform5(-10.0..10.0f64)) {
        let traj = random_trajectory(seed, 40);
        let (red, _) = pipeline::reduce(&traj, m).unwrap();
        let u = &red.basis;
        let gram = u.transpose() * u - DMatrix::identity(m, m);
        prop_assert!(gram.amax() <= 1e-10);
        let x = DVector::from_row_slice(&x);
        prop_assert!((u * (u.transpose() * &x)).norm() <= x.norm() + 1e-12);
        let vm: Vec<f64> = (1..=5).map(|q| fraction_of_variation(&red, q).unwrap()).collect();
        prop_assert!(vm.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        prop_assert!((vm[4] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reduce_after_reconstruct_is_identity(eta in prop::array::uniform3(-2.0..2.0f64)) {
        let (_, red, _) = fixture();
        let eta = DVector::from_row_slice(&eta);
        let back = reduce_point(&reconstruct(&eta, red), red);
        prop_assert!((back - eta).amax() <= 1e-9);
    }

    #[test]
    fn vertex_blend_matches_reconstructed_model(raw in prop::array::uniform4(0.0..1.0f64)) {
        let (_, red, poly) = fixture();
        let xi = simplex_weights(&raw);
        let blended = combine_systems(poly, &xi);
        let direct = assemble_system(&reconstruct(&(&poly.vertices * &xi), red), &VehicleParams::default());
        prop_assert!((blended.a - direct.a).amax() <= 1e-9);
        prop_assert!((blended.b - direct.b).amax() <= 1e-9);
        prop_assert!((blended.b_phi - direct.b_phi).amax() <= 1e-9);
    }

    #[test]
    fn hull_projection_is_idempotent(eta in prop::array::uniform3(-6.0..6.0f64)) {
        let (_, _, poly) = fixture();
        let eta = DVector::from_row_slice(&eta);
        let first = convex_coordinates(poly, &eta).unwrap();
        prop_assert!(first.xi.iter().all(|v| *v >= -1e-9));
        prop_assert!((first.xi.sum() - 1.0).abs() <= 1e-9);
        let inside = &poly.vertices * &first.xi;
        let second = convex_coordinates(poly, &inside).unwrap();
        prop_assert!(!second.out_of_hull);
        prop_assert!((&second.xi - &first.xi).amax() <= 1e-9);
        if !first.out_of_hull {
            prop_assert!((inside - eta).amax() <= 1e-9);
        }
    }

    #[test]
    fn blended_gain_stays_within_vertex_range(raw in prop::array::uniform4(0.0..1.0f64), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains: Vec<RowVector4<f64>> = (0..4).map(|_| RowVector4::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect();
        let k = blend_gains(&gains, &simplex_weights(&raw));
        for i in 0..4 {
            let lo = gains.iter().map(|g| g[i]).fold(f64::INFINITY, f64::min);
            let hi = gains.iter().map(|g| g[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(k[i] >= lo - 1e-12 && k[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn spectral_projection_does_not_increase_violation(seed in 0u64..10_000, n in 1usize..7, eps in 1e-8..1e-2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
        let m = (&a + a.transpose()) * 0.5;
        prop_assert!(violation(&project_negdef(&m, eps), eps) <= violation(&m, eps) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn feasible_solutions_reverify(seed in 0u64..1000, alpha in 0.0..0.4f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // stable by construction: -I plus a small skew part
        let s = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::identity(3, 3) * -1.0 + (&s - s.transpose());
        let mut prob = LmiProblem::new();
        let p = prob.add_symmetric("P", 3);
        prob.add_constraint("P>=I", Sense::PosDef, |v| v.get(p) - DMatrix::identity(3, 3)).unwrap();
        prob.add_constraint("decay", Sense::NegDef, |v| {
            let pm = v.get(p);
            a.transpose() * pm + pm * &a + pm * alpha
        }).unwrap();
        let sol = solve(&prob, &SolveOptions { budget: 4000, ..SolveOptions::default() });
        prop_assert!(sol.is_feasible());
        let pm = prob.values(&sol.x).get(p).clone();
        prop_assert!(eig_extreme(&pm).unwrap().0 - 1.0 >= prob.margin(0) * 0.999);
        let lyap = a.transpose() * &pm + &pm * &a + &pm * alpha;
        prop_assert!(eig_extreme(&lyap).unwrap().1 <= -prob.margin(1));
        prop_assert_eq!(solve(&prob, &SolveOptions { budget: 4000, ..SolveOptions::default() }), sol);
    }
}
