//! Seeded Monte Carlo against exact enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hilbert_ctl::hilbert::HVector;
use hilbert_ctl::lq::{expected_cost, lq_functional, solve_lq, LQProblem};
use hilbert_ctl::random;
use hilbert_ctl::sim::{enumerate_expectation, monte_carlo_expectation, NoiseKind, NoiseModel};

fn problem(seed: u64) -> LQProblem {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let sys = random::controlled_system(&mut r, 3, 2, 5);
    let cost = random::nonnegative_cost(&mut r, &sys);
    let x0 = HVector::from_vec(sys.state_space.clone(), vec![1.0, -0.5, 0.25]).unwrap();
    LQProblem { sys, cost, x0 }
}

#[test]
fn confidence_interval_covers_the_exact_expectation() {
    let prob = problem(3);
    let sol = solve_lq(&prob).unwrap();
    let model = prob.sys.to_model();
    let policy = sol.policy(&model).unwrap();
    let f = lq_functional(&prob.sys, &prob.cost);
    let x = prob.x0.ortho_coords();
    let exact = enumerate_expectation(&model, &policy, &x, &f).unwrap();
    assert!((exact - sol.optimal_value.unwrap()).abs() < 1e-9 * exact.abs().max(1.0));
    let covered = (0..30)
        .filter(|&seed| {
            let nm = NoiseModel::new(NoiseKind::Rademacher, seed);
            monte_carlo_expectation(&model, &policy, &x, &f, nm, 2000)
                .unwrap()
                .covers(exact)
        })
        .count();
    assert!(covered >= 27, "covered in {covered} of 30 seeds");
}

#[test]
fn gaussian_noise_has_the_same_expectation() {
    // Only first and second moments enter the expected cost.
    let prob = problem(4);
    let sol = solve_lq(&prob).unwrap();
    let model = prob.sys.to_model();
    let policy = sol.policy(&model).unwrap();
    let f = lq_functional(&prob.sys, &prob.cost);
    let exact = expected_cost(&prob, &policy).unwrap();
    let nm = NoiseModel::new(NoiseKind::Gaussian, 99);
    let mc = monte_carlo_expectation(&model, &policy, &prob.x0.ortho_coords(), &f, nm, 20_000).unwrap();
    assert!((mc.mean - exact).abs() <= 2.0 * mc.half_width, "{} vs {exact}", mc.mean);
}

#[test]
fn replication_results_do_not_depend_on_order() {
    let prob = problem(5);
    let model = prob.sys.to_model();
    let policy = solve_lq(&prob).unwrap().policy(&model).unwrap();
    let f = lq_functional(&prob.sys, &prob.cost);
    let x = prob.x0.ortho_coords();
    let nm = NoiseModel::new(NoiseKind::Rademacher, ChaCha8Rng::seed_from_u64(1).random());
    let a = monte_carlo_expectation(&model, &policy, &x, &f, nm, 500).unwrap();
    let b = monte_carlo_expectation(&model, &policy, &x, &f, nm, 500).unwrap();
    assert_eq!(a, b);
}
