mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cost_matches_assignment_and_hessian_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let n = SITE_COUNTS[rng.gen_range(0..SITE_COUNTS.len())];
        let sites = random_sites(&mut rng, n);
        let plan = solve_equal_masses(&sites);
        let semi = plan.transport_cost().unwrap();
        let exact = assignment_cost(&sites);
        assert!(exact >= semi * (1.0 - 1e-9), "n={n}: discrete {exact} below semi-discrete {semi}");
        assert!((exact - semi).abs() <= 0.01 * exact, "n={n}: {semi} vs {exact}");
        let e = hessian_fd_error(&plan);
        assert!(e <= 1e-4, "n={n}: Hessian error {e:e}");
    }
}

#[test]
fn two_sites_split_the_square_in_half() {
    // Sites symmetric about x = ½: the optimal split is the vertical
    // midline, with cost ∫|x − y|² computed in closed form.
    let sites = [otlab::convex2d::Vec2::new(0.25, 0.5), otlab::convex2d::Vec2::new(0.75, 0.5)];
    let plan = solve_equal_masses(&sites);
    let expected = 2.0 * (0.5 * (1.0 / 48.0) + 0.5 * (1.0 / 12.0));
    assert!((plan.transport_cost().unwrap() - expected).abs() < 1e-12);
    assert!((assignment_cost(&sites) - expected).abs() < 1e-9);
}
