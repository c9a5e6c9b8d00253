use proptest::prelude::*;
use soliton_lab::grid_spectral::*;
use soliton_lab::ground_state::*;

fn setup() -> (RadialGrid, PotentialSpec, BoundStatePair) {
    let grid = RadialGrid::new(40.0, 799).unwrap();
    let v = PotentialSpec::default();
    let pair = bound_states(&v, &grid).unwrap();
    (grid, v, pair)
}

/// `||(-Delta + V) Q + lambda Q^3 - E Q|| / ||Q||`, assembled from the grid Laplacian.
fn residual(gs: &GroundState) -> f64 {
    let g = &gs.grid;
    let lap = g.apply_laplacian(&gs.q);
    let v = gs.potential_values();
    let res: Vec<f64> = (0..g.n)
        .map(|j| -lap[j] + (v[j] - gs.e) * gs.q[j] + gs.lambda * gs.q[j].powi(3))
        .collect();
    g.norm(&res) / g.norm(&gs.q)
}

#[test]
fn profile_equation_residual() {
    let (grid, v, pair) = setup();
    for (lambda, e) in [(0.05, -9.93), (1.0, -8.5), (0.5, -9.5)] {
        let gs = solve_ground_state(e, lambda, &pair, &grid, &v).unwrap();
        assert!(residual(&gs) < 1e-8, "lambda {lambda}: {}", residual(&gs));
        assert!(gs.q.iter().all(|&q| q > -1e-12), "ground state must be nonnegative");
        assert!(gs.r_residual() < 1e-8);
    }
}

#[test]
fn r_matches_energy_derivative() {
    let (grid, v, pair) = setup();
    let (lambda, e) = (1.0, -8.6);
    let gs = solve_ground_state(e, lambda, &pair, &grid, &v).unwrap();
    let fd = |d: f64| -> f64 {
        let p = solve_from_guess(e + d, lambda, &pair, &grid, &v, gs.q.clone()).unwrap();
        let m = solve_from_guess(e - d, lambda, &pair, &grid, &v, gs.q.clone()).unwrap();
        let diff: Vec<f64> = (0..grid.n).map(|j| (p.q[j] - m.q[j]) / (2.0 * d) - gs.r[j]).collect();
        grid.norm(&diff) / grid.norm(&gs.r)
    };
    let e1 = fd(1e-2);
    let e2 = fd(5e-3);
    assert!(e2 < 1e-4, "relative error {e2}");
    // centered differences: error quarters when the step halves
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn small_coupling_bifurcates_from_phi0() {
    let (grid, v, pair) = setup();
    let lambda = 0.01;
    let e = pair.e0 + 0.01;
    let gs = solve_ground_state(e, lambda, &pair, &grid, &v).unwrap();
    let phi4: Vec<f64> = pair.phi0.iter().map(|p| p.powi(3)).collect();
    let w2 = (e - pair.e0) / (lambda * grid.inner(&phi4, &pair.phi0));
    let w = grid.inner(&gs.q, &pair.phi0);
    assert!((w * w / w2 - 1.0).abs() < 0.02, "w^2 {} vs {w2}", w * w);
    assert!((gs.w - w).abs() < 1e-10);
}

#[test]
fn energy_for_mass_hits_target() {
    let (grid, v, pair) = setup();
    let gs = energy_for_mass(4.0, 0.05, &pair, &grid, &v).unwrap();
    assert!((gs.mass() - 4.0).abs() < 1e-7);
    assert!((gs.e - (-9.93139)).abs() < 1e-4, "E = {}", gs.e);
}

#[test]
fn wrong_side_of_e0_is_domain_error() {
    let (grid, v, pair) = setup();
    let err = solve_ground_state(pair.e0 - 0.1, 1.0, &pair, &grid, &v).unwrap_err();
    assert!(err.is_validation());
    assert!(energy_for_mass(-1.0, 1.0, &pair, &grid, &v).unwrap_err().is_validation());
}

#[test]
fn branch_mass_increases_with_e() {
    let (grid, v, pair) = setup();
    let es: Vec<f64> = (0..8).map(|k| pair.e0 + 0.05 + 0.15 * k as f64).collect();
    let branch = branch_sweep(1.0, &es, &pair, &grid, &v).unwrap();
    assert!(branch.samples.len() >= 3);
    for w in branch.samples.windows(2) {
        assert!(w[1].e > w[0].e);
        assert!(w[1].mass() > w[0].mass());
        // dM/dE = 2 (Q, R)
        let slope = (w[1].mass() - w[0].mass()) / (w[1].e - w[0].e);
        let mid = grid.inner(&w[0].q, &w[0].r) + grid.inner(&w[1].q, &w[1].r);
        assert!((slope / mid - 1.0).abs() < 0.1, "slope {slope} vs {mid}");
    }
    for s in &branch.samples {
        assert!((MASS_WINDOW.0..=MASS_WINDOW.1).contains(&s.mass()));
    }
}

#[test]
fn branch_blob_round_trip() {
    let (grid, v, pair) = setup();
    let es = [pair.e0 + 0.3, pair.e0 + 0.6];
    let branch = branch_sweep(1.0, &es, &pair, &grid, &v).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, b) = (dir.path().join("branch.csv"), dir.path().join("branch.bin"));
    soliton_lab::io::write_branch(&c, &b, &branch).unwrap();
    let (n, dr, samples) = soliton_lab::io::read_branch_blob(&b).unwrap();
    assert_eq!(n, grid.n);
    assert_eq!(dr, grid.dr);
    assert_eq!(samples.len(), branch.samples.len());
    for ((e, q, r), s) in samples.iter().zip(&branch.samples) {
        assert_eq!(*e, s.e);
        assert_eq!(q, &s.q);
        assert_eq!(r, &s.r);
    }
    let text = std::fs::read_to_string(&c).unwrap();
    assert!(text.starts_with("E,w,mass,residual"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Q_lambda = sqrt(mu / lambda) Q_mu at fixed E
    #[test]
    fn coupling_scaling(lambda in 0.2f64..3.0, mu in 0.2f64..3.0) {
        let grid = RadialGrid::new(30.0, 599).unwrap();
        let v = PotentialSpec::default();
        let pair = bound_states(&v, &grid).unwrap();
        let e = pair.e0 + 0.8;
        let a = solve_ground_state(e, lambda, &pair, &grid, &v).unwrap();
        let b = solve_ground_state(e, mu, &pair, &grid, &v).unwrap();
        prop_assert!((a.mass() * lambda / (b.mass() * mu) - 1.0).abs() < 1e-8);
    }
}
