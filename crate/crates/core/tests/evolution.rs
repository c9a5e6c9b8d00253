use num_complex::Complex64;
use proptest::prelude::*;
use soliton_lab::evolution::*;
use soliton_lab::grid_spectral::*;
use soliton_lab::ground_state::*;

fn free_physics(grid: RadialGrid) -> Physics {
    // zero depth: V = 0 everywhere
    Physics { grid, potential: PotentialSpec::gaussian(0.0, 1.0), lambda: 0.0, cap: None }
}

/// `i psi_t = -Delta psi`, `psi(0) = exp(-r^2 / 2 s^2)`: `psi = (s^2/a)^{3/2} exp(-r^2 / 2a)`, `a = s^2 + 2it`.
fn free_gaussian(r: f64, t: f64, s: f64) -> Complex64 {
    let a = Complex64::new(s * s, 2.0 * t);
    (Complex64::new(s * s, 0.0) / a).powf(1.5) * (-(r * r) / (2.0 * a)).exp()
}

fn free_error(n: usize, t: f64) -> f64 {
    let grid = RadialGrid::new(30.0, n).unwrap();
    let s = 1.5;
    let psi: Vec<Complex64> = grid.nodes().iter().map(|&r| free_gaussian(r, 0.0, s)).collect();
    let mut state = FieldState::new(psi, 0.0);
    let mut st = Stepper::new(free_physics(grid.clone()), 0.01, 0.0).unwrap();
    st.evolve(&mut state, t, 1000, |_| Ok(true)).unwrap();
    let diff: Vec<Complex64> =
        grid.nodes().iter().zip(&state.psi).map(|(&r, z)| z - free_gaussian(r, state.t, s)).collect();
    grid.norm_c(&diff) / grid.norm_c(&state.psi)
}

#[test]
fn free_gaussian_closed_form() {
    let coarse = free_error(299, 1.0);
    let fine = free_error(599, 1.0);
    assert!(fine < 2e-3, "relative error {fine}");
    // with V = 0 the splitting is exact in time; the error is the grid's O(dr^2)
    let ratio = coarse / fine;
    assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
}

fn soliton_setup() -> (GroundState, Physics) {
    let grid = RadialGrid::new(20.0, 399).unwrap();
    let v = PotentialSpec::default();
    let pair = bound_states(&v, &grid).unwrap();
    let gs = energy_for_mass(8.0, 1.0, &pair, &grid, &v).unwrap();
    let phys = Physics { grid, potential: v, lambda: 1.0, cap: None };
    (gs, phys)
}

fn perturbed(gs: &GroundState) -> Vec<Complex64> {
    gs.grid
        .nodes()
        .iter()
        .zip(&gs.q)
        .map(|(&r, &q)| Complex64::new(q, 0.0) + Complex64::new(0.3, 0.2) * (-(r - 2.0).powi(2)).exp())
        .collect()
}

fn run(phys: &Physics, psi: &[Complex64], gauge: f64, dt: f64, t: f64) -> Vec<Complex64> {
    let mut st = Stepper::new(phys.clone(), dt, gauge).unwrap();
    let mut state = FieldState::new(psi.to_vec(), gauge);
    st.evolve(&mut state, t, usize::MAX, |_| Ok(true)).unwrap();
    state.physical()
}

#[test]
fn local_error_is_third_order() {
    let (gs, phys) = soliton_setup();
    let psi = perturbed(&gs);
    let local = |dt: f64| {
        let one = run(&phys, &psi, 0.0, dt, dt);
        let two = run(&phys, &psi, 0.0, dt / 2.0, dt);
        let d: Vec<Complex64> = one.iter().zip(&two).map(|(a, b)| a - b).collect();
        gs.grid.norm_c(&d)
    };
    let r = local(4e-3) / local(2e-3);
    assert!((r - 8.0).abs() < 1.5, "local ratio {r}");
}

#[test]
fn global_error_is_second_order() {
    let (gs, phys) = soliton_setup();
    let psi = perturbed(&gs);
    let a = run(&phys, &psi, 0.0, 4e-3, 1.0);
    let b = run(&phys, &psi, 0.0, 2e-3, 1.0);
    let c = run(&phys, &psi, 0.0, 1e-3, 1.0);
    let d = |x: &[Complex64], y: &[Complex64]| {
        let v: Vec<Complex64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        gs.grid.norm_c(&v)
    };
    let r = d(&a, &b) / d(&b, &c);
    assert!((r - 4.0).abs() < 0.6, "global ratio {r}");
}

#[test]
fn mass_conserved_without_cap() {
    let (gs, phys) = soliton_setup();
    let psi = perturbed(&gs);
    let m0 = gs.grid.norm_c(&psi).powi(2);
    let mut st = Stepper::new(phys.clone(), 1e-3, gs.e).unwrap();
    let mut state = FieldState::new(psi, gs.e);
    st.evolve(&mut state, 5.0, 500, |s| {
        let m = gs.grid.norm_c(&s.psi).powi(2);
        assert!((m - m0).abs() / m0 <= 1e-10 * s.t.max(1e-3) + 1e-14, "t = {} drift {}", s.t, (m - m0) / m0);
        Ok(true)
    })
    .unwrap();
}

#[test]
fn soliton_is_stationary_in_the_gauge() {
    let (gs, phys) = soliton_setup();
    let psi: Vec<Complex64> = gs.q.iter().map(|&q| Complex64::new(q, 0.0)).collect();
    let out = run(&phys, &psi, gs.e, 1e-3, 1.0);
    // |psi| stays close to Q; the phase rotates at E
    let dev: Vec<f64> = out.iter().zip(&gs.q).map(|(z, q)| z.norm() - q).collect();
    assert!(gs.grid.norm(&dev) < 1e-5, "{}", gs.grid.norm(&dev));
    let j = gs.q.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let phase = out[j].arg();
    let expected = Complex64::from_polar(1.0, -gs.e * 1.0).arg();
    assert!((phase - expected).abs() < 1e-4, "{phase} vs {expected}");
}

#[test]
fn zero_duration_is_identity() {
    let (gs, phys) = soliton_setup();
    let psi = perturbed(&gs);
    let mut st = Stepper::new(phys, 1e-3, 0.0).unwrap();
    let mut state = FieldState::new(psi.clone(), 0.0);
    let mut calls = 0;
    st.evolve(&mut state, 0.0, 1, |_| {
        calls += 1;
        Ok(true)
    })
    .unwrap();
    assert_eq!(calls, 1);
    assert_eq!(state.psi, psi);
    assert_eq!(state.t, 0.0);
}

#[test]
fn observer_can_stop_the_run() {
    let (gs, phys) = soliton_setup();
    let mut st = Stepper::new(phys, 1e-3, 0.0).unwrap();
    let mut state = FieldState::new(perturbed(&gs), 0.0);
    st.evolve(&mut state, 1.0, 10, |s| Ok(s.t < 0.05)).unwrap();
    assert!((state.t - 0.05).abs() < 1e-9, "{}", state.t);
}

#[test]
fn dt_accuracy_bound() {
    let (gs, phys) = soliton_setup();
    let psi: Vec<Complex64> = gs.q.iter().map(|&q| Complex64::new(q, 0.0)).collect();
    assert!(Stepper::new(phys.clone(), 1e-3, gs.e).unwrap().check_dt(&psi).is_ok());
    assert!(Stepper::new(phys.clone(), 0.1, gs.e).unwrap().check_dt(&psi).unwrap_err().is_validation());
    assert!(Stepper::new(phys, -1.0, gs.e).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let (gs, phys) = soliton_setup();
    let mut st = Stepper::new(phys, 1e-3, gs.e).unwrap();
    let mut state = FieldState::new(perturbed(&gs), gs.e);
    st.evolve(&mut state, 0.1, 100, |_| Ok(true)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.bin");
    soliton_lab::io::write_checkpoint(&p, &state, gs.grid.dr).unwrap();
    let (back, dr) = soliton_lab::io::read_checkpoint(&p).unwrap();
    assert_eq!(dr, gs.grid.dr);
    assert_eq!(back.t, state.t);
    assert_eq!(back.gauge, state.gauge);
    assert_eq!(back.psi, state.psi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cap_mass_non_increasing(amp in 0.1f64..2.0, center in 2.0f64..15.0, k in -3.0f64..3.0) {
        let grid = RadialGrid::new(20.0, 399).unwrap();
        let cap = CapSpec { start_radius: 10.0, strength: 5.0, power: 2.0 };
        let phys = Physics { grid: grid.clone(), potential: PotentialSpec::default(), lambda: 1.0, cap: Some(cap) };
        let psi: Vec<Complex64> = grid
            .nodes()
            .iter()
            .map(|&r| Complex64::from_polar(amp * (-(r - center).powi(2)).exp(), k * r))
            .collect();
        let mut st = Stepper::new(phys, 2e-3, 0.0).unwrap();
        let mut state = FieldState::new(psi, 0.0);
        let mut last = f64::INFINITY;
        st.evolve(&mut state, 2.0, 20, |s| {
            let m = grid.norm_c(&s.psi).powi(2);
            assert!(m <= last * (1.0 + 1e-13), "mass grew: {last} -> {m}");
            last = m;
            Ok(true)
        }).unwrap();
    }

    #[test]
    fn linear_flow_is_unitary(seed in 0u64..100) {
        let grid = RadialGrid::new(10.0, 199).unwrap();
        let phys = Physics { grid: grid.clone(), potential: PotentialSpec::default(), lambda: 0.0, cap: None };
        let psi: Vec<Complex64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, &r)| Complex64::new(((j as u64 * 7 + seed) % 13) as f64 - 6.0, (seed % 5) as f64) * (-r).exp())
            .collect();
        let m0 = grid.norm_c(&psi).powi(2);
        let mut st = Stepper::new(phys, 5e-3, 0.0).unwrap();
        let mut state = FieldState::new(psi, 0.0);
        st.evolve(&mut state, 0.5, usize::MAX, |_| Ok(true)).unwrap();
        prop_assert!((grid.norm_c(&state.psi).powi(2) / m0 - 1.0).abs() < 1e-12);
    }
}
