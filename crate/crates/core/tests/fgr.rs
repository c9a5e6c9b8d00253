use std::f64::consts::PI;

use proptest::prelude::*;
use soliton_lab::fgr::*;
use soliton_lab::grid_spectral::*;
use soliton_lab::ground_state::*;
use soliton_lab::linearization::LinearizedSystem;

/// Dense uniform levels with weights `rho(alpha) h`; the boundary value of
/// `Im (phi, (T - E - i0)^{-1} phi)` is `pi rho(E)`.
fn smooth_measure(h: f64) -> (SpectralMeasure, impl Fn(f64) -> f64) {
    let rho = |a: f64| (-(a - 10.0).powi(2) / 20.0).exp() + 0.1;
    let alphas: Vec<f64> = (0..(40.0 / h) as usize).map(|k| 1.0 + k as f64 * h).collect();
    let coeffs = alphas.iter().map(|&a| (rho(a) * h).sqrt()).collect();
    (SpectralMeasure::new(alphas, coeffs), rho)
}

#[test]
fn synthetic_density_both_routes() {
    let (m, rho) = smooth_measure(0.002);
    for e in [8.0, 10.0, 13.5] {
        let exact = PI * rho(e);
        let res = m.resolvent_fgr(e, 1.0, EpsSchedule::default()).unwrap();
        assert!((res.value / exact - 1.0).abs() < 1e-3, "resolvent {} vs {exact}", res.value);
        let td = m.time_domain_fgr(e, 1.0, m.default_window(e)).unwrap();
        assert!((td / exact - 1.0).abs() < 1e-2, "time domain {td} vs {exact}");
    }
}

#[test]
fn below_edge_is_domain_error() {
    let (m, _) = smooth_measure(0.01);
    assert!(m.resolvent_fgr(0.5, 1.0, EpsSchedule::default()).unwrap_err().is_validation());
    assert!(m.time_domain_fgr(0.5, 1.0, m.default_window(5.0)).unwrap_err().is_validation());
}

#[test]
fn window_past_recurrence_refused() {
    let (m, _) = smooth_measure(0.01);
    let t_rec = m.recurrence_time(10.0);
    let err = m.time_domain_fgr(10.0, 1.0, TimeWindow { t: 2.0 * t_rec, taper: 0.2 }).unwrap_err();
    assert!(matches!(err, soliton_lab::Error::Convergence { .. }));
}

#[test]
fn shipped_gamma_positive_and_routes_agree() {
    let grid = RadialGrid::new(60.0, 1199).unwrap();
    let v = PotentialSpec::default();
    let pair = bound_states(&v, &grid).unwrap();
    let gs = energy_for_mass(4.0, 0.05, &pair, &grid, &v).unwrap();
    let sys = LinearizedSystem::build(&gs).unwrap();
    let g = compute_gamma(&sys).unwrap();
    assert!(g.gamma > 0.0);
    assert!(g.relative_disagreement() < 0.02, "{}", g.relative_disagreement());
    assert!((g.gamma - 2.86e-5).abs() < 0.03 * 2.86e-5, "Gamma = {:e}", g.gamma);
    let a1 = check_a1(&v, &grid, &pair, &[0.0]).unwrap();
    assert!(a1.gamma0 > 0.0);
    assert!((a1.gamma0 - 1.482e-3).abs() < 0.02 * 1.482e-3);
    assert!((a1.gamma0_resolvent - a1.gamma0_timedomain).abs() < 0.02 * a1.gamma0);
}

#[test]
fn free_local_decay_is_three_halves() {
    let grid = RadialGrid::new(60.0, 1199).unwrap();
    let v = PotentialSpec::default();
    let pair = bound_states(&v, &grid).unwrap();
    let gs = energy_for_mass(4.0, 0.05, &pair, &grid, &v).unwrap();
    let sys = LinearizedSystem::build(&gs).unwrap();
    let phi: Vec<f64> = grid.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
    // after the initial spreading, before reflection from the grid edge
    // after the initial spreading and before the reflection off the grid edge
    let times: Vec<f64> = (0..30).map(|k| 2.5 * 1.06f64.powi(k)).collect();
    let (series, _) = dispersive_decay_probe(&sys, &phi, 3.0, &times, false).unwrap();
    assert_eq!(series.len(), times.len());
    let pts: Vec<(f64, f64)> = series.iter().map(|(t, y)| (t.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!(slope < -1.3 && slope > -1.7, "exponent {slope}");
}

proptest! {
    #[test]
    fn extrapolation_exact_on_quadratics(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, base in 0.01f64..3.0) {
        let xs = [8.0 * base, 4.0 * base, 2.0 * base];
        let w = extrapolation_weights(&xs);
        let v: f64 = w.iter().zip(&xs).map(|(wi, x)| wi * (a + b * x + c * x * x)).sum();
        prop_assert!((v - a).abs() < 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_im_is_positive_and_bounded(e in 2.0f64..30.0, eps in 0.01f64..1.0) {
        let (m, _) = smooth_measure(0.05);
        let im = m.resolvent_im(e, eps);
        prop_assert!(im > 0.0);
        prop_assert!(im <= m.total_weight() / eps + 1e-12);
        prop_assert!((m.resolvent(e, eps).im - im).abs() < 1e-9 * im.max(1.0));
    }
}
