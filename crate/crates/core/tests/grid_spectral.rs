use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use soliton_lab::grid_spectral::*;

/// Shooting on `U'' = (V - E) U`, `U(0) = 0`, `U'(0) = 1`; returns the number
/// of sign changes of `U` on `(0, r_end]`.
fn shoot_nodes(v: &PotentialSpec, e: f64, r_end: f64, h: f64) -> usize {
    let f = |r: f64, y: [f64; 2]| [y[1], (v.eval(r) - e) * y[0]];
    let mut y = [0.0, 1.0];
    let mut r = 0.0;
    let mut nodes = 0;
    while r < r_end {
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        let next = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if next[0] * y[0] < 0.0 {
            nodes += 1;
        }
        y = next;
        r += h;
        if y[0].abs() > 1e100 {
            break;
        }
    }
    nodes
}

/// k-th s-wave eigenvalue by node counting (bisection on E).
fn shooting_eigenvalue(v: &PotentialSpec, k: usize) -> f64 {
    let (mut lo, mut hi) = (-v.depth, -1e-6);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot_nodes(v, mid, 12.0, 1e-3) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gaussian_well_matches_shooting() {
    let v = PotentialSpec::default();
    let grid = RadialGrid::new(60.0, 1199).unwrap();
    let pair = bound_states(&v, &grid).unwrap();
    let e0 = shooting_eigenvalue(&v, 0);
    let e1 = shooting_eigenvalue(&v, 1);
    // second order in dr = 0.05
    assert!((pair.e0 - e0).abs() < 1.5e-2, "{} vs {e0}", pair.e0);
    assert!((pair.e1 - e1).abs() < 1.5e-2, "{} vs {e1}", pair.e1);
    let fine = bound_states(&v, &grid.refined(2).unwrap()).unwrap();
    for (c, f, exact) in [(pair.e0, fine.e0, e0), (pair.e1, fine.e1, e1)] {
        let ratio = (c - exact) / (f - exact);
        assert!((ratio - 4.0).abs() < 0.4, "convergence ratio {ratio}");
    }
}

#[test]
fn shipped_potential_values() {
    let grid = RadialGrid::new(60.0, 1199).unwrap();
    let pair = bound_states(&PotentialSpec::default(), &grid).unwrap();
    assert_relative_eq!(pair.e0, -9.97871, epsilon = 1e-4);
    assert_relative_eq!(pair.e1, -2.29983, epsilon = 1e-4);
    assert_eq!(pair.n_bound, 2);
    assert_eq!(pair.nodes_phi0(), 0);
    assert_eq!(pair.nodes_phi1(), 1);
    assert!(check_resonance_condition(&pair));
}

#[test]
fn square_well_transcendental_equation() {
    // k cot(k a) = -q with k^2 = V0 + E, q^2 = -E
    let (depth, a) = (20.0, 1.5);
    let v = PotentialSpec::square(depth, a);
    let g = |e: f64| {
        let k = (depth + e).sqrt();
        let q = (-e).sqrt();
        k * (k * a).cos() + q * (k * a).sin()
    };
    let root = |e_num: f64| {
        let (mut lo, mut hi) = (e_num - 0.3, (e_num + 0.3).min(-1e-9));
        assert!(g(lo) * g(hi) < 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let coarse = bound_states(&v, &RadialGrid::with_spacing(30.0, 0.01).unwrap()).unwrap();
    let fine = bound_states(&v, &RadialGrid::with_spacing(30.0, 0.005).unwrap()).unwrap();
    for (c, f) in [(coarse.e0, fine.e0), (coarse.e1, fine.e1)] {
        let exact = root(f);
        assert!((f - exact).abs() < 5e-2, "{f} vs {exact}");
        // the jump in V limits the scheme to first order
        let ratio = (c - exact) / (f - exact);
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    }
}

#[test]
fn shallow_well_is_rejected() {
    let grid = RadialGrid::new(30.0, 599).unwrap();
    let err = bound_states(&PotentialSpec::gaussian(2.0, 1.0), &grid).unwrap_err();
    assert!(matches!(err, soliton_lab::Error::Spectrum(_)));
    assert!(PotentialSpec::gaussian(-1.0, 1.0).validate().is_err());
}

#[test]
fn laplacian_of_gaussian() {
    let grid = RadialGrid::new(10.0, 1999).unwrap();
    let f: Vec<f64> = grid.nodes().iter().map(|r| (-r * r).exp()).collect();
    let lap = grid.apply_laplacian(&f);
    let err = grid
        .nodes()
        .iter()
        .zip(&lap)
        .map(|(r, l)| (l - (4.0 * r * r - 6.0) * (-r * r).exp()).abs())
        .fold(0.0f64, f64::max);
    assert!(err < 1e-3, "max error {err}");
}

#[test]
fn eigenfunctions_orthonormal() {
    let grid = RadialGrid::new(40.0, 799).unwrap();
    let p = bound_states(&PotentialSpec::default(), &grid).unwrap();
    assert_relative_eq!(grid.inner(&p.phi0, &p.phi0), 1.0, epsilon = 1e-10);
    assert_relative_eq!(grid.inner(&p.phi1, &p.phi1), 1.0, epsilon = 1e-10);
    assert!(grid.inner(&p.phi0, &p.phi1).abs() < 1e-10);
    assert!(p.phi0[0] > 0.0);
}

#[test]
fn spectrum_report_round_trip() {
    let grid = RadialGrid::new(30.0, 599).unwrap();
    let p = bound_states(&PotentialSpec::default(), &grid).unwrap();
    let rep = SpectrumReport::from(&p);
    let back: SpectrumReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(back.e01, p.e01);
    assert!(back.resonance_ok);
}

proptest! {
    #[test]
    fn inner_product_symmetric_and_positive(vals in prop::collection::vec(-1.0f64..1.0, 50)) {
        let grid = RadialGrid::new(5.0, 49).unwrap();
        let g: Vec<f64> = vals.iter().rev().copied().collect();
        prop_assert!((grid.inner(&vals, &g) - grid.inner(&g, &vals)).abs() < 1e-12);
        prop_assert!(grid.inner(&vals, &vals) >= 0.0);
        let back = grid.from_euclid(&grid.to_euclid(&vals));
        for (a, b) in vals.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_norms_ordered(re in prop::collection::vec(-1.0f64..1.0, 40), im in prop::collection::vec(-1.0f64..1.0, 40)) {
        let grid = RadialGrid::new(4.0, 39).unwrap();
        let f: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        // the local weight is at most one
        prop_assert!(grid.l2_loc_c(&f, 3.0) <= grid.norm_c(&f) + 1e-14);
        prop_assert!((grid.inner_c(&f, &f).re - grid.norm_c(&f).powi(2)).abs() < 1e-10);
        prop_assert!(grid.inner_c(&f, &f).im.abs() < 1e-12);
    }

    #[test]
    fn laplacian_is_symmetric(a in prop::collection::vec(-1.0f64..1.0, 30), b in prop::collection::vec(-1.0f64..1.0, 30)) {
        let grid = RadialGrid::new(3.0, 29).unwrap();
        let la = grid.apply_laplacian(&a);
        let lb = grid.apply_laplacian(&b);
        prop_assert!((grid.inner(&la, &b) - grid.inner(&a, &lb)).abs() < 1e-9 * (1.0 + grid.inner(&la, &la).sqrt()));
    }
}
