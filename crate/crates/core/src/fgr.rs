//! Fermi golden rule: limiting-absorption values `Im (phi, (T - E - i0)^{-1} P_c phi)`
//! computed from a discrete spectral measure, by an extrapolated resolvent and
//! by a windowed time integral of the autocorrelation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayFit};
use crate::grid_spectral::{BoundStatePair, PotentialSpec, RadialGrid};
use crate::linalg::SymEigen;
use crate::linearization::LinearizedSystem;

/// Discrete spectral measure `sum_k c_k delta(x - alpha_k)` with signed amplitudes.
#[derive(Clone, Debug)]
pub struct SpectralMeasure {
    pub alphas: Vec<f64>,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpsSchedule {
    /// Multiples of the local level spacing, largest first.
    pub factors: [f64; 3],
    /// Level-spacing multiple `delta` is based on.
    pub base: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self { factors: [8.0, 4.0, 2.0], base: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventEstimate {
    pub value: f64,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub level_spacing: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t: f64,
    /// Fraction of `[0, T]` covered by the cosine taper at the end.
    pub taper: f64,
}

/// Lagrange weights for extrapolating values at `xs` to `x = 0`.
pub fn extrapolation_weights(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            xs.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| xj / (xj - xs[i]))
                .product()
        })
        .collect()
}

/// `int_0^tau cos(theta + k s) ds`
fn cos_integral(theta: f64, k: f64, tau: f64) -> f64 {
    if (k * tau).abs() < 1e-6 {
        // second order Taylor in k
        tau * theta.cos() - 0.5 * k * tau * tau * theta.sin() - k * k * tau.powi(3) / 6.0 * theta.cos()
    } else {
        ((theta + k * tau).sin() - theta.sin()) / k
    }
}

/// `int_0^T cos(omega t) W(t) dt` for the plateau-plus-cosine-taper window.
fn windowed_cos(omega: f64, win: TimeWindow) -> f64 {
    let tau = win.taper * win.t;
    let t1 = win.t - tau;
    let plateau = cos_integral(0.0, omega, t1);
    if tau <= 0.0 {
        return plateau;
    }
    let beta = PI / tau;
    let th = omega * t1;
    plateau
        + 0.5 * cos_integral(th, omega, tau)
        + 0.25 * (cos_integral(th, omega + beta, tau) + cos_integral(th, omega - beta, tau))
}

impl SpectralMeasure {
    pub fn new(alphas: Vec<f64>, coeffs: Vec<f64>) -> Self {
        assert_eq!(alphas.len(), coeffs.len());
        Self { alphas, coeffs }
    }

    pub fn total_weight(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Mean level spacing over the `2 half_width` levels around `energy`.
    pub fn level_spacing(&self, energy: f64) -> f64 {
        let n = self.alphas.len();
        let k = self.alphas.partition_point(|&a| a < energy);
        let half = 10.min(n / 4).max(1);
        let lo = k.saturating_sub(half);
        let hi = (k + half).min(n - 1);
        (self.alphas[hi] - self.alphas[lo]) / (hi - lo).max(1) as f64
    }

    /// `(phi, (T - E - i eps)^{-1} phi)`
    pub fn resolvent(&self, energy: f64, eps: f64) -> Complex64 {
        self.alphas
            .iter()
            .zip(&self.coeffs)
            .map(|(&a, &c)| c * c / Complex64::new(a - energy, -eps))
            .sum()
    }

    pub fn resolvent_im(&self, energy: f64, eps: f64) -> f64 {
        self.alphas
            .iter()
            .zip(&self.coeffs)
            .map(|(&a, &c)| c * c * eps / ((a - energy).powi(2) + eps * eps))
            .sum()
    }

    /// `C(t) = (phi, e^{-it(T - E)} phi)`
    pub fn autocorrelation(&self, energy: f64, t: f64) -> Complex64 {
        self.alphas
            .iter()
            .zip(&self.coeffs)
            .map(|(&a, &c)| c * c * Complex64::from_polar(1.0, -(a - energy) * t))
            .sum()
    }

    /// Resolvent route: values on `{8, 4, 2} x base x spacing` extrapolated to `eps = 0`.
    pub fn resolvent_fgr(&self, energy: f64, edge: f64, schedule: EpsSchedule) -> Result<ResolventEstimate> {
        if energy <= edge {
            return Err(Error::Domain(format!(
                "energy {energy} is not inside the continuum (edge {edge})"
            )));
        }
        let spacing = self.level_spacing(energy);
        let delta = schedule.base * spacing;
        let eps: Vec<f64> = schedule.factors.iter().map(|f| f * delta).collect();
        let values: Vec<f64> = eps.iter().map(|&e| self.resolvent_im(energy, e)).collect();
        let weights = extrapolation_weights(&eps);
        let value: f64 = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let monotone = diffs.iter().all(|d| *d >= -1e-3 * scale) || diffs.iter().all(|d| *d <= 1e-3 * scale);
        let curvature_ok = diffs.len() < 2 || diffs[1].abs() <= 1.5 * diffs[0].abs() + 1e-3 * scale;
        if !monotone || !curvature_ok {
            return Err(Error::Convergence {
                message: format!("eps extrapolation is not monotone at energy {energy}"),
                diagnostics: eps.iter().copied().zip(values.iter().copied()).collect(),
            });
        }
        Ok(ResolventEstimate { value, eps, values, level_spacing: spacing })
    }

    /// Recurrence time `2 pi / spacing` of the discrete spectrum near `energy`.
    pub fn recurrence_time(&self, energy: f64) -> f64 {
        2.0 * PI / self.level_spacing(energy)
    }

    /// Time route: `Re int_0^T C(t) W(t) dt` with a tapered window.
    pub fn time_domain_fgr(&self, energy: f64, edge: f64, win: TimeWindow) -> Result<f64> {
        if energy <= edge {
            return Err(Error::Domain(format!(
                "energy {energy} is not inside the continuum (edge {edge})"
            )));
        }
        let t_rec = self.recurrence_time(energy);
        if win.t > 0.95 * t_rec {
            return Err(Error::Convergence {
                message: format!("window T = {} reaches the recurrence time {t_rec:.3}", win.t),
                diagnostics: vec![(win.t, t_rec)],
            });
        }
        // autocorrelation regrowth check on the second half of the window
        let c0 = self.total_weight();
        if c0 > 0.0 {
            let samples = 200;
            let regrowth = (samples / 2..=samples)
                .map(|i| self.autocorrelation(energy, win.t * i as f64 / samples as f64).norm())
                .fold(0.0f64, f64::max);
            if regrowth > 0.5 * c0 {
                return Err(Error::Convergence {
                    message: "autocorrelation regrows inside the window".into(),
                    diagnostics: vec![(win.t, regrowth / c0)],
                });
            }
        }
        Ok(self
            .alphas
            .iter()
            .zip(&self.coeffs)
            .map(|(&a, &c)| c * c * windowed_cos(a - energy, win))
            .sum())
    }

    /// Default window: `T = 0.8 x recurrence time`, 20% taper.
    pub fn default_window(&self, energy: f64) -> TimeWindow {
        TimeWindow { t: 0.8 * self.recurrence_time(energy), taper: 0.2 }
    }

    /// Both routes with default settings.
    pub fn fgr_pair(&self, energy: f64, edge: f64) -> Result<(ResolventEstimate, f64)> {
        let res = self.resolvent_fgr(energy, edge, EpsSchedule::default())?;
        let td = self.time_domain_fgr(energy, edge, self.default_window(energy))?;
        Ok((res, td))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FgrResult {
    pub gamma: f64,
    pub gamma_resolvent: f64,
    pub gamma_timedomain: f64,
    pub eps_schedule: Vec<f64>,
    /// `(eps, 2 lambda^2 Im(...))` per schedule entry.
    pub extrapolation_diagnostics: Vec<(f64, f64)>,
    pub energy: f64,
    pub lambda: f64,
}

impl FgrResult {
    pub fn relative_disagreement(&self) -> f64 {
        (self.gamma_resolvent - self.gamma_timedomain).abs() / self.gamma.abs().max(f64::MIN_POSITIVE)
    }
}

/// `Q u_+^2`
pub fn gamma_source(sys: &LinearizedSystem) -> Vec<f64> {
    sys.q.iter().zip(&sys.u_plus).map(|(q, u)| q * u * u).collect()
}

/// `Gamma = 2 lambda^2 (Q u_+^2, Im (A - 2 kappa - i0)^{-1} P_c^A Pi Q u_+^2)`.
pub fn compute_gamma(sys: &LinearizedSystem) -> Result<FgrResult> {
    let phi = gamma_source(sys);
    let measure = sys.spectral_measure(&phi);
    let energy = 2.0 * sys.kappa;
    let (res, td) = measure.fgr_pair(energy, sys.continuum_edge())?;
    let pref = 2.0 * sys.lambda * sys.lambda;
    Ok(FgrResult {
        gamma: pref * res.value,
        gamma_resolvent: pref * res.value,
        gamma_timedomain: pref * td,
        eps_schedule: res.eps.clone(),
        extrapolation_diagnostics: res.eps.iter().zip(&res.values).map(|(e, v)| (*e, pref * v)).collect(),
        energy,
        lambda: sys.lambda,
    })
}

/// Spectral measure of `H0 = -Delta + V - e0` for `P_c phi` (both bound states removed).
pub struct LinearSpectrum {
    pub e0: f64,
    pub e01: f64,
    pub eig: SymEigen,
    pub grid: RadialGrid,
}

impl LinearSpectrum {
    pub fn new(potential: &PotentialSpec, grid: &RadialGrid, pair: &BoundStatePair) -> Self {
        let h = grid.schrodinger_matrix(&grid.potential_values(potential));
        let eig = SymEigen::new(&h.shifted(-pair.e0).to_dense());
        Self { e0: pair.e0, e01: pair.e01, eig, grid: grid.clone() }
    }

    pub fn measure(&self, phi: &[f64]) -> SpectralMeasure {
        let mut c = self.eig.coefficients(&self.grid.to_euclid(phi));
        c[0] = 0.0;
        c[1] = 0.0;
        SpectralMeasure::new(self.eig.values.clone(), c)
    }

    /// Continuum edge of `H0` (shifted by `-e0`).
    pub fn edge(&self) -> f64 {
        -self.e0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A1Report {
    pub gamma0: f64,
    pub gamma0_resolvent: f64,
    pub gamma0_timedomain: f64,
    /// `(s, value)` over the sweep.
    pub s_sweep: Vec<(f64, f64)>,
}

/// Positivity constant `(phi0 phi1^2, Im (H0 - 2 e01 - s - i0)^{-1} P_c phi0 phi1^2)`.
pub fn check_a1(potential: &PotentialSpec, grid: &RadialGrid, pair: &BoundStatePair, s_values: &[f64]) -> Result<A1Report> {
    if !crate::grid_spectral::check_resonance_condition(pair) {
        return Err(Error::Domain("2 e01 does not reach the continuum".into()));
    }
    let spec = LinearSpectrum::new(potential, grid, pair);
    let phi: Vec<f64> = pair.phi0.iter().zip(&pair.phi1).map(|(a, b)| a * b * b).collect();
    let m = spec.measure(&phi);
    let energy = 2.0 * pair.e01;
    let (res, td) = m.fgr_pair(energy, spec.edge())?;
    let s_sweep = s_values
        .par_iter()
        .map(|&s| m.resolvent_fgr(energy + s, spec.edge(), EpsSchedule::default()).map(|r| (s, r.value)))
        .collect::<Result<Vec<_>>>()?;
    Ok(A1Report { gamma0: res.value, gamma0_resolvent: res.value, gamma0_timedomain: td, s_sweep })
}

/// Local decay of `e^{-itA} (A - 2 kappa - i eps)^{-1} P_c Pi phi` (or of the plain
/// propagator when `regularized` is false), measured in `|| <x>^{-beta} . ||_2`.
pub fn dispersive_decay_probe(
    sys: &LinearizedSystem,
    phi: &[f64],
    weight_exponent: f64,
    times: &[f64],
    regularized: bool,
) -> Result<(Vec<(f64, f64)>, Option<DecayFit>)> {
    let m = sys.spectral_measure(phi);
    let energy = 2.0 * sys.kappa;
    let eps = 2.0 * m.level_spacing(energy);
    let amp: Vec<Complex64> = m
        .alphas
        .iter()
        .zip(&m.coeffs)
        .map(|(&a, &c)| if regularized { c / Complex64::new(a - energy, -eps) } else { Complex64::new(c, 0.0) })
        .collect();
    let series: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let (re, im): (Vec<f64>, Vec<f64>) = m
                .alphas
                .iter()
                .zip(&amp)
                .map(|(&a, &c)| {
                    let z = c * Complex64::from_polar(1.0, -a * t);
                    (z.re, z.im)
                })
                .unzip();
            let f = sys.synthesize(&re);
            let g = sys.synthesize(&im);
            let field = crate::linearization::join(&f, &g);
            (t, sys.grid.l2_loc_c(&field, weight_exponent))
        })
        .collect();
    let all_zero = series.iter().all(|(_, v)| *v == 0.0);
    if all_zero {
        return Ok((series, None));
    }
    let t_rec = m.recurrence_time(energy);
    let usable: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t > 0.0 && *t < 0.5 * t_rec).collect();
    if usable.len() < series.len() {
        log::warn!("decay probe window truncated at half the recurrence time {t_rec:.1}");
    }
    let fit = fit_decay(&usable, None).ok();
    Ok((series, fit))
}
