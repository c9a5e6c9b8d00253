//! Scenario runs: initial data near a soliton, long evolutions with online
//! frame extraction, and decay fits of the frame observables.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{conserved_quantities, CapSpec, FieldState, Physics, Stepper};
use crate::fgr::compute_gamma;
use crate::fit::{fit_decay, fit_decay_with_offset, log_binned_envelope, DecayFit};
use crate::frame::{renormalize_e, split_h, unwrap_phase, BranchContext, SolitonFrame};
use crate::grid_spectral::{bound_states, BoundStatePair, PotentialSpec, RadialGrid};
use crate::ground_state::{energy_for_mass, solve_ground_state, GroundState};
use crate::linearization::{ExtendedModes, LinearizedSystem};
use crate::normal_form::{bracket_clock, build_params, nf_integrate, NormalFormParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Resonance,
    Radiation,
    BranchTracking,
}

/// Gaussian packet `A exp(-(r - c)^2 / w^2) e^{i k r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl PacketSpec {
    pub fn eval(&self, r: f64) -> Complex64 {
        let g = (-((r - self.center) / self.width).powi(2)).exp();
        Complex64::from_polar(g, self.momentum * r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// `|z0|` for resonance and branch tracking, `||chi||` for radiation.
    pub eps: f64,
    /// Smallness bound the data must respect.
    pub eps0: f64,
    #[serde(default)]
    pub z_phase: f64,
    /// `||eta0|| = eta0_scale eps^{3/2}`; zero for no dispersive part.
    #[serde(default)]
    pub eta0_scale: f64,
    /// Packets whose random superposition forms `eta0` or `chi`.
    #[serde(default = "default_packets")]
    pub packets: Vec<PacketSpec>,
    pub t_end: f64,
    pub dt: f64,
    /// Observer stride in steps.
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Linearization is rebuilt when `|E - E_lin|` exceeds this.
    #[serde(default = "default_rebuild")]
    pub rebuild_threshold: f64,
    /// Start of the fit window; defaults to `10 eps^-2` for resonance runs.
    #[serde(default)]
    pub fit_start: Option<f64>,
    /// Fraction of the horizon kept for fits (the tail is CAP-contaminated).
    #[serde(default = "default_fit_fraction")]
    pub fit_fraction: f64,
}

fn default_packets() -> Vec<PacketSpec> {
    vec![PacketSpec { center: 6.0, width: 2.0, momentum: 0.0 }]
}
fn default_sigma() -> f64 {
    0.1
}
fn default_beta0() -> f64 {
    3.0
}
fn default_rebuild() -> f64 {
    1e-4
}
fn default_fit_fraction() -> f64 {
    0.9
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps <= self.eps0) {
            return Err(Error::Config(format!("scenario.eps = {} must lie in [0, eps0 = {}]", self.eps, self.eps0)));
        }
        if !(self.t_end >= 0.0 && self.dt > 0.0 && self.stride > 0) {
            return Err(Error::Config("scenario needs t_end >= 0, dt > 0, stride > 0".into()));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return Err(Error::Config("scenario.fit_fraction must lie in (0, 1]".into()));
        }
        if self.packets.is_empty() || self.packets.iter().any(|p| !(p.width > 0.0)) {
            return Err(Error::Config("scenario.packets must be nonempty with positive widths".into()));
        }
        Ok(())
    }
}

/// Everything a run needs besides the scenario itself.
#[derive(Clone, Debug)]
pub struct Setup {
    pub potential: PotentialSpec,
    pub lambda: f64,
    pub mass: f64,
    /// Evolution grid.
    pub grid: RadialGrid,
    /// Inner grid (same spacing) for the linearization.
    pub lin_grid: RadialGrid,
    pub cap: Option<CapSpec>,
}

/// Soliton, its linearization and the reduced coefficients at the initial `E`.
pub struct Prepared {
    pub gs: GroundState,
    pub pair: BoundStatePair,
    pub lin_pair: BoundStatePair,
    pub sys: LinearizedSystem,
    pub modes: ExtendedModes,
    pub nf: NormalFormParams,
}

pub fn prepare(setup: &Setup) -> Result<Prepared> {
    let pair = bound_states(&setup.potential, &setup.grid)?;
    let lin_pair = bound_states(&setup.potential, &setup.lin_grid)?;
    let gs_lin = energy_for_mass(setup.mass, setup.lambda, &lin_pair, &setup.lin_grid, &setup.potential)?;
    let gs = solve_ground_state(gs_lin.e, setup.lambda, &pair, &setup.grid, &setup.potential)?;
    let sys = LinearizedSystem::build(&gs_lin)?;
    let modes = sys.extend_to(&setup.grid)?;
    let fgr = compute_gamma(&sys)?;
    let nf = build_params(&gs_lin, &sys, &fgr)?;
    Ok(Prepared { gs, pair, lin_pair, sys, modes, nf })
}

/// Random superposition of the packets with unit `L^2` norm.
fn packet_profile(grid: &RadialGrid, packets: &[PacketSpec], seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<Complex64> = packets
        .iter()
        .map(|_| Complex64::from_polar(rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let f: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&r| packets.iter().zip(&weights).map(|(p, w)| w * p.eval(r)).sum())
        .collect();
    let n = grid.norm_c(&f);
    f.into_iter().map(|z| z / n).collect()
}

/// Removes the `Q`, `u` and `iv` directions: the continuous subspace of `L`
/// restricted to `Q^perp`.
pub fn project_continuum(h: &[Complex64], gs: &GroundState, modes: &ExtendedModes) -> Vec<Complex64> {
    let grid = &gs.grid;
    let qq = grid.inner(&gs.q, &gs.q);
    let mut f: Vec<f64> = h.iter().map(|c| c.re).collect();
    let mut g: Vec<f64> = h.iter().map(|c| c.im).collect();
    let cf = grid.inner(&gs.q, &f) / qq;
    let cg = grid.inner(&gs.q, &g) / qq;
    crate::linalg::axpy(-cf, &gs.q, &mut f);
    crate::linalg::axpy(-cg, &gs.q, &mut g);
    let a = grid.inner(&modes.v, &f);
    let b = grid.inner(&modes.u, &g);
    crate::linalg::axpy(-a, &modes.u, &mut f);
    crate::linalg::axpy(-b, &modes.v, &mut g);
    crate::linearization::join(&f, &g)
}

/// `psi0 = Q + z0 u_+ + conj(z0) u_- + eta0` with `a0 = 0`.
pub fn prepare_resonance_data(
    gs: &GroundState,
    modes: &ExtendedModes,
    z0: Complex64,
    eta0_norm: f64,
    packets: &[PacketSpec],
    seed: u64,
) -> Result<FieldState> {
    let eps = z0.norm();
    let qn = gs.grid.inner(&gs.q, &gs.q).sqrt();
    if eps > 0.2 * qn {
        return Err(Error::Config(format!("|z0| = {eps} is not small against ||Q|| = {qn:.3}")));
    }
    if eta0_norm > 0.0 && eps > 0.0 && eta0_norm > 10.0 * eps.powf(1.5) {
        return Err(Error::Config(format!("||eta0|| = {eta0_norm:e} exceeds 10 |z0|^(3/2)")));
    }
    let eta0 = if eta0_norm > 0.0 {
        let raw = project_continuum(&packet_profile(&gs.grid, packets, seed), gs, modes);
        let n = gs.grid.norm_c(&raw);
        raw.into_iter().map(|c| c * (eta0_norm / n)).collect()
    } else {
        vec![Complex64::new(0.0, 0.0); gs.grid.n]
    };
    let psi = (0..gs.grid.n)
        .map(|j| gs.q[j] + z0 * modes.u_plus[j] + z0.conj() * modes.u_minus[j] + eta0[j])
        .collect();
    Ok(FieldState::new(psi, gs.e))
}

/// `psi0 = Q + chi`, `chi` a localized packet projected onto the continuous subspace.
pub fn prepare_radiation_data(
    gs: &GroundState,
    modes: &ExtendedModes,
    chi_norm: f64,
    packets: &[PacketSpec],
    seed: u64,
) -> Result<FieldState> {
    let qn = gs.grid.inner(&gs.q, &gs.q).sqrt();
    if chi_norm > 0.2 * qn {
        return Err(Error::Config(format!("||chi|| = {chi_norm} is not small against ||Q|| = {qn:.3}")));
    }
    let chi = if chi_norm > 0.0 {
        let raw = project_continuum(&packet_profile(&gs.grid, packets, seed), gs, modes);
        let n = gs.grid.norm_c(&raw);
        raw.into_iter().map(|c| c * (chi_norm / n)).collect()
    } else {
        vec![Complex64::new(0.0, 0.0); gs.grid.n]
    };
    let psi = (0..gs.grid.n).map(|j| gs.q[j] + chi[j]).collect();
    Ok(FieldState::new(psi, gs.e))
}

/// Running suprema of `{t}^{1/2}|z|`, `{t}^{3/4-sigma} ||eta||_{L^4}` and
/// `{t}^{1+sigma/4} ||eta||_{L^2_loc}`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MonitorM {
    pub sigma: f64,
    pub z_term: f64,
    pub eta_l4_term: f64,
    pub eta_loc_term: f64,
    /// `(t, M(t))` at every observed sample.
    pub history: Vec<(f64, f64)>,
}

impl MonitorM {
    pub fn new(sigma: f64) -> Self {
        Self { sigma, ..Default::default() }
    }

    pub fn update(&mut self, clock: f64, f: &SolitonFrame) {
        self.z_term = self.z_term.max(clock.sqrt() * f.z.norm());
        self.eta_l4_term = self.eta_l4_term.max(clock.powf(0.75 - self.sigma) * f.eta_l4);
        self.eta_loc_term = self.eta_loc_term.max(clock.powf(1.0 + self.sigma / 4.0) * f.eta_l2loc);
        self.history.push((f.t, self.value()));
    }

    pub fn value(&self) -> f64 {
        self.z_term + self.eta_l4_term + self.eta_loc_term
    }

    pub fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

/// Online soliton-frame extraction with lazily rebuilt linearization.
pub struct FrameTracker {
    ctx: BranchContext,
    setup: Setup,
    lin_pair: BoundStatePair,
    modes: ExtendedModes,
    e_lin: f64,
    a20: f64,
    rebuild_threshold: f64,
    beta0: f64,
    theta_prev: Option<f64>,
    e_prev: f64,
    pub rebuilds: usize,
    pub contraction_ratios: Vec<f64>,
}

impl FrameTracker {
    pub fn new(setup: &Setup, prep: &Prepared, rebuild_threshold: f64, beta0: f64) -> Self {
        Self {
            ctx: BranchContext::new(prep.gs.clone(), prep.pair.clone()),
            setup: setup.clone(),
            lin_pair: prep.lin_pair.clone(),
            modes: prep.modes.clone(),
            e_lin: prep.sys.e,
            a20: prep.nf.a20,
            rebuild_threshold,
            beta0,
            theta_prev: None,
            e_prev: prep.gs.e,
            rebuilds: 0,
            contraction_ratios: vec![],
        }
    }

    fn refresh_modes(&mut self, e: f64) -> Result<bool> {
        if (e - self.e_lin).abs() <= self.rebuild_threshold {
            return Ok(false);
        }
        let gs = solve_ground_state(e, self.setup.lambda, &self.lin_pair, &self.setup.lin_grid, &self.setup.potential)?;
        let sys = LinearizedSystem::build(&gs)?;
        self.modes = sys.extend_to(&self.setup.grid)?;
        self.e_lin = e;
        self.rebuilds += 1;
        Ok(true)
    }

    /// Frame of the stored (gauge-rotated) field; `b` is left at 0 and filled
    /// in after the run, once `E_inf` is known.
    pub fn observe(&mut self, state: &FieldState) -> Result<SolitonFrame> {
        let psi = &state.psi;
        let ren = renormalize_e(psi, self.e_prev, &mut self.ctx)?;
        self.contraction_ratios.extend(ren.contraction_ratios());
        let theta_s = match self.theta_prev {
            Some(p) => unwrap_phase(ren.theta, p),
            None => ren.theta,
        };
        self.theta_prev = Some(theta_s);
        self.e_prev = ren.e;
        // h does not see the gauge rotation of the stored field, only the phase does
        let (mut z, mut eta) = split_h(&ren.h, &self.modes, &self.setup.grid);
        // E oscillates by 2 a20 Re z^2 at frequency 2 kappa; only its slow part moves the modes
        let slow = ren.e - 2.0 * self.a20 * (z * z).re;
        if self.refresh_modes(slow)? {
            (z, eta) = split_h(&ren.h, &self.modes, &self.setup.grid);
        }
        let grid = &self.setup.grid;
        let cons = conserved_quantities(&state.physical(), grid, &self.setup.potential, self.setup.lambda);
        Ok(SolitonFrame {
            t: state.t,
            e: ren.e,
            theta: theta_s - state.gauge * state.t,
            a: 0.0,
            b: 0.0,
            z,
            p: z * Complex64::from_polar(1.0, self.modes.kappa * state.t),
            eta_l2loc: grid.l2_loc_c(&eta, self.beta0),
            eta_l4: grid.lp_norm_c(&eta, 4.0),
            eta_l2: grid.norm_c(&eta),
            mass: cons.mass,
            energy: cons.energy,
            orthogonality_residual: ren.orthogonality_residual,
            renorm_iterations: ren.iterates.len(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NfRow {
    pub t: f64,
    pub rho: f64,
    pub omega: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Fits {
    /// Fit window in `t`.
    pub window: [f64; 2],
    pub clock_window: [f64; 2],
    pub z: Option<DecayFit>,
    pub eta_l2loc: Option<DecayFit>,
    pub a: Option<DecayFit>,
    pub b: Option<DecayFit>,
    pub e_minus_einf: Option<DecayFit>,
    /// Limit energy used as the reference of `a` and `b`.
    pub e_inf: Option<f64>,
    /// Alternative estimate from a power-law-plus-offset fit of the slow part of `E`.
    pub e_inf_powerlaw: Option<f64>,
    pub e_final: f64,
    /// `max(|z| {t}^{1/2}, 1/(|z| {t}^{1/2}))` over the window.
    pub envelope_m: Option<f64>,
    /// Extremes of `|z| / rho` over the window.
    pub nf_ratio: Option<[f64; 2]>,
    /// Largest contraction ratio of the renormalization iterates.
    pub max_contraction: Option<f64>,
    /// Median `|a|` over the last tenth of the horizon.
    pub noise_floor: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunParams {
    pub e0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub a20: f64,
    pub c1: f64,
    pub eps: f64,
    pub mass0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub params: RunParams,
    pub frames: Vec<SolitonFrame>,
    pub nf: Vec<NfRow>,
    pub fits: Fits,
    pub monitor: MonitorM,
    pub rebuilds: usize,
    /// Set when the run stopped early; the frames up to the failure are kept.
    pub failure: Option<String>,
}

/// Sets up, evolves and analyses one scenario. Numerical failures during the
/// evolution end the run early and are reported in `failure`.
pub fn run_scenario(setup: &Setup, cfg: &ScenarioConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let prep = prepare(setup)?;
    let gs = &prep.gs;
    let mut state = match cfg.kind {
        ScenarioKind::Resonance | ScenarioKind::BranchTracking => {
            let z0 = Complex64::from_polar(cfg.eps, cfg.z_phase);
            let eta0 = cfg.eta0_scale * cfg.eps.powf(1.5);
            prepare_resonance_data(gs, &prep.modes, z0, eta0, &cfg.packets, cfg.seed)?
        }
        ScenarioKind::Radiation => prepare_radiation_data(gs, &prep.modes, cfg.eps, &cfg.packets, cfg.seed)?,
    };
    let physics = Physics { grid: setup.grid.clone(), potential: setup.potential, lambda: setup.lambda, cap: setup.cap };
    let mut stepper = Stepper::new(physics, cfg.dt, gs.e)?;
    stepper.check_dt(&state.psi)?;

    let mut tracker = FrameTracker::new(setup, &prep, cfg.rebuild_threshold, cfg.beta0);
    let mut frames: Vec<SolitonFrame> = vec![];
    let gamma = prep.nf.gamma;
    let clock_eps = match cfg.kind {
        ScenarioKind::Radiation => 1.0,
        _ => cfg.eps.max(f64::MIN_POSITIVE),
    };
    let mut monitor = MonitorM::new(cfg.sigma);
    let res = stepper.evolve(&mut state, cfg.t_end, cfg.stride, |s| {
        let f = tracker.observe(s)?;
        monitor.update(bracket_clock(clock_eps, gamma, f.t), &f);
        log::debug!("t = {:.2} E = {:.10} |z| = {:.4e} eta_loc = {:.3e}", f.t, f.e, f.z.norm(), f.eta_l2loc);
        frames.push(f);
        Ok(true)
    });
    let failure = res.err().map(|e| {
        log::warn!("run stopped early: {e}");
        e.to_string()
    });
    let params = RunParams {
        e0: gs.e,
        kappa: prep.sys.kappa,
        gamma,
        a20: prep.nf.a20,
        c1: prep.nf.c1,
        eps: cfg.eps,
        mass0: frames.first().map_or(0.0, |f| f.mass),
    };
    let nf = reduced_model(&frames, &prep.nf)?;
    let fits = analyse(&mut frames, &nf, &params, cfg, &tracker.contraction_ratios);
    Ok(RunRecord { params, frames, nf, fits, monitor, rebuilds: tracker.rebuilds, failure })
}

/// `rho` from the normal form started at `|z(0)|`, sampled at the frame times.
fn reduced_model(frames: &[SolitonFrame], params: &NormalFormParams) -> Result<Vec<NfRow>> {
    let Some(first) = frames.first() else { return Ok(vec![]) };
    if frames.len() < 2 || first.z.norm() == 0.0 {
        return Ok(vec![]);
    }
    let dt = frames[1].t - frames[0].t;
    let t_end = frames.last().unwrap().t;
    let traj = nf_integrate(first.p, params, |_| 0.0, |_| Complex64::new(0.0, 0.0), t_end, dt)?;
    let eps = first.z.norm();
    let m = 2.0;
    Ok(traj
        .states
        .iter()
        .map(|s| {
            let c = bracket_clock(eps, params.gamma, s.t).powf(-0.5);
            NfRow { t: s.t, rho: s.rho, omega: s.omega, bracket_lo: c / m, bracket_hi: c * m }
        })
        .collect())
}

/// Intercept of the least-squares line through `(x, y)`.
fn intercept(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(my - sxy / sxx * mx)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[v.len() / 2])
}

/// Fills `a`, `b` in the frames and fits the decay laws over the window.
pub fn analyse(
    frames: &mut [SolitonFrame],
    nf: &[NfRow],
    params: &RunParams,
    cfg: &ScenarioConfig,
    contraction: &[f64],
) -> Fits {
    let mut fits = Fits { max_contraction: contraction.iter().copied().reduce(f64::max), ..Default::default() };
    let Some(last) = frames.last() else { return fits };
    fits.e_final = last.e;
    let t_last = last.t;
    let resonant = cfg.kind != ScenarioKind::Radiation;
    let eps = frames[0].z.norm().max(if resonant { cfg.eps } else { 0.0 });
    let clock = |t: f64| if resonant { bracket_clock(eps, params.gamma, t) } else { (1.0 + t * t).sqrt() };
    let t_lo = cfg.fit_start.unwrap_or(match cfg.kind {
        ScenarioKind::Resonance => 10.0 * eps.powi(-2),
        // past the time where 2 Gamma t overtakes eps^-2 in {t}
        ScenarioKind::BranchTracking => eps.powi(-2) / params.gamma,
        ScenarioKind::Radiation => 1.0,
    });
    let t_hi = cfg.fit_fraction * t_last;
    fits.window = [t_lo, t_hi];
    fits.clock_window = [clock(t_lo), clock(t_hi)];
    let in_window = |t: f64| t >= t_lo && t <= t_hi;

    // slow part of E: remove the a20 oscillation, then locate E_inf
    let slow: Vec<(f64, f64)> =
        frames.iter().map(|f| (clock(f.t), f.e - params.a20 * 2.0 * (f.z * f.z).re)).collect();
    match fit_decay_with_offset(&slow, (clock(t_lo), clock(t_hi))) {
        Ok((_, off)) => fits.e_inf_powerlaw = Some(off),
        Err(e) => fits.errors.push(fits_err("e_inf_powerlaw", e)),
    }
    let e_inf = if resonant {
        // E - E_inf is quadratic in z: intercept of the slow part against |z|^2
        let pts: Vec<(f64, f64)> = frames
            .iter()
            .zip(&slow)
            .filter(|(f, _)| in_window(f.t))
            .map(|(f, s)| (f.z.norm_sqr(), s.1))
            .collect();
        match intercept(&pts) {
            Some(v) => Some(v),
            None => {
                fits.errors.push("e_inf: too few samples for the |z|^2 regression".into());
                None
            }
        }
    } else {
        fits.e_inf_powerlaw
    };
    fits.e_inf = e_inf;
    let e_ref = e_inf.unwrap_or(fits.e_final);
    for f in frames.iter_mut() {
        f.a = f.e - e_ref;
        f.b = f.a - params.a20 * 2.0 * (f.z * f.z).re;
    }

    let series = |get: &dyn Fn(&SolitonFrame) -> f64| -> Vec<(f64, f64)> {
        frames.iter().filter(|f| in_window(f.t)).map(|f| (clock(f.t), get(f))).collect()
    };
    let z_series = series(&|f| f.z.norm());
    if resonant {
        match fit_decay(&z_series, None) {
            Ok(fit) => fits.z = Some(fit),
            Err(e) => fits.errors.push(fits_err("z", e)),
        }
        let m = z_series
            .iter()
            .map(|(c, z)| {
                let s = z * c.sqrt();
                s.max(1.0 / s)
            })
            .fold(0.0f64, f64::max);
        if !z_series.is_empty() {
            fits.envelope_m = Some(m);
        }
        let ratios: Vec<f64> = frames
            .iter()
            .zip(nf)
            .filter(|(f, _)| in_window(f.t))
            .map(|(f, r)| f.z.norm() / r.rho)
            .collect();
        if !ratios.is_empty() {
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0f64, f64::max);
            fits.nf_ratio = Some([lo, hi]);
        }
    }
    let eta = log_binned_envelope(&series(&|f| f.eta_l2loc), 20);
    match fit_decay(&eta, None) {
        Ok(fit) => fits.eta_l2loc = Some(fit),
        Err(e) => fits.errors.push(fits_err("eta_l2loc", e)),
    }
    let a_env = log_binned_envelope(&series(&|f| f.a), 20);
    match fit_decay(&a_env, None) {
        Ok(fit) => fits.a = Some(fit),
        Err(e) => fits.errors.push(fits_err("a", e)),
    }
    if resonant {
        // refit b as an envelope with the chosen offset
        let b_env = log_binned_envelope(&series(&|f| f.b), 20);
        match fit_decay(&b_env, None) {
            Ok(fit) => fits.b = Some(fit),
            Err(e) => fits.errors.push(fits_err("b", e)),
        }
    } else {
        fits.b = None;
    }
    let de = log_binned_envelope(
        &frames.iter().filter(|f| in_window(f.t)).map(|f| ((1.0 + f.t * f.t).sqrt(), f.e - e_ref)).collect::<Vec<_>>(),
        20,
    );
    match fit_decay(&de, None) {
        Ok(fit) => fits.e_minus_einf = Some(fit),
        Err(e) => fits.errors.push(fits_err("e_minus_einf", e)),
    }
    fits.noise_floor = median(frames.iter().filter(|f| f.t > 0.9 * t_last).map(|f| f.a.abs()).collect());
    fits
}

fn fits_err(name: &str, e: Error) -> String {
    format!("{name}: {e}")
}

/// Writes `frame.csv`, `nf.csv`, `fits.json` and `monitor.json` into `dir`.
pub fn write_run(dir: &Path, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::io::write_frames(&dir.join("frame.csv"), &record.frames)?;
    crate::io::write_nf(&dir.join("nf.csv"), &record.nf)?;
    let fits = serde_json::json!({
        "params": record.params,
        "fits": record.fits,
        "rebuilds": record.rebuilds,
        "failure": record.failure,
    });
    std::fs::write(dir.join("fits.json"), serde_json::to_string_pretty(&fits)?)?;
    let monitor = serde_json::json!({
        "sigma": record.monitor.sigma,
        "z_term": record.monitor.z_term,
        "eta_l4_term": record.monitor.eta_l4_term,
        "eta_loc_term": record.monitor.eta_loc_term,
        "finite": record.monitor.is_finite(),
        "history": record.monitor.history,
    });
    std::fs::write(dir.join("monitor.json"), serde_json::to_string_pretty(&monitor)?)?;
    Ok(())
}
