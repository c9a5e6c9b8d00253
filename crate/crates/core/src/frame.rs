//! Soliton-frame decomposition `psi = (Q_E + a R_E + h) e^{i Theta}`, `h perp Q`,
//! renormalization of `E` so that `a = 0`, and the `(z, eta)` split of `h`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::{solve_from_guess, GroundState};
use crate::grid_spectral::{BoundStatePair, PotentialSpec, RadialGrid};
use crate::linearization::ExtendedModes;

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub a: f64,
    pub theta: f64,
    pub h: Vec<Complex64>,
}

/// `psi e^{-i theta} = (1 + gamma) Q + k`, `k perp Q`,
/// then `gamma Q + k = a R + h` with `a = gamma (Q,Q)/(Q,R)`.
pub fn decompose_once(psi: &[Complex64], gs: &GroundState) -> Result<Decomposition> {
    let grid = &gs.grid;
    let q: Vec<Complex64> = gs.q.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let qq = grid.inner(&gs.q, &gs.q);
    let c = grid.inner_c(&q, psi) / qq;
    let theta = c.arg();
    let gamma = c.norm() - 1.0;
    let rot = Complex64::from_polar(1.0, -theta);
    let dist: f64 = {
        let d: Vec<Complex64> = psi.iter().zip(&gs.q).map(|(p, x)| p * rot - x).collect();
        grid.norm_c(&d)
    };
    if !(dist <= 0.2 * qq.sqrt()) {
        return Err(Error::Frame(format!(
            "field is too far from the ground state: distance {dist:.3e} > 0.2 ||Q|| = {:.3e}",
            0.2 * qq.sqrt()
        )));
    }
    let qr = grid.inner(&gs.q, &gs.r);
    let a = gamma * qq / qr;
    let h = psi
        .iter()
        .zip(gs.q.iter().zip(&gs.r))
        .map(|(p, (x, r))| p * rot - x - a * r)
        .collect();
    Ok(Decomposition { a, theta, h })
}

/// Reconstructs `(Q + a R + h) e^{i theta}`.
pub fn reconstruct(d: &Decomposition, gs: &GroundState) -> Vec<Complex64> {
    let ph = Complex64::from_polar(1.0, d.theta);
    d.h.iter()
        .zip(gs.q.iter().zip(&gs.r))
        .map(|(h, (q, r))| (h + q + d.a * r) * ph)
        .collect()
}

/// Ground states on one grid, solved on demand with warm starts.
#[derive(Clone)]
pub struct BranchContext {
    pub lambda: f64,
    pub pair: BoundStatePair,
    pub grid: RadialGrid,
    pub potential: PotentialSpec,
    last: Option<GroundState>,
}

impl BranchContext {
    pub fn new(seed: GroundState, pair: BoundStatePair) -> Self {
        Self {
            lambda: seed.lambda,
            grid: seed.grid.clone(),
            potential: seed.potential,
            pair,
            last: Some(seed),
        }
    }

    pub fn at(&mut self, e: f64) -> Result<GroundState> {
        if let Some(gs) = &self.last {
            if gs.e == e {
                return Ok(gs.clone());
            }
        }
        let guess = match &self.last {
            Some(gs) => gs.q.iter().zip(&gs.r).map(|(q, r)| q + (e - gs.e) * r).collect(),
            None => return Err(Error::Frame("branch context has no seed".into())),
        };
        let gs = solve_from_guess(e, self.lambda, &self.pair, &self.grid, &self.potential, guess)?;
        self.last = Some(gs.clone());
        Ok(gs)
    }
}

#[derive(Clone, Debug)]
pub struct Renormalized {
    pub e: f64,
    pub theta: f64,
    pub h: Vec<Complex64>,
    pub gs: GroundState,
    /// `|a_k|` per iterate.
    pub iterates: Vec<f64>,
    /// `|(psi - Q e^{i theta}, Q)|` relative to `(Q,Q)`.
    pub orthogonality_residual: f64,
}

impl Renormalized {
    /// Ratios `|a_{k+1}| / |a_k|` above the noise floor.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.iterates
            .windows(2)
            .filter(|w| w[0] > 1e-11)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

const RENORM_TOL: f64 = 1e-12;
const RENORM_MAX: usize = 50;

/// Fixed point `E_{k+1} = E_k + a_k` until `a = 0`.
pub fn renormalize_e(psi: &[Complex64], e_guess: f64, ctx: &mut BranchContext) -> Result<Renormalized> {
    let mut e = e_guess;
    let mut iterates = vec![];
    let mut growth = 0;
    for _ in 0..RENORM_MAX {
        let gs = ctx.at(e)?;
        let d = decompose_once(psi, &gs)?;
        let abs_a = d.a.abs();
        if let Some(&prev) = iterates.last() {
            if abs_a > prev && prev > 1e-11 {
                growth += 1;
                if growth >= 2 {
                    iterates.push(abs_a);
                    return Err(Error::Renorm { message: format!("|a| grew twice near E = {e}"), iterates });
                }
            }
        }
        iterates.push(abs_a);
        let floor_hit = iterates.len() >= 3 && abs_a < 1e-10 && abs_a >= iterates[iterates.len() - 2] * 0.9;
        if abs_a <= RENORM_TOL || floor_hit {
            let ortho = orthogonality_residual(psi, &gs, d.theta);
            return Ok(Renormalized { e, theta: d.theta, h: d.h, gs, iterates, orthogonality_residual: ortho });
        }
        e += d.a;
    }
    Err(Error::Renorm { message: format!("no convergence in {RENORM_MAX} iterations"), iterates })
}

fn orthogonality_residual(psi: &[Complex64], gs: &GroundState, theta: f64) -> f64 {
    let ph = Complex64::from_polar(1.0, theta);
    let d: Vec<Complex64> = psi.iter().zip(&gs.q).map(|(p, q)| p - q * ph).collect();
    let q: Vec<Complex64> = gs.q.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let qq = gs.grid.inner(&gs.q, &gs.q);
    (gs.grid.inner_c(&d, &q) / qq).norm()
}

/// `z = (v, Re h) + i (u, Im h)`, `eta = h - (z u_+ + conj(z) u_-)`.
pub fn split_h(h: &[Complex64], modes: &ExtendedModes, grid: &RadialGrid) -> (Complex64, Vec<Complex64>) {
    let re: Vec<f64> = h.iter().map(|c| c.re).collect();
    let im: Vec<f64> = h.iter().map(|c| c.im).collect();
    let z = Complex64::new(grid.inner(&modes.v, &re), grid.inner(&modes.u, &im));
    let eta = (0..h.len())
        .map(|j| h[j] - (z * modes.u_plus[j] + z.conj() * modes.u_minus[j]))
        .collect();
    (z, eta)
}

/// `b = a - a20 (z^2 + conj(z)^2)`
pub fn extract_b(a: &[f64], z: &[Complex64], a20: f64) -> Vec<f64> {
    a.iter().zip(z).map(|(a, z)| a - a20 * 2.0 * (z * z).re).collect()
}

/// Nearest representative of `theta` to `prev` modulo `2 pi`.
pub fn unwrap_phase(theta: f64, prev: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    theta - tau * ((theta - prev) / tau).round()
}

/// `F(k)` for `k = h + aR`.
pub fn nonlinear_remainder(gs: &GroundState, a: f64, h: &[Complex64]) -> Vec<Complex64> {
    let lam = gs.lambda;
    (0..h.len())
        .map(|j| {
            let (q, r, hj) = (gs.q[j], gs.r[j], h[j]);
            let k = hj + a * r;
            lam * q * (2.0 * hj.norm_sqr() + hj * hj)
                + 2.0 * lam * a * q * r * (2.0 * hj + hj.conj())
                + 3.0 * lam * a * a * q * r * r
                + lam * k * k * k.conj()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FrameRates {
    pub a_dot: f64,
    pub theta_dot: f64,
    /// Forcing of the `h` equation, `F_all`.
    pub f_all: Vec<Complex64>,
}

/// Modulation equations at fixed `E`: `a' = (c1 Q, Im F)`, the `theta'` law and `F_all`.
pub fn frame_rates(gs: &GroundState, a: f64, h: &[Complex64]) -> FrameRates {
    let grid = &gs.grid;
    let f = nonlinear_remainder(gs, a, h);
    let c0 = 1.0 / grid.inner(&gs.q, &gs.q);
    let c1 = 1.0 / grid.inner(&gs.q, &gs.r);
    let im_f: Vec<f64> = f.iter().map(|c| c.im).collect();
    let re_f: Vec<f64> = f.iter().map(|c| c.re).collect();
    let a_dot = c1 * grid.inner(&gs.q, &im_f);
    let q2h: Vec<f64> = (0..h.len()).map(|j| gs.lambda * gs.q[j] * gs.q[j] * 2.0 * h[j].re).collect();
    let theta_dot = -(a + c0 * grid.inner(&gs.q, &q2h) + c0 * grid.inner(&gs.q, &re_f)) / (1.0 + c0 * a / c1);
    let rq = c0 * grid.inner(&gs.q, &gs.r);
    let r_pi: Vec<f64> = gs.r.iter().zip(&gs.q).map(|(r, q)| r - rq * q).collect();
    let i = Complex64::new(0.0, 1.0);
    let f_all = (0..h.len())
        .map(|j| -i * theta_dot * h[j] - i * f[j] - (a_dot + i * a * theta_dot) * r_pi[j])
        .collect();
    FrameRates { a_dot, theta_dot, f_all }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolitonFrame {
    pub t: f64,
    pub e: f64,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub z: Complex64,
    pub p: Complex64,
    pub eta_l2loc: f64,
    pub eta_l4: f64,
    pub eta_l2: f64,
    pub mass: f64,
    pub energy: f64,
    pub orthogonality_residual: f64,
    pub renorm_iterations: usize,
}
