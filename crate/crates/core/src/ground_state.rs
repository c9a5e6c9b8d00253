//! Nonlinear ground states `(-Delta + V) Q + lambda Q^3 = E Q` and `R = dQ/dE`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_spectral::{BoundStatePair, PotentialSpec, RadialGrid};
use crate::linalg::{norm, SymTridiagonal};

const NEWTON_MAX_ITER: usize = 50;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundState {
    pub e: f64,
    pub lambda: f64,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    /// Component of `Q` along `phi0`.
    pub w: f64,
    /// `||(-Delta+V)Q + lambda Q^3 - EQ|| / ||Q||`
    pub residual: f64,
    pub grid: RadialGrid,
    pub potential: PotentialSpec,
}

impl GroundState {
    pub fn mass(&self) -> f64 {
        self.grid.inner(&self.q, &self.q)
    }

    pub fn potential_values(&self) -> Vec<f64> {
        self.grid.potential_values(&self.potential)
    }

    /// Diagonal `V - E + k lambda Q^2`.
    fn diag_term(&self, k: f64) -> Vec<f64> {
        let v = self.potential_values();
        v.iter().zip(&self.q).map(|(vj, qj)| vj - self.e + k * self.lambda * qj * qj).collect()
    }

    /// `H_E = -Delta + V - E + lambda Q^2` in the Euclidean representation.
    pub fn h_matrix(&self) -> SymTridiagonal {
        self.grid.schrodinger_matrix(&self.diag_term(1.0))
    }

    /// `L_+^{or} = -Delta + V - E + 3 lambda Q^2` in the Euclidean representation.
    pub fn lplus_or_matrix(&self) -> SymTridiagonal {
        self.grid.schrodinger_matrix(&self.diag_term(3.0))
    }

    pub fn apply_h(&self, f: &[f64]) -> Vec<f64> {
        apply_grid(&self.grid, &self.h_matrix(), f)
    }

    pub fn apply_lplus_or(&self, f: &[f64]) -> Vec<f64> {
        apply_grid(&self.grid, &self.lplus_or_matrix(), f)
    }

    /// `||L_+^{or} R - Q|| / ||Q||`
    pub fn r_residual(&self) -> f64 {
        let lr = self.apply_lplus_or(&self.r);
        let d: Vec<f64> = lr.iter().zip(&self.q).map(|(a, b)| a - b).collect();
        self.grid.norm(&d) / self.grid.norm(&self.q)
    }
}

fn apply_grid(grid: &RadialGrid, m: &SymTridiagonal, f: &[f64]) -> Vec<f64> {
    grid.from_euclid(&m.apply(&grid.to_euclid(f)))
}

/// Euclidean residual `(H0 - E) x + lambda (x/c)^2 x`.
fn residual(h0: &SymTridiagonal, c: &[f64], e: f64, lambda: f64, x: &[f64]) -> Vec<f64> {
    let mut f = h0.apply(x);
    for j in 0..x.len() {
        let qj = x[j] / c[j];
        f[j] += (lambda * qj * qj - e) * x[j];
    }
    f
}

fn newton(
    h0: &SymTridiagonal,
    c: &[f64],
    e: f64,
    lambda: f64,
    mut x: Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    let mut f = residual(h0, c, e, lambda, &x);
    let mut rnorm = norm(&f);
    for _ in 0..NEWTON_MAX_ITER {
        let xn = norm(&x);
        if xn == 0.0 {
            return Err(Error::Solve("Newton iterate collapsed to zero".into()));
        }
        if rnorm <= 1e-6 * RESIDUAL_TOL * xn {
            return Ok((x, rnorm / xn));
        }
        let diag: Vec<f64> = (0..x.len())
            .map(|j| {
                let qj = x[j] / c[j];
                h0.diag[j] - e + 3.0 * lambda * qj * qj
            })
            .collect();
        let jac = SymTridiagonal::new(diag, h0.off.clone());
        let dx = jac.solve(&f)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - step * d).collect();
            let ft = residual(h0, c, e, lambda, &trial);
            let rt = norm(&ft);
            if rt.is_finite() && rt < rnorm {
                let stalled = rt > 0.5 * rnorm;
                x = trial;
                f = ft;
                rnorm = rt;
                accepted = !(stalled && rnorm <= RESIDUAL_TOL * norm(&x));
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let xn = norm(&x);
    if xn > 0.0 && rnorm <= RESIDUAL_TOL * xn {
        Ok((x, rnorm / xn))
    } else {
        Err(Error::Solve(format!(
            "Newton did not converge in {NEWTON_MAX_ITER} iterations (E = {e}, residual {:.3e})",
            rnorm / xn.max(f64::MIN_POSITIVE)
        )))
    }
}

/// Solves for `Q_E` starting from `w phi0` with `w^2 = E'/(lambda int phi0^4)`.
pub fn solve_ground_state(
    e: f64,
    lambda: f64,
    pair: &BoundStatePair,
    grid: &RadialGrid,
    potential: &PotentialSpec,
) -> Result<GroundState> {
    let guess = initial_guess(e, lambda, pair, grid)?;
    solve_from_guess(e, lambda, pair, grid, potential, guess)
}

fn initial_guess(e: f64, lambda: f64, pair: &BoundStatePair, grid: &RadialGrid) -> Result<Vec<f64>> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::Domain("lambda must be nonzero".into()));
    }
    let ep = e - pair.e0;
    let phi4: Vec<f64> = pair.phi0.iter().map(|p| p * p * p).collect();
    let w2 = ep / (lambda * grid.inner(&phi4, &pair.phi0));
    if !(w2 > 0.0) {
        return Err(Error::Domain(format!(
            "E - e0 = {ep:e} has the wrong sign for lambda = {lambda}: w^2 = {w2:e}"
        )));
    }
    let w = w2.sqrt();
    Ok(pair.phi0.iter().map(|p| w * p).collect())
}

/// Newton from an explicit grid-function guess (used for warm starts).
pub fn solve_from_guess(
    e: f64,
    lambda: f64,
    pair: &BoundStatePair,
    grid: &RadialGrid,
    potential: &PotentialSpec,
    guess: Vec<f64>,
) -> Result<GroundState> {
    if (e - pair.e0) / lambda <= 0.0 {
        return Err(Error::Domain(format!("E = {e} is on the wrong side of e0 = {}", pair.e0)));
    }
    let h0 = grid.schrodinger_matrix(&grid.potential_values(potential));
    let c: Vec<f64> = (0..grid.n).map(|j| grid.euclid_factor(j)).collect();
    let x0 = grid.to_euclid(&guess);
    let (x, res) = match newton(&h0, &c, e, lambda, x0.clone()) {
        Ok(v) => v,
        Err(first) => {
            // continuation in E' from close to the bifurcation point
            let steps = 16;
            let mut x = grid.to_euclid(&initial_guess(pair.e0 + (e - pair.e0) / steps as f64, lambda, pair, grid)?);
            let mut out = None;
            for k in 1..=steps {
                let ek = pair.e0 + (e - pair.e0) * k as f64 / steps as f64;
                match newton(&h0, &c, ek, lambda, x.clone()) {
                    Ok((xk, r)) => {
                        x = xk;
                        out = Some((x.clone(), r));
                    }
                    Err(_) => return Err(first),
                }
            }
            out.ok_or(first)?
        }
    };
    let mut q = grid.from_euclid(&x);
    if q.iter().sum::<f64>() < 0.0 {
        q.iter_mut().for_each(|v| *v = -*v);
    }
    let qmax = q.iter().fold(0.0f64, |m, v| m.max(*v));
    if q.iter().any(|&v| v < -1e-12 * qmax) {
        return Err(Error::Solve("Newton converged to a sign-changing state".into()));
    }
    let w = grid.inner(&q, &pair.phi0);
    let mut gs = GroundState {
        e,
        lambda,
        q,
        r: vec![],
        w,
        residual: res,
        grid: grid.clone(),
        potential: *potential,
    };
    let lp = gs.lplus_or_matrix();
    gs.r = grid.from_euclid(&lp.solve(&grid.to_euclid(&gs.q))?);
    Ok(gs)
}

/// Finds `E` with `||Q_E||^2 = mass` by the secant method on `E`.
pub fn energy_for_mass(
    mass: f64,
    lambda: f64,
    pair: &BoundStatePair,
    grid: &RadialGrid,
    potential: &PotentialSpec,
) -> Result<GroundState> {
    if !(mass > 0.0) {
        return Err(Error::Domain(format!("target mass must be positive, got {mass}")));
    }
    let phi4: Vec<f64> = pair.phi0.iter().map(|p| p * p * p).collect();
    let i4 = grid.inner(&phi4, &pair.phi0);
    // leading order: mass ~ w^2 = E'/(lambda i4)
    let mut e_a = pair.e0 + lambda * i4 * mass;
    let mut gs_a = solve_ground_state(e_a, lambda, pair, grid, potential)?;
    let mut f_a = gs_a.mass() - mass;
    let mut e_b = pair.e0 + lambda * i4 * mass * 1.05;
    let mut gs_b = solve_from_guess(e_b, lambda, pair, grid, potential, gs_a.q.clone())?;
    let mut f_b = gs_b.mass() - mass;
    for _ in 0..60 {
        if f_b.abs() <= 1e-9 * mass || (e_b - e_a).abs() <= 1e-14 * e_b.abs() {
            if f_b.abs() <= 1e-8 * mass {
                return Ok(gs_b);
            }
            break;
        }
        let slope = (f_b - f_a) / (e_b - e_a);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let mut e_c = e_b - f_b / slope;
        if (e_c - pair.e0) / lambda <= 0.0 {
            e_c = pair.e0 + 0.5 * (e_b - pair.e0);
        }
        let gs_c = solve_from_guess(e_c, lambda, pair, grid, potential, gs_b.q.clone())?;
        e_a = e_b;
        f_a = f_b;
        gs_a = gs_b;
        e_b = e_c;
        f_b = gs_c.mass() - mass;
        gs_b = gs_c;
    }
    let _ = gs_a;
    Err(Error::Convergence {
        message: format!("no E found with mass {mass}"),
        diagnostics: vec![(e_a, f_a), (e_b, f_b)],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundStateBranch {
    pub lambda: f64,
    pub samples: Vec<GroundState>,
    /// `(E, reason)` for samples that failed or fell outside the mass window.
    pub dropped: Vec<(f64, String)>,
}

pub const MASS_WINDOW: (f64, f64) = (1.0, 10.0);

/// Solves at every `E` in `e_list`, keeping samples with mass in `[1, 10]`.
pub fn branch_sweep(
    lambda: f64,
    e_list: &[f64],
    pair: &BoundStatePair,
    grid: &RadialGrid,
    potential: &PotentialSpec,
) -> Result<GroundStateBranch> {
    let mut es = e_list.to_vec();
    es.sort_by(f64::total_cmp);
    es.dedup();
    let results: Vec<(f64, Result<GroundState>)> = es
        .par_iter()
        .map(|&e| (e, solve_ground_state(e, lambda, pair, grid, potential)))
        .collect();
    let mut samples = vec![];
    let mut dropped = vec![];
    for (e, r) in results {
        match r {
            Ok(gs) => {
                let m = gs.mass();
                if (MASS_WINDOW.0..=MASS_WINDOW.1).contains(&m) {
                    samples.push(gs);
                } else {
                    dropped.push((e, format!("mass {m:.4} outside window")));
                }
            }
            Err(err) => dropped.push((e, err.to_string())),
        }
    }
    if samples.is_empty() {
        return Err(Error::Branch(format!("no admissible samples among {} energies", es.len())));
    }
    Ok(GroundStateBranch { lambda, samples, dropped })
}
