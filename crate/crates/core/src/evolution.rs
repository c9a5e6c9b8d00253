//! Strang-split time stepping of `i psi_t = (-Delta + V) psi + lambda |psi|^2 psi`
//! on the radial grid.
//!
//! The kinetic sub-flow is exact for the finite-difference Laplacian: the
//! reduced wave `r psi` is diagonalized by the type-I sine transform, whose
//! eigenvalues are `(2 - 2 cos(pi k/(n+1)))/dr^2`.

use std::sync::Arc;

use num_complex::Complex64;
use rustdct::{DctPlanner, Dst1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_spectral::{PotentialSpec, RadialGrid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapSpec {
    pub start_radius: f64,
    pub strength: f64,
    pub power: f64,
}

impl CapSpec {
    pub fn validate(&self, r_max: f64) -> Result<()> {
        if !(self.start_radius < r_max && self.start_radius >= 0.0) {
            return Err(Error::Config(format!(
                "cap.start_radius = {} must lie in [0, r_max = {r_max})",
                self.start_radius
            )));
        }
        if !(self.strength >= 0.0) || !(self.power > 0.0) {
            return Err(Error::Config("cap.strength must be >= 0 and cap.power > 0".into()));
        }
        Ok(())
    }

    pub fn eval(&self, r: f64, r_max: f64) -> f64 {
        if r <= self.start_radius {
            0.0
        } else {
            self.strength * ((r - self.start_radius) / (r_max - self.start_radius)).powf(self.power)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    /// Field in the rotating gauge: `psi_phys = psi e^{-i gauge t}`.
    pub psi: Vec<Complex64>,
    pub gauge: f64,
}

impl FieldState {
    pub fn new(psi: Vec<Complex64>, gauge: f64) -> Self {
        Self { t: 0.0, psi, gauge }
    }

    pub fn physical(&self) -> Vec<Complex64> {
        let ph = Complex64::from_polar(1.0, -self.gauge * self.t);
        self.psi.iter().map(|z| z * ph).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Physics {
    pub grid: RadialGrid,
    pub potential: PotentialSpec,
    pub lambda: f64,
    pub cap: Option<CapSpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Conserved {
    pub mass: f64,
    pub energy: f64,
}

// The FFT-backed DST-I reads padding entries of the scratch buffer without
// clearing them, so the scratch must start zeroed on every call.
fn dst1(dst: &dyn Dst1<f64>, buf: &mut [f64], scratch: &mut [f64]) {
    scratch.iter_mut().for_each(|x| *x = 0.0);
    dst.process_dst1_with_scratch(buf, scratch);
}

pub struct Stepper {
    physics: Physics,
    dt: f64,
    gauge: f64,
    v: Vec<f64>,
    /// `e^{-W dt/2}`
    damp_half: Option<Vec<f64>>,
    kinetic: Vec<Complex64>,
    dst: Arc<dyn Dst1<f64>>,
    re: Vec<f64>,
    im: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(physics: Physics, dt: f64, gauge: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let grid = &physics.grid;
        let n = grid.n;
        let v = grid.potential_values(&physics.potential);
        let damp_half = match &physics.cap {
            Some(cap) => {
                cap.validate(grid.r_max)?;
                Some(grid.nodes().iter().map(|&r| (-0.5 * dt * cap.eval(r, grid.r_max)).exp()).collect())
            }
            None => None,
        };
        let h2 = grid.dr * grid.dr;
        let kinetic = (1..=n)
            .map(|k| {
                let ev = (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos()) / h2;
                Complex64::from_polar(1.0, -ev * dt)
            })
            .collect();
        let dst = DctPlanner::new().plan_dst1(n);
        let scratch = vec![0.0; dst.get_scratch_len()];
        Ok(Self { physics, dt, gauge, v, damp_half, kinetic, dst, re: vec![0.0; n], im: vec![0.0; n], scratch })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    /// Accuracy bound `dt <= 0.1 / max |V - gauge + lambda |psi|^2|`.
    pub fn check_dt(&self, psi: &[Complex64]) -> Result<()> {
        let m = self
            .v
            .iter()
            .zip(psi)
            .map(|(v, z)| (v - self.gauge + self.physics.lambda * z.norm_sqr()).abs())
            .fold(0.0f64, f64::max);
        if self.dt * m > 0.1 {
            return Err(Error::Config(format!(
                "dt = {} exceeds the accuracy bound 0.1/{m:.3} = {:.3e}",
                self.dt,
                0.1 / m
            )));
        }
        Ok(())
    }

    fn half_potential(&self, psi: &mut [Complex64]) {
        let lam = self.physics.lambda;
        let hdt = 0.5 * self.dt;
        for (j, z) in psi.iter_mut().enumerate() {
            let phase = (self.v[j] - self.gauge + lam * z.norm_sqr()) * hdt;
            *z *= Complex64::from_polar(1.0, -phase);
            if let Some(d) = &self.damp_half {
                *z *= d[j];
            }
        }
    }

    fn kinetic_step(&mut self, psi: &mut [Complex64]) {
        let nodes = self.physics.grid.nodes();
        let n = psi.len();
        for j in 0..n {
            self.re[j] = psi[j].re * nodes[j];
            self.im[j] = psi[j].im * nodes[j];
        }
        dst1(self.dst.as_ref(), &mut self.re, &mut self.scratch);
        dst1(self.dst.as_ref(), &mut self.im, &mut self.scratch);
        for k in 0..n {
            let z = Complex64::new(self.re[k], self.im[k]) * self.kinetic[k];
            self.re[k] = z.re;
            self.im[k] = z.im;
        }
        dst1(self.dst.as_ref(), &mut self.re, &mut self.scratch);
        dst1(self.dst.as_ref(), &mut self.im, &mut self.scratch);
        let scale = 2.0 / (n + 1) as f64;
        for j in 0..n {
            psi[j] = Complex64::new(self.re[j], self.im[j]) * (scale / nodes[j]);
        }
    }

    /// One Strang step, in place.
    pub fn step(&mut self, state: &mut FieldState) -> Result<()> {
        let mut psi = std::mem::take(&mut state.psi);
        self.half_potential(&mut psi);
        self.kinetic_step(&mut psi);
        self.half_potential(&mut psi);
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Integration { t: state.t, message: "non-finite field value".into() });
        }
        state.psi = psi;
        state.t += self.dt;
        Ok(())
    }

    /// Advances to `state.t + duration`, calling `observe` every `stride` steps
    /// (and at the start). The observer may stop the run by returning `false`.
    /// On failure `state` is rolled back to the last observed sample.
    pub fn evolve<F>(&mut self, state: &mut FieldState, duration: f64, stride: usize, mut observe: F) -> Result<()>
    where
        F: FnMut(&FieldState) -> Result<bool>,
    {
        let steps = (duration / self.dt).round() as usize;
        let stride = stride.max(1);
        if !observe(state)? {
            return Ok(());
        }
        let mut good = state.clone();
        for k in 1..=steps {
            if let Err(e) = self.step(state) {
                *state = good;
                return Err(e);
            }
            if k % stride == 0 {
                if !observe(state)? {
                    break;
                }
                good.t = state.t;
                good.psi.copy_from_slice(&state.psi);
            }
        }
        Ok(())
    }
}

/// Mass `(psi, psi)` and energy `1/2 (psi, -Delta psi) + 1/2 (psi, V psi) + 1/4 lambda int |psi|^4`.
pub fn conserved_quantities(psi: &[Complex64], grid: &RadialGrid, potential: &PotentialSpec, lambda: f64) -> Conserved {
    let n = grid.n;
    let mass = grid.norm_c(psi).powi(2);
    let h2 = grid.dr * grid.dr;
    // Euclidean representation x_j = sqrt(4 pi dr) r_j psi_j
    let x: Vec<Complex64> = (0..n).map(|j| psi[j] * grid.euclid_factor(j)).collect();
    let mut kin = 0.0;
    for j in 0..n {
        let mut lx = x[j] * 2.0;
        if j > 0 {
            lx -= x[j - 1];
        }
        if j + 1 < n {
            lx -= x[j + 1];
        }
        kin += (x[j].conj() * lx).re / h2;
    }
    let nodes = grid.nodes();
    let mut pot = 0.0;
    let mut quart = 0.0;
    for j in 0..n {
        let w = grid.weight(j);
        let a2 = psi[j].norm_sqr();
        pot += w * potential.eval(nodes[j]) * a2;
        quart += w * a2 * a2;
    }
    Conserved { mass, energy: 0.5 * kin + 0.5 * pot + 0.25 * lambda * quart }
}
