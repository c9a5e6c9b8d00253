//! Radial (s-wave) discretization of R^3 and the linear bound-state problem.
//!
//! Grid functions store the radial profile `f(r_j)`. The Laplacian acts on the
//! reduced wave `U = r f` as `U''` with Dirichlet conditions at `0` and `r_max`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialShape {
    GaussianWell,
    SquareWell,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    pub depth: f64,
    pub width: f64,
}

impl PotentialSpec {
    pub fn gaussian(depth: f64, width: f64) -> Self {
        Self { shape: PotentialShape::GaussianWell, depth, width }
    }

    pub fn square(depth: f64, width: f64) -> Self {
        Self { shape: PotentialShape::SquareWell, depth, width }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(Error::Config(format!("potential.depth must be positive, got {}", self.depth)));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::Config(format!("potential.width must be positive, got {}", self.width)));
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.shape {
            PotentialShape::GaussianWell => {
                -self.depth * (-r * r / (2.0 * self.width * self.width)).exp()
            }
            PotentialShape::SquareWell => {
                if r < self.width {
                    -self.depth
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::gaussian(18.0, 1.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct RadialGrid {
    pub r_max: f64,
    pub n: usize,
    pub dr: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
}

#[derive(Deserialize)]
struct GridRepr {
    r_max: f64,
    n: usize,
    #[allow(dead_code)]
    dr: Option<f64>,
}

impl TryFrom<GridRepr> for RadialGrid {
    type Error = Error;

    fn try_from(g: GridRepr) -> Result<Self> {
        RadialGrid::new(g.r_max, g.n)
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.dr == other.dr
    }
}

pub fn build_grid(r_max: f64, n: usize) -> Result<RadialGrid> {
    RadialGrid::new(r_max, n)
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::Config(format!("grid.r_max must be positive, got {r_max}")));
        }
        if n < 16 {
            return Err(Error::Config(format!("grid.n must be at least 16, got {n}")));
        }
        let dr = r_max / (n + 1) as f64;
        let nodes = (1..=n).map(|j| j as f64 * dr).collect();
        Ok(Self { r_max, n, dr, nodes })
    }

    /// Grid with spacing `dr` as close as possible to the requested one.
    pub fn with_spacing(r_max: f64, dr: f64) -> Result<Self> {
        let n = (r_max / dr).round() as usize;
        Self::new(r_max, n.max(17) - 1)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quadrature weight `4 pi r_j^2 dr`.
    pub fn weight(&self, j: usize) -> f64 {
        4.0 * PI * self.nodes[j] * self.nodes[j] * self.dr
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.weight(j)).collect()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let s: f64 = self.nodes.iter().zip(f.iter().zip(g)).map(|(r, (a, b))| r * r * a * b).sum();
        4.0 * PI * self.dr * s
    }

    /// `(f, g) = 4 pi sum conj(f) g r^2 dr`
    pub fn inner_c(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        let s: Complex64 = self
            .nodes
            .iter()
            .zip(f.iter().zip(g))
            .map(|(r, (a, b))| a.conj() * b * (r * r))
            .sum();
        s * (4.0 * PI * self.dr)
    }

    /// Real part of the complex inner product, i.e. the real L^2 pairing of
    /// `(Re f, Im f)` with `(Re g, Im g)`.
    pub fn inner_re(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        self.inner_c(f, g).re
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub fn norm_c(&self, f: &[Complex64]) -> f64 {
        self.inner_c(f, f).re.sqrt()
    }

    /// `(int |f|^p)^{1/p}` under the radial measure.
    pub fn lp_norm_c(&self, f: &[Complex64], p: f64) -> f64 {
        let s: f64 = (0..self.n).map(|j| self.weight(j) * f[j].norm().powf(p)).sum();
        s.powf(1.0 / p)
    }

    /// `|| <x>^{-beta} f ||_2`
    pub fn l2_loc_c(&self, f: &[Complex64], beta: f64) -> f64 {
        let s: f64 = (0..self.n)
            .map(|j| {
                let r = self.nodes[j];
                self.weight(j) * f[j].norm_sqr() * (1.0 + r * r).powf(-beta)
            })
            .sum();
        s.sqrt()
    }

    /// Radial Laplacian `(1/r) (r f)''` with Dirichlet ends.
    pub fn apply_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h2 = self.dr * self.dr;
        let u = |j: isize| -> f64 {
            if j < 0 || j >= n as isize {
                0.0
            } else {
                self.nodes[j as usize] * f[j as usize]
            }
        };
        (0..n)
            .map(|j| {
                let ji = j as isize;
                (u(ji - 1) - 2.0 * u(ji) + u(ji + 1)) / h2 / self.nodes[j]
            })
            .collect()
    }

    /// Scale factor between a grid function and its Euclidean representation.
    pub fn euclid_factor(&self, j: usize) -> f64 {
        (4.0 * PI * self.dr).sqrt() * self.nodes[j]
    }

    /// Map `f` to `x` with `x . y = (f, g)`; `-Delta` becomes symmetric tridiagonal.
    pub fn to_euclid(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| self.euclid_factor(j) * f[j]).collect()
    }

    pub fn from_euclid(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| x[j] / self.euclid_factor(j)).collect()
    }

    pub fn potential_values(&self, v: &PotentialSpec) -> Vec<f64> {
        self.nodes.iter().map(|&r| v.eval(r)).collect()
    }

    /// `-Delta + diag(extra)` in the Euclidean representation.
    pub fn schrodinger_matrix(&self, extra: &[f64]) -> SymTridiagonal {
        let h2 = self.dr * self.dr;
        let diag = extra.iter().map(|x| 2.0 / h2 + x).collect();
        let off = vec![-1.0 / h2; self.n - 1];
        SymTridiagonal::new(diag, off)
    }

    /// Same radius, `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.r_max, (self.n + 1) * factor - 1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundStatePair {
    pub e0: f64,
    pub e1: f64,
    pub e01: f64,
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    /// Number of negative eigenvalues of the discretized `-Delta + V`.
    pub n_bound: usize,
}

fn count_sign_changes(f: &[f64]) -> usize {
    let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sig: Vec<f64> = f.iter().copied().filter(|x| x.abs() > 1e-8 * scale).collect();
    sig.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

impl BoundStatePair {
    pub fn nodes_phi0(&self) -> usize {
        count_sign_changes(&self.phi0)
    }

    pub fn nodes_phi1(&self) -> usize {
        count_sign_changes(&self.phi1)
    }
}

/// The two lowest s-wave eigenpairs of `-Delta + V`.
pub fn bound_states(v: &PotentialSpec, grid: &RadialGrid) -> Result<BoundStatePair> {
    v.validate()?;
    let h = grid.schrodinger_matrix(&grid.potential_values(v));
    let n_bound = h.count_below(0.0);
    if n_bound < 2 {
        return Err(Error::Spectrum(format!(
            "potential too shallow: {n_bound} bound s-state(s), need two"
        )));
    }
    let eig = |k: usize| -> Result<(f64, Vec<f64>)> {
        let e = h.eigenvalue(k);
        let x = h.eigenvector(e)?;
        let mut phi = grid.from_euclid(&x);
        if phi[0] < 0.0 {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        Ok((e, phi))
    };
    let (e0, phi0) = eig(0)?;
    let (e1, mut phi1) = eig(1)?;
    // enforce exact orthogonality against rounding in the inverse iteration
    let c = grid.inner(&phi0, &phi1);
    crate::linalg::axpy(-c, &phi0, &mut phi1);
    let n1 = grid.norm(&phi1);
    phi1.iter_mut().for_each(|p| *p /= n1);
    if n_bound > 2 {
        log::info!("{n_bound} bound s-states present; using the lowest two");
    }
    Ok(BoundStatePair { e0, e1, e01: e1 - e0, phi0, phi1, n_bound })
}

/// True iff `2 e01 > |e0|`, i.e. twice the gap reaches the continuum.
pub fn check_resonance_condition(pair: &BoundStatePair) -> bool {
    2.0 * pair.e01 > pair.e0.abs()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub e0: f64,
    pub e1: f64,
    pub e01: f64,
    pub resonance_ok: bool,
}

impl From<&BoundStatePair> for SpectrumReport {
    fn from(p: &BoundStatePair) -> Self {
        Self { e0: p.e0, e1: p.e1, e01: p.e01, resonance_ok: check_resonance_condition(p) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(40.0, 2000).unwrap();
        assert!((g.dr - 40.0 / 2001.0).abs() < 1e-15);
        assert!(*g.nodes().last().unwrap() < 40.0);
        let g = build_grid(1.0, 16).unwrap();
        assert!((g.dr - 1.0 / 17.0).abs() < 1e-15);
        assert!(build_grid(1.0, 15).is_err());
        assert!(build_grid(-1.0, 100).is_err());
    }

    #[test]
    fn laplacian_of_dirichlet_mode() {
        let rm = 10.0;
        let g = build_grid(rm, 999).unwrap();
        let k = PI / rm;
        let f: Vec<f64> = g.nodes().iter().map(|r| (k * r).sin() / r).collect();
        let lf = g.apply_laplacian(&f);
        let err = f
            .iter()
            .zip(&lf)
            .map(|(a, b)| (b + k * k * a).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5 * k * k);
    }

    #[test]
    fn resonance_condition_arithmetic() {
        let mk = |e0: f64, e1: f64| BoundStatePair {
            e0,
            e1,
            e01: e1 - e0,
            phi0: vec![],
            phi1: vec![],
            n_bound: 2,
        };
        assert!(check_resonance_condition(&mk(-1.0, -0.4)));
        assert!(!check_resonance_condition(&mk(-1.0, -0.6)));
    }

    #[test]
    fn shallow_well_is_rejected() {
        let g = build_grid(30.0, 600).unwrap();
        let err = bound_states(&PotentialSpec::gaussian(2.0, 1.0), &g).unwrap_err();
        assert!(matches!(err, Error::Spectrum(_)));
    }
}
