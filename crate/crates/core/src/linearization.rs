//! Linearization about a ground state.
//!
//! Operators are realized on `X = Q^perp` through an explicit orthonormal
//! basis (a Householder reflector in the Euclidean representation), so every
//! operator on `X` is a dense symmetric `(n-1) x (n-1)` matrix.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::grid_spectral::RadialGrid;
use crate::linalg::{dot, mat_vec, Householder, SymEigen};

const CLIP: f64 = 1e-12;

pub struct LinearizedSystem {
    pub grid: RadialGrid,
    pub e: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub u_minus: Vec<f64>,
    house: Householder,
    h_x: Mat<f64>,
    lp_x: Mat<f64>,
    /// Eigendecomposition of `L_-` on `X`; gives `B` and `B^{-1}`.
    lminus_eig: SymEigen,
    /// Eigendecomposition of `B L_+ B = A^2` on `X`.
    a2_eig: SymEigen,
    /// Eigenvalues of `A` (square roots of those of `A^2`), ascending.
    pub a_values: Vec<f64>,
    /// Unit eigenvector of `A` at `kappa`, in `X` coordinates.
    pub w_vec: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizationDiagnostics {
    pub kappa: f64,
    pub e01: Option<f64>,
    pub continuum_edge: f64,
    pub gap_2kappa_into_continuum: f64,
    pub norm_u_plus: f64,
    pub norm_u_minus: f64,
    pub min_eigenvalue_a2: f64,
}

/// PSD square root by eigendecomposition; eigenvalues above `-1e-6` are clipped to zero.
pub fn matrix_sqrt_psd(m: &Mat<f64>) -> Result<Mat<f64>> {
    let eig = SymEigen::new(m);
    let min = eig.values.first().copied().unwrap_or(0.0);
    let scale = eig.values.last().copied().unwrap_or(1.0).abs().max(1.0);
    if min < -1e-6 * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(eig.function_matrix(|x| x.max(0.0).sqrt()))
}

fn diag_dense(d: &[f64]) -> Mat<f64> {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 })
}

impl LinearizedSystem {
    pub fn build(gs: &GroundState) -> Result<Self> {
        Self::build_with_coupling(gs, gs.lambda)
    }

    /// Builds with the `2 lambda Pi Q^2 Pi` coupling term using `coupling`
    /// instead of `gs.lambda`. With `coupling = 0`, `L_+ = L_-`.
    pub fn build_with_coupling(gs: &GroundState, coupling: f64) -> Result<Self> {
        let grid = gs.grid.clone();
        let xq = grid.to_euclid(&gs.q);
        let house = Householder::new(&xq);
        let h = gs.h_matrix().to_dense();
        let h_x = house.compress(&h);
        let q2: Vec<f64> = gs.q.iter().map(|x| 2.0 * coupling * x * x).collect();
        let extra = house.compress(&diag_dense(&q2));
        let lp_x = &h_x + &extra;

        let lminus_eig = SymEigen::new(&h_x);
        let sqrt_mu: Vec<f64> = lminus_eig.values.iter().map(|&m| m.max(CLIP).sqrt()).collect();
        let b = {
            let n = sqrt_mu.len();
            let vs = Mat::from_fn(n, n, |i, j| lminus_eig.vectors.read(i, j) * sqrt_mu[j]);
            &vs * lminus_eig.vectors.transpose()
        };
        let m = &(&b * &lp_x) * &b;
        let m = Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m.read(i, j) + m.read(j, i)));
        let a2_eig = SymEigen::new(&m);
        let nu0 = a2_eig.values[0];
        let top = a2_eig.values.last().copied().unwrap_or(1.0).abs().max(1.0);
        if nu0 < -1e-10 * top {
            return Err(Error::NotPsd { min_eigenvalue: nu0 });
        }
        let kappa = nu0.max(0.0).sqrt();
        let edge = -gs.e;
        if !(kappa > 0.0 && kappa < edge) {
            return Err(Error::Spectral(format!(
                "kappa = {kappa:.6} is not an isolated eigenvalue below the continuum edge {edge:.6}"
            )));
        }
        let nu1 = a2_eig.values[1];
        if (nu1 - nu0).abs() <= 1e-8 * top {
            return Err(Error::Spectral("kappa^2 is not simple".into()));
        }
        let a_values: Vec<f64> = a2_eig.values.iter().map(|&x| x.max(0.0).sqrt()).collect();
        let w_vec = a2_eig.vector(0);

        let mut sys = Self {
            grid,
            e: gs.e,
            lambda: gs.lambda,
            kappa,
            q: gs.q.clone(),
            u: vec![],
            v: vec![],
            u_plus: vec![],
            u_minus: vec![],
            house,
            h_x,
            lp_x,
            lminus_eig,
            a2_eig,
            a_values,
            w_vec,
        };
        let bw = sys.apply_b(&sys.w_vec);
        let binv_w = sys.apply_b_inv(&sys.w_vec);
        let mut u = sys.grid_of(&bw);
        let mut v = sys.grid_of(&binv_w);
        let su = kappa.powf(-0.5);
        let sv = kappa.sqrt();
        u.iter_mut().for_each(|x| *x *= su);
        v.iter_mut().for_each(|x| *x *= sv);
        if u[0] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
            sys.w_vec.iter_mut().for_each(|x| *x = -*x);
        }
        sys.u_plus = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        sys.u_minus = u.iter().zip(&v).map(|(a, b)| 0.5 * (a - b)).collect();
        sys.u = u;
        sys.v = v;
        Ok(sys)
    }

    pub fn dim_x(&self) -> usize {
        self.grid.n - 1
    }

    /// `X` coordinates of `Pi f`.
    pub fn x_of(&self, f: &[f64]) -> Vec<f64> {
        self.house.to_complement(&self.grid.to_euclid(f))
    }

    /// Grid function for `X` coordinates `y`.
    pub fn grid_of(&self, y: &[f64]) -> Vec<f64> {
        self.grid.from_euclid(&self.house.from_complement(y))
    }

    /// `Pi f = f - (c0 Q, f) Q`
    pub fn pi(&self, f: &[f64]) -> Vec<f64> {
        let c = self.grid.inner(&self.q, f) / self.grid.inner(&self.q, &self.q);
        f.iter().zip(&self.q).map(|(a, b)| a - c * b).collect()
    }

    pub fn apply_b(&self, y: &[f64]) -> Vec<f64> {
        self.lminus_eig.apply_fn(y, |m| m.max(CLIP).sqrt())
    }

    pub fn apply_b_inv(&self, y: &[f64]) -> Vec<f64> {
        self.lminus_eig.apply_fn(y, |m| 1.0 / m.max(CLIP).sqrt())
    }

    /// `A^p` on `X` coordinates.
    pub fn apply_a_pow(&self, y: &[f64], p: f64) -> Vec<f64> {
        self.a2_eig.apply_fn(y, |nu| nu.max(0.0).powf(0.5 * p))
    }

    /// `L_+` on grid functions (acting on `Pi f`).
    pub fn apply_lplus(&self, f: &[f64]) -> Vec<f64> {
        self.grid_of(&mat_vec(&self.lp_x, &self.x_of(f)))
    }

    /// `L_- = H` on grid functions (acting on `Pi f`).
    pub fn apply_lminus(&self, f: &[f64]) -> Vec<f64> {
        self.grid_of(&mat_vec(&self.h_x, &self.x_of(f)))
    }

    /// `L (f + ig) = L_- g - i L_+ f`
    pub fn apply_l(&self, h: &[Complex64]) -> Vec<Complex64> {
        let (f, g) = split(h);
        join(&self.apply_lminus(&g), &self.apply_lplus(&f).iter().map(|x| -x).collect::<Vec<_>>())
    }

    /// `U(f + ig) = A^{1/2} B^{-1} f + i A^{-1/2} B g`, output in `X` coordinates.
    pub fn u_forward(&self, h: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let (f, g) = split(h);
        let fx = self.x_of(&f);
        let gx = self.x_of(&g);
        (self.apply_a_pow(&self.apply_b_inv(&fx), 0.5), self.apply_a_pow(&self.apply_b(&gx), -0.5))
    }

    /// `U^{-1}(F + iG) = B A^{-1/2} F + i B^{-1} A^{1/2} G`, from `X` coordinates.
    pub fn u_inverse(&self, fx: &[f64], gx: &[f64]) -> Vec<Complex64> {
        let f = self.grid_of(&self.apply_b(&self.apply_a_pow(fx, -0.5)));
        let g = self.grid_of(&self.apply_b_inv(&self.apply_a_pow(gx, 0.5)));
        join(&f, &g)
    }

    /// `P_c` of `L`: `Re f perp v`, `Im f perp u` (after removing the `Q` direction).
    pub fn project_continuum(&self, h: &[Complex64], remove_q: bool) -> Vec<Complex64> {
        let (mut f, mut g) = split(h);
        if remove_q {
            f = self.pi(&f);
            g = self.pi(&g);
        }
        let a = self.grid.inner(&self.v, &f);
        let b = self.grid.inner(&self.u, &g);
        crate::linalg::axpy(-a, &self.u, &mut f);
        crate::linalg::axpy(-b, &self.v, &mut g);
        join(&f, &g)
    }

    /// `P_c^A` on `X` coordinates: removes the `w` component.
    pub fn project_continuum_a(&self, y: &[f64]) -> Vec<f64> {
        let c = dot(&self.w_vec, y);
        y.iter().zip(&self.w_vec).map(|(a, b)| a - c * b).collect()
    }

    /// Spectral measure of `A` for `P_c^A Pi phi`: eigenvalues and squared weights.
    pub fn spectral_measure(&self, phi: &[f64]) -> crate::fgr::SpectralMeasure {
        let y = self.project_continuum_a(&self.x_of(phi));
        let mut c = self.a2_eig.coefficients(&y);
        c[0] = 0.0;
        crate::fgr::SpectralMeasure::new(self.a_values.clone(), c)
    }

    /// Grid function `W c` (real part of a spectral synthesis).
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        self.grid_of(&self.a2_eig.synthesize(coeffs))
    }

    pub fn continuum_edge(&self) -> f64 {
        -self.e
    }

    pub fn diagnostics(&self, e01: Option<f64>) -> LinearizationDiagnostics {
        LinearizationDiagnostics {
            kappa: self.kappa,
            e01,
            continuum_edge: self.continuum_edge(),
            gap_2kappa_into_continuum: 2.0 * self.kappa - self.continuum_edge(),
            norm_u_plus: self.grid.norm(&self.u_plus),
            norm_u_minus: self.grid.norm(&self.u_minus),
            min_eigenvalue_a2: self.a2_eig.values[0],
        }
    }

    /// Relative residuals `(L_+ u - kappa v, L_- v - kappa u)`.
    pub fn eigen_residuals(&self) -> (f64, f64) {
        let lpu = self.apply_lplus(&self.u);
        let lmv = self.apply_lminus(&self.v);
        let r1: Vec<f64> = lpu.iter().zip(&self.v).map(|(a, b)| a - self.kappa * b).collect();
        let r2: Vec<f64> = lmv.iter().zip(&self.u).map(|(a, b)| a - self.kappa * b).collect();
        (
            self.grid.norm(&r1) / (self.kappa * self.grid.norm(&self.v)),
            self.grid.norm(&r2) / (self.kappa * self.grid.norm(&self.u)),
        )
    }

    /// `|| A w - kappa w ||`
    pub fn a_eigen_residual(&self) -> f64 {
        let aw = self.apply_a_pow(&self.w_vec, 1.0);
        aw.iter().zip(&self.w_vec).map(|(a, b)| (a - self.kappa * b).powi(2)).sum::<f64>().sqrt()
    }

    /// Restrictions of `u, v, u_+, u_-, Q` to another grid with the same spacing,
    /// zero-extended beyond this grid.
    pub fn extend_to(&self, target: &RadialGrid) -> Result<ExtendedModes> {
        if (target.dr - self.grid.dr).abs() > 1e-12 * self.grid.dr || target.n < self.grid.n {
            return Err(Error::Config(format!(
                "cannot extend modes from grid (n={}, dr={}) to (n={}, dr={})",
                self.grid.n, self.grid.dr, target.n, target.dr
            )));
        }
        let ext = |f: &[f64]| {
            let mut out = f.to_vec();
            out.resize(target.n, 0.0);
            out
        };
        Ok(ExtendedModes {
            kappa: self.kappa,
            u: ext(&self.u),
            v: ext(&self.v),
            u_plus: ext(&self.u_plus),
            u_minus: ext(&self.u_minus),
        })
    }

    pub fn modes(&self) -> ExtendedModes {
        ExtendedModes {
            kappa: self.kappa,
            u: self.u.clone(),
            v: self.v.clone(),
            u_plus: self.u_plus.clone(),
            u_minus: self.u_minus.clone(),
        }
    }
}

/// The discrete mode data the frame decomposition needs, on some grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtendedModes {
    pub kappa: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub u_minus: Vec<f64>,
}

pub fn split(h: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (h.iter().map(|c| c.re).collect(), h.iter().map(|c| c.im).collect())
}

pub fn join(f: &[f64], g: &[f64]) -> Vec<Complex64> {
    f.iter().zip(g).map(|(a, b)| Complex64::new(*a, *b)).collect()
}
