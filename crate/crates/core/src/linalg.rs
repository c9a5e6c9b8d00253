//! Small dense and tridiagonal linear-algebra kernels.
//!
//! Everything here works in the Euclidean representation of grid functions
//! (see [`crate::grid_spectral::RadialGrid::to_euclid`]), where the radial
//! inner product is the plain dot product and the Laplacian is a symmetric
//! tridiagonal matrix.

use faer::{Col, Mat, Side};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Returns a copy with `shift` added to every diagonal entry.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d + shift).collect(),
            off: self.off.clone(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.len();
        let mut m = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            m.write(i, i, self.diag[i]);
            if i + 1 < n {
                m.write(i, i + 1, self.off[i]);
                m.write(i + 1, i, self.off[i]);
            }
        }
        m
    }

    /// Solves `T x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.off, &self.diag, &self.off, b)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            if q.abs() < tiny {
                q = -tiny;
            }
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an (accurate) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, eigenvalue: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let scale = self.gershgorin().1.abs().max(1.0);
        let shifted = self.shifted(-(eigenvalue + 1e-13 * scale));
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64).collect();
        for _ in 0..4 {
            let mut y = shifted.solve(&x)?;
            let nrm = norm(&y);
            if !nrm.is_finite() || nrm == 0.0 {
                return Err(Error::Spectrum("inverse iteration broke down".into()));
            }
            y.iter_mut().for_each(|v| *v /= nrm);
            x = y;
        }
        Ok(x)
    }
}

/// General tridiagonal solve (`sub`, `diag`, `sup`) with partial pivoting.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    let singular = || Error::Solve("singular tridiagonal system".into());

    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(singular());
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i + 1];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 {
        return Err(singular());
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(b)
}

/// Dense symmetric eigendecomposition `M = V diag(values) V^T`, ascending.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl SymEigen {
    pub fn new(m: &Mat<f64>) -> Self {
        let evd = m.selfadjoint_eigendecomposition(Side::Lower);
        let s = evd.s().column_vector();
        let n = m.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s.read(a).total_cmp(&s.read(b)));
        let u = evd.u();
        let values = order.iter().map(|&k| s.read(k)).collect();
        let vectors = Mat::from_fn(n, n, |i, j| u.read(i, order[j]));
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.vectors.read(i, k)).collect()
    }

    /// Expansion coefficients `V^T y`.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let col = Col::from_fn(y.len(), |i| y[i]);
        let c = self.vectors.transpose() * &col;
        (0..c.nrows()).map(|i| c.read(i)).collect()
    }

    /// `V c`
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let col = Col::from_fn(c.len(), |i| c[i]);
        let y = &self.vectors * &col;
        (0..y.nrows()).map(|i| y.read(i)).collect()
    }

    /// `f(M) y`
    pub fn apply_fn(&self, y: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.coefficients(y);
        for (ck, &lam) in c.iter_mut().zip(&self.values) {
            *ck *= f(lam);
        }
        self.synthesize(&c)
    }

    /// Dense `f(M)`.
    pub fn function_matrix(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let n = self.dim();
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors.read(i, j) * fv[j]);
        &scaled * self.vectors.transpose()
    }
}

pub fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let col = Col::from_fn(x.len(), |i| x[i]);
    let y = m * &col;
    (0..y.nrows()).map(|i| y.read(i)).collect()
}

/// Householder reflector `P = I - beta v v^T` sending a unit vector `q` onto
/// a multiple of `e_0`. Columns `1..n` of `P` are an orthonormal basis of
/// the complement of `q`.
#[derive(Clone, Debug)]
pub struct Householder {
    v: Vec<f64>,
    beta: f64,
}

impl Householder {
    pub fn new(q: &[f64]) -> Self {
        let nrm = norm(q);
        assert!(nrm > 0.0, "Householder of zero vector");
        let mut v: Vec<f64> = q.iter().map(|x| x / nrm).collect();
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign;
        let vv = dot(&v, &v);
        Self { v, beta: 2.0 / vv }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.beta * dot(&self.v, x);
        x.iter().zip(&self.v).map(|(xi, vi)| xi - s * vi).collect()
    }

    /// Coordinates of `x` in the complement basis (drops the `q` component).
    pub fn to_complement(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)[1..].to_vec()
    }

    pub fn from_complement(&self, y: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(y.len() + 1);
        full.push(0.0);
        full.extend_from_slice(y);
        self.apply(&full)
    }

    /// The block `(P M P)[1.., 1..]` for symmetric `M`.
    pub fn compress(&self, m: &Mat<f64>) -> Mat<f64> {
        let n = self.dim();
        let p = mat_vec(m, &self.v);
        let vp = dot(&self.v, &p);
        let w: Vec<f64> = p
            .iter()
            .zip(&self.v)
            .map(|(pi, vi)| self.beta * pi - 0.5 * self.beta * self.beta * vp * vi)
            .collect();
        Mat::from_fn(n - 1, n - 1, |i, j| {
            let (a, b) = (i + 1, j + 1);
            m.read(a, b) - self.v[a] * w[b] - w[a] * self.v[b]
        })
    }
}
