//! Dense matrix helpers and subspace algebra on orthonormal bases.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Dyn, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMatrix = DMatrix<Complex<f64>>;
pub type CVector = DVector<Complex<f64>>;

/// Full SVD whose reconstruction is checked; the default convergence threshold occasionally
/// stops on an inaccurate factorization, so looser thresholds are retried and the most
/// accurate result is kept.
pub fn svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> SVD<T, Dyn, Dyn> {
    let scale = m.iter().map(|v| v.clone().abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, SVD<T, Dyn, Dyn>)> = None;
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12] {
        let Some(s) = m.clone().try_svd(true, true, eps, 0) else { continue };
        let Ok(back) = s.clone().recompose() else { continue };
        let err = (back - m).iter().map(|v| v.clone().abs()).fold(0.0, f64::max) / scale;
        if err <= 1e-12 {
            return s;
        }
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, s));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| m.clone().svd(true, true))
}

/// Environment variable that overrides [`Tolerance::rank`].
pub const TOL_ENV: &str = "NETGUARD_TOL";

/// Tolerance policy shared by every geometric computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Singular values at or below `rank * max(sigma_max, 1)` are treated as zero.
    pub rank: f64,
    /// Largest principal angle (radians) at which subspaces still compare equal;
    /// also the relative residual allowed for membership.
    pub angle: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rank: 1e-9, angle: 1e-6 }
    }
}

impl Tolerance {
    pub fn with_rank(rank: f64) -> Self {
        Self { rank, ..Self::default() }
    }

    /// Default policy, with the rank tolerance taken from `NETGUARD_TOL` when set.
    pub fn from_env() -> Self {
        match std::env::var(TOL_ENV).ok().and_then(|s| s.trim().parse::<f64>().ok()) {
            Some(r) if r > 0.0 && r.is_finite() => Self::with_rank(r),
            _ => Self::default(),
        }
    }

    pub fn threshold(&self, sigma_max: f64) -> f64 {
        self.rank * sigma_max.max(1.0)
    }
}

/// Linear subspace of R^n stored as an orthonormal basis (columns).
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Matrix,
    tol: Tolerance,
}

impl Subspace {
    pub fn zero(n: usize, tol: Tolerance) -> Self {
        Self { basis: Matrix::zeros(n, 0), tol }
    }

    pub fn full(n: usize, tol: Tolerance) -> Self {
        Self { basis: Matrix::identity(n, n), tol }
    }

    /// Column space of `m`.
    pub fn image(m: &Matrix, tol: Tolerance) -> Self {
        let n = m.nrows();
        if m.ncols() == 0 || n == 0 || m.iter().all(|v| *v == 0.0) {
            return Self::zero(n, tol);
        }
        let svd = svd(m);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let thr = tol.threshold(smax);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > thr)
            .collect();
        let basis = Matrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])]);
        Self { basis, tol }
    }

    /// Null space of `m`.
    pub fn kernel(m: &Matrix, tol: Tolerance) -> Self {
        let n = m.ncols();
        if m.nrows() == 0 || m.iter().all(|v| *v == 0.0) {
            return Self::full(n, tol);
        }
        if n == 0 {
            return Self::zero(0, tol);
        }
        let sq = if m.nrows() < n {
            let mut p = Matrix::zeros(n, n);
            p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
            p
        } else {
            m.clone()
        };
        let svd = svd(&sq);
        let vt = svd.v_t.expect("right singular vectors requested");
        let smax = svd.singular_values.max();
        let thr = tol.threshold(smax);
        let null: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] <= thr)
            .collect();
        let basis = Matrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)]);
        Self { basis, tol }
    }

    /// Span of the given vectors.
    pub fn span(n: usize, vectors: &[Vector], tol: Tolerance) -> Self {
        if vectors.is_empty() {
            return Self::zero(n, tol);
        }
        Self::image(&Matrix::from_columns(vectors), tol)
    }

    /// Span of canonical basis vectors `e_i`, `i` in `idx` (0-based).
    pub fn coordinate(n: usize, idx: &[usize], tol: Tolerance) -> Self {
        Self::image(&selection(n, idx), tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    fn check_same(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(Error::Dimension(format!(
                "subspaces of R^{} and R^{}",
                self.ambient_dim(),
                other.ambient_dim()
            )));
        }
        Ok(())
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Subspace {
        if self.is_zero() {
            return Self::full(self.ambient_dim(), self.tol);
        }
        Self::kernel(&self.basis.transpose(), self.tol)
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same(other)?;
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.is_zero() {
            return Ok(Self { basis: other.basis.clone(), tol: self.tol });
        }
        let mut stacked = Matrix::zeros(self.ambient_dim(), self.dim() + other.dim());
        stacked.columns_mut(0, self.dim()).copy_from(&self.basis);
        stacked.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        Ok(Self::image(&stacked, self.tol))
    }

    /// Intersection via the kernel of `[B1, -B2]`.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same(other)?;
        let n = self.ambient_dim();
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(n, self.tol));
        }
        let (d1, d2) = (self.dim(), other.dim());
        let mut stacked = Matrix::zeros(n, d1 + d2);
        stacked.columns_mut(0, d1).copy_from(&self.basis);
        stacked.columns_mut(d1, d2).copy_from(&(-&other.basis));
        let k = Self::kernel(&stacked, self.tol);
        if k.is_zero() {
            return Ok(Self::zero(n, self.tol));
        }
        let coeffs = k.basis.rows(0, d1).into_owned();
        Ok(Self::image(&(&self.basis * coeffs), self.tol))
    }

    /// `{x : A x in self}`.
    pub fn preimage(&self, a: &Matrix) -> Result<Subspace> {
        if a.nrows() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "map with {} rows into R^{}",
                a.nrows(),
                self.ambient_dim()
            )));
        }
        let perp = self.complement();
        if perp.is_zero() {
            return Ok(Self::full(a.ncols(), self.tol));
        }
        Ok(Self::kernel(&(perp.basis.transpose() * a), self.tol))
    }

    /// `A * self`.
    pub fn map(&self, a: &Matrix) -> Result<Subspace> {
        if a.ncols() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "map with {} columns applied to R^{}",
                a.ncols(),
                self.ambient_dim()
            )));
        }
        if self.is_zero() {
            return Ok(Self::zero(a.nrows(), self.tol));
        }
        Ok(Self::image(&(a * &self.basis), self.tol))
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Relative distance of `x` from the subspace.
    pub fn residual(&self, x: &Vector) -> f64 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        (x - self.project(x)).norm() / nx
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.ambient_dim() && self.residual(x) <= self.tol.angle
    }

    pub fn contains_subspace(&self, other: &Subspace) -> bool {
        self.ambient_dim() == other.ambient_dim()
            && (other.is_zero() || gap(&self.basis, &other.basis) <= self.tol.angle)
    }

    /// Largest principal angle; `pi/2` when the dimensions differ.
    pub fn max_principal_angle(&self, other: &Subspace) -> f64 {
        if self.ambient_dim() != other.ambient_dim() || self.dim() != other.dim() {
            return std::f64::consts::FRAC_PI_2;
        }
        if self.is_zero() {
            return 0.0;
        }
        gap(&self.basis, &other.basis).min(1.0).asin()
    }

    pub fn equals(&self, other: &Subspace) -> bool {
        self.max_principal_angle(other) <= self.tol.angle
    }
}

/// Spectral norm of `(I - Q1 Q1^T) Q2`: sine of the largest angle from span(Q2) to span(Q1).
fn gap(q1: &Matrix, q2: &Matrix) -> f64 {
    let r = q2 - q1 * (q1.transpose() * q2);
    spectral_norm(&r)
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).singular_values.max()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// n x |idx| matrix whose columns are the canonical vectors `e_i`.
pub fn selection(n: usize, idx: &[usize]) -> Matrix {
    let mut b = Matrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        b[(i, c)] = 1.0;
    }
    b
}

/// |idx| x n matrix whose rows are the canonical vectors `e_i^T`.
pub fn row_selection(n: usize, idx: &[usize]) -> Matrix {
    selection(n, idx).transpose()
}

pub fn submatrix(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

pub fn rank(m: &Matrix, tol: Tolerance) -> usize {
    Subspace::image(m, tol).dim()
}

pub fn complex_rank(m: &CMatrix, tol: Tolerance) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = svd(m).singular_values;
    let thr = tol.threshold(sv.max());
    sv.iter().filter(|s| **s > thr).count()
}

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// Moore-Penrose pseudo-inverse with the shared rank threshold.
pub fn pinv(m: &Matrix, tol: Tolerance) -> Matrix {
    if m.is_empty() {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let svd = svd(m);
    let thr = tol.threshold(svd.singular_values.max());
    svd.pseudo_inverse(thr).expect("both factors computed")
}

pub fn eigenvalues(m: &Matrix) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &Matrix) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Smallest `k` with `m^k = 0` (entries below `abs_tol`), up to `dim`.
pub fn nilpotency_index(m: &Matrix, abs_tol: f64) -> Option<usize> {
    let n = m.nrows();
    if n == 0 {
        return Some(0);
    }
    let mut p = Matrix::identity(n, n);
    for k in 1..=n {
        p = &p * m;
        if p.amax() <= abs_tol {
            return Some(k);
        }
    }
    None
}

/// Iterate `x(t+1) = A x(t) + B u(t)` for `steps` steps; returns states x(0..=steps) and inputs u(0..steps).
pub fn simulate_lti(
    a: &Matrix,
    b: &Matrix,
    x0: &Vector,
    steps: usize,
    mut input: impl FnMut(usize, &Vector) -> Vector,
) -> (Vec<Vector>, Vec<Vector>) {
    let mut xs = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps);
    xs.push(x0.clone());
    for t in 0..steps {
        let x = &xs[t];
        let u = input(t, x);
        let next = a * x + b * &u;
        us.push(u);
        xs.push(next);
    }
    (xs, us)
}

/// Stationary left vector of a row-stochastic irreducible matrix.
pub fn left_fixed_vector(a: &Matrix) -> Result<Vector> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::NotSquare { rows: n, cols: a.ncols() });
    }
    check_finite(a)?;
    for (i, row) in a.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::RowSum { row: i, sum: s });
        }
        if let Some(j) = row.iter().position(|v| *v < 0.0) {
            return Err(Error::NegativeEntry { row: i, col: j, value: row[j] });
        }
    }
    // Solve [A^T - I; 1^T] pi = [0; 1] in the least-squares sense.
    let mut m = Matrix::zeros(n + 1, n);
    m.rows_mut(0, n).copy_from(&(a.transpose() - Matrix::identity(n, n)));
    m.row_mut(n).fill(1.0);
    let mut rhs = Vector::zeros(n + 1);
    rhs[n] = 1.0;
    let pi = svd(&m)
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(pi)
}
