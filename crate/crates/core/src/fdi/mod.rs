//! Controlled and conditioned invariants, the unobservability subspace and dead-beat residual
//! generators decoupled from selected inputs.

pub mod deadbeat;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{nilpotency_index, pinv, vstack, Matrix, Subspace, Tolerance, Vector};
use crate::serde_util;

fn check_triple(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: a.ncols() });
    }
    if b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "A {n}x{n}, B {}x{}, C {}x{}",
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(n)
}

/// Iterates `V_0 = Ker C`, `V_{k+1} = Ker C ∩ A^{-1}(V_k + Im B)`; returns every iterate.
pub fn controlled_invariant_sequence(a: &Matrix, b: &Matrix, c: &Matrix, tol: Tolerance) -> Vec<Subspace> {
    let ker_c = Subspace::kernel(c, tol);
    let im_b = Subspace::image(b, tol);
    let mut seq = vec![ker_c.clone()];
    loop {
        let v = seq.last().expect("nonempty");
        let next = v
            .sum(&im_b)
            .and_then(|s| s.preimage(a))
            .and_then(|p| ker_c.intersect(&p))
            .expect("dimensions checked by caller");
        let done = next.dim() == v.dim();
        seq.push(next);
        if done || seq.len() > a.nrows() + 2 {
            return seq;
        }
    }
}

/// Largest `V` in `Ker C` with `A V ⊆ V + Im B`.
pub fn max_controlled_invariant(a: &Matrix, b: &Matrix, c: &Matrix, tol: Tolerance) -> Subspace {
    controlled_invariant_sequence(a, b, c, tol).pop().expect("nonempty")
}

/// Iterates `S_0 = Im B`, `S_{k+1} = Im B + A (S_k ∩ Ker C)`; returns every iterate.
pub fn conditioned_invariant_sequence(a: &Matrix, b: &Matrix, c: &Matrix, tol: Tolerance) -> Vec<Subspace> {
    let ker_c = Subspace::kernel(c, tol);
    let im_b = Subspace::image(b, tol);
    let mut seq = vec![im_b.clone()];
    loop {
        let s = seq.last().expect("nonempty");
        let next = s
            .intersect(&ker_c)
            .and_then(|x| x.map(a))
            .and_then(|x| x.sum(&im_b))
            .expect("dimensions checked by caller");
        let done = next.dim() == s.dim();
        seq.push(next);
        if done || seq.len() > a.nrows() + 2 {
            return seq;
        }
    }
}

/// Smallest `S` containing `Im B` with `A (S ∩ Ker C) ⊆ S`.
pub fn min_conditioned_invariant(a: &Matrix, b: &Matrix, c: &Matrix, tol: Tolerance) -> Subspace {
    conditioned_invariant_sequence(a, b, c, tol).pop().expect("nonempty")
}

/// `V* + S*` for the inputs to be decoupled.
pub fn unobservability_subspace(a: &Matrix, b_others: &Matrix, c: &Matrix, tol: Tolerance) -> Result<Subspace> {
    check_triple(a, b_others, c)?;
    max_controlled_invariant(a, b_others, c, tol).sum(&min_conditioned_invariant(a, b_others, c, tol))
}

/// Friend of a controlled invariant: `F` with `(A + B F) V ⊆ V`.
pub fn friend(a: &Matrix, b: &Matrix, v: &Subspace, tol: Tolerance) -> Result<Matrix> {
    let n = a.nrows();
    let m = b.ncols();
    if v.is_zero() {
        return Ok(Matrix::zeros(m, n));
    }
    let basis = v.basis();
    let d = basis.ncols();
    // A V = V X - B W  =>  F = W V^T.
    let lhs = crate::numerics::hstack(&[basis, &(-b)]);
    let sol = pinv(&lhs, tol) * (a * basis);
    let w = sol.rows(d, m).into_owned();
    let f = &w * basis.transpose();
    let closed = a + b * &f;
    let leak = (&closed * basis) - basis * (basis.transpose() * &closed * basis);
    if leak.amax() > 1e-8 * a.amax().max(1.0) {
        return Err(Error::Precondition("subspace is not controlled invariant".into()));
    }
    Ok(f)
}

/// `Im B_target ∩ (V* + S*)_{others} = {0}` with a nonzero target.
pub fn fdi_solvable(a: &Matrix, b_target: &Matrix, b_others: &Matrix, c: &Matrix, tol: Tolerance) -> Result<bool> {
    check_triple(a, b_target, c)?;
    let target = Subspace::image(b_target, tol);
    if target.is_zero() {
        return Ok(false);
    }
    let w = unobservability_subspace(a, b_others, c, tol)?;
    Ok(target.intersect(&w)?.is_zero())
}

/// Dead-beat filter `w(t+1) = F w + E y`, `r = M w + H y`, started from `w(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualGenerator {
    #[serde(with = "serde_util::matrix")]
    pub f: Matrix,
    #[serde(with = "serde_util::matrix")]
    pub e: Matrix,
    #[serde(with = "serde_util::matrix")]
    pub m: Matrix,
    #[serde(with = "serde_util::matrix")]
    pub h: Matrix,
    pub state_dim: usize,
    /// Steps after which the residual is exact (nilpotency index of `F`).
    pub horizon: usize,
    pub target: Vec<usize>,
    pub decoupled: Vec<usize>,
}

impl ResidualGenerator {
    /// Wraps given matrices; the horizon is the nilpotency index of `F`.
    pub fn from_matrices(f: Matrix, e: Matrix, m: Matrix, h: Matrix) -> Result<Self> {
        let q = f.nrows();
        if f.ncols() != q || e.nrows() != q || m.ncols() != q || h.nrows() != m.nrows() || h.ncols() != e.ncols() {
            return Err(Error::Dimension("inconsistent filter matrices".into()));
        }
        let horizon = nilpotency_index(&f, 1e-9 * f.amax().max(1.0))
            .ok_or_else(|| Error::Precondition("filter dynamics are not nilpotent".into()))?;
        Ok(Self { f, e, m, h, state_dim: q, horizon, target: Vec::new(), decoupled: Vec::new() })
    }

    pub fn output_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn residual_dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn start(&self) -> ResidualFilter<'_> {
        ResidualFilter { g: self, w: Vector::zeros(self.state_dim) }
    }

    /// Residual from `y` with external filter state `w`, which is advanced in place.
    pub fn advance(&self, w: &mut Vector, y: &Vector) -> Vector {
        let r = &self.m * &*w + &self.h * y;
        *w = &self.f * &*w + &self.e * y;
        r
    }
}

/// Running state of a [`ResidualGenerator`].
#[derive(Debug, Clone)]
pub struct ResidualFilter<'a> {
    g: &'a ResidualGenerator,
    w: Vector,
}

impl ResidualFilter<'_> {
    /// Residual `r(t)` from `y(t)`; advances to `w(t+1)`.
    pub fn step(&mut self, y: &Vector) -> Vector {
        self.g.advance(&mut self.w, y)
    }
}

/// Residuals `r(0..len(y))` from `w(0) = 0`.
pub fn run_residual(g: &ResidualGenerator, y: &[Vector]) -> Vec<Vector> {
    let mut f = g.start();
    y.iter().map(|v| f.step(v)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    #[serde(with = "serde_util::subspace")]
    pub v_star: Subspace,
    #[serde(with = "serde_util::subspace")]
    pub s_star: Subspace,
    /// `V* + S*`, enlarged to the unobservable subspace of the injected pair when larger.
    #[serde(with = "serde_util::subspace")]
    pub s_m: Subspace,
    pub solvable: bool,
    pub generator: Option<ResidualGenerator>,
}

/// Residual generator responding to `b_target` and blind to `b_decouple`.
///
/// Output injection `G` makes `W = V* + S*` invariant, `H` annihilates `C W`, the observer of
/// the quotient `(Q^T (A + G C) Q, H C Q)` gets a dead-beat gain `L`, and
/// `F = A_q + L C_q`, `E = -(Q^T G + L H)`, `M = C_q`, `H_r = -H`.
pub fn synthesize_residual_generator(
    a: &Matrix,
    b_target: &Matrix,
    b_decouple: &Matrix,
    c: &Matrix,
    tol: Tolerance,
) -> Result<SynthesisReport> {
    let n = check_triple(a, b_target, c)?;
    check_triple(a, b_decouple, c)?;
    let v_star = max_controlled_invariant(a, b_decouple, c, tol);
    let s_star = min_conditioned_invariant(a, b_decouple, c, tol);
    let mut s_m = v_star.sum(&s_star)?;
    let target = Subspace::image(b_target, tol);
    let unsolvable = |v_star, s_star, s_m| SynthesisReport { v_star, s_star, s_m, solvable: false, generator: None };
    if target.is_zero() || !target.intersect(&s_m)?.is_zero() {
        return Ok(unsolvable(v_star, s_star, s_m));
    }
    let wb = s_m.basis().clone();
    let cw = c * &wb;
    let g = if s_m.is_zero() {
        Matrix::zeros(n, c.nrows())
    } else {
        let p_perp = Matrix::identity(n, n) - &wb * wb.transpose();
        -(p_perp * a * &wb * pinv(&cw, tol))
    };
    let h = Subspace::image(&cw, tol).complement().basis().transpose();
    if h.nrows() == 0 {
        return Ok(unsolvable(v_star, s_star, s_m));
    }
    let ag = a + &g * c;
    let hc = &h * c;
    // Unobservable subspace of (A + G C, H C); contains S^M by construction.
    let mut obs = hc.clone();
    let mut block = hc.clone();
    for _ in 1..n {
        block = &block * &ag;
        obs = vstack(&[&obs, &block]);
    }
    let unobs = Subspace::kernel(&obs, tol);
    if unobs.dim() > s_m.dim() {
        s_m = unobs;
        if !target.intersect(&s_m)?.is_zero() {
            return Ok(unsolvable(v_star, s_star, s_m));
        }
    }
    let q = s_m.complement().basis().clone();
    let aq = q.transpose() * &ag * &q;
    let cq = &hc * &q;
    let (l, _) = deadbeat::deadbeat_observer_gain(&aq, &cq, tol)?;
    let f = &aq + &l * &cq;
    let e = -(q.transpose() * &g + &l * &h);
    let generator = ResidualGenerator::from_matrices(f, e, cq, -h)?;
    Ok(SynthesisReport { v_star, s_star, s_m, solvable: true, generator: Some(generator) })
}
