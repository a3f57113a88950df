//! Deployable procedures: the asymptotic detection filter, complete identification with
//! residual banks, and local identification on weakly coupled blocks.

mod complete;
mod local;

pub use complete::{
    complete_identification, Assumption, CompleteIdentifier, IdentificationOptions, IdentificationStatus,
    IdentificationVerdict, ResidualBank, ZERO_FLOOR,
};
pub use local::{
    block_decompose, build_local_bank, calibrate_threshold, calibrate_with_range, certified_bounds,
    crossing_epsilon, local_identification, local_residual_norms, Admissible, BlockDecomposition, CertifiedBounds,
    InputSign, LocalBank, LocalGenerator, LocalVerdict, ThresholdCalibration,
};

use crate::consensus::ConsensusMatrix;
use crate::error::{Error, Result};
use crate::numerics::{spectral_radius, Matrix, Vector};

/// Observer `z(t+1) = (A + G C_j) z - G y`, `x~ = L z + H y` with `G = -A[:, N_j]`,
/// `H = C_j^T`, `L = I - H C_j`, started from `z(0) = 0`.
#[derive(Debug, Clone)]
pub struct DetectionFilter {
    observer: usize,
    observed: Vec<usize>,
    a: Matrix,
    g: Matrix,
    h: Matrix,
    l: Matrix,
    closed_loop: Matrix,
    z: Vector,
    prev: Option<Vector>,
    t: usize,
}

impl DetectionFilter {
    pub fn new(c: &ConsensusMatrix, j: usize) -> Result<Self> {
        let n = c.n();
        if j >= n {
            return Err(Error::InvalidSet(format!("observer {j} outside 0..{n}")));
        }
        let observed = c.observed_agents(j);
        let cj = c.output_matrix(j);
        let mut g = Matrix::zeros(n, observed.len());
        for (col, &i) in observed.iter().enumerate() {
            g.set_column(col, &(-c.a().column(i)));
        }
        let h = cj.transpose();
        let l = Matrix::identity(n, n) - &h * &cj;
        let closed_loop = c.a() + &g * &cj;
        let rho = spectral_radius(&closed_loop);
        if rho >= 1.0 {
            return Err(Error::Precondition(format!("detection filter closed loop has spectral radius {rho}")));
        }
        Ok(Self {
            observer: j,
            observed,
            a: c.a().clone(),
            g,
            h,
            l,
            closed_loop,
            z: Vector::zeros(n),
            prev: None,
            t: 0,
        })
    }

    pub fn observer(&self) -> usize {
        self.observer
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn gain(&self) -> &Matrix {
        &self.g
    }

    pub fn closed_loop(&self) -> &Matrix {
        &self.closed_loop
    }

    /// Consumes `y(t)`; returns `x~(t)` and, for `t >= 1`, `rho(t - 1) = x~(t) - A x~(t - 1)`.
    pub fn step(&mut self, y: &Vector) -> (Vector, Option<Vector>) {
        let estimate = &self.l * &self.z + &self.h * y;
        self.z = &self.closed_loop * &self.z - &self.g * y;
        let residual = self.prev.as_ref().map(|p| &estimate - &self.a * p);
        self.prev = Some(estimate.clone());
        self.t += 1;
        (estimate, residual)
    }

    /// Estimates `x~(0..len)` and residuals `rho(0..len - 1)`.
    pub fn run(&mut self, ys: &[Vector]) -> (Vec<Vector>, Vec<Vector>) {
        let mut estimates = Vec::with_capacity(ys.len());
        let mut residuals = Vec::with_capacity(ys.len().saturating_sub(1));
        for y in ys {
            let (e, r) = self.step(y);
            estimates.push(e);
            residuals.extend(r);
        }
        (estimates, residuals)
    }
}
