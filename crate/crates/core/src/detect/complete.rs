//! Complete identification: one dead-beat residual bank per (k+1)-subset of candidate agents.

use std::collections::BTreeSet;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusMatrix;
use crate::error::{Error, Result};
use crate::fdi::{synthesize_residual_generator, ResidualGenerator};
use crate::graph::vertex_connectivity;
use crate::numerics::{selection, Tolerance, Vector};

/// A residual is zero when its infinity norm stays below this past the generator horizon.
pub const ZERO_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    Faulty,
    Malicious,
}

impl Assumption {
    /// Connectivity needed to handle `k` misbehaving agents.
    pub fn required_connectivity(self, k: usize) -> usize {
        match self {
            Assumption::Faulty => k + 1,
            Assumption::Malicious => 2 * k + 1,
        }
    }

    pub fn check(self, connectivity: usize, k: usize) -> Result<()> {
        let need = self.required_connectivity(k);
        if connectivity < need {
            return Err(Error::Precondition(format!(
                "connectivity {connectivity} below {need} required for k = {k} ({self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentificationOptions {
    pub assumption: Assumption,
    pub floor: f64,
    pub tol: Tolerance,
}

impl Default for IdentificationOptions {
    fn default() -> Self {
        Self { assumption: Assumption::Faulty, floor: ZERO_FLOOR, tol: Tolerance::default() }
    }
}

/// Generators for one candidate set: member `i` targets `e_i` and is blind to the others.
#[derive(Debug, Clone)]
pub struct ResidualBank {
    pub set: Vec<usize>,
    pub generators: Vec<Option<ResidualGenerator>>,
    states: Vec<Vector>,
    /// Largest residual norm seen at or after each generator's horizon.
    peaks: Vec<f64>,
    /// Residual norms per step, one entry per member.
    pub history: Vec<Vec<f64>>,
}

impl ResidualBank {
    fn new(c: &ConsensusMatrix, j: usize, set: Vec<usize>, tol: Tolerance) -> Result<Self> {
        let n = c.n();
        let cj = c.output_matrix(j);
        let mut generators = Vec::with_capacity(set.len());
        for &i in &set {
            let others: Vec<usize> = set.iter().copied().filter(|&o| o != i).collect();
            let report = synthesize_residual_generator(c.a(), &selection(n, &[i]), &selection(n, &others), &cj, tol)?;
            generators.push(report.generator.map(|mut g| {
                g.target = vec![i];
                g.decoupled = others;
                g
            }));
        }
        let states = generators
            .iter()
            .map(|g| Vector::zeros(g.as_ref().map_or(0, |g| g.state_dim)))
            .collect();
        let peaks = vec![0.0; set.len()];
        Ok(Self { set, generators, states, peaks, history: Vec::new() })
    }

    fn push(&mut self, y: &Vector) {
        let t = self.history.len();
        let mut norms = Vec::with_capacity(self.set.len());
        for (idx, g) in self.generators.iter().enumerate() {
            let norm = match g {
                Some(g) => {
                    let r = g.advance(&mut self.states[idx], y);
                    let v = r.amax();
                    if t >= g.horizon {
                        self.peaks[idx] = self.peaks[idx].max(v);
                    }
                    v
                }
                None => f64::NAN,
            };
            norms.push(norm);
        }
        self.history.push(norms);
    }

    fn horizon(&self) -> usize {
        self.generators.iter().flatten().map(|g| g.horizon).max().unwrap_or(0)
    }

    /// `Some(true)` when member `i`'s residual stayed below `floor`, `None` if unsolvable.
    fn is_zero(&self, idx: usize, floor: f64) -> Option<bool> {
        self.generators[idx].as_ref().map(|_| self.peaks[idx] < floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentificationStatus {
    Identified,
    Ambiguous,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationVerdict {
    pub observer: usize,
    pub status: IdentificationStatus,
    pub identified: Vec<usize>,
    /// Minimal sets of size at most `k` consistent with the residual pattern.
    pub candidates: Vec<Vec<usize>>,
    pub cleared: Vec<usize>,
    pub horizon: usize,
    pub steps: usize,
    /// (target, candidate set) pairs with no residual generator.
    pub unsolvable: Vec<(usize, Vec<usize>)>,
}

/// Streaming complete identification at observer `j` for up to `k` misbehaving agents.
#[derive(Debug, Clone)]
pub struct CompleteIdentifier {
    observer: usize,
    k: usize,
    n: usize,
    floor: f64,
    banks: Vec<ResidualBank>,
    horizon: usize,
    steps: usize,
}

impl CompleteIdentifier {
    pub fn new(c: &ConsensusMatrix, j: usize, k: usize, opts: IdentificationOptions) -> Result<Self> {
        let n = c.n();
        if j >= n {
            return Err(Error::InvalidSet(format!("observer {j} outside 0..{n}")));
        }
        if k + 1 > n - 1 {
            return Err(Error::Precondition(format!("k = {k} leaves no candidate set among {} agents", n - 1)));
        }
        opts.assumption.check(vertex_connectivity(c.graph()), k)?;
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        let sets: Vec<Vec<usize>> = others.into_iter().combinations(k + 1).collect();
        let banks = sets
            .into_par_iter()
            .map(|set| ResidualBank::new(c, j, set, opts.tol))
            .collect::<Result<Vec<_>>>()?;
        let horizon = banks.iter().map(ResidualBank::horizon).max().unwrap_or(0);
        Ok(Self { observer: j, k, n, floor: opts.floor, banks, horizon, steps: 0 })
    }

    pub fn banks(&self) -> &[ResidualBank] {
        &self.banks
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Feeds `y_j(t)` to every bank.
    pub fn push(&mut self, y: &Vector) {
        self.banks.par_iter_mut().for_each(|b| b.push(y));
        self.steps += 1;
    }

    fn consistent(&self, cand: &BTreeSet<usize>) -> bool {
        self.banks.iter().filter(|b| cand.iter().all(|i| b.set.contains(i))).all(|b| {
            b.set
                .iter()
                .enumerate()
                .filter(|(_, i)| !cand.contains(i))
                .all(|(idx, _)| b.is_zero(idx, self.floor).unwrap_or(true))
        })
    }

    pub fn verdict(&self) -> IdentificationVerdict {
        let mut cleared = BTreeSet::new();
        let mut unsolvable = Vec::new();
        for b in &self.banks {
            for (idx, &i) in b.set.iter().enumerate() {
                match b.is_zero(idx, self.floor) {
                    Some(true) => {
                        cleared.insert(i);
                    }
                    Some(false) => {}
                    None => unsolvable.push((i, b.set.clone())),
                }
            }
        }
        let mut out = IdentificationVerdict {
            observer: self.observer,
            status: IdentificationStatus::Pending,
            identified: Vec::new(),
            candidates: Vec::new(),
            cleared: Vec::new(),
            horizon: self.horizon,
            steps: self.steps,
            unsolvable,
        };
        if self.steps < self.horizon + 1 {
            return out;
        }
        out.cleared = cleared.into_iter().collect();
        let others: Vec<usize> = (0..self.n).filter(|&i| i != self.observer).collect();
        let mut minimal: Vec<BTreeSet<usize>> = Vec::new();
        for size in 0..=self.k {
            for cand in others.iter().copied().combinations(size) {
                let cand: BTreeSet<usize> = cand.into_iter().collect();
                if minimal.iter().any(|m| m.is_subset(&cand)) {
                    continue;
                }
                if self.consistent(&cand) {
                    minimal.push(cand);
                }
            }
        }
        out.candidates = minimal.iter().map(|m| m.iter().copied().collect()).collect();
        if minimal.len() == 1 {
            out.status = IdentificationStatus::Identified;
            out.identified = out.candidates[0].clone();
        } else {
            out.status = IdentificationStatus::Ambiguous;
        }
        out
    }
}

/// Runs [`CompleteIdentifier`] over a recorded output stream `y_j(0..T)`.
pub fn complete_identification(
    c: &ConsensusMatrix,
    j: usize,
    k: usize,
    ys: &[Vector],
    opts: IdentificationOptions,
) -> Result<(IdentificationVerdict, CompleteIdentifier)> {
    let mut id = CompleteIdentifier::new(c, j, k, opts)?;
    for y in ys {
        id.push(y);
    }
    Ok((id.verdict(), id))
}
