//! Consensus matrices, attacked trajectories and attack effects on the consensus value.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DiGraph;
use crate::numerics::{
    check_finite, left_fixed_vector, row_selection, spectral_radius, submatrix, Matrix, Subspace,
    Tolerance, Vector,
};

pub const ROW_SUM_TOL: f64 = 1e-10;

/// Row-stochastic primitive matrix with its digraph and stationary left vector.
#[derive(Debug, Clone)]
pub struct ConsensusMatrix {
    a: Matrix,
    pi: Vector,
    graph: DiGraph,
}

impl ConsensusMatrix {
    /// Checks, in order: square, finite, nonnegative, row sums, irreducible, primitive.
    pub fn validate(a: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() || n == 0 {
            return Err(Error::NotSquare { rows: n, cols: a.ncols() });
        }
        check_finite(&a)?;
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: a[(i, j)] });
                }
            }
        }
        for i in 0..n {
            let s: f64 = a.row(i).sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSum { row: i, sum: s });
            }
        }
        let graph = DiGraph::from_matrix(&a, 0.0);
        if !graph.is_strongly_connected() {
            return Err(Error::Reducible);
        }
        if !is_primitive(&a) {
            return Err(Error::Imprimitive);
        }
        let pi = left_fixed_vector(&a)?;
        Ok(Self { a, pi, graph })
    }

    /// Rescales each row to sum to one, then validates.
    pub fn from_rows_normalized(a: &Matrix) -> Result<Self> {
        let mut m = a.clone();
        for mut row in m.row_iter_mut() {
            let s: f64 = row.sum();
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::Precondition("row with nonpositive sum".into()));
            }
            row /= s;
        }
        Self::validate(m)
    }

    /// Random realization on `graph` (plus self-loops): weights uniform on [0.1, 1], row-normalized.
    pub fn random_on<R: Rng>(graph: &DiGraph, rng: &mut R) -> Result<Self> {
        let n = graph.n();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = rng.random_range(0.1..=1.0);
            for j in graph.in_neighbors(i) {
                m[(i, j)] = rng.random_range(0.1..=1.0);
            }
        }
        Self::from_rows_normalized(&m)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn pi(&self) -> &Vector {
        &self.pi
    }

    pub fn graph(&self) -> &DiGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Agents measured by `j`: its in-neighbors and itself, sorted.
    pub fn observed_agents(&self, j: usize) -> Vec<usize> {
        let mut s: BTreeSet<usize> = self.graph.in_neighbors(j).into_iter().collect();
        s.insert(j);
        s.into_iter().collect()
    }

    /// Output matrix `C_j` selecting [`Self::observed_agents`].
    pub fn output_matrix(&self, j: usize) -> Matrix {
        row_selection(self.n(), &self.observed_agents(j))
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::InvalidSet(format!("agent {i} outside 0..{}", self.n())));
        }
        Ok(())
    }

    fn check_set(&self, set: &[usize]) -> Result<()> {
        for &i in set {
            self.check_agent(i)?;
        }
        let unique: BTreeSet<_> = set.iter().collect();
        if unique.len() != set.len() {
            return Err(Error::InvalidSet(format!("repeated agent in {set:?}")));
        }
        Ok(())
    }
}

/// Boolean pattern power `A^(n^2 - 2n + 2)` entrywise positive.
pub fn is_primitive(a: &Matrix) -> bool {
    let n = a.nrows();
    let pattern: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] != 0.0).collect())
        .collect();
    let mut exp = n * n + 2 - 2 * n;
    let mut result: Option<Vec<Vec<bool>>> = None;
    let mut base = pattern;
    while exp > 0 {
        if exp & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => bool_mul(&r, &base),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = bool_mul(&base, &base);
        }
    }
    result.is_some_and(|r| r.iter().all(|row| row.iter().all(|&b| b)))
}

fn bool_mul(x: &[Vec<bool>], y: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = x.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if x[i][k] {
                for j in 0..n {
                    out[i][j] |= y[k][j];
                }
            }
        }
    }
    out
}

/// Behaviour of one misbehaving agent; inputs enter additively at the agent's own coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    Constant { value: f64 },
    /// `u(t) = u0 * z^t`.
    Exponential { z: f64, u0: f64 },
    /// `u(t) = gain . x(t) + offset`, evaluated on the full current state.
    StateFeedback { gain: Vec<f64>, offset: f64 },
    /// Explicit values; zero after the sequence ends.
    Sequence { values: Vec<f64> },
    /// Adds `value` to the agent's initial state; no input afterwards.
    InitialOffset { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub agent: usize,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackModel {
    pub fn new(agent: usize, kind: AttackKind) -> Self {
        Self { agent, kind }
    }

    /// Stubborn agent: cancels its own update and holds `c`.
    pub fn stubborn(c: &ConsensusMatrix, agent: usize, value: f64) -> Self {
        let gain = (-c.a.row(agent).transpose()).iter().copied().collect();
        Self::new(agent, AttackKind::StateFeedback { gain, offset: value })
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.agent >= n {
            return Err(Error::InvalidSet(format!("attacking agent {} outside 0..{n}", self.agent)));
        }
        match &self.kind {
            AttackKind::Exponential { z, .. } if z.abs() >= 1.0 => {
                Err(Error::Precondition(format!("exponential rate |z| = {} must be < 1", z.abs())))
            }
            AttackKind::StateFeedback { gain, .. } if gain.len() != n => Err(Error::Dimension(format!(
                "feedback gain of length {} for {n} agents",
                gain.len()
            ))),
            _ => Ok(()),
        }
    }

    fn input(&self, t: usize, x: &Vector) -> f64 {
        match &self.kind {
            AttackKind::Constant { value } => *value,
            AttackKind::Exponential { z, u0 } => u0 * z.powi(t as i32),
            AttackKind::StateFeedback { gain, offset } => {
                gain.iter().zip(x.iter()).map(|(g, v)| g * v).sum::<f64>() + offset
            }
            AttackKind::Sequence { values } => values.get(t).copied().unwrap_or(0.0),
            AttackKind::InitialOffset { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Misbehaving agents, sorted; columns of `B_K`.
    pub agents: Vec<usize>,
    /// x(0..=T).
    pub states: Vec<Vector>,
    /// u_K(0..T).
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// y(t) = C x(t) for t in 0..=T, with `C` selecting `observed`.
    pub fn outputs(&self, observed: &[usize]) -> Vec<Vector> {
        self.states
            .iter()
            .map(|x| Vector::from_iterator(observed.len(), observed.iter().map(|&i| x[i])))
            .collect()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory holds x(0)")
    }

    /// max_t ||x(t+1) - A x(t) - B_K u_K(t)||_inf.
    pub fn recursion_residual(&self, a: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.steps() {
            let mut r = &self.states[t + 1] - a * &self.states[t];
            for (c, &k) in self.agents.iter().enumerate() {
                r[k] -= self.inputs[t][c];
            }
            worst = worst.max(r.amax());
        }
        worst
    }
}

/// Iterate `x(t+1) = A x(t) + B_K u_K(t)` for `steps` steps.
pub fn simulate(c: &ConsensusMatrix, x0: &Vector, attacks: &[AttackModel], steps: usize) -> Result<Trajectory> {
    simulate_matrix(c.a(), x0, attacks, steps)
}

/// [`simulate`] for any square matrix, e.g. a reducible block-diagonal part.
pub fn simulate_matrix(a: &Matrix, x0: &Vector, attacks: &[AttackModel], steps: usize) -> Result<Trajectory> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: a.ncols() });
    }
    if steps == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state of length {} for {n} agents", x0.len())));
    }
    for m in attacks {
        m.validate(n)?;
    }
    let agents: Vec<usize> = attacks
        .iter()
        .map(|m| m.agent)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut x = x0.clone();
    for m in attacks {
        if let AttackKind::InitialOffset { value } = m.kind {
            x[m.agent] += value;
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut u = Vector::zeros(agents.len());
        for m in attacks {
            let col = agents.binary_search(&m.agent).expect("agent collected above");
            u[col] += m.input(t, &x);
        }
        let mut next = a * &x;
        for (col, &k) in agents.iter().enumerate() {
            next[k] += u[col];
        }
        states.push(std::mem::replace(&mut x, next));
        inputs.push(u);
    }
    states.push(x);
    Ok(Trajectory { agents, states, inputs })
}

/// Spectral radius of the principal submatrix on a nonempty proper subset `J`.
pub fn principal_submatrix_spectral_radius(c: &ConsensusMatrix, j: &[usize]) -> Result<f64> {
    c.check_set(j)?;
    if j.is_empty() || j.len() >= c.n() {
        return Err(Error::InvalidSet(format!("{j:?} is not a nonempty proper subset")));
    }
    Ok(spectral_radius(&submatrix(c.a(), j, j)))
}

/// `(I - Q)^{-1} R` for the partition isolating agent `i`.
pub fn stubborn_agent_gain(c: &ConsensusMatrix, i: usize) -> Result<Vector> {
    c.check_agent(i)?;
    if c.n() < 2 {
        return Err(Error::Precondition("need at least two agents".into()));
    }
    let rest: Vec<usize> = (0..c.n()).filter(|&k| k != i).collect();
    let q = submatrix(c.a(), &rest, &rest);
    let r = submatrix(c.a(), &rest, &[i]);
    let m = Matrix::identity(rest.len(), rest.len()) - q;
    let g = m
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Precondition("I - Q is singular".into()))?;
    Ok(g.column(0).into_owned())
}

/// `1 * (pi . B_K c)`: final-value shift produced by initial offsets `c` on `K`.
pub fn attack_effect_constant(c: &ConsensusMatrix, k: &[usize], values: &[f64]) -> Result<Vector> {
    c.check_set(k)?;
    if k.len() != values.len() {
        return Err(Error::Dimension(format!("{} agents, {} values", k.len(), values.len())));
    }
    let shift: f64 = k.iter().zip(values).map(|(&i, v)| c.pi[i] * v).sum();
    Ok(Vector::from_element(c.n(), shift))
}

/// `(1 - z)^{-1} 1 pi B_K u0`: bound on the consensus shift of `u(t) = z^t u0`.
pub fn exponential_input_bound(c: &ConsensusMatrix, k: &[usize], z: f64, u0: &[f64]) -> Result<Vector> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Precondition(format!("rate z = {z} must lie in (0, 1)")));
    }
    if u0.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition("u0 must be entrywise nonnegative".into()));
    }
    Ok(attack_effect_constant(c, k, u0)? / (1.0 - z))
}

/// Unobservable subspace of `(A, C_j)`.
pub fn unobservable_subspace(c: &ConsensusMatrix, j: usize, tol: Tolerance) -> Result<Subspace> {
    c.check_agent(j)?;
    let n = c.n();
    let cj = c.output_matrix(j);
    let mut rows = cj.clone();
    let mut block = cj;
    for _ in 1..n {
        block = &block * c.a();
        rows = crate::numerics::vstack(&[&rows, &block]);
    }
    Ok(Subspace::kernel(&rows, tol))
}

/// For `v` unobservable from `j`: checks `pi . v = 0` and that `A^t v` vanishes, i.e. the
/// offset leaves the consensus value unchanged.
pub fn unobservable_offset_is_neutral(c: &ConsensusMatrix, j: usize, v: &Vector) -> Result<bool> {
    let tol = Tolerance::default();
    if v.len() != c.n() {
        return Err(Error::Dimension(format!("offset of length {} for {} agents", v.len(), c.n())));
    }
    if !unobservable_subspace(c, j, tol)?.contains(v) {
        return Err(Error::Precondition(format!("offset is observable from agent {j}")));
    }
    let scale = v.amax().max(1.0);
    let neutral = c.pi.dot(v).abs() <= 1e-9 * scale;
    let zero = Vector::zeros(c.n());
    let base = simulate(c, &zero, &[], 2000)?;
    let shifted = simulate(c, v, &[], 2000)?;
    let gap = (shifted.final_state() - base.final_state()).amax();
    Ok(neutral && gap <= 1e-6 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> ConsensusMatrix {
        ConsensusMatrix::validate(Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap()
    }

    #[test]
    fn validation_errors() {
        assert_eq!(ConsensusMatrix::validate(Matrix::identity(3, 3)).unwrap_err(), Error::Reducible);
        let swap = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ConsensusMatrix::validate(swap).unwrap_err(), Error::Imprimitive);
        let neg = Matrix::from_row_slice(2, 2, &[1.5, -0.5, 0.5, 0.5]);
        assert!(matches!(ConsensusMatrix::validate(neg), Err(Error::NegativeEntry { row: 0, col: 1, .. })));
        let sums = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.6]);
        assert!(matches!(ConsensusMatrix::validate(sums), Err(Error::RowSum { row: 1, .. })));
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(ConsensusMatrix::validate(rect), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn observer_sets() {
        let a = Matrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.25, 0.5, 0.25, 0.0, 0.5, 0.5]);
        let c = ConsensusMatrix::validate(a).unwrap();
        assert_eq!(c.observed_agents(0), vec![0, 1]);
        assert_eq!(c.observed_agents(1), vec![0, 1, 2]);
        assert_eq!(c.output_matrix(2).nrows(), 2);
    }

    #[test]
    fn zero_trajectory() {
        let c = two_node();
        let t = simulate(&c, &Vector::zeros(2), &[], 5).unwrap();
        assert!(t.states.iter().all(|x| x.amax() == 0.0));
        assert!(simulate(&c, &Vector::zeros(2), &[], 0).is_err());
    }

    #[test]
    fn stubborn_two_node_chain() {
        let c = two_node();
        let g = stubborn_agent_gain(&c, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_attack_rejects_unstable_rate() {
        let c = two_node();
        let m = AttackModel::new(0, AttackKind::Exponential { z: 1.2, u0: 1.0 });
        assert!(simulate(&c, &Vector::zeros(2), &[m], 3).is_err());
    }

    #[test]
    fn subset_checks() {
        let c = two_node();
        assert!(principal_submatrix_spectral_radius(&c, &[0, 1]).is_err());
        assert!(principal_submatrix_spectral_radius(&c, &[]).is_err());
        let r = principal_submatrix_spectral_radius(&c, &[0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }
}
