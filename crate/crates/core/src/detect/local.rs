//! Weakly coupled decomposition `A = A_d + eps * Delta`, block-local residual banks,
//! certified threshold calibration and local identification.

use std::collections::BTreeSet;

use itertools::Itertools;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::complete::{Assumption, ZERO_FLOOR};
use crate::error::{Error, Result};
use crate::fdi::{run_residual, synthesize_residual_generator, ResidualGenerator};
use crate::graph::{vertex_connectivity, DiGraph};
use crate::numerics::{inf_norm, row_selection, selection, submatrix, Matrix, Tolerance, Vector};
use crate::serde_util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    pub partition: Vec<Vec<usize>>,
    #[serde(with = "serde_util::matrix")]
    pub a_d: Matrix,
    #[serde(with = "serde_util::matrix")]
    pub delta: Matrix,
    pub epsilon: f64,
}

fn check_partition(n: usize, partition: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for block in partition {
        if block.is_empty() {
            return Err(Error::InvalidSet("empty block in partition".into()));
        }
        for &i in block {
            if i >= n || seen[i] {
                return Err(Error::InvalidSet(format!("agent {i} missing from 0..{n} or listed twice")));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidSet(format!("agent {i} not covered by the partition")));
    }
    Ok(())
}

/// Splits `A` into its block-diagonal consensus part and the normalized coupling.
pub fn block_decompose(a: &Matrix, partition: &[Vec<usize>]) -> Result<BlockDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: a.ncols() });
    }
    check_partition(n, partition)?;
    let mut a_d = Matrix::zeros(n, n);
    for (h, block) in partition.iter().enumerate() {
        for &k in block {
            let mut off = 0.0;
            for &j in block {
                if j != k {
                    a_d[(k, j)] = a[(k, j)];
                    off += a[(k, j)];
                }
            }
            let coupled = (0..n).any(|j| !block.contains(&j) && a[(k, j)] != 0.0);
            // Uncoupled rows are copied so that epsilon is exactly zero.
            let diag = if coupled { 1.0 - off } else { a[(k, k)] };
            if diag < -1e-12 {
                return Err(Error::NegativeBlockDiagonal { block: h, agent: k, value: diag });
            }
            a_d[(k, k)] = diag.max(0.0);
        }
    }
    let diff = a - &a_d;
    let norm = inf_norm(&diff);
    let (delta, epsilon) = if norm > 0.0 { (diff * (2.0 / norm), norm / 2.0) } else { (Matrix::zeros(n, n), 0.0) };
    Ok(BlockDecomposition { partition: partition.to_vec(), a_d, delta, epsilon })
}

impl BlockDecomposition {
    /// Takes `A_d` and `Delta` as given; checks block structure and `||Delta||_inf = 2`.
    pub fn from_parts(a_d: Matrix, delta: Matrix, epsilon: f64, partition: &[Vec<usize>]) -> Result<Self> {
        let n = a_d.nrows();
        if a_d.ncols() != n || delta.shape() != (n, n) {
            return Err(Error::Dimension("A_d and Delta must be square of equal size".into()));
        }
        check_partition(n, partition)?;
        let d = Self { partition: partition.to_vec(), a_d, delta, epsilon };
        for i in 0..n {
            for j in 0..n {
                if d.block_of(i) != d.block_of(j) && d.a_d[(i, j)] != 0.0 {
                    return Err(Error::InvalidSet(format!("A_d couples agents {i} and {j} across blocks")));
                }
            }
        }
        let dn = inf_norm(&d.delta);
        if dn != 0.0 && (dn - 2.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!("||Delta||_inf = {dn}, expected 2")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Precondition(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.a_d.nrows()
    }

    /// `A_d + eps * Delta`.
    pub fn matrix(&self) -> Matrix {
        &self.a_d + &self.delta * self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    pub fn block_of(&self, agent: usize) -> Option<usize> {
        self.partition.iter().position(|b| b.contains(&agent))
    }

    /// Block `h` of `A_d`, indexed by the sorted members of the block.
    pub fn block_matrix(&self, h: usize) -> Result<Matrix> {
        let members = self.members(h)?;
        Ok(submatrix(&self.a_d, &members, &members))
    }

    pub fn members(&self, h: usize) -> Result<Vec<usize>> {
        let mut m = self
            .partition
            .get(h)
            .ok_or_else(|| Error::InvalidSet(format!("block {h} outside 0..{}", self.partition.len())))?
            .clone();
        m.sort_unstable();
        Ok(m)
    }
}

/// A bank generator with global agent ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGenerator {
    pub candidate: Vec<usize>,
    pub target: usize,
    pub generator: ResidualGenerator,
}

/// Residual generators of observer `observer` designed on one block of `A_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBank {
    pub block: usize,
    pub observer: usize,
    pub members: Vec<usize>,
    /// Global ids read by the observer, in filter input order.
    pub observed: Vec<usize>,
    pub generators: Vec<LocalGenerator>,
    /// Evaluation time `d`: the largest generator horizon.
    pub horizon: usize,
}

impl LocalBank {
    pub fn from_generators(
        block: usize,
        observer: usize,
        members: Vec<usize>,
        observed: Vec<usize>,
        generators: Vec<LocalGenerator>,
    ) -> Result<Self> {
        for g in &generators {
            if g.generator.output_dim() != observed.len() {
                return Err(Error::Dimension(format!(
                    "generator reads {} outputs, observer has {}",
                    g.generator.output_dim(),
                    observed.len()
                )));
            }
        }
        let horizon = generators.iter().map(|g| g.generator.horizon).max().unwrap_or(0);
        Ok(Self { block, observer, members, observed, generators, horizon })
    }

    /// Agents of the block other than the observer.
    pub fn candidates(&self) -> Vec<usize> {
        self.members.iter().copied().filter(|&i| i != self.observer).collect()
    }
}

/// Bank for observer `j` in block `h`, designed from the block of `A_d` alone.
pub fn build_local_bank(
    d: &BlockDecomposition,
    h: usize,
    j: usize,
    k_j: usize,
    assumption: Assumption,
    tol: Tolerance,
) -> Result<LocalBank> {
    let members = d.members(h)?;
    let jl = members
        .iter()
        .position(|&i| i == j)
        .ok_or_else(|| Error::InvalidSet(format!("observer {j} not in block {h}")))?;
    let size = members.len();
    if size == 1 {
        return LocalBank::from_generators(h, j, members, vec![j], Vec::new());
    }
    let ah = d.block_matrix(h)?;
    let graph = DiGraph::from_matrix(&ah, 0.0);
    assumption.check(vertex_connectivity(&graph), k_j)?;
    let mut observed_local: BTreeSet<usize> = graph.in_neighbors(jl).into_iter().collect();
    observed_local.insert(jl);
    let observed_local: Vec<usize> = observed_local.into_iter().collect();
    let c = row_selection(size, &observed_local);
    let others: Vec<usize> = (0..size).filter(|&i| i != jl).collect();
    let set_size = (k_j + 1).min(others.len());
    let mut generators = Vec::new();
    for set in others.iter().copied().combinations(set_size) {
        for &i in &set {
            let rest: Vec<usize> = set.iter().copied().filter(|&o| o != i).collect();
            let report = synthesize_residual_generator(&ah, &selection(size, &[i]), &selection(size, &rest), &c, tol)?;
            if let Some(mut g) = report.generator {
                g.target = vec![members[i]];
                g.decoupled = rest.iter().map(|&r| members[r]).collect();
                generators.push(LocalGenerator {
                    candidate: set.iter().map(|&s| members[s]).collect(),
                    target: members[i],
                    generator: g,
                });
            }
        }
    }
    let observed = observed_local.iter().map(|&i| members[i]).collect();
    LocalBank::from_generators(h, j, members, observed, generators)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSign {
    /// `u_min <= u(t) <= u_max`.
    Positive,
    /// `u_min <= |u(t)| <= u_max`.
    Symmetric,
}

/// Admissible initial states and misbehaving inputs for certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissible {
    /// Misbehaving agents (global ids) assumed when certifying.
    pub misbehaving: Vec<usize>,
    pub x0_bound: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub sign: InputSign,
}

impl Admissible {
    fn with_u_min(&self, u_min: f64) -> Self {
        Self { u_min, ..self.clone() }
    }
}

/// Linear map from `(x(0), u_K(0..d))` to `r(d)` on the full coupled network.
fn response_map(a: &Matrix, bank: &LocalBank, g: &ResidualGenerator, inputs: &[usize]) -> Matrix {
    let n = a.nrows();
    let d = bank.horizon;
    let cols = n + inputs.len() * d;
    let mut map = Matrix::zeros(g.residual_dim(), cols);
    for col in 0..cols {
        let mut x = Vector::zeros(n);
        let mut impulse: Option<(usize, usize)> = None;
        if col < n {
            x[col] = 1.0;
        } else {
            let c = col - n;
            impulse = Some((inputs[c / d], c % d));
        }
        let mut w = Vector::zeros(g.state_dim);
        let mut r = Vector::zeros(g.residual_dim());
        for t in 0..=d {
            let y = Vector::from_iterator(bank.observed.len(), bank.observed.iter().map(|&i| x[i]));
            r = g.advance(&mut w, &y);
            if t < d {
                let mut next = a * &x;
                if let Some((agent, tau)) = impulse {
                    if tau == t {
                        next[agent] += 1.0;
                    }
                }
                x = next;
            }
        }
        map.set_column(col, &r);
    }
    map
}

fn box_bounds(n: usize, m: usize, adm: &Admissible, signs: Option<&[bool]>) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-adm.x0_bound; n];
    let mut hi = vec![adm.x0_bound; n];
    for c in 0..m {
        let (l, h) = match (adm.sign, signs) {
            (InputSign::Positive, _) => (adm.u_min, adm.u_max),
            (InputSign::Symmetric, None) => (-adm.u_max, adm.u_max),
            (InputSign::Symmetric, Some(s)) if s[c] => (adm.u_min, adm.u_max),
            (InputSign::Symmetric, Some(_)) => (-adm.u_max, -adm.u_min),
        };
        lo.push(l);
        hi.push(h);
    }
    (lo, hi)
}

/// max over the box of `||R z||_inf`, exact.
fn max_inf_norm(r: &Matrix, lo: &[f64], hi: &[f64]) -> f64 {
    r.row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, &v)| (v * (lo[c] + hi[c]) / 2.0, v.abs() * (hi[c] - lo[c]) / 2.0))
                .fold((0.0, 0.0), |acc, (m, s)| (acc.0 + m, acc.1 + s))
        })
        .map(|(mid, spread): (f64, f64)| mid.abs() + spread)
        .fold(0.0, f64::max)
}

/// min over the box of `||R z||_inf`, by linear programming.
fn min_inf_norm(r: &Matrix, lo: &[f64], hi: &[f64]) -> Result<f64> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let z: Vec<_> = lo.iter().zip(hi).map(|(&l, &h)| lp.add_var(0.0, (l, h))).collect();
    for row in r.row_iter() {
        let mut upper: Vec<_> = z.iter().zip(row.iter()).map(|(&v, &c)| (v, c)).collect();
        let mut lower = upper.clone();
        upper.push((t, -1.0));
        lower.push((t, 1.0));
        lp.add_constraint(upper.as_slice(), ComparisonOp::Le, 0.0);
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(sol.objective().max(0.0))
}

const MAX_SIGN_PATTERNS: usize = 1 << 12;

fn min_over_admissible(r: &Matrix, n: usize, m: usize, adm: &Admissible) -> Result<f64> {
    match adm.sign {
        InputSign::Positive => {
            let (lo, hi) = box_bounds(n, m, adm, None);
            min_inf_norm(r, &lo, &hi)
        }
        InputSign::Symmetric => {
            if (1usize << m.min(63)) > MAX_SIGN_PATTERNS {
                return Err(Error::Precondition(format!("{m} symmetric inputs exceed the sign enumeration limit")));
            }
            let mut best = f64::INFINITY;
            for mask in 0..(1usize << m) {
                let signs: Vec<bool> = (0..m).map(|b| mask >> b & 1 == 1).collect();
                let (lo, hi) = box_bounds(n, m, adm, Some(&signs));
                best = best.min(min_inf_norm(r, &lo, &hi)?);
            }
            Ok(best)
        }
    }
}

/// Worst-case residual magnitudes at time `d` over the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBounds {
    pub epsilon: f64,
    /// Largest statistic any well-behaving block agent can reach.
    pub upper: f64,
    /// Smallest statistic any misbehaving block agent can reach.
    pub lower: f64,
}

impl CertifiedBounds {
    pub fn separated(&self) -> bool {
        self.lower > self.upper
    }
}

/// Bounds for the statistic `min over generators targeting i of ||r(d)||_inf`.
pub fn certified_bounds(d: &BlockDecomposition, bank: &LocalBank, adm: &Admissible) -> Result<CertifiedBounds> {
    let a = d.matrix();
    let n = d.n();
    let inputs: Vec<usize> = adm.misbehaving.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if inputs.iter().any(|&i| i >= n) {
        return Err(Error::InvalidSet(format!("misbehaving set {inputs:?} outside 0..{n}")));
    }
    let local: Vec<usize> = bank.candidates().into_iter().filter(|i| inputs.contains(i)).collect();
    if local.is_empty() {
        return Err(Error::Precondition("no misbehaving agent inside the block".into()));
    }
    if adm.u_min > adm.u_max || adm.u_min < 0.0 {
        return Err(Error::Precondition(format!("input range [{}, {}] is empty", adm.u_min, adm.u_max)));
    }
    let m = inputs.len() * bank.horizon;
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for i in bank.candidates() {
        let maps: Vec<Matrix> = bank
            .generators
            .iter()
            .filter(|g| g.target == i)
            .map(|g| response_map(&a, bank, &g.generator, &inputs))
            .collect();
        if maps.is_empty() {
            continue;
        }
        if local.contains(&i) {
            for r in &maps {
                lower = lower.min(min_over_admissible(r, n, m, adm)?);
            }
        } else {
            let (lo, hi) = box_bounds(n, m, adm, None);
            let best = maps.iter().map(|r| max_inf_norm(r, &lo, &hi)).fold(f64::INFINITY, f64::min);
            upper = upper.max(best);
        }
    }
    if !lower.is_finite() {
        return Err(Error::Precondition("no generator targets a misbehaving block agent".into()));
    }
    Ok(CertifiedBounds { epsilon: d.epsilon, upper, lower })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub block: usize,
    pub observer: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub threshold: f64,
    pub horizon: usize,
    pub bounds: CertifiedBounds,
}

fn calibration(bank: &LocalBank, alpha: f64, adm: &Admissible, bounds: CertifiedBounds, threshold: f64) -> ThresholdCalibration {
    ThresholdCalibration {
        block: bank.block,
        observer: bank.observer,
        epsilon: bounds.epsilon,
        alpha,
        u_min: adm.u_min,
        u_max: adm.u_max,
        threshold,
        horizon: bank.horizon,
        bounds,
    }
}

fn failure(d: &BlockDecomposition, bank: &LocalBank, adm: &Admissible) -> Error {
    let crossing = crossing_epsilon(d, bank, adm).ok().flatten().map(|c| c.0);
    Error::CalibrationFailure { epsilon: d.epsilon, crossing }
}

/// Smallest `alpha` with `u_min = eps * alpha * u_max` separating the bounds; threshold at the
/// midpoint. At `eps = 0` the well-behaving bound vanishes and the threshold is the zero floor.
pub fn calibrate_threshold(d: &BlockDecomposition, bank: &LocalBank, adm: &Admissible) -> Result<ThresholdCalibration> {
    let eps = d.epsilon;
    if eps == 0.0 {
        let bounds = certified_bounds(d, bank, adm)?;
        return Ok(calibration(bank, 0.0, &adm.with_u_min(0.0), bounds, ZERO_FLOOR));
    }
    let at = |alpha: f64| {
        let a = adm.with_u_min(eps * alpha * adm.u_max);
        certified_bounds(d, bank, &a).map(|b| (a, b))
    };
    let alpha_max = 1.0 / eps;
    let (mut best_adm, mut best) = at(alpha_max)?;
    if !best.separated() {
        return Err(failure(d, bank, adm));
    }
    let (mut lo, mut hi) = (0.0, alpha_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (a, b) = at(mid)?;
        if b.separated() {
            hi = mid;
            best_adm = a;
            best = b;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(calibration(bank, hi, &best_adm, best, 0.5 * (best.lower + best.upper)))
}

/// Calibration on the given input range `[u_min, u_max]`.
pub fn calibrate_with_range(d: &BlockDecomposition, bank: &LocalBank, adm: &Admissible) -> Result<ThresholdCalibration> {
    let bounds = certified_bounds(d, bank, adm)?;
    if !bounds.separated() {
        return Err(failure(d, bank, adm));
    }
    let alpha = if d.epsilon > 0.0 && adm.u_max > 0.0 { adm.u_min / (d.epsilon * adm.u_max) } else { 0.0 };
    let threshold = if d.epsilon == 0.0 { ZERO_FLOOR.min(bounds.lower / 2.0) } else { 0.5 * (bounds.lower + bounds.upper) };
    Ok(calibration(bank, alpha, adm, bounds, threshold))
}

/// First `eps` where the certified bounds meet on the fixed input range, and their common value.
pub fn crossing_epsilon(d: &BlockDecomposition, bank: &LocalBank, adm: &Admissible) -> Result<Option<(f64, f64)>> {
    let gap = |eps: f64| certified_bounds(&d.with_epsilon(eps), bank, adm);
    const STEP: f64 = 0.0025;
    let mut prev = 0.0;
    if !gap(0.0)?.separated() {
        return Ok(Some((0.0, gap(0.0)?.upper)));
    }
    let steps = (1.0 / STEP).round() as usize;
    for s in 1..=steps {
        let eps = s as f64 * STEP;
        if !gap(eps)?.separated() {
            let (mut lo, mut hi) = (prev, eps);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if gap(mid)?.separated() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let b = gap(hi)?;
            return Ok(Some((hi, 0.5 * (b.upper + b.lower))));
        }
        prev = eps;
    }
    Ok(None)
}

/// `||r(d)||_inf` of every bank generator on one explicit run of `A_d + eps * Delta`.
///
/// `inputs` lists `(agent, u(0..d))`; returns `(target, candidate, norm)`.
pub fn local_residual_norms(
    d: &BlockDecomposition,
    bank: &LocalBank,
    x0: &Vector,
    inputs: &[(usize, Vec<f64>)],
) -> Result<Vec<(usize, Vec<usize>, f64)>> {
    let n = d.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state of length {} for {n} agents", x0.len())));
    }
    let agents: Vec<usize> = inputs.iter().map(|(a, _)| *a).collect();
    let b = selection(n, &agents);
    let (xs, _) = crate::numerics::simulate_lti(&d.matrix(), &b, x0, bank.horizon, |t, _| {
        Vector::from_iterator(inputs.len(), inputs.iter().map(|(_, u)| u.get(t).copied().unwrap_or(0.0)))
    });
    let ys: Vec<Vector> = xs
        .iter()
        .map(|x| Vector::from_iterator(bank.observed.len(), bank.observed.iter().map(|&i| x[i])))
        .collect();
    Ok(bank
        .generators
        .iter()
        .map(|g| {
            let r = run_residual(&g.generator, &ys);
            (g.target, g.candidate.clone(), r[bank.horizon].amax())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVerdict {
    pub block: usize,
    pub observer: usize,
    pub flagged: Vec<usize>,
    /// `(agent, min over generators targeting it of ||r(d)||_inf)`.
    pub statistics: Vec<(usize, f64)>,
    pub time: usize,
    pub threshold: f64,
}

/// Flags every block agent whose statistic at time `d` exceeds the calibrated threshold.
pub fn local_identification(bank: &LocalBank, cal: &ThresholdCalibration, ys: &[Vector]) -> Result<LocalVerdict> {
    let d = bank.horizon;
    if ys.len() <= d {
        return Err(Error::Precondition(format!("{} samples, need {}", ys.len(), d + 1)));
    }
    let mut statistics = Vec::new();
    let mut flagged = Vec::new();
    for i in bank.candidates() {
        let stat = bank
            .generators
            .iter()
            .filter(|g| g.target == i)
            .map(|g| run_residual(&g.generator, &ys[..=d])[d].amax())
            .fold(f64::INFINITY, f64::min);
        if !stat.is_finite() {
            continue;
        }
        if stat > cal.threshold {
            flagged.push(i);
        }
        statistics.push((i, stat));
    }
    Ok(LocalVerdict { block: bank.block, observer: bank.observer, flagged, statistics, time: d, threshold: cal.threshold })
}
