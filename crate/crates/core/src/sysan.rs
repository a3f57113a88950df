//! Analysis of triples `(A, B_K, C_j)`: Rosenbrock pencil, left-invertibility, invariant
//! zeros, PBH tests, zero-dynamics classification and invisible attack constructions.

use std::collections::BTreeSet;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::consensus::{AttackKind, AttackModel, ConsensusMatrix};
use crate::error::{Error, Result};
use crate::fdi::{friend, max_controlled_invariant};
use crate::numerics::{
    complex_rank, eigenvalues, hstack, pinv, selection, spectral_radius, to_complex, CMatrix, CVector, Matrix,
    Subspace, Tolerance, Vector,
};

/// Radius of the circle holding the random normal-rank evaluation points.
pub const EVAL_RADIUS: f64 = 2.7;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub tol: Tolerance,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { tol: Tolerance::default(), seed: DEFAULT_SEED }
    }
}

/// `(A, B, C)` with optional consensus metadata (0-based agent ids).
#[derive(Debug, Clone)]
pub struct Triple {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Agents whose inputs form the columns of `B`.
    pub inputs: Vec<usize>,
    /// Agents whose states form the rows of `C`.
    pub outputs: Vec<usize>,
    pub observer: Option<usize>,
}

impl Triple {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
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
        Ok(Self { a, b, c, inputs: Vec::new(), outputs: Vec::new(), observer: None })
    }

    /// Canonical-vector triple: inputs on `inputs`, outputs on rows `outputs`.
    pub fn from_sets(a: &Matrix, inputs: &[usize], outputs: &[usize]) -> Result<Self> {
        let n = a.nrows();
        for &i in inputs.iter().chain(outputs) {
            if i >= n {
                return Err(Error::InvalidSet(format!("agent {i} outside 0..{n}")));
            }
        }
        let mut t = Self::new(a.clone(), selection(n, inputs), selection(n, outputs).transpose())?;
        t.inputs = inputs.to_vec();
        t.outputs = outputs.to_vec();
        Ok(t)
    }

    /// `(A, B_K, C_j)` for a consensus network and observer `j`.
    pub fn consensus(c: &ConsensusMatrix, k: &[usize], j: usize) -> Result<Self> {
        if j >= c.n() {
            return Err(Error::InvalidSet(format!("observer {j} outside 0..{}", c.n())));
        }
        let mut t = Self::from_sets(c.a(), k, &c.observed_agents(j))?;
        t.observer = Some(j);
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `P(z) = [zI - A, B; C, 0]`.
    pub fn pencil(&self, z: Complex<f64>) -> CMatrix {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut pz = CMatrix::zeros(n + p, n + m);
        for r in 0..n {
            for c in 0..n {
                pz[(r, c)] = Complex::new(-self.a[(r, c)], 0.0);
            }
            pz[(r, r)] += z;
            for c in 0..m {
                pz[(r, n + c)] = Complex::new(self.b[(r, c)], 0.0);
            }
        }
        for r in 0..p {
            for c in 0..n {
                pz[(n + r, c)] = Complex::new(self.c[(r, c)], 0.0);
            }
        }
        pz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalRank {
    pub rank: usize,
    #[serde(serialize_with = "ser_complex_list")]
    pub points: Vec<Complex<f64>>,
    pub ranks: Vec<usize>,
    pub seed: u64,
}

/// Rank of `P(z)` at random points on `|z| = 2.7`; three agreeing evaluations are accepted,
/// otherwise up to twelve are drawn and the maximum is kept.
pub fn pencil_normal_rank(t: &Triple, opts: &AnalysisOptions) -> NormalRank {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points = Vec::new();
    let mut ranks = Vec::new();
    for k in 0..12 {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = Complex::from_polar(EVAL_RADIUS, theta);
        points.push(z);
        ranks.push(complex_rank(&t.pencil(z), opts.tol));
        if k >= 2 && ranks.iter().all(|r| *r == ranks[0]) {
            break;
        }
    }
    let rank = ranks.iter().copied().max().unwrap_or(0);
    NormalRank { rank, points, ranks, seed: opts.seed }
}

pub fn is_left_invertible(t: &Triple, opts: &AnalysisOptions) -> bool {
    pencil_normal_rank(t, opts).rank == t.n() + t.m()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantZero {
    #[serde(serialize_with = "ser_complex")]
    pub value: Complex<f64>,
    /// Unit-norm `x0` with `(zI - A) x0 + B g = 0`, `C x0 = 0`.
    #[serde(serialize_with = "ser_cvector")]
    pub state_direction: CVector,
    #[serde(serialize_with = "ser_cvector")]
    pub input_direction: CVector,
    /// max(||(zI - A) x0 + B g||, ||C x0||).
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "zeros", rename_all = "snake_case")]
pub enum ZeroSet {
    Finite(Vec<InvariantZero>),
    /// Not left-invertible: every complex number is a zero.
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PencilAnalysis {
    pub normal_rank: NormalRank,
    pub left_invertible: bool,
    pub zeros: ZeroSet,
}

impl PencilAnalysis {
    /// Finite zeros with repeats merged (within `1e-6`).
    pub fn distinct_zeros(&self) -> Vec<Complex<f64>> {
        let mut out: Vec<Complex<f64>> = Vec::new();
        if let ZeroSet::Finite(zs) = &self.zeros {
            for z in zs {
                if !out.iter().any(|w| (w - z.value).norm() < 1e-6) {
                    out.push(z.value);
                }
            }
        }
        out
    }

    pub fn has_no_zeros(&self) -> bool {
        matches!(&self.zeros, ZeroSet::Finite(z) if z.is_empty())
    }
}

/// Re-substitution threshold for accepting a zero candidate.
const ZERO_RESIDUAL_TOL: f64 = 1e-8;

/// Number of independent compressions a zero must survive.
const ZERO_RUNS: usize = 3;

fn same_zero(a: Complex<f64>, b: Complex<f64>) -> bool {
    (a - b).norm() < 1e-6 * (1.0 + a.norm())
}

/// Finite invariant zeros: the pencil is compressed to square form (`W C` with `W` an
/// orthonormal `m x p` row compression), its generalized eigenvalues are obtained by a
/// shift-invert standard eigensolve, and each candidate is kept only if `P(z)` has a null
/// vector with nonzero state part satisfying the defining equations.
pub fn invariant_zeros(t: &Triple, opts: &AnalysisOptions) -> PencilAnalysis {
    let normal_rank = pencil_normal_rank(t, opts);
    let left_invertible = normal_rank.rank == t.n() + t.m();
    if !left_invertible {
        return PencilAnalysis { normal_rank, left_invertible, zeros: ZeroSet::Infinite };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    // Independent compressions and shifts; a zero is kept only if every run finds it, with the
    // smallest multiplicity seen. Perturbed infinite eigenvalues move between runs.
    let mut clusters: Option<Vec<(InvariantZero, usize)>> = None;
    for _ in 0..ZERO_RUNS {
        let mut local: Vec<(InvariantZero, usize)> = Vec::new();
        for iz in compressed_pencil_eigenvalues(t, &mut rng).into_iter().filter_map(|z| verify_zero(t, z)) {
            match local.iter_mut().find(|c| same_zero(c.0.value, iz.value)) {
                Some(c) => c.1 += 1,
                None => local.push((iz, 1)),
            }
        }
        clusters = Some(match clusters {
            None => local,
            Some(prev) => prev
                .into_iter()
                .filter_map(|(iz, count)| {
                    local
                        .iter()
                        .find(|c| same_zero(c.0.value, iz.value))
                        .map(|c| (iz, count.min(c.1)))
                })
                .collect(),
        });
    }
    let clusters = clusters.unwrap_or_default();
    let mut found: Vec<InvariantZero> = clusters
        .into_iter()
        .flat_map(|(iz, count)| std::iter::repeat_n(iz, count))
        .collect();
    found.sort_by(|a, b| {
        a.value
            .re
            .partial_cmp(&b.value.re)
            .unwrap()
            .then(a.value.im.partial_cmp(&b.value.im).unwrap())
    });
    PencilAnalysis { normal_rank, left_invertible, zeros: ZeroSet::Finite(found) }
}

fn compressed_pencil_eigenvalues(t: &Triple, rng: &mut ChaCha8Rng) -> Vec<Complex<f64>> {
    let (n, m, p) = (t.n(), t.m(), t.p());
    let w = if m == p {
        Matrix::identity(m, p)
    } else {
        let g = Matrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
        g.qr().q().transpose()
    };
    let size = n + m;
    let mut e = Matrix::zeros(size, size);
    for i in 0..n {
        e[(i, i)] = 1.0;
    }
    let mut f = Matrix::zeros(size, size);
    f.view_mut((0, 0), (n, n)).copy_from(&t.a);
    f.view_mut((0, n), (n, m)).copy_from(&(-&t.b));
    f.view_mut((n, 0), (m, n)).copy_from(&(-(&w * &t.c)));
    for _ in 0..20 {
        let s0 = rng.random_range(1.5..3.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let shifted = &e * s0 - &f;
        let sv = crate::numerics::svd(&shifted).singular_values;
        if sv.min() <= 1e-10 * sv.max() {
            continue;
        }
        let Some(mmat) = shifted.lu().solve(&e) else { continue };
        let scale = mmat.amax().max(1.0);
        return eigenvalues(&mmat)
            .into_iter()
            .filter(|mu| mu.norm() > 1e-8 * scale)
            .map(|mu| Complex::new(s0, 0.0) - mu.inv())
            .collect();
    }
    Vec::new()
}

fn verify_zero(t: &Triple, z: Complex<f64>) -> Option<InvariantZero> {
    let (n, m) = (t.n(), t.m());
    let pz = t.pencil(z);
    let svd = crate::numerics::svd(&pz);
    let vt = svd.v_t?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let v: CVector = vt.row(k).adjoint();
    let x0 = v.rows(0, n).into_owned();
    let g = v.rows(n, m).into_owned();
    let xn = x0.norm();
    if xn < 1e-6 * v.norm() {
        return None;
    }
    let x0 = x0 / Complex::new(xn, 0.0);
    let g = g / Complex::new(xn, 0.0);
    let ca = to_complex(&t.a);
    let r1 = (&x0 * z - &ca * &x0 + to_complex(&t.b) * &g).norm();
    let r2 = (to_complex(&t.c) * &x0).norm();
    let scale = 1.0 + z.norm() + t.a.norm();
    let residual = r1.max(r2);
    (residual <= ZERO_RESIDUAL_TOL * scale).then(|| InvariantZero {
        value: clean(z),
        state_direction: x0,
        input_direction: g,
        residual,
    })
}

fn clean(z: Complex<f64>) -> Complex<f64> {
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    Complex::new(snap(z.re), snap(z.im))
}

/// PBH: `rank [lambda I - A; C] = n` for every eigenvalue with `|lambda| >= 1`.
pub fn pbh_detectable(a: &Matrix, c: &Matrix) -> bool {
    let n = a.nrows();
    let tol = Tolerance::with_rank(1e-8);
    for lambda in eigenvalues(a) {
        if lambda.norm() < 1.0 - 1e-9 {
            continue;
        }
        let mut m = CMatrix::zeros(n + c.nrows(), n);
        for r in 0..n {
            for col in 0..n {
                m[(r, col)] = Complex::new(-a[(r, col)], 0.0);
            }
            m[(r, r)] += lambda;
        }
        for r in 0..c.nrows() {
            for col in 0..n {
                m[(n + r, col)] = Complex::new(c[(r, col)], 0.0);
            }
        }
        if complex_rank(&m, tol) < n {
            return false;
        }
    }
    true
}

pub fn pbh_stabilizable(a: &Matrix, b: &Matrix) -> bool {
    pbh_detectable(&a.transpose(), &b.transpose())
}

/// `G = -A e_j` (n x 1) for the output `e_j^T`; checks `rho(A + G e_j^T) < 1`.
pub fn local_observer_gain(c: &ConsensusMatrix, j: usize) -> Result<Matrix> {
    if j >= c.n() {
        return Err(Error::InvalidSet(format!("observer {j} outside 0..{}", c.n())));
    }
    let g = -c.a().columns(j, 1).into_owned();
    let closed = c.a() + &g * selection(c.n(), &[j]).transpose();
    let rho = spectral_radius(&closed);
    if rho >= 1.0 {
        return Err(Error::Precondition(format!("closed loop spectral radius {rho} >= 1")));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDynamicsClass {
    /// Left-invertible and no edge from `K` to `V \ (N_j u K)`.
    StableCase1,
    /// Left-invertible and no edge from `V \ (N_j u K)` to `N_j`.
    StableCase2,
    /// `K` contained in `N_j`.
    StableCase3,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroDynamicsReport {
    pub class: ZeroDynamicsClass,
    pub analysis: PencilAnalysis,
    /// Moduli of the finite zeros.
    pub moduli: Vec<f64>,
}

/// Structural stability classes of the zero dynamics of a consensus triple.
pub fn zero_dynamics_stability(c: &ConsensusMatrix, t: &Triple, opts: &AnalysisOptions) -> ZeroDynamicsReport {
    let analysis = invariant_zeros(t, opts);
    let k: BTreeSet<usize> = t.inputs.iter().copied().collect();
    let nj: BTreeSet<usize> = t.outputs.iter().copied().collect();
    let rest: BTreeSet<usize> = (0..c.n()).filter(|v| !k.contains(v) && !nj.contains(v)).collect();
    let g = c.graph();
    let no_k_to_rest = k.iter().all(|&a| rest.iter().all(|&b| !g.has_edge(a, b)));
    let no_rest_to_nj = rest.iter().all(|&a| nj.iter().all(|&b| !g.has_edge(a, b)));
    let class = if k.is_subset(&nj) {
        ZeroDynamicsClass::StableCase3
    } else if analysis.left_invertible && no_k_to_rest {
        ZeroDynamicsClass::StableCase1
    } else if analysis.left_invertible && no_rest_to_nj {
        ZeroDynamicsClass::StableCase2
    } else {
        ZeroDynamicsClass::Unknown
    };
    let moduli = match &analysis.zeros {
        ZeroSet::Finite(z) => z.iter().map(|z| z.value.norm()).collect(),
        ZeroSet::Infinite => Vec::new(),
    };
    ZeroDynamicsReport { class, analysis, moduli }
}

/// Attack hidden behind a vertex cut: the cut agents cancel the influence of the far side.
#[derive(Debug, Clone, PartialEq)]
pub struct UndetectableAttack {
    /// Cut agents followed by the extra agents, sorted within each group.
    pub agents: Vec<usize>,
    pub cut: Vec<usize>,
    pub extra: Vec<usize>,
    /// Agents that can reach the observer without crossing the cut.
    pub observed_side: Vec<usize>,
    pub hidden_side: Vec<usize>,
    /// `|agents| x n` state feedback; cut rows equal `-A[s, hidden]`, extra rows are zero.
    pub gain: Matrix,
}

impl UndetectableAttack {
    /// Initial state: `hidden` on the hidden side, zero elsewhere.
    pub fn initial_state(&self, n: usize, hidden: &Vector) -> Result<Vector> {
        if hidden.len() != self.hidden_side.len() {
            return Err(Error::Dimension(format!(
                "{} hidden values for {} hidden agents",
                hidden.len(),
                self.hidden_side.len()
            )));
        }
        let mut x = Vector::zeros(n);
        for (v, &i) in hidden.iter().zip(&self.hidden_side) {
            x[i] = *v;
        }
        Ok(x)
    }

    /// Attack models: feedback for every agent, plus explicit signals for extra agents.
    pub fn attack_models(&self, extra_signals: &[(usize, Vec<f64>)]) -> Vec<AttackModel> {
        let mut models: Vec<AttackModel> = self
            .agents
            .iter()
            .enumerate()
            .map(|(r, &a)| {
                AttackModel::new(
                    a,
                    AttackKind::StateFeedback { gain: self.gain.row(r).iter().copied().collect(), offset: 0.0 },
                )
            })
            .collect();
        for (agent, values) in extra_signals {
            if self.extra.contains(agent) {
                models.push(AttackModel::new(*agent, AttackKind::Sequence { values: values.clone() }));
            }
        }
        models
    }
}

/// Cut-based undetectable attack against observer `j`.
pub fn construct_undetectable_attack(
    c: &ConsensusMatrix,
    cut: &[usize],
    extra: &[usize],
    j: usize,
) -> Result<UndetectableAttack> {
    let n = c.n();
    let cut_set: BTreeSet<usize> = cut.iter().copied().collect();
    let extra_set: BTreeSet<usize> = extra.iter().copied().collect();
    if let Some(v) = cut.iter().chain(extra).find(|&&v| v >= n) {
        return Err(Error::InvalidSet(format!("agent {v} outside 0..{n}")));
    }
    if cut_set.contains(&j) || extra_set.contains(&j) {
        return Err(Error::InvalidSet(format!("observer {j} cannot misbehave")));
    }
    if !cut_set.is_disjoint(&extra_set) {
        return Err(Error::InvalidSet("cut and extra agents overlap".into()));
    }
    let observed = c.graph().reaching(j, &cut_set);
    let hidden: Vec<usize> = (0..n)
        .filter(|v| !observed.contains(v) && !cut_set.contains(v))
        .collect();
    if hidden.is_empty() {
        return Err(Error::NotACut(cut_set.into_iter().collect()));
    }
    if let Some(v) = extra.iter().find(|v| !hidden.contains(v)) {
        return Err(Error::Precondition(format!("extra agent {v} is not on the hidden side")));
    }
    let cut_v: Vec<usize> = cut_set.into_iter().collect();
    let extra_v: Vec<usize> = extra_set.into_iter().collect();
    let agents: Vec<usize> = cut_v.iter().chain(&extra_v).copied().collect();
    let mut gain = Matrix::zeros(agents.len(), n);
    for (r, &s) in cut_v.iter().enumerate() {
        for &h in &hidden {
            gain[(r, h)] = -c.a()[(s, h)];
        }
    }
    Ok(UndetectableAttack {
        agents,
        cut: cut_v,
        extra: extra_v,
        observed_side: observed.into_iter().collect(),
        hidden_side: hidden,
        gain,
    })
}

/// First nonzero Markov parameter `C A^nu B`, searching `nu < n^2`.
pub fn first_markov_index(t: &Triple) -> Result<(usize, Matrix)> {
    let cap = (t.n() * t.n()).max(1);
    let mut ca = t.c.clone();
    for nu in 0..cap {
        let mk = &ca * &t.b;
        if !mk.is_empty() && mk.amax() > 1e-12 {
            return Ok((nu, mk));
        }
        ca = &ca * &t.a;
    }
    Err(Error::MarkovIndexExceeded(cap))
}

/// Output-zeroing input `u(k) = -(C A^nu B)^+ C A^(nu+1) (K_nu A)^k x0` with
/// `K_nu = I - B (C A^nu B)^+ C A^nu` (homogeneous part zero).
#[derive(Debug, Clone)]
pub struct OutputZeroing {
    pub nu: usize,
    pub markov: Matrix,
    /// `-(C A^nu B)^+ C A^(nu+1)`.
    pub input_map: Matrix,
    /// `K_nu A`.
    pub propagator: Matrix,
    pub x0: Vector,
}

impl OutputZeroing {
    pub fn inputs(&self, steps: usize) -> Vec<Vector> {
        let mut s = self.x0.clone();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            out.push(&self.input_map * &s);
            s = &self.propagator * &s;
        }
        out
    }
}

pub fn output_zeroing_input(t: &Triple, x0: &Vector, tol: Tolerance) -> Result<OutputZeroing> {
    let n = t.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state of length {} for n = {n}", x0.len())));
    }
    let (nu, markov) = first_markov_index(t)?;
    let mut ca = t.c.clone();
    let scale = x0.amax().max(1.0);
    for l in 0..=nu {
        if (&ca * x0).amax() > 1e-9 * scale {
            return Err(Error::Precondition(format!("C A^{l} x0 != 0")));
        }
        ca = &ca * &t.a;
    }
    let ca_nu = &t.c * t.a.pow(nu as u32);
    let gp = pinv(&markov, tol);
    let k_nu = Matrix::identity(n, n) - &t.b * &gp * &ca_nu;
    let input_map = -(&gp * (&ca_nu * &t.a));
    Ok(OutputZeroing { nu, markov, input_map, propagator: k_nu * &t.a, x0: x0.clone() })
}

/// Two attacks by different sets with identical outputs at the observer.
#[derive(Debug, Clone)]
pub struct UnidentifiabilityWitness {
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    /// Controlled-invariant subspace of `(A, [B_K1 B_K2], C_j)`.
    pub v_star: Subspace,
    /// `x1(0) - x2(0)`, an element of `v_star`.
    pub difference: Vector,
    /// Friend `F` with `(A + [B_K1 B_K2] F) v_star` inside `v_star`.
    pub friend: Matrix,
}

impl UnidentifiabilityWitness {
    /// Simulates both attacks from `base` (scenario 2) and `base + difference` (scenario 1);
    /// returns the attack models of each scenario for `steps` steps.
    pub fn attacks(&self, a: &Matrix, steps: usize) -> (Vec<AttackModel>, Vec<AttackModel>) {
        let closed = a + hstack(&[
            &selection(a.nrows(), &self.k1),
            &selection(a.nrows(), &self.k2),
        ]) * &self.friend;
        let mut xd = self.difference.clone();
        let mut u: Vec<Vector> = Vec::with_capacity(steps);
        for _ in 0..steps {
            u.push(&self.friend * &xd);
            xd = &closed * &xd;
        }
        let series = |row: usize, sign: f64| -> Vec<f64> { u.iter().map(|v| sign * v[row]).collect() };
        let m1 = self
            .k1
            .iter()
            .enumerate()
            .map(|(r, &a)| AttackModel::new(a, AttackKind::Sequence { values: series(r, 1.0) }))
            .collect();
        let m2 = self
            .k2
            .iter()
            .enumerate()
            .map(|(r, &a)| {
                AttackModel::new(a, AttackKind::Sequence { values: series(self.k1.len() + r, -1.0) })
            })
            .collect();
        (m1, m2)
    }
}

/// Zero dynamics of `(A, [B_K1 B_K2], C_j)` split into two indistinguishable attacks.
pub fn unidentifiability_witness(
    c: &ConsensusMatrix,
    k1: &[usize],
    k2: &[usize],
    j: usize,
    tol: Tolerance,
) -> Result<Option<UnidentifiabilityWitness>> {
    let s1: BTreeSet<usize> = k1.iter().copied().collect();
    let s2: BTreeSet<usize> = k2.iter().copied().collect();
    if s1 == s2 {
        return Err(Error::Precondition("candidate sets must differ".into()));
    }
    if k1.is_empty() || k2.is_empty() {
        return Err(Error::Precondition("candidate sets must be nonempty".into()));
    }
    let n = c.n();
    if let Some(v) = k1.iter().chain(k2).chain(std::iter::once(&j)).find(|&&v| v >= n) {
        return Err(Error::InvalidSet(format!("agent {v} outside 0..{n}")));
    }
    let b = hstack(&[&selection(n, k1), &selection(n, k2)]);
    let cj = c.output_matrix(j);
    let v_star = max_controlled_invariant(c.a(), &b, &cj, tol);
    if v_star.is_zero() {
        return Ok(None);
    }
    let f = friend(c.a(), &b, &v_star, tol)?;
    let mut difference = v_star.basis().column_sum();
    if difference.norm() < 1e-6 {
        difference = v_star.basis().column(0).into_owned();
    }
    difference /= difference.norm();
    Ok(Some(UnidentifiabilityWitness { k1: k1.to_vec(), k2: k2.to_vec(), v_star, difference, friend: f }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAnalysis {
    pub agents: Vec<usize>,
    pub observer: usize,
    pub analysis: PencilAnalysis,
}

/// Pencil analysis of many `(K, j)` pairs on one network, in parallel.
pub fn analyze_batch(a: &Matrix, pairs: &[(Vec<usize>, usize)], opts: &AnalysisOptions) -> Result<Vec<PairAnalysis>> {
    let graph = crate::graph::DiGraph::from_matrix(a, 0.0);
    pairs
        .par_iter()
        .map(|(k, j)| {
            let mut outputs: BTreeSet<usize> = graph.in_neighbors(*j).into_iter().collect();
            outputs.insert(*j);
            let outputs: Vec<usize> = outputs.into_iter().collect();
            let t = Triple::from_sets(a, k, &outputs)?;
            Ok(PairAnalysis { agents: k.clone(), observer: *j, analysis: invariant_zeros(&t, opts) })
        })
        .collect()
}

#[derive(Serialize)]
struct ComplexRepr {
    re: f64,
    im: f64,
}

fn ser_complex<S: Serializer>(z: &Complex<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    ComplexRepr { re: z.re, im: z.im }.serialize(s)
}

fn ser_complex_list<S: Serializer>(zs: &[Complex<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    zs.iter()
        .map(|z| ComplexRepr { re: z.re, im: z.im })
        .collect::<Vec<_>>()
        .serialize(s)
}

fn ser_cvector<S: Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
}
