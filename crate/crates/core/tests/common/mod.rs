//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use netguard_core::consensus::ConsensusMatrix;
use netguard_core::graph::{random_k_connected_graph, DiGraph};
use netguard_core::numerics::{Matrix, Subspace, Tolerance, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rank by Gaussian elimination with full pivoting.
pub fn elimination_rank(m: &Matrix, tol: f64) -> usize {
    let mut a = m.clone();
    let (r, c) = a.shape();
    let scale = a.amax().max(1.0);
    let mut rank = 0;
    for step in 0..r.min(c) {
        let mut best = (step, step, 0.0);
        for i in step..r {
            for j in step..c {
                if a[(i, j)].abs() > best.2 {
                    best = (i, j, a[(i, j)].abs());
                }
            }
        }
        if best.2 <= tol * scale {
            break;
        }
        a.swap_rows(step, best.0);
        a.swap_columns(step, best.1);
        for i in step + 1..r {
            let f = a[(i, step)] / a[(step, step)];
            for j in step..c {
                let v = a[(step, j)];
                a[(i, j)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Orthonormal basis of the column span by modified Gram-Schmidt.
pub fn gram_schmidt(m: &Matrix, tol: f64) -> Matrix {
    let mut cols: Vec<Vector> = Vec::new();
    let scale = m.amax().max(1.0);
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let nv = v.norm();
        if nv > tol * scale {
            cols.push(v / nv);
        }
    }
    if cols.is_empty() {
        Matrix::zeros(m.nrows(), 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Strong connectivity by forward and backward BFS.
pub fn strongly_connected(n: usize, edges: &BTreeSet<(usize, usize)>, removed: &BTreeSet<usize>) -> bool {
    let alive: Vec<usize> = (0..n).filter(|v| !removed.contains(v)).collect();
    if alive.len() <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = BTreeSet::from([alive[0]]);
        let mut q = VecDeque::from([alive[0]]);
        while let Some(v) = q.pop_front() {
            for &(a, b) in edges {
                let (from, to) = if forward { (a, b) } else { (b, a) };
                if from == v && !removed.contains(&to) && seen.insert(to) {
                    q.push_back(to);
                }
            }
        }
        seen.len() == alive.len()
    };
    reach(true) && reach(false)
}

/// Smallest vertex set whose removal breaks strong connectivity, by exhaustive search.
pub fn brute_connectivity(g: &DiGraph) -> usize {
    let n = g.n();
    let edges: BTreeSet<(usize, usize)> = g.edges().into_iter().collect();
    if !strongly_connected(n, &edges, &BTreeSet::new()) {
        return 0;
    }
    for k in 1..n.saturating_sub(1) {
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let removed: BTreeSet<usize> = (0..n).filter(|v| mask & (1 << v) != 0).collect();
            if !strongly_connected(n, &edges, &removed) {
                return k;
            }
        }
    }
    n - 1
}

/// Random strongly connected consensus matrix with self-loops.
pub fn random_consensus<R: Rng>(n: usize, rng: &mut R) -> ConsensusMatrix {
    let g = random_k_connected_graph(n, 1, rng).expect("sampler");
    ConsensusMatrix::random_on(&g, rng).expect("random weights give a consensus matrix")
}

/// Random consensus matrix on a graph with connectivity at least `k`.
pub fn random_k_consensus<R: Rng>(n: usize, k: usize, rng: &mut R) -> ConsensusMatrix {
    let g = random_k_connected_graph(n, k, rng).expect("sampler");
    ConsensusMatrix::random_on(&g, rng).expect("random weights give a consensus matrix")
}

/// Power iteration for the stationary vector: rows of `A^t` converge to `pi`.
pub fn power_stationary(a: &Matrix, steps: usize) -> Vector {
    let n = a.nrows();
    let mut p = Vector::from_element(n, 1.0 / n as f64).transpose();
    for _ in 0..steps {
        p = &p * a;
    }
    p.transpose()
}

const GS_TOL: f64 = 1e-9;

fn tol() -> Tolerance {
    Tolerance::default()
}

pub fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

/// Orthonormal basis of the orthogonal complement of span(q), q orthonormal.
pub fn perp(q: &Matrix) -> Matrix {
    let n = q.nrows();
    let full = gram_schmidt(&hstack(q, &Matrix::identity(n, n)), GS_TOL);
    full.columns(q.ncols(), n - q.ncols()).into_owned()
}

pub fn kernel(m: &Matrix) -> Matrix {
    perp(&gram_schmidt(&m.transpose(), GS_TOL))
}

/// Plain fixpoint for V*: `V <- Ker C ∩ A^{-1}(V + Im B)` written as one kernel.
pub fn oracle_vstar(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let mut v = kernel(c);
    for _ in 0..=a.nrows() {
        let w = perp(&gram_schmidt(&hstack(&v, b), GS_TOL));
        let stacked = {
            let rows = w.transpose() * a;
            let mut s = Matrix::zeros(c.nrows() + rows.nrows(), a.ncols());
            s.rows_mut(0, c.nrows()).copy_from(c);
            s.rows_mut(c.nrows(), rows.nrows()).copy_from(&rows);
            s
        };
        v = kernel(&stacked);
    }
    v
}

/// Plain fixpoint for S*: `S <- Im B + A (S ∩ Ker C)`.
pub fn oracle_sstar(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let mut s = gram_schmidt(b, GS_TOL);
    for _ in 0..=a.nrows() {
        let cap = if s.ncols() == 0 { s.clone() } else { &s * kernel(&(c * &s)) };
        s = gram_schmidt(&hstack(b, &(a * cap)), GS_TOL);
    }
    s
}

pub fn as_subspace(q: &Matrix) -> Subspace {
    Subspace::span(q.nrows(), &q.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>(), tol())
}


/// Random triple with small integer entries, so degenerate structure appears often.
pub fn random_triple(seed: u64) -> (Matrix, Matrix, Matrix) {
    let mut g = rng(seed);
    let n = g.random_range(1..=4);
    let m = g.random_range(1..=n);
    let p = g.random_range(1..=n);
    let pick = |g: &mut rand_chacha::ChaCha8Rng| if g.random_bool(0.5) { 0.0 } else { g.random_range(-2..=2) as f64 };
    let a = Matrix::from_fn(n, n, |_, _| pick(&mut g));
    let b = Matrix::from_fn(n, m, |_, _| pick(&mut g));
    let c = Matrix::from_fn(p, n, |_, _| pick(&mut g));
    (a, b, c)
}
