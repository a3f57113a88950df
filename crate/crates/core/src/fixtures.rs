//! Reference networks and filter data used by examples, tests and the CLI.
//!
//! Agent numbers in doc comments are 1-based; all indices passed to the library are 0-based.

use crate::numerics::Matrix;

fn rows<const C: usize>(r: &[[f64; C]]) -> Matrix {
    Matrix::from_fn(r.len(), C, |i, j| r[i][j])
}

/// Eight-node 3-connected network, four-decimal weights (rows sum to 1 within 1e-4).
pub fn eight_node_raw() -> Matrix {
    rows(&[
        [0.2795, 0.1628, 0.0, 0.1512, 0.4066, 0.0, 0.0, 0.0],
        [0.0143, 0.3363, 0.3469, 0.0, 0.0, 0.3025, 0.0, 0.0],
        [0.0, 0.0718, 0.1904, 0.2438, 0.0, 0.0, 0.4941, 0.0],
        [0.0844, 0.0, 0.4457, 0.0660, 0.0, 0.0, 0.0, 0.4040],
        [0.1709, 0.0, 0.0, 0.0, 0.2694, 0.2472, 0.0, 0.3125],
        [0.0, 0.4199, 0.0, 0.0, 0.1575, 0.3293, 0.0932, 0.0],
        [0.0, 0.0, 0.0174, 0.0, 0.0, 0.4241, 0.2850, 0.2735],
        [0.0, 0.0, 0.0, 0.3024, 0.2039, 0.0, 0.2065, 0.2873],
    ])
}

/// [`eight_node_raw`] with rows rescaled to sum to one.
pub fn eight_node() -> Matrix {
    let mut m = eight_node_raw();
    for mut r in m.row_iter_mut() {
        let s: f64 = r.sum();
        r /= s;
    }
    m
}

/// Reference basis (8x5) of the unobservability subspace of the eight-node network for
/// decoupled agents {3, 7} seen by agent 1.
pub fn eight_node_unobservability_basis() -> Matrix {
    rows(&[
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -0.6624, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -0.4740, -0.6597, 0.0],
        [0.0, 0.0, -0.8798, 0.3548, 0.0],
        [0.4116, 0.0, -0.0327, 0.0132, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
        [0.9114, 0.0, 0.0148, -0.0060, 0.0],
    ])
}

/// Reference residual filter (F, E, M, H) for target 4, decoupled {3, 7}, observer 1.
pub fn eight_node_filter() -> (Matrix, Matrix, Matrix, Matrix) {
    let f = rows(&[[0.0, 0.0, 0.0], [0.0014, -0.3222, -0.3424], [-0.0013, 0.3031, 0.3222]]);
    let e = rows(&[
        [0.2795, 0.1628, 0.1512, 0.4066],
        [0.0138, 0.4982, -0.2280, 0.2003],
        [0.0082, -0.6095, 0.3012, -0.1568],
    ]);
    let m = rows(&[[-1.0, 0.0, 0.0], [0.0, 0.9999, 0.0128]]);
    let h = rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, -0.7491, 0.5832, -0.3142]]);
    (f, e, m, h)
}

/// Reference controlled-invariant basis for inputs {2, 4, 6, 8} seen by agent 1 (columns).
pub fn eight_node_vstar_basis() -> Matrix {
    let mut v = Matrix::zeros(8, 3);
    v[(2, 0)] = 1.0;
    v[(5, 1)] = 0.7842;
    v[(7, 1)] = -0.6205;
    v[(6, 2)] = 1.0;
    v
}

/// Reference friend F_b (4x8) for inputs {2, 4, 6, 8}.
pub fn eight_node_friend() -> Matrix {
    rows(&[
        [0.0, 0.0, -0.3469, 0.0, 0.0, -0.1860, 0.0, 0.1472],
        [0.0, 0.0, -0.4457, 0.0, 0.0, 0.1966, 0.0, -0.1555],
        [0.0, 0.0, 0.0, 0.0, 0.0, -0.1063, -0.1148, 0.0841],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0636, -0.1894, -0.0503],
    ])
}

/// Eight-node row-stochastic matrix (not irreducible) whose triple with inputs {1, 2}
/// and output rows {3, 4, 5} is left-invertible with invariant zeros.
pub fn zeros_example() -> Matrix {
    rows(&[
        [1.0 / 2.0, 0.0, 1.0 / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0 / 2.0, 0.0, 0.0, 0.0, 1.0 / 2.0, 0.0, 0.0],
        [0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0],
        [1.0 / 16.0, 0.0, 5.0 / 8.0, 1.0 / 16.0, 0.0, 1.0 / 4.0, 0.0, 0.0],
        [0.0, 1.0 / 16.0, 1.0 / 4.0, 0.0, 5.0 / 16.0, 0.0, 3.0 / 8.0, 0.0],
        [1.0 / 2.0, 0.0, 0.0, 1.0 / 2.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0, 0.0, 0.0, 0.0],
        [1.0 / 2.0, 1.0 / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ])
}

/// Nine-node consensus matrix whose triple with inputs {1, 2} and output rows {5, 6, 7}
/// is not left-invertible.
pub fn nine_node_circle() -> Matrix {
    let t = 1.0 / 3.0;
    let q = 1.0 / 4.0;
    rows(&[
        [t, t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, t],
        [t, t, t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, q, q, q, 0.0, 0.0, 0.0, q, 0.0],
        [0.0, 0.0, q, q, q, 0.0, 0.0, 0.0, q],
        [0.0, 0.0, 0.0, t, t, t, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, t, t, t, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, t, t, t, 0.0],
        [0.0, 0.0, q, 0.0, 0.0, 0.0, q, q, q],
        [q, 0.0, 0.0, q, 0.0, 0.0, 0.0, q, q],
    ])
}

/// Partition {1,2,3}, {4,5,6,7} of the seven-node weakly coupled network (0-based).
pub fn seven_node_partition() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2], vec![3, 4, 5, 6]]
}

/// Reference block-diagonal part and coupling direction of the seven-node network.
pub fn seven_node_parts() -> (Matrix, Matrix) {
    let mut ad = Matrix::zeros(7, 7);
    for i in 0..3 {
        for j in 0..3 {
            ad[(i, j)] = 1.0 / 3.0;
        }
    }
    for i in 3..7 {
        for j in 3..7 {
            ad[(i, j)] = 1.0 / 4.0;
        }
    }
    let mut delta = Matrix::zeros(7, 7);
    for &(i, j, v) in &[
        (1, 1, -1.0),
        (1, 3, 1.0),
        (2, 2, -1.0),
        (2, 6, 1.0),
        (3, 2, 1.0),
        (3, 4, -1.0),
        (6, 2, 1.0),
        (6, 6, -1.0),
    ] {
        delta[(i, j)] = v;
    }
    (ad, delta)
}

/// `A_d + eps * Delta` for the seven-node network.
pub fn seven_node(eps: f64) -> Matrix {
    let (ad, delta) = seven_node_parts();
    ad + delta * eps
}

/// Reference local filters of agent 1: (F, E, M, H) targeting agent 2 (decoupling 3)
/// and targeting agent 3 (decoupling 2). Inputs are the states of agents 1, 2, 3.
pub fn seven_node_filters() -> [(Matrix, Matrix, Matrix, Matrix); 2] {
    let t = 1.0 / 3.0;
    let f2 = rows(&[[-t, -t], [t, t]]);
    let e2 = rows(&[[-2.0 * t, 0.0, -t], [2.0 * t, 0.0, t]]);
    let m2 = rows(&[[1.0, 0.0], [0.0, -1.0]]);
    let h2 = rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let f3 = rows(&[[-t, t], [-t, t]]);
    let e3 = rows(&[[-2.0 * t, -t, 0.0], [-2.0 * t, -t, 0.0]]);
    let m3 = rows(&[[-1.0, 0.0], [0.0, 1.0]]);
    let h3 = rows(&[[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    [(f2, e2, m2, h2), (f3, e3, m3, h3)]
}
