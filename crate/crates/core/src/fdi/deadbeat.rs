//! Dead-beat (nilpotent) state feedback and observer gains via Luenberger chains.

use crate::error::{Error, Result};
use crate::numerics::{pinv, Matrix, Tolerance, Vector};

/// Gain `K` with `A + B K` nilpotent and its nilpotency index, for controllable `(A, B)`.
///
/// Krylov vectors `A^k b_i` are scanned in order `k` outer, `i` inner; each input chain stops at
/// its first dependent vector. With `T` the chain basis, the last row of each chain block of
/// `T^{-1}` gives `q_i`; `K` cancels `q_i A^{mu_i}` through `q_i A^{mu_i - 1} B`.
pub fn deadbeat_state_feedback(a: &Matrix, b: &Matrix, tol: Tolerance) -> Result<(Matrix, usize)> {
    let n = a.nrows();
    let m = b.ncols();
    if n == 0 {
        return Ok((Matrix::zeros(m, 0), 0));
    }
    let mut chosen: Vec<Vector> = Vec::new();
    let mut ortho: Vec<Vector> = Vec::new();
    let mut chain_len = vec![0usize; m];
    let mut active = vec![true; m];
    let mut krylov: Vec<Vector> = (0..m).map(|i| b.column(i).into_owned()).collect();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for k in 0..n {
        for i in 0..m {
            if !active[i] || chosen.len() == n {
                continue;
            }
            let v = krylov[i].clone();
            let mut r = v.clone();
            for q in &ortho {
                r -= q * q.dot(&r);
            }
            let vn = v.norm();
            if vn > 1e-14 && r.norm() > tol.rank * 10.0 * vn.max(1e-3) {
                ortho.push(&r / r.norm());
                chosen.push(v);
                order.push((i, k));
                chain_len[i] += 1;
            } else {
                active[i] = false;
            }
        }
        for v in krylov.iter_mut() {
            *v = a * &*v;
        }
    }
    if chosen.len() < n {
        return Err(Error::NotControllable { reachable: chosen.len(), n });
    }
    // Chain-ordered basis: b_1, A b_1, ..., A^{mu_1 - 1} b_1, b_2, ...
    let mut cols = Vec::with_capacity(n);
    let mut chain_end = Vec::new();
    for (i, &len) in chain_len.iter().enumerate().take(m) {
        for k in 0..len {
            let idx = order.iter().position(|&(ii, kk)| ii == i && kk == k).expect("selected");
            cols.push(chosen[idx].clone());
        }
        if len > 0 {
            chain_end.push((i, cols.len() - 1));
        }
    }
    let t = Matrix::from_columns(&cols);
    let tinv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotControllable { reachable: n - 1, n })?;
    let p = chain_end.len();
    let mut gamma = Matrix::zeros(p, m);
    let mut r = Matrix::zeros(p, n);
    for (row, &(i, end)) in chain_end.iter().enumerate() {
        let q = tinv.row(end).into_owned();
        let mu = chain_len[i];
        let qa = q * a.pow((mu - 1) as u32);
        gamma.row_mut(row).copy_from(&(&qa * b));
        r.row_mut(row).copy_from(&(&qa * a));
    }
    let k = -(pinv(&gamma, tol) * r);
    let index = chain_len.iter().copied().max().unwrap_or(0);
    let closed = a + b * &k;
    let scale = a.amax().max(1.0).powi(index as i32) * (1.0 + k.amax()).powi(index as i32);
    if closed.pow(index as u32).amax() > 1e-8 * scale {
        return Err(Error::Precondition("dead-beat assignment lost nilpotency".into()));
    }
    Ok((k, index))
}

/// Gain `L` with `A + L C` nilpotent, for observable `(A, C)`.
pub fn deadbeat_observer_gain(a: &Matrix, c: &Matrix, tol: Tolerance) -> Result<(Matrix, usize)> {
    let (k, index) = deadbeat_state_feedback(&a.transpose(), &c.transpose(), tol)?;
    Ok((k.transpose(), index))
}
