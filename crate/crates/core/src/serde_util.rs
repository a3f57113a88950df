//! Row-major JSON encodings for nalgebra matrices and vectors.

pub mod matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Matrix from equal-length rows; an empty list gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err("rows of unequal length".into());
        }
        Ok(Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
    }
}

pub mod vector {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod subspace {
    use serde::{Serialize, Serializer};

    use crate::numerics::Subspace;

    #[derive(Serialize)]
    struct Repr {
        ambient_dim: usize,
        dim: usize,
        basis: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(v: &Subspace, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            ambient_dim: v.ambient_dim(),
            dim: v.dim(),
            basis: super::matrix::to_rows(v.basis()),
        }
        .serialize(s)
    }
}
