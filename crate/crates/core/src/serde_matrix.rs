//! Row-major `Vec<Vec<f64>>` representation of matrices in config files.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    to_rows(m).serialize(ser)
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<DMatrix<f64>, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(de)?;
    from_rows(&rows).map_err(serde::de::Error::custom)
}
