use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_schema, SCHEMA};
use crate::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Parameter matrix of an (n,k)-PMD: row `i` is the distribution of the i-th CRV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct ParamMatrix {
    k: usize,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    n: usize,
    k: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixJson> for ParamMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        check_schema(&j.schema)?;
        if j.rows.len() != j.n {
            return Err(Error::InvalidMatrix(format!("n = {} but {} rows given", j.n, j.rows.len())));
        }
        ParamMatrix::new(j.k, j.rows)
    }
}

impl From<ParamMatrix> for MatrixJson {
    fn from(m: ParamMatrix) -> Self {
        MatrixJson { schema: Some(SCHEMA.into()), n: m.rows.len(), k: m.k, rows: m.rows }
    }
}

impl ParamMatrix {
    pub fn new(k: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidMatrix("k must be at least 1".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidMatrix(format!("row {i} has {} entries, expected {k}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidMatrix(format!("row {i} has entry {v} outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidMatrix(format!("row {i} sums to {s}")));
            }
        }
        Ok(ParamMatrix { k, rows })
    }

    /// Build from rows that are probability vectors up to rounding noise;
    /// each row is rescaled to sum to one.
    pub fn normalized(k: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| {
                let r: Vec<f64> = r.into_iter().map(|v| v.max(0.0)).collect();
                let s: f64 = r.iter().sum();
                if s <= 0.0 {
                    r
                } else {
                    r.iter().map(|v| v / s).collect()
                }
            })
            .collect();
        Self::new(k, rows)
    }

    pub fn empty(k: usize) -> Self {
        ParamMatrix { k, rows: Vec::new() }
    }

    /// `n` identical rows.
    pub fn repeated(row: &[f64], n: usize) -> Result<Self> {
        Self::new(row.len(), vec![row.to_vec(); n])
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// Mean vector of the PMD.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for r in &self.rows {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m
    }

    /// Full k×k covariance of the PMD (singular: rows of the sum are constrained).
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.k, self.k);
        for r in &self.rows {
            s += crv_covariance(r);
        }
        s
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> ParamMatrix {
        ParamMatrix { k: self.k, rows: idx.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    /// Stack two matrices with equal `k`.
    pub fn concat(&self, other: &ParamMatrix) -> Result<ParamMatrix> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: other.k });
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(ParamMatrix { k: self.k, rows })
    }

    /// View as a GMD whose invisible column is `drop`.
    pub fn to_gmd(&self, drop: usize) -> GmdParams {
        let rows =
            self.rows.iter().map(|r| r.iter().enumerate().filter(|(j, _)| *j != drop).map(|(_, v)| *v).collect()).collect();
        GmdParams { visible: self.k - 1, rows }
    }
}

/// Parameters of a generalized multinomial distribution: the invisible column is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmdParams {
    visible: usize,
    rows: Vec<Vec<f64>>,
}

impl GmdParams {
    pub fn new(visible: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != visible {
                return Err(Error::InvalidMatrix(format!("row {i} has {} entries, expected {visible}", row.len())));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidMatrix(format!("row {i} has an entry outside [0,1]")));
            }
            if row.iter().sum::<f64>() > 1.0 + ROW_TOL {
                return Err(Error::InvalidMatrix(format!("row {i} has visible mass above 1")));
            }
        }
        Ok(GmdParams { visible, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of visible columns.
    pub fn dims(&self) -> usize {
        self.visible
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn invisible(&self, i: usize) -> f64 {
        (1.0 - self.rows[i].iter().sum::<f64>()).max(0.0)
    }

    /// Equivalent PMD with the invisible column appended last.
    pub fn to_pmd(&self) -> ParamMatrix {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                r.push(self.invisible(i));
                r
            })
            .collect();
        ParamMatrix { k: self.visible + 1, rows }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.visible];
        for r in &self.rows {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.visible, self.visible);
        for r in &self.rows {
            s += crv_covariance(r);
        }
        s
    }
}

/// Covariance of a (truncated) CRV with the given visible probabilities.
pub fn crv_covariance(row: &[f64]) -> DMatrix<f64> {
    let d = row.len();
    DMatrix::from_fn(d, d, |i, j| if i == j { row[i] * (1.0 - row[i]) } else { -row[i] * row[j] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn rejects_bad_rows() {
        assert!(ParamMatrix::new(2, vec![vec![0.5, 0.6]]).is_err());
        assert!(ParamMatrix::new(2, vec![vec![1.5, -0.5]]).is_err());
        assert!(ParamMatrix::new(3, vec![vec![0.5, 0.5]]).is_err());
        assert!(ParamMatrix::new(2, vec![vec![0.25, 0.75]]).is_ok());
    }

    #[test]
    fn json_round_trip_carries_schema() {
        let m = ParamMatrix::new(2, vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"schema\":\"pmdlab/1\""));
        assert!(s.contains("\"n\":2"));
        let back: ParamMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"schema":"other/9","n":0,"k":2,"rows":[]}"#;
        assert!(serde_json::from_str::<ParamMatrix>(bad).is_err());
        let wrong_n = r#"{"n":3,"k":2,"rows":[[0.5,0.5]]}"#;
        assert!(serde_json::from_str::<ParamMatrix>(wrong_n).is_err());
    }

    #[test]
    fn crv_covariance_closed_form() {
        let s = crv_covariance(&[0.25, 0.25]);
        assert!((s[(0, 0)] - 0.1875).abs() < 1e-15);
        assert!((s[(0, 1)] + 0.0625).abs() < 1e-15);
        assert!((min_eigenvalue(&s) - 0.125).abs() < 1e-12);
        let z = crv_covariance(&[0.0, 1.0]);
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gmd_round_trip() {
        let m = ParamMatrix::new(3, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]]).unwrap();
        let g = m.to_gmd(0);
        assert_eq!(g.dims(), 2);
        assert!((g.invisible(1) - 0.6).abs() < 1e-15);
        let p = g.to_pmd();
        for (a, b) in p.row(0).iter().zip([0.3, 0.5, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
