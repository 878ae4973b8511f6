use crate::error::{Error, Result};

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Input(format!(
                "matrix buffer has {} values, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Matrix { data, n_rows, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Input(format!(
                    "row {} has {} values, expected {}",
                    i,
                    row.len(),
                    n_cols
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { data, n_rows: rows.len(), n_cols })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix { data: vec![0.0; n_rows * n_cols], n_rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, n_rows: indices.len(), n_cols: self.n_cols }
    }
}

/// Feature matrix plus response vector.
///
/// Responses are stored as reals; class labels are the integers `0..K` encoded
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub response: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, response: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.n_rows() != response.len() {
            return Err(Error::Input(format!(
                "{} feature rows but {} responses",
                features.n_rows(),
                response.len()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::Input(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature value in row {}",
                pos / features.n_cols().max(1)
            )));
        }
        Ok(Dataset { features, response, feature_names })
    }

    /// Dataset with generated names `x1..xp`.
    pub fn unnamed(features: Matrix, response: Vec<f64>) -> Result<Self> {
        let names = (1..=features.n_cols()).map(|j| format!("x{j}")).collect();
        Dataset::new(features, response, names)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            response: indices.iter().map(|&i| self.response[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}
