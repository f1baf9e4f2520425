use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Visual,
    Audio,
    Joint,
}

impl From<crate::nn::Modality> for FeatureSource {
    fn from(m: crate::nn::Modality) -> Self {
        match m {
            crate::nn::Modality::Visual => FeatureSource::Visual,
            crate::nn::Modality::Audio => FeatureSource::Audio,
        }
    }
}

/// Row-major `rows × dim` matrix of finite features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, source: FeatureSource) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::data("feature matrix must have at least one row and column"));
        }
        if data.len() != rows * dim {
            return Err(Error::config(format!(
                "feature buffer holds {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            source,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: FeatureSource) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::config("feature rows have differing lengths"));
        }
        Self::new(rows.len(), dim, rows.concat(), source)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// Root of the mean squared row norm; the natural length scale of the data.
    pub fn rms_norm(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.rows as f64).sqrt()
    }

    pub fn l2_normalized(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.iter_rows() {
            data.extend(l2_normalize(row));
        }
        Self {
            data,
            ..self.clone()
        }
    }

    /// Row-wise `[normalize(a_i) ‖ normalize(b_i)]`.
    pub fn concat_normalized(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<Self> {
        if a.rows != b.rows {
            return Err(Error::data(format!(
                "feature matrices are not row-aligned: {} vs {} rows",
                a.rows, b.rows
            )));
        }
        let dim = a.dim + b.dim;
        let mut data = Vec::with_capacity(a.rows * dim);
        for i in 0..a.rows {
            data.extend(concat_normalized(a.row(i), b.row(i)));
        }
        Self::new(a.rows, dim, data, FeatureSource::Joint)
    }

    /// PCA projection onto the top `out_dim` components, whitened to unit variance.
    pub fn pca_whitened(&self, out_dim: usize) -> Result<Self> {
        if out_dim == 0 || out_dim > self.dim {
            return Err(Error::field(
                "kmeans.pca_dim",
                format!("must lie in [1, {}]", self.dim),
            ));
        }
        let n = self.rows as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let centered = DMatrix::from_fn(self.rows, self.dim, |i, j| self.row(i)[j] - mean[j]);
        let cov = (centered.transpose() * &centered) / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut data = Vec::with_capacity(self.rows * out_dim);
        for i in 0..self.rows {
            for &c in &order[..out_dim] {
                let scale = 1.0 / (eig.eigenvalues[c].max(0.0) + 1e-5).sqrt();
                let proj: f64 = (0..self.dim)
                    .map(|j| centered[(i, j)] * eig.eigenvectors[(j, c)])
                    .sum();
                data.push(proj * scale);
            }
        }
        Self::new(self.rows, out_dim, data, self.source)
    }
}

/// Unit-length copy of `v`; vectors with norm below 1e-12 map to zero.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / norm).collect()
}

pub fn concat_normalized(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = l2_normalize(a);
    out.extend(l2_normalize(b));
    out
}
