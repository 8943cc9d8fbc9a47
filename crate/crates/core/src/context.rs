//! Feature vectors for a single arm at a single round.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An arm's feature vector, stored densely or as sorted `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContextVector {
    Dense(Vec<f64>),
    Sparse {
        dim: usize,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

impl ContextVector {
    /// Dense vector; every component must be finite.
    pub fn dense(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("context dimension must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("component {i} is not finite")));
        }
        Ok(ContextVector::Dense(values))
    }

    /// Sparse vector. Indices must be strictly increasing and below `dim`.
    pub fn sparse(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("context dimension must be positive".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("sparse indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::InvalidInput(format!("index {last} out of range for dim {dim}")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("value {i} is not finite")));
        }
        Ok(ContextVector::Sparse {
            dim,
            indices,
            values,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        ContextVector::Dense(vec![0.0; dim])
    }

    /// Standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        ContextVector::Dense(v)
    }

    pub fn dim(&self) -> usize {
        match self {
            ContextVector::Dense(v) => v.len(),
            ContextVector::Sparse { dim, .. } => *dim,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            ContextVector::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            ContextVector::Sparse { values, .. } => values.iter().filter(|x| **x != 0.0).count(),
        }
    }

    /// Iterate over the stored `(index, value)` entries. Dense vectors yield every index.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            ContextVector::Dense(v) => Box::new(v.iter().copied().enumerate()),
            ContextVector::Sparse {
                indices, values, ..
            } => Box::new(indices.iter().copied().zip(values.iter().copied())),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            ContextVector::Dense(v) => v.clone(),
            ContextVector::Sparse {
                dim,
                indices,
                values,
            } => {
                let mut out = vec![0.0; *dim];
                for (&i, &v) in indices.iter().zip(values) {
                    out[i] = v;
                }
                out
            }
        }
    }

    /// Inner product with a dense vector of the same dimension. Caller checks dims.
    pub fn dot_dense(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.dim(), other.len());
        match self {
            ContextVector::Dense(v) => dot(v, other),
            ContextVector::Sparse {
                indices, values, ..
            } => indices
                .iter()
                .zip(values)
                .map(|(&i, &v)| v * other[i])
                .sum(),
        }
    }

    /// Inner product of two context vectors.
    pub fn dot(&self, other: &ContextVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim()));
        }
        Ok(match (self, other) {
            (ContextVector::Dense(a), ContextVector::Dense(b)) => dot(a, b),
            (ContextVector::Dense(a), s) | (s, ContextVector::Dense(a)) => s.dot_dense(a),
            (
                ContextVector::Sparse {
                    indices: ia,
                    values: va,
                    ..
                },
                ContextVector::Sparse {
                    indices: ib,
                    values: vb,
                    ..
                },
            ) => {
                // merge walk over two sorted index lists
                let (mut p, mut q, mut acc) = (0, 0, 0.0);
                while p < ia.len() && q < ib.len() {
                    match ia[p].cmp(&ib[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += va[p] * vb[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                acc
            }
        })
    }

    pub fn norm(&self) -> f64 {
        self.entries().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// `a * self + b * other`, returned dense.
    pub fn linear_combination(&self, a: f64, other: &ContextVector, b: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim()));
        }
        let mut out = vec![0.0; self.dim()];
        for (i, v) in self.entries() {
            out[i] += a * v;
        }
        for (i, v) in other.entries() {
            out[i] += b * v;
        }
        Ok(ContextVector::Dense(out))
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            ContextVector::Dense(v) => ContextVector::Dense(v.iter().map(|x| x * c).collect()),
            ContextVector::Sparse {
                dim,
                indices,
                values,
            } => ContextVector::Sparse {
                dim: *dim,
                indices: indices.clone(),
                values: values.iter().map(|x| x * c).collect(),
            },
        }
    }

    /// Uniformly distributed point on the unit sphere in `dim` dimensions.
    pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dot(&v, &v).sqrt();
            if norm > 0.0 {
                return ContextVector::Dense(v.into_iter().map(|x| x / norm).collect());
            }
        }
    }

    /// Dense storage, if this vector is dense.
    pub fn as_dense(&self) -> Option<&[f64]> {
        match self {
            ContextVector::Dense(v) => Some(v),
            ContextVector::Sparse { .. } => None,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
