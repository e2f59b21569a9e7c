//! Square operators with a diagonal fast path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Diag(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Operator {
    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Operator::Diag(DVector::from_element(d, s))
    }

    pub fn zeros(d: usize) -> Self {
        Self::scaled_identity(d, 0.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Diag(v) => v.len(),
            Operator::Dense(m) => m.nrows(),
        }
    }

    pub fn is_diag(&self) -> bool {
        matches!(self, Operator::Diag(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Diag(v) => DMatrix::from_diagonal(v),
            Operator::Dense(m) => m.clone(),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Operator::Diag(v) => v.clone(),
            Operator::Dense(m) => m.diagonal(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Diag(v) => v.component_mul(x),
            Operator::Dense(m) => m * x,
        }
    }

    pub fn scale(&self, s: f64) -> Operator {
        match self {
            Operator::Diag(v) => Operator::Diag(v * s),
            Operator::Dense(m) => Operator::Dense(m * s),
        }
    }

    /// `self + s·I`
    pub fn add_identity(&self, s: f64) -> Operator {
        match self {
            Operator::Diag(v) => Operator::Diag(v.add_scalar(s)),
            Operator::Dense(m) => {
                let mut m = m.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += s;
                }
                Operator::Dense(m)
            }
        }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        match (self, other) {
            (Operator::Diag(a), Operator::Diag(b)) => Operator::Diag(a + b),
            _ => Operator::Dense(self.to_dense() + other.to_dense()),
        }
    }

    pub fn mul(&self, other: &Operator) -> Operator {
        match (self, other) {
            (Operator::Diag(a), Operator::Diag(b)) => Operator::Diag(a.component_mul(b)),
            _ => Operator::Dense(self.to_dense() * other.to_dense()),
        }
    }

    pub fn transpose(&self) -> Operator {
        match self {
            Operator::Diag(_) => self.clone(),
            Operator::Dense(m) => Operator::Dense(m.transpose()),
        }
    }

    /// `A C Aᵀ` with `A = self`.
    pub fn sandwich(&self, c: &Operator) -> Operator {
        match (self, c) {
            (Operator::Diag(a), Operator::Diag(cv)) => {
                Operator::Diag(a.component_mul(a).component_mul(cv))
            }
            _ => {
                let a = self.to_dense();
                Operator::Dense(&a * c.to_dense() * a.transpose())
            }
        }
    }

    /// Replaces a dense matrix by `(M + Mᵀ)/2`.
    pub fn symmetrized(self) -> Operator {
        match self {
            Operator::Diag(_) => self,
            Operator::Dense(m) => Operator::Dense((&m + m.transpose()) * 0.5),
        }
    }
}
