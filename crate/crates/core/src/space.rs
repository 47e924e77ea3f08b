//! Finite state spaces, optionally embedded in Euclidean space.
//!
//! Every matrix-valued object in this crate (kernels, weights, measures)
//! carries a handle to the space it lives on, so cross-space operations fail
//! loudly instead of silently mixing indices. The embedding is what connects
//! a finite grid chain back to the continuous model it approximates.

use std::sync::Arc;

use crate::error::{CoreError, Result};

#[derive(Debug, PartialEq)]
struct SpaceData {
    labels: Vec<String>,
    /// One point in R^d per state, present for grid-extracted chains.
    embedding: Option<Vec<Vec<f64>>>,
}

/// An ordered finite state space. Cheap to clone; clones share storage.
#[derive(Debug, Clone)]
pub struct StateSpace {
    data: Arc<SpaceData>,
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data) || self.data == other.data
    }
}

impl StateSpace {
    /// A space identified by labels alone.
    pub fn from_labels<S: Into<String>>(labels: Vec<S>) -> Result<Self> {
        Self::build(labels.into_iter().map(Into::into).collect(), None)
    }

    /// A space whose states are points in R^d.
    pub fn with_embedding<S: Into<String>>(labels: Vec<S>, points: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(labels.into_iter().map(Into::into).collect(), Some(points))
    }

    /// `points` equally spaced grid nodes on `[lo, hi]`, labelled `x0..x{n-1}`.
    pub fn grid_1d(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CoreError::Domain {
                detail: format!("grid endpoints must satisfy lo < hi, got [{lo}, {hi}]"),
            });
        }
        if points < 2 {
            return Err(CoreError::Configuration {
                detail: format!("grid needs at least 2 nodes, got {points}"),
            });
        }
        let step = (hi - lo) / (points - 1) as f64;
        let coords: Vec<Vec<f64>> = (0..points).map(|i| vec![lo + step * i as f64]).collect();
        let labels = (0..points).map(|i| format!("x{i}")).collect();
        Self::build(labels, Some(coords))
    }

    fn build(labels: Vec<String>, embedding: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(CoreError::Configuration {
                detail: "state space must be nonempty".into(),
            });
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(CoreError::Configuration {
                    detail: format!("duplicate state label {a:?}"),
                });
            }
        }
        if let Some(points) = &embedding {
            if points.len() != labels.len() {
                return Err(CoreError::DimensionMismatch {
                    context: "state space embedding",
                    expected: labels.len(),
                    got: points.len(),
                });
            }
            let dim = points[0].len();
            for (i, p) in points.iter().enumerate() {
                if p.len() != dim {
                    return Err(CoreError::DimensionMismatch {
                        context: "state space embedding point",
                        expected: dim,
                        got: p.len(),
                    });
                }
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(CoreError::Configuration {
                        detail: format!("embedding point {i} has a non-finite coordinate"),
                    });
                }
            }
        }
        Ok(StateSpace {
            data: Arc::new(SpaceData { labels, embedding }),
        })
    }

    pub fn len(&self) -> usize {
        self.data.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.data.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.data.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.data.labels.iter().position(|l| l == label)
    }

    /// Embedded coordinates of state `index`, if the space has an embedding.
    pub fn point(&self, index: usize) -> Option<&[f64]> {
        self.data
            .embedding
            .as_ref()
            .map(|points| points[index].as_slice())
    }

    pub fn embedding(&self) -> Option<&[Vec<f64>]> {
        self.data.embedding.as_deref()
    }

    /// Index of the embedded node nearest to `x` in Euclidean distance.
    /// Exact ties resolve to the lower index.
    pub fn nearest_node(&self, x: &[f64]) -> Result<usize> {
        let points = self.embedding().ok_or_else(|| CoreError::Configuration {
            detail: "nearest-node lookup needs an embedded space".into(),
        })?;
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (i, p) in points.iter().enumerate() {
            if p.len() != x.len() {
                return Err(CoreError::DimensionMismatch {
                    context: "nearest-node query point",
                    expected: p.len(),
                    got: x.len(),
                });
            }
            let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        Ok(best)
    }
}
