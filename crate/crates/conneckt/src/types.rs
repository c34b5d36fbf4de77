//! Shared domain types: recordings, ground-truth networks, association matrices.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A per-neuron time-series matrix: `values[[i, t]]` is the sample of
/// neuron `i` at time index `t`. The same type carries both raw
/// fluorescence and the output of any filtering stage.
///
/// `time_offset` is the index of the first retained sample relative to
/// the original recording; window filters that drop leading samples
/// increment it so that series from different pipeline configurations
/// can be aligned in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// p x T, neuron-major.
    pub values: Array2<f64>,
    pub time_offset: usize,
}

impl Recording {
    pub fn new(values: Array2<f64>, time_offset: usize) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape(format!(
                "recording must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(((i, t), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "non-finite value {v} at neuron {i}, sample {t}"
            )));
        }
        Ok(Recording {
            values,
            time_offset,
        })
    }

    /// Neuron count.
    pub fn neurons(&self) -> usize {
        self.values.nrows()
    }

    /// Retained sample count.
    pub fn samples(&self) -> usize {
        self.values.ncols()
    }
}

/// Directed ground-truth graph over `p` neurons. Edges are ordered
/// pairs with 0-based indices; self-loops are rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Network {
    pub fn new(p: usize) -> Self {
        Network {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Inserts a directed edge. Returns an error for self-loops or
    /// out-of-range indices.
    pub fn insert(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to {
            return Err(Error::Parameter(format!("self-loop ({from}, {to}) not allowed")));
        }
        if from >= self.p || to >= self.p {
            return Err(Error::Parameter(format!(
                "edge ({from}, {to}) outside node range [0, {})",
                self.p
            )));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in deterministic (lexicographic) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }
}

/// Real-valued p x p edge scores. `symmetric` is a construction
/// guarantee, not a runtime check: producers set it only when
/// `scores[[i, j]] == scores[[j, i]]` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    pub scores: Array2<f64>,
    pub symmetric: bool,
}

impl AssociationMatrix {
    pub fn new(scores: Array2<f64>, symmetric: bool) -> Result<Self> {
        if scores.nrows() != scores.ncols() {
            return Err(Error::Shape(format!(
                "association matrix must be square, got {}x{}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        if let Some(((i, j), v)) = scores.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite score {v} at ({i}, {j})")));
        }
        Ok(AssociationMatrix { scores, symmetric })
    }

    pub fn p(&self) -> usize {
        self.scores.nrows()
    }
}
