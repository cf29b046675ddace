use crate::error::{Error, Result};

/// Shortest distance between two points of the unit circle `[0, 1)`.
///
/// Inputs outside `[0, 1)` are wrapped modulo 1 first.
pub fn periodic_distance(a: f64, b: f64) -> f64 {
    let d = (a.rem_euclid(1.0) - b.rem_euclid(1.0)).abs();
    d.min(1.0 - d)
}

/// `M` equispaced nodes at `s_m = m / M`, `m = 0..M`, on the periodic unit
/// interval. Nodes are indexed from zero throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicMesh {
    nodes: usize,
}

impl PeriodicMesh {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::invalid("mesh needs at least one node"));
        }
        Ok(Self { nodes })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.nodes as f64
    }

    #[inline]
    pub fn position(&self, node: usize) -> f64 {
        node as f64 / self.nodes as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes).map(|m| self.position(m)).collect()
    }

    /// Number of mesh steps on the shorter arc between two nodes.
    #[inline]
    pub fn index_gap(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j) % self.nodes;
        d.min(self.nodes - d)
    }

    /// Periodic distance between two nodes, computed from the index gap so
    /// it is exact in units of the mesh spacing.
    #[inline]
    pub fn node_distance(&self, i: usize, j: usize) -> f64 {
        self.index_gap(i, j) as f64 / self.nodes as f64
    }
}
