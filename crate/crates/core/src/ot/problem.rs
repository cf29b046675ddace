use crate::error::{Error, Result};

/// Target weights below this are dropped before solving and come back as
/// all-zero plan columns.
pub(crate) const ZERO_WEIGHT: f64 = 1e-15;

/// Largest tolerated deviation of the input weights from the simplex.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Square transport problem with unit row masses and column masses `P * w`.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    size: usize,
    weights: Vec<f64>,
    /// Row-major `P x P`.
    cost: Vec<f64>,
}

impl TransportProblem {
    /// Validates and renormalises `weights` to sum to one.
    pub fn new(weights: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        let size = weights.len();
        if size == 0 {
            return Err(Error::InvalidTransportProblem("empty problem".into()));
        }
        if cost.len() != size * size {
            return Err(Error::InvalidTransportProblem(format!(
                "cost has {} entries, expected {}",
                cost.len(),
                size * size
            )));
        }
        if let Some(c) = cost.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidTransportProblem(format!(
                "costs must be finite and nonnegative, found {c}"
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidTransportProblem(format!(
                "weights must be finite and nonnegative, found {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidTransportProblem(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            size,
            weights,
            cost,
        })
    }

    pub fn uniform(cost: Vec<f64>) -> Result<Self> {
        let p = (cost.len() as f64).sqrt().round() as usize;
        Self::new(vec![1.0 / p.max(1) as f64; p], cost)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cost_matrix(&self) -> &[f64] {
        &self.cost
    }

    #[inline]
    pub fn cost(&self, p: usize, q: usize) -> f64 {
        self.cost[p * self.size + q]
    }

    pub(crate) fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// Indices of columns with non-negligible weight.
    pub(crate) fn active_columns(&self) -> Vec<usize> {
        (0..self.size)
            .filter(|&q| self.weights[q] >= ZERO_WEIGHT)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    Entropic,
}

/// Coupling with rows summing to one and columns summing to `P * w_q`.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    size: usize,
    /// Row-major `P x P`.
    coupling: Vec<f64>,
    /// Transport cost `sum_pq rho_pq c_pq`.
    pub objective: f64,
    /// Transport cost plus `lambda * sum rho (log rho - 1)`; equal to
    /// `objective` for exact plans.
    pub regularised_objective: f64,
    pub kind: SolverKind,
    pub nonzero_count: usize,
}

impl TransportPlan {
    pub(crate) fn from_coupling(
        size: usize,
        coupling: Vec<f64>,
        cost: &[f64],
        kind: SolverKind,
        regulariser: f64,
    ) -> Self {
        let objective = coupling.iter().zip(cost).map(|(r, c)| r * c).sum();
        let entropy: f64 = coupling
            .iter()
            .map(|&r| if r > 0.0 { r * (r.ln() - 1.0) } else { 0.0 })
            .sum();
        let regularised_objective = objective + regulariser * entropy;
        let nonzero_count = coupling.iter().filter(|&&r| r > 0.0).count();
        Self {
            size,
            coupling,
            objective,
            regularised_objective,
            kind,
            nonzero_count,
        }
    }

    /// Plan from a raw coupling, e.g. hand-built for testing.
    pub fn from_dense(size: usize, coupling: Vec<f64>, cost: &[f64]) -> Result<Self> {
        if coupling.len() != size * size || cost.len() != size * size {
            return Err(Error::invalid("coupling and cost must be P x P"));
        }
        Ok(Self::from_coupling(
            size,
            coupling,
            cost,
            SolverKind::Exact,
            0.0,
        ))
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.coupling[p * self.size + q]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.coupling[p * self.size..(p + 1) * self.size]
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    /// Positive entries as `(p, q, rho_pq)` in row-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let n = self.size;
        self.coupling
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .map(|(i, &r)| (i / n, i % n, r))
            .collect()
    }

    /// Write the positive entries as CSV rows `p,q,value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "q", "value"])?;
        for (p, q, v) in self.nonzeros() {
            w.write_record(&[p.to_string(), q.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest absolute deviations of the plan marginals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalError {
    pub row: f64,
    pub column: f64,
}

impl MarginalError {
    pub fn max(&self) -> f64 {
        self.row.max(self.column)
    }
}

pub fn validate_plan(plan: &TransportPlan, weights: &[f64]) -> MarginalError {
    let n = plan.size;
    let mut row: f64 = 0.0;
    let mut col_sums = vec![0.0; n];
    for p in 0..n {
        let r = plan.row(p);
        row = row.max((r.iter().sum::<f64>() - 1.0).abs());
        for (c, v) in col_sums.iter_mut().zip(r) {
            *c += v;
        }
    }
    let column = col_sums
        .iter()
        .zip(weights)
        .map(|(c, w)| (c - n as f64 * w).abs())
        .fold(0.0, f64::max);
    MarginalError { row, column }
}
