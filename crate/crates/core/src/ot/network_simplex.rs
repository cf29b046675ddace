//! Primal network simplex on the complete bipartite transport graph.
//!
//! The basis is a spanning tree over the row and column nodes plus an
//! artificial root. Leaving arcs are chosen so the tree stays strongly
//! feasible (every zero-flow tree arc points towards the root), which rules
//! out cycling under any entering rule.

use super::problem::{SolverKind, TransportPlan, TransportProblem};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const UP: f64 = 1.0;
const DOWN: f64 = -1.0;

/// Entering-arc selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PivotRule {
    /// Cyclic scan over rows taking the most negative reduced cost of the
    /// first row that has one.
    #[default]
    BlockSearch,
    /// Lowest-index arc with negative reduced cost.
    FirstEligible,
}

/// Starting basis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialBasis {
    /// Every node hangs from the root by a big-M artificial arc.
    #[default]
    Artificial,
    /// North-west corner staircase on rows and columns sorted by cost to an
    /// extreme point. Optimal from the start for one-dimensional convex
    /// costs.
    SortedNorthWest,
}

/// Reusable solver workspace. Buffers are kept between solves, so a single
/// instance per worker avoids repeated allocation.
#[derive(Clone, Debug, Default)]
pub struct NetworkSimplex {
    rule: PivotRule,
    start: InitialBasis,
    // Graph: real arc `e = i * cols + j` runs from row node `i` to column
    // node `rows + j`; artificial arc `real + u` joins node `u` and the root.
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    art_up: Vec<bool>,
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    // Spanning tree over `rows + cols + 1` nodes.
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<f64>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    stack: Vec<usize>,
    next_arc: usize,
    pivots: usize,
}

/// Solve `problem` exactly with the default pivot rule.
pub fn solve_exact(problem: &TransportProblem) -> Result<TransportPlan> {
    NetworkSimplex::new(PivotRule::default()).solve(problem)
}

impl NetworkSimplex {
    pub fn new(rule: PivotRule) -> Self {
        Self {
            rule,
            ..Self::default()
        }
    }

    pub fn with_initial_basis(mut self, start: InitialBasis) -> Self {
        self.start = start;
        self
    }

    pub fn solve(&mut self, problem: &TransportProblem) -> Result<TransportPlan> {
        let p = problem.size();
        let active = problem.active_columns();
        let n = active.len();
        self.rows = p;
        self.cols = n;
        self.cost.clear();
        for i in 0..p {
            self.cost.extend(active.iter().map(|&q| problem.cost(i, q)));
        }
        let demand: Vec<f64> = active
            .iter()
            .map(|&q| p as f64 * problem.weights()[q])
            .collect();
        self.run(&demand, problem.max_cost())?;

        let mut coupling = vec![0.0; p * p];
        for i in 0..p {
            for (j, &q) in active.iter().enumerate() {
                coupling[i * p + q] = self.flow[i * n + j];
            }
        }
        Ok(TransportPlan::from_coupling(
            p,
            coupling,
            problem.cost_matrix(),
            SolverKind::Exact,
            0.0,
        ))
    }

    /// Number of pivots taken by the most recent solve.
    pub fn last_pivot_count(&self) -> usize {
        self.pivots
    }

    #[inline]
    fn real_arcs(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    fn endpoints(&self, e: usize) -> (usize, usize) {
        let real = self.real_arcs();
        if e < real {
            (e / self.cols, self.rows + e % self.cols)
        } else {
            let u = e - real;
            let root = self.rows + self.cols;
            if self.art_up[u] {
                (u, root)
            } else {
                (root, u)
            }
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        let real = self.real_arcs();
        if e < real {
            self.cost[e]
        } else {
            self.art_cost[e - real]
        }
    }

    fn run(&mut self, demand: &[f64], max_cost: f64) -> Result<()> {
        let (rows, cols) = (self.rows, self.cols);
        let nodes = rows + cols;
        let real = rows * cols;
        let art_cost = (max_cost + 1.0) * nodes as f64;
        // Potentials are path sums of arc costs, the largest being `art_cost`.
        let tol = 64.0 * f64::EPSILON * art_cost;

        self.flow.clear();
        self.flow.resize(real + nodes, 0.0);
        self.in_tree.clear();
        self.in_tree.resize(real + nodes, false);
        self.art_up.clear();
        self.art_cost.clear();
        for v in [
            &mut self.parent,
            &mut self.pred,
            &mut self.first_child,
            &mut self.next_sib,
            &mut self.prev_sib,
        ] {
            v.clear();
            v.resize(nodes + 1, NONE);
        }
        self.dir.clear();
        self.dir.resize(nodes + 1, UP);
        self.depth.clear();
        self.depth.resize(nodes + 1, 0);
        self.pi.clear();
        self.pi.resize(nodes + 1, 0.0);
        self.next_arc = 0;
        // Artificial arcs leave the basis for good once they leave it.
        for u in 0..nodes {
            self.art_up.push(u < rows);
            self.art_cost.push(if u < rows { 0.0 } else { art_cost });
        }
        match self.start {
            InitialBasis::Artificial => self.artificial_start(demand),
            InitialBasis::SortedNorthWest => self.northwest_start(demand),
        }

        let max_pivots = 50 * (real + nodes) + 10_000;
        let mut pivots = 0;
        while let Some(e_in) = self.find_entering(tol) {
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::InvalidTransportProblem(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
            self.pivot(e_in)?;
        }
        self.pivots = pivots;

        let residual: f64 = self.flow[real..].iter().sum();
        if residual > 1e-9 * rows as f64 {
            return Err(Error::InfeasibleTransport { residual });
        }
        Ok(())
    }

    /// Star basis: rows send their unit supply to the root and the root
    /// feeds every column, all through artificial arcs.
    fn artificial_start(&mut self, demand: &[f64]) {
        let (rows, cols) = (self.rows, self.cols);
        let root = rows + cols;
        let real = rows * cols;
        for u in 0..rows + cols {
            let e = real + u;
            self.in_tree[e] = true;
            self.pred[u] = e;
            if u < rows {
                self.dir[u] = UP;
                self.flow[e] = 1.0;
            } else {
                self.dir[u] = DOWN;
                self.flow[e] = demand[u - rows];
            }
            self.attach(u, root);
        }
        let children: Vec<usize> = (0..rows + cols).collect();
        for u in children {
            self.refresh_subtree(u);
        }
    }

    /// Initial basis from the north-west corner rule on rows and columns
    /// sorted by their cost to an extreme row. The staircase of cells is a
    /// path hung from the root through the first row's artificial arc.
    /// Ties move down a row, so every zero-flow arc points towards the root
    /// and the tree is strongly feasible.
    fn northwest_start(&mut self, demand: &[f64]) {
        let (rows, cols) = (self.rows, self.cols);
        let root = rows + cols;
        let real = rows * cols;
        let cost = &self.cost;
        // In one dimension the farthest point from any point is extreme, and
        // the sorted staircase is then the optimal monotone coupling.
        let far = (0..cols)
            .max_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let mut row_order: Vec<usize> = (0..rows).collect();
        row_order.sort_by(|&a, &b| {
            cost[a * cols + far]
                .total_cmp(&cost[b * cols + far])
                .then(a.cmp(&b))
        });
        let anchor = row_order[rows - 1];
        let mut col_order: Vec<usize> = (0..cols).collect();
        col_order.sort_by(|&a, &b| {
            cost[anchor * cols + b]
                .total_cmp(&cost[anchor * cols + a])
                .then(a.cmp(&b))
        });

        let first = row_order[0];
        self.pred[first] = real + first;
        self.dir[first] = UP;
        self.in_tree[real + first] = true;
        self.attach(first, root);

        let (mut a, mut b) = (0, 0);
        let mut supply: f64 = 1.0;
        let mut need = demand[col_order[0]];
        let mut entering_col = true;
        loop {
            let (i, j) = (row_order[a], col_order[b]);
            let e = i * cols + j;
            let x = supply.min(need).max(0.0);
            self.flow[e] = x;
            self.in_tree[e] = true;
            if entering_col {
                self.pred[rows + j] = e;
                self.dir[rows + j] = DOWN;
                self.attach(rows + j, i);
            } else {
                self.pred[i] = e;
                self.dir[i] = UP;
                self.attach(i, rows + j);
            }
            if a + 1 == rows && b + 1 == cols {
                break;
            }
            let move_down = b + 1 == cols || (a + 1 < rows && supply <= need);
            if move_down {
                need -= x;
                a += 1;
                supply = 1.0;
                entering_col = false;
            } else {
                supply -= x;
                b += 1;
                need = demand[col_order[b]];
                entering_col = true;
            }
        }
        self.refresh_subtree(first);
    }

    #[inline]
    fn reduced_cost(&self, e: usize, i: usize, j: usize) -> f64 {
        self.cost[e] + self.pi[i] - self.pi[self.rows + j]
    }

    fn find_entering(&mut self, tol: f64) -> Option<usize> {
        let real = self.real_arcs();
        let cols = self.cols;
        match self.rule {
            PivotRule::FirstEligible => (0..real)
                .find(|&e| !self.in_tree[e] && self.reduced_cost(e, e / cols, e % cols) < -tol),
            PivotRule::BlockSearch => {
                // Blocks are whole rows, i.e. about sqrt(arcs) arcs each.
                // Tree arcs have zero reduced cost up to rounding and can never
                // beat `-tol`, so they need no explicit exclusion.
                let rows = self.rows;
                let (pi_rows, pi_cols) = self.pi.split_at(rows);
                let pi_cols = &pi_cols[..cols];
                let start = self.next_arc;
                let mut best = -tol;
                let mut chosen = NONE;
                for k in 0..rows {
                    let i = (start + k) % rows;
                    let row = &self.cost[i * cols..(i + 1) * cols];
                    // Branch-free row minimum first; the index is only looked
                    // up for rows that improve on the best so far.
                    let mut m = f64::INFINITY;
                    for (&c, &pj) in row.iter().zip(pi_cols) {
                        let v = c - pj;
                        m = if v < m { v } else { m };
                    }
                    let rc = m + pi_rows[i];
                    if rc < best {
                        best = rc;
                        let j = row
                            .iter()
                            .zip(pi_cols)
                            .position(|(&c, &pj)| c - pj == m)
                            .unwrap_or(0);
                        chosen = i * cols + j;
                    }
                    if chosen != NONE {
                        self.next_arc = (i + 1) % rows;
                        return Some(chosen);
                    }
                }
                None
            }
        }
    }

    fn pivot(&mut self, e_in: usize) -> Result<()> {
        let (first, second) = self.endpoints(e_in);

        let (mut u, mut v) = (first, second);
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        let join = u;

        // Flow is pushed along e_in from `first` to `second` and back to
        // `first` through the join. Arcs pointing against that direction
        // lose flow and may block; ties go to the last blocking arc met
        // when walking the cycle from the join in flow direction.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut out_on_first = false;
        let mut u = first;
        while u != join {
            if self.dir[u] == UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    out_on_first = true;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.dir[u] == DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    out_on_first = false;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::InvalidTransportProblem(
                "unbounded transport problem".into(),
            ));
        }
        let (u_in, v_in) = if out_on_first {
            (first, second)
        } else {
            (second, first)
        };

        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                self.flow[self.pred[u]] -= self.dir[u] * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[self.pred[u]] += self.dir[u] * delta;
                u = self.parent[u];
            }
        }
        let e_out = self.pred[u_out];
        self.flow[e_out] = 0.0;
        self.in_tree[e_out] = false;
        self.in_tree[e_in] = true;

        // Re-hang the path u_in ..= u_out below v_in, reversing it.
        let mut u = u_in;
        let mut new_parent = v_in;
        let mut new_pred = e_in;
        loop {
            let old_parent = self.parent[u];
            let old_pred = self.pred[u];
            self.detach(u);
            self.attach(u, new_parent);
            self.pred[u] = new_pred;
            self.dir[u] = if self.endpoints(new_pred).0 == u {
                UP
            } else {
                DOWN
            };
            if u == u_out {
                break;
            }
            new_parent = u;
            new_pred = old_pred;
            u = old_parent;
        }

        self.refresh_subtree(u_in);
        Ok(())
    }

    /// Recompute depth and potentials below and including `top` from its
    /// parent, keeping every tree arc at zero reduced cost.
    fn refresh_subtree(&mut self, top: usize) {
        self.stack.clear();
        self.stack.push(top);
        while let Some(u) = self.stack.pop() {
            let par = self.parent[u];
            let c = self.arc_cost(self.pred[u]);
            self.depth[u] = self.depth[par] + 1;
            // Tree arc (a -> b) satisfies cost + pi[a] - pi[b] = 0.
            self.pi[u] = if self.dir[u] == UP {
                self.pi[par] - c
            } else {
                self.pi[par] + c
            };
            let mut child = self.first_child[u];
            while child != NONE {
                self.stack.push(child);
                child = self.next_sib[child];
            }
        }
    }

    fn attach(&mut self, u: usize, p: usize) {
        let head = self.first_child[p];
        self.next_sib[u] = head;
        self.prev_sib[u] = NONE;
        if head != NONE {
            self.prev_sib[head] = u;
        }
        self.first_child[p] = u;
        self.parent[u] = p;
    }

    fn detach(&mut self, u: usize) {
        let (prev, next) = (self.prev_sib[u], self.next_sib[u]);
        if prev != NONE {
            self.next_sib[prev] = next;
        } else {
            self.first_child[self.parent[u]] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
        self.prev_sib[u] = NONE;
        self.next_sib[u] = NONE;
    }
}
