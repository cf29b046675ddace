//! Ensemble transform Kalman filter, global and localised per node.

use crate::error::{Error, Result};
use crate::models::{Ensemble, ObservationModel};
use crate::spatial::{periodic_distance, Localisation, PeriodicMesh};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

/// Eigenvalues of the ensemble-space precision are clamped below at this.
const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric `A^{-1}` and `A^{-1/2}` of a symmetric positive definite matrix.
fn inverse_and_inverse_sqrt(a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let v = &eig.eigenvectors;
    let inv = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.max(EIGEN_FLOOR)),
    );
    let inv_sqrt = inv.map(f64::sqrt);
    let a_inv = v * DMatrix::from_diagonal(&inv) * v.transpose();
    let a_inv_sqrt = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
    (a_inv, a_inv_sqrt)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}

/// Global ETKF with the symmetric square root.
///
/// `obs_ens` holds the `P x L` predicted observations of each particle,
/// `r` the observation noise covariance and `y` the observed values.
/// `inflation` scales prior anomalies (1 disables it).
pub fn etkf_assimilate(
    ens: &Ensemble,
    obs_ens: &[f64],
    r: &DMatrix<f64>,
    y: &[f64],
    inflation: f64,
) -> Result<Ensemble> {
    let p = ens.particles();
    let m = ens.nodes();
    let l = y.len();
    if p < 2 {
        return Err(Error::invalid(
            "ensemble transform needs at least two particles",
        ));
    }
    if obs_ens.len() != p * l || r.shape() != (l, l) {
        return Err(Error::invalid(
            "observation ensemble, noise and data dimensions disagree",
        ));
    }
    check_finite(ens.as_slice(), "ensemble")?;
    check_finite(obs_ens, "observation ensemble")?;
    check_finite(y, "observations")?;
    let scale = inflation / ((p - 1) as f64).sqrt();
    let x = DMatrix::from_row_slice(p, m, ens.as_slice());
    let yy = DMatrix::from_row_slice(p, l, obs_ens);
    let x_mean = x.row_mean();
    let y_mean = yy.row_mean();
    // Rows are scaled particle anomalies.
    let xa = DMatrix::from_fn(p, m, |i, j| (x[(i, j)] - x_mean[j]) * scale);
    let ya = DMatrix::from_fn(p, l, |i, j| (yy[(i, j)] - y_mean[j]) * scale);
    let r_chol = r.clone().cholesky().ok_or_else(|| {
        Error::LinearAlgebra("observation noise covariance is not positive definite".into())
    })?;
    // R^-1 Ya^T, L x P.
    let r_inv_ya_t = r_chol.solve(&ya.transpose());
    let precision = DMatrix::identity(p, p) + &ya * &r_inv_ya_t;
    let (c_inv, s) = inverse_and_inverse_sqrt(precision);
    let innovation = DVector::from_iterator(l, y.iter().zip(y_mean.iter()).map(|(a, b)| a - b));
    let w_mean = &c_inv * (&r_inv_ya_t.transpose() * innovation);
    // Posterior particle j: mean + sum_q xa_q (w_q + sqrt(P-1) S_qj).
    let sqrt_pm1 = ((p - 1) as f64).sqrt();
    let mut coeff = s;
    for q in 0..p {
        for j in 0..p {
            coeff[(q, j)] = coeff[(q, j)] * sqrt_pm1 + w_mean[q];
        }
    }
    let post = coeff.transpose() * xa;
    let mut out = Ensemble::zeros(p, m);
    for i in 0..p {
        for j in 0..m {
            out.set(i, j, x_mean[j] + post[(i, j)]);
        }
    }
    Ok(out)
}

/// Observations seen by one node and their taper weights.
#[derive(Clone, Debug)]
pub struct LocalObservations {
    pub per_node: Vec<Vec<(usize, f64)>>,
}

impl LocalObservations {
    pub fn new(mesh: &PeriodicMesh, obs_positions: &[f64], loc: &Localisation) -> Self {
        let per_node = (0..mesh.len())
            .map(|n| {
                let s = mesh.position(n);
                obs_positions
                    .iter()
                    .enumerate()
                    .filter_map(|(l, &o)| {
                        let w = loc.weight(periodic_distance(s, o));
                        (w > 0.0).then_some((l, w))
                    })
                    .collect()
            })
            .collect();
        Self { per_node }
    }
}

/// Local ETKF: each node is updated with its own ensemble transform built
/// from the observations in its localisation radius, each observation's
/// precision scaled by its taper weight. Nodes without observations keep
/// their predicted values.
///
/// The observation noise is diagonal with standard deviation taken from
/// `obs`. The transform is computed through the eigendecomposition of the
/// small observation-space Gram matrix, which gives the same symmetric
/// square root as the ensemble-space form.
pub fn letkf_assimilate(
    ens: &Ensemble,
    obs_ens: &[f64],
    obs: &ObservationModel,
    local: &LocalObservations,
    y: &[f64],
    inflation: f64,
) -> Result<Ensemble> {
    let p = ens.particles();
    let m = ens.nodes();
    let l = y.len();
    if p < 2 {
        return Err(Error::invalid(
            "ensemble transform needs at least two particles",
        ));
    }
    if obs_ens.len() != p * l || local.per_node.len() != m {
        return Err(Error::invalid(
            "observation ensemble or localisation does not match",
        ));
    }
    check_finite(ens.as_slice(), "ensemble")?;
    check_finite(obs_ens, "observation ensemble")?;
    check_finite(y, "observations")?;
    let scale = inflation / ((p - 1) as f64).sqrt();
    let x_mean = ens.mean();
    let mut y_mean = vec![0.0; l];
    for row in obs_ens.chunks_exact(l) {
        y_mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    y_mean.iter_mut().for_each(|v| *v /= p as f64);
    let inv_std = 1.0 / obs.noise_std();

    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|node| {
            let sel = &local.per_node[node];
            let xa: Vec<f64> = (0..p)
                .map(|i| (ens.get(i, node) - x_mean[node]) * scale)
                .collect();
            if sel.is_empty() {
                return Ok((0..p).map(|i| ens.get(i, node)).collect());
            }
            local_update(
                p,
                &xa,
                x_mean[node],
                sel,
                obs_ens,
                &y_mean,
                y,
                l,
                scale,
                inv_std,
            )
            .map_err(|e| Error::NodeUpdate {
                node,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Ensemble::zeros(p, m);
    for (node, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out.set(i, node, *v);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn local_update(
    p: usize,
    xa: &[f64],
    x_mean: f64,
    sel: &[(usize, f64)],
    obs_ens: &[f64],
    y_mean: &[f64],
    y: &[f64],
    l: usize,
    scale: f64,
    inv_std: f64,
) -> Result<Vec<f64>> {
    let n = sel.len();
    // G = Ya R~^{-1/2}, P x n, so the precision is I + G G^T.
    let g = DMatrix::from_fn(p, n, |i, j| {
        let (o, w) = sel[j];
        (obs_ens[i * l + o] - y_mean[o]) * scale * w.sqrt() * inv_std
    });
    let d = DVector::from_iterator(
        n,
        sel.iter()
            .map(|&(o, w)| (y[o] - y_mean[o]) * w.sqrt() * inv_std),
    );
    let eig = SymmetricEigen::new(g.transpose() * &g);
    // Left singular vectors U = G V / s for the nonzero singular values.
    let mut u_cols = Vec::new();
    let mut s2 = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > EIGEN_FLOOR {
            let col = &g * eig.eigenvectors.column(k) / lam.sqrt();
            u_cols.push(col);
            s2.push(lam);
        }
    }
    // (I + G G^T)^{-1} G d, with the precision's eigenvalues 1 + s^2.
    let gd = &g * &d;
    let mut w_mean = gd.clone();
    // (I + U diag(s^2) U^T)^{-1} = I - U diag(s^2 / (1 + s^2)) U^T.
    for (u, &sq) in u_cols.iter().zip(&s2) {
        let c = u.dot(&gd) * sq / (1.0 + sq);
        w_mean.axpy(-c, u, 1.0);
    }
    let sqrt_pm1 = ((p - 1) as f64).sqrt();
    let xa_v = DVector::from_column_slice(xa);
    let base = x_mean + xa_v.dot(&w_mean);
    // Column p of S = I + U diag(1/sqrt(1+s^2) - 1) U^T, projected on xa.
    let proj: Vec<f64> = u_cols
        .iter()
        .zip(&s2)
        .map(|(u, &sq)| (1.0 / (1.0 + sq).sqrt() - 1.0) * u.dot(&xa_v))
        .collect();
    let mut out = vec![0.0; p];
    for (i, o) in out.iter_mut().enumerate() {
        let mut v = xa[i];
        for (u, c) in u_cols.iter().zip(&proj) {
            v += u[i] * c;
        }
        *o = base + sqrt_pm1 * v;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra(
            "local transform produced non-finite values".into(),
        ));
    }
    Ok(out)
}
