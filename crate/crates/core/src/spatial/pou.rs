use super::localisation::{Localisation, LocalisationKind};
use super::mesh::{periodic_distance, PeriodicMesh};
use crate::error::{Error, Result};
use std::io::Write;

/// Bump values at or below this are treated as outside a patch's support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

/// Largest node stride used for transport-cost subsampling.
const MAX_SUBSAMPLE_STRIDE: usize = 4;

/// Split the mesh into `patches` contiguous runs of `M / patches` nodes.
pub fn build_equal_partition(mesh: &PeriodicMesh, patches: usize) -> Result<Vec<Vec<usize>>> {
    let m = mesh.len();
    if patches == 0 || patches > m || m % patches != 0 {
        return Err(Error::invalid(format!(
            "patch count {patches} must divide the node count {m}"
        )));
    }
    let size = m / patches;
    Ok((0..patches)
        .map(|b| (b * size..(b + 1) * size).collect())
        .collect())
}

/// Bump functions sampled at the mesh nodes, one row per patch, together
/// with the patch bookkeeping used by the smooth local filter.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    mesh: PeriodicMesh,
    kernel_width: f64,
    /// Row-major `B x M`.
    bumps: Vec<f64>,
    cores: Vec<Vec<usize>>,
    supports: Vec<Vec<usize>>,
    /// For each node, the patches whose support contains it and their bump value.
    node_patches: Vec<Vec<(usize, f64)>>,
    subsample: Vec<usize>,
    /// Per patch, the subsampled nodes inside its support.
    cost_nodes: Vec<Vec<usize>>,
}

/// Smooth the indicator functions of `cores` by a normalised Gaspari-Cohn
/// kernel of radius `kernel_width`. With `kernel_width = 1 / M` the result is
/// exactly the indicator matrix.
pub fn build_pou(
    cores: Vec<Vec<usize>>,
    mesh: &PeriodicMesh,
    kernel_width: f64,
) -> Result<PartitionOfUnity> {
    let m = mesh.len();
    let b_count = cores.len();
    if b_count == 0 {
        return Err(Error::invalid("partition needs at least one patch"));
    }
    if !(kernel_width * m as f64 >= 1.0 - 1e-12) || !kernel_width.is_finite() {
        return Err(Error::invalid(format!(
            "kernel width {kernel_width} is below the mesh spacing 1/{m}"
        )));
    }
    let mut owner = vec![usize::MAX; m];
    for (b, core) in cores.iter().enumerate() {
        if core.is_empty() {
            return Err(Error::invalid(format!("core set of patch {b} is empty")));
        }
        for &n in core {
            if n >= m {
                return Err(Error::invalid(format!(
                    "node {n} outside mesh of {m} nodes"
                )));
            }
            if owner[n] != usize::MAX {
                return Err(Error::invalid(format!("node {n} assigned to two patches")));
            }
            owner[n] = b;
        }
    }
    if let Some(n) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::invalid(format!(
            "node {n} is not assigned to any patch"
        )));
    }

    // A width of exactly one spacing must give an exact indicator, so widths
    // within rounding of 1/M are snapped onto it.
    let radius = kernel_width.max(mesh.spacing());
    let kernel = Localisation::new(LocalisationKind::GaspariCohn, radius)?;
    let offsets: Vec<(usize, f64)> = (0..m)
        .filter_map(|d| {
            let gap = mesh.index_gap(0, d);
            let v = if gap == 0 {
                1.0
            } else {
                kernel.weight(mesh.node_distance(0, d))
            };
            (v > 0.0).then_some((d, v))
        })
        .collect();
    let norm: f64 = offsets.iter().map(|&(_, v)| v).sum();

    let mut bumps = vec![0.0; b_count * m];
    for n in 0..m {
        for &(d, v) in &offsets {
            bumps[owner[(n + d) % m] * m + n] += v;
        }
    }
    bumps.iter_mut().for_each(|x| *x /= norm);

    let supports: Vec<Vec<usize>> = (0..b_count)
        .map(|b| {
            (0..m)
                .filter(|&n| bumps[b * m + n] > SUPPORT_THRESHOLD)
                .collect()
        })
        .collect();
    let mut node_patches = vec![Vec::new(); m];
    for (b, support) in supports.iter().enumerate() {
        for &n in support {
            node_patches[n].push((b, bumps[b * m + n]));
        }
    }

    let min_support = supports.iter().map(Vec::len).min().unwrap_or(1);
    let mut pou = PartitionOfUnity {
        mesh: *mesh,
        kernel_width,
        bumps,
        cores,
        supports,
        node_patches,
        subsample: Vec::new(),
        cost_nodes: Vec::new(),
    };
    let stride = subsample_stride(m, min_support);
    let mut subsample: Vec<usize> = (0..m).step_by(stride).collect();
    if pou
        .supports
        .iter()
        .any(|s| !s.iter().any(|n| n % stride == 0))
    {
        subsample = (0..m).collect();
    }
    pou.set_subsample(subsample)?;
    Ok(pou)
}

fn subsample_stride(m: usize, support_len: usize) -> usize {
    let mut k = support_len.clamp(1, MAX_SUBSAMPLE_STRIDE);
    while m % k != 0 {
        k -= 1;
    }
    k
}

/// Nodes used for per-patch transport costs: every `k`-th node, where `k` is
/// the support size of an equal-partition patch clamped to at most 4. This
/// keeps at least one subsampled node in every patch support.
pub fn subsample_nodes(m: usize, patches: usize, kernel_width: f64) -> Vec<usize> {
    let spread = ((kernel_width * m as f64 - 1e-9).ceil() as usize).max(1) - 1;
    let support = (m / patches.max(1) + 2 * spread).min(m);
    (0..m).step_by(subsample_stride(m, support)).collect()
}

impl PartitionOfUnity {
    #[inline]
    pub fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    #[inline]
    pub fn patch_count(&self) -> usize {
        self.cores.len()
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.mesh.len()
    }

    #[inline]
    pub fn kernel_width(&self) -> f64 {
        self.kernel_width
    }

    #[inline]
    pub fn bump(&self, patch: usize, node: usize) -> f64 {
        self.bumps[patch * self.mesh.len() + node]
    }

    pub fn bump_row(&self, patch: usize) -> &[f64] {
        let m = self.mesh.len();
        &self.bumps[patch * m..(patch + 1) * m]
    }

    pub fn core(&self, patch: usize) -> &[usize] {
        &self.cores[patch]
    }

    pub fn support(&self, patch: usize) -> &[usize] {
        &self.supports[patch]
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    /// Patches covering `node`, with their bump values, in patch order.
    pub fn node_patches(&self, node: usize) -> &[(usize, f64)] {
        &self.node_patches[node]
    }

    pub fn subsample(&self) -> &[usize] {
        &self.subsample
    }

    /// Subsampled nodes of the support of `patch`, ascending.
    pub fn cost_nodes(&self, patch: usize) -> &[usize] {
        &self.cost_nodes[patch]
    }

    /// Replace the subsampled node set, e.g. with all nodes.
    pub fn with_subsample(mut self, nodes: Vec<usize>) -> Result<Self> {
        self.set_subsample(nodes)?;
        Ok(self)
    }

    fn set_subsample(&mut self, mut nodes: Vec<usize>) -> Result<()> {
        nodes.sort_unstable();
        nodes.dedup();
        let m = self.mesh.len();
        if nodes.iter().any(|&n| n >= m) {
            return Err(Error::invalid("subsampled node outside the mesh"));
        }
        let mut member = vec![false; m];
        nodes.iter().for_each(|&n| member[n] = true);
        self.cost_nodes = self
            .supports
            .iter()
            .map(|s| s.iter().copied().filter(|&n| member[n]).collect())
            .collect();
        self.subsample = nodes;
        Ok(())
    }

    /// Largest deviation of the bump column sums from one.
    pub fn max_unity_error(&self) -> f64 {
        let m = self.mesh.len();
        (0..m)
            .map(|n| {
                let s: f64 = (0..self.patch_count()).map(|b| self.bumps[b * m + n]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Write the bump matrix as CSV, one row per patch.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.mesh.len();
        let mut header = vec!["patch".to_string()];
        header.extend((0..m).map(|n| format!("node_{n}")));
        w.write_record(&header)?;
        for b in 0..self.patch_count() {
            let mut row = vec![b.to_string()];
            row.extend(self.bump_row(b).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distance from `s` to the closest node of `support`.
pub fn patch_point_distance(mesh: &PeriodicMesh, support: &[usize], s: f64) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::invalid("patch support is empty"));
    }
    Ok(support
        .iter()
        .map(|&n| periodic_distance(mesh.position(n), s))
        .fold(f64::INFINITY, f64::min))
}

/// Per-patch sums of observation taper weights.
#[derive(Clone, Debug)]
pub struct EffectiveObservations {
    pub per_patch: Vec<f64>,
    pub median: f64,
    /// Nonzero `(observation index, taper weight)` pairs per patch.
    pub weights: Vec<Vec<(usize, f64)>>,
}

pub fn effective_observations(
    pou: &PartitionOfUnity,
    obs_positions: &[f64],
    loc: &Localisation,
) -> EffectiveObservations {
    let weights: Vec<Vec<(usize, f64)>> = pou
        .supports
        .iter()
        .map(|support| {
            obs_positions
                .iter()
                .enumerate()
                .filter_map(|(l, &s)| {
                    let d =
                        patch_point_distance(&pou.mesh, support, s).expect("supports are nonempty");
                    let v = loc.weight(d);
                    (v > 0.0).then_some((l, v))
                })
                .collect()
        })
        .collect();
    let per_patch: Vec<f64> = weights
        .iter()
        .map(|w| w.iter().map(|&(_, v)| v).sum())
        .collect();
    let median = median(&per_patch);
    EffectiveObservations {
        per_patch,
        median,
        weights,
    }
}

/// Median with the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
