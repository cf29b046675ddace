use super::problem::{SolverKind, TransportPlan};
use crate::error::{Error, Result};

const MAX_SIZE: usize = 8;

/// Cheapest permutation plan for uniform weights by exhaustive enumeration.
/// Intended as a test oracle; `P <= 8`.
pub fn brute_force_uniform(cost: &[f64], p: usize) -> Result<TransportPlan> {
    if p == 0 || p > MAX_SIZE {
        return Err(Error::invalid(format!(
            "brute force supports 1 <= P <= {MAX_SIZE}, got {p}"
        )));
    }
    if cost.len() != p * p {
        return Err(Error::invalid("cost must be P x P"));
    }
    let value =
        |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| cost[i * p + j]).sum() };

    // Heap's algorithm, iterative form.
    let mut perm: Vec<usize> = (0..p).collect();
    let mut best = perm.clone();
    let mut best_value = value(&perm);
    let mut c = vec![0usize; p];
    let mut i = 0;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = value(&perm);
            if v < best_value {
                best_value = v;
                best.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    let mut coupling = vec![0.0; p * p];
    for (i, &j) in best.iter().enumerate() {
        coupling[i * p + j] = 1.0;
    }
    Ok(TransportPlan::from_coupling(
        p,
        coupling,
        cost,
        SolverKind::Exact,
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let one = brute_force_uniform(&[3.0], 1).unwrap();
        assert_eq!(one.coupling(), &[1.0]);
        let two = brute_force_uniform(&[0.0, 1.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(two.coupling(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(two.objective, 0.0);
        assert!(brute_force_uniform(&vec![0.0; 81], 9).is_err());
    }

    #[test]
    fn sorted_scalars_give_monotone_assignment() {
        let xs = [-1.3, 0.2, 2.5];
        let ys = [-0.7, 0.9, 1.1];
        let cost: Vec<f64> = xs
            .iter()
            .flat_map(|x| ys.iter().map(move |y| (x - y) * (x - y)))
            .collect();
        let plan = brute_force_uniform(&cost, 3).unwrap();
        assert_eq!(
            plan.coupling(),
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn visits_every_permutation() {
        // A cost that is cheap only on one specific permutation.
        let target = [3usize, 0, 4, 1, 2];
        let p = 5;
        let mut cost = vec![1.0; p * p];
        for (i, &j) in target.iter().enumerate() {
            cost[i * p + j] = 0.0;
        }
        let plan = brute_force_uniform(&cost, p).unwrap();
        assert_eq!(plan.objective, 0.0);
    }
}
