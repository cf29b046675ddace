use crate::error::{Error, Result};
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct RankHistogram {
    /// `P + 1` bins; bin `k` counts truths with exactly `k` members below.
    pub counts: Vec<u64>,
}

impl RankHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Expected count per bin under calibration.
    pub fn uniform_level(&self) -> f64 {
        self.total() as f64 / self.counts.len() as f64
    }
}

/// Ranks of the truth among the members over all times and nodes. Ties
/// count as not below. `ensembles` is `T x P x M`, `truth` is `T x M`.
pub fn rank_histogram(
    ensembles: &[f64],
    truth: &[f64],
    particles: usize,
    nodes: usize,
) -> Result<RankHistogram> {
    let block = particles * nodes;
    if particles == 0
        || nodes == 0
        || ensembles.len() % block != 0
        || ensembles.len() / block * nodes != truth.len()
    {
        return Err(Error::invalid(
            "ensembles and truth have inconsistent shapes",
        ));
    }
    let mut counts = vec![0u64; particles + 1];
    for (ens, z) in ensembles.chunks_exact(block).zip(truth.chunks_exact(nodes)) {
        for (m, &zt) in z.iter().enumerate() {
            let below = (0..particles).filter(|&p| ens[p * nodes + m] < zt).count();
            counts[below] += 1;
        }
    }
    Ok(RankHistogram { counts })
}

/// Pearson chi-square statistic of the counts against the uniform level.
pub fn chi_square_uniform(hist: &RankHistogram) -> f64 {
    let e = hist.uniform_level();
    hist.counts
        .iter()
        .map(|&c| (c as f64 - e).powi(2) / e)
        .sum()
}

/// Two-column CSV `bin,count`.
pub fn write_rank_histogram_csv<W: Write>(out: W, hist: &RankHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin", "count"])?;
    for (b, c) in hist.counts.iter().enumerate() {
        w.write_record(&[b.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream, Stream};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn extreme_truths_land_in_the_end_bins() {
        let ens = [0.0, 1.0, 2.0];
        let h = rank_histogram(&ens, &[-1.0], 3, 1).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0]);
        let h = rank_histogram(&ens, &[5.0], 3, 1).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0, 1]);
        // Ties are not below.
        let h = rank_histogram(&ens, &[1.0], 3, 1).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0, 0]);
    }

    #[test]
    fn totals_and_shape_checks() {
        let ens = vec![0.0; 2 * 4 * 3];
        let h = rank_histogram(&ens, &[0.5; 6], 4, 3).unwrap();
        assert_eq!(h.total(), 6);
        assert!(rank_histogram(&ens, &[0.5; 5], 4, 3).is_err());
    }

    #[test]
    fn exchangeable_draws_look_uniform() {
        let (p, draws) = (9, 100_000);
        let mut rng = stream(1, Stream::Test, 0, 0, 0);
        let mut ens = Vec::with_capacity(draws * p);
        let mut truth = Vec::with_capacity(draws);
        for _ in 0..draws {
            for _ in 0..p {
                ens.push(standard_normal(&mut rng));
            }
            truth.push(standard_normal(&mut rng));
        }
        let h = rank_histogram(&ens, &truth, p, 1).unwrap();
        let stat = chi_square_uniform(&h);
        let p_value = 1.0 - ChiSquared::new(p as f64).unwrap().cdf(stat);
        assert!(p_value > 0.001, "chi2 {stat} p {p_value}");
    }

    #[test]
    fn csv_has_a_row_per_bin() {
        let mut buf = Vec::new();
        write_rank_histogram_csv(
            &mut buf,
            &RankHistogram {
                counts: vec![3, 1, 2],
            },
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin,count\n0,3\n1,1\n2,2\n"
        );
    }
}
