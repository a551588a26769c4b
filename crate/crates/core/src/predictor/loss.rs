use crate::error::{Error, Result};
use crate::masking::Region;

use super::ProbMatrix;

/// Mean cross-entropy (nats) over all positions and over each corruption region.
///
/// `total * n = refine * n_refine + mask * n_mask + recons * n_recons`, with
/// `n = n_refine + n_mask + n_recons`. A region with no positions reports 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub refine: f64,
    pub mask: f64,
    pub recons: f64,
    pub n_refine: usize,
    pub n_mask: usize,
    pub n_recons: usize,
}

impl LossBreakdown {
    pub fn count(&self) -> usize {
        self.n_refine + self.n_mask + self.n_recons
    }
}

/// Running per-region sums of cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossAccumulator {
    sums: [f64; 3],
    counts: [usize; 3],
}

fn slot(region: Region) -> usize {
    match region {
        Region::Refine => 0,
        Region::Mask => 1,
        Region::Recons => 2,
    }
}

impl LossAccumulator {
    pub fn add(&mut self, region: Region, ce: f64) {
        self.sums[slot(region)] += ce;
        self.counts[slot(region)] += 1;
    }

    pub fn finish(&self) -> LossBreakdown {
        let mean = |k: usize| {
            if self.counts[k] == 0 {
                0.0
            } else {
                self.sums[k] / self.counts[k] as f64
            }
        };
        let n: usize = self.counts.iter().sum();
        LossBreakdown {
            total: if n == 0 {
                0.0
            } else {
                self.sums.iter().sum::<f64>() / n as f64
            },
            refine: mean(0),
            mask: mean(1),
            recons: mean(2),
            n_refine: self.counts[0],
            n_mask: self.counts[1],
            n_recons: self.counts[2],
        }
    }
}

/// Cross-entropy of the target under a distribution, against the smoothed
/// target `(1 - eps) * onehot + eps / V`.
pub(crate) fn smoothed_ce(row: &[f64], target: usize, label_smoothing: f64) -> f64 {
    let hard = -row[target].ln();
    if label_smoothing == 0.0 {
        return hard;
    }
    let uniform = -row.iter().map(|p| p.ln()).sum::<f64>() / row.len() as f64;
    (1.0 - label_smoothing) * hard + label_smoothing * uniform
}

/// Splits the sequence cross-entropy into condition refinement, masked-token
/// prediction, and target reconstruction terms.
pub fn multitask_loss(
    probs: &ProbMatrix,
    targets: &[u32],
    regions: &[Region],
    label_smoothing: f64,
) -> Result<LossBreakdown> {
    if targets.is_empty() {
        return Err(Error::Dimension("loss over an empty sequence".into()));
    }
    if probs.rows() != targets.len() || regions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} targets, {} regions",
            probs.rows(),
            targets.len(),
            regions.len()
        )));
    }
    if !(0.0..1.0).contains(&label_smoothing) {
        return Err(Error::Config(format!(
            "label smoothing {label_smoothing} outside [0, 1)"
        )));
    }
    let mut acc = LossAccumulator::default();
    for (i, (&t, &region)) in targets.iter().zip(regions).enumerate() {
        if t as usize >= probs.cols() {
            return Err(Error::Vocabulary(format!("target {t} outside codebook")));
        }
        acc.add(
            region,
            smoothed_ce(probs.row(i), t as usize, label_smoothing),
        );
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn one_hot_and_uniform_extremes() {
        let p = ProbMatrix::new(
            3,
            4,
            vec![
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        let regions = [Region::Refine, Region::Mask, Region::Recons];
        let l = multitask_loss(&p, &[1, 0, 3], &regions, 0.0).unwrap();
        assert_eq!((l.total, l.refine, l.mask, l.recons), (0.0, 0.0, 0.0, 0.0));

        let u = ProbMatrix::new(3, 4, vec![0.25; 12]).unwrap();
        for eps in [0.0, 1e-4] {
            let l = multitask_loss(&u, &[1, 0, 3], &regions, eps).unwrap();
            for part in [l.total, l.refine, l.mask, l.recons] {
                assert!((part - 4f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn region_weighted_identity() {
        let mut rng = Rng::new(31);
        for _ in 0..200 {
            let n = 1 + rng.below(40);
            let v = 2 + rng.below(6);
            let mut data = Vec::new();
            for _ in 0..n {
                let row: Vec<f64> = (0..v).map(|_| rng.uniform() + 1e-3).collect();
                let s: f64 = row.iter().sum();
                data.extend(row.iter().map(|x| x / s));
            }
            let p = ProbMatrix::new(n, v, data).unwrap();
            let targets: Vec<u32> = (0..n).map(|_| rng.below(v) as u32).collect();
            let regions: Vec<Region> = (0..n)
                .map(|_| [Region::Refine, Region::Mask, Region::Recons][rng.below(3)])
                .collect();
            let l = multitask_loss(&p, &targets, &regions, 1e-4).unwrap();
            // direct summation oracle
            let direct: f64 = (0..n)
                .map(|i| smoothed_ce(p.row(i), targets[i] as usize, 1e-4))
                .sum();
            let parts = l.refine * l.n_refine as f64
                + l.mask * l.n_mask as f64
                + l.recons * l.n_recons as f64;
            assert!(((l.total * n as f64) - parts).abs() <= 1e-12 * parts.abs());
            assert!((direct - parts).abs() <= 1e-12 * direct.abs());
            assert_eq!(l.count(), n);
        }
    }

    #[test]
    fn errors() {
        let p = ProbMatrix::new(0, 2, vec![]).unwrap();
        assert!(multitask_loss(&p, &[], &[], 0.0).is_err());
        let p = ProbMatrix::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert!(multitask_loss(&p, &[2], &[Region::Mask], 0.0).is_err());
        assert!(multitask_loss(&p, &[0, 1], &[Region::Mask], 0.0).is_err());
    }
}
