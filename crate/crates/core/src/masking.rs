//! Conditional masking of token sequences.
//!
//! Every position carries a score; a [`Cutoff`] splits positions into those
//! that get corrupted (score at or below the cutoff) and those kept as-is.
//! Corrupted positions become their condition token when the supervoxel
//! holds condition pixels, and `[MASK]` when it holds padding only.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vocab::InputToken;

/// Mask-rate schedule `gamma(r)`: fraction of tokens still masked at progress `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    Cosine,
    Uniform,
    Exponential,
}

impl Schedule {
    pub const ALL: [Schedule; 3] = [Schedule::Cosine, Schedule::Uniform, Schedule::Exponential];

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Cosine => "cosine",
            Schedule::Uniform => "uniform",
            Schedule::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(Schedule::Cosine),
            "uniform" | "linear" => Ok(Schedule::Uniform),
            "exponential" => Ok(Schedule::Exponential),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

/// `gamma(r)` for `r` in `[0, 1]`, with `gamma(0) = 1` and `gamma(1) = 0` exactly.
pub fn gamma(schedule: Schedule, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!(
            "mask ratio progress {r} outside [0, 1]"
        )));
    }
    if r == 1.0 {
        return Ok(0.0);
    }
    Ok(match schedule {
        Schedule::Cosine => (std::f64::consts::FRAC_PI_2 * r).cos(),
        Schedule::Uniform => 1.0 - r,
        Schedule::Exponential => {
            let floor = (-5.0f64).exp();
            ((-5.0 * r).exp() - floor) / (1.0 - floor)
        }
    })
}

/// Number of positions masked at progress `r`: `ceil(gamma(r) * n)`.
pub fn masked_count(schedule: Schedule, r: f64, n: usize) -> Result<usize> {
    Ok(((gamma(schedule, r)? * n as f64).ceil() as usize).min(n))
}

/// Threshold on `(score, position)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Nothing is at or below the cutoff.
    NegInfinity,
    /// Everything is at or below the cutoff.
    PosInfinity,
    /// The pair `(score, index)` of the k-th smallest position; a position is
    /// selected when its own pair sorts at or before it.
    At { score: f64, index: usize },
}

impl Cutoff {
    #[inline]
    pub fn selects(&self, score: f64, index: usize) -> bool {
        match *self {
            Cutoff::NegInfinity => false,
            Cutoff::PosInfinity => true,
            Cutoff::At { score: s, index: i } => match score.total_cmp(&s) {
                Ordering::Less => true,
                Ordering::Equal => index <= i,
                Ordering::Greater => false,
            },
        }
    }

    /// The cutoff as a plain score value.
    pub fn score(&self) -> f64 {
        match *self {
            Cutoff::NegInfinity => f64::NEG_INFINITY,
            Cutoff::PosInfinity => f64::INFINITY,
            Cutoff::At { score, .. } => score,
        }
    }

    pub fn count_selected(&self, scores: &[f64]) -> usize {
        scores
            .iter()
            .enumerate()
            .filter(|&(i, &s)| self.selects(s, i))
            .count()
    }
}

fn check_finite(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| s.is_nan()) {
        Some(i) => Err(Error::Numeric(format!("score at position {i} is NaN"))),
        None => Ok(()),
    }
}

/// The k-th smallest score under the `(score, index)` order; exactly `k`
/// positions are selected by the result.
pub fn cutoff_kth_smallest(scores: &[f64], k: usize) -> Result<Cutoff> {
    if k > scores.len() {
        return Err(Error::Bounds(format!(
            "k = {k} exceeds {} scores",
            scores.len()
        )));
    }
    if k == 0 {
        return Ok(Cutoff::NegInfinity);
    }
    check_finite(scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let (_, &mut index, _) = order.select_nth_unstable_by(k - 1, |&a, &b| {
        scores[a].total_cmp(&scores[b]).then(a.cmp(&b))
    });
    Ok(Cutoff::At {
        score: scores[index],
        index,
    })
}

/// Which loss term a position falls into after corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Replaced by its condition token.
    Refine,
    /// Replaced by `[MASK]`.
    Mask,
    /// Left at its current value.
    Recons,
}

fn check_lengths(n: usize, lens: &[(&str, usize)]) -> Result<()> {
    for &(name, len) in lens {
        if len != n {
            return Err(Error::Dimension(format!(
                "{name} has length {len}, expected {n}"
            )));
        }
    }
    Ok(())
}

/// Region of every position for the given scores and cutoff.
pub fn mask_regions(allpadded: &[bool], scores: &[f64], cutoff: Cutoff) -> Result<Vec<Region>> {
    check_lengths(allpadded.len(), &[("scores", scores.len())])?;
    Ok(scores
        .iter()
        .zip(allpadded)
        .enumerate()
        .map(|(i, (&s, &padded))| match (cutoff.selects(s, i), padded) {
            (true, false) => Region::Refine,
            (true, true) => Region::Mask,
            (false, _) => Region::Recons,
        })
        .collect())
}

/// The multivariate conditional mask: position `i` becomes `cond[i]` if selected
/// and its supervoxel holds condition pixels, `[MASK]` if selected and padded,
/// and keeps `current[i]` otherwise.
pub fn commit_mask(
    current: &[u32],
    cond: &[u32],
    allpadded: &[bool],
    scores: &[f64],
    cutoff: Cutoff,
) -> Result<Vec<InputToken>> {
    let n = current.len();
    check_lengths(
        n,
        &[
            ("condition tokens", cond.len()),
            ("allpadded", allpadded.len()),
            ("scores", scores.len()),
        ],
    )?;
    Ok(mask_regions(allpadded, scores, cutoff)?
        .into_iter()
        .enumerate()
        .map(|(i, region)| match region {
            Region::Refine => InputToken::Visual(cond[i]),
            Region::Mask => InputToken::Mask,
            Region::Recons => InputToken::Visual(current[i]),
        })
        .collect())
}

/// One training corruption draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMask {
    /// Progress `r` drawn uniformly from `[0, 1)`.
    pub ratio: f64,
    pub scores: Vec<f64>,
    pub cutoff: Cutoff,
    pub masked_count: usize,
}

/// Draws `r ~ U(0, 1)`, masks `ceil(gamma(r) * n)` positions chosen by i.i.d.
/// uniform scores.
pub fn sample_training_mask(n: usize, schedule: Schedule, rng: &mut Rng) -> Result<TrainingMask> {
    if n == 0 {
        return Err(Error::Dimension("cannot mask an empty sequence".into()));
    }
    let ratio = rng.uniform();
    let masked_count = masked_count(schedule, ratio, n)?;
    let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let cutoff = cutoff_kth_smallest(&scores, masked_count)?;
    Ok(TrainingMask {
        ratio,
        scores,
        cutoff,
        masked_count,
    })
}
