//! Token predictors: per-position categorical distributions over the visual
//! codebook given the task prompt, class token, and corrupted sequence.

mod loss;
mod potts;
mod train;

pub use loss::{multitask_loss, LossAccumulator, LossBreakdown};
pub use potts::{grad_step, loss_and_gradient, Example, PottsParams};
pub use train::{heldout_loss, train, TrainConfig, TrainingVideo};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::tasks::TaskKind;
use crate::vocab::InputToken;

/// Row tolerance for the stochastic-matrix contract.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `rows x cols` row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} probabilities for a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Checks every row is a probability distribution.
    pub fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.rows {
            let row = self.row(i);
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::Contract(format!("row {i} has entry {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Contract(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Anything that maps `[task, class, corrupted tokens]` to per-position
/// distributions over the visual codebook.
pub trait TokenPredictor {
    fn v_vis(&self) -> usize;

    fn predict(
        &self,
        task: TaskKind,
        class: Option<u32>,
        corrupted: &[InputToken],
        shape: &GridShape,
    ) -> Result<ProbMatrix>;
}

impl<P: TokenPredictor + ?Sized> TokenPredictor for &P {
    fn v_vis(&self) -> usize {
        (**self).v_vis()
    }

    fn predict(
        &self,
        task: TaskKind,
        class: Option<u32>,
        corrupted: &[InputToken],
        shape: &GridShape,
    ) -> Result<ProbMatrix> {
        (**self).predict(task, class, corrupted, shape)
    }
}

/// Test oracle that knows the ground-truth tokens: probability `1 - eps` on
/// the true id and `eps / (V - 1)` on every other id, whatever the input.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePredictor {
    truth: Vec<u32>,
    eps: f64,
    v_vis: usize,
}

impl OraclePredictor {
    pub fn new(truth: Vec<u32>, eps: f64, v_vis: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Config(format!("oracle eps {eps} outside [0, 1]")));
        }
        if v_vis == 0 || truth.iter().any(|&t| t as usize >= v_vis) {
            return Err(Error::Vocabulary(
                "oracle truth outside the codebook".into(),
            ));
        }
        Ok(Self { truth, eps, v_vis })
    }
}

impl TokenPredictor for OraclePredictor {
    fn v_vis(&self) -> usize {
        self.v_vis
    }

    fn predict(
        &self,
        _task: TaskKind,
        _class: Option<u32>,
        corrupted: &[InputToken],
        shape: &GridShape,
    ) -> Result<ProbMatrix> {
        let n = shape.len();
        if corrupted.len() != n || self.truth.len() != n {
            return Err(Error::Dimension(format!(
                "oracle holds {} tokens, input has {}, grid has {n}",
                self.truth.len(),
                corrupted.len()
            )));
        }
        let v = self.v_vis;
        let off = if v > 1 {
            self.eps / (v - 1) as f64
        } else {
            0.0
        };
        let on = if v > 1 { 1.0 - self.eps } else { 1.0 };
        let mut data = vec![off; n * v];
        for (i, &t) in self.truth.iter().enumerate() {
            data[i * v + t as usize] = on;
        }
        ProbMatrix::new(n, v, data)
    }
}
