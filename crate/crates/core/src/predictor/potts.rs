//! Log-linear reference predictor.
//!
//! `logit_i(v) = b[i, v] + g[task, v] + h[class, v] + sum_{j in N6(i)} A[ctx(z_j), v]`
//! where `N6` is the 6-neighborhood on the token lattice and `ctx` maps a
//! visual id to its own row of `A` and `[MASK]` to the extra last row. Each
//! position is an independent softmax, so the per-example cross-entropy is
//! convex in the parameters and its gradient is `softmax - target` pushed
//! back through the four additive terms.

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::masking::Region;
use crate::tasks::TaskKind;
use crate::vocab::InputToken;

use super::loss::{LossAccumulator, LossBreakdown};
use super::{ProbMatrix, TokenPredictor};

#[derive(Debug, Clone, PartialEq)]
pub struct PottsParams {
    v_vis: usize,
    n_positions: usize,
    n_classes: usize,
    /// `(V + 1) x V` neighbor compatibility; row `V` is the `[MASK]` context.
    pub a: Vec<f64>,
    /// `N x V` positional bias.
    pub b: Vec<f64>,
    /// `10 x V` task bias.
    pub g: Vec<f64>,
    /// `(C + 1) x V` class bias; row `C` is no-class.
    pub h: Vec<f64>,
}

/// One training sequence with its corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub task: TaskKind,
    pub class: Option<u32>,
    pub corrupted: Vec<InputToken>,
    pub targets: Vec<u32>,
    pub regions: Vec<Region>,
}

impl PottsParams {
    pub fn zeros(v_vis: usize, n_positions: usize, n_classes: usize) -> Self {
        Self {
            v_vis,
            n_positions,
            n_classes,
            a: vec![0.0; (v_vis + 1) * v_vis],
            b: vec![0.0; n_positions * v_vis],
            g: vec![0.0; TaskKind::COUNT * v_vis],
            h: vec![0.0; (n_classes + 1) * v_vis],
        }
    }

    /// Rebuilds parameters from their four blocks, checking sizes and finiteness.
    pub fn from_blocks(
        (v_vis, n_positions, n_classes): (usize, usize, usize),
        a: Vec<f64>,
        b: Vec<f64>,
        g: Vec<f64>,
        h: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            v_vis,
            n_positions,
            n_classes,
            a,
            b,
            g,
            h,
        };
        let z = Self::zeros(v_vis, n_positions, n_classes);
        if p.a.len() != z.a.len()
            || p.b.len() != z.b.len()
            || p.g.len() != z.g.len()
            || p.h.len() != z.h.len()
        {
            return Err(Error::Dimension(
                "parameter block sizes do not match dimensions".into(),
            ));
        }
        if !p
            .blocks()
            .iter()
            .all(|(_, blk)| blk.iter().all(|x| x.is_finite()))
        {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn v_vis(&self) -> usize {
        self.v_vis
    }

    pub fn n_positions(&self) -> usize {
        self.n_positions
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn blocks(&self) -> [(&'static str, &Vec<f64>); 4] {
        [
            ("A", &self.a),
            ("b", &self.b),
            ("g", &self.g),
            ("h", &self.h),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 4] {
        [
            ("A", &mut self.a),
            ("b", &mut self.b),
            ("g", &mut self.g),
            ("h", &mut self.h),
        ]
    }

    /// Row of `h` for a class token.
    pub fn class_row(&self, class: Option<u32>) -> Result<usize> {
        match class {
            None => Ok(self.n_classes),
            Some(c) if (c as usize) < self.n_classes => Ok(c as usize),
            Some(c) => Err(Error::Vocabulary(format!(
                "class {c} outside {} classes",
                self.n_classes
            ))),
        }
    }

    fn context_rows(&self, corrupted: &[InputToken]) -> Result<Vec<usize>> {
        corrupted
            .iter()
            .map(|tok| match *tok {
                InputToken::Mask => Ok(self.v_vis),
                InputToken::Visual(v) if (v as usize) < self.v_vis => Ok(v as usize),
                InputToken::Visual(v) => Err(Error::Vocabulary(format!(
                    "visual id {v} outside codebook of size {}",
                    self.v_vis
                ))),
            })
            .collect()
    }

    fn check_input(&self, corrupted: &[InputToken], shape: &GridShape) -> Result<()> {
        if shape.len() != self.n_positions || corrupted.len() != self.n_positions {
            return Err(Error::Dimension(format!(
                "predictor built for {} positions, got grid of {} and sequence of {}",
                self.n_positions,
                shape.len(),
                corrupted.len()
            )));
        }
        Ok(())
    }

    /// Raw logits, `N x V`.
    pub fn logits(
        &self,
        task: TaskKind,
        class: Option<u32>,
        corrupted: &[InputToken],
        shape: &GridShape,
    ) -> Result<Vec<f64>> {
        self.check_input(corrupted, shape)?;
        let v = self.v_vis;
        let ctx = self.context_rows(corrupted)?;
        let g = &self.g[task.index() * v..(task.index() + 1) * v];
        let hr = self.class_row(class)?;
        let h = &self.h[hr * v..(hr + 1) * v];
        let mut out = vec![0.0; self.n_positions * v];
        for i in 0..self.n_positions {
            let row = &mut out[i * v..(i + 1) * v];
            for (k, r) in row.iter_mut().enumerate() {
                *r = self.b[i * v + k] + g[k] + h[k];
            }
            for j in shape.neighbors6(i) {
                let a = &self.a[ctx[j] * v..(ctx[j] + 1) * v];
                for (r, &x) in row.iter_mut().zip(a) {
                    *r += x;
                }
            }
        }
        Ok(out)
    }
}

/// In-place log-softmax of one row.
fn log_softmax(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in row.iter_mut() {
        *x -= lse;
    }
}

impl TokenPredictor for PottsParams {
    fn v_vis(&self) -> usize {
        self.v_vis
    }

    fn predict(
        &self,
        task: TaskKind,
        class: Option<u32>,
        corrupted: &[InputToken],
        shape: &GridShape,
    ) -> Result<ProbMatrix> {
        let mut data = self.logits(task, class, corrupted, shape)?;
        for row in data.chunks_mut(self.v_vis) {
            log_softmax(row);
            for x in row.iter_mut() {
                *x = x.exp();
            }
        }
        ProbMatrix::new(self.n_positions, self.v_vis, data)
    }
}

/// Mean label-smoothed cross-entropy over every position of every example,
/// and its gradient with respect to all four parameter blocks.
pub fn loss_and_gradient(
    params: &PottsParams,
    batch: &[Example],
    shape: &GridShape,
    label_smoothing: f64,
) -> Result<(LossBreakdown, PottsParams)> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    if !(0.0..1.0).contains(&label_smoothing) {
        return Err(Error::Config(format!(
            "label smoothing {label_smoothing} outside [0, 1)"
        )));
    }
    let v = params.v_vis;
    let n = params.n_positions;
    let scale = 1.0 / (batch.len() * n) as f64;
    let neighbors = shape.neighbor_table();
    let mut grad = PottsParams::zeros(v, n, params.n_classes);
    let mut acc = LossAccumulator::default();
    let mut d = vec![0.0; v];
    for ex in batch {
        if ex.targets.len() != n || ex.regions.len() != n {
            return Err(Error::Dimension(
                "example targets/regions length mismatch".into(),
            ));
        }
        let mut logp = params.logits(ex.task, ex.class, &ex.corrupted, shape)?;
        let ctx = params.context_rows(&ex.corrupted)?;
        let task_row = ex.task.index();
        let class_row = params.class_row(ex.class)?;
        for i in 0..n {
            let t = ex.targets[i] as usize;
            if t >= v {
                return Err(Error::Vocabulary(format!("target {t} outside codebook")));
            }
            let row = &mut logp[i * v..(i + 1) * v];
            log_softmax(row);
            let smooth = label_smoothing / v as f64;
            let ce = -(1.0 - label_smoothing) * row[t] - smooth * row.iter().sum::<f64>();
            acc.add(ex.regions[i], ce);
            for k in 0..v {
                let target = if k == t { 1.0 - label_smoothing } else { 0.0 } + smooth;
                d[k] = (row[k].exp() - target) * scale;
            }
            let add = |dst: &mut [f64]| {
                for (x, dk) in dst.iter_mut().zip(&d) {
                    *x += dk;
                }
            };
            add(&mut grad.b[i * v..(i + 1) * v]);
            add(&mut grad.g[task_row * v..(task_row + 1) * v]);
            add(&mut grad.h[class_row * v..(class_row + 1) * v]);
            for &j in &neighbors[i] {
                add(&mut grad.a[ctx[j] * v..(ctx[j] + 1) * v]);
            }
        }
    }
    for (name, blk) in grad.blocks() {
        if let Some(x) = blk.iter().find(|x| !x.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient {x} in block {name}"
            )));
        }
    }
    Ok((acc.finish(), grad))
}

/// One step of plain SGD on the batch; returns the loss before the update.
pub fn grad_step(
    params: &mut PottsParams,
    batch: &[Example],
    shape: &GridShape,
    learning_rate: f64,
    label_smoothing: f64,
) -> Result<LossBreakdown> {
    if !(learning_rate.is_finite() && learning_rate >= 0.0) {
        return Err(Error::Config(format!(
            "learning rate {learning_rate} must be >= 0"
        )));
    }
    let (loss, grad) = loss_and_gradient(params, batch, shape, label_smoothing)?;
    if !loss.total.is_finite() {
        return Err(Error::Training(format!("non-finite loss {}", loss.total)));
    }
    for ((_, p), (_, g)) in params.blocks_mut().into_iter().zip(grad.blocks()) {
        for (x, dx) in p.iter_mut().zip(g) {
            *x -= learning_rate * dx;
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn shape222() -> GridShape {
        GridShape::new((2, 2, 2), (1, 1, 1)).unwrap()
    }

    fn random_params(v: usize, n: usize, c: usize, rng: &mut Rng) -> PottsParams {
        let mut p = PottsParams::zeros(v, n, c);
        for (_, blk) in p.blocks_mut() {
            for x in blk.iter_mut() {
                *x = rng.uniform() - 0.5;
            }
        }
        p
    }

    fn random_example(v: usize, n: usize, c: usize, rng: &mut Rng) -> Example {
        let corrupted = (0..n)
            .map(|_| {
                if rng.below(3) == 0 {
                    InputToken::Mask
                } else {
                    InputToken::Visual(rng.below(v) as u32)
                }
            })
            .collect();
        let task = TaskKind::ALL[rng.below(TaskKind::COUNT)];
        Example {
            task,
            class: if rng.below(2) == 0 {
                None
            } else {
                Some(rng.below(c) as u32)
            },
            corrupted,
            targets: (0..n).map(|_| rng.below(v) as u32).collect(),
            regions: (0..n)
                .map(|_| [Region::Refine, Region::Mask, Region::Recons][rng.below(3)])
                .collect(),
        }
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let p = PottsParams::zeros(5, 8, 2);
        let input = vec![InputToken::Mask; 8];
        let probs = p
            .predict(TaskKind::FramePrediction, None, &input, &shape222())
            .unwrap();
        for i in 0..8 {
            assert!(probs.row(i).iter().all(|&x| (x - 0.2).abs() < 1e-15));
        }
        let ex = Example {
            task: TaskKind::FramePrediction,
            class: None,
            corrupted: input,
            targets: vec![1; 8],
            regions: vec![Region::Mask; 8],
        };
        let (loss, _) = loss_and_gradient(&p, &[ex], &shape222(), 0.0).unwrap();
        assert!((loss.total - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rows_are_stochastic_on_fuzzed_inputs() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let mut p = random_params(6, 8, 3, &mut rng);
            for x in p.a.iter_mut() {
                *x *= 40.0;
            }
            let ex = random_example(6, 8, 3, &mut rng);
            let probs = p
                .predict(ex.task, ex.class, &ex.corrupted, &shape222())
                .unwrap();
            probs.check_stochastic().unwrap();
        }
    }

    #[test]
    fn rejects_bad_ids() {
        let p = PottsParams::zeros(4, 8, 2);
        let mut input = vec![InputToken::Mask; 8];
        input[3] = InputToken::Visual(4);
        assert!(matches!(
            p.predict(TaskKind::FramePrediction, None, &input, &shape222()),
            Err(Error::Vocabulary(_))
        ));
        let input = vec![InputToken::Mask; 8];
        assert!(p
            .predict(TaskKind::ClassGeneration, Some(2), &input, &shape222())
            .is_err());
        assert!(p
            .predict(TaskKind::FramePrediction, None, &input[..7], &shape222())
            .is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(12);
        let (v, n, c) = (4, 8, 2);
        let shape = shape222();
        for eps_ls in [0.0, 1e-4] {
            let params = random_params(v, n, c, &mut rng);
            let batch: Vec<Example> = (0..3).map(|_| random_example(v, n, c, &mut rng)).collect();
            let (_, grad) = loss_and_gradient(&params, &batch, &shape, eps_ls).unwrap();
            let h = 1e-5;
            for bi in 0..4 {
                let len = params.blocks()[bi].1.len();
                for k in 0..len {
                    let mut plus = params.clone();
                    plus.blocks_mut()[bi].1[k] += h;
                    let mut minus = params.clone();
                    minus.blocks_mut()[bi].1[k] -= h;
                    let lp = loss_and_gradient(&plus, &batch, &shape, eps_ls)
                        .unwrap()
                        .0
                        .total;
                    let lm = loss_and_gradient(&minus, &batch, &shape, eps_ls)
                        .unwrap()
                        .0
                        .total;
                    let fd = (lp - lm) / (2.0 * h);
                    let an = grad.blocks()[bi].1[k];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (an - fd).abs() / denom < 1e-4,
                        "block {bi}[{k}]: {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut rng = Rng::new(1);
        let mut p = random_params(4, 8, 2, &mut rng);
        let before = p.clone();
        let ex = random_example(4, 8, 2, &mut rng);
        grad_step(&mut p, &[ex], &shape222(), 0.0, 1e-4).unwrap();
        assert_eq!(p, before);
        assert!(grad_step(&mut p, &[], &shape222(), 0.1, 0.0).is_err());
        let ex = random_example(4, 8, 2, &mut rng);
        assert!(matches!(
            grad_step(&mut p, &[ex], &shape222(), -1.0, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn repeated_steps_decrease_single_example_loss() {
        let mut rng = Rng::new(2);
        let mut p = PottsParams::zeros(4, 8, 2);
        let ex = random_example(4, 8, 2, &mut rng);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let l = grad_step(&mut p, std::slice::from_ref(&ex), &shape222(), 0.5, 0.0).unwrap();
            assert!(l.total < prev, "{} !< {prev}", l.total);
            prev = l.total;
        }
    }
}
