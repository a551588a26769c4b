use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::video::VideoTensor;

/// PSNR reported for identical videos.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Fraction of equal ids, optionally over the positions where `select` is true.
pub fn token_accuracy(pred: &TokenGrid, truth: &TokenGrid, select: Option<&[bool]>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension("token grids differ in shape".into()));
    }
    if let Some(s) = select {
        if s.len() != truth.len() {
            return Err(Error::Dimension("selection does not match the grid".into()));
        }
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for (i, (a, b)) in pred.ids().iter().zip(truth.ids()).enumerate() {
        if select.is_none_or(|s| s[i]) {
            total += 1;
            hits += usize::from(a == b);
        }
    }
    if total == 0 {
        return Err(Error::Dimension("accuracy over an empty selection".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// `10 log10(1 / MSE)` for values in `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    if !a.same_extent(b) {
        return Err(Error::Dimension("videos differ in shape".into()));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum();
    let mse = sse / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}
