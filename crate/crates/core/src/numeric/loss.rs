use crate::error::{Error, Result};

/// Mean absolute error `(1/n) Σ |x_i − x̂_i|`.
pub fn mae_loss(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::dims("mae_loss operands", x.len(), x_hat.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("mae_loss"));
    }
    let sum: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / x.len() as f64)
}

/// sign(0) := 0
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
