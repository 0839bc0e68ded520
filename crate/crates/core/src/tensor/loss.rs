use super::activation::sigmoid64;
use crate::error::{GgdError, Result};

/// Mean binary cross-entropy on logits, with its gradient.
///
/// Uses `max(x, 0) - x·y + ln(1 + e^{-|x|})` per sample, which is finite for
/// every finite logit. The gradient is `(σ(x) - y) / n`.
pub fn bce_with_logits(logits: &[f32], targets: &[f32]) -> Result<(f64, Vec<f32>)> {
    if logits.len() != targets.len() {
        return Err(GgdError::shape(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let n = logits.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(n);
    for (&x, &y) in logits.iter().zip(targets) {
        let (x, y) = (x as f64, y as f64);
        total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push(((sigmoid64(x) - y) * inv_n) as f32);
    }
    Ok((total * inv_n, grad))
}
