//! Cross-entropy loss over softmax probabilities.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Mean negative log-likelihood of the true classes.
///
/// `probs` rows must already sum to 1 (they come from the classifier's
/// softmax). Returns the scalar loss and the gradient with respect to the
/// logits, `(probs - onehot) / batch`, with the softmax backward folded in.
/// For two classes this is exactly binary cross-entropy on the
/// positive-class probability.
pub fn cross_entropy_loss(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (probs.rows(), probs.cols());
    if labels.len() != n {
        return Err(Error::Dim(format!(
            "{} labels for a batch of {n} rows",
            labels.len()
        )));
    }
    let mut d_logits = probs.clone();
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::Data(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        loss -= probs.row(i)[label].ln();
        d_logits.row_mut(i)[label] -= 1.0;
    }
    d_logits.scale(inv_n);
    Ok((loss * inv_n, d_logits))
}
