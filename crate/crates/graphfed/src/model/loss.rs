//! Classification objective and evaluation metric.

use crate::dense::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Row-wise softmax, stabilized by max subtraction.
#[cfg(test)]
pub(crate) fn softmax_rows<T: Real>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean negative log-likelihood over the masked rows, plus its gradient
/// with respect to the logits: `(softmax - onehot) / |mask|` on masked
/// rows, zero elsewhere.
pub fn cross_entropy_loss<T: Real>(
    logits: &DenseMatrix<T>,
    labels: &[u32],
    mask: &[u32],
) -> Result<(f64, DenseMatrix<T>)> {
    if mask.is_empty() {
        return Err(Error::InvalidInput("loss mask selects no vertices".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    let inv_count = T::from_f64(1.0 / mask.len() as f64);
    let mut grad = DenseMatrix::<T>::zeros(logits.rows(), classes);
    let mut total = 0.0f64;
    for &i in mask {
        let i = i as usize;
        if i >= logits.rows() {
            return Err(Error::InvalidInput(format!("mask row {i} out of range")));
        }
        let label = labels[i] as usize;
        if label >= classes {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        total += (log_sum - row[label]).to_f64();
        let grad_row = grad.row_mut(i);
        for (j, g) in grad_row.iter_mut().enumerate() {
            let p = (row[j] - log_sum).exp();
            let target = if j == label { T::one() } else { T::zero() };
            *g = (p - target) * inv_count;
        }
    }
    Ok((total / mask.len() as f64, grad))
}

/// Micro-averaged F1 over the masked vertices, computed from the pooled
/// true-positive / false-positive / false-negative counts:
/// `2 TP / (2 TP + FP + FN)`. For single-label multiclass prediction this
/// equals plain accuracy.
pub fn micro_f1(predictions: &[u32], labels: &[u32], mask: &[u32]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::InvalidInput("metric mask selects no vertices".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for &i in mask {
        let i = i as usize;
        if i >= predictions.len() {
            return Err(Error::InvalidInput(format!("mask row {i} out of range")));
        }
        if predictions[i] == labels[i] {
            tp += 1;
        } else {
            // one false positive for the predicted class,
            // one false negative for the true class
            fp += 1;
            fn_ += 1;
        }
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_log_num_classes() {
        let logits = DenseMatrix::<f64>::zeros(3, 5);
        let labels = vec![0, 2, 4];
        let (loss, _) = cross_entropy_loss(&logits, &labels, &[0, 1, 2]).unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_drives_loss_to_zero() {
        let mut logits = DenseMatrix::<f64>::zeros(1, 3);
        logits.set(0, 1, 50.0);
        let (loss, _) = cross_entropy_loss(&logits, &[1], &[0]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let logits = DenseMatrix::<f64>::zeros(2, 2);
        assert!(cross_entropy_loss(&logits, &[0, 1], &[]).is_err());
        assert!(micro_f1(&[0, 1], &[0, 1], &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(4, &[20]);
        let logits =
            DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .unwrap();
        let labels = vec![2u32, 0, 1, 1];
        let mask = vec![0u32, 1, 3];
        let (_, grad) = cross_entropy_loss(&logits, &labels, &mask).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut plus = logits.clone();
                plus.set(i, j, plus.get(i, j) + h);
                let mut minus = logits.clone();
                minus.set(i, j, minus.get(i, j) - h);
                let fd = (cross_entropy_loss(&plus, &labels, &mask).unwrap().0
                    - cross_entropy_loss(&minus, &labels, &mask).unwrap().0)
                    / (2.0 * h);
                let an = grad.get(i, j);
                let denom = an.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (an - fd).abs() / denom < 1e-5,
                    "({i},{j}): analytic {an} vs fd {fd}"
                );
            }
        }
        // unmasked rows carry no gradient
        assert!(grad.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::stream(8, &[21]);
        let logits = DenseMatrix::from_vec(
            6,
            4,
            (0..24).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect(),
        )
        .unwrap();
        let probs = softmax_rows(&logits);
        for i in 0..probs.rows() {
            let sum: f64 = probs.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn micro_f1_boundaries() {
        let mask: Vec<u32> = (0..4).collect();
        assert_eq!(micro_f1(&[1, 2, 3, 0], &[1, 2, 3, 0], &mask).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 2, 3, 0], &[0, 1, 2, 3], &mask).unwrap(), 0.0);
    }

    #[test]
    fn micro_f1_equals_accuracy_via_per_class_tally() {
        let mut rng = crate::rng::stream(0, &[22]);
        for _ in 0..50 {
            let n = rng.random_range(1..40usize);
            let c = rng.random_range(2..6u32);
            let preds: Vec<u32> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let mask: Vec<u32> = (0..n as u32).collect();
            let f1 = micro_f1(&preds, &labels, &mask).unwrap();

            // oracle: per-class TP/FP/FN tally, pooled micro counts
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for class in 0..c {
                for i in 0..n {
                    match (preds[i] == class, labels[i] == class) {
                        (true, true) => tp += 1.0,
                        (true, false) => fp += 1.0,
                        (false, true) => fn_ += 1.0,
                        _ => {}
                    }
                }
            }
            let oracle = 2.0 * tp / (2.0 * tp + fp + fn_);
            assert_eq!(f1, oracle);

            let accuracy =
                preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / n as f64;
            assert_eq!(f1, accuracy);
        }
    }
}
