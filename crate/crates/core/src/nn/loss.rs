//! Softmax and sparse categorical cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise `exp(z - rowmax) / sum`.
pub fn softmax_forward<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 2 || z.shape()[1] == 0 {
        return Err(Error::dim("softmax_forward", z.shape(), &[0, 1]));
    }
    let k = z.shape()[1];
    let mut out = z.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

fn check_labels<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    if probs.rank() != 2 {
        return Err(Error::dim("sparse_ce_loss", probs.shape(), &[labels.len(), 0]));
    }
    let (batch, k) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != batch {
        return Err(Error::Validation(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Validation(format!(
            "label {l} at position {i} is outside [0, {k})"
        )));
    }
    Ok(k)
}

/// Sum over the batch of `-ln(max(p[label], floor))`, accumulated in `f64`.
/// A NaN probability yields a NaN sum.
pub fn sparse_ce_sum<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let k = check_labels(probs, labels)?;
    Ok(probs
        .data()
        .chunks_exact(k)
        .zip(labels)
        .map(|(row, &l)| {
            let p = row[l].to_f64_lossless();
            if p.is_nan() {
                f64::NAN
            } else {
                -p.max(PROB_FLOOR).ln()
            }
        })
        .sum())
}

/// Mean sparse categorical cross-entropy over the batch.
pub fn sparse_ce_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let total = sparse_ce_sum(probs, labels)?;
    Ok(if labels.is_empty() {
        0.0
    } else {
        total / labels.len() as f64
    })
}

/// Gradient of the mean loss with respect to the softmax logits:
/// `(probs - onehot(labels)) / batch`.
pub fn softmax_ce_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let k = check_labels(probs, labels)?;
    let batch = T::from_usize(labels.len().max(1)).expect("batch fits in a float");
    let mut grad = probs.clone();
    for (row, &l) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        row[l] -= T::one();
        row.iter_mut().for_each(|v| *v = *v / batch);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_forward(&t(&[1, 2], &[0.0, 0.0])).unwrap().data(), &[0.5, 0.5]);
        let p = softmax_forward(&t(&[1, 2], &[1000.0, 0.0])).unwrap();
        assert!(p.all_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15 && p.data()[1] < 1e-300);
    }

    #[test]
    fn loss_examples() {
        let uniform = Tensor::<f64>::full([1, 10], 0.1);
        assert!((sparse_ce_loss(&uniform, &[7]).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(sparse_ce_loss(&t(&[1, 3], &[0.0, 1.0, 0.0]), &[1]).unwrap(), 0.0);

        let two = t(&[2, 2], &[0.25, 0.75, 0.6, 0.4]);
        let l1 = sparse_ce_loss(&t(&[1, 2], &[0.25, 0.75]), &[0]).unwrap();
        let l2 = sparse_ce_loss(&t(&[1, 2], &[0.6, 0.4]), &[1]).unwrap();
        assert!((sparse_ce_loss(&two, &[0, 1]).unwrap() - (l1 + l2) / 2.0).abs() < 1e-15);

        assert!(sparse_ce_loss(&t(&[1, 2], &[f64::NAN, 0.5]), &[0]).unwrap().is_nan());
        let floored = sparse_ce_loss(&t(&[1, 2], &[1.0, 0.0]), &[1]).unwrap();
        assert!((floored - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn label_validation() {
        let p = Tensor::<f64>::full([2, 3], 1.0 / 3.0);
        assert!(matches!(sparse_ce_loss(&p, &[0, 3]), Err(Error::Validation(_))));
        assert!(matches!(sparse_ce_loss(&p, &[0]), Err(Error::Validation(_))));
        assert!(softmax_ce_backward(&p, &[5, 0]).is_err());
    }

    #[test]
    fn fused_backward_examples() {
        let onehot = t(&[2, 3], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let g = softmax_ce_backward(&onehot, &[1, 0]).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let g = softmax_ce_backward(&t(&[1, 2], &[0.5, 0.5]), &[0]).unwrap();
        assert_eq!(g.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn fused_backward_matches_finite_differences() {
        let z = t(
            &[3, 4],
            &[0.3, -1.2, 2.0, 0.1, -0.5, 0.5, 0.0, 1.5, 2.2, -2.0, 0.7, -0.1],
        );
        let labels = [2, 3, 0];
        let g = softmax_ce_backward(&softmax_forward(&z).unwrap(), &labels).unwrap();
        let h = 1e-5;
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp.data_mut()[i] += h;
            zm.data_mut()[i] -= h;
            let lp = sparse_ce_loss(&softmax_forward(&zp).unwrap(), &labels).unwrap();
            let lm = sparse_ce_loss(&softmax_forward(&zm).unwrap(), &labels).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((g.data()[i] - fd).abs() / fd.abs().max(1.0) < 1e-6, "{i}");
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(v in proptest::collection::vec(-15.0f64..15.0, 12)) {
            let p = softmax_forward(&t(&[3, 4], &v)).unwrap();
            for row in p.data().chunks(4) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }

        #[test]
        fn softmax_shift_invariant(v in proptest::collection::vec(-30.0f64..30.0, 5), c in -100.0f64..100.0) {
            let a = softmax_forward(&t(&[1, 5], &v)).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax_forward(&t(&[1, 5], &shifted)).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_non_negative(v in proptest::collection::vec(-30.0f64..30.0, 8), label in 0usize..4) {
            let p = softmax_forward(&t(&[2, 4], &v)).unwrap();
            prop_assert!(sparse_ce_loss(&p, &[label, 3 - label]).unwrap() >= 0.0);
        }
    }
}
