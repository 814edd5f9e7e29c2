use crate::error::{input_err, Error, Result};
use crate::nn::DenseMatrix;

fn log_softmax_row(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(move |v| v - lse)
}

fn check_labels(logits: &DenseMatrix, labels: &[usize], rows: &[usize]) -> Result<()> {
    if labels.len() != logits.n_rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            logits.n_rows()
        )));
    }
    let c = logits.n_cols();
    for &i in rows {
        if i >= labels.len() {
            return input_err(format!("mask index {i} out of range"));
        }
        if labels[i] >= c {
            return input_err(format!("label {} of node {i} is not below {c}", labels[i]));
        }
    }
    Ok(())
}

/// Mean softmax cross entropy over `mask` and its gradient with respect to
/// the logits. Rows outside the mask get a zero gradient.
pub fn softmax_cross_entropy(
    logits: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return input_err("loss mask is empty");
    }
    check_labels(logits, labels, mask)?;
    let scale = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.n_rows(), logits.n_cols());
    let mut loss = 0.0;
    for &i in mask {
        let y = labels[i];
        let out = grad.row_mut(i);
        for (k, (o, lp)) in out
            .iter_mut()
            .zip(log_softmax_row(logits.row(i)))
            .enumerate()
        {
            if k == y {
                loss -= lp;
                *o = (lp.exp() - 1.0) * scale;
            } else {
                *o = lp.exp() * scale;
            }
        }
    }
    Ok((loss * scale, grad))
}

/// Cross entropy of every row against its label.
pub fn per_node_cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..logits.n_rows()).collect();
    check_labels(logits, labels, &all)?;
    Ok(all
        .iter()
        .map(|&i| -log_softmax_row(logits.row(i)).nth(labels[i]).unwrap())
        .collect())
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = DenseMatrix::zeros(3, 4);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 3], &[0, 1, 2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_margin_gives_near_zero_loss() {
        let logits = DenseMatrix::from_rows(&[vec![0.0, 1000.0]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[1], &[0]).unwrap();
        assert!((0.0..1e-300).contains(&loss));
        assert!(grad.max_abs() < 1e-300);
    }

    #[test]
    fn rows_outside_mask_have_zero_gradient() {
        let logits = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.2);
        let (_, grad) = softmax_cross_entropy(&logits, &[0, 1, 2, 0], &[1, 3]).unwrap();
        assert!(grad.row(0).iter().all(|&v| v == 0.0));
        assert!(grad.row(2).iter().all(|&v| v == 0.0));
        // each masked row sums to zero, scaled by 1/|mask|
        assert!(grad.row(1).iter().sum::<f64>().abs() < 1e-15);
        assert!((grad[(1, 1)] - (logits_softmax(&logits, 1, 1) - 1.0) / 2.0).abs() < 1e-15);
    }

    fn logits_softmax(l: &DenseMatrix, i: usize, k: usize) -> f64 {
        let z: f64 = l.row(i).iter().map(|v| v.exp()).sum();
        l[(i, k)].exp() / z
    }

    #[test]
    fn finite_difference_gradient() {
        let logits = DenseMatrix::from_fn(4, 3, |i, j| ((i * 7 + j * 3) as f64).sin() * 1.5);
        let labels = [2, 0, 1, 1];
        let mask = [0, 1, 3];
        let (_, grad) = softmax_cross_entropy(&logits, &labels, &mask).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            for j in 0..3 {
                let mut p = logits.clone();
                p[(i, j)] += h;
                let mut m = logits.clone();
                m[(i, j)] -= h;
                let fd = (softmax_cross_entropy(&p, &labels, &mask).unwrap().0
                    - softmax_cross_entropy(&m, &labels, &mask).unwrap().0)
                    / (2.0 * h);
                let an = grad[(i, j)];
                if an.abs().max(fd.abs()) > 1e-8 {
                    assert!(
                        (fd - an).abs() / fd.abs().max(an.abs()) <= 1e-6,
                        "{fd} vs {an}"
                    );
                } else {
                    assert!(fd.abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn errors() {
        let logits = DenseMatrix::zeros(2, 2);
        assert!(softmax_cross_entropy(&logits, &[0, 1], &[]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0, 2], &[1]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0], &[0]).is_err());
    }

    #[test]
    fn per_node_matches_masked_mean() {
        let logits = DenseMatrix::from_fn(5, 3, |i, j| (i as f64 * 0.7 - j as f64).cos());
        let labels = [0, 1, 2, 0, 1];
        let per = per_node_cross_entropy(&logits, &labels).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &labels, &[0, 1, 2, 3, 4]).unwrap();
        assert!((per.iter().sum::<f64>() / 5.0 - loss).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
