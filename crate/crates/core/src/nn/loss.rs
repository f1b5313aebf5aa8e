//! Binary cross-entropy for the click head and softmax cross-entropy for
//! the duration head, each with its gradient taken directly at the logits.

const CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Mean of -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1-1e-7].
pub fn bce_loss(preds: &[f64], labels: &[f64]) -> f64 {
    debug_assert_eq!(preds.len(), labels.len());
    if preds.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        let p = clamp_prob(p);
        acc -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    acc / preds.len() as f64
}

/// Under the sigmoid composition, dL/dlogit = (p - y) / n.
pub fn bce_grad_wrt_logit(preds: &[f64], labels: &[f64]) -> Vec<f64> {
    debug_assert_eq!(preds.len(), labels.len());
    let n = preds.len().max(1) as f64;
    preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y) / n)
        .collect()
}

/// Mean of -ln p_{ true class } over the batch; `probs` is row-major
/// `(batch, classes)`.
pub fn softmax_ce_loss(probs: &[f64], classes: usize, labels: &[usize]) -> f64 {
    debug_assert_eq!(probs.len(), classes * labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        acc -= clamp_prob(probs[r * classes + y]).ln();
    }
    acc / labels.len() as f64
}

/// Under the softmax composition, dL/dlogit = (probs - one_hot) / n.
pub fn softmax_ce_grad_wrt_logit(probs: &[f64], classes: usize, labels: &[usize]) -> Vec<f64> {
    let n = labels.len().max(1) as f64;
    let mut grad = probs.to_vec();
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (r, &y) in labels.iter().enumerate() {
        grad[r * classes + y] -= 1.0 / n;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half_is_ln_two() {
        for y in [0.0, 1.0] {
            assert!((bce_loss(&[0.5], &[y]) - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_perfect_prediction_is_tiny() {
        assert!(bce_loss(&[1.0], &[1.0]) <= 1e-6);
        assert!(bce_loss(&[0.0], &[0.0]) <= 1e-6);
    }

    #[test]
    fn bce_logit_gradient_matches_finite_differences() {
        // Check d/dz mean BCE(sigmoid(z), y) = (p - y)/n directly.
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        let logits = [0.3, -1.2, 2.5, 0.0];
        let labels = [1.0, 0.0, 0.0, 1.0];
        let h = 1e-5;
        let preds: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let analytic = bce_grad_wrt_logit(&preds, &labels);
        for i in 0..logits.len() {
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let lp = bce_loss(&up.map(sigmoid), &labels);
            let lm = bce_loss(&dn.map(sigmoid), &labels);
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (numeric - analytic[i]).abs() / numeric.abs().max(1e-8) < 1e-4,
                "logit {i}: numeric {numeric} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        use crate::nn::{softmax_rows_forward, Tensor2D};
        let logits = Tensor2D::from_vec(2, 3, vec![0.2, -0.4, 1.0, 0.0, 0.5, -1.5]).unwrap();
        let labels = [2usize, 0usize];
        let h = 1e-5;
        let probs = softmax_rows_forward(&logits);
        let analytic = softmax_ce_grad_wrt_logit(&probs.data, 3, &labels);
        for i in 0..logits.data.len() {
            let mut up = logits.clone();
            up.data[i] += h;
            let mut dn = logits.clone();
            dn.data[i] -= h;
            let lp = softmax_ce_loss(&softmax_rows_forward(&up).data, 3, &labels);
            let lm = softmax_ce_loss(&softmax_rows_forward(&dn).data, 3, &labels);
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (numeric - analytic[i]).abs() < 1e-6,
                "logit {i}: numeric {numeric} vs analytic {}",
                analytic[i]
            );
        }
    }
}
