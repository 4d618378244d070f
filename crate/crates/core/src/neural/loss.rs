use super::Real;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of one prediction and its gradient with respect to
/// the probability.
pub fn bce_loss<T: Real>(pred: T, label: T) -> (T, T) {
    let eps = T::lit(PROB_CLAMP);
    let p = pred.max(eps).min(T::one() - eps);
    let loss = -(label * p.ln() + (T::one() - label) * (T::one() - p).ln());
    let grad = (p - label) / (p * (T::one() - p));
    (loss, grad)
}

/// Gradient of BCE after a sigmoid, taken with respect to the logit.
pub fn bce_logit_grad<T: Real>(pred: T, label: T) -> T {
    pred - label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::real::sigmoid;

    #[test]
    fn examples() {
        let (l, _) = bce_loss(0.5f64, 1.0);
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_loss(1.0f64, 1.0);
        assert!((0.0..=1.7e-7).contains(&l));
        let (l, _) = bce_loss(0.0f64, 0.0);
        assert!((0.0..=1.7e-7).contains(&l));
        assert_eq!(bce_logit_grad(sigmoid(0.0f64), 1.0), -0.5);
    }

    #[test]
    fn chain_rule_through_sigmoid_gives_p_minus_y() {
        for &z in &[-3.0f64, -0.4, 0.0, 1.2, 2.5] {
            for &y in &[0.0, 1.0] {
                let p = sigmoid(z);
                let (_, g) = bce_loss(p, y);
                assert!((g * p * (1.0 - p) - bce_logit_grad(p, y)).abs() < 1e-12);
            }
        }
    }
}
