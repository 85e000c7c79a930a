use super::{Tape, Var};

/// Largest relative disagreement between reverse-mode gradients and central
/// finite differences over every coordinate of `params`.
///
/// The output is the tape's last node. Relative error per coordinate is
/// `|analytic − numeric| / max(1e-12, |analytic| + |numeric|)`. Any failure
/// (non-scalar output, non-finite difference) reports `+∞`.
pub fn grad_check(tape: &mut Tape, params: &[Var], eps: f64) -> f64 {
    if !(eps > 0.0) {
        return f64::INFINITY;
    }
    let Some(output) = tape.output() else { return f64::INFINITY };
    let Ok(grads) = tape.backward(output) else { return f64::INFINITY };

    let mut worst: f64 = 0.0;
    for &p in params {
        let analytic = grads.wrt(p);
        for i in 0..analytic.len() {
            let original = tape.value(p).data()[i];
            let mut eval_at = |x: f64| -> f64 {
                tape.leaf_value_mut(p).data_mut()[i] = x;
                match tape.recompute() {
                    Ok(()) => tape.value(output).data()[0],
                    Err(_) => f64::NAN,
                }
            };
            let plus = eval_at(original + eps);
            let minus = eval_at(original - eps);
            tape.leaf_value_mut(p).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() {
                let _ = tape.recompute();
                return f64::INFINITY;
            }
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    let _ = tape.recompute();
    worst
}
