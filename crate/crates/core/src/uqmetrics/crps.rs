use super::MetricsError;

fn check(members: &[f64], truth: f64) -> Result<(), MetricsError> {
    if members.is_empty() {
        return Err(MetricsError::NoMembers);
    }
    if !truth.is_finite() || !members.iter().all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite("crps input"));
    }
    Ok(())
}

/// Ensemble CRPS: `(1/M)·Σⱼ|y − yⱼ| − (1/(2M²))·Σⱼ Σₖ |yⱼ − yₖ|`.
///
/// For a single member this is the absolute error. Members are summed in
/// sorted order, so the result is exactly invariant to member permutation.
pub fn crps_ensemble(members: &[f64], truth: f64) -> Result<f64, MetricsError> {
    check(members, truth)?;
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let members = sorted.as_slice();
    let m = members.len() as f64;
    let accuracy: f64 = members.iter().map(|y| (truth - y).abs()).sum::<f64>() / m;
    let mut pairwise = 0.0;
    for a in members {
        for b in members {
            pairwise += (a - b).abs();
        }
    }
    Ok((accuracy - pairwise / (2.0 * m * m)).max(0.0))
}

/// Channel-summed CRPS: `members[j]` is member `j`'s vector of `n` values.
pub fn crps_vector(members: &[&[f64]], truth: &[f64]) -> Result<f64, MetricsError> {
    if members.is_empty() {
        return Err(MetricsError::NoMembers);
    }
    if let Some(bad) = members.iter().find(|m| m.len() != truth.len()) {
        return Err(MetricsError::ShapeMismatch(format!(
            "member has {} channels, truth has {}",
            bad.len(),
            truth.len()
        )));
    }
    (0..truth.len())
        .map(|c| {
            let col: Vec<f64> = members.iter().map(|m| m[c]).collect();
            crps_ensemble(&col, truth[c])
        })
        .sum()
}

/// The integral form `∫ (F(y) − 𝟙{y ≥ y_true})² dy` with `F` the empirical CDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralCrps {
    /// Exact integral of the piecewise-constant integrand between sorted breakpoints.
    pub exact: f64,
    /// Midpoint-rule value over `[min − 1, max + 1]`; accurate to `O(step)`.
    pub quadrature: f64,
}

fn integrand(sorted: &[f64], truth: f64, y: f64) -> f64 {
    let below = sorted.partition_point(|v| *v <= y) as f64;
    let cdf = below / sorted.len() as f64;
    let step = if y >= truth { 1.0 } else { 0.0 };
    (cdf - step) * (cdf - step)
}

/// Independent CRPS evaluation from the CDF definition.
pub fn crps_integral_oracle(members: &[f64], truth: f64, step: f64) -> Result<IntegralCrps, MetricsError> {
    check(members, truth)?;
    if !(step > 0.0) {
        return Err(MetricsError::InvalidArgument(format!("quadrature step must be positive, got {step}")));
    }
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut breaks = sorted.clone();
    breaks.push(truth);
    breaks.sort_by(f64::total_cmp);

    let mut exact = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi > lo {
            exact += integrand(&sorted, truth, 0.5 * (lo + hi)) * (hi - lo);
        }
    }

    let lo = breaks[0] - 1.0;
    let hi = breaks[breaks.len() - 1] + 1.0;
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let h = (hi - lo) / cells as f64;
    let quadrature = (0..cells)
        .map(|i| integrand(&sorted, truth, lo + (i as f64 + 0.5) * h))
        .sum::<f64>()
        * h;
    Ok(IntegralCrps { exact, quadrature })
}
