use super::ConformalError;

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConformalError::Alpha(alpha))
    }
}

/// 1-based rank `⌈(n+1)(1−α)⌉` of the conformal threshold among `n`
/// calibration scores, at least 1. A rank above `n` means the region is
/// unbounded. A relative slack of 1e-9 absorbs rounding in `(n+1)(1−α)` so
/// that e.g. `n = 9, α = 0.1` gives exactly 9.
pub fn conformal_rank(n: usize, alpha: f64) -> Result<usize, ConformalError> {
    check_alpha(alpha)?;
    let target = (n + 1) as f64 * (1.0 - alpha);
    let rank = (target - 1e-9 * target.max(1.0)).ceil();
    Ok((rank.max(1.0)) as usize)
}

/// Split-conformal threshold: the rank-`⌈(n+1)(1−α)⌉` smallest score, or
/// `f64::INFINITY` when that rank exceeds `n`.
pub fn conformal_quantile(sorted_scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    if sorted_scores.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    debug_assert!(
        sorted_scores.windows(2).all(|w| w[0] <= w[1]),
        "scores must be sorted"
    );
    let rank = conformal_rank(sorted_scores.len(), alpha)?;
    Ok(sorted_scores
        .get(rank - 1)
        .copied()
        .unwrap_or(f64::INFINITY))
}

/// Conformal p-value `(1 + #{calibration scores ≥ s}) / (n + 1)`.
pub fn p_value(sorted_scores: &[f64], s: f64) -> f64 {
    let n = sorted_scores.len();
    let below = sorted_scores.partition_point(|&c| c < s);
    (1 + n - below) as f64 / (n + 1) as f64
}
