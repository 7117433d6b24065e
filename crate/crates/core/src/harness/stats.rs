//! Summary statistics over loss traces.

/// Median; the mean of the middle pair for even lengths. NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

/// Trailing moving average; the first `window - 1` entries average what is
/// available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Standard deviation of successive loss differences `L_{t+1} − L_t` for
/// `t ≥ after`. `None` with fewer than two differences.
pub fn roughness(losses: &[f64], after: usize) -> Option<f64> {
    let tail = losses.get(after..)?;
    let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.len() < 2 {
        return None;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    Some((diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt())
}
