//! Measurements over emitted streams: envelope period and circle fitting.

/// Fundamental period of a uniformly sampled series by autocorrelation.
///
/// The series is mean-subtracted; the period is the lag of the largest
/// autocorrelation peak after the first zero crossing, refined with a
/// parabola through the neighbouring lags. Returns `None` for constant or
/// too-short series.
pub fn autocorrelation_period(series: &[f64], dt: f64) -> Option<f64> {
    let n = series.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy <= f64::EPSILON * n as f64 {
        return None;
    }
    let max_lag = n / 2;
    let ac: Vec<f64> = (0..=max_lag)
        .map(|lag| x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy)
        .collect();
    let first_negative = ac.iter().position(|&v| v < 0.0)?;
    let (best, _) = ac
        .iter()
        .enumerate()
        .skip(first_negative)
        .take(max_lag - first_negative)
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if best == 0 || best >= max_lag {
        return Some(best as f64 * dt);
    }
    let (y0, y1, y2) = (ac[best - 1], ac[best], ac[best + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom.abs() > f64::EPSILON {
        0.5 * (y0 - y2) / denom
    } else {
        0.0
    };
    Some((best as f64 + shift.clamp(-0.5, 0.5)) * dt)
}

/// Indices where a boolean series changes value, with the new value.
pub fn transitions(series: &[bool]) -> Vec<(usize, bool)> {
    series
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, w)| (i + 1, w[1]))
        .collect()
}

/// Population variance.
pub fn variance(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / series.len() as f64
}
