//! Small summary-statistics helpers shared by engines and experiments.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `None` below two samples.
pub fn variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs);
    Some(xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Standard error of the mean of independent samples.
pub fn stderr(xs: &[f64]) -> Option<f64> {
    variance(xs).map(|v| (v / xs.len() as f64).sqrt())
}

/// Standard error of the mean of a correlated series, estimated from
/// `batches` contiguous batch means.
pub fn batch_means_stderr(xs: &[f64], batches: usize) -> Option<f64> {
    let batches = batches.min(xs.len());
    if batches < 2 {
        return None;
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    stderr(&means)
}

/// Compares the mean of the second half of a series with the mean of its
/// last quarter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck {
    pub second_half_mean: f64,
    pub last_quarter_mean: f64,
    pub stderr: f64,
    pub passed: bool,
}

/// Passes when the two means differ by less than three standard errors of
/// their difference (batch means over the third and fourth quarters).
pub fn stationarity_check(samples: &[f64]) -> Option<StationarityCheck> {
    let q = samples.len() / 4;
    if q < 40 {
        return None;
    }
    let third = &samples[2 * q..3 * q];
    let fourth = &samples[3 * q..];
    let second_half = &samples[2 * q..];
    let se3 = batch_means_stderr(third, 20)?;
    let se4 = batch_means_stderr(fourth, 20)?;
    // mean(second half) - mean(last quarter) = (mean(Q3) - mean(Q4)) / 2
    let se = 0.5 * (se3 * se3 + se4 * se4).sqrt();
    let a = mean(second_half);
    let b = mean(fourth);
    Some(StationarityCheck {
        second_half_mean: a,
        last_quarter_mean: b,
        stderr: se,
        passed: (a - b).abs() < 3.0 * se,
    })
}
