use alloc::vec::Vec;

use rand::Rng;

use super::FilterError;

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers into
/// the cumulative weights. Returns the index of the parent of each survivor.
///
/// Weights need not be normalised.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>, FilterError> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FilterError::Divergence);
    }
    let step = total / n as f64;
    let mut pointer = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for _ in 0..n {
        while i + 1 < weights.len() && cumulative + weights[i] <= pointer {
            cumulative += weights[i];
            i += 1;
        }
        out.push(i);
        pointer += step;
    }
    Ok(out)
}

/// `1 / Σ w²` for normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        1.0 / s2
    } else {
        0.0
    }
}
