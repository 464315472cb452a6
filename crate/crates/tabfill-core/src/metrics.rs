//! Distribution distances used by the evaluation protocol: Jensen-Shannon
//! distance for categorical samples and range-normalized 1-D Wasserstein
//! distance for numerical samples.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptySample,
    LengthMismatch { p: usize, q: usize },
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::EmptySample => write!(f, "empty sample set"),
            MetricsError::LengthMismatch { p, q } => {
                write!(f, "distributions have different supports: {p} vs {q}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}

fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Normalizes category counts into a probability vector.
pub fn distribution_from_counts(counts: &[usize]) -> Result<Vec<f64>, MetricsError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptySample);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Jensen-Shannon distance between two distributions over the same
/// category universe: the square root of the JS divergence with base-2
/// logarithms, so the result lies in [0, 1]. Zero-probability categories
/// are allowed on either side.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch { p: p.len(), q: q.len() });
    }
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += 0.5 * a * log2(a / m);
        }
        if b > 0.0 {
            div += 0.5 * b * log2(b / m);
        }
    }
    // Guard the tiny negative round-off when p == q.
    Ok(libm::sqrt(div.max(0.0)))
}

/// Shannon entropy in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * log2(x);
        }
    }
    h
}

/// 1-D Wasserstein-1 distance between two sample sets, via the area
/// between their empirical CDFs. For equal sample counts this equals the
/// mean absolute difference of the sorted samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut dist = 0.0;
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut prev = f64::NAN;
    while ia < sa.len() || ib < sb.len() {
        let v = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() && v > prev {
            let cdf_a = ia as f64 / na;
            let cdf_b = ib as f64 / nb;
            dist += (cdf_a - cdf_b).abs() * (v - prev);
        }
        while ia < sa.len() && sa[ia] == v {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] == v {
            ib += 1;
        }
        prev = v;
    }
    Ok(dist)
}

/// Wasserstein distance divided by the value range of the true samples
/// `a`. When the true samples have zero range the raw distance is
/// returned with `normalized == false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedW1 {
    pub value: f64,
    pub normalized: bool,
}

pub fn wasserstein_1d_normalized(a: &[f64], b: &[f64]) -> Result<NormalizedW1, MetricsError> {
    let w = wasserstein_1d(a, b)?;
    let min = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range > 0.0 {
        Ok(NormalizedW1 { value: w / range, normalized: true })
    } else {
        Ok(NormalizedW1 { value: w, normalized: false })
    }
}
