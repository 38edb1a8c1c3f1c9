//! First-order aggregation statistics.

/// Column order of the 8 first-order statistics.
pub const STAT_NAMES: [&str; 8] = [
    "mean", "std", "var", "sum", "max", "min", "skew", "kurt",
];

const VAR_FLOOR: f64 = 1e-12;

/// Population moments in the order mean, std, var, sum, max, min, skewness,
/// excess kurtosis. An empty list yields all zeros (paired with mask=false
/// by callers); skew and kurtosis are defined as 0 when variance < 1e-12.
pub fn first_order_stats(values: &[f64]) -> [f64; 8] {
    if values.is_empty() {
        return [0.0; 8];
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let (skew, kurt) = if m2 < VAR_FLOOR {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    [mean, m2.sqrt(), m2, sum, max, min, skew, kurt]
}
