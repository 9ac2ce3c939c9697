//! Least-squares convergence rates.

/// Slope of the least-squares line through `(ln h, ln e)`.
///
/// Returns NaN with fewer than two points or a non-positive entry.
pub fn loglog_slope(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len().min(e.len());
    if n < 2 || h[..n].iter().chain(&e[..n]).any(|&v| !(v > 0.0)) {
        return f64::NAN;
    }
    let x: Vec<f64> = h[..n].iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e[..n].iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 7.0 * v.powi(3)).collect();
        assert!((loglog_slope(&h, &e) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_input() {
        assert!(loglog_slope(&[0.1], &[1.0]).is_nan());
        assert!(loglog_slope(&[0.1, 0.05], &[1.0, 0.0]).is_nan());
    }
}
