//! Least-squares helpers for log-log decay fits over a restricted window.

/// Least-squares slope of y against x.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Slope of log y against log x over the points with x in [lo, hi] and
/// y > 0. Returns None when fewer than two points survive the filter.
pub fn loglog_slope(points: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let filtered: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x >= lo && *x <= hi && *y > 0.0 && *x > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if filtered.len() < 2 {
        None
    } else {
        Some(slope(&filtered))
    }
}

/// Geometrically spaced samples in [lo, hi].
pub fn geometric_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| lo * ratio.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let pts: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, (i as f64).powf(-1.5))).collect();
        let s = loglog_slope(&pts, 1.0, 20.0).unwrap();
        assert!((s + 1.5).abs() < 1e-12);
    }

    #[test]
    fn window_filters() {
        let pts = vec![(0.1, 1.0), (1.0, 1.0), (10.0, 0.1), (100.0, 1000.0)];
        let s = loglog_slope(&pts, 0.5, 20.0).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&pts, 200.0, 300.0).is_none());
    }

    #[test]
    fn geometric_endpoints() {
        let pts = geometric_points(1.0, 256.0, 9);
        assert!((pts[0] - 1.0).abs() < 1e-12);
        assert!((pts[8] - 256.0).abs() < 1e-9);
        assert!((pts[1] / pts[0] - 2.0).abs() < 1e-12);
    }
}
