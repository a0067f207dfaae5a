/// Central-difference gradient, `(f(x + h e_j) - f(x - h e_j)) / 2h` per coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = probe[j];
            probe[j] = orig + h;
            let up = f(&probe);
            probe[j] = orig - h;
            let down = f(&probe);
            probe[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
///
/// The floor keeps coordinates whose true gradient is zero from dividing
/// rounding noise by zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
