//! Composite quadrature on equispaced samples.

/// Cumulative composite Simpson over equispaced nodes: `out[i] = ∫ up to
/// node i`. Even nodes use Simpson pairs; odd nodes (including an odd
/// final node) use the parabolic half-step rule, so the result is O(h⁴)
/// everywhere for smooth integrands.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len().saturating_sub(1);
    let mut out = vec![0.0; f.len()];
    if n == 0 {
        return out;
    }
    if n == 1 {
        // two samples only: trapezoid is all there is
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    let mut j = 0;
    while j + 2 <= n {
        out[j + 1] = out[j] + h / 12.0 * (5.0 * f[j] + 8.0 * f[j + 1] - f[j + 2]);
        out[j + 2] = out[j] + h / 3.0 * (f[j] + 4.0 * f[j + 1] + f[j + 2]);
        j += 2;
    }
    if j < n {
        // one leftover subinterval: integrate the parabola through the
        // last three nodes over its second half
        out[n] = out[n - 1] + h / 12.0 * (-f[n - 2] + 8.0 * f[n - 1] + 5.0 * f[n]);
    }
    out
}
