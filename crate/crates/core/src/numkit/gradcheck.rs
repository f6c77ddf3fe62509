//! Central finite differences for checking hand-written backward passes.
//!
//! This only evaluates the function being checked; it shares no code with
//! any backward implementation.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps gradients that are
/// genuinely zero from dividing noise by noise.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest elementwise relative error between two gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

pub fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    let err = max_relative_error(analytic, numeric);
    assert!(
        err <= tol,
        "max relative gradient error {err:e} exceeds {tol:e}\nanalytic: {analytic:?}\nnumeric:  {numeric:?}"
    );
}
