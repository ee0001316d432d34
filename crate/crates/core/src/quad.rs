//! Adaptive scalar quadrature on intervals and on the half line.

use std::f64::consts::FRAC_PI_2;

use quadrature::double_exponential;

/// `∫_a^b f` to roughly `rtol` relative accuracy.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // a coarse pass fixes the absolute target of the fine one
    let rough = double_exponential::integrate(&f, a, b, 1e-6).integral.abs();
    let target = (rtol * rough).max(1e-300);
    double_exponential::integrate(&f, a, b, target).integral
}

/// `∫_a^b f` split at the given interior breakpoints.
pub fn integrate_split(f: impl Fn(f64) -> f64, points: &[f64], rtol: f64) -> f64 {
    points
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], rtol))
        .sum()
}

/// `∫_a^∞ f` via `r = a + tan θ`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, rtol: f64) -> f64 {
    integrate(
        |th: f64| {
            if th >= FRAC_PI_2 {
                return 0.0;
            }
            let c = th.cos();
            let v = f(a + th.tan()) / (c * c);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        FRAC_PI_2,
        rtol,
    )
}
