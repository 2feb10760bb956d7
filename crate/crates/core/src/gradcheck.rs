//! Central finite-difference verification of analytical gradients.
//!
//! These helpers only evaluate caller-supplied forward closures, so they are
//! independent of whatever backward pass they are checking. Comparison uses
//! a relative error with a magnitude floor: below the floor, central
//! differences at eps=1e-5 in f64 are dominated by their own roundoff and a
//! relative criterion stops being meaningful.

/// Relative error between an analytical and a numerical derivative.
/// `|a - n| / max(|a|, |n|, 1e-3)` — effectively absolute for tiny gradients.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central difference of `loss` with respect to one scalar exposed through
/// `read`/`write` accessors. Restores the original value afterwards.
pub fn central_diff(
    i: usize,
    read: &mut impl FnMut(usize) -> f64,
    write: &mut impl FnMut(usize, f64),
    loss: &mut impl FnMut() -> f64,
    eps: f64,
) -> f64 {
    let orig = read(i);
    write(i, orig + eps);
    let plus = loss();
    write(i, orig - eps);
    let minus = loss();
    write(i, orig);
    (plus - minus) / (2.0 * eps)
}

/// Check a full gradient slice against central differences; returns the
/// maximum relative error over all components.
pub fn fd_check(
    analytic: &[f64],
    mut read: impl FnMut(usize) -> f64,
    mut write: impl FnMut(usize, f64),
    mut loss: impl FnMut() -> f64,
    eps: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let n = central_diff(i, &mut read, &mut write, &mut loss, eps);
        worst = worst.max(rel_error(a, n));
    }
    worst
}
