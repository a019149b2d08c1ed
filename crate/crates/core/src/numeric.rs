//! Small numerical helpers shared by the modules: compensated summation
//! and adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    // A coarse composite start avoids missing narrow features.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let mut total = Vec::with_capacity(pieces);
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total.push(simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol / pieces as f64, 48)?);
    }
    Ok(compensated_sum(total))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "recursion limit reached on [{a}, {b}], error estimate {:e}",
            delta.abs()
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Integral over `[0, upper]` of a function behaving like `x^s` (`s > -1`)
/// at the origin. The substitution `x = t^p` makes the integrand at least
/// linear in `t` near zero.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: &F, upper: f64, s: f64, tol: f64) -> Result<f64> {
    if s <= -1.0 {
        return Err(Error::Domain(format!("integrand exponent {s} is not integrable at 0")));
    }
    let p = (2.0 / (s + 1.0)).max(1.0);
    let g = |t: f64| {
        if t == 0.0 {
            0.0
        } else {
            f(t.powf(p)) * p * t.powf(p - 1.0)
        }
    };
    integrate(&g, 0.0, upper.powf(1.0 / p), tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn simpson_polynomial_and_exponential() {
        let v = integrate(&|x: f64| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let e = integrate(&|x: f64| (-x).exp(), 0.0, 40.0, 1e-12).unwrap();
        assert!((e - (1.0 - (-40.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn singular_at_origin() {
        // integral of x^{-1/2} over [0, 4] is 4
        let v = integrate_from_zero(&|x: f64| x.powf(-0.5), 4.0, -0.5, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-10);
    }
}
