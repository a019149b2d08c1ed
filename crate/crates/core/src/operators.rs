//! Dense lattice realizations of the difference operators, the
//! antisymmetric summation operator `eps`, and the projection `K_N`.
//!
//! All entries are built from the ratio `r(x) = w(x-1)/w(x)`, which makes
//! every operator exactly invariant under `w -> const * w`.

use crate::error::{Error, Result};
use crate::orthofam::OrthonormalTable;
use crate::weights::{DiscreteWeight, Truncation, WeightKind};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Rows closer than this to the cutoff are not trusted in comparisons.
pub const MARGIN: usize = 4;

/// `D_+`, `D_-`, `D = D_+ - D_-` and the `nabla` variants on `[0, L]`.
#[derive(Debug, Clone)]
pub struct DifferenceOps {
    pub d_plus: DMatrix<f64>,
    pub d_minus: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub nabla_plus: DMatrix<f64>,
    pub nabla_minus: DMatrix<f64>,
}

pub fn build_difference_ops(weight: &DiscreteWeight, trunc: &Truncation) -> Result<DifferenceOps> {
    let l = trunc.l;
    let r = weight.ratios(l)?;
    let n = l + 1;
    let mut d_plus = DMatrix::zeros(n, n);
    let mut d_minus = DMatrix::zeros(n, n);
    let mut nabla_plus = DMatrix::zeros(n, n);
    let mut nabla_minus = DMatrix::zeros(n, n);
    for x in 0..n {
        if x + 1 < n {
            // sqrt(w(x)/w(x+1))
            let s = r[x + 1].sqrt();
            d_plus[(x, x + 1)] = s;
            nabla_plus[(x, x + 1)] = s;
            nabla_plus[(x, x)] = -s;
        } else {
            // w(L+1) lies outside the lattice; the diagonal part of nabla_+ is kept.
            nabla_plus[(x, x)] = -weight.ratio(x + 1)?.sqrt();
        }
        if x >= 1 {
            // sqrt(w(x-1)/w(x))
            let s = r[x].sqrt();
            d_minus[(x, x - 1)] = s;
            nabla_minus[(x, x)] = s;
            nabla_minus[(x, x - 1)] = -s;
        } else {
            nabla_minus[(0, 0)] = 0.0;
        }
    }
    let d = &d_plus - &d_minus;
    Ok(DifferenceOps {
        d_plus,
        d_minus,
        d,
        nabla_plus,
        nabla_minus,
    })
}

/// Dense `eps` from the running products of the weight ratios.
pub fn build_epsilon_generic(weight: &DiscreteWeight, trunc: &Truncation) -> Result<DMatrix<f64>> {
    let l = trunc.l;
    let r = weight.ratios(l + 1)?;
    let n = l + 1;
    let mut eps = DMatrix::zeros(n, n);
    // even rows: eps(2m, 2k+1) for k >= m
    for m in (0..n).step_by(2).map(|x| x / 2) {
        let mut coef = 1.0 / r[2 * m + 1].sqrt();
        let mut k = m;
        while 2 * k + 1 < n {
            if k > m {
                coef *= (r[2 * k] / r[2 * k + 1]).sqrt();
            }
            eps[(2 * m, 2 * k + 1)] = -coef;
            k += 1;
        }
    }
    // odd rows: eps(2m+1, 2k) for k <= m, walking k downward
    for m in (1..n).step_by(2).map(|x| (x - 1) / 2) {
        let mut coef = 1.0 / r[2 * m + 1].sqrt();
        eps[(2 * m + 1, 2 * m)] = coef;
        for k in (0..m).rev() {
            coef *= (r[2 * k + 2] / r[2 * k + 1]).sqrt();
            eps[(2 * m + 1, 2 * k)] = coef;
        }
    }
    let asym = (&eps + eps.transpose()).amax();
    if asym > 1e-10 * eps.amax().max(1.0) {
        return Err(Error::Internal(format!("eps antisymmetry residual {asym:e}")));
    }
    Ok(eps)
}

/// `eps f` in `O(L)` operations using the backward/forward running sums.
/// `r[x] = w(x-1)/w(x)` must be available for `x = 1..=f.len()`.
pub fn epsilon_apply(r: &[f64], f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    // odd sites: U(m) = f(2m)/sqrt(r(2m+1)) + sqrt(r(2m)/r(2m+1)) U(m-1)
    let mut acc = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let carry = if m == 0 {
            0.0
        } else {
            (r[2 * m] / r[2 * m + 1]).sqrt() * acc
        };
        acc = f[2 * m] / r[2 * m + 1].sqrt() + carry;
        out[2 * m + 1] = acc;
        m += 1;
    }
    // even sites: T(m) = f(2m+1)/sqrt(r(2m+1)) + sqrt(r(2m+2)/r(2m+1)) T(m+1)
    let mut acc = 0.0;
    let top = (n - 1) / 2;
    for m in (0..=top).rev() {
        if 2 * m + 1 >= n {
            continue;
        }
        let carry = if 2 * m + 3 < n {
            (r[2 * m + 2] / r[2 * m + 1]).sqrt() * acc
        } else {
            0.0
        };
        acc = f[2 * m + 1] / r[2 * m + 1].sqrt() + carry;
        out[2 * m] = -acc;
    }
    out
}

/// Which printing of the closed-form Charlier `eps` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedVariant {
    /// Coefficients exactly as printed.
    AsPrinted,
    /// Square root over the Pochhammer ratio, obtained as the large-`beta`
    /// limit of the Meixner expression.
    Reconciled,
}

/// `eps` from the Pochhammer closed forms (Meixner and Charlier only).
/// Entries whose printed coefficient is not real come out as `NaN`.
pub fn build_epsilon_closed(
    weight: &DiscreteWeight,
    trunc: &Truncation,
    variant: ClosedVariant,
) -> Result<DMatrix<f64>> {
    let n = trunc.l + 1;
    let mut eps = DMatrix::zeros(n, n);
    // Each entry is prefactor * g(R_l) with R_l a running product.
    let (pre, even_r0, even_step, odd_r0, odd_step, take_root): (
        f64,
        Box<dyn Fn(f64) -> f64>,
        Box<dyn Fn(f64, f64) -> f64>,
        Box<dyn Fn(f64) -> f64>,
        Box<dyn Fn(f64, f64) -> f64>,
        bool,
    ) = match (weight.kind(), variant) {
        (WeightKind::Meixner { beta, c }, _) => {
            let b = *beta;
            (
                c.sqrt(),
                Box::new(move |m| (b / 2.0 + m) / (m + 0.5)),
                Box::new(move |m, l| (b / 2.0 + m + l) * (m + l) / (((b + 1.0) / 2.0 + m + l - 1.0) * (m + 0.5 + l))),
                Box::new(move |m| (-b / 2.0 - m) / (-m - 0.5)),
                Box::new(move |m, l| {
                    (-b / 2.0 - m + l) * (-m + l - 1.0) / ((-(b - 1.0) / 2.0 - m + l - 1.0) * (-m - 0.5 + l))
                }),
                true,
            )
        }
        (WeightKind::Charlier { a }, ClosedVariant::AsPrinted) => (
            (a / 2.0).sqrt(),
            Box::new(|m| 1.0 / (m + 0.5)),
            Box::new(|m, l| (m + l) / (m + 0.5 + l)),
            Box::new(|m| 1.0 / (-m - 0.5)),
            Box::new(|m, l| (-m + l - 1.0) / (-m - 0.5 + l)),
            false,
        ),
        (WeightKind::Charlier { a }, ClosedVariant::Reconciled) => (
            (a / 2.0).sqrt(),
            Box::new(|m| 1.0 / (m + 0.5)),
            Box::new(|m, l| (m + l) / (m + 0.5 + l)),
            Box::new(|m| -1.0 / (-m - 0.5)),
            Box::new(|m, l| (-m + l - 1.0) / (-m - 0.5 + l)),
            true,
        ),
        (WeightKind::GenericRational { .. }, _) => {
            return Err(Error::Unsupported(
                "closed-form eps exists only for Meixner and Charlier".into(),
            ))
        }
    };
    let g = |v: f64| if take_root { v.sqrt() } else { v };
    for m in 0..n.div_ceil(2) {
        let mf = m as f64;
        if 2 * m < n {
            let mut ratio = even_r0(mf);
            let mut l = 0usize;
            while 2 * l + 2 * m + 1 < n {
                if l > 0 {
                    ratio *= even_step(mf, l as f64);
                }
                eps[(2 * m, 2 * l + 2 * m + 1)] = -pre * g(ratio);
                l += 1;
            }
        }
        if 2 * m + 1 < n {
            let mut ratio = odd_r0(mf);
            for l in 0..=m {
                if l > 0 {
                    ratio *= odd_step(mf, l as f64);
                }
                eps[(2 * m + 1, 2 * m - 2 * l)] = pre * g(ratio);
            }
        }
    }
    Ok(eps)
}

/// Entrywise comparison of a closed-form `eps` against the generic one.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonComparison {
    /// max |closed - generic| over finite entries in the trusted window
    pub max_residual: f64,
    /// entries of the closed form that are not real numbers
    pub nonfinite_entries: usize,
    /// max |closed + closed^T|, finite entries only
    pub antisymmetry: f64,
    /// residual of the best fit closed(x,y) = u(x) generic(x,y) v(y);
    /// small values mean a diagonal rescaling reconciles the two
    pub conjugation_residual: f64,
    /// row-wise max residual, for maps and plots
    pub row_residual: Vec<f64>,
}

pub fn compare_epsilon(closed: &DMatrix<f64>, generic: &DMatrix<f64>, trusted: usize) -> EpsilonComparison {
    let n = trusted.min(closed.nrows());
    let mut max_residual: f64 = 0.0;
    let mut nonfinite = 0;
    let mut asym: f64 = 0.0;
    let mut row_residual = vec![0.0f64; n];
    for x in 0..n {
        for y in 0..n {
            let c = closed[(x, y)];
            if !c.is_finite() {
                nonfinite += 1;
                continue;
            }
            let d = (c - generic[(x, y)]).abs();
            max_residual = max_residual.max(d);
            row_residual[x] = row_residual[x].max(d);
            let ct = closed[(y, x)];
            if ct.is_finite() {
                asym = asym.max((c + ct).abs());
            }
        }
    }
    EpsilonComparison {
        max_residual,
        nonfinite_entries: nonfinite,
        antisymmetry: asym,
        conjugation_residual: conjugation_fit(closed, generic, n),
        row_residual,
    }
}

/// Alternating least squares fit of log|closed/generic| = a(x) + b(y) on the
/// common support, plus a sign consistency test. Returns the max deviation
/// of the fitted entries (infinite if signs cannot be matched).
fn conjugation_fit(closed: &DMatrix<f64>, generic: &DMatrix<f64>, n: usize) -> f64 {
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in 0..n {
            let (c, g) = (closed[(x, y)], generic[(x, y)]);
            if g != 0.0 && c.is_finite() && c != 0.0 {
                pairs.push((x, y, (c / g).abs().ln(), (c / g).signum()));
            } else if (g != 0.0 || (c != 0.0 && !c.is_nan())) && (!c.is_finite() || (g == 0.0) != (c == 0.0)) {
                return f64::INFINITY;
            }
        }
    }
    if pairs.is_empty() {
        return 0.0;
    }
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for _ in 0..200 {
        let mut sa = vec![(0.0, 0usize); n];
        for &(x, y, v, _) in &pairs {
            sa[x].0 += v - b[y];
            sa[x].1 += 1;
        }
        for x in 0..n {
            if sa[x].1 > 0 {
                a[x] = sa[x].0 / sa[x].1 as f64;
            }
        }
        let mut sb = vec![(0.0, 0usize); n];
        for &(x, y, v, _) in &pairs {
            sb[y].0 += v - a[x];
            sb[y].1 += 1;
        }
        for y in 0..n {
            if sb[y].1 > 0 {
                b[y] = sb[y].0 / sb[y].1 as f64;
            }
        }
    }
    // Signs must factor as s(x) t(y): fix s from the first entry of each row.
    let mut row_sign = vec![0.0; n];
    let mut col_sign = vec![0.0; n];
    for &(x, y, _, s) in &pairs {
        if row_sign[x] == 0.0 && col_sign[y] == 0.0 {
            row_sign[x] = 1.0;
            col_sign[y] = s;
        } else if row_sign[x] == 0.0 {
            row_sign[x] = s * col_sign[y];
        } else if col_sign[y] == 0.0 {
            col_sign[y] = s * row_sign[x];
        } else if row_sign[x] * col_sign[y] != s {
            return f64::INFINITY;
        }
    }
    pairs
        .iter()
        .map(|&(x, y, v, _)| {
            let g = generic[(x, y)];
            (g * (v.exp() - (a[x] + b[y]).exp())).abs()
        })
        .fold(0.0, f64::max)
}

/// The diagonal `f` of `eps = F Upsilon F`, from products of weights.
pub fn factor_f(weight: &DiscreteWeight, trunc: &Truncation) -> Result<Vec<f64>> {
    let n = trunc.l + 1;
    let lw: Vec<f64> = (0..n).map(|x| weight.log_weight(x)).collect::<Result<_>>()?;
    let mut out = vec![0.0; n];
    // even: w(2)w(4)..w(2k) / (w(1)w(3)..w(2k-1)); odd: w(1)w(3)..w(2k+1) / (w(2)..w(2k))
    let mut alt_even = 0.0;
    let mut alt_odd = 0.0;
    for x in 0..n {
        if x % 2 == 0 {
            if x >= 2 {
                alt_even += lw[x] - lw[x - 1];
            }
            out[x] = (alt_even - 0.5 * lw[x]).exp();
        } else {
            alt_odd += lw[x] - if x >= 2 { lw[x - 1] } else { 0.0 };
            out[x] = (alt_odd - 0.5 * lw[x]).exp();
        }
    }
    Ok(out)
}

/// `Upsilon(2i, 2j+1) = -1` for `i <= j`, `Upsilon(2i+1, 2j) = 1` for `j <= i`.
pub fn upsilon(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |x, y| match (x % 2, y % 2) {
        (0, 1) if x < y => -1.0,
        (1, 0) if y < x => 1.0,
        _ => 0.0,
    })
}

/// `max |eps - F Upsilon F|`.
pub fn epsilon_factorization_residual(weight: &DiscreteWeight, trunc: &Truncation, eps: &DMatrix<f64>) -> Result<f64> {
    let f = DVector::from_vec(factor_f(weight, trunc)?);
    let fuf = DMatrix::from_diagonal(&f) * upsilon(f.len()) * DMatrix::from_diagonal(&f);
    Ok((eps - fuf).amax())
}

/// Pfaffian of `Upsilon` restricted to a configuration, by the parity rule:
/// `(-1)^N` on configurations starting even with alternating parities.
pub fn upsilon_pfaffian(config: &[usize]) -> Result<i32> {
    if !config.len().is_multiple_of(2) {
        return Err(Error::Domain(format!("configuration of odd size {}", config.len())));
    }
    if config.is_empty() {
        return Ok(1);
    }
    let alternating = config[0].is_multiple_of(2) && config.windows(2).all(|p| (p[1] - p[0]) % 2 == 1);
    if !alternating {
        return Ok(0);
    }
    Ok(if (config.len() / 2).is_multiple_of(2) { 1 } else { -1 })
}

/// Projection kernel `K_N = sum_{k<2N} phi_k phi_k^T` with its
/// Christoffel-Darboux cross-check.
#[derive(Debug, Clone)]
pub struct ProjectionKernel {
    pub k: DMatrix<f64>,
    /// CD coefficient `a_{2N}` used in the cross-check
    pub a_2n: f64,
    /// max relative off-diagonal deviation between the sum and the CD form
    pub cd_residual: f64,
}

/// CD coefficient: the closed Meixner and Charlier values, and
/// `sqrt(beta_{2N})` times the sign product otherwise. The closed values
/// assume `phi_n(0) > 0`; they are converted to the table's convention.
pub fn cd_coefficient(table: &OrthonormalTable, n: usize) -> f64 {
    let m = (2 * n) as f64;
    let flip = -table.signs[2 * n] * table.signs[2 * n - 1];
    match table.weight.kind() {
        WeightKind::Meixner { beta, c } => -flip * (m * c * (m + beta - 1.0)).sqrt() / (1.0 - c),
        WeightKind::Charlier { a } => -flip * (m * a).sqrt(),
        WeightKind::GenericRational { .. } => recurrence_cd_coefficient(table, n),
    }
}

/// `sqrt(beta_{2N})` of the table's own recurrence, exact for the truncated
/// lattice measure.
fn recurrence_cd_coefficient(table: &OrthonormalTable, n: usize) -> f64 {
    table.coeffs.beta[2 * n].sqrt() * table.signs[2 * n] * table.signs[2 * n - 1]
}

/// Builds `K_N` and cross-checks it against the CD quotient. A mismatch with
/// the table's own recurrence coefficient is an error; `cd_residual` reports
/// the mismatch with `cd_coefficient`, which for the classical weights also
/// measures the truncation of the lattice.
pub fn build_kn(table: &OrthonormalTable, n: usize) -> Result<ProjectionKernel> {
    if 2 * n > table.n_max() {
        return Err(Error::Parameter(format!(
            "2N = {} exceeds the table size {}",
            2 * n,
            table.n_max()
        )));
    }
    let p = table.phi.rows(0, 2 * n).into_owned();
    let k = p.transpose() * &p;
    let a_2n = cd_coefficient(table, n);
    let a_table = recurrence_cd_coefficient(table, n);
    let size = table.l() + 1;
    let trusted = size.saturating_sub(MARGIN);
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let mut cd_residual: f64 = 0.0;
    let mut internal: f64 = 0.0;
    for x in 0..trusted {
        for y in 0..trusted {
            if x == y {
                continue;
            }
            let q = (table.phi(2 * n, x) * table.phi(2 * n - 1, y) - table.phi(2 * n - 1, x) * table.phi(2 * n, y))
                / (x as f64 - y as f64);
            cd_residual = cd_residual.max((a_2n * q - k[(x, y)]).abs() / scale);
            internal = internal.max((a_table * q - k[(x, y)]).abs() / scale);
        }
    }
    if internal > 1e-8 {
        return Err(Error::Conditioning(format!("CD mismatch {internal:e}")));
    }
    Ok(ProjectionKernel { k, a_2n, cd_residual })
}

/// Residuals of `D eps = I` and `eps D = I` on probe functions.
#[derive(Debug, Clone, Serialize)]
pub struct MutualInverse {
    pub d_eps: f64,
    pub eps_d: f64,
}

/// Applies both compositions to each probe, which must vanish outside
/// `[2, L - 2*MARGIN]`, and measures the deviation on `[0, L - MARGIN]`.
pub fn mutual_inverse_check(d: &DMatrix<f64>, eps: &DMatrix<f64>, probes: &[DVector<f64>]) -> Result<MutualInverse> {
    let n = d.nrows();
    let lo = 2;
    let hi = n.saturating_sub(1 + 2 * MARGIN);
    let window = n.saturating_sub(MARGIN);
    let mut out = MutualInverse { d_eps: 0.0, eps_d: 0.0 };
    for f in probes {
        if f.iter().enumerate().any(|(x, v)| *v != 0.0 && (x < lo || x > hi)) {
            return Err(Error::Domain("probe support leaves the interior window".into()));
        }
        let a = d * (eps * f) - f;
        let b = eps * (d * f) - f;
        for x in 0..window {
            out.d_eps = out.d_eps.max(a[x].abs());
            out.eps_d = out.eps_d.max(b[x].abs());
        }
    }
    Ok(out)
}

/// Probe set used by the checks: `phi_0` restricted to the window and
/// unit vectors at a few interior sites.
pub fn interior_probes(table: &OrthonormalTable) -> Vec<DVector<f64>> {
    let n = table.l() + 1;
    let lo = 2;
    let hi = n.saturating_sub(1 + 2 * MARGIN);
    let mut probes = Vec::new();
    let phi0 = DVector::from_fn(n, |x, _| if x >= lo && x <= hi { table.phi(0, x) } else { 0.0 });
    probes.push(phi0);
    for x in [lo, (lo + hi) / 2, hi] {
        if x >= lo && x <= hi {
            let mut e = DVector::zeros(n);
            e[x] = 1.0;
            probes.push(e);
        }
    }
    probes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn charlier(l: usize) -> (DiscreteWeight, Truncation) {
        (DiscreteWeight::charlier(1.0).unwrap(), Truncation::fixed(l))
    }

    #[test]
    fn band_structure() {
        let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
        let t = Truncation::fixed(20);
        let ops = build_difference_ops(&w, &t).unwrap();
        for x in 0..20 {
            let expect = (w.weight(x).unwrap() / w.weight(x + 1).unwrap()).sqrt();
            assert_relative_eq!(ops.d_plus[(x, x + 1)], expect, max_relative = 1e-11);
        }
        assert_eq!(ops.d_minus.row(0).amax(), 0.0);
        let diff = &ops.nabla_plus - &ops.d_plus;
        for x in 0..21 {
            for y in 0..21 {
                if x != y {
                    assert_eq!(diff[(x, y)], 0.0);
                }
            }
            assert_relative_eq!(diff[(x, x)], -w.ratio(x + 1).unwrap().sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn epsilon_structure() {
        let (w, t) = charlier(30);
        let e = build_epsilon_generic(&w, &t).unwrap();
        assert!((&e + e.transpose()).amax() < 1e-12);
        for x in 0..31 {
            for y in 0..31 {
                if x % 2 == y % 2 {
                    assert_eq!(e[(x, y)], 0.0);
                }
            }
        }
        // eps(0,1) = -sqrt(w(1)/w(0))
        let me = DiscreteWeight::meixner(2.0, 0.3).unwrap();
        let em = build_epsilon_generic(&me, &t).unwrap();
        assert_relative_eq!(em[(0, 1)], -(2.0f64 * 0.3).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(e[(0, 1)], -1.0, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn epsilon_apply_matches_dense() {
        let w = DiscreteWeight::meixner(1.5, 0.6).unwrap();
        for l in [17usize, 18] {
            let t = Truncation::fixed(l);
            let e = build_epsilon_generic(&w, &t).unwrap();
            let r = w.ratios(l + 1).unwrap();
            let f: Vec<f64> = (0..=l).map(|x| ((x * 7 % 5) as f64 - 2.0) * 0.3).collect();
            let dense = &e * DVector::from_vec(f.clone());
            let fast = epsilon_apply(&r, &f);
            for x in 0..=l {
                assert!((dense[x] - fast[x]).abs() < 1e-12 * (1.0 + dense[x].abs()));
            }
        }
    }

    #[test]
    fn factorization() {
        let (w, t) = charlier(40);
        let e = build_epsilon_generic(&w, &t).unwrap();
        assert!(epsilon_factorization_residual(&w, &t, &e).unwrap() < 1e-10);
        assert_relative_eq!(factor_f(&w, &t).unwrap()[0], 1.0 / w.weight(0).unwrap().sqrt());
        let u = upsilon(6);
        assert_eq!(u[(0, 1)], -1.0);
        assert_eq!(u[(2, 5)], -1.0);
        assert_eq!(u[(2, 1)], 0.0);
        let g = DiscreteWeight::generic(vec![0.0, 1.0, 0.5], vec![2.0, 0.2], 3.0).unwrap();
        let tg = Truncation::fixed(24);
        let eg = build_epsilon_generic(&g, &tg).unwrap();
        assert!(epsilon_factorization_residual(&g, &tg, &eg).unwrap() < 1e-10 * eg.amax());
    }

    #[test]
    fn upsilon_pfaffian_rule() {
        assert_eq!(upsilon_pfaffian(&[0, 1]).unwrap(), -1);
        assert_eq!(upsilon_pfaffian(&[1, 2]).unwrap(), 0);
        assert_eq!(upsilon_pfaffian(&[0, 1, 2, 5]).unwrap(), 1);
        assert!(upsilon_pfaffian(&[0, 1, 2]).is_err());
    }

    #[test]
    fn closed_meixner_matches_generic() {
        let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
        let t = Truncation::fixed(40);
        let closed = build_epsilon_closed(&w, &t, ClosedVariant::AsPrinted).unwrap();
        assert_relative_eq!(closed[(0, 1)], -(0.5f64).sqrt() * 2.0f64.sqrt(), max_relative = 1e-14);
        let generic = build_epsilon_generic(&w, &t).unwrap();
        let cmp = compare_epsilon(&closed, &generic, 41);
        assert!(cmp.max_residual < 1e-10, "{}", cmp.max_residual);
        assert_eq!(cmp.nonfinite_entries, 0);
    }

    #[test]
    fn closed_charlier_variants() {
        let w = DiscreteWeight::charlier(2.0).unwrap();
        let t = Truncation::fixed(30);
        let generic = build_epsilon_generic(&w, &t).unwrap();
        let printed = build_epsilon_closed(&w, &t, ClosedVariant::AsPrinted).unwrap();
        let fixed = build_epsilon_closed(&w, &t, ClosedVariant::Reconciled).unwrap();
        assert!(compare_epsilon(&printed, &generic, 31).max_residual > 1e-2);
        assert!(compare_epsilon(&fixed, &generic, 31).max_residual < 1e-10);
    }

    #[test]
    fn mutual_inverse() {
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let t = Truncation::fixed(40);
        let table = OrthonormalTable::build(&w, 4, &t).unwrap();
        let ops = build_difference_ops(&w, &t).unwrap();
        let e = build_epsilon_generic(&w, &t).unwrap();
        let r = mutual_inverse_check(&ops.d, &e, &interior_probes(&table)).unwrap();
        assert!(r.d_eps < 1e-8 && r.eps_d < 1e-8, "{r:?}");
    }

    #[test]
    fn projection_kernel() {
        let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
        let t = Truncation::fixed(120);
        let table = OrthonormalTable::build(&w, 6, &t).unwrap();
        let kn = build_kn(&table, 2).unwrap();
        assert!((kn.k.trace() - 4.0).abs() < 1e-8);
        assert!((&kn.k * &kn.k - &kn.k).amax() < 1e-9);
        assert!(kn.cd_residual < 1e-8);
        let exact = -(4.0f64 * 0.5 * 5.0).sqrt() / 0.5;
        assert_relative_eq!(kn.a_2n, exact);
    }

    #[test]
    fn rescaling_invariance() {
        let w = DiscreteWeight::meixner(1.2, 0.4).unwrap();
        let s = w.scaled(7.0).unwrap();
        let t = Truncation::fixed(30);
        let a = build_epsilon_generic(&w, &t).unwrap();
        let b = build_epsilon_generic(&s, &t).unwrap();
        assert!((a - b).amax() < 1e-12);
        let da = build_difference_ops(&w, &t).unwrap();
        let db = build_difference_ops(&s, &t).unwrap();
        assert!((da.d - db.d).amax() < 1e-12);
    }
}
