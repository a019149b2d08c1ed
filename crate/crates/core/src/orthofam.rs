//! Orthonormal functions `phi_n(x) = p_n(x) sqrt(w(x))` on a truncated
//! lattice, the Meixner/Charlier difference systems, and Laguerre reference
//! functions.

use crate::error::{Error, Result};
use crate::numeric::{dot, integrate_from_zero};
use crate::weights::{log_sum_exp, DiscreteWeight, Truncation, WeightKind};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Monic three-term recurrence `P_{k+1} = (x - alpha_k) P_k - beta_k P_{k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCoeffs {
    /// `alpha_0 .. alpha_{n-1}`
    pub alpha: Vec<f64>,
    /// `beta_1 .. beta_n` stored at indices `1..=n`; `beta[0] = ||P_0||^2`.
    pub beta: Vec<f64>,
    /// `log ||P_k||^2` for `k = 0..=n`.
    pub log_norms_sq: Vec<f64>,
}

impl RecurrenceCoeffs {
    /// Highest degree covered.
    pub fn n_max(&self) -> usize {
        self.alpha.len()
    }

    fn from_parts(alpha: Vec<f64>, beta_tail: Vec<f64>, log_norm0: f64) -> Self {
        let mut log_norms_sq = vec![log_norm0];
        for b in &beta_tail {
            let last = *log_norms_sq.last().unwrap();
            log_norms_sq.push(last + b.ln());
        }
        let mut beta = vec![log_norm0.exp()];
        beta.extend(beta_tail);
        RecurrenceCoeffs {
            alpha,
            beta,
            log_norms_sq,
        }
    }

    /// Known coefficients of the Meixner family on the full lattice.
    pub fn meixner_exact(beta: f64, c: f64, n_max: usize) -> Self {
        let alpha = (0..n_max)
            .map(|n| (n as f64 + (n as f64 + beta) * c) / (1.0 - c))
            .collect();
        let tail = (1..=n_max)
            .map(|n| {
                let n = n as f64;
                n * (n + beta - 1.0) * c / ((1.0 - c) * (1.0 - c))
            })
            .collect();
        Self::from_parts(alpha, tail, -beta * (1.0 - c).ln())
    }

    /// Known coefficients of the Charlier family on the full lattice.
    pub fn charlier_exact(a: f64, n_max: usize) -> Self {
        let alpha = (0..n_max).map(|n| n as f64 + a).collect();
        let tail = (1..=n_max).map(|n| n as f64 * a).collect();
        Self::from_parts(alpha, tail, a)
    }

    /// Orthonormal polynomials `p_0..p_n` at `x` with `p_0 = scale0`,
    /// leading coefficients positive.
    pub fn orthonormal_values(&self, x: f64, scale0: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(scale0);
        let mut prev = 0.0;
        for k in 0..n {
            let bk = if k == 0 { 0.0 } else { self.beta[k].sqrt() };
            let next = ((x - self.alpha[k]) * out[k] - bk * prev) / self.beta[k + 1].sqrt();
            prev = out[k];
            out.push(next);
        }
        out
    }

    /// `phi_0..phi_n` at lattice point `x` given `log w(x)`, leading
    /// coefficients positive.
    pub fn phi_values(&self, x: f64, log_w: f64, n: usize) -> Vec<f64> {
        let scale0 = (0.5 * (log_w - self.log_norms_sq[0])).exp();
        self.orthonormal_values(x, scale0, n)
    }

    /// Signs of `p_0(0) .. p_n(0)`.
    pub fn signs_at_zero(&self, n: usize) -> Vec<f64> {
        self.orthonormal_values(0.0, 1.0, n)
            .iter()
            .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
            .collect()
    }

    /// Derivatives `p_j^{(k)}(z)` for `j <= n`, `k <= kmax`, indexed `[k][j]`,
    /// with `p_0 = 1` (so the family is orthonormal up to one common factor).
    pub fn poly_jets(&self, z: Complex64, n: usize, kmax: usize) -> Vec<Vec<Complex64>> {
        let zero = Complex64::new(0.0, 0.0);
        let mut jets = vec![vec![zero; n + 1]; kmax + 1];
        jets[0][0] = Complex64::new(1.0, 0.0);
        for j in 0..n {
            let bj = if j == 0 { 0.0 } else { self.beta[j].sqrt() };
            let bn = self.beta[j + 1].sqrt();
            for k in 0..=kmax {
                let prev = if j == 0 { zero } else { jets[k][j - 1] };
                let lower = if k == 0 { zero } else { jets[k - 1][j] * k as f64 };
                jets[k][j + 1] = ((z - self.alpha[j]) * jets[k][j] + lower - prev * bj) / bn;
            }
        }
        jets
    }
}

/// Discrete Stieltjes procedure on `[0, L]` with full reorthogonalization.
pub fn build_recurrence(weight: &DiscreteWeight, n_max: usize, trunc: &Truncation) -> Result<RecurrenceCoeffs> {
    let l = trunc.l;
    if 4 * n_max > l {
        return Err(Error::Parameter(format!(
            "n_max = {n_max} exceeds L/4 with L = {l}; enlarge the lattice"
        )));
    }
    let lw = weight.log_weights(l)?;
    let log_mass = log_sum_exp(&lw);
    let xs: Vec<f64> = (0..=l).map(|x| x as f64).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    let mut v: Vec<f64> = lw.iter().map(|&t| (0.5 * (t - log_mass)).exp()).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|e| *e /= nv);
    let mut prev = vec![0.0; l + 1];
    let mut b = 0.0;
    let mut alpha = Vec::with_capacity(n_max);
    let mut tail = Vec::with_capacity(n_max);
    for k in 0..n_max {
        basis.push(v.clone());
        let xv: Vec<f64> = xs.iter().zip(&v).map(|(x, e)| x * e).collect();
        let a = dot(&xv, &v);
        alpha.push(a);
        let mut r: Vec<f64> = (0..=l).map(|i| xv[i] - a * v[i] - b * prev[i]).collect();
        for _ in 0..2 {
            for u in &basis {
                let p = dot(u, &r);
                r.iter_mut().zip(u).for_each(|(ri, ui)| *ri -= p * ui);
            }
        }
        let nb = dot(&r, &r).sqrt();
        let beta = nb * nb;
        if !(beta > 1e-300) {
            return Err(Error::Degenerate { k: k + 1, value: beta });
        }
        tail.push(beta);
        b = nb;
        prev = std::mem::replace(&mut v, r.iter().map(|e| e / nb).collect());
    }
    Ok(RecurrenceCoeffs::from_parts(alpha, tail, log_mass))
}

/// How the sign of each `phi_n` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SignConvention {
    /// `phi_n(0) > 0`; the difference systems and the closed-form kernels
    /// are stated in this normalization.
    #[default]
    PositiveAtZero,
    /// Positive leading coefficient of `p_n`.
    PositiveLeading,
}

/// Tabulated `phi_n(x)` for `n <= n_max`, `x <= L`.
#[derive(Debug, Clone)]
pub struct OrthonormalTable {
    pub weight: DiscreteWeight,
    pub trunc: Truncation,
    pub coeffs: RecurrenceCoeffs,
    pub convention: SignConvention,
    /// `signs[n]` multiplies the positive-leading `p_n`.
    pub signs: Vec<f64>,
    /// rows `n`, columns `x`
    pub phi: DMatrix<f64>,
    pub log_w: Vec<f64>,
}

impl OrthonormalTable {
    pub fn build(weight: &DiscreteWeight, n_max: usize, trunc: &Truncation) -> Result<Self> {
        Self::build_with(weight, n_max, trunc, SignConvention::default())
    }

    pub fn build_with(
        weight: &DiscreteWeight,
        n_max: usize,
        trunc: &Truncation,
        convention: SignConvention,
    ) -> Result<Self> {
        let coeffs = build_recurrence(weight, n_max, trunc)?;
        Self::from_coeffs(weight, trunc, coeffs, convention)
    }

    /// Tabulate from given recurrence coefficients.
    pub fn from_coeffs(
        weight: &DiscreteWeight,
        trunc: &Truncation,
        coeffs: RecurrenceCoeffs,
        convention: SignConvention,
    ) -> Result<Self> {
        let n_max = coeffs.n_max();
        let l = trunc.l;
        let log_w = weight.log_weights(l)?;
        let signs = match convention {
            SignConvention::PositiveAtZero => coeffs.signs_at_zero(n_max),
            SignConvention::PositiveLeading => vec![1.0; n_max + 1],
        };
        let mut phi = DMatrix::zeros(n_max + 1, l + 1);
        for x in 0..=l {
            let vals = coeffs.phi_values(x as f64, log_w[x], n_max);
            for n in 0..=n_max {
                phi[(n, x)] = signs[n] * vals[n];
            }
        }
        let table = OrthonormalTable {
            weight: weight.clone(),
            trunc: *trunc,
            coeffs,
            convention,
            signs,
            phi,
            log_w,
        };
        let (res, (m, n)) = table.orthonormality_residual();
        if res > 1e-6 {
            return Err(Error::Conditioning(format!(
                "orthonormality residual {res:e} at (m, n) = ({m}, {n})"
            )));
        }
        Ok(table)
    }

    pub fn n_max(&self) -> usize {
        self.phi.nrows() - 1
    }

    pub fn l(&self) -> usize {
        self.trunc.l
    }

    pub fn phi(&self, n: usize, x: usize) -> f64 {
        self.phi[(n, x)]
    }

    /// Row `n` as a vector over the lattice.
    pub fn row(&self, n: usize) -> Vec<f64> {
        self.phi.row(n).iter().copied().collect()
    }

    /// Max entry of `|Phi Phi^T - I|` and where it occurs.
    pub fn orthonormality_residual(&self) -> (f64, (usize, usize)) {
        let n = self.n_max();
        let rows: Vec<Vec<f64>> = (0..=n).map(|k| self.row(k)).collect();
        let mut worst = (0.0, (0, 0));
        for i in 0..=n {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                let r = (dot(&rows[i], &rows[j]) - target).abs();
                if r > worst.0 {
                    worst = (r, (i, j));
                }
            }
        }
        worst
    }

    /// `p_j^{(k)}(z)` in this table's sign convention (see
    /// [`RecurrenceCoeffs::poly_jets`]).
    pub fn poly_jets(&self, z: Complex64, n: usize, kmax: usize) -> Vec<Vec<Complex64>> {
        let mut jets = self.coeffs.poly_jets(z, n, kmax);
        for row in jets.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= self.signs[j];
            }
        }
        jets
    }

    /// Relative residual of `P_{n+1} - (x - alpha_n) P_n + beta_n P_{n-1}`,
    /// with the monic `P_k` rebuilt from the orthonormal values and norms.
    pub fn recurrence_residual(&self, n: usize, x: f64) -> f64 {
        let c = &self.coeffs;
        if n == 0 || n + 1 > c.n_max() {
            return 0.0;
        }
        let p = c.orthonormal_values(x, 1.0, n + 1);
        let big = |k: usize| p[k] * (0.5 * (c.log_norms_sq[k] - c.log_norms_sq[0])).exp();
        let terms = [big(n + 1), -(x - c.alpha[n]) * big(n), c.beta[n] * big(n - 1)];
        let size: f64 = terms.iter().map(|t| t.abs()).sum();
        (terms[0] + terms[1] + terms[2]).abs() / size.max(f64::MIN_POSITIVE)
    }
}

/// Residuals of the two-equation difference system satisfied by the
/// Meixner or Charlier orthonormal functions at `(n, x)`.
pub fn difference_residual(table: &OrthonormalTable, n: usize, x: usize) -> Result<(f64, f64)> {
    if n == 0 || n > table.n_max() {
        return Err(Error::Domain(format!("n = {n} outside 1..={}", table.n_max())));
    }
    if x > table.l() {
        return Err(Error::Domain(format!("x = {x} beyond the lattice cutoff")));
    }
    let xf = x as f64;
    let nf = n as f64;
    let at = |k: usize, y: isize| if y < 0 { 0.0 } else { table.phi(k, y as usize) };
    let xi = x as isize;
    match table.weight.kind() {
        WeightKind::Meixner { beta, c } => {
            let left = (c * xf * (xf + beta - 1.0)).sqrt();
            let coup = (c * nf * (nf + beta - 1.0)).sqrt();
            let r1 = left * at(n, xi - 1) - ((xf - nf) * at(n, xi) + coup * at(n - 1, xi));
            let r2 = left * at(n - 1, xi - 1) - (c * (xf + nf + beta - 1.0) * at(n - 1, xi) - coup * at(n, xi));
            Ok((r1, r2))
        }
        WeightKind::Charlier { a } => {
            let left = (a * xf).sqrt();
            let coup = (a * nf).sqrt();
            let r1 = left * at(n, xi - 1) - ((xf - nf) * at(n, xi) + coup * at(n - 1, xi));
            let r2 = left * at(n - 1, xi - 1) - (-coup * at(n, xi) + a * at(n - 1, xi));
            Ok((r1, r2))
        }
        WeightKind::GenericRational { .. } => Err(Error::Unsupported(
            "no closed difference system for generic rational weights".into(),
        )),
    }
}

/// `phi_0^{(alpha)} .. phi_n^{(alpha)}` at `x > 0`:
/// `sqrt(k!/Gamma(alpha+k+1)) L_k^{(alpha)}(x) x^{alpha/2} e^{-x/2}`.
pub fn laguerre_phi_all(alpha: f64, n: usize, x: f64) -> Result<Vec<f64>> {
    if alpha <= -1.0 {
        return Err(Error::Parameter(format!("alpha must exceed -1, got {alpha}")));
    }
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "Laguerre functions are evaluated at x > 0, got {x}"
        )));
    }
    let mut lag = Vec::with_capacity(n + 1);
    lag.push(1.0);
    if n >= 1 {
        lag.push(1.0 + alpha - x);
    }
    for k in 1..n {
        let kf = k as f64;
        let v = ((2.0 * kf + 1.0 + alpha - x) * lag[k] - (kf + alpha) * lag[k - 1]) / (kf + 1.0);
        lag.push(v);
    }
    let base = 0.5 * alpha * x.ln() - 0.5 * x;
    Ok(lag
        .iter()
        .enumerate()
        .map(|(k, lk)| {
            let kf = k as f64;
            let norm = 0.5 * (ln_gamma(kf + 1.0) - ln_gamma(alpha + kf + 1.0));
            lk * (norm + base).exp()
        })
        .collect())
}

pub fn laguerre_phi(alpha: f64, n: usize, x: f64) -> Result<f64> {
    Ok(laguerre_phi_all(alpha, n, x)?[n])
}

/// Derivatives of `phi_0^{(alpha)} .. phi_n^{(alpha)}` at `x > 0`.
pub fn laguerre_phi_deriv_all(alpha: f64, n: usize, x: f64) -> Result<Vec<f64>> {
    // d/dx L_k^{(a)} = -L_{k-1}^{(a+1)}
    let phi = laguerre_phi_all(alpha, n, x)?;
    let shifted = laguerre_phi_all(alpha + 1.0, n.max(1), x)?;
    Ok((0..=n)
        .map(|k| {
            let kf = k as f64;
            let mut d = phi[k] * (0.5 * alpha / x - 0.5);
            if k >= 1 {
                // phi_{k-1}^{(a+1)} = sqrt((k-1)!/Gamma(a+k+1)) L_{k-1}^{(a+1)} x^{(a+1)/2} e^{-x/2}
                let ratio = (0.5 * (ln_gamma(kf + 1.0) - ln_gamma(kf))).exp();
                d -= ratio * shifted[k - 1] / x.sqrt();
            }
            d
        })
        .collect())
}

/// Point beyond which `e^{-X/2} X^{n + alpha/2}` is below `1e-16`.
pub fn laguerre_support_end(alpha: f64, n: usize) -> f64 {
    let p = n as f64 + 0.5 * alpha.max(0.0);
    let mut x: f64 = 1.0;
    while -0.5 * x + p * x.ln() > (1e-16f64).ln() || x < 2.0 * p {
        x *= 1.1;
    }
    x
}

/// Laguerre reference table with quadrature-based orthonormality checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreTable {
    pub alpha: f64,
    pub n_max: usize,
}

impl LaguerreTable {
    pub fn new(alpha: f64, n_max: usize) -> Result<Self> {
        if alpha <= -1.0 {
            return Err(Error::Parameter(format!("alpha must exceed -1, got {alpha}")));
        }
        Ok(LaguerreTable { alpha, n_max })
    }

    pub fn phi(&self, n: usize, x: f64) -> Result<f64> {
        laguerre_phi(self.alpha, n, x)
    }

    /// `int_0^inf phi_m phi_n dx` by adaptive quadrature.
    pub fn inner(&self, m: usize, n: usize, tol: f64) -> Result<f64> {
        let top = laguerre_support_end(self.alpha, m.max(n));
        let f = |x: f64| {
            let v = laguerre_phi_all(self.alpha, m.max(n), x).unwrap();
            v[m] * v[n]
        };
        integrate_from_zero(&f, top, self.alpha, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::choose_cutoff;

    fn table(w: &DiscreteWeight, n: usize) -> OrthonormalTable {
        let t = choose_cutoff(w, n + 1, 1e-18).unwrap();
        let t = Truncation { l: t.l.max(4 * n), ..t };
        OrthonormalTable::build(w, n, &t).unwrap()
    }

    #[test]
    fn charlier_coefficients_from_stieltjes() {
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let t = table(&w, 10);
        for n in 0..10 {
            assert!((t.coeffs.alpha[n] - (n as f64 + 1.0)).abs() < 1e-10);
            if n >= 1 {
                assert!((t.coeffs.beta[n] - n as f64).abs() < 1e-10);
            }
        }
        assert!((t.coeffs.beta[0] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn meixner_coefficients_match_known_values() {
        let (b, c) = (2.0, 0.5);
        let w = DiscreteWeight::meixner(b, c).unwrap();
        let t = table(&w, 8);
        let exact = RecurrenceCoeffs::meixner_exact(b, c, 8);
        for n in 0..8 {
            assert!((t.coeffs.alpha[n] - exact.alpha[n]).abs() < 1e-9);
            assert!((t.coeffs.beta[n + 1] - exact.beta[n + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn meixner_norm_ratios() {
        // ||P_n||^2/||P_{n-1}||^2 for the hypergeometric normalization,
        // converted by the leading coefficients ((c-1)/c)^n / (beta)_n.
        let (b, c) = (2.0f64, 0.5f64);
        let w = DiscreteWeight::meixner(b, c).unwrap();
        let t = table(&w, 6);
        for n in 1..=6 {
            let nf = n as f64;
            let hyper = |k: f64| ln_gamma(b) + ln_gamma(k + 1.0) - ln_gamma(b + k) - k * c.ln() - b * (1.0 - c).ln();
            let lead = 2.0 * ((c / (1.0 - c)).ln() + (b + nf - 1.0).ln());
            let expect = hyper(nf) - hyper(nf - 1.0) + lead;
            let got = t.coeffs.log_norms_sq[n] - t.coeffs.log_norms_sq[n - 1];
            assert!((expect - got).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn phi0_and_orthonormality() {
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let t = OrthonormalTable::build(&w, 6, &Truncation::fixed(60)).unwrap();
        let lw = w.log_weights(60).unwrap();
        let mass: f64 = lw.iter().map(|v| v.exp()).sum();
        for x in 0..=60 {
            assert!((t.phi(0, x) - (lw[x].exp() / mass).sqrt()).abs() < 1e-14);
        }
        assert!(dot(&t.row(3), &t.row(5)).abs() < 1e-10);
    }

    #[test]
    fn difference_systems() {
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let t = table(&w, 12);
        let (r1, r2) = difference_residual(&t, 3, 5).unwrap();
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
        let (r1, _) = difference_residual(&t, 3, 0).unwrap();
        assert!(r1.abs() < 1e-12);
        let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
        let t = table(&w, 12);
        let (r1, r2) = difference_residual(&t, 2, 4).unwrap();
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
    }

    #[test]
    fn difference_system_needs_sign_convention() {
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let tr = choose_cutoff(&w, 8, 1e-18).unwrap();
        let t = OrthonormalTable::build_with(
            &w,
            6,
            &Truncation { l: tr.l.max(30), ..tr },
            SignConvention::PositiveLeading,
        )
        .unwrap();
        let (r1, _) = difference_residual(&t, 3, 5).unwrap();
        assert!(r1.abs() > 1e-3);
    }

    #[test]
    fn rescaling_leaves_table() {
        let w = DiscreteWeight::meixner(1.0, 0.3).unwrap();
        let s = w.scaled(7.0).unwrap();
        let a = table(&w, 6);
        let b = OrthonormalTable::build(&s, 6, &a.trunc).unwrap();
        assert!((a.phi.clone() - b.phi).amax() < 1e-12);
    }

    #[test]
    fn jets_match_finite_differences() {
        let w = DiscreteWeight::meixner(2.0, 0.5).unwrap();
        let t = table(&w, 6);
        let z = Complex64::new(-1.5, 0.0);
        let h = 1e-5;
        let jets = t.poly_jets(z, 5, 1);
        let up = t.poly_jets(z + h, 5, 0);
        let dn = t.poly_jets(z - h, 5, 0);
        for j in 0..=5 {
            let fd = (up[0][j] - dn[0][j]) / (2.0 * h);
            assert!((fd - jets[1][j]).norm() < 1e-6 * (1.0 + fd.norm()));
        }
    }

    #[test]
    fn laguerre_examples() {
        let a: f64 = 1.3;
        let x: f64 = 0.7;
        let direct = x.powf(a / 2.0) * (-x / 2.0).exp() / ln_gamma(a + 1.0).exp().sqrt();
        assert!((laguerre_phi(a, 0, x).unwrap() - direct).abs() < 1e-14);
        let tab = LaguerreTable::new(1.0, 4).unwrap();
        assert!((tab.inner(2, 2, 1e-10).unwrap() - 1.0).abs() < 1e-7);
        assert!(tab.inner(1, 3, 1e-10).unwrap().abs() < 1e-7);
        assert!(laguerre_phi(0.5, 2, -1.0).is_err());
    }

    #[test]
    fn laguerre_derivative() {
        let h = 1e-6;
        let d = laguerre_phi_deriv_all(1.0, 4, 2.3).unwrap();
        let up = laguerre_phi_all(1.0, 4, 2.3 + h).unwrap();
        let dn = laguerre_phi_all(1.0, 4, 2.3 - h).unwrap();
        for k in 0..=4 {
            assert!(((up[k] - dn[k]) / (2.0 * h) - d[k]).abs() < 1e-7);
        }
    }
}
