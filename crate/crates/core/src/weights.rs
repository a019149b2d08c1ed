//! Lattice weights on the nonnegative integers.
//!
//! Every weight is described by `w(0)` together with the rational ratio
//! `w(x-1)/w(x) = d1(x)/d2(x)`. Meixner and Charlier weights also have a
//! log-gamma closed form, which is what [`DiscreteWeight::log_weight`] uses.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Polynomial with real coefficients stored in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.0.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Roots with multiplicities, from the eigenvalues of the companion
    /// matrix. Eigenvalues closer than `1e-6` (relative) are merged.
    pub fn roots(&self) -> Vec<(Complex64, usize)> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let raw: Vec<Complex64> = if n == 1 {
            vec![Complex64::new(-self.0[0] / lead, 0.0)]
        } else {
            let mut comp = DMatrix::<f64>::zeros(n, n);
            for i in 1..n {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..n {
                comp[(i, n - 1)] = -self.0[i] / lead;
            }
            comp.complex_eigenvalues().iter().copied().collect()
        };
        let mut grouped: Vec<(Complex64, usize)> = Vec::new();
        for r in raw {
            let r = Complex64::new(r.re, if r.im.abs() < 1e-12 { 0.0 } else { r.im });
            match grouped
                .iter_mut()
                .find(|(g, _)| (*g - r).norm() <= 1e-6 * (1.0 + g.norm()))
            {
                Some(entry) => entry.1 += 1,
                None => grouped.push((r, 1)),
            }
        }
        grouped
    }
}

/// The supported weight families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightKind {
    /// `(beta)_x c^x / x!`
    Meixner { beta: f64, c: f64 },
    /// `a^x / x!`
    Charlier { a: f64 },
    /// `w0 * prod_{y<=x} d2(y)/d1(y)`
    GenericRational { d1: Vec<f64>, d2: Vec<f64>, w0: f64 },
}

/// Outcome of [`validate`]: the limit of `d1/d2` at infinity when the
/// degrees agree, or `None` when `deg d1 > deg d2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub deg_d1: usize,
    pub deg_d2: usize,
    pub limit_ratio: Option<f64>,
}

/// Check the parameter constraints and the growth condition on `d1/d2`.
pub fn validate(kind: &WeightKind) -> Result<Validation> {
    match kind {
        WeightKind::Meixner { beta, c } => {
            if !(beta.is_finite() && *beta > 0.0) {
                return Err(Error::Parameter(format!("meixner beta must be > 0, got {beta}")));
            }
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::Parameter(format!("meixner c must lie in (0,1), got {c}")));
            }
            Ok(Validation {
                deg_d1: 1,
                deg_d2: 1,
                limit_ratio: Some(1.0 / c),
            })
        }
        WeightKind::Charlier { a } => {
            if !(a.is_finite() && *a > 0.0) {
                return Err(Error::Parameter(format!("charlier a must be > 0, got {a}")));
            }
            Ok(Validation {
                deg_d1: 1,
                deg_d2: 0,
                limit_ratio: None,
            })
        }
        WeightKind::GenericRational { d1, d2, w0 } => {
            if !(w0.is_finite() && *w0 > 0.0) {
                return Err(Error::Parameter(format!("w0 must be > 0, got {w0}")));
            }
            let p1 = Poly::new(d1.clone());
            let p2 = Poly::new(d2.clone());
            if p1.0[0] != 0.0 {
                return Err(Error::Parameter("d1(0) must vanish".into()));
            }
            if p2.0[0] == 0.0 {
                return Err(Error::Parameter("d2(0) must be nonzero".into()));
            }
            if p1.degree() < p2.degree() {
                return Err(Error::Parameter(format!(
                    "deg d1 = {} is smaller than deg d2 = {}",
                    p1.degree(),
                    p2.degree()
                )));
            }
            let limit_ratio = if p1.degree() == p2.degree() {
                let lim = p1.leading() / p2.leading();
                if lim <= 1.0 {
                    return Err(Error::Parameter(format!("equal degrees need lim d1/d2 > 1, got {lim}")));
                }
                Some(lim)
            } else {
                None
            };
            Ok(Validation {
                deg_d1: p1.degree(),
                deg_d2: p2.degree(),
                limit_ratio,
            })
        }
    }
}

/// A validated weight, optionally multiplied by a positive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWeight {
    kind: WeightKind,
    log_scale: f64,
}

impl DiscreteWeight {
    pub fn new(kind: WeightKind) -> Result<Self> {
        validate(&kind)?;
        Ok(DiscreteWeight { kind, log_scale: 0.0 })
    }

    pub fn meixner(beta: f64, c: f64) -> Result<Self> {
        Self::new(WeightKind::Meixner { beta, c })
    }

    pub fn charlier(a: f64) -> Result<Self> {
        Self::new(WeightKind::Charlier { a })
    }

    pub fn generic(d1: Vec<f64>, d2: Vec<f64>, w0: f64) -> Result<Self> {
        Self::new(WeightKind::GenericRational { d1, d2, w0 })
    }

    /// The same weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Parameter(format!("scale factor must be > 0, got {factor}")));
        }
        Ok(DiscreteWeight {
            kind: self.kind.clone(),
            log_scale: self.log_scale + factor.ln(),
        })
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    /// Short description such as `meixner:beta=2,c=0.5`.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            WeightKind::Meixner { beta, c } => format!("meixner:beta={beta},c={c}"),
            WeightKind::Charlier { a } => format!("charlier:a={a}"),
            WeightKind::GenericRational { d1, d2, w0 } => {
                let join = |v: &Vec<f64>| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
                format!("generic:d1={},d2={},w0={}", join(d1), join(d2), w0)
            }
        };
        if self.log_scale != 0.0 {
            format!("{base},scale={}", self.log_scale.exp())
        } else {
            base
        }
    }

    /// Numerator of the ratio `w(x-1)/w(x)`, unreduced.
    pub fn d1(&self) -> Poly {
        match &self.kind {
            WeightKind::Meixner { .. } | WeightKind::Charlier { .. } => Poly::new(vec![0.0, 1.0]),
            WeightKind::GenericRational { d1, .. } => Poly::new(d1.clone()),
        }
    }

    /// Denominator of the ratio `w(x-1)/w(x)`, unreduced.
    pub fn d2(&self) -> Poly {
        match &self.kind {
            WeightKind::Meixner { beta, c } => Poly::new(vec![c * (beta - 1.0), *c]),
            WeightKind::Charlier { a } => Poly::new(vec![*a]),
            WeightKind::GenericRational { d2, .. } => Poly::new(d2.clone()),
        }
    }

    /// `deg d1 - deg d2`.
    pub fn n_infinity(&self) -> usize {
        self.d1().degree() - self.d2().degree()
    }

    /// Zeros of `d2` with their multiplicities.
    pub fn poles(&self) -> Vec<(Complex64, usize)> {
        self.d2().roots()
    }

    /// `log w(x)`.
    pub fn log_weight(&self, x: usize) -> Result<f64> {
        let xf = x as f64;
        let v = match &self.kind {
            WeightKind::Meixner { beta, c } => ln_gamma(beta + xf) - ln_gamma(*beta) - ln_gamma(xf + 1.0) + xf * c.ln(),
            WeightKind::Charlier { a } => xf * a.ln() - ln_gamma(xf + 1.0),
            WeightKind::GenericRational { w0, .. } => {
                let mut acc = w0.ln();
                for y in 1..=x {
                    acc -= self.ratio(y)?.ln();
                }
                acc
            }
        };
        Ok(v + self.log_scale)
    }

    pub fn weight(&self, x: usize) -> Result<f64> {
        Ok(self.log_weight(x)?.exp())
    }

    /// `w(x-1)/w(x) = d1(x)/d2(x)` for `x >= 1`.
    pub fn ratio(&self, x: usize) -> Result<f64> {
        if x == 0 {
            return Err(Error::Domain("w(x-1)/w(x) is undefined at x = 0".into()));
        }
        let xf = x as f64;
        let r = match &self.kind {
            WeightKind::Meixner { beta, c } => xf / (c * (xf + beta - 1.0)),
            WeightKind::Charlier { a } => xf / a,
            WeightKind::GenericRational { .. } => self.d1().eval(xf) / self.d2().eval(xf),
        };
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("w(x-1)/w(x) = {r} at x = {x} is not positive")));
        }
        Ok(r)
    }

    /// Ratios `r[x] = w(x-1)/w(x)` for `x = 1..=len`; `r[0]` is unused and set to NaN.
    pub fn ratios(&self, len: usize) -> Result<Vec<f64>> {
        let mut r = vec![f64::NAN; len + 1];
        for (x, slot) in r.iter_mut().enumerate().skip(1) {
            *slot = self.ratio(x)?;
        }
        Ok(r)
    }

    /// `log w(x)` for `x = 0..=l`, accumulated from the ratios so that
    /// neighbouring values stay consistent to rounding.
    pub fn log_weights(&self, l: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(l + 1);
        out.push(self.log_weight(0)?);
        for x in 1..=l {
            let prev = out[x - 1];
            out.push(prev - self.ratio(x)?.ln());
        }
        Ok(out)
    }

    /// Companion weight `W` with `W(0) = w(0)` and `W(x-1) W(x) = w(x)`.
    pub fn companion_weight(&self, x: usize) -> Result<f64> {
        Ok(self.companion_log_weights(x)?[x].exp())
    }

    /// `log W(x)` for `x = 0..=l`. Uses `W(x) = W(x-2) w(x)/w(x-1)` so no
    /// alternating sums of large logarithms appear.
    pub fn companion_log_weights(&self, l: usize) -> Result<Vec<f64>> {
        let lw0 = self.log_weight(0)?;
        let mut out = vec![lw0];
        if l >= 1 {
            out.push(-self.ratio(1)?.ln());
        }
        for x in 2..=l {
            let v = out[x - 2] - self.ratio(x)?.ln();
            out.push(v);
        }
        Ok(out)
    }
}

/// Lattice cutoff: the ensemble is restricted to `[0, l]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub l: usize,
    pub tail_tol: f64,
    /// Geometric bound on the dropped moment mass (`NaN` if the cutoff was
    /// given by hand).
    pub tail_bound: f64,
}

impl Truncation {
    pub fn fixed(l: usize) -> Self {
        Truncation {
            l,
            tail_tol: f64::NAN,
            tail_bound: f64::NAN,
        }
    }
}

const RATIO_WINDOW: usize = 32;
const MAX_CUTOFF: usize = 4_000_000;

/// Smallest `L` for which the ratio-test bound on
/// `sum_{x>L} w(x) (1+x)^{2 n_max}` falls below `tail_tol * min(1, head)`.
pub fn choose_cutoff(weight: &DiscreteWeight, n_max: usize, tail_tol: f64) -> Result<Truncation> {
    if !(tail_tol > 0.0) {
        return Err(Error::Parameter(format!("tail_tol must be > 0, got {tail_tol}")));
    }
    let power = 2.0 * n_max as f64;
    let q_inf = match weight.d1().degree().cmp(&weight.d2().degree()) {
        std::cmp::Ordering::Greater => 0.0,
        _ => weight.d2().leading() / weight.d1().leading(),
    };
    let log_q = |x: usize| -> Result<f64> {
        // log t(x+1) - log t(x)
        Ok(-weight.ratio(x + 1)?.ln() + power * ((x as f64 + 2.0) / (x as f64 + 1.0)).ln())
    };
    let mut log_t = weight.log_weight(0)?;
    let mut log_head = log_t;
    let mut l = 0usize;
    loop {
        let log_next = log_t + log_q(l)?;
        let mut q = q_inf;
        for x in (l + 1)..(l + 1 + RATIO_WINDOW) {
            q = q.max(log_q(x)?.exp());
        }
        if q < 1.0 {
            let log_bound = log_next - (1.0 - q).ln();
            let log_target = tail_tol.ln() + log_head.min(0.0);
            if log_bound < log_target {
                return Ok(Truncation {
                    l,
                    tail_tol,
                    tail_bound: log_bound.exp(),
                });
            }
        }
        if l >= MAX_CUTOFF {
            return Err(Error::Conditioning(format!(
                "no cutoff below {MAX_CUTOFF} meets tail_tol = {tail_tol:e}"
            )));
        }
        l += 1;
        log_t = log_next;
        log_head = log_add_exp(log_head, log_t);
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
