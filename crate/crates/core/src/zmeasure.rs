//! z-measures on Young diagrams and their images as discrete symplectic
//! and orthogonal ensembles at Jack parameter `theta = 2`.

use crate::error::{Error, Result};
use crate::oracle::{config_weight, parity_admissible, Configuration, EnsembleSpec, Flavor};
use crate::weights::{DiscreteWeight, Truncation};
use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

/// A partition with weakly decreasing positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct YoungDiagram(Vec<usize>);

impl YoungDiagram {
    /// Trailing zero parts are dropped.
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::Domain(format!("parts {parts:?} are not weakly decreasing")));
        }
        if parts.contains(&0) {
            return Err(Error::Domain(format!("parts {parts:?} have an interior zero")));
        }
        Ok(YoungDiagram(parts))
    }

    pub fn empty() -> Self {
        YoungDiagram(Vec::new())
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    /// `lambda_i` with the 1-based index used in the literature; zero past the end.
    pub fn part(&self, i: usize) -> usize {
        self.0.get(i - 1).copied().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        self.0.iter().sum()
    }

    /// Number of nonzero rows.
    pub fn length(&self) -> usize {
        self.0.len()
    }

    pub fn transpose(&self) -> YoungDiagram {
        let cols = self.0.first().copied().unwrap_or(0);
        YoungDiagram(
            (1..=cols)
                .map(|j| self.0.iter().take_while(|&&p| p >= j).count())
                .collect(),
        )
    }

    /// Boxes `(i, j)`, row and column both 1-based.
    pub fn boxes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &p)| (1..=p).map(move |j| (i + 1, j)))
    }
}

impl std::fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZParams {
    pub z: f64,
    pub z_prime: f64,
    pub theta: f64,
    pub xi: f64,
}

impl ZParams {
    pub fn new(z: f64, z_prime: f64, theta: f64, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::Parameter(format!("xi must lie in (0,1), got {xi}")));
        }
        if !(theta > 0.0) {
            return Err(Error::Parameter(format!("theta must be > 0, got {theta}")));
        }
        if !(z.is_finite() && z_prime.is_finite()) {
            return Err(Error::Parameter("z and z' must be finite".into()));
        }
        Ok(ZParams { z, z_prime, theta, xi })
    }

    /// `z = 2N, z' = 2N + beta - 2, theta = 2`: the symplectic Meixner image.
    pub fn symplectic(n: usize, beta: f64, xi: f64) -> Result<Self> {
        let m = (2 * n) as f64;
        Self::new(m, m + beta - 2.0, 2.0, xi)
    }

    /// `z = -2N, z' = -2N - beta, theta = 2`: the orthogonal image.
    pub fn orthogonal(n: usize, beta: f64, xi: f64) -> Result<Self> {
        let m = (2 * n) as f64;
        Self::new(-m, -m - beta, 2.0, xi)
    }

    pub fn t(&self) -> f64 {
        self.z * self.z_prime / self.theta
    }
}

/// A real number stored as `sign * exp(log_abs)`; `sign == 0` means zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedLog {
    pub sign: i8,
    pub log_abs: f64,
}

impl SignedLog {
    pub const ONE: SignedLog = SignedLog { sign: 1, log_abs: 0.0 };
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn from_value(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            SignedLog {
                sign: if v > 0.0 { 1 } else { -1 },
                log_abs: v.abs().ln(),
            }
        }
    }

    pub fn mul(self, other: SignedLog) -> SignedLog {
        if self.sign == 0 || other.sign == 0 {
            return Self::ZERO;
        }
        SignedLog {
            sign: self.sign * other.sign,
            log_abs: self.log_abs + other.log_abs,
        }
    }

    pub fn inv(self) -> SignedLog {
        SignedLog {
            sign: self.sign,
            log_abs: -self.log_abs,
        }
    }

    pub fn value(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }
}

fn product<I: IntoIterator<Item = f64>>(factors: I) -> SignedLog {
    factors
        .into_iter()
        .fold(SignedLog::ONE, |acc, f| acc.mul(SignedLog::from_value(f)))
}

/// `(z)_{lambda,theta} = prod over boxes of (z + (j-1) - (i-1) theta)`.
pub fn generalized_pochhammer(z: f64, theta: f64, lambda: &YoungDiagram) -> SignedLog {
    product(
        lambda
            .boxes()
            .map(|(i, j)| z + (j as f64 - 1.0) - (i as f64 - 1.0) * theta),
    )
}

/// The two hook products `H(lambda, theta)` and `H'(lambda, theta)`.
pub fn hook_products(lambda: &YoungDiagram, theta: f64) -> (SignedLog, SignedLog) {
    let conj = lambda.transpose();
    let arm_leg = |(i, j): (usize, usize)| {
        let arm = (lambda.part(i) - j) as f64;
        let leg = (conj.part(j) - i) as f64;
        (arm, leg)
    };
    let h = product(lambda.boxes().map(arm_leg).map(|(a, l)| a + l * theta + 1.0));
    let hp = product(lambda.boxes().map(arm_leg).map(|(a, l)| a + l * theta + theta));
    (h, hp)
}

/// `M(lambda) = (1-xi)^t xi^|lambda| (z)_lambda (z')_lambda / (H H')`.
pub fn z_weight_log(params: &ZParams, lambda: &YoungDiagram) -> SignedLog {
    let (h, hp) = hook_products(lambda, params.theta);
    let pz = generalized_pochhammer(params.z, params.theta, lambda);
    let pzp = generalized_pochhammer(params.z_prime, params.theta, lambda);
    let scale = SignedLog {
        sign: 1,
        log_abs: params.t() * (1.0 - params.xi).ln() + lambda.size() as f64 * params.xi.ln(),
    };
    scale.mul(pz).mul(pzp).mul(h.mul(hp).inv())
}

pub fn z_weight(params: &ZParams, lambda: &YoungDiagram) -> f64 {
    z_weight_log(params, lambda).value()
}

/// `x_{N-i+1} = lambda_i - 2i + 2N`, defined when `l(lambda) <= N`.
pub fn map_symplectic(lambda: &YoungDiagram, n: usize) -> Result<Configuration> {
    if lambda.length() > n {
        return Err(Error::Domain(format!("diagram {lambda} has more than N = {n} rows")));
    }
    let pts = (1..=n).rev().map(|i| lambda.part(i) + 2 * n - 2 * i).collect();
    Configuration::new(pts)
}

pub fn inverse_symplectic(config: &Configuration, n: usize) -> Result<YoungDiagram> {
    let xs = config.points();
    if xs.len() != n {
        return Err(Error::Domain(format!("expected {n} points, got {}", xs.len())));
    }
    let mut parts = Vec::with_capacity(n);
    for i in 1..=n {
        let x = xs[n - i] + 2 * i;
        if x < 2 * n {
            return Err(Error::Domain(format!("configuration {xs:?} is not a symplectic image")));
        }
        parts.push(x - 2 * n);
    }
    YoungDiagram::new(parts)
}

/// `x_{2N-i+1} = 2 lambda'_i - i + 2N`, defined when `l(lambda') <= 2N`.
pub fn map_orthogonal(lambda: &YoungDiagram, n: usize) -> Result<Configuration> {
    let conj = lambda.transpose();
    if conj.length() > 2 * n {
        return Err(Error::Domain(format!(
            "diagram {lambda} has more than 2N = {} columns",
            2 * n
        )));
    }
    let pts = (1..=2 * n).rev().map(|i| 2 * conj.part(i) + 2 * n - i).collect();
    Configuration::new(pts)
}

pub fn inverse_orthogonal(config: &Configuration, n: usize) -> Result<YoungDiagram> {
    let xs = config.points();
    if xs.len() != 2 * n {
        return Err(Error::Domain(format!("expected {} points, got {}", 2 * n, xs.len())));
    }
    if !parity_admissible(xs) {
        return Err(Error::Domain(format!("configuration {xs:?} is not parity-admissible")));
    }
    let mut cols = Vec::with_capacity(2 * n);
    for i in 1..=2 * n {
        let x = xs[2 * n - i] + i;
        if x < 2 * n {
            return Err(Error::Domain(format!(
                "configuration {xs:?} is not an orthogonal image"
            )));
        }
        cols.push((x - 2 * n) / 2);
    }
    Ok(YoungDiagram::new(cols)?.transpose())
}

/// All partitions of `size`, in reverse lexicographic order.
pub fn partitions(size: usize) -> Vec<YoungDiagram> {
    fn go(rest: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<YoungDiagram>) {
        if rest == 0 {
            out.push(YoungDiagram(cur.clone()));
            return;
        }
        for p in (1..=rest.min(cap)).rev() {
            cur.push(p);
            go(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(size, size, &mut Vec::new(), &mut out);
    out
}

/// Random diagram with at most `rows` rows and parts at most `max_part`.
pub fn random_diagram<R: Rng>(rng: &mut R, rows: usize, max_part: usize) -> YoungDiagram {
    let mut parts: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..=max_part)).collect();
    parts.sort_unstable_by(|a, b| b.cmp(a));
    YoungDiagram::new(parts).expect("sorted parts")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZFlavor {
    Symplectic,
    Orthogonal,
}

impl ZFlavor {
    pub fn params(self, n: usize, beta: f64, xi: f64) -> Result<ZParams> {
        match self {
            ZFlavor::Symplectic => ZParams::symplectic(n, beta, xi),
            ZFlavor::Orthogonal => ZParams::orthogonal(n, beta, xi),
        }
    }

    pub fn map(self, lambda: &YoungDiagram, n: usize) -> Result<Configuration> {
        match self {
            ZFlavor::Symplectic => map_symplectic(lambda, n),
            ZFlavor::Orthogonal => map_orthogonal(lambda, n),
        }
    }

    /// Random diagram inside the support of the corresponding z-measure.
    pub fn random_diagram<R: Rng>(self, rng: &mut R, n: usize, max_part: usize) -> YoungDiagram {
        match self {
            ZFlavor::Symplectic => random_diagram(rng, n, max_part),
            ZFlavor::Orthogonal => random_diagram(rng, 2 * n, max_part).transpose(),
        }
    }
}

/// `log([beta]_x xi^{x/2} / x!!)`, the one-point weight of the orthogonal image.
pub fn double_factorial_weight_log(beta: f64, xi: f64, x: usize) -> f64 {
    let mut acc = 0.5 * x as f64 * xi.ln();
    let mut k = x;
    while k >= 1 {
        // [beta]_x runs over x+beta-1, x+beta-3, ... and x!! over x, x-2, ...
        acc += (k as f64 + beta - 1.0).ln() - (k as f64).ln();
        if k < 2 {
            break;
        }
        k -= 2;
    }
    acc
}

#[derive(Debug, Clone, Serialize)]
pub struct ProportionalityReport {
    pub flavor: ZFlavor,
    pub n: usize,
    pub beta: f64,
    pub xi: f64,
    pub pairs: usize,
    /// pairs with a vanishing denominator on either side
    pub skipped: usize,
    /// `max |(M(l)/M(m)) / (W(l)/W(m)) - 1|` against the ensemble weight
    pub max_relative: f64,
    /// same, against the one-point weight printed for the orthogonal image
    pub max_relative_printed: Option<f64>,
    /// relative spread of `M(l) / W(map l)` over every diagram seen
    pub constant_spread: f64,
}

fn ensemble_log_weight(flavor: ZFlavor, n: usize, weight: &DiscreteWeight, config: &Configuration) -> Result<f64> {
    let max = config.points().last().copied().unwrap_or(0);
    let spec = EnsembleSpec {
        flavor: match flavor {
            ZFlavor::Symplectic => Flavor::Symplectic(n),
            ZFlavor::Orthogonal => Flavor::Orthogonal(n),
        },
        weight: weight.clone(),
        trunc: Truncation::fixed(max),
    };
    Ok(config_weight(&spec, config)?.ln())
}

fn printed_orthogonal_log(beta: f64, xi: f64, config: &Configuration) -> f64 {
    let xs = config.points();
    let mut acc: f64 = xs.iter().map(|&x| double_factorial_weight_log(beta, xi, x)).sum();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            acc += ((xs[j] - xs[i]) as f64).ln();
        }
    }
    acc
}

/// Ratios `M(lambda)/M(mu)` against the ensemble weights of the images,
/// with the Meixner weight `(beta)_x xi^x / x!` on the ensemble side.
pub fn proportionality_check(
    flavor: ZFlavor,
    n: usize,
    beta: f64,
    xi: f64,
    pairs: &[(YoungDiagram, YoungDiagram)],
) -> Result<ProportionalityReport> {
    let params = flavor.params(n, beta, xi)?;
    let weight = DiscreteWeight::meixner(beta, xi)?;
    let mut rep = ProportionalityReport {
        flavor,
        n,
        beta,
        xi,
        pairs: pairs.len(),
        skipped: 0,
        max_relative: 0.0,
        max_relative_printed: (flavor == ZFlavor::Orthogonal).then_some(0.0),
        constant_spread: 0.0,
    };
    let mut logs = Vec::new();
    let mut side = |lambda: &YoungDiagram| -> Result<Option<(f64, f64, f64)>> {
        let m = z_weight_log(&params, lambda);
        if m.is_zero() {
            return Ok(None);
        }
        if m.sign < 0 {
            return Err(Error::Internal(format!("negative z-measure weight at {lambda}")));
        }
        let cfg = flavor.map(lambda, n)?;
        let w = ensemble_log_weight(flavor, n, &weight, &cfg)?;
        if !w.is_finite() {
            return Ok(None);
        }
        logs.push(m.log_abs - w);
        Ok(Some((m.log_abs, w, printed_orthogonal_log(beta, xi, &cfg))))
    };
    for (lambda, mu) in pairs {
        let (Some(a), Some(b)) = (side(lambda)?, side(mu)?) else {
            rep.skipped += 1;
            continue;
        };
        let rel = ((a.0 - b.0) - (a.1 - b.1)).exp_m1().abs();
        rep.max_relative = rep.max_relative.max(rel);
        if let Some(p) = rep.max_relative_printed.as_mut() {
            *p = p.max(((a.0 - b.0) - (a.2 - b.2)).exp_m1().abs());
        }
    }
    if let Some(&first) = logs.first() {
        rep.constant_spread = logs.iter().map(|l| (l - first).exp_m1().abs()).fold(0.0, f64::max);
    }
    Ok(rep)
}

/// Seeded random pairs inside the support of the given flavor.
pub fn random_pairs<R: Rng>(
    rng: &mut R,
    flavor: ZFlavor,
    n: usize,
    max_part: usize,
    count: usize,
) -> Vec<(YoungDiagram, YoungDiagram)> {
    (0..count)
        .map(|_| {
            (
                flavor.random_diagram(rng, n, max_part),
                flavor.random_diagram(rng, n, max_part),
            )
        })
        .collect()
}

/// Right-hand side of the `theta = 2` hook formula written through `lambda'`.
pub fn hook_formula_rhs(lambda: &YoungDiagram) -> SignedLog {
    let c = lambda.transpose();
    let l = c.length();
    let a = |i: usize| 2.0 * c.part(i) as f64 - i as f64;
    let mut num = SignedLog::ONE;
    for i in 1..=l {
        for j in i + 1..=l {
            num = num.mul(SignedLog::from_value(a(i) - a(j)));
        }
    }
    let den: f64 = (1..=l).map(|i| ln_gamma(a(i) + l as f64 + 1.0)).sum();
    num.mul(SignedLog { sign: 1, log_abs: -den })
}

/// `max |1/(H H') / rhs - 1|` over the given diagrams.
pub fn hook_check(diagrams: &[YoungDiagram]) -> f64 {
    diagrams
        .iter()
        .map(|d| {
            let (h, hp) = hook_products(d, 2.0);
            let lhs = h.mul(hp).inv();
            let rhs = hook_formula_rhs(d);
            if lhs.sign != rhs.sign {
                f64::INFINITY
            } else {
                (lhs.log_abs - rhs.log_abs).exp_m1().abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    pub params: ZParams,
    pub cutoff: usize,
    /// partial sums over `|lambda| <= k` for `k = 0..=cutoff`
    pub partial_sums: Vec<f64>,
    /// `max_k |sum_{|lambda|=k} M(lambda) / ((1-xi)^t (t)_k xi^k / k!) - 1|`
    pub level_residual: f64,
    pub remainder: f64,
    /// geometric bound on the mass beyond the cutoff
    pub tail_bound: f64,
}

/// Partial sums of the z-measure by diagram size.
pub fn normalization_check(params: &ZParams, cutoff: usize) -> Result<NormalizationReport> {
    let t = params.t();
    let base = t * (1.0 - params.xi).ln();
    let mut partial = Vec::with_capacity(cutoff + 1);
    let mut acc = 0.0;
    let mut level_residual: f64 = 0.0;
    // (1-xi)^t (t)_k xi^k / k!, the total mass of level k
    let mut level = base.exp();
    for k in 0..=cutoff {
        if k > 0 {
            level *= (t + k as f64 - 1.0) * params.xi / k as f64;
        }
        let s: f64 = partitions(k).iter().map(|d| z_weight(params, d)).sum();
        if level != 0.0 {
            level_residual = level_residual.max((s / level - 1.0).abs());
        }
        acc += s;
        partial.push(acc);
    }
    let k = cutoff as f64;
    let next = level * (t + k) * params.xi / (k + 1.0);
    let q = params.xi * ((t + k + 1.0) / (k + 2.0)).max(1.0);
    let tail_bound = if q < 1.0 { next.abs() / (1.0 - q) } else { f64::INFINITY };
    Ok(NormalizationReport {
        params: *params,
        cutoff,
        remainder: 1.0 - acc,
        partial_sums: partial,
        level_residual,
        tail_bound,
    })
}
