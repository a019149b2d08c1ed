//! Brute-force enumeration of small ensembles. Every probability here is
//! computed straight from the configuration weights, which makes this
//! module the reference the kernel constructions are compared against.

use crate::error::{Error, Result};
use crate::kernels::MatrixKernel2x2;
use crate::operators::MARGIN;
use crate::pfaffian::{correlation, generating_functional, TestFunction};
use crate::weights::{log_sum_exp, DiscreteWeight, Truncation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest number of candidate configurations `enumerate` will visit.
pub const MAX_CONFIGURATIONS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Flavor {
    /// `N` points with weight `prod w(x_i) prod (x_i-x_j)^2 ((x_i-x_j)^2 - 1)`.
    Symplectic(usize),
    /// `2N` points with weight `prod W(x_i) prod (x_j - x_i)` on
    /// parity-admissible configurations.
    Orthogonal(usize),
}

impl Flavor {
    pub fn n(&self) -> usize {
        match *self {
            Flavor::Symplectic(n) | Flavor::Orthogonal(n) => n,
        }
    }

    /// Number of particles.
    pub fn points(&self) -> usize {
        match *self {
            Flavor::Symplectic(n) => n,
            Flavor::Orthogonal(n) => 2 * n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub flavor: Flavor,
    pub weight: DiscreteWeight,
    pub trunc: Truncation,
}

/// Strictly increasing points, checked on construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(points: Vec<usize>) -> Result<Self> {
        if points.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Domain(format!(
                "configuration {points:?} is not strictly increasing"
            )));
        }
        Ok(Configuration(points))
    }

    pub fn points(&self) -> &[usize] {
        &self.0
    }
}

/// Even first point and odd gaps.
pub fn parity_admissible(points: &[usize]) -> bool {
    points.first().is_none_or(|x| x % 2 == 0) && points.windows(2).all(|p| (p[1] - p[0]) % 2 == 1)
}

struct LogTables {
    lw: Vec<f64>,
}

impl LogTables {
    fn new(spec: &EnsembleSpec) -> Result<Self> {
        let lw = match spec.flavor {
            Flavor::Symplectic(_) => (0..=spec.trunc.l)
                .map(|x| spec.weight.log_weight(x))
                .collect::<Result<_>>()?,
            Flavor::Orthogonal(_) => spec.weight.companion_log_weights(spec.trunc.l)?,
        };
        Ok(LogTables { lw })
    }

    fn log_weight(&self, flavor: Flavor, xs: &[usize]) -> Option<f64> {
        let mut acc: f64 = xs.iter().map(|&x| self.lw[x]).sum();
        match flavor {
            Flavor::Symplectic(_) => {
                for i in 0..xs.len() {
                    for j in i + 1..xs.len() {
                        let d = (xs[j] - xs[i]) as f64;
                        if d == 1.0 {
                            return None;
                        }
                        acc += 2.0 * d.ln() + (d * d - 1.0).ln();
                    }
                }
            }
            Flavor::Orthogonal(_) => {
                if !parity_admissible(xs) {
                    return None;
                }
                for i in 0..xs.len() {
                    for j in i + 1..xs.len() {
                        acc += ((xs[j] - xs[i]) as f64).ln();
                    }
                }
            }
        }
        Some(acc)
    }
}

/// Unnormalized weight of a configuration; `0` off the support.
pub fn config_weight(spec: &EnsembleSpec, config: &Configuration) -> Result<f64> {
    let xs = config.points();
    if xs.len() != spec.flavor.points() {
        return Err(Error::Domain(format!(
            "configuration has {} points, ensemble needs {}",
            xs.len(),
            spec.flavor.points()
        )));
    }
    if xs.last().is_some_and(|&x| x > spec.trunc.l) {
        return Err(Error::Domain("configuration leaves the truncated lattice".into()));
    }
    let tables = LogTables::new(spec)?;
    Ok(tables.log_weight(spec.flavor, xs).map_or(0.0, f64::exp))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// The exact distribution of the truncated ensemble.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub flavor: Flavor,
    points_per: usize,
    flat: Vec<usize>,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn config(&self, i: usize) -> &[usize] {
        &self.flat[i * self.points_per..(i + 1) * self.points_per]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        (0..self.len()).map(move |i| (self.config(i), self.probs[i]))
    }

    /// The `k` configurations of largest probability.
    pub fn top(&self, k: usize) -> Vec<(Vec<usize>, f64)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]));
        idx.into_iter()
            .take(k)
            .map(|i| (self.config(i).to_vec(), self.probs[i]))
            .collect()
    }
}

/// Visits every configuration in lexicographic order and normalizes.
/// Only configurations of positive weight are stored.
pub fn enumerate(spec: &EnsembleSpec) -> Result<Enumeration> {
    let k = spec.flavor.points();
    let sites = spec.trunc.l + 1;
    let count = binomial(sites as u128, k as u128);
    if count > MAX_CONFIGURATIONS {
        return Err(Error::TooLarge(count));
    }
    let tables = LogTables::new(spec)?;
    let mut flat = Vec::new();
    let mut logs = Vec::new();
    if k <= sites {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if let Some(v) = tables.log_weight(spec.flavor, &idx) {
                flat.extend_from_slice(&idx);
                logs.push(v);
            }
            let mut i = k;
            while i > 0 && idx[i - 1] == sites - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    if logs.is_empty() {
        return Err(Error::Domain(
            "the truncated ensemble has no admissible configuration".into(),
        ));
    }
    let log_z = log_sum_exp(&logs);
    let probs = logs.iter().map(|v| (v - log_z).exp()).collect();
    Ok(Enumeration {
        flavor: spec.flavor,
        points_per: k,
        flat,
        probs,
        log_z,
    })
}

/// `E prod (1 + eta(x_i))`.
pub fn oracle_generating_functional(en: &Enumeration, eta: &TestFunction) -> f64 {
    let terms = en
        .iter()
        .map(|(xs, p)| p * xs.iter().map(|&x| 1.0 + eta.value(x)).product::<f64>());
    crate::numeric::compensated_sum(terms)
}

/// Probability that every listed point is occupied.
pub fn oracle_correlation(en: &Enumeration, points: &[usize]) -> Result<f64> {
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::Parameter("correlation points must be distinct".into()));
    }
    let terms = en
        .iter()
        .filter(|(xs, _)| sorted.iter().all(|y| xs.binary_search(y).is_ok()))
        .map(|(_, p)| p);
    Ok(crate::numeric::compensated_sum(terms))
}

/// Kernel-versus-enumeration differences.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub trials: usize,
    pub gf_max: f64,
    pub gf_mean: f64,
    pub rho1_max: f64,
    pub rho1_mean: f64,
    pub rho2_max: f64,
    pub rho2_mean: f64,
    pub hole_max: f64,
    pub hole_mean: f64,
}

#[derive(Default)]
struct Stat {
    max: f64,
    sum: f64,
    n: usize,
}

impl Stat {
    fn push(&mut self, v: f64) {
        self.max = self.max.max(v);
        self.sum += v;
        self.n += 1;
    }
    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Compares generating functionals on `trials` seeded random test
/// functions supported on the first sites, `rho_1` and `rho_2` on the same
/// window, and hole probabilities of short intervals.
pub fn compare(en: &Enumeration, k: &MatrixKernel2x2, trials: usize, seed: u64) -> Result<CompareReport> {
    let size = k.k11.nrows();
    let window: Vec<usize> = (0..size.saturating_sub(MARGIN).min(10)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gf, mut r1, mut r2, mut hole) = (Stat::default(), Stat::default(), Stat::default(), Stat::default());
    for _ in 0..trials {
        let eta = TestFunction::random(&mut rng, &window, -0.9, 0.9);
        gf.push((generating_functional(k, &eta)? - oracle_generating_functional(en, &eta)).abs());
    }
    for &x in &window {
        r1.push((correlation(k, &[x])? - oracle_correlation(en, &[x])?).abs());
        for &y in window.iter().filter(|&&y| y > x).take(3) {
            r2.push((correlation(k, &[x, y])? - oracle_correlation(en, &[x, y])?).abs());
        }
    }
    for start in 0..window.len().saturating_sub(2) {
        let sites = &window[start..start + 3];
        let eta = TestFunction::constant_on(sites, -1.0)?;
        hole.push((generating_functional(k, &eta)? - oracle_generating_functional(en, &eta)).abs());
    }
    Ok(CompareReport {
        trials,
        gf_max: gf.max,
        gf_mean: gf.mean(),
        rho1_max: r1.max,
        rho1_mean: r1.mean(),
        rho2_max: r2.max,
        rho2_mean: r2.mean(),
        hole_max: hole.max,
        hole_mean: hole.mean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(flavor: Flavor, l: usize) -> EnsembleSpec {
        EnsembleSpec {
            flavor,
            weight: DiscreteWeight::charlier(1.0).unwrap(),
            trunc: Truncation::fixed(l),
        }
    }

    #[test]
    fn weights_on_small_configs() {
        let s = spec(Flavor::Symplectic(2), 20);
        assert_eq!(
            config_weight(&s, &Configuration::new(vec![3, 4]).unwrap()).unwrap(),
            0.0
        );
        let o = spec(Flavor::Orthogonal(1), 20);
        assert_eq!(
            config_weight(&o, &Configuration::new(vec![1, 2]).unwrap()).unwrap(),
            0.0
        );
        let one = spec(Flavor::Symplectic(1), 20);
        let w = config_weight(&one, &Configuration::new(vec![3]).unwrap()).unwrap();
        assert!((w - 1.0 / 6.0).abs() < 1e-14);
        assert!(Configuration::new(vec![2, 2]).is_err());
    }

    #[test]
    fn normalization_and_support() {
        let en = enumerate(&spec(Flavor::Orthogonal(1), 30)).unwrap();
        let total: f64 = en.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(en.iter().all(|(xs, _)| xs[0] % 2 == 0 && xs[1] % 2 == 1));
        let s = enumerate(&spec(Flavor::Symplectic(1), 25)).unwrap();
        let w = DiscreteWeight::charlier(1.0).unwrap();
        let z: f64 = (0..=25).map(|x| w.weight(x).unwrap()).sum();
        assert!((s.probs[4] - w.weight(4).unwrap() / z).abs() < 1e-14);
    }

    #[test]
    fn density_counts_particles() {
        let en = enumerate(&spec(Flavor::Symplectic(2), 20)).unwrap();
        let total: f64 = (0..=20).map(|x| oracle_correlation(&en, &[x]).unwrap()).sum();
        assert!((total - 2.0).abs() < 1e-12);
        assert!((oracle_generating_functional(&en, &TestFunction::zero()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let s = spec(Flavor::Symplectic(8), 200);
        assert!(matches!(enumerate(&s), Err(Error::TooLarge(_))));
    }

    #[test]
    fn multilinear_in_eta() {
        let en = enumerate(&spec(Flavor::Symplectic(2), 15)).unwrap();
        let f = |t: f64| {
            let eta = TestFunction::new(vec![(1, 0.3), (4, t)]).unwrap();
            oracle_generating_functional(&en, &eta)
        };
        let (a, b, c) = (f(-0.5), f(0.0), f(0.5));
        assert!((a + c - 2.0 * b).abs() < 1e-13);
    }
}
