//! Pfaffians, the `sqrt det(I + eta K)` generating functional, correlation
//! extraction, partition functions and brute-force de Bruijn identities.

use crate::error::{Error, Result};
use crate::kernels::MatrixKernel2x2;
use crate::numeric::compensated_sum;
use crate::orthofam::OrthonormalTable;
use crate::weights::DiscreteWeight;
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

fn check_skew(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Parameter(format!(
            "matrix is {}x{}, not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if !a.nrows().is_multiple_of(2) {
        return Err(Error::Parameter(format!("Pfaffian of odd dimension {}", a.nrows())));
    }
    let asym = (a + a.transpose()).amax();
    if asym > 1e-12 * a.amax().max(1.0) {
        return Err(Error::Parameter(format!(
            "matrix is not antisymmetric (residual {asym:e})"
        )));
    }
    Ok(())
}

/// Pfaffian by skew-symmetric Gaussian elimination with largest-entry
/// pivoting. Costs `O(n^3)`.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    check_skew(a)?;
    let n = a.nrows();
    let mut m = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let (mut piv, mut best) = (k + 1, m[(k, k + 1)].abs());
        for j in k + 2..n {
            if m[(k, j)].abs() > best {
                best = m[(k, j)].abs();
                piv = j;
            }
        }
        if best == 0.0 {
            return Ok(0.0);
        }
        if piv != k + 1 {
            m.swap_rows(k + 1, piv);
            m.swap_columns(k + 1, piv);
            pf = -pf;
        }
        let akk1 = m[(k, k + 1)];
        pf *= akk1;
        // Eliminate row/column k and k+1 from the trailing block.
        for i in k + 2..n {
            let tau_i = m[(k, i)] / akk1;
            for j in k + 2..n {
                let tau_j = m[(k, j)] / akk1;
                m[(i, j)] += -tau_i * m[(k + 1, j)] + tau_j * m[(k + 1, i)];
            }
        }
        k += 2;
    }
    Ok(pf)
}

/// A finitely supported test function, stored as sorted `(site, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TestFunction {
    entries: Vec<(usize, f64)>,
}

impl TestFunction {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|e| e.1 != 0.0);
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::Parameter("test function lists a site twice".into()));
        }
        if let Some(bad) = entries.iter().find(|e| !e.1.is_finite()) {
            return Err(Error::Parameter(format!("test function value {} at {}", bad.1, bad.0)));
        }
        Ok(TestFunction { entries })
    }

    pub fn zero() -> Self {
        TestFunction::default()
    }

    pub fn from_dense(values: &[f64]) -> Self {
        TestFunction {
            entries: values.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect(),
        }
    }

    /// `value` on each listed site.
    pub fn constant_on(sites: &[usize], value: f64) -> Result<Self> {
        Self::new(sites.iter().map(|&x| (x, value)).collect())
    }

    /// Independent uniform values in `(lo, hi)` on `sites`.
    pub fn random<R: Rng>(rng: &mut R, sites: &[usize], lo: f64, hi: f64) -> Self {
        let entries = sites.iter().map(|&x| (x, rng.gen_range(lo..hi))).collect();
        Self::new(entries).expect("random values are finite and sites distinct")
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn value(&self, x: usize) -> f64 {
        self.entries
            .binary_search_by_key(&x, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn max_site(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }
}

/// `det(I + eta K)` on the doubled space, restricted to the support of `eta`
/// (rows outside the support are identity rows and drop out).
pub fn fredholm_det(k: &MatrixKernel2x2, eta: &TestFunction) -> Result<f64> {
    let size = k.k11.nrows();
    if let Some(x) = eta.max_site() {
        if x >= size {
            return Err(Error::Domain(format!(
                "test function reaches site {x}, lattice ends at {}",
                size - 1
            )));
        }
    }
    let s = eta.entries();
    let m = s.len();
    if m == 0 {
        return Ok(1.0);
    }
    let blocks = [[&k.k11, &k.k12], [&k.k21, &k.k22]];
    let mut a = DMatrix::<f64>::identity(2 * m, 2 * m);
    for (bi, row_blocks) in blocks.iter().enumerate() {
        for (bj, block) in row_blocks.iter().enumerate() {
            for (i, &(x, ex)) in s.iter().enumerate() {
                for (j, &(y, _)) in s.iter().enumerate() {
                    a[(bi * m + i, bj * m + j)] += ex * block[(x, y)];
                }
            }
        }
    }
    Ok(a.determinant())
}

/// `sqrt det(I + eta K)`, principal root. Small negative determinants
/// (down to `-1e-10`) are treated as zero, larger ones are an error.
pub fn generating_functional(k: &MatrixKernel2x2, eta: &TestFunction) -> Result<f64> {
    let det = fredholm_det(k, eta)?;
    if det < -1e-10 {
        return Err(Error::Conditioning(format!("det(I + eta K) = {det:e} is negative")));
    }
    Ok(det.max(0.0).sqrt())
}

/// `rho_m(y_1, ..., y_m)` by Moebius inversion over subsets of the points.
pub fn correlation(k: &MatrixKernel2x2, points: &[usize]) -> Result<f64> {
    let m = points.len();
    if m == 0 || m > 6 {
        return Err(Error::Parameter(format!("correlation order {m} outside 1..=6")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::Parameter("correlation points must be distinct".into()));
    }
    let mut terms = Vec::with_capacity(1 << m);
    for mask in 0u32..(1 << m) {
        let sites: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| sorted[i]).collect();
        let g = generating_functional(k, &TestFunction::constant_on(&sites, 1.0)?)?;
        let sign = if (m - sites.len()).is_multiple_of(2) { 1.0 } else { -1.0 };
        terms.push(sign * g);
    }
    Ok(compensated_sum(terms))
}

/// Values `pi_j(x)` of the monic polynomials used in the partition
/// function formulas, for `j < count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonicBasis {
    /// Monic orthogonal polynomials from the table's recurrence.
    Orthogonal,
    /// Plain powers `x^j`.
    Powers,
}

fn monic_values(table: &OrthonormalTable, basis: MonicBasis, x: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    match basis {
        MonicBasis::Powers => {
            let mut p = 1.0;
            for _ in 0..count {
                out.push(p);
                p *= x;
            }
        }
        MonicBasis::Orthogonal => {
            let c = &table.coeffs;
            let (mut prev, mut cur) = (0.0, 1.0);
            for k in 0..count {
                out.push(cur);
                let beta_k = if k == 0 { 0.0 } else { c.beta[k] };
                let next = (x - c.alpha[k]) * cur - beta_k * prev;
                prev = cur;
                cur = next;
            }
        }
    }
    out
}

/// `Z_N4 = Pf Q` with `Q_ij = sum_x w(x)(pi_i(x) pi_j(x+1) - pi_i(x+1) pi_j(x))`.
pub fn partition_function_pf(table: &OrthonormalTable, n: usize, basis: MonicBasis) -> Result<f64> {
    let dim = 2 * n;
    if basis == MonicBasis::Orthogonal && dim > table.n_max() {
        return Err(Error::Parameter(format!("2N = {dim} exceeds the table size")));
    }
    let l = table.l();
    let pis: Vec<Vec<f64>> = (0..=l + 1).map(|x| monic_values(table, basis, x as f64, dim)).collect();
    let w: Vec<f64> = (0..=l).map(|x| table.weight.weight(x)).collect::<Result<_>>()?;
    let mut q = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let v = compensated_sum((0..=l).map(|x| w[x] * (pis[x][i] * pis[x + 1][j] - pis[x + 1][i] * pis[x][j])));
            q[(i, j)] = v;
            q[(j, i)] = -v;
        }
    }
    pfaffian(&q)
}

/// Both forms of the orthogonal-ensemble normalization.
#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalPartition {
    /// `(-1)^N Pf G`
    pub z_pf: f64,
    /// `det G`, which should equal `z_pf^2`
    pub det: f64,
}

/// `Z~_N1` from `G_jk = sum_{x,y} eps(x,y) pi_j(x) w^{1/2}(x) pi_k(y) w^{1/2}(y)`.
pub fn partition_function_det(
    table: &OrthonormalTable,
    eps: &DMatrix<f64>,
    n: usize,
    basis: MonicBasis,
) -> Result<OrthogonalPartition> {
    let dim = 2 * n;
    let size = table.l() + 1;
    if eps.nrows() != size {
        return Err(Error::Parameter("eps and table live on different lattices".into()));
    }
    let mut v = DMatrix::zeros(dim, size);
    for x in 0..size {
        let sw = table.weight.weight(x)?.sqrt();
        for (j, p) in monic_values(table, basis, x as f64, dim).into_iter().enumerate() {
            v[(j, x)] = p * sw;
        }
    }
    let g = &v * eps * v.transpose();
    let g = (&g - g.transpose()) * 0.5;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(OrthogonalPartition {
        z_pf: sign * pfaffian(&g)?,
        det: g.determinant(),
    })
}

/// Residuals of the brute-force identities.
#[derive(Debug, Clone, Serialize)]
pub struct DeBruijnReport {
    pub seed: u64,
    /// max relative error of the pair-determinant identity over trials
    pub pair_identity: f64,
    /// max relative error of the eps-Pfaffian identity over trials
    pub eps_identity: f64,
    /// max relative error of the Vandermonde product identity
    pub vandermonde: f64,
    pub trials: usize,
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `sum_{x_1<..<x_N} det[phi_j(x_i), psi_j(x_i)] = Pf A` with
/// `A_jk = sum_x (phi_j psi_k - phi_k psi_j)(x)`.
pub fn pair_identity(phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<(f64, f64)> {
    let dim = phi.nrows();
    let sites = phi.ncols();
    let n = dim / 2;
    let mut terms = Vec::new();
    combinations(sites, n, |xs| {
        let mut m = DMatrix::zeros(dim, dim);
        for (i, &x) in xs.iter().enumerate() {
            for j in 0..dim {
                m[(j, 2 * i)] = phi[(j, x)];
                m[(j, 2 * i + 1)] = psi[(j, x)];
            }
        }
        terms.push(m.determinant());
    });
    let lhs = compensated_sum(terms);
    let a = phi * psi.transpose() - psi * phi.transpose();
    Ok((lhs, pfaffian(&a)?))
}

/// `sum_{x_1<..<x_2N} det[phi_j(x_i)] Pf[eps(x_i,x_j)] = Pf[phi eps phi^T]`.
pub fn eps_identity(phi: &DMatrix<f64>, eps: &DMatrix<f64>) -> Result<(f64, f64)> {
    let dim = phi.nrows();
    let sites = phi.ncols();
    let mut terms = Vec::new();
    let mut err = None;
    combinations(sites, dim, |xs| {
        let m = DMatrix::from_fn(dim, dim, |j, i| phi[(j, xs[i])]);
        let e = DMatrix::from_fn(dim, dim, |i, j| eps[(xs[i], xs[j])]);
        match pfaffian(&e) {
            Ok(p) => terms.push(m.determinant() * p),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let g = phi * eps * phi.transpose();
    let g = (&g - g.transpose()) * 0.5;
    Ok((compensated_sum(terms), pfaffian(&g)?))
}

/// `det[pi_j(y_i)]` at `y = (x_1+1, x_1, x_2+1, x_2, ...)` against
/// `(-1)^N prod_{i<j} (x_i-x_j)^2 ((x_i-x_j)^2 - 1)`.
///
/// Both sides are evaluated in exact rational arithmetic from the given
/// binary floating-point inputs, then rounded.
pub fn vandermonde_identity(xs: &[f64], monic: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = xs.len();
    let exact = |v: f64| BigRational::from_float(v).ok_or_else(|| Error::Parameter(format!("non-finite input {v}")));
    let xr: Vec<BigRational> = xs.iter().map(|&x| exact(x)).collect::<Result<_>>()?;
    let ys: Vec<BigRational> = xr.iter().flat_map(|x| [x + BigRational::one(), x.clone()]).collect();
    let coeffs: Vec<Vec<BigRational>> = monic
        .iter()
        .map(|c| c.iter().map(|&a| exact(a)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let eval = |c: &[BigRational], y: &BigRational| c.iter().rev().fold(BigRational::zero(), |acc, a| acc * y + a);
    let mut m: Vec<Vec<BigRational>> = (0..2 * n)
        .map(|j| ys.iter().map(|y| eval(&coeffs[j], y)).collect())
        .collect();
    let mut prod = if n.is_multiple_of(2) {
        BigRational::one()
    } else {
        -BigRational::one()
    };
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (&xr[i] - &xr[j]) * (&xr[i] - &xr[j]);
            prod *= &d2 * (&d2 - BigRational::one());
        }
    }
    let det = exact_det(&mut m);
    let round = |v: &BigRational| v.to_f64().unwrap_or(f64::NAN);
    Ok((round(&det), round(&prod)))
}

/// Fraction-exact Gaussian elimination; destroys `m`.
fn exact_det(m: &mut [Vec<BigRational>]) -> BigRational {
    let dim = m.len();
    let mut det = BigRational::one();
    for col in 0..dim {
        let Some(p) = (col..dim).find(|&r| !m[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if p != col {
            m.swap(p, col);
            det = -det;
        }
        let pivot = m[col][col].clone();
        det *= &pivot;
        for r in col + 1..dim {
            if m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] / &pivot;
            for c in col..dim {
                let v = &f * &m[col][c];
                m[r][c] -= v;
            }
        }
    }
    det
}

/// Random instances of the three identities, reproducible from `seed`.
pub fn de_bruijn_checks(seed: u64, trials: usize) -> Result<DeBruijnReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DeBruijnReport {
        seed,
        pair_identity: 0.0,
        eps_identity: 0.0,
        vandermonde: 0.0,
        trials,
    };
    for t in 0..trials {
        let n = 1 + t % 3;
        let sites = rng.gen_range(2 * n..=12);
        let phi = DMatrix::from_fn(2 * n, sites, |_, _| rng.gen_range(-1.0..1.0));
        let psi = DMatrix::from_fn(2 * n, sites, |_, _| rng.gen_range(-1.0..1.0));
        let (l, r) = pair_identity(&phi, &psi)?;
        report.pair_identity = report.pair_identity.max(rel(l, r));

        let mut eps = DMatrix::zeros(sites, sites);
        for i in 0..sites {
            for j in i + 1..sites {
                let v: f64 = rng.gen_range(-1.0..1.0);
                eps[(i, j)] = v;
                eps[(j, i)] = -v;
            }
        }
        let (l, r) = eps_identity(&phi, &eps)?;
        report.eps_identity = report.eps_identity.max(rel(l, r));

        let monic: Vec<Vec<f64>> = (0..2 * n)
            .map(|j| {
                let mut c: Vec<f64> = (0..j).map(|_| rng.gen_range(-2.0..2.0)).collect();
                c.push(1.0);
                c
            })
            .collect();
        let mut pts: Vec<f64> = Vec::new();
        while pts.len() < n {
            let x = rng.gen_range(0..15) as f64;
            if !pts.contains(&x) {
                pts.push(x);
            }
        }
        let (l, r) = vandermonde_identity(&pts, &monic)?;
        // Coinciding or adjacent points give zero on both sides.
        let err = if r == 0.0 { l.abs() } else { rel(l, r) };
        report.vandermonde = report.vandermonde.max(err);
    }
    Ok(report)
}

/// `prod w^{1/2}(x_i) Pf[eps(x_i, x_j)]` against `(-1)^N prod W(x_i)` on
/// parity-admissible configurations and `0` elsewhere.
#[derive(Debug, Clone, Serialize)]
pub struct PfWeightCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn orthogonal_pf_weight_check(
    weight: &DiscreteWeight,
    eps: &DMatrix<f64>,
    config: &[usize],
) -> Result<PfWeightCheck> {
    let k = config.len();
    if !k.is_multiple_of(2) {
        return Err(Error::Domain(format!("configuration of odd size {k}")));
    }
    if config.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Domain("configuration must be strictly increasing".into()));
    }
    if config.iter().any(|&x| x >= eps.nrows()) {
        return Err(Error::Domain("configuration leaves the lattice".into()));
    }
    let sub = DMatrix::from_fn(k, k, |i, j| eps[(config[i], config[j])]);
    let mut log_sw = 0.0;
    for &x in config {
        log_sw += 0.5 * weight.log_weight(x)?;
    }
    let lhs = log_sw.exp() * pfaffian(&sub)?;
    let admissible = k == 0 || (config[0].is_multiple_of(2) && config.windows(2).all(|p| (p[1] - p[0]) % 2 == 1));
    let rhs = if admissible {
        let lw = weight.companion_log_weights(*config.last().unwrap_or(&0))?;
        let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * config.iter().map(|&x| lw[x]).sum::<f64>().exp()
    } else {
        0.0
    };
    let residual = if rhs == 0.0 { lhs.abs() } else { rel(lhs, rhs) };
    Ok(PfWeightCheck { lhs, rhs, residual })
}
