//! `verify` suites: residuals of identities with their tolerances.

use crate::commands::{check_n, DEFAULT_TAIL_TOL};
use crate::config::{parse_flavor, CliError, CliResult, FileConfig, WeightSpec};
use crate::output::CheckRecord;
use crate::EnsembleArgs;
use nalgebra::DMatrix;
use pfaffian_ensembles::kernels::{
    commutator_checks, compare_routes, dminus_checks, lemma71, psi_checks, resolvent_identities, window_diff,
    DminusVariant, KernelContext, KernelFlavor, Route, ScalarFlavor,
};
use pfaffian_ensembles::operators::{
    build_epsilon_closed, build_epsilon_generic, compare_epsilon, epsilon_factorization_residual, interior_probes,
    mutual_inverse_check, ClosedVariant,
};
use pfaffian_ensembles::oracle::{compare, enumerate, EnsembleSpec, Flavor};
use pfaffian_ensembles::orthofam::{difference_residual, OrthonormalTable};
use pfaffian_ensembles::pfaffian::{
    de_bruijn_checks, partition_function_det, partition_function_pf, pfaffian, MonicBasis,
};
use pfaffian_ensembles::weights::{choose_cutoff, DiscreteWeight, Truncation, WeightKind};
use pfaffian_ensembles::zmeasure::{
    hook_check, normalization_check, proportionality_check, random_diagram, random_pairs, ZFlavor, ZParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Debruijn,
    Operators,
    Lemma71,
    Commutators,
    Difference,
    Zmeasure,
    Oracle,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Debruijn => "debruijn",
            Suite::Operators => "operators",
            Suite::Lemma71 => "lemma71",
            Suite::Commutators => "commutators",
            Suite::Difference => "difference",
            Suite::Zmeasure => "zmeasure",
            Suite::Oracle => "oracle",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "debruijn" => Suite::Debruijn,
            "operators" => Suite::Operators,
            "lemma71" => Suite::Lemma71,
            "commutators" => Suite::Commutators,
            "difference" => Suite::Difference,
            "zmeasure" => Suite::Zmeasure,
            "oracle" => Suite::Oracle,
            other => {
                return Err(format!(
                    "unknown suite {other:?} (debruijn, operators, lemma71, commutators, difference, zmeasure, oracle)"
                ))
            }
        })
    }
}

/// Resolved inputs. Absent weights or particle numbers mean "the default
/// sweep of the suite".
pub struct VerifyInput {
    pub weights: Option<Vec<(String, DiscreteWeight)>>,
    pub n: Option<usize>,
    pub l: Option<usize>,
    pub tail_tol: f64,
    pub flavor: Option<KernelFlavor>,
    pub trials: Option<usize>,
    pub seed: u64,
}

impl VerifyInput {
    pub fn resolve(file: &FileConfig, args: &EnsembleArgs, trials: Option<usize>, seed: u64) -> CliResult<Self> {
        let weights = match file.opt::<WeightSpec>("weight", args.weight.clone())? {
            Some(spec) => Some(vec![(spec.text.clone(), spec.build()?)]),
            None => None,
        };
        let n = file.opt("N", args.n)?.map(check_n).transpose()?;
        let flavor = file
            .opt::<String>("flavor", args.flavor.clone())?
            .map(|f| parse_flavor(&f))
            .transpose()?;
        let tail_tol = file.get("tail-tol", args.tail_tol, DEFAULT_TAIL_TOL)?;
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(CliError::Input(format!("tail-tol = {tail_tol} outside (0, 1)")));
        }
        let trials = file.opt("trials", trials)?;
        if trials == Some(0) {
            return Err(CliError::Input("trials must be positive".into()));
        }
        Ok(VerifyInput {
            weights,
            n,
            l: file.opt("L", args.l)?,
            tail_tol,
            flavor,
            trials,
            seed,
        })
    }

    fn weights_or_classical(&self) -> Vec<(String, DiscreteWeight)> {
        self.weights.clone().unwrap_or_else(|| {
            vec![
                ("charlier:a=1".into(), DiscreteWeight::charlier(1.0).expect("valid")),
                (
                    "meixner:beta=2,c=0.3".into(),
                    DiscreteWeight::meixner(2.0, 0.3).expect("valid"),
                ),
            ]
        })
    }

    fn ns_or(&self, default: &[usize]) -> Vec<usize> {
        self.n.map(|n| vec![n]).unwrap_or_else(|| default.to_vec())
    }

    fn context(&self, w: &DiscreteWeight, n: usize) -> CliResult<KernelContext> {
        Ok(match self.l {
            Some(l) => KernelContext::new(w, n, &Truncation::fixed(l))?,
            None => KernelContext::with_tail(w, n, self.tail_tol)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
    pub notes: BTreeMap<String, Value>,
    pub pass: bool,
}

#[derive(Default)]
struct Builder {
    checks: Vec<CheckRecord>,
    notes: BTreeMap<String, Value>,
}

impl Builder {
    fn check(&mut self, id: String, reference: &str, residual: f64, tol: f64) {
        self.checks.push(CheckRecord::new(id, reference, residual, tol));
    }

    fn flag(&mut self, id: String, reference: &str, ok: bool) {
        self.checks.push(CheckRecord::flag(id, reference, ok));
    }

    fn note(&mut self, key: String, value: Value) {
        self.notes.insert(key, value);
    }
}

pub fn run(suite: Suite, input: &VerifyInput) -> CliResult<SuiteReport> {
    let mut b = Builder::default();
    match suite {
        Suite::Debruijn => debruijn(&mut b, input)?,
        Suite::Operators => operators(&mut b, input)?,
        Suite::Lemma71 => lemma(&mut b, input)?,
        Suite::Commutators => commutators(&mut b, input)?,
        Suite::Difference => difference(&mut b, input)?,
        Suite::Zmeasure => zmeasure(&mut b, input)?,
        Suite::Oracle => oracle(&mut b, input)?,
    }
    let pass = b.checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        suite: suite.name().into(),
        seed: input.seed,
        checks: b.checks,
        notes: b.notes,
        pass,
    })
}

fn debruijn(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    let trials = input.trials.unwrap_or(60);
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    for dim in (2..=12).step_by(2) {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let mut a = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in i + 1..dim {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = -v;
                }
            }
            let pf = pfaffian(&a)?;
            let det = a.determinant();
            worst = worst.max((pf * pf - det).abs() / det.abs().max(f64::MIN_POSITIVE));
        }
        b.check(
            format!("pf_squared_dim{dim}"),
            "Pf(A)^2 = det(A), random antisymmetric",
            worst,
            1e-10,
        );
    }
    let rep = de_bruijn_checks(input.seed, trials)?;
    b.check(
        "de_bruijn_symplectic".into(),
        "sum of det[phi, psi] = Pf of the pair Gram matrix",
        rep.pair_identity,
        1e-10,
    );
    b.check(
        "de_bruijn_orthogonal".into(),
        "sum of Pf[eps] det[phi] = Pf(phi eps phi^T)",
        rep.eps_identity,
        1e-10,
    );
    b.check(
        "vandermonde_pairs".into(),
        "det[pi(x), pi(x+1)] = prod (x_i-x_j)^2 ((x_i-x_j)^2-1)",
        rep.vandermonde,
        1e-10,
    );
    b.note("trials".into(), json!(trials));
    Ok(())
}

/// `a_{2N}` from the closed classical formulas.
fn expected_a2n(w: &DiscreteWeight, n: usize) -> Option<f64> {
    let nn = 2.0 * n as f64;
    match *w.kind() {
        WeightKind::Meixner { beta, c } => Some(-(nn * c * (nn + beta - 1.0)).sqrt() / (1.0 - c)),
        WeightKind::Charlier { a } => Some(-(nn * a).sqrt()),
        WeightKind::GenericRational { .. } => None,
    }
}

fn is_classical(w: &DiscreteWeight) -> bool {
    !matches!(w.kind(), WeightKind::GenericRational { .. })
}

fn operators(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    for (label, w) in input.weights_or_classical() {
        for n in input.ns_or(&[1, 2, 3]) {
            let ctx = input.context(&w, n)?;
            let tag = format!("{label} N={n}");
            let trunc = ctx.table.trunc;
            let eps = &ctx.eps;
            b.check(
                format!("{tag} eps_antisymmetric"),
                "eps^T = -eps",
                (eps + eps.transpose()).amax(),
                1e-12,
            );
            let fr = epsilon_factorization_residual(&w, &trunc, eps)?;
            b.check(format!("{tag} eps_factorization"), "eps = F Upsilon F", fr, 1e-10);
            let mi = mutual_inverse_check(&ctx.ops.d, eps, &interior_probes(&ctx.table))?;
            b.check(format!("{tag} d_eps"), "D eps = I on interior probes", mi.d_eps, 1e-8);
            b.check(format!("{tag} eps_d"), "eps D = I on interior probes", mi.eps_d, 1e-8);
            let k = ctx.k();
            b.check(
                format!("{tag} kn_idempotent"),
                "K_N^2 = K_N",
                window_diff(&(k * k), k, ctx.window()),
                1e-9,
            );
            b.check(
                format!("{tag} kn_trace"),
                "tr K_N = 2N",
                (k.trace() - 2.0 * n as f64).abs(),
                1e-8,
            );
            b.check(
                format!("{tag} cd_closed_form"),
                "Christoffel-Darboux quotient = sum form",
                ctx.kn.cd_residual,
                1e-8,
            );
            if let Some(a) = expected_a2n(&w, n) {
                b.check(
                    format!("{tag} a_2n"),
                    "CD coefficient a_2N closed formula",
                    (ctx.kn.a_2n - a).abs() / a.abs(),
                    1e-8,
                );
            }
        }
        if is_classical(&w) {
            let trunc = match input.l {
                Some(l) => Truncation::fixed(l),
                None => choose_cutoff(&w, 2, input.tail_tol)?,
            };
            let trusted = trunc.l + 1 - pfaffian_ensembles::operators::MARGIN.min(trunc.l);
            let generic = build_epsilon_generic(&w, &trunc)?;
            let variants: &[(&str, ClosedVariant)] = match w.kind() {
                WeightKind::Charlier { .. } => &[
                    ("as_printed", ClosedVariant::AsPrinted),
                    ("reconciled", ClosedVariant::Reconciled),
                ],
                _ => &[("as_printed", ClosedVariant::AsPrinted)],
            };
            for &(name, v) in variants {
                let closed = build_epsilon_closed(&w, &trunc, v)?;
                let cmp = compare_epsilon(&closed, &generic, trusted);
                let id = format!("{label} eps_closed_{name}");
                let asserted = matches!(w.kind(), WeightKind::Meixner { .. }) || v == ClosedVariant::Reconciled;
                if asserted {
                    b.check(
                        id.clone(),
                        "closed-form eps = ratio-product eps",
                        cmp.max_residual,
                        1e-10,
                    );
                }
                b.note(format!("{id} residual_map"), json!(cmp));
            }
        }
    }
    Ok(())
}

fn lemma(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    for (label, w) in input.weights_or_classical() {
        for n in input.ns_or(&[1, 2, 3, 5]) {
            let ctx = input.context(&w, n)?;
            let tag = format!("{label} N={n}");
            let s4 = ctx.scalar(ScalarFlavor::S4, Route::Inversion)?.s;
            let s1 = ctx.scalar(ScalarFlavor::S1, Route::Inversion)?.s;
            let r = lemma71(&ctx, &s4, &s1);
            b.check(format!("{tag} s4_k_d"), "S4 K_N D phi_i = phi_i, i < 2N", r.s4_kd, 1e-8);
            b.check(
                format!("{tag} s1_k_eps"),
                "S1 K_N eps phi_i = phi_i, i < 2N",
                r.s1_keps,
                1e-8,
            );
            b.check(
                format!("{tag} s4_perp"),
                "S4 vanishes on the complement of H_N",
                r.s4_perp,
                1e-8,
            );
            b.check(
                format!("{tag} s1_perp"),
                "S1 vanishes on the complement of H_N",
                r.s1_perp,
                1e-8,
            );
            let res = resolvent_identities(&ctx, &s4, &s1)?;
            b.check(
                format!("{tag} resolvent_s4"),
                "D S4 = (I - [D,K] eps)^-1 K",
                res.d_s4,
                1e-7,
            );
            b.check(
                format!("{tag} resolvent_s1"),
                "eps S1 = (I - [eps,K] D)^-1 K",
                res.eps_s1,
                1e-7,
            );
            for sf in [ScalarFlavor::S4, ScalarFlavor::S1] {
                let cmp = compare_routes(&ctx, sf)?;
                b.check(
                    format!("{tag} {sf:?} inversion_vs_rank"),
                    "inversion and rank-factor routes agree",
                    cmp.inversion_vs_rank,
                    1e-7,
                );
                if let Some(d) = cmp.inversion_vs_closed {
                    b.check(
                        format!("{tag} {sf:?} inversion_vs_closed"),
                        "closed form after sign resolution",
                        d,
                        1e-7,
                    );
                }
                if let Some(res) = cmp.resolution {
                    b.note(format!("{tag} {sf:?} sign_resolution"), json!(res));
                }
            }
        }
    }
    Ok(())
}

fn commutators(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    for (label, w) in input.weights_or_classical() {
        for n in input.ns_or(&[1, 2, 3]) {
            let ctx = input.context(&w, n)?;
            let tag = format!("{label} N={n}");
            let rep = commutator_checks(&ctx)?;
            b.check(
                format!("{tag} rank_one"),
                "sigma_2/sigma_1 of [D,K]K",
                rep.rank_ratio,
                1e-8,
            );
            b.check(
                format!("{tag} symmetry"),
                "symmetric part of the rank-one term",
                rep.symmetry,
                1e-8,
            );
            if is_classical(&w) {
                b.check(
                    format!("{tag} closed_commutator"),
                    "[D,K] closed form",
                    rep.closed_form,
                    1e-8,
                );
                match rep.t_minus_one {
                    Some(t) => b.check(format!("{tag} t_equals_one"), "T = 1", t, 1e-8),
                    None => b.flag(format!("{tag} t_equals_one"), "T = 1", false),
                }
                let dm = dminus_checks(&ctx, DminusVariant::System)?;
                b.check(
                    format!("{tag} dminus_det"),
                    "det D_-(x+1) = w(x)/w(x+1)",
                    dm.det_relative,
                    1e-9,
                );
                b.check(
                    format!("{tag} dminus_action"),
                    "D_- acting on (phi_2N, phi_2N-1)",
                    dm.action,
                    1e-9,
                );
                b.check(
                    format!("{tag} dplus_action"),
                    "D_+ acting on (phi_2N, phi_2N-1)",
                    dm.dplus_action,
                    1e-9,
                );
                b.check(
                    format!("{tag} commutator_formula"),
                    "[D,K] from the D_- matrix",
                    dm.commutator_formula,
                    1e-8,
                );
                let printed = dminus_checks(&ctx, DminusVariant::Printed)?;
                b.note(format!("{tag} dminus_printed"), json!(printed));
                let psi = psi_checks(&ctx)?;
                b.check(format!("{tag} psi1_in_hn"), "psi_1 lies in H_N", psi.psi1_in_hn, 1e-8);
                b.check(
                    format!("{tag} psi2_perp"),
                    "psi_2 is orthogonal to H_N",
                    psi.psi2_perp,
                    1e-8,
                );
                b.note(format!("{tag} psi"), json!(psi));
            }
        }
    }
    Ok(())
}

fn difference(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    let weights = match &input.weights {
        Some(w) => w.clone(),
        None => {
            let mut v = Vec::new();
            for (beta, c) in [(2.0, 0.3), (1.5, 0.5), (3.2, 0.2)] {
                v.push((format!("meixner:beta={beta},c={c}"), DiscreteWeight::meixner(beta, c)?));
            }
            for a in [0.5, 1.0, 2.5] {
                v.push((format!("charlier:a={a}"), DiscreteWeight::charlier(a)?));
            }
            v
        }
    };
    let (n_max, x_max) = (12, 40);
    for (label, w) in weights {
        if !is_classical(&w) {
            return Err(CliError::Input(
                "the difference suite needs a Meixner or Charlier weight".into(),
            ));
        }
        let l = choose_cutoff(&w, n_max + 1, 1e-16)?
            .l
            .max(4 * n_max + 12)
            .max(x_max + 20);
        let table = OrthonormalTable::build(&w, n_max, &Truncation::fixed(l))?;
        let (mut first, mut second) = (0.0f64, 0.0f64);
        for n in 1..=n_max {
            for x in 0..=x_max {
                let (r1, r2) = difference_residual(&table, n, x)?;
                first = first.max(r1.abs());
                second = second.max(r2.abs());
            }
        }
        b.check(
            format!("{label} first_equation"),
            "first difference equation, n <= 12, x <= 40",
            first,
            1e-9,
        );
        b.check(
            format!("{label} second_equation"),
            "second difference equation, n <= 12, x <= 40",
            second,
            1e-9,
        );
        b.note(format!("{label} lattice"), json!(l));
    }
    Ok(())
}

fn zmeasure(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    let count = input.trials.unwrap_or(50);
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    for (flavor, n) in [
        (ZFlavor::Symplectic, 1),
        (ZFlavor::Symplectic, 2),
        (ZFlavor::Orthogonal, 1),
        (ZFlavor::Orthogonal, 2),
    ] {
        let pairs = random_pairs(&mut rng, flavor, n, 8, count);
        let rep = proportionality_check(flavor, n, 2.0, 0.3, &pairs)?;
        let tag = format!("{flavor:?} N={n}").to_lowercase();
        b.check(
            format!("{tag} proportionality"),
            "z-measure ratio = mapped ensemble weight ratio",
            rep.max_relative,
            1e-10,
        );
        b.note(format!("{tag} report"), json!(rep));
    }
    let diagrams: Vec<_> = (0..count).map(|_| random_diagram(&mut rng, 6, 8)).collect();
    b.check(
        "hooks".into(),
        "theta = 2 hook product identity",
        hook_check(&diagrams),
        1e-10,
    );
    let params = ZParams::new(2.0, 2.0, 2.0, 0.2)?;
    let norm = normalization_check(&params, 30)?;
    b.check(
        "normalization".into(),
        "partial sum of the z-measure up to size 30",
        norm.remainder.abs(),
        1e-8,
    );
    b.check(
        "level_sums".into(),
        "size-k mass = (1-xi)^t (t)_k xi^k / k!",
        norm.level_residual,
        1e-10,
    );
    b.note("normalization".into(), json!(norm));
    Ok(())
}

/// Tolerance for the kernel-versus-enumeration comparison.
fn oracle_tol(flavor: Flavor) -> f64 {
    match flavor {
        Flavor::Symplectic(1) => 1e-8,
        Flavor::Symplectic(_) => 1e-6,
        Flavor::Orthogonal(1) => 1e-6,
        Flavor::Orthogonal(_) => 1e-5,
    }
}

fn default_lattice(flavor: Flavor) -> usize {
    match flavor {
        Flavor::Symplectic(1) | Flavor::Orthogonal(1) => 40,
        Flavor::Symplectic(_) => 60,
        Flavor::Orthogonal(_) => 50,
    }
}

fn oracle(b: &mut Builder, input: &VerifyInput) -> CliResult<()> {
    let trials = input.trials.unwrap_or(20);
    let flavors = match input.flavor {
        Some(f) => vec![f],
        None => vec![KernelFlavor::Symplectic, KernelFlavor::Orthogonal],
    };
    let n = input.n.unwrap_or(1);
    for (label, w) in input.weights_or_classical() {
        for &kf in &flavors {
            let flavor = match kf {
                KernelFlavor::Symplectic | KernelFlavor::SymplecticNabla => Flavor::Symplectic(n),
                KernelFlavor::Orthogonal => Flavor::Orthogonal(n),
            };
            let l = input.l.unwrap_or_else(|| default_lattice(flavor));
            let trunc = Truncation::fixed(l);
            let en = enumerate(&EnsembleSpec {
                flavor,
                weight: w.clone(),
                trunc,
            })?;
            let ctx = KernelContext::new(&w, n, &trunc)?;
            let k = ctx.matrix_kernel(kf, Route::Inversion)?;
            let rep = compare(&en, &k, trials, input.seed)?;
            let tol = oracle_tol(flavor);
            let tag = format!("{label} {kf:?} N={n} L={l}")
                .replace("SymplecticNabla", "symplectic_nabla")
                .to_lowercase();
            b.check(
                format!("{tag} generating_functional"),
                "sqrt det(I + eta K) = E prod (1 + eta(x_i))",
                rep.gf_max,
                tol,
            );
            b.check(format!("{tag} rho1"), "one-point correlation", rep.rho1_max, tol);
            b.check(format!("{tag} rho2"), "two-point correlation", rep.rho2_max, tol);
            b.check(format!("{tag} holes"), "hole probabilities", rep.hole_max, tol);
            b.note(format!("{tag} comparison"), json!(rep));

            let pl = l.min(40).max(8 * n);
            let ptrunc = Truncation::fixed(pl);
            let table = OrthonormalTable::build(&w, 2 * n, &ptrunc)?;
            let en = enumerate(&EnsembleSpec {
                flavor,
                weight: w.clone(),
                trunc: ptrunc,
            })?;
            let z = en.z();
            match flavor {
                Flavor::Symplectic(_) => {
                    let pf = partition_function_pf(&table, n, MonicBasis::Orthogonal)?;
                    b.check(
                        format!("{tag} partition_function"),
                        "enumerated Z = Pf Q",
                        (pf / z - 1.0).abs(),
                        1e-6,
                    );
                }
                Flavor::Orthogonal(_) => {
                    let eps = build_epsilon_generic(&w, &ptrunc)?;
                    let part = partition_function_det(&table, &eps, n, MonicBasis::Orthogonal)?;
                    b.check(
                        format!("{tag} partition_function"),
                        "enumerated Z = (-1)^N Pf G",
                        (part.z_pf / z - 1.0).abs(),
                        1e-6,
                    );
                    b.check(
                        format!("{tag} partition_det"),
                        "enumerated Z^2 = det G",
                        (part.det / (z * z) - 1.0).abs(),
                        1e-6,
                    );
                }
            }
        }
    }
    b.note("trials".into(), json!(trials));
    Ok(())
}
