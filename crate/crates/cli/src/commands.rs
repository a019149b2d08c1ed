//! Subcommand implementations. Every parameter is resolved and validated
//! before the output directory is created or any kernel is built.

use crate::config::{output_dir, parse_flavor, parse_list, parse_route, CliError, CliResult, FileConfig, WeightSpec};
use crate::output::{num, OutputDir};
use crate::verify::{self, Suite, VerifyInput};
use crate::{Cli, Command, EnsembleArgs};
use pfaffian_ensembles::kernels::{compare_routes, KernelContext, KernelFlavor, Route, ScalarFlavor, MAX_N};
use pfaffian_ensembles::limits::{charlier_limit_check, laguerre_limit_check, LaguerreLimitConfig, LimitSchedule};
use pfaffian_ensembles::oracle::{compare, enumerate, EnsembleSpec, Flavor};
use pfaffian_ensembles::pfaffian::{correlation, fredholm_det, generating_functional, TestFunction};
use pfaffian_ensembles::weights::{DiscreteWeight, Truncation};
use pfaffian_ensembles::zmeasure::{
    hook_check, normalization_check, proportionality_check, random_diagram, random_pairs, ZFlavor, ZParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const DEFAULT_WEIGHT: &str = "charlier:a=1";
pub const DEFAULT_TAIL_TOL: f64 = 1e-14;

/// A validated ensemble description.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: WeightSpec,
    pub weight: DiscreteWeight,
    pub n: usize,
    pub l: Option<usize>,
    pub tail_tol: f64,
    pub flavor: KernelFlavor,
    pub flavor_name: String,
    pub route: Route,
    pub route_name: String,
}

pub fn check_n(n: usize) -> CliResult<usize> {
    if n == 0 || n > MAX_N {
        return Err(CliError::Input(format!("N = {n} outside 1..={MAX_N}")));
    }
    Ok(n)
}

impl Ensemble {
    pub fn resolve(file: &FileConfig, args: &EnsembleArgs) -> CliResult<Self> {
        let spec = file.get(
            "weight",
            args.weight.clone(),
            WeightSpec {
                text: DEFAULT_WEIGHT.into(),
            },
        )?;
        let weight = spec.build()?;
        let n = check_n(file.get("N", args.n, 1)?)?;
        let l = file.opt("L", args.l)?;
        let tail_tol = file.get("tail-tol", args.tail_tol, DEFAULT_TAIL_TOL)?;
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(CliError::Input(format!("tail-tol = {tail_tol} outside (0, 1)")));
        }
        let flavor_name = file.get("flavor", args.flavor.clone(), "sympl".to_string())?;
        let route_name = file.get("route", args.route.clone(), "inversion".to_string())?;
        Ok(Ensemble {
            spec,
            weight,
            n,
            l,
            tail_tol,
            flavor: parse_flavor(&flavor_name)?,
            flavor_name,
            route: parse_route(&route_name)?,
            route_name,
        })
    }

    pub fn context(&self) -> CliResult<KernelContext> {
        Ok(match self.l {
            Some(l) => KernelContext::new(&self.weight, self.n, &Truncation::fixed(l))?,
            None => KernelContext::with_tail(&self.weight, self.n, self.tail_tol)?,
        })
    }

    pub fn meta(&self, ctx: &KernelContext) -> String {
        format!(
            "weight={} N={} L={} flavor={} route={}",
            self.spec.text,
            self.n,
            ctx.size() - 1,
            self.flavor_name,
            self.route_name
        )
    }

    fn header(&self, ctx: &KernelContext) -> serde_json::Value {
        json!({
            "weight": self.spec.text,
            "N": self.n,
            "L": ctx.size() - 1,
            "flavor": self.flavor_name,
            "route": self.route_name,
        })
    }
}

pub fn scalar_flavor(f: KernelFlavor) -> ScalarFlavor {
    match f {
        KernelFlavor::Symplectic | KernelFlavor::SymplecticNabla => ScalarFlavor::S4,
        KernelFlavor::Orthogonal => ScalarFlavor::S1,
    }
}

pub fn ensemble_flavor(f: KernelFlavor, n: usize) -> Flavor {
    match f {
        KernelFlavor::Symplectic | KernelFlavor::SymplecticNabla => Flavor::Symplectic(n),
        KernelFlavor::Orthogonal => Flavor::Orthogonal(n),
    }
}

fn positive(name: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        return Err(CliError::Input(format!("{name} must be positive")));
    }
    Ok(v)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed: u64 = file.get("seed", cli.seed, 0)?;
    let out = output_dir(&file, cli.out)?;
    match cli.command {
        Command::Kernel { ens } => {
            let ens = Ensemble::resolve(&file, &ens)?;
            kernel(&ens, OutputDir::create(out)?)
        }
        Command::Correlate { ens, points } => {
            let ens = Ensemble::resolve(&file, &ens)?;
            let points: String = file
                .opt("points", points)?
                .ok_or_else(|| CliError::Input("--points is required".into()))?;
            let points = parse_list::<usize>(&points)?;
            if points.is_empty() || points.len() > 6 {
                return Err(CliError::Input(format!(
                    "{} points given, expected 1..=6",
                    points.len()
                )));
            }
            let mut sorted = points.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|p| p[0] == p[1]) {
                return Err(CliError::Input("correlation points must be distinct".into()));
            }
            correlate(&ens, &points, OutputDir::create(out)?)
        }
        Command::Oracle { ens, trials, top } => {
            let mut ens = Ensemble::resolve(&file, &ens)?;
            ens.l = Some(ens.l.unwrap_or(40));
            let trials = positive("trials", file.get("trials", trials, 20)?)?;
            let top = file.get("top", top, 10)?;
            oracle(&ens, trials, top, seed, OutputDir::create(out)?)
        }
        Command::Verify { suite, ens, trials } => {
            let name = file
                .opt("suite", suite)?
                .ok_or_else(|| CliError::Input("--suite is required".into()))?;
            let suite: Suite = name.parse().map_err(CliError::Input)?;
            let input = VerifyInput::resolve(&file, &ens, trials, seed)?;
            let out = OutputDir::create(out)?;
            let report = verify::run(suite, &input)?;
            for c in &report.checks {
                println!("{}", c.line());
            }
            let path = out.write_json(&format!("verify-{}.json", suite.name()), &report)?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            println!(
                "{} of {} checks passed; report in {}",
                report.checks.len() - failed,
                report.checks.len(),
                path.display()
            );
            if failed > 0 {
                return Err(CliError::Compute(format!(
                    "{failed} check(s) failed in suite {}",
                    suite.name()
                )));
            }
            Ok(())
        }
        Command::Limit {
            target,
            schedule,
            alpha,
            n,
            a,
            degree,
            x,
            y,
            x_max,
        } => {
            let target = file.get("target", target, "charlier".to_string())?;
            let schedule: Option<String> = file.opt("schedule", schedule)?;
            let schedule = schedule.map(|s| parse_list::<f64>(&s)).transpose()?;
            let n = check_n(file.get("N", n, 1)?)?;
            let degree = file.get("degree", degree, 3)?;
            match target.as_str() {
                "charlier" => {
                    let a = file.get("a", a, 1.0)?;
                    let schedule = match schedule {
                        Some(v) => LimitSchedule::new(v)?,
                        None => LimitSchedule::charlier_default(),
                    };
                    let x_max = file.get("x-max", x_max, 20)?;
                    limit_charlier(a, degree, n, &schedule, x_max, OutputDir::create(out)?)
                }
                "laguerre" => {
                    let mut cfg = LaguerreLimitConfig::new(file.get("alpha", alpha, 1.0)?, n);
                    cfg.phi_degree = degree;
                    cfg.x = file.get("x", x, cfg.x)?;
                    cfg.y = file.get("y", y, cfg.y)?;
                    if let Some(v) = schedule {
                        cfg.schedule = LimitSchedule::new(v)?;
                    }
                    limit_laguerre(&cfg, OutputDir::create(out)?)
                }
                other => Err(CliError::Input(format!(
                    "unknown limit target {other:?} (charlier, laguerre)"
                ))),
            }
        }
        Command::Zmeasure {
            check,
            beta,
            xi,
            n,
            pairs,
            cutoff,
            max_part,
            z,
            z_prime,
        } => {
            let check = file.get("check", check, "prop41".to_string())?;
            let n = check_n(file.get("N", n, 2)?)?;
            let beta = file.get("beta", beta, 2.0)?;
            let pairs = positive("pairs", file.get("pairs", pairs, 50)?)?;
            let max_part = positive("max-part", file.get("max-part", max_part, 8)?)?;
            let z_args = ZArgs {
                n,
                beta,
                pairs,
                max_part,
                seed,
            };
            match check.as_str() {
                "prop41" | "prop42" => {
                    let xi = file.get("xi", xi, 0.3)?;
                    let flavor = if check == "prop41" {
                        ZFlavor::Symplectic
                    } else {
                        ZFlavor::Orthogonal
                    };
                    flavor.params(n, beta, xi)?;
                    zmeasure_prop(&check, flavor, xi, &z_args, OutputDir::create(out)?)
                }
                "hooks" => zmeasure_hooks(&z_args, OutputDir::create(out)?),
                "norm" => {
                    let xi = file.get("xi", xi, 0.2)?;
                    let params = ZParams::new(file.get("z", z, 2.0)?, file.get("z-prime", z_prime, 2.0)?, 2.0, xi)?;
                    let cutoff = file.get("cutoff", cutoff, 30)?;
                    zmeasure_norm(&params, cutoff, OutputDir::create(out)?)
                }
                other => Err(CliError::Input(format!(
                    "unknown check {other:?} (prop41, prop42, hooks, norm)"
                ))),
            }
        }
    }
}

fn kernel(ens: &Ensemble, out: OutputDir) -> CliResult<()> {
    let ctx = ens.context()?;
    let mk = ctx.matrix_kernel(ens.flavor, ens.route)?;
    let meta = ens.meta(&ctx);
    for (name, m) in [
        ("k11.csv", &mk.k11),
        ("k12.csv", &mk.k12),
        ("k21.csv", &mk.k21),
        ("k22.csv", &mk.k22),
    ] {
        out.write_matrix(name, m, &meta)?;
    }
    let cmp = compare_routes(&ctx, scalar_flavor(ens.flavor))?;
    let mut report = json!({
        "command": "kernel",
        "ensemble": ens.header(&ctx),
        "route_comparison": {
            "scalar": cmp.flavor,
            "inversion_vs_rank": cmp.inversion_vs_rank,
            "inversion_vs_closed": cmp.inversion_vs_closed,
            "m_sigma_min": cmp.m_sigma_min,
        },
    });
    if ens.route == Route::Closed || cmp.resolution.is_some() {
        report["sign_resolution"] = serde_json::to_value(&cmp.resolution).unwrap_or_default();
    }
    out.write_json("kernel.json", &report)?;
    println!("{meta}");
    println!("inversion vs rank   {:.3e}", cmp.inversion_vs_rank);
    if let Some(d) = cmp.inversion_vs_closed {
        println!("inversion vs closed {d:.3e}");
    }
    println!("wrote k11..k22.csv and kernel.json to {}", out.root().display());
    Ok(())
}

fn correlate(ens: &Ensemble, points: &[usize], out: OutputDir) -> CliResult<()> {
    let ctx = ens.context()?;
    if let Some(&p) = points.iter().find(|&&p| p >= ctx.size()) {
        return Err(CliError::Input(format!(
            "point {p} is beyond the lattice cutoff {}",
            ctx.size() - 1
        )));
    }
    let mk = ctx.matrix_kernel(ens.flavor, ens.route)?;
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    let m = sorted.len();
    let mut subsets = Vec::with_capacity(1 << m);
    for mask in 0u32..(1 << m) {
        let sites: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| sorted[i]).collect();
        let eta = TestFunction::constant_on(&sites, 1.0)?;
        let det = fredholm_det(&mk, &eta)?;
        let root = generating_functional(&mk, &eta)?;
        let sign = if (m - sites.len()).is_multiple_of(2) { 1 } else { -1 };
        println!("subset {:?}: det(I + eta K) = {det:.12e}, sign {sign:+}", sites);
        subsets.push(json!({ "sites": sites, "det": det, "sqrt_det": root, "sign": sign }));
    }
    let rho = correlation(&mk, &sorted)?;
    println!("rho_{m}{:?} = {rho:.12e}", sorted);
    let report = json!({
        "command": "correlate",
        "ensemble": ens.header(&ctx),
        "points": sorted,
        "subsets": subsets,
        "rho": rho,
    });
    out.write_json("correlate.json", &report)?;
    Ok(())
}

fn oracle(ens: &Ensemble, trials: usize, top: usize, seed: u64, out: OutputDir) -> CliResult<()> {
    let trunc = Truncation::fixed(ens.l.unwrap_or(40));
    let spec = EnsembleSpec {
        flavor: ensemble_flavor(ens.flavor, ens.n),
        weight: ens.weight.clone(),
        trunc,
    };
    let en = enumerate(&spec)?;
    let ctx = ens.context()?;
    let mk = ctx.matrix_kernel(ens.flavor, ens.route)?;
    let rep = compare(&en, &mk, trials, seed)?;
    let rows: Vec<Vec<String>> = en
        .top(top)
        .into_iter()
        .enumerate()
        .map(|(i, (cfg, p))| {
            let pts: Vec<String> = cfg.iter().map(|x| x.to_string()).collect();
            vec![(i + 1).to_string(), num(p), pts.join(" ")]
        })
        .collect();
    out.write_table("oracle-top.csv", &["rank", "probability", "points"], &rows)?;
    let report = json!({
        "command": "oracle",
        "ensemble": ens.header(&ctx),
        "seed": seed,
        "configurations": en.len(),
        "log_z": en.log_z,
        "comparison": rep,
    });
    out.write_json("oracle.json", &report)?;
    println!("{} configurations, log Z = {:.12e}", en.len(), en.log_z);
    println!(
        "generating functional max |diff| {:.3e} over {trials} trials",
        rep.gf_max
    );
    println!(
        "rho_1 max |diff| {:.3e}, rho_2 max |diff| {:.3e}, holes {:.3e}",
        rep.rho1_max, rep.rho2_max, rep.hole_max
    );
    Ok(())
}

fn limit_charlier(
    a: f64,
    degree: usize,
    kernel_n: usize,
    schedule: &LimitSchedule,
    x_max: usize,
    out: OutputDir,
) -> CliResult<()> {
    let rep = charlier_limit_check(a, degree, kernel_n, schedule, x_max)?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![num(r.beta), num(r.c), num(r.phi_diff), num(r.s4_diff), num(r.s1_diff)])
        .collect();
    out.write_table(
        "limit-charlier.csv",
        &["beta", "c", "phi_diff", "s4_diff", "s1_diff"],
        &rows,
    )?;
    out.write_json("limit-charlier.json", &rep)?;
    for r in &rep.rows {
        println!(
            "beta={:<10} phi {:.3e}  S4 {:.3e}  S1 {:.3e}",
            r.beta, r.phi_diff, r.s4_diff, r.s1_diff
        );
    }
    println!(
        "decreasing: phi {} kernels {}",
        rep.phi_decreasing, rep.kernel_decreasing
    );
    Ok(())
}

fn limit_laguerre(cfg: &LaguerreLimitConfig, out: OutputDir) -> CliResult<()> {
    let rep = laguerre_limit_check(cfg)?;
    let mut rows = Vec::new();
    for rel in &rep.relations {
        for r in &rel.rows {
            rows.push(vec![
                rel.id.clone(),
                format!("{:?}", rel.level).to_lowercase(),
                rel.asserted.to_string(),
                num(r.c),
                r.lattice.to_string(),
                num(r.discrete),
                num(rel.reference),
                num(r.difference),
            ]);
        }
    }
    out.write_table(
        "limit-laguerre.csv",
        &[
            "relation",
            "level",
            "asserted",
            "c",
            "lattice",
            "discrete",
            "reference",
            "difference",
        ],
        &rows,
    )?;
    let summary: Vec<_> = rep
        .relations
        .iter()
        .map(|r| {
            json!({
                "relation": r.id,
                "description": r.description,
                "asserted": r.asserted,
                "reference": r.reference,
                "final_difference": r.final_difference(),
                "final_ratio": r.final_ratio,
                "decreasing": r.decreasing,
            })
        })
        .collect();
    out.write_json(
        "limit-laguerre.json",
        &json!({ "config": rep.config, "psi1_integral": rep.psi1_integral, "relations": summary }),
    )?;
    for r in &rep.relations {
        println!(
            "{:<26} final diff {:.3e}  ratio {:>8.4}  decreasing {}{}",
            r.id,
            r.final_difference(),
            r.final_ratio,
            r.decreasing,
            if r.asserted { "" } else { "  (reported only)" }
        );
    }
    println!("integral of psi_1: {:.3e}", rep.psi1_integral);
    Ok(())
}

struct ZArgs {
    n: usize,
    beta: f64,
    pairs: usize,
    max_part: usize,
    seed: u64,
}

const Z_TOL: f64 = 1e-10;

fn zmeasure_prop(check: &str, flavor: ZFlavor, xi: f64, a: &ZArgs, out: OutputDir) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pairs = random_pairs(&mut rng, flavor, a.n, a.max_part, a.pairs);
    let rep = proportionality_check(flavor, a.n, a.beta, xi, &pairs)?;
    let pass = rep.max_relative < Z_TOL;
    out.write_json(
        &format!("zmeasure-{check}.json"),
        &json!({ "check": check, "seed": a.seed, "tolerance": Z_TOL, "pass": pass, "report": rep }),
    )?;
    println!(
        "max relative error {:.3e} over {} pairs ({} skipped)",
        rep.max_relative, rep.pairs, rep.skipped
    );
    if let Some(p) = rep.max_relative_printed {
        println!("against the double-factorial weight: {p:.3e}");
    }
    finish(pass, check)
}

fn zmeasure_hooks(a: &ZArgs, out: OutputDir) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let diagrams: Vec<_> = (0..a.pairs)
        .map(|_| random_diagram(&mut rng, 2 * a.n + 2, a.max_part))
        .collect();
    let err = hook_check(&diagrams);
    let pass = err < Z_TOL;
    out.write_json(
        "zmeasure-hooks.json",
        &json!({ "check": "hooks", "seed": a.seed, "diagrams": diagrams.len(), "max_relative": err, "tolerance": Z_TOL, "pass": pass }),
    )?;
    println!(
        "hook identity max relative error {err:.3e} over {} diagrams",
        diagrams.len()
    );
    finish(pass, "hooks")
}

fn zmeasure_norm(params: &ZParams, cutoff: usize, out: OutputDir) -> CliResult<()> {
    let rep = normalization_check(params, cutoff)?;
    let tol = 1e-8;
    let pass = rep.remainder.abs() < tol && rep.level_residual < Z_TOL;
    out.write_json(
        "zmeasure-norm.json",
        &json!({ "check": "norm", "tolerance": tol, "pass": pass, "report": rep }),
    )?;
    println!(
        "partial sum at cutoff {cutoff}: 1 - {:.3e} (tail bound {:.3e}); level residual {:.3e}",
        rep.remainder, rep.tail_bound, rep.level_residual
    );
    finish(pass, "norm")
}

fn finish(pass: bool, what: &str) -> CliResult<()> {
    if pass {
        Ok(())
    } else {
        Err(CliError::Compute(format!("{what} check exceeded its tolerance")))
    }
}
