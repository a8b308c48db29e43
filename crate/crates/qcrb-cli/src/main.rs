use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use qcrb::bounds::{self, BoundReport};
use qcrb::experiments::{self as ex, RunManifest};
use qcrb::gellmann;
use qcrb::model::{self, StatModel};
use qcrb::povm;
use qcrb::sdp::SdpOptions;
use qcrb::Error;
use serde_json::{json, Value};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const EXIT_FAIL: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qcrb", version, about = "Multi-parameter quantum Cramér-Rao bounds")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// JSON file whose keys mirror the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, global = true, default_value_t = 1e-8)]
    gap_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    feas_tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
}

impl SolverArgs {
    fn opts(&self) -> SdpOptions {
        SdpOptions { gap_tol: self.gap_tol, feas_tol: self.feas_tol, max_iter: self.max_iter, verbose: false }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate every bound for one model.
    Bound(BoundArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Run an experiment and write a dataset plus manifest.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Gmm,
    GmmSubset,
    RhoMax,
    RhoMin,
    Qubit,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long, value_enum, conflicts_with = "model_file")]
    model: Option<ModelKind>,
    /// Model JSON with `rho`, `derivs` and optional `weight`, `theta`.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Parameter values; a single value is repeated for every parameter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    /// One-based Gell-Mann labels for `gmm-subset`.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Mixing weight for `rho-max` and `rho-min`.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Rank of the `rho-min` branch.
    #[arg(long, default_value_t = 2)]
    branch: usize,
    /// Bloch length for `qubit`.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Regularization for rank-deficient states.
    #[arg(long, default_value_t = model::DEFAULT_EPS)]
    eps: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    GmmIdentities,
    MmCertificates,
    Sic,
    Xsol,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Dimension or range, e.g. `4`, `2..8`, `2,3`.
    #[arg(long, default_value = "2..4")]
    d: String,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum ExperimentKind {
    PuritySweep,
    Table1,
    Grid,
    Weighted,
    GmVsNh,
    PovmOpt,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::PuritySweep => "purity-sweep",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Grid => "grid",
            ExperimentKind::Weighted => "weighted",
            ExperimentKind::GmVsNh => "gm-vs-nh",
            ExperimentKind::PovmOpt => "povm-opt",
        }
    }
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    #[arg(long, default_value = "3")]
    d: String,
    /// Parameter counts for `grid`, e.g. `2..8`.
    #[arg(long, default_value = "2..8")]
    n: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, env = "QCRB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "QCRB_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, default_value = "qcrb-out")]
    out: PathBuf,
    /// Rerun even if a complete manifest with the same configuration exists.
    #[arg(long)]
    force: bool,
    /// Skip the extremal curves in `purity-sweep`.
    #[arg(long)]
    no_extremal: bool,
    /// Skip the forced maximally mixed subset models in `grid`.
    #[arg(long)]
    no_forced: bool,
    /// Full models that also get the two-copy NHCRB in `gm-vs-nh`.
    #[arg(long, default_value_t = 0)]
    two_copy: usize,
    /// Target purity for `povm-opt` (ρ_max family); maximally mixed if absent.
    #[arg(long)]
    purity: Option<f64>,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    outcomes: Option<usize>,
    #[arg(long, default_value_t = 3000)]
    iters: usize,
}

/// Six significant digits for human output.
fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Solver(_) => EXIT_SOLVER,
        Error::InvalidModel(_)
        | Error::InvalidState(_)
        | Error::Dimension(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Unsupported(_)
        | Error::Singular(_) => EXIT_INVALID,
        Error::Io(_) => EXIT_FAIL,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(e))
}

fn parse_range(s: &str) -> qcrb::Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad range {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

/// Turns a JSON config object into flags placed before the real ones.
fn config_args(path: &Path) -> qcrb::Result<Vec<String>> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let obj = v.as_object().ok_or_else(|| Error::Parse("config must be a JSON object".into()))?;
    let mut out = Vec::new();
    if let Some(c) = obj.get("command").and_then(Value::as_str) {
        out.push(c.to_string());
    }
    if let Some(e) = obj.get("experiment").and_then(Value::as_str) {
        out.push(e.to_string());
    }
    for (k, val) in obj {
        if k == "command" || k == "experiment" {
            continue;
        }
        let flag = format!("--{}", k.replace('_', "-"));
        match val {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(a) => {
                out.push(flag);
                out.push(a.iter().map(|x| x.to_string().trim_matches('"').to_string()).collect::<Vec<_>>().join(","));
            }
            Value::String(s) => {
                out.push(flag);
                out.push(s.clone());
            }
            other => {
                out.push(flag);
                out.push(other.to_string());
            }
        }
    }
    Ok(out)
}

fn parse_cli() -> Result<Cli, ExitCode> {
    let raw: Vec<String> = std::env::args().collect();
    let config = raw.iter().position(|a| a == "--config").and_then(|i| raw.get(i + 1)).map(PathBuf::from);
    let mut argv = vec![raw[0].clone()];
    let mut rest: Vec<String> = raw[1..].to_vec();
    if let Some(p) = config {
        match config_args(&p) {
            Ok(mut c) => {
                // A subcommand given on the command line wins over the file's.
                let has_cmd = rest.iter().any(|a| a == "bound" || a == "verify" || a == "experiment");
                if has_cmd && !c.is_empty() && !c[0].starts_with("--") {
                    c.remove(0);
                    if c.first().is_some_and(|x| !x.starts_with("--")) {
                        c.remove(0);
                    }
                    // Put the file's flags after the subcommand words.
                    let at = rest.iter().position(|a| a == "bound" || a == "verify" || a == "experiment").unwrap_or(0);
                    let mut cut = at + 1;
                    if rest[at] == "experiment" && rest.get(cut).is_some_and(|x| !x.starts_with('-')) {
                        cut += 1;
                    }
                    let tail = rest.split_off(cut);
                    rest.extend(c);
                    rest.extend(tail);
                } else {
                    argv.extend(c);
                }
            }
            Err(e) => return Err(fail(&e)),
        }
    }
    argv.extend(rest);
    let cmd = Cli::command().args_override_self(true);
    let m = cmd.try_get_matches_from(argv).map_err(|e| {
        let _ = e.print();
        ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { 0 })
    })?;
    Cli::from_arg_matches(&m).map_err(|e| {
        let _ = e.print();
        ExitCode::from(EXIT_INVALID)
    })
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(c) => c,
        Err(code) => return code,
    };
    let opts = cli.solver.opts();
    match &cli.command {
        Command::Bound(a) => cmd_bound(a, &opts, cli.json),
        Command::Verify(a) => cmd_verify(a, cli.json),
        Command::Experiment(a) => cmd_experiment(a, &opts, cli.json),
    }
}

fn theta_for(theta: &[f64], n: usize) -> qcrb::Result<Vec<f64>> {
    match theta.len() {
        0 => Ok(vec![0.0; n]),
        1 => Ok(vec![theta[0]; n]),
        l if l == n => Ok(theta.to_vec()),
        l => Err(Error::InvalidModel(format!("{l} theta values for {n} parameters"))),
    }
}

fn build_model(a: &BoundArgs) -> qcrb::Result<StatModel> {
    if let Some(path) = &a.model_file {
        return model::load_model_json(&std::fs::read_to_string(path)?);
    }
    let kind = a.model.ok_or_else(|| Error::InvalidModel("give --model or --model-file".into()))?;
    let d = a.d;
    match kind {
        ModelKind::Gmm => model::gmm_model(d, &theta_for(&a.theta, d * d - 1)?),
        ModelKind::GmmSubset => {
            if a.k.is_empty() {
                return Err(Error::InvalidModel("gmm-subset needs --k".into()));
            }
            if a.k.contains(&0) {
                return Err(Error::InvalidModel("--k labels are one-based".into()));
            }
            let k: Vec<usize> = a.k.iter().map(|x| x - 1).collect();
            model::gmm_subset_model(d, &k, &theta_for(&a.theta, k.len())?)
        }
        ModelKind::RhoMax => {
            let m = model::depolarized_plus_model(d, a.p)?;
            if a.p >= 1.0 {
                m.regularized(a.eps)
            } else {
                Ok(m)
            }
        }
        ModelKind::RhoMin => model::rank_deficient_min_model(d, a.branch, a.p, a.eps),
        ModelKind::Qubit => model::qubit_bloch_model(a.r),
    }
}

fn cmd_bound(a: &BoundArgs, opts: &SdpOptions, json_out: bool) -> ExitCode {
    let m = match build_model(a) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    for (name, r) in [("SLD", bounds::sld_crb(&m)), ("RLD", bounds::rld_crb(&m)), ("GMCRB", bounds::gmcrb(&m, 1))] {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => notes.push(format!("{name}: {e}")),
        }
    }
    let h = match bounds::hcrb(&m, opts) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let nh = match bounds::nhcrb(&m, opts) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let ratio = nh.value / h.value;
    reports.push(h);
    reports.push(nh);
    if let Ok(r) = bounds::micrb_feasible(&m) {
        reports.push(r);
    }
    if json_out {
        let v = json!({
            "d": m.d,
            "n": m.n(),
            "purity": m.purity(),
            "model_hash": m.content_hash(),
            "reports": reports,
            "ratio_nh": ratio,
            "notes": notes,
        });
        say!("{}", serde_json::to_string_pretty(&v).expect("plain data"));
    } else {
        say!("d = {}, n = {}, purity = {}", m.d, m.n(), fmt6(m.purity()));
        for r in &reports {
            let extra = r.gap.map(|g| format!("  (gap {g:.1e})")).unwrap_or_default();
            say!("{:<12} {}{}", r.kind.label(), fmt6(r.value), extra);
        }
        say!("{:<12} {}", "ratio", fmt6(ratio));
        for n in notes {
            say!("note: {n}");
        }
    }
    ExitCode::SUCCESS
}

struct Check {
    name: String,
    residual: f64,
    passed: bool,
    detail: Value,
}

fn run_suite(suite: Suite, d: usize) -> qcrb::Result<Vec<Check>> {
    let mut out = Vec::new();
    match suite {
        Suite::GmmIdentities => {
            let basis = gellmann::gmm_basis(d)?;
            let r = gellmann::verify_identities(&basis);
            let sc = gellmann::structure_constants(&basis);
            let (rf, rd) = gellmann::contraction_residuals(&sc, d);
            let pr = gellmann::product_rule_residual(&basis, &sc);
            for (name, v) in [
                ("casimir", r.casimir),
                ("conjugation", r.conjugation),
                ("quartic", r.quartic),
                ("ff-contraction", rf),
                ("dd-contraction", rd),
                ("product-rule", pr),
            ] {
                out.push(Check { name: format!("d={d} {name}"), residual: v, passed: v <= 1e-10, detail: json!(v) });
            }
        }
        Suite::MmCertificates => {
            let r = bounds::verify_mm_certificates(d)?;
            let res = (r.primal_value - r.closed_form).abs().max((r.dual_value - r.closed_form).abs());
            out.push(Check {
                name: format!("d={d} primal={} dual={} closed={}", fmt6(r.primal_value), fmt6(r.dual_value), fmt6(r.closed_form)),
                residual: res,
                passed: r.passed,
                detail: serde_json::to_value(&r)?,
            });
        }
        Suite::Sic => {
            let s = povm::sic_povm(d)?;
            let target = 1.0 / ((d * d) as f64 * (d + 1) as f64);
            let dev = s.povm.pairwise_overlaps().iter().map(|o| (o - target).abs()).fold(0.0, f64::max);
            out.push(Check {
                name: format!("d={d} overlaps 1/{}", d * d * (d + 1)),
                residual: dev,
                passed: dev <= 1e-9,
                detail: json!({"overlap_residual": s.overlap_residual, "max_deviation": dev}),
            });
        }
        Suite::Xsol => {
            let s = povm::sic_povm(d)?;
            let r = bounds::verify_xsol_separable(d, &s.povm)?;
            out.push(Check {
                name: format!("d={d} separable X_sol"),
                residual: r.reconstruction_residual,
                passed: r.passed,
                detail: serde_json::to_value(&r)?,
            });
        }
    }
    Ok(out)
}

fn cmd_verify(a: &VerifyArgs, json_out: bool) -> ExitCode {
    let ds = match parse_range(&a.d) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let mut all = Vec::new();
    for d in ds {
        match run_suite(a.suite, d) {
            Ok(c) => all.extend(c),
            Err(e) => return fail(&e),
        }
    }
    let ok = all.iter().all(|c| c.passed);
    if json_out {
        let v: Vec<Value> = all
            .iter()
            .map(|c| json!({"check": c.name, "passed": c.passed, "residual": c.residual, "detail": c.detail}))
            .collect();
        say!("{}", serde_json::to_string_pretty(&json!({"passed": ok, "checks": v})).expect("plain data"));
    } else {
        for c in &all {
            say!("{} {}  residual {:.2e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.residual);
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

struct Dataset {
    files: Vec<(String, String)>,
    counts: (usize, usize, usize),
    summary: Value,
}

fn f(x: f64) -> String {
    ex::fmt_f(x)
}

fn opt_f(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn run_experiment(a: &ExperimentArgs, opts: &SdpOptions) -> qcrb::Result<Dataset> {
    let ds = parse_range(&a.d)?;
    let d = ds[0];
    let name = a.kind.name();
    match a.kind {
        ExperimentKind::PuritySweep => {
            let r = ex::purity_sweep(d, a.samples, a.seed, !a.no_extremal, opts, a.jobs)?;
            let ext_rows: Vec<Vec<String>> = r
                .extremal
                .iter()
                .map(|e| {
                    vec![
                        e.family.clone(),
                        f(e.p),
                        f(e.purity),
                        f(e.hcrb),
                        f(e.nhcrb),
                        f(e.ratio),
                        opt_f(e.analytic_hcrb),
                        opt_f(e.analytic_nhcrb),
                    ]
                })
                .collect();
            let ext = ex::table_to_csv(
                &["family", "p", "purity", "hcrb", "nhcrb", "ratio", "analytic_hcrb", "analytic_nhcrb"],
                &ext_rows,
            );
            let s = &r.samples;
            Ok(Dataset {
                files: vec![(format!("{name}.csv"), ex::records_to_csv(&s.records)), (format!("{name}.extremal.csv"), ext)],
                counts: (s.records.len(), s.failures.len(), s.quarantined.len()),
                summary: json!({
                    "max_ratio": s.max_ratio(),
                    "cap": (d + 1) as f64,
                    "failures": s.failures,
                    "quarantined": s.quarantined.iter().map(|q| &q.reason).collect::<Vec<_>>(),
                    "extremal_failures": r.extremal_failures,
                }),
            })
        }
        ExperimentKind::Table1 => {
            let rows = ex::table1_reproduce(opts, a.jobs)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.subsets.to_string(),
                        f(r.hcrb_min),
                        f(r.hcrb_max),
                        f(r.nhcrb_min),
                        f(r.nhcrb_max),
                        f(r.max_ratio),
                        r.failures.to_string(),
                    ]
                })
                .collect();
            let failures = rows.iter().map(|r| r.failures).sum();
            let count = rows.iter().map(|r| r.subsets - r.failures).sum();
            Ok(Dataset {
                files: vec![(
                    format!("{name}.csv"),
                    ex::table_to_csv(
                        &["n", "subsets", "hcrb_min", "hcrb_max", "nhcrb_min", "nhcrb_max", "max_ratio", "failures"],
                        &csv_rows,
                    ),
                )],
                counts: (count, failures, 0),
                summary: serde_json::to_value(&rows)?,
            })
        }
        ExperimentKind::Grid => {
            let ns = parse_range(&a.n)?;
            let cells = ex::ratio_grid(&ds, &ns, a.samples, a.seed, !a.no_forced, opts, a.jobs)?;
            let st = |s: &Option<ex::Stats>| -> Vec<String> {
                match s {
                    Some(s) => vec![s.count.to_string(), f(s.min), f(s.mean), f(s.max)],
                    None => vec!["0".into(), String::new(), String::new(), String::new()],
                }
            };
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    let mut r = vec![c.d.to_string(), c.n.to_string()];
                    r.extend(st(&c.random));
                    r.extend(st(&c.forced));
                    r.push(opt_f(c.envelope_max));
                    r.push(c.failures.to_string());
                    r.push(c.quarantined.to_string());
                    r
                })
                .collect();
            let csv = ex::table_to_csv(
                &[
                    "d",
                    "n",
                    "random_count",
                    "random_min",
                    "random_mean",
                    "random_max",
                    "forced_count",
                    "forced_min",
                    "forced_mean",
                    "forced_max",
                    "envelope_max",
                    "failures",
                    "quarantined",
                ],
                &rows,
            );
            let counts = (
                cells.iter().map(|c| c.random.map_or(0, |s| s.count) + c.forced.map_or(0, |s| s.count)).sum(),
                cells.iter().map(|c| c.failures).sum(),
                cells.iter().map(|c| c.quarantined).sum(),
            );
            Ok(Dataset {
                files: vec![(format!("{name}.csv"), csv)],
                counts,
                summary: json!({"cells": cells, "forced_envelope_monotone_in_n": ex::forced_envelope_monotone(&cells)}),
            })
        }
        ExperimentKind::Weighted => {
            let r = ex::weighted_experiment(d, a.samples, a.seed, opts, a.jobs)?;
            let rows: Vec<Vec<String>> = r
                .records
                .iter()
                .map(|x| {
                    vec![
                        x.index.to_string(),
                        x.seed.to_string(),
                        f(x.purity),
                        f(x.ratio_model),
                        f(x.ratio_mm),
                        x.model_below_mm.to_string(),
                    ]
                })
                .collect();
            Ok(Dataset {
                files: vec![(
                    format!("{name}.csv"),
                    ex::table_to_csv(&["index", "seed", "purity", "ratio_model", "ratio_mm", "model_below_mm"], &rows),
                )],
                counts: (r.records.len(), r.failures.len(), 0),
                summary: json!({"fraction_below": r.fraction_below, "failures": r.failures}),
            })
        }
        ExperimentKind::GmVsNh => {
            let r = ex::gm_vs_nh_experiment(d, a.samples, a.seed, a.two_copy, opts, a.jobs)?;
            let rows: Vec<Vec<String>> = r
                .records
                .iter()
                .map(|x| {
                    vec![
                        x.index.to_string(),
                        x.seed.to_string(),
                        x.kind.clone(),
                        x.n.to_string(),
                        f(x.purity),
                        f(x.hcrb),
                        f(x.nhcrb),
                        f(x.gmcrb),
                        f(x.gmcrb_two_copy),
                        opt_f(x.nhcrb_two_copy),
                    ]
                })
                .collect();
            let full_dev = r
                .records
                .iter()
                .filter(|x| x.kind == "full")
                .map(|x| (x.nhcrb - x.gmcrb).abs())
                .fold(0.0, f64::max);
            Ok(Dataset {
                files: vec![(
                    format!("{name}.csv"),
                    ex::table_to_csv(
                        &[
                            "index",
                            "seed",
                            "kind",
                            "n",
                            "purity",
                            "hcrb",
                            "nhcrb",
                            "gmcrb",
                            "gmcrb_two_copy",
                            "nhcrb_two_copy",
                        ],
                        &rows,
                    ),
                )],
                counts: (r.records.len(), r.failures.len(), 0),
                summary: json!({"max_full_model_nh_minus_gm": full_dev, "failures": r.failures}),
            })
        }
        ExperimentKind::PovmOpt => {
            let m = match a.purity {
                Some(p) => model::depolarized_plus_model(d, bounds::rho_max_p_for_purity(d, p))?,
                None => model::gmm_model(d, &vec![0.0; d * d - 1])?,
            };
            let o = povm::PovmOptOptions {
                outcomes: a.outcomes,
                restarts: a.restarts,
                iters: a.iters,
                seed: a.seed,
                compare_nhcrb: true,
                ..Default::default()
            };
            let r = povm::optimize_ic_povm(&m, &o)?;
            let rows: Vec<Vec<String>> = r
                .restarts
                .iter()
                .enumerate()
                .map(|(i, x)| vec![i.to_string(), x.seed.to_string(), f(x.value), x.iterations.to_string(), x.converged.to_string()])
                .collect();
            let overlaps = r.povm.pairwise_overlaps();
            Ok(Dataset {
                files: vec![
                    (
                        format!("{name}.csv"),
                        ex::table_to_csv(&["restart", "seed", "value", "iterations", "converged"], &rows),
                    ),
                    (format!("{name}.povm.json"), serde_json::to_string_pretty(&r.povm.to_json())?),
                ],
                counts: (r.restarts.len(), r.restarts.iter().filter(|x| !x.value.is_finite()).count(), 0),
                summary: json!({
                    "trace_crb": r.trace_crb,
                    "nhcrb": r.nhcrb,
                    "gap": r.nhcrb_gap(),
                    "overlap_spread": povm::overlap_spread(&overlaps),
                    "purity": m.purity(),
                }),
            })
        }
    }
}

fn config_value(a: &ExperimentArgs, opts: &SdpOptions) -> Value {
    json!({
        "solver": opts,
        "d": a.d, "n": a.n, "samples": a.samples, "seed": a.seed,
        "extremal": !a.no_extremal, "forced": !a.no_forced, "two_copy": a.two_copy,
        "purity": a.purity, "restarts": a.restarts, "outcomes": a.outcomes, "iters": a.iters,
    })
}

fn cmd_experiment(a: &ExperimentArgs, opts: &SdpOptions, json_out: bool) -> ExitCode {
    let name = a.kind.name();
    let config = config_value(a, opts);
    let manifest_path = a.out.join(format!("{name}.manifest.json"));
    if !a.force {
        if let Ok(text) = std::fs::read_to_string(&manifest_path) {
            if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
                if old.complete && old.config_hash == RunManifest::config_hash_for(name, &config) {
                    if json_out {
                        say!("{text}");
                    } else {
                        say!("{name}: up to date ({})", manifest_path.display());
                    }
                    return ExitCode::SUCCESS;
                }
            }
        }
    }
    let data = match run_experiment(a, opts) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    if let Err(e) = std::fs::create_dir_all(&a.out) {
        return fail(&e.into());
    }
    let mut digest_input = String::new();
    for (file, body) in &data.files {
        digest_input.push_str(body);
        if let Err(e) = std::fs::write(a.out.join(file), body) {
            return fail(&e.into());
        }
    }
    let manifest = RunManifest::new(name, config, a.seed, &digest_input, opts, data.counts);
    let mut mv = serde_json::to_value(&manifest).expect("plain data");
    mv["summary"] = data.summary.clone();
    if let Err(e) = std::fs::write(&manifest_path, serde_json::to_string_pretty(&mv).expect("plain data")) {
        return fail(&e.into());
    }
    if json_out {
        say!("{}", serde_json::to_string_pretty(&mv).expect("plain data"));
    } else {
        say!(
            "{name}: {} records, {} failures, {} quarantined -> {}",
            data.counts.0,
            data.counts.1,
            data.counts.2,
            a.out.display()
        );
        print_summary(a.kind, &data.summary);
    }
    if data.counts.0 == 0 && data.counts.1 > 0 {
        return ExitCode::from(EXIT_SOLVER);
    }
    ExitCode::SUCCESS
}

fn print_summary(kind: ExperimentKind, s: &Value) {
    let num = |v: &Value| v.as_f64().map(fmt6).unwrap_or_else(|| "-".into());
    match kind {
        ExperimentKind::PuritySweep => say!("max ratio {} (cap {})", num(&s["max_ratio"]), num(&s["cap"])),
        ExperimentKind::Table1 => {
            say!("{:>2} {:>10} {:>10} {:>10} {:>10}", "n", "HCRB", "NH min", "NH max", "max ratio");
            for r in s.as_array().into_iter().flatten() {
                say!(
                    "{:>2} {:>10} {:>10} {:>10} {:>10}",
                    r["n"],
                    num(&r["hcrb_max"]),
                    num(&r["nhcrb_min"]),
                    num(&r["nhcrb_max"]),
                    num(&r["max_ratio"])
                );
            }
        }
        ExperimentKind::Grid => {
            for c in s["cells"].as_array().into_iter().flatten() {
                say!(
                    "d={} n={} random max {} forced max {} envelope {}",
                    c["d"],
                    c["n"],
                    num(&c["random"]["max"]),
                    num(&c["forced"]["max"]),
                    num(&c["envelope_max"])
                );
            }
        }
        ExperimentKind::Weighted => say!("fraction with ratio(ρ,W) <= ratio(ρ_m,W): {}", num(&s["fraction_below"])),
        ExperimentKind::GmVsNh => say!("max |NHCRB - GMCRB| on full models: {}", num(&s["max_full_model_nh_minus_gm"])),
        ExperimentKind::PovmOpt => say!(
            "best Tr J^-1 {}  NHCRB {}  overlap spread {}",
            num(&s["trace_crb"]),
            num(&s["nhcrb"]),
            num(&s["overlap_spread"])
        ),
    }
}
