use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use factorlab::counter::{
    check_gallery, dirichlet_block_convolution, ftp_growth_experiment, gallery, verify_rs_properties, GalleryKind,
    GalleryParams, MAX_CHECK_DEGREE,
};
use factorlab::disentangle::{
    disentangle, duality_certificate, maurey_factorise, verify_certificate, CapPolicy, SolveOptions, SolveOutcome,
    VerifyOptions,
};
use factorlab::model::{parse_instance, Certificate, DiscreteFunction, Instance};
use factorlab::oracle::{estimate_best_constant, polished_constant};
use factorlab::vector::{khintchine_check, stable_equivalence_check, type_constant_estimate};

const SUBCOMMANDS: [&str; 11] = [
    "solve",
    "verify",
    "duality",
    "maurey",
    "constant",
    "khintchine",
    "stable",
    "type",
    "rs",
    "ftp",
    "gallery",
];

/// Disentanglement certificates, reductions and experiments.
#[derive(Parser, Debug)]
#[command(name = "factorlab", version)]
struct Cli {
    /// Check that PATH holds a report written by this tool, then exit.
    #[arg(long, value_name = "PATH", exclusive = true)]
    validate_report: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Report destination (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run manifest destination (default: standard error).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Search for a disentanglement certificate.
    Solve(SolveArgs),
    /// Check a certificate against an instance.
    Verify(VerifyArgs),
    /// Weights for an outer exponent q > 1 dominating a given G.
    Duality(DualityArgs),
    /// Maurey factorisation for an outer exponent q < 1.
    Maurey(MaureyArgs),
    /// Lower bound on the best constant.
    Constant(ConstantArgs),
    /// Khintchine ratio, CSV output.
    Khintchine(KhintchineArgs),
    /// p-stable moment ratio, CSV output.
    Stable(StableArgs),
    /// Empirical Rademacher type constant of l^r, CSV output.
    Type(TypeArgs),
    /// Rudin-Shapiro norms and Dirichlet block identities.
    Rs(RsArgs),
    /// Growth of the convolution operator on Dirichlet blocks.
    Ftp(FtpArgs),
    /// Build a counterexample instance.
    Gallery(GalleryArgs),
    /// Re-run the invocation recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Constant A (default: the instance's known constant, then an estimate).
    #[arg(long)]
    constant: Option<f64>,
    /// Fixed cap (default: 1 + 1e-4 for positive instances, doubling otherwise).
    #[arg(long)]
    cap: Option<f64>,
    /// Skip the exponent admissibility check and double the cap up to 2^10.
    #[arg(long)]
    probe: bool,
    /// Ratio evaluations when A has to be estimated.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Also write the certificate document here.
    #[arg(long)]
    certificate_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    certificate: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Relative tolerance of the Hoelder chain.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ReductionArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Outer exponent, overriding the instance's `q`.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DualityArgs {
    #[command(flatten)]
    base: ReductionArgs,
    /// G as a JSON array file or a comma-separated list.
    #[arg(long)]
    weight: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct MaureyArgs {
    #[command(flatten)]
    base: ReductionArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ConstantArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 40_000)]
    budget: u64,
    /// Brute-force grid levels, polished by ascent, instead of random restarts.
    #[arg(long)]
    grid: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct KhintchineArgs {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    a: Vec<f64>,
    #[arg(long)]
    q: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct StableArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    a: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TypeArgs {
    /// Exponent of l^r; `inf` allowed.
    #[arg(long, value_parser = parse_exponent)]
    r: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    dim: usize,
    /// Vectors per tuple.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 32)]
    tuples: u64,
    /// Sign samples per tuple beyond the enumeration limit.
    #[arg(long, default_value_t = 4096)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RsArgs {
    #[arg(long)]
    m: u32,
    /// Exit with status 3 unless every property holds.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FtpArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    p: f64,
    /// Truncation level.
    #[arg(long = "M")]
    m_max: u32,
    #[arg(long, default_value_t = 4)]
    m_min: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GalleryArgs {
    /// homogeneity, beyond-range, in-range or non-convex.
    #[arg(long)]
    kind: String,
    /// Atoms (per axis for homogeneity); default 4096, or 1024 for homogeneity.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Write the instance document here.
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Run the recommended solve and compare with the expected verdict.
    #[arg(long)]
    solve: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RerunArgs {
    /// Manifest written by an earlier run.
    #[arg(long = "from")]
    from: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn parse_exponent(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse().map_err(|e| format!("{e}")),
    }
}

/// What a subcommand produced.
enum Body {
    Json(Value),
    Csv(String),
}

struct Outcome {
    status: &'static str,
    code: u8,
    body: Body,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Run = Result<Outcome, Failure>;

#[derive(Serialize, Deserialize)]
struct Manifest {
    subcommand: String,
    argv: Vec<String>,
    parameters: Value,
    seed: u64,
    version: String,
    threads: usize,
    wall_time_seconds: f64,
    outcome: String,
    exit_code: u8,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    parse_instance(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn json_report(subcommand: &str, status: &'static str, code: u8, report: impl Serialize) -> Run {
    let report = serde_json::to_value(report)?;
    Ok(Outcome {
        status,
        code,
        body: Body::Json(json!({ "subcommand": subcommand, "outcome": status, "report": report })),
    })
}

fn csv_report(subcommand: &str, header: &[&str], row: Vec<String>) -> Run {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h = vec!["subcommand"];
    h.extend_from_slice(header);
    w.write_record(&h)?;
    let mut r = vec![subcommand.to_string()];
    r.extend(row);
    w.write_record(&r)?;
    let text = String::from_utf8(w.into_inner().map_err(|e| Failure::Invalid(e.to_string()))?)?;
    Ok(Outcome {
        status: "ok",
        code: 0,
        body: Body::Csv(text),
    })
}

fn solve_status(outcome: SolveOutcome) -> (&'static str, u8) {
    match outcome {
        SolveOutcome::Certified => ("certified", 0),
        SolveOutcome::InfeasibleEvidence => ("infeasible-evidence", 2),
        SolveOutcome::BudgetExhausted => ("budget-exhausted", 2),
    }
}

fn solve(a: &SolveArgs) -> Run {
    let inst = load_instance(&a.instance)?;
    let mut opts = SolveOptions {
        constant: a.constant,
        cap: a.cap.map(|cap| CapPolicy::Fixed { cap }),
        probe: a.probe,
        seed: a.common.seed,
        ..SolveOptions::default()
    };
    if let Some(b) = a.budget {
        opts.estimate_budget = b;
    }
    if let Some(m) = a.max_rounds {
        opts.max_rounds = m;
    }
    let rep = disentangle(&inst, &opts)?;
    if let (Some(path), Some(cert)) = (&a.certificate_out, &rep.certificate) {
        write(path, &cert.to_json())?;
    }
    let (status, code) = solve_status(rep.outcome);
    json_report("solve", status, code, rep)
}

fn verify(a: &VerifyArgs) -> Run {
    let inst = load_instance(&a.instance)?;
    let cert = Certificate::from_json(&read(&a.certificate)?)?;
    let mut opts = VerifyOptions {
        trials: a.trials,
        seed: a.common.seed,
        ..VerifyOptions::default()
    };
    if let Some(t) = a.tol {
        opts.chain_tol = t;
    }
    let rep = verify_certificate(&inst, &cert, &opts)?;
    let (status, code) = if rep.passed { ("passed", 0) } else { ("failed", 3) };
    json_report("verify", status, code, rep)
}

fn reduction_setup(a: &ReductionArgs, seed: u64) -> Result<(Instance, SolveOptions), Failure> {
    let mut inst = load_instance(&a.instance)?;
    if let Some(q) = a.q {
        let profile = inst.profile().with_q(Some(q))?;
        inst = inst.with_profile(profile)?;
    }
    let mut opts = SolveOptions {
        constant: a.constant,
        cap: a.cap.map(|cap| CapPolicy::Fixed { cap }),
        seed,
        ..SolveOptions::default()
    };
    if let Some(b) = a.budget {
        opts.estimate_budget = b;
    }
    Ok((inst, opts))
}

fn parse_weight(s: &str) -> Result<Vec<f64>, Failure> {
    let path = Path::new(s);
    if path.exists() {
        return Ok(serde_json::from_str(&read(path)?)?);
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::Invalid(format!("weight entry {v:?}: {e}"))))
        .collect()
}

fn reduction_status(rep: &factorlab::disentangle::ReductionReport) -> (&'static str, u8) {
    match (rep.solve.outcome, rep.passed) {
        (_, true) => ("certified", 0),
        (SolveOutcome::Certified, false) => ("check-failed", 3),
        (o, false) => solve_status(o),
    }
}

fn duality(a: &DualityArgs) -> Run {
    let (inst, opts) = reduction_setup(&a.base, a.common.seed)?;
    let g = DiscreteFunction::new(parse_weight(&a.weight)?);
    let rep = duality_certificate(&inst, &g, &opts)?;
    let (status, code) = reduction_status(&rep);
    json_report("duality", status, code, rep)
}

fn maurey(a: &MaureyArgs) -> Run {
    let (inst, opts) = reduction_setup(&a.base, a.common.seed)?;
    let rep = maurey_factorise(&inst, &opts)?;
    let (status, code) = reduction_status(&rep);
    json_report("maurey", status, code, rep)
}

fn constant(a: &ConstantArgs) -> Run {
    let inst = load_instance(&a.instance)?;
    let est = match a.grid {
        Some(levels) => polished_constant(&inst, levels, a.common.seed)?,
        None => estimate_best_constant(&inst, a.budget, a.common.seed)?,
    };
    let a_value = est.constant(&inst);
    json_report("constant", "ok", 0, json!({ "constant": a_value, "estimate": est }))
}

fn khintchine(a: &KhintchineArgs) -> Run {
    let e = khintchine_check(&a.a, a.q, a.samples, a.common.seed)?;
    csv_report(
        "khintchine",
        &["estimate", "stderr", "samples", "seed", "exact"],
        vec![e.ratio.to_string(), e.stderr.to_string(), e.samples.to_string(), e.seed.to_string(), e.exact.to_string()],
    )
}

fn stable(a: &StableArgs) -> Run {
    let e = stable_equivalence_check(a.p, a.q, &a.a, a.samples, a.common.seed)?;
    let m = e.estimate;
    csv_report(
        "stable",
        &["estimate", "stderr", "samples", "seed", "expected"],
        vec![m.ratio.to_string(), m.stderr.to_string(), m.samples.to_string(), m.seed.to_string(), e.expected.to_string()],
    )
}

fn type_constant(a: &TypeArgs) -> Run {
    let e = type_constant_estimate(a.dim, a.r, a.p, a.n, a.tuples, a.samples, a.common.seed)?;
    csv_report(
        "type",
        &["estimate", "stderr", "samples", "seed", "exact"],
        vec![
            e.constant.to_string(),
            e.stderr.to_string(),
            e.tuples.to_string(),
            a.common.seed.to_string(),
            e.exact.to_string(),
        ],
    )
}

fn rs(a: &RsArgs) -> Run {
    let props = verify_rs_properties(a.m, a.grid)?;
    let conv = if a.m <= MAX_CHECK_DEGREE { Some(dirichlet_block_convolution(a.m)?) } else { None };
    let passed = props.passed() && conv.as_ref().is_none_or(|c| c.passed());
    let (status, code) = match (passed, a.check) {
        (true, _) => ("passed", 0),
        (false, true) => ("failed", 3),
        (false, false) => ("failed", 0),
    };
    json_report("rs", status, code, json!({ "properties": props, "convolution": conv, "passed": passed }))
}

fn ftp(a: &FtpArgs) -> Run {
    let t = ftp_growth_experiment(a.r, a.p, a.m_min, a.m_max)?;
    let (status, code) = if t.passed() { ("passed", 0) } else { ("failed", 3) };
    json_report("ftp", status, code, t)
}

fn run_gallery(a: &GalleryArgs) -> Run {
    let kind = GalleryKind::parse(&a.kind)?;
    let n = a.n.unwrap_or(if kind == GalleryKind::Homogeneity { 1024 } else { 4096 });
    let g = gallery(kind, GalleryParams { n, lambda: a.lambda })?;
    if let Some(path) = &a.emit {
        write(path, &g.instance.to_json())?;
    }
    let command = if g.options.probe { "factorlab solve --probe" } else { "factorlab solve" };
    let check = if a.solve { Some(check_gallery(&g)?) } else { None };
    let (status, code) = match &check {
        None => ("ok", 0),
        Some(c) if c.agrees => ("agrees", 0),
        Some(_) => ("disagrees", 3),
    };
    json_report(
        "gallery",
        status,
        code,
        json!({
            "kind": kind,
            "params": g.params,
            "verdict": g.verdict,
            "witnesses": g.witnesses,
            "description": g.description,
            "atoms": g.instance.space_x().atom_count(),
            "required_cap": g.required_cap,
            "closed_form": g.closed_form,
            "recommended": command,
            "check": check,
        }),
    )
}

fn common(c: &Command) -> &Common {
    match c {
        Command::Solve(a) => &a.common,
        Command::Verify(a) => &a.common,
        Command::Duality(a) => &a.common,
        Command::Maurey(a) => &a.common,
        Command::Constant(a) => &a.common,
        Command::Khintchine(a) => &a.common,
        Command::Stable(a) => &a.common,
        Command::Type(a) => &a.common,
        Command::Rs(a) => &a.common,
        Command::Ftp(a) => &a.common,
        Command::Gallery(a) => &a.common,
        Command::Rerun(a) => &a.common,
    }
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Solve(_) => "solve",
        Command::Verify(_) => "verify",
        Command::Duality(_) => "duality",
        Command::Maurey(_) => "maurey",
        Command::Constant(_) => "constant",
        Command::Khintchine(_) => "khintchine",
        Command::Stable(_) => "stable",
        Command::Type(_) => "type",
        Command::Rs(_) => "rs",
        Command::Ftp(_) => "ftp",
        Command::Gallery(_) => "gallery",
        Command::Rerun(_) => "rerun",
    }
}

fn run(c: &Command) -> Run {
    match c {
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Duality(a) => duality(a),
        Command::Maurey(a) => maurey(a),
        Command::Constant(a) => constant(a),
        Command::Khintchine(a) => khintchine(a),
        Command::Stable(a) => stable(a),
        Command::Type(a) => type_constant(a),
        Command::Rs(a) => rs(a),
        Command::Ftp(a) => ftp(a),
        Command::Gallery(a) => run_gallery(a),
        Command::Rerun(_) => unreachable!("rerun is resolved before dispatch"),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate_report(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("not a JSON report: {e}"))?;
        let sub = v["subcommand"].as_str().ok_or("missing `subcommand`")?;
        if !SUBCOMMANDS.contains(&sub) {
            return Err(format!("unknown subcommand {sub:?}"));
        }
        v["outcome"].as_str().ok_or("missing `outcome`")?;
        let report = v.get("report").filter(|r| r.is_object()).ok_or("missing `report` object")?;
        let required: &[&str] = match sub {
            "solve" => &["outcome", "certificate", "constant", "cap", "attempts"],
            "verify" => &["passed", "geometric_floor", "separation", "chain"],
            "duality" | "maurey" => &["certificate", "solve", "checks", "passed"],
            "constant" => &["constant", "estimate"],
            "rs" => &["properties", "passed"],
            "ftp" => &["rows", "median", "band", "bounded", "operator_bound"],
            "gallery" => &["kind", "verdict", "atoms"],
            _ => return Err(format!("{sub} reports are CSV")),
        };
        for key in required {
            if report.get(key).is_none() {
                return Err(format!("{sub} report lacks `{key}`"));
            }
        }
        return Ok(sub.to_string());
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("CSV lacks column `{name}`"));
    let sub_col = col("subcommand")?;
    let numeric = [col("estimate")?, col("stderr")?, col("samples")?, col("seed")?];
    let mut sub = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let s = rec.get(sub_col).unwrap_or_default();
        if !["khintchine", "stable", "type"].contains(&s) {
            return Err(format!("row {i}: unknown subcommand {s:?}"));
        }
        for &c in &numeric {
            let v = rec.get(c).unwrap_or_default();
            v.parse::<f64>().map_err(|_| format!("row {i}: {:?} is not a number", v))?;
        }
        sub = Some(s.to_string());
    }
    sub.ok_or_else(|| "CSV report has no rows".to_string())
}

/// Drops `--out` and `--manifest` so a rerun chooses its own destinations.
fn strip_destinations(argv: Vec<String>) -> Vec<String> {
    let mut kept = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" || a == "--manifest" {
            skip = true;
        } else if !(a.starts_with("--out=") || a.starts_with("--manifest=")) {
            kept.push(a);
        }
    }
    kept
}

fn configure_threads() -> usize {
    if let Some(n) = std::env::var("FACTORLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    rayon::current_num_threads()
}

fn parse(argv: &[String]) -> Result<Cli, ExitCode> {
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    let mut argv: Vec<String> = std::env::args().collect();
    let mut cli = match parse(&argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(path) = &cli.validate_report {
        return match validate_report(path) {
            Ok(sub) => {
                println!("valid {sub} report");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid report: {e}");
                ExitCode::from(1)
            }
        };
    }
    let Some(mut command) = cli.command.take() else {
        eprintln!("a subcommand is required; see `factorlab --help`");
        return ExitCode::from(1);
    };
    if let Command::Rerun(r) = &command {
        let (out, manifest) = (r.common.out.clone(), r.common.manifest.clone());
        let recorded: Result<Manifest, String> = fs::read_to_string(&r.from)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()));
        let recorded = match recorded {
            Ok(m) => m,
            Err(e) => {
                eprintln!("{}: {e}", r.from.display());
                return ExitCode::from(1);
            }
        };
        argv = recorded.argv;
        for (flag, value) in [("--out", out), ("--manifest", manifest)] {
            if let Some(v) = value {
                argv.push(flag.into());
                argv.push(v.display().to_string());
            }
        }
        command = match parse(&argv) {
            Ok(Cli { command: Some(c), .. }) if !matches!(c, Command::Rerun(_)) => c,
            Ok(_) => {
                eprintln!("manifest does not record a runnable subcommand");
                return ExitCode::from(1);
            }
            Err(code) => return code,
        };
    }
    let threads = configure_threads();
    let start = Instant::now();
    let c = common(&command).clone();
    let result = run(&command).and_then(|o| {
        let text = match &o.body {
            Body::Json(v) => format!("{}\n", serde_json::to_string_pretty(v)?),
            Body::Csv(s) => s.clone(),
        };
        emit(c.out.as_deref(), &text)?;
        Ok(o)
    });
    let (status, code) = match &result {
        Ok(o) => (o.status.to_string(), o.code),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ("error".to_string(), 1)
        }
    };
    let manifest = Manifest {
        subcommand: name(&command).into(),
        argv: strip_destinations(argv),
        parameters: serde_json::to_value(&command).unwrap_or(Value::Null),
        seed: c.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outcome: status,
        exit_code: code,
    };
    let text = serde_json::to_string(&manifest).expect("manifests serialise");
    match &c.manifest {
        Some(p) => {
            if let Err(Failure::Invalid(e)) = write(p, &format!("{text}\n")) {
                eprintln!("error: {e}");
            }
        }
        None => eprintln!("{text}"),
    }
    ExitCode::from(code)
}
