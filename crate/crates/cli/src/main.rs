use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qcopf::convexir::SolveOptions;
use qcopf::envelopes::envelope_gap_experiment_on;
use qcopf::hullcheck::run_hull_check;
use qcopf::interval::Interval;
use qcopf::netdata::{case_name, evaluate_ac_point, parse_case, AcPoint, Network};
use qcopf::obbt::{self, bound_table_csv, gap_table_csv, BoundRow, GapRow, ObbtConfig};
use qcopf::par;
use qcopf::relax::{lower_bound, BoundState, RelaxationKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

mod manifest;
use manifest::RunManifest;

/// Env var that overrides the per-solve time limit, in seconds.
const TIME_LIMIT_ENV: &str = "QCOPF_TIME_LIMIT";
const DEFAULT_DATA_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/pglib");

#[derive(Parser, Debug)]
#[command(name = "qcopf", version, about = "QC relaxations and bound tightening for AC optimal power flow")]
struct Cli {
    /// TOML file with defaults for solver and OBBT settings (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory searched for `pglib_opf_<name>.m` when a case is given by name.
    #[arg(long, global = true, default_value = DEFAULT_DATA_DIR)]
    data_dir: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a MATPOWER case; print a summary (or the network as JSON).
    Parse {
        case: String,
        #[arg(long)]
        json: bool,
    },
    /// Solve one relaxation and report its lower bound and gap.
    Relax {
        case: String,
        #[arg(long, default_value = "tlm")]
        relaxation: String,
        /// AC objective used for the gap.
        #[arg(long)]
        ac_objective: Option<f64>,
        /// Bounds from a previous `obbt --out` report.
        #[arg(long)]
        bounds: Option<PathBuf>,
    },
    /// Optimization-based bound tightening of voltage magnitudes and angle differences.
    Obbt(ObbtArgs),
    /// Bound-quality table (average ranges and sign-fixed angle differences) per kind.
    BoundReport {
        cases: Vec<String>,
        #[arg(long, default_value = "rm,lm,tlm")]
        relaxations: String,
        #[command(flatten)]
        tune: Tuning,
        /// Cases processed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimality-gap table against known AC objectives, optionally after GO-OBBT.
    GapReport {
        cases: Vec<String>,
        #[arg(long, default_value = "rm,lm,tlm")]
        relaxations: String,
        /// JSON map from case name to AC objective.
        #[arg(long)]
        ac_objectives: PathBuf,
        #[arg(long)]
        obbt: bool,
        #[command(flatten)]
        tune: Tuning,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare support functions of the exact hull and the QC sets on random instances.
    HullCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 100)]
        directions: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample points and compare RM / LM / TLM gaps of a sum of trilinear terms.
    EnvelopeExperiment {
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long)]
        workers: Option<usize>,
        /// CSV destination; the JSON summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Tuning {
    #[arg(long)]
    min_width: Option<f64>,
    #[arg(long)]
    improve_tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    solve_tol: Option<f64>,
    /// Solver threads per OBBT run.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ObbtArgs {
    case: String,
    #[arg(long, default_value = "tlm")]
    relaxation: String,
    /// Objective of a known feasible point; enables the cost cut (GO-OBBT).
    #[arg(long, conflicts_with = "upper_bound_from_point")]
    upper_bound: Option<f64>,
    /// AC point JSON whose cost becomes the upper bound after a feasibility check.
    #[arg(long)]
    upper_bound_from_point: Option<PathBuf>,
    #[command(flatten)]
    tune: Tuning,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional config file; every field falls back to the library default.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    min_width: Option<f64>,
    improve_tol: Option<f64>,
    max_iterations: Option<usize>,
    solve_tol: Option<f64>,
    workers: Option<usize>,
    time_limit_secs: Option<f64>,
    feasibility_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    min_width: f64,
    improve_tol: f64,
    max_iterations: usize,
    solve_tol: f64,
    workers: usize,
    time_limit_secs: f64,
    feasibility_tol: f64,
}

impl Settings {
    fn resolve(file: &FileConfig, tune: &Tuning) -> Result<Self> {
        let d = ObbtConfig::default();
        let env_limit = match std::env::var(TIME_LIMIT_ENV) {
            Ok(s) => Some(s.trim().parse::<f64>().with_context(|| format!("{TIME_LIMIT_ENV}={s:?} is not a number"))?),
            Err(_) => None,
        };
        let s = Settings {
            min_width: tune.min_width.or(file.min_width).unwrap_or(d.min_bound_width),
            improve_tol: tune.improve_tol.or(file.improve_tol).unwrap_or(d.improvement_tol),
            max_iterations: tune.max_iterations.or(file.max_iterations).unwrap_or(d.max_iterations),
            solve_tol: tune.solve_tol.or(file.solve_tol).unwrap_or(d.solve_tol),
            workers: tune.workers.or(file.workers).unwrap_or(1),
            time_limit_secs: env_limit.or(file.time_limit_secs).unwrap_or(d.time_limit.as_secs_f64()),
            feasibility_tol: file.feasibility_tol.unwrap_or(1e-6),
        };
        if !(s.time_limit_secs > 0.0 && s.time_limit_secs.is_finite()) {
            bail!(UsageError("time limit must be a positive number of seconds".into()));
        }
        Ok(s)
    }

    fn obbt(&self, kind: RelaxationKind, upper_bound: Option<f64>) -> Result<ObbtConfig> {
        let cfg = ObbtConfig {
            kind,
            min_bound_width: self.min_width,
            improvement_tol: self.improve_tol,
            solve_tol: self.solve_tol,
            max_iterations: self.max_iterations,
            upper_bound,
            workers: self.workers,
            time_limit: Duration::from_secs_f64(self.time_limit_secs),
            ..Default::default()
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    fn solve(&self) -> SolveOptions {
        SolveOptions { tol: self.solve_tol, time_limit: Duration::from_secs_f64(self.time_limit_secs) }
    }
}

/// Bad input from the command line; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_kind(s: &str) -> Result<RelaxationKind> {
    s.parse::<RelaxationKind>().map_err(|e| usage(e.to_string()))
}

fn parse_kinds(s: &str) -> Result<Vec<RelaxationKind>> {
    let kinds = s.split(',').map(str::trim).filter(|k| !k.is_empty()).map(parse_kind).collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(usage("no relaxation kinds given"));
    }
    Ok(kinds)
}

fn resolve_case(data_dir: &Path, case: &str) -> Result<PathBuf> {
    let p = PathBuf::from(case);
    if p.is_file() {
        return Ok(p);
    }
    let by_name = data_dir.join(format!("pglib_opf_{case}.m"));
    if by_name.is_file() {
        return Ok(by_name);
    }
    // `case14_ieee_sad` style names map back to the double-underscore file names
    for suffix in ["_api", "_sad"] {
        if let Some(base) = case.strip_suffix(suffix) {
            let f = data_dir.join(format!("pglib_opf_{base}_{suffix}.m"));
            if f.is_file() {
                return Ok(f);
            }
        }
    }
    Err(usage(format!("case {case:?} is neither a file nor a case in {}", data_dir.display())))
}

fn load_case(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_case(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_manifest<T: Serialize>(manifest: &RunManifest, body: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        manifest: &'a RunManifest,
        #[serde(flatten)]
        body: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Doc { manifest, body })? + "\n")
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

struct Ctx {
    data_dir: PathBuf,
    file: FileConfig,
    argv: Vec<String>,
}

impl Ctx {
    fn manifest(&self, command: &str, cases: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> RunManifest {
        RunManifest::new(command, self.argv.clone(), cases, config, seed)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let ctx = Ctx { data_dir: cli.data_dir, file, argv: std::env::args().collect() };
    match cli.cmd {
        Command::Parse { case, json } => cmd_parse(&ctx, &case, json),
        Command::Relax { case, relaxation, ac_objective, bounds } => {
            cmd_relax(&ctx, &case, &relaxation, ac_objective, bounds.as_deref())
        }
        Command::Obbt(a) => cmd_obbt(&ctx, a),
        Command::BoundReport { cases, relaxations, tune, jobs, out } => {
            cmd_bound_report(&ctx, &cases, &relaxations, &tune, jobs, out.as_deref())
        }
        Command::GapReport { cases, relaxations, ac_objectives, obbt, tune, jobs, out } => {
            cmd_gap_report(&ctx, &cases, &relaxations, &ac_objectives, obbt, &tune, jobs, out.as_deref())
        }
        Command::HullCheck { instances, directions, seed, workers, out } => {
            cmd_hull_check(&ctx, instances, directions, seed, workers, out.as_deref())
        }
        Command::EnvelopeExperiment { samples, seed, lo, hi, workers, out } => {
            cmd_envelope_experiment(&ctx, samples, seed, lo, hi, workers, out.as_deref())
        }
    }
}

fn cmd_parse(ctx: &Ctx, case: &str, json: bool) -> Result<ExitCode> {
    let path = resolve_case(&ctx.data_dir, case)?;
    let net = load_case(&path)?;
    if json {
        println!("{}", net.to_json());
        return Ok(ExitCode::SUCCESS);
    }
    #[derive(Serialize)]
    struct Summary {
        case: String,
        name: String,
        buses: usize,
        generators: usize,
        branches: usize,
        bus_pairs: usize,
        base_mva: f64,
        connected: bool,
    }
    let s = Summary {
        case: case_name(&path),
        name: net.name.clone(),
        buses: net.buses.len(),
        generators: net.generators.len(),
        branches: net.branches.len(),
        bus_pairs: net.bus_pairs().len(),
        base_mva: net.base_mva,
        connected: net.is_connected(),
    };
    let m = ctx.manifest("parse", vec![path.display().to_string()], serde_json::Value::Null, None);
    print!("{}", with_manifest(&m, &s)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Deserialize)]
struct BoundsDoc {
    final_bounds: BoundState,
}

fn cmd_relax(ctx: &Ctx, case: &str, kind: &str, ac_objective: Option<f64>, bounds: Option<&Path>) -> Result<ExitCode> {
    let kind = parse_kind(kind)?;
    let settings = Settings::resolve(&ctx.file, &Tuning::default())?;
    let path = resolve_case(&ctx.data_dir, case)?;
    let net = load_case(&path)?;
    let b = match bounds {
        Some(p) => read_json::<BoundsDoc>(p)?.final_bounds,
        None => BoundState::from_network(&net),
    };
    let started = now_secs();
    let lb = lower_bound(&net, &b, kind, ac_objective.unwrap_or(f64::NAN), &settings.solve())?;
    #[derive(Serialize)]
    struct Out {
        case: String,
        relaxation: RelaxationKind,
        status: String,
        objective: Option<f64>,
        ac_objective: Option<f64>,
        gap_percent: Option<f64>,
        gap_percent_4dp: Option<f64>,
        solve_time: f64,
    }
    let o = Out {
        case: case_name(&path),
        relaxation: kind,
        status: format!("{:?}", lb.status),
        objective: lb.objective,
        ac_objective,
        gap_percent: lb.gap_percent.filter(|_| ac_objective.is_some()),
        gap_percent_4dp: lb.gap_percent.filter(|_| ac_objective.is_some()).map(round4),
        solve_time: lb.solve_time,
    };
    let mut m = ctx.manifest("relax", vec![path.display().to_string()], serde_json::to_value(&settings)?, None);
    m.finish(started, vec![lb.diagnostics]);
    print!("{}", with_manifest(&m, &o)?);
    Ok(if lb.objective.is_some() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn upper_bound_from_point(net: &Network, path: &Path, tol: f64) -> Result<f64> {
    let point: AcPoint = read_json(path)?;
    let res = evaluate_ac_point(net, &point);
    let viol = res.max_violation();
    if viol > tol {
        bail!(usage(format!("point {} is not AC-feasible (max violation {viol:.3e} > {tol:.0e})", path.display())));
    }
    Ok(res.objective)
}

fn cmd_obbt(ctx: &Ctx, a: ObbtArgs) -> Result<ExitCode> {
    let kind = parse_kind(&a.relaxation)?;
    let settings = Settings::resolve(&ctx.file, &a.tune)?;
    let path = resolve_case(&ctx.data_dir, &a.case)?;
    let net = load_case(&path)?;
    let ub = match (&a.upper_bound_from_point, a.upper_bound) {
        (Some(p), _) => Some(upper_bound_from_point(&net, p, settings.feasibility_tol)?),
        (None, ub) => ub,
    };
    let cfg = settings.obbt(kind, ub)?;
    let started = now_secs();
    let report = obbt::run(&net, &BoundState::from_network(&net), &cfg)?;
    let mut m = ctx.manifest("obbt", vec![path.display().to_string()], serde_json::to_value(&cfg)?, None);
    m.finish(started, report.diagnostics.clone());
    let text = with_manifest(&m, &report)?;
    eprintln!(
        "{} {kind}: vm {:.4} td {:.4} sign-fixed {} after {} iterations ({:?})",
        case_name(&path),
        report.metrics.avg_vm_range,
        report.metrics.avg_td_range,
        report.metrics.td_sign_fixed,
        report.iterations,
        report.termination
    );
    emit(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

/// CSV with the manifest as leading `#` comment lines.
fn csv_with_manifest(m: &RunManifest, csv: &str) -> Result<String> {
    let mut out = String::new();
    for line in serde_json::to_string_pretty(m)?.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(csv);
    Ok(out)
}

fn cmd_bound_report(
    ctx: &Ctx,
    cases: &[String],
    kinds: &str,
    tune: &Tuning,
    jobs: usize,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let kinds = parse_kinds(kinds)?;
    let settings = Settings::resolve(&ctx.file, tune)?;
    for k in &kinds {
        settings.obbt(*k, None)?;
    }
    let paths = cases.iter().map(|c| resolve_case(&ctx.data_dir, c)).collect::<Result<Vec<_>>>()?;
    let started = now_secs();
    let rows: Vec<(BoundRow, Vec<String>)> = par::map(paths.len(), jobs.max(1), |i| {
        let name = case_name(&paths[i]);
        let mut diags = Vec::new();
        let net = match load_case(&paths[i]) {
            Ok(n) => n,
            Err(e) => {
                diags.push(format!("{name}: {e:#}"));
                return (BoundRow { case: name, buses: 0, branches: 0, metrics: kinds.iter().map(|k| (*k, None)).collect() }, diags);
            }
        };
        let metrics = kinds
            .iter()
            .map(|&k| {
                let r = settings.obbt(k, None).map_err(|e| e.to_string()).and_then(|cfg| {
                    obbt::run(&net, &BoundState::from_network(&net), &cfg).map_err(|e| e.to_string())
                });
                match r {
                    Ok(rep) => (k, Some(rep.metrics)),
                    Err(e) => {
                        diags.push(format!("{name} {k}: {e}"));
                        (k, None)
                    }
                }
            })
            .collect();
        (BoundRow { case: name, buses: net.buses.len(), branches: net.branches.len(), metrics }, diags)
    });
    let failed = rows.iter().any(|(r, _)| r.metrics.iter().any(|(_, m)| m.is_none()));
    let (rows, diags): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut m = ctx.manifest(
        "bound-report",
        paths.iter().map(|p| p.display().to_string()).collect(),
        serde_json::to_value(&settings)?,
        None,
    );
    m.finish(started, diags.concat());
    emit(out, &csv_with_manifest(&m, &bound_table_csv(&kinds, &rows))?)?;
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

#[allow(clippy::too_many_arguments)]
fn cmd_gap_report(
    ctx: &Ctx,
    cases: &[String],
    kinds: &str,
    ac_objectives: &Path,
    with_obbt: bool,
    tune: &Tuning,
    jobs: usize,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let kinds = parse_kinds(kinds)?;
    let settings = Settings::resolve(&ctx.file, tune)?;
    let objectives: BTreeMap<String, f64> = read_json(ac_objectives)?;
    let paths = cases.iter().map(|c| resolve_case(&ctx.data_dir, c)).collect::<Result<Vec<_>>>()?;
    let started = now_secs();
    let rows: Vec<(GapRow, Vec<String>)> = par::map(paths.len(), jobs.max(1), |i| {
        let name = case_name(&paths[i]);
        let mut row = GapRow {
            case: name.clone(),
            buses: 0,
            branches: 0,
            ac_objective: objectives.get(&name).copied(),
            base: Vec::new(),
            obbt: Vec::new(),
            note: None,
        };
        let mut diags = Vec::new();
        let net = match load_case(&paths[i]) {
            Ok(n) => n,
            Err(e) => {
                row.note = Some(format!("{e:#}"));
                return (row, diags);
            }
        };
        row.buses = net.buses.len();
        row.branches = net.branches.len();
        let Some(f) = row.ac_objective else {
            row.note = Some("no AC objective; skipped".into());
            return (row, diags);
        };
        let init = BoundState::from_network(&net);
        for &k in &kinds {
            let gap = match lower_bound(&net, &init, k, f, &settings.solve()) {
                Ok(lb) => {
                    if lb.gap_percent.is_none() {
                        diags.push(format!("{name} {k} base: {:?} {}", lb.status, lb.diagnostics));
                    }
                    lb.gap_percent
                }
                Err(e) => {
                    diags.push(format!("{name} {k} base: {e}"));
                    None
                }
            };
            row.base.push((k, gap));
            if with_obbt {
                let gap = settings
                    .obbt(k, Some(f))
                    .map_err(|e| e.to_string())
                    .and_then(|cfg| obbt::run(&net, &init, &cfg).map_err(|e| e.to_string()))
                    .and_then(|rep| {
                        diags.extend(rep.diagnostics.iter().map(|d| format!("{name} {k}: {d}")));
                        lower_bound(&net, &rep.final_bounds, k, f, &settings.solve()).map_err(|e| e.to_string())
                    });
                let gap = match gap {
                    Ok(lb) => lb.gap_percent,
                    Err(e) => {
                        diags.push(format!("{name} {k} obbt: {e}"));
                        None
                    }
                };
                row.obbt.push((k, gap));
            }
        }
        (row, diags)
    });
    let failed = rows.iter().any(|(r, _)| r.ac_objective.is_some() && r.base.iter().chain(&r.obbt).any(|(_, g)| g.is_none()));
    let (rows, diags): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut m = ctx.manifest(
        "gap-report",
        paths.iter().map(|p| p.display().to_string()).collect(),
        serde_json::json!({ "settings": settings, "ac_objectives": ac_objectives.display().to_string(), "obbt": with_obbt }),
        None,
    );
    m.finish(started, diags.concat());
    emit(out, &csv_with_manifest(&m, &gap_table_csv(&kinds, with_obbt, &rows))?)?;
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn cmd_hull_check(
    ctx: &Ctx,
    instances: usize,
    directions: usize,
    seed: u64,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    if instances == 0 || directions == 0 {
        return Err(usage("instance and direction counts must be positive"));
    }
    let workers = workers.or(ctx.file.workers).unwrap_or(1).max(1);
    let started = now_secs();
    let report = run_hull_check(instances, directions, seed, workers);
    let mut m = ctx.manifest(
        "hull-check",
        Vec::new(),
        serde_json::json!({ "instances": instances, "directions": directions, "workers": workers }),
        Some(seed),
    );
    m.finish(started, report.violations.clone());
    emit(out, &with_manifest(&m, &report)?)?;
    eprintln!(
        "hull check: max discrepancy {:.3e}, max unlinked widening {:.4}, {} violations",
        report.max_discrepancy,
        report.max_unlinked_widening,
        report.violations.len()
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Serialize)]
struct ExperimentSummary {
    samples: usize,
    failures: usize,
    domain: Interval,
    tlm_dominance_violations: Vec<usize>,
    rm_below_lm: usize,
    lm_below_rm: usize,
    tlm_strictly_tightest: usize,
    csv: Option<String>,
}

fn cmd_envelope_experiment(
    ctx: &Ctx,
    samples: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    if samples == 0 {
        return Err(usage("sample count must be positive"));
    }
    let domain = Interval::new(lo, hi).map_err(|e| usage(format!("domain: {e}")))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(usage("domain must be a finite interval with lo < hi"));
    }
    let workers = workers.or(ctx.file.workers).unwrap_or(1).max(1);
    let started = now_secs();
    let table = envelope_gap_experiment_on(domain, samples, seed, workers);
    const EPS: f64 = 1e-8;
    let s = &table.samples;
    let summary = ExperimentSummary {
        samples: s.len(),
        failures: table.failures.len(),
        domain,
        tlm_dominance_violations: s
            .iter()
            .filter(|g| g.tlm_gap > g.rm_gap + EPS || g.tlm_gap > g.lm_gap + EPS)
            .map(|g| g.sample_id)
            .collect(),
        rm_below_lm: s.iter().filter(|g| g.rm_gap < g.lm_gap - EPS).count(),
        lm_below_rm: s.iter().filter(|g| g.lm_gap < g.rm_gap - EPS).count(),
        tlm_strictly_tightest: s.iter().filter(|g| g.tlm_gap < g.rm_gap.min(g.lm_gap) - EPS).count(),
        csv: out.map(|p| p.display().to_string()),
    };
    let mut m = ctx.manifest(
        "envelope-experiment",
        Vec::new(),
        serde_json::json!({ "samples": samples, "domain": [lo, hi], "workers": workers }),
        Some(seed),
    );
    m.finish(started, table.failures.iter().map(|f| format!("sample {}: {}", f.sample_id, f.reason)).collect());
    if let Some(p) = out {
        emit(Some(p), &csv_with_manifest(&m, &table.to_csv())?)?;
    }
    print!("{}", with_manifest(&m, &summary)?);
    let ok = summary.failures == 0 && summary.tlm_dominance_violations.is_empty();
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
