use std::collections::{BTreeMap, BTreeSet};
use std::error::Error;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qobench::adapters::stub::{self, StubConfig, StubMode};
use qobench::adapters::{AdapterDescriptor, AdapterKind};
use qobench::dbms::{self, ConfigProfile, ConnectOptions, Session, DSN_ENV};
use qobench::hintlang::{classify_shape, render_hints, JoinMethod, ScanMethod, TreeShape};
use qobench::measurement::{successive_diffs, Pick, TimingPolicy};
use qobench::planspace::{self, EnumSpec, DEFAULT_MAX_RELATIONS};
use qobench::report::{self, CiOptions, Format, LagSummaryRow, Subset};
use qobench::runner::{self, AblationConfig, ForeignKey, RunOptions, RunReport, Toggle};
use qobench::splitter::{self, SplitMethod, SplitSpec, DEFAULT_RATIO, SHIPPED_SEEDS};
use qobench::workload::{load_workload, NamingConvention, Workload};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

/// Reproducible benchmarking harness for query optimizers.
#[derive(Parser)]
#[command(name = "qobench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a train/test split of a workload.
    Split(SplitArgs),
    /// Measure every query under one or more adapters.
    Run(RunArgs),
    /// Measure every query with and without a planner toggle.
    Ablate(AblateArgs),
    /// Enumerate join trees and physical plans as hint comments.
    Enumerate(EnumerateArgs),
    /// Print a covariate-shift mutation script.
    CovariateScript(CovariateArgs),
    /// Compare a configuration profile with the live server.
    VerifyConfig(VerifyArgs),
    /// Aggregate run reports into comparison tables.
    Report(ReportArgs),
    #[command(hide = true)]
    AdapterStub(StubArgs),
}

#[derive(Args)]
struct WorkloadArgs {
    /// Directory of `.sql` files, one query each.
    #[arg(long)]
    workload: PathBuf,
    /// Workload name; defaults to the directory name.
    #[arg(long)]
    name: Option<String>,
    /// How file names map to query ids: `job` or `template_dir`.
    #[arg(long, default_value = "job")]
    convention: NamingConvention,
}

impl WorkloadArgs {
    fn load(&self) -> Result<Workload> {
        let name = match &self.name {
            Some(n) => n.clone(),
            None => self
                .workload
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "workload".into()),
        };
        Ok(load_workload(&self.workload, &name, self.convention)?)
    }
}

#[derive(Args)]
struct DbArgs {
    /// Connection string; falls back to the QOBENCH_DSN environment variable.
    #[arg(long, env = DSN_ENV, hide_env_values = true)]
    dsn: String,
    /// Profile file; the framework profile when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Continue even if live settings differ from the profile.
    #[arg(long)]
    allow_mismatch: bool,
    /// Libraries to `LOAD` after connecting.
    #[arg(long = "load")]
    load: Vec<String>,
}

impl DbArgs {
    fn profile(&self) -> Result<ConfigProfile> {
        Ok(match &self.profile {
            Some(path) => ConfigProfile::load(path)?,
            None => ConfigProfile::framework(),
        })
    }

    fn connect(&self, profile: &ConfigProfile, timeout_ms: u64, load: Vec<String>) -> Result<Session> {
        let options = ConnectOptions {
            allow_mismatch: self.allow_mismatch,
            statement_timeout_ms: timeout_ms,
            load,
        };
        Ok(dbms::connect(&self.dsn, profile, &options)?)
    }
}

#[derive(Args)]
struct PolicyArgs {
    /// Repetitions per query.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Which repetition(s) to report: kth, mean or geomean.
    #[arg(long, default_value = "kth")]
    pick: Pick,
    /// Per-execution budget in milliseconds.
    #[arg(long, default_value_t = dbms::DEFAULT_STATEMENT_TIMEOUT_MS)]
    timeout_ms: u64,
}

impl PolicyArgs {
    fn policy(&self) -> TimingPolicy {
        TimingPolicy {
            k: self.k,
            pick: self.pick,
            timeout_ms: self.timeout_ms,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    LeaveOneOut,
    Random,
    BaseQuery,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, value_enum, default_value = "leave-one-out")]
    method: MethodArg,
    /// Held-out fraction for `random` and `base-query`.
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: f64,
    /// Seed, decimal or 0x-prefixed hex. Ignored with --shipped.
    #[arg(long, value_parser = parse_seed, default_value = "0x5EED0001")]
    seed: u64,
    /// Write the three shipped seeds of every method into --out as a directory.
    #[arg(long)]
    shipped: bool,
    /// Output file (or directory with --shipped).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Split file written by `qobench split`.
    #[arg(long)]
    split: PathBuf,
    /// `native`, `file:NAME=DIR` or `exec:NAME=COMMAND`; repeatable.
    #[arg(long = "adapter", default_value = "native")]
    adapters: Vec<AdapterDescriptor>,
    #[command(flatten)]
    db: DbArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Per-query budget for an adapter's answer, in seconds.
    #[arg(long, default_value_t = 900)]
    adapter_timeout_s: u64,
    /// Do not `LOAD 'pg_hint_plan'` when a hinting adapter is present.
    #[arg(long)]
    no_hint_extension: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// `scans_off` or `geqo_off`.
    #[arg(long)]
    toggle: Toggle,
    #[command(flatten)]
    db: DbArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Minimum absolute change of the arm means worth reporting.
    #[arg(long, default_value_t = runner::ablation::DEFAULT_DELTA_THRESHOLD_MS)]
    threshold_ms: f64,
    /// Sampled runs per arm.
    #[arg(long, default_value_t = runner::ablation::DEFAULT_REPEATS_PER_ARM)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Relation aliases, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    aliases: Vec<String>,
    /// Join methods to vary over, comma-separated.
    #[arg(long, value_delimiter = ',')]
    join_methods: Option<Vec<JoinMethod>>,
    /// Scan methods to vary over, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "fixed_scan")]
    scan_methods: Option<Vec<ScanMethod>>,
    /// Hold one relation's scan fixed, `alias=Method`; repeatable.
    #[arg(long = "fixed-scan", value_parser = parse_fixed_scan)]
    fixed_scan: Vec<(String, ScanMethod)>,
    /// Keep only these shapes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    shapes: Option<Vec<TreeShape>>,
    /// Join predicate between two aliases, `a-b`; repeatable.
    #[arg(long = "edge", value_parser = parse_edge)]
    edges: Vec<(String, String)>,
    /// Ignore --edge and allow joins without a predicate.
    #[arg(long)]
    allow_cross_joins: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_RELATIONS)]
    max_relations: usize,
    /// Output directory for `hints.txt` and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CovariateArgs {
    #[arg(long)]
    table: String,
    #[arg(long)]
    key: String,
    /// Fraction of rows kept, strictly between 0 and 1.
    #[arg(long)]
    keep: f64,
    /// Seed for the server's random generator, in [-1, 1].
    #[arg(long, allow_negative_numbers = true)]
    seed: f64,
    /// Dependent column `table.column` to delete explicitly; repeatable.
    #[arg(long = "fk")]
    fks: Vec<ForeignKey>,
    /// Write to a file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    db: DbArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Run report JSON files; repeatable.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    subset: Subset,
    /// Adapter the others are compared with; the first report's by default.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Also emit successive-execution differences up to this lag.
    #[arg(long)]
    diff_lags: Option<usize>,
    #[arg(long, value_parser = parse_seed, default_value_t = report::DEFAULT_CI_SEED)]
    ci_seed: u64,
    #[arg(long, default_value_t = report::DEFAULT_CI_RESAMPLES)]
    ci_resamples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StubArgs {
    #[arg(long, default_value = "fixed")]
    mode: StubMode,
    #[arg(long, default_value = "stub")]
    name: String,
    #[arg(long, default_value = "")]
    hints: String,
    #[arg(long = "setting", value_parser = parse_setting)]
    settings: Vec<(String, String)>,
    #[arg(long)]
    hang_on: Option<String>,
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => s.replace('_', "").parse(),
    };
    parsed.map_err(|e| format!("bad seed `{s}`: {e}"))
}

fn parse_fixed_scan(s: &str) -> std::result::Result<(String, ScanMethod), String> {
    let (alias, method) = s.split_once('=').ok_or_else(|| format!("expected alias=Method, got `{s}`"))?;
    Ok((alias.to_string(), method.parse().map_err(|e| format!("{e}"))?))
}

fn parse_edge(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('-') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected a-b, got `{s}`")),
    }
}

fn parse_setting(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Split(a) => split(a),
        Command::Run(a) => run(a),
        Command::Ablate(a) => ablate(a),
        Command::Enumerate(a) => enumerate(a),
        Command::CovariateScript(a) => covariate(a),
        Command::VerifyConfig(a) => verify(a),
        Command::Report(a) => report_cmd(a),
        Command::AdapterStub(a) => adapter_stub(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn method(arg: MethodArg, ratio: f64) -> SplitMethod {
    match arg {
        MethodArg::LeaveOneOut => SplitMethod::LeaveOneOut,
        MethodArg::Random => SplitMethod::Random { ratio },
        MethodArg::BaseQuery => SplitMethod::BaseQuery { ratio },
    }
}

fn describe_split(split: &SplitSpec) -> String {
    format!("{}: {} train, {} test", split.label(), split.train.len(), split.test.len())
}

fn split(a: SplitArgs) -> Result<ExitCode> {
    let workload = a.workload.load()?;
    if !a.shipped {
        let split = splitter::sample_split(&workload, method(a.method, a.ratio), a.seed)?;
        split.save(&a.out)?;
        println!("{}", describe_split(&split));
        return Ok(ExitCode::SUCCESS);
    }
    fs::create_dir_all(&a.out)?;
    for m in [MethodArg::LeaveOneOut, MethodArg::Random, MethodArg::BaseQuery] {
        for (i, seed) in SHIPPED_SEEDS.into_iter().enumerate() {
            let split = splitter::sample_split(&workload, method(m, a.ratio), seed)?;
            let path = a.out.join(format!("{}_{}.json", split.method.name(), i + 1));
            split.save(&path)?;
            println!("{} -> {}", describe_split(&split), path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let workload = a.workload.load()?;
    let split = SplitSpec::load(&a.split)?;
    let profile = a.db.profile()?;
    let mut load = a.db.load.clone();
    let hinting = a.adapters.iter().any(|d| d.kind != AdapterKind::Native);
    if hinting && !a.no_hint_extension && !load.iter().any(|l| l == "pg_hint_plan") {
        load.push("pg_hint_plan".into());
    }
    let mut session = a.db.connect(&profile, a.policy.timeout_ms, load)?;
    let options = RunOptions {
        policy: a.policy.policy(),
        adapter_timeout: Duration::from_secs(a.adapter_timeout_s),
    };
    let reports = runner::run_benchmark(&mut session, &workload, &split, &a.adapters, &profile, &options)?;
    fs::create_dir_all(&a.out)?;
    for r in &reports {
        write_file(&a.out.join(format!("run_{}.json", r.adapter)), &r.to_json())?;
        report::emit(&r.records, Format::Csv, &a.out.join(format!("records_{}.csv", r.adapter)))?;
        let failed = r.records.iter().filter(|x| x.timing.error.is_some()).count();
        let timed_out = r.records.iter().filter(|x| x.timing.timed_out).count();
        println!("{}: {} records, {timed_out} timed out, {failed} with errors", r.adapter, r.records.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate(a: AblateArgs) -> Result<ExitCode> {
    let workload = a.workload.load()?;
    let profile = a.db.profile()?;
    let mut session = a.db.connect(&profile, a.policy.timeout_ms, a.db.load.clone())?;
    let config = AblationConfig {
        delta_threshold_ms: a.threshold_ms,
        repeats_per_arm: a.repeats,
    };
    let r = runner::run_ablation(&mut session, &workload, a.toggle, &profile, &a.policy.policy(), &config)?;
    fs::create_dir_all(&a.out)?;
    let stem = format!("ablation_{}", a.toggle.name());
    write_file(&a.out.join(format!("{stem}.json")), &r.to_json())?;
    report::emit(&r.rows, Format::Csv, &a.out.join(format!("{stem}.csv")))?;
    let diff: Vec<String> = r.settings_diff.iter().map(|(n, b, t)| format!("{n}: {b} -> {t}")).collect();
    println!("settings changed: {}", diff.join(", "));
    println!(
        "{} queries, {} exceed {} ms, {} of those significant",
        r.rows.len(),
        r.exceeding(),
        a.threshold_ms,
        r.exceeding_and_significant()
    );
    Ok(ExitCode::SUCCESS)
}

fn enumerate(a: EnumerateArgs) -> Result<ExitCode> {
    let mut spec = EnumSpec::new(a.aliases.clone()).with_max_relations(a.max_relations);
    if let Some(m) = a.join_methods {
        spec = spec.with_join_methods(m);
    }
    if let Some(m) = a.scan_methods {
        spec = spec.with_scan_methods(m);
    }
    if !a.fixed_scan.is_empty() {
        spec = spec.with_fixed_scans(a.fixed_scan.into_iter().collect());
    }
    if let Some(shapes) = a.shapes {
        spec = spec.with_shapes(shapes);
    }
    if !a.edges.is_empty() && !a.allow_cross_joins {
        spec = spec.with_join_graph(a.edges);
    }

    fs::create_dir_all(&a.out)?;
    let mut hints = BufWriter::new(fs::File::create(a.out.join("hints.txt"))?);
    let mut trees_by_shape: BTreeMap<String, u64> = BTreeMap::new();
    let mut tree_count = 0u64;
    for order in planspace::enumerate_join_trees(&spec)? {
        tree_count += 1;
        let shape = order.shape().map_or("single", |s| s.name());
        *trees_by_shape.entry(shape.to_string()).or_default() += 1;
    }
    let mut plans_by_shape: BTreeMap<String, u64> = BTreeMap::new();
    let mut plan_count = 0u64;
    for plan in planspace::enumerate_physical(&spec)? {
        plan_count += 1;
        let shape = classify_shape(&plan).map_or("single", |s| s.name());
        *plans_by_shape.entry(shape.to_string()).or_default() += 1;
        writeln!(hints, "{}", render_hints(&plan)?)?;
    }
    hints.flush()?;

    let shapes: Option<BTreeSet<&str>> = spec.shape_filter.as_ref().map(|s| s.iter().map(|x| x.name()).collect());
    let manifest = serde_json::json!({
        "aliases": spec.aliases,
        "join_methods": spec.join_methods.iter().map(|m| m.keyword()).collect::<Vec<_>>(),
        "scan_mode": spec.scans.mode_name(),
        "scans": spec.scans,
        "shape_filter": shapes,
        "join_graph": spec.join_graph,
        "tree_count": tree_count,
        "plan_count": plan_count,
        "trees_by_shape": trees_by_shape,
        "plans_by_shape": plans_by_shape,
    });
    write_file(&a.out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    println!("{tree_count} join trees, {plan_count} physical plans");
    Ok(ExitCode::SUCCESS)
}

fn covariate(a: CovariateArgs) -> Result<ExitCode> {
    let script = runner::gen_covariate_script(&a.table, &a.key, a.keep, a.seed, &a.fks)?;
    match a.out {
        Some(path) => write_file(&path, &script)?,
        None => print!("{script}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let profile = a.db.profile()?;
    let client = dbms::PgClient::connect(&a.db.dsn).map_err(|e| dbms::DbmsError::ConnectionFailed(e.to_string()))?;
    let options = ConnectOptions {
        allow_mismatch: true,
        load: a.db.load.clone(),
        ..ConnectOptions::default()
    };
    let session = Session::open(client, &profile, &options)?;
    let mismatches = session.last_verification();
    if mismatches.is_empty() {
        println!("{}: all {} parameters match profile `{}`", session.identity(), profile.params.len(), profile.name);
        return Ok(ExitCode::SUCCESS);
    }
    for m in mismatches {
        println!("{}: expected {}, live {} ({:?} scope)", m.name, m.expected, m.actual, m.scope);
    }
    Ok(ExitCode::from(1))
}

fn report_cmd(a: ReportArgs) -> Result<ExitCode> {
    let mut reports = Vec::new();
    for path in &a.runs {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        reports.push(RunReport::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    let ci = CiOptions {
        resamples: a.ci_resamples,
        seed: a.ci_seed,
        ..CiOptions::default()
    };
    let rows = reports
        .iter()
        .map(|r| report::aggregate(r, a.subset, &ci))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let baseline = a.baseline.clone().unwrap_or_else(|| reports[0].adapter.clone());
    let table = report::compare(&rows, &baseline)?;
    fs::create_dir_all(&a.out)?;
    let ext = a.format.extension();
    report::emit(&rows, a.format, &a.out.join(format!("aggregate.{ext}")))?;
    report::emit(&table, a.format, &a.out.join(format!("comparison.{ext}")))?;
    if let Some(lags) = a.diff_lags {
        for r in &reports {
            let diffs = successive_diffs(&report::execution_series(r), lags)?;
            report::emit(&diffs.rows, a.format, &a.out.join(format!("diffs_{}.{ext}", r.adapter)))?;
            let summary = LagSummaryRow::from_diffs(&diffs);
            report::emit(&summary, a.format, &a.out.join(format!("lag_summary_{}.{ext}", r.adapter)))?;
        }
    }
    for row in &table {
        println!("{}. {} {:.3} ms ({})", row.rank, row.adapter, row.total_end_to_end_ms, row.factor);
        if row.failed_count > 0 {
            eprintln!("warning: {} has {} failed records excluded from its total", row.adapter, row.failed_count);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn adapter_stub(a: StubArgs) -> Result<ExitCode> {
    let config = StubConfig {
        name: a.name,
        mode: a.mode,
        hints: a.hints,
        settings: a.settings,
        hang_on: a.hang_on,
    };
    stub::serve(&config, io::stdin().lock(), io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}
