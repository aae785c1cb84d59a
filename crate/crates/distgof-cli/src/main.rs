//! Command-line front end for the bootstrap goodness-of-fit tests.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or names),
//! 2 on runtime errors (I/O, fitting, bootstrap). Everything printed on
//! standard output is a `key=value` line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use distgof::{
    bootstrap_test, load_dataset_csv, load_recipe, rejection_study, write_ecdf_csv, write_json,
    write_rejection_csv, write_test_result_csv, BootstrapConfig, DgpName, DgpSpec, FamilyKind,
    FamilySpec, IcmSettings, SimulationReport, TestKind, TestResult,
};

#[derive(Parser)]
#[command(
    name = "distgof",
    version,
    about = "Bootstrap goodness-of-fit tests for parametric conditional distribution families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test one dataset against a parametric family.
    Test(TestArgs),
    /// Estimate rejection rates of the tests on a named data-generating process.
    Simulate(SimulateArgs),
    /// Flatten a JSON report into a plot-ready CSV table.
    Report(ReportArgs),
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Design recipe JSON naming the response and covariate terms.
    #[arg(long)]
    recipe: PathBuf,
    /// Null family name (e.g. gaussian_linear, poisson_glm, gamma_glm).
    #[arg(long)]
    family: String,
    /// Test statistic to bootstrap.
    #[arg(long, default_value = "new_ks")]
    test: String,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 200)]
    boot: usize,
    /// Master seed for the bootstrap streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated levels for the reported critical values.
    #[arg(long, default_value = "0.01,0.05")]
    levels: String,
    /// Where to write the test result JSON.
    #[arg(long, default_value = "test_result.json")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct SimulateArgs {
    /// Data-generating process name (C0..C4 continuous, D0..D4 counts).
    #[arg(long)]
    dgp: String,
    /// Null family; defaults to the family matching the process series.
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated test names, or "all".
    #[arg(long, default_value = "all")]
    tests: String,
    /// Sample size per repetition.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Study repetitions.
    #[arg(long, default_value_t = 300)]
    reps: usize,
    /// Bootstrap replications per repetition.
    #[arg(long, default_value_t = 200)]
    boot: usize,
    /// Master seed for the whole study.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated rejection levels.
    #[arg(long, default_value = "0.01,0.05")]
    levels: String,
    /// Where to write the report JSON; the rejection and ecdf CSVs land
    /// next to it as <stem>_rejection.csv and <stem>_ecdf.csv.
    #[arg(long, default_value = "simulation.json")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON produced by `simulate` or `test`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Table to emit for a simulation report; ignored for a test result.
    #[arg(long, default_value = "rejection", value_parser = ["rejection", "ecdf"])]
    table: String,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Tuning {
    /// Scale of the frequency window for the characteristic-function test.
    #[arg(long = "icm-c", default_value_t = 5.0)]
    icm_c: f64,
    /// Monte Carlo draws for the frequency integral.
    #[arg(long = "icm-draws", default_value_t = 128)]
    icm_draws: usize,
    /// Worker threads; 1 runs replications serially (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(msg) | Failure::Runtime(msg) => msg,
        }
    }
}

fn usage(flag: &str, why: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("invalid value for {flag}: {why}"))
}

fn runtime(err: distgof::Error) -> Failure {
    Failure::Runtime(err.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests land here too; they are not errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Test(args) => run_test(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Report(args) => run_report(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn parse_levels(raw: &str) -> Result<Vec<f64>, Failure> {
    let mut levels = Vec::new();
    for piece in raw.split(',') {
        let piece = piece.trim();
        let level: f64 = piece
            .parse()
            .map_err(|_| usage("--levels", format!("'{piece}' is not a number")))?;
        if !(level > 0.0 && level < 1.0) {
            return Err(usage("--levels", format!("level {level} is outside (0, 1)")));
        }
        levels.push(level);
    }
    Ok(levels)
}

fn parse_tests(raw: &str) -> Result<Vec<TestKind>, Failure> {
    if raw.eq_ignore_ascii_case("all") {
        return Ok(TestKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for piece in raw.split(',') {
        let kind: TestKind = piece.trim().parse().map_err(|e| usage("--tests", e))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(kinds)
}

/// Builds the bootstrap configuration shared by `test` and `simulate`.
fn build_config(
    boot: usize,
    seed: u64,
    levels: &[f64],
    tuning: &Tuning,
) -> Result<BootstrapConfig, Failure> {
    if boot == 0 {
        return Err(usage("--boot", "must be at least 1"));
    }
    if !(tuning.icm_c.is_finite() && tuning.icm_c > 0.0) {
        return Err(usage("--icm-c", "must be positive and finite"));
    }
    if tuning.icm_draws == 0 {
        return Err(usage("--icm-draws", "must be at least 1"));
    }
    let mut config = BootstrapConfig {
        replications: boot,
        master_seed: seed,
        levels: levels.to_vec(),
        icm: IcmSettings {
            c: tuning.icm_c,
            draws: tuning.icm_draws,
        },
        ..BootstrapConfig::default()
    };
    match tuning.threads {
        Some(0) => return Err(usage("--threads", "must be at least 1")),
        Some(1) => config.parallel = false,
        Some(n) => {
            // Sizes the global pool; failure means it is already sized.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        None => {}
    }
    Ok(config)
}

fn run_test(args: &TestArgs) -> Result<(), Failure> {
    let family: FamilyKind = args.family.parse().map_err(|e| usage("--family", e))?;
    let kind: TestKind = args.test.parse().map_err(|e| usage("--test", e))?;
    let levels = parse_levels(&args.levels)?;
    let config = build_config(args.boot, args.seed, &levels, &args.tuning)?;

    let recipe = load_recipe(&args.recipe).map_err(runtime)?;
    let data = load_dataset_csv(&args.data, &recipe).map_err(runtime)?;
    let spec = FamilySpec::canonical(family, data.p()).map_err(runtime)?;
    let result = bootstrap_test(kind, &spec, &data, &config).map_err(runtime)?;
    write_json(&result, &args.out).map_err(runtime)?;

    println!("test={}", kind.name());
    println!("family={}", family.name());
    println!("n={}", data.n());
    println!("statistic={}", result.statistic.value);
    println!("p_value={}", result.p_value);
    for &(level, critical) in &result.critical_values {
        println!("critical_value_{level}={critical}");
    }
    println!("failed_replications={}", result.failed_replications);
    println!("result={}", args.out.display());
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let dgp: DgpName = args.dgp.parse().map_err(|e| usage("--dgp", e))?;
    let null_family = match &args.family {
        Some(name) => {
            let kind: FamilyKind = name.parse().map_err(|e| usage("--family", e))?;
            // Every generated design is intercept plus one covariate.
            FamilySpec::canonical(kind, 2).map_err(runtime)?
        }
        None => dgp.null_family(),
    };
    let tests = parse_tests(&args.tests)?;
    let levels = parse_levels(&args.levels)?;
    if args.n < 2 {
        return Err(usage("--n", "must be at least 2"));
    }
    if args.reps == 0 {
        return Err(usage("--reps", "must be at least 1"));
    }
    let config = build_config(args.boot, args.seed, &levels, &args.tuning)?;

    let spec = DgpSpec::new(dgp, args.n).map_err(runtime)?;
    let report =
        rejection_study(&spec, &null_family, &tests, args.reps, &config, &levels).map_err(runtime)?;

    write_json(&report, &args.out).map_err(runtime)?;
    let rejection_path = sibling_csv(&args.out, "rejection");
    let ecdf_path = sibling_csv(&args.out, "ecdf");
    write_rejection_csv(&report, &rejection_path).map_err(runtime)?;
    write_ecdf_csv(&report, &ecdf_path).map_err(runtime)?;

    println!("dgp={dgp}");
    println!("family={}", report.null_family.kind.name());
    println!(
        "tests={}",
        tests.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")
    );
    println!("n={}", args.n);
    println!("repetitions={}", report.repetitions);
    println!("retried={}", report.retried);
    for (kind, summary) in &report.per_test {
        for &(level, rejection) in &summary.rejection_at {
            println!("rejection_{}_{level}={rejection}", kind.name());
        }
    }
    println!("report={}", args.out.display());
    println!("rejection_csv={}", rejection_path.display());
    println!("ecdf_csv={}", ecdf_path.display());
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", args.input.display())))?;
    if let Ok(report) = serde_json::from_str::<SimulationReport>(&text) {
        match args.table.as_str() {
            "rejection" => write_rejection_csv(&report, &args.out).map_err(runtime)?,
            _ => write_ecdf_csv(&report, &args.out).map_err(runtime)?,
        }
        println!("table={}", args.table);
    } else if let Ok(result) = serde_json::from_str::<TestResult>(&text) {
        write_test_result_csv(&result, &args.out).map_err(runtime)?;
        println!("table=test_result");
    } else {
        return Err(Failure::Runtime(format!(
            "{} is neither a simulation report nor a test result",
            args.input.display()
        )));
    }
    println!("csv={}", args.out.display());
    Ok(())
}

/// `sim.json` with suffix `rejection` becomes `sim_rejection.csv` alongside it.
fn sibling_csv(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = format!("{stem}_{suffix}.csv");
    match out.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent.join(name),
        _ => PathBuf::from(name),
    }
}
