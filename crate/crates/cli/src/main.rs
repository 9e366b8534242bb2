use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixclt::checks::{checks_csv, fmt17, CheckOutcome};
use mixclt::clt::{run_experiment, ExperimentConfig};
use mixclt::coefficients::coefficient_report;
use mixclt::families::{builtin_finite_families, Family};
use mixclt::moments::{moment_report, MomentOptions, P_ORDERS};
use mixclt::suite::{run_selftest, verify_with, CheckGroup, GroupOutcome, SELFTEST_SEED};
use mixclt::{ChainSpec, Error, Tolerances};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "mixclt", version, about = "Mixing coefficients, variance bounds and CLT experiments for finite Markov chain arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    out: Format,

    /// Directory for report files; without it reports go to stdout
    #[arg(long, env = "MIXCLT_OUT_DIR", global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Relative slack for inequality checks; a negative value demands that
    /// much room instead
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol_rel: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Plot,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximal-correlation and contraction coefficients of one row
    Coeffs(RowArgs),
    /// Exact variance, oracles and moment quantities of one row
    Variance(VarianceArgs),
    /// Run the inequality suite on one row
    Verify(VerifyArgs),
    /// Monte-Carlo normality experiment over an n grid
    Clt(CltArgs),
    /// List or describe the built-in families
    Family {
        #[command(subcommand)]
        action: FamilyAction,
    },
    /// Verify the seeded randomized corpus
    Selftest {
        #[arg(long, default_value_t = SELFTEST_SEED)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct RowArgs {
    /// Chain spec file (JSON)
    #[arg(long, conflicts_with = "family", required_unless_present = "family")]
    spec: Option<PathBuf>,
    /// Family descriptor, e.g. two-state:a=0.5/n
    #[arg(long)]
    family: Option<String>,
    /// Value bound to the symbol `c` in family descriptors
    #[arg(long)]
    c: Option<f64>,
    /// Row length when using --family
    #[arg(long, requires = "family")]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct VarianceArgs {
    #[command(flatten)]
    row: RowArgs,
    /// Moment orders for E|A|^p, comma-separated
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    row: RowArgs,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Check groups, comma-separated, or `all`
    #[arg(long, default_value = "all")]
    checks: String,
}

#[derive(Args, Debug)]
struct CltArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    c: Option<f64>,
    /// Row lengths, comma-separated and strictly increasing
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20_000)]
    replicates: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Lindeberg ε sweep
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum FamilyAction {
    List,
    Describe {
        descriptor: String,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        n: Vec<usize>,
    },
}

/// A finished report: named files plus whether any check failed.
struct Report {
    stem: String,
    files: Vec<(String, String)>,
    failed: bool,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DominationFailed { .. } => Failure::Check(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn tolerances(cli: &Cli) -> Result<Tolerances, Failure> {
    match cli.tol_rel {
        None => Ok(Tolerances::default()),
        Some(t) if t.is_finite() => Ok(Tolerances::with_rel(t)),
        Some(t) => Err(Failure::Usage(format!("--tol-rel must be finite, got {t}"))),
    }
}

fn load_row(args: &RowArgs) -> Result<ChainSpec, Failure> {
    if let Some(path) = &args.spec {
        return Ok(ChainSpec::load(path)?);
    }
    let descriptor = args.family.as_deref().expect("clap enforces --spec or --family");
    let n = args
        .n
        .ok_or_else(|| Failure::Usage("--family needs a single row length via --n".into()))?;
    Ok(Family::parse(descriptor, args.c)?.spec(n)?)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn coeffs(cli: &Cli, args: &RowArgs) -> Result<Report, Failure> {
    let spec = load_row(args)?;
    let report = coefficient_report(&spec, &tolerances(cli)?)?;
    let failed = report.checks.iter().any(CheckOutcome::failed);
    let files = match cli.out {
        Format::Json => vec![("coeffs.json".into(), json(&report)?)],
        Format::Csv => vec![
            ("coeffs.csv".into(), report.to_csv()),
            ("coeffs_checks.csv".into(), checks_csv(&report.checks)),
        ],
        Format::Plot => {
            let mut body = String::from("# k rho_k rho1^k\n");
            for (i, r) in report.rho_k.iter().enumerate() {
                body.push_str(&format!("{} {} {}\n", i + 1, fmt17(*r), fmt17(report.rho1.powi(i as i32 + 1))));
            }
            vec![("rho_k.dat".into(), body)]
        }
    };
    Ok(Report {
        stem: "coeffs".into(),
        files,
        failed,
    })
}

fn variance(cli: &Cli, args: &VarianceArgs) -> Result<Report, Failure> {
    let spec = load_row(&args.row)?;
    let opts = MomentOptions {
        p_orders: args.p.clone().unwrap_or_else(|| P_ORDERS.to_vec()),
        tol: tolerances(cli)?,
        ..MomentOptions::default()
    };
    let report = moment_report(&spec, &opts)?;
    let failed = report.bound_checks.iter().any(CheckOutcome::failed);
    let files = match cli.out {
        Format::Json => vec![("variance.json".into(), json(&report)?)],
        Format::Csv | Format::Plot => {
            let mut q = String::from("quantity,value\n");
            let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt17);
            for (name, value) in [
                ("b2", fmt17(report.b2)),
                ("sigma2", fmt17(report.sigma2)),
                ("sigma2_oracle", fmt17(report.sigma2_oracle)),
                ("sigma2_enumerated", opt(report.sigma2_enumerated)),
                ("martingale_residual", fmt17(report.mart_residual)),
                ("pathwise_residual", opt(report.pathwise_residual)),
                ("rho1", fmt17(report.rho1)),
                ("delta1", fmt17(report.delta1)),
            ] {
                q.push_str(&format!("{name},{value}\n"));
            }
            for a in &report.ea_p {
                q.push_str(&format!("ea_p[p={}],{}\n", a.p, fmt17(a.value)));
            }
            vec![
                ("variance.csv".into(), q),
                ("variance_checks.csv".into(), checks_csv(&report.bound_checks)),
            ]
        }
    };
    Ok(Report {
        stem: "variance".into(),
        files,
        failed,
    })
}

#[derive(serde::Serialize)]
struct VerifyOutput<'a> {
    spec: Option<&'a str>,
    n: usize,
    m: usize,
    passed: bool,
    groups: &'a [GroupOutcome],
}

fn verify_cmd(cli: &Cli, args: &VerifyArgs) -> Result<Report, Failure> {
    let spec = load_row(&args.row)?;
    let groups = CheckGroup::parse_list(&args.checks)?;
    let p = args.p.clone().unwrap_or_else(|| P_ORDERS.to_vec());
    let outcomes = verify_with(&spec, &groups, &p, &tolerances(cli)?)?;
    let failed = outcomes.iter().flat_map(|g| &g.checks).any(CheckOutcome::failed);
    let files = match cli.out {
        Format::Json => vec![(
            "verify.json".into(),
            json(&VerifyOutput {
                spec: spec.name.as_deref(),
                n: spec.n,
                m: spec.m,
                passed: !failed,
                groups: &outcomes,
            })?,
        )],
        Format::Csv | Format::Plot => {
            let all: Vec<CheckOutcome> = outcomes.iter().flat_map(|g| g.checks.clone()).collect();
            vec![("verify.csv".into(), checks_csv(&all))]
        }
    };
    Ok(Report {
        stem: "verify".into(),
        files,
        failed,
    })
}

fn clt(cli: &Cli, args: &CltArgs) -> Result<Report, Failure> {
    let family = Family::parse(&args.family, args.c)?;
    let mut cfg = ExperimentConfig::new(args.n.clone(), args.replicates, args.seed);
    if let Some(eps) = &args.eps {
        cfg.eps = eps.clone();
    }
    let result = run_experiment(&family, &cfg)?;
    for row in result.rows.iter().filter(|r| !r.errors.is_empty()) {
        eprintln!("warning: n = {}: {}", row.n, row.errors.join("; "));
    }
    let files = match cli.out {
        Format::Json => vec![("clt.json".into(), result.to_json()?)],
        Format::Csv => vec![("clt.csv".into(), result.to_csv())],
        Format::Plot => result.plot_files(),
    };
    Ok(Report {
        stem: "clt".into(),
        files,
        failed: false,
    })
}

fn family_cmd(cli: &Cli, action: &FamilyAction) -> Result<Report, Failure> {
    match action {
        FamilyAction::List => {
            let mut body = String::from(
                "iid:m=M                         independent uniform states, f centered\n\
                 two-state:a=RATE                symmetric flip chain; RATE = c | c/n | c*n^(-g)\n\
                 degenerate:c=C                  two-state with a_n = min(1/2, C/n)\n\
                 random:m=M,seed=S,floor=F       seeded positive rows with rho_1 <= 1 - F\n\
                 gaussian-ar1:phi=P,f=OBS        stationary AR(1); OBS = identity | clip(L)\n\
                 \nfinite built-ins used by selftest:\n",
            );
            for fam in builtin_finite_families() {
                body.push_str(&format!("  {}\n", fam.descriptor()));
            }
            Ok(Report {
                stem: "family".into(),
                files: vec![("family.txt".into(), body)],
                failed: false,
            })
        }
        FamilyAction::Describe { descriptor, c, n } => {
            let family = Family::parse(descriptor, *c)?;
            let rows: Vec<serde_json::Value> = n
                .iter()
                .map(|&n| serde_json::json!({ "n": n, "analytic": family.analytic(n) }))
                .collect();
            let value = serde_json::json!({
                "descriptor": family.descriptor(),
                "params": family,
                "finite": family.is_finite(),
                "rows": rows,
            });
            let files = match cli.out {
                Format::Json => vec![("family.json".into(), json(&value)?)],
                Format::Csv | Format::Plot => {
                    let mut body = String::from("n,rho1,lambda,delta1,sigma2,b2\n");
                    for &n in n {
                        if let Some(a) = family.analytic(n) {
                            let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt17);
                            body.push_str(&format!(
                                "{n},{},{},{},{},{}\n",
                                fmt17(a.rho1),
                                fmt17(a.lambda),
                                fmt17(a.delta1),
                                opt(a.sigma2),
                                opt(a.b2)
                            ));
                        }
                    }
                    vec![("family.csv".into(), body)]
                }
            };
            Ok(Report {
                stem: "family".into(),
                files,
                failed: false,
            })
        }
    }
}

fn selftest(cli: &Cli, seed: u64) -> Result<Report, Failure> {
    let report = run_selftest(seed, &tolerances(cli)?)?;
    for f in &report.failures {
        eprintln!("FAIL {}/{} {}: {} (lhs {}, rhs {})", f.corpus, f.spec, f.group, f.check.name, f.check.lhs, f.check.rhs);
    }
    for e in &report.errors {
        eprintln!("ERROR {e}");
    }
    let files = match cli.out {
        Format::Json => vec![("selftest.json".into(), report.to_json()?)],
        Format::Csv | Format::Plot => vec![("selftest.csv".into(), report.to_csv())],
    };
    Ok(Report {
        stem: "selftest".into(),
        failed: !report.passed(),
        files,
    })
}

fn emit(report: &Report, out_dir: Option<&Path>) -> Result<(), Failure> {
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            for (name, body) in &report.files {
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            let many = report.files.len() > 1;
            let mut out = std::io::stdout().lock();
            let written = report.files.iter().try_for_each(|(name, body)| {
                if many {
                    writeln!(out, "# {name}")?;
                }
                out.write_all(body.as_bytes())
            });
            match written.and_then(|()| out.flush()) {
                // a closed reader (e.g. `| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Failure::Usage(format!("stdout: {e}")));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let report = match &cli.command {
        Command::Coeffs(a) => coeffs(cli, a)?,
        Command::Variance(a) => variance(cli, a)?,
        Command::Verify(a) => verify_cmd(cli, a)?,
        Command::Clt(a) => clt(cli, a)?,
        Command::Family { action } => family_cmd(cli, action)?,
        Command::Selftest { seed } => selftest(cli, *seed)?,
    };
    emit(&report, cli.out_dir.as_deref())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(r) if r.failed => {
            eprintln!("{}: one or more checks failed", r.stem);
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
