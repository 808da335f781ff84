//! `gridplan` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 solver failure or
//! infeasible instance, 4 ADMM stopped without converging.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use gridplan::admm::{run_admm, AdmmConfig, Schedule};
use gridplan::central::solve_centralized;
use gridplan::reportio::{load_bundle, read_trace_summary, write_meta, write_results, RunMeta};
use gridplan::settlement::{audit_money, settle, SettlementReport};
use gridplan::{Error, MarketDesign, PlanningSolution, Scenario};

#[derive(Parser)]
#[command(name = "gridplan", version, about = "Generation and transmission planning under three market designs")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a scenario bundle.
    Validate { dir: PathBuf },
    /// Solve one market design and write the results.
    Solve {
        dir: PathBuf,
        /// Overrides the market named in the manifest.
        #[arg(long)]
        market: Option<MarketDesign>,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Solve several designs and tabulate their settlements side by side.
    Compare {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values = ["p2p", "pool", "mixed"])]
        markets: Vec<MarketDesign>,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Summarize the convergence trace of an ADMM run directory.
    Trace { run_dir: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Central,
    Admm,
}

#[derive(Args)]
struct SolveOpts {
    #[arg(long, value_enum, default_value = "central")]
    method: Method,
    /// ADMM penalty, applied to every price.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// ADMM tolerance on both residuals, relative to the energy scale.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    out: PathBuf,
}

impl SolveOpts {
    fn admm_config(&self) -> AdmmConfig {
        let mut cfg = AdmmConfig::default();
        if let Some(q) = self.q {
            cfg.q_trade = q;
            cfg.q_grid = q;
            cfg.q_pool = q;
            cfg.q_co2 = q;
        }
        if let Some(n) = self.max_iter {
            cfg.max_iter = n;
        }
        if let Some(e) = self.eps {
            cfg.eps_primal = e;
            cfg.eps_dual = e;
        }
        if let Some(s) = self.schedule {
            cfg.schedule = s;
        }
        cfg
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid(_) | Error::Data { .. } | Error::Io { .. } | Error::UnknownProsumer(_) => 2,
            Error::WrongMarket { .. } => 1,
            Error::Diverged(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn load(dir: &Path, market: Option<MarketDesign>) -> Result<Scenario, Failure> {
    let b = load_bundle(dir)?;
    let mut s = b.scenario;
    if let Some(m) = market {
        s.market = m;
    }
    if s.market == MarketDesign::Mixed && b.defaulted.contains(&"phi.csv") {
        warn!("no phi.csv in {}: using phi = 1 for every prosumer", dir.display());
    }
    Ok(s)
}

struct Run {
    solution: PlanningSolution,
    report: SettlementReport,
    converged: bool,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Solve `s`, write its files to `out` and return the run. Results are
/// written even when ADMM stops at the iteration limit.
fn solve_and_write(s: &Scenario, opts: &SolveOpts, out: &Path) -> Result<Run, Failure> {
    let start = Instant::now();
    let (solution, trace, iterations) = match opts.method {
        Method::Central => (solve_centralized(s)?, None, None),
        Method::Admm => {
            let o = run_admm(s, &opts.admm_config())?;
            if !o.converged {
                warn!("{}: ADMM stopped after {} iterations without converging", s.market, o.iterations);
            }
            let it = o.iterations;
            (o.solution, Some((o.trace, o.converged)), Some(it))
        }
    };
    let report = settle(s, &solution)?;
    for f in audit_money(&report) {
        warn!("{}: settlement audit: {}", s.market, f.message);
    }
    write_results(s, &solution, &report, trace.as_ref().map(|t| &t.0), out)?;
    let converged = trace.as_ref().is_none_or(|t| t.1);
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        method: match opts.method {
            Method::Central => "central",
            Method::Admm => "admm",
        }
        .to_string(),
        market: s.market,
        iterations,
        converged: trace.as_ref().map(|t| t.1),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        finished_unix: unix_now(),
    };
    write_meta(&meta, out)?;
    info!("{}: wrote results to {}", s.market, out.display());
    Ok(Run { solution, report, converged })
}

/// Fixed-point text with solver noise around zero printed as 0.
fn num(v: f64) -> String {
    let v = if v.abs() < 5e-9 { 0.0 } else { v };
    format!("{v:.6}")
}

fn not_converged() -> Failure {
    Failure { code: 4, message: "ADMM did not converge within the iteration limit".into() }
}

fn validate(dir: &Path) -> Result<(), Failure> {
    let s = load(dir, None)?;
    println!(
        "valid: {} prosumers, {} technologies, {} lines, {} time steps, market {}",
        s.num_prosumers(),
        s.technologies.len(),
        s.lines.len(),
        s.time_steps,
        s.market
    );
    Ok(())
}

fn solve(dir: &Path, market: Option<MarketDesign>, opts: &SolveOpts) -> Result<(), Failure> {
    let s = load(dir, market)?;
    let run = solve_and_write(&s, opts, &opts.out)?;
    println!("market {}", s.market);
    println!("objective {}", num(run.solution.objective));
    println!("emissions {}", num(run.solution.total_emissions()));
    if s.has_carbon_cap() {
        println!("carbon price {}", num(run.solution.prices.carbon_price));
    }
    if run.converged {
        Ok(())
    } else {
        Err(not_converged())
    }
}

fn compare(dir: &Path, markets: &[MarketDesign], opts: &SolveOpts) -> Result<(), Failure> {
    let base = load(dir, None)?;
    if markets.contains(&MarketDesign::Mixed) && base.market != MarketDesign::Mixed {
        // load() only warns for the manifest's own design
        load(dir, Some(MarketDesign::Mixed))?;
    }
    let mut runs = Vec::new();
    for &m in markets {
        let s = base.with_market(m);
        runs.push((m, solve_and_write(&s, opts, &opts.out.join(m.as_str()))?));
    }

    let mut header = vec!["agent".to_string()];
    header.extend(runs.iter().map(|(m, _)| m.to_string()));
    let mut rows: Vec<Vec<String>> = Vec::new();
    let cell = num;
    for (n, p) in base.prosumers.iter().enumerate() {
        let mut r = vec![p.id.clone()];
        r.extend(runs.iter().map(|(_, run)| cell(run.report.prosumers[n].total)));
        rows.push(r);
    }
    let mut push = |name: &str, f: &dyn Fn(&Run) -> f64| {
        let mut r = vec![name.to_string()];
        r.extend(runs.iter().map(|(_, run)| cell(f(run))));
        rows.push(r);
    };
    push("tso", &|r| r.report.tso.total);
    push("government", &|r| r.report.government.total);
    push("system", &|r| r.report.system_total);
    push("objective", &|r| r.solution.objective);

    let mut csv = header.join(",") + "\n";
    for r in &rows {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    let path = opts.out.join("comparison.csv");
    std::fs::write(&path, csv).map_err(|e| Failure::from(Error::Io { file: path.display().to_string(), source: e }))?;

    let width = rows.iter().chain([&header]).flatten().map(String::len).max().unwrap_or(8) + 2;
    let line = |r: &[String]| r.iter().map(|c| format!("{c:>width$}")).collect::<String>();
    println!("{}", line(&header));
    for r in &rows {
        println!("{}", line(r));
    }
    if runs.iter().all(|(_, r)| r.converged) {
        Ok(())
    } else {
        Err(not_converged())
    }
}

fn trace(run_dir: &Path) -> Result<(), Failure> {
    let path = run_dir.join("convergence.csv");
    if !path.is_file() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no convergence.csv (only ADMM runs have a trace)", run_dir.display()),
        });
    }
    let t = read_trace_summary(&path)?;
    println!("iterations {}", t.iterations);
    println!("final primal residual {:.3e}", t.primal);
    println!("final dual residual {:.3e}", t.dual);
    println!("best primal residual {:.3e}", t.best_primal);
    println!("final objective {}", num(t.objective));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();

    let result = match &cli.command {
        Command::Validate { dir } => validate(dir),
        Command::Solve { dir, market, opts } => solve(dir, *market, opts),
        Command::Compare { dir, markets, opts } => compare(dir, markets, opts),
        Command::Trace { run_dir } => trace(run_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
