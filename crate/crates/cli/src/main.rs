use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use screening_core::config::{load_config, InstanceConfig};
use screening_core::export;
use screening_core::gap::classify_u_star;
use screening_core::mechanism::{deadline_for_promise, make_deadline_mechanism, payoff, TimeGrid};
use screening_core::smoothing::{build_sequence, verify_monster};
use screening_core::suite::{run_suite, Suite};
use screening_core::{Error, ExtReal, Result, VerificationReport};

/// Frontiers, deadline mechanisms and verification suites for breakthrough screening.
#[derive(Parser, Debug)]
#[command(name = "screening", version)]
struct Cli {
    /// Instance file (TOML); the built-in default instance when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count for every randomized suite.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Spacing of the promised-utility grid.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Truncation horizon of the time grid.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print peaks and the gap classification; write frontiers.csv.
    Frontier,
    /// Deadline delivering a promise, with its payoff under each distribution.
    SolveDeadline {
        #[arg(long)]
        promise: f64,
    },
    /// Run verification suites (`all` for every suite; the config's list when none given).
    Verify { suites: Vec<String> },
    /// Build and verify a smoothing sequence.
    Smooth {
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Write one kind of CSV.
    Export {
        what: ExportKind,
        /// Time-0 promise of the exported deadline mechanism (defaults to u0 / 2).
        #[arg(long)]
        promise: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportKind {
    Frontiers,
    Mechanism,
    Residuals,
    Smoothing,
    Distribution,
    Mixture,
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn load(cli: &Cli) -> Result<InstanceConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p).map_err(|e| match e {
            Error::Io(io) => config_error("--config", format!("{}: {io}", p.display())),
            e => e,
        })?,
        None => InstanceConfig::default_instance()?,
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.trials {
        if t == 0 {
            return Err(config_error("--trials", "must be positive"));
        }
        cfg.trials = Some(t);
    }
    if let Some(step) = cli.grid_step {
        if !(step > 0.0 && step.is_finite()) {
            return Err(config_error("--grid-step", format!("must be positive, got {step}")));
        }
        cfg.grid.u_step = step;
    }
    if let Some(h) = cli.horizon {
        let t = cfg.grid.time;
        cfg.grid.time = TimeGrid::new(h, t.step, t.r).map_err(|e| config_error("--horizon", e.to_string()))?;
    }
    Ok(cfg)
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn report(&self, report: &VerificationReport) -> Result<()> {
        print!("{report}");
        self.write(&format!("{}.json", report.suite), &report.to_json())
    }
}

fn deadline_for(promise: f64, cfg: &InstanceConfig) -> Result<ExtReal> {
    let u0 = cfg.technology.u0;
    if !(0.0..=u0).contains(&promise) {
        return Err(config_error("--promise", format!("must lie in [0, u0 = {u0}], got {promise}")));
    }
    deadline_for_promise(promise, &cfg.technology, &cfg.grid.time)
}

fn frontier(cfg: &InstanceConfig, out: &Output) -> Result<bool> {
    let t = &cfg.technology;
    println!("u0 = {}", t.u0);
    println!("u1 = {}", t.u1);
    println!("u* = {}", t.u_star);
    match classify_u_star(t) {
        Ok(c) => println!("u* classification: {:?}", c.kind),
        Err(Error::UStarAtOrigin) => println!("u* classification: not applicable (u* = 0)"),
        Err(e) => return Err(e),
    }
    out.write("frontiers.csv", &export::frontiers_csv(t, &cfg.grid.u_points(t.u0)))?;
    Ok(true)
}

fn solve_deadline(cfg: &InstanceConfig, promise: f64, out: &Output) -> Result<bool> {
    let t = &cfg.technology;
    let grid = &cfg.grid.time;
    let deadline = deadline_for(promise, cfg)?;
    let m = make_deadline_mechanism(deadline, t, grid);
    match deadline {
        ExtReal::Finite(d) => println!("deadline T = {d}"),
        _ => println!("deadline T = inf"),
    }
    println!("{:<16} payoff", "distribution");
    for d in &cfg.distributions {
        println!("{:<16} {}", d.name, payoff(&m, t, &d.dist)?);
    }
    out.write("mechanism.csv", &export::mechanism_csv(&m, &grid.points()))?;
    Ok(true)
}

fn verify(cfg: &InstanceConfig, names: &[String], out: &Output) -> Result<bool> {
    let suites: Vec<Suite> = if names.iter().any(|n| n == "all") || (names.is_empty() && cfg.suites.is_empty()) {
        Suite::ALL.to_vec()
    } else if names.is_empty() {
        cfg.suites.clone()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_>>()?
    };
    let mut passed = true;
    for suite in suites {
        let outcome = run_suite(cfg, suite)?;
        out.report(&outcome.report)?;
        for (name, body) in &outcome.artifacts {
            out.write(name, body)?;
        }
        passed &= outcome.report.passed();
    }
    Ok(passed)
}

fn smooth(cfg: &InstanceConfig, ns: Option<&[usize]>, out: &Output) -> Result<bool> {
    let ns = ns.unwrap_or(&cfg.smoothing_n);
    if ns.contains(&0) {
        return Err(config_error("--n-list", "entries must be positive"));
    }
    let t = &cfg.technology;
    let seq = build_sequence(t, ns)?;
    let report = verify_monster(t, &seq);
    out.report(&report)?;
    let grid = cfg.grid.u_points(t.u0);
    for p in &seq {
        out.write(&format!("smoothing_n{}.csv", p.params.n), &export::smoothing_csv(p, &grid))?;
    }
    Ok(report.passed())
}

fn export_kind(cfg: &InstanceConfig, what: ExportKind, promise: Option<f64>, out: &Output) -> Result<bool> {
    let t = &cfg.technology;
    match what {
        ExportKind::Frontiers => out.write("frontiers.csv", &export::frontiers_csv(t, &cfg.grid.u_points(t.u0)))?,
        ExportKind::Mechanism => {
            let grid = &cfg.grid.time;
            let d = deadline_for(promise.unwrap_or(0.5 * t.u0), cfg)?;
            out.write("mechanism.csv", &export::mechanism_csv(&make_deadline_mechanism(d, t, grid), &grid.points()))?;
        }
        ExportKind::Residuals => {
            let outcome = run_suite(cfg, Suite::Euler)?;
            for (name, body) in outcome.artifacts {
                out.write(&name, &body)?;
            }
        }
        ExportKind::Smoothing => {
            let grid = cfg.grid.u_points(t.u0);
            for p in build_sequence(t, &cfg.smoothing_n)? {
                out.write(&format!("smoothing_n{}.csv", p.params.n), &export::smoothing_csv(&p, &grid))?;
            }
        }
        ExportKind::Distribution => {
            for d in &cfg.distributions {
                out.write(&format!("distribution_{}.csv", d.name), &export::distribution_csv(&d.dist))?;
            }
        }
        ExportKind::Mixture => {
            let Some((dist, opts)) = &cfg.mixture else {
                return Err(config_error("mixture", "no [mixture] section in the config"));
            };
            let top = cfg.grid.u_max.unwrap_or(t.u0);
            out.write("mixture.csv", &export::mixture_csv(dist, *opts, &cfg.grid.u_points(top))?)?;
        }
    }
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    let out = Output { dir: cfg.output_dir.clone() };
    match &cli.command {
        Command::Frontier => frontier(&cfg, &out),
        Command::SolveDeadline { promise } => solve_deadline(&cfg, *promise, &out),
        Command::Verify { suites } => verify(&cfg, suites, &out),
        Command::Smooth { n_list } => smooth(&cfg, n_list.as_deref(), &out),
        Command::Export { what, promise } => export_kind(&cfg, *what, *promise, &out),
    }
}

fn exit_code(result: &Result<bool>) -> u8 {
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) if e.is_config_error() => 2,
        Err(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
        if let (Error::Parse { .. }, Some(p)) = (e, &cli.config) {
            eprintln!("  in {}", p.display());
        }
    }
    ExitCode::from(exit_code(&result))
}
