//! `fdelab`: runs one experiment from a config file and writes its outputs.

mod config;
mod experiments;
mod output;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Lib(#[from] fdelab::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// 1 for anything the user can fix in the config, 2 for numerical failure.
    fn exit_code(&self) -> u8 {
        use fdelab::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Lib(E::InvalidParams(_) | E::InvalidGrid(_) | E::DegenerateConstant(_)) => 1,
            CliError::Lib(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fdelab", version, about = "Experiments on the rescaled fast diffusion equation")]
struct Cli {
    #[command(subcommand)]
    command: Kind,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Kind {
    /// Nonlinear flow from the [problem] datum: functionals, checks, decay fits.
    Simulate,
    /// Linearized flow: heat-kernel probe and linear entropy decay.
    Linear,
    /// Lowest eigenvalues of the linearized operator across [spectrum] r_list.
    Spectrum,
    /// Curvature of the conformal metric and the cigar embedding.
    Geometry,
    /// Gagliardo-Nirenberg, Hardy, log-Hardy and log-Sobolev experiments.
    Inequalities,
    /// Decay model per exponent in [compare] m_list.
    Compare,
    /// Good-times diagnostic on a nonlinear run.
    Goodtimes,
    /// Fast invariant suite on small grids.
    Selftest,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Linear => "linear",
            Kind::Spectrum => "spectrum",
            Kind::Geometry => "geometry",
            Kind::Inequalities => "inequalities",
            Kind::Compare => "compare",
            Kind::Goodtimes => "goodtimes",
            Kind::Selftest => "selftest",
        }
    }
}

/// Every flag below is shorthand for a `--set` of the named key.
#[derive(Args, Debug)]
struct Common {
    /// TOML config: [sections] of key = value lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override any key, e.g. --set grid.n=800 (repeatable; applied last).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// output.dir (default: $FDELAB_OUT/<subcommand>, else fdelab-out/<subcommand>).
    #[arg(short, long, global = true)]
    out: Option<String>,
    /// run.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// run.workers
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// problem.d
    #[arg(long, global = true)]
    d: Option<u32>,
    /// problem.m (a number or "critical")
    #[arg(long, global = true)]
    m: Option<String>,
    /// grid.r_max
    #[arg(long, global = true)]
    r_max: Option<f64>,
    /// grid.n
    #[arg(long, global = true)]
    n: Option<usize>,
    /// time.s_end
    #[arg(long, global = true)]
    s_end: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(x) = &self.out {
            o.push(format!("output.dir={}", toml_string(x)));
        }
        if let Some(x) = self.seed {
            o.push(format!("run.seed={x}"));
        }
        if let Some(x) = self.workers {
            o.push(format!("run.workers={x}"));
        }
        if let Some(x) = self.d {
            o.push(format!("problem.d={x}"));
        }
        if let Some(x) = &self.m {
            o.push(format!("problem.m={x}"));
        }
        if let Some(x) = self.r_max {
            o.push(format!("grid.r_max={x:e}"));
        }
        if let Some(x) = self.n {
            o.push(format!("grid.n={x}"));
        }
        if let Some(x) = self.s_end {
            o.push(format!("time.s_end={x:e}"));
        }
        o.extend(self.set.iter().cloned());
        o
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.into()).to_string()
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let text = match &cli.common.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let cfg = ExperimentConfig::load(text.as_deref(), &cli.common.overrides())?;
    let dir = output::resolve_dir(cfg.output.dir.as_deref(), cli.command.name());
    let (artifacts, ok) = match cli.command {
        Kind::Simulate => (experiments::simulate(&cfg)?, true),
        Kind::Linear => (experiments::linear(&cfg)?, true),
        Kind::Spectrum => (experiments::spectrum_sweep(&cfg)?, true),
        Kind::Geometry => (experiments::geometry(&cfg)?, true),
        Kind::Inequalities => (experiments::inequalities(&cfg)?, true),
        Kind::Compare => experiments::compare(&cfg)?,
        Kind::Goodtimes => (experiments::goodtimes(&cfg)?, true),
        Kind::Selftest => selftest::selftest()?,
    };
    output::write_all(&dir, &cfg.echo(), &artifacts)?;
    for line in &artifacts.report {
        println!("{line}");
    }
    println!("wrote {}", dir.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("fdelab: some rows or checks failed; see report.txt");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fdelab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
