use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dldc::experiments::find;
use dldc::manifest::criterion;
use dldc::{registry, reproduce_all, run, Manifest, Result, RunConfig};

#[derive(Parser)]
#[command(name = "dldc", version, about = "Deep-learning discretized calculus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides such as `epochs=500` or `convergence.s=2`.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference stencils learned by a linear network (criteria 1, 2).
    Stencil(RunArgs),
    /// Forward Euler step as a trained network (criterion 3).
    Euler(RunArgs),
    /// Gauss-Legendre rules recovered by training (criterion 4).
    Quadrature(RunArgs),
    /// C-HiDeNN properties and convergence (criteria 5-7).
    Chidenn(RunArgs),
    /// Space-time FEM parameter identification (criteria 8-11).
    Stfem(RunArgs),
    /// Self-consistent clustering and the graph kernel network (criteria 12-14).
    Sca(RunArgs),
    /// Run every experiment twice at its defaults and tabulate all criteria.
    ReproduceAll {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the experiments and the criteria each one reports.
    List,
}

fn print_manifest(m: &Manifest) {
    for c in &m.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2} {}: {}", c.criterion, criterion(c.criterion).claim, c.detail());
    }
    println!("{} finished in {:.1}s", m.experiment, m.runtime_s);
}

fn run_one(name: &str, args: RunArgs) -> Result<bool> {
    let reg = registry();
    let exp = find(&reg, name)?;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(name, path)?,
        None => RunConfig::new(name),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for s in &args.set {
        cfg.set(s)?;
    }
    let manifest = run(exp, &cfg, args.out.as_deref())?;
    print_manifest(&manifest);
    Ok(manifest.passed)
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Stencil(a) => run_one("stencil", a),
        Command::Euler(a) => run_one("euler", a),
        Command::Quadrature(a) => run_one("quadrature", a),
        Command::Chidenn(a) => run_one("chidenn", a),
        Command::Stfem(a) => run_one("stfem", a),
        Command::Sca(a) => run_one("sca", a),
        Command::ReproduceAll { out, seed } => {
            let summary = reproduce_all(&registry(), &out, seed)?;
            print!("{}", summary.table());
            println!("total {:.1}s, summary in {}", summary.runtime_s, out.join("summary.json").display());
            Ok(summary.passed())
        }
        Command::List => {
            for e in registry() {
                println!("{:<12} criteria {:?}", e.name(), e.criteria());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
