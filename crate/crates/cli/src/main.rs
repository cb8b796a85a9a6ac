use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvflow_cli::{cache_mb_from_env, emit_plot_data, load_config, output_dir, run_scenario, RunOptions, ScenarioKind};

#[derive(Parser)]
#[command(name = "mvflow", version = mvflow_cli::VERSION, about = "McKean-Vlasov density, flow and PDE scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Treat numerical warnings as verification failures.
    #[arg(long)]
    verify_strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the config.
    Run(RunArgs),
    /// Transition density by the parametrix series.
    Density(RunArgs),
    /// Picard iteration on measure flows.
    Picard(RunArgs),
    /// Particle simulation or propagation-of-chaos study.
    Simulate(RunArgs),
    /// Cauchy problem on the Wasserstein space.
    Pde(RunArgs),
    /// Gaussian bound and derivative scaling checks.
    Verify(RunArgs),
    /// Flat/Lions derivative relation check.
    Lions(RunArgs),
    /// Write gnuplot data files for a finished run.
    Plot {
        /// Output directory of a run.
        dir: PathBuf,
    },
}

fn execute(command: Command) -> mvflow::Result<Option<bool>> {
    let (kind, args) = match command {
        Command::Plot { dir } => {
            for p in emit_plot_data(&dir)? {
                println!("{}", p.display());
            }
            return Ok(None);
        }
        Command::Run(a) => (None, a),
        Command::Density(a) => (Some(ScenarioKind::Density), a),
        Command::Picard(a) => (Some(ScenarioKind::Picard), a),
        Command::Simulate(a) => (Some(ScenarioKind::Simulate), a),
        Command::Pde(a) => (Some(ScenarioKind::Pde), a),
        Command::Verify(a) => (Some(ScenarioKind::Verify), a),
        Command::Lions(a) => (Some(ScenarioKind::Lions), a),
    };
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| mvflow::Error::Usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    let cfg = load_config(&args.config, kind, args.seed)?;
    let out = output_dir(&cfg, args.out.as_deref())?;
    let opts = RunOptions {
        verify_strict: args.verify_strict,
        cache_mb: cache_mb_from_env()?,
    };
    let manifest = run_scenario(&cfg, &out, &opts)?;
    for d in &manifest.diagnostics {
        eprintln!("warning: {d}");
    }
    for f in &manifest.files {
        println!("{}  {}", f.sha256, out.join(&f.path).display());
    }
    match manifest.verified {
        Some(true) => println!("verification: pass"),
        Some(false) => println!("verification: FAIL"),
        None => {}
    }
    Ok(manifest.verified)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Some(false)) => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
