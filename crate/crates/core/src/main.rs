use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biot_dd::app::{check_finite, run_experiment, run_sweep};
use biot_dd::config::{ProblemConfig, RunConfig};
use biot_dd::schemes::SchemeKind;

/// Domain decomposition solvers for quasi-static Biot poroelasticity.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads for subdomain solves (default: all cores).
    #[arg(long, global = true, env = "BIOT_DD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration.
    Run(RunArgs),
    /// Run every combination listed in the config's [sweep] table and write table.csv.
    Sweep(RunArgs),
    /// Parse and validate a config without running it.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (overrides output.directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that replace config keys.
#[derive(Debug, Args)]
struct Overrides {
    /// solver.scheme
    #[arg(long)]
    scheme: Option<SchemeKind>,
    /// mesh.nx and mesh.ny
    #[arg(long)]
    cells: Option<usize>,
    /// mesh.px and mesh.py
    #[arg(long)]
    subdomains: Option<usize>,
    /// time.dt
    #[arg(long)]
    dt: Option<f64>,
    /// time.steps (clears time.final_time)
    #[arg(long)]
    steps: Option<usize>,
    /// solver.tol
    #[arg(long)]
    tol: Option<f64>,
    /// problem storativity
    #[arg(long)]
    storativity: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = self.scheme {
            c.solver.scheme = s;
        }
        if let Some(n) = self.cells {
            c.mesh.nx = n;
            c.mesh.ny = n;
        }
        if let Some(p) = self.subdomains {
            c.mesh.px = p;
            c.mesh.py = p;
        }
        if let Some(dt) = self.dt {
            c.time.dt = dt;
        }
        if let Some(n) = self.steps {
            c.time.steps = Some(n);
            c.time.final_time = None;
        }
        if let Some(t) = self.tol {
            c.solver.tol = t;
        }
        if let Some(c0) = self.storativity {
            match &mut c.problem {
                ProblemConfig::Manufactured(m) => m.storativity = c0,
                ProblemConfig::Heterogeneous(h) => h.storativity = c0,
            }
        }
    }
}

fn load(args: &RunArgs) -> biot_dd::Result<RunConfig> {
    let mut c = RunConfig::load(&args.config)?;
    args.overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn execute(cli: Cli) -> biot_dd::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| biot_dd::Error::Degenerate(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run(args) => {
            let c = load(&args)?;
            let r = run_experiment(&c, args.output.as_deref())?;
            println!("scheme {} h=1/{} subdomains {}x{} steps {}", r.scheme, r.n, r.subdomains, r.subdomains, r.summary.steps);
            for (p, v) in &r.summary.mean_iterations {
                println!("  {:<9} {v:.2} iterations/step", biot_dd::app::solver_name(*p));
            }
            if let Some(e) = r.errors {
                println!("  errors z {:.3e} p {:.3e} sigma {:.3e} u {:.3e}", e[0], e[1], e[2], e[3]);
            }
            println!("  stability ratio {:.4e}", r.summary.monitor.ratio(r.scheme));
        }
        Command::Sweep(args) => {
            let c = load(&args)?;
            let rows = run_sweep(&c, args.output.as_deref())?;
            check_finite(&rows)?;
            biot_dd::output::write_csv(std::io::stdout().lock(), &rows)?;
        }
        Command::ValidateConfig { config } => {
            let c = RunConfig::load(&config)?;
            println!("{}: ok, {} run(s)", config.display(), c.expand_sweep().len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
