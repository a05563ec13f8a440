use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use minresfem::config::parse_config;
use minresfem::experiment::{helmholtz_sweep, infsup_sweep, run_experiment};
use minresfem::{Error, Result};

/// Minimal-residual finite elements for the ultra-weak Poisson system.
#[derive(Parser)]
#[command(name = "minresfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement study and write its CSV trace.
    Run {
        config: PathBuf,
        /// Single-threaded, bit-reproducible execution.
        #[arg(long)]
        serial: bool,
        /// Directory for the CSV output (overrides the directory of `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inf-sup constants on uniformly refined meshes.
    Infsup { config: PathBuf },
    /// Check the discrete Helmholtz decomposition on a mesh sequence.
    Helmholtz { levels: usize },
}

fn configure_threads(serial: bool) -> Result<()> {
    let cap = match std::env::var("MINRESFEM_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "MINRESFEM_THREADS must be a positive integer, got `{v}`"
                    ))
                })?,
        ),
        Err(_) => None,
    };
    let threads = if serial { Some(1) } else { cap };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        if n == 1 {
            faer::set_global_parallelism(faer::Par::Seq);
        } else {
            faer::set_global_parallelism(faer::Par::rayon(n));
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<minresfem::config::ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run {
            config,
            serial,
            out: dir,
        } => {
            configure_threads(serial)?;
            let cfg = load_config(&config)?;
            let csv_path = match dir {
                Some(d) => d.join(cfg.output.file_name().unwrap_or(cfg.output.as_os_str())),
                None => cfg.output.clone(),
            };
            run_experiment(&cfg, &csv_path, &mut out)?;
            writeln!(out, "trace written to {}", csv_path.display())?;
        }
        Command::Infsup { config } => {
            configure_threads(false)?;
            let cfg = load_config(&config)?;
            writeln!(
                out,
                "{:>5} {:>8} {:>9} {:>9} {:>14}",
                "level", "ntri", "dofs_x", "dofs_y", "gamma_tilde"
            )?;
            infsup_sweep(&cfg, |r| {
                writeln!(
                    out,
                    "{:>5} {:>8} {:>9} {:>9} {:>14.8e}",
                    r.level, r.ntri, r.dofs_x, r.dofs_y, r.gamma_tilde
                )?;
                Ok(())
            })?;
        }
        Command::Helmholtz { levels } => {
            configure_threads(false)?;
            if levels == 0 {
                return Err(Error::Config("levels must be at least 1".into()));
            }
            writeln!(
                out,
                "{:>13} {:>6} {:>8} {:>9} {:>7} {:>11} {:>5}",
                "boundary", "ntri", "rt_div0", "grad_cr", "dg0^2", "max_cross", "ok"
            )?;
            let mut all_ok = true;
            for (name, r) in helmholtz_sweep(levels)? {
                let ok = r.dimensions_add_up() && r.max_cross_inner_product <= 1e-10;
                all_ok &= ok;
                writeln!(
                    out,
                    "{:>13} {:>6} {:>8} {:>9} {:>7} {:>11.3e} {:>5}",
                    name,
                    r.ntri,
                    r.dim_rt_div0,
                    r.dim_grad_cr,
                    r.dim_dg2,
                    r.max_cross_inner_product,
                    ok
                )?;
            }
            if !all_ok {
                return Err(Error::Numerical(
                    "discrete Helmholtz decomposition check failed".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
