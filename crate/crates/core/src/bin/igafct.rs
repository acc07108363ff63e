use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use igafct::driver::{self, RunConfig};

/// Isogeometric FCT solver for the compressible Euler equations.
#[derive(Parser, Debug)]
#[command(name = "igafct", version)]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark preset: sod-square | sod-ubend.
    #[arg(long)]
    benchmark: Option<String>,
    /// galerkin | low-order | fct
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// Functions per direction, `N` or `NxM`.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tfinal: Option<f64>,
    /// Comma-separated list of density, pressure.
    #[arg(long = "control-vars")]
    control_vars: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print one line per step to stderr.
    #[arg(long)]
    verbose: bool,
}

fn resolve(cli: &Cli) -> igafct::Result<RunConfig> {
    let mut text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| igafct::Error::Io { path: path.clone(), source })?,
        None => String::new(),
    };
    if let Some(b) = &cli.benchmark {
        // the preset is applied first, keys of the file still override it
        text = text
            .lines()
            .filter(|l| l.split('#').next().unwrap_or("").split('=').next().unwrap_or("").trim() != "benchmark")
            .collect::<Vec<_>>()
            .join("\n");
        text.push_str(&format!("\nbenchmark = {b}\n"));
    }
    let mut cfg = RunConfig::parse(&text)?;
    let overrides = [
        ("scheme", cli.scheme.clone()),
        ("degree", cli.degree.map(|d| d.to_string())),
        ("n", cli.n.clone()),
        ("dt", cli.dt.map(|x| format!("{x:.16e}"))),
        ("t_final", cli.tfinal.map(|x| format!("{x:.16e}"))),
        ("control_vars", cli.control_vars.clone()),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if cli.n.is_some() {
        cfg.grid = cfg.n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let verbose = cli.verbose;
    let report = driver::run_config(&cfg, |d| {
        if verbose {
            eprintln!(
                "step {:6} t = {:.6} rho [{:.6}, {:.6}] p_min {:.6} alpha min {:.4} mean {:.4}",
                d.step, d.t, d.min_rho, d.max_rho, d.min_p, d.min_alpha, d.mean_alpha
            );
        }
    });
    match report {
        Ok(r) => {
            let out = cfg.output_dir.display();
            match r.cfl {
                (c0, Some(c1)) => println!("CFL number: initial {c0:.4}, final {c1:.4}"),
                (c0, None) => println!("CFL number: initial {c0:.4}"),
            }
            match &r.outcome.failure {
                None => {
                    let last = r.outcome.diagnostics.last();
                    println!(
                        "completed {} steps to t = {}; outputs in {out}",
                        r.outcome.diagnostics.len(),
                        last.map_or(0.0, |d| d.t)
                    );
                    if let Some(d) = last {
                        println!("min rho = {:.6e}, min p = {:.6e}, max rho = {:.6e}", d.min_rho, d.min_p, d.max_rho);
                    }
                    ExitCode::SUCCESS
                }
                Some((t, e)) => {
                    eprintln!("run aborted at t = {t}: {e}; see {out}/failure.txt");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
