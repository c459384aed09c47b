use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use ricci_lab_cli::output::default_root;
use ricci_lab_cli::suites::{run_config, RunOptions};
use ricci_lab_cli::{config, report, verify};

#[derive(Parser)]
#[command(name = "ricci-lab", version, about = "Runs and reports ricci-lab verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Output root; ./ricci-lab-out when neither the flag nor the variable is set.
    #[arg(long, env = "RICCI_LAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for independent seeds.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the first seed of seeded suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance, for coarse smoke runs.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

impl Common {
    fn root(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_root)
    }

    fn options(&self, coarsen: f64) -> RunOptions {
        RunOptions { jobs: self.jobs, seed: self.seed, tol_scale: self.tol_scale, coarsen }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the bundled acceptance configurations.
    Verify {
        /// all, oracle, green, gaussian, maxprin or convseq.
        #[arg(default_value = "all")]
        suite: String,
        /// Divide every grid resolution by this factor.
        #[arg(long, default_value_t = 1.0)]
        coarsen: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Render the results in a directory as text tables.
    Report { dir: PathBuf },
    /// Parse and validate a configuration without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, common } => {
            let text = config::read(&config)?;
            let outcome = run_config(&text, &common.root(), None, &common.options(1.0))?;
            println!("{}", outcome.dir.display());
            for c in &outcome.manifest.checks {
                println!(
                    "{:<6} {:<40} measured {:.6e}  required {}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.required
                );
            }
            Ok(outcome.manifest.pass)
        }
        Command::Verify { suite, coarsen, common } => {
            let done = verify::verify(&suite, &common.root(), &common.options(coarsen))?;
            print!("{}", verify::matrix(&done));
            let mut pass = true;
            for (name, o) in &done {
                for c in o.manifest.failures() {
                    pass = false;
                    eprintln!("{name}: {} measured {:.6e}, required {}", c.name, c.measured, c.required);
                }
            }
            Ok(pass)
        }
        Command::Report { dir } => {
            print!("{}", report::report(&dir)?);
            Ok(true)
        }
        Command::Check { config } => {
            let e = ricci_lab_cli::suites::check_config(&config::read(&config)?)?;
            println!("{} configuration is valid", e.name());
            Ok(true)
        }
    }
}
