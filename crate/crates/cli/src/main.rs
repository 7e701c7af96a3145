use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qjump_cli::commands;
use qjump_cli::verify::{self, Suite};

#[derive(Parser, Debug)]
#[command(name = "qjump", version, about = "Homodyne phonon-number measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the panels of a figure and write CSV and SVG files.
    Figure {
        /// Figure number, 1 to 4.
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        k: u8,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon in units of 1/(γN̄).
        #[arg(long)]
        t_final: Option<f64>,
        /// Filter window for the photocurrent; defaults to τ₁/10.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a check suite and print a JSON-lines report.
    Verify { suite: Suite },
    /// Laboratory feasibility of the two conditions, in SI units.
    #[command(allow_negative_numbers = true)]
    Feasibility {
        /// Bath temperature in kelvin.
        #[arg(long = "T")]
        temperature: f64,
        /// Mechanical quality factor.
        #[arg(long = "Q")]
        q: f64,
        /// Cavity decay rate, s⁻¹.
        #[arg(long)]
        kappa: f64,
        /// Effective coupling, s⁻¹.
        #[arg(long, required_unless_present = "g", conflicts_with_all = ["g", "alpha0"])]
        chi: Option<f64>,
        /// Bare quadratic coupling, s⁻¹.
        #[arg(long = "G", id = "g", requires = "alpha0")]
        g: Option<f64>,
        /// Intracavity amplitude.
        #[arg(long, requires = "g")]
        alpha0: Option<f64>,
    },
    /// Run an experiment described by a key = value file.
    Run {
        config: PathBuf,
        /// Override a key, e.g. --set seed=3.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Figure {
            k,
            seed,
            dt,
            t_final,
            window,
            out,
        } => commands::figure(k, seed, dt, t_final, window, &out),
        Command::Verify { suite } => verify::run(suite),
        Command::Feasibility {
            temperature,
            q,
            kappa,
            chi,
            g,
            alpha0,
        } => commands::feasibility(temperature, q, kappa, chi, g.zip(alpha0)),
        Command::Run { config, overrides } => commands::run(&config, &overrides),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
