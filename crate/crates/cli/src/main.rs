use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sosp_core::harness::{
    emit, run_experiment, scaling_study, verify, ExperimentConfig, OutputFormat, PARALLELISM_ENV,
};
use sosp_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_RUN: u8 = 2;
const EXIT_PROPERTY: u8 = 3;

/// Configuration problems surfacing at run time (such as unknown override keys) are usage errors.
fn failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_USAGE } else { EXIT_RUN })
}

#[derive(Parser)]
#[command(name = "sosp", version, about = "Run saddle-escape experiments and instance checks")]
#[command(after_help = format!("Default worker count comes from {PARALLELISM_ENV}."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file, or `-` for standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Band,
    Chain,
    Planted,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write one row per run.
    Run(RunArgs),
    /// Run a grid along one axis and fit the query-count exponent.
    Scaling(RunArgs),
    /// Run an instance family's property suite.
    VerifyInstance {
        #[arg(value_enum)]
        family: Family,
        #[arg(long, default_value_t = 16)]
        d: usize,
        /// Bump sharpness for the band family, replacing the default.
        #[arg(long)]
        scaled_mu: Option<f64>,
        /// Chain length.
        #[arg(long, default_value_t = 8)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate the chain potential in closed form against quadrature.
    GammaTable {
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = ExperimentConfig::from_path(&args.config).map_err(|e| {
        eprintln!("error: {}: {e}", args.config.display());
        ExitCode::from(EXIT_USAGE)
    })?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(f) = args.format {
        cfg.format = f.into();
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn run(args: RunArgs, scaling: bool) -> ExitCode {
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("-"));
    let rows = if scaling {
        match scaling_study(&cfg) {
            Ok(rep) => {
                for p in &rep.points {
                    eprintln!("x = {:>10}  queries = {:>14.1}  success = {:.2}", p.x, p.queries, p.success_rate);
                }
                eprintln!("exponent = {:.4}  r^2 = {:.4}", rep.fit.exponent, rep.fit.r_squared);
                rep.rows
            }
            Err(e) => return failure(&e),
        }
    } else {
        match run_experiment(&cfg) {
            Ok(rows) => rows,
            Err(e) => return failure(&e),
        }
    };
    match emit(&rows, &out, cfg.format) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN)
        }
    }
}

fn verify_instance(family: Family, d: usize, scaled_mu: Option<f64>, t: usize, seed: u64) -> ExitCode {
    let checks = match family {
        Family::Band => verify::verify_band(d, scaled_mu, seed),
        Family::Chain => verify::verify_chain(t, d, seed),
        Family::Planted => verify::verify_planted(d, seed),
    };
    let checks = match checks {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUN);
        }
    };
    for c in &checks {
        println!("{} {}{}", if c.passed { "ok  " } else { "FAIL" }, c.name, if c.detail.is_empty() {
            String::new()
        } else {
            format!(" ({})", c.detail)
        });
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    }
}

fn gamma_table(out: PathBuf, format: Format, points: usize) -> ExitCode {
    let rows = verify::gamma_table(points, -2.0, 2.0);
    let text = match format {
        Format::Csv => {
            let mut s = String::from("x,closed_form,quadrature,delta\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{:e}\n", r.x, r.closed_form, r.quadrature, r.delta));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&rows).expect("plain floats serialize") + "\n",
    };
    let written = if out.as_os_str() == "-" {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(&out, text)
    };
    match written {
        Ok(()) if rows.iter().all(|r| r.delta <= 1e-9) => ExitCode::SUCCESS,
        Ok(()) => ExitCode::from(EXIT_PROPERTY),
        Err(e) => {
            eprintln!("error: {}: {e}", out.display());
            ExitCode::from(EXIT_RUN)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run(args) => run(args, false),
        Command::Scaling(args) => run(args, true),
        Command::VerifyInstance { family, d, scaled_mu, t, seed } => verify_instance(family, d, scaled_mu, t, seed),
        Command::GammaTable { out, format, points } => gamma_table(out, format, points),
    }
}
