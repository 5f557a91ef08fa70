use boltzgrad::harness::{emit_results, run_experiment, AlphaSpec, Experiment, ExperimentConfig, Format, Status};
use boltzgrad::BoltzError;
use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Jsonl,
    Both,
}

/// Run a convergence experiment, or `list` the available ones.
#[derive(Debug, Parser)]
#[command(name = "boltzgrad", version)]
struct Cli {
    /// Experiment name, or `list`.
    experiment: String,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Monte Carlo seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    format: OutputFormat,
}

fn run(cli: Cli) -> Result<bool, BoltzError> {
    if cli.experiment == "list" {
        for e in Experiment::ALL {
            println!("{:<20} {}", e.name(), e.anchor());
        }
        return Ok(true);
    }
    let experiment: Experiment = cli.experiment.parse()?;
    let path = cli
        .config
        .ok_or_else(|| BoltzError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if cfg.experiment != experiment {
        return Err(BoltzError::Config(format!(
            "config describes {}, command line asks for {experiment}",
            cfg.experiment
        )));
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let (Some(s), AlphaSpec::MonteCarlo { seed, .. }) = (cli.seed, &mut cfg.alpha) {
        *seed = Some(s);
    }
    let rec = run_experiment(&cfg)?;
    let formats: &[Format] = match cli.format {
        OutputFormat::Csv => &[Format::Csv],
        OutputFormat::Jsonl => &[Format::JsonLines],
        OutputFormat::Both => &[Format::Csv, Format::JsonLines],
    };
    for f in formats {
        let p = emit_results(&rec, &cfg.out, *f)?;
        eprintln!("wrote {}", p.display());
    }
    for v in &rec.verdicts {
        println!(
            "{} {}: observed {:.6e}, threshold {:.6e}",
            if v.passed { "PASS" } else { "FAIL" },
            v.check,
            v.observed,
            v.threshold
        );
    }
    match &rec.status {
        Status::Pass => println!("{experiment}: pass"),
        Status::Fail => println!("{experiment}: fail"),
        Status::Excluded(reason) => println!("{experiment}: excluded input ({reason})"),
    }
    Ok(rec.status != Status::Fail)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
