use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reprbench::report::{self, RunConfig, Stage};
use reprbench::synthetic::{write_demo, DemoSpec};
use reprbench::Result;

/// Benchmark frozen image embeddings with kNN and linear probes.
#[derive(Debug, Parser)]
#[command(name = "reprbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Added to every seed in the config.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed_base: u64,
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, value_name = "N", default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build patient-level splits and their audits.
    Split(Common),
    /// Frozen kNN and linear evaluation over all seeds.
    Eval(Common),
    /// Label-efficiency curves.
    Fewshot(Common),
    /// Utility scores from previously computed curves.
    Utility(Common),
    /// ANOVA and Tukey HSD from previously computed frozen results.
    Stats(Common),
    /// Assemble report tables and plots from previous results.
    Report(Common),
    /// Everything above in one go.
    Run(Common),
    /// Write a synthetic two-model benchmark (inputs and config).
    Demo {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.offset_seeds(common.seed_base);
    Ok(cfg)
}

fn stage(common: &Common, stage: Stage) -> Result<()> {
    let cfg = load(common)?;
    let paths = report::with_jobs(common.jobs, || report::run_stage(&cfg, stage, common.jobs))??;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(c) => stage(&c, Stage::Split),
        Command::Eval(c) => stage(&c, Stage::Eval),
        Command::Fewshot(c) => stage(&c, Stage::Fewshot),
        Command::Utility(c) => stage(&c, Stage::Utility),
        Command::Stats(c) => stage(&c, Stage::Stats),
        Command::Report(c) => stage(&c, Stage::Report),
        Command::Run(c) => {
            let cfg = load(&c)?;
            let outcome = report::with_jobs(c.jobs, || report::run(&cfg, c.jobs))??;
            print!("{}", outcome.report.to_markdown());
            println!("\nwrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Demo { out, per_class, repeats } => {
            let spec = DemoSpec { per_class, repeats, ..DemoSpec::default() };
            let path = write_demo(&out, &spec)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
