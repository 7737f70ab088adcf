use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dcot_core::trace::Mode;

use dcot_cli::configio::{load_config, parse_config_text, render_config};
use dcot_cli::report::RunReport;
use dcot_cli::runner::run_suite;
use dcot_cli::suite::load_suite;
use dcot_cli::tracefmt::render_log;
use dcot_cli::trainer::{render_params, render_training_log, train};

#[derive(Parser)]
#[command(
    name = "dcot",
    about = "Dynamic chain-of-thought benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dcot,
    Baseline,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Dcot => vec![Mode::Dcot],
            ModeArg::Baseline => vec![Mode::LongCotBaseline],
            ModeArg::Both => vec![Mode::Dcot, Mode::LongCotBaseline],
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a task suite in one or both modes and write the report files.
    Run {
        /// Suite file path.
        #[arg(long)]
        suite: PathBuf,
        /// Which engine mode(s) to run.
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        /// Optional config file (flat key=value lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Root seed; overrides the config file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel task workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory for run.csv, comparison.txt, traces.log.
        #[arg(long)]
        out: PathBuf,
        /// Optional fact corpus (question<TAB>answer per line).
        #[arg(long)]
        facts: Option<PathBuf>,
        /// Extra config overrides as key=value; may repeat.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train the selection policy on the suite's scripted tasks.
    Train {
        #[arg(long)]
        suite: PathBuf,
        /// Number of training episodes (≥ 1).
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for training.log and params.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-render the comparison table from a previous run directory.
    Report {
        /// Directory holding run.csv and run.config.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| anyhow::anyhow!("--set expects key=value, got {kv:?}"))
        })
        .collect()
}

fn cmd_run(
    suite: PathBuf,
    mode: ModeArg,
    config: Option<PathBuf>,
    seed: Option<u64>,
    jobs: usize,
    out: PathBuf,
    facts: Option<PathBuf>,
    set: Vec<String>,
) -> Result<bool> {
    let overrides = parse_overrides(&set)?;
    let cfg = load_config(config.as_deref(), &overrides, seed)?;
    let suite = load_suite(&suite)?;
    if suite.is_empty() {
        bail!("suite has no tasks");
    }
    let fact_store = match facts {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading facts {}", path.display()))?;
            dcot_core::discriminator::FactStore::parse(&text)?
        }
        None => dcot_core::discriminator::FactStore::new(),
    };
    let outcome = run_suite(&suite, &cfg, &mode.modes(), &fact_store, jobs)?;
    fs::create_dir_all(&out)?;
    outcome.report.write_csv(&out.join("run.csv"))?;
    fs::write(out.join("comparison.txt"), outcome.report.comparison_text())?;
    fs::write(out.join("traces.log"), render_log(&outcome.traces))?;
    fs::write(out.join("run.config"), render_config(&cfg))?;
    print!("{}", outcome.report.comparison_text());
    Ok(outcome.report.any_aborted())
}

fn cmd_train(
    suite: PathBuf,
    episodes: usize,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    set: Vec<String>,
) -> Result<bool> {
    let overrides = parse_overrides(&set)?;
    let cfg = load_config(config.as_deref(), &overrides, seed)?;
    let suite = load_suite(&suite)?;
    let outcome = train(&suite, episodes, &cfg)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("training.log"), render_training_log(&outcome))?;
    fs::write(out.join("params.txt"), render_params(&outcome.params))?;
    let n = outcome.curve.len();
    let head = dcot_cli::trainer::mean_reward(&outcome.curve, 0..n.min(50));
    let tail = dcot_cli::trainer::mean_reward(&outcome.curve, n.saturating_sub(50)..n);
    println!(
        "trained {} episodes; mean episode reward first 50 = {head:.4}, last 50 = {tail:.4}",
        n
    );
    if let Some(e) = outcome.diverged_at {
        eprintln!("training diverged at episode {e}; kept last finite checkpoint");
        return Ok(true);
    }
    Ok(false)
}

fn cmd_report(input: PathBuf) -> Result<bool> {
    let config_text = fs::read_to_string(input.join("run.config"))
        .with_context(|| format!("reading {}", input.join("run.config").display()))?;
    let pairs = parse_config_text(&config_text)?;
    let cfg = dcot_core::DCoTConfig::from_pairs(&pairs)?;
    let seed = cfg.seed;
    let report = RunReport::read_csv(&input.join("run.csv"), cfg, seed)?;
    print!("{}", report.comparison_text());
    Ok(report.any_aborted())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run {
            suite,
            mode,
            config,
            seed,
            jobs,
            out,
            facts,
            set,
        } => cmd_run(suite, mode, config, seed, jobs, out, facts, set),
        Cmd::Train {
            suite,
            episodes,
            config,
            seed,
            out,
            set,
        } => cmd_train(suite, episodes, config, seed, out, set),
        Cmd::Report { input } => cmd_report(input),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
