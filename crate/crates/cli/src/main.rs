use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use fedgrid::check::{labels_for_90_percent, run_all};
use fedgrid::persist::save_params;
use fedgrid::report::{emit_report, metrics_table, render_table, Table};
use fedgrid::{parse_config, run_grid, Experiment, ExperimentConfig, GridSpec, ParsedConfig, RunStatus};

#[derive(Debug, Parser)]
#[command(name = "fedgrid", version, about = "Deterministic federated-learning simulator")]
struct Cli {
    /// Override the experiment seed (for grids: run this seed only).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and model files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Use the server update rules exactly as originally printed.
    #[arg(long = "literal-eq1", global = true)]
    literal_eq1: bool,

    /// Worker threads: clients within a round for `run`, grid cells for `grid`.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration and write metrics and model files.
    Run { config: PathBuf },
    /// Run every (client mechanism, server optimizer) cell of a grid config.
    Grid { config: PathBuf },
    /// Run the built-in oracle checks.
    Check,
    /// Print per-client label histograms of a config's partition.
    PartitionStats { config: PathBuf },
}

impl Cli {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.server.literal_eq1 |= self.literal_eq1;
    }

    fn experiment(&self, path: &Path) -> Result<ExperimentConfig> {
        let mut cfg = match load(path)? {
            ParsedConfig::Experiment(cfg) => cfg,
            ParsedConfig::Grid(_) => bail!("{} is a grid config; use `fedgrid grid`", path.display()),
        };
        self.apply(&mut cfg);
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        Ok(cfg)
    }

    fn grid(&self, path: &Path) -> Result<GridSpec> {
        let mut spec = match load(path)? {
            ParsedConfig::Grid(spec) => spec,
            ParsedConfig::Experiment(_) => bail!("{} has no [grid] section; use `fedgrid run`", path.display()),
        };
        self.apply(&mut spec.base);
        if let Some(seed) = self.seed {
            spec.seeds = vec![seed];
        }
        Ok(spec)
    }
}

fn load(path: &Path) -> Result<ParsedConfig> {
    Ok(parse_config(path)?)
}

fn run(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let cfg = cli.experiment(path)?;
    let exp = Experiment::prepare(cfg)?;
    let result = exp.run();
    let out = &cli.out;
    let metrics = out.join("metrics.csv");
    emit_report(&metrics_table(result.algorithm, &result.metrics), &metrics)?;
    save_params(&out.join("final.bin"), &result.final_w, &result.spec)?;
    save_params(&out.join("best.bin"), &result.best_w, &result.spec)?;

    let best = result.best_acc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
    println!("{}: {} rounds, best accuracy {best}", result.algorithm, exp.cfg.rounds);
    println!("wrote {}", metrics.display());
    Ok(match &result.status {
        RunStatus::Ok => ExitCode::SUCCESS,
        RunStatus::Diverged { round, reason } => {
            eprintln!("diverged at round {round}: {reason}");
            ExitCode::from(2)
        }
    })
}

fn grid(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let spec = cli.grid(path)?;
    let report = run_grid(&spec, cli.threads.unwrap_or(1))?;
    report.write(&cli.out)?;
    let summary = render_table(&report.summary_table())?;
    print!("{}", String::from_utf8_lossy(&summary));
    println!("wrote {}", cli.out.join("grid.csv").display());
    if report.any_diverged() {
        eprintln!("at least one grid cell diverged");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn check(cli: &Cli) -> ExitCode {
    let outcomes = run_all(cli.seed.unwrap_or(0));
    for outcome in &outcomes {
        println!("{outcome}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn partition_stats(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let mut cfg = match load(path)? {
        ParsedConfig::Experiment(cfg) => cfg,
        ParsedConfig::Grid(spec) => spec.base,
    };
    cli.apply(&mut cfg);
    let exp = Experiment::prepare(cfg)?;
    let k = exp.train.num_classes();
    let mut header = vec!["client".to_string(), "samples".into(), "ratio".into(), "labels_90".into()];
    header.extend((0..k).map(|c| format!("label_{c}")));
    let mut table = Table::new(header);
    for (client, hist) in exp.partition.label_histograms(&exp.train).iter().enumerate() {
        let mut row = vec![
            client.to_string(),
            exp.partition.count(client).to_string(),
            format!("{:.6}", exp.partition.ratio(client)),
            labels_for_90_percent(hist).to_string(),
        ];
        row.extend(hist.iter().map(ToString::to_string));
        table.rows.push(row);
    }
    print!("{}", String::from_utf8_lossy(&render_table(&table)?));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Grid { config } => grid(&cli, config),
        Command::Check => Ok(check(&cli)),
        Command::PartitionStats { config } => partition_stats(&cli, config),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
