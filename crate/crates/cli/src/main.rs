use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sipp::harness::{
    emit_plots, eval_seeds, output_root, sweep, Algorithm, IterationRecord, SweepOptions, TrainConfig, Trainer,
};
use sipp::{Error, Result};

/// Self-imitating PPO (MATCH and REPLAY) on small built-in environments.
#[derive(Parser)]
#[command(name = "sipp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single run, or resume one from its checkpoint.
    Train(TrainArgs),
    /// Run configs × seeds (× an optional xi grid) and write an aggregated report.
    Sweep(SweepArgs),
    /// Evaluate the deterministic policy stored in a checkpoint.
    Eval(EvalArgs),
    /// Draw learning curves from metrics files or run directories.
    Plot(PlotArgs),
    /// List the imitation buffer stored in a checkpoint.
    InspectBuffer(InspectArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML key-value file; field flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config field as a flag, e.g. `--xi 0.3 --total-steps 50000 --random-start`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--FIELD VALUE")]
    fields: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Continue from this checkpoint instead of starting fresh (accepts `--total-steps`).
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated algorithms, each expanded with its own defaults.
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<String>,
    /// Comma-separated xi values to sweep.
    #[arg(long, value_delimiter = ',')]
    xi_grid: Vec<f64>,
    /// Parallel worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory (default `<output root>/sweep`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of held-out episodes (default: the run's `eval_episodes`).
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSV files, or directories searched recursively for `metrics.csv`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Eval(a) => eval(a),
        Command::Plot(a) => plot(a),
        Command::InspectBuffer(a) => inspect_buffer(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

/// `--key value`, `--key=value`, and bare `--flag` (meaning `true`) pairs.
fn parse_fields(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Some(key) = tokens[i].strip_prefix("--") else {
            return Err(Error::Config(format!("expected a `--field` flag, got {:?}", tokens[i])));
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else {
            match tokens.get(i + 1) {
                Some(v) if !v.starts_with("--") => {
                    out.push((key.to_string(), v.clone()));
                    i += 2;
                }
                _ => {
                    out.push((key.to_string(), "true".into()));
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

fn resolve(args: &ConfigArgs, extra: &[(String, String)]) -> Result<TrainConfig> {
    let mut fields = parse_fields(&args.fields)?;
    fields.extend_from_slice(extra);
    match &args.config {
        Some(path) => TrainConfig::from_file(path, &fields),
        None => TrainConfig::resolve(None, &fields),
    }
}

fn progress(rec: &IterationRecord) {
    if let Some(ret) = rec.eval_return {
        let success = rec.eval_success.map(|s| format!(" success {s:.2}")).unwrap_or_default();
        eprintln!("iter {:4}  env steps {:8}  eval return {ret:10.3}{success}", rec.iteration, rec.env_steps);
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let (mut trainer, dir) = match &args.resume {
        Some(path) => {
            let mut trainer = Trainer::load_checkpoint(path)?;
            for (key, value) in parse_fields(&args.config.fields)? {
                match key.replace('-', "_").as_str() {
                    "total_steps" => trainer.extend_budget(
                        value
                            .parse()
                            .map_err(|_| Error::Config(format!("total_steps must be an integer, got {value:?}")))?,
                    )?,
                    other => return Err(Error::Config(format!("only --total-steps may change on resume, got --{other}"))),
                }
            }
            let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (trainer, dir)
        }
        None => {
            let config = resolve(&args.config, &[])?;
            let dir = config.run_dir();
            (Trainer::new(config)?, dir)
        }
    };
    trainer.run_observed(&dir, progress)?;
    let last = trainer.metrics().final_eval();
    let summary = serde_json::json!({
        "run_dir": dir.display().to_string(),
        "iterations": trainer.iteration(),
        "env_steps": trainer.env_steps(),
        "final_eval_return": last.and_then(|r| r.eval_return),
        "final_eval_success": last.and_then(|r| r.eval_success),
    });
    println!("{summary}");
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let configs = if args.algorithms.is_empty() {
        vec![resolve(&args.config, &[])?]
    } else {
        args.algorithms
            .iter()
            .map(|a| {
                let alg: Algorithm = a.parse()?;
                resolve(&args.config, &[("algorithm".into(), alg.to_string())])
            })
            .collect::<Result<Vec<_>>>()?
    };
    let out = args.out.unwrap_or_else(|| output_root().join("sweep"));
    let grid = (!args.xi_grid.is_empty()).then_some(args.xi_grid.as_slice());
    let outcome = sweep(
        &configs,
        grid,
        &SweepOptions {
            jobs: args.jobs,
            output_dir: Some(out.clone()),
        },
    )?;
    let files = find_metrics(&[out.join("runs")])?;
    if !files.is_empty() {
        emit_plots(&files, &out.join("plots"))?;
    }
    print!("{}", outcome.report.to_markdown());
    eprintln!("report written to {}", out.join("report.md").display());
    if !outcome.report.failures.is_empty() {
        return Err(Error::Numeric(format!(
            "{} of {} runs failed; see the report",
            outcome.report.failures.len(),
            outcome.report.failures.len() + outcome.runs.len()
        )));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let trainer = Trainer::load_checkpoint(&args.checkpoint)?;
    let n = args.episodes.unwrap_or(trainer.config().eval_episodes);
    let seeds = eval_seeds(trainer.config().seed, n);
    let (ret, success) = trainer.evaluate_on(&seeds)?;
    let summary = serde_json::json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "iteration": trainer.iteration(),
        "episodes": n,
        "eval_return": ret,
        "eval_success": success,
    });
    println!("{summary}");
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let files = find_metrics(&args.inputs)?;
    if files.is_empty() {
        return Err(Error::Config("no metrics.csv found under the given inputs".into()));
    }
    for path in emit_plots(&files, &args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn inspect_buffer(args: InspectArgs) -> Result<()> {
    let trainer = Trainer::load_checkpoint(&args.checkpoint)?;
    let buffer = trainer.buffer();
    let ranked = buffer.ranked();
    let mut out = std::io::stdout().lock();
    if args.json {
        let entries: Vec<_> = ranked
            .iter()
            .map(|e| {
                serde_json::json!({
                    "return": e.episode_return,
                    "length": e.trajectory.len(),
                    "insertion_index": e.insertion_index,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "mode": format!("{:?}", buffer.mode()).to_lowercase(),
            "capacity": buffer.capacity(),
            "entries": entries,
        });
        writeln!(out, "{doc}")?;
    } else {
        writeln!(out, "{:?} buffer, {} of {} slots", buffer.mode(), ranked.len(), buffer.capacity())?;
        writeln!(out, "{:>4}  {:>12}  {:>6}  {:>9}", "rank", "return", "length", "inserted")?;
        for (rank, e) in ranked.iter().enumerate() {
            writeln!(
                out,
                "{:>4}  {:>12.4}  {:>6}  {:>9}",
                rank + 1,
                e.episode_return,
                e.trajectory.len(),
                e.insertion_index
            )?;
        }
    }
    Ok(())
}

/// Expands directories into the `metrics.csv` files below them, sorted for stable output.
fn find_metrics(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut files)?;
        } else if input.exists() {
            files.push(input.clone());
        } else if input.file_name().is_some_and(|n| n != "runs") {
            return Err(Error::Config(format!("no such metrics file or directory: {}", input.display())));
        }
    }
    files.sort();
    Ok(files)
}

fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, files)?;
        } else if path.file_name().is_some_and(|n| n == "metrics.csv") {
            files.push(path);
        }
    }
    Ok(())
}
