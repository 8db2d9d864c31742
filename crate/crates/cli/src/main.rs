use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

mod commands;
mod config;
mod error;

use commands::{Command, Outputs};
use config::RunConfig;
use error::CliError;

/// Early exercise boundary solver runs with CSV output.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config, or the manifest.json of an earlier run. Built-in defaults
    /// fill every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory [default: ./out/<subcommand>-<timestamp>]
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// `key.path=value` patch applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for `converge` and `sweep` [default: all processors]
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

fn write_outputs(
    dir: &Path,
    cmd: Command,
    cfg: &RunConfig,
    out: &Outputs,
    started: &str,
    total: f64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let mut files: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    files.push("manifest.json");
    let mut timings = serde_json::to_value(&out.timings).expect("timings serialise");
    timings["total"] = json!(total);
    timings["started"] = json!(started);
    let manifest = json!({
        "config": cfg,
        "timings": timings,
        "results_index": {
            "subcommand": cmd.name(),
            "files": files,
            "versions": {
                "exercise-boundary": exercise_boundary::VERSION,
                "exercise-boundary-cli": env!("CARGO_PKG_VERSION"),
            },
        },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    let now = chrono::Local::now();
    let t = std::time::Instant::now();
    let out = commands::run(cli.command, &cfg)?;
    let total = t.elapsed().as_secs_f64();

    let dir = cli.out.unwrap_or_else(|| {
        Path::new("out").join(format!(
            "{}-{}",
            cli.command.name(),
            now.format("%Y%m%d-%H%M%S")
        ))
    });
    write_outputs(&dir, cli.command, &cfg, &out, &now.to_rfc3339(), total)?;
    for (k, v) in out.report.iter().filter(|(k, _)| k.contains("rho_T")) {
        println!("{k} = {v}");
    }
    println!("wrote {} files to {}", out.files.len() + 1, dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
