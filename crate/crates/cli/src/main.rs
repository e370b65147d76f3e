use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uada3d::eval::EvalSettings;
use uada3d::Error;
use uada3d_cli::commands;
use uada3d_cli::RunConfig;

#[derive(Parser)]
#[command(name = "uada3d", version, about = "Adversarial domain adaptation experiments for LiDAR detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        /// Built-in profile: car64, car16 or robot16.
        profile: String,
        n_scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train from a key=value config file (or a resolved_config.json).
    Train { config: PathBuf },
    /// Score a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = EvalSettings::default().conf_threshold)]
        conf_threshold: f64,
        #[arg(long, default_value_t = EvalSettings::default().nms_iou)]
        nms_iou: f64,
    },
    /// Object statistics of a labeled dataset.
    Stats {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate change and closed gap against source-only and oracle results.
    Compare {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// An adapted result as name=path; repeatable.
        #[arg(long = "run", value_parser = parse_run)]
        runs: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_run(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got '{s}'")),
    }
}

fn run(cmd: Command) -> uada3d::Result<()> {
    match cmd {
        Command::Gen { profile, n_scenes, seed, out, force } => commands::gen(&profile, n_scenes, seed, &out, force),
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let run = commands::train_run(&cfg)?;
            if let Some(e) = run.eval {
                println!("mAP_3D {:.4}  mAP_BEV {:.4}", e.map3d(), e.mapbev());
            }
            Ok(())
        }
        Command::Eval { checkpoint, data, out, conf_threshold, nms_iou } => {
            let e = commands::eval(&checkpoint, &data, &out, &EvalSettings { conf_threshold, nms_iou })?;
            print!("{}", e.to_csv());
            Ok(())
        }
        Command::Stats { data, out } => commands::stats(&data, &out),
        Command::Compare { source, oracle, runs, out } => {
            print!("{}", commands::compare(&source, &oracle, &runs, &out)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
