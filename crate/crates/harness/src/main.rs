use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsai_core::world::{generate_track, Mission, TrackSpec};
use fsai_harness::bench::{run_depth_benchmark, BenchConfig};
use fsai_harness::config::RunConfig;
use fsai_harness::runner::{output_dir, run_mission};
use fsai_harness::telemetry::replay_check;

#[derive(Parser)]
#[command(name = "fsai", about = "Simulated driverless mission runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop mission and write telemetry.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static depth benchmark over synthetic cones.
    BenchDepth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a track JSON.
    GenTrack {
        #[arg(long)]
        mission: Mission,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the summary from a telemetry file.
    Replay {
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        check: bool,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = match RunConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let run = match run_mission(&cfg) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let dir = output_dir(&cfg, out);
            if let Err(e) = run.write(&dir) {
                return fail(e);
            }
            let s = &run.summary;
            println!(
                "{} seed {}: {} after {:.2} s, laps {}, cones hit {}, mean |cte| {:.3} m, pose rmse {:.3} m -> {}",
                s.mission,
                s.seed,
                s.ticks.final_status,
                s.ticks.sim_time_s,
                s.ticks.laps_completed,
                s.ticks.cones_hit,
                s.ticks.mean_abs_cross_track_m,
                s.ticks.pose_rmse_m,
                dir.display()
            );
            ExitCode::from(run.exit_code() as u8)
        }
        Command::BenchDepth { config, out } => {
            let bench = match BenchConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let report = run_depth_benchmark(&bench);
            print!("{}", report.summary_csv());
            eprintln!(
                "{} cones, {} missed by the detector, {} dropped, {:.2} s",
                bench.cones, report.missed, report.dropped, report.elapsed_s
            );
            if let Some(dir) = out {
                let write = || -> std::io::Result<()> {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("depth_cones.csv"), report.cones_csv())?;
                    std::fs::write(dir.join("depth_summary.csv"), report.summary_csv())
                };
                if let Err(e) = write() {
                    return fail(format!("{}: {e}", dir.display()));
                }
            }
            ExitCode::SUCCESS
        }
        Command::GenTrack { mission, seed, out } => {
            let track = match generate_track(&TrackSpec::new(mission, seed)) {
                Ok(t) => t,
                Err(e) => return fail(e),
            };
            if let Err(e) = std::fs::write(&out, track.to_json()) {
                return fail(format!("{}: {e}", out.display()));
            }
            println!("{} track with {} cones -> {}", mission.as_str(), track.cones.len(), out.display());
            ExitCode::SUCCESS
        }
        Command::Replay { telemetry, check } => match replay_check(&telemetry) {
            Ok(mismatches) if mismatches.is_empty() => {
                println!("summary consistent with {}", telemetry.display());
                ExitCode::SUCCESS
            }
            Ok(mismatches) => {
                for m in &mismatches {
                    println!("{}: stored {} recomputed {}", m.field, m.stored, m.recomputed);
                }
                if check {
                    ExitCode::from(1)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => fail(e),
        },
    }
}
