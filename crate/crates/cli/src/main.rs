use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use deformsplat::io::{generate_synthetic, load_dataset, load_snapshot, save_snapshot, MotionProgram, SyntheticSpec};
use deformsplat::train::{evaluate, format_ablation_table, run_ablation_suite, train, TrainConfig, TrainOptions};
use deformsplat_cli::overrides::apply_overrides;
use deformsplat_cli::{parse_pose, render_png};

#[derive(Parser)]
#[command(name = "deformsplat", version, about = "Deformable Gaussian splatting for dynamic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dynamic dataset with ground truth.
    Gen {
        /// Motion program: rigid-orbit, pulsating-scale or two-cluster.
        program: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 60)]
        n_train: usize,
        #[arg(long, default_value_t = 10)]
        n_test: usize,
        #[arg(long, default_value_t = 20)]
        n_static: usize,
        #[arg(long, default_value_t = 20)]
        n_dynamic: usize,
    },
    /// Train a scene and write `final.snap`, `train_log.jsonl` and checkpoints.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rescale all iteration schedules to this run length before overrides.
        #[arg(long)]
        iterations: Option<usize>,
        /// `key=value` override or a TOML file; repeatable.
        #[arg(long)]
        config: Vec<String>,
    },
    /// Render one frame of a snapshot to an 8-bit PNG.
    Render {
        #[arg(long)]
        snapshot: PathBuf,
        /// World-to-camera matrix, 16 numbers row-major, comma or space
        /// separated.
        #[arg(long, num_args = 1..=16, allow_negative_numbers = true, required = true)]
        pose: Vec<String>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        time: f64,
        #[arg(long, requires = "height")]
        width: Option<usize>,
        #[arg(long, requires = "width")]
        height: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a snapshot on a dataset split and print metrics as JSON.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
    },
    /// Train every ablation variant and write the comparison table.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        config: Vec<String>,
    },
    /// Serve `/meta`, `/render` and `/healthz` for a snapshot.
    Serve {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn run_config(iterations: Option<usize>, overrides: &[String]) -> deformsplat::Result<TrainConfig> {
    let base = TrainConfig::default();
    let base = match iterations {
        Some(n) => base.scaled_to(n),
        None => base,
    };
    apply_overrides(&base, overrides)
}

fn run(command: Command) -> deformsplat::Result<()> {
    match command {
        Command::Gen {
            program,
            out,
            seed,
            width,
            height,
            n_train,
            n_test,
            n_static,
            n_dynamic,
        } => {
            let program: MotionProgram = program.parse()?;
            let spec = SyntheticSpec {
                width,
                height,
                n_train,
                n_test,
                n_static,
                n_dynamic,
                ..SyntheticSpec::new(program)
            };
            let (ds, _) = generate_synthetic(&spec, seed, &out)?;
            println!("wrote {} train and {} test frames to {}", ds.train.len(), ds.test.len(), out.display());
        }
        Command::Train {
            data,
            out,
            iterations,
            config,
        } => {
            let cfg = run_config(iterations, &config)?;
            let dataset = load_dataset(&data, cfg.background)?;
            std::fs::create_dir_all(&out).map_err(|e| deformsplat::Error::io(&out, e))?;
            let options = TrainOptions {
                log_path: Some(out.join("train_log.jsonl")),
                checkpoint_dir: Some(out.join("checkpoints")),
            };
            let result = train(&dataset, &cfg, &options)?;
            let snapshot = deformsplat::io::Snapshot {
                scene: result.scene,
                config: cfg,
                iteration: result.iteration,
                meta: result.meta,
            };
            let path = out.join("final.snap");
            save_snapshot(&snapshot, &path)?;
            println!(
                "trained {} iterations, {} deformable + {} static Gaussians, snapshot {}",
                snapshot.iteration,
                snapshot.scene.deformable.len(),
                snapshot.scene.static_set.len(),
                path.display()
            );
        }
        Command::Render {
            snapshot,
            pose,
            time,
            width,
            height,
            out,
        } => {
            let pose = parse_pose(&pose.join(" ")).unwrap_or_else(|e| usage_error(ErrorKind::ValueValidation, e));
            let snap = load_snapshot(&snapshot)?;
            let png = render_png(&snap, &pose, time, width, height)?;
            std::fs::write(&out, png).map_err(|e| deformsplat::Error::io(&out, e))?;
        }
        Command::Eval { snapshot, data, split } => {
            let snap = load_snapshot(&snapshot)?;
            let dataset = load_dataset(&data, snap.meta.background)?;
            let frames = if split == "train" { &dataset.train } else { &dataset.test };
            let frames: Vec<_> = frames.iter().map(|f| f.downscaled(snap.config.image_downscale)).collect();
            let settings = snap.scene.settings(snap.meta.background, snap.config.tile_size);
            let metrics = evaluate(&snap.scene, &frames, &settings)?;
            let json = serde_json::to_string_pretty(&metrics).map_err(|e| deformsplat::Error::Format(e.to_string()))?;
            println!("{json}");
        }
        Command::Ablate {
            data,
            out,
            iterations,
            config,
        } => {
            let cfg = run_config(iterations, &config)?;
            let dataset = load_dataset(&data, cfg.background)?;
            let rows = run_ablation_suite(&dataset, &cfg)?;
            let table = format_ablation_table(&rows);
            std::fs::write(&out, &table).map_err(|e| deformsplat::Error::io(&out, e))?;
            print!("{table}");
        }
        Command::Serve { snapshot, port } => {
            let snap = load_snapshot(&snapshot)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| deformsplat::Error::io(&snapshot, e))?;
            runtime
                .block_on(deformsplat_cli::server::serve(snap, port))
                .map_err(|e| deformsplat::Error::io(format!("0.0.0.0:{port}"), e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    deformsplat::par::configure_threads_from_env();
    let cli = Cli::parse_from(deformsplat_cli::attach_pose_lists(std::env::args()));
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
