use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use sparsesurf::io::{load_checkpoint, load_scene, read_mesh, write_mesh, PlyFormat, RunConfig};
use sparsesurf::pipeline::{eval_mesh, eval_renders, extract_mesh, priors_to_dir, render_to_dir, train_to_dir};
use sparsesurf::scene::CameraSpec;
use sparsesurf::{Camera, Error, RenderOptions, Result};

#[derive(Parser)]
#[command(name = "sparsesurf", version, about = "Sparse-view surface reconstruction with Gaussian surfels")]
struct Cli {
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a scene; writes the loss CSV and checkpoints.
    Train {
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a checkpoint from a camera given as TOML or JSON.
    Render {
        checkpoint: PathBuf,
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute one round of stereo priors for the training views.
    Priors {
        checkpoint: PathBuf,
        scene: PathBuf,
        #[arg(long, default_value = "priors")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fuse rendered depths of the training views into a mesh.
    Mesh {
        checkpoint: PathBuf,
        scene: PathBuf,
        /// Voxel size as a fraction of the scene radius.
        #[arg(long)]
        voxel: Option<f64>,
        #[arg(long, default_value = "mesh.ply")]
        out: PathBuf,
        #[arg(long)]
        ascii: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Chamfer report for a mesh, or PSNR/SSIM for a directory of renders.
    Eval {
        input: PathBuf,
        ground_truth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn read_camera(path: &Path) -> Result<Camera> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let spec: CameraSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    Camera::try_from(spec)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = match &cli.command {
        Command::Train { config, .. }
        | Command::Render { config, .. }
        | Command::Priors { config, .. }
        | Command::Mesh { config, .. }
        | Command::Eval { config, .. } => config.clone(),
    };
    let mut cfg = config(cfg_path.as_deref())?;
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let opts = RenderOptions {
        background: cfg.train.background,
        ..Default::default()
    };
    match cli.command {
        Command::Train { scene, out, .. } => {
            let ds = load_scene(&scene)?;
            let t = train_to_dir(&ds, &cfg, &out)?;
            info!("trained {} iterations, {} primitives, {} skipped steps", t.iter, t.cloud.len(), t.adam.skipped);
        }
        Command::Render { checkpoint, camera, out, .. } => {
            let ck = load_checkpoint(&checkpoint)?;
            render_to_dir(&ck.cloud, &read_camera(&camera)?, &opts, &out, cfg.output.previews)?;
        }
        Command::Priors { checkpoint, scene, out, .. } => {
            let ck = load_checkpoint(&checkpoint)?;
            let n = priors_to_dir(&ck.cloud, &load_scene(&scene)?, &cfg, &out)?;
            println!("{n} priors written to {}", out.display());
        }
        Command::Mesh {
            checkpoint,
            scene,
            voxel,
            out,
            ascii,
            ..
        } => {
            if let Some(v) = voxel {
                cfg.mesh.voxel = v;
                cfg.validate()?;
            }
            let ck = load_checkpoint(&checkpoint)?;
            let ds = load_scene(&scene)?;
            let mesh = extract_mesh(&ck.cloud, &ds.train_cameras(), &opts, &cfg.mesh);
            let fmt = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
            write_mesh(&out, &mesh, fmt)?;
            println!("{} vertices, {} triangles written to {}", mesh.vertices.len(), mesh.triangles.len(), out.display());
        }
        Command::Eval { input, ground_truth, .. } => {
            if input.is_dir() {
                print_json(&eval_renders(&input, &ground_truth)?)?;
            } else {
                print_json(&eval_mesh(&read_mesh(&input)?, &ground_truth, &cfg.mesh)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
