use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use leafsurf::bench::{
    emit_plots, run_in_process, run_suite, write_report, BenchConfig, CountingAllocator, LeafId, LeafInput, MethodId,
    RamSource, SuiteOptions, SyntheticShape, WORKER_ARG,
};
use leafsurf::geometry::{save_cloud, CloudFormat};

#[global_allocator]
static GLOBAL: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "leafsurf", version, about = "Leaf surface reconstruction and benchmarking")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value,...` settings applied after the file.
    #[arg(long = "set", value_name = "K=V,...")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => BenchConfig::default(),
        };
        for s in &self.set {
            cfg.apply_pairs(s)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one cloud and report its area.
    Reconstruct {
        #[arg(long)]
        method: MethodId,
        #[arg(long)]
        input: PathBuf,
        /// Output mesh (.obj or .ply).
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run methods over a directory of `<plant>__<leaf>` clouds.
    Bench {
        #[arg(long)]
        input_dir: PathBuf,
        /// Comma-separated method names, or `all`.
        #[arg(long, default_value = "all")]
        methods: String,
        /// Per-leaf CSV; the per-plant CSV is written beside it.
        #[arg(long)]
        out: PathBuf,
        /// Directory for SVG charts.
        #[arg(long)]
        plots: Option<PathBuf>,
        #[arg(long, default_value = "poisson")]
        benchmark: MethodId,
        /// Directory for reconstructed meshes.
        #[arg(long)]
        mesh_dir: Option<PathBuf>,
        /// Dataset label; defaults to the directory name.
        #[arg(long)]
        dataset: Option<String>,
        /// Concurrent worker processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Measure in this process with the heap counter instead of isolated
        /// child processes. Memory figures are then approximate.
        #[arg(long)]
        in_process: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sample an analytic shape.
    Synth {
        /// plane, paraboloid, sphere, hole_plane or decimated_plane.
        #[arg(long)]
        shape: String,
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output cloud (.xyz or .ply), written with normals.
        #[arg(long)]
        out: PathBuf,
    },
}

fn reconstruct(method: MethodId, input: &Path, output: &Path, cfg: &BenchConfig) -> Result<ExitCode> {
    let leaf_input = LeafInput::load(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let r = run_in_process(method, LeafId::from_stem("", stem), &leaf_input, cfg, Some(output), false);
    if !r.is_ok() {
        bail!("{method} failed ({}): {}", r.status, r.message.unwrap_or_default());
    }
    println!(
        "method={method} points={} area={} cpu_s={} peak_ram_mb={:.3} mesh={}",
        r.n_points.unwrap_or(0),
        r.area.unwrap_or(0.0),
        r.cpu_s.unwrap_or(0.0),
        r.peak_ram_mb().unwrap_or(0.0),
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(opts: SuiteOptions, input_dir: &Path, out: &Path, plots: Option<&Path>) -> Result<ExitCode> {
    let report = run_suite(input_dir, &opts)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let plants = write_report(&report, out)?;
    eprintln!("wrote {} and {}", out.display(), plants.display());
    if let Some(dir) = plots {
        for p in emit_plots(&report.plants, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    if report.rows.iter().any(|r| r.ram_source == Some(RamSource::Allocator)) {
        log::warn!("peak RAM figures come from the heap counter and are approximate");
    }
    let failed = report.failures();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", report.rows.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn synth(shape: &str, params: &str, seed: u64, out: &Path) -> Result<ExitCode> {
    let shape = SyntheticShape::from_params(shape, params)?;
    let sample = shape.generate(seed)?;
    save_cloud(&sample.cloud, Some(&sample.normals), out, CloudFormat::from_path(out))?;
    println!(
        "shape={} points={} area={} out={}",
        shape.kind_name(),
        sample.cloud.len(),
        sample.area,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Reconstruct { method, input, output, config } => reconstruct(method, &input, &output, &config.load()?),
        Command::Bench {
            input_dir,
            methods,
            out,
            plots,
            benchmark,
            mesh_dir,
            dataset,
            jobs,
            in_process,
            config,
        } => {
            let worker_exe = if in_process {
                None
            } else {
                Some(std::env::current_exe().context("locating own executable for worker processes")?)
            };
            let opts = SuiteOptions {
                methods: MethodId::parse_list(&methods)?,
                config: config.load()?,
                worker_exe,
                mesh_dir,
                jobs,
                dataset,
                benchmark,
            };
            bench(opts, &input_dir, &out, plots.as_deref())
        }
        Command::Synth { shape, params, seed, out } => synth(&shape, &params, seed, &out),
    }
}

fn main() -> ExitCode {
    if std::env::args().nth(1).as_deref() == Some(WORKER_ARG) {
        return match leafsurf::bench::serve(std::io::stdin().lock(), std::io::stdout().lock()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
