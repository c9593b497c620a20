use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emsplat::bench::{format_bench_table, run_bench, scaling_summary, BenchConfig};
use emsplat::eval::{comparison_report, format_fsc_table, fsc, voxelize, VoxelVolume};
use emsplat::grid::DEFAULT_EXTENT;
use emsplat::io::{self, RunConfig};
use emsplat::sim::simulate;
use emsplat::train::{train, Half};
use emsplat::{GridSpec, Mode, Result};

#[derive(Parser)]
#[command(name = "emsplat", version, about = "Gaussian-splatting density reconstruction from posed projection images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic particle stack, metadata and ground-truth checkpoint.
    Simulate(SimulateArgs),
    /// Train a mixture on a particle stack with known poses.
    Reconstruct(ReconstructArgs),
    /// Sample a checkpoint onto a voxel grid and write MRC.
    Voxelize(VoxelizeArgs),
    /// Fourier shell correlation between two MRC volumes.
    Fsc(FscArgs),
    /// Time forward+backward over a grid of mixture and image sizes.
    Bench(BenchArgs),
    /// Paired FSC report of two volumes against a common reference.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory that relative output paths in the config resolve against.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum HalfArg {
    Even,
    Odd,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Base config; flags below override its [train] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_gaussians: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    isotropic: bool,
    #[arg(long, value_enum)]
    half: Option<HalfArg>,
    #[arg(long, default_value_t = DEFAULT_EXTENT)]
    extent: f64,
    /// Output directory for per-epoch checkpoints and the loss trace.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VoxelizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    size: usize,
    #[arg(long)]
    apix: f64,
    #[arg(long, default_value_t = DEFAULT_EXTENT)]
    extent: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FscArgs {
    #[arg(long)]
    volume_a: PathBuf,
    #[arg(long)]
    volume_b: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2048,3072,5120,10000,30000")]
    n_gaussians: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "192,256")]
    size: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    volume_a: PathBuf,
    #[arg(long)]
    volume_b: PathBuf,
    #[arg(long, default_value = "anisotropic")]
    label_a: String,
    #[arg(long, default_value = "isotropic")]
    label_b: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    println!("# resolved config\n{}", cfg.to_toml());
    let sim = &cfg.simulate;
    let spec = sim.to_spec()?;
    let out = simulate(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let images: Vec<_> = out.dataset.records.iter().map(|r| r.image.clone()).collect();
    let (stack, meta, truth) = (
        resolve(&a.out_dir, &sim.output.stack),
        resolve(&a.out_dir, &sim.output.meta),
        resolve(&a.out_dir, &sim.output.truth),
    );
    io::write_stack(&stack, &images)?;
    io::write_meta(&meta, &out.meta)?;
    io::write_checkpoint(&truth, &spec.truth)?;
    println!(
        "wrote {} particles (signal variance {:.6e}, noise std {:.6e}) to {}, {}, {}",
        images.len(),
        out.signal_variance,
        out.noise_std,
        stack.display(),
        meta.display(),
        truth.display()
    );
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?.train,
        None => Default::default(),
    };
    if let Some(n) = a.n_gaussians {
        cfg.n_gaussians = n;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if a.isotropic {
        cfg.mode = Mode::Isotropic;
    }
    cfg.validate()?;
    let printed = RunConfig {
        train: cfg.clone(),
        ..Default::default()
    };
    println!("# resolved config (seed {})\n{}", cfg.seed, toml_train_only(&printed));
    let mut data = io::load_dataset(&a.stack, &a.meta, a.extent)?;
    if let Some(h) = a.half {
        data = data.half(match h {
            HalfArg::Even => Half::Even,
            HalfArg::Odd => Half::Odd,
        });
    }
    println!("training on {} records, D = {}", data.len(), data.grid.size);
    let result = train(&data, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    for (e, snap) in result.snapshots.iter().enumerate() {
        io::write_checkpoint(&a.out.join(format!("epoch_{}.cgs", e + 1)), snap)?;
    }
    std::fs::write(a.out.join("loss_trace.txt"), io::format_trace(&result.trace))?;
    std::fs::write(a.out.join("config.toml"), toml_train_only(&printed))?;
    let last = result.trace.last().map(|t| t.loss).unwrap_or(f64::NAN);
    println!("done: {} steps, final loss {last:.6e}, checkpoints in {}", result.trace.len(), a.out.display());
    Ok(())
}

fn toml_train_only(cfg: &RunConfig) -> String {
    #[derive(serde::Serialize)]
    struct TrainOnly<'a> {
        train: &'a emsplat::train::TrainConfig,
    }
    toml::to_string(&TrainOnly { train: &cfg.train }).expect("config is serializable")
}

fn cmd_voxelize(a: VoxelizeArgs) -> Result<()> {
    let m = io::read_checkpoint(&a.checkpoint)?;
    let grid = GridSpec::new(a.size, a.extent, a.apix)?;
    println!("# voxelize: {} Gaussians onto D = {}, {} Å/px, extent {}", m.count(), a.size, a.apix, a.extent);
    let v = voxelize(&m, &grid)?;
    io::write_mrc(&a.out, &v.to_mrc())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_volume(p: &Path) -> Result<VoxelVolume> {
    VoxelVolume::from_mrc(&io::read_mrc(p)?, DEFAULT_EXTENT)
}

fn cmd_fsc(a: FscArgs) -> Result<()> {
    let curve = fsc(&read_volume(&a.volume_a)?, &read_volume(&a.volume_b)?)?;
    let table = format_fsc_table(&curve);
    print!("{table}");
    println!("# FSC=0.5: {}", curve.resolution_05);
    println!("# FSC=0.143: {}", curve.resolution_0143);
    if let Some(out) = a.out {
        std::fs::write(out, table)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        n_gaussians: a.n_gaussians,
        sizes: a.size,
        repeats: a.repeats,
        warmup: a.warmup,
        seed: a.seed,
        ..Default::default()
    };
    println!("# bench: {cfg:?} (seed {}, {} worker threads)", cfg.seed, rayon::current_num_threads());
    let rows = run_bench(&cfg)?;
    print!("{}", format_bench_table(&rows));
    for (size, ratio, monotone) in scaling_summary(&rows) {
        println!("# D = {size}: t(max N)/t(min N) = {ratio:.3}, monotone in N: {monotone}");
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let reference = read_volume(&a.reference)?;
    let ca = fsc(&read_volume(&a.volume_a)?, &reference)?;
    let cb = fsc(&read_volume(&a.volume_b)?, &reference)?;
    let report = comparison_report(&a.label_a, &ca, &a.label_b, &cb)?;
    print!("{report}");
    if let Some(out) = a.out {
        std::fs::write(out, report)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Voxelize(a) => cmd_voxelize(a),
        Command::Fsc(a) => cmd_fsc(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            // one line, without clap's usage block
            let msg = e.to_string();
            let parts: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: {}", parts.join(" ").trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
