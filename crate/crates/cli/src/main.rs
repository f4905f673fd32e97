use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rangeseg::cloud_io::{load_labels, load_point_cloud, save_labels, save_point_cloud, write_range_image};
use rangeseg::net::{load_weights, save_weights, Network, NetworkConfig, Preset};
use rangeseg::preview::{write_class_ppm, write_depth_pgm};
use rangeseg::projection::{
    occlusion_stats, project_ego_corrected, unfold_scan, OcclusionStats, RowMode, SphericalParams, UnfoldParams,
};
use rangeseg::synth::{generate_scan, load_scan_config, ScanConfig, SceneConfig, SensorModel};
use rangeseg::train::{
    bench, evaluate, load_train_config, split_by_parity, synthetic_dataset, EvalMetrics, TrainConfig,
};
use rangeseg::{Error, Result};

#[derive(Parser)]
#[command(name = "rangeseg", version, about = "Range-image LiDAR segmentation toolkit")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a point cloud (and labels) into a range image.
    Project(ProjectArgs),
    /// Generate synthetic scans from scan configs or random scenes.
    Synth(SynthArgs),
    /// Compare occlusions of unfolding and ego-corrected projection.
    Stats(StatsArgs),
    /// Train a network on the synthetic scene set.
    Train(TrainArgs),
    /// Evaluate saved weights on the synthetic scene set.
    Eval(EvalArgs),
    /// Time forward passes of the preset backbones.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Unfold,
    Ego,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowRule {
    Literal,
    Robust,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 2048)]
    width: usize,
    /// Azimuth jump that starts a new scan line (unfold mode).
    #[arg(long, default_value_t = 0.3)]
    threshold_deg: f64,
    #[arg(long, value_enum, default_value_t = RowRule::Literal)]
    row_mode: RowRule,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    fov_up: f64,
    #[arg(long, default_value_t = -25.0, allow_hyphen_values = true)]
    fov_down: f64,
}

impl GridArgs {
    fn unfold(&self) -> UnfoldParams {
        UnfoldParams {
            height: self.height,
            width: self.width,
            threshold: self.threshold_deg.to_radians(),
            mode: match self.row_mode {
                RowRule::Literal => RowMode::Literal,
                RowRule::Robust => RowMode::Robust,
            },
        }
    }

    fn spherical(&self) -> SphericalParams {
        SphericalParams {
            height: self.height,
            width: self.width,
            fov_up: self.fov_up,
            fov_down: self.fov_down,
        }
    }
}

#[derive(Args)]
struct ProjectArgs {
    /// Point cloud (`x y z reflectance` float32 records).
    input: PathBuf,
    /// Per-point label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output range image.
    #[arg(short, long)]
    out: PathBuf,
    /// Depth preview (PGM).
    #[arg(long)]
    preview: Option<PathBuf>,
    /// Class preview (PPM); needs labels.
    #[arg(long)]
    class_preview: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Unfold)]
    mode: Mode,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct SceneSource {
    /// Scan configs (TOML).
    configs: Vec<PathBuf>,
    /// Also generate this many random street scenes.
    #[arg(long, default_value_t = 0)]
    random: usize,
    /// First random scene seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ego velocity of random scenes (m/s).
    #[arg(long, default_value_t = 10.0)]
    velocity: f64,
    /// Labeled classes of random scenes (3..=6).
    #[arg(long, default_value_t = 3)]
    classes: u16,
}

impl SceneSource {
    fn scans(&self) -> Result<Vec<(String, ScanConfig)>> {
        let mut out = Vec::new();
        for path in &self.configs {
            let name = path
                .file_stem()
                .map_or("scan".into(), |s| s.to_string_lossy().into_owned());
            out.push((name, load_scan_config(path)?));
        }
        for i in 0..self.random as u64 {
            let seed = self.seed.wrapping_add(i);
            out.push((
                format!("random_{seed}"),
                ScanConfig {
                    sensor: SensorModel::default(),
                    scene: SceneConfig::random(seed, self.classes, self.velocity),
                },
            ));
        }
        if out.is_empty() {
            return Err(Error::Config("no scan configs given and --random is 0".into()));
        }
        Ok(out)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    source: SceneSource,
    /// Directory receiving `<name>.bin`, `<name>.ego.bin` and `<name>.label`.
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    source: SceneSource,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (TOML); defaults apply when omitted.
    config: Option<PathBuf>,
    /// Override the step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Directory receiving `weights.bin` and `report.toml`.
    #[arg(short, long, default_value = "run")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    All,
}

#[derive(Args)]
struct EvalArgs {
    /// Training config the weights were produced with.
    config: Option<PathBuf>,
    #[arg(short, long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Val)]
    split: Split,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 2048)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Comma-separated presets.
    #[arg(long, value_delimiter = ',', default_value = "A,B,C,D,R*")]
    configs: Vec<Preset>,
}

fn print_stats(label: &str, s: &OcclusionStats) {
    println!(
        "{label:<8} points {:>8}  projected {:>8}  occluded {:>8}  out_of_range {:>6}",
        s.n_points, s.n_projected, s.n_occluded, s.n_out_of_range
    );
}

fn project(args: &ProjectArgs) -> Result<()> {
    let cloud = load_point_cloud(&args.input)?;
    let labels = args.labels.as_ref().map(load_labels).transpose()?;
    let (img, map) = match args.mode {
        Mode::Unfold => unfold_scan(&cloud, labels.as_ref(), &args.grid.unfold())?,
        Mode::Ego => project_ego_corrected(&cloud, labels.as_ref(), &args.grid.spherical())?,
    };
    write_range_image(&img, &args.out)?;
    if let Some(p) = &args.preview {
        write_depth_pgm(&img, p)?;
    }
    if let Some(p) = &args.class_preview {
        if labels.is_none() {
            return Err(Error::Config("--class-preview needs --labels".into()));
        }
        write_class_ppm(img.label(), img.height(), img.width(), p)?;
    }
    print_stats(
        match args.mode {
            Mode::Unfold => "unfold",
            Mode::Ego => "ego",
        },
        &occlusion_stats(&map),
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    for (name, cfg) in args.source.scans()? {
        let scan = generate_scan(&cfg.sensor, &cfg.scene)?;
        save_point_cloud(args.out_dir.join(format!("{name}.bin")), &scan.cloud)?;
        save_point_cloud(args.out_dir.join(format!("{name}.ego.bin")), &scan.cloud_ego_corrected)?;
        save_labels(args.out_dir.join(format!("{name}.label")), &scan.labels)?;
        println!("{name}: {} points", scan.len());
    }
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    for (name, cfg) in args.source.scans()? {
        let scan = generate_scan(&cfg.sensor, &cfg.scene)?;
        let (_, unfold) = unfold_scan(&scan.cloud, None, &args.grid.unfold())?;
        let (_, ego) = project_ego_corrected(&scan.cloud_ego_corrected, None, &args.grid.spherical())?;
        let (u, e) = (occlusion_stats(&unfold), occlusion_stats(&ego));
        println!("{name} (ego velocity {} m/s)", cfg.scene.ego_velocity);
        print_stats("unfold", &u);
        print_stats("ego", &e);
    }
    Ok(())
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    path.map_or_else(|| Ok(TrainConfig::default()), load_train_config)
}

fn print_metrics(label: &str, m: &EvalMetrics) {
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.4}"));
    println!(
        "{label}: {} scans, pixel mIoU {}, point mIoU {}, {:.1} ms/forward",
        m.samples,
        fmt(m.pixel.mean),
        fmt(m.point.as_ref().and_then(|p| p.mean)),
        m.forward_ms
    );
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = train_config(args.config.as_deref())?;
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    let (train_set, val_set) = split_by_parity(synthetic_dataset(&cfg.data, cfg.projection)?);
    let (mut net, mut report) = rangeseg::train::train(&cfg, &train_set)?;
    if !val_set.is_empty() {
        report.val = Some(evaluate(&net, &val_set, true)?);
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    save_weights(&mut net, args.out_dir.join("weights.bin"))?;
    let report_path = args.out_dir.join("report.toml");
    std::fs::write(&report_path, report.to_text()).map_err(|e| Error::Io {
        path: report_path.clone(),
        source: e,
    })?;
    println!(
        "trained {} steps, {} parameters, final loss {:.5}",
        report.loss_trace.len(),
        report.param_count,
        report.final_loss().unwrap_or(f64::NAN)
    );
    print_metrics("train", &report.train);
    if let Some(v) = &report.val {
        print_metrics("val", v);
    }
    println!("wrote {}", report_path.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = train_config(args.config.as_deref())?;
    let mut net = Network::build(&cfg.network_config())?;
    load_weights(&mut net, &args.weights)?;
    let all = synthetic_dataset(&cfg.data, cfg.projection)?;
    let (train_set, val_set) = split_by_parity(all.clone());
    let (label, samples) = match args.split {
        Split::Train => ("train", train_set),
        Split::Val => ("val", val_set),
        Split::All => ("all", all),
    };
    let m = evaluate(&net, &samples, true)?;
    print_metrics(label, &m);
    for (c, iou) in m.pixel.per_class.iter().enumerate() {
        if let Some(v) = iou {
            println!("  class {c}: pixel IoU {v:.4}");
        }
    }
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let configs: Vec<(String, NetworkConfig)> = args
        .configs
        .iter()
        .map(|&p| (p.to_string(), NetworkConfig::preset(p)))
        .collect();
    let rows = bench(&configs, args.height, args.width, args.reps)?;
    println!("{:<4} {:>12} {:>12} {:>12}", "cfg", "params", "min ms", "mean ms");
    for r in &rows {
        println!(
            "{:<4} {:>12} {:>12.1} {:>12.1}",
            r.name,
            r.params,
            r.min_ms(),
            r.mean_ms()
        );
    }
    let find = |n: &str| rows.iter().find(|r| r.name == n);
    if let (Some(d), Some(r)) = (find("D"), find("R*")) {
        println!("time(D) / time(R*) = {:.3}", d.min_ms() / r.min_ms());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match &cli.command {
        Command::Project(a) => project(a),
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
