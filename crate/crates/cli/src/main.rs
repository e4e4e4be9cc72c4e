use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use stickerloc::blur::check;
use stickerloc::identify::{identify_sticker, IdentifyConfig, ReferenceBank, DEFAULT_FEATURES_PER_REF};
use stickerloc::imaging::{decode_pgm, load_pgm, save_pgm};
use stickerloc::pipeline::{Frame, Localiser, PipelineConfig, TrackerState};
use stickerloc::scenario::{run_bench, BenchConfig};
use stickerloc::simulate::{render, RenderConfig};
use stickerloc::sticker::StickerArt;
use stickerloc::warehouse::{generate_grid_map, load_map, WarehouseMap};
use stickerloc::{BlurParams, CameraIntrinsics, Pose, WorldPoint};

#[derive(Parser)]
#[command(name = "stickerloc", version, about = "Ground-sticker visual localisation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a rectangular grid map as CSV.
    GenMap(GenMap),
    /// Write the printable artwork of one sticker as PGM.
    GenSticker(GenSticker),
    /// Render a synthetic frame and its ground truth.
    Render(RenderCmd),
    /// Localise one frame; prints one JSON line.
    Localize(Localize),
    /// Localise every PGM in a directory in name order; prints JSON lines.
    LocalizeStream(LocalizeStream),
    /// Identify the sticker in an image against stored references.
    Identify(IdentifyCmd),
    /// Shutter speed needed to keep motion blur within one pixel.
    BlurCheck(BlurCheck),
    /// Build per-sticker identification references for a map.
    BuildRefs(BuildRefs),
    /// Seeded render-and-localise benchmark.
    Bench(Bench),
}

#[derive(Args)]
struct GenMap {
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    /// Grid pitch, metres.
    #[arg(long, default_value_t = 1.0)]
    pitch: f64,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenSticker {
    #[arg(long)]
    id: u32,
    /// Pixels per module.
    #[arg(long, default_value_t = 10)]
    module_px: usize,
    /// Floor-level border, pixels.
    #[arg(long, default_value_t = 40)]
    border_px: usize,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct CameraArgs {
    /// Intrinsics file (`key = value` lines); built-in 5 MP camera when absent.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
}

impl CameraArgs {
    fn load(&self) -> Result<CameraIntrinsics> {
        match &self.intrinsics {
            Some(p) => CameraIntrinsics::load(p).with_context(|| format!("reading intrinsics {}", p.display())),
            None => Ok(CameraIntrinsics::default()),
        }
    }
}

#[derive(Args)]
struct RenderCmd {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    /// Camera placement `x,y,z,roll,pitch,yaw` (metres, radians). Zero
    /// angles look straight down; angles compose as Rz(yaw)·Ry(pitch)·Rx(roll).
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pose: Pose,
    /// Camera speed, m/s.
    #[arg(long, default_value_t = 0.0)]
    velocity: f64,
    /// Direction of travel, radians from world +X.
    #[arg(long, default_value_t = 0.0)]
    heading: f64,
    /// Reciprocal exposure time N, s⁻¹; no motion blur when absent.
    #[arg(long)]
    shutter: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
    /// Ground-truth file; defaults to the output path with a `.truth` extension.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct LocaliserArgs {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    /// Reference directory from `build-refs`; built in memory when absent.
    #[arg(long)]
    refs: Option<PathBuf>,
}

impl LocaliserArgs {
    fn build(&self) -> Result<Localiser> {
        let map = read_map(&self.map)?;
        let intr = self.camera.load()?;
        let bank = bank_for(&map, self.refs.as_deref())?;
        Ok(Localiser::new(map, intr, bank, PipelineConfig::default()))
    }
}

#[derive(Args)]
struct Localize {
    #[command(flatten)]
    loc: LocaliserArgs,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    timestamp: f64,
}

#[derive(Args)]
struct LocalizeStream {
    #[command(flatten)]
    loc: LocaliserArgs,
    /// Directory of PGM frames.
    #[arg(long)]
    dir: PathBuf,
    /// Frame rate used to timestamp frames.
    #[arg(long, default_value_t = 10.0)]
    fps: f64,
}

#[derive(Args)]
struct IdentifyCmd {
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Comma-separated candidate ids; all references when absent.
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<u32>,
    #[arg(long)]
    accept_min: Option<usize>,
    #[arg(long)]
    margin_ratio: Option<f64>,
}

#[derive(Args)]
struct BlurCheck {
    /// Focal length, metres.
    #[arg(long)]
    focal: f64,
    /// Camera to ground distance, metres.
    #[arg(long)]
    distance: f64,
    /// Camera speed, m/s.
    #[arg(long)]
    velocity: f64,
    /// Pixel pitch, metres.
    #[arg(long)]
    pixel_pitch: f64,
    /// Reciprocal exposure to judge, s⁻¹.
    #[arg(long)]
    shutter: Option<f64>,
}

#[derive(Args)]
struct BuildRefs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FEATURES_PER_REF)]
    features: usize,
}

#[derive(Args)]
struct Bench {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 1.0)]
    pitch: f64,
    /// Blur length of the blurred half of the trials, pixels.
    #[arg(long, default_value_t = 10.0)]
    blur_px: f64,
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))).collect::<Result<_, _>>()?;
    let [x, y, z, roll, pitch, yaw] = v[..] else {
        return Err(format!("expected 6 comma-separated numbers, got {}", v.len()));
    };
    Ok(Pose::from_camera_placement(WorldPoint::new(x, y, z), roll, pitch, yaw))
}

fn read_map(path: &Path) -> Result<WarehouseMap> {
    load_map(path).with_context(|| format!("reading map {}", path.display()))
}

fn bank_for(map: &WarehouseMap, refs: Option<&Path>) -> Result<ReferenceBank> {
    match refs {
        Some(dir) => ReferenceBank::load(dir).with_context(|| format!("reading references in {}", dir.display())),
        None => Ok(ReferenceBank::build(map, DEFAULT_FEATURES_PER_REF)?),
    }
}

fn json_line(out: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::GenMap(a) => {
            let csv = generate_grid_map(a.rows, a.cols, a.pitch)?.to_csv();
            match a.output {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(csv.as_bytes())?,
            }
        }
        Command::GenSticker(a) => {
            if a.module_px == 0 {
                bail!("--module-px must be positive");
            }
            let img = StickerArt::for_id(a.id).raster(a.module_px, a.border_px);
            save_pgm(&img, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
        }
        Command::Render(a) => {
            let map = read_map(&a.map)?;
            let intr = a.camera.load()?;
            let cfg = RenderConfig {
                velocity: a.velocity,
                heading: a.heading,
                exposure_reciprocal: a.shutter,
                noise_sigma: a.noise,
                seed: a.seed,
                ..RenderConfig::default()
            };
            let (img, truth) = render(&map, &intr, &a.pose, &cfg)?;
            save_pgm(&img, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
            let truth_path = a.truth.unwrap_or_else(|| a.output.with_extension("truth"));
            truth.save(&truth_path).with_context(|| format!("writing {}", truth_path.display()))?;
            info!("{} stickers visible", truth.visible.len());
        }
        Command::Localize(a) => {
            let loc = a.loc.build()?;
            let img = load_pgm(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
            let (res, _) = loc.process_frame(0, a.timestamp, &img, &TrackerState::default());
            json_line(&mut out, &res)?;
        }
        Command::LocalizeStream(a) => {
            if !(a.fps > 0.0) {
                bail!("--fps must be positive");
            }
            let loc = a.loc.build()?;
            let mut paths: Vec<PathBuf> = fs::read_dir(&a.dir)
                .with_context(|| format!("listing {}", a.dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                .collect();
            paths.sort();
            let fps = a.fps;
            let frames = paths.into_iter().enumerate().map(move |(i, p)| {
                let image = fs::read(&p).map_err(|e| e.to_string()).and_then(|b| decode_pgm(&b).map_err(|e| e.to_string()));
                Frame { id: i as u64, timestamp_s: i as f64 / fps, image: image.map_err(|e| format!("{}: {e}", p.display())) }
            });
            for res in loc.process_sequence(frames) {
                json_line(&mut out, &res)?;
                out.flush()?;
            }
        }
        Command::Identify(a) => {
            let bank = ReferenceBank::load(&a.refs).with_context(|| format!("reading references in {}", a.refs.display()))?;
            let img = load_pgm(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
            let mut cfg = IdentifyConfig::default();
            cfg.accept_min = a.accept_min.unwrap_or(cfg.accept_min);
            cfg.margin_ratio = a.margin_ratio.unwrap_or(cfg.margin_ratio);
            let candidates = if a.candidates.is_empty() { bank.ids().collect() } else { a.candidates };
            let id = identify_sticker(&img, &bank, &candidates, &cfg)?;
            json_line(&mut out, &id)?;
        }
        Command::BlurCheck(a) => {
            let params = BlurParams {
                focal: a.focal,
                distance: a.distance,
                velocity: a.velocity,
                shutter_reciprocal: a.shutter.unwrap_or(1.0),
                pixel_pitch: a.pixel_pitch,
            };
            let v = check(&params)?;
            let mut report = serde_json::json!({ "n_min": v.n_min });
            if let Some(n) = a.shutter {
                report["shutter_reciprocal"] = n.into();
                report["displacement_px"] = v.displacement_px.into();
                report["verdict"] = if v.sharp { "sharp" } else { "blurred" }.into();
            }
            json_line(&mut out, &report)?;
        }
        Command::BuildRefs(a) => {
            let map = read_map(&a.map)?;
            let bank = ReferenceBank::build(&map, a.features)?;
            fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
            let written = bank.save(&a.output)?;
            info!("wrote {} reference files", written.len());
            for p in written {
                writeln!(out, "{}", p.display())?;
            }
        }
        Command::Bench(a) => {
            let map = generate_grid_map(a.rows, a.cols, a.pitch)?;
            let bank = ReferenceBank::build(&map, DEFAULT_FEATURES_PER_REF)?;
            let loc = Localiser::new(map, CameraIntrinsics::default(), bank, PipelineConfig::default());
            let report = run_bench(&loc, &BenchConfig { seed: a.seed, trials: a.trials, blur_px: a.blur_px, ..BenchConfig::default() });
            write!(out, "{report}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
