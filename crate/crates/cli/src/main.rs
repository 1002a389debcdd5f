//! `dare`: generate scenes, fit fields, render, compress and benchmark.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::Value;

use dare::codec::{decode_model, encode_model};
use dare::dtcwt2d::{DtcwtPlan, DwtPlan};
use dare::field::{Mode, RepKind};
use dare::filters::{DualTreeFilterSet, DwtFilterSet, Wavelet};
use dare::model::{Checkpoint, Model, ModelConfig};
use dare::optim::{evaluate, fit, metrics_csv, TrainConfig};
use dare::render::write_ppm;
use dare::scenes::{generate_dataset, scene_by_name, Dataset};
use dare::{Error, Grid};

#[derive(Parser)]
#[command(name = "dare", version, about = "Direction-aware wavelet plane fields for dynamic scenes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run on a single thread. Results are identical either way; this only
    /// removes scheduling variation from timings.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic scene into a dataset directory.
    Generate {
        #[arg(long)]
        scene: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image width and height in pixels.
        #[arg(long)]
        size: Option<usize>,
        /// Number of frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Fit a field to a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// JSON file `{"model": {...}, "train": {...}}`; both parts optional.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rep: Option<String>,
        #[arg(long)]
        wavelet: Option<String>,
        #[arg(long)]
        lambda_mask: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write a full-precision JSON checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render one view of a model.
    Render {
        /// `.dare` file or JSON checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Dataset whose cameras to use.
        #[arg(long, conflicts_with = "scene")]
        data: Option<PathBuf>,
        /// Scene whose camera ring to use, when no dataset is given.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        camera: usize,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// JSON checkpoint to `.dare`.
    Compress {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// `.dare` to JSON checkpoint.
    Decompress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-camera PSNR on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Time the 2D forward and inverse transform of one family.
    Bench {
        #[arg(long)]
        wavelet: String,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
}

/// Error category printed as the second field of the error line.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Config(String),
    Codec(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(..) => "io",
            CliError::Config(_) => "config",
            CliError::Codec(_) => "codec",
            CliError::Data(_) => "data",
            CliError::Runtime(_) => "runtime",
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(..) => 3,
            CliError::Config(_) => 4,
            CliError::Codec(_) => 5,
            CliError::Data(_) => 6,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(p, e) => format!("{}: {e}", p.display()),
            CliError::Usage(m) | CliError::Config(m) | CliError::Codec(m) | CliError::Data(m) | CliError::Runtime(m) => {
                m.clone()
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => CliError::Config(e.to_string()),
            Error::Codec(_) => CliError::Codec(e.to_string()),
            Error::Image(_) | Error::Empty(_) | Error::Shape(_) => CliError::Data(e.to_string()),
            Error::Io(io) => CliError::Io(PathBuf::new(), io),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write(path: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn load_dataset(dir: &Path) -> Res<Dataset> {
    if !dir.join("manifest.json").is_file() {
        return Err(CliError::Io(dir.join("manifest.json"), std::io::ErrorKind::NotFound.into()));
    }
    Dataset::load(dir).map_err(|e| match e {
        Error::Io(io) => CliError::Io(dir.to_path_buf(), io),
        other => other.into(),
    })
}

/// Loads a `.dare` file or a JSON checkpoint, told apart by the magic bytes.
fn load_model(path: &Path) -> Res<Model> {
    let bytes = read(path)?;
    if bytes.starts_with(dare::codec::MAGIC) {
        Ok(decode_model(&bytes)?)
    } else {
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Codec(format!("{}: not a .dare file or checkpoint: {e}", path.display())))?;
        Ok(Model::from_checkpoint(ck)?)
    }
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t.clone(),
    }
}

struct FitFlags {
    rep: Option<String>,
    wavelet: Option<String>,
    lambda_mask: Option<f64>,
    iterations: Option<usize>,
    seed: Option<u64>,
}

/// Defaults, then values implied by the dataset, then the config file, then flags.
fn resolve_config(data: &Dataset, file: Option<&Path>, flags: &FitFlags) -> Res<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let s = &data.scene;
    model.field.bounds_min = s.bounds_min;
    model.field.bounds_max = s.bounds_max;
    model.field.time_range = s.time_range;
    model.render.background = s.background;
    if data.times.len() == 1 {
        model.field.mode = Mode::Static3d;
    }
    let mut mv = serde_json::to_value(&model).map_err(Error::from)?;
    let mut tv = serde_json::to_value(TrainConfig::default()).map_err(Error::from)?;
    if let Some(path) = file {
        let user: Value = serde_json::from_slice(&read(path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let obj = user.as_object().ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        if let Some(k) = obj.keys().find(|k| *k != "model" && *k != "train") {
            return Err(CliError::Config(format!("unknown config section `{k}`")));
        }
        if let Some(m) = obj.get("model") {
            merge(&mut mv, m);
        }
        if let Some(t) = obj.get("train") {
            merge(&mut tv, t);
        }
    }
    let mut model: ModelConfig =
        serde_json::from_value(mv).map_err(|e| CliError::Config(format!("model config: {e}")))?;
    let mut train: TrainConfig =
        serde_json::from_value(tv).map_err(|e| CliError::Config(format!("train config: {e}")))?;
    if let Some(r) = &flags.rep {
        model.field.rep = r.parse::<RepKind>()?;
    }
    if let Some(w) = &flags.wavelet {
        model.field.wavelet = Some(w.parse::<Wavelet>()?);
    }
    if let Some(l) = flags.lambda_mask {
        train.lambda_mask = l;
    }
    if let Some(i) = flags.iterations {
        train.iterations = i;
    }
    if let Some(s) = flags.seed {
        train.seed = s;
    }
    model.validate()?;
    train.validate(model.field.spatial_res)?;
    Ok((model, train))
}

fn run(cli: Cli) -> Res<()> {
    match cli.cmd {
        Cmd::Generate { scene, out, seed, size, frames } => {
            let mut spec = scene_by_name(&scene)?;
            if size.is_some() || frames.is_some() {
                let (w, f) = (size.unwrap_or(spec.width), frames.unwrap_or(spec.n_times));
                spec = spec.resized(w, w, f);
            }
            let data = generate_dataset(&spec, seed)?;
            data.save(&out).map_err(|e| match e {
                Error::Io(io) => CliError::Io(out.clone(), io),
                other => other.into(),
            })?;
            println!("wrote {} images of `{}` to {}", data.cameras.len() * data.times.len(), scene, out.display());
        }
        Cmd::Fit { data, config, rep, wavelet, lambda_mask, iterations, seed, out, log, checkpoint } => {
            let ds = load_dataset(&data)?;
            let flags = FitFlags { rep, wavelet, lambda_mask, iterations, seed };
            let (mc, tc) = resolve_config(&ds, config.as_deref(), &flags)?;
            let every = (tc.iterations / 20).max(1);
            let start = Instant::now();
            let (state, rows) = fit(&ds, mc, tc, |r| {
                if r.iter % every == 0 {
                    eprintln!("iter {:>6}  loss {:.6}  psnr {:6.2}  sparsity {:.4}", r.iter, r.loss, r.psnr, r.sparsity);
                }
            })?;
            let model = state.into_model()?;
            write(&out, &encode_model(&model)?)?;
            if let Some(p) = log {
                write(&p, metrics_csv(&rows).as_bytes())?;
            }
            if let Some(p) = checkpoint {
                write(&p, &serde_json::to_vec(&model.checkpoint()).map_err(Error::from)?)?;
            }
            println!("fit {} iterations in {:.1}s, wrote {}", rows.len(), start.elapsed().as_secs_f64(), out.display());
        }
        Cmd::Render { model, data, scene, camera, time, out } => {
            let m = load_model(&model)?;
            let cams = match (data, scene) {
                (Some(d), _) => load_dataset(&d)?.cameras,
                (None, Some(s)) => scene_by_name(&s)?.cameras()?,
                (None, None) => return Err(CliError::Usage("render needs --data or --scene for cameras".into())),
            };
            let cam = cams
                .get(camera)
                .ok_or_else(|| CliError::Usage(format!("camera {camera} out of range (have {})", cams.len())))?;
            let img = m.render_image(cam, time)?;
            write(&out, &write_ppm(&img))?;
            println!("wrote {}x{} image to {}", img.width, img.height, out.display());
        }
        Cmd::Compress { checkpoint, out } => {
            let m = load_model(&checkpoint)?;
            let bytes = encode_model(&m)?;
            write(&out, &bytes)?;
            println!("wrote {} bytes to {}", bytes.len(), out.display());
        }
        Cmd::Decompress { model, out } => {
            let m = load_model(&model)?;
            write(&out, &serde_json::to_vec(&m.checkpoint()).map_err(Error::from)?)?;
            println!("wrote checkpoint to {}", out.display());
        }
        Cmd::Eval { model, data } => {
            let m = load_model(&model)?;
            let ds = load_dataset(&data)?;
            println!("{:<8} {:<6} {:>8}", "camera", "split", "psnr");
            for ci in 0..ds.cameras.len() {
                let split = if ds.test_cameras.contains(&ci) { "test" } else { "train" };
                println!("{ci:<8} {split:<6} {:>8.3}", evaluate(&m, &ds, &[ci])?);
            }
            for (name, cams) in [("train", &ds.train_cameras), ("test", &ds.test_cameras)] {
                if !cams.is_empty() {
                    println!("{:<8} {name:<6} {:>8.3}", "mean", evaluate(&m, &ds, cams)?);
                }
            }
        }
        Cmd::Bench { wavelet, size, reps } => bench(&wavelet, size, reps)?,
    }
    Ok(())
}

fn bench(wavelet: &str, size: usize, reps: usize) -> Res<()> {
    let w: Wavelet = wavelet.parse()?;
    let x = Grid::from_fn(size, size, |r, c| ((r * 7919 + c * 104_729) % 1000) as f64 / 500.0 - 1.0);
    let reps = reps.max(1);
    let start = Instant::now();
    let mut err = 0.0f64;
    for _ in 0..reps {
        let y = match w {
            Wavelet::DualTree(id) => {
                let plan = DtcwtPlan::new(&DualTreeFilterSet::new(id), size, size)?;
                plan.inverse(&plan.forward(&x)?)?
            }
            Wavelet::Dwt(id) => {
                let plan = DwtPlan::new(&DwtFilterSet::new(id), size, size)?;
                plan.inverse(&plan.forward(&x)?)?
            }
        };
        err = err.max(x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let secs = start.elapsed().as_secs_f64();
    println!("wavelet {}  size {size}x{size}  reps {reps}", w.name());
    println!("pr_max_error {err:.3e}");
    println!("round_trips_per_sec {:.2}", reps as f64 / secs);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return ExitCode::from(2);
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error: usage: {first}");
            eprintln!("{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: usage: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: runtime: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.message().replace('\n', " "));
            ExitCode::from(e.code())
        }
    }
}
