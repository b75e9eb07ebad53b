//! `drfc` command-line tool: encode, decode, synthesize forward frames, run
//! RD sweeps and generate synthetic test sequences.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use drfc::io::{read_pgm, read_pose_json, read_y4m, write_pgm, write_pose_json, write_y4m, PoseDocument, Y4mMeta};
use drfc::metrics::sequence_psnr;
use drfc::model::{
    DEFAULT_BUMP_RADIUS, DEFAULT_GOP, DEFAULT_PATCH_RADIUS, DEFAULT_QPS, DEFAULT_SEARCH_RANGE,
};
use drfc::sweep::{run_sweep, SweepError, SweepSpec};
use drfc::synth::{
    load_external_forward_frame, open_frame_store, synthesize_linear, synthesize_patchwarp,
    FrameStore, SynthInputs,
};
use drfc::synthetic::{gen_synthetic, MotionClass, SyntheticParams};
use drfc::{
    decode_sequence, encode_sequence, DecodeOptions, EncoderConfig, ForwardRefMode, Frame,
    ModeDecision, Pose,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn input(e: impl ToString) -> CliError {
    CliError::Input(e.to_string())
}

fn at<E: ToString>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {}", path.display(), e.to_string()))
}

#[derive(Debug, Parser)]
#[command(name = "drfc", version, about = "Pose-driven forward-referencing video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a Y4M sequence into a container.
    Encode(EncodeArgs),
    /// Decode a container back to Y4M.
    Decode(DecodeArgs),
    /// Synthesize one forward-reference frame for inspection.
    Synth(SynthArgs),
    /// Encode and decode at several QPs per forward mode; print RD CSV and BD lines.
    Sweep(SweepArgs),
    /// Write a deterministic stick-figure sequence and its ground-truth poses.
    GenSynthetic(GenArgs),
}

/// Forward mode plus the frame store path for `external:<path>`.
#[derive(Debug, Clone, PartialEq)]
struct ForwardArg {
    mode: ForwardRefMode,
    store: Option<PathBuf>,
}

fn parse_forward(s: &str) -> Result<ForwardArg, String> {
    let (name, store) = match s.split_once(':') {
        Some((n, p)) => (n, Some(PathBuf::from(p))),
        None => (s, None),
    };
    let mode = match name {
        "off" => ForwardRefMode::Off,
        "linear" => ForwardRefMode::Linear,
        "patchwarp" => ForwardRefMode::PatchWarp,
        "external" => ForwardRefMode::External,
        other => return Err(format!("unknown forward mode {other:?}")),
    };
    match (mode, &store) {
        (ForwardRefMode::External, None) => Err("external mode needs a frame store: external:<path>".into()),
        (ForwardRefMode::External, Some(p)) if p.as_os_str().is_empty() => {
            Err("external mode needs a frame store: external:<path>".into())
        }
        (ForwardRefMode::External, _) | (_, None) => Ok(ForwardArg { mode, store }),
        (_, Some(_)) => Err(format!("mode {name} takes no path")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecisionArg {
    Sad,
    Lagrangian,
}

impl From<DecisionArg> for ModeDecision {
    fn from(d: DecisionArg) -> Self {
        match d {
            DecisionArg::Sad => ModeDecision::Sad,
            DecisionArg::Lagrangian => ModeDecision::Lagrangian,
        }
    }
}

#[derive(Debug, Args)]
struct Radii {
    /// Bump radius of the linear synthesizer.
    #[arg(long, default_value_t = DEFAULT_BUMP_RADIUS, value_parser = clap::value_parser!(u32).range(1..))]
    bump_radius: u32,
    /// Patch radius of the patch-warp synthesizer.
    #[arg(long, default_value_t = DEFAULT_PATCH_RADIUS, value_parser = clap::value_parser!(u32).range(1..))]
    patch_radius: u32,
}

#[derive(Debug, Args)]
struct CodingArgs {
    #[arg(long, default_value_t = DEFAULT_GOP, value_parser = clap::value_parser!(u32).range(1..=255))]
    gop: u32,
    #[arg(long, default_value_t = DEFAULT_SEARCH_RANGE, value_parser = clap::value_parser!(u32).range(1..=64))]
    search_range: u32,
    #[arg(long, value_enum, default_value_t = DecisionArg::Sad)]
    mode_decision: DecisionArg,
    #[command(flatten)]
    radii: Radii,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Pose JSON; required by linear and patchwarp.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=51))]
    qp: u8,
    /// off, linear, patchwarp or external:<dir|file.y4m>
    #[arg(long, default_value = "off", value_parser = parse_forward)]
    forward: ForwardArg,
    #[arg(long)]
    out: PathBuf,
    /// Also write the encoder reconstruction as Y4M.
    #[arg(long)]
    recon: Option<PathBuf>,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Frame store for containers encoded in external mode.
    #[arg(long)]
    external: Option<PathBuf>,
    #[command(flatten)]
    radii: Radii,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Decoded I-frame as PGM, or Y4M (first frame is used).
    #[arg(long)]
    iframe: PathBuf,
    #[arg(long)]
    poses: Option<PathBuf>,
    /// 1-based index of the target frame.
    #[arg(long)]
    t: usize,
    /// 1-based index of the I-frame's pose.
    #[arg(long, default_value_t = 1)]
    i_index: usize,
    /// linear, patchwarp or external:<dir|file.y4m>
    #[arg(long, value_parser = parse_forward)]
    mode: ForwardArg,
    /// Output path; `.pgm` writes luma only, anything else Y4M.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    radii: Radii,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QPS, value_parser = clap::value_parser!(u8).range(0..=51))]
    qps: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values = ["off", "patchwarp"], value_parser = parse_forward)]
    modes: Vec<ForwardArg>,
    /// RD CSV destination; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory receiving one container per cell.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u16).range(1..))]
    width: u16,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u16).range(1..))]
    height: u16,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    #[arg(long, default_value_t = 1)]
    seed: u32,
    #[arg(long, value_parser = clap::value_parser!(MotionClass))]
    motion: MotionClass,
    #[arg(long)]
    out_y4m: PathBuf,
    #[arg(long)]
    out_poses: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(at(path))
}

fn create(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<(), String>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| at(path)(e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush().map_err(|e| e.to_string()))
        .map_err(at::<String>(path))
}

fn load_video(path: &Path) -> Result<(Vec<Frame>, Y4mMeta), CliError> {
    read_y4m(&mut open(path)?).map_err(|e| at(path)(e))
}

fn load_poses(path: &Path, width: usize, height: usize) -> Result<Vec<Pose>, CliError> {
    let doc = read_pose_json(&mut open(path)?).map_err(|e| at(path)(e))?;
    if (doc.width, doc.height) != (width, height) {
        return Err(at(path)(format!(
            "pose canvas {}x{} does not match video {width}x{height}",
            doc.width, doc.height
        )));
    }
    Ok(doc.poses)
}

fn optional_poses(
    path: Option<&Path>,
    modes: &[ForwardRefMode],
    frames: &[Frame],
) -> Result<Option<Vec<Pose>>, CliError> {
    if let Some(m) = modes.iter().find(|m| m.carries_poses()) {
        if path.is_none() {
            return Err(input(format!("--forward {} needs --poses", m.name())));
        }
    }
    path.map(|p| load_poses(p, frames[0].width(), frames[0].height()))
        .transpose()
}

fn store(path: Option<&Path>) -> Result<Option<Box<dyn FrameStore>>, CliError> {
    path.map(|p| open_frame_store(p).map_err(|e| at(p)(e)))
        .transpose()
}

fn config(coding: &CodingArgs, qp: u8, mode: ForwardRefMode) -> EncoderConfig {
    EncoderConfig {
        qp,
        gop_size: coding.gop,
        search_range: coding.search_range,
        forward_ref_mode: mode,
        mode_decision: coding.mode_decision.into(),
        patch_radius: coding.radii.patch_radius,
        bump_radius: coding.radii.bump_radius,
    }
}

fn write_video(path: &Path, frames: &[Frame]) -> Result<(), CliError> {
    let meta = Y4mMeta::new(frames[0].width(), frames[0].height(), frames[0].chroma());
    create(path, |w| write_y4m(w, frames, &meta).map_err(|e| e.to_string()))
}

fn cmd_encode(a: &EncodeArgs) -> Result<(), CliError> {
    let (frames, _) = load_video(&a.input)?;
    if frames.is_empty() {
        return Err(at(&a.input)("no frames"));
    }
    let poses = optional_poses(a.poses.as_deref(), &[a.forward.mode], &frames)?;
    let external = store(a.forward.store.as_deref())?;
    let cfg = config(&a.coding, a.qp, a.forward.mode);
    let enc = encode_sequence(&frames, poses.as_deref(), &cfg, external.as_deref()).map_err(input)?;
    create(&a.out, |w| w.write_all(&enc.bytes).map_err(|e| e.to_string()))?;
    if let Some(recon) = &a.recon {
        write_video(recon, &enc.recon)?;
    }
    let psnr = sequence_psnr(&frames, &enc.recon).map_err(|e| CliError::Internal(e.to_string()))?;
    let (w, h) = (frames[0].width(), frames[0].height());
    println!(
        "frames={} bits={} bpp={:.6} psnr={}",
        frames.len(),
        enc.total_bits(),
        enc.total_bits() as f64 / (w * h * frames.len()) as f64,
        psnr
    );
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    open(&a.input)?
        .read_to_end(&mut bytes)
        .map_err(|e| at(&a.input)(e))?;
    let external = store(a.external.as_deref())?;
    let opts = DecodeOptions {
        bump_radius: a.radii.bump_radius,
        patch_radius: a.radii.patch_radius,
        external: external.as_deref(),
    };
    let dec = decode_sequence(&bytes, &opts).map_err(at(&a.input))?;
    write_video(&a.out, &dec.frames)
}

fn load_iframe(path: &Path) -> Result<Frame, CliError> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        read_pgm(&mut open(path)?).map_err(at(path))
    } else {
        load_video(path)?
            .0
            .into_iter()
            .next()
            .ok_or_else(|| at(path)("no frames"))
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let i_frame = load_iframe(&a.iframe)?;
    let out = match a.mode.mode {
        ForwardRefMode::Off => return Err(input("synth needs linear, patchwarp or external")),
        ForwardRefMode::External => {
            let path = a.mode.store.as_deref().expect("external carries a path");
            let s = open_frame_store(path).map_err(at(path))?;
            load_external_forward_frame(
                s.as_ref(),
                a.t,
                i_frame.width(),
                i_frame.height(),
                i_frame.chroma(),
            )
            .map_err(input)?
        }
        mode => {
            let path = a
                .poses
                .as_deref()
                .ok_or_else(|| input(format!("--mode {} needs --poses", mode.name())))?;
            let doc: PoseDocument = read_pose_json(&mut open(path)?).map_err(at(path))?;
            let n = doc.poses.len();
            let pick = |t: usize, flag: &str| {
                doc.poses
                    .get(t.wrapping_sub(1))
                    .map(Pose::quantize)
                    .ok_or_else(|| input(format!("{flag} {t} outside 1..={n}")))
            };
            let pose_i = pick(a.i_index, "--i-index")?;
            let pose_t = pick(a.t, "--t")?;
            let inputs = SynthInputs::new(&i_frame, &pose_i, &pose_t, (doc.width, doc.height)).map_err(input)?;
            if mode == ForwardRefMode::Linear {
                synthesize_linear(&inputs, a.radii.bump_radius)
            } else {
                synthesize_patchwarp(&inputs, a.radii.patch_radius)
            }
        }
    };
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        create(&a.out, |w| write_pgm(w, &out).map_err(|e| e.to_string()))
    } else {
        write_video(&a.out, std::slice::from_ref(&out))
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let (frames, _) = load_video(&a.input)?;
    if frames.is_empty() {
        return Err(at(&a.input)("no frames"));
    }
    let modes: Vec<ForwardRefMode> = a.modes.iter().map(|m| m.mode).collect();
    let poses = optional_poses(a.poses.as_deref(), &modes, &frames)?;
    let mut stores = a.modes.iter().filter_map(|m| m.store.as_deref());
    let store_path = stores.next();
    if stores.any(|p| Some(p) != store_path) {
        return Err(input("all external modes must share one frame store"));
    }
    let external = store(store_path)?;
    let spec = SweepSpec {
        qps: a.qps.clone(),
        modes,
        base: config(&a.coding, 0, ForwardRefMode::Off),
    };
    let result = run_sweep(&frames, poses.as_deref(), &spec, external.as_deref()).map_err(|e| match e {
        SweepError::Drift { .. } => CliError::Internal(e.to_string()),
        e => input(e),
    })?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(at(dir))?;
        for cell in result.cells.iter().flatten() {
            let path = dir.join(format!("{}_qp{}.drf", cell.mode.name(), cell.qp));
            create(&path, |w| w.write_all(&cell.bytes).map_err(|e| e.to_string()))?;
        }
    }
    let stdout = io::stdout();
    match &a.csv {
        Some(path) => create(path, |w| result.write_csv(w).map_err(|e| e.to_string()))?,
        None => result
            .write_csv(&mut stdout.lock())
            .map_err(|e| CliError::Internal(e.to_string()))?,
    }
    for line in result.bd_lines() {
        println!("{}", line.summary());
    }
    Ok(())
}

fn cmd_gen_synthetic(a: &GenArgs) -> Result<(), CliError> {
    let seq = gen_synthetic(&SyntheticParams {
        width: a.width as usize,
        height: a.height as usize,
        frames: a.frames as usize,
        seed: a.seed,
        motion: a.motion,
    });
    let name = a
        .out_y4m
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".into());
    write_video(&a.out_y4m, &seq.frames)?;
    create(&a.out_poses, |w| {
        write_pose_json(w, &seq.pose_document(&name)).map_err(|e| e.to_string())
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("{}", first.trim());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
