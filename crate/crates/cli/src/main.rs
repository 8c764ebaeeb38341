//! `cropcomp` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data/format error,
//! 3 internal invariant violation. Failures print one `error: ` line to stderr.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cropcomp::{
    compress_image, compress_video, decode_flops, mask_pgm_bytes, parse_config, parse_grid_spec,
    prefill_flops, prefill_flops_at, probe_bias, read_tensor, reduction_ratio, retained_count,
    synthesize, write_tensor, CompressionConfig, CropLayout, Error, Fixture, ModelDims, ProbeScorer,
    ScoreGridF64, SynthSpec, Tensor, VideoSequenceF64,
};
use serde_json::{Map, Value};

const CONFIG_ENV: &str = "GC2_CONFIG";

#[derive(Parser)]
#[command(name = "cropcomp", version, about = "Thumbnail-guided visual token compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select tokens for a thumbnail and its crops.
    CompressImage(CompressImageArgs),
    /// Select tokens frame by frame for a [T, N, D] video tensor.
    CompressVideo(CompressVideoArgs),
    /// Print prefill/decode FLOPs and the reduction ratio.
    Flops(FlopsArgs),
    /// Compare crop budgets under forward and reversed crop order.
    ProbeBias(ProbeArgs),
    /// Write a synthetic fixture as GCT1 tensors.
    Synth(SynthArgs),
    /// Render a retention mask as a binary PGM.
    RenderMask(RenderArgs),
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON config file (defaults to $GC2_CONFIG when set).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// uniform, topk_mean, softmax_max or softmax_sum.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct CompressImageArgs {
    /// Thumbnail score grid, [h, w].
    #[arg(long)]
    thumb: PathBuf,
    /// Crop score grids: one [n, h, w] tensor or n [h, w] tensors.
    #[arg(long, num_args = 1.., required = true)]
    crops: Vec<PathBuf>,
    /// Crop grid as <rows>x<cols>.
    #[arg(long)]
    layout: String,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write thumb.pgm and crop_<j>.pgm masks here.
    #[arg(long)]
    render_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompressVideoArgs {
    #[arg(long)]
    video: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long)]
    tokens: u64,
    #[arg(long)]
    hidden: u64,
    #[arg(long)]
    ffn: u64,
    #[arg(long)]
    layers: u64,
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Args)]
struct FixtureArgs {
    /// SynthSpec JSON file; overrides the flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "2x2")]
    layout: String,
    /// Patch grid per view as <h>x<w>.
    #[arg(long, default_value = "8x8")]
    grid: String,
    #[arg(long, default_value_t = 8)]
    dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    #[value(name = "guided", alias = "globalcom2")]
    Guided,
    #[value(name = "position_weighted")]
    PositionWeighted,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, value_enum)]
    scorer: ProbeKind,
    #[command(flatten)]
    fixture: FixtureArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    fixture: FixtureArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Score grid, [h, w].
    #[arg(long)]
    scores: PathBuf,
    /// Comma-separated retained flat indices.
    #[arg(long, conflicts_with = "selection")]
    retained: Option<String>,
    /// Selection JSON written by compress-image.
    #[arg(long, requires = "view")]
    selection: Option<PathBuf>,
    /// `thumbnail` or a crop index.
    #[arg(long)]
    view: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) => 1,
            Error::Allocation(_) => 3,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid usage");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::CompressImage(args) => cmd_compress_image(args),
        Command::CompressVideo(args) => cmd_compress_video(args),
        Command::Flops(args) => cmd_flops(args),
        Command::ProbeBias(args) => cmd_probe_bias(args),
        Command::Synth(args) => cmd_synth(args),
        Command::RenderMask(args) => cmd_render_mask(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> CliResult<CompressionConfig> {
    let path = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut obj = match path {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Failure::usage("config must be a JSON object")),
                Err(e) => return Err(Failure::usage(format!("config is not valid JSON: {e}"))),
            }
        }
        None => Map::new(),
    };
    let mut set = |key: &str, v: Option<Value>| {
        if let Some(v) = v {
            obj.insert(key.to_string(), v);
        }
    };
    set("retention_ratio", args.ratio.map(Value::from));
    set("tau", args.tau.map(Value::from));
    set("alpha", args.alpha.map(Value::from));
    set("epsilon", args.epsilon.map(Value::from));
    set("strategy", args.strategy.clone().map(Value::from));
    Ok(parse_config(&Value::Object(obj).to_string())?)
}

/// Writes to stdout. A closed pipe ends output quietly instead of panicking.
fn emit(text: &str) -> CliResult {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::data(format!("cannot write stdout: {e}"))),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, json: &str) -> CliResult {
    fs::write(path, format!("{json}\n")).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn grid_from(t: &Tensor, what: &str) -> CliResult<ScoreGridF64> {
    if t.rank() != 2 {
        return Err(Failure::data(format!("{what} must be a rank-2 tensor, got dims {:?}", t.dims())));
    }
    Ok(ScoreGridF64::from_tensor(t)?)
}

fn load_crop_grids(paths: &[PathBuf]) -> CliResult<Vec<ScoreGridF64>> {
    if let [single] = paths {
        let t = read_tensor(single)?;
        if let [n, h, w] = *t.dims() {
            return t
                .data()
                .chunks_exact(h * w)
                .take(n)
                .map(|c| Ok(ScoreGridF64::new(h, w, c.iter().map(|&v| v as f64).collect())?))
                .collect();
        }
        return Ok(vec![grid_from(&t, "crop grid")?]);
    }
    paths.iter().map(|p| grid_from(&read_tensor(p)?, "crop grid")).collect()
}

fn cmd_compress_image(args: CompressImageArgs) -> CliResult {
    let cfg = resolve_config(&args.config)?;
    let (a, b) = parse_grid_spec(&args.layout)?;
    let thumb = grid_from(&read_tensor(&args.thumb)?, "thumbnail")?;
    let crops = load_crop_grids(&args.crops)?;
    let layout = CropLayout::new(a, b, thumb.rows(), thumb.cols())?;
    let result = compress_image(&thumb, &crops, &layout, &cfg)?;
    write_json(&args.out, &result.to_json())?;

    if let Some(dir) = args.render_dir {
        fs::create_dir_all(&dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
        let (h, w) = thumb.dims();
        let write = |name: String, retained: &[usize]| -> CliResult {
            let bytes = mask_pgm_bytes(h, w, retained)?;
            fs::write(dir.join(&name), bytes).map_err(|e| Failure::data(format!("cannot write {name}: {e}")))
        };
        write("thumb.pgm".into(), &result.thumbnail.retained)?;
        for crop in &result.crops {
            write(format!("crop_{}.pgm", crop.index), &crop.retained)?;
        }
    }
    Ok(())
}

fn cmd_compress_video(args: CompressVideoArgs) -> CliResult {
    let cfg = resolve_config(&args.config)?;
    let video = VideoSequenceF64::from_tensor(&read_tensor(&args.video)?)?;
    let selection = compress_video(&video, &cfg)?;
    let expected = retained_count(cfg.retention_ratio, video.num_frames() * video.tokens_per_frame());
    if selection.total_retained() != expected {
        return Err(Failure {
            code: 3,
            message: format!("retained {} tokens, expected {expected}", selection.total_retained()),
        });
    }
    write_json(&args.out, &selection.to_json())
}

fn cmd_flops(args: FlopsArgs) -> CliResult {
    if args.tokens == 0 || args.hidden == 0 || args.ffn == 0 || args.layers == 0 {
        return Err(Failure::usage("--tokens, --hidden, --ffn and --layers must be positive"));
    }
    if let Some(r) = args.ratio.filter(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Failure::usage(format!("--ratio must be in (0, 1], got {r}")));
    }
    let dims = ModelDims::new(args.tokens, args.hidden, args.ffn, args.layers)?;
    let mut lines = vec![
        format!("prefill_flops {:.3e}", prefill_flops::<f64>(&dims)),
        format!("decode_flops_per_token {:.3e}", decode_flops::<f64>(&dims)),
    ];
    if let Some(r) = args.ratio {
        lines.push(format!("retained_tokens {}", retained_count(r, args.tokens as usize)));
        lines.push(format!(
            "compressed_prefill_flops {:.3e}",
            prefill_flops_at::<f64>(&dims, r * args.tokens as f64)
        ));
        lines.push(format!("eta {:.3}", reduction_ratio::<f64>(&dims, r)));
    }
    emit(&lines.join("\n"))
}

fn fixture_spec(args: &FixtureArgs) -> CliResult<SynthSpec> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read spec {}: {e}", path.display())))?;
        return Ok(SynthSpec::from_json(&text)?);
    }
    let (a, b) = parse_grid_spec(&args.layout)?;
    let (h, w) = parse_grid_spec(&args.grid)?;
    if args.dim == 0 {
        return Err(Failure::usage("--dim must be positive"));
    }
    Ok(SynthSpec::random(args.seed, a, b, h, w, args.dim))
}

fn cmd_probe_bias(args: ProbeArgs) -> CliResult {
    let cfg = resolve_config(&args.config)?;
    let fixture: Fixture<f64> = synthesize(&fixture_spec(&args.fixture)?)?;
    let kind = match args.scorer {
        ProbeKind::Guided => ProbeScorer::Guided,
        ProbeKind::PositionWeighted => ProbeScorer::PositionWeighted,
    };
    let report = probe_bias(kind, &fixture, &cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    emit(&json)
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let spec = fixture_spec(&args.fixture)?;
    let fixture: Fixture<f32> = synthesize(&spec)?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
    write_tensor(&fixture.thumb_tensor(), dir.join("thumb.gct"))?;
    write_tensor(&fixture.crop_scores_tensor(), dir.join("crops.gct"))?;
    write_tensor(&fixture.crop_tokens_tensor(), dir.join("tokens.gct"))?;
    let json = serde_json::to_string_pretty(&spec).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    write_json(&dir.join("spec.json"), &json)
}

fn retained_from_selection(path: &Path, view: &str) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read selection {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::data(format!("bad selection JSON: {e}")))?;
    let entry = if view == "thumbnail" {
        v.get("thumbnail")
    } else {
        let j: usize = view
            .parse()
            .map_err(|_| Failure::usage(format!("--view must be `thumbnail` or a crop index, got {view:?}")))?;
        v.get("crops").and_then(|c| c.get(j))
    };
    let list = entry
        .and_then(|e| e.get("retained"))
        .and_then(Value::as_array)
        .ok_or_else(|| Failure::data(format!("selection has no retained list for view {view}")))?;
    list.iter()
        .map(|x| {
            x.as_u64()
                .map(|i| i as usize)
                .ok_or_else(|| Failure::data("retained indices must be non-negative integers"))
        })
        .collect()
}

fn cmd_render_mask(args: RenderArgs) -> CliResult {
    let grid = grid_from(&read_tensor(&args.scores)?, "score grid")?;
    let retained = match (&args.retained, &args.selection, &args.view) {
        (Some(list), _, _) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Failure::usage(format!("bad index {s:?}"))))
            .collect::<CliResult<Vec<_>>>()?,
        (None, Some(sel), Some(view)) => retained_from_selection(sel, view)?,
        _ => return Err(Failure::usage("give --retained or --selection with --view")),
    };
    let bytes = mask_pgm_bytes(grid.rows(), grid.cols(), &retained)?;
    fs::write(&args.out, bytes).map_err(|e| Failure::data(format!("cannot write {}: {e}", args.out.display())))
}
