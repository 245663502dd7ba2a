use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use burst_core::align::{align_burst, AlignConfig, FlowField};
use burst_core::budget::{check_budget, count_flops, BudgetInput, MacConvention};
use burst_core::cfa::CfaPattern;
use burst_core::io::{load_scene, save_scene, write_flow, write_tiff16, TiffImage};
use burst_core::isp::{restore_scene, restore_scene_detailed, tiled_restore, RestoreConfig};
use burst_core::metrics::evaluate_set;
use burst_core::synth::{
    procedural_hdr, rng_stream, synth_scene, BlurKernel, FrameSpec, NoiseParams, RigidTransform, SceneSpec,
    SynthOptions, DEFAULT_FRAME_ORDER,
};
use burst_core::{Error, Result};

#[derive(Parser)]
#[command(name = "burst", version, about = "Multi-exposure RAW burst synthesis, restoration and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize degraded nine-frame bursts with ground truth.
    Synth(SynthArgs),
    /// Align, merge and render one scene directory to a 16-bit TIFF.
    Restore(RestoreArgs),
    /// Per-scene and mean PSNR/SSIM of predictions against ground truth.
    Eval(EvalArgs),
    /// Parameter and FLOP totals against the challenge limits.
    Budget(BudgetArgs),
    /// Closed-loop identity and flow-recovery checks on small scenes.
    Selfcheck,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scenes: usize,
    #[arg(long)]
    seed: u64,
    /// Frame size as HxW.
    #[arg(long, default_value = "768x1536", value_parser = parse_size)]
    size: (usize, usize),
    /// Low, mid and high exposure gains.
    #[arg(long, value_parser = parse_gains)]
    gains: Option<[f64; 3]>,
    #[arg(long)]
    max_shift: Option<f64>,
    #[arg(long)]
    max_rot: Option<f64>,
    #[arg(long)]
    blur_len: Option<f64>,
    #[arg(long)]
    fullwell: Option<f64>,
    #[arg(long)]
    read_sigma: Option<f64>,
    #[arg(long, default_value = "rggb", value_parser = parse_cfa)]
    cfa: CfaPattern,
    /// Leave degradation parameters out of the manifests.
    #[arg(long)]
    opaque: bool,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "overlap")]
    tile: Option<usize>,
    #[arg(long, requires = "tile")]
    overlap: Option<usize>,
    /// Write the flow of every non-reference frame here.
    #[arg(long, conflicts_with = "tile")]
    dump_flow: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Add Charbonnier, FFT and composite loss diagnostics.
    #[arg(long)]
    losses: bool,
}

#[derive(Args)]
struct BudgetArgs {
    /// Restore configuration or explicit op graph; defaults to the restore pipeline.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "768x1536", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 2)]
    mac_flops: u8,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    Ok((h, w))
}

fn parse_gains(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected three gains, got {}", v.len()))
}

fn parse_cfa(s: &str) -> std::result::Result<CfaPattern, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let (h, w) = a.size;
    let mut opts = SynthOptions::default().with_size(w, h);
    opts.cfa = a.cfa;
    if let Some(g) = a.gains {
        opts.gains = g;
    }
    if let Some(v) = a.max_shift {
        opts.max_shift = v;
    }
    if let Some(v) = a.max_rot {
        opts.max_rot_deg = v;
    }
    if let Some(v) = a.blur_len {
        opts.max_blur_len = v;
    }
    if a.fullwell.is_some() || a.read_sigma.is_some() {
        opts.noise = NoiseParams::new(
            a.fullwell.unwrap_or(opts.noise.shot_fullwell),
            a.read_sigma.unwrap_or(opts.noise.read_sigma),
        )?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let ids: Vec<String> = (0..a.scenes as u64)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed + i;
            let spec = SceneSpec::randomized(seed, &opts);
            spec.validate()?;
            let scene = synth_scene(&procedural_hdr(seed, w, h)?, &spec)?;
            save_scene(&scene, &a.out.join(&scene.id), a.opaque)?;
            Ok(scene.id)
        })
        .collect::<Result<_>>()?;
    for id in ids {
        println!("{id}");
    }
    Ok(())
}

fn restore(a: &RestoreArgs) -> Result<()> {
    let cfg: RestoreConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RestoreConfig::default(),
    };
    let scene = load_scene(&a.scene)?;
    let image = match (a.tile, a.overlap) {
        (Some(tile), Some(overlap)) => tiled_restore(&scene, tile, overlap, &cfg)?,
        _ if a.dump_flow.is_some() => {
            let out = restore_scene_detailed(&scene, &cfg)?;
            let dir = a.dump_flow.as_ref().unwrap();
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (k, flow) in out.aligned.flows.iter().enumerate().skip(1) {
                write_flow(flow, &dir.join(format!("flow_{k}.bin")))?;
            }
            out.image
        }
        _ => restore_scene(&scene, &cfg)?,
    };
    write_tiff16(&TiffImage::Rgb(image), &a.out)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate_set(&a.pred, &a.gt, a.losses)?;
    write_json(&report, &a.report)?;
    print!("{}", report.to_table(None, None, None));
    Ok(())
}

/// Returns whether the graph fits the limits.
fn budget(a: &BudgetArgs) -> Result<bool> {
    let input = match &a.config {
        Some(p) => read_json(p)?,
        None => BudgetInput::Pipeline(RestoreConfig::default()),
    };
    let (h, w) = a.size;
    let report = count_flops(&input.graph(h, w)?, (h, w), MacConvention::from_flops(a.mac_flops)?)?;
    let check = check_budget(&report);
    print!("{}", report.to_table());
    println!(
        "{} (params margin {:.1}%, FLOPs margin {:.1}%)",
        if check.pass { "PASS" } else { "FAIL" },
        check.param_margin_pct,
        check.flop_margin_pct
    );
    Ok(check.pass)
}

const CHECK_H: usize = 192;
const CHECK_W: usize = 384;

/// Clean scene restored end to end: worst interior error in 8-bit LSB.
fn identity_error() -> Result<f64> {
    let opts = SynthOptions::default().with_size(CHECK_W, CHECK_H).clean();
    let spec = SceneSpec::randomized(1, &opts);
    let scene = synth_scene(&procedural_hdr(1, CHECK_W, CHECK_H)?, &spec)?;
    let out = restore_scene(&scene, &RestoreConfig::default())?;
    let border = 4;
    let mut worst = 0.0f64;
    for (a, b) in out.channels().iter().zip(scene.gt.channels()) {
        for y in border..CHECK_H - border {
            for x in border..CHECK_W - border {
                worst = worst.max((a.get(x, y) - b.get(x, y)).abs() * 255.0);
            }
        }
    }
    Ok(worst)
}

/// Share of interior flow tiles within `tol` packed pixels of the true
/// whole-pixel shifts.
fn flow_recovery(seeds: std::ops::Range<u64>, noise: NoiseParams, tol: f64) -> Result<f64> {
    let cfg = AlignConfig::default();
    let (mut good, mut total) = (0usize, 0usize);
    for seed in seeds {
        let mut rng = rng_stream(seed, 0xF10);
        let shifts: Vec<(i32, i32)> = (0..DEFAULT_FRAME_ORDER.len())
            .map(|k| {
                use rand::Rng;
                if k == 0 {
                    (0, 0)
                } else {
                    (rng.random_range(-4..=4), rng.random_range(-4..=4))
                }
            })
            .collect();
        let frames = DEFAULT_FRAME_ORDER
            .iter()
            .zip(&shifts)
            .map(|(&group, &(sx, sy))| FrameSpec {
                group,
                transform: RigidTransform::translation(2.0 * sx as f64, 2.0 * sy as f64),
                blur: BlurKernel::IDENTITY,
            })
            .collect();
        let spec = SceneSpec {
            seed,
            gains: [1.0, 4.0, 16.0],
            frames,
            noise,
            cfa: CfaPattern::Rggb,
        };
        let scene = synth_scene(&procedural_hdr(seed, CHECK_W, CHECK_H)?, &spec)?;
        let aligned = align_burst(&scene.frames, &cfg)?;
        for (flow, &(sx, sy)) in aligned.flows.iter().zip(&shifts).skip(1) {
            for e in interior_errors(flow, (sx as f64, sy as f64), cfg.flow.block) {
                good += usize::from(e <= tol);
                total += 1;
            }
        }
    }
    Ok(good as f64 / total.max(1) as f64)
}

fn interior_errors(flow: &FlowField, truth: (f64, f64), block: usize) -> Vec<f64> {
    let (w, h) = flow.dims();
    let (nx, ny) = (w / block, h / block);
    let mut out = Vec::new();
    for j in 1..ny.saturating_sub(1) {
        for i in 1..nx.saturating_sub(1) {
            let (dx, dy) = flow.at(i * block + block / 2, j * block + block / 2);
            out.push((dx - truth.0).hypot(dy - truth.1));
        }
    }
    out
}

fn selfcheck() -> Result<bool> {
    let lsb = identity_error()?;
    let identity = lsb <= 0.5;
    println!("closed-loop identity  {}  max interior error {lsb:.4} LSB (<= 0.5)", verdict(identity));
    let exact = flow_recovery(100..104, NoiseParams::noiseless(), 1e-3)?;
    let noisy = flow_recovery(100..104, NoiseParams::default(), 0.5)?;
    let flow = exact >= 0.95 && noisy >= 0.90;
    println!(
        "flow recovery         {}  exact {:.1}% (>= 95%), noisy EPE <= 0.5 px {:.1}% (>= 90%)",
        verdict(flow),
        exact * 100.0,
        noisy * 100.0
    );
    Ok(identity && flow)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.cmd {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Restore(a) => restore(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Budget(a) => budget(a),
        Command::Selfcheck => selfcheck(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are validation failures; help and version are not.
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
