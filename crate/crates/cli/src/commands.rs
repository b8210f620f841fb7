//! Subcommand arguments and their implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};

use lasq_core::denoiser::{encode, infer, load_checkpoint, save_checkpoint, train_step, Adam, LATENT_CHANNELS};
use lasq_core::diffusion::{forward_marginal_closed, forward_marginal_exact, monte_carlo_moments, psi};
use lasq_core::hierarchy::grid_shape;
use lasq_core::imageio::{load_image, save_image};
use lasq_core::lv_analysis::{kappa_summary, lv_points, DEFAULT_CLIP_EPS};
use lasq_core::metrics::evaluate;
use lasq_core::pipeline::{run_hierarchy, toy_example};
use lasq_core::synthetic::{darken, synthetic_scene};
use lasq_core::{ApplyMode, BitDepth, DenoiserParams, HierarchyRun, Image, LasqError, Latent, Rng, TauSchedule};

use crate::config::{resolve_seed, RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::provenance::{self, Record};

/// RNG stream ids derived from the run seed.
const STREAM_INFER: u64 = 1;
const STREAM_PARAMS: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_IMAGE_BASE: u64 = 1 << 16;

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides LASQ_SEED and the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Provenance log (JSON lines, appended).
    #[arg(long)]
    pub provenance: Option<PathBuf>,
}

impl Common {
    /// Config file (or defaults), then `overrides`, then seed precedence.
    pub fn resolve(&self, overrides: impl FnOnce(&mut RunConfig)) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        overrides(&mut cfg);
        let env = std::env::var(SEED_ENV).ok();
        cfg.seed = resolve_seed(cfg.seed, self.seed, env.as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn log(&self, cfg: &RunConfig, default: Option<PathBuf>, record: &Record) -> CliResult<()> {
        match provenance::resolve(self.provenance.as_deref(), cfg.provenance.as_deref(), default) {
            Some(p) => {
                ensure_parent(&p)?;
                record.append(&p)
            }
            None => Ok(()),
        }
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn depth(bits: u32) -> CliResult<BitDepth> {
    Ok(BitDepth::from_bits(bits)?)
}

fn sibling_log(path: &Path) -> PathBuf {
    path.with_extension("jsonl")
}

fn hierarchy_fields(record: &mut Record, run: &HierarchyRun) {
    let (lo, hi) = run.distribution.bounds();
    record.set(
        "distribution",
        json!({
            "center": run.distribution.center(),
            "sigma": run.distribution.sigma(),
            "lo": lo,
            "hi": hi,
            "degenerate": run.distribution.is_degenerate(),
        }),
    );
    record.set("init", run.init);
    record.set("gamma", Value::from(run.sets.iter().map(|s| s.values.clone()).collect::<Vec<_>>()));
}

#[derive(Args, Debug, Clone)]
pub struct EnhanceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Trained denoiser; without one the coarsest hierarchy level is the output.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// rgb or luma.
    #[arg(long)]
    pub mode: Option<ApplyMode>,
    /// Target spread; defaults to the spread of the per-pixel exponent map.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Diffusion steps; must match the checkpoint's training schedule.
    #[arg(long = "T")]
    pub t_steps: Option<usize>,
    /// Implicit sampling steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output bit depth, 8 or 16.
    #[arg(long, default_value_t = 8)]
    pub depth: u32,
}

pub fn cmd_enhance(args: &EnhanceArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|c| {
        if let Some(n) = args.levels {
            c.levels = n;
        }
        if let Some(m) = args.mode {
            c.mode = m;
        }
        if args.sigma.is_some() {
            c.sigma = args.sigma;
        }
        if let Some(t) = args.t_steps {
            c.t_steps = t;
        }
        if let Some(s) = args.steps {
            c.ddim_steps = s;
        }
        if let Some(p) = &args.checkpoint {
            c.checkpoint = Some(p.display().to_string());
        }
    })?;
    let bits = depth(args.depth)?;
    let img = load_image(&args.input)?;
    let root = Rng::new(cfg.seed);
    let run = run_hierarchy(&img, &cfg.hierarchy(), &mut root.clone())?;
    let mut record = Record::new("enhance", &cfg);
    record.path("input", &args.input).path("output", &args.output);
    hierarchy_fields(&mut record, &run);
    let out = match &cfg.checkpoint {
        None => {
            record.set("path", "hierarchy");
            run.stack.coarsest().clone()
        }
        Some(ckpt) => {
            let params = load_checkpoint(ckpt)?;
            let enc = cfg.encoder();
            let f_l = encode(&img, &enc)?;
            let sched = cfg.schedule()?;
            record.set("path", "diffusion");
            infer(&f_l, &params, &sched, cfg.ddim_steps, &enc, &mut root.fork(STREAM_INFER))?
        }
    };
    ensure_parent(&args.output)?;
    save_image(&out, &args.output, bits)?;
    record.set("mean_luma_in", img.mean_luma()).set("mean_luma_out", out.mean_luma());
    args.common.log(&cfg, Some(sibling_log(&args.output)), &record)
}

#[derive(Args, Debug, Clone)]
pub struct HierarchyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub mode: Option<ApplyMode>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Image file extension: png or ppm.
    #[arg(long, default_value = "png")]
    pub format: String,
    #[arg(long, default_value_t = 8)]
    pub depth: u32,
}

/// Manifest text: one line per level with its grid shape and operator values.
pub fn manifest(run: &HierarchyRun) -> String {
    let (lo, hi) = run.distribution.bounds();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# center={} sigma={} lo={lo} hi={hi} init={}",
        run.distribution.center(),
        run.distribution.sigma(),
        run.init
    );
    for set in &run.sets {
        let (m, w) = grid_shape(set.level);
        let values: Vec<String> = set.values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "level={} grid={m}x{w} gamma={}", set.level, values.join(","));
    }
    s
}

pub fn cmd_hierarchy(args: &HierarchyArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|c| {
        if let Some(n) = args.levels {
            c.levels = n;
        }
        if let Some(m) = args.mode {
            c.mode = m;
        }
        if args.sigma.is_some() {
            c.sigma = args.sigma;
        }
    })?;
    if !matches!(args.format.as_str(), "png" | "ppm") {
        return Err(CliError::Config(format!("unknown image format '{}' (expected png or ppm)", args.format)));
    }
    let bits = depth(args.depth)?;
    let img = load_image(&args.input)?;
    let run = run_hierarchy(&img, &cfg.hierarchy(), &mut Rng::new(cfg.seed))?;
    ensure_dir(&args.out_dir)?;
    let mut files = Vec::new();
    for (i, level) in run.stack.levels.iter().enumerate() {
        let name = format!("level_{:02}.{}", i + 1, args.format);
        save_image(level, args.out_dir.join(&name), bits)?;
        files.push(name);
    }
    write_text(&args.out_dir.join("manifest.txt"), &manifest(&run))?;
    let mut record = Record::new("hierarchy", &cfg);
    record.path("input", &args.input).path("out_dir", &args.out_dir).set("files", files);
    hierarchy_fields(&mut record, &run);
    args.common.log(&cfg, Some(args.out_dir.join("provenance.jsonl")), &record)
}

#[derive(Args, Debug, Clone)]
pub struct LvScanArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub normal: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_CLIP_EPS)]
    pub clip_eps: f64,
    /// Comma-separated quantile levels in (0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25,0.5,0.75,0.9,0.95")]
    pub quantiles: Vec<f64>,
}

pub fn cmd_lv_scan(args: &LvScanArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|_| {})?;
    if !(args.clip_eps > 0.0 && args.clip_eps < 0.5) {
        return Err(CliError::Config(format!("clip-eps must be in (0, 0.5), got {}", args.clip_eps)));
    }
    let low = load_image(&args.low)?;
    let normal = load_image(&args.normal)?;
    let points = lv_points(&low, &normal)?;
    let summary = kappa_summary(&points, args.clip_eps, args.bins, &args.quantiles)?;
    ensure_dir(&args.out)?;

    let mut pts = String::from("x,y\n");
    for p in &points {
        let _ = writeln!(pts, "{},{}", p.x, p.y);
    }
    let mut hist = String::from("edge,count\n");
    let h = &summary.histogram;
    for (edge, count) in h.edges.iter().zip(h.counts.iter().chain(std::iter::once(&0))) {
        let _ = writeln!(hist, "{edge},{count}");
    }
    let mut quant = String::from("q,kappa\n");
    for (q, k) in &summary.quantiles {
        let _ = writeln!(quant, "{q},{k}");
    }
    write_text(&args.out.join("points.csv"), &pts)?;
    write_text(&args.out.join("kappa_hist.csv"), &hist)?;
    write_text(&args.out.join("quantiles.csv"), &quant)?;

    let mut record = Record::new("lv-scan", &cfg);
    record
        .path("low", &args.low)
        .path("normal", &args.normal)
        .path("out", &args.out)
        .set("clip_eps", args.clip_eps)
        .set("points", points.len())
        .set("valid_points", summary.valid_points)
        .set("quantiles", Value::from(summary.quantiles.iter().map(|&(q, k)| vec![q, k]).collect::<Vec<_>>()));
    args.common.log(&cfg, Some(args.out.join("provenance.jsonl")), &record)
}

#[derive(Args, Debug, Clone)]
pub struct DiffuseSimArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of diffusion steps.
    #[arg(long = "T")]
    pub t_steps: Option<usize>,
    /// Number of guide levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// `linear:<max>`, `constant:<v>` or a bare constant.
    #[arg(long)]
    pub tau: Option<TauSchedule>,
    /// Monte-Carlo trajectories.
    #[arg(long, default_value_t = 10_000)]
    pub runs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Four-element latent used by the simulation, and its level guides `x0 + 0.1 n`.
pub fn sim_latents(levels: usize) -> (Latent, Vec<Latent>) {
    let x0 = Latent::new(1, 2, 2, vec![0.1, 0.4, 0.6, 0.9]).expect("fixed shape");
    let guides = (1..=levels).map(|n| x0.map(|v| v + 0.1 * n as f64)).collect();
    (x0, guides)
}

pub const DIFFUSE_SIM_HEADER: &str =
    "t,elem,level,mean_closed,mean_exact,mean_mc,se_mean,var_closed,var_exact,var_mc,se_var,\
z_mean_exact,z_var_exact,z_mean_closed,z_var_closed,exact_within_3se,closed_within_3se";

pub fn cmd_diffuse_sim(args: &DiffuseSimArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|c| {
        if let Some(t) = args.t_steps {
            c.t_steps = t;
        }
        if let Some(n) = args.levels {
            c.levels = n;
        }
        if let Some(tau) = args.tau {
            c.tau = tau;
        }
    })?;
    let sched = cfg.schedule()?;
    let (x0, guides) = sim_latents(cfg.levels);
    let mc = monte_carlo_moments(&x0, &guides, cfg.t_steps, &sched, args.runs, &Rng::new(cfg.seed))?;
    let mut csv = format!("{DIFFUSE_SIM_HEADER}\n");
    let (mut exact_ok, mut closed_ok) = (0usize, 0usize);
    let z = |a: f64, b: f64, se: f64| {
        if se > 0.0 {
            (a - b) / se
        } else if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    };
    for m in &mc {
        let t = m.t;
        let exact = forward_marginal_exact(&x0, &guides, t, &sched)?;
        let closed = forward_marginal_closed(&x0, &guides, t, &sched)?;
        let level = psi(t, cfg.t_steps, cfg.levels, cfg.psi)?;
        for e in 0..x0.len() {
            let zme = z(exact.mean.data()[e], m.mean[e], m.se_mean[e]);
            let zve = z(exact.var, m.var[e], m.se_var[e]);
            let zmc = z(closed.mean.data()[e], m.mean[e], m.se_mean[e]);
            let zvc = z(closed.var, m.var[e], m.se_var[e]);
            let e_ok = zme.abs() <= 3.0 && zve.abs() <= 3.0;
            let c_ok = zmc.abs() <= 3.0 && zvc.abs() <= 3.0;
            exact_ok += e_ok as usize;
            closed_ok += c_ok as usize;
            let _ = writeln!(
                csv,
                "{t},{e},{level},{},{},{},{},{},{},{},{},{zme},{zve},{zmc},{zvc},{e_ok},{c_ok}",
                closed.mean.data()[e],
                exact.mean.data()[e],
                m.mean[e],
                m.se_mean[e],
                closed.var,
                exact.var,
                m.var[e],
                m.se_var[e],
            );
        }
    }
    write_text(&args.out, &csv)?;
    let rows = mc.len() * x0.len();
    let mut record = Record::new("diffuse-sim", &cfg);
    record
        .path("out", &args.out)
        .set("runs", args.runs)
        .set("rows", rows)
        .set("exact_within_3se", exact_ok)
        .set("closed_within_3se", closed_ok);
    args.common.log(&cfg, Some(sibling_log(&args.out)), &record)
}

#[derive(Args, Debug, Clone)]
pub struct TrainToyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of low-light training images (PNG or PPM).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "T")]
    pub t_steps: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Optional per-step loss CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Image files in `dir` with a png/ppm extension, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "ppm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn cmd_train_toy(args: &TrainToyArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|c| {
        if let Some(t) = args.t_steps {
            c.t_steps = t;
        }
        if let Some(n) = args.levels {
            c.levels = n;
        }
        if let Some(s) = args.steps {
            c.train_steps = s;
        }
        if let Some(lr) = args.lr {
            c.lr = lr;
        }
    })?;
    let files = list_images(&args.data)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("{}: no png or ppm images", args.data.display())));
    }
    let sched = cfg.schedule()?;
    let train_cfg = cfg.train();
    let root = Rng::new(cfg.seed);
    let examples = files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let img = load_image(f)?;
            let run = run_hierarchy(&img, &cfg.hierarchy(), &mut root.fork(STREAM_IMAGE_BASE + i as u64))?;
            toy_example(&img, &run.stack, &train_cfg.encoder)
        })
        .collect::<Result<Vec<_>, LasqError>>()?;
    let mut params = DenoiserParams::init(LATENT_CHANNELS, &mut root.fork(STREAM_PARAMS));
    let mut opt = Adam::new(&params, cfg.lr)?;
    let mut rng = root.fork(STREAM_TRAIN);
    let mut log = String::from("step,total,l_d,l_g\n");
    let mut losses = Vec::with_capacity(cfg.train_steps);
    for step in 0..cfg.train_steps {
        let terms = train_step(&examples, &mut params, &sched, &mut opt, &train_cfg, &mut rng)?;
        if !terms.total.is_finite() {
            return Err(CliError::Numeric(format!("non-finite loss at step {step}")));
        }
        let _ = writeln!(log, "{step},{},{},{}", terms.total, terms.l_d, terms.l_g);
        losses.push(terms);
    }
    ensure_parent(&args.out)?;
    save_checkpoint(&params, &args.out)?;
    if let Some(p) = &args.log {
        write_text(p, &log)?;
    }
    let mut record = Record::new("train-toy", &cfg);
    record
        .path("data", &args.data)
        .path("out", &args.out)
        .set("images", files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>())
        .set("param_count", params.param_count());
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        record.set("loss_first", json!({"total": first.total, "l_d": first.l_d, "l_g": first.l_g}));
        record.set("loss_last", json!({"total": last.total, "l_d": last.l_d, "l_g": last.l_g}));
    }
    args.common.log(&cfg, Some(sibling_log(&args.out)), &record)
}

#[derive(Args, Debug, Clone)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Low-light image supplying the condition.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Must match the schedule the checkpoint was trained with.
    #[arg(long = "T")]
    pub t_steps: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub depth: u32,
}

pub fn cmd_infer(args: &InferArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|c| {
        if let Some(t) = args.t_steps {
            c.t_steps = t;
        }
        if let Some(s) = args.steps {
            c.ddim_steps = s;
        }
        c.checkpoint = Some(args.checkpoint.display().to_string());
    })?;
    let bits = depth(args.depth)?;
    let params = load_checkpoint(&args.checkpoint)?;
    let img = load_image(&args.input)?;
    let enc = cfg.encoder();
    let f_l = encode(&img, &enc)?;
    let sched = cfg.schedule()?;
    let out = infer(&f_l, &params, &sched, cfg.ddim_steps, &enc, &mut Rng::new(cfg.seed).fork(STREAM_INFER))?;
    ensure_parent(&args.output)?;
    save_image(&out, &args.output, bits)?;
    let mut record = Record::new("infer", &cfg);
    record
        .path("input", &args.input)
        .path("output", &args.output)
        .set("mean_luma_in", img.mean_luma())
        .set("mean_luma_out", out.mean_luma());
    args.common.log(&cfg, Some(sibling_log(&args.output)), &record)
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

/// Prints `psnr_db,ssim`; identical inputs give `inf` for PSNR.
pub fn cmd_eval(args: &EvalArgs, out: &mut impl Write) -> CliResult<()> {
    let cfg = args.common.resolve(|_| {})?;
    let a = load_image(&args.a)?;
    let b = load_image(&args.b)?;
    let report = evaluate(&a, &b)?;
    writeln!(out, "{},{}", report.psnr_db, report.ssim).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    let mut record = Record::new("eval", &cfg);
    record.path("a", &args.a).path("b", &args.b).set("psnr_db", report.psnr_db).set("ssim", report.ssim);
    args.common.log(&cfg, None, &record)
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Darkening exponent applied to each scene.
    #[arg(long, default_value_t = 2.5)]
    pub power: f64,
}

/// Writes `gt/NN.png` scenes and their darkened `low/NN.png` counterparts.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let cfg = args.common.resolve(|_| {})?;
    if args.count == 0 || args.size < 2 {
        return Err(CliError::Config("synth needs count >= 1 and size >= 2".into()));
    }
    if !(args.power > 0.0 && args.power.is_finite()) {
        return Err(CliError::Config(format!("power must be positive, got {}", args.power)));
    }
    let (gt_dir, low_dir) = (args.out.join("gt"), args.out.join("low"));
    ensure_dir(&gt_dir)?;
    ensure_dir(&low_dir)?;
    let root = Rng::new(cfg.seed);
    for i in 0..args.count {
        let gt: Image = synthetic_scene(args.size, args.size, &mut root.fork(STREAM_IMAGE_BASE + i as u64));
        let name = format!("{i:02}.png");
        save_image(&gt, gt_dir.join(&name), BitDepth::Sixteen)?;
        save_image(&darken(&gt, args.power), low_dir.join(&name), BitDepth::Sixteen)?;
    }
    let mut record = Record::new("synth", &cfg);
    record.path("out", &args.out).set("count", args.count).set("size", args.size).set("power", args.power);
    args.common.log(&cfg, Some(args.out.join("provenance.jsonl")), &record)
}
