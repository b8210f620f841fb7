//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p lasq-cli --test acceptance -- --nocapture`.
//! Set `LASQ_ACCEPTANCE_STRICT=1` to turn any FAIL into a test failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lasq_core::denoiser::{encode, evaluate_loss_d, loss_and_grad, train_step, Adam, ToyExample, TrainSample};
use lasq_core::diffusion::{ddpm_marginal, forward_marginal_closed, forward_marginal_exact};
use lasq_core::hierarchy::grid_partition;
use lasq_core::imageio::{load_image, save_image};
use lasq_core::lao::{apply_lao, compute_gamma};
use lasq_core::luminance::{guided_filter_luminance, GuidedFilterParams};
use lasq_core::lv_analysis::{estimate_kappa, kappa_summary, lv_points};
use lasq_core::metrics::{psnr, ssim};
use lasq_core::pipeline::{run_hierarchy, toy_example};
use lasq_core::sampler::{ks_critical_1pct, ks_statistic, mh_step, truncnorm_cdf, truncnorm_sample};
use lasq_core::synthetic::{darken, synthetic_scene};
use lasq_core::{
    BitDepth, DenoiserParams, DiffusionSchedule, EncoderConfig, Grid2D, HierarchyConfig, Image, LaoParams, Latent,
    LossWeights, PsiRounding, Region, Rng, TauSchedule, TrainConfig, TruncGaussian,
};

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn artifacts() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn random_image(rows: usize, cols: usize, rng: &mut Rng) -> Image {
    Image::from_fn(rows, cols, |_, _| [rng.uniform(), rng.uniform(), rng.uniform()])
}

fn grid_law() -> Outcome {
    let mut failures = Vec::new();
    for &(rows, cols) in &[(64, 64), (100, 70), (129, 37)] {
        for n in 1..=12usize {
            let part = grid_partition(rows, cols, n).unwrap();
            let (m, w) = (1usize << (n - 1).div_ceil(2), 1usize << ((n - 1) / 2));
            let mut cover = vec![0u32; rows * cols];
            for reg in &part.regions {
                for r in reg.row_start..reg.row_end {
                    for c in reg.col_start..reg.col_end {
                        cover[r * cols + c] += 1;
                    }
                }
            }
            let ok = part.regions.len() == 1 << (n - 1)
                && (part.grid_rows, part.grid_cols) == (m, w)
                && part.regions.iter().all(|r| !r.is_empty())
                && cover.iter().all(|&k| k == 1);
            if !ok {
                failures.push(format!("{rows}x{cols} n={n}"));
            }
        }
    }
    outcome(failures.is_empty(), format!("36 partitions checked; failures: {failures:?}"))
}

fn lao_identity() -> Outcome {
    let params = LaoParams::new(0.5, 0.0, 0.01).unwrap();
    let gammas: Vec<f64> = [0.0, 0.01, 0.2].iter().map(|&v| compute_gamma(0.5, v, &params)).collect();
    let img = random_image(16, 16, &mut Rng::new(1));
    let out = apply_lao(&img, &Region::full(16, 16), gammas[0]).unwrap();
    let pass = gammas.iter().all(|&g| g == 1.0) && out == img;
    outcome(pass, format!("gamma = {gammas:?}, image unchanged: {}", out == img))
}

/// Direct window loops over clipped neighbourhoods.
fn guided_reference(y: &Grid2D, radius: usize, eps: f64) -> Grid2D {
    let (rows, cols) = (y.rows(), y.cols());
    let window_mean = |g: &dyn Fn(usize, usize) -> f64, r: usize, c: usize| {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(rows - 1));
        let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(cols - 1));
        let mut sum = 0.0;
        for i in r0..=r1 {
            for j in c0..=c1 {
                sum += g(i, j);
            }
        }
        sum / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64
    };
    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mean = window_mean(&|i, j| y.get(i, j), r, c);
            let sq = window_mean(&|i, j| y.get(i, j) * y.get(i, j), r, c);
            let var = (sq - mean * mean).max(0.0);
            a[r * cols + c] = var / (var + eps);
            b[r * cols + c] = mean - a[r * cols + c] * mean;
        }
    }
    Grid2D::from_fn(rows, cols, |r, c| {
        let ma = window_mean(&|i, j| a[i * cols + j], r, c);
        let mb = window_mean(&|i, j| b[i * cols + j], r, c);
        (ma * y.get(r, c) + mb).clamp(0.0, 1.0)
    })
}

fn guided_filter_oracle() -> Outcome {
    let mut rng = Rng::new(3);
    let params = GuidedFilterParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let y = Grid2D::from_fn(16, 16, |_, _| rng.uniform());
        let g = guided_filter_luminance(&y, &params).unwrap();
        let reference = guided_reference(&y, params.radius, params.eps);
        for (a, b) in g.grid().data().iter().zip(reference.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |diff| over 50 images = {worst:.3e} (tol 1e-10)"))
}

fn trunc_gaussian_sampler() -> Outcome {
    let d = TruncGaussian::new(0.0, 1.0, -1.0, 1.0).unwrap();
    let mut rng = Rng::new(4);
    let xs: Vec<f64> = (0..100_000).map(|_| truncnorm_sample(&d, &mut rng)).collect();
    let inside = xs.iter().all(|x| (-1.0..=1.0).contains(x));
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let pass = inside && (var - 0.29113).abs() < 0.01;
    outcome(pass, format!("support ok: {inside}; sample variance {var:.5} (target 0.29113 +/- 0.01)"))
}

fn mh_stationarity() -> Outcome {
    let d = TruncGaussian::new(0.0, 1.0, -1.0, 1.0).unwrap();
    let mut rng = Rng::new(0);
    let mut x = 0.0;
    let mut kept = Vec::with_capacity(10_000);
    for i in 0..100_000 {
        x = mh_step(x, &d, 0.2, &mut rng);
        if i % 10 == 9 {
            kept.push(x);
        }
    }
    let ks = ks_statistic(&kept, |v| truncnorm_cdf(&d, v));
    let crit = ks_critical_1pct(kept.len());
    outcome(ks < crit, format!("KS {ks:.5} vs 1% critical {crit:.5} ({} thinned samples, seed 0)", kept.len()))
}

fn tau_zero_equivalence() -> Outcome {
    let t_steps = 16;
    let sched = DiffusionSchedule::linear(t_steps, 1e-4, 0.02, TauSchedule::Constant(0.0), PsiRounding::Floor).unwrap();
    let mut rng = Rng::new(6);
    let x0 = Latent::standard_normal(3, 4, 4, &mut rng);
    let guides: Vec<Latent> = (0..4).map(|_| Latent::standard_normal(3, 4, 4, &mut rng)).collect();
    let mut worst: f64 = 0.0;
    for t in 1..=t_steps {
        let ddpm = ddpm_marginal(&x0, t, &sched).unwrap();
        for m in [
            forward_marginal_exact(&x0, &guides, t, &sched).unwrap(),
            forward_marginal_closed(&x0, &guides, t, &sched).unwrap(),
        ] {
            worst = worst.max((m.var - ddpm.var).abs());
            for (a, b) in m.mean.data().iter().zip(ddpm.mean.data()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max deviation over t<=16 = {worst:.3e} (tol 1e-12)"))
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines.map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect()).collect()
}

fn monte_carlo_oracle() -> Outcome {
    let csv = artifacts().join("diffuse_sim_T4_tau0.05.csv");
    let args =
        ["lasq", "diffuse-sim", "--T", "4", "--tau", "constant:0.05", "--runs", "100000", "--seed", "0", "--out"];
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    argv.push(csv.display().to_string());
    argv.extend(["--provenance".to_string(), artifacts().join("diffuse_sim.jsonl").display().to_string()]);
    lasq_cli::run_args(argv, &mut std::io::sink()).unwrap();
    let rows = csv_rows(&csv);
    let exact_ok = rows.iter().filter(|r| r["exact_within_3se"] == "true").count();
    let max_z = rows
        .iter()
        .flat_map(|r| [r["z_mean_exact"].parse::<f64>().unwrap().abs(), r["z_var_exact"].parse::<f64>().unwrap().abs()])
        .fold(0.0, f64::max);
    let closed_dev = rows
        .iter()
        .map(|r| (r["mean_closed"].parse::<f64>().unwrap() - r["mean_exact"].parse::<f64>().unwrap()).abs())
        .fold(0.0, f64::max);
    let closed_ok = rows.iter().filter(|r| r["closed_within_3se"] == "true").count();
    outcome(
        exact_ok == rows.len() && rows.len() == 16,
        format!(
            "exact recursion within 3 SE on {exact_ok}/{} (max |z| {max_z:.2}); closed form max mean deviation {closed_dev:.3e}, within 3 SE on {closed_ok}/{}; report {}",
            rows.len(),
            rows.len(),
            csv.display()
        ),
    )
}

fn gradient_check() -> Outcome {
    let enc = EncoderConfig { k: 1 };
    let sched = DiffusionSchedule::linear(8, 1e-4, 0.02, TauSchedule::default(), PsiRounding::Floor).unwrap();
    let mut rng = Rng::new(8);
    let mut params = DenoiserParams::init(3, &mut rng);
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = 0.1 * rng.normal();
        }
    }
    let img =
        Image::from_fn(8, 8, |_, _| [0.2 + 0.6 * rng.uniform(), 0.2 + 0.6 * rng.uniform(), 0.2 + 0.6 * rng.uniform()]);
    let x0 = encode(&img, &enc).unwrap();
    let guide = x0.map(|v| (v * 1.1).min(1.0));
    let ex = ToyExample::new(vec![x0.clone(), guide], x0.map(|v| v * 0.5), &enc).unwrap();
    let sample: TrainSample = ex.sample(&sched, &mut rng).unwrap();
    let weights = LossWeights::default();
    let (_, grad) = loss_and_grad(&params, &sample, &sched, &weights, &enc).unwrap();
    let loss = |p: &DenoiserParams| loss_and_grad(p, &sample, &sched, &weights, &enc).unwrap().0.total;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (slot, g) in grad.slices().iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = params.clone();
            plus.slices_mut()[slot][i] += h;
            let mut minus = params.clone();
            minus.slices_mut()[slot][i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6));
            checked += 1;
        }
    }
    outcome(
        worst < 1e-3,
        format!("{checked} parameters on a 4x4 latent (t={}), worst relative error {worst:.3e} (tol 1e-3)", sample.t),
    )
}

fn toy_training() -> Outcome {
    let enc = EncoderConfig { k: 1 };
    let sched = DiffusionSchedule::linear(1000, 1e-4, 0.02, TauSchedule::default(), PsiRounding::Floor).unwrap();
    let mut rng = Rng::new(7);
    let examples: Vec<ToyExample> = (0..16)
        .map(|_| {
            let low = darken(&synthetic_scene(16, 16, &mut rng), 2.5);
            let run = run_hierarchy(&low, &HierarchyConfig::default(), &mut rng).unwrap();
            toy_example(&low, &run.stack, &enc).unwrap()
        })
        .collect();
    let mut erng = Rng::new(99);
    let eval: Vec<TrainSample> = (0..4)
        .flat_map(|_| examples.iter().map(|e| e.sample(&sched, &mut erng).unwrap()).collect::<Vec<_>>())
        .collect();
    let mut params = DenoiserParams::init(3, &mut Rng::new(3));
    let lr = 1e-3;
    let mut opt = Adam::new(&params, lr).unwrap();
    let cfg = TrainConfig { weights: LossWeights::default(), encoder: enc };
    let l0 = evaluate_loss_d(&params, &eval, &sched).unwrap();
    for _ in 0..200 {
        train_step(&examples, &mut params, &sched, &mut opt, &cfg, &mut rng).unwrap();
    }
    let l1 = evaluate_loss_d(&params, &eval, &sched).unwrap();
    outcome(
        l1 < 0.5 * l0,
        format!("L_d on 64 fixed samples {l0:.4} -> {l1:.4} (ratio {:.3}, need < 0.5), lr {lr}", l1 / l0),
    )
}

fn reference_free_enhancement() -> Outcome {
    let dir = artifacts().join("enhance");
    fs::create_dir_all(&dir).unwrap();
    let mut gains = Vec::new();
    for i in 0..10u64 {
        let gt = synthetic_scene(32, 32, &mut Rng::new(1000 + i));
        let dark_path = dir.join(format!("dark_{i}.png"));
        let out_path = dir.join(format!("enhanced_{i}.png"));
        save_image(&darken(&gt, 2.5), &dark_path, BitDepth::Sixteen).unwrap();
        let argv = [
            "lasq".to_string(),
            "enhance".into(),
            "--input".into(),
            dark_path.display().to_string(),
            "--output".into(),
            out_path.display().to_string(),
            "--depth".into(),
            "16".into(),
            "--seed".into(),
            i.to_string(),
        ];
        lasq_cli::run_args(argv, &mut std::io::sink()).unwrap();
        let dark = load_image(&dark_path).unwrap();
        let out = load_image(&out_path).unwrap();
        gains.push(psnr(&gt, &out).unwrap() - psnr(&gt, &dark).unwrap());
    }
    let wins = gains.iter().filter(|&&g| g >= 3.0).count();
    let list: Vec<String> = gains.iter().map(|g| format!("{g:.2}")).collect();
    outcome(wins >= 9, format!("{wins}/10 pairs gain >= 3 dB (need 9); gains [{}]", list.join(", ")))
}

fn power_law_recovery() -> Outcome {
    let mut worst_point: f64 = 0.0;
    let mut worst_quantile: f64 = 0.0;
    for kappa in [0.3, 0.5, 0.8] {
        let low = Image::from_fn(16, 16, |r, c| [(r * 16 + c) as f64 / 255.0; 3]);
        let normal = Image::from_fn(16, 16, |r, c| low.pixel(r, c).map(|v| v.powf(kappa)));
        let points = lv_points(&low, &normal).unwrap();
        for p in &points {
            if let Some(k) = estimate_kappa(p, 0.004) {
                worst_point = worst_point.max((k - kappa).abs());
            }
        }
        let summary = kappa_summary(&points, 0.004, 16, &[0.05, 0.25, 0.5, 0.75, 0.95]).unwrap();
        for (_, k) in &summary.quantiles {
            worst_quantile = worst_quantile.max((k - kappa).abs());
        }
    }
    outcome(
        worst_point <= 1e-10 && worst_quantile <= 1e-10,
        format!("max |kappa error|: points {worst_point:.3e}, quantiles {worst_quantile:.3e} (tol 1e-10)"),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Every subcommand, with relative paths so provenance records compare too.
fn run_all(dir: &Path, seed: &str) -> Result<Vec<u8>, String> {
    let steps: &[&[&str]] = &[
        &["synth", "--out", "data", "--count", "3", "--size", "16"],
        &["hierarchy", "--input", "data/low/00.png", "--out-dir", "hier", "--levels", "4"],
        &["enhance", "--input", "data/low/00.png", "--output", "enhanced.png"],
        &["lv-scan", "--low", "data/low/01.png", "--normal", "data/gt/01.png", "--out", "lv"],
        &["diffuse-sim", "--T", "4", "--runs", "2000", "--out", "sim.csv"],
        &["train-toy", "--data", "data/low", "--out", "model.bin", "--T", "16", "--steps", "10", "--log", "loss.csv"],
        &[
            "infer",
            "--checkpoint",
            "model.bin",
            "--input",
            "data/low/02.png",
            "--output",
            "infer.png",
            "--T",
            "16",
            "--steps",
            "4",
        ],
        &[
            "enhance",
            "--input",
            "data/low/02.png",
            "--output",
            "enhanced_ckpt.png",
            "--checkpoint",
            "model.bin",
            "--T",
            "16",
            "--steps",
            "4",
        ],
        &["eval", "--a", "enhanced.png", "--b", "data/gt/00.png", "--provenance", "eval.jsonl"],
    ];
    let mut stdout = Vec::new();
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_lasq"))
            .args(*args)
            .args(["--seed", seed])
            .current_dir(dir)
            .env_remove("LASQ_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
        stdout.extend(out.stdout);
    }
    Ok(stdout)
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| root.path().join(d)).collect();
    let mut stdouts = Vec::new();
    for (dir, seed) in dirs.iter().zip(["11", "11", "12"]) {
        fs::create_dir_all(dir).unwrap();
        match run_all(dir, seed) {
            Ok(s) => stdouts.push(s),
            Err(e) => return outcome(false, format!("command failed: {e}")),
        }
    }
    let (a, b, c) = (files_under(&dirs[0]), files_under(&dirs[1]), files_under(&dirs[2]));
    let differing: Vec<String> =
        a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.display().to_string()).collect();
    let same_set = a.keys().eq(b.keys());
    let seed_sensitive = a.get(Path::new("hier/manifest.txt")) != c.get(Path::new("hier/manifest.txt"));
    outcome(
        same_set && differing.is_empty() && stdouts[0] == stdouts[1] && seed_sensitive,
        format!(
            "{} files across 9 subcommand runs compared byte-for-byte; differing: {differing:?}; stdout equal: {}; other seed changes output: {seed_sensitive}",
            a.len(),
            stdouts[0] == stdouts[1]
        ),
    )
}

/// Per-window SSIM with a freshly built 2-D Gaussian window.
#[allow(clippy::needless_range_loop)]
fn ssim_reference(a: &Image, b: &Image) -> f64 {
    let luma = |img: &Image, r: usize, c: usize| {
        let p = img.pixel(r, c);
        0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
    };
    let mut w = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (mut acc, mut count) = (0.0, 0);
    for r0 in 0..=a.rows() - 11 {
        for c0 in 0..=a.cols() - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    ma += w[i][j] / total * luma(a, r0 + i, c0 + j);
                    mb += w[i][j] / total * luma(b, r0 + i, c0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let da = luma(a, r0 + i, c0 + j) - ma;
                    let db = luma(b, r0 + i, c0 + j) - mb;
                    va += w[i][j] / total * da * da;
                    vb += w[i][j] / total * db * db;
                    cov += w[i][j] / total * da * db;
                }
            }
            let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn metric_oracles() -> Outcome {
    let offset = psnr(&Image::filled(16, 16, 0.5), &Image::filled(16, 16, 0.6)).unwrap();
    let mut rng = Rng::new(13);
    let mut self_ok = true;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        self_ok &= ssim(&a, &a).unwrap() == 1.0;
        worst = worst.max((ssim(&a, &b).unwrap() - ssim_reference(&a, &b)).abs());
    }
    outcome(
        offset == 20.0 && self_ok && worst <= 1e-9,
        format!("psnr(offset 0.1) = {offset}; ssim(a,a) == 1: {self_ok}; max |ssim - loop reference| {worst:.3e} (tol 1e-9)"),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 13] = [
        ("grid law", grid_law, Duration::from_secs(1)),
        ("LAO identity", lao_identity, Duration::from_secs(1)),
        ("guided filter oracle", guided_filter_oracle, Duration::from_secs(5)),
        ("truncated-Gaussian sampler", trunc_gaussian_sampler, Duration::from_secs(5)),
        ("MH stationarity", mh_stationarity, Duration::from_secs(10)),
        ("diffusion tau=0 equivalence", tau_zero_equivalence, Duration::from_secs(1)),
        ("Monte-Carlo forward oracle", monte_carlo_oracle, Duration::from_secs(60)),
        ("gradient check", gradient_check, Duration::from_secs(30)),
        ("toy training", toy_training, Duration::from_secs(120)),
        ("reference-free enhancement", reference_free_enhancement, Duration::from_secs(30)),
        ("LV power-law recovery", power_law_recovery, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(60)),
        ("metric oracles", metric_oracles, Duration::from_secs(5)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = out.pass && in_time;
        println!(
            "AC{:<2} {} {name}: {} [{:.2}s, budget {}s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/13 criteria pass; failing: {failed:?}", 13 - failed.len());
    if std::env::var("LASQ_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failing criteria: {failed:?}");
    }
}
