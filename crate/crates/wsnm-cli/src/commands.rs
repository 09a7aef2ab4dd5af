//! The six subcommands: argument definitions, flag/file/default resolution,
//! orchestration over the library, and report emission.
//!
//! Output layout convention: every command writes its products plus
//! `manifest.json` (deterministic) and `timings.json` (volatile wall-clock
//! stages) into the output directory.

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use std::path::{Path, PathBuf};

use wsnm_core::bench::{
    binarize_foreground, foreground_similarity, frange, gen_lowrank_sparse, matrix_to_frames,
    relative_error, run_grid, video_to_matrix, ForegroundMask, Method, RunRecord, SweepReport,
    SyntheticSpec,
};
use wsnm_core::denoise::{denoise_image, DenoiseConfig};
use wsnm_core::image::{
    add_gaussian_noise, psnr, read_pgm, read_wf64_matrix, write_pgm, write_wf64_matrix, GrayImage,
    NoiseSpec,
};
use wsnm_core::rpca::{nnm_rpca, rpca_weights, wsnm_rpca, RpcaConfig, RpcaResult, WeightMode};
use wsnm_core::svd::svd;
use wsnm_core::wsnm::{wsnm_prox_with_factors, WeightVector};
use wsnm_core::DenseMatrix;

use crate::config::{
    self, load_file, parse_methods, parse_ranks, parse_synthetic, pick, pick_required,
};
use crate::manifest::{write_atomic, RunManifest, Timings};

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON config file; keys mirror this command's flags (flags win)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = machine parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (denoise also accepts a .pgm file path here)
    #[arg(long)]
    pub out: Option<String>,
}

const DEFAULT_OUT: &str = "wsnm-out";
const DEFAULT_SEED: u64 = 42;

fn init_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool initialization")?;
    }
    Ok(())
}

fn prepare_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Input image (PGM, binary P5)
    #[arg(long = "in", visible_alias = "input", value_name = "PGM")]
    pub input: Option<String>,
    /// Clean reference for PSNR reporting
    #[arg(long, value_name = "PGM")]
    pub clean: Option<String>,
    /// Treat the input as clean: add Gaussian noise of this σ first
    #[arg(long, value_name = "SIGMA")]
    pub add_noise: Option<f64>,
    /// Noise standard deviation the denoiser assumes
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Schatten power in (0, 1]; default auto-selected from sigma
    #[arg(long)]
    pub p: Option<f64>,
    /// Outer iterations K
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Residual feedback fraction α in (0, 1)
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub search_window: Option<usize>,
    #[arg(long)]
    pub key_patch_step: Option<usize>,
    /// Weight constant c (default 2√2·σ²)
    #[arg(long)]
    pub c: Option<f64>,
    /// Re-estimate the working noise level each iteration (default on)
    #[arg(long)]
    pub reestimate_noise: Option<bool>,
    /// Scale γ on the re-estimated noise level
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn cmd_denoise(args: DenoiseArgs) -> Result<()> {
    let file: config::DenoiseFile = load_file(args.common.config.as_deref())?;
    let input = pick_required(args.input, file.input, "input")?;
    let sigma = pick_required(args.sigma, file.sigma, "sigma")?;
    let base = DenoiseConfig::for_sigma(sigma)?;
    let run = config::DenoiseRun {
        input,
        clean: args.clean.or(file.clean),
        add_noise: args.add_noise.or(file.add_noise),
        sigma,
        p: pick(args.p, file.p, base.p),
        iterations: pick(args.iterations, file.iterations, base.iterations),
        alpha: pick(args.alpha, file.alpha, base.alpha),
        patch_size: pick(args.patch_size, file.patch_size, base.patch_size),
        group_size: pick(args.group_size, file.group_size, base.group_size),
        search_window: pick(args.search_window, file.search_window, base.search_window),
        key_patch_step: pick(args.key_patch_step, file.key_patch_step, base.key_patch_step),
        c: pick(args.c, file.c, base.c),
        reestimate_noise: pick(
            args.reestimate_noise,
            file.reestimate_noise,
            base.reestimate_noise,
        ),
        gamma: pick(args.gamma, file.gamma, base.gamma),
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    init_threads(run.threads)?;

    // `--out x.pgm` names the denoised image directly; otherwise `--out` is
    // a directory and the image lands at <out>/denoised.pgm.
    let out_path = Path::new(&run.out);
    let (out_dir, image_name) = if run.out.ends_with(".pgm") {
        let dir = out_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = if dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            dir
        };
        let name = out_path
            .file_name()
            .ok_or_else(|| anyhow!("output path `{}` has no file name", run.out))?
            .to_string_lossy()
            .into_owned();
        (dir, name)
    } else {
        (out_path.to_path_buf(), "denoised.pgm".to_string())
    };
    prepare_dir(&out_dir)?;

    let cfg = DenoiseConfig {
        sigma_n: run.sigma,
        p: run.p,
        iterations: run.iterations,
        alpha: run.alpha,
        patch_size: run.patch_size,
        group_size: run.group_size,
        search_window: run.search_window,
        key_patch_step: run.key_patch_step,
        c: run.c,
        reestimate_noise: run.reestimate_noise,
        gamma: run.gamma,
    };
    cfg.validate()?;

    let mut timings = Timings::default();
    let mut manifest = RunManifest::new("denoise", &run)?;

    let input_img =
        timings.time("read_input", || read_pgm(Path::new(&run.input)))?;
    let mut noisy_written = false;
    let (work, clean_img) = if let Some(noise_sigma) = run.add_noise {
        if run.clean.is_some() {
            bail!("--add-noise treats the input as the clean reference; drop --clean");
        }
        let noisy = add_gaussian_noise(
            &input_img,
            &NoiseSpec {
                sigma: noise_sigma,
                seed: run.seed,
            },
        );
        write_pgm(&out_dir.join("noisy.pgm"), &noisy)?;
        noisy_written = true;
        (noisy, Some(input_img))
    } else {
        let clean = run
            .clean
            .as_ref()
            .map(|p| read_pgm(Path::new(p)))
            .transpose()?;
        (input_img, clean)
    };

    let denoised = timings.time("denoise", || denoise_image(&work, &cfg))?;
    write_pgm(&out_dir.join(&image_name), &denoised)?;

    manifest.add_output(&out_dir, &image_name)?;
    if noisy_written {
        manifest.add_output(&out_dir, "noisy.pgm")?;
    }
    let mut summary = format!("denoised {} -> {}", run.input, out_dir.join(&image_name).display());
    if let Some(clean) = &clean_img {
        let psnr_noisy = psnr(&work, clean)?;
        let psnr_denoised = psnr(&denoised, clean)?;
        manifest.add_metric("psnr_noisy", psnr_noisy);
        manifest.add_metric("psnr_denoised", psnr_denoised);
        manifest.add_metric("psnr_gain", psnr_denoised - psnr_noisy);
        summary.push_str(&format!(
            " (PSNR {psnr_denoised:.3} dB, noisy {psnr_noisy:.3} dB)"
        ));
    }
    manifest.write(&out_dir)?;
    timings.write(&out_dir)?;
    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------------------
// rpca
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RpcaArgs {
    /// Input matrix (WSNMF64 float dump)
    #[arg(long = "in", visible_alias = "input", value_name = "WF64")]
    pub input: Option<String>,
    /// Directory of PGM frames (lexicographic order) to decompose
    #[arg(long, value_name = "DIR")]
    pub frames: Option<String>,
    /// Inline synthetic instance, e.g. `m=150,pr=0.1,pe=0.05`
    #[arg(long, value_name = "SPEC")]
    pub synthetic: Option<String>,
    /// Solver: `wsnm` or `nnm`
    #[arg(long)]
    pub method: Option<String>,
    /// Schatten power in (0, 1]
    #[arg(long)]
    pub p: Option<f64>,
    /// Weight scale C in wᵢ = C√(mn)/(σᵢ+ε)
    #[arg(long)]
    pub weight_c: Option<f64>,
    /// Weight schedule: `fixed-y`, `reweighted`, or `uniform:<w>`
    #[arg(long)]
    pub weight_mode: Option<String>,
    /// Sparse-term weight for the nnm solver (default 1/√max(m,n))
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial penalty μ₀ (default 1/‖Y‖₂)
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Penalty growth factor ρ > 1
    #[arg(long)]
    pub rho: Option<f64>,
    /// Relative residual stopping tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Foreground binarization threshold θ (frames mode)
    #[arg(long)]
    pub theta: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_weight_mode(text: &str) -> Result<WeightMode> {
    match text {
        "fixed-y" => Ok(WeightMode::FixedFromY),
        "reweighted" => Ok(WeightMode::ReweightedPerIteration),
        other => {
            if let Some(w) = other.strip_prefix("uniform:") {
                let w: f64 = w
                    .parse()
                    .map_err(|_| anyhow!("bad uniform weight `{w}` in weight_mode"))?;
                Ok(WeightMode::UniformFixed(w))
            } else {
                bail!("unknown weight_mode `{other}` (expected fixed-y, reweighted, or uniform:<w>)")
            }
        }
    }
}

pub fn cmd_rpca(args: RpcaArgs) -> Result<()> {
    let file: config::RpcaFile = load_file(args.common.config.as_deref())?;
    let input = args.input.or(file.input);
    let frames = args.frames.or(file.frames);
    let synthetic = args.synthetic.or(file.synthetic);
    let sources = [input.is_some(), frames.is_some(), synthetic.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if sources != 1 {
        bail!("give exactly one input source: --in <wf64>, --frames <dir>, or --synthetic <spec>");
    }

    let p = pick(args.p, file.p, 0.7);
    let defaults = RpcaConfig::for_power(p);
    // Frames mode follows the background-subtraction preset: weights frozen
    // on the observation spectrum (scale filled in below, once the frame
    // matrix dimensions are known). Matrix and synthetic inputs follow the
    // solver default of reweighting from the X-step spectrum each iteration.
    let default_weight_mode = if frames.is_some() { "fixed-y" } else { "reweighted" };
    let run = config::RpcaRun {
        input,
        frames,
        synthetic,
        method: pick(args.method, file.method, "wsnm".to_string()),
        p,
        weight_c: pick(args.weight_c, file.weight_c, defaults.weight_c),
        weight_mode: pick(
            args.weight_mode,
            file.weight_mode,
            default_weight_mode.to_string(),
        ),
        lambda: args.lambda.or(file.lambda),
        mu0: args.mu0.or(file.mu0),
        rho: pick(args.rho, file.rho, defaults.rho),
        tol: pick(args.tol, file.tol, defaults.tol),
        max_iters: pick(args.max_iters, file.max_iters, defaults.max_iters),
        theta: pick(args.theta, file.theta, 3.0),
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    if run.method != "wsnm" && run.method != "nnm" {
        bail!("unknown method `{}` (expected wsnm or nnm)", run.method);
    }
    init_threads(run.threads)?;
    let out_dir = PathBuf::from(&run.out);
    prepare_dir(&out_dir)?;

    let mut timings = Timings::default();

    // Load the observation.
    let mut frame_shape: Option<(usize, usize, usize)> = None; // (w, h, count)
    let mut truth: Option<DenseMatrix> = None;
    let mut true_rank: Option<usize> = None;
    let y: DenseMatrix = if let Some(path) = &run.input {
        timings.time("read_input", || read_wf64_matrix(Path::new(path)))?
    } else if let Some(dir) = &run.frames {
        let imgs = timings.time("read_frames", || read_frame_dir(Path::new(dir)))?;
        frame_shape = Some((imgs[0].width(), imgs[0].height(), imgs.len()));
        video_to_matrix(&imgs)?
    } else {
        let spec_text = run.synthetic.as_ref().expect("source checked above");
        let parsed = parse_synthetic(spec_text)?;
        let spec = SyntheticSpec {
            size: parsed.size,
            p_r: parsed.p_r,
            p_e: parsed.p_e,
            seed: run.seed,
        };
        let instance = gen_lowrank_sparse(&spec)?;
        truth = Some(instance.x);
        true_rank = Some(instance.rank);
        instance.y
    };

    // Resolve weight scale and sparse weight now that dimensions are known.
    let weight_c = if run.frames.is_some() && args.weight_c.is_none() && file.weight_c.is_none() {
        RpcaConfig::for_background(y.rows(), y.cols()).weight_c
    } else {
        run.weight_c
    };
    let run = config::RpcaRun { weight_c, ..run };

    let result: RpcaResult = match run.method.as_str() {
        "wsnm" => {
            let cfg = RpcaConfig {
                p: run.p,
                weight_c: run.weight_c,
                weight_mode: parse_weight_mode(&run.weight_mode)?,
                mu0: run.mu0,
                rho: run.rho,
                tol: run.tol,
                max_iters: run.max_iters,
            };
            cfg.validate()?;
            timings.time("solve", || wsnm_rpca(&y, &cfg))?
        }
        _ => {
            let lambda = run
                .lambda
                .unwrap_or_else(|| 1.0 / (y.rows().max(y.cols()) as f64).sqrt());
            timings.time("solve", || {
                nnm_rpca(&y, lambda, run.mu0, run.rho, run.tol, run.max_iters)
            })?
        }
    };

    let mut manifest = RunManifest::new("rpca", &run)?;
    write_wf64_matrix(&out_dir.join("x.wf64"), &result.x)?;
    write_wf64_matrix(&out_dir.join("e.wf64"), &result.e)?;
    write_atomic(
        &out_dir.join("residual_history.csv"),
        history_csv(&result).as_bytes(),
    )?;
    manifest.add_output(&out_dir, "x.wf64")?;
    manifest.add_output(&out_dir, "e.wf64")?;
    manifest.add_output(&out_dir, "residual_history.csv")?;

    if let Some((w, h, count)) = frame_shape {
        let backgrounds = matrix_to_frames(&result.x, w, h)?;
        for (j, img) in backgrounds.iter().enumerate() {
            let name = format!("background_{j:04}.pgm");
            write_pgm(&out_dir.join(&name), img)?;
            manifest.add_output(&out_dir, &name)?;
        }
        let masks = binarize_foreground(&result.e, w, h, run.theta)?;
        let mut on_pixels = 0u64;
        for (j, frame) in masks.frames.iter().enumerate() {
            on_pixels += frame.iter().filter(|&&b| b).count() as u64;
            let img = GrayImage::from_pixels(
                w,
                h,
                frame.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect(),
            )?;
            let name = format!("mask_{j:04}.pgm");
            write_pgm(&out_dir.join(&name), &img)?;
            manifest.add_output(&out_dir, &name)?;
        }
        manifest.add_metric_int("frames", count as u64);
        manifest.add_metric_int("foreground_pixels", on_pixels);
    }

    if let Some(x_true) = &truth {
        manifest.add_metric("rel_err", relative_error(&result.x, x_true)?);
        manifest.add_metric_int("true_rank", true_rank.unwrap_or(0) as u64);
    }
    manifest.add_metric_int("iterations", result.iterations as u64);
    manifest.add_metric_bool("converged", result.converged);
    manifest.add_metric_int("estimated_rank", result.estimated_rank as u64);
    if let Some(r) = result.residual_history.last() {
        manifest.add_metric("final_residual", *r);
    }
    manifest.write(&out_dir)?;
    timings.write(&out_dir)?;
    println!(
        "rpca ({}): {} iterations, converged = {}, estimated rank {}",
        run.method, result.iterations, result.converged, result.estimated_rank
    );
    Ok(())
}

fn read_frame_dir(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read frame directory {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map_or(false, |e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .pgm frames in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| read_pgm(p).map_err(Into::into))
        .collect()
}

/// Per-iteration solver history: one row per ALM iteration.
fn history_csv(result: &RpcaResult) -> String {
    let mut out = String::from("iter,residual,step,multiplier_norm\n");
    for i in 0..result.iterations {
        out.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e}\n",
            i + 1,
            result.residual_history[i],
            result.step_history[i],
            result.multiplier_norm_history[i]
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// sweep / table
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Square matrix size m
    #[arg(long)]
    pub size: Option<usize>,
    /// Smallest rank/corruption fraction
    #[arg(long)]
    pub min: Option<f64>,
    /// Largest rank/corruption fraction
    #[arg(long)]
    pub max: Option<f64>,
    /// Grid step
    #[arg(long)]
    pub step: Option<f64>,
    /// Instances per cell
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Schatten power for the `wsnm` method entry
    #[arg(long)]
    pub p: Option<f64>,
    /// Comma-separated methods: nnm, wsnm, wsnm_p<value>
    #[arg(long)]
    pub methods: Option<String>,
    /// Keep measured per-run seconds in report.csv (off: zeroed so reruns
    /// are byte-identical; timings.json always has the wall-clock stages)
    #[arg(long)]
    pub record_timing: Option<bool>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file: config::SweepFile = load_file(args.common.config.as_deref())?;
    let run = config::SweepRun {
        size: pick(args.size, file.size, 150),
        min: pick(args.min, file.min, 0.05),
        max: pick(args.max, file.max, 0.40),
        step: pick(args.step, file.step, 0.05),
        repeats: pick(args.repeats, file.repeats, 2),
        p: pick(args.p, file.p, 0.7),
        methods: pick(args.methods, file.methods, "wsnm,nnm".to_string()),
        record_timing: pick(args.record_timing, file.record_timing, false),
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    if !(run.step > 0.0) {
        bail!("step must be positive, got {}", run.step);
    }
    if !(run.min > 0.0 && run.max < 1.0 && run.min <= run.max) {
        bail!(
            "fraction range must satisfy 0 < min ≤ max < 1, got [{}, {}]",
            run.min,
            run.max
        );
    }
    init_threads(run.threads)?;
    let out_dir = PathBuf::from(&run.out);
    prepare_dir(&out_dir)?;

    let methods = parse_methods(&run.methods, run.p)?;
    let fractions = frange(run.min, run.max, run.step);
    let mut timings = Timings::default();
    let report = timings.time("sweep", || {
        run_grid(
            run.size,
            &fractions,
            &fractions,
            &methods,
            run.repeats,
            run.seed,
        )
    })?;

    let mut manifest = RunManifest::new("sweep", &run)?;
    write_report(&out_dir, &report, &methods, run.record_timing, &mut manifest)?;
    manifest.write(&out_dir)?;
    timings.write(&out_dir)?;
    print_report_summary("sweep", &report, &methods);
    Ok(())
}

#[derive(Args, Debug)]
pub struct TableArgs {
    /// Square matrix size m
    #[arg(long)]
    pub size: Option<usize>,
    /// Comma-separated true ranks, one table row each
    #[arg(long)]
    pub ranks: Option<String>,
    /// Corruption fraction P_e
    #[arg(long)]
    pub pe: Option<f64>,
    /// Instances per row
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Schatten power for the `wsnm` method entry
    #[arg(long)]
    pub p: Option<f64>,
    /// Comma-separated methods: nnm, wsnm, wsnm_p<value>
    #[arg(long)]
    pub methods: Option<String>,
    /// Paper-scale defaults: m = 300 with 10 repeats
    #[arg(long)]
    pub paper_scale: bool,
    /// Keep measured per-run seconds in report.csv
    #[arg(long)]
    pub record_timing: Option<bool>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn cmd_table(args: TableArgs) -> Result<()> {
    let file: config::TableFile = load_file(args.common.config.as_deref())?;
    let paper_scale = args.paper_scale || file.paper_scale.unwrap_or(false);
    let (default_size, default_repeats, default_ranks) = if paper_scale {
        (300, 10, "15,60,90,120,150")
    } else {
        (150, 3, "8,15,30,45,60")
    };
    let run = config::TableRun {
        size: pick(args.size, file.size, default_size),
        ranks: pick(args.ranks, file.ranks, default_ranks.to_string()),
        pe: pick(args.pe, file.pe, 0.05),
        repeats: pick(args.repeats, file.repeats, default_repeats),
        p: pick(args.p, file.p, 0.7),
        methods: pick(args.methods, file.methods, "wsnm,nnm".to_string()),
        paper_scale,
        record_timing: pick(args.record_timing, file.record_timing, false),
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    init_threads(run.threads)?;
    let out_dir = PathBuf::from(&run.out);
    prepare_dir(&out_dir)?;

    let methods = parse_methods(&run.methods, run.p)?;
    let ranks = parse_ranks(&run.ranks)?;
    let p_r_values: Vec<f64> = ranks
        .iter()
        .map(|&r| {
            if r >= run.size {
                bail!("rank {r} is not below the matrix size {}", run.size);
            }
            Ok(r as f64 / run.size as f64)
        })
        .collect::<Result<_>>()?;

    let mut timings = Timings::default();
    let report = timings.time("table", || {
        run_grid(
            run.size,
            &p_r_values,
            &[run.pe],
            &methods,
            run.repeats,
            run.seed,
        )
    })?;

    let mut manifest = RunManifest::new("table", &run)?;
    write_report(&out_dir, &report, &methods, run.record_timing, &mut manifest)?;
    manifest.write(&out_dir)?;
    timings.write(&out_dir)?;
    print_report_summary("table", &report, &methods);
    Ok(())
}

/// Writes `report.csv` (per-run rows; seconds zeroed unless timing was
/// requested) and `diagnostics.csv` (per-run convergence diagnostics), and
/// records summary metrics.
fn write_report(
    out_dir: &Path,
    report: &SweepReport,
    methods: &[Method],
    record_timing: bool,
    manifest: &mut RunManifest,
) -> Result<()> {
    let csv = if record_timing {
        report.to_csv()
    } else {
        let mut scrubbed = report.clone();
        for r in &mut scrubbed.records {
            r.seconds = 0.0;
        }
        scrubbed.to_csv()
    };
    write_atomic(&out_dir.join("report.csv"), csv.as_bytes())?;
    write_atomic(
        &out_dir.join("diagnostics.csv"),
        diagnostics_csv(&report.records).as_bytes(),
    )?;
    manifest.add_output(out_dir, "report.csv")?;
    manifest.add_output(out_dir, "diagnostics.csv")?;
    manifest.add_metric_int("records", report.records.len() as u64);
    for &m in methods {
        let label = m.label();
        manifest.add_metric_int(
            &format!("success_runs_{label}"),
            report.success_count(m) as u64,
        );
        manifest.add_metric_int(
            &format!("success_cells_{label}"),
            report.cell_success_count(m) as u64,
        );
    }
    Ok(())
}

fn print_report_summary(kind: &str, report: &SweepReport, methods: &[Method]) {
    let mut parts = Vec::new();
    for &m in methods {
        parts.push(format!(
            "{}: {} success cells",
            m.label(),
            report.cell_success_count(m)
        ));
    }
    println!("{kind}: {} runs ({})", report.records.len(), parts.join(", "));
}

/// One row per run with the convergence diagnostics: final residual, final
/// squared step, and the (1-based) iteration attaining the largest multiplier
/// norm. All fields are deterministic.
fn diagnostics_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(
        "p_r,p_e,method,repeat,converged,iters,final_residual,final_step,max_multiplier_iter\n",
    );
    for r in records {
        let final_residual = r.residual_history.last().copied().unwrap_or(f64::NAN);
        let final_step = r.step_history.last().copied().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:.8e},{:.8e},{},{},{},{},{:.8e},{:.8e},{}\n",
            r.p_r,
            r.p_e,
            r.method.label(),
            r.repeat,
            u8::from(r.converged),
            r.iterations,
            final_residual,
            final_step,
            argmax_one_based(&r.multiplier_norm_history)
        ));
    }
    out
}

/// 1-based index of the first maximum; 0 for an empty history.
fn argmax_one_based(values: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best_value = v;
            best = i + 1;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// prox
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ProxArgs {
    /// Input matrix: .wf64 float dump or .csv of comma-separated rows
    #[arg(long = "in", visible_alias = "input", value_name = "PATH")]
    pub input: Option<String>,
    /// Schatten power in (0, 1]
    #[arg(long)]
    pub p: Option<f64>,
    /// One uniform weight for every singular value
    #[arg(long)]
    pub weight: Option<f64>,
    /// File of per-singular-value weights (whitespace/comma separated,
    /// non-descending)
    #[arg(long, value_name = "PATH")]
    pub weights: Option<String>,
    /// Derive weights from the input spectrum: wᵢ = C√(mn)/(σᵢ(Y)+ε)
    #[arg(long)]
    pub weight_c: Option<f64>,
    /// Fidelity scale a in a·‖X−Y‖_F² (default ½: the proximal operator)
    #[arg(long)]
    pub fidelity: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn cmd_prox(args: ProxArgs) -> Result<()> {
    let file: config::ProxFile = load_file(args.common.config.as_deref())?;
    let run = config::ProxRun {
        input: pick_required(args.input, file.input, "input")?,
        p: pick_required(args.p, file.p, "p")?,
        weight: args.weight.or(file.weight),
        weights: args.weights.or(file.weights),
        weight_c: args.weight_c.or(file.weight_c),
        fidelity: pick(args.fidelity, file.fidelity, 0.5),
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    let sources = [
        run.weight.is_some(),
        run.weights.is_some(),
        run.weight_c.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if sources != 1 {
        bail!("give exactly one weight source: --weight <w>, --weights <file>, or --weight-c <C>");
    }
    init_threads(run.threads)?;
    let out_dir = PathBuf::from(&run.out);
    prepare_dir(&out_dir)?;

    let y = read_matrix(Path::new(&run.input))?;
    let r = y.rows().min(y.cols());
    let weights = if let Some(w) = run.weight {
        WeightVector::uniform(r, w)?
    } else if let Some(path) = &run.weights {
        let values = parse_weights_file(Path::new(path))?;
        if values.len() != r {
            bail!(
                "weights file {} has {} values, expected {r}",
                path,
                values.len()
            );
        }
        WeightVector::non_descending(values)?
    } else {
        let c = run.weight_c.expect("weight source checked above");
        let factors = svd(&y)?;
        WeightVector::non_descending(rpca_weights(
            &factors.sigma,
            c,
            y.rows(),
            y.cols(),
            1e-16,
        ))?
    };

    let mut timings = Timings::default();
    let outcome = timings.time("prox", || {
        wsnm_prox_with_factors(&y, &weights, run.p, run.fidelity, None)
    })?;

    let mut manifest = RunManifest::new("prox", &run)?;
    write_wf64_matrix(&out_dir.join("result.wf64"), &outcome.x)?;
    let mut spectrum = String::from("index,weight,sigma_before,sigma_after\n");
    for i in 0..r {
        spectrum.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e}\n",
            i + 1,
            weights.values()[i],
            outcome.factors.sigma[i],
            outcome.shrunk[i]
        ));
    }
    write_atomic(&out_dir.join("spectrum.csv"), spectrum.as_bytes())?;
    manifest.add_output(&out_dir, "result.wf64")?;
    manifest.add_output(&out_dir, "spectrum.csv")?;
    let kept = outcome.shrunk.iter().filter(|&&d| d > 0.0).count();
    manifest.add_metric_int("singular_values", r as u64);
    manifest.add_metric_int("rank_after", kept as u64);
    manifest.add_metric_int("zeroed", (r - kept) as u64);
    manifest.write(&out_dir)?;
    timings.write(&out_dir)?;
    println!(
        "prox: {r} singular values, {kept} kept, {} zeroed",
        r - kept
    );
    Ok(())
}

/// Reads a matrix from a WSNMF64 dump or a CSV of comma-separated rows.
fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase());
    match ext.as_deref() {
        Some("csv") => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            parse_matrix_csv(&text)
        }
        _ => Ok(read_wf64_matrix(path)?),
    }
}

fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("line {}: `{cell}` is not a number", lineno + 1))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                bail!(
                    "line {}: {} cells, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("matrix CSV has no rows");
    }
    let (m, n) = (rows.len(), rows[0].len());
    let mut out = DenseMatrix::zeros(m, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

fn parse_weights_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read weights file {}", path.display()))?;
    text.split(|ch: char| ch.is_whitespace() || ch == ',')
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| anyhow!("weight `{tok}` is not a number"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Metric: psnr (PGM pair), rel_err (WSNMF64 estimate vs reference), or
    /// similarity (mask PGM pair, pixels > 127 are foreground)
    #[arg(long)]
    pub kind: Option<String>,
    /// First operand (the estimate for rel_err)
    #[arg(long, value_name = "PATH")]
    pub a: Option<String>,
    /// Second operand (the reference for rel_err)
    #[arg(long, value_name = "PATH")]
    pub b: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let file: config::MetricsFile = load_file(args.common.config.as_deref())?;
    let run = config::MetricsRun {
        kind: pick_required(args.kind, file.kind, "kind")?,
        a: pick_required(args.a, file.a, "a")?,
        b: pick_required(args.b, file.b, "b")?,
        seed: pick(args.common.seed, file.seed, DEFAULT_SEED),
        threads: pick(args.common.threads, file.threads, 0),
        out: pick(args.common.out, file.out, DEFAULT_OUT.to_string()),
    };
    init_threads(run.threads)?;
    let out_dir = PathBuf::from(&run.out);
    prepare_dir(&out_dir)?;

    let value = match run.kind.as_str() {
        "psnr" => {
            let a = read_pgm(Path::new(&run.a))?;
            let b = read_pgm(Path::new(&run.b))?;
            psnr(&a, &b)?
        }
        "rel_err" | "rel-err" => {
            let a = read_wf64_matrix(Path::new(&run.a))?;
            let b = read_wf64_matrix(Path::new(&run.b))?;
            relative_error(&a, &b)?
        }
        "similarity" => {
            let a = mask_from_pgm(Path::new(&run.a))?;
            let b = mask_from_pgm(Path::new(&run.b))?;
            foreground_similarity(&a, &b)?
        }
        other => bail!("unknown metric kind `{other}` (expected psnr, rel_err, or similarity)"),
    };

    let mut manifest = RunManifest::new("metrics", &run)?;
    let body = serde_json::json!({
        "kind": run.kind,
        "a": run.a,
        "b": run.b,
        "value": if value.is_finite() {
            serde_json::Value::from(value)
        } else {
            serde_json::Value::from(format!("{value}"))
        },
    });
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    write_atomic(&out_dir.join("metrics.json"), text.as_bytes())?;
    manifest.add_output(&out_dir, "metrics.json")?;
    manifest.add_metric("value", value);
    manifest.write(&out_dir)?;
    Timings::default().write(&out_dir)?;
    println!("{} = {value:.6}", run.kind);
    Ok(())
}

fn mask_from_pgm(path: &Path) -> Result<ForegroundMask> {
    let img = read_pgm(path)?;
    Ok(ForegroundMask {
        width: img.width(),
        height: img.height(),
        frames: vec![img.pixels().iter().map(|&v| v > 127.0).collect()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_parses() {
        let m = parse_matrix_csv("1, 2, 3\n4, 5, 6\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.get(1, 2), 6.0);
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
    }

    #[test]
    fn diagnostics_rows_are_deterministic() {
        let rec = RunRecord {
            method: Method::Nnm,
            p_r: 0.05,
            p_e: 0.05,
            repeat: 0,
            rel_err: 1e-9,
            log_rel_err: (1e-9f64).ln(),
            estimated_rank: 3,
            true_rank: 3,
            iterations: 3,
            converged: true,
            seconds: 1.25,
            residual_history: vec![1e-2, 1e-5, 1e-8],
            step_history: vec![1.0, 1e-6, 1e-12],
            multiplier_norm_history: vec![0.5, 2.0, 1.0],
            failure: None,
        };
        let csv = diagnostics_csv(&[rec]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "p_r,p_e,method,repeat,converged,iters,final_residual,final_step,max_multiplier_iter"
        );
        let row = lines.next().unwrap();
        assert!(row.contains(",nnm,0,1,3,"), "{row}");
        assert!(row.ends_with(",2"), "{row}");
    }

    #[test]
    fn argmax_prefers_first_tie_and_handles_empty() {
        assert_eq!(argmax_one_based(&[]), 0);
        assert_eq!(argmax_one_based(&[1.0, 3.0, 3.0]), 2);
    }

    #[test]
    fn weight_mode_parses() {
        assert_eq!(parse_weight_mode("fixed-y").unwrap(), WeightMode::FixedFromY);
        assert_eq!(
            parse_weight_mode("reweighted").unwrap(),
            WeightMode::ReweightedPerIteration
        );
        assert_eq!(
            parse_weight_mode("uniform:2.5").unwrap(),
            WeightMode::UniformFixed(2.5)
        );
        assert!(parse_weight_mode("auto").is_err());
    }
}
