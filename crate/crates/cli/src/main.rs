//! `ambient` — reproducible experiment runner: synthetic dataset
//! generation, denoiser training, reconstruction, metric sweeps, and
//! the numerical verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ambient_core::error::Result;
use ambient_core::experiment::{
    build_toy_prior, run_sweep, run_testset, verify_adjoints, verify_gradients, verify_theorem1,
    verify_theorem2, ExperimentConfig, Theorem1Budget, ToyPrior,
};
use ambient_core::io::{load_tensor_dyn, KvMap};
use ambient_core::metrics::compute_metrics;
use ambient_core::models::{
    save_checkpoint, train_ambient_inpaint, train_ambient_mri, train_clean, SigmaDist,
    TrainConfig,
};
use ambient_core::mri_sim::{generate_dataset, load_dataset_item, DatasetParams};
use ambient_core::numerics::rng::Rng;
use ambient_core::numerics::tensor::SignalKind;
use ambient_core::operators::{inpaint_operator, make_pixel_mask, parse_shape, CorruptionPolicy};

#[derive(Parser)]
#[command(name = "ambient", about = "Ambient diffusion posterior sampling toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-coil dataset (phantoms, coils, masks,
    /// k-space, manifest).
    GenData(GenDataArgs),
    /// Train a denoiser from a key = value config file.
    Train(TrainArgs),
    /// Reconstruct the configured test set and print metrics CSV.
    Reconstruct(ConfigArgs),
    /// Run the configured sweep, writing per-sample CSVs and a curve file.
    Sweep(SweepArgs),
    /// Numerical verification suites; exit code 1 on failure.
    Verify(VerifyArgs),
    /// Metrics between two stored tensors.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Image shape, e.g. 32x32.
    #[arg(long, default_value = "32x32")]
    shape: String,
    #[arg(long, default_value_t = 4)]
    coils: usize,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 8)]
    acs: usize,
    #[arg(long, default_value_t = 0.5)]
    smoothness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip autocalibration-region normalization.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (key = value).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint base path (writes `<out>.ambt` and `<out>.kv`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// theorem1 | theorem2 | adjoints | gradients
    suite: String,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value = "1,2,4")]
    coils: String,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training iterations for the theorem-1 suite.
    #[arg(long, default_value_t = 40_000)]
    iters: usize,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    /// Dynamic range; defaults to the reference maximum magnitude.
    #[arg(long)]
    range: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(args) => {
            let shape = parse_shape(&args.shape)?;
            let params = DatasetParams {
                shape,
                n_coils: args.coils,
                accel: args.r,
                acs_lines: args.acs,
                smoothness: args.smoothness,
                normalize: !args.no_normalize,
            };
            let manifest = generate_dataset(&args.out, args.count, &params, args.seed)?;
            println!(
                "wrote {} items to {} (config_hash = {})",
                args.count,
                args.out.display(),
                manifest.get("config_hash")?
            );
            Ok(true)
        }
        Command::Train(args) => {
            train_command(&args.config, &args.out)?;
            Ok(true)
        }
        Command::Reconstruct(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let results = run_testset(&cfg)?;
            println!("# config_hash = {:016x}", cfg.hash());
            println!("id,status,mse,nrmse,psnr,ssim");
            for (i, res) in results.iter().enumerate() {
                match res {
                    Ok(m) => println!(
                        "{i},ok,{:.12e},{:.12e},{:.12e},{}",
                        m.mse,
                        m.nrmse,
                        m.psnr,
                        m.ssim.map(|v| format!("{v:.12e}")).unwrap_or_default()
                    ),
                    Err(e) => println!("{i},error,,,,{}", e.replace(',', ";")),
                }
            }
            Ok(true)
        }
        Command::Sweep(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let outcome = run_sweep(&cfg, &args.out)?;
            println!("curve: {}", outcome.curve_path.display());
            for p in &outcome.sample_paths {
                println!("samples: {}", p.display());
            }
            Ok(true)
        }
        Command::Verify(args) => verify_command(&args),
        Command::Metrics(args) => {
            let reference = load_tensor_dyn(&args.reference)?.to_c128();
            let estimate = load_tensor_dyn(&args.estimate)?.to_c128();
            let range = args
                .range
                .unwrap_or_else(|| reference.magnitude().max_abs().max(1e-12));
            let m = compute_metrics(&reference, &estimate, range)?;
            println!("mse = {:.12e}", m.mse);
            println!("nrmse = {:.12e}", m.nrmse);
            println!("psnr = {:.12e}", m.psnr);
            if let Some(s) = m.ssim {
                println!("ssim = {:.12e}", s);
            }
            Ok(true)
        }
    }
}

fn parse_sigma_dist(kv: &KvMap) -> Result<SigmaDist> {
    let text = kv.get_or("sigma_dist", "loguniform:0.02,10");
    if let Some(rest) = text.strip_prefix("loguniform:") {
        let parts: Vec<f64> = rest
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect();
        if parts.len() == 2 {
            return Ok(SigmaDist::LogUniform {
                lo: parts[0],
                hi: parts[1],
            });
        }
    }
    if let Some(rest) = text.strip_prefix("levels:") {
        let levels: Vec<f64> = rest
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect();
        if !levels.is_empty() {
            return Ok(SigmaDist::Levels(levels));
        }
    }
    Err(ambient_core::error::Error::Config(format!(
        "bad sigma_dist `{text}` (want loguniform:<lo>,<hi> or levels:<v1>,<v2>,...)"
    )))
}

fn train_command(config: &PathBuf, out: &PathBuf) -> Result<()> {
    let kv = KvMap::load(config)?;
    let task = kv.get("task")?.to_string();
    let shape = parse_shape(kv.get_or("shape", "8"))?;
    let hidden: Vec<usize> = kv
        .get_or("hidden", "64,64")
        .split(',')
        .filter_map(|s| s.trim().parse().ok())
        .collect();
    let mut cfg = TrainConfig::new(
        kv.get_f64_or("lr", 1.5e-3)?,
        kv.get_usize_or("batch", 32)?,
        kv.get_usize_or("iters", 20_000)?,
        kv.get_u64_or("seed", 0)?,
    )?
    .with_sigma(parse_sigma_dist(&kv)?);
    if kv.get_bool_or("cosine_decay", true)? {
        cfg = cfg.with_cosine_decay();
    }
    if kv.get_bool_or("adam", true)? {
        cfg = cfg.with_adam();
    }
    let prior_spec = ToyPrior {
        components: kv.get_usize_or("prior_components", 2)?,
        tau_sq: kv.get_f64_or("prior_tau_sq", 0.25)?,
        mean_scale: kv.get_f64_or("prior_mean_scale", 1.0)?,
        seed: kv.get_u64_or("prior_seed", 7)?,
    };
    let result = match task.as_str() {
        "clean" => {
            let prior = build_toy_prior(&shape, &prior_spec)?;
            let mut sampler = move |r: &mut Rng| prior.sample(r);
            train_clean(&mut sampler, &shape, SignalKind::Real, &hidden, &cfg)?
        }
        "ambient-inpaint" => {
            let prior = build_toy_prior(&shape, &prior_spec)?;
            let p = kv.get_f64_or("p", 0.8)?;
            let delta = kv.get_f64_or("delta", 0.1)?;
            let cfg = cfg.with_corruption(CorruptionPolicy::PixelErase { delta });
            let shape_inner = shape.clone();
            let mut sampler = move |r: &mut Rng| {
                let x0 = prior.sample(r);
                let mask = make_pixel_mask(&shape_inner, p, r.next_u64()).unwrap();
                let op = inpaint_operator(mask.clone());
                (op.apply(&x0).unwrap(), mask)
            };
            train_ambient_inpaint(&mut sampler, &shape, SignalKind::Real, &hidden, &cfg)?
        }
        "ambient-mri" => {
            let dataset = PathBuf::from(kv.get("dataset")?);
            let manifest = KvMap::load(dataset.join("manifest.kv"))?;
            let count = manifest.get_usize("count")?;
            let cfg = cfg.with_corruption(CorruptionPolicy::NextAcceleration);
            let mut cursor = 0usize;
            let mut sampler = move |_r: &mut Rng| {
                let item = load_dataset_item(&dataset, cursor % count).unwrap();
                cursor += 1;
                item.kspace
            };
            train_ambient_mri(&mut sampler, &shape, &hidden, &cfg)?
        }
        other => {
            return Err(ambient_core::error::Error::Config(format!(
                "unknown training task `{other}` (want clean | ambient-inpaint | ambient-mri)"
            )))
        }
    };
    let tail = &result.loss_trace[result.loss_trace.len().saturating_sub(50)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    let mut extra = KvMap::new();
    extra.set("config_hash", format!("{:016x}", kv.hash()));
    extra.set("task", task);
    extra.set("final_loss", format!("{final_loss:.6e}"));
    extra.set("train_seed", kv.get_u64_or("seed", 0)?);
    save_checkpoint(&result.denoiser, out, &extra)?;
    println!(
        "checkpoint written to {}.ambt (final loss {final_loss:.4e})",
        out.display()
    );
    Ok(())
}

fn verify_command(args: &VerifyArgs) -> Result<bool> {
    match args.suite.as_str() {
        "adjoints" => {
            let outcomes = verify_adjoints(100, args.seed)?;
            let mut pass = true;
            for o in &outcomes {
                println!(
                    "operator = {}\nmax_deviation = {:.6e}\npass = {}",
                    o.operator, o.max_deviation, o.pass
                );
                pass &= o.pass;
            }
            Ok(pass)
        }
        "gradients" => {
            let out = verify_gradients(100, args.seed)?;
            println!("points = {}", out.points);
            println!("max_rel_error = {:.6e}", out.max_rel_error);
            println!("pass = {}", out.pass);
            Ok(out.pass)
        }
        "theorem2" => {
            let coils: Vec<usize> = args
                .coils
                .split(',')
                .filter_map(|s| s.trim().parse().ok())
                .collect();
            let out = verify_theorem2(args.n, &coils, &[2.0, 4.0], args.trials, args.seed)?;
            for r in &out.reports {
                println!("{r}");
                println!();
            }
            println!("calibration_gap_se = {:.3}", out.calibration_gap_se);
            println!("pass = {}", out.pass);
            Ok(out.pass)
        }
        "theorem1" => {
            let budget = Theorem1Budget {
                iters: args.iters,
                ..Theorem1Budget::default()
            };
            let out = verify_theorem1(&budget)?;
            println!("{}", out.trained);
            println!();
            println!("{}", out.untrained_control);
            println!();
            println!("final_loss = {:.6e}", out.final_loss);
            println!("pass = {}", out.pass);
            Ok(out.pass)
        }
        other => Err(ambient_core::error::Error::Config(format!(
            "unknown verify suite `{other}` (want theorem1 | theorem2 | adjoints | gradients)"
        ))),
    }
}
