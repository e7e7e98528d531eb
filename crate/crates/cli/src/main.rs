use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gaitgraph::data::{load_trial_dir, save_trial_csv, synth_session, trial_file_name, write_overlay_csv};
use gaitgraph::experiment::{
    cycle_report, prepare, prepare_trials, ridge_report, run_training, saliency_report, PreparedData, RunConfig,
};
use gaitgraph::graph::ElectrodeLayout;
use gaitgraph::loss::LossKind;
use gaitgraph::net::{Checkpoint, Model};
use gaitgraph::train::{batch_gradients, evaluate};
use gaitgraph::verify::{run_suite, SuiteConfig};
use gaitgraph::{analysis, exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// EEG-to-gait decoding with graph convolutions.
#[derive(Parser)]
#[command(name = "gaitgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic walking session as trial CSV files.
    Gen(RunArgs),
    /// Preprocess, split and standardize trials.
    Prep(RunArgs),
    /// Train a model and write its checkpoint, log and test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(ModelArgs),
    /// Per-channel saliency and a scalp topography.
    Saliency(SaliencyArgs),
    /// Finite-difference check of every differentiable op and the model.
    Gradcheck(GradcheckArgs),
    /// Time one forward and backward pass per batch, parallel and sequential.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON; the synthetic benchmark when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory of block<b>_trial<t>.csv recordings used instead of the generator.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Caps max_epochs, and patience with it.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// htsr, mse, time_reward or time_freq.
    #[arg(long)]
    loss: Option<LossKind>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct SaliencyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Test windows averaged into the map.
    #[arg(long, default_value_t = 256)]
    windows: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Suite configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    iters: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}

/// Runs one subcommand; `Ok(false)` is a failed check.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Gen(a) => gen(&a),
        Command::Prep(a) => prep(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Saliency(a) => saliency(&a),
        Command::Gradcheck(a) => return gradcheck(&a),
        Command::Bench(a) => bench(&a),
    }?;
    Ok(true)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::benchmark(),
    };
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig, dir: Option<&Path>) -> Result<PreparedData> {
    let t0 = Instant::now();
    let data = match dir {
        Some(d) => {
            let raw = load_trial_dir(d, Some(&ElectrodeLayout::standard_10_10()))?;
            log::info!("loaded {} trials from {}", raw.len(), d.display());
            prepare_trials(cfg, &raw)?
        }
        None => prepare(cfg)?,
    };
    log::info!(
        "windows train {} / val {} / test {} ({:.1}s)",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        t0.elapsed().as_secs_f64()
    );
    Ok(data)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn gen(a: &RunArgs) -> Result<()> {
    if a.data.is_some() {
        bail!("gen synthesizes its own data; --data is not accepted");
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    create_out(&a.out)?;
    let trials = synth_session(&cfg.synth, cfg.session.blocks, cfg.session.trials_per_block)?;
    for tr in &trials {
        save_trial_csv(tr, &a.out.join(trial_file_name(tr.block_id, tr.trial_id)))?;
    }
    fs::write(a.out.join("config.json"), cfg.to_json()?)?;
    log::info!("wrote {} trials to {}", trials.len(), a.out.display());
    Ok(())
}

fn prep(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let data = load_data(&cfg, a.data.as_deref())?;
    for (name, set) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        let dir = a.out.join(name);
        create_out(&dir)?;
        for tr in set.trials() {
            save_trial_csv(tr, &dir.join(trial_file_name(tr.block_id, tr.trial_id)))?;
        }
    }
    let summary = json!({
        "channels": data.layout.names(),
        "window": data.train.window(),
        "stride": data.train.stride(),
        "windows": {"train": data.train.len(), "val": data.val.len(), "test": data.test.len()},
        "scaler": data.scaler,
    });
    write_json(&a.out.join("dataset.json"), &summary)?;
    Ok(())
}

/// Forwards the training log to a file and echoes epoch lines to the logger.
struct ProgressLog<W: Write> {
    inner: W,
    pending: Vec<u8>,
}

impl<W: Write> Write for ProgressLog<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.inner.write_all(buf)?;
        self.pending.extend_from_slice(buf);
        while let Some(pos) = self.pending.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.pending.drain(..=pos).collect();
            let line = String::from_utf8_lossy(&line);
            if line.contains("\"kind\":\"epoch\"") {
                log::info!("{}", line.trim_end());
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.run.config.as_deref(), a.run.seed)?;
    if let Some(kind) = a.loss {
        cfg = cfg.with_loss(kind);
    }
    if let Some(e) = a.epochs {
        cfg.train.max_epochs = e;
        cfg.train.patience = cfg.train.patience.min(e);
    }
    if let Some(s) = a.stride {
        cfg.train.stride = s;
    }
    cfg.validate()?;
    create_out(&a.run.out)?;
    let data = load_data(&cfg, a.run.data.as_deref())?;
    let ridge = ridge_report(&data, cfg.ridge_lambda)?;
    log::info!("ridge baseline test r {:.4}", ridge.mean_r());

    let t0 = Instant::now();
    let file = File::create(a.run.out.join("train_log.jsonl"))?;
    let mut progress = ProgressLog { inner: BufWriter::new(file), pending: Vec::new() };
    let result = run_training(&cfg, &data, Some(&mut progress))?;
    progress.flush()?;
    let seconds = t0.elapsed().as_secs_f64();

    result.outcome.model.checkpoint().save(&a.run.out.join("checkpoint.json"))?;
    fs::write(a.run.out.join("metrics.json"), result.metrics.to_json()? + "\n")?;
    fs::write(a.run.out.join("ridge_metrics.json"), ridge.to_json()? + "\n")?;
    fs::write(a.run.out.join("config.json"), cfg.to_json()?)?;
    let info = json!({
        "seconds": seconds,
        "epochs": result.outcome.history.len(),
        "best_epoch": result.outcome.best_epoch,
        "best_val_r": result.outcome.best_val_r,
        "stop": format!("{:?}", result.outcome.stop),
        "parallel": exec::parallel_enabled(),
    });
    write_json(&a.run.out.join("run_info.json"), &info)?;
    log::info!(
        "test r {:.4} (ridge {:.4}) after {} epochs in {:.1}s",
        result.metrics.mean_r(),
        ridge.mean_r(),
        result.outcome.history.len(),
        seconds
    );
    Ok(())
}

/// Checkpoint plus the run configuration it was trained with: `--config`
/// if given, else `config.json` beside the checkpoint, else the benchmark.
fn load_model(a: &ModelArgs) -> Result<(Model, RunConfig)> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let beside = a.checkpoint.with_file_name("config.json");
    let path = a.run.config.clone().or_else(|| beside.exists().then_some(beside));
    let mut cfg = load_config(path.as_deref(), a.run.seed)?;
    cfg.model = ck.config.clone();
    Ok((Model::from_checkpoint(ck)?, cfg))
}

fn eval(a: &ModelArgs) -> Result<()> {
    let (model, cfg) = load_model(a)?;
    let data = load_data(&cfg, a.run.data.as_deref())?;
    create_out(&a.run.out)?;
    let chunk = cfg.train.eval_chunk;
    let mut metrics = evaluate(&model, &data.test, chunk, Some(&data.scaler.joints))?;
    metrics.seed = Some(cfg.train.seed);
    fs::write(a.run.out.join("metrics.json"), metrics.to_json()? + "\n")?;
    let rows = cycle_report(&model, &data, chunk)?;
    write_overlay_csv(&rows, BufWriter::new(File::create(a.run.out.join("cycles_overlay.csv"))?))?;
    log::info!("test r {:.4}, {} overlay rows", metrics.mean_r(), rows.len());
    Ok(())
}

fn saliency(a: &SaliencyArgs) -> Result<()> {
    let (model, cfg) = load_model(&a.model)?;
    let data = load_data(&cfg, a.model.run.data.as_deref())?;
    create_out(&a.model.run.out)?;
    let map = saliency_report(&model, &data, a.windows, cfg.train.eval_chunk)?;
    let out = &a.model.run.out;
    map.write_csv(BufWriter::new(File::create(out.join("saliency.csv"))?))?;
    fs::write(out.join("topomap.svg"), analysis::project_topomap(&map, &data.layout)?)?;
    log::info!("top channels {:?}", map.top_channels(4));
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let cfg: SuiteConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SuiteConfig::default(),
    };
    let t0 = Instant::now();
    let report = run_suite(&cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(p) = &a.out {
        fs::write(p, text + "\n")?;
    }
    let failed: Vec<&str> = report.rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    log::info!(
        "{} checks, {} failed, {:.1}s",
        report.rows.len(),
        failed.len(),
        t0.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        log::error!("failing checks: {}", failed.join(", "));
    }
    Ok(report.all_passed)
}

fn bench(a: &BenchArgs) -> Result<()> {
    if a.batch < 2 || a.iters == 0 {
        bail!("--batch must be at least 2 and --iters positive");
    }
    let cfg = load_config(a.config.as_deref(), None)?;
    let data = prepare(&cfg)?;
    let n = a.batch.min(data.train.len());
    let (x, y) = data.train.gather_range(0..n)?;
    let model = Model::new(cfg.model.clone(), &data.adjacency.prior, cfg.train.seed)?;
    let time = |parallel: bool| -> Result<f64> {
        exec::set_parallel(parallel);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t0 = Instant::now();
        for _ in 0..a.iters {
            batch_gradients(&model, x.clone(), &y, &cfg.loss, &mut rng)?;
        }
        Ok(t0.elapsed().as_secs_f64() / a.iters as f64)
    };
    let parallel = time(true)?;
    let sequential = time(false)?;
    exec::set_parallel(true);
    let report = json!({
        "batch": n,
        "iters": a.iters,
        "threads": exec::thread_count(),
        "parallel_s_per_batch": parallel,
        "sequential_s_per_batch": sequential,
        "speedup": sequential / parallel,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
