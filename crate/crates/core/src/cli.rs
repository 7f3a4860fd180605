//! Command-line front end.
//!
//! Every command writes a resolved configuration snapshot next to its
//! outputs. Training hyperparameters resolve as defaults, then the
//! `--config` JSON file, then `--set key=value` overrides, then dedicated
//! flags. Failures print one `error[<category>]: <message>` line to stderr and
//! exit with the category's code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, ErrorCategory, Result};
use crate::evaluate::{
    compute_metrics, leakage_audit, predict, AblationTable, EpochPrediction, Metric, TransferTable, WindowRecord,
};
use crate::ingest::{read_bundle, Manifest, Split};
use crate::model::checkpoint;
use crate::preprocess::{preprocess_recording, read_cache, write_cache, PipelineParams};
use crate::synthdata::{generate_corpus, SynthSpec};
use crate::train::{
    ablation_suite, train_run, transfer_matrix, write_log, DomainData, EarlyStop, TrainConfig, Variant,
};

/// Environment variable naming the preprocessed-cache root.
pub const CACHE_ENV: &str = "STDA_CACHE";

pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "log.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const WINDOWS_FILE: &str = "windows.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_DIR: &str = "manifests";
pub const ABLATION_FILE: &str = "ablation.json";
pub const TRANSFER_FILE: &str = "transfer.json";

#[derive(Debug, Parser)]
#[command(name = "stda", version, about = "Cross-dataset sleep staging with spectrogram domain adaptation")]
pub struct Cli {
    /// JSON file with configuration fields (training or synthesis, by command).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Field override such as `model.lstm_hidden=64`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-domain corpus.
    Synth {
        /// `default` or a path to a JSON spec.
        #[arg(long, default_value = "default")]
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn every domain of a corpus into cached spectrograms.
    Preprocess {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        /// Cache root; defaults to the STDA_CACHE environment variable.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and score it on the target test split.
    Train {
        #[command(flatten)]
        pair: PairArgs,
        #[command(flatten)]
        hyper: TrainArgs,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Score a trained run on any cached domain and split.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Domain to evaluate on.
        #[arg(long)]
        on: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train all six ablation variants over the configured seeds.
    Ablate {
        #[command(flatten)]
        pair: PairArgs,
        #[command(flatten)]
        hyper: TrainArgs,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Train every ordered source/target pair of the listed domains.
    Transfer {
        #[arg(long, value_delimiter = ',', required = true)]
        datasets: Vec<String>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        hyper: TrainArgs,
        #[arg(long, default_value = "transfer")]
        out: PathBuf,
    },
    /// Render stored ablation or transfer results.
    Report {
        #[arg(long, value_name = "DIR", conflicts_with = "transfer", required_unless_present = "transfer")]
        ablation: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        transfer: Option<PathBuf>,
        /// Print the stored JSON instead of text tables.
        #[arg(long)]
        json: bool,
    },
    /// Check a finished training run for data leakage.
    Audit { run: PathBuf },
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// Cache root; defaults to the STDA_CACHE environment variable.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

/// Flags that mirror `TrainConfig` fields.
#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// Single seed; overrides `seeds`.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "epochs", alias = "total-epochs")]
    pub total_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long = "early-stop", value_name = "target|source")]
    pub early_stop: Option<EarlyStop>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch-size", alias = "batch-size-per-domain")]
    pub batch_size_per_domain: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub lambda_override: Option<f64>,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        macro_rules! copy {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        copy!(alpha, total_epochs, patience, variant, learning_rate, batch_size_per_domain);
        if let Some(v) = self.early_stop {
            cfg.early_stop_metric = v;
        }
        if self.steps_per_epoch.is_some() {
            cfg.steps_per_epoch = self.steps_per_epoch;
        }
        if self.lambda_override.is_some() {
            cfg.lambda_override = self.lambda_override;
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ErrorCategory::Usage.exit_code() } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let first = e.to_string();
                let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
                eprintln!("error[usage]: {line}");
            }
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{}]: {}", category.as_str(), e.to_string().replace('\n', " "));
            category.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec, seed, out } => synth(cli, spec, *seed, out),
        Command::Preprocess { input, out } => preprocess(input, &cache_root(out.as_deref())?),
        Command::Train { pair, hyper, out } => train(cli, pair, hyper, out),
        Command::Evaluate { run, on, split, cache } => evaluate(run, on, split, cache.as_deref()),
        Command::Ablate { pair, hyper, out } => ablate(cli, pair, hyper, out),
        Command::Transfer { datasets, cache, hyper, out } => transfer(cli, datasets, cache.as_deref(), hyper, out),
        Command::Report { ablation, transfer, json } => report(ablation.as_deref(), transfer.as_deref(), *json),
        Command::Audit { run } => audit(run),
    }
}

fn cache_root(flag: Option<&Path>) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p.to_path_buf()),
        None => std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Usage(format!("no cache directory: pass --cache/--out or set {CACHE_ENV}"))),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Overlays `patch` onto `base`. Keys absent from `base` are rejected so a
/// typo cannot silently fall back to a default.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| Error::Usage(format!("unknown configuration key `{sub}`")))?;
                merge(slot, v, &sub)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Applies one `a.b.c=value` override. The value is read as JSON when it
/// parses, otherwise as a bare string.
fn apply_override(base: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| Error::Usage(format!("override `{item}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let patch = key.rsplit('.').fold(value, |acc, part| json!({ part: acc }));
    merge(base, patch, "")
}

fn layered<T: Serialize + serde::de::DeserializeOwned>(defaults: &T, cli: &Cli) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    if let Some(path) = &cli.config {
        merge(&mut value, read_json(path)?, "")?;
    }
    for item in &cli.overrides {
        apply_override(&mut value, item)?;
    }
    serde_json::from_value(value).map_err(|e| Error::Usage(format!("invalid configuration: {e}")))
}

/// Resolves a training configuration from defaults, file, overrides and
/// flags, in increasing precedence.
pub fn resolve_train_config(cli: &Cli, flags: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = layered(&TrainConfig::default(), cli)?;
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn synth(cli: &Cli, spec: &str, seed: Option<u64>, out: &Path) -> Result<()> {
    let base = match spec {
        "default" => SynthSpec::default(),
        path => serde_json::from_value(read_json(Path::new(path))?)
            .map_err(|e| Error::Usage(format!("invalid synth spec {path}: {e}")))?,
    };
    let mut resolved: SynthSpec = layered(&base, cli)?;
    if let Some(s) = seed {
        resolved.seed = s;
    }
    let manifests = generate_corpus(&resolved, out)?;
    for m in manifests {
        log::info!("domain {}: {} recordings", m.dataset_name, m.recordings.len());
    }
    Ok(())
}

fn preprocess(corpus: &Path, cache: &Path) -> Result<()> {
    let params = PipelineParams::default();
    let mut domains: Vec<PathBuf> = fs::read_dir(corpus)
        .map_err(|e| Error::io(corpus, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    domains.sort();
    if domains.is_empty() {
        return Err(Error::Input(format!("no domain with a manifest.json under {}", corpus.display())));
    }
    create_dir(cache)?;
    write_json(&cache.join("pipeline.json"), &params)?;
    for dir in domains {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let dest = cache.join(&manifest.dataset_name);
        create_dir(&dest)?;
        let (mut fresh, mut cached) = (0, 0);
        for entry in manifest.recordings.iter().filter(|e| e.include) {
            if read_cache(&dest, &entry.recording_id, &params)?.is_some() {
                cached += 1;
                continue;
            }
            let rec = read_bundle(&dir.join(&entry.path))?;
            let pre = preprocess_recording(&rec, &params)?;
            write_cache(&dest, &pre, &params)?;
            fresh += 1;
        }
        manifest.save(&dest.join("manifest.json"))?;
        log::info!("domain {}: {fresh} preprocessed, {cached} already cached", manifest.dataset_name);
    }
    Ok(())
}

fn load_domain(cache: &Path, name: &str) -> Result<DomainData> {
    let dir = cache.join(name);
    if !dir.is_dir() {
        return Err(Error::Input(format!("domain {name} not found under {}", cache.display())));
    }
    DomainData::load(&dir)
}

fn window_records(domains: &[&DomainData]) -> Vec<WindowRecord> {
    let mut out = Vec::new();
    for d in domains {
        for split in [Split::Train, Split::Val, Split::Test] {
            out.extend(d.windows.get(split).iter().map(|w| WindowRecord::from_window(&d.name, split, w)));
        }
    }
    out
}

fn train(cli: &Cli, pair: &PairArgs, flags: &TrainArgs, out: &Path) -> Result<()> {
    let cfg = resolve_train_config(cli, flags)?;
    let seed = match cfg.seeds.as_slice() {
        [s] => *s,
        _ => return Err(Error::Usage("train runs one seed; pass --seed (use ablate for several)".into())),
    };
    let cache = cache_root(pair.cache.as_deref())?;
    let source = load_domain(&cache, &pair.source)?;
    let target = load_domain(&cache, &pair.target)?;
    create_dir(out)?;
    let snapshot =
        json!({ "command": "train", "source": pair.source, "target": pair.target, "seed": seed, "train": cfg });
    write_json(&out.join(CONFIG_SNAPSHOT), &snapshot)?;

    let outcome = train_run(&source, &target, &cfg, seed)?;
    write_log(&out.join(LOG_FILE), &outcome.log)?;
    let meta = json!({ "source": pair.source, "target": pair.target, "seed": seed, "variant": cfg.variant, "best_epoch": outcome.best_epoch });
    checkpoint::save(&out.join(CHECKPOINT_FILE), &outcome.model, meta)?;

    let predictions = predict(&outcome.model, &target.windows.test, cfg.eval_batch)?;
    let target_metrics = compute_metrics(&predictions)?;
    let source_metrics = compute_metrics(&predict(&outcome.model, &source.windows.test, cfg.eval_batch)?)?;
    write_json(&out.join(PREDICTIONS_FILE), &predictions)?;
    write_json(
        &out.join(METRICS_FILE),
        &json!({
            "best_epoch": outcome.best_epoch,
            "best_val_mf1": outcome.best_val_mf1,
            "class_weights": outcome.class_weights.0,
            "target_test": target_metrics,
            "source_test": source_metrics,
        }),
    )?;
    write_json(&out.join(WINDOWS_FILE), &window_records(&[&source, &target]))?;
    let mdir = out.join(MANIFEST_DIR);
    create_dir(&mdir)?;
    for d in [&source, &target] {
        d.manifest.save(&mdir.join(format!("{}.json", d.name)))?;
    }
    println!(
        "{} -> {} [{}] seed {seed}: target test Acc {:.2} MF1 {:.2} κ {:.3} (best epoch {})",
        pair.source,
        pair.target,
        cfg.variant,
        100.0 * target_metrics.accuracy,
        100.0 * target_metrics.macro_f1,
        target_metrics.kappa,
        outcome.best_epoch
    );
    Ok(())
}

fn evaluate(run: &Path, on: &str, split: &str, cache: Option<&Path>) -> Result<()> {
    let split: Split = serde_json::from_value(Value::String(split.to_string()))
        .map_err(|_| Error::Usage(format!("unknown split {split:?}; expected train, val or test")))?;
    let (model, _) = checkpoint::load(&run.join(CHECKPOINT_FILE))?;
    let domain = load_domain(&cache_root(cache)?, on)?;
    let windows = domain.windows.get(split);
    if windows.is_empty() {
        return Err(Error::Input(format!("domain {on} has no {} windows", split.as_str())));
    }
    let predictions = predict(&model.prune(), windows, 8)?;
    let metrics = compute_metrics(&predictions)?;
    let stem = format!("eval_{on}_{}", split.as_str());
    write_json(&run.join(format!("{stem}.json")), &json!({ "domain": on, "split": split, "metrics": metrics }))?;
    let mut csv = String::from("recording_id,epoch_index,true,predicted\n");
    for p in &predictions {
        csv.push_str(&format!("{},{},{},{}\n", p.recording_id, p.epoch_index, p.truth, p.predicted));
    }
    let csv_path = run.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    println!(
        "{on}/{}: Acc {:.2} MF1 {:.2} κ {:.3} over {} epochs",
        split.as_str(),
        100.0 * metrics.accuracy,
        100.0 * metrics.macro_f1,
        metrics.kappa,
        metrics.n_epochs
    );
    Ok(())
}

fn ablate(cli: &Cli, pair: &PairArgs, flags: &TrainArgs, out: &Path) -> Result<()> {
    let cfg = resolve_train_config(cli, flags)?;
    let cache = cache_root(pair.cache.as_deref())?;
    let source = load_domain(&cache, &pair.source)?;
    let target = load_domain(&cache, &pair.target)?;
    create_dir(out)?;
    write_json(
        &out.join(CONFIG_SNAPSHOT),
        &json!({ "command": "ablate", "source": pair.source, "target": pair.target, "train": cfg }),
    )?;
    let table = ablation_suite(&source, &target, &cfg)?;
    write_json(&out.join(ABLATION_FILE), &table)?;
    print!("{}", table.render());
    Ok(())
}

fn transfer(cli: &Cli, names: &[String], cache: Option<&Path>, flags: &TrainArgs, out: &Path) -> Result<()> {
    let cfg = resolve_train_config(cli, flags)?;
    let cache = cache_root(cache)?;
    let datasets = names.iter().map(|n| load_domain(&cache, n)).collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_SNAPSHOT), &json!({ "command": "transfer", "datasets": names, "train": cfg }))?;
    let table = transfer_matrix(&datasets, &cfg)?;
    write_json(&out.join(TRANSFER_FILE), &table)?;
    print!("{}\n{}", table.render(Metric::Accuracy), table.render(Metric::MacroF1));
    Ok(())
}

fn report(ablation: Option<&Path>, transfer: Option<&Path>, as_json: bool) -> Result<()> {
    if let Some(dir) = ablation {
        let path = dir.join(ABLATION_FILE);
        let table: AblationTable = serde_json::from_value(read_json(&path)?)?;
        if as_json {
            println!("{}", serde_json::to_string_pretty(&table)?);
        } else {
            print!("{}", table.render());
        }
    } else if let Some(dir) = transfer {
        let path = dir.join(TRANSFER_FILE);
        let table: TransferTable = serde_json::from_value(read_json(&path)?)?;
        if as_json {
            println!("{}", serde_json::to_string_pretty(&table)?);
        } else {
            print!("{}\n{}", table.render(Metric::Accuracy), table.render(Metric::MacroF1));
        }
    }
    Ok(())
}

fn audit(run: &Path) -> Result<()> {
    let mdir = run.join(MANIFEST_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&mdir)
        .map_err(|e| Error::io(&mdir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let manifests = paths.iter().map(|p| Manifest::load(p)).collect::<Result<Vec<_>>>()?;
    let windows: Vec<WindowRecord> = serde_json::from_value(read_json(&run.join(WINDOWS_FILE))?)?;
    let predictions: Vec<EpochPrediction> = serde_json::from_value(read_json(&run.join(PREDICTIONS_FILE))?)?;
    let report = leakage_audit(&manifests, &windows, &predictions);
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        if c.offenders.is_empty() {
            println!("{status}  {}", c.name);
        } else {
            println!("{status}  {}: {}", c.name, c.offenders.join(", "));
        }
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Error::Integrity(format!("leakage audit failed: {}", failed.join(", "))))
    }
}
