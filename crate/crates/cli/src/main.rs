//! `workbench`: dataset generation, training, evaluation, FLOPS reports and
//! SNR sweeps for the packet-detection workbench.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error,
//! 4 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use workbench::channel::ChannelTemplate;
use workbench::cnn::{self, CnnDetectorConfig, CnnModel, Metrics, SUPPORTED_BLOCK_LENS};
use workbench::corrsync::{CorrDetectorConfig, CorrelationDetector, MetricVariant};
use workbench::dataset::{self, Dataset, DatasetSpec, Simulator};
use workbench::flops;
use workbench::nn::{AdamConfig, TrainConfig};
use workbench::preamble::{OfdmParams, PreambleSpec, PulseShape};
use workbench::trials::{self, StreamTrialConfig};
use workbench::{DetectionResult, Error, FORMAT_VERSION};

const DEFAULT_DATASET_NAME: &str = "dataset";

#[derive(Parser)]
#[command(name = "workbench", version, about = "Packet-detection workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled-block dataset from a JSON spec.
    Gen(GenArgs),
    /// Train the CNN detector on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model or the correlation detector.
    Eval(EvalArgs),
    /// Print FLOPS reports.
    Flops(FlopsArgs),
    /// MAE, miss and false-alarm rates against SNR.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = DEFAULT_DATASET_NAME)]
    name: String,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (or `<dir>/<name>` prefix).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    block_len: Option<usize>,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 80)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Feed raw amplitudes instead of standardized blocks.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "conventional", required_unless_present_any = ["conventional", "oracle"])]
    model: Option<PathBuf>,
    #[arg(long)]
    conventional: bool,
    /// Test hook: a perfect predictor echoing the labels.
    #[arg(long, hide = true, conflicts_with_all = ["model", "conventional"])]
    oracle: bool,
    /// Dataset directory; required for model evaluation.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Per-SNR-bin CSV; the miss/false summary goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Conventional mode: packet trials (as many noise-only trials again).
    #[arg(long, default_value_t = 1000)]
    packets: usize,
    /// Conventional mode: fixed SNR instead of the dataset range.
    #[arg(long)]
    snr: Option<f64>,
    /// Conventional mode: no multipath and no CFO.
    #[arg(long)]
    awgn_only: bool,
    /// Conventional mode: metric variant.
    #[arg(long, value_enum, default_value_t = VariantArg::HalfStf)]
    variant: VariantArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    HalfStf,
    ShortLag,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, conflicts_with_all = ["conventional", "all"], required_unless_present_any = ["conventional", "all"])]
    block_len: Option<usize>,
    #[arg(long, conflicts_with = "all")]
    conventional: bool,
    /// Comparison over all supported block lengths.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 1e6)]
    sample_rate: f64,
    /// CSV destination; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON destination.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "conventional", required_unless_present = "conventional")]
    model: Option<PathBuf>,
    #[arg(long)]
    conventional: bool,
    /// Dataset spec used as the channel and block template.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    snr_start: f64,
    #[arg(long, default_value_t = 25.0)]
    snr_stop: f64,
    #[arg(long, default_value_t = 5.0)]
    snr_step: f64,
    /// Blocks (or packet trials) per SNR point.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }
}

/// Maps a core error, treating I/O and parse failures as `io_code`.
fn classify(e: Error, io_code: u8, what: &str) -> Failure {
    let code = match &e {
        Error::InvalidArgument(_) => 2,
        Error::Numerical(_) => 4,
        Error::Corrupt(_) => 3,
        Error::Io(_) | Error::Json(_) => io_code,
    };
    Failure {
        code,
        msg: format!("{what}: {e}"),
    }
}

fn config_err(what: &'static str) -> impl Fn(Error) -> Failure {
    move |e| classify(e, 2, what)
}

fn data_err(what: &'static str) -> impl Fn(Error) -> Failure {
    move |e| classify(e, 3, what)
}

fn io_err(what: &'static str) -> impl Fn(std::io::Error) -> Failure {
    move |e| Failure::data(format!("{what}: {e}"))
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.msg);
        return ExitCode::from(f.code);
    }
    let res = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Flops(a) => cmd_flops(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("WORKBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("WORKBENCH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("thread pool: {e}")))
}

#[derive(Serialize)]
struct Versions {
    tool: &'static str,
    format: u32,
}

#[derive(Serialize)]
struct ExperimentManifest<'a> {
    command: &'a str,
    args: Vec<String>,
    spec_files: Vec<String>,
    seed: u64,
    output_dir: String,
    outputs: Vec<String>,
    versions: Versions,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Writes `<stem>.experiment.json` next to `anchor`.
fn write_experiment(
    anchor: &Path,
    command: &str,
    spec_files: &[&Path],
    seed: u64,
    outputs: &[&Path],
    details: serde_json::Value,
) -> CliResult<()> {
    let dir = anchor.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = anchor
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| command.to_string());
    let stem = stem.split('.').next().unwrap_or(command).to_string();
    let m = ExperimentManifest {
        command,
        args: std::env::args().collect(),
        spec_files: spec_files.iter().map(|p| path_str(p)).collect(),
        seed,
        output_dir: path_str(dir),
        outputs: outputs.iter().map(|p| path_str(p)).collect(),
        versions: Versions {
            tool: env!("CARGO_PKG_VERSION"),
            format: FORMAT_VERSION,
        },
        details,
    };
    let json = serde_json::to_string_pretty(&m).map_err(|e| Failure::data(e.to_string()))?;
    fs::write(dir.join(format!("{stem}.experiment.json")), json + "\n")
        .map_err(io_err("writing experiment manifest"))
}

fn ensure_parent(p: &Path) -> CliResult<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(io_err("creating output directory"))?;
    }
    Ok(())
}

/// `--data` may name the directory or the `<dir>/<name>` prefix.
fn dataset_prefix(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(DEFAULT_DATASET_NAME)
    } else {
        data.to_path_buf()
    }
}

fn load_dataset(data: &Path) -> CliResult<Dataset> {
    let prefix = dataset_prefix(data);
    if !dataset::manifest_path(&prefix).exists() {
        return Err(Failure::data(format!(
            "no dataset at {} (expected {})",
            data.display(),
            dataset::manifest_path(&prefix).display()
        )));
    }
    Dataset::load(&prefix).map_err(|e| Failure::data(format!("loading dataset: {e}")))
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let mut spec = DatasetSpec::load(&a.spec).map_err(config_err("dataset spec"))?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    fs::create_dir_all(&a.out).map_err(io_err("creating output directory"))?;
    let ds = dataset::generate(&spec).map_err(config_err("generating dataset"))?;
    let prefix = a.out.join(&a.name);
    let manifest = ds.save(&prefix).map_err(data_err("saving dataset"))?;
    println!(
        "wrote {} blocks (B = {}): {} start, {} noise-only, {} mid/tail; sha256 {}",
        manifest.n_blocks,
        manifest.block_len,
        manifest.counts.start,
        manifest.counts.noise_only,
        manifest.counts.mid_tail,
        manifest.sha256
    );
    write_experiment(
        &a.out.join("gen"),
        "gen",
        &[&a.spec],
        spec.seed,
        &[&dataset::manifest_path(&prefix), &dataset::blocks_path(&prefix)],
        serde_json::json!({ "dataset": manifest }),
    )
}

fn with_extension_suffix(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let b = ds.spec.block_len;
    if let Some(want) = a.block_len {
        if want != b {
            return Err(Failure::usage(format!(
                "--block-len {want} but the dataset holds B = {b} blocks"
            )));
        }
    }
    let mut cfg = CnnDetectorConfig::new(b);
    cfg.seed = a.seed;
    if a.raw {
        cfg.normalization = cnn::Normalization::Raw;
    }
    let mut model = cnn::build_model(&cfg).map_err(config_err("model"))?;
    let [train, val, _] = ds.split().map_err(config_err("split"))?;
    let tcfg = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        adam: AdamConfig {
            alpha: a.lr,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    ensure_parent(&a.out)?;
    let loss_path = with_extension_suffix(&a.out, ".loss.csv");
    let mut loss_csv = csv::Writer::from_path(&loss_path).map_err(|e| Failure::data(e.to_string()))?;
    loss_csv
        .write_record(["epoch", "train_loss", "val_loss"])
        .map_err(|e| Failure::data(e.to_string()))?;
    let mut write_err = None;
    let history = cnn::train_detector(&mut model, &train, &val, &tcfg, |epoch, tl, vl| {
        let row = [
            (epoch + 1).to_string(),
            tl.to_string(),
            vl.map(|v| v.to_string()).unwrap_or_default(),
        ];
        if let Err(e) = loss_csv.write_record(&row) {
            write_err.get_or_insert(e);
        }
        eprintln!("epoch {:>4}  train {:.4}  val {}", epoch + 1, tl, row[2]);
    })
    .map_err(config_err("training"))?;
    if let Some(e) = write_err {
        return Err(Failure::data(format!("writing loss CSV: {e}")));
    }
    loss_csv.flush().map_err(io_err("writing loss CSV"))?;
    model.save(&a.out).map_err(data_err("saving checkpoint"))?;
    println!(
        "trained B = {b} on {} blocks for {} epochs; final train loss {:.4}",
        train.len(),
        a.epochs,
        history.train_loss.last().copied().unwrap_or(f64::NAN)
    );
    write_experiment(
        &a.out,
        "train",
        &[&dataset::manifest_path(&dataset_prefix(&a.data))],
        a.seed,
        &[&a.out, &cnn::manifest_path(&a.out), &loss_path],
        serde_json::json!({
            "block_len": b,
            "train": tcfg,
            "n_train": train.len(),
            "n_val": val.len(),
            "normalization": cfg.normalization,
        }),
    )
}

fn summary_path(out: &Path) -> PathBuf {
    with_extension_suffix(out, ".summary.csv")
}

fn write_metrics(m: &Metrics, out: &Path) -> CliResult<PathBuf> {
    ensure_parent(out)?;
    let mut bins = Vec::new();
    m.write_bins_csv(&mut bins).map_err(io_err("formatting CSV"))?;
    fs::write(out, bins).map_err(io_err("writing CSV"))?;
    let summary = summary_path(out);
    let mut s = Vec::new();
    m.write_summary_csv(&mut s).map_err(io_err("formatting CSV"))?;
    fs::write(&summary, s).map_err(io_err("writing CSV"))?;
    Ok(summary)
}

fn print_metrics(m: &Metrics) {
    let mae = m.mae.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    println!(
        "MAE {mae}  miss {:.4}  false alarm {:.4}  ({} with start, {} without)",
        m.miss_rate, m.false_alarm_rate, m.n_start, m.n_no_start
    );
}

fn detector_for(variant: VariantArg) -> CliResult<CorrelationDetector> {
    let spec = PreambleSpec::synthetic_default();
    let mut cfg = CorrDetectorConfig::for_preamble(&spec, &OfdmParams::default());
    cfg.variant = match variant {
        VariantArg::HalfStf => MetricVariant::HalfStf,
        VariantArg::ShortLag => MetricVariant::ShortLag,
    };
    CorrelationDetector::new(cfg, workbench::preamble::lts_reference(&spec, &OfdmParams::default()))
        .map_err(config_err("detector"))
}

fn conventional_metrics(
    template: ChannelTemplate,
    shape: PulseShape,
    os: usize,
    snr_range_db: [f64; 2],
    packets: usize,
    seed: u64,
    variant: VariantArg,
) -> CliResult<Metrics> {
    let sim = Simulator::new(
        &PreambleSpec::synthetic_default(),
        &OfdmParams::default(),
        &shape,
        os,
        template,
    )
    .map_err(config_err("simulator"))?;
    let det = detector_for(variant)?;
    let cfg = StreamTrialConfig {
        n_packets: packets,
        n_noise: packets,
        snr_range_db,
        seed,
        ..Default::default()
    };
    let outcomes = trials::run_stream_trials(&sim, &det, &cfg).map_err(config_err("trials"))?;
    trials::trial_metrics(&outcomes).map_err(config_err("metrics"))
}

fn load_model(path: &Path) -> CliResult<CnnModel> {
    CnnModel::load(path).map_err(|e| Failure::data(format!("loading model {}: {e}", path.display())))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mut spec_files: Vec<PathBuf> = Vec::new();
    let metrics = if a.conventional {
        let base = match &a.data {
            Some(d) => {
                let p = dataset_prefix(d);
                spec_files.push(dataset::manifest_path(&p));
                dataset::DatasetManifest::load(&p)
                    .map_err(data_err("dataset manifest"))?
                    .spec
            }
            None => DatasetSpec::default(),
        };
        let template = if a.awgn_only {
            ChannelTemplate::awgn_only()
        } else {
            base.channel
        };
        let range = a.snr.map(|s| [s, s]).unwrap_or(base.snr_range_db);
        conventional_metrics(template, base.pulse_shape, base.os_factor, range, a.packets, a.seed, a.variant)?
    } else {
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| Failure::usage("--data is required unless --conventional"))?;
        let ds = load_dataset(data)?;
        spec_files.push(dataset::manifest_path(&dataset_prefix(data)));
        let [_, _, test] = ds.split().map_err(config_err("split"))?;
        if a.oracle {
            let dets: Vec<DetectionResult> = test
                .iter()
                .map(|b| {
                    if b.has_start() {
                        DetectionResult::at(b.label as usize, b.label as f64)
                    } else {
                        DetectionResult::not_detected(-1.0)
                    }
                })
                .collect();
            Metrics::from_detections(&test, &dets).map_err(config_err("metrics"))?
        } else {
            let path = a.model.as_ref().expect("clap requires --model");
            let model = load_model(path)?;
            spec_files.push(path.clone());
            if model.config.block_len != ds.spec.block_len {
                return Err(Failure::usage(format!(
                    "model expects B = {} but the dataset holds B = {} blocks",
                    model.config.block_len, ds.spec.block_len
                )));
            }
            cnn::evaluate(&model, &test).map_err(config_err("evaluation"))?
        }
    };
    print_metrics(&metrics);
    let summary = write_metrics(&metrics, &a.out)?;
    let specs: Vec<&Path> = spec_files.iter().map(PathBuf::as_path).collect();
    write_experiment(
        &a.out,
        "eval",
        &specs,
        a.seed,
        &[&a.out, &summary],
        serde_json::json!({
            "mode": if a.conventional { "conventional" } else if a.oracle { "oracle" } else { "cnn" },
            "metrics": metrics,
        }),
    )
}

fn emit(out: &Option<PathBuf>, bytes: Vec<u8>) -> CliResult<()> {
    match out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, bytes).map_err(io_err("writing CSV"))
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(io_err("writing stdout")),
    }
}

fn cmd_flops(a: FlopsArgs) -> CliResult<()> {
    if !(a.sample_rate >= 0.0) {
        return Err(Failure::usage("--sample-rate must be non-negative"));
    }
    let corr = CorrDetectorConfig::default();
    let mut buf = Vec::new();
    let summary = if a.all {
        let rows = flops::comparison(&SUPPORTED_BLOCK_LENS, &corr, a.sample_rate)
            .map_err(config_err("flops"))?;
        flops::write_comparison_csv(&rows, &mut buf).map_err(io_err("formatting CSV"))?;
        serde_json::json!({ "convention": flops::CONVENTION, "rows": rows })
    } else {
        let report = match a.block_len {
            Some(b) => flops::model_flops(&CnnDetectorConfig::new(b), a.sample_rate),
            None => flops::conventional_flops(&corr, a.sample_rate),
        }
        .map_err(config_err("flops"))?;
        report.write_csv(&mut buf).map_err(io_err("formatting CSV"))?;
        eprintln!(
            "# {}\n# {} FLOPs per block x {} blocks/s = {} MFLOPS",
            report.convention, report.total_per_block, report.blocks_per_second, report.mflops
        );
        let mut v = serde_json::to_value(&report).map_err(|e| Failure::data(e.to_string()))?;
        if a.conventional {
            let rec = flops::conventional_flops_recursive(&corr, a.sample_rate)
                .map_err(config_err("flops"))?;
            v["recursive_variant"] = serde_json::to_value(rec).map_err(|e| Failure::data(e.to_string()))?;
        }
        v
    };
    emit(&a.out, buf)?;
    if let Some(j) = &a.json {
        ensure_parent(j)?;
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::data(e.to_string()))?;
        fs::write(j, text + "\n").map_err(io_err("writing JSON"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    snr_db: f64,
    mae: Option<f64>,
    miss_rate: f64,
    false_alarm_rate: f64,
    n: usize,
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    if !(a.snr_step > 0.0) || !(a.snr_stop >= a.snr_start) {
        return Err(Failure::usage("need --snr-step > 0 and --snr-stop >= --snr-start"));
    }
    let base = match &a.spec {
        Some(p) => DatasetSpec::load(p).map_err(config_err("dataset spec"))?,
        None => DatasetSpec::default(),
    };
    let model = a.model.as_deref().map(load_model).transpose()?;
    let n_points = ((a.snr_stop - a.snr_start) / a.snr_step + 1e-9).floor() as usize + 1;
    let mut rows = Vec::new();
    for k in 0..n_points {
        let snr = a.snr_start + k as f64 * a.snr_step;
        let seed = a.seed.wrapping_add(k as u64);
        let m = match &model {
            None => conventional_metrics(
                base.channel,
                base.pulse_shape,
                base.os_factor,
                [snr, snr],
                a.n,
                seed,
                VariantArg::HalfStf,
            )?,
            Some(model) => {
                let spec = DatasetSpec {
                    block_len: model.config.block_len,
                    n_blocks: a.n,
                    snr_range_db: [snr, snr],
                    seed,
                    ..base.clone()
                };
                let ds = dataset::generate(&spec).map_err(config_err("generating blocks"))?;
                cnn::evaluate(model, &ds.blocks).map_err(config_err("evaluation"))?
            }
        };
        eprintln!("snr {snr:>5.1} dB  miss {:.4}  false {:.4}", m.miss_rate, m.false_alarm_rate);
        rows.push(SweepRow {
            snr_db: snr,
            mae: m.mae,
            miss_rate: m.miss_rate,
            false_alarm_rate: m.false_alarm_rate,
            n: m.n_start + m.n_no_start,
        });
    }
    ensure_parent(&a.out)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Failure::data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::data(e.to_string()))?;
    }
    w.flush().map_err(io_err("writing CSV"))?;
    let mut specs: Vec<&Path> = Vec::new();
    if let Some(p) = &a.spec {
        specs.push(p);
    }
    if let Some(p) = &a.model {
        specs.push(p);
    }
    write_experiment(
        &a.out,
        "sweep",
        &specs,
        a.seed,
        &[&a.out],
        serde_json::json!({ "mode": if a.conventional { "conventional" } else { "cnn" } }),
    )
}
