mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hemoscope::energy::{load_cases, reference_cases, report};
use hemoscope::nn::{evaluate, export_features, features_csv, train, EvalReport, TrainedModel};
use hemoscope::quant::{agreement, footprint_report, quantize, QuantizedModel};
use hemoscope::sim::{
    frames_csv, generate_dataset, physics_check, read_dataset, read_frames_csv, write_dataset, FlowClass, Split,
};
use hemoscope::telemetry::PackedRecording;
use hemoscope::Exec;

use config::{Resolved, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "hemoscope", version, about = "Capsule bleeding monitor pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed for generation and training.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// TOML run configuration; defaults are used for anything not set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the labeled dataset and write it with its manifest.
    Gen,
    /// Train the classifier on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a float model on one split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Post-training int8 quantization, calibrated on the training split.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare the float and int8 paths on one split.
    Qeval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        qmodel: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Noise-free ch1/ch12 ratio series per flow level.
    PhysicsCheck,
    /// Duty-cycle energy table and the inference-vs-transmit comparison.
    EnergyReport {
        /// Cases CSV; the bundled reference cases when omitted.
        #[arg(long)]
        cases: Option<PathBuf>,
    },
    /// Hidden-layer embeddings of every window in one split.
    ExportFeatures {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Pack a recording CSV into telemetry frames.
    Encode {
        #[arg(long)]
        input: PathBuf,
    },
    /// Unpack telemetry frames into a recording CSV.
    Decode {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (train, val, test)"))
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    exec: Exec,
    config: RunConfig,
}

impl Ctx {
    fn resolved<'a>(&'a self, command: &'a str, inputs: &[(&'a str, &Path)]) -> Resolved<'a> {
        Resolved {
            command,
            seed: self.seed,
            inputs: inputs.iter().map(|(k, p)| (*k, p.display().to_string())).collect::<BTreeMap<_, _>>(),
            config: &self.config,
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    TrainedModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_data(path: &Path) -> Result<hemoscope::sim::DatasetBundle> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: Cli) -> Result<bool> {
    let config = RunConfig::load(cli.common.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.common.seed,
        out: cli.common.out,
        exec: if cli.common.sequential { Exec::Sequential } else { Exec::Parallel },
        config,
    };
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;

    match &cli.command {
        Command::Gen => {
            ctx.resolved("gen", &[]).write(&ctx.out)?;
            let bundle = generate_dataset(&ctx.config.dataset, ctx.seed, ctx.exec)?;
            write_dataset(&bundle, &ctx.out)?;
            println!("wrote {} recordings to {}", bundle.recordings.len(), ctx.out.display());
        }
        Command::Train { data } => {
            let bundle = load_data(data)?;
            // The dataset on disk, not the config file, defines what was trained on.
            let mut config = ctx.config.clone();
            config.dataset = bundle.config.clone();
            let resolved = Resolved { config: &config, ..ctx.resolved("train", &[("data", data)]) };
            let hash = resolved.write(&ctx.out)?;
            let outcome = train(&bundle, &ctx.config.train, ctx.seed, ctx.exec)?;
            let model = TrainedModel {
                params: outcome.params.clone(),
                normalizer: outcome.normalizer.clone(),
                train_config_hash: hash,
            };
            model.save(&ctx.out.join("model.json"))?;
            ctx.write("history.csv", outcome.history_csv())?;
            let best = &outcome.history[outcome.best_epoch - 1];
            println!(
                "best epoch {} of {}: val_accuracy={:.4}",
                outcome.best_epoch,
                outcome.history.len(),
                best.val_accuracy
            );
        }
        Command::Eval { model, data, split } => {
            ctx.resolved("eval", &[("model", model), ("data", data)]).write(&ctx.out)?;
            let m = load_model(model)?;
            let windows = load_data(data)?.windows(*split)?;
            let r = evaluate(&m.params, &m.normalizer, &windows, ctx.exec)?;
            ctx.write("confusion.csv", r.confusion_csv())?;
            ctx.write("eval_report.json", to_json(&r)?)?;
            println!("{}", r.summary_line());
        }
        Command::Quantize { model, data } => {
            ctx.resolved("quantize", &[("model", model), ("data", data)]).write(&ctx.out)?;
            let m = load_model(model)?;
            let calibration: Vec<Vec<f64>> =
                load_data(data)?.windows(Split::Train)?.iter().map(|w| m.normalizer.normalize(w)).collect();
            let (q, rep) = quantize(&m.params, &m.normalizer, &m.train_config_hash, &calibration, ctx.exec)?;
            q.save(&ctx.out.join("model.hsq8"))?;
            ctx.write("quant_report.json", to_json(&rep)?)?;
            ctx.write("footprint.txt", footprint_report().text())?;
            println!(
                "calibrated on {} windows; logit error bound {:.4}",
                rep.calibration_windows, rep.logit_error_bound
            );
        }
        Command::Qeval { model, qmodel, data, split } => {
            ctx.resolved("qeval", &[("model", model), ("qmodel", qmodel), ("data", data)]).write(&ctx.out)?;
            let m = load_model(model)?;
            let q = QuantizedModel::load(qmodel).with_context(|| format!("loading {}", qmodel.display()))?;
            if q.train_config_hash != m.train_config_hash {
                bail!("{} was not quantized from {}", qmodel.display(), model.display());
            }
            let windows = load_data(data)?.windows(*split)?;
            let a = agreement(&m.params, &q, &windows, ctx.exec)?;
            let truth: Vec<FlowClass> = windows.iter().map(|w| w.label).collect();
            let predicted = ctx.exec.map(&windows, |w| q.classify(w)).into_iter().collect::<Result<Vec<_>, _>>()?;
            let int8 = EvalReport::from_predictions(&truth, &predicted)?;
            ctx.write("int8_confusion.csv", int8.confusion_csv())?;
            ctx.write("qeval.json", to_json(&a)?)?;
            println!(
                "agreement={:.4} ({}/{}), int8_accuracy={:.4}, float_accuracy={:.4}, max_logit_error={:.4}",
                a.fraction, a.agree, a.windows, a.int8_accuracy, a.float_accuracy, a.max_logit_error
            );
        }
        Command::PhysicsCheck => {
            ctx.resolved("physics-check", &[]).write(&ctx.out)?;
            let p = &ctx.config.physics;
            let check = physics_check(p.duration_s, p.sample_period_s)?;
            ctx.write("physics_ratio.csv", check.csv())?;
            for class in &check.not_decreasing {
                println!("series q{class} is not strictly decreasing");
            }
            if !check.blank_constant {
                println!("flow 0 series is not constant");
            }
            if let Some(i) = check.order_violation {
                println!("flow ordering broken at t={} s", check.times_s[i]);
            }
            println!("{}", if check.passed() { "PASS" } else { "FAIL" });
            return Ok(check.passed());
        }
        Command::EnergyReport { cases } => {
            let inputs: Vec<(&str, &Path)> = cases.iter().map(|p| ("cases", p.as_path())).collect();
            ctx.resolved("energy-report", &inputs).write(&ctx.out)?;
            let cases = match cases {
                Some(p) => load_cases(p).with_context(|| format!("reading cases {}", p.display()))?,
                None => reference_cases(),
            };
            let e = &ctx.config.energy;
            let text = report(&cases, Some(&e.infer_case), Some(&e.tx_case), e.n_infer, e.n_tx)?;
            ctx.write("energy_report.txt", &text)?;
            print!("{text}");
        }
        Command::ExportFeatures { model, data, split } => {
            ctx.resolved("export-features", &[("model", model), ("data", data)]).write(&ctx.out)?;
            let m = load_model(model)?;
            let windows = load_data(data)?.windows(*split)?;
            let rows = export_features(&m.params, &m.normalizer, &windows, ctx.exec)?;
            ctx.write("features.csv", features_csv(&rows))?;
            println!("exported {} windows", rows.len());
        }
        Command::Encode { input } => {
            ctx.resolved("encode", &[("input", input)]).write(&ctx.out)?;
            let frames = read_frames_csv(input)?;
            let period = match frames.as_slice() {
                [a, b, ..] => b.timestamp_s - a.timestamp_s,
                _ => 1.0,
            };
            let bytes = PackedRecording::from_frames(&frames, period)?.to_bytes()?;
            ctx.write("recording.capr", &bytes)?;
            println!("{} frames, {} bytes", frames.len(), bytes.len());
        }
        Command::Decode { input } => {
            ctx.resolved("decode", &[("input", input)]).write(&ctx.out)?;
            let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let frames = PackedRecording::from_bytes(&bytes)?.spectral_frames();
            ctx.write("recording.csv", frames_csv(&frames))?;
            println!("{} frames", frames.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
