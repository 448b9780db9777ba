mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use cmfdnet::blocks::{AttentionKind, CmfdNet};
use cmfdnet::data::{pnm, resize_bilinear, write_dataset, Dataset, DatasetSpec, Sample};
use cmfdnet::metrics::{evaluate_dataset, Map};
use cmfdnet::selfcheck::{self, SelfCheckOptions};
use cmfdnet::train::{self, evaluate, EpochLog};
use cmfdnet::ParamStore;

use config::CliConfig;

/// Synthetic polyp data, training, evaluation and inference for CMFDNet.
#[derive(Parser, Debug)]
#[command(name = "cmfdnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic lesion dataset.
    Synth {
        /// Dataset spec JSON, merged onto the defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Full config JSON; its `dataset` section is used.
        #[arg(long, conflicts_with = "spec")]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, required_unless_present = "print_defaults")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        /// Print the default full config as JSON and exit.
        #[arg(long)]
        print_defaults: bool,
    },
    /// Train a model and write `log.jsonl`, `model.cmfd` and `config.json`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (overrides `paths.data`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory (overrides `paths.out`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Drop the cross-scan decoder stages.
        #[arg(long)]
        no_cmd: bool,
        /// Drop the multi-scale adapters.
        #[arg(long)]
        no_msa: bool,
        /// Drop the feature-discovery fusion.
        #[arg(long)]
        no_fd: bool,
        #[arg(long, value_parser = ["gab", "cbam"])]
        attention: Option<String>,
    },
    /// Score a split and write a JSON report.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(
            long,
            required_unless_present = "pred_dir",
            conflicts_with = "pred_dir"
        )]
        model: Option<PathBuf>,
        /// Directory of `<id>.pgm` probability maps to score instead of a model.
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        /// Config whose `model` section must match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Segment one PPM image.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Binary mask output (PGM, 0/255).
        #[arg(long)]
        out: PathBuf,
        /// Optional 8-bit probability map output (PGM).
        #[arg(long)]
        prob: Option<PathBuf>,
    },
    /// Run the oracle suites and print a pass/fail table.
    Selfcheck {
        /// Skip the finite-difference gradient suite.
        #[arg(long)]
        skip_gradients: bool,
        /// Test hook: corrupt one scan table before checking.
        #[arg(long)]
        inject_scan_fault: bool,
    },
}

enum Failure {
    SelfCheck,
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let non_finite = e
            .chain()
            .any(|c| matches!(c.downcast_ref(), Some(cmfdnet::Error::NonFinite { .. })));
        if non_finite {
            Failure::Numeric(e)
        } else {
            Failure::Usage(e)
        }
    }
}

impl From<cmfdnet::Error> for Failure {
    fn from(e: cmfdnet::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth {
            spec,
            config,
            out,
            seed,
            count,
            size,
            print_defaults,
        } => {
            if print_defaults {
                print_json(&CliConfig::default())
            } else {
                synth(spec, config, out, seed, count, size)
            }
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            epochs,
            no_cmd,
            no_msa,
            no_fd,
            attention,
        } => train_cmd(
            config,
            data,
            out,
            seed,
            epochs,
            [no_cmd, no_msa, no_fd],
            attention,
        ),
        Command::Eval {
            model,
            pred_dir,
            config,
            data,
            split,
            report,
        } => eval(model, pred_dir, config, &data, &split, report),
        Command::Infer {
            model,
            image,
            out,
            prob,
        } => infer(&model, &image, &out, prob.as_deref()),
        Command::Selfcheck {
            skip_gradients,
            inject_scan_fault,
        } => run_selfcheck(skip_gradients, inject_scan_fault),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::SelfCheck) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical abort: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(anyhow::Error::from(e).into()),
        _ => Ok(()),
    }
}

fn synth(
    spec_path: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    count: Option<usize>,
    size: Option<usize>,
) -> Outcome {
    let mut spec = match (&spec_path, &config) {
        (Some(p), _) => config::load(&DatasetSpec::default(), p)?,
        (None, Some(p)) => CliConfig::from_file(Some(p))?.dataset,
        (None, None) => DatasetSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(c) = count {
        spec.count = c;
    }
    if let Some(s) = size {
        spec.size = s;
    }
    spec.validate()?;
    let out = out.ok_or_else(|| anyhow!("--out is required"))?;
    let manifest = write_dataset(&spec, &out)?;
    println!("{}", manifest.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
    [no_cmd, no_msa, no_fd]: [bool; 3],
    attention: Option<String>,
) -> Outcome {
    let mut cfg = CliConfig::from_file(config.as_deref())?;
    cfg.model.use_cmd &= !no_cmd;
    cfg.model.use_msa &= !no_msa;
    cfg.model.use_fd &= !no_fd;
    if let Some(a) = attention {
        cfg.model.attention = a.parse::<AttentionKind>()?;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if data.is_some() {
        cfg.paths.data = data;
    }
    if out.is_some() {
        cfg.paths.out = out;
    }
    cfg.validate()?;
    let data = cfg
        .paths
        .data
        .clone()
        .ok_or_else(|| anyhow!("no dataset: pass --data or set paths.data"))?;
    let out = cfg
        .paths
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory: pass --out or set paths.out"))?;
    if !data.is_dir() {
        return Err(anyhow!("dataset directory {} does not exist", data.display()).into());
    }
    let dataset = Dataset::load(&data)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&cfg).map_err(anyhow::Error::from)?,
    )
    .context("writing config.json")?;

    let side = cfg.model.input_size;
    let resize = |set: &[Sample]| set.iter().map(|s| s.resized(side)).collect::<Vec<_>>();
    let (train_set, val_set) = (resize(&dataset.train), resize(&dataset.test));
    let (net, mut params) = CmfdNet::init::<f32>(cfg.model.clone(), cfg.train.seed)?;

    let log_path = out.join("log.jsonl");
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let mut write_error = None;
    let result = train::train(
        &net,
        &mut params,
        &train_set,
        &val_set,
        &cfg.train,
        &cfg.augment,
        &mut |rec: &EpochLog| {
            let line = serde_json::to_string(rec).expect("log record serializes");
            println!("{line}");
            if let Err(e) = writeln!(log, "{line}").and_then(|()| log.flush()) {
                write_error.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_error {
        return Err(anyhow::Error::from(e).context("writing log.jsonl").into());
    }
    let result = result?;
    let ckpt = out.join("model.cmfd");
    std::fs::write(&ckpt, &result.best_checkpoint)
        .with_context(|| format!("writing {}", ckpt.display()))?;
    eprintln!(
        "best val mDice {:.4} at epoch {}; checkpoint {}",
        result.best_val_mdice,
        result.best_epoch,
        ckpt.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<(CmfdNet, ParamStore<f32>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    CmfdNet::from_checkpoint::<f32>(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn read_prediction(dir: &Path, s: &Sample) -> anyhow::Result<Map> {
    let path = dir.join(format!("{}.pgm", s.id));
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let img = pnm::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if img.channels != 1 || (img.height, img.width) != (s.height, s.width) {
        bail!(
            "{}: expected a {}x{} grayscale map, found {}x{} with {} channels",
            path.display(),
            s.width,
            s.height,
            img.width,
            img.height,
            img.channels
        );
    }
    let data = img.data.iter().map(|&v| f64::from(v) / 255.0).collect();
    Ok(Map::new(s.height, s.width, data)?)
}

fn eval(
    model: Option<PathBuf>,
    pred_dir: Option<PathBuf>,
    config: Option<PathBuf>,
    data: &Path,
    split: &str,
    report_path: Option<PathBuf>,
) -> Outcome {
    let dataset = Dataset::load(data)?;
    let samples = dataset.split(split)?;
    if samples.is_empty() {
        return Err(anyhow!("split {split:?} is empty").into());
    }
    let report = match (model, pred_dir) {
        (Some(model), _) => {
            let (net, params) = load_model(&model)?;
            if let Some(p) = config {
                let expected = CliConfig::from_file(Some(&p))?.model;
                if expected != net.config {
                    return Err(anyhow!(
                        "checkpoint does not match config: checkpoint has {:?}, config has {:?}",
                        net.config,
                        expected
                    )
                    .into());
                }
            }
            evaluate(&net, &params, samples, 8)?
        }
        (None, Some(dir)) => {
            let preds = samples
                .iter()
                .map(|s| read_prediction(&dir, s))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let gts = samples
                .iter()
                .map(|s| {
                    let mask: Vec<bool> = s.mask.iter().map(|&m| m != 0).collect();
                    Map::from_mask(s.height, s.width, &mask)
                })
                .collect::<cmfdnet::Result<Vec<_>>>()?;
            let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
            evaluate_dataset(&ids, &preds, &gts)?
        }
        (None, None) => return Err(anyhow!("pass --model or --pred-dir").into()),
    };
    print!("{}", report.table());
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn infer(model: &Path, image: &Path, out: &Path, prob: Option<&Path>) -> Outcome {
    let (net, params) = load_model(model)?;
    let bytes = std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    let (h, w, planar) =
        pnm::decode_rgb(&bytes).with_context(|| format!("decoding {}", image.display()))?;
    let sample = Sample {
        id: "input".into(),
        height: h,
        width: w,
        image: planar,
        mask: vec![0; h * w],
    }
    .resized(net.config.input_size);
    let side = net.config.input_size;
    let probs = train::predict_samples(&net, &params, &[sample], 1)?.remove(0);
    let probs = if (h, w) == (side, side) {
        probs
    } else {
        resize_bilinear(&probs, (side, side), (h, w))
    };
    let mask: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
    std::fs::write(out, pnm::encode_mask(h, w, &mask))
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = prob {
        let q: Vec<u8> = probs.iter().map(|&p| pnm::quantize(p)).collect();
        std::fs::write(path, pnm::encode_gray(h, w, &q))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_selfcheck(skip_gradients: bool, inject_scan_fault: bool) -> Outcome {
    let report = selfcheck::run(SelfCheckOptions {
        corrupt_scan_table: inject_scan_fault,
        skip_gradients,
    });
    print!("{}", report.table());
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        println!("self-check FAILED");
        Err(Failure::SelfCheck)
    }
}
