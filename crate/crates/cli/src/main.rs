use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssldet::config::RunConfig;
use ssldet::detector::{detect_sequence, read_detections, write_detections};
use ssldet::evaluation::{evaluate, plot_svg, read_curve, write_curve, Subset};
use ssldet::linear_svm::bootstrap_train;
use ssldet::sequence_io::{load_model, load_sequence, save_model, save_sequence};
use ssldet::ssl::{train_ssl, train_ssl_from_base};
use ssldet::synth::generate_splits;
use ssldet::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "ssldet", version, about = "Two-stage pedestrian detection with stacked sequential learning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set neighborhood.t=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic train and test sequences into `<out>/train` and `<out>/test`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the base classifier with hard-negative bootstrapping.
    TrainBase {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "base.sslmodel")]
        out: PathBuf,
    },
    /// Train the base and stacked classifiers; writes `base.sslmodel` and `ssl.sslmodel`.
    TrainSsl {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Reuse an existing base classifier instead of training one.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Run the detector over a sequence and write a detections CSV.
    Detect {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        ssl: Option<PathBuf>,
        /// Skip the stacked stage: base scores, thresholding and suppression only.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value = "detections.csv")]
        out: PathBuf,
    },
    /// Evaluate detections against a sequence's annotations.
    Eval {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// near, medium or reasonable (defaults to the config's subset).
        #[arg(long)]
        subset: Option<String>,
        #[arg(long, default_value = "curve.csv")]
        out: PathBuf,
    },
    /// Overlay curves in an SVG plot.
    Plot {
        /// `name=path/to/curve.csv`; repeatable.
        #[arg(long = "curve", value_name = "NAME=CSV", required = true)]
        curves: Vec<String>,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            eprintln!("error: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "));
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load_with_overrides(cli.common.config.as_deref(), &cli.common.overrides)?;
    match cli.command {
        Command::Synth { out, seed } => {
            let mut synth = cfg.synth.clone();
            if let Some(s) = seed {
                synth.seed = s;
            }
            let sp = &cfg.splits;
            let (train, test) = generate_splits(&synth, sp.train_frames, sp.gap, sp.test_frames)?;
            save_sequence(&train, &out.join("train"))?;
            save_sequence(&test, &out.join("test"))?;
            println!(
                "train: {} frames, {} boxes; test: {} frames, {} boxes",
                train.len(),
                train.annotations.len(),
                test.len(),
                test.annotations.len()
            );
        }
        Command::TrainBase { train, out } => {
            let seq = load_sequence(&train)?;
            let (model, report) = bootstrap_train(&seq, &cfg.channels, &cfg.detector, &cfg.svm)?;
            save_model(&model, &out)?;
            for r in &report.rounds {
                println!(
                    "round {}: {} positives, {} negatives ({} mined)",
                    r.round, r.positives, r.negatives, r.mined
                );
            }
        }
        Command::TrainSsl { train, out_dir, base } => {
            let seq = load_sequence(&train)?;
            create_dir(&out_dir)?;
            let (base, ssl) = match base {
                Some(path) => {
                    let base = load_model(&path)?;
                    let (ssl, _) = train_ssl_from_base(&seq, &base, &cfg.detector, &cfg.svm, &cfg.neighborhood, &cfg.ssl)?;
                    (base, ssl)
                }
                None => {
                    let m = train_ssl(&seq, &cfg.channels, &cfg.detector, &cfg.svm, &cfg.neighborhood, &cfg.ssl)?;
                    (m.base, m.ssl)
                }
            };
            save_model(&base, &out_dir.join("base.sslmodel"))?;
            save_model(&ssl, &out_dir.join("ssl.sslmodel"))?;
            println!(
                "stacked model: {} weights ({} neighbour scores)",
                ssl.dim(),
                cfg.neighborhood.score_count()
            );
        }
        Command::Detect {
            seq,
            base,
            ssl,
            baseline,
            out,
        } => {
            let seq = load_sequence(&seq)?;
            let base = load_model(&base)?;
            let ssl = match (&ssl, baseline || cfg.detector.ssl_disabled) {
                (Some(p), false) => Some(load_model(p)?),
                _ => None,
            };
            let run = detect_sequence(&seq, &base, ssl.as_ref(), &cfg.detector)?;
            write_detections(&out, &run.detections)?;
            let s = run.stats;
            println!(
                "{} detections over {} frames; {} of {} windows reached stage 2",
                run.detections.len(),
                s.frames,
                s.stage1_candidates,
                s.scored_windows
            );
        }
        Command::Eval {
            seq,
            detections,
            subset,
            out,
        } => {
            let seq = load_sequence(&seq)?;
            let dets = read_detections(&detections)?;
            let mut eval = cfg.eval;
            if let Some(s) = subset {
                eval.subset = s.parse::<Subset>()?;
            }
            let e = evaluate(&dets, &seq.annotations, seq.len(), &eval)?;
            write_curve(&out, &e.points)?;
            println!("subset={}", eval.subset.as_str());
            println!("LAMR={:.2}", e.lamr);
        }
        Command::Plot { curves, out } => {
            let mut named = Vec::with_capacity(curves.len());
            for c in &curves {
                let (name, path) = c
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidArgument(format!("--curve {c:?} is not NAME=CSV")))?;
                named.push((name.to_string(), read_curve(Path::new(path))?));
            }
            std::fs::write(&out, plot_svg(&named, &cfg.eval)).map_err(|e| Error::io(&out, e))?;
        }
        Command::ShowConfig => print!("{}", cfg.to_toml_string()?),
    }
    Ok(())
}
