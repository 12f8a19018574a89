use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pulse_affect::config::{self, ModelOverrides, Overrides, RunConfig};
use pulse_affect::dataset::{load_dataset, model_input, save_dataset, BinaryValence, Dataset, Source};
use pulse_affect::ecg;
use pulse_affect::eval::{self, EvalReport, Regime, SynthSpec};
use pulse_affect::hrv::feature_matrix;
use pulse_affect::model::{self, load_checkpoint, save_checkpoint, TrainExample, TrainingMeta};
use pulse_affect::selective::{self, decide, mc_predict, DecisionRecord};
use pulse_affect::stats;
use pulse_affect::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "pulse-affect", version, about = "Valence estimation from inter-beat intervals")]
struct Cli {
    /// TOML file with run settings; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then PULSE_AFFECT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Debug logging and a dump of the resolved configuration.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    conv_filters: Option<usize>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    conv_windows: Option<Vec<usize>>,
    #[arg(long)]
    conv_dropout: Option<f64>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
    #[arg(long)]
    lstm_dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_floor: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Default)]
struct InferenceArgs {
    /// Monte Carlo dropout passes per sample.
    #[arg(long)]
    n_passes: Option<usize>,
    /// `0.5,0.7,0.9` or `start:stop:step`.
    #[arg(long)]
    alpha_grid: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RegimeArg {
    PpgOnly,
    PpgPlusEcg,
    EcgOnly,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::PpgOnly => Regime::PpgOnly,
            RegimeArg::PpgPlusEcg => Regime::PpgPlusEcg,
            RegimeArg::EcgOnly => Regime::EcgOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    DomainShift,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IBI dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        samples_per_subject: Option<usize>,
        /// Beat-interval noise standard deviation in seconds.
        #[arg(long)]
        noise: Option<f64>,
        /// Also render the ECG-source samples as raw 256 Hz traces.
        #[arg(long)]
        ecg_traces: Option<PathBuf>,
    },
    /// Detect beats in raw ECG records and write an IBI dataset.
    ExtractIbi {
        #[arg(long)]
        ecg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute HRV features per sample.
    Features {
        #[arg(long)]
        dataset: PathBuf,
        /// Additional IBI dataset to merge in.
        #[arg(long)]
        ecg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare ECG- and PPG-derived features.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ecg: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = stats::DEFAULT_FOLDS)]
        folds: usize,
    },
    /// Train one model on every labelled sample of the regime's sources.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ecg: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Selective predictions from a checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Decision table path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Leave-one-subject-out evaluation.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ecg: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        /// Number of held-out subjects.
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        inference: InferenceArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Curve tables from evaluation reports; with two reports, also their
    /// per-fold F1 comparison.
    Curves {
        #[arg(long = "report", required = true, num_args = 1..=2)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::ExtractIbi { .. } => "extract-ibi",
            Command::Features { .. } => "features",
            Command::Stats { .. } => "stats",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Curves { .. } => "curves",
        }
    }
}

fn model_overrides(m: &ModelArgs) -> ModelOverrides {
    ModelOverrides {
        conv_filters: m.conv_filters,
        conv_windows: m.conv_windows.clone(),
        conv_dropout: m.conv_dropout,
        lstm_hidden: m.lstm_hidden,
        lstm_dropout: m.lstm_dropout,
        epochs: m.epochs,
        initial_lr: m.learning_rate,
        lr_floor: m.lr_floor,
        patience: m.patience,
        batch_size: m.batch_size,
    }
}

fn flag_overrides(cli: &Cli) -> Result<Overrides> {
    let mut o = Overrides { seed: cli.seed, jobs: cli.jobs, ..Overrides::default() };
    let inference = |o: &mut Overrides, i: &InferenceArgs| -> Result<()> {
        o.n_passes = i.n_passes;
        o.alpha_grid = i.alpha_grid.as_deref().map(config::parse_alpha_grid).transpose()?;
        Ok(())
    };
    match &cli.command {
        Command::Train { regime, model, .. } => {
            o.regime = regime.map(Into::into);
            o.model = model_overrides(model);
        }
        Command::Predict { inference: i, .. } => inference(&mut o, i)?,
        Command::Evaluate { regime, iterations, inference: i, model, .. } => {
            o.regime = regime.map(Into::into);
            o.iterations = *iterations;
            o.model = model_overrides(model);
            inference(&mut o, i)?;
        }
        _ => {}
    }
    Ok(o)
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let file = cli.config.as_ref().map(config::load_config_file).transpose()?;
    let env_seed = std::env::var(config::SEED_ENV).ok();
    config::resolve(flag_overrides(cli)?, file, env_seed.as_deref())
}

#[derive(Serialize)]
struct Provenance<'a, C> {
    tool_version: &'a str,
    command: &'a str,
    config: &'a C,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<output>.run.json` next to outputs that cannot embed their configuration.
fn write_provenance(output: &Path, command: &str, cfg: &impl Serialize) -> Result<()> {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    write_json(
        &output.with_file_name(name),
        &Provenance { tool_version: env!("CARGO_PKG_VERSION"), command, config: cfg },
    )
}

fn create_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create_writer(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_merged(dataset: &Path, extra: Option<&PathBuf>) -> Result<Dataset> {
    let mut d = load_dataset(dataset)?;
    if let Some(extra) = extra {
        let e = load_dataset(extra)?;
        d = Dataset::new(d.samples.into_iter().chain(e.samples).collect())?;
    }
    log::info!("loaded {} samples ({} ECG, {} PPG)", d.len(), d.count_source(Source::Ecg), d.count_source(Source::Ppg));
    Ok(d)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    if let Some(jobs) = cfg.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let command = cli.command.name();
    log::info!("{command}: seed {}", cfg.seed);
    let cfg_json = serde_json::to_string(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    log::info!("resolved config {cfg_json}");
    if cli.verbose {
        eprintln!("{}", serde_json::to_string_pretty(&cfg).unwrap_or_default());
    }

    match &cli.command {
        Command::Synth { out, preset, subjects, samples_per_subject, noise, ecg_traces } => {
            let mut spec = match preset {
                Preset::Default => SynthSpec::default(),
                Preset::DomainShift => SynthSpec::domain_shift(),
            };
            spec.seed = cfg.seed;
            for d in std::iter::once(&mut spec.ppg).chain(spec.ecg.as_mut()) {
                d.n_subjects = subjects.unwrap_or(d.n_subjects);
                d.samples_per_subject = samples_per_subject.unwrap_or(d.samples_per_subject);
                d.noise_std = noise.unwrap_or(d.noise_std);
            }
            let dataset = eval::synth_dataset(&spec)?;
            save_dataset(&dataset, out)?;
            write_provenance(out, command, &cfg)?;
            if let Some(path) = ecg_traces {
                let ecg: Vec<_> = dataset.samples.iter().filter(|s| s.series.source == Source::Ecg).cloned().collect();
                if ecg.is_empty() {
                    return Err(Error::InvalidArgument("--ecg-traces needs a preset with ECG samples".into()));
                }
                let records = ecg::render_ecg_records(&ecg, 256.0, 0.02, cfg.seed)?;
                write_with(path, |w| ecg::write_ecg_records(&records, w))?;
            }
            log::info!("wrote {} samples to {}", dataset.len(), out.display());
        }
        Command::ExtractIbi { ecg: input, out } => {
            let records = ecg::load_ecg_records(input)?;
            let (dataset, skipped) = ecg::extract_ibi_dataset(&records)?;
            save_dataset(&dataset, out)?;
            write_provenance(out, command, &cfg)?;
            log::info!("extracted {} series, skipped {}", dataset.len(), skipped.len());
        }
        Command::Features { dataset, ecg, out } => {
            let table = feature_matrix(&load_merged(dataset, ecg.as_ref())?);
            write_with(out, |w| table.write_tsv(w))?;
            write_provenance(out, command, &cfg)?;
        }
        Command::Stats { dataset, ecg, out, folds } => {
            let table = feature_matrix(&load_merged(dataset, ecg.as_ref())?);
            let report = stats::compare_sources(&table, *folds, cfg.seed)?;
            create_dir(out)?;
            write_with(&out.join("stats.tsv"), |w| report.write_tsv(w))?;
            #[derive(Serialize)]
            struct StatsOutput<'a> {
                tool_version: &'a str,
                config: &'a RunConfig,
                report: &'a stats::StatsReport,
            }
            write_json(
                &out.join("stats.json"),
                &StatsOutput { tool_version: env!("CARGO_PKG_VERSION"), config: &cfg, report: &report },
            )?;
            println!("SVM {}-fold accuracy: {:.3}", folds, report.svm_accuracy);
        }
        Command::Train { dataset, ecg, out, .. } => {
            let data = load_merged(dataset, ecg.as_ref())?;
            let samples: Vec<_> = data
                .samples
                .iter()
                .filter(|s| s.label.binary() != BinaryValence::Neutral)
                .filter(|s| match cfg.regime {
                    Regime::PpgOnly => s.series.source == Source::Ppg,
                    Regime::EcgOnly => s.series.source == Source::Ecg,
                    Regime::PpgPlusEcg => true,
                })
                .collect();
            if samples.is_empty() {
                return Err(Error::Data(format!("no labelled samples for regime {}", cfg.regime)));
            }
            let model_cfg = cfg.seeded_model();
            let input_len = samples.iter().map(|s| s.series.len()).max().unwrap_or(0).max(model_cfg.max_window());
            let examples: Vec<TrainExample> = samples
                .iter()
                .map(|s| TrainExample { input: model_input(&s.series, input_len), target: s.label.normalized() })
                .collect();
            let mut m = model::build_model(&model_cfg, input_len)?;
            let report = model::train(&mut m, &examples)?;
            let meta = TrainingMeta {
                seed: cfg.seed,
                epochs_completed: report.epochs_completed,
                final_loss: report.final_loss,
            };
            save_checkpoint(&m, &meta, out)?;
            let mut log_name = out.file_name().unwrap_or_default().to_os_string();
            log_name.push(".train.json");
            write_json(&out.with_file_name(log_name), &report)?;
            write_provenance(out, command, &cfg)?;
            println!("trained on {} samples, final loss {:.5}", examples.len(), report.final_loss);
        }
        Command::Predict { model: model_path, dataset, out, .. } => {
            let ckpt = load_checkpoint(model_path)?;
            let data = load_dataset(dataset)?;
            let mut records = Vec::new();
            for s in &data.samples {
                let id = s.id();
                let input = model_input(&s.series, ckpt.model.input_len);
                let post =
                    mc_predict(&ckpt.model, &input, cfg.n_passes, pulse_affect::rng::derive_seed(cfg.seed, &id))?;
                for &alpha in &cfg.alpha_grid {
                    let d = decide(&post, alpha, selective::MIDPOINT)?;
                    records.push(DecisionRecord {
                        sample_id: id.clone(),
                        alpha,
                        mass_above: d.mass_above,
                        outcome: d.outcome,
                        truth: s.label.binary(),
                    });
                }
            }
            write_with(out, |w| selective::write_decisions(&records, w))?;
            write_provenance(out, command, &cfg)?;
        }
        Command::Evaluate { dataset, ecg, out, .. } => {
            let data = load_merged(dataset, ecg.as_ref())?;
            let report = eval::run_loso(&data, cfg.regime, &cfg.eval_config(), cfg.seed)?;
            create_dir(out)?;
            let stem = format!("{}_seed{}", report.regime, report.seed);
            let mut json = report.to_json()?;
            json.push('\n');
            let report_path = out.join(format!("report_{stem}.json"));
            fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
            let decisions = out.join(format!("decisions_{stem}.tsv"));
            write_with(&decisions, |w| selective::write_decisions(&report.decision_records(), w))?;
            for path in eval::emit_curves(&report, out)?.iter().chain([&decisions]) {
                write_provenance(path, command, &cfg)?;
            }
            let half = &report.aggregate[0];
            println!(
                "{}: mean F1 at alpha {} = {}, chance {:.3}",
                report.regime,
                half.alpha,
                half.mean_f1.map_or("NA".into(), |v| format!("{v:.3}")),
                report.chance_f1
            );
        }
        Command::Curves { reports, out } => {
            let loaded = reports
                .iter()
                .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)).and_then(|t| EvalReport::from_json(&t)))
                .collect::<Result<Vec<_>>>()?;
            for r in &loaded {
                for path in eval::emit_curves(r, out)? {
                    let source = serde_json::json!({ "seed": r.seed, "regime": r.regime, "evaluation": r.config });
                    write_provenance(&path, command, &source)?;
                }
            }
            if let [a, b] = &loaded[..] {
                let p = eval::compare_regimes(a, b)?;
                #[derive(Serialize)]
                struct Comparison<'a> {
                    tool_version: &'a str,
                    a: String,
                    b: String,
                    alpha: f64,
                    f1_a: Vec<f64>,
                    f1_b: Vec<f64>,
                    mann_whitney_p: f64,
                    config_a: &'a eval::EvalConfig,
                    config_b: &'a eval::EvalConfig,
                }
                let cmp = Comparison {
                    tool_version: env!("CARGO_PKG_VERSION"),
                    a: format!("{}_seed{}", a.regime, a.seed),
                    b: format!("{}_seed{}", b.regime, b.seed),
                    alpha: 0.5,
                    f1_a: a.fold_f1_at(0.5)?,
                    f1_b: b.fold_f1_at(0.5)?,
                    mann_whitney_p: p,
                    config_a: &a.config,
                    config_b: &b.config,
                };
                write_json(&out.join(format!("compare_{}_vs_{}.json", cmp.a, cmp.b)), &cmp)?;
                println!("Mann-Whitney p between per-fold F1 at alpha 0.5: {p:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info })
        .parse_env("PULSE_AFFECT_LOG")
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
