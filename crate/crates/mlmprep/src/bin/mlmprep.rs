use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mlmprep::manifest::{dedup_entries, validate, Manifest};
use mlmprep::{grid, logging, masking, metrics_io, pipeline, shards, shuffle, tokenizer};
use mlmprep_core::bbpe::TrainConfig;
use mlmprep_core::corpus::CorpusStats;
use mlmprep_core::defaults;
use mlmprep_core::grid::{validation_split, SelectionMetric};
use mlmprep_core::masker::MaskPolicy;
use mlmprep_core::metrics::Average;
use mlmprep_core::schedule::LrSchedule;

#[derive(Parser)]
#[command(
    name = "mlmprep",
    version,
    about = "Corpus preparation for masked language model pre-training"
)]
struct Cli {
    /// Emit diagnostics as JSON lines on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    /// More diagnostics (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenizer training, encoding and decoding.
    #[command(subcommand)]
    Tok(TokCommand),
    /// Manifest validation, deduplication, shuffling and statistics.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Tokenize and pack documents into shards.
    Pack(PackArgs),
    /// Shard file utilities.
    #[command(subcommand)]
    Shards(ShardsCommand),
    /// Mask every sequence of a shard directory.
    Mask(MaskArgs),
    /// Learning-rate schedule.
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Evaluation metrics; prints a JSON report.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Fine-tuning grid.
    #[command(subcommand)]
    Grid(GridCommand),
    /// Run every preparation stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tool and format versions as JSON.
    Version,
}

#[derive(Subcommand)]
enum TokCommand {
    Train {
        /// JSON-lines document files.
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Model directory to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = defaults::VOCAB_SIZE)]
        vocab_size: usize,
        #[arg(long, default_value_t = 2)]
        min_frequency: u64,
    },
    /// Encode text (argument or stdin lines) to JSON `{ids, word_start}`.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: Option<String>,
    },
    /// Decode whitespace-separated ids (arguments or stdin).
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        keep_specials: bool,
        ids: Vec<u32>,
    },
}

#[derive(Args)]
struct Inputs {
    /// Corpus manifest; its entry files are read in order.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON-lines document files.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
}

impl Inputs {
    fn files(&self) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        if let Some(m) = &self.manifest {
            let m = Manifest::load(m)?;
            for e in &m.corpus.entries {
                files.extend(m.entry_files(e)?);
            }
        }
        files.extend(self.inputs.iter().cloned());
        if files.is_empty() && self.manifest.is_none() {
            bail!("give --manifest or --input");
        }
        Ok(files)
    }
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Compare observed counts with the manifest's expectations; exits 1 on
    /// a mismatch.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write one file per entry, deduplicating flagged entries.
    Dedup {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded bucket shuffle of the documents into one file.
    Shuffle {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = defaults::SHUFFLE_BUCKETS)]
        buckets: u32,
    },
    /// Document count, bytes and mean length as JSON.
    Stats {
        #[command(flatten)]
        inputs: Inputs,
    },
}

#[derive(Args)]
struct PackArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Tokenizer model directory.
    #[arg(long)]
    model: PathBuf,
    /// Shard directory to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    max_per_shard: usize,
}

#[derive(Subcommand)]
enum ShardsCommand {
    /// Validate a shard file and print a JSON summary.
    Inspect { file: PathBuf },
    /// Check the files of a shard directory against its index.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    shards: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// TOML policy file; defaults apply otherwise.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Only print statistics.
    #[arg(long)]
    stats_only: bool,
    /// Masked-batch file to write.
    #[arg(long, required_unless_present = "stats_only")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum ScheduleCommand {
    /// Print `step,lr` rows as CSV.
    Dump {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 1000)]
        stride: u64,
    },
    /// Print the learning rate at one step.
    At {
        #[command(flatten)]
        schedule: ScheduleArgs,
        step: u64,
    },
}

#[derive(Args)]
struct ScheduleArgs {
    /// TOML file with schedule fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    peak: Option<f64>,
    #[arg(long)]
    total: Option<u64>,
    #[arg(long)]
    end: Option<f64>,
    #[arg(long)]
    power: Option<f64>,
}

impl ScheduleArgs {
    fn resolve(&self) -> Result<LrSchedule> {
        let mut s = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
                toml::from_str(&text).with_context(|| p.display().to_string())?
            }
            None => LrSchedule::default(),
        };
        if let Some(v) = self.warmup {
            s.warmup_steps = v;
        }
        if let Some(v) = self.peak {
            s.peak_lr = v;
        }
        if let Some(v) = self.total {
            s.total_steps = v;
        }
        if let Some(v) = self.end {
            s.end_lr = v;
        }
        if let Some(v) = self.power {
            s.decay_power = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AverageArg {
    Macro,
    Micro,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Exact-span F1 from BIO column files or span lists.
    Ner {
        #[arg(long)]
        gold: PathBuf,
        /// Omit when the gold file carries predictions as its last column.
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Two-level span F1 from outer/inner tag columns or span lists.
    Nested {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Mean F1 over classes.
    Cls {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "macro")]
        average: AverageArg,
    },
    /// Accuracy.
    Nli {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Perplexity from per-token natural-log losses.
    Ppl {
        #[arg(long, alias = "pred")]
        losses: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    F1,
    Accuracy,
}

#[derive(Subcommand)]
enum GridCommand {
    /// Run (or resume) a grid.
    Run {
        #[arg(long)]
        task: Option<String>,
        /// TOML grid file; the reference grid applies otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Command template with {lr}, {batch_size}, {epochs} and {out};
        /// {task} and {run_id} are also available.
        #[arg(long)]
        trainer: String,
        #[arg(long, default_value_t = 1)]
        max_parallel: usize,
        /// Grid directory; defaults to grids/<task>.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Print the validation-selected run as JSON.
    Best {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Results table with one row per grid directory.
    Table {
        #[arg(long = "dir", required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Train/validation index split as JSON.
    Split {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = defaults::VALIDATION_FRACTION)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn stdin_text() -> Result<String> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

fn run_tok(cmd: TokCommand) -> Result<()> {
    match cmd {
        TokCommand::Train {
            inputs,
            out,
            vocab_size,
            min_frequency,
        } => {
            let mut config = TrainConfig::with_vocab_size(vocab_size);
            config.min_frequency = min_frequency;
            let model = tokenizer::train_from_files(&inputs, &config)?;
            tokenizer::save_model(&model, &out)?;
            print_json(
                &serde_json::json!({"vocab_size": model.vocab_size(), "merges": model.merges().len()}),
            )
        }
        TokCommand::Encode { model, text } => {
            let model = tokenizer::load_model(&model)?;
            let encode = |t: &str| {
                let e = model.encode(t);
                serde_json::json!({"ids": e.ids, "word_start": e.word_start})
            };
            let mut out = std::io::stdout().lock();
            match text {
                Some(t) => writeln!(out, "{}", encode(&t))?,
                None => {
                    for line in std::io::stdin().lock().lines() {
                        writeln!(out, "{}", encode(&line?))?;
                    }
                }
            }
            Ok(())
        }
        TokCommand::Decode {
            model,
            keep_specials,
            mut ids,
        } => {
            let model = tokenizer::load_model(&model)?;
            if ids.is_empty() {
                ids = stdin_text()?
                    .split_whitespace()
                    .map(|t| t.parse().with_context(|| format!("invalid id {t:?}")))
                    .collect::<Result<_>>()?;
            }
            let bytes = model.decode_bytes(&ids, keep_specials)?;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

fn run_corpus(cmd: CorpusCommand) -> Result<bool> {
    match cmd {
        CorpusCommand::Validate {
            manifest,
            out,
            json,
        } => {
            let report = validate(&Manifest::load(&manifest)?)?;
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| p.display().to_string())?;
            }
            if json {
                print_json(&report)?;
            } else {
                print!("{}", report.table());
            }
            if !report.ok {
                for e in report.entries.iter().filter(|e| !e.mismatches.is_empty()) {
                    log::error!("{}: {}", e.name, e.mismatches.join("; "));
                }
            }
            Ok(report.ok)
        }
        CorpusCommand::Dedup { manifest, out } => {
            let res = dedup_entries(&Manifest::load(&manifest)?, &out)?;
            print_json(&res)?;
            Ok(true)
        }
        CorpusCommand::Shuffle {
            inputs,
            out,
            seed,
            buckets,
        } => {
            let n = shuffle::shuffle_files(&inputs.files()?, &out, seed, buckets)?;
            print_json(&serde_json::json!({"documents": n, "seed": seed, "buckets": buckets}))?;
            Ok(true)
        }
        CorpusCommand::Stats { inputs } => {
            let mut stats = CorpusStats::default();
            for f in inputs.files()? {
                for d in mlmprep::docs::DocReader::open(&f)? {
                    stats.add_document(&d?.text);
                }
            }
            print_json(&serde_json::json!({
                "documents": stats.documents,
                "bytes": stats.bytes,
                "mean_doc_len": stats.mean_doc_len,
                "size_gb": stats.size_gb(),
            }))?;
            Ok(true)
        }
    }
}

fn run_grid(cmd: GridCommand) -> Result<bool> {
    match cmd {
        GridCommand::Run {
            task,
            config,
            metric,
            trainer,
            max_parallel,
            dir,
        } => {
            let metric = metric.map(|m| match m {
                MetricArg::F1 => SelectionMetric::F1,
                MetricArg::Accuracy => SelectionMetric::Accuracy,
            });
            let spec = grid::GridSpec::resolve(config.as_deref(), task.as_deref(), metric)?;
            let dir = dir.unwrap_or_else(|| Path::new("grids").join(&spec.config.task));
            let runs = grid::run_grid(
                &dir,
                &spec,
                &grid::GridOptions {
                    trainer: &trainer,
                    max_parallel,
                },
            )?;
            let count = |s| runs.iter().filter(|r| r.status == s).count();
            use mlmprep_core::grid::RunStatus;
            let (done, failed) = (count(RunStatus::Done), count(RunStatus::Failed));
            print_json(
                &serde_json::json!({"runs": runs.len(), "done": done, "failed": failed, "dir": dir}),
            )?;
            Ok(failed == 0)
        }
        GridCommand::Best { dir } => {
            let (_, best) = grid::best_run(&dir)?;
            print_json(&best)?;
            Ok(true)
        }
        GridCommand::Table { dirs, csv } => {
            print!("{}", grid::table(&dirs, csv)?);
            Ok(true)
        }
        GridCommand::Split { n, fraction, seed } => {
            let (train, validation) = validation_split(n, fraction, seed)?;
            print_json(
                &serde_json::json!({"seed": seed, "fraction": fraction, "train": train, "validation": validation}),
            )?;
            Ok(true)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Tok(c) => run_tok(c).map(|()| true),
        Command::Corpus(c) => run_corpus(c),
        Command::Pack(a) => {
            let model = tokenizer::load_model(&a.model)?;
            let index =
                shards::pack_files(&model, &a.inputs.files()?, &a.out, a.max_per_shard, None)?;
            print_json(&index)?;
            Ok(true)
        }
        Command::Shards(ShardsCommand::Inspect { file }) => {
            print_json(&shards::inspect(&file)?)?;
            Ok(true)
        }
        Command::Shards(ShardsCommand::Verify { dir }) => {
            print_json(&shards::verify_index(&dir)?)?;
            Ok(true)
        }
        Command::Mask(a) => {
            let policy = match &a.policy {
                Some(p) => masking::load_policy(p)?,
                None => MaskPolicy::default(),
            };
            let run = masking::mask_shards(&a.shards, &policy, a.seed, a.epoch, a.threads)?;
            if !a.stats_only {
                let out = a.out.as_deref().expect("clap requires --out");
                masking::write_masked(out, &run.batches, &policy, a.seed, a.epoch)?;
            }
            print_json(&serde_json::json!({"seed": a.seed, "epoch": a.epoch, "stats": run.stats}))?;
            Ok(true)
        }
        Command::Schedule(ScheduleCommand::Dump { schedule, stride }) => {
            print!("{}", schedule.resolve()?.dump_csv(stride)?);
            Ok(true)
        }
        Command::Schedule(ScheduleCommand::At { schedule, step }) => {
            println!("{:e}", schedule.resolve()?.lr_at(step));
            Ok(true)
        }
        Command::Metrics(m) => {
            let report = match m {
                MetricsCommand::Ner { gold, pred } => {
                    metrics_io::ner_report(&gold, pred.as_deref())?
                }
                MetricsCommand::Nested { gold, pred } => {
                    metrics_io::nested_report(&gold, pred.as_deref())?
                }
                MetricsCommand::Cls {
                    gold,
                    pred,
                    average,
                } => {
                    let avg = match average {
                        AverageArg::Macro => Average::Macro,
                        AverageArg::Micro => Average::Micro,
                    };
                    metrics_io::cls_report(&gold, &pred, avg)?
                }
                MetricsCommand::Nli { gold, pred } => metrics_io::nli_report(&gold, &pred)?,
                MetricsCommand::Ppl { losses } => {
                    let value = metrics_io::ppl_value(&losses)?;
                    print_json(&serde_json::json!({"metric": "perplexity", "value": value}))?;
                    return Ok(true);
                }
            };
            print_json(&report)?;
            Ok(true)
        }
        Command::Grid(g) => run_grid(g),
        Command::Pipeline { config, seed } => {
            let mut c = pipeline::PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            let manifest = pipeline::run_pipeline(&c)?;
            print_json(&serde_json::json!({
                "out_dir": c.out_dir,
                "complete": manifest.complete,
                "stages": manifest
                    .stages
                    .iter()
                    .map(|s| serde_json::json!({"name": s.name, "status": s.status}))
                    .collect::<Vec<_>>(),
            }))?;
            Ok(true)
        }
        Command::Version => {
            print_json(&mlmprep::version_info())?;
            Ok(true)
        }
    }
}

/// The error chain, leaving out causes the message already spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !message.contains(&text) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
    }
    message
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.log_json;
    logging::init(json, cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let message = describe(&e);
            if json {
                log::error!("{message}");
            } else {
                eprintln!("error: {message}");
            }
            ExitCode::FAILURE
        }
    }
}
