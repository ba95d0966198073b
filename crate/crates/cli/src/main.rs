use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaqa::ablation::{
    cost_plan, grid_ablation_plan, parse_ablation, uniform_ablation_plan, write_manifest,
    AblationConfig,
};
use adaqa::adapter::{
    build_toy_model, copy_task, grad_check, train_adapters, AdapterError, AdapterSet, ModelDims,
    Real, ToyConfig, TrainHyper,
};
use adaqa::dataset::{
    compute_stats, prepare_examples, read_records, DatasetError, Modality, PrepareLimits,
    TargetSelection,
};
use adaqa::input::{assemble, InputError};
use adaqa::linearize::{serialize_row_major, to_regular};
use adaqa::metrics::{evaluate_predictions, MetricError};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "adaqa",
    version,
    about = "Table/text QA preprocessing, adapter accounting and evaluation"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 6)]
    seed: u64,
    /// Floating-point precision of the toy model.
    #[arg(long, global = true, value_enum, default_value_t = Precision::Double)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanMode {
    Uniform,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Table,
    Text,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Table => Modality::Table,
            ModalityArg::Text => Modality::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    First,
    Longest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Copy,
}

#[derive(Subcommand)]
enum Command {
    /// Flatten a hierarchical table (JSON) into row-major key: value text.
    Linearize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a prompted model input from question, title and context.
    Assemble {
        #[arg(long, required_unless_present = "batch")]
        question: Option<String>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long)]
        context_file: Option<PathBuf>,
        /// JSONL file of {"question", "title", "context"} objects.
        #[arg(long, conflicts_with_all = ["question", "context_file"])]
        batch: Option<PathBuf>,
        #[arg(long)]
        max_tokens: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROUGE-1/2/L and corpus BLEU for line-aligned predictions.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Trainable adapter parameters for a model size and ablation.
    CountParams {
        /// Model dimensions (JSON); defaults to the 24-layer reference model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// {"removed_encoder": [...], "removed_decoder": [...]}
        #[arg(long)]
        ablation: Option<PathBuf>,
    },
    /// Enumerate an adapter-ablation plan as a JSONL manifest.
    PlanAblation {
        #[arg(long, value_enum)]
        mode: PlanMode,
        #[arg(long)]
        dims: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the toy model's adapter gradients.
    Gradcheck {
        /// Toy model configuration (JSON); defaults to the built-in toy size.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train only the adapters of the toy model on a synthetic task.
    TrainToy {
        #[arg(long, value_enum, default_value_t = Task::Copy)]
        task: Task,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        examples: usize,
        #[arg(long, default_value_t = 6)]
        length: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-split dataset statistics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linearize, assemble and truncate every record.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inferred from the first record when omitted.
        #[arg(long, value_enum)]
        modality: Option<ModalityArg>,
        #[arg(long)]
        max_input_tokens: Option<usize>,
        #[arg(long)]
        max_target_tokens: Option<usize>,
        #[arg(long, value_enum, default_value_t = TargetArg::First)]
        target: TargetArg,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// A problem with the user's input rather than with the program.
#[derive(Debug)]
struct Invalid {
    kind: String,
    message: String,
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Invalid {}

fn invalid(kind: impl Into<String>, message: impl fmt::Display) -> anyhow::Error {
    Invalid {
        kind: kind.into(),
        message: message.to_string(),
    }
    .into()
}

fn input_kind(e: &InputError) -> &'static str {
    match e {
        InputError::EmptyQuestion => "EmptyQuestion",
        InputError::ReservedMarker { .. } => "ReservedMarker",
        InputError::BudgetTooSmall { .. } => "BudgetTooSmall",
    }
}

fn dataset_error(e: DatasetError) -> anyhow::Error {
    let kind = match &e {
        DatasetError::Schema { .. } => "SchemaError",
        DatasetError::Table { source, .. } | DatasetError::RecordTable { source, .. } => {
            source.kind()
        }
        DatasetError::Input { source, .. } => input_kind(source),
        DatasetError::Io(_) => return anyhow::Error::new(e),
    };
    invalid(kind, e)
}

fn adapter_error(e: AdapterError) -> anyhow::Error {
    match e {
        AdapterError::Divergence { .. } => anyhow::Error::new(e),
        other => invalid("InvalidConfig", other),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| invalid("SchemaError", format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    emit(out, &s)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(invalid("InvalidArgument", "--jobs must be positive")),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(f)),
    }
}

fn load_dims(path: Option<&Path>) -> Result<ModelDims> {
    let dims = match path {
        Some(p) => read_json(p)?,
        None => ModelDims::reference(),
    };
    dims.validate().map_err(adapter_error)?;
    Ok(dims)
}

fn load_toy(path: Option<&Path>, seed: u64) -> Result<ToyConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => ToyConfig {
            seed,
            ..ToyConfig::default()
        },
    };
    config.validate().map_err(adapter_error)?;
    Ok(config)
}

fn all_adapters(c: &ToyConfig) -> AdapterSet {
    AdapterSet {
        encoder: (0..c.n_encoder_layers).collect(),
        decoder: (c.n_encoder_layers..c.n_encoder_layers + c.n_decoder_layers).collect(),
    }
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn linearize_cmd(input: &Path, out: Option<&Path>) -> Result<()> {
    let table = read_json(input)?;
    let regular = to_regular(&table).map_err(|e| invalid(e.kind(), e))?;
    let text = serialize_row_major(&regular);
    emit_json(
        out,
        &json!({
            "title": regular.title,
            "header": regular.header,
            "rows": regular.rows,
            "text": text.text,
            "pair_count": text.pair_count,
        }),
    )
}

#[derive(Deserialize)]
struct AssembleLine {
    question: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    context: String,
}

fn assemble_one(q: &str, t: &str, c: &str, max: Option<usize>) -> Result<serde_json::Value> {
    let mut seq = assemble(q, t, c).map_err(|e| invalid(input_kind(&e), e))?;
    if let Some(m) = max {
        seq = seq.truncate(m).map_err(|e| invalid(input_kind(&e), e))?;
    }
    Ok(json!({ "input": seq.rendered(), "tokens": seq.token_count() }))
}

fn assemble_cmd(
    question: Option<String>,
    title: &str,
    context_file: Option<&Path>,
    batch: Option<&Path>,
    max_tokens: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    if let Some(path) = batch {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = String::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let rec: AssembleLine = serde_json::from_str(line)
                .map_err(|e| invalid("SchemaError", format!("line {}: {e}", i + 1)))?;
            let v = assemble_one(&rec.question, &rec.title, &rec.context, max_tokens)?;
            lines.push_str(&v.to_string());
            lines.push('\n');
        }
        return emit(out, &lines);
    }
    let context = match context_file {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let q = question.expect("clap requires --question without --batch");
    emit_json(out, &assemble_one(&q, title, &context, max_tokens)?)
}

fn eval_cmd(pred: &Path, reference: &Path, out: Option<&Path>, jobs: Option<usize>) -> Result<()> {
    let report =
        with_jobs(jobs, || evaluate_predictions(pred, reference))?.map_err(|e| match e {
            MetricError::Io { .. } => anyhow::Error::new(e),
            MetricError::LengthMismatch { .. } => invalid("LengthMismatch", e),
            MetricError::EmptyCorpus => invalid("EmptyCorpus", e),
        })?;
    eprintln!(
        "n={} ROUGE-1 F={:.4} ROUGE-2 F={:.4} ROUGE-L F={:.4} BLEU={:.2}",
        report.n_examples, report.rouge1.f1, report.rouge2.f1, report.rouge_l.f1, report.bleu
    );
    emit_json(out, &report)
}

fn count_params_cmd(config: Option<&Path>, ablation: Option<&Path>) -> Result<()> {
    let dims = load_dims(config)?;
    let cfg = match ablation {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_ablation(&dims, &text).map_err(|e| invalid("InvalidAblation", e))?
        }
        None => AblationConfig::new(&dims, 0, 0).expect("empty ablation is valid"),
    };
    let entry = cost_plan(std::slice::from_ref(&cfg), &dims).remove(0);
    eprintln!(
        "{}: {} ({:.2}%)",
        entry.label,
        group_thousands(entry.trainable),
        entry.percent
    );
    emit_json(
        None,
        &json!({
            "label": entry.label,
            "removed_encoder": entry.removed_encoder,
            "removed_decoder": entry.removed_decoder,
            "trainable": entry.trainable,
            "percent": entry.percent,
            "params_per_adapter": dims.params_per_adapter(),
            "params_per_layer": dims.params_per_layer(),
            "base_total_params": dims.base_total_params,
        }),
    )
}

fn plan_cmd(mode: PlanMode, dims: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let dims = load_dims(dims)?;
    let plan = match mode {
        PlanMode::Uniform => uniform_ablation_plan(&dims),
        PlanMode::Grid => grid_ablation_plan(&dims),
    };
    let entries = cost_plan(&plan, &dims);
    let mut buf = Vec::new();
    write_manifest(&entries, &mut buf)?;
    eprintln!("{} configurations", entries.len());
    emit(out, std::str::from_utf8(&buf)?)
}

fn gradcheck_run<F: Real>(
    config: &ToyConfig,
    seed: u64,
    eps: f64,
    tolerance: f64,
    out: Option<&Path>,
) -> Result<()> {
    let mut model = build_toy_model::<F>(config, &all_adapters(config)).map_err(adapter_error)?;
    model.randomize_adapters(seed, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = |n: usize| -> Vec<usize> {
        (0..n)
            .map(|_| rng.random_range(1..config.vocab_size))
            .collect()
    };
    let (src, tgt) = (seq(5.min(config.max_len)), seq(4.min(config.max_len)));
    let report = grad_check(&mut model, &src, &tgt, eps).map_err(adapter_error)?;
    let passed = report.max_rel_error < tolerance && report.frozen_grad_max_abs == 0.0;
    eprintln!(
        "checked {} scalars: max relative error {:.3e}, frozen gradient max {:e} -> {}",
        report.checked,
        report.max_rel_error,
        report.frozen_grad_max_abs,
        if passed { "ok" } else { "FAILED" }
    );
    emit_json(
        out,
        &json!({ "passed": passed, "tolerance": tolerance, "source": src, "target": tgt, "report": report }),
    )?;
    if !passed {
        anyhow::bail!("gradient check exceeded tolerance {tolerance}");
    }
    Ok(())
}

struct TrainArgs {
    steps: usize,
    examples: usize,
    length: usize,
    batch_size: usize,
    lr: f64,
}

fn train_run<F: Real>(
    config: &ToyConfig,
    args: &TrainArgs,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    if args.length == 0 || args.length > config.max_len {
        return Err(invalid(
            "InvalidArgument",
            format!("--length must be in 1..={}", config.max_len),
        ));
    }
    let mut model = build_toy_model::<F>(config, &all_adapters(config)).map_err(adapter_error)?;
    let before: Vec<Vec<u64>> = frozen_bits(&model);
    let data = copy_task(args.examples, args.length, config.vocab_size, seed);
    let hyper = TrainHyper {
        steps: args.steps,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed,
        ..TrainHyper::default()
    };
    let log = train_adapters(&mut model, &data, &hyper).map_err(adapter_error)?;
    let frozen_unchanged = frozen_bits(&model) == before;
    eprintln!(
        "{} steps, {} trainable: loss {:.4} -> {:.4} ({:.1}% of initial), frozen weights unchanged: {}",
        log.steps,
        log.trainable_params,
        log.initial_loss,
        log.final_loss,
        100.0 * log.final_loss / log.initial_loss,
        frozen_unchanged
    );
    emit_json(
        out,
        &json!({ "frozen_unchanged": frozen_unchanged, "log": log }),
    )
}

fn frozen_bits<F: Real>(model: &adaqa::adapter::ToyModel<F>) -> Vec<Vec<u64>> {
    model
        .params()
        .tensors()
        .iter()
        .filter(|t| t.tag == adaqa::adapter::Tag::Frozen)
        .map(|t| {
            t.value
                .iter()
                .map(|v| v.to_f64().unwrap().to_bits())
                .collect()
        })
        .collect()
}

fn infer_modality(path: &Path) -> Result<Modality> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| invalid("SchemaError", "no records"))?;
    let v: serde_json::Value =
        serde_json::from_str(first).map_err(|e| invalid("SchemaError", format!("line 1: {e}")))?;
    match v.get("context") {
        Some(c) if c.get("table").is_some() => Ok(Modality::Table),
        Some(c) if c.get("passage").is_some() => Ok(Modality::Text),
        _ => Err(invalid(
            "SchemaError",
            "first record has no passage or table context",
        )),
    }
}

fn stats_cmd(input: &Path, modality: Modality, out: Option<&Path>) -> Result<()> {
    let records = read_records(input, modality).map_err(dataset_error)?;
    let stats = compute_stats(&records).map_err(dataset_error)?;
    for (name, s) in &stats.splits {
        eprintln!("{name}: {} samples", s.n_samples);
    }
    emit_json(out, &stats)
}

fn prepare_cmd(
    input: &Path,
    modality: Option<ModalityArg>,
    limits: PrepareLimits,
    jobs: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let modality = match modality {
        Some(m) => m.into(),
        None => infer_modality(input)?,
    };
    let prepared = with_jobs(jobs, || -> Result<Vec<String>> {
        let records = read_records(input, modality).map_err(dataset_error)?;
        let examples = prepare_examples(&records, &limits).map_err(dataset_error)?;
        Ok(examples.iter().map(|e| e.to_json_line()).collect())
    })??;
    eprintln!("{} examples", prepared.len());
    let mut text = prepared.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    emit(out, &text)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Linearize { input, out } => linearize_cmd(&input, out.as_deref()),
        Command::Assemble {
            question,
            title,
            context_file,
            batch,
            max_tokens,
            out,
        } => assemble_cmd(
            question,
            &title,
            context_file.as_deref(),
            batch.as_deref(),
            max_tokens,
            out.as_deref(),
        ),
        Command::Eval {
            pred,
            reference,
            out,
            jobs,
        } => eval_cmd(&pred, &reference, out.as_deref(), jobs),
        Command::CountParams { config, ablation } => {
            count_params_cmd(config.as_deref(), ablation.as_deref())
        }
        Command::PlanAblation { mode, dims, out } => {
            plan_cmd(mode, dims.as_deref(), out.as_deref())
        }
        Command::Gradcheck {
            config,
            eps,
            tolerance,
            out,
        } => {
            let config = load_toy(config.as_deref(), seed)?;
            match cli.precision {
                Precision::Single => {
                    gradcheck_run::<f32>(&config, seed, eps, tolerance, out.as_deref())
                }
                Precision::Double => {
                    gradcheck_run::<f64>(&config, seed, eps, tolerance, out.as_deref())
                }
            }
        }
        Command::TrainToy {
            task: Task::Copy,
            steps,
            examples,
            length,
            batch_size,
            lr,
            config,
            out,
        } => {
            let config = load_toy(config.as_deref(), seed)?;
            let args = TrainArgs {
                steps,
                examples,
                length,
                batch_size,
                lr,
            };
            match cli.precision {
                Precision::Single => train_run::<f32>(&config, &args, seed, out.as_deref()),
                Precision::Double => train_run::<f64>(&config, &args, seed, out.as_deref()),
            }
        }
        Command::Stats {
            input,
            modality,
            out,
        } => stats_cmd(&input, modality.into(), out.as_deref()),
        Command::Prepare {
            input,
            out,
            modality,
            max_input_tokens,
            max_target_tokens,
            target,
            jobs,
        } => {
            let limits = PrepareLimits {
                max_input_tokens,
                max_target_tokens,
                target: match target {
                    TargetArg::First => TargetSelection::First,
                    TargetArg::Longest => TargetSelection::Longest,
                },
            };
            prepare_cmd(&input, modality, limits, jobs, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Invalid>() {
            Some(inv) => {
                eprintln!("{}", json!({ "error": inv.kind, "message": inv.message }));
                ExitCode::from(2)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
