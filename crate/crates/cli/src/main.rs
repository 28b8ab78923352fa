//! `cld`: page validation, span identification, assisted decoding,
//! benchmarking, synthetic corpora and output scoring.
//!
//! Machine-readable output goes to stdout, logs and errors to stderr.
//! Exit status: 0 success, 1 usage, 2 bad input data, 3 broken invariant.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use cld_core::bench::{
    decode_page, emit_report, generate_corpus, Ablation, BenchConfig, ClassifierKind, GenSpec,
    Method, ModelKind, NoiseKinds, ReportFormat, TokenizerKind,
};
use cld_core::cti::{
    span_f1, GoldClassifier, HeuristicClassifier, HeuristicConfig, SpanClassifier,
};
use cld_core::doc_model::{corpus_files, load_corpus, load_page};
use cld_core::draft::DraftConfig;
use cld_core::metrics::quality;
use cld_core::Error;

#[derive(Parser)]
#[command(
    name = "cld",
    version,
    about = "Copy lookup decoding for document pages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check page files (or directories of them) against the page schema.
    Validate(ValidateArgs),
    /// Label each span KEEP or DELETE.
    Identify(IdentifyArgs),
    /// Decode one page with a toy model and report forward-pass stats.
    Decode(DecodeArgs),
    /// Run methods over a corpus directory and write a speedup report.
    Bench(BenchArgs),
    /// Write a synthetic corpus of page files.
    GenCorpus(GenArgs),
    /// Score a prediction against a reference.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Page files or directories.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "heuristic")]
    classifier: ClassifierKind,
    /// JSON with optional `draft` and `heuristic` sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DraftArgs {
    #[arg(long)]
    max_ngram: Option<usize>,
    #[arg(long)]
    min_ngram: Option<usize>,
    #[arg(long)]
    num_candidates: Option<usize>,
    /// JSON with optional `draft` and `heuristic` sections; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "replay")]
    model: ModelKind,
    #[arg(long, default_value = "byte")]
    tokenizer: TokenizerKind,
    #[arg(long, default_value = "heuristic")]
    classifier: ClassifierKind,
    /// Decode cld with every span kept.
    #[arg(long)]
    ablate_cti: bool,
    /// Decode cld without moving the matched span to the front of the pool.
    #[arg(long)]
    ablate_topping: bool,
    /// One in this many positions is changed by the perturbed model.
    #[arg(long, default_value_t = 16)]
    perturb_every: u32,
    #[arg(long, default_value_t = 3)]
    ngram_order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    page: PathBuf,
    #[arg(long, default_value = "cld")]
    method: Method,
    /// Defaults to the reference length plus one.
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    draft: DraftArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "scratch,mpld,cld")]
    methods: Vec<Method>,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    draft: DraftArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 128)]
    pages: usize,
    /// Share of content blocks that are prose rather than formulas.
    #[arg(long, default_value_t = 0.8)]
    copyable: f64,
    #[arg(long, default_value_t = 2)]
    decoys: usize,
    #[arg(long, default_value_t = 6)]
    blocks_per_page: usize,
    #[arg(long)]
    no_page_numbers: bool,
    #[arg(long)]
    no_headers: bool,
    #[arg(long)]
    no_math: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    draft: DraftConfig,
    heuristic: HeuristicConfig,
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.to_path_buf(),
            field: String::new(),
            message: e.to_string(),
        }
        .into()
    })
}

impl DraftArgs {
    fn resolve(&self) -> Result<(DraftConfig, HeuristicConfig)> {
        let file = read_config(self.config.as_deref())?;
        let mut draft = file.draft;
        draft.max_ngram = self.max_ngram.unwrap_or(draft.max_ngram);
        draft.min_ngram = self.min_ngram.unwrap_or(draft.min_ngram);
        draft.num_candidates = self.num_candidates.unwrap_or(draft.num_candidates);
        draft.validate()?;
        Ok((draft, file.heuristic))
    }
}

impl ModelArgs {
    fn bench_config(&self, draft: &DraftArgs) -> Result<BenchConfig> {
        let (draft, heuristic) = draft.resolve()?;
        Ok(BenchConfig {
            model: self.model,
            ablation: Ablation {
                cti: !self.ablate_cti,
                topping: !self.ablate_topping,
            },
            draft,
            classifier: self.classifier,
            heuristic,
            tokenizer: self.tokenizer,
            seed: self.seed,
            perturb_every: self.perturb_every,
            ngram_order: self.ngram_order,
            ..BenchConfig::default()
        })
    }
}

// A closed downstream pipe is not an error worth reporting.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(&text)
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let mut files = Vec::new();
    for path in &args.paths {
        if path.is_dir() {
            files.extend(corpus_files(path)?);
        } else {
            files.push(path.clone());
        }
    }
    let mut results = Vec::new();
    let mut invalid = 0;
    for file in &files {
        let entry = match load_page(file) {
            Ok(page) => {
                json!({ "path": file, "page_id": page.page_id, "valid": true, "violations": [] })
            }
            Err(Error::InvalidPage {
                page_id,
                violations,
            }) => {
                invalid += 1;
                let messages: Vec<String> = violations.iter().map(ToString::to_string).collect();
                json!({ "path": file, "page_id": page_id, "valid": false, "violations": messages })
            }
            Err(e @ Error::Parse { .. }) => {
                invalid += 1;
                json!({ "path": file, "page_id": null, "valid": false, "violations": [e.to_string()] })
            }
            Err(e) => return Err(e.into()),
        };
        results.push(entry);
    }
    print_json(&Value::Array(results))?;
    if invalid > 0 {
        anyhow::bail!("{invalid} of {} pages failed validation", files.len());
    }
    Ok(())
}

fn identify(args: &IdentifyArgs) -> Result<()> {
    let page = load_page(&args.input)?;
    let heuristic = read_config(args.config.as_deref())?.heuristic;
    let classifier: Box<dyn SpanClassifier> = match args.classifier {
        ClassifierKind::Heuristic => Box::new(HeuristicClassifier::new(heuristic)),
        ClassifierKind::Gold => Box::new(GoldClassifier),
    };
    let labels = classifier.classify(&page)?;
    let f1 = match GoldClassifier.classify(&page) {
        Ok(gold) => Some(span_f1(&labels, &gold)?),
        Err(_) => None,
    };
    print_json(&json!({ "page_id": page.page_id, "labels": labels, "f1": f1 }))
}

fn decode(args: &DecodeArgs) -> Result<()> {
    let page = load_page(&args.page)?;
    let config = args.model.bench_config(&args.draft)?;
    let out = decode_page(&page, args.method, &config, args.max_new_tokens)?;
    log::info!(
        "{}: {} tokens in {} passes",
        page.page_id,
        out.stats.tokens_emitted,
        out.stats.forward_passes
    );
    print_json(&json!({
        "page_id": page.page_id,
        "method": config.ablation.label(args.method),
        "markdown": out.markdown,
        "stats": out.stats.report(),
    }))
}

fn bench(args: &BenchArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let config = BenchConfig {
        methods: args.methods.clone(),
        jobs: args.jobs,
        ..args.model.bench_config(&args.draft)?
    };
    let report = cld_core::bench::run_benchmark(&corpus, &config)?;
    let text = emit_report(&report.rows, args.format)?;
    match &args.report {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            print_json(&json!({ "report": path, "rows": report.rows }))?;
        }
        None => emit(&text)?,
    }
    Ok(())
}

fn gen_corpus(args: &GenArgs) -> Result<()> {
    let spec = GenSpec {
        pages: args.pages,
        copyable: args.copyable,
        decoys: args.decoys,
        noise: NoiseKinds {
            page_numbers: !args.no_page_numbers,
            headers: !args.no_headers,
            math: !args.no_math,
        },
        seed: args.seed,
        blocks_per_page: args.blocks_per_page,
    };
    let generated = generate_corpus(&spec, &args.out)?;
    let ids: Vec<&str> = generated
        .pages
        .iter()
        .map(|g| g.page.page_id.as_str())
        .collect();
    print_json(&json!({ "out": args.out, "pages": ids.len(), "page_ids": ids }))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let scores = quality(&read(&args.pred)?, &read(&args.reference)?);
    print_json(&serde_json::to_value(scores)?)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate(args) => validate(args),
        Command::Identify(args) => identify(args),
        Command::Decode(args) => decode(args),
        Command::Bench(args) => bench(args),
        Command::GenCorpus(args) => gen_corpus(args),
        Command::Eval(args) => eval(args),
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_invariant_violation() => 3,
        Some(Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLD_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
