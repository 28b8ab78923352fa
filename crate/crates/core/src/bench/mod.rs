//! Corpus-level benchmark: every method on every page, checked against
//! greedy decoding and summarized in forward passes and wall time.

mod generate;
mod report;

pub use generate::{
    generate_corpus, generate_page, generate_pages, DecoyPair, GenSpec, GeneratedCorpus,
    GeneratedPage, NoiseKinds,
};
pub use report::{emit_report, BenchRow, COLUMNS};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cti::{
    GoldClassifier, HeuristicClassifier, HeuristicConfig, SpanClassifier, SpanLabeling,
};
use crate::doc_model::{Corpus, Page};
use crate::draft::DraftConfig;
use crate::engine::{greedy_decode, DecodeCounts, DecodeSession, DecodeStats};
use crate::error::{Error, Result};
use crate::models::{Model, NGramLM, PerturbedReplay, ReplayModel};
use crate::tokenizer::{
    content, ByteTokenizer, TokenId, TokenSeq, Tokenizer, WhitespaceTokenizer, BOS, EOS,
};

/// Instruction given to the model ahead of the page.
pub const PROMPT: &str = "Transcribe this document page as Markdown text.";

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(Method { Scratch => "scratch", Pld => "pld", Mpld => "mpld", Cld => "cld" });
string_enum!(ModelKind { Replay => "replay", NGram => "ngram", Perturbed => "perturbed" });
string_enum!(ClassifierKind { Heuristic => "heuristic", Gold => "gold" });
string_enum!(TokenizerKind { Byte => "byte", Whitespace => "whitespace" });
string_enum!(ReportFormat { Markdown => "markdown", Csv => "csv" });

/// Which CLD modules are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ablation {
    pub cti: bool,
    pub topping: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            cti: true,
            topping: true,
        }
    }
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation {
            cti: true,
            topping: true,
        },
        Ablation {
            cti: false,
            topping: true,
        },
        Ablation {
            cti: true,
            topping: false,
        },
        Ablation {
            cti: false,
            topping: false,
        },
    ];

    /// Method name with the disabled cld components appended.
    pub fn label(self, method: Method) -> String {
        let mut s = method.to_string();
        if method == Method::Cld {
            if !self.cti {
                s.push_str("-no-cti");
            }
            if !self.topping {
                s.push_str("-no-topping");
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub model: ModelKind,
    pub methods: Vec<Method>,
    pub ablation: Ablation,
    pub draft: DraftConfig,
    pub classifier: ClassifierKind,
    pub heuristic: HeuristicConfig,
    pub tokenizer: TokenizerKind,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub seed: u64,
    /// Stride of perturbed positions for [`ModelKind::Perturbed`].
    pub perturb_every: u32,
    pub ngram_order: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Replay,
            methods: Method::ALL.to_vec(),
            ablation: Ablation::default(),
            draft: DraftConfig::default(),
            classifier: ClassifierKind::Heuristic,
            heuristic: HeuristicConfig::default(),
            tokenizer: TokenizerKind::Byte,
            jobs: 0,
            seed: 0,
            perturb_every: 16,
            ngram_order: 3,
        }
    }
}

/// Stats of one method on one page.
#[derive(Debug, Clone, Serialize)]
pub struct PageRecord {
    pub page_id: String,
    pub method: Method,
    pub counts: DecodeCounts,
    pub wall_ms: f64,
    pub cti_ms: f64,
}

impl PageRecord {
    fn new(page_id: &str, method: Method, stats: &DecodeStats) -> Self {
        Self {
            page_id: page_id.to_owned(),
            method,
            counts: stats.counts(),
            wall_ms: stats.wall_time.as_secs_f64() * 1e3,
            cti_ms: stats.cti_time.as_secs_f64() * 1e3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Per page, one record per requested method, in corpus order.
    pub pages: Vec<Vec<PageRecord>>,
}

impl BenchReport {
    pub fn records(&self, method: Method) -> impl Iterator<Item = &PageRecord> {
        self.pages
            .iter()
            .flat_map(move |p| p.iter().filter(move |r| r.method == method))
    }

    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        let prefix = method.as_str();
        self.rows
            .iter()
            .find(|r| r.method == prefix || r.method.starts_with(&format!("{prefix}-")))
    }
}

enum AnyTokenizer {
    Byte(ByteTokenizer),
    Whitespace(WhitespaceTokenizer),
}

impl AnyTokenizer {
    fn get(&self) -> &dyn Tokenizer {
        match self {
            AnyTokenizer::Byte(t) => t,
            AnyTokenizer::Whitespace(t) => t,
        }
    }
}

fn build_tokenizer(kind: TokenizerKind, corpus: &Corpus) -> AnyTokenizer {
    match kind {
        TokenizerKind::Byte => AnyTokenizer::Byte(ByteTokenizer),
        TokenizerKind::Whitespace => {
            let texts = std::iter::once(PROMPT).chain(corpus.pages.iter().flat_map(|p| {
                p.spans
                    .iter()
                    .map(|s| s.text.as_str())
                    .chain([" "])
                    .chain(p.reference_markdown.as_deref())
            }));
            AnyTokenizer::Whitespace(WhitespaceTokenizer::build(texts))
        }
    }
}

/// `[BOS] ++ tokens(PROMPT)`.
pub fn prompt_tokens(tokenizer: &dyn Tokenizer) -> Result<TokenSeq> {
    let mut prompt = vec![BOS];
    prompt.extend(tokenizer.encode(PROMPT)?);
    Ok(prompt)
}

/// The toy model standing in for a backbone on one page.
pub fn build_model(
    kind: ModelKind,
    reference: TokenSeq,
    prompt: &[TokenId],
    vocab_size: usize,
    seed: u64,
    perturb_every: u32,
    ngram_order: usize,
) -> Box<dyn Model> {
    match kind {
        ModelKind::Replay => Box::new(ReplayModel::new(reference, prompt.len())),
        ModelKind::Perturbed => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions: Vec<usize> = (0..reference.len())
                .filter(|_| rng.gen_ratio(1, perturb_every.max(1)))
                .collect();
            Box::new(PerturbedReplay::new(
                ReplayModel::new(reference, prompt.len()),
                positions,
                vocab_size,
            ))
        }
        ModelKind::NGram => {
            let mut seq = prompt.to_vec();
            seq.extend(&reference);
            seq.push(EOS);
            Box::new(NGramLM::trained_on(ngram_order, [seq.as_slice()]))
        }
    }
}

fn page_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

fn first_difference(a: &[TokenId], b: &[TokenId]) -> Option<usize> {
    if a == b {
        return None;
    }
    Some(a.iter().zip(b).take_while(|(x, y)| x == y).count())
}

struct PageRun {
    records: Vec<PageRecord>,
    scratch: DecodeStats,
}

fn run_page(
    config: &BenchConfig,
    tokenizer: &dyn Tokenizer,
    classifier: &dyn SpanClassifier,
    page: &Page,
    index: usize,
) -> Result<PageRun> {
    let prompt = prompt_tokens(tokenizer)?;
    let reference = tokenizer.encode(page.reference()?)?;
    let max_new = reference.len() + 1;
    let model = build_model(
        config.model,
        reference,
        &prompt,
        tokenizer.vocab_size(),
        page_seed(config.seed, index),
        config.perturb_every,
        config.ngram_order,
    );
    let model = model.as_ref();
    let (greedy_out, scratch) = greedy_decode(model, &prompt, max_new);

    let ablation = config.ablation;
    let run = |method: Method| -> Result<(TokenSeq, DecodeStats)> {
        if method == Method::Scratch {
            return Ok((greedy_out.clone(), scratch));
        }
        let session = session_for(method, config, tokenizer, model, classifier, page)?;
        Ok(session.decode(&prompt, max_new))
    };

    let mut records = Vec::with_capacity(config.methods.len());
    let mut mpld_counts = None;
    for &method in &config.methods {
        let (out, stats) = run(method)?;
        if let Some(position) = first_difference(&out, &greedy_out) {
            return Err(Error::LosslessViolation {
                page_id: page.page_id.clone(),
                method: ablation.label(method),
                position,
            });
        }
        if !stats.ledger_balanced() {
            return Err(Error::LedgerImbalance {
                page_id: page.page_id.clone(),
                method: ablation.label(method),
            });
        }
        if method == Method::Mpld {
            mpld_counts = Some(stats.counts());
        }
        records.push(PageRecord::new(&page.page_id, method, &stats));
    }

    if config.methods.contains(&Method::Cld) && !ablation.cti && !ablation.topping {
        let mpld = match mpld_counts {
            Some(c) => c,
            None => run(Method::Mpld)?.1.counts(),
        };
        let cld = records
            .iter()
            .find(|r| r.method == Method::Cld)
            .expect("cld was run")
            .counts;
        if cld != mpld {
            return Err(Error::AblationMismatch {
                page_id: page.page_id.clone(),
            });
        }
    }
    Ok(PageRun { records, scratch })
}

fn session_for<'a>(
    method: Method,
    config: &BenchConfig,
    tokenizer: &'a dyn Tokenizer,
    model: &'a dyn Model,
    classifier: &dyn SpanClassifier,
    page: &Page,
) -> Result<DecodeSession<'a>> {
    let base = DecodeSession::new(tokenizer, model, config.draft);
    let ablation = config.ablation;
    Ok(match method {
        Method::Scratch => base,
        Method::Pld => base.pld(),
        Method::Mpld => base.mpld(page)?,
        Method::Cld if ablation.cti => base.cld_with(page, classifier, ablation.topping)?,
        Method::Cld => base.cld(page, &SpanLabeling::all_keep(page), ablation.topping)?,
    })
}

fn make_classifier(config: &BenchConfig) -> Box<dyn SpanClassifier> {
    match config.classifier {
        ClassifierKind::Heuristic => Box::new(HeuristicClassifier::new(config.heuristic)),
        ClassifierKind::Gold => Box::new(GoldClassifier),
    }
}

/// Output of decoding one page on its own.
#[derive(Debug, Clone)]
pub struct PageDecode {
    pub markdown: String,
    pub tokens: TokenSeq,
    pub stats: DecodeStats,
}

/// Decode a single page with one method. The toy models are built from the
/// page's reference, so it must have one. `max_new_tokens` defaults to the
/// reference length plus one, leaving room for EOS.
pub fn decode_page(
    page: &Page,
    method: Method,
    config: &BenchConfig,
    max_new_tokens: Option<usize>,
) -> Result<PageDecode> {
    config.draft.validate()?;
    let corpus = Corpus {
        pages: vec![page.clone()],
    };
    let tokenizer = build_tokenizer(config.tokenizer, &corpus);
    let tokenizer = tokenizer.get();
    let prompt = prompt_tokens(tokenizer)?;
    let reference = tokenizer.encode(page.reference()?)?;
    let max_new = max_new_tokens.unwrap_or(reference.len() + 1);
    let model = build_model(
        config.model,
        reference,
        &prompt,
        tokenizer.vocab_size(),
        page_seed(config.seed, 0),
        config.perturb_every,
        config.ngram_order,
    );
    let classifier = make_classifier(config);
    let (tokens, stats) = if method == Method::Scratch {
        greedy_decode(model.as_ref(), &prompt, max_new)
    } else {
        session_for(
            method,
            config,
            tokenizer,
            model.as_ref(),
            classifier.as_ref(),
            page,
        )?
        .decode(&prompt, max_new)
    };
    let markdown = tokenizer.decode(content(&tokens))?;
    Ok(PageDecode {
        markdown,
        tokens,
        stats,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Decode every page with every configured method. Fails on the first page
/// whose assisted output differs from greedy decoding.
pub fn run_benchmark(corpus: &Corpus, config: &BenchConfig) -> Result<BenchReport> {
    if config.methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    config.draft.validate()?;

    let tokenizer = build_tokenizer(config.tokenizer, corpus);
    let tokenizer = tokenizer.get();
    let classifier = make_classifier(config);
    let classifier = classifier.as_ref();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let started = Instant::now();
    let runs: Vec<PageRun> = pool.install(|| {
        corpus
            .pages
            .par_iter()
            .enumerate()
            .map(|(i, page)| run_page(config, tokenizer, classifier, page, i))
            .collect::<Result<_>>()
    })?;
    log::info!(
        "benchmarked {} pages x {} methods in {:.2?}",
        corpus.len(),
        config.methods.len(),
        started.elapsed()
    );

    let scratch_fp = mean(runs.iter().map(|r| r.scratch.forward_passes as f64));
    let scratch_wall = mean(runs.iter().map(|r| r.scratch.wall_time.as_secs_f64() * 1e3));
    let rows = config
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let recs = || runs.iter().map(move |r| &r.records[m]);
            let fp_mean = mean(recs().map(|r| r.counts.forward_passes as f64));
            let wall_ms = mean(recs().map(|r| r.wall_ms));
            let (speedup_fp, speedup_wall) = if method == Method::Scratch {
                (1.0, 1.0)
            } else {
                (scratch_fp / fp_mean, scratch_wall / wall_ms)
            };
            BenchRow {
                method: config.ablation.label(method),
                model: config.model.to_string(),
                pages: runs.len(),
                fp_mean,
                tok_per_pass: mean(recs().map(|r| {
                    r.counts.tokens_emitted as f64 / r.counts.forward_passes.max(1) as f64
                })),
                wall_ms,
                cti_ms: mean(recs().map(|r| r.cti_ms)),
                speedup_fp,
                speedup_wall,
            }
        })
        .collect();

    Ok(BenchReport {
        rows,
        pages: runs.into_iter().map(|r| r.records).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pages: usize, seed: u64) -> Corpus {
        generate_pages(&GenSpec {
            pages,
            seed,
            ..GenSpec::default()
        })
        .unwrap()
        .corpus()
    }

    #[test]
    fn scratch_row_is_unit_speedup() {
        let report = run_benchmark(&corpus(4, 1), &BenchConfig::default()).unwrap();
        let scratch = report.row(Method::Scratch).unwrap();
        assert_eq!((scratch.speedup_fp, scratch.speedup_wall), (1.0, 1.0));
        assert_eq!(report.rows.len(), 4);
        assert!(report.row(Method::Cld).unwrap().speedup_fp > 1.0);
    }

    #[test]
    fn ablated_cld_equals_mpld() {
        let config = BenchConfig {
            methods: vec![Method::Cld],
            ablation: Ablation {
                cti: false,
                topping: false,
            },
            ..BenchConfig::default()
        };
        let report = run_benchmark(&corpus(6, 2), &config).unwrap();
        assert_eq!(report.rows[0].method, "cld-no-cti-no-topping");
    }

    #[test]
    fn whitespace_tokenizer_and_models_run() {
        let c = corpus(3, 9);
        for model in ModelKind::ALL {
            let config = BenchConfig {
                model: *model,
                tokenizer: TokenizerKind::Whitespace,
                ..BenchConfig::default()
            };
            let report = run_benchmark(&c, &config).unwrap();
            assert_eq!(report.pages.len(), 3);
        }
    }

    #[test]
    fn parse_enums() {
        assert_eq!("mpld".parse::<Method>().unwrap(), Method::Mpld);
        assert!("fast".parse::<Method>().is_err());
        assert_eq!("ngram".parse::<ModelKind>().unwrap(), ModelKind::NGram);
    }

    #[test]
    fn missing_reference_fails() {
        let mut c = corpus(1, 0);
        c.pages[0].reference_markdown = None;
        assert!(matches!(
            run_benchmark(&c, &BenchConfig::default()),
            Err(Error::MissingReference { .. })
        ));
    }

    #[test]
    fn single_page_decode_reproduces_reference() {
        let page = &corpus(1, 3).pages[0];
        let expected = page.reference_markdown.clone().unwrap();
        for tokenizer in TokenizerKind::ALL {
            for &method in Method::ALL {
                let config = BenchConfig {
                    tokenizer: *tokenizer,
                    ..BenchConfig::default()
                };
                let out = decode_page(page, method, &config, None).unwrap();
                assert_eq!(out.markdown, expected, "{tokenizer} {method}");
                assert_eq!(out.tokens.last(), Some(&EOS));
                assert!(out.stats.ledger_balanced());
            }
        }
        let capped = decode_page(page, Method::Cld, &BenchConfig::default(), Some(5)).unwrap();
        assert_eq!(capped.markdown, expected[..5]);
    }

    #[test]
    fn single_page_decode_needs_reference() {
        let mut page = corpus(1, 0).pages.remove(0);
        page.reference_markdown = None;
        assert!(matches!(
            decode_page(&page, Method::Mpld, &BenchConfig::default(), None),
            Err(Error::MissingReference { .. })
        ));
    }
}
