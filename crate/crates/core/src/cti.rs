//! Copyable text identification: one KEEP/DELETE label per span.
//!
//! Running prose is copyable. Formulas, page furniture (headers, footers,
//! page numbers) are not. A learned token classifier can plug in through
//! [`SpanClassifier`]; token labels are folded into span labels by
//! [`vote_span_label`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::doc_model::{Label, Page, Span};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

/// Label of one token inside one span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub span_id: i64,
    pub token_index: usize,
    pub label: Label,
}

/// Exactly one label per span of a page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanLabeling(pub BTreeMap<i64, Label>);

impl SpanLabeling {
    pub fn get(&self, span_id: i64) -> Option<Label> {
        self.0.get(&span_id).copied()
    }

    /// Every span of `page` marked KEEP.
    pub fn all_keep(page: &Page) -> Self {
        Self(page.spans.iter().map(|s| (s.id, Label::Keep)).collect())
    }

    pub fn covers(&self, page: &Page) -> bool {
        self.0.len() == page.spans.len() && page.spans.iter().all(|s| self.0.contains_key(&s.id))
    }
}

pub trait SpanClassifier: Send + Sync {
    fn classify(&self, page: &Page) -> Result<SpanLabeling>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    /// Fraction of page height at the top and at the bottom treated as margin.
    pub margin_band: f64,
    /// Math-character fraction above which a span is a formula.
    pub math_density_threshold: f64,
    /// Margin spans shorter than this (in characters) are headers or footers.
    pub header_max_chars: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            margin_band: 0.08,
            math_density_threshold: 0.25,
            header_max_chars: 80,
        }
    }
}

fn page_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(\d+|page\s+\d+(\s+of\s+\d+)?)$").unwrap())
}

pub fn is_page_number(text: &str) -> bool {
    page_number_re().is_match(text.trim())
}

fn is_greek(c: char) -> bool {
    matches!(c, '\u{0391}'..='\u{03A9}' | '\u{03B1}'..='\u{03C9}')
}

fn is_math_operator(c: char) -> bool {
    matches!(c, '\\' | '^' | '_' | '=' | '+' | '∑' | '∫') || is_greek(c)
}

/// Fraction of characters that are math operators, Greek letters, or digits
/// in a text that also contains an operator.
pub fn math_density(text: &str) -> f64 {
    let total = text.chars().count();
    if total == 0 {
        return 0.0;
    }
    let operators = text.chars().filter(|&c| is_math_operator(c)).count();
    let digits = if operators > 0 {
        text.chars().filter(char::is_ascii_digit).count()
    } else {
        0
    };
    (operators + digits) as f64 / total as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicClassifier {
    pub config: HeuristicConfig,
}

impl HeuristicClassifier {
    pub fn new(config: HeuristicConfig) -> Self {
        Self { config }
    }

    fn label_span(&self, span: &Span, page_height: f64) -> Label {
        let cfg = &self.config;
        let y = span.bbox.center_y() / page_height;
        let in_margin = y < cfg.margin_band || y > 1.0 - cfg.margin_band;
        let text = span.text.trim();
        let margin_noise =
            in_margin && (is_page_number(text) || text.chars().count() < cfg.header_max_chars);
        if margin_noise || math_density(text) > cfg.math_density_threshold {
            Label::Delete
        } else {
            Label::Keep
        }
    }
}

impl SpanClassifier for HeuristicClassifier {
    fn classify(&self, page: &Page) -> Result<SpanLabeling> {
        Ok(classify_heuristic(page, &self.config))
    }
}

pub fn classify_heuristic(page: &Page, config: &HeuristicConfig) -> SpanLabeling {
    let clf = HeuristicClassifier::new(*config);
    SpanLabeling(
        page.spans
            .iter()
            .map(|s| (s.id, clf.label_span(s, page.height)))
            .collect(),
    )
}

/// Passes the gold labels through.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldClassifier;

impl SpanClassifier for GoldClassifier {
    fn classify(&self, page: &Page) -> Result<SpanLabeling> {
        classify_gold(page)
    }
}

pub fn classify_gold(page: &Page) -> Result<SpanLabeling> {
    page.spans
        .iter()
        .map(|s| {
            s.gold_label
                .map(|l| (s.id, l))
                .ok_or(Error::MissingGoldLabel { span_id: s.id })
        })
        .collect::<Result<_>>()
        .map(SpanLabeling)
}

/// Majority label; a tie goes to KEEP.
pub fn vote_span_label(token_labels: &[Label]) -> Result<Label> {
    if token_labels.is_empty() {
        return Err(Error::EmptyVote);
    }
    let keep = token_labels.iter().filter(|l| l.is_keep()).count();
    Ok(if keep * 2 >= token_labels.len() {
        Label::Keep
    } else {
        Label::Delete
    })
}

/// Fold token predictions into one label per span of `page`.
pub fn labeling_from_tokens(page: &Page, predictions: &[TokenPrediction]) -> Result<SpanLabeling> {
    let mut by_span: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
    for p in predictions {
        by_span.entry(p.span_id).or_default().push(p.label);
    }
    page.spans
        .iter()
        .map(|s| {
            let labels = by_span
                .get(&s.id)
                .ok_or(Error::NoTokenPredictions { span_id: s.id })?;
            Ok((s.id, vote_span_label(labels)?))
        })
        .collect::<Result<_>>()
        .map(SpanLabeling)
}

/// Give every token of every span its span's label.
pub fn expand_to_tokens(
    page: &Page,
    labeling: &SpanLabeling,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<TokenPrediction>> {
    let mut out = Vec::new();
    for s in &page.spans {
        let label = labeling
            .get(s.id)
            .ok_or_else(|| Error::IdMismatch(format!("span {} missing from labeling", s.id)))?;
        let n = tokenizer.encode(&s.text)?.len();
        out.extend((0..n).map(|token_index| TokenPrediction {
            span_id: s.id,
            token_index,
            label,
        }));
    }
    Ok(out)
}

/// Binary precision, recall and F1 with KEEP as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn score<'a, K: Ord + std::fmt::Debug + 'a>(
    pred: impl IntoIterator<Item = (K, Label)>,
    gold: impl IntoIterator<Item = (K, Label)>,
) -> Result<F1Score> {
    let pred: BTreeMap<K, Label> = pred.into_iter().collect();
    let gold: BTreeMap<K, Label> = gold.into_iter().collect();
    if pred.len() != gold.len() || pred.keys().zip(gold.keys()).any(|(a, b)| a != b) {
        let p: BTreeSet<_> = pred.keys().collect();
        let g: BTreeSet<_> = gold.keys().collect();
        let diff: Vec<_> = p.symmetric_difference(&g).take(5).collect();
        return Err(Error::IdMismatch(format!("{diff:?}")));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (k, p) in &pred {
        match (p.is_keep(), gold[k].is_keep()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp == 0 && tp + fneg == 0 {
        return Ok(F1Score {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
    })
}

pub fn span_f1(pred: &SpanLabeling, gold: &SpanLabeling) -> Result<F1Score> {
    score(
        pred.0.iter().map(|(&k, &l)| (k, l)),
        gold.0.iter().map(|(&k, &l)| (k, l)),
    )
}

pub fn token_f1(pred: &[TokenPrediction], gold: &[TokenPrediction]) -> Result<F1Score> {
    score(
        pred.iter().map(|p| ((p.span_id, p.token_index), p.label)),
        gold.iter().map(|p| ((p.span_id, p.token_index), p.label)),
    )
}
