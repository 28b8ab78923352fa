//! Seeded synthetic pages paired with reference Markdown.
//!
//! Each page is a column of paragraphs (one KEEP span per line) and display
//! formulas (one DELETE span whose text is the rendered glyphs, while the
//! reference holds LaTeX). Optional noise: a running header, a page number,
//! and decoy lines that open with the same words as a later paragraph, either
//! as a running head in the top margin or as a body line further up.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{save_page, BBox, Corpus, Label, Page, Span};
use crate::error::{Error, Result};

const PAGE_WIDTH: f64 = 612.0;
const PAGE_HEIGHT: f64 = 792.0;
const LEFT: f64 = 72.0;
const TEXT_WIDTH: f64 = 468.0;
const BODY_TOP: f64 = 72.0;
const BODY_BOTTOM: f64 = 720.0;
const LINE_PITCH: f64 = 14.0;
const LINE_CHARS: usize = 72;
const DECOY_WORDS: usize = 3;
const MARGIN_MAX_CHARS: usize = 60;

const WORDS: &[&str] = &[
    "the",
    "model",
    "page",
    "layout",
    "method",
    "results",
    "data",
    "we",
    "show",
    "that",
    "this",
    "approach",
    "improves",
    "over",
    "prior",
    "work",
    "on",
    "several",
    "benchmarks",
    "and",
    "in",
    "particular",
    "when",
    "documents",
    "contain",
    "dense",
    "text",
    "figures",
    "tables",
    "are",
    "handled",
    "separately",
    "by",
    "a",
    "dedicated",
    "module",
    "which",
    "is",
    "trained",
    "with",
    "synthetic",
    "examples",
    "our",
    "experiments",
    "indicate",
    "significant",
    "gains",
    "for",
    "long",
    "inputs",
    "while",
    "short",
    "ones",
    "remain",
    "unchanged",
    "each",
    "section",
    "describes",
    "one",
    "component",
    "of",
    "system",
    "first",
    "second",
    "finally",
    "analysis",
    "reveals",
    "strong",
    "correlation",
    "between",
    "structure",
    "and",
    "quality",
    "output",
    "is",
    "evaluated",
    "against",
    "reference",
    "annotations",
    "produced",
    "manually",
    "it",
    "follows",
    "from",
    "these",
    "observations",
    "random",
    "variables",
    "converge",
    "under",
    "mild",
    "assumptions",
    "proof",
    "given",
    "appendix",
    "as",
    "discussed",
    "earlier",
    "estimator",
    "remains",
    "unbiased",
    "even",
    "if",
    "noise",
    "grows",
    "large",
    "market",
    "prices",
    "respond",
    "to",
    "policy",
    "changes",
    "slowly",
    "quantum",
    "states",
    "evolve",
    "according",
    "unitary",
    "dynamics",
    "measurement",
    "collapses",
    "wave",
    "function",
];

const GREEK: &[(&str, &str)] = &[
    ("α", "\\alpha"),
    ("β", "\\beta"),
    ("γ", "\\gamma"),
    ("δ", "\\delta"),
    ("λ", "\\lambda"),
    ("μ", "\\mu"),
    ("σ", "\\sigma"),
    ("θ", "\\theta"),
    ("ω", "\\omega"),
    ("Φ", "\\Phi"),
];

const HEADERS: &[&str] = &[
    "Journal of Synthetic Document Studies",
    "Preprint. Under review.",
    "Proceedings of the Workshop on Layout Analysis",
    "Technical Report, Department of Applied Data",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseKinds {
    pub page_numbers: bool,
    pub headers: bool,
    pub math: bool,
}

impl NoiseKinds {
    pub const ALL: NoiseKinds = NoiseKinds {
        page_numbers: true,
        headers: true,
        math: true,
    };
    pub const NONE: NoiseKinds = NoiseKinds {
        page_numbers: false,
        headers: false,
        math: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub pages: usize,
    /// Share of content blocks that are prose paragraphs; the rest are formulas.
    pub copyable: f64,
    /// Decoy lines per page.
    pub decoys: usize,
    pub noise: NoiseKinds,
    pub seed: u64,
    pub blocks_per_page: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            pages: 128,
            copyable: 0.8,
            decoys: 2,
            noise: NoiseKinds::ALL,
            seed: 0,
            blocks_per_page: 6,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.copyable) {
            return Err(Error::Config(format!(
                "copyable fraction {} outside [0, 1]",
                self.copyable
            )));
        }
        if self.blocks_per_page == 0 {
            return Err(Error::Config("blocks_per_page must be at least 1".into()));
        }
        Ok(())
    }
}

/// A decoy line and the later line whose opening words it repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecoyPair {
    pub decoy_span_id: i64,
    pub target_span_id: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPage {
    pub page: Page,
    pub decoys: Vec<DecoyPair>,
    pub page_number_span_id: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub pages: Vec<GeneratedPage>,
}

impl GeneratedCorpus {
    pub fn corpus(&self) -> Corpus {
        Corpus {
            pages: self.pages.iter().map(|g| g.page.clone()).collect(),
        }
    }
}

enum Block {
    Paragraph(Vec<String>),
    Math { glyphs: String, latex: String },
}

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s = (0..words)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ");
    capitalize(&mut s);
    s.push('.');
    s
}

fn capitalize(s: &mut String) {
    if let Some(first) = s.get(..1) {
        let upper = first.to_ascii_uppercase();
        s.replace_range(..1, &upper);
    }
}

fn wrap(text: &str) -> Vec<String> {
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split(' ') {
        if !line.is_empty() && line.len() + 1 + word.len() > LINE_CHARS {
            lines.push(std::mem::take(&mut line));
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(word);
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

fn paragraph(rng: &mut ChaCha8Rng) -> Vec<String> {
    let sentences = rng.gen_range(2..=4);
    let text = (0..sentences)
        .map(|_| {
            let n = rng.gen_range(6..=14);
            sentence(rng, n)
        })
        .collect::<Vec<_>>()
        .join(" ");
    wrap(&text)
}

fn formula(rng: &mut ChaCha8Rng) -> (String, String) {
    let terms = rng.gen_range(2..=4);
    let (mut glyphs, mut latex) = (String::new(), String::new());
    if rng.gen_bool(0.3) {
        glyphs.push_str("∑ ");
        latex.push_str("\\sum ");
    }
    for t in 0..terms {
        if t > 0 {
            let op = if t == terms - 1 { "=" } else { "+" };
            glyphs.push_str(&format!(" {op} "));
            latex.push_str(&format!(" {op} "));
        }
        let (g, l) = GREEK.choose(rng).expect("non-empty");
        glyphs.push_str(g);
        latex.push_str(l);
        match rng.gen_range(0..3) {
            0 => {
                let d = rng.gen_range(2..=9);
                glyphs.push_str(&d.to_string());
                latex.push_str(&format!("^{{{d}}}"));
            }
            1 => {
                let s = ['i', 'j', 'k', 'n'][rng.gen_range(0..4)];
                glyphs.push(s);
                latex.push_str(&format!("_{{{s}}}"));
            }
            _ => {}
        }
    }
    (glyphs, latex)
}

/// Opens with the target line's first words, then repeats the rest of it with
/// every other word swapped, so a first-match lookup keeps landing here.
fn decoy_line(rng: &mut ChaCha8Rng, target_first_line: &str, max_chars: usize) -> String {
    let mut line = String::new();
    for (i, word) in target_first_line.split(' ').enumerate() {
        let word = if i > DECOY_WORDS && (i - DECOY_WORDS) % 2 == 1 {
            let mut w = *WORDS.choose(rng).expect("non-empty");
            while w == word {
                w = WORDS.choose(rng).expect("non-empty");
            }
            w
        } else {
            word
        };
        if !line.is_empty() && line.len() + 1 + word.len() >= max_chars {
            break;
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(word);
    }
    line
}

fn page_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn span(order: &mut i64, text: String, bbox: BBox, label: Label) -> Span {
    let s = Span {
        id: *order + 1,
        text,
        bbox,
        order: *order,
        gold_label: Some(label),
    };
    *order += 1;
    s
}

fn line_bbox(y: f64, chars: usize, height: f64) -> BBox {
    let width = (chars as f64 * 6.0).min(TEXT_WIDTH);
    BBox::new(LEFT, y, LEFT + width, y + height)
}

pub fn generate_page(spec: &GenSpec, index: usize) -> GeneratedPage {
    let mut rng = page_rng(spec.seed, index);
    let math_blocks = if spec.noise.math {
        ((1.0 - spec.copyable) * spec.blocks_per_page as f64).round() as usize
    } else {
        0
    };
    let math_at = rand::seq::index::sample(&mut rng, spec.blocks_per_page, math_blocks);
    let mut blocks: Vec<Block> = (0..spec.blocks_per_page)
        .map(|i| {
            if math_at.iter().any(|m| m == i) {
                let (glyphs, latex) = formula(&mut rng);
                Block::Math { glyphs, latex }
            } else {
                Block::Paragraph(paragraph(&mut rng))
            }
        })
        .collect();

    // Even decoys are running heads in the top margin. Odd ones are body lines
    // in a paragraph that precedes a formula, copying the first line of a
    // paragraph after it; without such a formula they fall back to the margin.
    // Links are (host block or None, line, target block).
    let paragraphs: Vec<usize> = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b, Block::Paragraph(_)))
        .map(|(i, _)| i)
        .collect();
    let split_pairs: Vec<(usize, usize)> = paragraphs
        .iter()
        .flat_map(|&h| paragraphs.iter().map(move |&t| (h, t)))
        .filter(|&(h, t)| h < t && (h..t).any(|i| matches!(blocks[i], Block::Math { .. })))
        .collect();
    let mut decoy_links = Vec::new();
    let mut margin_decoys = Vec::new();
    if paragraphs.len() >= 2 {
        for d in 0..spec.decoys {
            if d % 2 == 1 && !split_pairs.is_empty() {
                let (host, target) = split_pairs[rng.gen_range(0..split_pairs.len())];
                let Block::Paragraph(lines) = &blocks[target] else {
                    unreachable!()
                };
                let line = decoy_line(&mut rng, &lines[0], LINE_CHARS + 8);
                let Block::Paragraph(host_lines) = &mut blocks[host] else {
                    unreachable!()
                };
                host_lines.push(line);
                decoy_links.push((Some(host), host_lines.len() - 1, target));
            } else {
                let target = paragraphs[1 + d % (paragraphs.len() - 1)];
                let Block::Paragraph(lines) = &blocks[target] else {
                    unreachable!()
                };
                let line = decoy_line(&mut rng, &lines[0], MARGIN_MAX_CHARS);
                decoy_links.push((None, margin_decoys.len(), target));
                margin_decoys.push(line);
            }
        }
    }

    let total_lines: usize = blocks
        .iter()
        .map(|b| match b {
            Block::Paragraph(lines) => lines.len(),
            Block::Math { .. } => 2,
        })
        .sum();
    let gap = 8.0;
    let budget = BODY_BOTTOM - BODY_TOP - gap * blocks.len() as f64;
    let pitch = LINE_PITCH.min(budget / total_lines.max(1) as f64);

    let mut spans = Vec::new();
    let mut order = 0i64;
    if spec.noise.headers {
        let text = HEADERS.choose(&mut rng).expect("non-empty").to_string();
        let chars = text.chars().count();
        spans.push(span(
            &mut order,
            text,
            line_bbox(24.0, chars, 10.0),
            Label::Delete,
        ));
    }
    let mut margin_ids = Vec::with_capacity(margin_decoys.len());
    for (i, text) in margin_decoys.into_iter().enumerate() {
        let chars = text.chars().count();
        let bbox = line_bbox(38.0 + 11.0 * i as f64, chars, 9.0);
        let s = span(&mut order, text, bbox, Label::Delete);
        margin_ids.push(s.id);
        spans.push(s);
    }

    let mut y = BODY_TOP;
    let mut first_line_ids = Vec::with_capacity(blocks.len());
    let mut line_ids: Vec<Vec<i64>> = Vec::with_capacity(blocks.len());
    let mut reference = Vec::with_capacity(blocks.len());
    for block in &blocks {
        match block {
            Block::Paragraph(lines) => {
                let mut ids = Vec::new();
                for line in lines {
                    let chars = line.chars().count();
                    let s = span(
                        &mut order,
                        line.clone(),
                        line_bbox(y, chars, pitch * 0.8),
                        Label::Keep,
                    );
                    ids.push(s.id);
                    spans.push(s);
                    y += pitch;
                }
                first_line_ids.push(ids.first().copied());
                line_ids.push(ids);
                reference.push(lines.join(" "));
            }
            Block::Math { glyphs, latex } => {
                let chars = glyphs.chars().count();
                let bbox = line_bbox(y + pitch * 0.5, chars, pitch);
                spans.push(span(&mut order, glyphs.clone(), bbox, Label::Delete));
                y += 2.0 * pitch;
                first_line_ids.push(None);
                line_ids.push(Vec::new());
                reference.push(format!("$${latex}$$"));
            }
        }
        y += gap;
    }

    let mut page_number_span_id = None;
    if spec.noise.page_numbers {
        let n = index + 1;
        let text = if rng.gen_bool(0.5) {
            n.to_string()
        } else {
            format!("Page {n} of {}", spec.pages.max(n))
        };
        let chars = text.chars().count();
        let s = span(
            &mut order,
            text,
            line_bbox(756.0, chars, 10.0),
            Label::Delete,
        );
        page_number_span_id = Some(s.id);
        spans.push(s);
    }

    let decoys = decoy_links
        .into_iter()
        .map(|(host, line, target)| DecoyPair {
            decoy_span_id: match host {
                Some(host) => line_ids[host][line],
                None => margin_ids[line],
            },
            target_span_id: first_line_ids[target].expect("target is a paragraph"),
        })
        .collect();

    GeneratedPage {
        page: Page {
            page_id: format!("synth-{}-{index:04}", spec.seed),
            width: PAGE_WIDTH,
            height: PAGE_HEIGHT,
            spans,
            reference_markdown: Some(reference.join("\n\n")),
        },
        decoys,
        page_number_span_id,
    }
}

pub fn generate_pages(spec: &GenSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    Ok(GeneratedCorpus {
        pages: (0..spec.pages).map(|i| generate_page(spec, i)).collect(),
    })
}

/// Generate and write one `page_NNNN.json` per page into `out_dir`.
pub fn generate_corpus(spec: &GenSpec, out_dir: impl AsRef<Path>) -> Result<GeneratedCorpus> {
    let out_dir = out_dir.as_ref();
    let generated = generate_pages(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (i, g) in generated.pages.iter().enumerate() {
        save_page(&g.page, out_dir.join(format!("page_{i:04}.json")))?;
    }
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cti::{classify_heuristic, math_density, HeuristicConfig};
    use crate::doc_model::validate_page;

    #[test]
    fn pages_are_valid_and_deterministic() {
        let spec = GenSpec {
            pages: 20,
            seed: 3,
            ..GenSpec::default()
        };
        let a = generate_pages(&spec).unwrap();
        let b = generate_pages(&spec).unwrap();
        assert_eq!(a, b);
        for g in &a.pages {
            assert!(
                validate_page(&g.page).is_empty(),
                "{:?}",
                validate_page(&g.page)
            );
        }
    }

    #[test]
    fn fully_copyable_reference_is_keep_text() {
        let spec = GenSpec {
            pages: 10,
            copyable: 1.0,
            decoys: 0,
            seed: 11,
            ..GenSpec::default()
        };
        for g in generate_pages(&spec).unwrap().pages {
            let keep: Vec<&str> = g
                .page
                .spans
                .iter()
                .filter(|s| s.gold_label == Some(Label::Keep))
                .map(|s| s.text.as_str())
                .collect();
            let reference = g.page.reference_markdown.unwrap();
            assert_eq!(
                reference.split_whitespace().collect::<Vec<_>>(),
                keep.join(" ").split_whitespace().collect::<Vec<_>>()
            );
            assert!(g.decoys.is_empty());
        }
    }

    #[test]
    fn formulas_are_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let (glyphs, latex) = formula(&mut rng);
            assert!(math_density(&glyphs) > 0.25, "{glyphs}");
            assert!(latex.contains('\\'));
        }
    }

    #[test]
    fn heuristic_matches_gold_on_generated_pages() {
        let spec = GenSpec {
            pages: 30,
            seed: 5,
            ..GenSpec::default()
        };
        for g in generate_pages(&spec).unwrap().pages {
            let l = classify_heuristic(&g.page, &HeuristicConfig::default());
            for s in &g.page.spans {
                assert_eq!(l.get(s.id), s.gold_label, "span {:?}", s.text);
            }
        }
    }

    #[test]
    fn bad_spec_rejected() {
        let spec = GenSpec {
            copyable: 1.5,
            ..GenSpec::default()
        };
        assert!(generate_pages(&spec).is_err());
    }
}
