//! Pages as labeled text spans, with their canonical JSON form.
//!
//! Coordinates are PDF points with the origin at the top-left corner of the
//! page. One page is stored per file:
//!
//! ```json
//! {"page_id": "p1", "width": 612.0, "height": 792.0,
//!  "spans": [{"id": 0, "text": "...", "bbox": [x0, y0, x1, y1], "order": 0, "gold_label": "KEEP"}],
//!  "reference_markdown": null}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        Self { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Whether a span's text can be copied verbatim into the Markdown output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Keep,
    Delete,
}

impl Label {
    pub fn is_keep(self) -> bool {
        self == Label::Keep
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Keep => "KEEP",
            Label::Delete => "DELETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub id: i64,
    pub text: String,
    pub bbox: BBox,
    pub order: i64,
    #[serde(default)]
    pub gold_label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub spans: Vec<Span>,
    #[serde(default)]
    pub reference_markdown: Option<String>,
}

impl Page {
    /// All span texts in reading order, joined with single spaces.
    pub fn flat_text(&self) -> String {
        self.spans
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn span(&self, id: i64) -> Option<&Span> {
        self.spans.iter().find(|s| s.id == id)
    }

    pub fn sort_spans(&mut self) {
        self.spans.sort_by_key(|s| s.order);
    }

    pub fn reference(&self) -> Result<&str> {
        self.reference_markdown
            .as_deref()
            .ok_or_else(|| Error::MissingReference {
                page_id: self.page_id.clone(),
            })
    }
}

/// Pages that all carry reference markdown, in file-name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub pages: Vec<Page>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }
}

/// One broken page invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub span_id: Option<i64>,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn page(field: &str, rule: impl Into<String>) -> Self {
        Self {
            span_id: None,
            field: field.to_owned(),
            rule: rule.into(),
        }
    }

    fn span(id: i64, index: usize, field: &str, rule: impl Into<String>) -> Self {
        Self {
            span_id: Some(id),
            field: format!("spans[{index}].{field}"),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span_id {
            Some(id) => write!(f, "span {id} ({}): {}", self.field, self.rule),
            None => write!(f, "{}: {}", self.field, self.rule),
        }
    }
}

pub fn validate_page(page: &Page) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(page.width.is_finite() && page.width > 0.0) {
        out.push(Violation::page("width", "must be finite and positive"));
    }
    if !(page.height.is_finite() && page.height > 0.0) {
        out.push(Violation::page("height", "must be finite and positive"));
    }

    let mut seen_ids = HashSet::new();
    let mut dup_ids = Vec::new();
    let mut seen_orders = HashSet::new();
    let mut dup_orders = Vec::new();

    for (i, span) in page.spans.iter().enumerate() {
        if span.text.trim().is_empty() {
            out.push(Violation::span(
                span.id,
                i,
                "text",
                "must contain a non-whitespace character",
            ));
        }
        let b = span.bbox;
        let coords = [b.x0, b.y0, b.x1, b.y1];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            out.push(Violation::span(
                span.id,
                i,
                "bbox",
                "coordinates must be finite and non-negative",
            ));
        } else {
            if b.x0 > b.x1 {
                out.push(Violation::span(span.id, i, "bbox", "x0 > x1"));
            }
            if b.y0 > b.y1 {
                out.push(Violation::span(span.id, i, "bbox", "y0 > y1"));
            }
            if b.x1 > page.width || b.y1 > page.height {
                out.push(Violation::span(
                    span.id,
                    i,
                    "bbox",
                    format!("outside page {}x{}", page.width, page.height),
                ));
            }
        }
        if !seen_ids.insert(span.id) {
            dup_ids.push((span.id, i));
        }
        if !seen_orders.insert(span.order) {
            dup_orders.push((span.id, i, span.order));
        }
    }

    let mut reported = HashSet::new();
    for (id, i) in dup_ids {
        if reported.insert(id) {
            out.push(Violation::span(
                id,
                i,
                "id",
                format!("duplicate span id {id}"),
            ));
        }
    }
    let mut reported = HashSet::new();
    for (id, i, order) in dup_orders {
        if reported.insert(order) {
            out.push(Violation::span(
                id,
                i,
                "order",
                format!("duplicate order {order}"),
            ));
        }
    }
    if let Some(i) = page.spans.windows(2).position(|w| w[0].order > w[1].order) {
        let s = &page.spans[i + 1];
        out.push(Violation::span(
            s.id,
            i + 1,
            "order",
            "spans not sorted by reading order",
        ));
    }
    out
}

/// Parse a page from JSON text, sort its spans and validate it.
pub fn parse_page(json: &str, origin: &Path) -> Result<Page> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let mut page: Page = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    page.sort_spans();
    let violations = validate_page(&page);
    if violations.is_empty() {
        Ok(page)
    } else {
        Err(Error::InvalidPage {
            page_id: page.page_id,
            violations,
        })
    }
}

pub fn load_page(path: impl AsRef<Path>) -> Result<Page> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_page(&json, path)
}

/// Sorted keys, two-space indent, trailing newline.
pub fn to_canonical_json(page: &Page) -> String {
    let value = serde_json::to_value(page).expect("page serializes");
    let mut out = serde_json::to_string_pretty(&sort_keys(value)).expect("value serializes");
    out.push('\n');
    out
}

fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> =
                map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn save_page(page: &Page, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_canonical_json(page)).map_err(|e| Error::io(path, e))
}

/// JSON files of a directory in lexicographic file-name order.
pub fn corpus_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|ext| ext == "json") {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Load every page of a corpus directory; each must carry reference markdown.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let mut pages = Vec::new();
    for path in corpus_files(dir)? {
        let page = load_page(&path)?;
        page.reference()?;
        pages.push(page);
    }
    Ok(Corpus { pages })
}
