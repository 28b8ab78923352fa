//! Draft-and-verify decoding for PDF-to-Markdown conversion.
//!
//! Candidate tokens are looked up in the text already present on a PDF page
//! and verified by the conversion model in a single forward pass, so the
//! output is exactly what plain greedy decoding would produce. Three draft
//! sources are provided:
//!
//! - **PLD**: n-gram lookup in the prompt.
//! - **mPLD**: n-gram lookup in the flat text of the whole page.
//! - **CLD**: lookup in a pool of copyable spans, filtered by a span
//!   classifier and reordered by the topping rule as decoding progresses.
//!
//! Toy models in [`models`] stand in for real vision-language backbones so
//! forward-pass savings and losslessness can be checked exactly.

pub mod bench;
pub mod cti;
pub mod doc_model;
pub mod draft;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod models;
pub mod tokenizer;

pub use error::{Error, Result};
