//! Candidate generation by n-gram lookup.
//!
//! Three sources share one matcher ([`find_ngram_match`]): the prompt (PLD),
//! the flat text of the page (mPLD), and an ordered pool of merged copyable
//! spans (CLD). The pool is rotated with [`SpanPool::top`] whenever a
//! proposal from it is accepted, so search starts where conversion is.

use serde::{Deserialize, Serialize};

use crate::cti::SpanLabeling;
use crate::doc_model::{Label, Page};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSeq, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DraftConfig {
    /// Longest query suffix tried.
    pub max_ngram: usize,
    /// Shortest query suffix tried.
    pub min_ngram: usize,
    /// Most candidate tokens proposed at once.
    pub num_candidates: usize,
}

impl Default for DraftConfig {
    fn default() -> Self {
        Self {
            max_ngram: 3,
            min_ngram: 1,
            num_candidates: 10,
        }
    }
}

impl DraftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_ngram == 0 {
            return Err(Error::Config("min_ngram must be at least 1".into()));
        }
        if self.min_ngram > self.max_ngram {
            return Err(Error::Config(format!(
                "min_ngram {} exceeds max_ngram {}",
                self.min_ngram, self.max_ngram
            )));
        }
        if self.num_candidates == 0 {
            return Err(Error::Config("num_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

/// A run of adjacent KEEP spans, tokenized as one string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledSpan {
    pub pool_index: usize,
    pub source_span_ids: Vec<i64>,
    pub tokens: TokenSeq,
}

/// Merged copyable spans in their current search order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanPool {
    pub spans: Vec<PooledSpan>,
}

impl SpanPool {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn get(&self, pool_index: usize) -> Option<&PooledSpan> {
        self.spans.iter().find(|s| s.pool_index == pool_index)
    }

    /// Move the span with `pool_index` and everything after it to the front,
    /// the spans before it to the back.
    pub fn top(&mut self, pool_index: usize) -> Result<()> {
        let pos = self
            .spans
            .iter()
            .position(|s| s.pool_index == pool_index)
            .ok_or(Error::NotInPool(pool_index))?;
        self.spans.rotate_left(pos);
        Ok(())
    }
}

pub fn top_pool(mut pool: SpanPool, accepted_pool_index: usize) -> Result<SpanPool> {
    pool.top(accepted_pool_index)?;
    Ok(pool)
}

/// Which token sequence a match was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchSource {
    /// The flat source sequence (prompt or page).
    Flat,
    /// A span of the pool, by its `pool_index`.
    Pool(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub source: MatchSource,
    /// Offset of the matched n-gram within its source.
    pub match_start: usize,
    pub ngram_len: usize,
    pub candidates: TokenSeq,
}

impl MatchResult {
    pub fn pool_index(&self) -> Option<usize> {
        match self.source {
            MatchSource::Pool(i) => Some(i),
            MatchSource::Flat => None,
        }
    }
}

/// Longest suffix of `query` (from `max_ngram` down to `min_ngram`) that
/// occurs in `source` with at least one token after it; the first such
/// occurrence wins and up to `num_candidates` following tokens are returned.
pub fn find_ngram_match(
    query: &[TokenId],
    source: &[TokenId],
    config: &DraftConfig,
) -> Option<MatchResult> {
    let longest = config.max_ngram.min(query.len());
    if longest < config.min_ngram.max(1) {
        return None;
    }
    for n in (config.min_ngram.max(1)..=longest).rev() {
        let suffix = &query[query.len() - n..];
        if source.len() <= n {
            continue;
        }
        let hit = source[..source.len() - 1]
            .windows(n)
            .position(|w| w == suffix);
        if let Some(p) = hit {
            let start = p + n;
            let end = (start + config.num_candidates).min(source.len());
            return Some(MatchResult {
                source: MatchSource::Flat,
                match_start: p,
                ngram_len: n,
                candidates: source[start..end].to_vec(),
            });
        }
    }
    None
}

/// Merge consecutive KEEP spans (joined with one space) and drop DELETE spans.
pub fn build_span_pool(
    page: &Page,
    labeling: &SpanLabeling,
    tokenizer: &dyn Tokenizer,
) -> Result<SpanPool> {
    let mut runs: Vec<(Vec<i64>, Vec<&str>)> = Vec::new();
    let mut open = false;
    for span in &page.spans {
        let label = labeling
            .get(span.id)
            .ok_or_else(|| Error::IdMismatch(format!("span {} missing from labeling", span.id)))?;
        if label == Label::Keep {
            if !open {
                runs.push((Vec::new(), Vec::new()));
                open = true;
            }
            let run = runs.last_mut().expect("run opened");
            run.0.push(span.id);
            run.1.push(&span.text);
        } else {
            open = false;
        }
    }
    let mut spans = Vec::with_capacity(runs.len());
    for (ids, texts) in runs {
        let tokens = tokenizer.encode(&texts.join(" "))?;
        if tokens.is_empty() {
            continue;
        }
        spans.push(PooledSpan {
            pool_index: spans.len(),
            source_span_ids: ids,
            tokens,
        });
    }
    Ok(SpanPool { spans })
}

/// Flat page tokens used by mPLD: every span, unfiltered.
pub fn page_tokens(page: &Page, tokenizer: &dyn Tokenizer) -> Result<TokenSeq> {
    tokenizer.encode(&page.flat_text())
}

pub fn propose_pld(
    generated: &[TokenId],
    prompt_tokens: &[TokenId],
    config: &DraftConfig,
) -> Option<MatchResult> {
    find_ngram_match(generated, prompt_tokens, config)
}

pub fn propose_mpld(
    generated: &[TokenId],
    page_tokens: &[TokenId],
    config: &DraftConfig,
) -> Option<MatchResult> {
    find_ngram_match(generated, page_tokens, config)
}

/// Longest query suffix first; for each length, the first span in pool order
/// holding it wins. Candidates stop at that span's end.
pub fn propose_cld(
    generated: &[TokenId],
    pool: &SpanPool,
    config: &DraftConfig,
) -> Option<MatchResult> {
    let longest = config.max_ngram.min(generated.len());
    let shortest = config.min_ngram.max(1);
    if longest < shortest {
        return None;
    }
    (shortest..=longest).rev().find_map(|n| {
        let exact = DraftConfig {
            max_ngram: n,
            min_ngram: n,
            ..*config
        };
        pool.spans.iter().find_map(|span| {
            find_ngram_match(generated, &span.tokens, &exact).map(|m| MatchResult {
                source: MatchSource::Pool(span.pool_index),
                ..m
            })
        })
    })
}
