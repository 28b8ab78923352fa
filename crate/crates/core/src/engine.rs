//! Draft-and-verify decoding.
//!
//! Each loop step asks the draft source for candidates. Without a proposal the
//! model makes one plain greedy step; with one, the model scores all
//! candidates in a single pass and the longest agreeing prefix is kept plus
//! the model's own token at the first disagreement. The output is therefore
//! exactly the greedy output, with fewer forward passes.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cti::{SpanClassifier, SpanLabeling};
use crate::doc_model::Page;
use crate::draft::{
    build_span_pool, page_tokens, propose_cld, propose_mpld, propose_pld, DraftConfig, MatchResult,
    SpanPool,
};
use crate::error::Result;
use crate::models::Model;
use crate::tokenizer::{content, TokenId, TokenSeq, Tokenizer, EOS};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeStats {
    pub forward_passes: u64,
    pub tokens_emitted: u64,
    pub candidate_tokens_accepted: u64,
    pub proposals_made: u64,
    pub wall_time: Duration,
    pub cti_time: Duration,
}

/// The timing-free part of [`DecodeStats`], comparable across runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeCounts {
    pub forward_passes: u64,
    pub tokens_emitted: u64,
    pub candidate_tokens_accepted: u64,
    pub proposals_made: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub forward_passes: u64,
    pub tokens_emitted: u64,
    pub accepted: u64,
    pub proposals: u64,
    pub wall_ms: f64,
    pub cti_ms: f64,
}

impl DecodeStats {
    pub fn counts(&self) -> DecodeCounts {
        DecodeCounts {
            forward_passes: self.forward_passes,
            tokens_emitted: self.tokens_emitted,
            candidate_tokens_accepted: self.candidate_tokens_accepted,
            proposals_made: self.proposals_made,
        }
    }

    /// `tokens_emitted == forward_passes + candidate_tokens_accepted`.
    pub fn ledger_balanced(&self) -> bool {
        self.tokens_emitted == self.forward_passes + self.candidate_tokens_accepted
    }

    pub fn tokens_per_pass(&self) -> f64 {
        if self.forward_passes == 0 {
            0.0
        } else {
            self.tokens_emitted as f64 / self.forward_passes as f64
        }
    }

    pub fn report(&self) -> StatsReport {
        StatsReport {
            forward_passes: self.forward_passes,
            tokens_emitted: self.tokens_emitted,
            accepted: self.candidate_tokens_accepted,
            proposals: self.proposals_made,
            wall_ms: self.wall_time.as_secs_f64() * 1e3,
            cti_ms: self.cti_time.as_secs_f64() * 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationOutcome {
    /// Number of leading candidates the model agreed with.
    pub accepted_count: usize,
    /// The accepted candidates followed by the model's own next token.
    pub emitted: TokenSeq,
}

/// One forward pass over `prefix ++ candidates`.
pub fn verify_candidates(
    model: &dyn Model,
    prefix: &[TokenId],
    candidates: &[TokenId],
) -> VerificationOutcome {
    let greedy = model.greedy_continuations(prefix, candidates);
    debug_assert_eq!(greedy.len(), candidates.len() + 1);
    let accepted_count = candidates
        .iter()
        .zip(&greedy)
        .take_while(|(c, g)| c == g)
        .count();
    VerificationOutcome {
        accepted_count,
        emitted: greedy[..=accepted_count].to_vec(),
    }
}

/// Plain one-token-per-pass decoding; stops at EOS or `max_new_tokens`.
pub fn greedy_decode(
    model: &dyn Model,
    prompt: &[TokenId],
    max_new_tokens: usize,
) -> (TokenSeq, DecodeStats) {
    let start = Instant::now();
    let mut context = prompt.to_vec();
    let mut stats = DecodeStats::default();
    while context.len() - prompt.len() < max_new_tokens {
        let t = model.next_token(&context);
        stats.forward_passes += 1;
        stats.tokens_emitted += 1;
        context.push(t);
        if t == EOS {
            break;
        }
    }
    stats.wall_time = start.elapsed();
    (context.split_off(prompt.len()), stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DraftSource {
    /// Greedy decoding, no candidates.
    None,
    /// Lookup in the prompt being decoded.
    Pld,
    /// Lookup in the flat page tokens.
    Mpld(TokenSeq),
    /// Lookup in a span pool, optionally topped after each acceptance.
    Cld { pool: SpanPool, topping: bool },
}

/// One decode of one page. Draft sources are tokenized with the session's own
/// tokenizer, so candidates and model always share a vocabulary.
pub struct DecodeSession<'a> {
    tokenizer: &'a dyn Tokenizer,
    model: &'a dyn Model,
    source: DraftSource,
    config: DraftConfig,
    cti_time: Duration,
}

impl<'a> DecodeSession<'a> {
    pub fn new(tokenizer: &'a dyn Tokenizer, model: &'a dyn Model, config: DraftConfig) -> Self {
        Self {
            tokenizer,
            model,
            source: DraftSource::None,
            config,
            cti_time: Duration::ZERO,
        }
    }

    pub fn pld(mut self) -> Self {
        self.source = DraftSource::Pld;
        self
    }

    pub fn mpld(mut self, page: &Page) -> Result<Self> {
        self.source = DraftSource::Mpld(page_tokens(page, self.tokenizer)?);
        Ok(self)
    }

    pub fn cld(mut self, page: &Page, labeling: &SpanLabeling, topping: bool) -> Result<Self> {
        let pool = build_span_pool(page, labeling, self.tokenizer)?;
        self.source = DraftSource::Cld { pool, topping };
        Ok(self)
    }

    /// Label the page with `classifier` first; its latency is kept as CTI time.
    pub fn cld_with(
        self,
        page: &Page,
        classifier: &dyn SpanClassifier,
        topping: bool,
    ) -> Result<Self> {
        let start = Instant::now();
        let labeling = classifier.classify(page)?;
        let cti_time = start.elapsed();
        let mut session = self.cld(page, &labeling, topping)?;
        session.cti_time = cti_time;
        Ok(session)
    }

    pub fn source(&self) -> &DraftSource {
        &self.source
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer
    }

    fn propose(
        &self,
        pool: &SpanPool,
        prompt: &[TokenId],
        generated: &[TokenId],
    ) -> Option<MatchResult> {
        match &self.source {
            DraftSource::None => None,
            DraftSource::Pld => propose_pld(generated, content(prompt), &self.config),
            DraftSource::Mpld(tokens) => propose_mpld(generated, tokens, &self.config),
            DraftSource::Cld { .. } => propose_cld(generated, pool, &self.config),
        }
    }

    /// Run the draft-and-verify loop. The pool starts from its built order on
    /// every call.
    pub fn decode(&self, prompt: &[TokenId], max_new_tokens: usize) -> (TokenSeq, DecodeStats) {
        let start = Instant::now();
        let (mut pool, topping) = match &self.source {
            DraftSource::Cld { pool, topping } => (pool.clone(), *topping),
            _ => (SpanPool::default(), false),
        };
        let mut stats = DecodeStats {
            cti_time: self.cti_time,
            ..DecodeStats::default()
        };
        let mut context = prompt.to_vec();
        let prompt_len = prompt.len();

        while context.len() - prompt_len < max_new_tokens {
            let proposal = self.propose(&pool, prompt, &context[prompt_len..]);
            let (emitted, active) = match proposal {
                None => (vec![self.model.next_token(&context)], None),
                Some(m) => {
                    stats.proposals_made += 1;
                    let out = verify_candidates(self.model, &context, &m.candidates);
                    let active = if out.accepted_count > 0 {
                        m.pool_index()
                    } else {
                        None
                    };
                    (out.emitted, active)
                }
            };
            stats.forward_passes += 1;

            let remaining = max_new_tokens - (context.len() - prompt_len);
            let mut kept = emitted.len().min(remaining);
            if let Some(eos) = emitted[..kept].iter().position(|&t| t == EOS) {
                kept = eos + 1;
            }
            // the last kept token is the one this pass would have produced anyway
            stats.tokens_emitted += kept as u64;
            stats.candidate_tokens_accepted += kept as u64 - 1;
            context.extend_from_slice(&emitted[..kept]);

            if context.last() == Some(&EOS) {
                break;
            }
            if let (true, Some(index)) = (topping, active) {
                pool.top(index).expect("proposal came from this pool");
            }
        }
        stats.wall_time = start.elapsed() + self.cti_time;
        (context.split_off(prompt_len), stats)
    }
}

pub fn assisted_decode(
    session: &DecodeSession<'_>,
    prompt: &[TokenId],
    max_new_tokens: usize,
) -> (TokenSeq, DecodeStats) {
    session.decode(prompt, max_new_tokens)
}
