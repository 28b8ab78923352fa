//! Deterministic toy backbones for exact acceptance accounting.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSeq, EOS, FIRST_CONTENT_ID};

/// A greedy autoregressive model that can score a candidate run in one pass.
pub trait Model: Send + Sync {
    /// `result[i]` is the greedy next token after `prefix ++ candidates[..i]`;
    /// the result has `candidates.len() + 1` entries.
    fn greedy_continuations(&self, prefix: &[TokenId], candidates: &[TokenId]) -> TokenSeq;

    fn next_token(&self, prefix: &[TokenId]) -> TokenId {
        self.greedy_continuations(prefix, &[])[0]
    }
}

/// Replays a fixed reference: the token after a prefix is the reference token
/// at `prefix.len() - prompt_len`, regardless of prefix content; EOS past the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayModel {
    reference: TokenSeq,
    prompt_len: usize,
}

impl ReplayModel {
    pub fn new(reference: TokenSeq, prompt_len: usize) -> Self {
        Self {
            reference,
            prompt_len,
        }
    }

    pub fn reference(&self) -> &[TokenId] {
        &self.reference
    }

    pub fn token_at(&self, position: usize) -> TokenId {
        self.reference.get(position).copied().unwrap_or(EOS)
    }
}

impl Model for ReplayModel {
    fn greedy_continuations(&self, prefix: &[TokenId], candidates: &[TokenId]) -> TokenSeq {
        let start = prefix.len().saturating_sub(self.prompt_len);
        (0..=candidates.len())
            .map(|i| self.token_at(start + i))
            .collect()
    }
}

/// [`ReplayModel`] with the token at selected output positions bumped to the
/// next content id (wrapping within the content range).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedReplay {
    inner: ReplayModel,
    positions: BTreeSet<usize>,
    vocab_size: usize,
}

impl PerturbedReplay {
    pub fn new(
        inner: ReplayModel,
        positions: impl IntoIterator<Item = usize>,
        vocab_size: usize,
    ) -> Self {
        assert!(
            vocab_size > FIRST_CONTENT_ID as usize,
            "vocabulary has no content ids"
        );
        Self {
            inner,
            positions: positions.into_iter().collect(),
            vocab_size,
        }
    }

    /// Every `stride`-th position of the reference, starting at `offset`.
    pub fn every(inner: ReplayModel, stride: usize, offset: usize, vocab_size: usize) -> Self {
        let n = inner.reference.len();
        let positions = (offset..n).step_by(stride.max(1));
        Self::new(inner, positions, vocab_size)
    }

    pub fn positions(&self) -> &BTreeSet<usize> {
        &self.positions
    }

    fn token_at(&self, position: usize) -> TokenId {
        let t = self.inner.token_at(position);
        if t >= FIRST_CONTENT_ID && self.positions.contains(&position) {
            let content = self.vocab_size as TokenId - FIRST_CONTENT_ID;
            FIRST_CONTENT_ID + (t - FIRST_CONTENT_ID + 1) % content
        } else {
            t
        }
    }
}

impl Model for PerturbedReplay {
    fn greedy_continuations(&self, prefix: &[TokenId], candidates: &[TokenId]) -> TokenSeq {
        let start = prefix.len().saturating_sub(self.inner.prompt_len);
        (0..=candidates.len())
            .map(|i| self.token_at(start + i))
            .collect()
    }
}

/// Count-based n-gram model with greedy decoding.
///
/// The next token is the most frequent continuation of the last `order - 1`
/// tokens (or of the whole prefix when it is shorter); ties go to the smaller
/// id and unseen contexts yield EOS.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramLM {
    order: usize,
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>>,
}

#[derive(Serialize, Deserialize)]
struct CountEntry {
    context: Vec<TokenId>,
    next: TokenId,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct CountsFile {
    order: usize,
    counts: Vec<CountEntry>,
}

impl NGramLM {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        Self {
            order,
            counts: HashMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Add one training sequence; the caller supplies any BOS/EOS framing.
    pub fn train(&mut self, seq: &[TokenId]) {
        let ctx_len = self.order - 1;
        for i in 0..seq.len() {
            let ctx = &seq[i.saturating_sub(ctx_len)..i];
            *self
                .counts
                .entry(ctx.to_vec())
                .or_default()
                .entry(seq[i])
                .or_default() += 1;
        }
    }

    pub fn trained_on<'a>(order: usize, seqs: impl IntoIterator<Item = &'a [TokenId]>) -> Self {
        let mut lm = Self::new(order);
        for s in seqs {
            lm.train(s);
        }
        lm
    }

    fn predict(&self, prefix: &[TokenId], extra: &[TokenId]) -> TokenId {
        let ctx_len = self.order - 1;
        let total = prefix.len() + extra.len();
        let start = total.saturating_sub(ctx_len);
        let ctx: Vec<TokenId> = prefix.iter().chain(extra).skip(start).copied().collect();
        self.counts
            .get(&ctx)
            .and_then(|next| {
                next.iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(&t, _)| t)
            })
            .unwrap_or(EOS)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut counts: Vec<CountEntry> = self
            .counts
            .iter()
            .flat_map(|(ctx, next)| {
                next.iter().map(move |(&t, &c)| CountEntry {
                    context: ctx.clone(),
                    next: t,
                    count: c,
                })
            })
            .collect();
        counts.sort_by(|a, b| a.context.cmp(&b.context).then(a.next.cmp(&b.next)));
        let file = CountsFile {
            order: self.order,
            counts,
        };
        let json = serde_json::to_string_pretty(&file).expect("counts serialize");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CountsFile = serde_json::from_str(&json).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: ".".into(),
            message: e.to_string(),
        })?;
        if file.order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let mut lm = Self::new(file.order);
        for e in file.counts {
            *lm.counts
                .entry(e.context)
                .or_default()
                .entry(e.next)
                .or_default() += e.count;
        }
        Ok(lm)
    }
}

impl Model for NGramLM {
    fn greedy_continuations(&self, prefix: &[TokenId], candidates: &[TokenId]) -> TokenSeq {
        (0..=candidates.len())
            .map(|i| self.predict(prefix, &candidates[..i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{ByteTokenizer, Tokenizer, BOS};

    const A: TokenId = 10;
    const B: TokenId = 11;
    const C: TokenId = 12;
    const X: TokenId = 40;

    #[test]
    fn replay_is_position_indexed() {
        let m = ReplayModel::new(vec![A, B, C], 0);
        assert_eq!(m.greedy_continuations(&[], &[A, X]), [A, B, C]);
        assert_eq!(m.greedy_continuations(&[X, X], &[]), [C]);
        assert_eq!(m.greedy_continuations(&[A, B, C], &[7]), [EOS, EOS]);
        let prompted = ReplayModel::new(vec![A, B, C], 2);
        assert_eq!(prompted.greedy_continuations(&[BOS, 5], &[A]), [A, B]);
    }

    #[test]
    fn perturbation_bumps_listed_positions() {
        let base = ReplayModel::new(vec![A, B, C], 0);
        let p = PerturbedReplay::new(base.clone(), [1], 258);
        assert_eq!(p.greedy_continuations(&[], &[A, B]), [A, B + 1, C]);
        assert_eq!(p.greedy_continuations(&[], &[A, B, C]), [A, B + 1, C, EOS]);
        let wrap = PerturbedReplay::new(ReplayModel::new(vec![257], 0), [0], 258);
        assert_eq!(wrap.next_token(&[]), 2);
        let every = PerturbedReplay::every(base, 2, 0, 258);
        assert_eq!(
            every.positions().iter().copied().collect::<Vec<_>>(),
            [0, 2]
        );
    }

    #[test]
    fn ngram_counts_by_hand() {
        // "ab ab ab": a->b three times, b->" " twice, " "->a twice, b->(end) never
        let text = ByteTokenizer.encode("ab ab ab").unwrap();
        let (a, b, sp) = (99, 100, 34);
        let lm = NGramLM::trained_on(2, [text.as_slice()]);
        assert_eq!(lm.next_token(&[a]), b);
        assert_eq!(lm.next_token(&[b]), sp);
        assert_eq!(lm.next_token(&[sp]), a);
        assert_eq!(lm.next_token(&[250]), EOS);
        let tri = NGramLM::trained_on(3, [text.as_slice()]);
        assert_eq!(tri.next_token(&[sp, a]), b);
    }

    #[test]
    fn ngram_tie_breaks_to_smallest_id() {
        let lm = NGramLM::trained_on(2, [&[5, 9][..], &[5, 7][..]]);
        assert_eq!(lm.next_token(&[5]), 7);
        // order 3 with short prefix uses the start-of-sequence context
        let lm = NGramLM::trained_on(3, [&[BOS, 4, 6, 8][..]]);
        assert_eq!(lm.next_token(&[BOS]), 4);
        assert_eq!(lm.next_token(&[BOS, 4]), 6);
        assert_eq!(lm.greedy_continuations(&[BOS], &[4, 6]), [4, 6, 8]);
    }

    #[test]
    fn ngram_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.json");
        let lm = NGramLM::trained_on(3, [&[BOS, 4, 6, 4, 6, 8, EOS][..]]);
        lm.save(&path).unwrap();
        assert_eq!(NGramLM::load(&path).unwrap(), lm);
    }
}
