//! Text to token mapping shared by models and draft sources.
//!
//! Ids 0 and 1 are reserved for BOS and EOS; content ids start at 2.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const FIRST_CONTENT_ID: TokenId = 2;

pub trait Tokenizer: Send + Sync {
    /// Encode text without inserting BOS or EOS.
    fn encode(&self, text: &str) -> Result<TokenSeq>;

    /// Decode tokens, skipping BOS and EOS.
    fn decode(&self, tokens: &[TokenId]) -> Result<String>;

    /// Total number of ids, reserved ones included.
    fn vocab_size(&self) -> usize;
}

/// Byte `b` maps to id `b + 2`. Encodes any string.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Result<TokenSeq> {
        Ok(text
            .bytes()
            .map(|b| TokenId::from(b) + FIRST_CONTENT_ID)
            .collect())
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<String> {
        let bytes = self.decode_bytes(tokens)?;
        String::from_utf8(bytes).map_err(|e| {
            let position = e.utf8_error().valid_up_to();
            Error::UnknownToken {
                position,
                id: tokens
                    .iter()
                    .filter(|&&t| t != BOS && t != EOS)
                    .nth(position)
                    .copied()
                    .unwrap_or(EOS),
            }
        })
    }

    fn vocab_size(&self) -> usize {
        256 + FIRST_CONTENT_ID as usize
    }
}

impl ByteTokenizer {
    /// Raw bytes of a token run; BOS and EOS are dropped.
    pub fn decode_bytes(&self, tokens: &[TokenId]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(tokens.len());
        for (position, &id) in tokens.iter().enumerate() {
            match id {
                BOS | EOS => {}
                2..=257 => out.push((id - FIRST_CONTENT_ID) as u8),
                _ => return Err(Error::UnknownToken { position, id }),
            }
        }
        Ok(out)
    }
}

/// Splits text into maximal runs of whitespace and non-whitespace; each run
/// is one token. The vocabulary is built from a corpus and stored as a JSON
/// array where entry `i` has id `i + 2`.
#[derive(Debug, Clone, Default)]
pub struct WhitespaceTokenizer {
    pieces: Vec<String>,
    ids: HashMap<String, TokenId>,
}

fn split_runs(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let ws = first.is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != ws)
            .map_or(rest.len(), |(i, _)| i);
        let (piece, tail) = rest.split_at(end);
        rest = tail;
        Some(piece)
    })
}

impl WhitespaceTokenizer {
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, piece) in pieces.iter().enumerate() {
            if piece.is_empty() {
                return Err(Error::Config("empty vocabulary entry".into()));
            }
            if ids
                .insert(piece.clone(), i as TokenId + FIRST_CONTENT_ID)
                .is_some()
            {
                return Err(Error::Config(format!(
                    "duplicate vocabulary entry {piece:?}"
                )));
            }
        }
        Ok(Self { pieces, ids })
    }

    /// Vocabulary of every run found in `texts`, in first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut pieces = Vec::new();
        let mut ids = HashMap::new();
        for text in texts {
            for piece in split_runs(text) {
                if !ids.contains_key(piece) {
                    ids.insert(piece.to_owned(), pieces.len() as TokenId + FIRST_CONTENT_ID);
                    pieces.push(piece.to_owned());
                }
            }
        }
        Self { pieces, ids }
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pieces: Vec<String> = serde_json::from_str(&json).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: ".".into(),
            message: e.to_string(),
        })?;
        Self::from_pieces(pieces)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.pieces).expect("strings serialize");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn encode(&self, text: &str) -> Result<TokenSeq> {
        split_runs(text)
            .map(|piece| {
                self.ids
                    .get(piece)
                    .copied()
                    .ok_or_else(|| Error::UnknownPiece {
                        piece: piece.to_owned(),
                    })
            })
            .collect()
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for (position, &id) in tokens.iter().enumerate() {
            match id {
                BOS | EOS => {}
                _ => {
                    let piece = (id as usize)
                        .checked_sub(FIRST_CONTENT_ID as usize)
                        .and_then(|i| self.pieces.get(i))
                        .ok_or(Error::UnknownToken { position, id })?;
                    out.push_str(piece);
                }
            }
        }
        Ok(out)
    }

    fn vocab_size(&self) -> usize {
        self.pieces.len() + FIRST_CONTENT_ID as usize
    }
}

/// Strip a leading BOS and everything from the first EOS on.
pub fn content(tokens: &[TokenId]) -> &[TokenId] {
    let start = usize::from(tokens.first() == Some(&BOS));
    let end = tokens
        .iter()
        .position(|&t| t == EOS)
        .unwrap_or(tokens.len());
    &tokens[start..end.max(start)]
}
