//! Conversion quality scores: normalized edit distance, BLEU-4, token F1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub edit_dist: f64,
    pub bleu: f64,
    pub f1: f64,
}

pub fn quality(pred: &str, reference: &str) -> QualityScores {
    QualityScores {
        edit_dist: edit_distance_norm(pred, reference),
        bleu: bleu(pred, reference),
        f1: token_f1(pred, reference),
    }
}

/// Levenshtein distance over chars divided by the longer length.
pub fn edit_distance_norm(pred: &str, reference: &str) -> f64 {
    let longest = pred.chars().count().max(reference.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(pred, reference) as f64 / longest as f64
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// BLEU-4 on whitespace tokens with uniform weights and a brevity penalty.
/// An order with zero clipped matches scores `1 / (total + 1)`.
pub fn bleu(pred: &str, reference: &str) -> f64 {
    let hyp: Vec<&str> = pred.split_whitespace().collect();
    let refs: Vec<&str> = reference.split_whitespace().collect();
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0f64;
    for n in 1..=4 {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&refs, n);
        let total: usize = h.values().sum();
        let matched: usize = h
            .iter()
            .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln() / 4.0;
    }
    let (c, r) = (hyp.len() as f64, refs.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Bag-of-words F1 over whitespace tokens (multiset overlap).
pub fn token_f1(pred: &str, reference: &str) -> f64 {
    let mut bag: HashMap<&str, usize> = HashMap::new();
    let mut ref_len = 0usize;
    for t in reference.split_whitespace() {
        *bag.entry(t).or_insert(0) += 1;
        ref_len += 1;
    }
    let mut pred_len = 0usize;
    let mut overlap = 0usize;
    for t in pred.split_whitespace() {
        pred_len += 1;
        if let Some(c) = bag.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if pred_len == 0 && ref_len == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred_len as f64;
    let r = overlap as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}
