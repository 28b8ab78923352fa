//! Exit criteria. Run with `cargo test -p cld-core --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cld_core::bench::{
    generate_pages, run_benchmark, Ablation, BenchConfig, BenchReport, ClassifierKind, GenSpec,
    GeneratedCorpus, Method, ModelKind, NoiseKinds,
};
use cld_core::cti::SpanLabeling;
use cld_core::cti::{classify_gold, classify_heuristic, span_f1, HeuristicConfig};
use cld_core::doc_model::{BBox, Label, Page, Span};
use cld_core::draft::{find_ngram_match, DraftConfig, PooledSpan, SpanPool};
use cld_core::engine::{greedy_decode, DecodeSession};
use cld_core::metrics::{bleu, edit_distance_norm, quality, token_f1};
use cld_core::models::ReplayModel;
use cld_core::tokenizer::{ByteTokenizer, TokenId, Tokenizer, BOS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAFT: DraftConfig = DraftConfig {
    max_ngram: 3,
    min_ngram: 1,
    num_candidates: 10,
};

fn verdict(name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn decoy_spec(pages: usize, seed: u64) -> GenSpec {
    GenSpec {
        pages,
        copyable: 0.8,
        decoys: 2,
        noise: NoiseKinds::ALL,
        seed,
        blocks_per_page: 6,
    }
}

struct DecoyRun {
    generated: GeneratedCorpus,
    full: BenchReport,
    ablated: BenchReport,
    elapsed: Duration,
}

fn decoy_run() -> &'static DecoyRun {
    static RUN: OnceLock<DecoyRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let generated = generate_pages(&decoy_spec(128, 2024)).unwrap();
        let corpus = generated.corpus();
        let full = run_benchmark(
            &corpus,
            &BenchConfig {
                methods: vec![Method::Scratch, Method::Mpld, Method::Cld],
                draft: DRAFT,
                seed: 2024,
                ..BenchConfig::default()
            },
        )
        .unwrap();
        let ablated = run_benchmark(
            &corpus,
            &BenchConfig {
                methods: vec![Method::Mpld, Method::Cld],
                ablation: Ablation {
                    cti: false,
                    topping: false,
                },
                draft: DRAFT,
                seed: 2024,
                ..BenchConfig::default()
            },
        )
        .unwrap();
        DecoyRun {
            generated,
            full,
            ablated,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn c01_losslessness() {
    let start = Instant::now();
    let corpus = generate_pages(&decoy_spec(200, 7)).unwrap().corpus();
    let mut decodes = 0usize;
    let mut unbalanced = 0usize;
    for model in [ModelKind::Replay, ModelKind::NGram, ModelKind::Perturbed] {
        for ablation in Ablation::ALL {
            let methods = if ablation == Ablation::default() {
                vec![Method::Pld, Method::Mpld, Method::Cld]
            } else {
                vec![Method::Cld]
            };
            let config = BenchConfig {
                model,
                methods,
                ablation,
                draft: DRAFT,
                seed: 7,
                ..BenchConfig::default()
            };
            // run_benchmark returns an error on any output that differs from greedy
            let report = run_benchmark(&corpus, &config)
                .unwrap_or_else(|e| panic!("{model} {ablation:?}: {e}"));
            for page in &report.pages {
                decodes += page.len();
                unbalanced += page
                    .iter()
                    .filter(|r| {
                        r.counts.tokens_emitted
                            != r.counts.forward_passes + r.counts.candidate_tokens_accepted
                    })
                    .count();
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "losslessness (200 pages x 3 models x 3 methods x 4 ablations)",
        decodes == 200 * 3 * 6 && unbalanced == 0 && elapsed < Duration::from_secs(60),
        format!("{decodes} assisted decodes token-identical to greedy in {elapsed:.1?}"),
    );
}

/// Linear prefix of a de Bruijn sequence: every 3-byte window is distinct.
fn de_bruijn(alphabet: &[u8], n: usize) -> Vec<u8> {
    fn db(t: usize, p: usize, n: usize, k: usize, a: &mut Vec<usize>, out: &mut Vec<usize>) {
        if t > n {
            if n.is_multiple_of(p) {
                out.extend_from_slice(&a[1..=p]);
            }
        } else {
            a[t] = a[t - p];
            db(t + 1, p, n, k, a, out);
            for j in a[t - p] + 1..k {
                a[t] = j;
                db(t + 1, t, n, k, a, out);
            }
        }
    }
    let mut a = vec![0; n + 1];
    let mut out = Vec::new();
    db(1, 1, n, alphabet.len(), &mut a, &mut out);
    out.into_iter().map(|i| alphabet[i]).collect()
}

#[test]
fn c02_analytic_speedup_bound() {
    let seq = de_bruijn(b"abcdefghijk", 3);
    let text = String::from_utf8(seq[..1100].to_vec()).unwrap();
    let windows: std::collections::HashSet<&[u8]> = text.as_bytes().windows(3).collect();
    assert_eq!(windows.len(), 1098, "every 3-gram unique");

    let page = Page {
        page_id: "analytic".into(),
        width: 612.0,
        height: 792.0,
        spans: vec![Span {
            id: 0,
            text: text.clone(),
            bbox: BBox::new(72.0, 300.0, 540.0, 320.0),
            order: 0,
            gold_label: Some(Label::Keep),
        }],
        reference_markdown: Some(text.clone()),
    };
    let tok = ByteTokenizer;
    let reference = tok.encode(&text).unwrap();
    let n = reference.len();
    assert_eq!(n, 1100);
    let model = ReplayModel::new(reference, 1);
    let (g_out, scratch) = greedy_decode(&model, &[BOS], n + 1);
    let session = DecodeSession::new(&tok, &model, DRAFT)
        .cld(&page, &SpanLabeling::all_keep(&page), true)
        .unwrap();
    let (out, stats) = session.decode(&[BOS], n + 1);

    // pass 1 has no query; passes 2..=100 emit 10 + 1 each (1090 tokens);
    // pass 101 accepts the last 10 and emits EOS as its bonus token
    let expected = 101u64;
    let bound = (n as u64 + 1).div_ceil(11);
    verdict(
        "analytic speedup bound (N=1100, K=10)",
        out == g_out
            && stats.forward_passes == expected
            && stats.forward_passes.abs_diff(bound) <= 1
            && scratch.forward_passes == n as u64 + 1
            && scratch.forward_passes >= 10 * stats.forward_passes,
        format!(
            "cld {} passes (expected {expected}, ceil((N+1)/11) = {bound}), scratch {}",
            stats.forward_passes, scratch.forward_passes
        ),
    );
}

#[test]
fn c03_cld_beats_mpld_on_decoy_corpus() {
    let run = decoy_run();
    let mpld: Vec<u64> = run
        .full
        .records(Method::Mpld)
        .map(|r| r.counts.forward_passes)
        .collect();
    let cld: Vec<u64> = run
        .full
        .records(Method::Cld)
        .map(|r| r.counts.forward_passes)
        .collect();
    assert_eq!(mpld.len(), 128);
    let wins = mpld.iter().zip(&cld).filter(|(m, c)| c < m).count();
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let (mm, cm) = (mean(&mpld), mean(&cld));
    verdict(
        "CLD vs mPLD ordering (128 decoy pages)",
        cm < mm && wins * 10 >= 9 * 128 && run.elapsed < Duration::from_secs(120),
        format!(
            "mean passes cld {cm:.2} < mpld {mm:.2}; cld wins {wins}/128 pages; {:.1?}",
            run.elapsed
        ),
    );
}

#[test]
fn c04_ablation_identity() {
    let run = decoy_run();
    let mpld: Vec<_> = run
        .ablated
        .records(Method::Mpld)
        .map(|r| r.counts)
        .collect();
    let cld: Vec<_> = run.ablated.records(Method::Cld).map(|r| r.counts).collect();
    let equal = mpld.iter().zip(&cld).filter(|(a, b)| a == b).count();
    verdict(
        "ablation identity cld(-cti, -topping) == mpld",
        mpld.len() == 128 && equal == 128,
        format!("{equal}/128 pages with identical per-page stats"),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn order(pool: &SpanPool) -> Vec<usize> {
    pool.spans.iter().map(|s| s.pool_index).collect()
}

fn is_rotation(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (a.is_empty()
            || (0..a.len()).any(|r| (0..a.len()).all(|i| a[(i + r) % a.len()] == b[i])))
}

#[test]
fn c05_topping_rotation_properties() {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for len in 1..=5usize {
        // every arrangement of the pool, since topping sees already-rotated pools
        for perm in permutations(len) {
            let pool = SpanPool {
                spans: perm
                    .iter()
                    .map(|&i| PooledSpan {
                        pool_index: i,
                        source_span_ids: vec![i as i64],
                        tokens: vec![i as TokenId + 2],
                    })
                    .collect(),
            };
            for &active in &perm {
                checked += 1;
                let mut topped = pool.clone();
                topped.top(active).unwrap();
                let before = order(&pool);
                let after = order(&topped);
                let mut sorted_before = before.clone();
                sorted_before.sort();
                let mut sorted_after = after.clone();
                sorted_after.sort();
                let pos = before.iter().position(|&x| x == active).unwrap();
                let expected: Vec<usize> = before[pos..]
                    .iter()
                    .chain(&before[..pos])
                    .copied()
                    .collect();
                let mut head = topped.clone();
                head.top(after[0]).unwrap();
                if sorted_before != sorted_after
                    || !is_rotation(&before, &after)
                    || after != expected
                    || head != topped
                {
                    failures.push((before.clone(), active));
                }
            }
            // walking the head through the whole cycle returns the original order
            let mut walk = pool.clone();
            for step in 1..=len {
                let next = order(&pool)[step % len];
                walk.top(next).unwrap();
            }
            if walk != pool {
                failures.push((order(&pool), usize::MAX));
            }
        }
    }
    verdict(
        "topping rotation properties (all pools <= 5)",
        failures.is_empty(),
        format!(
            "{checked} (pool, active) pairs checked, {} failures",
            failures.len()
        ),
    );
}

fn brute_force_match(
    query: &[TokenId],
    source: &[TokenId],
    c: &DraftConfig,
) -> Option<(usize, usize, Vec<TokenId>)> {
    let mut best = None;
    for n in c.min_ngram..=c.max_ngram.min(query.len()) {
        let suffix = &query[query.len() - n..];
        for p in 0..source.len() {
            if p + n < source.len() && &source[p..p + n] == suffix {
                let end = (p + n + c.num_candidates).min(source.len());
                best = Some((n, p, source[p + n..end].to_vec()));
                break;
            }
        }
    }
    best
}

#[test]
fn c06_ngram_match_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    let mut matched = 0;
    for _ in 0..10_000 {
        let max_ngram = rng.gen_range(1..=4);
        let c = DraftConfig {
            max_ngram,
            min_ngram: rng.gen_range(1..=max_ngram),
            num_candidates: rng.gen_range(1..=10),
        };
        let ql = rng.gen_range(0..=64);
        let sl = rng.gen_range(0..=64);
        let query: Vec<TokenId> = (0..ql).map(|_| rng.gen_range(2..10)).collect();
        let source: Vec<TokenId> = (0..sl).map(|_| rng.gen_range(2..10)).collect();
        let got = find_ngram_match(&query, &source, &c)
            .map(|m| (m.ngram_len, m.match_start, m.candidates));
        let want = brute_force_match(&query, &source, &c);
        matched += usize::from(want.is_some());
        agree += usize::from(got == want);
    }
    verdict(
        "n-gram match oracle equivalence (10,000 instances)",
        agree == 10_000,
        format!("{agree}/10000 agree ({matched} with a match)"),
    );
}

#[test]
fn c07_cti_heuristic_sanity() {
    let run = decoy_run();
    let mut pred = BTreeMap::new();
    let mut gold = BTreeMap::new();
    let (mut numbers, mut numbers_deleted) = (0, 0);
    for (p, g) in run.generated.pages.iter().enumerate() {
        let l = classify_heuristic(&g.page, &HeuristicConfig::default());
        let gl = classify_gold(&g.page).unwrap();
        for (&id, &lab) in &l.0 {
            pred.insert(p as i64 * 10_000 + id, lab);
        }
        for (&id, &lab) in &gl.0 {
            gold.insert(p as i64 * 10_000 + id, lab);
        }
        if let Some(id) = g.page_number_span_id {
            numbers += 1;
            numbers_deleted += usize::from(l.get(id) == Some(Label::Delete));
        }
    }
    let score = span_f1(&SpanLabeling(pred), &SpanLabeling(gold)).unwrap();
    verdict(
        "CTI heuristic sanity",
        score.f1 >= 0.95 && numbers == 128 && numbers_deleted == numbers,
        format!(
            "span F1 {:.4} (P {:.4}, R {:.4}); page numbers deleted {numbers_deleted}/{numbers}",
            score.f1, score.precision, score.recall
        ),
    );
}

#[test]
fn c08_metrics_identities() {
    let same = "The quick brown fox\n\n$$\\alpha$$ jumps.";
    let identity = edit_distance_norm(same, same) == 0.0
        && bleu(same, same) == 1.0
        && token_f1(same, same) == 1.0;
    let kitten = (edit_distance_norm("kitten", "sitting") - 3.0 / 7.0).abs() <= 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet: Vec<char> = "ab c\nαβ".chars().collect();
    let random = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(0..40);
        (0..n)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect()
    };
    let mut in_bounds = 0;
    for _ in 0..1000 {
        let (a, b) = (random(&mut rng), random(&mut rng));
        let q = quality(&a, &b);
        in_bounds += usize::from(
            [q.edit_dist, q.bleu, q.f1]
                .iter()
                .all(|v| (0.0..=1.0).contains(v)),
        );
    }
    verdict(
        "metrics identities",
        identity && kitten && in_bounds == 1000,
        format!(
            "identity {identity}, kitten/sitting = 3/7 {kitten}, {in_bounds}/1000 pairs in [0,1]"
        ),
    );
}

#[test]
fn c09_stats_ledger() {
    let run = decoy_run();
    let records: Vec<_> = run
        .full
        .pages
        .iter()
        .chain(&run.ablated.pages)
        .flatten()
        .collect();
    let balanced = records
        .iter()
        .filter(|r| {
            r.counts.tokens_emitted == r.counts.forward_passes + r.counts.candidate_tokens_accepted
        })
        .count();
    verdict(
        "stats ledger tokens_emitted == forward_passes + accepted",
        balanced == records.len() && !records.is_empty(),
        format!("{balanced}/{} benchmark records balanced", records.len()),
    );
}

#[test]
fn gold_classifier_run_matches_heuristic_on_generated_pages() {
    let run = decoy_run();
    let corpus = run.generated.corpus();
    let gold = run_benchmark(
        &corpus,
        &BenchConfig {
            methods: vec![Method::Cld],
            classifier: ClassifierKind::Gold,
            draft: DRAFT,
            ..BenchConfig::default()
        },
    )
    .unwrap();
    let a: Vec<_> = gold.records(Method::Cld).map(|r| r.counts).collect();
    let b: Vec<_> = run.full.records(Method::Cld).map(|r| r.counts).collect();
    assert_eq!(a, b);
}
