//! Corpus BLEU, token accuracy and per-length breakdowns.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for BLEU; they add across sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence<T: Hash + Eq>(hyp: &[T], reference: &[T]) -> Self {
        let mut s = Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Self::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                s.matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                s.totals[n - 1] += count;
            }
        }
        s
    }

    pub fn add(&mut self, other: &Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Modified n-gram precisions; 0 where the hypothesis has no n-grams.
    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        })
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// Unsmoothed BLEU: zero as soon as any order has no match.
    pub fn bleu(&self) -> f64 {
        let p = self.precisions();
        if p.iter().any(|&x| x == 0.0) {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / MAX_ORDER as f64;
        self.brevity_penalty() * log_mean.exp()
    }
}

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Contract(format!("{a} hypotheses for {b} references")))
    }
}

pub fn corpus_stats<T: Hash + Eq, H: AsRef<[T]>, R: AsRef<[T]>>(hyps: &[H], refs: &[R]) -> Result<BleuStats> {
    same_len(hyps.len(), refs.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::sentence(h.as_ref(), r.as_ref()));
    }
    Ok(total)
}

/// 4-gram corpus BLEU with brevity penalty, in `[0, 1]`.
pub fn bleu_corpus<T: Hash + Eq, H: AsRef<[T]>, R: AsRef<[T]>>(hyps: &[H], refs: &[R]) -> Result<f64> {
    Ok(corpus_stats(hyps, refs)?.bleu())
}

/// Position-wise matches and reference length of one pair.
pub fn token_matches<T: PartialEq>(hyp: &[T], reference: &[T]) -> (usize, usize) {
    let m = hyp.iter().zip(reference).filter(|(a, b)| a == b).count();
    (m, reference.len())
}

/// Position-wise matches over the total reference length.
pub fn token_accuracy<T: PartialEq, H: AsRef<[T]>, R: AsRef<[T]>>(hyps: &[H], refs: &[R]) -> Result<f64> {
    same_len(hyps.len(), refs.len())?;
    let (mut m, mut n) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let (a, b) = token_matches(h.as_ref(), r.as_ref());
        m += a;
        n += b;
    }
    Ok(if n == 0 { 0.0 } else { m as f64 / n as f64 })
}

/// Per-sentence ingredients of the corpus scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SentenceScore {
    pub bleu: BleuStats,
    pub matches: usize,
    pub ref_len: usize,
}

impl SentenceScore {
    pub fn new<T: Hash + Eq>(hyp: &[T], reference: &[T]) -> Self {
        let (matches, ref_len) = token_matches(hyp, reference);
        Self {
            bleu: BleuStats::sentence(hyp, reference),
            matches,
            ref_len,
        }
    }
}

/// Scores of the sentences whose source length lies in `[lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketRow {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub bleu: Option<f64>,
    pub token_acc: Option<f64>,
}

pub fn length_bucket_report(
    scores: &[SentenceScore],
    source_lengths: &[usize],
    edges: &[usize],
) -> Result<Vec<BucketRow>> {
    same_len(scores.len(), source_lengths.len())?;
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract(format!("bucket edges must be strictly increasing, got {edges:?}")));
    }
    let mut acc = vec![(0usize, BleuStats::default(), 0usize, 0usize); edges.len() - 1];
    for (s, &len) in scores.iter().zip(source_lengths) {
        // the last edge <= len gives the bucket
        let k = edges.partition_point(|&e| e <= len);
        if k == 0 || k == edges.len() {
            return Err(Error::Contract(format!(
                "source length {len} outside [{}, {})",
                edges[0],
                edges[edges.len() - 1]
            )));
        }
        let a = &mut acc[k - 1];
        a.0 += 1;
        a.1.add(&s.bleu);
        a.2 += s.matches;
        a.3 += s.ref_len;
    }
    Ok(edges
        .windows(2)
        .zip(acc)
        .map(|(w, (count, stats, m, n))| BucketRow {
            lo: w[0],
            hi: w[1],
            count,
            bleu: (count > 0).then(|| stats.bleu()),
            token_acc: (count > 0 && n > 0).then(|| m as f64 / n as f64),
        })
        .collect())
}

/// CSV with an empty field where a bucket has no score.
pub fn bucket_csv(rows: &[BucketRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut s = String::from("bucket_lo,bucket_hi,count,bleu,token_acc\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.lo, r.hi, r.count, opt(r.bleu), opt(r.token_acc));
    }
    s
}
