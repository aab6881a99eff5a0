//! Captioning metrics: clipped-precision BLEU, LCS-based ROUGE-L,
//! exact-match METEOR, and consensus CIDEr-D.

use std::collections::{BTreeMap, HashMap};

use super::tokenize::TokenSeq;
use super::MetricsError;

/// ROUGE-L recall weighting.
const ROUGE_BETA: f64 = 1.2;
/// CIDEr-D Gaussian length-penalty width.
const CIDER_SIGMA: f64 = 6.0;
/// Highest n-gram order used by BLEU and CIDEr-D.
pub const MAX_NGRAM: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn check_refs(references: &[TokenSeq]) -> Result<(), MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    Ok(())
}

/// Modified n-gram precisions p_1..p_max_n: candidate counts clipped by the
/// maximum count in any single reference. Orders with no candidate n-grams
/// score 0.
pub fn modified_precisions(
    candidate: &TokenSeq,
    references: &[TokenSeq],
    max_n: usize,
) -> Result<Vec<f64>, MetricsError> {
    check_refs(references)?;
    if !(1..=MAX_NGRAM).contains(&max_n) {
        return Err(MetricsError::InvalidMaxN(max_n));
    }
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cand = ngram_counts(candidate.tokens(), n);
        let total: usize = cand.values().sum();
        if total == 0 {
            out.push(0.0);
            continue;
        }
        let ref_counts: Vec<HashMap<&[String], usize>> = references
            .iter()
            .map(|r| ngram_counts(r.tokens(), n))
            .collect();
        let mut clipped = 0usize;
        for (gram, &count) in &cand {
            let best = ref_counts
                .iter()
                .map(|rc| rc.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(best);
        }
        out.push(clipped as f64 / total as f64);
    }
    Ok(out)
}

/// Effective reference length: the closest to the candidate length, ties
/// resolved toward the shorter reference.
fn effective_ref_len(candidate_len: usize, references: &[TokenSeq]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - candidate_len as i64).abs(), l))
        .expect("at least one reference")
}

/// BLEU-1..BLEU-max_n with uniform weights and the brevity penalty
/// min(1, e^(1 - r/c)). Any zero precision at order <= n zeroes BLEU-n; an
/// empty candidate scores all zeros.
pub fn bleu(
    candidate: &TokenSeq,
    references: &[TokenSeq],
    max_n: usize,
) -> Result<Vec<f64>, MetricsError> {
    check_refs(references)?;
    if !(1..=MAX_NGRAM).contains(&max_n) {
        return Err(MetricsError::InvalidMaxN(max_n));
    }
    if candidate.is_empty() {
        return Ok(vec![0.0; max_n]);
    }
    let precisions = modified_precisions(candidate, references, max_n)?;
    let c = candidate.len();
    let r = effective_ref_len(c, references);
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        if precisions[..n].contains(&0.0) {
            out.push(0.0);
        } else {
            let log_mean: f64 =
                precisions[..n].iter().map(|p| p.ln()).sum::<f64>() / n as f64;
            out.push(bp * log_mean.exp());
        }
    }
    Ok(out)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: LCS F-measure with beta = 1.2, maximized over references.
pub fn rouge_l(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<f64, MetricsError> {
    check_refs(references)?;
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    let mut best = 0.0f64;
    for reference in references {
        if reference.is_empty() {
            continue;
        }
        let lcs = lcs_len(candidate.tokens(), reference.tokens()) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / candidate.len() as f64;
        let r = lcs / reference.len() as f64;
        let f = (1.0 + beta2) * p * r / (r + beta2 * p);
        best = best.max(f);
    }
    Ok(best)
}

/// Exact-match METEOR: leftmost unigram alignment, Fmean = 10PR/(R+9P),
/// fragmentation penalty 0.5 (chunks/matches)^3, maximized over references.
pub fn meteor(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<f64, MetricsError> {
    check_refs(references)?;
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for reference in references {
        if reference.is_empty() {
            continue;
        }
        // each candidate token takes the leftmost unmatched identical
        // reference token
        let mut taken = vec![false; reference.len()];
        let mut alignment: Vec<(usize, usize)> = Vec::new();
        for (ci, token) in candidate.tokens().iter().enumerate() {
            let found = reference
                .tokens()
                .iter()
                .enumerate()
                .find(|&(ri, t)| !taken[ri] && t == token)
                .map(|(ri, _)| ri);
            if let Some(ri) = found {
                taken[ri] = true;
                alignment.push((ci, ri));
            }
        }
        let matches = alignment.len() as f64;
        if matches == 0.0 {
            continue;
        }
        let p = matches / candidate.len() as f64;
        let r = matches / reference.len() as f64;
        let fmean = 10.0 * p * r / (r + 9.0 * p);
        let mut chunks = 0usize;
        for (k, &(ci, ri)) in alignment.iter().enumerate() {
            let contiguous = k > 0 && {
                let (pc, pr) = alignment[k - 1];
                ci == pc + 1 && ri == pr + 1
            };
            if !contiguous {
                chunks += 1;
            }
        }
        let penalty = 0.5 * (chunks as f64 / matches).powi(3);
        best = best.max(fmean * (1.0 - penalty));
    }
    Ok(best)
}

/// CIDEr-D over a corpus of candidates and references sharing the same id
/// set. For each order n = 1..4: clipped TF-IDF cosine against each
/// reference, scaled by the Gaussian length penalty, averaged over
/// references, times 10; the per-image score is the mean over orders and the
/// corpus score the mean over images. IDF uses
/// log(|I| / max(1, #images whose references contain the gram)).
pub fn cider_d(
    candidates: &BTreeMap<String, TokenSeq>,
    references: &BTreeMap<String, Vec<TokenSeq>>,
) -> Result<f64, MetricsError> {
    if candidates.keys().ne(references.keys()) {
        return Err(MetricsError::IdSetMismatch);
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for refs in references.values() {
        check_refs(refs)?;
    }
    let corpus_size = references.len() as f64;

    // document frequency per order: number of images whose refs contain g
    let mut doc_freq: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); MAX_NGRAM];
    for refs in references.values() {
        for n in 1..=MAX_NGRAM {
            let mut seen: HashMap<&[String], ()> = HashMap::new();
            for r in refs {
                for gram in ngram_counts(r.tokens(), n).keys() {
                    seen.entry(gram).or_insert(());
                }
            }
            for (gram, _) in seen {
                *doc_freq[n - 1].entry(gram.to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }
    let idf = |n: usize, gram: &[String]| -> f64 {
        let df = doc_freq[n - 1].get(gram).copied().unwrap_or(0.0).max(1.0);
        (corpus_size / df).ln()
    };

    // tf-idf vector and norm for one sequence at one order
    let vectorize = |seq: &TokenSeq, n: usize| -> (HashMap<Vec<String>, f64>, f64) {
        let mut vec = HashMap::new();
        let mut norm = 0.0f64;
        for (gram, count) in ngram_counts(seq.tokens(), n) {
            let w = count as f64 * idf(n, gram);
            norm += w * w;
            vec.insert(gram.to_vec(), w);
        }
        (vec, norm.sqrt())
    };

    let mut corpus_total = 0.0f64;
    for (id, cand) in candidates {
        let refs = &references[id];
        let mut per_n_sum = 0.0f64;
        for n in 1..=MAX_NGRAM {
            let (cv, cnorm) = vectorize(cand, n);
            let mut ref_sum = 0.0f64;
            for r in refs {
                let (rv, rnorm) = vectorize(r, n);
                if cnorm == 0.0 || rnorm == 0.0 {
                    continue;
                }
                let mut dot = 0.0f64;
                for (gram, &cw) in &cv {
                    if let Some(&rw) = rv.get(gram) {
                        dot += cw.min(rw) * rw;
                    }
                }
                let delta = cand.len() as f64 - r.len() as f64;
                let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
                ref_sum += dot / (cnorm * rnorm) * penalty;
            }
            per_n_sum += ref_sum / refs.len() as f64 * 10.0;
        }
        corpus_total += per_n_sum / MAX_NGRAM as f64;
    }
    Ok(corpus_total / corpus_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize::tokenize;

    fn seqs(texts: &[&str]) -> Vec<TokenSeq> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn bleu_identity_is_one() {
        let cand = tokenize("a road was built across the field");
        let scores = bleu(&cand, std::slice::from_ref(&cand), 4).unwrap();
        for s in scores {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_clips_repeated_unigrams() {
        let cand = tokenize("the the the the");
        let refs = seqs(&["the cat is on the mat"]);
        let p = modified_precisions(&cand, &refs, 4).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12, "p1 = {}", p[0]);
    }

    #[test]
    fn bleu_brevity_penalty_analytic_case() {
        // candidate of 3 tokens, reference of 6, perfect unigram precision
        let cand = tokenize("a b c");
        let refs = seqs(&["a b c d e f"]);
        let scores = bleu(&cand, &refs, 1).unwrap();
        let expected = (1.0f64 - 2.0).exp(); // e^(1 - 6/3)
        assert!((scores[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_candidate_scores_zero() {
        let scores = bleu(&tokenize(""), &seqs(&["a b"]), 4).unwrap();
        assert_eq!(scores, vec![0.0; 4]);
    }

    #[test]
    fn bleu_zero_precision_zeroes_higher_orders() {
        let cand = tokenize("x q");
        let refs = seqs(&["x z q"]);
        // bigram [x q] absent from the reference
        let scores = bleu(&cand, &refs, 2).unwrap();
        assert!(scores[0] > 0.0);
        assert_eq!(scores[1], 0.0);
    }

    #[test]
    fn bleu_rejects_bad_arguments() {
        assert!(matches!(
            bleu(&tokenize("a"), &[], 4),
            Err(MetricsError::NoReferences)
        ));
        assert!(matches!(
            bleu(&tokenize("a"), &seqs(&["a"]), 5),
            Err(MetricsError::InvalidMaxN(5))
        ));
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        let cand = tokenize("a b c d");
        assert!((rouge_l(&cand, std::slice::from_ref(&cand)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(&cand, &seqs(&["x y z"])).unwrap(), 0.0);
    }

    #[test]
    fn rouge_hand_lcs_case() {
        let cand = tokenize("police kill the gunman");
        let refs = seqs(&["police killed the gunman"]);
        // LCS = 3, P = R = 3/4, beta cancels when P = R
        assert!((rouge_l(&cand, &refs).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn meteor_analytic_cases() {
        let cand = tokenize("a b c d");
        // identical 4 tokens: Fmean 1, one chunk, penalty 0.5 * (1/4)^3
        let score = meteor(&cand, std::slice::from_ref(&cand)).unwrap();
        assert!((score - 0.9921875).abs() < 1e-12);
        // single identical token: penalty 0.5
        let one = tokenize("road");
        assert!((meteor(&one, std::slice::from_ref(&one)).unwrap() - 0.5).abs() < 1e-12);
        // no common tokens
        assert_eq!(meteor(&cand, &seqs(&["x y z"])).unwrap(), 0.0);
    }

    #[test]
    fn meteor_counts_chunks() {
        // matches a..d in a different arrangement: 2 chunks of 2
        let cand = tokenize("a b c d");
        let refs = seqs(&["c d a b"]);
        let score = meteor(&cand, &refs).unwrap();
        let penalty = 0.5 * (2.0f64 / 4.0).powi(3);
        assert!((score - (1.0 - penalty)).abs() < 1e-12);
    }

    #[test]
    fn cider_single_image_idf_degeneracy() {
        let cand = tokenize("a road was built across the field");
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        cands.insert("p1".to_string(), cand.clone());
        refs.insert("p1".to_string(), vec![cand]);
        let score = cider_d(&cands, &refs).unwrap();
        assert!(score.abs() < 1e-12, "score = {score}");
    }

    #[test]
    fn cider_two_disjoint_images_score_ten() {
        let a = tokenize("a new road crosses the green field");
        let b = tokenize("several tall buildings replaced sparse woodland today");
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        cands.insert("p1".to_string(), a.clone());
        cands.insert("p2".to_string(), b.clone());
        refs.insert("p1".to_string(), vec![a]);
        refs.insert("p2".to_string(), vec![b]);
        let score = cider_d(&cands, &refs).unwrap();
        assert!((score - 10.0).abs() < 1e-9, "score = {score}");
    }

    #[test]
    fn cider_empty_candidate_contributes_zero() {
        let a = tokenize("a new road crosses the green field");
        let b = tokenize("several tall buildings replaced sparse woodland today");
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        cands.insert("p1".to_string(), a.clone());
        cands.insert("p2".to_string(), tokenize(""));
        refs.insert("p1".to_string(), vec![a]);
        refs.insert("p2".to_string(), vec![b]);
        let score = cider_d(&cands, &refs).unwrap();
        assert!((score - 5.0).abs() < 1e-9, "p1 scores 10, p2 scores 0");
    }

    #[test]
    fn cider_rejects_mismatched_ids() {
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        cands.insert("p1".to_string(), tokenize("a"));
        refs.insert("p2".to_string(), vec![tokenize("a")]);
        assert!(matches!(
            cider_d(&cands, &refs),
            Err(MetricsError::IdSetMismatch)
        ));
    }

    #[test]
    fn reference_order_never_matters() {
        let cand = tokenize("a road and two buildings appeared near the hill");
        let refs = seqs(&[
            "a road appeared near the hill",
            "two buildings were constructed",
            "the hill area gained a road and buildings",
        ]);
        let mut reversed = refs.clone();
        reversed.reverse();
        assert_eq!(bleu(&cand, &refs, 4).unwrap(), bleu(&cand, &reversed, 4).unwrap());
        assert_eq!(rouge_l(&cand, &refs).unwrap(), rouge_l(&cand, &reversed).unwrap());
        assert_eq!(meteor(&cand, &refs).unwrap(), meteor(&cand, &reversed).unwrap());
    }
}
