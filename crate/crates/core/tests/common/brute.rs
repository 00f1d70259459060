//! Brute-force ranking metrics written from the definitions.

use std::collections::BTreeSet;

pub fn brute_precision(ranked: &[usize], rel: &BTreeSet<usize>, k: usize) -> f64 {
    let top: BTreeSet<usize> = ranked.iter().take(k).copied().collect();
    top.intersection(rel).count() as f64 / k as f64
}

fn dcg(gains: &[f64], k: usize) -> f64 {
    gains.iter().take(k).enumerate().map(|(i, g)| g / (i as f64 + 2.0).log2()).sum()
}

/// Ideal DCG from the relevance labels of the ranked list sorted descending.
pub fn brute_ndcg(ranked: &[usize], rel: &BTreeSet<usize>, k: usize) -> f64 {
    let gains: Vec<f64> = ranked.iter().map(|i| if rel.contains(i) { 1.0 } else { 0.0 }).collect();
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let best = dcg(&ideal, k);
    if best == 0.0 {
        0.0
    } else {
        dcg(&gains, k) / best
    }
}

pub fn brute_ap(ranked: &[usize], rel: &BTreeSet<usize>) -> f64 {
    let hits: Vec<usize> = (1..=ranked.len()).filter(|&n| rel.contains(&ranked[n - 1])).collect();
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().map(|&n| brute_precision(ranked, rel, n)).sum::<f64>() / hits.len() as f64
}
