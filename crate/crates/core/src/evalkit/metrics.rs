use crate::error::{Error, Result};

fn check_cutoff(ranked: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Param("cutoff K must be at least 1".into()));
    }
    if k > ranked.len() {
        return Err(Error::Param(format!("cutoff K = {k} exceeds ranked list length {}", ranked.len())));
    }
    Ok(())
}

/// `|top-K ∩ relevant| / K`.
pub fn precision_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_cutoff(ranked, k)?;
    let hits = ranked[..k].iter().filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Binary-relevance NDCG with gain `1 / log2(rank + 1)`. An empty relevance
/// set scores 0.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_cutoff(ranked, k)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked[..k]
        .iter()
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| gain(r + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(gain).sum();
    Ok(dcg / ideal)
}

/// Mean of precision@rank over the ranks holding a relevant item; 0 when
/// nothing relevant is ranked.
pub fn average_precision(ranked: &[usize], relevant: &[usize]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, i) in ranked.iter().enumerate() {
        if relevant.contains(i) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(rankings: &[Vec<usize>], relevants: &[Vec<usize>]) -> Result<f64> {
    if rankings.len() != relevants.len() {
        return Err(Error::shape("relevance sets per ranking", rankings.len(), relevants.len()));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = rankings
        .iter()
        .zip(relevants)
        .map(|(r, rel)| average_precision(r, rel))
        .sum();
    Ok(sum / rankings.len() as f64)
}
