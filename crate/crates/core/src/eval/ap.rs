use crate::error::{Error, Result};

/// Indices sorted by score descending; equal scores keep input order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Non-interpolated average precision: mean precision at the rank of each positive.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::Dimension {
            context: "average precision scores/labels",
            left: vec![scores.len()],
            right: vec![positives.len()],
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("NaN score in ranked list"));
    }
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return Err(Error::UndefinedAp("no positives in ranked list".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

/// Expected AP of a uniformly random ranking of `n` items with one positive: `H_n / n`.
pub fn single_positive_chance(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}
