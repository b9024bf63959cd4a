//! Ranking metrics.

use std::collections::BTreeSet;

/// 1 when any relevant id appears in the first `k` results; `None` when
/// nothing is relevant.
pub fn success_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Option<f64> {
    assert!(k >= 1, "k must be positive");
    if relevant.is_empty() {
        return None;
    }
    let hit = ranked.iter().take(k).any(|d| relevant.contains(d));
    Some(if hit { 1.0 } else { 0.0 })
}

/// Fraction of relevant ids found in the first `k` results; `None` when
/// nothing is relevant.
pub fn recall_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Option<f64> {
    assert!(k >= 1, "k must be positive");
    if relevant.is_empty() {
        return None;
    }
    let found = ranked.iter().take(k).filter(|d| relevant.contains(*d)).count();
    Some(found as f64 / relevant.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hit_at_rank_one() {
        assert_eq!(success_at_k(&ids(&["a", "b"]), &set(&["a"]), 5), Some(1.0));
        assert_eq!(success_at_k(&ids(&["b", "c"]), &set(&["a"]), 5), Some(0.0));
    }

    #[test]
    fn half_recall() {
        let ranked = ids(&["a", "x", "b", "y"]);
        assert_eq!(recall_at_k(&ranked, &set(&["a", "b", "c", "d"]), 10), Some(0.5));
    }

    #[test]
    fn empty_relevance_is_excluded() {
        assert_eq!(success_at_k(&ids(&["a"]), &BTreeSet::new(), 5), None);
        assert_eq!(recall_at_k(&ids(&["a"]), &BTreeSet::new(), 5), None);
    }
}
