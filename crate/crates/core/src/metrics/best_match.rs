use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::text::TextMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Each hypothesis takes its best reference.
    BestMatch,
    /// Each hypothesis is averaged over all references.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub metric: TextMetric,
    pub aggregation: Aggregation,
    /// Corpus value: mean over items, 0–100.
    pub value: f64,
    pub per_item: BTreeMap<String, f64>,
}

/// Scores every `(hypothesis, reference)` pair of one item.
fn pair_matrix(metric: TextMetric, hyps: &[String], refs: &[String]) -> Result<Vec<Vec<f64>>> {
    hyps.iter()
        .map(|h| refs.iter().map(|r| metric.score(h, std::slice::from_ref(r))).collect())
        .collect()
}

pub fn aggregate_item(metric: TextMetric, hyps: &[String], refs: &[String], aggregation: Aggregation) -> Result<f64> {
    if hyps.is_empty() || refs.is_empty() {
        return Err(Error::EmptySet);
    }
    let m = pair_matrix(metric, hyps, refs)?;
    let per_hyp = m.iter().map(|row| match aggregation {
        Aggregation::BestMatch => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => row.iter().sum::<f64>() / row.len() as f64,
    });
    Ok(per_hyp.sum::<f64>() / hyps.len() as f64)
}

/// Corpus score over the items of `hypotheses`; every such item must have references.
pub fn aggregate_score(
    hypotheses: &BTreeMap<String, Vec<String>>,
    references: &BTreeMap<String, Vec<String>>,
    metric: TextMetric,
    aggregation: Aggregation,
) -> Result<TextScore> {
    if hypotheses.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut per_item = BTreeMap::new();
    for (item, hyps) in hypotheses {
        let refs = references
            .get(item)
            .ok_or_else(|| Error::MissingItem(item.clone()))?;
        per_item.insert(item.clone(), aggregate_item(metric, hyps, refs, aggregation)?);
    }
    let value = per_item.values().sum::<f64>() / per_item.len() as f64;
    Ok(TextScore {
        metric,
        aggregation,
        value,
        per_item,
    })
}

/// Mean over items of (mean over hypotheses of max over references).
pub fn best_match_score(
    hypotheses: &BTreeMap<String, Vec<String>>,
    references: &BTreeMap<String, Vec<String>>,
    metric: TextMetric,
) -> Result<TextScore> {
    aggregate_score(hypotheses, references, metric, Aggregation::BestMatch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(items: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn exact_reference_wins() {
        let refs = map(&[(
            "x",
            &[
                "the kitchen area is clean",
                "a kitchen with a wooden table",
                "a small dining room",
                "the eating area of an apartment",
                "an open space with track lighting",
            ],
        )]);
        let hyps = map(&[("x", &["a kitchen with a wooden table"])]);
        for m in TextMetric::ALL {
            let s = best_match_score(&hyps, &refs, m).unwrap();
            assert!((s.value - 100.0).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn single_reference_equals_mean() {
        let refs = map(&[("x", &["a dog runs in the park"])]);
        let hyps = map(&[("x", &["a dog in a park", "the park is green"])]);
        for m in TextMetric::ALL {
            let b = best_match_score(&hyps, &refs, m).unwrap().value;
            let a = aggregate_score(&hyps, &refs, m, Aggregation::Mean).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_three_enumeration() {
        let hyps = ["a red bus on the street", "people waiting at a stop"];
        let refs = ["a red bus drives down the street", "a bus stop with people", "a city street"];
        let mut expected = 0.0;
        for h in hyps {
            let mut best = f64::NEG_INFINITY;
            for r in refs {
                best = best.max(TextMetric::RougeL.score(h, &[r]).unwrap());
            }
            expected += best / 2.0;
        }
        let s = best_match_score(&map(&[("i", &hyps)]), &map(&[("i", &refs)]), TextMetric::RougeL).unwrap();
        assert!((s.value - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_item() {
        let hyps = map(&[("a", &["x y"])]);
        let refs = map(&[("b", &["x y"])]);
        assert!(matches!(
            best_match_score(&hyps, &refs, TextMetric::Rouge1),
            Err(Error::MissingItem(i)) if i == "a"
        ));
    }

    const WORDS: &[&str] = &["a", "the", "dog", "cat", "table", "chair", "kitchen", "sits", "on", "red"];

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(0..WORDS.len(), 1..8).prop_map(|ix| ix.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
    }

    proptest! {
        #[test]
        fn best_match_dominates_mean(
            hyps in prop::collection::vec(sentence(), 1..4),
            refs in prop::collection::vec(sentence(), 1..5),
        ) {
            let h: BTreeMap<_, _> = [("i".to_string(), hyps)].into();
            let r: BTreeMap<_, _> = [("i".to_string(), refs)].into();
            for m in TextMetric::ALL {
                let b = best_match_score(&h, &r, m).unwrap().value;
                let a = aggregate_score(&h, &r, m, Aggregation::Mean).unwrap().value;
                prop_assert!(b + 1e-12 >= a);
                prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
            }
        }
    }
}
