use std::collections::BTreeSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recall, precision and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(recall: f64, precision: f64) -> Self {
        Self {
            recall,
            precision,
            f1: harmonic_mean(recall, precision),
        }
    }

    pub const PERFECT: Prf = Prf {
        recall: 1.0,
        precision: 1.0,
        f1: 1.0,
    };
}

/// 0 when both inputs are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Set-overlap precision/recall of `predicted` against `reference`.
pub fn exact_retrieval_prf<S: AsRef<str>>(reference: &[S], predicted: &[S]) -> Result<Prf> {
    let g: BTreeSet<&str> = reference.iter().map(AsRef::as_ref).collect();
    let p: BTreeSet<&str> = predicted.iter().map(AsRef::as_ref).collect();
    if g.is_empty() || p.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(set_prf(&g, &p))
}

/// Set F1 where two empty sets agree perfectly.
pub fn set_prf<E: Ord + Hash>(reference: &BTreeSet<E>, predicted: &BTreeSet<E>) -> Prf {
    match (reference.is_empty(), predicted.is_empty()) {
        (true, true) => Prf::PERFECT,
        (true, false) | (false, true) => Prf::default(),
        _ => {
            let overlap = reference.intersection(predicted).count() as f64;
            Prf::new(overlap / reference.len() as f64, overlap / predicted.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_and_identical() {
        assert_eq!(exact_retrieval_prf(&["a", "b"], &["c"]).unwrap(), Prf::default());
        assert_eq!(exact_retrieval_prf(&["a", "b"], &["b", "a"]).unwrap(), Prf::PERFECT);
    }

    #[test]
    fn partial_overlap_arithmetic() {
        let g = ["a", "b", "c", "d"];
        let p = ["a", "b", "c", "x", "y", "z"];
        let r = exact_retrieval_prf(&g, &p).unwrap();
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.precision - 0.5).abs() < 1e-15);
        assert!((r.f1 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn empty_is_error() {
        let empty: [&str; 0] = [];
        assert!(matches!(exact_retrieval_prf(&empty, &["a"]), Err(Error::EmptySet)));
    }
}
