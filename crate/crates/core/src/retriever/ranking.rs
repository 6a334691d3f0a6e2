use crate::error::{Error, Result};

/// Scores of one image's candidates. Negatives must be listed in tag
/// lexicographic order: ties in hard-negative selection keep that order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGroup {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

/// Gradient of the loss with respect to each group's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGroupGrad {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

/// `max(1, ⌊ρ·count⌋)`, capped at `count`.
pub fn hard_negative_count(count: usize, ratio: f64) -> usize {
    ((ratio * count as f64).floor() as usize).clamp(1, count.max(1))
}

/// Indices of the top-scoring `max(1, ⌊ρ|N|⌋)` negatives, ties by position.
pub fn hard_negatives(negatives: &[f64], ratio: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..negatives.len()).collect();
    order.sort_by(|&a, &b| negatives[b].total_cmp(&negatives[a]));
    order.truncate(hard_negative_count(negatives.len(), ratio));
    order
}

/// Grouped pairwise hinge with hard-negative mining.
pub fn ranker_loss(groups: &[RankGroup], margin: f64, ratio: f64) -> Result<f64> {
    Ok(ranker_loss_grad(groups, margin, ratio)?.0)
}

pub fn ranker_loss_grad(groups: &[RankGroup], margin: f64, ratio: f64) -> Result<(f64, Vec<RankGroupGrad>)> {
    if groups.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(groups.len());
    let u = groups.len() as f64;
    for (gi, g) in groups.iter().enumerate() {
        if g.positives.is_empty() || g.negatives.is_empty() {
            return Err(Error::EmptyGroupSide(gi));
        }
        let hard = hard_negatives(&g.negatives, ratio);
        let pairs = (g.positives.len() * hard.len()) as f64;
        let mut gp = vec![0.0; g.positives.len()];
        let mut gn = vec![0.0; g.negatives.len()];
        let mut sum = 0.0;
        for (pi, &sp) in g.positives.iter().enumerate() {
            for &h in &hard {
                let v = margin - (sp - g.negatives[h]);
                if v > 0.0 {
                    sum += v;
                    gp[pi] -= 1.0 / (pairs * u);
                    gn[h] += 1.0 / (pairs * u);
                }
            }
        }
        total += sum / pairs;
        grads.push(RankGroupGrad {
            positives: gp,
            negatives: gn,
        });
    }
    Ok((total / u, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(p: &[f64], n: &[f64]) -> RankGroup {
        RankGroup {
            positives: p.to_vec(),
            negatives: n.to_vec(),
        }
    }

    #[test]
    fn satisfied_margin_is_zero() {
        assert_eq!(ranker_loss(&[group(&[2.0], &[0.5])], 1.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn hand_hinge() {
        let l = ranker_loss(&[group(&[1.0], &[0.9, 0.1])], 0.5, 0.5).unwrap();
        assert!((l - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ties_keep_list_order() {
        assert_eq!(hard_negatives(&[0.3, 0.7, 0.7, 0.1], 0.25), vec![1]);
        assert_eq!(hard_negatives(&[0.3, 0.7, 0.7, 0.1], 0.5), vec![1, 2]);
        assert_eq!(hard_negatives(&[0.2], 0.0), vec![0]);
    }

    #[test]
    fn empty_side_rejected() {
        assert!(matches!(
            ranker_loss(&[group(&[1.0], &[0.0]), group(&[], &[1.0])], 0.2, 0.1),
            Err(Error::EmptyGroupSide(1))
        ));
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_zero_iff_separated(
            p in prop::collection::vec(-3.0f64..3.0, 1..6),
            n in prop::collection::vec(-3.0f64..3.0, 1..10),
            margin in 0.0f64..1.0,
            ratio in 0.0f64..1.0,
        ) {
            let g = group(&p, &n);
            let l = ranker_loss(std::slice::from_ref(&g), margin, ratio).unwrap();
            prop_assert!(l >= 0.0);
            let hard = hard_negatives(&n, ratio);
            let separated = p.iter().all(|sp| hard.iter().all(|&h| sp - n[h] >= margin));
            prop_assert_eq!(l == 0.0, separated);
        }
    }
}
