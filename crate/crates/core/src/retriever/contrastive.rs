use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveLoss {
    pub image_to_tag: f64,
    pub tag_to_image: f64,
    pub total: f64,
}

/// Symmetric multi-positive InfoNCE over a similarity matrix `S` (B×N)
/// and membership `M`.
pub fn contrastive_loss<T: Scalar>(s: ArrayView2<'_, T>, m: ArrayView2<'_, bool>) -> Result<ContrastiveLoss> {
    Ok(contrastive_loss_grad(s, m, None)?.0)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss and `dL_total/dS`.
///
/// `row_mask`, when given, restricts each image's softmax denominator to the
/// masked tags (positives must be inside the mask). Column denominators
/// always cover the whole batch.
pub fn contrastive_loss_grad<T: Scalar>(
    s: ArrayView2<'_, T>,
    m: ArrayView2<'_, bool>,
    row_mask: Option<ArrayView2<'_, bool>>,
) -> Result<(ContrastiveLoss, Array2<T>)> {
    if s.dim() != m.dim() {
        return Err(Error::DimMismatch(format!("scores {:?} vs membership {:?}", s.dim(), m.dim())));
    }
    if let Some(mask) = &row_mask {
        if mask.dim() != s.dim() {
            return Err(Error::DimMismatch(format!("scores {:?} vs row mask {:?}", s.dim(), mask.dim())));
        }
    }
    let (b, n) = s.dim();
    let sf = s.mapv(|v| v.as_f64());
    let mut grad = Array2::<f64>::zeros((b, n));

    let mut i2t = 0.0;
    for i in 0..b {
        let in_row = |j: usize| row_mask.as_ref().is_none_or(|mask| mask[[i, j]]);
        let pos: Vec<usize> = (0..n).filter(|&j| m[[i, j]]).collect();
        if pos.is_empty() {
            return Err(Error::EmptyPositives(i));
        }
        if pos.iter().any(|&j| !in_row(j)) {
            return Err(Error::InvalidArgument(format!("row mask excludes a positive of image {i}")));
        }
        let cols: Vec<usize> = (0..n).filter(|&j| in_row(j)).collect();
        let lse = log_sum_exp(cols.iter().map(|&j| sf[[i, j]]));
        let w = 1.0 / pos.len() as f64;
        i2t -= w * pos.iter().map(|&j| sf[[i, j]] - lse).sum::<f64>();
        for &j in &cols {
            grad[[i, j]] += 0.5 / b as f64 * (sf[[i, j]] - lse).exp();
        }
        for &j in &pos {
            grad[[i, j]] -= 0.5 / b as f64 * w;
        }
    }
    i2t /= b as f64;

    let mut t2i = 0.0;
    for j in 0..n {
        let pos: Vec<usize> = (0..b).filter(|&i| m[[i, j]]).collect();
        if pos.is_empty() {
            return Err(Error::EmptyPositives(j));
        }
        let lse = log_sum_exp((0..b).map(|i| sf[[i, j]]));
        let w = 1.0 / pos.len() as f64;
        t2i -= w * pos.iter().map(|&i| sf[[i, j]] - lse).sum::<f64>();
        for i in 0..b {
            grad[[i, j]] += 0.5 / n as f64 * (sf[[i, j]] - lse).exp();
        }
        for &i in &pos {
            grad[[i, j]] -= 0.5 / n as f64 * w;
        }
    }
    t2i /= n as f64;

    let loss = ContrastiveLoss {
        image_to_tag: i2t,
        tag_to_image: t2i,
        total: 0.5 * (i2t + t2i),
    };
    Ok((loss, grad.mapv(T::lit)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_pair_is_zero() {
        let l = contrastive_loss(array![[3.0f64]].view(), array![[true]].view()).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn closed_form_two_tags() {
        let s = array![[10.0f64, -10.0], [-10.0, 10.0]];
        let m = array![[true, false], [false, true]];
        let l = contrastive_loss(s.view(), m.view()).unwrap();
        let expected = (1.0 + (-20.0f64).exp()).ln();
        assert!((l.image_to_tag - expected).abs() < 1e-14);
        assert!((l.image_to_tag - 2.06e-9).abs() < 1e-11);
        assert!(matches!(
            contrastive_loss(array![[10.0f64, -10.0]].view(), array![[true, false]].view()),
            Err(Error::EmptyPositives(1))
        ));
    }

    #[test]
    fn uniform_scores() {
        let (b, n) = (3, 5);
        let s = Array2::<f64>::from_elem((b, n), 0.7);
        let m = Array2::from_shape_fn((b, n), |(i, j)| j % b == i);
        let l = contrastive_loss(s.view(), m.view()).unwrap();
        assert!((l.image_to_tag - (n as f64).ln()).abs() < 1e-12);
        assert!((l.tag_to_image - (b as f64).ln()).abs() < 1e-12);
        assert_eq!(l.total, 0.5 * (l.image_to_tag + l.tag_to_image));
    }

    #[test]
    fn mask_must_contain_positives() {
        let s = array![[1.0f64, 0.0], [0.0, 1.0]];
        let m = array![[true, false], [false, true]];
        let mask = array![[false, true], [true, true]];
        assert!(contrastive_loss_grad(s.view(), m.view(), Some(mask.view())).is_err());
    }

    #[test]
    fn full_mask_matches_unmasked() {
        let s = array![[1.0f64, 0.2, -0.3], [0.1, 0.9, 0.4]];
        let m = array![[true, false, true], [false, true, false]];
        let full = Array2::from_elem((2, 3), true);
        let (a, ga) = contrastive_loss_grad(s.view(), m.view(), None).unwrap();
        let (b, gb) = contrastive_loss_grad(s.view(), m.view(), Some(full.view())).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }
}
