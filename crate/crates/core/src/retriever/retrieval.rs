use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retriever::train::{lex_ranks, TrainingSet};
use crate::retriever::{Modality, RetrieverModel};
use crate::scalar::Scalar;
use crate::vocab::TagVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTag {
    pub tag: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub item_id: String,
    pub k: usize,
    pub topk: Vec<ScoredTag>,
}

impl RetrievalResult {
    pub fn tags(&self) -> Vec<String> {
        self.topk.iter().map(|s| s.tag.clone()).collect()
    }
}

/// A trained model paired with its vocabulary, tags pre-projected.
pub struct RetrievalIndex<'a, T> {
    model: &'a RetrieverModel<T>,
    vocab: &'a TagVocabulary<T>,
    tag_inputs: Array2<T>,
    lex: Vec<usize>,
}

impl<'a, T: Scalar> RetrievalIndex<'a, T> {
    pub fn new(model: &'a RetrieverModel<T>, vocab: &'a TagVocabulary<T>) -> Result<Self> {
        Ok(Self {
            model,
            vocab,
            tag_inputs: model.ranker_inputs(vocab.embeddings(), Modality::Tag)?,
            lex: lex_ranks(vocab),
        })
    }

    /// Ranker score of every vocabulary tag for an attack-space embedding.
    pub fn scores(&self, e: ArrayView1<'_, T>) -> Result<Vec<f64>> {
        let img = self.model.ranker_input(e)?;
        Ok(self
            .model
            .score_tags(img.view(), self.tag_inputs.view())?
            .iter()
            .map(|v| v.as_f64())
            .collect())
    }

    /// Tag indices ordered by score descending, then tag phrase.
    pub fn rank_scores(&self, scores: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(self.lex[a].cmp(&self.lex[b])));
        order
    }

    pub fn topk(&self, item_id: &str, e: ArrayView1<'_, T>, k: usize) -> Result<RetrievalResult> {
        let n = self.vocab.len();
        if k == 0 || k > n {
            return Err(Error::KOutOfRange { k, n });
        }
        let scores = self.scores(e)?;
        let topk = self
            .rank_scores(&scores)
            .into_iter()
            .take(k)
            .map(|i| ScoredTag {
                tag: self.vocab.tag(i).to_owned(),
                score: scores[i],
            })
            .collect();
        Ok(RetrievalResult {
            item_id: item_id.to_owned(),
            k,
            topk,
        })
    }

    /// Row-parallel `topk`; output order follows `ids`.
    pub fn topk_batch(&self, ids: &[String], e: ArrayView2<'_, T>, k: usize) -> Result<Vec<RetrievalResult>> {
        if ids.len() != e.nrows() {
            return Err(Error::IdCountMismatch {
                ids: ids.len(),
                rows: e.nrows(),
            });
        }
        ids.par_iter()
            .enumerate()
            .map(|(i, id)| self.topk(id, e.row(i), k))
            .collect()
    }
}

/// Mean over images of the fraction of true tags found in the top `k`.
pub fn recall_at_k<T: Scalar>(model: &RetrieverModel<T>, vocab: &TagVocabulary<T>, data: &TrainingSet<T>, k: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    let index = RetrievalIndex::new(model, vocab)?;
    let results = index.topk_batch(data.ids(), data.images(), k.min(vocab.len()))?;
    let total: f64 = results
        .iter()
        .enumerate()
        .map(|(u, r)| {
            let pos = data.positives(u);
            let hit = r
                .topk
                .iter()
                .filter(|s| vocab.index_of(&s.tag).is_some_and(|t| pos.contains(&t)))
                .count();
            hit as f64 / pos.len() as f64
        })
        .sum();
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::RetrieverConfig;
    use ndarray::array;

    #[test]
    fn untrained_ranker_falls_back_to_lexicographic() {
        let vocab = TagVocabulary::new(
            vec!["zebra".into(), "apple".into(), "mango".into()],
            array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]],
        )
        .unwrap();
        let model = RetrieverModel::<f64>::init(2, RetrieverConfig::default(), 1).unwrap();
        let index = RetrievalIndex::new(&model, &vocab).unwrap();
        let r = index.topk("q", array![1.0, 0.0].view(), 3).unwrap();
        assert_eq!(r.tags(), vec!["apple", "mango", "zebra"]);
        assert!(matches!(index.topk("q", array![1.0, 0.0].view(), 4), Err(Error::KOutOfRange { k: 4, n: 3 })));
        assert!(index.topk("q", array![1.0, 0.0].view(), 0).is_err());
    }

    #[test]
    fn single_tag_vocabulary() {
        let vocab = TagVocabulary::new(vec!["only".into()], array![[0.0, 1.0]]).unwrap();
        let model = RetrieverModel::<f64>::init(2, RetrieverConfig::default(), 1).unwrap();
        let index = RetrievalIndex::new(&model, &vocab).unwrap();
        for e in [array![1.0, 0.0], array![0.0, -1.0]] {
            assert_eq!(index.topk("q", e.view(), 1).unwrap().tags(), vec!["only"]);
        }
    }

    #[test]
    fn monotone_transform_keeps_order() {
        let vocab = TagVocabulary::new(
            vec!["b".into(), "a".into(), "c".into(), "d".into()],
            array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [0.8, 0.6]],
        )
        .unwrap();
        let model = RetrieverModel::<f64>::init(2, RetrieverConfig::default(), 1).unwrap();
        let index = RetrievalIndex::new(&model, &vocab).unwrap();
        let scores = vec![0.3, 0.3, -1.0, 2.0];
        let mapped: Vec<f64> = scores.iter().map(|s: &f64| (3.0 * s).exp() + 1.0).collect();
        assert_eq!(index.rank_scores(&scores), index.rank_scores(&mapped));
        assert_eq!(index.rank_scores(&scores), vec![3, 1, 0, 2]);
    }
}
