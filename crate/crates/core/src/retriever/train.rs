use std::collections::BTreeSet;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retriever::dcn::DcnRanker;
use crate::retriever::features::interaction_matrix;
use crate::retriever::optim::{cosine_lr, Sgd};
use crate::retriever::params::Parameters;
use crate::retriever::ranking::{ranker_loss_grad, RankGroup};
use crate::retriever::{Modality, RetrieverModel};
use crate::scalar::Scalar;
use crate::store::{EmbeddingMatrix, TagRecord};
use crate::vocab::TagVocabulary;

const CONTRASTIVE_SALT: u64 = 0x636f_6e74_7261_7374;
const RANKER_SALT: u64 = 0x7261_6e6b_6572_0001;
const EVAL_SALT: u64 = 0x6576_616c_0000_0001;

/// Training images with their positive tags (indices into a vocabulary).
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    ids: Vec<String>,
    images: Array2<T>,
    positives: Vec<Vec<usize>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(ids: Vec<String>, images: Array2<T>, positives: Vec<Vec<usize>>) -> Result<Self> {
        if ids.len() != images.nrows() || positives.len() != ids.len() {
            return Err(Error::IdCountMismatch {
                ids: ids.len(),
                rows: images.nrows(),
            });
        }
        let mut positives = positives;
        for (i, p) in positives.iter_mut().enumerate() {
            p.sort_unstable();
            p.dedup();
            if p.is_empty() {
                return Err(Error::EmptyPositives(i));
            }
        }
        Ok(Self { ids, images, positives })
    }

    /// Joins image embeddings with tag records. Records whose image has no
    /// embedding, and tags outside the vocabulary, are skipped; images left
    /// with no known tag are dropped.
    pub fn from_records(images: &EmbeddingMatrix<T>, records: &[TagRecord], vocab: &TagVocabulary<T>) -> Result<Self> {
        if images.dim() != vocab.dim() {
            return Err(Error::DimMismatch(format!("image dim {} vs tag dim {}", images.dim(), vocab.dim())));
        }
        let images = if images.is_normalized() { images.clone() } else { images.l2_normalize()? };
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut positives = Vec::new();
        let mut seen = BTreeSet::new();
        for r in records {
            let Some(row) = images.index_of(&r.image_id) else { continue };
            let pos: Vec<usize> = r.tags.iter().filter_map(|t| vocab.index_of(t)).collect();
            if pos.is_empty() || !seen.insert(r.image_id.clone()) {
                continue;
            }
            ids.push(r.image_id.clone());
            rows.push(row);
            positives.push(pos);
        }
        let images = images.values().select(Axis(0), &rows);
        Self::new(ids, images, positives)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn images(&self) -> ArrayView2<'_, T> {
        self.images.view()
    }

    pub fn positives(&self, i: usize) -> &[usize] {
        &self.positives[i]
    }

    /// The subset for `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let rows: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| Error::MissingItem(id.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            images: self.images.select(Axis(0), &rows),
            positives: rows.iter().map(|&r| self.positives[r].clone()).collect(),
        })
    }

    /// Vocabulary indices no training image refers to.
    pub fn unreferenced_tags(&self, vocab_len: usize) -> Vec<usize> {
        let used: BTreeSet<usize> = self.positives.iter().flatten().copied().collect();
        (0..vocab_len).filter(|t| !used.contains(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: String,
    /// Mean batch loss of the untrained parameters over a fixed batching.
    pub initial_loss: f64,
    /// Same measurement after training.
    pub final_loss: f64,
    /// Running mean of the training batches, per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Position of each vocabulary index in lexicographic tag order.
pub(crate) fn lex_ranks<T: Scalar>(vocab: &TagVocabulary<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| vocab.tag(a).cmp(vocab.tag(b)));
    let mut rank = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn batch_tags<T: Scalar>(data: &TrainingSet<T>, batch: &[usize], lex: &[usize]) -> Vec<usize> {
    let mut tags: Vec<usize> = batch
        .iter()
        .flat_map(|&u| data.positives[u].iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    tags.sort_by_key(|&t| lex[t]);
    tags
}

fn check_vocab<T: Scalar>(data: &TrainingSet<T>, vocab: &TagVocabulary<T>, model: &RetrieverModel<T>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    if vocab.dim() != model.dim() || data.images.ncols() != model.dim() {
        return Err(Error::DimMismatch(format!(
            "model dim {}, vocab dim {}, image dim {}",
            model.dim(),
            vocab.dim(),
            data.images.ncols()
        )));
    }
    if let Some(&t) = data.positives.iter().flatten().find(|&&t| t >= vocab.len()) {
        return Err(Error::InvalidArgument(format!("tag index {t} outside vocabulary of {}", vocab.len())));
    }
    Ok(())
}

fn epoch_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

struct ContrastiveBatch<T> {
    images: Array2<T>,
    tags: Array2<T>,
    membership: Array2<bool>,
    row_mask: Option<Array2<bool>>,
}

fn contrastive_batch<T: Scalar>(
    model: &RetrieverModel<T>,
    data: &TrainingSet<T>,
    vocab: &TagVocabulary<T>,
    batch: &[usize],
    lex: &[usize],
) -> Result<ContrastiveBatch<T>> {
    let cols = batch_tags(data, batch, lex);
    let images = data.images.select(Axis(0), batch);
    let tags = vocab.embeddings().select(Axis(0), &cols);
    let membership = Array2::from_shape_fn((batch.len(), cols.len()), |(i, j)| {
        data.positives[batch[i]].binary_search(&cols[j]).is_ok()
    });
    let cap = model.config.contrastive.negatives_cap;
    let row_mask = if cols.len() > cap {
        let s = model.similarities(images.view(), tags.view())?;
        let mut mask = membership.clone();
        for i in 0..batch.len() {
            let mut neg: Vec<usize> = (0..cols.len()).filter(|&j| !membership[[i, j]]).collect();
            neg.sort_by(|&a, &b| s[[i, b]].as_f64().total_cmp(&s[[i, a]].as_f64()));
            for &j in neg.iter().take(cap) {
                mask[[i, j]] = true;
            }
        }
        Some(mask)
    } else {
        None
    };
    Ok(ContrastiveBatch {
        images,
        tags,
        membership,
        row_mask,
    })
}

fn contrastive_eval<T: Scalar>(model: &RetrieverModel<T>, data: &TrainingSet<T>, vocab: &TagVocabulary<T>, lex: &[usize]) -> Result<f64> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut sum = 0.0;
    let mut count = 0;
    for chunk in order.chunks(model.config.contrastive.batch_size) {
        let b = contrastive_batch(model, data, vocab, chunk, lex)?;
        let (loss, _) = model.projections.batch_objective(
            b.images.view(),
            b.tags.view(),
            b.membership.view(),
            b.row_mask.as_ref().map(|m| m.view()),
        )?;
        sum += loss.total;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Trains both projections and the temperature; the ranker is untouched.
pub fn train_projections<T: Scalar>(model: &mut RetrieverModel<T>, data: &TrainingSet<T>, vocab: &TagVocabulary<T>) -> Result<TrainLog> {
    check_vocab(data, vocab, model)?;
    let cfg = model.config.contrastive.clone();
    if cfg.batch_size < 2 {
        return Err(Error::InvalidArgument("contrastive batch size must be at least 2".into()));
    }
    let lex = lex_ranks(vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ CONTRASTIVE_SALT);
    let initial_loss = contrastive_eval(model, data, vocab, &lex)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, loss: initial_loss });
    }
    let total_steps = cfg.epochs * data.len().div_ceil(cfg.batch_size);
    let mut opt = Sgd::new(cfg.sgd, model.projections.num_params());
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), &mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let b = contrastive_batch(model, data, vocab, chunk, &lex)?;
            let (loss, grad) = model.projections.batch_objective(
                b.images.view(),
                b.tags.view(),
                b.membership.view(),
                b.row_mask.as_ref().map(|m| m.view()),
            )?;
            if !loss.total.is_finite() || !grad.all_finite() {
                return Err(Error::Divergence { epoch, loss: loss.total });
            }
            let mut flat = model.projections.flatten();
            opt.step(&mut flat, &grad.flatten(), cosine_lr(cfg.sgd.learning_rate, step, total_steps));
            model.projections.load_flat(&flat);
            step += 1;
            sum += loss.total;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    let final_loss = contrastive_eval(model, data, vocab, &lex)?;
    if !final_loss.is_finite() || !model.projections.all_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    Ok(TrainLog {
        stage: "contrastive".into(),
        initial_loss,
        final_loss,
        epoch_losses,
        steps: step,
    })
}

/// Interaction features of one image's positives and negatives; negatives
/// in tag lexicographic order.
#[derive(Debug, Clone)]
pub struct RankerGroupInput<T> {
    pub positives: Array2<T>,
    pub negatives: Array2<T>,
}

/// Grouped hinge loss of `ranker` and its parameter gradient.
pub fn ranker_objective<T: Scalar>(ranker: &DcnRanker<T>, groups: &[RankerGroupInput<T>], margin: f64, ratio: f64) -> Result<(f64, DcnRanker<T>)> {
    if groups.is_empty() {
        return Err(Error::EmptySet);
    }
    let blocks: Vec<ArrayView2<'_, T>> = groups
        .iter()
        .flat_map(|g| [g.positives.view(), g.negatives.view()])
        .collect();
    let phi = concatenate(Axis(0), &blocks).map_err(|e| Error::DimMismatch(e.to_string()))?;
    let cache = ranker.forward_cached(phi.view())?;
    let scores = ranker.scores(&cache);
    let mut rank_groups = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let take = |start: usize, len: usize| scores.slice(ndarray::s![start..start + len]).iter().map(|v| v.as_f64()).collect();
        let (p, n) = (g.positives.nrows(), g.negatives.nrows());
        rank_groups.push(RankGroup {
            positives: take(offset, p),
            negatives: take(offset + p, n),
        });
        offset += p + n;
    }
    let (loss, grads) = ranker_loss_grad(&rank_groups, margin, ratio)?;
    let ds: Array1<T> = grads
        .iter()
        .flat_map(|g| g.positives.iter().chain(&g.negatives).copied())
        .map(T::lit)
        .collect();
    let mut grad = ranker.zeros_like();
    ranker.backward(phi.view(), &cache, ds.view(), &mut grad);
    Ok((loss, grad))
}

struct RankerInputs<T> {
    images: Array2<T>,
    tags: Array2<T>,
}

fn ranker_groups<T: Scalar>(
    inputs: &RankerInputs<T>,
    data: &TrainingSet<T>,
    batch: &[usize],
    lex: &[usize],
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RankerGroupInput<T>>> {
    let cands = batch_tags(data, batch, lex);
    let mut groups = Vec::with_capacity(batch.len());
    for &u in batch {
        let pos = &data.positives[u];
        let mut neg: Vec<usize> = cands.iter().copied().filter(|t| pos.binary_search(t).is_err()).collect();
        if neg.is_empty() {
            continue;
        }
        if neg.len() > cap {
            let mut keep = rand::seq::index::sample(rng, neg.len(), cap).into_vec();
            keep.sort_unstable();
            neg = keep.into_iter().map(|i| neg[i]).collect();
        }
        let mut pos = pos.clone();
        pos.sort_by_key(|&t| lex[t]);
        let img: ArrayView1<'_, T> = inputs.images.row(u);
        groups.push(RankerGroupInput {
            positives: interaction_matrix(img, inputs.tags.select(Axis(0), &pos).view())?,
            negatives: interaction_matrix(img, inputs.tags.select(Axis(0), &neg).view())?,
        });
    }
    Ok(groups)
}

fn ranker_eval<T: Scalar>(model: &RetrieverModel<T>, inputs: &RankerInputs<T>, data: &TrainingSet<T>, lex: &[usize]) -> Result<f64> {
    let cfg = &model.config.ranker;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ EVAL_SALT);
    let order: Vec<usize> = (0..data.len()).collect();
    let mut sum = 0.0;
    let mut count = 0;
    for chunk in order.chunks(cfg.batch_size) {
        let groups = ranker_groups(inputs, data, chunk, lex, cfg.candidate_cap, &mut rng)?;
        if groups.is_empty() {
            continue;
        }
        sum += ranker_objective(&model.ranker, &groups, cfg.margin, cfg.hard_negative_ratio)?.0;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no batch has both positives and negatives".into()));
    }
    Ok(sum / count as f64)
}

/// Trains the ranker with the projections frozen.
pub fn train_ranker<T: Scalar>(model: &mut RetrieverModel<T>, data: &TrainingSet<T>, vocab: &TagVocabulary<T>) -> Result<TrainLog> {
    check_vocab(data, vocab, model)?;
    let cfg = model.config.ranker.clone();
    if cfg.batch_size < 2 {
        return Err(Error::InvalidArgument("ranker batch size must be at least 2".into()));
    }
    if cfg.candidate_cap == 0 {
        return Err(Error::InvalidArgument("candidate cap must be positive".into()));
    }
    let lex = lex_ranks(vocab);
    let inputs = RankerInputs {
        images: model.ranker_inputs(data.images(), Modality::Image)?,
        tags: model.ranker_inputs(vocab.embeddings(), Modality::Tag)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ RANKER_SALT);
    let initial_loss = ranker_eval(model, &inputs, data, &lex)?;
    let total_steps = cfg.epochs * data.len().div_ceil(cfg.batch_size);
    let mut opt = Sgd::new(cfg.sgd, model.ranker.num_params());
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), &mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let lr = cosine_lr(cfg.sgd.learning_rate, step, total_steps);
            step += 1;
            let groups = ranker_groups(&inputs, data, chunk, &lex, cfg.candidate_cap, &mut rng)?;
            if groups.is_empty() {
                continue;
            }
            let (loss, grad) = ranker_objective(&model.ranker, &groups, cfg.margin, cfg.hard_negative_ratio)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let mut flat = model.ranker.flatten();
            opt.step(&mut flat, &grad.flatten(), lr);
            model.ranker.load_flat(&flat);
            sum += loss;
            batches += 1;
        }
        epoch_losses.push(if batches == 0 { 0.0 } else { sum / batches as f64 });
    }
    let final_loss = ranker_eval(model, &inputs, data, &lex)?;
    if !final_loss.is_finite() || !model.ranker.all_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    Ok(TrainLog {
        stage: "ranker".into(),
        initial_loss,
        final_loss,
        epoch_losses,
        steps: step,
    })
}

