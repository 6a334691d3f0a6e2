//! Local tag retriever: per-modality residual projections trained with a
//! symmetric contrastive loss, then a cross-network ranker trained with a
//! grouped hinge loss over hard negatives.

mod checkpoint;
pub mod contrastive;
pub mod dcn;
pub mod features;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod projection;
pub mod ranking;
mod retrieval;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use checkpoint::{config_hash, CheckpointManifest};
pub use contrastive::{contrastive_loss, contrastive_loss_grad, ContrastiveLoss};
pub use dcn::{DcnConfig, DcnRanker};
pub use features::{feature_width, interaction_features, interaction_matrix};
pub use optim::{cosine_lr, Sgd, SgdConfig};
pub use params::Parameters;
pub use projection::Projection;
pub use ranking::{hard_negatives, ranker_loss, ranker_loss_grad, RankGroup, RankGroupGrad};
pub use retrieval::{recall_at_k, RetrievalIndex, RetrievalResult, ScoredTag};
pub use train::{ranker_objective, train_projections, train_ranker, RankerGroupInput, TrainLog, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Tag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveStageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Hard negatives kept in each image's softmax denominator.
    pub negatives_cap: usize,
}

impl Default for ContrastiveStageConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            sgd: SgdConfig::default(),
            negatives_cap: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerStageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub margin: f64,
    pub hard_negative_ratio: f64,
    /// In-batch negatives scored per image.
    pub candidate_cap: usize,
}

impl Default for RankerStageConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            margin: 0.2,
            hard_negative_ratio: 0.1,
            candidate_cap: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    /// Initial residual scale γ of both projections.
    pub residual_init: f64,
    /// Initial α; stored as `ln α`.
    pub init_temperature: f64,
    /// Feed projected (rather than raw) embeddings to the ranker.
    pub ranker_on_projected: bool,
    pub dcn: DcnConfig,
    pub contrastive: ContrastiveStageConfig,
    pub ranker: RankerStageConfig,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            residual_init: 0.1,
            init_temperature: 14.3,
            ranker_on_projected: true,
            dcn: DcnConfig::default(),
            contrastive: ContrastiveStageConfig::default(),
            ranker: RankerStageConfig::default(),
        }
    }
}

/// The contrastive-stage parameters: both projections and `ln α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProjection<T> {
    pub image: Projection<T>,
    pub tag: Projection<T>,
    pub log_temperature: T,
}

impl<T: Scalar> DualProjection<T> {
    pub fn temperature(&self) -> T {
        self.log_temperature.exp()
    }

    pub fn get(&self, modality: Modality) -> &Projection<T> {
        match modality {
            Modality::Image => &self.image,
            Modality::Tag => &self.tag,
        }
    }

    /// `S = α · Y_img · Y_tagᵀ` on projected inputs.
    pub fn similarities(&self, images: ArrayView2<'_, T>, tags: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let yi = self.image.forward_batch(images)?;
        let yt = self.tag.forward_batch(tags)?;
        Ok(yi.dot(&yt.t()) * self.temperature())
    }

    /// Contrastive loss of one batch and its gradient for every parameter.
    pub fn batch_objective(
        &self,
        images: ArrayView2<'_, T>,
        tags: ArrayView2<'_, T>,
        membership: ArrayView2<'_, bool>,
        row_mask: Option<ArrayView2<'_, bool>>,
    ) -> Result<(ContrastiveLoss, Self)> {
        let ci = self.image.forward_cached(images)?;
        let ct = self.tag.forward_cached(tags)?;
        let alpha = self.temperature();
        let cos = ci.output().dot(&ct.output().t());
        let s = &cos * alpha;
        let (loss, ds) = contrastive_loss_grad(s.view(), membership, row_mask)?;
        let mut grad = self.zeros_like();
        grad.log_temperature = (&ds * &s).sum();
        let dcos = ds * alpha;
        let d_img = dcos.dot(ct.output());
        let d_tag = dcos.t().dot(ci.output());
        self.image.backward(images, &ci, d_img.view(), &mut grad.image);
        self.tag.backward(tags, &ct, d_tag.view(), &mut grad.tag);
        Ok((loss, grad))
    }
}

impl<T: Scalar> Parameters<T> for DualProjection<T> {
    fn visit(&self, f: &mut dyn FnMut(&[T])) {
        self.image.visit(f);
        self.tag.visit(f);
        f(std::slice::from_ref(&self.log_temperature));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.image.visit_mut(f);
        self.tag.visit_mut(f);
        f(std::slice::from_mut(&mut self.log_temperature));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrieverModel<T> {
    pub projections: DualProjection<T>,
    pub ranker: DcnRanker<T>,
    pub config: RetrieverConfig,
    pub seed: u64,
}

impl<T: Scalar> RetrieverModel<T> {
    pub fn init(dim: usize, config: RetrieverConfig, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
        if !(config.init_temperature > 0.0) {
            return Err(Error::InvalidArgument("initial temperature must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Projection::init(dim, config.residual_init, &mut rng);
        let tag = Projection::init(dim, config.residual_init, &mut rng);
        let ranker = DcnRanker::init(feature_width(dim), &config.dcn, &mut rng);
        Ok(Self {
            projections: DualProjection {
                image,
                tag,
                log_temperature: T::lit(config.init_temperature.ln()),
            },
            ranker,
            config,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.projections.image.dim()
    }

    pub fn temperature(&self) -> T {
        self.projections.temperature()
    }

    pub fn project(&self, e: ArrayView1<'_, T>, modality: Modality) -> Result<Array1<T>> {
        self.projections.get(modality).forward(e)
    }

    pub fn project_batch(&self, e: ArrayView2<'_, T>, modality: Modality) -> Result<Array2<T>> {
        self.projections.get(modality).forward_batch(e)
    }

    pub fn similarities(&self, images: ArrayView2<'_, T>, tags: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.projections.similarities(images, tags)
    }

    /// Embeddings as the ranker sees them (projected or raw per config).
    pub fn ranker_inputs(&self, e: ArrayView2<'_, T>, modality: Modality) -> Result<Array2<T>> {
        if self.config.ranker_on_projected {
            self.project_batch(e, modality)
        } else if e.ncols() != self.dim() {
            Err(Error::DimMismatch(format!("expected dim {}, got {}", self.dim(), e.ncols())))
        } else {
            Ok(e.to_owned())
        }
    }

    /// Ranker scores of one image against a block of ranker-space tags.
    pub fn score_tags(&self, image_input: ArrayView1<'_, T>, tag_inputs: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let phi = interaction_matrix(image_input, tag_inputs)?;
        self.ranker.score_batch(phi.view())
    }

    pub fn all_finite(&self) -> bool {
        self.projections.all_finite() && self.ranker.all_finite()
    }

    pub fn ranker_input(&self, e: ArrayView1<'_, T>) -> Result<Array1<T>> {
        Ok(self.ranker_inputs(e.insert_axis(Axis(0)), Modality::Image)?.row(0).to_owned())
    }
}

impl<T: Scalar> Parameters<T> for RetrieverModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&[T])) {
        self.projections.visit(f);
        self.ranker.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.projections.visit_mut(f);
        self.ranker.visit_mut(f);
    }
}
