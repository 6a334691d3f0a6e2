//! Seeded synthetic datasets with known structure, used by tests, the
//! acceptance suite and demos.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::svd;
use crate::retriever::TrainingSet;
use crate::store::{EmbeddingMatrix, TagRecord};
use crate::vocab::TagVocabulary;

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal) * std)
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

fn tag_names(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("tag {i:03}")).collect()
}

/// Random orthogonal `n×n` matrix (left singular vectors of a Gaussian).
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
    svd(g.view()).u
}

#[derive(Debug, Clone)]
pub struct SeparableSpec {
    pub dim: usize,
    pub tags: usize,
    pub tags_per_image: usize,
    pub train: usize,
    pub val: usize,
    /// Standard deviation of the per-coordinate noise added before normalizing.
    pub noise: f64,
    /// Blend weight of a random rotation applied to the image side only:
    /// 0 puts images next to their tags, 1 rotates them fully away.
    pub modality_gap: f64,
    pub seed: u64,
}

impl Default for SeparableSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            tags: 100,
            tags_per_image: 3,
            train: 400,
            val: 100,
            noise: 0.05,
            modality_gap: 0.7,
            seed: 7,
        }
    }
}

/// Images sit at the normalized sum of their tags' embeddings plus noise.
pub struct SeparableFixture {
    pub vocab: TagVocabulary<f64>,
    pub train: TrainingSet<f64>,
    pub val: TrainingSet<f64>,
}

pub fn separable_fixture(spec: &SeparableSpec) -> Result<SeparableFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tags = Array2::from_shape_fn((spec.tags, spec.dim), |_| rng.sample::<f64, _>(StandardNormal));
    let vocab = TagVocabulary::new(tag_names(spec.tags), tags)?;
    let q = random_orthogonal(spec.dim, &mut rng);
    let mut make = |count: usize, prefix: &str| -> Result<TrainingSet<f64>> {
        let mut ids = Vec::with_capacity(count);
        let mut images = Array2::zeros((count, spec.dim));
        let mut positives = Vec::with_capacity(count);
        for i in 0..count {
            let pos = sample(&mut rng, spec.tags, spec.tags_per_image).into_vec();
            let mut v = gaussian_vec(&mut rng, spec.dim, spec.noise);
            let mut sum = Array1::zeros(spec.dim);
            for &t in &pos {
                sum += &vocab.embedding(t);
            }
            v += &(&sum * (1.0 - spec.modality_gap) + &(q.dot(&sum) * spec.modality_gap));
            images.row_mut(i).assign(&unit(v));
            ids.push(format!("{prefix}{i:04}"));
            positives.push(pos);
        }
        TrainingSet::new(ids, images, positives)
    };
    let train = make(spec.train, "train")?;
    let val = make(spec.val, "val")?;
    Ok(SeparableFixture { vocab, train, val })
}

#[derive(Debug, Clone)]
pub struct DualEncoderSpec {
    pub latent_dim: usize,
    pub items: usize,
    pub tags: usize,
    pub tags_per_item: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DualEncoderSpec {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            items: 2000,
            tags: 100,
            tags_per_item: 3,
            noise: 0.05,
            seed: 17,
        }
    }
}

/// Two encoders observing one latent space through different orthogonal
/// maps with independent noise.
pub struct DualEncoderFixture {
    pub victim: EmbeddingMatrix<f64>,
    pub attack: EmbeddingMatrix<f64>,
    /// Tag embeddings in the attack space.
    pub attack_tags: EmbeddingMatrix<f64>,
    pub records: Vec<TagRecord>,
}

pub fn dual_encoder_fixture(spec: &DualEncoderSpec) -> Result<DualEncoderFixture> {
    let n = spec.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q_victim = random_orthogonal(n, &mut rng);
    let q_attack = random_orthogonal(n, &mut rng);
    let tag_latents: Vec<Array1<f64>> = (0..spec.tags).map(|_| unit(gaussian_vec(&mut rng, n, 1.0))).collect();
    let names = tag_names(spec.tags);

    let observe = |q: &Array2<f64>, z: ArrayView1<'_, f64>, rng: &mut ChaCha8Rng| -> Array1<f64> {
        unit(q.dot(&z) + &gaussian_vec(rng, n, spec.noise))
    };

    let mut ids = Vec::with_capacity(spec.items);
    let mut victim = Array2::zeros((spec.items, n));
    let mut attack = Array2::zeros((spec.items, n));
    let mut records = Vec::with_capacity(spec.items);
    for i in 0..spec.items {
        let pos = sample(&mut rng, spec.tags, spec.tags_per_item).into_vec();
        let mut z = gaussian_vec(&mut rng, n, 0.1);
        for &t in &pos {
            z += &tag_latents[t];
        }
        let z = unit(z);
        victim.row_mut(i).assign(&observe(&q_victim, z.view(), &mut rng));
        attack.row_mut(i).assign(&observe(&q_attack, z.view(), &mut rng));
        let id = format!("item{i:05}");
        records.push(TagRecord::new(id.clone(), pos.iter().map(|&t| names[t].as_str())));
        ids.push(id);
    }
    let attack_tags = Array2::from_shape_fn((spec.tags, n), |(t, j)| q_attack.row(j).dot(&tag_latents[t]));
    Ok(DualEncoderFixture {
        victim: EmbeddingMatrix::new(ids.clone(), victim)?.l2_normalize()?,
        attack: EmbeddingMatrix::new(ids, attack)?.l2_normalize()?,
        attack_tags: EmbeddingMatrix::new(names, attack_tags)?.l2_normalize()?,
        records,
    })
}
