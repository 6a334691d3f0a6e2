use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::EmbeddingMatrix;

/// Tag phrases with their unit-norm text embeddings.
#[derive(Debug, Clone)]
pub struct TagVocabulary<T> {
    tags: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Array2<T>,
}

impl<T: Scalar> TagVocabulary<T> {
    /// Rows of `matrix` are tag embeddings keyed by phrase; rows are normalized.
    pub fn from_matrix(matrix: &EmbeddingMatrix<T>) -> Result<Self> {
        let normalized = if matrix.is_normalized() {
            matrix.clone()
        } else {
            matrix.l2_normalize()?
        };
        let tags = normalized.ids().to_vec();
        let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            tags,
            index,
            embeddings: normalized.into_values(),
        })
    }

    pub fn new(tags: Vec<String>, embeddings: Array2<T>) -> Result<Self> {
        Self::from_matrix(&EmbeddingMatrix::new(tags, embeddings)?)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag(&self, i: usize) -> &str {
        &self.tags[i]
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn require(&self, tag: &str) -> Result<usize> {
        self.index_of(tag).ok_or_else(|| Error::UnknownTag(tag.to_owned()))
    }

    pub fn embedding(&self, i: usize) -> ArrayView1<'_, T> {
        self.embeddings.row(i)
    }

    pub fn embeddings(&self) -> ArrayView2<'_, T> {
        self.embeddings.view()
    }
}
