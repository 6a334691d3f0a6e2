//! Semantic-neighborhood preservation: does each retrieved tag fall among the
//! `m` nearest vocabulary neighbors of some reference tag, and vice versa?

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::metrics::sets::Prf;
use crate::scalar::{dot, Scalar};
use crate::vocab::TagVocabulary;

/// Lazily computed cosine rankings over a tag vocabulary.
///
/// `rank(t, u)` is the 0-based position of `u` in `t`'s neighbor list, sorted
/// by descending cosine with ties broken by phrase. `t` itself is always at
/// position 0, so `N_1(t) = {t}`.
pub struct NeighborhoodIndex<'a, T> {
    vocab: &'a TagVocabulary<T>,
    ranks: Mutex<HashMap<usize, Arc<Vec<u32>>>>,
}

impl<'a, T: Scalar> NeighborhoodIndex<'a, T> {
    pub fn new(vocab: &'a TagVocabulary<T>) -> Self {
        Self {
            vocab,
            ranks: Mutex::new(HashMap::new()),
        }
    }

    pub fn vocab(&self) -> &TagVocabulary<T> {
        self.vocab
    }

    fn order(&self, t: usize) -> Vec<usize> {
        let et = self.vocab.embedding(t);
        let et = et.as_slice().expect("standard layout");
        let sims: Vec<T> = (0..self.vocab.len())
            .map(|u| dot(et, self.vocab.embedding(u).as_slice().unwrap()))
            .collect();
        let mut order: Vec<usize> = (0..self.vocab.len()).filter(|&u| u != t).collect();
        order.sort_by(|&a, &b| {
            sims[b]
                .partial_cmp(&sims[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.vocab.tag(a).cmp(self.vocab.tag(b)))
        });
        order.insert(0, t);
        order
    }

    fn rank_row(&self, t: usize) -> Arc<Vec<u32>> {
        if let Some(row) = self.ranks.lock().unwrap().get(&t) {
            return Arc::clone(row);
        }
        let mut row = vec![0u32; self.vocab.len()];
        for (pos, u) in self.order(t).into_iter().enumerate() {
            row[u] = pos as u32;
        }
        let row = Arc::new(row);
        self.ranks.lock().unwrap().insert(t, Arc::clone(&row));
        row
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.vocab.len() {
            Err(Error::MOutOfRange { m, n: self.vocab.len() })
        } else {
            Ok(())
        }
    }

    /// The `m` tags most cosine-similar to `tag`, nearest first.
    pub fn semantic_neighborhood(&self, tag: &str, m: usize) -> Result<Vec<String>> {
        let t = self.vocab.require(tag)?;
        self.check_m(m)?;
        Ok(self
            .order(t)
            .into_iter()
            .take(m)
            .map(|u| self.vocab.tag(u).to_owned())
            .collect())
    }

    fn resolve<S: AsRef<str>>(&self, tags: &[S]) -> Result<Vec<usize>> {
        let set: BTreeSet<usize> = tags
            .iter()
            .map(|t| self.vocab.require(t.as_ref()))
            .collect::<Result<_>>()?;
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(set.into_iter().collect())
    }

    /// Neighborhood recall/precision of retrieved tags `predicted` against
    /// reference tags `reference` at neighborhood size `m`.
    pub fn prf<S: AsRef<str>>(&self, reference: &[S], predicted: &[S], m: usize) -> Result<Prf> {
        Ok(self.prf_sweep(reference, predicted, &[m])?.remove(0))
    }

    /// [`Self::prf`] for several `m` at once, sharing the rank lookups.
    pub fn prf_sweep<S: AsRef<str>>(&self, reference: &[S], predicted: &[S], ms: &[usize]) -> Result<Vec<Prf>> {
        for &m in ms {
            self.check_m(m)?;
        }
        let g = self.resolve(reference)?;
        let p = self.resolve(predicted)?;
        // hit_rank[t]: smallest m-1 at which some retrieved tag enters N_m(t);
        // expl_rank[u]: smallest m-1 at which u enters some reference cohort.
        let mut hit_rank = vec![u32::MAX; g.len()];
        let mut expl_rank = vec![u32::MAX; p.len()];
        for (gi, &t) in g.iter().enumerate() {
            let row = self.rank_row(t);
            for (pi, &u) in p.iter().enumerate() {
                let r = row[u];
                hit_rank[gi] = hit_rank[gi].min(r);
                expl_rank[pi] = expl_rank[pi].min(r);
            }
        }
        Ok(ms
            .iter()
            .map(|&m| {
                let m = m as u32;
                let hits = hit_rank.iter().filter(|&&r| r < m).count();
                let expl = expl_rank.iter().filter(|&&r| r < m).count();
                Prf::new(hits as f64 / g.len() as f64, expl as f64 / p.len() as f64)
            })
            .collect())
    }
}
