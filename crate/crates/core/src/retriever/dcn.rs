use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retriever::params::Parameters;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcnConfig {
    pub cross_layers: usize,
    pub hidden: Vec<usize>,
}

impl Default for DcnConfig {
    fn default() -> Self {
        Self {
            cross_layers: 2,
            hidden: vec![256, 64],
        }
    }
}

/// Cross network (`x_{l+1} = x0 ⊙ (W_l x_l + b_l) + x_l`) followed by a
/// ReLU MLP and a linear scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct DcnRanker<T> {
    pub cross_w: Vec<Array2<T>>,
    pub cross_b: Vec<Array1<T>>,
    /// `out × in`
    pub mlp_w: Vec<Array2<T>>,
    pub mlp_b: Vec<Array1<T>>,
    pub head_w: Array1<T>,
    pub head_b: T,
}

/// Per-layer activations of a batch forward pass.
pub struct DcnCache<T> {
    cross_in: Vec<Array2<T>>,
    mlp_in: Vec<Array2<T>>,
    mlp_pre: Vec<Array2<T>>,
    top: Array2<T>,
}

fn gaussian<T: Scalar, R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::lit(rng.sample::<f64, _>(StandardNormal) * std))
}

impl<T: Scalar> DcnRanker<T> {
    /// Cross weights ~ N(0, 1/d), He-initialized MLP, zero head.
    pub fn init<R: Rng>(input_width: usize, config: &DcnConfig, rng: &mut R) -> Self {
        let d = input_width;
        let cross_w = (0..config.cross_layers)
            .map(|_| gaussian(d, d, 1.0 / (d as f64).sqrt(), rng))
            .collect();
        let cross_b = (0..config.cross_layers).map(|_| Array1::zeros(d)).collect();
        let mut mlp_w = Vec::new();
        let mut mlp_b = Vec::new();
        let mut fan_in = d;
        for &h in &config.hidden {
            mlp_w.push(gaussian(h, fan_in, (2.0 / fan_in as f64).sqrt(), rng));
            mlp_b.push(Array1::zeros(h));
            fan_in = h;
        }
        Self {
            cross_w,
            cross_b,
            mlp_w,
            mlp_b,
            head_w: Array1::zeros(fan_in),
            head_b: T::zero(),
        }
    }

    pub fn input_width(&self) -> usize {
        match (self.cross_w.first(), self.mlp_w.first()) {
            (Some(w), _) => w.ncols(),
            (None, Some(w)) => w.ncols(),
            (None, None) => self.head_w.len(),
        }
    }

    pub fn config(&self) -> DcnConfig {
        DcnConfig {
            cross_layers: self.cross_w.len(),
            hidden: self.mlp_b.iter().map(|b| b.len()).collect(),
        }
    }

    pub fn score(&self, phi: ArrayView1<'_, T>) -> Result<T> {
        Ok(self.score_batch(phi.insert_axis(Axis(0)))?[0])
    }

    pub fn score_batch(&self, phi: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let cache = self.forward_cached(phi)?;
        Ok(self.scores(&cache))
    }

    /// Head output for a cached forward pass.
    pub fn scores(&self, cache: &DcnCache<T>) -> Array1<T> {
        cache.top.dot(&self.head_w) + self.head_b
    }

    pub fn forward_cached(&self, phi: ArrayView2<'_, T>) -> Result<DcnCache<T>> {
        if phi.ncols() != self.input_width() {
            return Err(Error::DimMismatch(format!(
                "ranker expects width {}, got {}",
                self.input_width(),
                phi.ncols()
            )));
        }
        let x0 = phi.to_owned();
        let mut x = x0.clone();
        let mut cross_in = Vec::with_capacity(self.cross_w.len());
        for (w, b) in self.cross_w.iter().zip(&self.cross_b) {
            let z = x.dot(&w.t()) + b;
            let next = &x0 * &z + &x;
            cross_in.push(x);
            x = next;
        }
        let mut mlp_in = Vec::with_capacity(self.mlp_w.len());
        let mut mlp_pre = Vec::with_capacity(self.mlp_w.len());
        for (w, b) in self.mlp_w.iter().zip(&self.mlp_b) {
            let a = x.dot(&w.t()) + b;
            let h = a.mapv(|v| v.max(T::zero()));
            mlp_in.push(x);
            mlp_pre.push(a);
            x = h;
        }
        Ok(DcnCache {
            cross_in,
            mlp_in,
            mlp_pre,
            top: x,
        })
    }

    /// Accumulates `Σ_r d_score[r] · ∂score_r/∂θ` into `grad`.
    pub fn backward(&self, phi: ArrayView2<'_, T>, cache: &DcnCache<T>, d_score: ArrayView1<'_, T>, grad: &mut Self) {
        grad.head_w += &cache.top.t().dot(&d_score);
        grad.head_b += d_score.sum();
        let mut dx = d_score
            .insert_axis(Axis(1))
            .dot(&self.head_w.view().insert_axis(Axis(0)));
        for k in (0..self.mlp_w.len()).rev() {
            let da = &dx * &cache.mlp_pre[k].mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
            grad.mlp_w[k] += &da.t().dot(&cache.mlp_in[k]);
            grad.mlp_b[k] += &da.sum_axis(Axis(0));
            dx = da.dot(&self.mlp_w[k]);
        }
        for l in (0..self.cross_w.len()).rev() {
            let dz = &phi * &dx;
            grad.cross_w[l] += &dz.t().dot(&cache.cross_in[l]);
            grad.cross_b[l] += &dz.sum_axis(Axis(0));
            dx = dz.dot(&self.cross_w[l]) + &dx;
        }
    }
}

impl<T: Scalar> Parameters<T> for DcnRanker<T> {
    fn visit(&self, f: &mut dyn FnMut(&[T])) {
        for (w, b) in self.cross_w.iter().zip(&self.cross_b) {
            f(w.as_slice().expect("standard layout"));
            f(b.as_slice().expect("standard layout"));
        }
        for (w, b) in self.mlp_w.iter().zip(&self.mlp_b) {
            f(w.as_slice().expect("standard layout"));
            f(b.as_slice().expect("standard layout"));
        }
        f(self.head_w.as_slice().expect("standard layout"));
        f(std::slice::from_ref(&self.head_b));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        for (w, b) in self.cross_w.iter_mut().zip(self.cross_b.iter_mut()) {
            f(w.as_slice_mut().expect("standard layout"));
            f(b.as_slice_mut().expect("standard layout"));
        }
        for (w, b) in self.mlp_w.iter_mut().zip(self.mlp_b.iter_mut()) {
            f(w.as_slice_mut().expect("standard layout"));
            f(b.as_slice_mut().expect("standard layout"));
        }
        f(self.head_w.as_slice_mut().expect("standard layout"));
        f(std::slice::from_mut(&mut self.head_b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = DcnRanker::<f64>::init(9, &DcnConfig::default(), &mut rng);
        let phi = Array1::from_shape_fn(9, |i| i as f64 * 0.1 - 0.3);
        assert_eq!(r.score(phi.view()).unwrap(), 0.0);
    }

    #[test]
    fn cross_layers_match_hand_unroll() {
        let w0 = array![[0.5, -0.2, 0.1], [0.0, 0.3, 0.7], [-0.4, 0.2, 0.9]];
        let w1 = array![[0.1, 0.1, -0.6], [0.8, 0.0, 0.2], [0.3, -0.5, 0.4]];
        let b0 = array![0.05, -0.1, 0.2];
        let b1 = array![0.0, 0.3, -0.25];
        let r = DcnRanker {
            cross_w: vec![w0.clone(), w1.clone()],
            cross_b: vec![b0.clone(), b1.clone()],
            mlp_w: vec![],
            mlp_b: vec![],
            head_w: array![1.0, -2.0, 0.5],
            head_b: 0.125,
        };
        let x0 = [0.6, -0.3, 0.9];
        let mut x1 = [0.0; 3];
        for i in 0..3 {
            let z: f64 = (0..3).map(|j| w0[[i, j]] * x0[j]).sum::<f64>() + b0[i];
            x1[i] = x0[i] * z + x0[i];
        }
        let mut x2 = [0.0; 3];
        for i in 0..3 {
            let z: f64 = (0..3).map(|j| w1[[i, j]] * x1[j]).sum::<f64>() + b1[i];
            x2[i] = x0[i] * z + x1[i];
        }
        let expected = x2[0] - 2.0 * x2[1] + 0.5 * x2[2] + 0.125;
        let got = r.score(array![0.6, -0.3, 0.9].view()).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn bias_shift_moves_all_scores_equally() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut r = DcnRanker::<f64>::init(5, &DcnConfig { cross_layers: 1, hidden: vec![4] }, &mut rng);
        r.head_w = array![0.3, -0.1, 0.5, 0.2];
        let phi = Array2::from_shape_fn((6, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let before = r.score_batch(phi.view()).unwrap();
        r.head_b += 2.5;
        let after = r.score_batch(phi.view()).unwrap();
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn width_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = DcnRanker::<f64>::init(9, &DcnConfig::default(), &mut rng);
        assert!(r.score(Array1::zeros(5).view()).is_err());
    }
}
