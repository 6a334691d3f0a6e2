use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::retriever::params::Parameters;
use crate::scalar::Scalar;

/// Residual affine map followed by re-normalization:
/// `y = normalize(e + γ (W e + b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub gamma: T,
}

/// Intermediate values kept for the backward pass of a batch.
pub struct ProjectionCache<T> {
    affine: Array2<T>,
    output: Array2<T>,
    norms: Array1<T>,
}

impl<T: Scalar> ProjectionCache<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

impl<T: Scalar> Projection<T> {
    /// Small random `W`, zero `b`: output stays within ~γ·0.1 of the input.
    pub fn init<R: Rng>(dim: usize, gamma: f64, rng: &mut R) -> Self {
        let std = 0.1 / (dim as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((dim, dim), |_| T::lit(rng.sample::<f64, _>(StandardNormal) * std)),
            bias: Array1::zeros(dim),
            gamma: T::lit(gamma),
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, e: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let out = self.forward_batch(e.insert_axis(Axis(0)))?;
        Ok(out.row(0).to_owned())
    }

    pub fn forward_batch(&self, input: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: ArrayView2<'_, T>) -> Result<ProjectionCache<T>> {
        if input.ncols() != self.dim() {
            return Err(Error::DimMismatch(format!(
                "projection expects dim {}, got {}",
                self.dim(),
                input.ncols()
            )));
        }
        let affine = input.dot(&self.weight.t()) + &self.bias;
        let mut output = &input + &(&affine * self.gamma);
        let mut norms = Array1::zeros(output.nrows());
        for (i, mut row) in output.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if n.as_f64() < 1e-12 {
                return Err(Error::ZeroRow(i));
            }
            row.mapv_inplace(|x| x / n);
            norms[i] = n;
        }
        Ok(ProjectionCache { affine, output, norms })
    }

    /// Accumulates parameter gradients into `grad` given `d_output`.
    pub fn backward(&self, input: ArrayView2<'_, T>, cache: &ProjectionCache<T>, d_output: ArrayView2<'_, T>, grad: &mut Self) {
        let y = &cache.output;
        let radial = (&d_output * y).sum_axis(Axis(1));
        let mut d_pre = d_output.to_owned() - &(y * &radial.insert_axis(Axis(1)));
        for (mut row, &n) in d_pre.rows_mut().into_iter().zip(cache.norms.iter()) {
            row.mapv_inplace(|x| x / n);
        }
        grad.gamma += (&d_pre * &cache.affine).sum();
        let d_affine = d_pre * self.gamma;
        grad.weight += &d_affine.t().dot(&input);
        grad.bias += &d_affine.sum_axis(Axis(0));
    }
}

impl<T: Scalar> Parameters<T> for Projection<T> {
    fn visit(&self, f: &mut dyn FnMut(&[T])) {
        f(self.weight.as_slice().expect("standard layout"));
        f(self.bias.as_slice().expect("standard layout"));
        f(std::slice::from_ref(&self.gamma));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        f(self.weight.as_slice_mut().expect("standard layout"));
        f(self.bias.as_slice_mut().expect("standard layout"));
        f(std::slice::from_mut(&mut self.gamma));
    }
}
