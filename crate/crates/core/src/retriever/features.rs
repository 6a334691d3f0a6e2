use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Width of the interaction vector for embedding dimension `n`.
pub const fn feature_width(n: usize) -> usize {
    4 * n + 1
}

fn cosine<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    let denom = (a.dot(&a) * b.dot(&b)).sqrt();
    if denom == T::zero() {
        T::zero()
    } else {
        a.dot(&b) / denom
    }
}

/// `[e_i; e_t; cos(e_i, e_t); e_i ⊙ e_t; e_i − e_t]`.
pub fn interaction_features<T: Scalar>(e_i: ArrayView1<'_, T>, e_t: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if e_i.len() != e_t.len() {
        return Err(Error::DimMismatch(format!("image dim {} vs tag dim {}", e_i.len(), e_t.len())));
    }
    let out = interaction_matrix(e_i, e_t.insert_axis(ndarray::Axis(0)))?;
    Ok(out.row(0).to_owned())
}

/// One feature row per tag in `tags`, all paired with the same image.
pub fn interaction_matrix<T: Scalar>(e_i: ArrayView1<'_, T>, tags: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = e_i.len();
    if tags.ncols() != n {
        return Err(Error::DimMismatch(format!("image dim {n} vs tag dim {}", tags.ncols())));
    }
    let mut out = Array2::zeros((tags.nrows(), feature_width(n)));
    for (mut row, t) in out.rows_mut().into_iter().zip(tags.rows()) {
        row.slice_mut(s![..n]).assign(&e_i);
        row.slice_mut(s![n..2 * n]).assign(&t);
        row[2 * n] = cosine(e_i, t);
        row.slice_mut(s![2 * n + 1..3 * n + 1]).assign(&(&e_i * &t));
        row.slice_mut(s![3 * n + 1..]).assign(&(&e_i - &t));
    }
    Ok(out)
}
