//! Small dense linear-algebra kernels: one-sided Jacobi SVD, pseudo-inverse
//! and Cholesky solves. Written against [`Scalar`] so they work for both
//! `f32` and `f64`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::scalar::{dot, Scalar};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// For an `r×c` input with `k = min(r, c)`: `u` is `r×k`, `s` has length `k`
/// (descending) and `v` is `c×k`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub s: Array1<T>,
    pub v: Array2<T>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Scalar>(a: ArrayView2<'_, T>) -> Svd<T> {
    let (rows, cols) = a.dim();
    if rows < cols {
        let t = svd(a.t());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    // Work on Aᵀ in row-major order so each column of A is a contiguous row.
    let mut work: Array2<T> = a.t().as_standard_layout().into_owned();
    let mut vt: Array2<T> = Array2::eye(cols);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let wp = work.row(p);
                    let wq = work.row(q);
                    let wp = wp.as_slice().expect("standard layout");
                    let wq = wq.as_slice().expect("standard layout");
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = c * t;
                rotate_rows(&mut work, p, q, c, sn);
                rotate_rows(&mut vt, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<(T, usize)> = (0..cols)
        .map(|j| {
            let r = work.row(j);
            (dot(r.as_slice().unwrap(), r.as_slice().unwrap()).sqrt(), j)
        })
        .collect();
    sigma.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));

    let k = cols;
    let mut u = Array2::zeros((rows, k));
    let mut v = Array2::zeros((cols, k));
    let mut s_out = Array1::zeros(k);
    for (out, &(sv, j)) in sigma.iter().enumerate() {
        s_out[out] = sv;
        if sv > T::zero() {
            let inv = T::one() / sv;
            for i in 0..rows {
                u[[i, out]] = work[[j, i]] * inv;
            }
        }
        for i in 0..cols {
            v[[i, out]] = vt[[j, i]];
        }
    }
    Svd { u, s: s_out, v }
}

fn rotate_rows<T: Scalar>(m: &mut Array2<T>, p: usize, q: usize, c: T, s: T) {
    let (mut rp, mut rq) = m.multi_slice_mut((s![p, ..], s![q, ..]));
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `rel_cutoff · σ_max` treated as zero. Returns `(pinv, rank)`.
pub fn pinv<T: Scalar>(a: ArrayView2<'_, T>, rel_cutoff: T) -> (Array2<T>, usize) {
    let Svd { u, s, v } = svd(a);
    let smax = s.iter().copied().fold(T::zero(), T::max);
    let cutoff = rel_cutoff * smax;
    let mut scaled_v = v;
    let mut rank = 0;
    for (j, &sv) in s.iter().enumerate() {
        let mut col = scaled_v.column_mut(j);
        if sv > cutoff && sv > T::zero() {
            rank += 1;
            col.mapv_inplace(|x| x / sv);
        } else {
            col.fill(T::zero());
        }
    }
    (scaled_v.dot(&u.t()), rank)
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
/// Returns `None` if `A` is not numerically positive definite.
pub fn cholesky_solve<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / d;
        }
    }
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        // forward: L y = b
        for i in 0..n {
            let mut acc = col[i];
            for k in 0..i {
                acc -= l[[i, k]] * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut acc = col[i];
            for k in (i + 1)..n {
                acc -= l[[k, i]] * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
    }
    Some(x)
}

/// Frobenius norm.
pub fn frobenius<T: Scalar>(a: ArrayView2<'_, T>) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}
