//! One-step linear alignment from a victim embedding space into the attack
//! space: `W = argmin ‖E_A − E_V W‖²`, solved in closed form.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, frobenius, pinv};
use crate::scalar::{dot, norm, Scalar};
use crate::store::{read_matrix_payload, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    NormalEquation,
    #[default]
    SvdPinv,
    Ridge,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal_equation" => Ok(Solver::NormalEquation),
            "svd_pinv" => Ok(Solver::SvdPinv),
            "ridge" => Ok(Solver::Ridge),
            other => Err(Error::InvalidArgument(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlignOptions {
    pub solver: Solver,
    /// Only used by [`Solver::Ridge`].
    pub ridge_lambda: f64,
    /// Singular values below `sv_cutoff · σ_max` are dropped by the pseudo-inverse.
    pub sv_cutoff: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            solver: Solver::SvdPinv,
            ridge_lambda: 0.0,
            sv_cutoff: 1e-10,
        }
    }
}

/// Solver metadata stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMeta {
    pub source_dim: usize,
    pub target_dim: usize,
    pub samples_used: usize,
    pub solver: Solver,
    pub ridge_lambda: f64,
    pub sv_cutoff: f64,
    /// Numerical rank of `E_V` seen by the solver (pseudo-inverse only).
    pub rank: Option<usize>,
    /// Whether the rows were unit-normalized before solving.
    pub rows_normalized: bool,
    /// Training residual ‖E_A − E_V W‖_F.
    pub residual: f64,
}

/// Learned `m × n` map taking victim rows into the attack space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap<T> {
    pub weights: Array2<T>,
    pub meta: AlignmentMeta,
}

impl<T: Scalar> AlignmentMap<T> {
    pub fn identity(dim: usize) -> Self {
        Self::from_weights(Array2::eye(dim))
    }

    pub fn from_weights(weights: Array2<T>) -> Self {
        let meta = AlignmentMeta {
            source_dim: weights.nrows(),
            target_dim: weights.ncols(),
            samples_used: 0,
            solver: Solver::SvdPinv,
            ridge_lambda: 0.0,
            sv_cutoff: 0.0,
            rank: None,
            rows_normalized: false,
            residual: 0.0,
        };
        Self { weights, meta }
    }

    pub fn source_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Writes `W` as an EMBMAT01 container plus `.ids` and `.json` sidecars.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ids = (0..self.source_dim()).map(|i| format!("w{i}")).collect();
        EmbeddingMatrix::new(ids, self.weights.clone())?.save(path)?;
        let meta_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.meta)?;
        fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let weights = read_matrix_payload::<T>(path)?;
        let meta_path = path.with_extension("json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: AlignmentMeta = serde_json::from_str(&text)?;
        if meta.source_dim != weights.nrows() || meta.target_dim != weights.ncols() {
            return Err(Error::DimMismatch(format!(
                "metadata says {}x{}, weights are {:?}",
                meta.source_dim,
                meta.target_dim,
                weights.dim()
            )));
        }
        Ok(Self { weights, meta })
    }
}

fn check_finite<T: Scalar>(m: ArrayView2<'_, T>) -> Result<()> {
    match m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFiniteInput { row, col }),
        None => Ok(()),
    }
}

/// Solves the least-squares problem on raw matrices (`b×m` and `b×n`).
pub fn solve_least_squares<T: Scalar>(
    victim: ArrayView2<'_, T>,
    attack: ArrayView2<'_, T>,
    opts: &AlignOptions,
) -> Result<(Array2<T>, Option<usize>)> {
    if victim.nrows() != attack.nrows() {
        return Err(Error::DimMismatch(format!(
            "victim has {} rows, attack has {}",
            victim.nrows(),
            attack.nrows()
        )));
    }
    if victim.nrows() == 0 {
        return Err(Error::InvalidArgument("need at least one alignment sample".into()));
    }
    if opts.ridge_lambda < 0.0 || !opts.ridge_lambda.is_finite() {
        return Err(Error::InvalidArgument("ridge_lambda must be finite and >= 0".into()));
    }
    check_finite(victim)?;
    check_finite(attack)?;

    match opts.solver {
        Solver::SvdPinv => {
            let (p, rank) = pinv(victim, T::lit(opts.sv_cutoff));
            Ok((p.dot(&attack), Some(rank)))
        }
        Solver::NormalEquation | Solver::Ridge => {
            let mut gram = victim.t().dot(&victim);
            if opts.solver == Solver::Ridge {
                let lambda = T::lit(opts.ridge_lambda);
                for i in 0..gram.nrows() {
                    gram[[i, i]] += lambda;
                }
            }
            let rhs = victim.t().dot(&attack);
            let w = cholesky_solve(gram.view(), rhs.view()).ok_or_else(|| {
                Error::SolverFailure("Gram matrix is not positive definite; use svd_pinv or ridge".into())
            })?;
            Ok((w, None))
        }
    }
}

/// Fits the victim→attack map on rows with identical ids in identical order.
pub fn fit_alignment<T: Scalar>(
    victim: &EmbeddingMatrix<T>,
    attack: &EmbeddingMatrix<T>,
    opts: &AlignOptions,
) -> Result<AlignmentMap<T>> {
    if victim.rows() != attack.rows() {
        return Err(Error::DimMismatch(format!(
            "victim has {} rows, attack has {}",
            victim.rows(),
            attack.rows()
        )));
    }
    if let Some(pos) = victim.ids().iter().zip(attack.ids()).position(|(a, b)| a != b) {
        return Err(Error::IdOrderMismatch(pos));
    }
    let (weights, rank) = solve_least_squares(victim.values(), attack.values(), opts)?;
    check_finite(weights.view()).map_err(|_| Error::SolverFailure("non-finite weights".into()))?;
    let residual = residual(victim.values(), attack.values(), weights.view()).as_f64();
    Ok(AlignmentMap {
        meta: AlignmentMeta {
            source_dim: victim.dim(),
            target_dim: attack.dim(),
            samples_used: victim.rows(),
            solver: opts.solver,
            ridge_lambda: opts.ridge_lambda,
            sv_cutoff: opts.sv_cutoff,
            rank,
            rows_normalized: victim.is_normalized() && attack.is_normalized(),
            residual,
        },
        weights,
    })
}

/// ‖E_A − E_V W‖_F.
pub fn residual<T: Scalar>(victim: ArrayView2<'_, T>, attack: ArrayView2<'_, T>, w: ArrayView2<'_, T>) -> T {
    frobenius((&attack - &victim.dot(&w)).view())
}

/// Maps victim rows into the attack space, optionally re-normalizing them.
pub fn apply_alignment<T: Scalar>(
    victim: &EmbeddingMatrix<T>,
    map: &AlignmentMap<T>,
    renormalize: bool,
) -> Result<EmbeddingMatrix<T>> {
    if victim.dim() != map.source_dim() {
        return Err(Error::DimMismatch(format!(
            "victim dim {} but map expects {}",
            victim.dim(),
            map.source_dim()
        )));
    }
    let out = EmbeddingMatrix::new(victim.ids().to_vec(), victim.values().dot(&map.weights))?;
    if renormalize {
        out.l2_normalize()
    } else {
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosineReport {
    pub per_row: Vec<f64>,
    pub mean: f64,
}

/// Row-wise cosine between attack rows and aligned rows.
pub fn alignment_cosine<T: Scalar>(attack: &EmbeddingMatrix<T>, aligned: &EmbeddingMatrix<T>) -> Result<CosineReport> {
    if attack.values().dim() != aligned.values().dim() {
        return Err(Error::DimMismatch(format!(
            "{:?} vs {:?}",
            attack.values().dim(),
            aligned.values().dim()
        )));
    }
    if let Some(pos) = attack.ids().iter().zip(aligned.ids()).position(|(a, b)| a != b) {
        return Err(Error::IdOrderMismatch(pos));
    }
    let mut per_row = Vec::with_capacity(attack.rows());
    for i in 0..attack.rows() {
        let a = attack.row(i);
        let b = aligned.row(i);
        let (a, b) = (a.as_slice().unwrap(), b.as_slice().unwrap());
        let (na, nb) = (norm(a), norm(b));
        if na.as_f64() < 1e-12 || nb.as_f64() < 1e-12 {
            return Err(Error::ZeroRow(i));
        }
        let c = (dot(a, b) / (na * nb)).as_f64().clamp(-1.0, 1.0);
        per_row.push(c);
    }
    let mean = if per_row.is_empty() {
        0.0
    } else {
        per_row.iter().sum::<f64>() / per_row.len() as f64
    };
    Ok(CosineReport { per_row, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn mat(values: Array2<f64>) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::new(ids(values.nrows()), values).unwrap()
    }

    #[test]
    fn self_alignment_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = mat(random(64, 8, &mut rng));
        for solver in [Solver::SvdPinv, Solver::NormalEquation] {
            let opts = AlignOptions { solver, ..Default::default() };
            let w = fit_alignment(&e, &e, &opts).unwrap().weights;
            let err = (&w - &Array2::<f64>::eye(8)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-6, "{solver:?}: {err}");
        }
    }

    #[test]
    fn single_sample_rank_one() {
        let v = mat(array![[1.0, 0.0]]);
        let a = mat(array![[0.0, 1.0]]);
        let map = fit_alignment(&v, &a, &AlignOptions::default()).unwrap();
        assert_eq!(map.weights, array![[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(map.meta.rank, Some(1));
        assert_eq!(map.meta.samples_used, 1);
    }

    #[test]
    fn normal_equation_fails_on_singular_gram() {
        let v = mat(array![[1.0, 0.0]]);
        let a = mat(array![[0.0, 1.0]]);
        let opts = AlignOptions {
            solver: Solver::NormalEquation,
            ..Default::default()
        };
        assert!(matches!(fit_alignment(&v, &a, &opts), Err(Error::SolverFailure(_))));
        let ridge = AlignOptions {
            solver: Solver::Ridge,
            ridge_lambda: 1e-3,
            ..Default::default()
        };
        assert!(fit_alignment(&v, &a, &ridge).is_ok());
    }

    #[test]
    fn id_order_mismatch() {
        let v = EmbeddingMatrix::new(vec!["a".into(), "b".into()], Array2::<f64>::eye(2)).unwrap();
        let a = EmbeddingMatrix::new(vec!["b".into(), "a".into()], Array2::<f64>::eye(2)).unwrap();
        assert!(matches!(
            fit_alignment(&v, &a, &AlignOptions::default()),
            Err(Error::IdOrderMismatch(0))
        ));
    }

    #[test]
    fn solvers_agree_when_well_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random(50, 8, &mut rng);
        let a = random(50, 6, &mut rng);
        let (w1, _) = solve_least_squares(v.view(), a.view(), &AlignOptions::default()).unwrap();
        let opts = AlignOptions {
            solver: Solver::NormalEquation,
            ..Default::default()
        };
        let (w2, _) = solve_least_squares(v.view(), a.view(), &opts).unwrap();
        let rel = frobenius((&w1 - &w2).view()) / frobenius(w1.view());
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn least_squares_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random(40, 5, &mut rng);
        let a = random(40, 4, &mut rng);
        let (w, _) = solve_least_squares(v.view(), a.view(), &AlignOptions::default()).unwrap();
        let best = residual(v.view(), a.view(), w.view());
        for _ in 0..100 {
            let dw = random(5, 4, &mut rng) * 1e-3;
            assert!(residual(v.view(), a.view(), (&w + &dw).view()) >= best);
        }
    }

    #[test]
    fn invariant_to_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = random(30, 6, &mut rng);
        let a = random(30, 5, &mut rng);
        let mut perm: Vec<usize> = (0..30).collect();
        perm.reverse();
        perm.swap(3, 17);
        let vp = Array2::from_shape_fn((30, 6), |(i, j)| v[[perm[i], j]]);
        let ap = Array2::from_shape_fn((30, 5), |(i, j)| a[[perm[i], j]]);
        let opts = AlignOptions::default();
        let (w1, _) = solve_least_squares(v.view(), a.view(), &opts).unwrap();
        let (w2, _) = solve_least_squares(vp.view(), ap.view(), &opts).unwrap();
        assert!(frobenius((&w1 - &w2).view()) / frobenius(w1.view()) < 1e-10);
    }

    #[test]
    fn apply_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = mat(random(5, 4, &mut rng));
        let out = apply_alignment(&e, &AlignmentMap::identity(4), false).unwrap();
        assert_eq!(out.values(), e.values());
        let zero = AlignmentMap::from_weights(Array2::<f64>::zeros((4, 3)));
        let raw = apply_alignment(&e, &zero, false).unwrap();
        assert!(raw.values().iter().all(|&x| x == 0.0));
        assert!(matches!(apply_alignment(&e, &zero, true), Err(Error::ZeroRow(0))));
        let wrong = AlignmentMap::from_weights(Array2::<f64>::zeros((3, 3)));
        assert!(matches!(apply_alignment(&e, &wrong, false), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn cosine_extremes() {
        let e = mat(array![[1.0, 2.0], [0.5, -1.0]]);
        let neg = mat(array![[-1.0, -2.0], [-0.5, 1.0]]);
        let same = alignment_cosine(&e, &e).unwrap();
        assert!(same.per_row.iter().all(|&c| (c - 1.0).abs() < 1e-12));
        let opp = alignment_cosine(&e, &neg).unwrap();
        assert!(opp.per_row.iter().all(|&c| (c + 1.0).abs() < 1e-12));
        assert!((opp.mean + 1.0).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = mat(random(20, 4, &mut rng));
        let a = mat(random(20, 3, &mut rng));
        let map = fit_alignment(&v.cast::<f32>(), &a.cast::<f32>(), &AlignOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.bin");
        map.save(&p).unwrap();
        let back = AlignmentMap::<f32>::load(&p).unwrap();
        assert_eq!(back, map);
    }
}
