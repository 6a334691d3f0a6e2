use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Denominator floor so coordinates with near-zero gradient are judged by
/// absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_err: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// `count` distinct coordinates out of `len`, seeded.
pub fn sample_coords(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, len, count.min(len)).into_vec();
    v.sort_unstable();
    v
}

/// Compares `analytic[i]` with the central difference of `loss` at each
/// coordinate in `coords`.
pub fn check_gradient(
    params: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    let mut work = params.to_vec();
    let checks: Vec<CoordCheck> = coords
        .iter()
        .map(|&i| {
            work[i] = params[i] + step;
            let up = loss(&work);
            work[i] = params[i] - step;
            let down = loss(&work);
            work[i] = params[i];
            let numeric = (up - down) / (2.0 * step);
            CoordCheck {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_err: relative_error(analytic[i], numeric),
            }
        })
        .collect();
    let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    GradCheckReport { checks, max_rel_err }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let p = [1.0, -2.0, 0.5];
        let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let r = check_gradient(&p, &g, &[0, 1, 2], 1e-5, |x| x.iter().map(|v| v * v).sum());
        assert!(r.max_rel_err < 1e-8);
        let wrong = [2.0, -4.0, 2.0];
        let r = check_gradient(&p, &wrong, &[2], 1e-5, |x| x.iter().map(|v| v * v).sum());
        assert!(r.max_rel_err > 0.5);
    }
}
