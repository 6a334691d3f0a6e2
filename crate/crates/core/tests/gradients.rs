use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slime_core::retriever::gradcheck::{check_gradient, sample_coords};
use slime_core::retriever::{
    interaction_matrix, ranker_objective, DcnConfig, Parameters, RankerGroupInput, RetrieverConfig, RetrieverModel,
};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, n: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((rows, n), |_| rng.random_range(-1.0f64..1.0));
    for mut r in m.rows_mut() {
        let norm = r.dot(&r).sqrt();
        r /= norm;
    }
    m
}

fn small_model(n: usize, seed: u64) -> RetrieverModel<f64> {
    let config = RetrieverConfig {
        dcn: DcnConfig { cross_layers: 2, hidden: vec![8, 4] },
        ..Default::default()
    };
    let mut model = RetrieverModel::init(n, config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    // move away from the zero-head, near-identity init so every block has signal
    model.projections.image.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    model.projections.tag.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    model.projections.image.gamma = 0.7;
    model.projections.tag.gamma = 0.4;
    model.ranker.head_w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    model.ranker.head_b = 0.1;
    model
}

fn contrastive_case(masked: bool, seed: u64) {
    let (b, nt, n) = (5, 7, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = small_model(n, seed);
    let images = unit_rows(&mut rng, b, n);
    let tags = unit_rows(&mut rng, nt, n);
    let mut m = Array2::from_elem((b, nt), false);
    for j in 0..nt {
        m[[j % b, j]] = true;
    }
    m[[0, 3]] = true;
    m[[4, 0]] = true;
    let mask = masked.then(|| {
        let mut mk = m.clone();
        for i in 0..b {
            mk[[i, (i + 2) % nt]] = true;
        }
        mk
    });
    let p = &model.projections;
    let (_, grad) = p.batch_objective(images.view(), tags.view(), m.view(), mask.as_ref().map(|x| x.view())).unwrap();
    let flat = p.flatten();
    let g = grad.flatten();
    let mut coords = sample_coords(flat.len(), 20, seed);
    coords.push(flat.len() - 1); // log temperature
    let report = check_gradient(&flat, &g, &coords, STEP, |x| {
        let mut q = p.clone();
        q.load_flat(x);
        q.batch_objective(images.view(), tags.view(), m.view(), mask.as_ref().map(|x| x.view()))
            .unwrap()
            .0
            .total
    });
    assert!(report.max_rel_err < TOL, "{report:#?}");
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    contrastive_case(false, 1);
    contrastive_case(false, 2);
}

#[test]
fn masked_contrastive_gradient_matches_finite_differences() {
    contrastive_case(true, 3);
}

fn ranker_case(ratio: f64, seed: u64) {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = small_model(n, seed);
    let groups: Vec<RankerGroupInput<f64>> = (0..3)
        .map(|_| {
            let img = unit_rows(&mut rng, 1, n);
            let pos = unit_rows(&mut rng, 2, n);
            let neg = unit_rows(&mut rng, 6, n);
            RankerGroupInput {
                positives: interaction_matrix(img.row(0), pos.view()).unwrap(),
                negatives: interaction_matrix(img.row(0), neg.view()).unwrap(),
            }
        })
        .collect();
    let margin = 2.0;
    let (_, grad) = ranker_objective(&model.ranker, &groups, margin, ratio).unwrap();
    let flat = model.ranker.flatten();
    let coords = sample_coords(flat.len(), 20, seed);
    let report = check_gradient(&flat, &grad.flatten(), &coords, STEP, |x| {
        let mut r = model.ranker.clone();
        r.load_flat(x);
        ranker_objective(&r, &groups, margin, ratio).unwrap().0
    });
    assert!(report.max_rel_err < TOL, "{report:#?}");
}

#[test]
fn ranker_gradient_matches_finite_differences() {
    ranker_case(0.5, 4);
    ranker_case(1.0, 5);
    ranker_case(0.1, 6);
}
