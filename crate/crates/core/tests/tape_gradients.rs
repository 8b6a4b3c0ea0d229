//! Every tape op against central differences, 20 random instances each.

use std::sync::Arc;

use dualgcn::graph::SparseMatrix;
use dualgcn::tensor::{finite_diff_check, GradCheckConfig, Matrix, Reduction, Tape, TensorId};
use dualgcn::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=8), rng.random_range(1..=8))
}

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::uniform(r, c, 1.0, rng)
}

/// Reduces any output to a scalar with fixed random weights, so every
/// output entry contributes with a distinct coefficient.
fn weigh(tape: &mut Tape, out: TensorId, seed: u64) -> Result<TensorId> {
    let (r, c) = tape.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = tape.leaf(Matrix::uniform(r, c, 1.0, &mut rng));
    let zero = tape.leaf(Matrix::zeros(r, c));
    let prod = tape.hadamard(out, w)?;
    let shifted = tape.add_scaled(prod, w, 1.0, 0.5)?;
    tape.frobenius_sq_diff(shifted, zero)
}

fn check(name: &str, params: Vec<Matrix>, f: impl Fn(&mut Tape, &[TensorId]) -> Result<TensorId>) {
    let report = finite_diff_check(f, &params, &GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "{name}: max relative error {}", report.max_rel_error);
}

fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Arc<SparseMatrix> {
    let mut t = Vec::new();
    for i in 0..r {
        for j in 0..c {
            if rng.random::<f64>() < 0.4 {
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(r, c, t).unwrap())
}

#[test]
fn matmul() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = dims(&mut rng);
        let n = rng.random_range(1..=8);
        let params = vec![rand_matrix(&mut rng, m, k), rand_matrix(&mut rng, k, n)];
        check("matmul", params, |t, p| {
            let y = t.matmul(p[0], p[1])?;
            weigh(t, y, seed)
        });
    }
}

#[test]
fn spmm() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = dims(&mut rng);
        let n = rng.random_range(1..=8);
        let p_mat = random_sparse(&mut rng, m, k);
        let params = vec![rand_matrix(&mut rng, k, n)];
        check("spmm", params, |t, p| {
            let y = t.spmm(&p_mat, p[0])?;
            weigh(t, y, seed)
        });
    }
}

#[test]
fn gram_and_scale() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = dims(&mut rng);
        let s = rng.random_range(-2.0..2.0);
        check("gram", vec![rand_matrix(&mut rng, m, k)], |t, p| {
            let g = t.gram(p[0]);
            let y = t.scale(g, s);
            weigh(t, y, seed)
        });
    }
}

#[test]
fn elementwise_ops() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = dims(&mut rng);
        let (wa, wb) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let params = vec![rand_matrix(&mut rng, m, n), rand_matrix(&mut rng, m, n)];
        check("sigmoid/hadamard/add_scaled", params.clone(), |t, p| {
            let s = t.sigmoid(p[0]);
            let h = t.hadamard(s, p[1])?;
            let y = t.add_scaled(h, p[1], wa, wb)?;
            let y = t.add(y, p[0])?;
            weigh(t, y, seed)
        });
        // keep inputs away from the ReLU kink
        let away: Vec<Matrix> = params
            .iter()
            .map(|m| m.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }))
            .collect();
        check("relu", away, |t, p| {
            let y = t.relu(p[0]);
            let y = t.hadamard(y, p[1])?;
            weigh(t, y, seed)
        });
    }
}

#[test]
fn add_row_and_concat() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = dims(&mut rng);
        let n2 = rng.random_range(1..=8);
        let params = vec![
            rand_matrix(&mut rng, m, n),
            rand_matrix(&mut rng, 1, n),
            rand_matrix(&mut rng, m, n2),
        ];
        check("add_row/concat_cols", params, |t, p| {
            let b = t.add_row(p[0], p[1])?;
            let y = t.concat_cols(b, p[2])?;
            weigh(t, y, seed)
        });
    }
}

#[test]
fn softmaxes() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = dims(&mut rng);
        let pick = rng.random_range(0..3);
        let params: Vec<Matrix> = (0..3).map(|_| rand_matrix(&mut rng, m, n).map(|v| 3.0 * v)).collect();
        check("softmax_rows", params.clone(), |t, p| {
            let y = t.softmax_rows(p[0]);
            weigh(t, y, seed)
        });
        check("channel_softmax", params, |t, p| {
            let y = t.channel_softmax(&[p[0], p[1], p[2]], pick)?;
            weigh(t, y, seed)
        });
    }
}

#[test]
fn row_normalization_and_cosine() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = dims(&mut rng);
        let params = vec![rand_matrix(&mut rng, m, n), rand_matrix(&mut rng, m, n)];
        check("l2_normalize_rows", params.clone(), |t, p| {
            let y = t.l2_normalize_rows(p[0])?;
            weigh(t, y, seed)
        });
        check("mean_row_cosine", params.clone(), |t, p| t.mean_row_cosine(p[0], p[1]));
        check("frobenius_sq_diff", params, |t, p| t.frobenius_sq_diff(p[0], p[1]));
    }
}

#[test]
fn masked_cross_entropy() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, c) = (rng.random_range(1..=8), rng.random_range(2..=8));
        let mut y = Matrix::zeros(m, c);
        for i in 0..m {
            y.row_mut(i)[rng.random_range(0..c)] = 1.0;
        }
        let mask: Vec<usize> = (0..m).filter(|_| rng.random::<f64>() < 0.7).chain([0]).collect();
        let mut mask = mask;
        mask.sort_unstable();
        mask.dedup();
        for reduction in [Reduction::Sum, Reduction::Mean] {
            check("masked_cross_entropy", vec![rand_matrix(&mut rng, m, c)], |t, p| {
                let probs = t.softmax_rows(p[0]);
                t.masked_cross_entropy(probs, &y, &mask, reduction)
            });
        }
    }
}
