use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{knn_feature_graph, normalized_adjacency, Graph};
use crate::losses::closeness_loss;
use crate::tensor::{finite_diff_check, GradCheckConfig};

fn random_instance(n: usize, d: usize, c: usize, seed: u64) -> (Graph, GraphInputs) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::uniform(n, d, 1.0, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < 0.3 {
                edges.push((a, b));
            }
        }
    }
    let g = Graph::new(n, edges, Some(labels), x.clone()).unwrap();
    let g_f = knn_feature_graph(&x, 3).unwrap();
    let inputs = GraphInputs {
        topology: Arc::new(normalized_adjacency(&g)),
        feature: Arc::new(normalized_adjacency(&g_f)),
        x,
    };
    (g, inputs)
}

fn small_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        hidden: 6,
        mlp_hidden: 5,
        ..ModelConfig::default()
    }
}

fn scalar_p() -> Arc<SparseMatrix> {
    Arc::new(SparseMatrix::identity(1))
}

#[test]
fn residual_alpha_zero_is_h0() {
    let mut t = Tape::new();
    let p = Arc::new(SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap());
    let h = t.leaf(Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]));
    let h0 = t.leaf(Matrix::from_rows(&[[0.5, 0.25], [-1.0, 2.0]]));
    let w = t.leaf(Matrix::from_rows(&[[2.0, 0.0], [1.0, 1.0]]));
    let out = residual_gcn_layer(&mut t, &p, h, h0, w, 0.0, ResidualMode::Initial).unwrap();
    assert_eq!(t.value(out), t.value(h0));
}

#[test]
fn residual_alpha_one_is_plain_gcn_layer() {
    let mut t = Tape::new();
    let p = Arc::new(SparseMatrix::from_triplets(2, 2, vec![(0, 1, 0.5), (1, 0, 0.5), (0, 0, 0.5)]).unwrap());
    let hv = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]);
    let wv = Matrix::from_rows(&[[2.0, 0.0], [1.0, -1.0]]);
    let (h, w) = (t.leaf(hv.clone()), t.leaf(wv.clone()));
    let h0 = t.leaf(Matrix::filled(2, 2, 9.0));
    let out = residual_gcn_layer(&mut t, &p, h, h0, w, 1.0, ResidualMode::Initial).unwrap();
    let expected = p.spmm(&hv.matmul(&wv).unwrap()).unwrap().map(|v| v.max(0.0));
    assert_eq!(t.value(out), &expected);
}

#[test]
fn residual_scalar_case() {
    let mut t = Tape::new();
    let h = t.leaf(Matrix::scalar(2.0));
    let h0 = t.leaf(Matrix::scalar(5.0));
    let w = t.leaf(Matrix::scalar(1.0));
    let out = residual_gcn_layer(&mut t, &scalar_p(), h, h0, w, 0.8, ResidualMode::Initial).unwrap();
    assert!((t.value(out).item() - 2.6).abs() < 1e-15);
    let lit = residual_gcn_layer(&mut t, &scalar_p(), h, h0, w, 0.8, ResidualMode::Literal).unwrap();
    assert!((t.value(lit).item() - 2.6).abs() < 1e-15);
}

#[test]
fn encoder_identity_fixed_point() {
    let mut t = Tape::new();
    let p = Arc::new(SparseMatrix::identity(3));
    let h0v = Matrix::from_rows(&[[1.0, 0.0], [0.5, 2.0], [0.0, 3.0]]);
    let h0 = t.leaf(h0v.clone());
    let w = [t.leaf(Matrix::identity(2)), t.leaf(Matrix::identity(2))];
    let z = encoder_forward(&mut t, &p, h0, w, 0.8, ResidualMode::Initial).unwrap();
    let diff = t.value(z).zip_map(&h0v, |a, b| a - b).max_abs();
    assert!(diff < 1e-15);
    let z0 = encoder_forward(&mut t, &p, h0, w, 0.0, ResidualMode::Initial).unwrap();
    assert_eq!(t.value(z0), &h0v);
}

#[test]
fn common_input_mixing() {
    let mut t = Tape::new();
    let hs = t.leaf(Matrix::scalar(1.0));
    let z = t.leaf(Matrix::scalar(3.0));
    let mix = |t: &mut Tape, zeta| {
        let id = common_input(t, hs, z, zeta).unwrap();
        t.value(id).item()
    };
    assert_eq!(mix(&mut t, 1.0), 1.0);
    assert_eq!(mix(&mut t, 0.0), 3.0);
    assert!((mix(&mut t, 0.85) - 1.3).abs() < 1e-15);
}

#[test]
fn shared_encoder_symmetry() {
    let (_, inputs) = random_instance(8, 4, 2, 5);
    let cfg = small_config(ModelKind::DualSpace);
    let model = ModelParams::init(&cfg, 4, 2, 1).unwrap();
    let Layout::DualSpace(slots) = &model.layout else { unreachable!() };
    let mut t = Tape::new();
    let ids = model.store.bind(&mut t);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hs = t.leaf(Matrix::uniform(8, 6, 1.0, &mut rng));
    let z = t.leaf(Matrix::uniform(8, 6, 1.0, &mut rng));
    let (z_ct, z_cf, _) = common_encoder(
        &mut t,
        &ids,
        &inputs.topology,
        &inputs.topology,
        hs,
        z,
        z,
        slots.common_encoder,
        &slots.combiner,
        &cfg,
    )
    .unwrap();
    assert_eq!(t.value(z_ct), t.value(z_cf));
    let l = closeness_loss(&mut t, z_ct, z_cf, false).unwrap();
    assert_eq!(t.value(l).item(), 0.0);
}

#[test]
fn fusion_with_forced_attention() {
    let mut t = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let zs: Vec<Matrix> = (0..3).map(|_| Matrix::uniform(4, 3, 1.0, &mut rng)).collect();
    let [z_t, z_f, z_c] = [0, 1, 2].map(|i| t.leaf(zs[i].clone()));
    let ones = t.leaf(Matrix::filled(4, 3, 1.0));
    let zeros = t.leaf(Matrix::zeros(4, 3));
    let (zt, zf, ..) = fuse(&mut t, [z_t, z_f, z_c], [ones; 3]).unwrap();
    assert_eq!(t.value(zt), &zs[0].zip_map(&zs[2], |a, b| a + b));
    assert_eq!(t.value(zf), &zs[1].zip_map(&zs[2], |a, b| a + b));
    let (zt, zf, ..) = fuse(&mut t, [z_t, z_f, z_c], [zeros; 3]).unwrap();
    assert_eq!(t.value(zt).max_abs(), 0.0);
    assert_eq!(t.value(zf).max_abs(), 0.0);
}

#[test]
fn zero_output_layer_predicts_uniform() {
    for kind in [ModelKind::DualSpace, ModelKind::Gcn, ModelKind::KnnGcn] {
        let (_, inputs) = random_instance(10, 4, 3, 3);
        let mut model = ModelParams::init(&small_config(kind), 4, 3, 0).unwrap();
        let last = match &model.layout {
            Layout::DualSpace(s) => s.output,
            Layout::Gcn(s) => s.layers[1],
        };
        let mut values = model.store.values();
        values[last.weight] = Matrix::zeros(values[last.weight].rows(), 3);
        model.store.set_values(values).unwrap();
        let y = model.predict_proba(&inputs).unwrap();
        for row in y.row_iter() {
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-15, "{kind:?}");
            }
        }
    }
}

#[test]
fn predictions_are_distributions() {
    let (_, inputs) = random_instance(12, 5, 3, 8);
    for attention in [AttentionVariant::Sigmoid, AttentionVariant::ChannelSoftmax] {
        let cfg = ModelConfig {
            attention,
            ..small_config(ModelKind::DualSpace)
        };
        let y = ModelParams::init(&cfg, 5, 3, 4).unwrap().predict_proba(&inputs).unwrap();
        for row in y.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_softmax_weights_sum_to_one() {
    let (_, inputs) = random_instance(9, 4, 2, 1);
    let cfg = ModelConfig {
        attention: AttentionVariant::ChannelSoftmax,
        ..small_config(ModelKind::DualSpace)
    };
    let model = ModelParams::init(&cfg, 4, 2, 9).unwrap();
    let mut t = Tape::new();
    let ids = model.store.bind(&mut t);
    let out = model.forward(&mut t, &ids, &inputs).unwrap();
    let s = out.dual().unwrap();
    let (a, b, c) = (t.value(s.alpha_t), t.value(s.alpha_f), t.value(s.alpha_c));
    for i in 0..a.len() {
        let total = a.as_slice()[i] + b.as_slice()[i] + c.as_slice()[i];
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn init_is_deterministic_and_shaped() {
    let cfg = small_config(ModelKind::DualSpace);
    let a = ModelParams::init(&cfg, 5, 3, 11).unwrap();
    assert_eq!(a, ModelParams::init(&cfg, 5, 3, 11).unwrap());
    assert_ne!(a, ModelParams::init(&cfg, 5, 3, 12).unwrap());
    for p in a.store.iter() {
        match p.kind {
            ParamKind::Bias => assert_eq!(p.value.max_abs(), 0.0, "{}", p.name),
            ParamKind::Weight => {
                let (i, o) = p.value.shape();
                let limit = (6.0 / (i + o) as f64).sqrt();
                assert!(p.value.max_abs() <= limit, "{}", p.name);
            }
        }
    }
}

/// Sum of the outputs of every branch, so each parameter feeds the scalar.
fn probe_loss(model: &ModelParams, inputs: &GraphInputs, tape: &mut Tape, ids: &[TensorId]) -> Result<TensorId> {
    let out = model.forward(tape, ids, inputs)?;
    let y = out.y_hat();
    let n = tape.value(y).rows();
    let c = tape.value(y).cols();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let target = Matrix::uniform(n, c, 1.0, &mut rng);
    let target = tape.leaf(target);
    let weighted = tape.hadamard(y, target)?;
    let mut loss = tape.frobenius_sq_diff(weighted, target)?;
    if let Some(s) = out.dual() {
        let extra = closeness_loss(tape, s.z_ct, s.z_cf, true)?;
        loss = tape.add(loss, extra)?;
    }
    Ok(loss)
}

#[test]
fn every_parameter_receives_gradient() {
    let (_, inputs) = random_instance(12, 5, 3, 21);
    for kind in [ModelKind::DualSpace, ModelKind::Gcn, ModelKind::KnnGcn] {
        let model = ModelParams::init(&small_config(kind), 5, 3, 3).unwrap();
        let mut t = Tape::new();
        let ids = model.store.bind(&mut t);
        let loss = probe_loss(&model, &inputs, &mut t, &ids).unwrap();
        t.backward(loss).unwrap();
        for (p, &id) in model.store.iter().zip(&ids) {
            assert!(t.grad(id).max_abs() > 0.0, "{kind:?}: {} has zero gradient", p.name);
        }
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    let (_, inputs) = random_instance(8, 4, 3, 4);
    for (kind, attention, residual) in [
        (ModelKind::DualSpace, AttentionVariant::Sigmoid, ResidualMode::Initial),
        (ModelKind::DualSpace, AttentionVariant::ChannelSoftmax, ResidualMode::Initial),
        (ModelKind::DualSpace, AttentionVariant::Sigmoid, ResidualMode::Literal),
        (ModelKind::Gcn, AttentionVariant::Sigmoid, ResidualMode::Initial),
        (ModelKind::KnnGcn, AttentionVariant::Sigmoid, ResidualMode::Initial),
    ] {
        let cfg = ModelConfig {
            attention,
            residual,
            ..small_config(kind)
        };
        let model = ModelParams::init(&cfg, 4, 3, 6).unwrap();
        let report = finite_diff_check(
            |tape, ids| probe_loss(&model, &inputs, tape, ids),
            &model.store.values(),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{kind:?}/{attention:?}/{residual:?}: {}", report.max_rel_error);
    }
}

#[test]
fn mixing_knobs_reduce_to_plain_forms() {
    let mut t = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = Arc::new(SparseMatrix::identity(3));
    let hv = Matrix::uniform(3, 2, 1.0, &mut rng);
    let wv = Matrix::uniform(2, 2, 1.0, &mut rng);
    let (h, w) = (t.leaf(hv.clone()), t.leaf(wv.clone()));
    let h0 = t.leaf(Matrix::uniform(3, 2, 1.0, &mut rng));
    let layer = residual_gcn_layer(&mut t, &p, h, h0, w, 1.0, ResidualMode::Initial).unwrap();
    assert_eq!(t.value(layer), &hv.matmul(&wv).unwrap().map(|v| v.max(0.0)));
    let mixed = common_input(&mut t, h0, h, 0.0).unwrap();
    assert_eq!(t.value(mixed), &hv);
}

#[test]
fn kind_names_round_trip() {
    for kind in [ModelKind::DualSpace, ModelKind::Gcn, ModelKind::KnnGcn] {
        assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
    }
    assert!("transformer".parse::<ModelKind>().is_err());
    assert_eq!("softmax".parse::<AttentionVariant>().unwrap(), AttentionVariant::ChannelSoftmax);
    assert_eq!("literal".parse::<ResidualMode>().unwrap(), ResidualMode::Literal);
}
