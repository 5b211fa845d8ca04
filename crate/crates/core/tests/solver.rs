mod common;

use blm_core::embedding::Provenance;
use blm_core::solver::{
    cosine, loss, param_grad, predict, select_answer, train, LossAgg, SolverModel, TrainConfig,
    TrainScope,
};
use blm_core::{EmbeddingStore, Split, VoiceLabel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_context(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f32>> {
    (0..7)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}

/// Textbook dense forward pass over the model's public layer data.
#[allow(clippy::needless_range_loop)]
fn naive_forward(model: &SolverModel, context: &[Vec<f32>]) -> Vec<f64> {
    let mut x: Vec<f64> = context.iter().flatten().map(|&v| v as f64).collect();
    let last = model.layers.len() - 1;
    for (li, l) in model.layers.iter().enumerate() {
        let mut y = vec![0.0; l.outputs];
        for o in 0..l.outputs {
            let mut acc = l.bias[o];
            for i in 0..l.inputs {
                acc += l.weights[o * l.inputs + i] * x[i];
            }
            y[o] = if li == last { acc } else { acc.tanh() };
        }
        x = y;
    }
    x
}

#[test]
fn forward_matches_naive_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for hidden in [vec![], vec![10], vec![6, 5]] {
        let model = SolverModel::new(4, &hidden, 9).unwrap();
        let ctx = random_context(&mut rng, 4);
        let got = model.forward(&ctx).unwrap();
        let want = naive_forward(&model, &ctx);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_weights_propagate_bias() {
    let mut model = SolverModel::zeros(3, &[5]).unwrap();
    model.layers[0].bias = vec![0.1, -0.2, 0.3, 0.0, 0.5];
    model.layers[1].bias = vec![1.0, 2.0, 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = model.forward(&random_context(&mut rng, 3)).unwrap();
    let b = model.forward(&random_context(&mut rng, 3)).unwrap();
    assert_eq!(a, vec![1.0, 2.0, 3.0]);
    assert_eq!(a, b);
}

#[test]
fn linear_probe_averages_blocks() {
    let d = 3;
    let mut model = SolverModel::zeros(d, &[]).unwrap();
    let l = &mut model.layers[0];
    for o in 0..d {
        for block in 0..7 {
            l.weights[o * 7 * d + block * d + o] = 1.0 / 7.0;
        }
    }
    let v = vec![0.5f32, -1.25, 2.0];
    let out = model.forward(&vec![v.clone(); 7]).unwrap();
    for (a, b) in out.iter().zip(&v) {
        assert!((a - *b as f64).abs() < 1e-12);
    }
}

#[test]
fn forward_rejects_bad_shapes() {
    let model = SolverModel::new(4, &[8], 0).unwrap();
    assert!(model.forward(&vec![vec![0.0f32; 4]; 6]).is_err());
    assert_eq!(
        model.forward(&vec![vec![0.0f32; 3]; 7]).unwrap_err().code(),
        "core.argument"
    );
    assert!(SolverModel::new(0, &[], 0).is_err());
}

#[test]
fn loss_examples() {
    let a = [
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    assert_eq!(loss(&a[0], &a, 0, 0.5, LossAgg::Sum).unwrap(), 0.0);
    let p = vec![1.0, 1.0, 1.0, 1.0];
    assert!((loss(&p, &a, 2, 0.5, LossAgg::Sum).unwrap() - 1.5).abs() < 1e-12);
    assert!((loss(&p, &a, 2, 0.5, LossAgg::Max).unwrap() - 0.5).abs() < 1e-12);
    let zero = vec![0.0; 4];
    assert_eq!(loss(&zero, &a, 0, 0.5, LossAgg::Sum).unwrap_err().code(), "solver.numeric");
}

#[test]
fn loss_matches_brute_force_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p = random_vec(&mut rng, 6);
        let a: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 6)).collect();
        let c = rng.random_range(0..4);
        let cos = |x: &[f64], y: &[f64]| {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / nx / ny
        };
        let mut want = 0.0;
        for j in 0..4 {
            if j != c {
                want += f64::max(0.0, 0.5 - cos(&p, &a[c]) + cos(&p, &a[j]));
            }
        }
        assert!((loss(&p, &a, c, 0.5, LossAgg::Sum).unwrap() - want).abs() < 1e-12);
    }
}

fn finite_difference_check(hidden: &[usize], agg: LossAgg, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SolverModel::new(4, hidden, seed).unwrap();
    let input = random_vec(&mut rng, 28);
    let answers: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 4)).collect();
    let correct = rng.random_range(0..4);
    // A large margin keeps every hinge active, away from its kink.
    let margin = 3.0;
    let (_, grad) = param_grad(&model, &input, &answers, correct, margin, agg).unwrap();
    let params = model.params();
    let h = 1e-5;
    for k in 0..params.len() {
        let mut p = params.clone();
        p[k] = params[k] + h;
        model.set_params(&p).unwrap();
        let up = loss(&model.forward_stacked(&input), &answers, correct, margin, agg).unwrap();
        p[k] = params[k] - h;
        model.set_params(&p).unwrap();
        let down = loss(&model.forward_stacked(&input), &answers, correct, margin, agg).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(grad[k].abs()).max(1e-6);
        assert!(
            (numeric - grad[k]).abs() / scale < 1e-4,
            "param {k}: analytic {} numeric {numeric}",
            grad[k]
        );
    }
}

#[test]
fn gradients_match_finite_differences() {
    finite_difference_check(&[], LossAgg::Sum, 1);
    finite_difference_check(&[6], LossAgg::Sum, 2);
    finite_difference_check(&[5, 3], LossAgg::Sum, 3);
    finite_difference_check(&[6], LossAgg::Max, 4);
}

#[test]
fn descent_on_separable_data() {
    let (d, store) = common::synthetic(40, 200, (9, 10), 8, 0.05, 0.0, false, 1);
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 0.05,
        batch_size: 16,
        seed: 2,
        ..Default::default()
    };
    let (_, history) = train(SolverModel::new(8, &[], 3).unwrap(), &d, &store, &cfg).unwrap();
    assert_eq!(history.len(), 20);
    assert!(history.last().unwrap() < history.first().unwrap(), "{history:?}");
}

#[test]
fn one_epoch_history() {
    let (d, store) = common::synthetic(20, 40, (9, 10), 4, 0.05, 0.0, false, 1);
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let (_, h) = train(SolverModel::new(4, &[8], 0).unwrap(), &d, &store, &cfg).unwrap();
    assert_eq!(h.len(), 1);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (d, store) = common::synthetic(20, 80, (9, 10), 6, 0.05, 0.0, false, 4);
    let cfg = TrainConfig {
        epochs: 3,
        seed: 11,
        learning_rate: 0.01,
        ..Default::default()
    };
    let run = || {
        let (m, h) = train(SolverModel::new(6, &[12], 5).unwrap(), &d, &store, &cfg).unwrap();
        (m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn training_ignores_test_instances() {
    let (d, store) = common::synthetic(500, 80, (9, 10), 4, 0.05, 0.0, false, 5);
    let mut pruned = EmbeddingStore::new(4, Provenance::File("p".into())).unwrap();
    let test_only: std::collections::HashSet<String> = d
        .in_split(Split::Test)
        .flat_map(|i| i.slots().map(|s| s.embedding_key(d.variant)))
        .collect();
    let train_keys: std::collections::HashSet<String> = d
        .in_split(Split::Train)
        .flat_map(|i| i.slots().map(|s| s.embedding_key(d.variant)))
        .collect();
    for (k, v) in store.iter() {
        if train_keys.contains(k) || !test_only.contains(k) {
            pruned.insert(k, v.to_vec()).unwrap();
        }
    }
    assert!(pruned.len() < store.len());
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    assert!(train(SolverModel::new(4, &[], 0).unwrap(), &d, &pruned, &cfg).is_ok());
}

#[test]
fn missing_embedding_names_instance_and_key() {
    let (d, store) = common::synthetic(20, 40, (9, 10), 4, 0.05, 0.0, false, 6);
    let first = d.in_split(Split::Train).next().unwrap();
    let victim = first.context[3].embedding_key(d.variant);
    let mut pruned = EmbeddingStore::new(4, Provenance::File("p".into())).unwrap();
    for (k, v) in store.iter().filter(|(k, _)| *k != victim) {
        pruned.insert(k, v.to_vec()).unwrap();
    }
    let err = train(
        SolverModel::new(4, &[], 0).unwrap(),
        &d,
        &pruned,
        &TrainConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err.code(), "solver.data");
    let msg = err.to_string();
    assert!(msg.contains(&victim), "{msg}");
    assert!(msg.contains("syn-"), "{msg}");
}

#[test]
fn target_scope_filters_instances() {
    let (d, store) = common::synthetic(20, 80, (9, 10), 4, 0.05, 0.0, false, 7);
    let cfg = TrainConfig {
        epochs: 1,
        scope: TrainScope::TargetVoice(VoiceLabel::Caus),
        ..Default::default()
    };
    assert!(train(SolverModel::new(4, &[], 0).unwrap(), &d, &store, &cfg).is_ok());
    let bad = TrainConfig {
        margin: 0.0,
        ..Default::default()
    };
    assert_eq!(
        train(SolverModel::new(4, &[], 0).unwrap(), &d, &store, &bad).unwrap_err().code(),
        "blm.config"
    );
}

#[test]
fn prediction_examples() {
    let answers = [
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.3, 0.3, 0.9],
        vec![0.0, -1.0, 0.0],
    ];
    assert_eq!(select_answer(&answers[2], &answers).unwrap(), 2);
    let same = vec![vec![1.0, 2.0, 3.0]; 4];
    assert_eq!(select_answer(&[0.1, 0.0, 0.0], &same).unwrap(), 0);
}

#[test]
fn predict_matches_cosine_scan() {
    let (d, store) = common::synthetic(20, 40, (9, 10), 5, 0.3, 0.0, false, 8);
    let model = SolverModel::new(5, &[7], 3).unwrap();
    for inst in &d.instances {
        let ctx: Vec<Vec<f32>> = inst
            .context
            .iter()
            .map(|s| store.get(&s.embedding_key(d.variant)).unwrap().to_vec())
            .collect();
        let out = model.forward(&ctx).unwrap();
        let mut best = (0, f64::NEG_INFINITY);
        for (j, a) in inst.answers.iter().enumerate() {
            let v: Vec<f64> = store
                .get(&a.embedding_key(d.variant))
                .unwrap()
                .iter()
                .map(|&x| x as f64)
                .collect();
            let c = cosine(&out, &v).unwrap();
            if c > best.1 {
                best = (j, c);
            }
        }
        assert_eq!(predict(&model, inst, d.variant, &store).unwrap(), best.0);
    }
}

#[test]
fn checkpoint_round_trip() {
    let model = SolverModel::new(5, &[9, 4], 77).unwrap();
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    assert!(buf.starts_with(b"BLMFFN 1\n"));
    assert_eq!(buf.len(), 9 + 4 + 4 + 8 + 8 + 8 * model.n_params());
    let back = SolverModel::read_from(&buf[..]).unwrap();
    assert_eq!(back, model);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert_eq!(SolverModel::read_from(&bad[..]).unwrap_err().code(), "io.format");
    assert!(SolverModel::read_from(&buf[..buf.len() - 1]).is_err());
}

proptest! {
    #[test]
    fn selection_is_scale_free(
        seed in any::<u64>(),
        scales in proptest::collection::vec(0.01f64..100.0, 4),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_vec(&mut rng, 5);
        let answers: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 5)).collect();
        let scaled: Vec<Vec<f64>> = answers
            .iter()
            .zip(&scales)
            .map(|(a, s)| a.iter().map(|x| x * s).collect())
            .collect();
        prop_assert_eq!(select_answer(&p, &answers).unwrap(), select_answer(&p, &scaled).unwrap());
    }

    #[test]
    fn loss_is_non_negative_with_exact_zero_condition(seed in any::<u64>(), margin in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_vec(&mut rng, 4);
        let a: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 4)).collect();
        let c = rng.random_range(0..4);
        let l = loss(&p, &a, c, margin, LossAgg::Sum).unwrap();
        prop_assert!(l >= 0.0);
        let cc = cosine(&p, &a[c]).unwrap();
        let separated = (0..4).filter(|&j| j != c).all(|j| cc >= cosine(&p, &a[j]).unwrap() + margin);
        prop_assert_eq!(l == 0.0, separated);
    }
}
