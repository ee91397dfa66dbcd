use mqa_core::numcore::gradcheck::{numerical_gradient_of, relative_error, FD_STEP};
use mqa_core::numcore::{Graph, ParamId, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `sum(weights ⊙ op(x))`, differentiated both ways.
fn check(
    x: &Tensor,
    weights: &Tensor,
    op: impl Fn(&mut Graph, Var) -> Var,
) -> f64 {
    let forward = |input: &Tensor| {
        let mut g = Graph::new();
        let xv = g.param(ParamId(0), input.clone());
        let y = op(&mut g, xv);
        let w = g.constant(weights.clone());
        let prod = g.mul(y, w).unwrap();
        let loss = g.sum(prod);
        (g, xv, loss)
    };
    let (g, xv, loss) = forward(x);
    let analytic = g.backward(loss).unwrap().get(xv).unwrap().clone();
    let numeric = numerical_gradient_of(x, FD_STEP, |t| {
        let (g, _, loss) = forward(t);
        g.value(loss).item()
    });
    relative_error(&analytic, &numeric)
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 2], &mut rng);
    let ones = Tensor::full(&[3, 2], 1.0);
    let err_a = check(&a, &ones, |g, x| {
        let bv = g.constant(b.clone());
        g.matmul(x, bv).unwrap()
    });
    let err_b = check(&b, &random(&[3, 2], &mut rng), |g, x| {
        let av = g.constant(a.clone());
        g.matmul(av, x).unwrap()
    });
    assert!(err_a < 1e-4, "{err_a}");
    assert!(err_b < 1e-4, "{err_b}");
}

#[test]
fn conv1d_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[9, 3], &mut rng);
    let k = random(&[4, 3, 3], &mut rng);
    let w = random(&[4, 4], &mut rng);
    let err_x = check(&x, &w, |g, xv| {
        let kv = g.constant(k.clone());
        g.conv1d(xv, kv, 2).unwrap()
    });
    let err_k = check(&k, &w, |g, kv| {
        let xv = g.constant(x.clone());
        g.conv1d(xv, kv, 2).unwrap()
    });
    assert!(err_x < 1e-4, "{err_x}");
    assert!(err_k < 1e-4, "{err_k}");
}

#[test]
fn softmax_and_layer_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 5], &mut rng);
    let w = random(&[3, 5], &mut rng);
    for axis in 0..2 {
        let err = check(&x, &w, |g, v| g.softmax(v, axis).unwrap());
        assert!(err < 1e-4, "softmax axis {axis}: {err}");
    }
    let gain = random(&[5], &mut rng);
    let bias = random(&[5], &mut rng);
    let err = check(&x, &w, |g, v| {
        let gv = g.constant(gain.clone());
        let bv = g.constant(bias.clone());
        g.layer_norm(v, gv, bv).unwrap()
    });
    assert!(err < 1e-4, "layer_norm x: {err}");
    let err = check(&gain, &w, |g, gv| {
        let xv = g.constant(x.clone());
        let bv = g.constant(bias.clone());
        g.layer_norm(xv, gv, bv).unwrap()
    });
    assert!(err < 1e-4, "layer_norm gain: {err}");
}

#[test]
fn pointwise_and_structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[4, 6], &mut rng);
    let w = random(&[4, 6], &mut rng);
    let cases: Vec<(&str, Box<dyn Fn(&mut Graph, Var) -> Var>)> = vec![
        ("relu", Box::new(|g, v| g.relu(v))),
        ("sigmoid", Box::new(|g, v| g.sigmoid(v))),
        ("scale", Box::new(|g, v| g.scale(v, -2.5))),
        ("square", Box::new(|g, v| g.mul(v, v).unwrap())),
        ("transpose", Box::new(|g, v| {
            let t = g.transpose(v).unwrap();
            g.transpose(t).unwrap()
        })),
        ("gather", Box::new(|g, v| {
            let a = g.gather_cols(v, &[5, 0, 1]).unwrap();
            let b = g.gather_cols(v, &[2, 3, 4]).unwrap();
            g.concat_cols(&[a, b]).unwrap()
        })),
        ("rows", Box::new(|g, v| {
            let r = g.reshape(v, &[2, 12]).unwrap();
            let r = g.concat_rows(&[r, r]).unwrap();
            let r = g.reshape(r, &[8, 6]).unwrap();
            let top = g.gather_cols(r, &[0, 1, 2, 3, 4, 5]).unwrap();
            let t = g.transpose(top).unwrap();
            let t = g.gather_cols(t, &[0, 1, 2, 3]).unwrap();
            g.transpose(t).unwrap()
        })),
        ("add_row", Box::new(|g, v| {
            let b = g.gather_cols(v, &[0]).unwrap();
            let b = g.transpose(b).unwrap();
            let b = g.reshape(b, &[4]).unwrap();
            let sq = g.reshape(v, &[6, 4]).unwrap();
            let y = g.add_row(sq, b).unwrap();
            g.reshape(y, &[4, 6]).unwrap()
        })),
    ];
    for (name, op) in cases {
        let err = check(&x, &w, |g, v| op(g, v));
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn pooling_and_losses_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[5, 3], &mut rng);
    let err = check(&x, &random(&[3], &mut rng), |g, v| g.global_max_pool(v).unwrap());
    assert!(err < 1e-4, "max pool: {err}");

    let target = random(&[5, 3], &mut rng);
    let one = Tensor::scalar(1.0);
    let err = check(&x, &one, |g, v| {
        let t = g.constant(target.clone());
        g.mse(v, t).unwrap()
    });
    assert!(err < 1e-4, "mse: {err}");
    let err = check(&x, &one, |g, v| g.abs_sum(v));
    assert!(err < 1e-4, "l1: {err}");

    let probs = Tensor::vector(vec![0.2, 0.55, 0.9]);
    let labels = Tensor::vector(vec![0.0, 0.3, 1.0]);
    let err = check(&probs, &one, |g, v| g.bce(v, labels.clone()).unwrap());
    assert!(err < 1e-4, "bce: {err}");
    let err = check(&x, &one, |g, v| g.mean(v));
    assert!(err < 1e-4, "mean: {err}");
}

#[test]
fn matmul_sum_gradient_example() {
    // d/dA sum(A·B) = 1·Bᵀ
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
    let mut g = Graph::new();
    let av = g.param(ParamId(0), a.clone());
    let bv = g.constant(b);
    let y = g.matmul(av, bv).unwrap();
    assert_eq!(g.value(y).data(), &[17.0, 39.0]);
    let s = g.sum(y);
    let grad = g.backward(s).unwrap().get(av).unwrap().clone();
    assert_eq!(grad.data(), &[5.0, 6.0, 5.0, 6.0]);
}

#[test]
fn bce_gradient_wrt_prediction() {
    let numeric = numerical_gradient_of(&Tensor::vector(vec![0.3]), FD_STEP, |t| {
        mqa_core::numcore::bce_loss(t.data()[0], 0.8)
    });
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::vector(vec![0.3]));
    let l = g.bce(p, Tensor::vector(vec![0.8])).unwrap();
    let analytic = g.backward(l).unwrap().get(p).unwrap().clone();
    assert!(relative_error(&analytic, &numeric) < 1e-4);
}

fn finite_matrix() -> impl Strategy<Value = Tensor> {
    (1usize..6, 2usize..7).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |d| Tensor::new(&[r, c], d).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(x in finite_matrix(), shift in -50.0f64..50.0) {
        let s = mqa_core::numcore::softmax(&x, 1).unwrap();
        let shifted = mqa_core::numcore::softmax(&x.map(|v| v + shift), 1).unwrap();
        let (r, _) = x.dims2().unwrap();
        for i in 0..r {
            let total: f64 = s.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
        }
        for (a, b) in s.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_ops_stay_finite(x in finite_matrix()) {
        let (r, c) = x.dims2().unwrap();
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let t = g.transpose(v).unwrap();
        let sq = g.matmul(v, t).unwrap();
        let sm = g.softmax(sq, 1).unwrap();
        let gain = g.constant(Tensor::full(&[c], 1.0));
        let bias = g.constant(Tensor::zeros(&[c]));
        let ln = g.layer_norm(v, gain, bias).unwrap();
        let sg = g.sigmoid(ln);
        let k = g.constant(Tensor::full(&[2, 1, c], 0.5));
        let conv = g.conv1d(v, k, 1).unwrap();
        let pool = g.global_max_pool(v).unwrap();
        let target = Tensor::full(&[r, c], 0.5);
        let bce = g.bce(sg, target).unwrap();
        for var in [sq, sm, ln, sg, conv, pool, bce] {
            prop_assert!(g.value(var).is_finite());
        }
    }
}
