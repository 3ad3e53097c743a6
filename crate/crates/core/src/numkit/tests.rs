use hmgrl_oracle::{compare_gradients, finite_difference_grad, FdConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(rows, cols, 1.0, &mut rng)
}

/// Checks d/dx of `sum(weights ⊙ build(x))` for each input against central
/// differences.
fn gradcheck(inputs: &[Tensor], rel_tol: f64, build: impl Fn(&Tape, &[Var]) -> Var) {
    let out_shape = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        build(&tape, &vars).shape()
    };
    let weights = random(out_shape.0, out_shape.1, 99);
    let eval = |xs: &[Tensor]| -> (Tape, Vec<Var>, Var) {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.variable(t.clone())).collect();
        let out = build(&tape, &vars);
        let weighted = tape.mask_mul(out, weights.clone()).unwrap();
        let loss = tape.sum(weighted).unwrap();
        (tape, vars, loss)
    };
    let (tape, vars, loss) = eval(inputs);
    let grads = tape.backward(loss).unwrap();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[k]).unwrap().data().to_vec();
        let coords: Vec<usize> = (0..input.len()).collect();
        let numeric = finite_difference_grad(
            |x| {
                let mut xs = inputs.to_vec();
                xs[k] = Tensor::from_vec(input.rows(), input.cols(), x.to_vec()).unwrap();
                let (tape, _, loss) = eval(&xs);
                tape.scalar(loss)
            },
            input.data(),
            &coords,
            1e-5,
        )
        .unwrap();
        let cfg = FdConfig {
            rel_tol,
            ..FdConfig::default()
        };
        let cmp = compare_gradients(&analytic, &numeric, &cfg);
        assert!(cmp.passed, "input {k}: {cmp:?}\n{analytic:?}\n{numeric:?}");
    }
}

#[test]
fn matmul_gradient() {
    gradcheck(&[random(3, 4, 1), random(4, 2, 2)], 1e-6, |t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
}

#[test]
fn sparse_matmul_gradient() {
    let dense = Tensor::from_rows(&[
        [0.0, 0.5, 0.0, 0.5],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    let a = std::sync::Arc::new(SparseMatrix::from_dense(&dense));
    gradcheck(&[random(4, 3, 5)], 1e-6, |t, v| {
        t.sparse_matmul(&a, v[0]).unwrap()
    });
    let tape = Tape::new();
    let b = tape.constant(random(4, 3, 5));
    let out = tape.sparse_matmul(&a, b).unwrap();
    let expect = dense.matmul(&random(4, 3, 5)).unwrap();
    assert!(tape.value(out).max_abs_diff(&expect) < 1e-15);
    assert!(tape
        .sparse_matmul(&a, tape.constant(random(3, 3, 1)))
        .is_err());
}

#[test]
fn elementwise_gradients() {
    let (a, b) = (random(3, 4, 3), random(3, 4, 4));
    gradcheck(&[a.clone(), b.clone()], 1e-4, |t, v| {
        t.add(v[0], v[1]).unwrap()
    });
    gradcheck(&[a.clone(), b.clone()], 1e-4, |t, v| {
        t.sub(v[0], v[1]).unwrap()
    });
    gradcheck(&[a.clone(), b.clone()], 1e-4, |t, v| {
        t.mul(v[0], v[1]).unwrap()
    });
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| {
        t.scale(v[0], -2.5).unwrap()
    });
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| t.relu(v[0]).unwrap());
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| {
        t.transpose(v[0]).unwrap()
    });
    let positive = a.map(|x| x.abs() + 0.1);
    gradcheck(&[positive], 1e-4, |t, v| {
        t.log_clamped(v[0], 1e-12).unwrap()
    });
}

#[test]
fn broadcast_gradients() {
    let (a, r) = (random(4, 3, 5), random(1, 3, 6));
    gradcheck(&[a.clone(), r.clone()], 1e-4, |t, v| {
        t.add_row(v[0], v[1]).unwrap()
    });
    gradcheck(&[a, r], 1e-4, |t, v| t.mul_row(v[0], v[1]).unwrap());
}

#[test]
fn normalization_gradients() {
    let a = random(3, 5, 7).scale(3.0);
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| {
        t.softmax_rows(v[0]).unwrap()
    });
    gradcheck(&[a], 1e-4, |t, v| t.layer_norm_rows(v[0], 1e-5).unwrap());
}

#[test]
fn structural_gradients() {
    let (a, b) = (random(4, 3, 8), random(4, 2, 9));
    gradcheck(&[a.clone(), b.clone()], 1e-4, |t, v| {
        t.concat_cols(&[v[0], v[1], v[0]]).unwrap()
    });
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| {
        t.slice_cols(v[0], 1, 2).unwrap()
    });
    gradcheck(std::slice::from_ref(&a), 1e-4, |t, v| {
        t.gather_rows(v[0], &[3, 0, 3, 1]).unwrap()
    });
    gradcheck(&[a], 1e-4, |t, v| t.reshape(v[0], 2, 6).unwrap());
}

#[test]
fn reduction_gradients() {
    let sq = random(4, 4, 10);
    gradcheck(std::slice::from_ref(&sq), 1e-4, |t, v| {
        t.trace(v[0]).unwrap()
    });
    gradcheck(std::slice::from_ref(&sq), 1e-4, |t, v| {
        t.frobenius_norm(v[0]).unwrap()
    });
    gradcheck(std::slice::from_ref(&sq), 1e-4, |t, v| t.sum(v[0]).unwrap());
    let s = Tensor::scalar(1.7);
    gradcheck(&[sq, s], 1e-4, |t, v| t.div_scalar(v[0], v[1]).unwrap());
}

#[test]
fn windowed_and_block_gradients() {
    // Two blocks of 5 positions by 3 channels.
    let x = random(10, 3, 11);
    gradcheck(std::slice::from_ref(&x), 1e-4, |t, v| {
        t.im2col(v[0], 5, 3).unwrap()
    });
    gradcheck(std::slice::from_ref(&x), 1e-4, |t, v| {
        t.block_max_rows(v[0], 5).unwrap()
    });
    let y = random(10, 3, 12);
    gradcheck(&[x.clone(), y.clone()], 1e-4, |t, v| {
        t.block_matmul_nt(v[0], v[1], 5).unwrap()
    });
    let p = random(10, 5, 13);
    gradcheck(&[p, y], 1e-4, |t, v| t.block_matmul(v[0], v[1], 5).unwrap());
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    let x = random(4, 6, 14);
    gradcheck(&[x], 1e-4, |t, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        t.dropout(v[0], 0.4, true, &mut rng).unwrap()
    });
}

#[test]
fn dropout_rules() {
    let tape = Tape::new();
    let x = tape.constant(random(3, 3, 15));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.5, false, &mut rng).unwrap(), x);
    assert!(matches!(
        tape.dropout(x, 1.0, true, &mut rng),
        Err(crate::Error::Param(_))
    ));
    let y = tape.dropout(x, 0.5, true, &mut rng).unwrap();
    let (xv, yv) = (tape.value(x).clone(), tape.value(y).clone());
    for (a, b) in xv.data().iter().zip(yv.data()) {
        assert!(*b == 0.0 || (b - 2.0 * a).abs() < 1e-15);
    }
}

#[test]
fn relu_and_softmax_values() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[[-1.0, 0.0, 2.0]]));
    assert_eq!(
        *tape.value(tape.relu(x).unwrap()),
        Tensor::from_rows(&[[0.0, 0.0, 2.0]])
    );

    let eq = tape.constant(Tensor::filled(1, 4, 0.7));
    let s = tape.softmax_rows(eq).unwrap();
    assert!(tape
        .value(s)
        .data()
        .iter()
        .all(|&p| (p - 0.25).abs() < 1e-15));

    let two = tape.constant(Tensor::from_rows(&[[0.0, 3f64.ln()]]));
    let s = tape.value(tape.softmax_rows(two).unwrap()).clone();
    assert!((s.get(0, 0) - 0.25).abs() < 1e-15 && (s.get(0, 1) - 0.75).abs() < 1e-15);
}

#[test]
fn composite_matches_manual_chain_rule() {
    // L = sum(relu(A·B)); dL/dA = (1[AB > 0]) · Bᵀ
    let (a, b) = (random(3, 4, 16), random(4, 2, 17));
    let tape = Tape::new();
    let (va, vb) = (tape.variable(a.clone()), tape.variable(b.clone()));
    let prod = tape.matmul(va, vb).unwrap();
    let loss = tape.sum(tape.relu(prod).unwrap()).unwrap();
    let grads = tape.backward(loss).unwrap();

    let ab = a.matmul(&b).unwrap();
    let gate = ab.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let manual_a = gate.matmul(&b.transpose()).unwrap();
    let manual_b = a.transpose().matmul(&gate).unwrap();
    assert!(grads.wrt(va).unwrap().max_abs_diff(&manual_a) < 1e-14);
    assert!(grads.wrt(vb).unwrap().max_abs_diff(&manual_b) < 1e-14);
}

#[test]
fn backward_visits_in_reverse_and_fills_leaves() {
    let tape = Tape::new();
    let a = tape.variable(random(2, 2, 18));
    let unused = tape.variable(random(2, 2, 19));
    let b = tape.relu(a).unwrap();
    let c = tape.scale(b, 2.0).unwrap();
    let loss = tape.sum(c).unwrap();
    let grads = tape.backward(loss).unwrap();
    let order = grads.visit_order();
    assert!(order.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(grads.wrt(unused).unwrap(), &Tensor::zeros(2, 2));
    assert!(grads.wrt(a).is_some());
}

#[test]
fn param_gradients_reach_store() {
    let mut store = ParamStore::new();
    let w = store.insert("w", Tensor::from_rows(&[[2.0]]));
    let tape = Tape::new();
    let wv = tape.param(&store, w);
    let sq = tape.mul(wv, wv).unwrap();
    let loss = tape.sum(sq).unwrap();
    tape.backward(loss).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad(w).get(0, 0), 4.0);
}

#[test]
fn shape_errors() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(2, 3));
    assert!(tape.matmul(a, b).is_err());
    assert!(tape.add(a, tape.transpose(b).unwrap()).is_err());
    assert!(tape.backward(a).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        vals in proptest::collection::vec(-50.0f64..50.0, 12),
    ) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(3, 4, vals).unwrap());
        let s = tape.value(tape.softmax_rows(x).unwrap()).clone();
        for r in 0..3 {
            let row = s.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn small_op_gradients_match_differences(seed in 0u64..1000) {
        let (a, b) = (random(2, 3, seed), random(3, 2, seed + 1));
        let tape = Tape::new();
        let (va, vb) = (tape.variable(a.clone()), tape.variable(b.clone()));
        let loss = {
            let m = tape.matmul(va, vb).unwrap();
            let s = tape.softmax_rows(m).unwrap();
            tape.frobenius_norm(s).unwrap()
        };
        let g = tape.backward(loss).unwrap().wrt(va).unwrap().data().to_vec();
        let f = |x: &[f64]| {
            let t = Tape::new();
            let va = t.constant(Tensor::from_vec(2, 3, x.to_vec()).unwrap());
            let vb = t.constant(b.clone());
            let m = t.matmul(va, vb).unwrap();
            let s = t.softmax_rows(m).unwrap();
            let n = t.frobenius_norm(s).unwrap();
            t.scalar(n)
        };
        let n = finite_difference_grad(f, a.data(), &(0..6).collect::<Vec<_>>(), 1e-5).unwrap();
        prop_assert!(compare_gradients(&g, &n, &FdConfig::default()).passed);
    }
}
