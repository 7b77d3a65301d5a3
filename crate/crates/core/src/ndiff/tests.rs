use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
    Tensor::matrix(rows, cols, v.to_vec()).unwrap()
}

#[test]
fn identity_layer_passes_input_through() {
    let net = Mlp {
        layers: vec![Dense { weight: t(2, 2, &[1.0, 0.0, 0.0, 1.0]), bias: t(1, 2, &[0.0, 0.0]) }],
        activations: vec![Activation::Identity],
    };
    let x = t(1, 2, &[0.7, -1.3]);
    assert_eq!(net.forward_eval(&x).unwrap(), x);
}

#[test]
fn square_activation_composes() {
    let net = Mlp {
        layers: vec![Dense { weight: t(1, 1, &[2.0]), bias: t(1, 1, &[0.0]) }],
        activations: vec![Activation::Square],
    };
    let y = net.forward_eval(&t(1, 1, &[3.0])).unwrap();
    assert_eq!(y.item().unwrap(), 36.0);
}

#[test]
fn seeded_forward_is_bit_exact() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net: Mlp<f64> = Mlp::new(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        net.forward_eval(&t(2, 3, &[0.1, 0.2, 0.3, -1.0, 0.5, 2.0])).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn input_width_mismatch_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net: Mlp<f64> = Mlp::new(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
    assert!(net.forward_eval(&t(1, 2, &[1.0, 2.0])).is_err());
}

#[test]
fn linear_gradient() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::scalar(1.5)).unwrap();
    let x = tape.constant(Tensor::scalar(3.0)).unwrap();
    let loss = tape.mul(w, x).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(w).unwrap().item().unwrap(), 3.0);
    assert!(g.get(x).is_none());
}

#[test]
fn sine_gradient_at_zero() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::scalar(0.0)).unwrap();
    let loss = tape.unary(w, Activation::Sin).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(w).unwrap().item().unwrap(), 1.0);
}

#[test]
fn backward_rejects_foreign_variable() {
    let mut a = Tape::<f64>::new();
    let mut b = Tape::<f64>::new();
    let v = a.param(Tensor::scalar(1.0)).unwrap();
    let _ = b.param(Tensor::scalar(1.0)).unwrap();
    assert!(matches!(b.backward(v), Err(crate::Error::NotOnTape(_))));
}

#[test]
fn non_finite_intermediate_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(1000.0f64)).unwrap();
    assert!(matches!(tape.unary(x, Activation::Exp), Err(crate::Error::NonFinite(_))));
}

#[test]
fn ops_do_not_mutate_inputs() {
    let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let snapshot = a.clone();
    let mut tape = Tape::new();
    let va = tape.param(a.clone()).unwrap();
    let sq = tape.unary(va, Activation::Square).unwrap();
    let loss = tape.sum(sq).unwrap();
    let _ = tape.backward(loss).unwrap();
    assert_eq!(a, snapshot);
    assert_eq!(tape.value(va).unwrap().data(), snapshot.data());
}

/// Scalar loss built from every primitive the networks use.
fn composite_loss(params: &[Tensor<f64>], x: &Tensor<f64>, act: Activation) -> (f64, Vec<Tensor<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
    let xv = tape.constant(x.clone()).unwrap();
    let h = tape.matmul(xv, vars[0]).unwrap();
    let h = tape.add_row(h, vars[1]).unwrap();
    let h = tape.unary(h, act).unwrap();
    let plan: Arc<[Unit]> = Arc::from(vec![
        Unit::Single { act: Activation::Identity, input: 0 },
        Unit::Single { act: Activation::Square, input: 1 },
        Unit::Product { a: 2, b: 3 },
    ]);
    let u = tape.units(h, plan).unwrap();
    let y = tape.matmul(u, vars[2]).unwrap();
    let col = tape.columns(y, 0, 1).unwrap();
    let d = tape.pairwise_diff(col).unwrap();
    let d = tape.unary(d, Activation::Tanh).unwrap();
    let dist = tape.mean(d).unwrap();
    let target = tape.constant(Tensor::zeros(&[x.rows(), 2])).unwrap();
    let mse = tape.mse(y, target).unwrap();
    let s = tape.scale(dist, 0.3).unwrap();
    let loss = tape.add(mse, s).unwrap();
    let g = tape.backward(loss).unwrap();
    let value = tape.value(loss).unwrap().item().unwrap();
    (value, vars.iter().map(|v| g.wrt(*v).unwrap().clone()).collect())
}

fn finite_difference(params: &[Tensor<f64>], x: &Tensor<f64>, act: Activation, h: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in 0..params.len() {
        let mut gk = Vec::new();
        for i in 0..params[k].len() {
            let bump = |delta: f64| {
                let mut p = params.to_vec();
                let mut data = p[k].data().to_vec();
                data[i] += delta;
                p[k] = Tensor::new(p[k].shape().to_vec(), data).unwrap();
                composite_loss(&p, x, act).0
            };
            gk.push((bump(h) - bump(-h)) / (2.0 * h));
        }
        out.push(gk);
    }
    out
}

#[test]
fn gradients_match_central_differences_for_every_activation() {
    use rand::Rng;
    let acts = [
        Activation::Identity,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sin,
        Activation::Cos,
        Activation::Square,
        Activation::Sinh,
    ];
    for act in acts {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rnd = |r: usize, c: usize| {
                Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
            };
            let params = vec![rnd(3, 4), rnd(1, 4), rnd(3, 2)];
            let x = rnd(5, 3);
            let (_, analytic) = composite_loss(&params, &x, act);
            let numeric = finite_difference(&params, &x, act, 1e-5);
            let (mut num2, mut diff2) = (0.0, 0.0);
            for (a, n) in analytic.iter().zip(&numeric) {
                for (av, nv) in a.data().iter().zip(n) {
                    num2 += nv * nv;
                    diff2 += (av - nv) * (av - nv);
                }
            }
            let rel = diff2.sqrt() / num2.sqrt().max(1e-8);
            assert!(rel <= 1e-4, "{act:?} seed {seed}: relative error {rel:e}");
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let p = t(2, 2, &[0.3, -0.2, 0.8, 0.1]);
    let grad_of = |which: u8| {
        let mut tape = Tape::new();
        let w = tape.param(p.clone()).unwrap();
        let a = tape.unary(w, Activation::Sin).unwrap();
        let a = tape.sum(a).unwrap();
        let b = tape.unary(w, Activation::Square).unwrap();
        let b = tape.mean(b).unwrap();
        let loss = match which {
            0 => a,
            1 => b,
            _ => tape.add(a, b).unwrap(),
        };
        tape.backward(loss).unwrap().wrt(w).unwrap().clone()
    };
    let (ga, gb, gab) = (grad_of(0), grad_of(1), grad_of(2));
    for i in 0..4 {
        assert!((ga.data()[i] + gb.data()[i] - gab.data()[i]).abs() < 1e-14);
    }
}
