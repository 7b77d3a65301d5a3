use discolab::ndiff::{Activation, AdamState, Mlp, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matmul_sum_gradient_matches_closed_form() {
    // d/dA sum(A B) = 1 B^T, d/dB sum(A B) = A^T 1.
    let a = Tensor::<f64>::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5]).unwrap();
    let b = Tensor::<f64>::matrix(3, 2, vec![0.2, -1.0, 4.0, 0.3, -0.7, 2.0]).unwrap();
    let mut tape = Tape::new();
    let (va, vb) = (tape.param(a.clone()).unwrap(), tape.param(b.clone()).unwrap());
    let p = tape.matmul(va, vb).unwrap();
    let s = tape.sum(p).unwrap();
    let g = tape.backward(s).unwrap();
    let ga = g.wrt(va).unwrap();
    let gb = g.wrt(vb).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let expect = b.get(k, 0) + b.get(k, 1);
            assert!((ga.get(i, k) - expect).abs() < 1e-12);
        }
    }
    for k in 0..3 {
        for j in 0..2 {
            let expect = a.get(0, k) + a.get(1, k);
            assert!((gb.get(k, j) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn tape_forward_agrees_with_eval_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mlp = Mlp::<f64>::new(&[4, 6, 3], &[Activation::LeakyRelu, Activation::Tanh], &mut rng).unwrap();
    let x = Tensor::from_rows(&[vec![0.1, -0.3, 2.0, 0.0], vec![1.0, 1.0, -1.0, 0.5]]).unwrap();
    let mut tape = Tape::new();
    let vars = mlp.bind(&mut tape).unwrap();
    let xv = tape.constant(x.clone()).unwrap();
    let out = mlp.forward(&mut tape, &vars, xv).unwrap();
    assert_eq!(tape.value(out).unwrap(), &mlp.forward_eval(&x).unwrap());
}

#[test]
fn adam_minimizes_a_quadratic() {
    let target = Tensor::<f64>::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
    let mut params = vec![Tensor::zeros(&[1, 3])];
    let mut adam = AdamState::new(&params, 0.05);
    for _ in 0..2000 {
        let mut tape = Tape::new();
        let p = tape.param(params[0].clone()).unwrap();
        let t = tape.constant(target.clone()).unwrap();
        let l = tape.mse(p, t).unwrap();
        let g = tape.backward(l).unwrap();
        params = adam.step(&params, &[g.wrt(p).unwrap().clone()]).unwrap();
    }
    for (a, b) in params[0].data().iter().zip(target.data()) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn single_precision_instantiation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mlp = Mlp::<f32>::new(&[2, 3, 1], &[Activation::Sin, Activation::Identity], &mut rng).unwrap();
    let y = mlp.forward_eval(&Tensor::from_rows(&[vec![0.5f32, -0.5]]).unwrap()).unwrap();
    assert_eq!(y.shape(), &[1, 1]);
    assert!(y.data()[0].is_finite());
}
