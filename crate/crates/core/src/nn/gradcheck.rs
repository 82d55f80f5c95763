//! Central-difference checks for every graph operation.

use std::sync::Arc;

use super::*;
use crate::error::Result;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares the tape gradient of `f` against central differences for each
/// input tensor.
fn check(inputs: &[Tensor], f: impl for<'g> Fn(&'g Graph, &[DiffTensor<'g>]) -> Result<DiffTensor<'g>>) {
    let g = Graph::new();
    let leaves: Vec<_> = inputs.iter().map(|t| g.param(Arc::new(t.clone()))).collect();
    let loss = f(&g, &leaves).unwrap();
    let grads = g.backward(loss).unwrap();
    let eval = |ins: &[Tensor]| {
        let g = Graph::new();
        let leaves: Vec<_> = ins.iter().map(|t| g.param(Arc::new(t.clone()))).collect();
        f(&g, &leaves).unwrap().item()
    };
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(*leaf);
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            let e = rel_err(analytic[i], numeric);
            assert!(e < TOL, "input {k}[{i}]: analytic {} numeric {numeric} (rel {e:e})", analytic[i]);
        }
    }
}

fn t(shape: &[usize], seed: u64) -> Tensor {
    Init::new(seed).uniform(shape, 1.0)
}

fn positive(shape: &[usize], seed: u64) -> Tensor {
    t(shape, seed).map(|x| 1.5 + x)
}

/// Fixed random weighting so each output element contributes differently.
fn weigh<'g>(g: &'g Graph, y: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
    let shape = y.shape();
    let w = g.constant(t(&shape, 77));
    Ok(y.mul(&w)?.sum())
}

#[test]
fn elementwise_ops() {
    let ins = [t(&[3, 4], 1), positive(&[3, 4], 2)];
    check(&ins, |g, x| weigh(g, x[0].add(&x[1])?));
    check(&ins, |g, x| weigh(g, x[0].sub(&x[1])?));
    check(&ins, |g, x| weigh(g, x[0].mul(&x[1])?));
    check(&ins, |g, x| weigh(g, x[0].div(&x[1])?));
    check(&ins, |g, x| weigh(g, x[0].scale(-2.5).add_scalar(0.7)));
    check(&ins, |g, x| weigh(g, x[0].square()?));
}

#[test]
fn unary_ops() {
    let ins = [t(&[2, 5], 3)];
    let pos = [positive(&[2, 5], 4)];
    for kind in [Unary::Exp, Unary::Sin, Unary::Cos, Unary::Tanh, Unary::Gelu] {
        check(&ins, |g, x| weigh(g, x[0].apply(kind)));
    }
    check(&pos, |g, x| weigh(g, x[0].ln()));
    check(&pos, |g, x| weigh(g, x[0].sqrt()));
}

#[test]
fn matrix_ops() {
    let ins = [t(&[3, 4], 5), t(&[4, 2], 6)];
    check(&ins, |g, x| weigh(g, x[0].matmul(&x[1])?));
    check(&ins, |g, x| weigh(g, x[0].transpose()?));
    check(&ins, |g, x| weigh(g, x[0].sum_axis(0)?));
    check(&ins, |g, x| weigh(g, x[0].sum_axis(1)?));
    check(&ins, |_, x| Ok(x[0].mean()));
    check(&ins, |g, x| weigh(g, x[0].reshape(&[2, 6])?));
}

#[test]
fn inverse_op() {
    // diagonally dominant so the inverse is well conditioned
    let mut a = t(&[4, 4], 7);
    for i in 0..4 {
        a.data_mut()[i * 5] += 4.0;
    }
    check(&[a], |g, x| weigh(g, x[0].inverse()?));
}

#[test]
fn row_normalizers() {
    let ins = [t(&[3, 6], 8).map(|v| 3.0 * v)];
    check(&ins, |g, x| weigh(g, x[0].softmax_rows()?));
    check(&ins, |g, x| weigh(g, x[0].layer_norm_rows()?));
}

#[test]
fn gather_family() {
    let ins = [t(&[3, 4], 9), t(&[2, 4], 10), t(&[3, 2], 11)];
    check(&ins, |g, x| weigh(g, x[0].slice_cols(1, 2)?));
    check(&ins, |g, x| weigh(g, x[0].slice_rows(1, 2)?));
    check(&ins, |g, x| weigh(g, x[1].slice_rows(0, 1)?.reshape(&[4])?.broadcast_rows(3)?));
    check(&ins, |g, x| weigh(g, x[0].sum_axis(1)?.broadcast_cols(5)?));
    check(&ins, |g, x| weigh(g, g.concat(&[x[0], x[1]], 0)?));
    check(&ins, |g, x| weigh(g, g.concat(&[x[0], x[2]], 1)?));
    // repeated indices accumulate
    check(&ins, |g, x| weigh(g, x[0].gather(Arc::new(vec![0, 0, 5, 11, 5]), &[5])?));
}

#[test]
fn ste_backward_is_tempered_softmax_jacobian() {
    let logits = t(&[3, 4], 12);
    let temp = 0.7;
    let weights = t(&[3, 4], 77);
    let g = Graph::new();
    let x = g.param(Arc::new(logits.clone()));
    let y = x.ste_argmax(temp).unwrap();
    for i in 0..3 {
        let yv = y.value();
        let row = &yv.data()[i * 4..(i + 1) * 4];
        assert_eq!(row.iter().sum::<f64>(), 1.0);
        assert_eq!(row[argmax(&logits.data()[i * 4..(i + 1) * 4])], 1.0);
    }
    let grads = g.backward(y.mul(&g.constant(weights.clone())).unwrap().sum()).unwrap();
    // same gradient as the smooth surrogate softmax(x / T)
    let g2 = Graph::new();
    let x2 = g2.param(Arc::new(logits));
    let s = x2.scale(1.0 / temp).softmax_rows().unwrap();
    let sg = g2.backward(s.mul(&g2.constant(weights)).unwrap().sum()).unwrap();
    for (a, b) in grads.get(x).iter().zip(sg.get(x2)) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    assert_eq!(argmax(&[0.0, 0.0]), 0);
}

#[test]
fn softmax_and_norm_edge_cases() {
    let g = Graph::new();
    let big = g.constant(Tensor::new(vec![1, 3], vec![1000.0, 1000.0, -1000.0]).unwrap());
    let s = big.softmax_rows().unwrap().value();
    assert!((s.data()[0] - 0.5).abs() < 1e-15 && s.data()[2] == 0.0);
    let flat = g.param(Arc::new(Tensor::full(&[2, 4], 3.0)));
    let z = flat.layer_norm_rows().unwrap();
    assert!(z.value().data().iter().all(|&v| v == 0.0));
    let grads = g.backward(weigh(&g, z).unwrap()).unwrap();
    assert!(grads.get(flat).iter().all(|v| v.is_finite()));
}

#[test]
fn shape_errors() {
    let g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[3, 2]));
    assert!(a.add(&b).is_err());
    assert!(a.matmul(&a).is_err());
    assert!(a.inverse().is_err());
    assert!(a.slice_cols(2, 2).is_err());
    assert!(g.concat(&[a, b], 0).is_err());
    assert!(g.backward(a).is_err());
    assert!(a.ste_argmax(0.0).is_err());
}

#[test]
fn constants_get_no_gradient() {
    let g = Graph::new();
    let c = g.constant(t(&[2, 2], 1));
    let p = g.param(Arc::new(t(&[2, 2], 2)));
    let loss = c.mul(&p).unwrap().sum();
    let mut grads = g.backward(loss).unwrap();
    assert!(grads.take(c).is_none());
    assert_eq!(grads.get(p), c.value().data().to_vec());
}
