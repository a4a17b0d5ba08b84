use super::{Mode, Tensor4};
use rand::Rng;

pub fn relu(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    for v in &mut y.data {
        *v = v.max(0.0);
    }
    y
}

/// Gradient of [`relu`] given its forward output.
pub fn relu_backward(output: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut g = grad_out.clone();
    for (gv, &o) in g.data.iter_mut().zip(&output.data) {
        if o <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Inverted dropout. In training mode every value is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned scale
/// factors are needed by [`dropout_backward`]. Inference is the identity.
pub fn dropout(x: &Tensor4, rate: f64, rng: &mut impl Rng, mode: Mode) -> (Tensor4, Option<Vec<f64>>) {
    if mode == Mode::Infer || rate <= 0.0 {
        return (x.clone(), None);
    }
    assert!(rate < 1.0, "dropout rate must be below 1");
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, s) in y.data.iter_mut().zip(&scale) {
        *v *= s;
    }
    (y, Some(scale))
}

pub fn dropout_backward(scale: Option<&[f64]>, grad_out: &Tensor4) -> Tensor4 {
    let mut g = grad_out.clone();
    if let Some(scale) = scale {
        for (v, s) in g.data.iter_mut().zip(scale) {
            *v *= s;
        }
    }
    g
}
