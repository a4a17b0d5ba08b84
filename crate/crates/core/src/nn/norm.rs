use super::Tensor4;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values saved by the training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Tensor4,
    inv_std: Vec<f64>,
}

fn for_channel(x: &Tensor4, c: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    let plane = x.plane();
    (0..x.batch()).map(move |b| {
        let start = x.index(b, c, 0, 0);
        start..start + plane
    })
}

/// Training-mode batch normalization: statistics over `(batch, h, w)` per channel.
/// Updates the running statistics with momentum [`BN_MOMENTUM`].
pub fn batchnorm_train(x: &Tensor4, p: &mut BatchNormParams) -> (Tensor4, BatchNormCache) {
    assert_eq!(x.channels(), p.channels(), "batch norm channel mismatch");
    let count = (x.batch() * x.plane()) as f64;
    let mut normalized = Tensor4::zeros(x.dims());
    let mut y = Tensor4::zeros(x.dims());
    let mut inv_std = vec![0.0; p.channels()];
    for c in 0..p.channels() {
        let mut sum = 0.0;
        for r in for_channel(x, c) {
            sum += x.data[r].iter().sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for r in for_channel(x, c) {
            sq += x.data[r].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let var = sq / count;
        let istd = 1.0 / (var + BN_EPSILON).sqrt();
        inv_std[c] = istd;
        for r in for_channel(x, c) {
            for i in r {
                let n = (x.data[i] - mean) * istd;
                normalized.data[i] = n;
                y.data[i] = p.gamma[c] * n + p.beta[c];
            }
        }
        let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
        p.running_mean[c] = BN_MOMENTUM * p.running_mean[c] + (1.0 - BN_MOMENTUM) * mean;
        p.running_var[c] = BN_MOMENTUM * p.running_var[c] + (1.0 - BN_MOMENTUM) * unbiased;
    }
    (y, BatchNormCache { normalized, inv_std })
}

/// Inference-mode batch normalization using the running statistics.
pub fn batchnorm_infer(x: &Tensor4, p: &BatchNormParams) -> Tensor4 {
    assert_eq!(x.channels(), p.channels(), "batch norm channel mismatch");
    let mut y = x.clone();
    for c in 0..p.channels() {
        let scale = p.gamma[c] / (p.running_var[c] + BN_EPSILON).sqrt();
        let shift = p.beta[c] - p.running_mean[c] * scale;
        for r in for_channel(x, c) {
            for v in &mut y.data[r] {
                *v = *v * scale + shift;
            }
        }
    }
    y
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    p: &BatchNormParams,
    grad_out: &Tensor4,
) -> (Tensor4, Vec<f64>, Vec<f64>) {
    let xn = &cache.normalized;
    let count = (xn.batch() * xn.plane()) as f64;
    let mut gx = Tensor4::zeros(xn.dims());
    let mut gg = vec![0.0; p.channels()];
    let mut gb = vec![0.0; p.channels()];
    for c in 0..p.channels() {
        let (mut sum_dy, mut sum_dy_xn) = (0.0, 0.0);
        for r in for_channel(xn, c) {
            for i in r {
                sum_dy += grad_out.data[i];
                sum_dy_xn += grad_out.data[i] * xn.data[i];
            }
        }
        gg[c] = sum_dy_xn;
        gb[c] = sum_dy;
        let k = p.gamma[c] * cache.inv_std[c] / count;
        for r in for_channel(xn, c) {
            for i in r {
                gx.data[i] = k * (count * grad_out.data[i] - sum_dy - xn.data[i] * sum_dy_xn);
            }
        }
    }
    (gx, gg, gb)
}
