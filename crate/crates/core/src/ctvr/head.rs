use super::linalg::{add_assign, Matrix};
use super::{Activation, CtvrError};
use crate::imaging::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn random(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        Self {
            weights: Matrix::random(output, input, rng),
            bias: vec![0.0; output],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weights.mul_vec_add(x, &mut out);
        out
    }
}

/// Optional hidden dense layers followed by the output layer (`W_w`, `B_b`).
#[derive(Clone, Debug, PartialEq)]
pub struct FusionHead {
    pub hidden: Vec<DenseLayer>,
    pub activation: Activation,
    pub output: DenseLayer,
}

impl FusionHead {
    pub fn input_size(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).weights.cols()
    }

    pub fn class_count(&self) -> usize {
        self.output.weights.rows()
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.hidden.iter().chain(std::iter::once(&self.output))
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.output))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) struct HeadCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Returns logits.
pub(crate) fn head_forward(head: &FusionHead, fused: &[f64]) -> Result<(Vec<f64>, HeadCache), CtvrError> {
    if fused.len() != head.input_size() {
        return Err(CtvrError::Shape(format!(
            "fusion head expects {} features, got {}",
            head.input_size(),
            fused.len()
        )));
    }
    let mut inputs = Vec::with_capacity(head.hidden.len() + 1);
    let mut pre = Vec::with_capacity(head.hidden.len());
    let mut x = fused.to_vec();
    for layer in &head.hidden {
        let z = layer.forward(&x);
        inputs.push(x);
        x = z.iter().map(|&v| head.activation.apply(v)).collect();
        pre.push(z);
    }
    let logits = head.output.forward(&x);
    inputs.push(x);
    Ok((logits, HeadCache { inputs, pre }))
}

/// Gradient w.r.t. the fused input; parameter gradients accumulate into `grad`.
pub(crate) fn head_backward(head: &FusionHead, cache: &HeadCache, d_logits: &[f64], grad: &mut FusionHead) -> Vec<f64> {
    let n = head.hidden.len();
    let mut d = d_logits.to_vec();
    let layers: Vec<&DenseLayer> = head.layers().collect();
    let grads: Vec<&mut DenseLayer> = grad.layers_mut().collect();
    for (li, g) in grads.into_iter().enumerate().rev() {
        let layer = layers[li];
        g.weights.add_outer(&d, &cache.inputs[li]);
        add_assign(&mut g.bias, &d);
        let mut dx = vec![0.0; layer.weights.cols()];
        layer.weights.mul_t_vec_add(&d, &mut dx);
        if li > 0 {
            debug_assert!(li - 1 < n);
            for (v, &z) in dx.iter_mut().zip(&cache.pre[li - 1]) {
                *v *= head.activation.derivative(z);
            }
        }
        d = dx;
    }
    d
}

/// `softmax(head([T_F, J_T]))`.
pub fn fuse_and_classify(t_f: &[f64], j_t: &[f64], head: &FusionHead) -> Result<Vec<f64>, CtvrError> {
    let fused: Vec<f64> = t_f.iter().chain(j_t).copied().collect();
    head_forward(head, &fused).map(|(logits, _)| softmax(&logits))
}
