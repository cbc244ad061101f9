use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv_backward, conv_forward_cached, ConvLayer, FeatureMap, PoolKind};
use super::head::{head_backward, head_forward, softmax, DenseLayer, FusionHead};
use super::lstm::{sequence_backward, sequence_forward, BiVlstmParams, LstmDirection};
use super::{Activation, CtvrError};
use crate::imaging::{rng_from_seed, GrayImage, SeededRng};

/// Glioma, meningioma, pituitary.
pub const CLASS_COUNT: usize = 3;

const KERNEL_SIZES: [usize; 3] = [3, 5, 7];
const FCL_NEURONS: [usize; 3] = [128, 256, 512];

/// Architecture and training hyperparameters. The conv stack repeats one
/// layer shape `conv_layers` times. `conv_dropout` applies to the conv
/// features and `lstm_dropout` to the recurrent features before fusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub conv_layers: usize,
    pub kernel_size: usize,
    pub feature_maps: usize,
    pub pool_size: usize,
    pub pool_kind: PoolKind,
    pub activation: Activation,
    pub fcl_neurons: usize,
    pub hidden_layers: usize,
    pub conv_dropout: f64,
    pub lstm_neurons: usize,
    pub lstm_dropout: f64,
    pub memory_depth: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            conv_layers: 1,
            kernel_size: 3,
            feature_maps: 32,
            pool_size: 2,
            pool_kind: PoolKind::Max,
            activation: Activation::Relu,
            fcl_neurons: 128,
            hidden_layers: 0,
            conv_dropout: 0.3,
            lstm_neurons: 20,
            lstm_dropout: 0.0,
            memory_depth: 3,
            learning_rate: 0.05,
            batch_size: 8,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), CtvrError> {
        let fail = |m: String| Err(CtvrError::Config(m));
        if !(1..=5).contains(&self.conv_layers) {
            return fail(format!("conv_layers {} outside 1..=5", self.conv_layers));
        }
        if !KERNEL_SIZES.contains(&self.kernel_size) {
            return fail(format!("kernel_size {} not in {{3, 5, 7}}", self.kernel_size));
        }
        if !(32..=256).contains(&self.feature_maps) {
            return fail(format!("feature_maps {} outside 32..=256", self.feature_maps));
        }
        if !(2..=3).contains(&self.pool_size) {
            return fail(format!("pool_size {} not in {{2, 3}}", self.pool_size));
        }
        if !FCL_NEURONS.contains(&self.fcl_neurons) {
            return fail(format!("fcl_neurons {} not in {{128, 256, 512}}", self.fcl_neurons));
        }
        if self.hidden_layers > 2 {
            return fail(format!("hidden_layers {} above 2", self.hidden_layers));
        }
        if !(0.3..=0.5).contains(&self.conv_dropout) {
            return fail(format!("conv_dropout {} outside [0.3, 0.5]", self.conv_dropout));
        }
        if !(20..=200).contains(&self.lstm_neurons) {
            return fail(format!("lstm_neurons {} outside 20..=200", self.lstm_neurons));
        }
        if !(0.0..=1.0).contains(&self.lstm_dropout) {
            return fail(format!("lstm_dropout {} outside [0, 1]", self.lstm_dropout));
        }
        if self.memory_depth == 0 {
            return fail("memory_depth must be positive".into());
        }
        if !(0.005..=0.2).contains(&self.learning_rate) {
            return fail(format!("learning_rate {} outside [0.005, 0.2]", self.learning_rate));
        }
        if !(1..=512).contains(&self.batch_size) {
            return fail(format!("batch_size {} outside 1..=512", self.batch_size));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtvrModel {
    pub hyper: Hyperparameters,
    pub input_height: usize,
    pub input_width: usize,
    pub conv: Vec<ConvLayer>,
    pub lstm: BiVlstmParams,
    pub head: FusionHead,
}

pub(crate) struct Dropout {
    conv: Vec<f64>,
    lstm: Vec<f64>,
}

fn mask(len: usize, p: f64, rng: &mut SeededRng) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    if p >= 1.0 {
        return vec![0.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

impl CtvrModel {
    /// Zero-weight model with identity projection; fails if the conv stack
    /// does not fit the input or leaves fewer rows than the memory depth.
    pub fn zeros(hyper: Hyperparameters, input_height: usize, input_width: usize) -> Result<Self, CtvrError> {
        hyper.validate()?;
        let mut conv = Vec::with_capacity(hyper.conv_layers);
        let (mut h, mut w, mut c) = (input_height, input_width, 1);
        for i in 0..hyper.conv_layers {
            let layer = ConvLayer::zeros(
                c,
                hyper.feature_maps,
                hyper.kernel_size,
                hyper.activation,
                hyper.pool_kind,
                hyper.pool_size,
            );
            (h, w) = layer.output_shape(h, w).ok_or_else(|| {
                CtvrError::Shape(format!(
                    "conv layer {i}: input {h}x{w} too small for kernel {} and pool {}",
                    hyper.kernel_size, hyper.pool_size
                ))
            })?;
            c = hyper.feature_maps;
            conv.push(layer);
        }
        if h < hyper.memory_depth {
            return Err(CtvrError::Shape(format!(
                "final feature map has {h} rows, fewer than memory depth {}",
                hyper.memory_depth
            )));
        }
        let lstm = BiVlstmParams::zeros(c * w, hyper.lstm_neurons, hyper.memory_depth);
        let mut fused = c * h * w + lstm.output_size();
        let mut hidden = Vec::with_capacity(hyper.hidden_layers);
        for _ in 0..hyper.hidden_layers {
            hidden.push(DenseLayer::zeros(fused, hyper.fcl_neurons));
            fused = hyper.fcl_neurons;
        }
        let head = FusionHead {
            hidden,
            activation: hyper.activation,
            output: DenseLayer::zeros(fused, CLASS_COUNT),
        };
        Ok(Self {
            hyper,
            input_height,
            input_width,
            conv,
            lstm,
            head,
        })
    }

    /// Weights uniform in `(-r, r)` with `r = 1 / sqrt(fan_in)`, zero biases,
    /// identity projection.
    pub fn new(hyper: Hyperparameters, input_height: usize, input_width: usize, seed: u64) -> Result<Self, CtvrError> {
        let mut m = Self::zeros(hyper, input_height, input_width)?;
        let mut rng = rng_from_seed(seed);
        for layer in &mut m.conv {
            layer.randomize(&mut rng);
        }
        let (d, h) = (m.lstm.forward.input_size(), m.lstm.forward.hidden_size());
        m.lstm.forward = LstmDirection::random(d, h, &mut rng);
        m.lstm.backward = LstmDirection::random(d, h, &mut rng);
        for layer in m.head.layers_mut() {
            *layer = DenseLayer::random(layer.weights.cols(), layer.weights.rows(), &mut rng);
        }
        Ok(m)
    }

    pub fn conv_feature_len(&self) -> usize {
        self.head.input_size() - self.lstm.output_size()
    }

    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.kernel"), &l.kernel));
            out.push((format!("conv{i}.bias"), &l.bias));
        }
        for (dir, p) in [("fwd", &self.lstm.forward), ("bwd", &self.lstm.backward)] {
            for (name, t) in p.tensors() {
                out.push((format!("lstm.{dir}.{name}"), t));
            }
        }
        out.push(("lstm.projection".into(), self.lstm.projection.data()));
        for (i, l) in self.head.layers().enumerate() {
            out.push((format!("head{i}.weights"), l.weights.data()));
            out.push((format!("head{i}.bias"), &l.bias));
        }
        out
    }

    /// Same order as [`CtvrModel::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.conv.iter_mut() {
            out.push(&mut l.kernel);
            out.push(&mut l.bias);
        }
        out.extend(self.lstm.forward.tensors_mut());
        out.extend(self.lstm.backward.tensors_mut());
        out.push(self.lstm.projection.data_mut());
        for l in self.head.layers_mut() {
            out.push(l.weights.data_mut());
            out.push(&mut l.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        g
    }

    fn check_input(&self, img: &GrayImage) -> Result<(), CtvrError> {
        if img.width() != self.input_width || img.height() != self.input_height {
            return Err(CtvrError::Shape(format!(
                "model expects {}x{} images, got {}x{}",
                self.input_width,
                self.input_height,
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }

    pub(crate) fn sample_dropout(&self, rng: &mut SeededRng) -> Dropout {
        Dropout {
            conv: mask(self.conv_feature_len(), self.hyper.conv_dropout, rng),
            lstm: mask(self.lstm.output_size(), self.hyper.lstm_dropout, rng),
        }
    }

    /// Forward pass; with `grad` set, also backpropagates the cross-entropy
    /// loss of `label` into it. Returns `(probabilities, loss)`.
    pub(crate) fn pass(
        &self,
        img: &GrayImage,
        label: usize,
        dropout: Option<&Dropout>,
        grad: Option<&mut CtvrModel>,
    ) -> Result<(Vec<f64>, f64), CtvrError> {
        self.check_input(img)?;
        let mut map = FeatureMap::from_image(img);
        let mut caches = Vec::with_capacity(self.conv.len());
        for (i, layer) in self.conv.iter().enumerate() {
            let (next, cache) = conv_forward_cached(&map, layer, i)?;
            caches.push(cache);
            map = next;
        }
        let rows: Vec<Vec<f64>> = (0..map.height()).map(|y| map.row(y)).collect();
        let (j, seq_cache) = sequence_forward(&rows, &self.lstm)?;
        let n_conv = map.data().len();
        let mut fused: Vec<f64> = map.data().iter().chain(&j).copied().collect();
        if let Some(d) = dropout {
            for (v, m) in fused.iter_mut().zip(d.conv.iter().chain(&d.lstm)) {
                *v *= m;
            }
        }
        let (logits, head_cache) = head_forward(&self.head, &fused)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let loss = lse - logits[label];
        let probs = softmax(&logits);

        if let Some(grad) = grad {
            let mut d_logits = probs.clone();
            d_logits[label] -= 1.0;
            let mut d_fused = head_backward(&self.head, &head_cache, &d_logits, &mut grad.head);
            if let Some(d) = dropout {
                for (v, m) in d_fused.iter_mut().zip(d.conv.iter().chain(&d.lstm)) {
                    *v *= m;
                }
            }
            let d_rows = sequence_backward(&rows, &self.lstm, &seq_cache, &d_fused[n_conv..], &mut grad.lstm);
            let mut d_map = FeatureMap::from_vec(map.channels(), map.height(), map.width(), d_fused[..n_conv].to_vec());
            for (y, dr) in d_rows.iter().enumerate() {
                d_map.add_row(y, dr);
            }
            for i in (0..self.conv.len()).rev() {
                match conv_backward(&caches[i], &self.conv[i], &d_map, &mut grad.conv[i], i > 0) {
                    Some(d) => d_map = d,
                    None => break,
                }
            }
        }
        Ok((probs, loss))
    }

    /// Class probabilities with dropout disabled.
    pub fn predict_proba(&self, img: &GrayImage) -> Result<Vec<f64>, CtvrError> {
        self.pass(img, 0, None, None).map(|(p, _)| p)
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, img: &GrayImage) -> Result<usize, CtvrError> {
        let p = self.predict_proba(img)?;
        Ok((0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best }))
    }

    /// Cross-entropy of `label` and its gradient, dropout disabled.
    pub fn loss_and_gradient(&self, img: &GrayImage, label: usize) -> Result<(f64, CtvrModel), CtvrError> {
        if label >= CLASS_COUNT {
            return Err(CtvrError::Contract(format!("label {label} outside 0..{CLASS_COUNT}")));
        }
        let mut grad = self.zeros_like();
        let (_, loss) = self.pass(img, label, None, Some(&mut grad))?;
        Ok((loss, grad))
    }

    /// Cross-entropy of `label`, dropout disabled.
    pub fn loss(&self, img: &GrayImage, label: usize) -> Result<f64, CtvrError> {
        self.pass(img, label, None, None).map(|(_, l)| l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Hyperparameters {
        Hyperparameters {
            activation: Activation::Elu,
            pool_kind: PoolKind::Average,
            hidden_layers: 1,
            memory_depth: 2,
            ..Hyperparameters::default()
        }
    }

    #[test]
    fn shapes_follow_hyperparameters() {
        let m = CtvrModel::new(Hyperparameters::default(), 16, 16, 1).unwrap();
        // 16 -> 14 -> 7
        assert_eq!(m.conv_feature_len(), 32 * 7 * 7);
        assert_eq!(m.lstm.forward.input_size(), 32 * 7);
        assert_eq!(m.head.input_size(), 32 * 49 + 2 * 3 * 20);
        let too_deep = Hyperparameters {
            conv_layers: 2,
            kernel_size: 7,
            ..Hyperparameters::default()
        };
        assert!(matches!(CtvrModel::zeros(too_deep, 16, 16), Err(CtvrError::Shape(_))));
    }

    #[test]
    fn table_ranges_enforced() {
        for bad in [
            Hyperparameters { kernel_size: 4, ..Default::default() },
            Hyperparameters { feature_maps: 16, ..Default::default() },
            Hyperparameters { learning_rate: 0.5, ..Default::default() },
            Hyperparameters { hidden_layers: 3, ..Default::default() },
            Hyperparameters { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn probabilities_normalized_and_reproducible() {
        let m = CtvrModel::new(small(), 10, 10, 3).unwrap();
        let img = GrayImage::from_fn(10, 10, |x, y| ((x * 7 + y * 3) % 10) as f64 / 10.0);
        let p = m.predict_proba(&img).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, m.predict_proba(&img).unwrap());
        assert_eq!(m, CtvrModel::new(small(), 10, 10, 3).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = CtvrModel::new(small(), 10, 10, 9).unwrap();
        let img = GrayImage::from_fn(10, 10, |x, y| ((x * 5 + y * 11) % 13) as f64 / 13.0);
        let (_, grad) = m.loss_and_gradient(&img, 1).unwrap();
        let analytic: Vec<Vec<f64>> = grad.named_tensors().iter().map(|(_, t)| t.to_vec()).collect();
        let names: Vec<String> = m.named_tensors().into_iter().map(|(n, _)| n).collect();
        let eps = 1e-5;
        for (ti, name) in names.iter().enumerate() {
            let len = analytic[ti].len();
            for k in (0..len).step_by((len / 5).max(1)) {
                let orig = m.tensors_mut()[ti][k];
                m.tensors_mut()[ti][k] = orig + eps;
                let up = m.loss(&img, 1).unwrap();
                m.tensors_mut()[ti][k] = orig - eps;
                let down = m.loss(&img, 1).unwrap();
                m.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[ti][k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{k}]: analytic {a} numeric {numeric}");
            }
        }
    }
}
