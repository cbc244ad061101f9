use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{CtvrModel, CLASS_COUNT};
use super::CtvrError;
use crate::eho::accuracy_fitness;
use crate::imaging::{rng_from_seed, GrayImage};

/// Images with class labels in `0..CLASS_COUNT`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; CLASS_COUNT] {
        let mut c = [0; CLASS_COUNT];
        for &l in &self.labels {
            if l < CLASS_COUNT {
                c[l] += 1;
            }
        }
        c
    }

    fn check(&self, min_per_class: usize) -> Result<(), CtvrError> {
        if self.images.len() != self.labels.len() {
            return Err(CtvrError::Contract(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= CLASS_COUNT) {
            return Err(CtvrError::Contract(format!("label {l} outside 0..{CLASS_COUNT}")));
        }
        let counts = self.class_counts();
        if counts.iter().any(|&c| c < min_per_class) {
            return Err(CtvrError::Contract(format!(
                "need at least {min_per_class} examples per class, have {counts:?}"
            )));
        }
        Ok(())
    }
}

/// Stratified split: per class, a seeded shuffle then the first
/// `round(train_fraction * n)` examples go to training. Order within each
/// part follows the original dataset order.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut rng = rng_from_seed(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..CLASS_COUNT {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        members.shuffle(&mut rng);
        let cut = (train_fraction * members.len() as f64).round() as usize;
        train_idx.extend_from_slice(&members[..cut]);
        test_idx.extend_from_slice(&members[cut..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    (ds.subset(&train_idx), ds.subset(&test_idx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Mini-batch updates.
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub batch_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: CtvrModel,
    pub history: Vec<TrainRecord>,
}

/// Mini-batch SGD on mean cross-entropy. Batches walk a seeded shuffle of
/// the dataset, reshuffled each epoch; the batch size is capped at the
/// dataset size. Dropout masks are drawn per sample.
pub fn train(ds: &Dataset, mut model: CtvrModel, cfg: &TrainConfig) -> Result<TrainOutcome, CtvrError> {
    ds.check(2)?;
    let lr = model.hyper.learning_rate;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(CtvrError::Config(format!("learning rate {lr} must be finite and non-negative")));
    }
    let batch = model.hyper.batch_size.clamp(1, ds.len());
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut grad = model.zeros_like();
        let (mut loss, mut correct) = (0.0, 0usize);
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            let dropout = model.sample_dropout(&mut rng);
            let (probs, l) = model.pass(&ds.images[i], ds.labels[i], Some(&dropout), Some(&mut grad))?;
            loss += l;
            let pred = (0..probs.len()).fold(0, |b, k| if probs[k] > probs[b] { k } else { b });
            correct += (pred == ds.labels[i]) as usize;
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            return Err(CtvrError::Divergence { step });
        }
        let scale = lr / batch as f64;
        if scale != 0.0 {
            for (p, g) in model.tensors_mut().into_iter().zip(grad.tensors_mut()) {
                for (w, d) in p.iter_mut().zip(g.iter()) {
                    *w -= scale * d;
                }
            }
        }
        history.push(TrainRecord {
            step,
            loss,
            batch_accuracy: correct as f64 / batch as f64,
        });
    }
    Ok(TrainOutcome { model, history })
}

/// Share of `ds` classified correctly (exact match, margin 0.5).
pub fn evaluate_accuracy(model: &CtvrModel, ds: &Dataset) -> Result<f64, CtvrError> {
    let preds: Vec<f64> = ds
        .images
        .iter()
        .map(|img| model.predict(img).map(|p| p as f64))
        .collect::<Result<_, _>>()?;
    let truth: Vec<f64> = ds.labels.iter().map(|&l| l as f64).collect();
    Ok(accuracy_fitness(&preds, &truth, 0.5)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctvr::Hyperparameters;
    use crate::pipeline::fixtures::three_class_blobs;

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = three_class_blobs(1, 20);
        let (tr, te) = split_dataset(&ds, 0.7, 5);
        assert_eq!(tr.class_counts(), [14; 3]);
        assert_eq!(te.class_counts(), [6; 3]);
        assert_eq!((tr.clone(), te.clone()), split_dataset(&ds, 0.7, 5));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = three_class_blobs(2, 3);
        let mut model = CtvrModel::new(Hyperparameters::default(), 16, 16, 0).unwrap();
        model.hyper.learning_rate = 0.0;
        let out = train(&ds, model.clone(), &TrainConfig { steps: 5, seed: 1 }).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.history.len(), 5);
    }

    #[test]
    fn blobs_are_learned() {
        let ds = three_class_blobs(3, 10);
        let model = CtvrModel::new(Hyperparameters::default(), 16, 16, 1).unwrap();
        let out = train(&ds, model, &TrainConfig { steps: 200, seed: 2 }).unwrap();
        let acc = evaluate_accuracy(&out.model, &ds).unwrap();
        assert!(acc >= 0.95, "train accuracy {acc}");
        let again = train(&ds, CtvrModel::new(Hyperparameters::default(), 16, 16, 1).unwrap(), &TrainConfig { steps: 200, seed: 2 }).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn too_few_examples_rejected() {
        let ds = three_class_blobs(2, 1);
        let model = CtvrModel::new(Hyperparameters::default(), 16, 16, 0).unwrap();
        assert!(matches!(train(&ds, model, &TrainConfig::default()), Err(CtvrError::Contract(_))));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let ds = three_class_blobs(2, 3);
        let mut model = CtvrModel::new(Hyperparameters::default(), 16, 16, 0).unwrap();
        model.hyper.learning_rate = 1e300;
        let err = train(&ds, model, &TrainConfig { steps: 50, seed: 0 }).unwrap_err();
        assert!(matches!(err, CtvrError::Divergence { .. }), "{err}");
    }
}
