use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::conv::PoolKind;
use super::model::{CtvrModel, Hyperparameters};
use super::train::{evaluate_accuracy, split_dataset, train, Dataset, TrainConfig};
use super::{Activation, CtvrError};
use crate::eho::{optimize, Dimension, EhoConfig, EhoError, OptimizationResult, SearchSpace};

/// A tunable hyperparameter. Categorical choices are encoded as indices:
/// pooling `0 = max, 1 = average`; activation `0 = ReLU, 1 = leaky ReLU, 2 = ELU`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperParam {
    KernelSize,
    FeatureMaps,
    PoolSize,
    PoolKind,
    FclNeurons,
    Activation,
    ConvDropout,
    HiddenLayers,
    LstmNeurons,
    LearningRate,
    LstmDropout,
    BatchSize,
}

impl HyperParam {
    pub fn name(self) -> &'static str {
        match self {
            HyperParam::KernelSize => "kernel_size",
            HyperParam::FeatureMaps => "feature_maps",
            HyperParam::PoolSize => "pool_size",
            HyperParam::PoolKind => "pool_kind",
            HyperParam::FclNeurons => "fcl_neurons",
            HyperParam::Activation => "activation",
            HyperParam::ConvDropout => "conv_dropout",
            HyperParam::HiddenLayers => "hidden_layers",
            HyperParam::LstmNeurons => "lstm_neurons",
            HyperParam::LearningRate => "learning_rate",
            HyperParam::LstmDropout => "lstm_dropout",
            HyperParam::BatchSize => "batch_size",
        }
    }

    pub fn apply(self, h: &mut Hyperparameters, v: f64) {
        let n = v.round().max(0.0) as usize;
        match self {
            HyperParam::KernelSize => h.kernel_size = n,
            HyperParam::FeatureMaps => h.feature_maps = n,
            HyperParam::PoolSize => h.pool_size = n,
            HyperParam::PoolKind => h.pool_kind = if n == 0 { PoolKind::Max } else { PoolKind::Average },
            HyperParam::FclNeurons => h.fcl_neurons = n,
            HyperParam::Activation => h.activation = Activation::from_code(n as u32).unwrap_or_default(),
            HyperParam::ConvDropout => h.conv_dropout = v,
            HyperParam::HiddenLayers => h.hidden_layers = n,
            HyperParam::LstmNeurons => h.lstm_neurons = n,
            HyperParam::LearningRate => h.learning_rate = v,
            HyperParam::LstmDropout => h.lstm_dropout = v,
            HyperParam::BatchSize => h.batch_size = n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    entries: Vec<(HyperParam, Dimension)>,
}

fn discrete(values: &[f64]) -> Dimension {
    Dimension::Discrete { values: values.to_vec() }
}

impl HyperSpace {
    pub fn new(entries: Vec<(HyperParam, Dimension)>) -> Result<Self, CtvrError> {
        let space = Self { entries };
        space.search_space()?;
        Ok(space)
    }

    /// Every range of the convolutional and recurrent hyperparameter tables.
    pub fn tables() -> Self {
        Self {
            entries: vec![
                (HyperParam::KernelSize, discrete(&[3.0, 5.0, 7.0])),
                (
                    HyperParam::FeatureMaps,
                    discrete(&[32.0, 64.0, 96.0, 128.0, 160.0, 192.0, 224.0, 256.0]),
                ),
                (HyperParam::PoolSize, discrete(&[2.0, 3.0])),
                (HyperParam::PoolKind, discrete(&[0.0, 1.0])),
                (HyperParam::FclNeurons, discrete(&[128.0, 256.0, 512.0])),
                (HyperParam::Activation, discrete(&[1.0, 2.0, 0.0])),
                (HyperParam::ConvDropout, discrete(&[0.3, 0.4, 0.5])),
                (HyperParam::HiddenLayers, Dimension::integers(0, 2)),
                (HyperParam::LstmNeurons, Dimension::integers(20, 200)),
                (HyperParam::LearningRate, Dimension::Continuous { min: 0.005, max: 0.2 }),
                (HyperParam::LstmDropout, Dimension::Continuous { min: 0.0, max: 1.0 }),
                (HyperParam::BatchSize, Dimension::integers(1, 512)),
            ],
        }
    }

    /// The table ranges with the expensive axes narrowed for single-core
    /// tuning on small images: up to 64 feature maps, at most one hidden
    /// layer, 20 to 40 recurrent units and batches of at most 16.
    pub fn compact() -> Self {
        let mut s = Self::tables();
        for (p, d) in s.entries.iter_mut() {
            match p {
                HyperParam::FeatureMaps => *d = discrete(&[32.0, 64.0]),
                HyperParam::FclNeurons => *d = discrete(&[128.0]),
                HyperParam::HiddenLayers => *d = Dimension::integers(0, 1),
                HyperParam::LstmNeurons => *d = Dimension::integers(20, 40),
                HyperParam::BatchSize => *d = Dimension::integers(1, 16),
                _ => {}
            }
        }
        s
    }

    pub fn entries(&self) -> &[(HyperParam, Dimension)] {
        &self.entries
    }

    pub fn search_space(&self) -> Result<SearchSpace, EhoError> {
        SearchSpace::new(
            self.entries
                .iter()
                .map(|(p, d)| (p.name().to_string(), d.clone()))
                .collect(),
        )
    }

    /// `base` with each searched hyperparameter replaced by its decoded value.
    pub fn apply(&self, base: &Hyperparameters, decoded: &[f64]) -> Hyperparameters {
        let mut h = base.clone();
        for ((p, _), &v) in self.entries.iter().zip(decoded) {
            p.apply(&mut h, v);
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub hyper: Hyperparameters,
    /// Retrained on the whole training set at `hyper`.
    pub model: CtvrModel,
    /// Validation accuracy of the best assignment during the search.
    pub validation_accuracy: f64,
    pub search: OptimizationResult,
}

/// Searches `space` with EHO. Each candidate trains a fresh model on 70% of
/// `train_set` and scores its accuracy on the remaining 30%; the best
/// assignment is then retrained on all of `train_set`. Identical decoded
/// assignments are trained once.
pub fn tune_hyperparameters(
    train_set: &Dataset,
    space: &HyperSpace,
    base: &Hyperparameters,
    eho: &EhoConfig,
    train_cfg: &TrainConfig,
) -> Result<TuneOutcome, CtvrError> {
    let first = train_set
        .images
        .first()
        .ok_or_else(|| CtvrError::Contract("empty training set".into()))?;
    let (h, w) = (first.height(), first.width());
    let (fit, val) = split_dataset(train_set, 0.7, train_cfg.seed);
    let search_space = space.search_space()?;
    let mut memo: HashMap<Vec<u64>, Result<f64, String>> = HashMap::new();
    let objective = |decoded: &[f64]| -> Result<f64, String> {
        let key: Vec<u64> = decoded.iter().map(|v| v.to_bits()).collect();
        memo.entry(key)
            .or_insert_with(|| {
                let hyper = space.apply(base, decoded);
                let run = || -> Result<f64, CtvrError> {
                    let model = CtvrModel::new(hyper.clone(), h, w, train_cfg.seed)?;
                    let trained = train(&fit, model, train_cfg)?;
                    evaluate_accuracy(&trained.model, &val)
                };
                let r = run().map_err(|e| e.to_string());
                log::debug!("tune {hyper:?} -> {r:?}");
                r
            })
            .clone()
    };
    let search = optimize(objective, &search_space, eho)?;
    let hyper = space.apply(base, &search.best_decoded);
    let model = CtvrModel::new(hyper.clone(), h, w, train_cfg.seed)?;
    let model = train(train_set, model, train_cfg)?.model;
    Ok(TuneOutcome {
        hyper,
        model,
        validation_accuracy: search.best_fitness,
        search,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fixtures::three_class_blobs;

    #[test]
    fn table_space_decodes_inside_ranges() {
        let space = HyperSpace::tables();
        let ss = space.search_space().unwrap();
        for u in [0.0, 0.37, 0.999, 1.0] {
            let h = space.apply(&Hyperparameters::default(), &ss.decode(&vec![u; ss.len()]));
            h.validate().unwrap();
        }
    }

    #[test]
    fn collapsed_space_returns_its_point() {
        let ds = three_class_blobs(4, 4);
        let space = HyperSpace::new(vec![(HyperParam::LearningRate, discrete(&[0.1]))]).unwrap();
        let eho = EhoConfig {
            clan_count: 1,
            per_clan_size: 2,
            max_generations: 1,
            ..EhoConfig::default()
        };
        let out = tune_hyperparameters(&ds, &space, &Hyperparameters::default(), &eho, &TrainConfig { steps: 5, seed: 0 }).unwrap();
        assert_eq!(out.hyper.learning_rate, 0.1);
        assert_eq!(out.search.history.len(), 2);
    }
}
