//! Batch pipeline: denoise, segment, then tune/train and evaluate the
//! classifier, writing every artifact with its sha256 into a manifest.

pub mod fixtures;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ctvr::{
    save_model, split_dataset, Dataset, train, tune_hyperparameters, CtvrModel, Hyperparameters, HyperSpace, TrainConfig,
};
use crate::eho::EhoConfig;
use crate::imaging::{encode_label_pgm, encode_pgm, load_image, GrayImage, ImageIoError};
use crate::madf::{madf_denoise, MadfConfig};
use crate::metrics::{dice, MulticlassReport};
use crate::segment::{segment, SegmentationConfig};
use fixtures::{image_fixture, three_class_blobs, FixtureKind};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl PipelineError {
    /// 1 configuration, 2 input/output, 3 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } => 2,
            PipelineError::Stage { .. } => 3,
        }
    }

    fn io(path: &Path, e: impl ToString) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }
}

impl From<ImageIoError> for PipelineError {
    fn from(e: ImageIoError) -> Self {
        let path = match &e {
            ImageIoError::Io { path, .. } | ImageIoError::Format { path, .. } => path.clone(),
        };
        PipelineError::Io {
            path,
            reason: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageSelection {
    pub denoise: bool,
    pub segment: bool,
    pub classify: bool,
}

impl Default for StageSelection {
    fn default() -> Self {
        Self {
            denoise: true,
            segment: true,
            classify: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceChoice {
    #[default]
    Compact,
    Tables,
}

impl SpaceChoice {
    pub fn space(self) -> HyperSpace {
        match self {
            SpaceChoice::Compact => HyperSpace::compact(),
            SpaceChoice::Tables => HyperSpace::tables(),
        }
    }
}

/// Classification stage: trains on the seeded three-class blob set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub per_class: usize,
    pub train_fraction: f64,
    /// Search hyperparameters with EHO; otherwise train at `hyperparameters`.
    pub tune: bool,
    pub space: SpaceChoice,
    pub steps: usize,
    pub hyperparameters: Hyperparameters,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            per_class: 20,
            train_fraction: 0.7,
            tune: true,
            space: SpaceChoice::Compact,
            steps: 60,
            hyperparameters: Hyperparameters::default(),
        }
    }
}

/// Every field has a default. `seed` drives fixtures, splits, training and
/// the optimizer; the `seed` inside `[eho]` is overridden by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Image for the denoise and segment stages; the `fixture` image when unset.
    pub input: Option<PathBuf>,
    pub fixture: FixtureKind,
    pub out_dir: PathBuf,
    pub stages: StageSelection,
    pub madf: MadfConfig,
    pub segmentation: SegmentationConfig,
    pub eho: EhoConfig,
    pub classifier: ClassifierConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: None,
            fixture: FixtureKind::Disc,
            out_dir: PathBuf::from("ctvr-out"),
            stages: StageSelection::default(),
            madf: MadfConfig::default(),
            segmentation: SegmentationConfig::default(),
            eho: EhoConfig {
                clan_count: 2,
                per_clan_size: 3,
                max_generations: 3,
                ..EhoConfig::default()
            },
            classifier: ClassifierConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.madf.validate().map_err(|e| cfg(&e))?;
        self.segmentation.validate().map_err(|e| cfg(&e))?;
        self.eho.validate().map_err(|e| cfg(&e))?;
        self.classifier.hyperparameters.validate().map_err(|e| cfg(&e))?;
        let c = &self.classifier;
        if c.per_class < 4 {
            return Err(PipelineError::Config(format!("classifier.per_class {} below 4", c.per_class)));
        }
        if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "classifier.train_fraction {} outside (0, 1)",
                c.train_fraction
            )));
        }
        if self.input.is_none()
            && (self.stages.denoise || self.stages.segment)
            && self.fixture == FixtureKind::ThreeClassBlobs
        {
            return Err(PipelineError::Config(
                "fixture three-class-blobs is a labelled set, not an image for denoise/segment".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// False when a stage failed; the artifacts listed are then partial.
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub artifacts: Vec<Artifact>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// sha256 of [`Manifest::to_json`].
    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Writer<'_> {
    fn write(&mut self, stage: &str, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        self.manifest.artifacts.push(Artifact {
            stage: stage.to_string(),
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Registers a file some other writer produced.
    fn record(&mut self, stage: &str, name: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        self.manifest.artifacts.push(Artifact {
            stage: stage.to_string(),
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn finish(&self) -> Result<(), PipelineError> {
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest.to_json()).map_err(|e| PipelineError::io(&path, e))
    }
}

fn stage_err(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        cause: e.to_string(),
    }
}

fn mask_image(width: usize, height: usize, mask: &[bool]) -> GrayImage {
    GrayImage::new(width, height, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
        .expect("mask matches image size")
}

/// Runs the selected stages in order and writes `manifest.json` into the
/// output directory. On a stage failure the manifest is still written, marked
/// incomplete, listing the artifacts produced so far.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    let mut w = Writer {
        dir: &cfg.out_dir,
        manifest: Manifest {
            seed: cfg.seed,
            ..Manifest::default()
        },
    };
    match run_stages(cfg, &mut w) {
        Ok(()) => {
            w.manifest.complete = true;
            w.finish()?;
            Ok(w.manifest)
        }
        Err(e) => {
            if let PipelineError::Stage { stage, cause } = &e {
                w.manifest.failed_stage = Some(stage.to_string());
                w.manifest.error = Some(cause.clone());
            } else {
                w.manifest.error = Some(e.to_string());
            }
            // the original error matters more than a failed manifest write
            let _ = w.finish();
            Err(e)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, w: &mut Writer<'_>) -> Result<(), PipelineError> {
    if cfg.stages.denoise || cfg.stages.segment {
        let (input, truth) = match &cfg.input {
            Some(path) => (load_image(path)?, None),
            None => {
                let f = image_fixture(cfg.fixture, cfg.seed).expect("validated image fixture");
                w.write("input", "input.pgm", &encode_pgm(&f.noisy))?;
                w.write("input", "truth_mask.pgm", &encode_pgm(&mask_image(f.noisy.width(), f.noisy.height(), &f.mask)))?;
                (f.noisy, Some(f.mask))
            }
        };
        let image = if cfg.stages.denoise {
            let out = madf_denoise(&input, &cfg.madf).map_err(|e| stage_err("denoise")(&e))?;
            w.write("denoise", "denoised.pgm", &encode_pgm(&out))?;
            out
        } else {
            input
        };
        if cfg.stages.segment {
            let seg = segment(&image, &cfg.segmentation).map_err(|e| stage_err("segment")(&e))?;
            let part = &seg.partition;
            w.write("segment", "labels.pgm", &encode_label_pgm(part.width(), part.height(), part.labels()))?;
            w.write("segment", "mask.pgm", &encode_pgm(&mask_image(part.width(), part.height(), &seg.foreground)))?;
            w.write("segment", "regions.csv", part.to_csv().as_bytes())?;
            if let Some(truth) = truth {
                let d = dice(&seg.foreground, &truth).map_err(|e| stage_err("segment")(&e))?;
                w.write("segment", "segmentation.csv", format!("metric,value\ndice,{d:.6}\n").as_bytes())?;
            }
        }
    }
    if cfg.stages.classify {
        classify_stage(cfg, w)?;
    }
    Ok(())
}

fn classify_stage(cfg: &PipelineConfig, w: &mut Writer<'_>) -> Result<(), PipelineError> {
    let c = &cfg.classifier;
    let fail = stage_err("classify");
    let data = three_class_blobs(cfg.seed, c.per_class);
    let (train_set, test_set) = split_dataset(&data, c.train_fraction, cfg.seed);
    let train_cfg = TrainConfig {
        steps: c.steps,
        seed: cfg.seed,
    };
    let model = if c.tune {
        let eho = EhoConfig {
            seed: cfg.seed,
            ..cfg.eho.clone()
        };
        let out = tune_hyperparameters(&train_set, &c.space.space(), &c.hyperparameters, &eho, &train_cfg)
            .map_err(|e| fail(&e))?;
        w.write("classify", "tune_history.csv", out.search.history_csv().as_bytes())?;
        let hyper = toml::to_string(&out.hyper).map_err(|e| fail(&e))?;
        w.write("classify", "hyperparameters.toml", hyper.as_bytes())?;
        out.model
    } else {
        let first = &train_set.images[0];
        let init = CtvrModel::new(c.hyperparameters.clone(), first.height(), first.width(), cfg.seed)
            .map_err(|e| fail(&e))?;
        train(&train_set, init, &train_cfg).map_err(|e| fail(&e))?.model
    };
    let model_path = w.dir.join("model.ctvr");
    save_model(&model, &model_path).map_err(|e| PipelineError::io(&model_path, e))?;
    w.record("classify", "model.ctvr")?;

    let mut predictions = String::from("index,truth,predicted,p0,p1,p2\n");
    let mut predicted = Vec::with_capacity(test_set.len());
    for (i, (img, &truth)) in test_set.images.iter().zip(&test_set.labels).enumerate() {
        let p = model.predict_proba(img).map_err(|e| fail(&e))?;
        let k = model.predict(img).map_err(|e| fail(&e))?;
        predicted.push(k);
        predictions.push_str(&format!("{i},{truth},{k},{:.6},{:.6},{:.6}\n", p[0], p[1], p[2]));
    }
    w.write("classify", "predictions.csv", predictions.as_bytes())?;
    let report = MulticlassReport::from_labels(&predicted, &test_set.labels).map_err(|e| stage_err("eval")(&e))?;
    w.write("eval", "metrics.csv", report.to_csv().as_bytes())?;
    Ok(())
}

/// Writes a fixture into `out_dir`. Image kinds produce `<kind>.pgm` (noisy),
/// `<kind>_clean.pgm` and `<kind>_mask.pgm`; the labelled set produces
/// `blob_NNN.pgm` files (20 per class) and `labels.csv`.
pub fn generate_fixtures(kind: FixtureKind, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), PipelineError> {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    match image_fixture(kind, seed) {
        Some(f) => {
            let (wd, ht) = (f.noisy.width(), f.noisy.height());
            put(format!("{kind}.pgm"), encode_pgm(&f.noisy))?;
            put(format!("{kind}_clean.pgm"), encode_pgm(&f.clean))?;
            put(format!("{kind}_mask.pgm"), encode_pgm(&mask_image(wd, ht, &f.mask)))?;
        }
        None => {
            let set = three_class_blobs(seed, 20);
            let mut labels = String::from("file,label\n");
            for (i, (img, l)) in set.images.iter().zip(&set.labels).enumerate() {
                let name = format!("blob_{i:03}.pgm");
                labels.push_str(&format!("{name},{l}\n"));
                put(name, encode_pgm(img))?;
            }
            put("labels.csv".into(), labels.into_bytes())?;
        }
    }
    Ok(written)
}

/// Reads a directory holding `labels.csv` (`file,label` with a header) and
/// the images it names.
pub fn load_labeled_dir(dir: &Path) -> Result<Dataset, PipelineError> {
    let index = dir.join("labels.csv");
    let text = fs::read_to_string(&index).map_err(|e| PipelineError::io(&index, e))?;
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (file, label) = line
            .rsplit_once(',')
            .ok_or_else(|| PipelineError::io(&index, format!("line {}: expected file,label", i + 1)))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| PipelineError::io(&index, format!("line {}: bad label {label:?}", i + 1)))?;
        ds.images.push(load_image(dir.join(file.trim()))?);
        ds.labels.push(label);
    }
    Ok(ds)
}
