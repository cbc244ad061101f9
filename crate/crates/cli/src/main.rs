//! `ctvr` command line. Exit codes: 0 success, 1 configuration or usage
//! error, 2 input/output error, 3 stage failure.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ctvr::ctvr::{
    load_model, save_model, split_dataset, train, tune_hyperparameters, CtvrError, CtvrModel, TrainConfig,
};
use ctvr::eho::{negative_rastrigin, negative_sphere, optimize, EhoConfig, SearchSpace};
use ctvr::imaging::{encode_label_pgm, encode_pgm, load_image, GrayImage};
use ctvr::madf::madf_denoise;
use ctvr::metrics::{parse_labels, MulticlassReport};
use ctvr::pipeline::fixtures::{three_class_blobs, FixtureKind};
use ctvr::pipeline::{
    generate_fixtures, load_labeled_dir, run_pipeline, PipelineConfig, PipelineError, SpaceChoice,
};
use ctvr::segment::segment;

const CLASS_NAMES: [&str; 3] = ["glioma", "meningioma", "pituitary"];

#[derive(Parser, Debug)]
#[command(name = "ctvr", version, about = "Denoise, segment and classify grayscale scans")]
struct Cli {
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline TOML whose sections supply defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Modified anisotropic diffusion.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output PGM; defaults to `<out-dir>/denoised.pgm`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        weight: Option<f64>,
    },
    /// Topological split-merge segmentation; writes labels.pgm, mask.pgm and regions.csv.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        persistence: Option<f64>,
        #[arg(long)]
        merge_tau: Option<f64>,
    },
    /// Elephant herding optimization on a test objective or the classifier.
    Optimize {
        #[arg(long, value_enum)]
        objective: Objective,
        #[arg(long)]
        clans: Option<usize>,
        #[arg(long)]
        per_clan: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// Dimensions of the sphere and rastrigin objectives.
        #[arg(long, default_value_t = 4)]
        dims: usize,
        /// History CSV; defaults to `<out-dir>/history.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier at fixed hyperparameters.
    Train {
        /// Directory with labels.csv and images; the seeded blob set when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Checkpoint; defaults to `<out-dir>/model.ctvr`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune classifier hyperparameters with EHO, then train at the best point.
    Tune {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        clans: Option<usize>,
        #[arg(long)]
        per_clan: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long, value_enum)]
        space: Option<Space>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the predicted class and probabilities for one image.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Per-class metrics from predicted and true label files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Metrics CSV; defaults to `<out-dir>/metrics.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic fixture with its ground truth.
    Fixtures {
        #[arg(long)]
        kind: FixtureKind,
    },
    /// Run the configured stages end to end and write a manifest.
    Pipeline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Objective {
    Sphere,
    Rastrigin,
    Ctvr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Compact,
    Tables,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
    Stage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Stage(_) => 3,
        }
    }

    fn stage(name: &str) -> impl Fn(&dyn Display) -> CliError + '_ {
        move |e| CliError::Stage(format!("{name}: {e}"))
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Stage(m) => write!(f, "stage failed: {m}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Io { path, reason } => CliError::Io(format!("{}: {reason}", path.display())),
            PipelineError::Stage { stage, cause } => CliError::Stage(format!("{stage}: {cause}")),
        }
    }
}

impl From<ctvr::imaging::ImageIoError> for CliError {
    fn from(e: ctvr::imaging::ImageIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn ctvr_err(stage: &str) -> impl Fn(CtvrError) -> CliError + '_ {
    move |e| match e {
        CtvrError::Io { .. } => CliError::Io(e.to_string()),
        CtvrError::Config(_) => CliError::Config(e.to_string()),
        other => CliError::Stage(format!("{stage}: {other}")),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

struct Context {
    cfg: PipelineConfig,
}

impl Context {
    fn out(&self, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.cfg.out_dir.join(default_name))
    }

    fn eho(&self, clans: Option<usize>, per_clan: Option<usize>, generations: Option<usize>) -> EhoConfig {
        let mut e = self.cfg.eho.clone();
        e.seed = self.cfg.seed;
        if let Some(c) = clans {
            e.clan_count = c;
        }
        if let Some(p) = per_clan {
            e.per_clan_size = p;
        }
        if let Some(g) = generations {
            e.max_generations = g;
        }
        // a single-member clan cannot spare a member for re-seeding
        if per_clan.is_some() && e.worst_count >= e.per_clan_size {
            e.worst_count = e.per_clan_size.saturating_sub(1);
        }
        e
    }

    fn dataset(&self, data: Option<PathBuf>) -> Result<ctvr::ctvr::Dataset, CliError> {
        match data {
            Some(dir) => Ok(load_labeled_dir(&dir)?),
            None => Ok(three_class_blobs(self.cfg.seed, self.cfg.classifier.per_class)),
        }
    }

    fn train_cfg(&self, steps: Option<usize>) -> TrainConfig {
        TrainConfig {
            steps: steps.unwrap_or(self.cfg.classifier.steps),
            seed: self.cfg.seed,
        }
    }
}

fn image_dims(ds: &ctvr::ctvr::Dataset) -> Result<(usize, usize), CliError> {
    ds.images
        .first()
        .map(|i| (i.height(), i.width()))
        .ok_or_else(|| CliError::Io("dataset holds no images".into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    let ctx = Context { cfg };
    match cli.command {
        Command::Denoise {
            input,
            out,
            iterations,
            lambda,
            weight,
        } => {
            let mut m = ctx.cfg.madf.clone();
            m.iterations = iterations.unwrap_or(m.iterations);
            m.lambda = lambda.unwrap_or(m.lambda);
            m.weight = weight.unwrap_or(m.weight);
            m.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let img = load_image(&input)?;
            let out_img = madf_denoise(&img, &m).map_err(|e| CliError::stage("denoise")(&e))?;
            let path = ctx.out(out, "denoised.pgm");
            write_file(&path, &encode_pgm(&out_img))?;
            println!("{}", path.display());
        }
        Command::Segment {
            input,
            beta,
            persistence,
            merge_tau,
        } => {
            let mut s = ctx.cfg.segmentation.clone();
            s.beta = beta.unwrap_or(s.beta);
            s.persistence = persistence.unwrap_or(s.persistence);
            s.merge_tau = merge_tau.unwrap_or(s.merge_tau);
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let img = load_image(&input)?;
            log::warn!("segmenting {} as given; run `denoise` first for the intended pipeline", input.display());
            let seg = segment(&img, &s).map_err(|e| CliError::stage("segment")(&e))?;
            if seg.no_edges {
                log::warn!("no edge points found; the image is a single region");
            }
            let p = &seg.partition;
            let dir = &ctx.cfg.out_dir;
            write_file(&dir.join("labels.pgm"), &encode_label_pgm(p.width(), p.height(), p.labels()))?;
            let mask = GrayImage::new(
                p.width(),
                p.height(),
                seg.foreground.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            )
            .expect("mask matches image");
            write_file(&dir.join("mask.pgm"), &encode_pgm(&mask))?;
            write_file(&dir.join("regions.csv"), p.to_csv().as_bytes())?;
            println!("{} regions, {} merges", p.region_count(), seg.trace.merges.len());
        }
        Command::Optimize {
            objective,
            clans,
            per_clan,
            generations,
            dims,
            out,
        } => {
            let eho = ctx.eho(clans, per_clan, generations);
            eho.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let space = |lo, hi| SearchSpace::uniform(dims, lo, hi).map_err(|e| CliError::Config(e.to_string()));
            let result = match objective {
                Objective::Sphere => optimize(negative_sphere, &space(0.0, 1.0)?, &eho),
                Objective::Rastrigin => optimize(negative_rastrigin, &space(-5.12, 5.12)?, &eho),
                Objective::Ctvr => {
                    let data = ctx.dataset(None)?;
                    let (train_set, _) = split_dataset(&data, ctx.cfg.classifier.train_fraction, ctx.cfg.seed);
                    let out = tune_hyperparameters(
                        &train_set,
                        &ctx.cfg.classifier.space.space(),
                        &ctx.cfg.classifier.hyperparameters,
                        &eho,
                        &ctx.train_cfg(None),
                    )
                    .map_err(ctvr_err("optimize"))?;
                    Ok(out.search)
                }
            }
            .map_err(|e| CliError::stage("optimize")(&e))?;
            let path = ctx.out(out, "history.csv");
            write_file(&path, result.history_csv().as_bytes())?;
            println!("best fitness {} at {:?}", result.best_fitness, result.best_decoded);
        }
        Command::Train { data, steps, out } => {
            let ds = ctx.dataset(data)?;
            let (h, w) = image_dims(&ds)?;
            let model = CtvrModel::new(ctx.cfg.classifier.hyperparameters.clone(), h, w, ctx.cfg.seed)
                .map_err(ctvr_err("train"))?;
            let trained = train(&ds, model, &ctx.train_cfg(steps)).map_err(ctvr_err("train"))?;
            let path = ctx.out(out, "model.ctvr");
            ensure_parent(&path)?;
            save_model(&trained.model, &path).map_err(ctvr_err("train"))?;
            if let Some(last) = trained.history.last() {
                println!("final loss {:.6}, batch accuracy {:.3}", last.loss, last.batch_accuracy);
            }
            println!("{}", path.display());
        }
        Command::Tune {
            data,
            steps,
            clans,
            per_clan,
            generations,
            space,
            out,
        } => {
            let ds = ctx.dataset(data)?;
            let eho = ctx.eho(clans, per_clan, generations);
            eho.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let space = match space {
                Some(Space::Compact) => SpaceChoice::Compact,
                Some(Space::Tables) => SpaceChoice::Tables,
                None => ctx.cfg.classifier.space,
            }
            .space();
            let outcome = tune_hyperparameters(
                &ds,
                &space,
                &ctx.cfg.classifier.hyperparameters,
                &eho,
                &ctx.train_cfg(steps),
            )
            .map_err(ctvr_err("tune"))?;
            let path = ctx.out(out, "model.ctvr");
            ensure_parent(&path)?;
            save_model(&outcome.model, &path).map_err(ctvr_err("tune"))?;
            println!("validation accuracy {:.3}", outcome.validation_accuracy);
            println!("{:?}", outcome.hyper);
            println!("{}", path.display());
        }
        Command::Classify { model, input } => {
            let m = load_model(&model).map_err(ctvr_err("classify"))?;
            let img = load_image(&input)?;
            let p = m.predict_proba(&img).map_err(ctvr_err("classify"))?;
            let k = m.predict(&img).map_err(ctvr_err("classify"))?;
            println!("class {k} ({})", CLASS_NAMES[k]);
            for (i, v) in p.iter().enumerate() {
                println!("p{i} {v:.6}");
            }
        }
        Command::Eval { pred, truth, out } => {
            let read = |p: &Path| fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
            let parse = |p: &Path, t: String| parse_labels(&t).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
            let pv = parse(&pred, read(&pred)?)?;
            let tv = parse(&truth, read(&truth)?)?;
            let report = MulticlassReport::from_labels(&pv, &tv).map_err(|e| CliError::stage("eval")(&e))?;
            let csv = report.to_csv();
            write_file(&ctx.out(out, "metrics.csv"), csv.as_bytes())?;
            print!("{csv}");
        }
        Command::Fixtures { kind } => {
            for p in generate_fixtures(kind, ctx.cfg.seed, &ctx.cfg.out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline => {
            let manifest = run_pipeline(&ctx.cfg)?;
            println!(
                "{} artifacts, manifest sha256 {}",
                manifest.artifacts.len(),
                manifest.digest()
            );
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display()))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
