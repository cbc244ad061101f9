//! Clan-structured elephant herding optimization over mixed discrete and
//! continuous spaces. Fitness is maximized.

mod benchmarks;
mod space;

pub use benchmarks::{negative_rastrigin, negative_sphere};
pub use space::{Dimension, SearchSpace};

use std::fmt::Display;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{rng_from_seed, SeededRng};

#[derive(Debug, Error, PartialEq)]
pub enum EhoError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("label sequences differ in length: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no samples to score")]
    NoSamples,
    #[error("every candidate failed to evaluate in generation {generation}: {last_error}")]
    AllFailed { generation: usize, last_error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhoConfig {
    pub clan_count: usize,
    pub per_clan_size: usize,
    /// Step scale toward the clan best.
    pub beta_scale: f64,
    /// Scale applied to the clan centre when moving the matriarch.
    pub lambda_scale: f64,
    /// Members per clan re-seeded each generation.
    pub worst_count: usize,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for EhoConfig {
    fn default() -> Self {
        Self {
            clan_count: 12,
            per_clan_size: 10,
            beta_scale: 0.5,
            lambda_scale: 0.1,
            worst_count: 1,
            max_generations: 20,
            seed: 0,
        }
    }
}

impl EhoConfig {
    pub fn validate(&self) -> Result<(), EhoError> {
        let bad = |m: String| Err(EhoError::Config(m));
        if self.clan_count == 0 || self.per_clan_size == 0 {
            return bad("need at least one clan with at least one member".into());
        }
        if self.worst_count >= self.per_clan_size {
            return bad(format!(
                "worst_count {} must be below per_clan_size {}",
                self.worst_count, self.per_clan_size
            ));
        }
        if !(0.0..=1.0).contains(&self.beta_scale) || !(0.0..=1.0).contains(&self.lambda_scale) {
            return bad("beta_scale and lambda_scale must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    /// Normalized coordinates, each in `[0, 1]`.
    pub position: Vec<f64>,
    pub fitness: Option<f64>,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub clans: Vec<Vec<Candidate>>,
    pub generation: usize,
    pub best: Option<Candidate>,
}

impl Population {
    pub fn size(&self) -> usize {
        self.clans.iter().map(Vec::len).sum()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.clans.iter().flatten()
    }

    /// Best member by `(fitness, lowest clan, lowest member)`.
    fn best_member(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (c, clan) in self.clans.iter().enumerate() {
            for (m, cand) in clan.iter().enumerate() {
                let s = cand.score();
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((c, m, s));
                }
            }
        }
        best.map(|(c, m, _)| (c, m))
    }
}

fn random_population(space: &SearchSpace, cfg: &EhoConfig, rng: &mut SeededRng) -> Population {
    let clans = (0..cfg.clan_count)
        .map(|_| {
            (0..cfg.per_clan_size)
                .map(|_| Candidate {
                    position: (0..space.len()).map(|_| rng.random::<f64>()).collect(),
                    fitness: None,
                })
                .collect()
        })
        .collect();
    Population {
        clans,
        generation: 0,
        best: None,
    }
}

/// `clan_count x per_clan_size` unevaluated candidates, uniform in `[0, 1]`,
/// drawn from a generator seeded with `cfg.seed`.
pub fn init_population(space: &SearchSpace, cfg: &EhoConfig) -> Result<Population, EhoError> {
    cfg.validate()?;
    Ok(random_population(space, cfg, &mut rng_from_seed(cfg.seed)))
}

/// Move toward the clan best: `E + beta (E_best - E) gamma`, fresh `gamma`
/// per component, clamped to `[0, 1]`.
pub fn clan_update(
    position: &[f64],
    clan_best: &[f64],
    beta_scale: f64,
    mut gamma: impl FnMut() -> f64,
) -> Vec<f64> {
    position
        .iter()
        .zip(clan_best)
        .map(|(&e, &b)| (e + beta_scale * (b - e) * gamma()).clamp(0.0, 1.0))
        .collect()
}

/// Component-wise mean of the clan's positions.
pub fn clan_centre(positions: &[&[f64]]) -> Vec<f64> {
    assert!(!positions.is_empty(), "clan must be non-empty");
    let n = positions.len() as f64;
    let mut centre = vec![0.0; positions[0].len()];
    for p in positions {
        for (c, v) in centre.iter_mut().zip(p.iter()) {
            *c += v;
        }
    }
    centre.iter_mut().for_each(|c| *c /= n);
    centre
}

/// New matriarch position: `lambda * centre`, clamped to `[0, 1]`.
pub fn matriarch_update(positions: &[&[f64]], lambda_scale: f64) -> Vec<f64> {
    clan_centre(positions)
        .into_iter()
        .map(|c| (lambda_scale * c).clamp(0.0, 1.0))
        .collect()
}

/// Re-seeds one position with `E_min + (E_max - E_min + 1) gamma` per
/// dimension, evaluated in native units (values for continuous dimensions,
/// indices for discrete ones) and clamped to `[E_min, E_max]`.
pub fn reseed_position(space: &SearchSpace, mut gamma: impl FnMut() -> f64) -> Vec<f64> {
    space
        .dims()
        .iter()
        .map(|d| {
            let (lo, hi) = d.native_bounds();
            let v = (lo + (hi - lo + 1.0) * gamma()).clamp(lo, hi);
            d.normalize_native(v)
        })
        .collect()
}

/// Re-seeds the `worst_count` lowest-fitness members; ties go to the later
/// member. Members keep their slots; re-seeded ones become unevaluated.
pub fn replace_worst(
    clan: &mut [Candidate],
    space: &SearchSpace,
    worst_count: usize,
    mut gamma: impl FnMut() -> f64,
) {
    let mut order: Vec<usize> = (0..clan.len()).collect();
    order.sort_by(|&a, &b| clan[a].score().total_cmp(&clan[b].score()).then(b.cmp(&a)));
    for &i in order.iter().take(worst_count) {
        clan[i].position = reseed_position(space, &mut gamma);
        clan[i].fitness = None;
    }
}

/// Share of samples whose prediction lies within `margin` of the target.
/// For class labels any margin in `(0, 1]` is exact-match accuracy.
pub fn accuracy_fitness(predictions: &[f64], targets: &[f64], margin: f64) -> Result<f64, EhoError> {
    if predictions.len() != targets.len() {
        return Err(EhoError::LengthMismatch(predictions.len(), targets.len()));
    }
    if targets.is_empty() {
        return Err(EhoError::NoSamples);
    }
    let hits = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| (*t - *p).abs() < margin)
        .count();
    Ok(hits as f64 / targets.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best fitness seen so far.
    pub best_fitness: f64,
    /// Mean over candidates that evaluated successfully this generation.
    pub mean_fitness: f64,
    pub best_decoded: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub best_position: Vec<f64>,
    pub best_decoded: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
}

impl OptimizationResult {
    /// `generation,best_fitness,mean_fitness,best_position_decoded` with the
    /// decoded vector joined by `;`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,best_fitness,mean_fitness,best_position_decoded\n");
        for r in &self.history {
            let decoded: Vec<String> = r.best_decoded.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.generation,
                r.best_fitness,
                r.mean_fitness,
                decoded.join(";")
            ));
        }
        out
    }
}

fn evaluate<E: Display>(
    pop: &mut Population,
    space: &SearchSpace,
    objective: &mut impl FnMut(&[f64]) -> Result<f64, E>,
    evaluations: &mut usize,
) -> Result<f64, EhoError> {
    let mut last_error = String::new();
    let (mut sum, mut ok) = (0.0, 0usize);
    for cand in pop.clans.iter_mut().flatten() {
        if cand.fitness.is_some() {
            if let Some(f) = cand.fitness.filter(|f| f.is_finite()) {
                sum += f;
                ok += 1;
            }
            continue;
        }
        *evaluations += 1;
        let fitness = match objective(&space.decode(&cand.position)) {
            Ok(f) if !f.is_nan() => f,
            Ok(_) => {
                last_error = "objective returned NaN".into();
                f64::NEG_INFINITY
            }
            Err(e) => {
                last_error = e.to_string();
                log::warn!("candidate evaluation failed: {e}");
                f64::NEG_INFINITY
            }
        };
        cand.fitness = Some(fitness);
        if fitness.is_finite() {
            sum += fitness;
            ok += 1;
        }
    }
    if ok == 0 && pop.candidates().all(|c| c.score() == f64::NEG_INFINITY) {
        return Err(EhoError::AllFailed {
            generation: pop.generation,
            last_error,
        });
    }
    Ok(if ok > 0 { sum / ok as f64 } else { f64::NEG_INFINITY })
}

/// Runs the herding loop for `max_generations` generations: per clan, sort by
/// fitness, move members toward the clan best, move the matriarch to the
/// scaled clan centre, re-seed the worst members, then re-evaluate. The best
/// candidate ever seen is re-inserted into the weakest matriarch slot whenever
/// a generation loses it, so the best-so-far fitness never drops.
///
/// A failing or NaN objective scores `-inf`; the run only errors when every
/// candidate of a generation fails.
pub fn optimize<E: Display>(
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
    space: &SearchSpace,
    cfg: &EhoConfig,
) -> Result<OptimizationResult, EhoError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut pop = random_population(space, cfg, &mut rng);
    let mut evaluations = 0;
    let mean = evaluate(&mut pop, space, &mut objective, &mut evaluations)?;
    let (c, m) = pop.best_member().expect("population is non-empty");
    pop.best = Some(pop.clans[c][m].clone());
    let mut history = vec![record(&pop, space, mean)];

    while pop.generation < cfg.max_generations {
        pop.generation += 1;
        for clan in pop.clans.iter_mut() {
            // stable: equal fitness keeps member order
            clan.sort_by(|a, b| b.score().total_cmp(&a.score()));
            let best = clan[0].position.clone();
            let refs: Vec<&[f64]> = clan.iter().map(|c| c.position.as_slice()).collect();
            let matriarch = matriarch_update(&refs, cfg.lambda_scale);
            let mut moved: Vec<Vec<f64>> = Vec::with_capacity(clan.len());
            moved.push(matriarch);
            for cand in clan.iter().skip(1) {
                moved.push(clan_update(&cand.position, &best, cfg.beta_scale, || rng.random::<f64>()));
            }
            // worst members are chosen on the fitness that drove this generation
            let mut order: Vec<usize> = (1..clan.len()).collect();
            order.sort_by(|&a, &b| clan[a].score().total_cmp(&clan[b].score()).then(b.cmp(&a)));
            for &i in order.iter().take(cfg.worst_count) {
                moved[i] = reseed_position(space, || rng.random::<f64>());
            }
            for (cand, pos) in clan.iter_mut().zip(moved) {
                if cand.position != pos {
                    cand.position = pos;
                    cand.fitness = None;
                }
            }
        }
        let mean = evaluate(&mut pop, space, &mut objective, &mut evaluations)?;
        let elite = pop.best.clone().expect("best set after first evaluation");
        let (c, m) = pop.best_member().expect("population is non-empty");
        if pop.clans[c][m].score() > elite.score() {
            pop.best = Some(pop.clans[c][m].clone());
        } else if pop.clans[c][m].score() < elite.score() {
            // matriarchs sit in slot 0 after the sort
            let weakest = (0..pop.clans.len())
                .min_by(|&a, &b| pop.clans[a][0].score().total_cmp(&pop.clans[b][0].score()).then(a.cmp(&b)))
                .expect("at least one clan");
            pop.clans[weakest][0] = elite;
        }
        history.push(record(&pop, space, mean));
    }

    let best = pop.best.expect("best set");
    Ok(OptimizationResult {
        best_decoded: space.decode(&best.position),
        best_fitness: best.score(),
        best_position: best.position,
        history,
        evaluations,
    })
}

fn record(pop: &Population, space: &SearchSpace, mean: f64) -> GenerationRecord {
    let best = pop.best.as_ref().expect("best set");
    GenerationRecord {
        generation: pop.generation,
        best_fitness: best.score(),
        mean_fitness: mean,
        best_decoded: space.decode(&best.position),
    }
}

#[cfg(test)]
mod tests;
