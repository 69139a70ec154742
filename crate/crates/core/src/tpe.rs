//! Categorical tree-structured Parzen estimator over the configuration grid.
//!
//! Each parameter gets a smoothed histogram over its grid values for the
//! "good" (lowest-loss) and "bad" halves of the history. Candidates are drawn
//! from the good histograms, block first, and the one maximizing the product
//! of good/bad ratios over its active parameters is suggested, preferring
//! candidates not yet in the history. K3 and K4 histograms only see history
//! entries deep enough to contain them.
//!
//! Every suggestion draws from its own random stream keyed by
//! `(seed, history length)`, so `suggest` is a pure function of its inputs.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{Configuration, Param, ParamSpec, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeSettings {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Laplace pseudo-count added to every grid value.
    pub smoothing: f64,
    pub seed: u64,
    pub budget: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings {
            gamma: 0.25,
            n_startup: 20,
            n_candidates: 24,
            smoothing: 1.0,
            seed: 42,
            budget: 2000,
        }
    }
}

impl TpeSettings {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::InvalidInput("n_candidates must be positive".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::InvalidInput("smoothing must be positive".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Loss(f64),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Configuration,
    pub outcome: Outcome,
    /// True when the outcome was reused from an earlier identical suggestion.
    pub cached: bool,
}

impl Observation {
    pub fn loss(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Loss(l) => Some(l),
            Outcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationHistory {
    pub settings: TpeSettings,
    entries: Vec<Observation>,
}

impl ObservationHistory {
    pub fn new(settings: TpeSettings) -> Self {
        ObservationHistory {
            settings,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an observation; losses must be finite.
    pub fn record(&mut self, observation: Observation) -> Result<()> {
        if let Outcome::Loss(l) = observation.outcome {
            if !l.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite loss {l}")));
            }
        }
        self.entries.push(observation);
        Ok(())
    }

    pub fn successes(&self) -> impl Iterator<Item = &Observation> {
        self.entries.iter().filter(|o| o.loss().is_some())
    }

    /// Distinct configurations with a successful outcome.
    pub fn unique_successes(&self) -> usize {
        self.entries
            .iter()
            .filter(|o| !o.cached && o.loss().is_some())
            .count()
    }

    pub fn best(&self) -> Option<&Observation> {
        self.successes()
            .min_by(|a, b| a.loss().unwrap().total_cmp(&b.loss().unwrap()))
    }
}

/// Random stream for the suggestion made after `step` recorded entries.
pub fn suggestion_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

/// Splits the successful entries into the `ceil(gamma * n)` lowest-loss ones
/// and the rest. Ties go to the earlier entry. Failed trials are ignored.
pub fn split_history(history: &ObservationHistory) -> Result<(Vec<&Observation>, Vec<&Observation>)> {
    let mut ok: Vec<&Observation> = history.successes().collect();
    if ok.is_empty() {
        return Err(Error::EmptyHistory);
    }
    ok.sort_by(|a, b| a.loss().unwrap().total_cmp(&b.loss().unwrap()));
    let n_good = good_count(history.settings.gamma, ok.len());
    let bad = ok.split_off(n_good);
    Ok((ok, bad))
}

fn good_count(gamma: f64, n: usize) -> usize {
    ((gamma * n as f64).ceil() as usize).clamp(1, n)
}

/// Smoothed categorical mass over `grid`: `(count(v) + a) / (n + a * |grid|)`.
/// Off-grid observations are ignored.
pub fn build_density(grid: &ParamSpec, observations: &[u32], smoothing: f64) -> Vec<f64> {
    let size = grid.grid_size();
    let mut counts = vec![0.0; size];
    let mut n = 0.0;
    for &v in observations {
        if let Some(pos) = grid.position(v) {
            counts[pos] += 1.0;
            n += 1.0;
        }
    }
    let denom = n + smoothing * size as f64;
    counts.into_iter().map(|c| (c + smoothing) / denom).collect()
}

/// Good and bad histograms for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDensity {
    pub spec: ParamSpec,
    pub good_weights: Vec<f64>,
    pub bad_weights: Vec<f64>,
}

impl ParamDensity {
    /// Density of one parameter under the current good/bad split.
    pub fn from_history(space: &SearchSpace, history: &ObservationHistory, param: Param) -> Result<Self> {
        let (good, bad) = split_history(history)?;
        Ok(Self::fit(*space.spec(param), &good, &bad, history.settings.smoothing))
    }

    fn fit(spec: ParamSpec, good: &[&Observation], bad: &[&Observation], smoothing: f64) -> Self {
        // Entries where the parameter is inactive carry no value and are skipped.
        let values = |set: &[&Observation]| -> Vec<u32> {
            set.iter().filter_map(|o| o.config.get(spec.param)).collect()
        };
        ParamDensity {
            spec,
            good_weights: build_density(&spec, &values(good), smoothing),
            bad_weights: build_density(&spec, &values(bad), smoothing),
        }
    }

    fn sample_good<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.good_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.good_weights.len() - 1
    }

    fn log_ratio(&self, position: usize) -> f64 {
        self.good_weights[position].ln() - self.bad_weights[position].ln()
    }
}

/// Next configuration to evaluate.
pub fn suggest(space: &SearchSpace, history: &ObservationHistory) -> Configuration {
    let settings = &history.settings;
    let mut rng = suggestion_rng(settings.seed, history.len());
    if history.successes().count() < settings.n_startup.max(1) {
        return space.sample_uniform(&mut rng);
    }
    let (good, bad) = split_history(history).expect("history has successes");
    let densities: HashMap<Param, ParamDensity> = Param::ALL
        .iter()
        .map(|&p| (p, ParamDensity::fit(*space.spec(p), &good, &bad, settings.smoothing)))
        .collect();

    let seen: HashSet<&Configuration> = history.entries().iter().map(|o| &o.config).collect();
    // Best unseen candidate, falling back to the best seen one.
    let mut best: Option<(bool, f64, Configuration)> = None;
    for _ in 0..settings.n_candidates {
        let block_density = &densities[&Param::Block];
        let block_pos = block_density.sample_good(&mut rng);
        let block = block_density.spec.value_at(block_pos);
        let mut score = block_density.log_ratio(block_pos);
        let mut values = [None; 9];
        values[Param::Block as usize] = Some(block);
        for p in SearchSpace::active_params(block) {
            let density = &densities[&p];
            let pos = density.sample_good(&mut rng);
            values[p as usize] = Some(density.spec.value_at(pos));
            score += density.log_ratio(pos);
        }
        let config = assemble(space, &values);
        let novel = !seen.contains(&config);
        if best
            .as_ref()
            .is_none_or(|(n, s, _)| (novel, score) > (*n, *s))
        {
            best = Some((novel, score, config));
        }
    }
    best.expect("at least one candidate").2
}

fn assemble(space: &SearchSpace, values: &[Option<u32>; 9]) -> Configuration {
    let v = |p: Param| values[p as usize];
    Configuration {
        block: v(Param::Block).expect("block drawn"),
        k1: v(Param::K1).expect("always active"),
        k2: v(Param::K2).expect("always active"),
        k3: v(Param::K3),
        k4: v(Param::K4),
        fc1: v(Param::Fc1).expect("always active"),
        do1: crate::search_space::Dropout(v(Param::Do1).expect("always active")),
        fc2: v(Param::Fc2).expect("always active"),
        do2: crate::search_space::Dropout(v(Param::Do2).expect("always active")),
        output_classes: space.output_classes(),
    }
}

/// Sequential suggest/evaluate/record loop.
///
/// `objective` returns the loss of a configuration. A configuration that was
/// already evaluated reuses its cached outcome and still consumes one unit of
/// budget. When `unique_target` is set and not reached after `budget`
/// iterations, the loop keeps going up to three times the budget.
pub fn run_optimization<F>(
    space: &SearchSpace,
    settings: TpeSettings,
    unique_target: Option<usize>,
    mut objective: F,
) -> Result<ObservationHistory>
where
    F: FnMut(&Configuration) -> Result<f64>,
{
    settings.check()?;
    let mut history = ObservationHistory::new(settings);
    let mut seen: HashMap<Configuration, Outcome> = HashMap::new();
    let cap = settings.budget.saturating_mul(3);
    let mut iteration = 0;
    while iteration < cap {
        if iteration >= settings.budget
            && unique_target.is_none_or(|t| history.unique_successes() >= t)
        {
            break;
        }
        let config = suggest(space, &history);
        let (outcome, cached) = match seen.get(&config) {
            Some(o) => (o.clone(), true),
            None => {
                let outcome = match objective(&config) {
                    Ok(loss) if loss.is_finite() => Outcome::Loss(loss),
                    Ok(loss) => Outcome::Failed(format!("non-finite loss {loss}")),
                    Err(e) => {
                        log::warn!("trial failed for {config}: {e}");
                        Outcome::Failed(e.to_string())
                    }
                };
                seen.insert(config.clone(), outcome.clone());
                (outcome, false)
            }
        };
        history.record(Observation {
            config,
            outcome,
            cached,
        })?;
        iteration += 1;
    }
    if iteration > settings.budget {
        log::info!(
            "budget extended from {} to {iteration} iterations to reach {} unique successes",
            settings.budget,
            history.unique_successes()
        );
    }
    Ok(history)
}
