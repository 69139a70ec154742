//! The three-stage search: accuracy, then accuracy per latency on each device,
//! then accuracy per power-delay product.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::architecture::{build_architecture, build_architecture_in};
use crate::devices::{
    measure_latency, measure_power, DeviceProfile, ExternalSampler, MeasurementProtocol, SampleSource,
    SimulatedSampler,
};
use crate::error::{Error, Result};
use crate::evaluators::{AccuracyEvaluator, Precision};
use crate::protocol::DEFAULT_TIMEOUT;
use crate::search_space::{Configuration, SearchSpace};
use crate::tpe::{run_optimization, ObservationHistory, TpeSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    /// Percent.
    Accuracy,
    /// Percent per ms.
    AccuracyPerLatency,
    /// Percent per mJ.
    AccuracyPerPdp,
}

impl FitnessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FitnessKind::Accuracy => "accuracy",
            FitnessKind::AccuracyPerLatency => "accuracy_per_latency",
            FitnessKind::AccuracyPerPdp => "accuracy_per_pdp",
        }
    }

    pub fn stage(self) -> u8 {
        match self {
            FitnessKind::Accuracy => 1,
            FitnessKind::AccuracyPerLatency => 2,
            FitnessKind::AccuracyPerPdp => 3,
        }
    }
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn fitness(accuracy_pct: f64, latency_ms: Option<f64>, power_w: Option<f64>, kind: FitnessKind) -> Result<f64> {
    let positive = |name: &str, v: Option<f64>| match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(Error::InvalidInput(format!("{kind} needs positive {name}, got {x}"))),
        None => Err(Error::InvalidInput(format!("{kind} needs {name}"))),
    };
    if !accuracy_pct.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite accuracy {accuracy_pct}")));
    }
    Ok(match kind {
        FitnessKind::Accuracy => accuracy_pct,
        FitnessKind::AccuracyPerLatency => accuracy_pct / positive("latency", latency_ms)?,
        FitnessKind::AccuracyPerPdp => {
            accuracy_pct / (positive("power", power_w)? * positive("latency", latency_ms)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub kind: FitnessKind,
    pub value: f64,
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub stage: u8,
    pub config: Configuration,
    pub device: Option<String>,
    pub accuracy_pct: Option<f64>,
    pub latency_mean_ms: Option<f64>,
    pub latency_std_ms: Option<f64>,
    pub dynamic_power_w: Option<f64>,
    /// `None` for failed trials.
    pub fitness: Option<Fitness>,
    pub seed: u64,
    pub ts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.fitness.is_some() && self.error.is_none()
    }

    pub fn fitness_value(&self) -> Option<f64> {
        self.fitness.map(|f| f.value)
    }

    /// Fitness recomputed from the stored measurements.
    pub fn recompute_fitness(&self) -> Result<f64> {
        let kind = self
            .fitness
            .map(|f| f.kind)
            .ok_or_else(|| Error::InvalidInput("failed trial has no fitness".into()))?;
        let acc = self
            .accuracy_pct
            .ok_or_else(|| Error::InvalidInput("trial has no accuracy".into()))?;
        fitness(acc, self.latency_mean_ms, self.dynamic_power_w, kind)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

fn timestamp(enabled: bool) -> Option<String> {
    enabled.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

/// Fitness-sorted records, at most `k` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSet {
    pub fitness: FitnessKind,
    pub k: usize,
    pub records: Vec<TrialRecord>,
}

impl RankedSet {
    /// Sorts successful records by fitness descending, then latency, total
    /// parameters and canonical index ascending, and keeps the first `k`.
    pub fn rank(fitness: FitnessKind, k: usize, records: Vec<TrialRecord>, space: &SearchSpace) -> Self {
        let mut keyed: Vec<(f64, f64, u64, u64, TrialRecord)> = records
            .into_iter()
            .filter(TrialRecord::is_success)
            .map(|r| {
                let params = build_architecture(&r.config).map_or(u64::MAX, |a| a.total_params);
                let index = space.index_of(&r.config).unwrap_or(u64::MAX);
                let latency = r.latency_mean_ms.unwrap_or(0.0);
                (r.fitness_value().expect("success"), latency, params, index, r)
            })
            .collect();
        keyed.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.total_cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
                .then_with(|| a.3.cmp(&b.3))
        });
        keyed.truncate(k);
        RankedSet {
            fitness,
            k,
            records: keyed.into_iter().map(|t| t.4).collect(),
        }
    }

    pub fn best(&self) -> Option<&TrialRecord> {
        self.records.first()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TrialKey {
    stage: u8,
    device: Option<String>,
    config: Configuration,
}

impl TrialKey {
    fn of(record: &TrialRecord) -> Self {
        TrialKey {
            stage: record.stage,
            device: record.device.clone(),
            config: record.config.clone(),
        }
    }
}

/// Append-only JSONL trial log.
///
/// Successful records already in the file are offered back to the stages so
/// an interrupted run can resume without repeating work. Failed records are
/// retried.
#[derive(Debug)]
pub struct TrialLog {
    path: PathBuf,
    file: Mutex<File>,
    done: HashMap<TrialKey, TrialRecord>,
}

impl TrialLog {
    pub fn open(path: &Path) -> Result<Self> {
        let existing = if path.exists() { Self::read(path)? } else { Vec::new() };
        let done = existing
            .into_iter()
            .filter(TrialRecord::is_success)
            .map(|r| (TrialKey::of(&r), r))
            .collect();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TrialLog {
            path: path.to_owned(),
            file: Mutex::new(file),
            done,
        })
    }

    /// Every record in `path`. A final line without a newline is a torn write
    /// and is skipped.
    pub fn read(path: &Path) -> Result<Vec<TrialRecord>> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        let mut line = String::new();
        let mut number = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            number += 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TrialRecord>(line.trim_end()) {
                Ok(r) => out.push(r),
                Err(_) if !line.ends_with('\n') => {
                    log::warn!("{}: ignoring incomplete final line {number}", path.display());
                }
                Err(e) => {
                    return Err(Error::InvalidInput(format!("{}:{number}: {e}", path.display())));
                }
            }
        }
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn resumable(&self) -> usize {
        self.done.len()
    }

    pub fn lookup(&self, stage: u8, device: Option<&str>, config: &Configuration) -> Option<&TrialRecord> {
        self.done.get(&TrialKey {
            stage,
            device: device.map(str::to_owned),
            config: config.clone(),
        })
    }

    /// Writes one record as a single line in one write call.
    pub fn append(&self, record: &TrialRecord) -> Result<()> {
        let mut line = record.to_json_line();
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }
}

/// Shared inputs of every stage.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub space: &'a SearchSpace,
    pub seed: u64,
    pub timestamps: bool,
    pub log: Option<&'a TrialLog>,
}

impl<'a> StageContext<'a> {
    pub fn new(space: &'a SearchSpace, seed: u64) -> Self {
        StageContext {
            space,
            seed,
            timestamps: true,
            log: None,
        }
    }

    fn cached(&self, stage: u8, device: Option<&str>, config: &Configuration) -> Option<TrialRecord> {
        self.log.and_then(|l| l.lookup(stage, device, config)).cloned()
    }

    fn persist(&self, record: &TrialRecord) -> Result<()> {
        match self.log {
            Some(l) => l.append(record),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub ranked: RankedSet,
    pub history: ObservationHistory,
    /// Evaluator calls made in this run (resumed trials excluded).
    pub evaluated: usize,
}

/// Runs the optimizer on accuracy and keeps the `keep` best unique trials.
pub fn stage1(
    ctx: &StageContext<'_>,
    evaluator: &mut dyn AccuracyEvaluator,
    settings: TpeSettings,
    keep: usize,
) -> Result<Stage1Output> {
    if keep == 0 {
        return Err(Error::InvalidInput("keep1 must be at least 1".into()));
    }
    let mut successes: Vec<TrialRecord> = Vec::new();
    let mut evaluated = 0;
    let mut io_error: Option<Error> = None;
    let history = run_optimization(ctx.space, settings, Some(keep), |config| {
        if let Some(record) = ctx.cached(1, None, config) {
            let acc = record.accuracy_pct.expect("successful record");
            successes.push(record);
            return Ok(-acc);
        }
        evaluated += 1;
        let result = evaluator.evaluate(config, Precision::Fp32);
        let mut record = TrialRecord {
            stage: 1,
            config: config.clone(),
            device: None,
            accuracy_pct: None,
            latency_mean_ms: None,
            latency_std_ms: None,
            dynamic_power_w: None,
            fitness: None,
            seed: ctx.seed,
            ts: timestamp(ctx.timestamps),
            error: None,
        };
        let outcome = result.and_then(|r| {
            let value = fitness(r.accuracy_pct, None, None, FitnessKind::Accuracy)?;
            record.accuracy_pct = Some(r.accuracy_pct);
            record.fitness = Some(Fitness {
                kind: FitnessKind::Accuracy,
                value,
            });
            Ok(-r.accuracy_pct)
        });
        if let Err(e) = &outcome {
            record.error = Some(e.to_string());
        }
        if let Err(e) = ctx.persist(&record) {
            io_error.get_or_insert(e);
        }
        if record.is_success() {
            successes.push(record);
        }
        outcome
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if successes.len() < keep {
        return Err(Error::Stage {
            stage: 1,
            message: format!(
                "only {} unique successful trials after {} iterations, keep1 is {keep}",
                successes.len(),
                history.len()
            ),
        });
    }
    Ok(Stage1Output {
        ranked: RankedSet::rank(FitnessKind::Accuracy, keep, successes, ctx.space),
        history,
        evaluated,
    })
}

/// Opens one sample source per device.
pub trait SourceFactory: Sync {
    fn open(&self, profile: &DeviceProfile) -> Result<Box<dyn SampleSource + Send>>;
}

/// How latency and power samples are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurer {
    Simulated { jitter: f64, seed: u64 },
    /// Command line of a measurement peer; `{device}` is replaced by the
    /// profile name, and one process is spawned per device.
    Exec { command: String, timeout: Duration },
}

impl Measurer {
    pub fn simulated() -> Self {
        Measurer::Simulated { jitter: 0.0, seed: 0 }
    }
}

impl FromStr for Measurer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "simulated" {
            Ok(Measurer::simulated())
        } else if let Some(command) = s.strip_prefix("exec:") {
            if command.trim().is_empty() {
                return Err(Error::InvalidInput("empty measurer command".into()));
            }
            Ok(Measurer::Exec {
                command: command.to_owned(),
                timeout: DEFAULT_TIMEOUT,
            })
        } else {
            Err(Error::InvalidInput(format!(
                "unknown measurer `{s}` (expected `simulated` or `exec:CMD`)"
            )))
        }
    }
}

impl SourceFactory for Measurer {
    fn open(&self, profile: &DeviceProfile) -> Result<Box<dyn SampleSource + Send>> {
        match self {
            Measurer::Simulated { jitter, seed } => Ok(Box::new(SimulatedSampler::with_jitter(*jitter, *seed))),
            Measurer::Exec { command, timeout } => {
                let line = command.replace("{device}", &profile.name);
                Ok(Box::new(ExternalSampler::spawn(&line, *timeout)?))
            }
        }
    }
}

/// Per-device outcome of stage 2 or 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSet {
    pub device: String,
    pub ranked: RankedSet,
    /// Pairs measured in this run (resumed pairs excluded).
    pub measured: usize,
    pub failed: usize,
}

struct DeviceWork {
    records: Vec<TrialRecord>,
    measured: usize,
}

/// Runs `per_pair` for every (device, candidate) pair, one thread per device,
/// then persists and ranks per device in input order.
fn per_device_stage<F>(
    ctx: &StageContext<'_>,
    stage: u8,
    kind: FitnessKind,
    keep: usize,
    work: &[(&DeviceProfile, &[TrialRecord])],
    factory: &dyn SourceFactory,
    per_pair: F,
) -> Result<Vec<DeviceSet>>
where
    F: Fn(&mut dyn SampleSource, &DeviceProfile, &TrialRecord) -> Result<TrialRecord> + Sync,
{
    let results: Vec<Result<DeviceWork>> = thread::scope(|scope| {
        let handles: Vec<_> = work
            .iter()
            .map(|&(profile, candidates)| {
                let per_pair = &per_pair;
                scope.spawn(move || -> Result<DeviceWork> {
                    let mut source: Option<Box<dyn SampleSource + Send>> = None;
                    let mut records = Vec::with_capacity(candidates.len());
                    let mut measured = 0;
                    for candidate in candidates {
                        if let Some(r) = ctx.cached(stage, Some(&profile.name), &candidate.config) {
                            records.push(r);
                            continue;
                        }
                        if source.is_none() {
                            source = Some(factory.open(profile)?);
                        }
                        measured += 1;
                        let src = source.as_deref_mut().expect("opened");
                        let record = per_pair(src, profile, candidate).unwrap_or_else(|e| {
                            log::warn!("stage {stage}: {} on {} failed: {e}", candidate.config, profile.name);
                            TrialRecord {
                                stage,
                                device: Some(profile.name.clone()),
                                fitness: None,
                                error: Some(e.to_string()),
                                seed: ctx.seed,
                                ts: timestamp(ctx.timestamps),
                                ..candidate.clone()
                            }
                        });
                        records.push(record);
                    }
                    Ok(DeviceWork { records, measured })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });

    let mut out = Vec::with_capacity(work.len());
    for ((profile, _), result) in work.iter().zip(results) {
        let DeviceWork { records, measured } = result.map_err(|e| Error::Stage {
            stage,
            message: format!("device `{}`: {e}", profile.name),
        })?;
        for r in &records {
            if ctx.cached(stage, Some(&profile.name), &r.config).is_none() {
                ctx.persist(r)?;
            }
        }
        let failed = records.iter().filter(|r| !r.is_success()).count();
        if failed == records.len() {
            return Err(Error::Stage {
                stage,
                message: format!("device `{}`: no successful measurements", profile.name),
            });
        }
        out.push(DeviceSet {
            device: profile.name.clone(),
            ranked: RankedSet::rank(kind, keep, records, ctx.space),
            measured,
            failed,
        });
    }
    Ok(out)
}

/// Measures latency for every (device, candidate) pair and keeps the
/// `keep` best per device by accuracy per latency.
pub fn stage2(
    ctx: &StageContext<'_>,
    candidates: &RankedSet,
    devices: &[DeviceProfile],
    factory: &dyn SourceFactory,
    protocol: &MeasurementProtocol,
    keep: usize,
) -> Result<Vec<DeviceSet>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("stage 2 needs at least one candidate".into()));
    }
    if devices.is_empty() {
        return Err(Error::InvalidInput("stage 2 needs at least one device".into()));
    }
    protocol.check()?;
    let work: Vec<(&DeviceProfile, &[TrialRecord])> =
        devices.iter().map(|d| (d, candidates.records.as_slice())).collect();
    per_device_stage(ctx, 2, FitnessKind::AccuracyPerLatency, keep, &work, factory, |source, profile, candidate| {
        let arch = build_architecture_in(&candidate.config, ctx.space)?;
        let base = candidate
            .accuracy_pct
            .ok_or_else(|| Error::InvalidInput("candidate has no accuracy".into()))?;
        let accuracy = (base - profile.accuracy_delta_pct).max(0.0);
        let stats = measure_latency(source, &arch, profile, protocol)?;
        let value = fitness(accuracy, Some(stats.mean_ms), None, FitnessKind::AccuracyPerLatency)?;
        Ok(TrialRecord {
            stage: 2,
            config: candidate.config.clone(),
            device: Some(profile.name.clone()),
            accuracy_pct: Some(accuracy),
            latency_mean_ms: Some(stats.mean_ms),
            latency_std_ms: Some(stats.std_ms),
            dynamic_power_w: None,
            fitness: Some(Fitness {
                kind: FitnessKind::AccuracyPerLatency,
                value,
            }),
            seed: ctx.seed,
            ts: timestamp(ctx.timestamps),
            error: None,
        })
    })
}

/// Measures dynamic power for each device's stage-2 survivors and ranks
/// them by accuracy per PDP; the first record of each set is the winner.
pub fn stage3(
    ctx: &StageContext<'_>,
    per_device: &[DeviceSet],
    devices: &[DeviceProfile],
    factory: &dyn SourceFactory,
    protocol: &MeasurementProtocol,
) -> Result<Vec<DeviceSet>> {
    protocol.check()?;
    let mut work = Vec::with_capacity(per_device.len());
    for set in per_device {
        let profile = devices
            .iter()
            .find(|d| d.name == set.device)
            .ok_or_else(|| Error::InvalidInput(format!("no profile for device `{}`", set.device)))?;
        if set.ranked.is_empty() {
            return Err(Error::InvalidInput(format!("device `{}` has no stage-2 models", set.device)));
        }
        work.push((profile, set.ranked.records.as_slice()));
    }
    let keep = work.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    per_device_stage(ctx, 3, FitnessKind::AccuracyPerPdp, keep, &work, factory, |source, profile, candidate| {
        let arch = build_architecture_in(&candidate.config, ctx.space)?;
        let latency = candidate
            .latency_mean_ms
            .ok_or_else(|| Error::InvalidInput("candidate has no latency".into()))?;
        let accuracy = candidate
            .accuracy_pct
            .ok_or_else(|| Error::InvalidInput("candidate has no accuracy".into()))?;
        let power = measure_power(source, &arch, profile, latency, protocol)?;
        let value = fitness(accuracy, Some(latency), Some(power), FitnessKind::AccuracyPerPdp)?;
        Ok(TrialRecord {
            stage: 3,
            dynamic_power_w: Some(power),
            fitness: Some(Fitness {
                kind: FitnessKind::AccuracyPerPdp,
                value,
            }),
            seed: ctx.seed,
            ts: timestamp(ctx.timestamps),
            error: None,
            ..candidate.clone()
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub tpe: TpeSettings,
    pub keep1: usize,
    pub keep2: usize,
    pub protocol: MeasurementProtocol,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            tpe: TpeSettings::default(),
            keep1: 1000,
            keep2: 10,
            protocol: MeasurementProtocol::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub stage1: Stage1Output,
    pub stage2: Vec<DeviceSet>,
    pub stage3: Vec<DeviceSet>,
}

impl PipelineOutput {
    /// Each device's accuracy-per-PDP winner, in device order.
    pub fn winners(&self) -> Vec<(&str, &TrialRecord)> {
        self.stage3
            .iter()
            .filter_map(|s| s.ranked.best().map(|r| (s.device.as_str(), r)))
            .collect()
    }
}

pub fn run_pipeline(
    ctx: &StageContext<'_>,
    evaluator: &mut dyn AccuracyEvaluator,
    settings: &PipelineSettings,
    devices: &[DeviceProfile],
    factory: &dyn SourceFactory,
) -> Result<PipelineOutput> {
    let s1 = stage1(ctx, evaluator, settings.tpe, settings.keep1)?;
    log::info!(
        "stage 1: {} iterations, {} evaluations, kept {}",
        s1.history.len(),
        s1.evaluated,
        s1.ranked.len()
    );
    let s2 = stage2(ctx, &s1.ranked, devices, factory, &settings.protocol, settings.keep2)?;
    let s3 = stage3(ctx, &s2, devices, factory, &settings.protocol)?;
    Ok(PipelineOutput {
        stage1: s1,
        stage2: s2,
        stage3: s3,
    })
}

/// Ordering used by [`RankedSet::rank`], exposed for checks on stored sets.
pub fn compare_ranked(a: &TrialRecord, b: &TrialRecord, space: &SearchSpace) -> Ordering {
    let key = |r: &TrialRecord| {
        (
            r.fitness_value().unwrap_or(f64::NEG_INFINITY),
            r.latency_mean_ms.unwrap_or(0.0),
            build_architecture(&r.config).map_or(u64::MAX, |x| x.total_params),
            space.index_of(&r.config).unwrap_or(u64::MAX),
        )
    };
    let (ka, kb) = (key(a), key(b));
    kb.0.total_cmp(&ka.0)
        .then_with(|| ka.1.total_cmp(&kb.1))
        .then_with(|| ka.2.cmp(&kb.2))
        .then_with(|| ka.3.cmp(&kb.3))
}
