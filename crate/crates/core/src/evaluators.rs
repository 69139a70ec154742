//! Accuracy evaluation: a deterministic synthetic surrogate for desk-scale
//! runs and an external-process evaluator for real training jobs.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::protocol::NdjsonChannel;
use crate::search_space::{Configuration, Param, SearchSpace};

/// Lowest and highest accuracy the surrogate can report.
pub const ACCURACY_FLOOR: f64 = 88.32;
pub const ACCURACY_CEIL: f64 = 99.49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Fp32, Precision::Fp16, Precision::Int8];

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
            Precision::Int8 => "int8",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(Precision::Fp32),
            "fp16" => Ok(Precision::Fp16),
            "int8" => Ok(Precision::Int8),
            other => Err(Error::InvalidInput(format!("unknown precision `{other}`"))),
        }
    }
}

/// Accuracy lost when deploying at a given precision, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDeltas {
    pub fp32: f64,
    pub fp16: f64,
    pub int8: f64,
}

impl Default for PrecisionDeltas {
    /// Gaps between the average accuracy of FP32 hosts, FP16 accelerators
    /// (98.88 vs 95.45) and INT8 TPUs (98.88).
    fn default() -> Self {
        PrecisionDeltas {
            fp32: 0.0,
            fp16: 3.43,
            int8: 0.0,
        }
    }
}

impl PrecisionDeltas {
    pub fn get(&self, precision: Precision) -> f64 {
        match precision {
            Precision::Fp32 => self.fp32,
            Precision::Fp16 => self.fp16,
            Precision::Int8 => self.int8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Surrogate,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub accuracy_pct: f64,
    pub source: Source,
    pub config: Configuration,
    pub precision: Precision,
}

pub trait AccuracyEvaluator {
    fn evaluate(&mut self, config: &Configuration, precision: Precision) -> Result<AccuracyResult>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    amplitude: f64,
    frequency: f64,
    phase: f64,
}

/// Synthetic accuracy landscape over a search space.
///
/// Each active non-block parameter maps to `x` in `[0, 1]` by grid position
/// and contributes `a * cos(2 pi (b x + phi))`; deeper networks get a mild
/// bonus. The sum passes through a logistic onto the reported accuracy range.
/// The offset puts the lowest-scoring configuration of the space exactly at
/// logistic input `-0.8`, so the FP16 penalty never hits the lower clamp.
#[derive(Debug, Clone)]
pub struct Surrogate {
    space: SearchSpace,
    seed: u64,
    terms: [Term; 8],
    offset: f64,
    depth_reward: f64,
    deltas: PrecisionDeltas,
}

const SURROGATE_FLOOR_LOGIT: f64 = -0.8;
const DEPTH_REWARD: f64 = 0.3;

impl Surrogate {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = std::array::from_fn(|_| Term {
            amplitude: rng.random_range(0.2..0.45),
            frequency: rng.random_range(0.5..1.0),
            phase: rng.random_range(0.0..1.0),
        });
        let mut surrogate = Surrogate {
            space,
            seed,
            terms,
            offset: 0.0,
            depth_reward: DEPTH_REWARD,
            deltas: PrecisionDeltas::default(),
        };
        // Terms are separable, so the lowest raw score is found per block
        // from each active parameter's own minimum.
        let lowest = surrogate
            .space
            .block_values()
            .map(|block| {
                let terms: f64 = SearchSpace::active_params(block)
                    .map(|p| {
                        let spec = surrogate.space.spec(p);
                        (0..spec.grid_size())
                            .map(|pos| surrogate.term(p, pos))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                terms + surrogate.depth(block)
            })
            .fold(f64::INFINITY, f64::min);
        surrogate.offset = SURROGATE_FLOOR_LOGIT - lowest;
        surrogate
    }

    fn term(&self, param: Param, position: usize) -> f64 {
        let t = &self.terms[param as usize - 1];
        let size = self.space.spec(param).grid_size();
        let x = if size > 1 {
            position as f64 / (size - 1) as f64
        } else {
            0.0
        };
        t.amplitude * (std::f64::consts::TAU * (t.frequency * x + t.phase)).cos()
    }

    fn depth(&self, block: u32) -> f64 {
        self.depth_reward * f64::from(block - 2) / 2.0
    }

    pub fn with_deltas(mut self, deltas: PrecisionDeltas) -> Self {
        self.deltas = deltas;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn deltas(&self) -> PrecisionDeltas {
        self.deltas
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// Accuracy before any precision penalty.
    pub fn base_accuracy(&self, config: &Configuration) -> Result<f64> {
        self.space.validate(config).into_result()?;
        let mut s = self.offset + self.depth(config.block);
        for param in SearchSpace::active_params(config.block) {
            let value = config.get(param).expect("validated");
            let pos = self.space.spec(param).position(value).expect("validated");
            s += self.term(param, pos);
        }
        Ok(ACCURACY_FLOOR + (ACCURACY_CEIL - ACCURACY_FLOOR) * logistic(s))
    }

    /// Accuracy after subtracting `delta_pct`, clamped to the reported range.
    pub fn accuracy_with_delta(&self, config: &Configuration, delta_pct: f64) -> Result<f64> {
        Ok((self.base_accuracy(config)? - delta_pct).clamp(ACCURACY_FLOOR, ACCURACY_CEIL))
    }

    pub fn surrogate_accuracy(&self, config: &Configuration, precision: Precision) -> Result<AccuracyResult> {
        Ok(AccuracyResult {
            accuracy_pct: self.accuracy_with_delta(config, self.deltas.get(precision))?,
            source: Source::Surrogate,
            config: config.clone(),
            precision,
        })
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl AccuracyEvaluator for Surrogate {
    fn evaluate(&mut self, config: &Configuration, precision: Precision) -> Result<AccuracyResult> {
        self.surrogate_accuracy(config, precision)
    }
}

/// Evaluator backed by a child process speaking the evaluate protocol.
#[derive(Debug)]
pub struct ExternalEvaluator {
    channel: NdjsonChannel,
}

impl ExternalEvaluator {
    pub fn new(channel: NdjsonChannel) -> Self {
        ExternalEvaluator { channel }
    }

    pub fn spawn(command_line: &str, timeout: Duration) -> Result<Self> {
        Ok(Self::new(NdjsonChannel::spawn(command_line, timeout)?))
    }
}

pub fn evaluate_external(
    config: &Configuration,
    precision: Precision,
    channel: &mut NdjsonChannel,
) -> Result<AccuracyResult> {
    let mut fields = Map::new();
    fields.insert("config".into(), serde_json::to_value(config)?);
    fields.insert("precision".into(), Value::from(precision.as_str()));
    let response = channel.request("evaluate", fields)?;
    let accuracy = response.f64_field("accuracy_pct")?;
    if !(0.0..=100.0).contains(&accuracy) {
        return Err(Error::AccuracyRange(accuracy));
    }
    Ok(AccuracyResult {
        accuracy_pct: accuracy,
        source: Source::External,
        config: config.clone(),
        precision,
    })
}

impl AccuracyEvaluator for ExternalEvaluator {
    fn evaluate(&mut self, config: &Configuration, precision: Precision) -> Result<AccuracyResult> {
        evaluate_external(config, precision, &mut self.channel)
    }
}

/// `surrogate` or `exec:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvaluatorSpec {
    Surrogate,
    Exec(String),
}

impl FromStr for EvaluatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "surrogate" {
            return Ok(EvaluatorSpec::Surrogate);
        }
        match s.strip_prefix("exec:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(EvaluatorSpec::Exec(cmd.trim().to_owned())),
            _ => Err(Error::InvalidInput(format!(
                "evaluator must be `surrogate` or `exec:<command>`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for EvaluatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluatorSpec::Surrogate => f.write_str("surrogate"),
            EvaluatorSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}
