//! Reference peer for the newline-delimited JSON evaluator and measurement
//! protocol. Answers `evaluate` from the surrogate and the `measure_*`
//! commands from the simulated device models, or from fixed values when
//! given. Fault flags make it misbehave on purpose for protocol tests.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde_json::{json, Map, Value};

use edgenas_core::devices::{load_profiles, SampleSource, SimulatedSampler};
use edgenas_core::{
    build_architecture, shipped_profiles, Configuration, DeviceProfile, MeasurementProtocol, Precision, SearchSpace,
    Surrogate,
};

#[derive(Parser)]
#[command(name = "edgenas-peer", version, about = "Evaluator and measurement peer")]
struct Args {
    /// Profile directory; the shipped profiles when omitted.
    #[arg(long)]
    devices: Option<PathBuf>,
    /// Profile used when a request names no device.
    #[arg(long)]
    device: Option<String>,
    #[arg(long, default_value_t = 42)]
    surrogate_seed: u64,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Latency samples to cycle through instead of the simulated model.
    #[arg(long, value_delimiter = ',')]
    latency_values: Vec<f64>,
    /// Flat idle power trace value.
    #[arg(long)]
    idle_w: Option<f64>,
    /// Flat active power trace value.
    #[arg(long)]
    active_w: Option<f64>,
    #[arg(long, value_enum)]
    fault: Option<Fault>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    /// One latency sample fewer than requested.
    ShortSamples,
    /// Active power 0.2 W under idle.
    NegativePower,
    /// Responses carry the wrong id.
    WrongId,
    /// Every response is an error.
    Error,
    /// Exit without answering.
    Exit,
}

struct Peer {
    args: Args,
    profiles: Vec<DeviceProfile>,
    surrogate: Surrogate,
    sampler: SimulatedSampler,
}

impl Peer {
    fn profile(&self, req: &Map<String, Value>) -> Result<&DeviceProfile, String> {
        let name = req
            .get("device")
            .and_then(Value::as_str)
            .or(self.args.device.as_deref())
            .ok_or("request names no device and no --device default is set")?;
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| format!("unknown device `{name}`"))
    }

    fn handle(&mut self, req: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        let cmd = req.get("cmd").and_then(Value::as_str).ok_or("missing cmd")?;
        let config: Configuration = serde_json::from_value(req.get("config").cloned().ok_or("missing config")?)
            .map_err(|e| e.to_string())?;
        let arch = build_architecture(&config).map_err(|e| e.to_string())?;
        let mut out = Map::new();
        match cmd {
            "evaluate" => {
                let precision: Precision = req
                    .get("precision")
                    .and_then(Value::as_str)
                    .unwrap_or("fp32")
                    .parse()
                    .map_err(|e: edgenas_core::Error| e.to_string())?;
                let r = self
                    .surrogate
                    .surrogate_accuracy(&config, precision)
                    .map_err(|e| e.to_string())?;
                out.insert("accuracy_pct".into(), json!(r.accuracy_pct));
            }
            "measure_latency" => {
                let runs = req.get("runs").and_then(Value::as_u64).ok_or("missing runs")? as usize;
                let mut samples = if self.args.latency_values.is_empty() {
                    let profile = self.profile(req)?.clone();
                    self.sampler
                        .latency_samples(&arch, &profile, runs)
                        .map_err(|e| e.to_string())?
                } else {
                    self.args.latency_values.iter().copied().cycle().take(runs).collect()
                };
                if self.args.fault == Some(Fault::ShortSamples) {
                    samples.pop();
                }
                out.insert("latency_ms".into(), json!(samples));
            }
            "measure_power" => {
                let window_s = req.get("window_s").and_then(Value::as_u64).unwrap_or(180) as u32;
                let sample_hz = req.get("sample_hz").and_then(Value::as_u64).unwrap_or(1) as u32;
                let protocol = MeasurementProtocol {
                    window_s,
                    sample_hz,
                    ..MeasurementProtocol::default()
                };
                let n = protocol.trace_len();
                let (idle, mut active) = match (self.args.idle_w, self.args.active_w) {
                    (Some(i), Some(a)) => (vec![i; n], vec![a; n]),
                    _ => {
                        let profile = self.profile(req)?.clone();
                        let latency = edgenas_core::devices::simulate_latency(&arch, &profile);
                        self.sampler
                            .power_traces(&arch, &profile, latency, &protocol)
                            .map_err(|e| e.to_string())?
                    }
                };
                if self.args.fault == Some(Fault::NegativePower) {
                    let idle_mean = idle.iter().sum::<f64>() / idle.len() as f64;
                    active = vec![idle_mean - 0.2; active.len()];
                }
                out.insert("idle_w".into(), json!(idle));
                out.insert("active_w".into(), json!(active));
            }
            other => return Err(format!("unknown command `{other}`")),
        }
        Ok(out)
    }
}

fn main() {
    let args = Args::parse();
    let profiles = match &args.devices {
        Some(dir) => load_profiles(dir).unwrap_or_else(|e| {
            eprintln!("edgenas-peer: {e}");
            std::process::exit(1);
        }),
        None => shipped_profiles(),
    };
    let space = match &args.space {
        Some(p) => std::fs::read_to_string(p)
            .map_err(edgenas_core::Error::from)
            .and_then(|t| SearchSpace::from_json(&t)),
        None => Ok(SearchSpace::table1()),
    }
    .unwrap_or_else(|e| {
        eprintln!("edgenas-peer: {e}");
        std::process::exit(1);
    });
    let sampler = SimulatedSampler::with_jitter(args.jitter, args.surrogate_seed);
    let mut peer = Peer {
        surrogate: Surrogate::new(space, args.surrogate_seed),
        profiles,
        sampler,
        args,
    };

    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if peer.args.fault == Some(Fault::Exit) {
            return;
        }
        let request: Map<String, Value> = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("edgenas-peer: bad request: {e}");
                continue;
            }
        };
        let mut id = request.get("id").cloned().unwrap_or(Value::Null);
        if peer.args.fault == Some(Fault::WrongId) {
            id = json!(id.as_u64().unwrap_or(0) + 1000);
        }
        let mut response = match peer.args.fault {
            Some(Fault::Error) => {
                let mut m = Map::new();
                m.insert("error".into(), json!("injected failure"));
                m
            }
            _ => peer.handle(&request).unwrap_or_else(|e| {
                let mut m = Map::new();
                m.insert("error".into(), json!(e));
                m
            }),
        };
        response.insert("id".into(), id);
        let text = serde_json::to_string(&Value::Object(response)).expect("serializable");
        if writeln!(stdout, "{text}").and_then(|()| stdout.flush()).is_err() {
            break;
        }
    }
}
