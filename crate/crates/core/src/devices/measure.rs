use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{simulate_dynamic_power, simulate_latency, DeviceProfile};
use crate::architecture::ArchitectureDescriptor;
use crate::error::{Error, Result};
use crate::protocol::NdjsonChannel;

/// Dynamic-power readings down to this far below zero are treated as noise.
pub const NEGATIVE_POWER_TOLERANCE_W: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementProtocol {
    /// Timed inference runs per model.
    pub runs: usize,
    /// Extra leading runs that are requested but discarded.
    pub warmup_runs: usize,
    pub window_s: u32,
    pub sample_hz: u32,
}

impl Default for MeasurementProtocol {
    fn default() -> Self {
        MeasurementProtocol {
            runs: 40,
            warmup_runs: 0,
            window_s: 180,
            sample_hz: 1,
        }
    }
}

impl MeasurementProtocol {
    pub fn trace_len(&self) -> usize {
        (self.window_s as usize) * (self.sample_hz as usize)
    }

    pub fn check(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::InvalidInput("at least 2 latency runs are required".into()));
        }
        if self.trace_len() == 0 {
            return Err(Error::InvalidInput("power window must contain samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStats {
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub dynamic_power_w: f64,
    pub n_latency_runs: usize,
    pub power_sample_hz: u32,
    pub power_window_s: u32,
}

/// Mean and sample (n-1) standard deviation.
pub fn latency_stats(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "latency statistics need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput("latency samples must be finite and non-negative".into()));
    }
    let n = samples.len() as f64;
    // Shifted by the first sample so constant runs give an exact mean and zero std.
    let shift = samples[0];
    let d_mean = samples.iter().map(|s| s - shift).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - shift - d_mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((shift + d_mean, var.sqrt()))
}

fn mean(xs: &[f64]) -> f64 {
    let shift = xs[0];
    shift + xs.iter().map(|x| x - shift).sum::<f64>() / xs.len() as f64
}

/// `mean(active) - mean(idle)`, with small negative values clamped to zero.
pub fn dynamic_power_from_traces(idle_w: &[f64], active_w: &[f64]) -> Result<f64> {
    if idle_w.is_empty() || active_w.is_empty() {
        return Err(Error::InsufficientSamples("empty power trace".into()));
    }
    let diff = mean(active_w) - mean(idle_w);
    if !diff.is_finite() {
        return Err(Error::InvalidInput("non-finite power trace".into()));
    }
    if diff >= 0.0 {
        Ok(diff)
    } else if diff >= -NEGATIVE_POWER_TOLERANCE_W {
        Ok(0.0)
    } else {
        Err(Error::NegativeDynamicPower(diff))
    }
}

/// Something that can run a model and hand back raw samples.
pub trait SampleSource {
    fn latency_samples(&mut self, arch: &ArchitectureDescriptor, profile: &DeviceProfile, runs: usize) -> Result<Vec<f64>>;

    /// Idle and active power traces, each `window_s * sample_hz` long.
    fn power_traces(
        &mut self,
        arch: &ArchitectureDescriptor,
        profile: &DeviceProfile,
        latency_ms: f64,
        protocol: &MeasurementProtocol,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

pub fn measure_latency(
    source: &mut dyn SampleSource,
    arch: &ArchitectureDescriptor,
    profile: &DeviceProfile,
    protocol: &MeasurementProtocol,
) -> Result<LatencyStats> {
    let requested = protocol.runs + protocol.warmup_runs;
    let samples = source.latency_samples(arch, profile, requested)?;
    if samples.len() != requested {
        return Err(Error::InsufficientSamples(format!(
            "expected {requested} latency runs, got {}",
            samples.len()
        )));
    }
    let (mean_ms, std_ms) = latency_stats(&samples[protocol.warmup_runs..])?;
    Ok(LatencyStats {
        mean_ms,
        std_ms,
        runs: protocol.runs,
    })
}

pub fn measure_power(
    source: &mut dyn SampleSource,
    arch: &ArchitectureDescriptor,
    profile: &DeviceProfile,
    latency_ms: f64,
    protocol: &MeasurementProtocol,
) -> Result<f64> {
    let (idle, active) = source.power_traces(arch, profile, latency_ms, protocol)?;
    dynamic_power_from_traces(&idle, &active)
}

/// Latency runs followed by the power window, reduced to summary statistics.
pub fn measure(
    source: &mut dyn SampleSource,
    arch: &ArchitectureDescriptor,
    profile: &DeviceProfile,
    protocol: &MeasurementProtocol,
) -> Result<MeasurementStats> {
    let latency = measure_latency(source, arch, profile, protocol)?;
    let power = measure_power(source, arch, profile, latency.mean_ms, protocol)?;
    Ok(MeasurementStats {
        latency_mean_ms: latency.mean_ms,
        latency_std_ms: latency.std_ms,
        dynamic_power_w: power,
        n_latency_runs: latency.runs,
        power_sample_hz: protocol.sample_hz,
        power_window_s: protocol.window_s,
    })
}

/// Synthesizes samples from a profile's cost models.
///
/// Noiseless unless `jitter` is positive, in which case every sample is
/// scaled by `1 + u`, `u` uniform in `[-jitter, jitter]`, from a stream keyed
/// by the seed, device name and configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedSampler {
    pub jitter: f64,
    pub seed: u64,
}

impl SimulatedSampler {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_jitter(jitter: f64, seed: u64) -> Self {
        SimulatedSampler { jitter, seed }
    }

    fn rng(&self, arch: &ArchitectureDescriptor, profile: &DeviceProfile, salt: u64) -> ChaCha8Rng {
        let key = format!("{}|{}", profile.name, arch.config);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(key.as_bytes()));
        rng.set_stream(salt);
        rng
    }

    fn noisy(&self, rng: &mut ChaCha8Rng, value: f64) -> f64 {
        if self.jitter > 0.0 {
            value * (1.0 + rng.random_range(-self.jitter..=self.jitter))
        } else {
            value
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SampleSource for SimulatedSampler {
    fn latency_samples(&mut self, arch: &ArchitectureDescriptor, profile: &DeviceProfile, runs: usize) -> Result<Vec<f64>> {
        let base = simulate_latency(arch, profile);
        let mut rng = self.rng(arch, profile, 0);
        Ok((0..runs).map(|_| self.noisy(&mut rng, base)).collect())
    }

    fn power_traces(
        &mut self,
        arch: &ArchitectureDescriptor,
        profile: &DeviceProfile,
        latency_ms: f64,
        protocol: &MeasurementProtocol,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let idle_w = profile.power_model.idle_w;
        let dynamic = simulate_dynamic_power(arch, profile, latency_ms)?;
        let n = protocol.trace_len();
        let mut rng = self.rng(arch, profile, 1);
        let idle = (0..n).map(|_| self.noisy(&mut rng, idle_w)).collect();
        let active = (0..n).map(|_| idle_w + self.noisy(&mut rng, dynamic)).collect();
        Ok((idle, active))
    }
}

/// Requests raw samples from a peer process over the measurement protocol.
#[derive(Debug)]
pub struct ExternalSampler {
    channel: NdjsonChannel,
}

impl ExternalSampler {
    pub fn new(channel: NdjsonChannel) -> Self {
        ExternalSampler { channel }
    }

    pub fn spawn(command_line: &str, timeout: Duration) -> Result<Self> {
        Ok(Self::new(NdjsonChannel::spawn(command_line, timeout)?))
    }
}

impl SampleSource for ExternalSampler {
    fn latency_samples(&mut self, arch: &ArchitectureDescriptor, profile: &DeviceProfile, runs: usize) -> Result<Vec<f64>> {
        let mut fields = Map::new();
        fields.insert("device".into(), Value::from(profile.name.as_str()));
        fields.insert("config".into(), serde_json::to_value(&arch.config)?);
        fields.insert("runs".into(), Value::from(runs));
        let response = self.channel.request("measure_latency", fields)?;
        response.f64_array("latency_ms")
    }

    fn power_traces(
        &mut self,
        arch: &ArchitectureDescriptor,
        profile: &DeviceProfile,
        _latency_ms: f64,
        protocol: &MeasurementProtocol,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut fields = Map::new();
        fields.insert("device".into(), Value::from(profile.name.as_str()));
        fields.insert("config".into(), serde_json::to_value(&arch.config)?);
        fields.insert("window_s".into(), Value::from(protocol.window_s));
        fields.insert("sample_hz".into(), Value::from(protocol.sample_hz));
        let response = self.channel.request("measure_power", fields)?;
        Ok((response.f64_array("idle_w")?, response.f64_array("active_w")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::build_architecture;
    use crate::devices::tests::profile;
    use crate::search_space::tests::pi_best;
    use std::io::Cursor;

    #[test]
    fn stats_examples() {
        let (m, s) = latency_stats(&[2.51; 40]).unwrap();
        assert!((m - 2.51).abs() < 1e-12);
        assert!(s.abs() < 1e-12);
        let (m, s) = latency_stats(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(latency_stats(&[1.0]).is_err());
    }

    #[test]
    fn dynamic_power_examples() {
        let idle = vec![2.0; 180];
        assert!((dynamic_power_from_traces(&idle, &[3.41; 180]).unwrap() - 1.41).abs() < 1e-12);
        assert_eq!(dynamic_power_from_traces(&idle, &idle).unwrap(), 0.0);
        assert_eq!(dynamic_power_from_traces(&idle, &[1.96; 180]).unwrap(), 0.0);
        let err = dynamic_power_from_traces(&idle, &[1.80; 180]).unwrap_err();
        assert_eq!(err.to_string(), "negative dynamic power -0.20 W");
        assert!(dynamic_power_from_traces(&[], &[1.0]).is_err());
    }

    #[test]
    fn simulated_noiseless_measurement() {
        let arch = build_architecture(&pi_best()).unwrap();
        let p = profile(0.3, 4e7, 1e7, 0.005);
        let stats = measure(&mut SimulatedSampler::noiseless(), &arch, &p, &MeasurementProtocol::default()).unwrap();
        assert_eq!(stats.latency_std_ms, 0.0);
        assert!((stats.latency_mean_ms - simulate_latency(&arch, &p)).abs() < 1e-12);
        let expected_power = simulate_dynamic_power(&arch, &p, stats.latency_mean_ms).unwrap();
        assert!((stats.dynamic_power_w - expected_power).abs() < 1e-9);
        assert_eq!(stats.n_latency_runs, 40);
    }

    #[test]
    fn jitter_is_seeded() {
        let arch = build_architecture(&pi_best()).unwrap();
        let p = profile(0.3, 4e7, 1e7, 0.005);
        let proto = MeasurementProtocol::default();
        let a = measure_latency(&mut SimulatedSampler::with_jitter(0.05, 9), &arch, &p, &proto).unwrap();
        let b = measure_latency(&mut SimulatedSampler::with_jitter(0.05, 9), &arch, &p, &proto).unwrap();
        assert_eq!(a, b);
        assert!(a.std_ms > 0.0);
    }

    #[test]
    fn warmup_runs_are_discarded() {
        let ch = NdjsonChannel::from_io(
            Cursor::new("{\"id\":1,\"latency_ms\":[9.0,1.0,3.0]}\n"),
            std::io::sink(),
            Duration::from_secs(5),
        );
        let arch = build_architecture(&pi_best()).unwrap();
        let proto = MeasurementProtocol {
            runs: 2,
            warmup_runs: 1,
            ..Default::default()
        };
        let stats = measure_latency(&mut ExternalSampler::new(ch), &arch, &profile(0.1, 1.0, 1.0, 0.0), &proto)
            .unwrap();
        assert_eq!(stats.mean_ms, 2.0);
    }

    #[test]
    fn short_latency_response_rejected() {
        let samples = vec!["2.35"; 39].join(",");
        let ch = NdjsonChannel::from_io(
            Cursor::new(format!("{{\"id\":1,\"latency_ms\":[{samples}]}}\n")),
            std::io::sink(),
            Duration::from_secs(5),
        );
        let arch = build_architecture(&pi_best()).unwrap();
        let err = measure_latency(
            &mut ExternalSampler::new(ch),
            &arch,
            &profile(0.1, 1.0, 1.0, 0.0),
            &MeasurementProtocol::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("expected 40 latency runs"), "{err}");
    }
}
