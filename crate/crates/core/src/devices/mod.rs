//! Accelerator profiles and their latency / dynamic-power cost models.

mod fit;
mod measure;

pub use fit::{fit_profile, FitObservation, FitResiduals, LatencyFitKind, PowerFitKind, THROUGHPUT_CAP};
pub use measure::{
    dynamic_power_from_traces, latency_stats, measure, measure_latency, measure_power, ExternalSampler,
    LatencyStats, MeasurementProtocol, MeasurementStats, SampleSource, SimulatedSampler, NEGATIVE_POWER_TOLERANCE_W,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::architecture::{build_architecture, ArchitectureDescriptor};
use crate::error::{Error, Result};
use crate::evaluators::Precision;
use crate::search_space::{Configuration, Dropout, Param, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub fixed_ms: f64,
    pub conv_macs_per_ms: f64,
    pub fc_macs_per_ms: f64,
    pub per_layer_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub idle_w: f64,
    pub alpha_w: f64,
    pub beta_w_per_kmacs_per_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub precision: Precision,
    pub latency_model: LatencyModel,
    pub power_model: PowerModel,
    pub accuracy_delta_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residuals: Option<FitResiduals>,
}

impl DeviceProfile {
    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidInput(format!(
                "profile `{}`: {what}",
                self.name
            )))
        };
        if self.name.trim().is_empty() {
            return bad("empty name");
        }
        let l = &self.latency_model;
        let p = &self.power_model;
        let all = [
            l.fixed_ms,
            l.conv_macs_per_ms,
            l.fc_macs_per_ms,
            l.per_layer_ms,
            p.idle_w,
            p.alpha_w,
            p.beta_w_per_kmacs_per_ms,
            self.accuracy_delta_pct,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient");
        }
        if l.conv_macs_per_ms <= 0.0 || l.fc_macs_per_ms <= 0.0 {
            return bad("throughputs must be positive");
        }
        if l.fixed_ms < 0.0 || l.per_layer_ms < 0.0 {
            return bad("latency overheads must be non-negative");
        }
        if p.idle_w < 0.0 || p.alpha_w < 0.0 || p.beta_w_per_kmacs_per_ms < 0.0 {
            return bad("power coefficients must be non-negative");
        }
        if self.accuracy_delta_pct < 0.0 {
            return bad("accuracy delta must be non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: DeviceProfile = serde_json::from_str(text)?;
        profile.check()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Reads every `*.json` profile in `dir`, sorted by file name.
pub fn load_profiles(dir: &Path) -> Result<Vec<DeviceProfile>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path)?;
        let profile = DeviceProfile::from_json(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        out.push(profile);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no profiles in {}", dir.display())));
    }
    check_unique_names(&out)?;
    Ok(out)
}

pub(crate) fn check_unique_names(profiles: &[DeviceProfile]) -> Result<()> {
    let mut names: Vec<&str> = profiles.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate profile name `{}`", w[0])));
    }
    Ok(())
}

/// The architecture quantities the cost models depend on.
///
/// Real-valued so that population averages can stand in for a single model:
/// both cost models are linear in these features at fixed latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFeatures {
    pub conv_macs: f64,
    pub fc_macs: f64,
    pub weighted_layers: f64,
}

impl CostFeatures {
    pub fn of(arch: &ArchitectureDescriptor) -> Self {
        CostFeatures {
            conv_macs: arch.conv_macs() as f64,
            fc_macs: arch.fc_macs() as f64,
            weighted_layers: f64::from(arch.weighted_layer_count),
        }
    }

    pub fn total_macs(&self) -> f64 {
        self.conv_macs + self.fc_macs
    }

    /// Expected features of a configuration drawn uniformly from `space`.
    pub fn space_mean(space: &SearchSpace) -> Self {
        let mut acc = CostFeatures {
            conv_macs: 0.0,
            fc_macs: 0.0,
            weighted_layers: 0.0,
        };
        let total = space.cardinality() as f64;
        let dropouts = (space.spec(Param::Do1).grid_size() * space.spec(Param::Do2).grid_size()) as f64;
        // Dropout never changes cost, so walk one dropout setting and weight it.
        let lo = |p: Param| space.spec(p).lo;
        for block in space.block_values() {
            let kernel_grids: Vec<Vec<u32>> = Param::KERNELS
                .iter()
                .filter(|p| p.is_active(block))
                .map(|&p| space.spec(p).values().collect())
                .collect();
            for kernels in cartesian(&kernel_grids) {
                for fc1 in space.spec(Param::Fc1).values() {
                    for fc2 in space.spec(Param::Fc2).values() {
                        let config = Configuration {
                            block,
                            k1: kernels[0],
                            k2: kernels[1],
                            k3: kernels.get(2).copied(),
                            k4: kernels.get(3).copied(),
                            fc1,
                            do1: Dropout(lo(Param::Do1)),
                            fc2,
                            do2: Dropout(lo(Param::Do2)),
                            output_classes: space.output_classes(),
                        };
                        let f = CostFeatures::of(&build_architecture(&config).expect("member of space"));
                        acc.conv_macs += f.conv_macs * dropouts;
                        acc.fc_macs += f.fc_macs * dropouts;
                        acc.weighted_layers += f.weighted_layers * dropouts;
                    }
                }
            }
        }
        CostFeatures {
            conv_macs: acc.conv_macs / total,
            fc_macs: acc.fc_macs / total,
            weighted_layers: acc.weighted_layers / total,
        }
    }
}

fn cartesian(grids: &[Vec<u32>]) -> Vec<Vec<u32>> {
    grids.iter().fold(vec![Vec::new()], |prefixes, grid| {
        prefixes
            .iter()
            .flat_map(|p| {
                grid.iter().map(move |&v| {
                    let mut next = p.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

/// `fixed + conv/conv_rate + fc/fc_rate + weighted_layers * per_layer`.
pub fn predict_latency(features: &CostFeatures, profile: &DeviceProfile) -> f64 {
    let m = &profile.latency_model;
    m.fixed_ms
        + features.conv_macs / m.conv_macs_per_ms
        + features.fc_macs / m.fc_macs_per_ms
        + features.weighted_layers * m.per_layer_ms
}

/// `alpha + beta * achieved kMAC/ms`.
pub fn predict_dynamic_power(features: &CostFeatures, profile: &DeviceProfile, latency_ms: f64) -> Result<f64> {
    if !(latency_ms > 0.0 && latency_ms.is_finite()) {
        return Err(Error::InvalidInput(format!("latency must be positive, got {latency_ms}")));
    }
    let m = &profile.power_model;
    let kmacs_per_ms = features.total_macs() / latency_ms / 1000.0;
    Ok(m.alpha_w + m.beta_w_per_kmacs_per_ms * kmacs_per_ms)
}

pub fn simulate_latency(arch: &ArchitectureDescriptor, profile: &DeviceProfile) -> f64 {
    predict_latency(&CostFeatures::of(arch), profile)
}

pub fn simulate_dynamic_power(arch: &ArchitectureDescriptor, profile: &DeviceProfile, latency_ms: f64) -> Result<f64> {
    predict_dynamic_power(&CostFeatures::of(arch), profile, latency_ms)
}
