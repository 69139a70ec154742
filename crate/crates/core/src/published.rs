//! Frozen published table cells and the profile calibration built on them.
//!
//! The fixture ships with the crate; shipped device profiles are regenerated
//! from it by [`calibrate_profiles`] and carry their residuals.

use serde::{Deserialize, Serialize};

use crate::architecture::build_architecture;
use crate::devices::{fit_profile, CostFeatures, DeviceProfile, FitObservation};
use crate::error::{Error, Result};
use crate::evaluators::Precision;
use crate::search_space::{Configuration, SearchSpace};

pub const FIXTURE_JSON: &str = include_str!("../data/published_tables.json");

/// Device names in table order, with the precision each one deploys at.
pub const DEVICES: [(&str, Precision); 6] = [
    ("pi", Precision::Fp32),
    ("jetson-low", Precision::Fp16),
    ("jetson-high", Precision::Fp16),
    ("pi-ncs2", Precision::Fp16),
    ("pi-tpu", Precision::Int8),
    ("coral-dev", Precision::Int8),
];

pub const SHIPPED_PROFILES: [(&str, &str); 6] = [
    ("pi", include_str!("../data/profiles/pi.json")),
    ("jetson-low", include_str!("../data/profiles/jetson-low.json")),
    ("jetson-high", include_str!("../data/profiles/jetson-high.json")),
    ("pi-ncs2", include_str!("../data/profiles/pi-ncs2.json")),
    ("pi-tpu", include_str!("../data/profiles/pi-tpu.json")),
    ("coral-dev", include_str!("../data/profiles/coral-dev.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRow {
    pub device: String,
    pub label: String,
    pub accuracy_ave: f64,
    pub accuracy_std: f64,
    pub latency_ave_ms: f64,
    pub latency_std_ms: f64,
    pub power_ave_w: f64,
    pub power_std_w: f64,
    pub cite: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestModelMetric {
    Accuracy,
    AccuracyPerLatency,
    AccuracyPerPdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestModelRow {
    pub fitness: BestModelMetric,
    /// `None` for rows that apply to every device.
    pub device: Option<String>,
    pub label: String,
    pub config: Configuration,
    pub accuracy_pct: f64,
    pub latency_ms: Option<f64>,
    pub power_w: Option<f64>,
    pub cite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRow {
    pub label: String,
    pub accuracy_pct: f64,
    pub latency_ms: f64,
    pub power_w: f64,
    pub accuracy_per_pdp: f64,
    pub cite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedTables {
    pub device_summary: Vec<SummaryRow>,
    pub best_models: Vec<BestModelRow>,
    pub prior_comparison: Vec<ComparisonRow>,
}

impl PublishedTables {
    pub fn load() -> Self {
        Self::from_json(FIXTURE_JSON).expect("bundled fixture parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn summary(&self, device: &str) -> Option<&SummaryRow> {
        self.device_summary.iter().find(|r| r.device == device)
    }

    pub fn best(&self, metric: BestModelMetric, device: &str) -> Option<&BestModelRow> {
        self.best_models
            .iter()
            .find(|r| r.fitness == metric && r.device.as_deref() == Some(device))
    }

    pub fn comparison(&self, label: &str) -> Option<&ComparisonRow> {
        self.prior_comparison.iter().find(|r| r.label == label)
    }
}

pub fn precision_of(device: &str) -> Option<Precision> {
    DEVICES.iter().find(|(n, _)| *n == device).map(|(_, p)| *p)
}

/// Fitting inputs for one device: its best-model rows, plus the summary
/// averages placed at the mean cost features of a uniformly drawn model.
pub fn calibration_observations(
    tables: &PublishedTables,
    device: &str,
    mean_features: CostFeatures,
) -> Result<Vec<FitObservation>> {
    let missing = || Error::InvalidInput(format!("no published rows for device `{device}`"));
    let summary = tables.summary(device).ok_or_else(missing)?;
    let mut observations: Vec<(Configuration, FitObservation)> = Vec::new();
    for metric in [BestModelMetric::AccuracyPerPdp, BestModelMetric::AccuracyPerLatency] {
        let row = tables.best(metric, device).ok_or_else(missing)?;
        let latency_ms = row
            .latency_ms
            .ok_or_else(|| Error::InvalidInput(format!("{}: latency missing", row.cite)))?;
        // The same model listed under both fitness rows is one measurement.
        if observations
            .iter()
            .any(|(c, o)| *c == row.config && o.latency_ms == latency_ms)
        {
            continue;
        }
        let arch = build_architecture(&row.config)?;
        observations.push((row.config.clone(), FitObservation::new(&arch, latency_ms, row.power_w)));
    }
    let mut out: Vec<FitObservation> = observations.into_iter().map(|(_, o)| o).collect();
    out.push(FitObservation {
        features: mean_features,
        latency_ms: summary.latency_ave_ms,
        dynamic_power_w: Some(summary.power_ave_w),
    });
    Ok(out)
}

pub fn calibrate_profile(tables: &PublishedTables, device: &str, mean_features: CostFeatures) -> Result<DeviceProfile> {
    let precision =
        precision_of(device).ok_or_else(|| Error::InvalidInput(format!("unknown device `{device}`")))?;
    let observations = calibration_observations(tables, device, mean_features)?;
    let mut profile = fit_profile(&observations, precision, device)?;
    let summary = tables.summary(device).expect("checked above");
    let mut cites: Vec<&str> = [BestModelMetric::AccuracyPerLatency, BestModelMetric::AccuracyPerPdp]
        .iter()
        .filter_map(|&m| tables.best(m, device))
        .map(|r| r.cite.as_str())
        .collect();
    cites.push(summary.cite.as_str());
    if let Some(res) = profile.fit_residuals.as_mut() {
        res.source = format!(
            "{}; summary averages placed at the uniform-space mean features",
            cites.join("; ")
        );
    }
    Ok(profile)
}

/// Refits all six profiles against `space`'s mean features.
pub fn calibrate_profiles(tables: &PublishedTables, space: &SearchSpace) -> Result<Vec<DeviceProfile>> {
    let mean = CostFeatures::space_mean(space);
    DEVICES
        .iter()
        .map(|(name, _)| calibrate_profile(tables, name, mean))
        .collect()
}

/// The bundled profiles, in table order.
pub fn shipped_profiles() -> Vec<DeviceProfile> {
    SHIPPED_PROFILES
        .iter()
        .map(|(_, text)| DeviceProfile::from_json(text).expect("bundled profile parses"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::simulate_latency;

    #[test]
    fn fixture_shape() {
        let t = PublishedTables::load();
        assert_eq!(t.device_summary.len(), 6);
        assert_eq!(t.best_models.len(), 14);
        assert_eq!(t.prior_comparison.len(), 3);
        for (name, _) in DEVICES {
            assert!(t.summary(name).is_some(), "{name}");
            assert!(t.best(BestModelMetric::AccuracyPerLatency, name).is_some());
            assert!(t.best(BestModelMetric::AccuracyPerPdp, name).is_some());
        }
        assert_eq!(t.summary("pi").unwrap().latency_ave_ms, 4.70);
        assert_eq!(t.comparison("Our Model").unwrap().accuracy_per_pdp, 478.06);
    }

    #[test]
    fn published_rows_outside_grid_are_flagged() {
        let t = PublishedTables::load();
        let space = SearchSpace::table1();
        let coral = t.best(BestModelMetric::AccuracyPerPdp, "coral-dev").unwrap();
        let v = space.validate(&coral.config);
        assert!(v.reasons().iter().any(|r| r == "K1=18 off-grid (6..16 step 2)"));
        assert!(!space.validate(&t.best_models[1].config).is_valid());
        assert!(space.validate(&t.best(BestModelMetric::AccuracyPerLatency, "pi").unwrap().config).is_valid());
    }

    #[test]
    fn coral_profile_reproduces_best_latency() {
        let t = PublishedTables::load();
        let profile = calibrate_profile(&t, "coral-dev", CostFeatures::space_mean(&SearchSpace::table1())).unwrap();
        let res = profile.fit_residuals.as_ref().unwrap();
        for metric in [BestModelMetric::AccuracyPerLatency, BestModelMetric::AccuracyPerPdp] {
            let row = t.best(metric, "coral-dev").unwrap();
            let arch = build_architecture(&row.config).unwrap();
            let err = (simulate_latency(&arch, &profile) - 0.39).abs();
            assert!(err <= res.max_abs_latency_ms + 1e-12, "{err} vs {}", res.max_abs_latency_ms);
        }
    }

    #[test]
    fn shipped_profiles_match_refit() {
        let fresh = calibrate_profiles(&PublishedTables::load(), &SearchSpace::table1()).unwrap();
        if std::env::var_os("EDGENAS_REGENERATE_PROFILES").is_some() {
            let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/profiles");
            for p in &fresh {
                std::fs::write(dir.join(format!("{}.json", p.name)), p.to_json() + "\n").unwrap();
            }
            return;
        }
        assert_eq!(shipped_profiles(), fresh);
    }

    #[test]
    fn jetson_modes_share_accuracy_delta() {
        let p = shipped_profiles();
        let get = |n: &str| p.iter().find(|x| x.name == n).unwrap().accuracy_delta_pct;
        assert_eq!(get("jetson-low"), get("jetson-high"));
        assert_eq!(get("pi"), 0.0);
        assert_eq!(get("jetson-low"), 3.43);
    }
}
