//! Least-squares calibration of a profile's cost models against measured
//! (architecture, latency, power) observations.
//!
//! Latency uses the full four-term model when the observations pin down all
//! four coefficients; otherwise it falls back to a fixed overhead plus one
//! shared MAC throughput, which needs two observations with distinct MAC
//! totals. Power is affine in achieved kMAC/ms when at least two distinct
//! rates are observed and constant otherwise. All coefficients are
//! constrained non-negative.

use serde::{Deserialize, Serialize};

use super::{predict_dynamic_power, predict_latency, CostFeatures, DeviceProfile, LatencyModel, PowerModel};
use crate::architecture::ArchitectureDescriptor;
use crate::error::{Error, Result};
use crate::evaluators::{Precision, PrecisionDeltas};

/// Throughput written when the data resolve no cost per MAC (MACs per ms).
pub const THROUGHPUT_CAP: f64 = 1e12;

const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FitObservation {
    pub features: CostFeatures,
    pub latency_ms: f64,
    pub dynamic_power_w: Option<f64>,
}

impl FitObservation {
    pub fn new(arch: &ArchitectureDescriptor, latency_ms: f64, dynamic_power_w: Option<f64>) -> Self {
        FitObservation {
            features: CostFeatures::of(arch),
            latency_ms,
            dynamic_power_w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyFitKind {
    Full,
    SharedThroughput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFitKind {
    Affine,
    Constant,
}

/// Observed minus predicted, per observation, plus the fitted model shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResiduals {
    pub latency_fit: LatencyFitKind,
    pub power_fit: PowerFitKind,
    pub latency_ms: Vec<f64>,
    pub power_w: Vec<f64>,
    pub max_abs_latency_ms: f64,
    pub max_abs_power_w: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

pub fn fit_profile(observations: &[FitObservation], precision: Precision, name: &str) -> Result<DeviceProfile> {
    if observations.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need at least 2 observations, got {}",
            observations.len()
        )));
    }
    for o in observations {
        if !(o.latency_ms > 0.0 && o.latency_ms.is_finite()) {
            return Err(Error::InvalidInput(format!("latency must be positive, got {}", o.latency_ms)));
        }
        if let Some(p) = o.dynamic_power_w {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidInput(format!("power must be non-negative, got {p}")));
            }
        }
    }
    let first = observations[0].features.total_macs();
    if observations.iter().all(|o| o.features.total_macs() == first) {
        return Err(Error::RankDeficient("all observations have the same MAC total".into()));
    }

    let latencies: Vec<f64> = observations.iter().map(|o| o.latency_ms).collect();
    let full_design: Vec<Vec<f64>> = observations
        .iter()
        .map(|o| {
            vec![
                1.0,
                o.features.conv_macs,
                o.features.fc_macs,
                o.features.weighted_layers,
            ]
        })
        .collect();
    let inverse = |cost: f64| if cost > 0.0 { (1.0 / cost).min(THROUGHPUT_CAP) } else { THROUGHPUT_CAP };
    let (latency_model, latency_fit) = if rank(&full_design) == 4 {
        let c = nnls(&full_design, &latencies);
        (
            LatencyModel {
                fixed_ms: c[0],
                conv_macs_per_ms: inverse(c[1]),
                fc_macs_per_ms: inverse(c[2]),
                per_layer_ms: c[3],
            },
            LatencyFitKind::Full,
        )
    } else {
        let design: Vec<Vec<f64>> = observations
            .iter()
            .map(|o| vec![1.0, o.features.total_macs()])
            .collect();
        let c = nnls(&design, &latencies);
        let rate = inverse(c[1]);
        (
            LatencyModel {
                fixed_ms: c[0],
                conv_macs_per_ms: rate,
                fc_macs_per_ms: rate,
                per_layer_ms: 0.0,
            },
            LatencyFitKind::SharedThroughput,
        )
    };

    let powered: Vec<(&FitObservation, f64)> = observations
        .iter()
        .filter_map(|o| o.dynamic_power_w.map(|p| (o, p)))
        .collect();
    if powered.is_empty() {
        return Err(Error::RankDeficient("no power observations".into()));
    }
    let rates: Vec<f64> = powered
        .iter()
        .map(|(o, _)| o.features.total_macs() / o.latency_ms / 1000.0)
        .collect();
    let powers: Vec<f64> = powered.iter().map(|(_, p)| *p).collect();
    let distinct_rates = rates.iter().any(|r| (r - rates[0]).abs() > RANK_TOL * rates[0].abs().max(1.0));
    let (alpha, beta, power_fit) = if distinct_rates {
        let design: Vec<Vec<f64>> = rates.iter().map(|&r| vec![1.0, r]).collect();
        let c = nnls(&design, &powers);
        (c[0], c[1], PowerFitKind::Affine)
    } else {
        (powers.iter().sum::<f64>() / powers.len() as f64, 0.0, PowerFitKind::Constant)
    };

    let mut profile = DeviceProfile {
        name: name.to_owned(),
        precision,
        latency_model,
        power_model: PowerModel {
            idle_w: 0.0,
            alpha_w: alpha,
            beta_w_per_kmacs_per_ms: beta,
        },
        accuracy_delta_pct: PrecisionDeltas::default().get(precision),
        fit_residuals: None,
    };
    let latency_res: Vec<f64> = observations
        .iter()
        .map(|o| o.latency_ms - predict_latency(&o.features, &profile))
        .collect();
    let power_res: Vec<f64> = powered
        .iter()
        .map(|(o, p)| p - predict_dynamic_power(&o.features, &profile, o.latency_ms).expect("positive latency"))
        .collect();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    profile.fit_residuals = Some(FitResiduals {
        latency_fit,
        power_fit,
        max_abs_latency_ms: max_abs(&latency_res),
        max_abs_power_w: max_abs(&power_res),
        latency_ms: latency_res,
        power_w: power_res,
        source: String::new(),
    });
    profile.check()?;
    Ok(profile)
}

fn column_scales(design: &[Vec<f64>]) -> Vec<f64> {
    let k = design[0].len();
    (0..k)
        .map(|j| {
            let m = design.iter().fold(0.0f64, |m, row| m.max(row[j].abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect()
}

/// Numerical column rank of `design` after scaling each column to unit max.
fn rank(design: &[Vec<f64>]) -> usize {
    let scales = column_scales(design);
    let mut m: Vec<Vec<f64>> = design
        .iter()
        .map(|row| row.iter().zip(&scales).map(|(x, s)| x / s).collect())
        .collect();
    let (rows, cols) = (m.len(), scales.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[p][c].abs() <= RANK_TOL {
            continue;
        }
        m.swap(r, p);
        for i in r + 1..rows {
            let f = m[i][c] / m[r][c];
            for j in c..cols {
                m[i][j] -= f * m[r][j];
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    r
}

/// Solves `(A^T A) x = A^T y` restricted to `cols`; `None` if singular.
fn least_squares(design: &[Vec<f64>], y: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &target) in design.iter().zip(y) {
        for (i, &ci) in cols.iter().enumerate() {
            for (j, &cj) in cols.iter().enumerate() {
                a[i][j] += row[ci] * row[cj];
            }
            a[i][k] += row[ci] * target;
        }
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() <= RANK_TOL * RANK_TOL {
            return None;
        }
        a.swap(c, p);
        for i in 0..k {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=k {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

/// Non-negative least squares by exhaustive search over active column sets.
/// Only used for designs with at most four columns.
fn nnls(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let scales = column_scales(design);
    let scaled: Vec<Vec<f64>> = design
        .iter()
        .map(|row| row.iter().zip(&scales).map(|(x, s)| x / s).collect())
        .collect();
    let k = scales.len();
    let sse = |coef: &[f64]| -> f64 {
        scaled
            .iter()
            .zip(y)
            .map(|(row, t)| {
                let pred: f64 = row.iter().zip(coef).map(|(x, c)| x * c).sum();
                (t - pred).powi(2)
            })
            .sum()
    };
    let mut best = (sse(&vec![0.0; k]), vec![0.0; k]);
    // Larger subsets first so exact ties keep the richer model.
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    for mask in masks {
        let cols: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let Some(sol) = least_squares(&scaled, y, &cols) else {
            continue;
        };
        if sol.iter().any(|&c| c < -1e-12) {
            continue;
        }
        let mut coef = vec![0.0; k];
        for (&j, &c) in cols.iter().zip(&sol) {
            coef[j] = c.max(0.0);
        }
        let e = sse(&coef);
        if e < best.0 - 1e-15 * (1.0 + best.0) {
            best = (e, coef);
        }
    }
    best.1.iter().zip(&scales).map(|(c, s)| c / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::build_architecture;
    use crate::devices::tests::profile;
    use crate::devices::{simulate_dynamic_power, simulate_latency};
    use crate::search_space::tests::pi_best;
    use crate::search_space::{Configuration, SearchSpace};

    fn observe(config: &Configuration, p: &DeviceProfile) -> FitObservation {
        let arch = build_architecture(config).unwrap();
        let latency_ms = simulate_latency(&arch, p);
        let power = simulate_dynamic_power(&arch, p, latency_ms).unwrap();
        FitObservation::new(&arch, latency_ms, Some(power))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn two_observations_recover_shared_throughput_profile() {
        let mut truth = profile(0.35, 2.5e7, 2.5e7, 0.0);
        truth.power_model.idle_w = 0.0;
        let obs = vec![
            observe(&pi_best(), &truth),
            observe(&Configuration { k1: 6, fc1: 120, ..pi_best() }, &truth),
        ];
        let fitted = fit_profile(&obs, Precision::Int8, "recovered").unwrap();
        let l = fitted.latency_model;
        assert!(rel(l.fixed_ms, 0.35) < 1e-6);
        assert!(rel(l.conv_macs_per_ms, 2.5e7) < 1e-6);
        assert!(rel(l.fc_macs_per_ms, 2.5e7) < 1e-6);
        assert!(rel(fitted.power_model.alpha_w, 0.3) < 1e-6);
        assert!(rel(fitted.power_model.beta_w_per_kmacs_per_ms, 0.05) < 1e-6);
        let res = fitted.fit_residuals.unwrap();
        assert_eq!(res.latency_fit, LatencyFitKind::SharedThroughput);
        assert!(res.max_abs_latency_ms < 1e-9);
    }

    #[test]
    fn many_observations_recover_full_profile() {
        let truth = profile(0.21, 3.0e7, 8.0e6, 0.013);
        let space = SearchSpace::table1();
        let obs: Vec<_> = [0u64, 17_003, 400_000, 1_300_000, 2_900_000, 4_100_000]
            .iter()
            .map(|&i| observe(&space.config_from_index(i).unwrap(), &truth))
            .collect();
        let fitted = fit_profile(&obs, Precision::Fp16, "full").unwrap();
        let l = fitted.latency_model;
        assert_eq!(fitted.fit_residuals.as_ref().unwrap().latency_fit, LatencyFitKind::Full);
        assert!(rel(l.fixed_ms, 0.21) < 1e-6, "{l:?}");
        assert!(rel(l.conv_macs_per_ms, 3.0e7) < 1e-6, "{l:?}");
        assert!(rel(l.fc_macs_per_ms, 8.0e6) < 1e-6, "{l:?}");
        assert!(rel(l.per_layer_ms, 0.013) < 1e-6, "{l:?}");
        assert_eq!(fitted.accuracy_delta_pct, 3.43);
    }

    #[test]
    fn equal_macs_is_rank_error() {
        let arch = build_architecture(&pi_best()).unwrap();
        let obs = vec![
            FitObservation::new(&arch, 1.0, Some(0.5)),
            FitObservation::new(&arch, 2.0, Some(0.5)),
        ];
        assert!(matches!(fit_profile(&obs, Precision::Fp32, "x"), Err(Error::RankDeficient(_))));
        assert!(matches!(fit_profile(&obs[..1], Precision::Fp32, "x"), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn inconsistent_data_reports_residuals() {
        // More MACs but lower latency: the non-negative slope clamps to zero
        // and the mismatch shows up in the residuals.
        let a = build_architecture(&pi_best()).unwrap();
        let b = build_architecture(&Configuration { k1: 6, ..pi_best() }).unwrap();
        let obs = vec![FitObservation::new(&a, 1.0, Some(0.5)), FitObservation::new(&b, 2.0, None)];
        let fitted = fit_profile(&obs, Precision::Fp32, "x").unwrap();
        let res = fitted.fit_residuals.unwrap();
        assert_eq!(fitted.latency_model.conv_macs_per_ms, THROUGHPUT_CAP);
        assert!(res.max_abs_latency_ms > 0.4);
        assert_eq!(res.power_fit, PowerFitKind::Constant);
        assert_eq!(fitted.power_model.alpha_w, 0.5);
    }
}
