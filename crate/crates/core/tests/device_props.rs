use edgenas_core::devices::{latency_stats, measure, simulate_latency, SampleSource, SimulatedSampler};
use edgenas_core::{build_architecture, shipped_profiles, Configuration, MeasurementProtocol, SearchSpace};
use proptest::prelude::*;

fn any_config() -> impl Strategy<Value = Configuration> {
    let space = SearchSpace::table1();
    (0..space.cardinality()).prop_map(move |i| space.config_from_index(i).unwrap())
}

/// Replays fixed samples, standing in for a peer process.
struct Replay {
    latency: Vec<f64>,
    idle: Vec<f64>,
    active: Vec<f64>,
}

impl SampleSource for Replay {
    fn latency_samples(
        &mut self,
        _: &edgenas_core::ArchitectureDescriptor,
        _: &edgenas_core::DeviceProfile,
        _: usize,
    ) -> edgenas_core::Result<Vec<f64>> {
        Ok(self.latency.clone())
    }

    fn power_traces(
        &mut self,
        _: &edgenas_core::ArchitectureDescriptor,
        _: &edgenas_core::DeviceProfile,
        _: f64,
        _: &MeasurementProtocol,
    ) -> edgenas_core::Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.idle.clone(), self.active.clone()))
    }
}

proptest! {
    #[test]
    fn latency_never_drops_when_macs_grow(c in any_config(), which in 0usize..4) {
        let base = build_architecture(&c).unwrap();
        let mut bigger = c.clone();
        match which {
            0 => bigger.k1 += 2,
            1 => bigger.k2 += 4,
            2 => bigger.fc1 += 5,
            _ => bigger.fc2 += 5,
        }
        let grown = build_architecture(&bigger).unwrap();
        for p in shipped_profiles() {
            prop_assert!(simulate_latency(&grown, &p) >= simulate_latency(&base, &p), "{}", p.name);
        }
    }

    #[test]
    fn simulated_and_replayed_samples_reduce_identically(c in any_config(), jitter in 0.0f64..0.05, seed in any::<u64>()) {
        let arch = build_architecture(&c).unwrap();
        let protocol = MeasurementProtocol { runs: 40, warmup_runs: 0, ..MeasurementProtocol::default() };
        for p in shipped_profiles() {
            let mut sim = SimulatedSampler::with_jitter(jitter, seed);
            let latency = sim.latency_samples(&arch, &p, 40).unwrap();
            let mean = latency_stats(&latency).unwrap().0;
            let (idle, active) = sim.power_traces(&arch, &p, mean, &protocol).unwrap();
            let mut replay = Replay { latency, idle, active };
            let a = measure(&mut SimulatedSampler::with_jitter(jitter, seed), &arch, &p, &protocol);
            let b = measure(&mut replay, &arch, &p, &protocol);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }
}
