use edgenas_core::search_space::Param;
use edgenas_core::tpe::{build_density, run_optimization, split_history, suggest, suggestion_rng, ParamDensity};
use edgenas_core::{SearchSpace, TpeSettings};
use proptest::prelude::*;

fn settings(seed: u64, budget: usize) -> TpeSettings {
    TpeSettings {
        seed,
        budget,
        ..TpeSettings::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn suggestions_validate_and_startup_is_uniform(seed in any::<u64>()) {
        let space = SearchSpace::table1();
        let h = run_optimization(&space, settings(seed, 40), None, |c| Ok(-f64::from(c.k1 * c.fc2))).unwrap();
        for (i, obs) in h.entries().iter().enumerate() {
            prop_assert!(space.validate(&obs.config).is_valid());
            if i < 20 {
                prop_assert_eq!(&obs.config, &space.sample_uniform(&mut suggestion_rng(seed, i)));
            }
        }
        prop_assert!(space.validate(&suggest(&space, &h)).is_valid());
    }

    #[test]
    fn deep_kernel_densities_use_only_active_entries(seed in any::<u64>()) {
        let space = SearchSpace::table1();
        let h = run_optimization(&space, settings(seed, 30), None, |c| Ok(f64::from(c.block))).unwrap();
        let (good, bad) = split_history(&h).unwrap();
        for (param, min_block) in [(Param::K3, 3), (Param::K4, 4)] {
            let spec = *space.spec(param);
            let values = |set: &[&edgenas_core::tpe::Observation]| -> Vec<u32> {
                set.iter()
                    .filter(|o| o.config.block >= min_block)
                    .map(|o| o.config.get(param).unwrap())
                    .collect()
            };
            let d = ParamDensity::from_history(&space, &h, param).unwrap();
            prop_assert_eq!(&d.good_weights, &build_density(&spec, &values(&good), 1.0));
            prop_assert_eq!(&d.bad_weights, &build_density(&spec, &values(&bad), 1.0));
        }
    }
}
