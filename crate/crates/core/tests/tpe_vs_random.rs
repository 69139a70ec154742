use edgenas_core::evaluators::Surrogate;
use edgenas_core::tpe::{run_optimization, suggestion_rng, TpeSettings};
use edgenas_core::SearchSpace;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[test]
fn tpe_beats_random_search_on_surrogate() {
    let space = SearchSpace::table1();
    let surrogate = Surrogate::new(space.clone(), 42);
    let budget = 200;
    let mut tpe_best = Vec::new();
    let mut rand_best = Vec::new();
    for seed in 0..20u64 {
        let settings = TpeSettings {
            seed,
            budget,
            ..TpeSettings::default()
        };
        let h = run_optimization(&space, settings, None, |c| Ok(-surrogate.base_accuracy(c)?)).unwrap();
        tpe_best.push(-h.best().unwrap().loss().unwrap());
        let r = (0..budget)
            .map(|i| surrogate.base_accuracy(&space.sample_uniform(&mut suggestion_rng(seed, i))).unwrap())
            .fold(f64::MIN, f64::max);
        rand_best.push(r);
    }
    let wins = tpe_best.iter().zip(&rand_best).filter(|(t, r)| t > r).count();
    assert!(median(tpe_best) >= median(rand_best));
    assert!(wins * 10 >= 20 * 6);
}
