//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgenas_core::architecture::count_layers;
use edgenas_core::devices::{measure, ExternalSampler};
use edgenas_core::pipeline::{compare_ranked, stage1, DeviceSet};
use edgenas_core::reporting::{pareto_indices, ratio_sheet, ClaimStatus, RatioInputs};
use edgenas_core::tpe::{run_optimization, suggestion_rng};
use edgenas_core::{
    build_architecture, fitness, shipped_profiles, Configuration, Dropout, Error, FitnessKind, MeasurementProtocol,
    Precision, PublishedTables, RankedSet, SearchSpace, StageContext, Surrogate, TpeSettings,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn edgenas(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_edgenas"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn within(value: f64, expected: f64, tol: f64) -> bool {
    (value - expected).abs() <= tol
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))
}

fn accuracy_per_pdp_arithmetic() -> Outcome {
    let cases = [
        (96.95, 0.39, 0.52, 478.06),
        (97.46, 6.95, 0.50, 28.04),
        (95.93, 0.65, 0.67, 220.27),
    ];
    let mut got = Vec::new();
    for (a, l, p, expected) in cases {
        let v = fitness(a, Some(l), Some(p), FitnessKind::AccuracyPerPdp).map_err(|e| e.to_string())?;
        ensure(within(v, expected, 0.01), format!("{a}/({l}*{p}) = {v:.4}, expected {expected}"))?;
        got.push(format!("{v:.2}"));
    }
    Ok(got.join(", "))
}

fn ratio_sheet_from_fixture() -> Outcome {
    let sheet = ratio_sheet(&RatioInputs::published(&PublishedTables::load()));
    ensure(sheet.len() == 20, format!("{} claims, expected 20", sheet.len()))?;
    let labels: HashSet<&str> = sheet.iter().map(|c| c.label.as_str()).collect();
    ensure(labels.len() == sheet.len(), "duplicate claim labels")?;
    for c in &sheet {
        let v = c.computed.ok_or_else(|| format!("{}: unavailable", c.label))?;
        ensure(
            c.status == ClaimStatus::Pass && within(v, c.expected, 0.05),
            format!("{}: computed {v:.3}, expected {}", c.label, c.expected),
        )?;
    }
    Ok(format!("{} of {} claims within ±0.05", sheet.len(), sheet.len()))
}

fn cardinality() -> Outcome {
    let start = Instant::now();
    let grid = |lo: u32, hi: u32, step: usize| (lo..=hi).step_by(step).collect::<Vec<u32>>();
    let mut conv = HashSet::new();
    for block in 2..=4u32 {
        for k1 in grid(6, 16, 2) {
            for k2 in grid(24, 32, 4) {
                let k3s: Vec<Option<u32>> = if block >= 3 { grid(36, 48, 4).into_iter().map(Some).collect() } else { vec![None] };
                let k4s: Vec<Option<u32>> = if block == 4 { grid(52, 64, 4).into_iter().map(Some).collect() } else { vec![None] };
                for &k3 in &k3s {
                    for &k4 in &k4s {
                        conv.insert((block, k1, k2, k3, k4));
                    }
                }
            }
        }
    }
    let fc = grid(100, 120, 5).len() * grid(10, 30, 1).len() * grid(80, 100, 5).len() * grid(10, 30, 1).len();
    ensure(conv.len() == 378, format!("conv tuples {}", conv.len()))?;
    ensure(fc == 11_025, format!("fc combinations {fc}"))?;

    let space_file = data("table1.json");
    let out = edgenas(&["space", "count", "--space", space_file.to_str().unwrap()])?;
    ensure(out.status.success(), format!("exit {:?}", out.status.code()))?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let printed: u64 = stdout.trim().parse().map_err(|_| format!("stdout {stdout:?}"))?;
    ensure(printed == 4_167_450, format!("printed {printed}"))?;
    ensure(printed == (conv.len() * fc) as u64, "enumeration oracle disagrees")?;
    ensure(stderr.contains(">13M"), "missing >13M note")?;
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("{printed} = 378 x 11025, note present"))
}

/// Layer walk written from the grammar: two same-padded 3x3 convs and a
/// 2x2 pool per block, then FC1, FC2 and the output layer.
fn walk(c: &Configuration) -> (u64, u64) {
    let mut side = 48u64;
    let mut ch = 1u64;
    let (mut params, mut macs) = (0u64, 0u64);
    for k in [Some(c.k1), Some(c.k2), c.k3, c.k4].into_iter().flatten().map(u64::from) {
        for _ in 0..2 {
            params += 9 * ch * k + k;
            macs += side * side * 9 * ch * k;
            ch = k;
        }
        side /= 2;
    }
    let mut units = side * side * ch;
    for w in [c.fc1, c.fc2, c.output_classes].map(u64::from) {
        params += units * w + w;
        macs += units * w;
        units = w;
    }
    (params, macs)
}

fn pi_best() -> Configuration {
    Configuration {
        block: 2,
        k1: 16,
        k2: 24,
        k3: None,
        k4: None,
        fc1: 100,
        do1: Dropout(20),
        fc2: 80,
        do2: Dropout(14),
        output_classes: 7,
    }
}

fn architecture_oracle() -> Outcome {
    let start = Instant::now();
    let space = SearchSpace::table1();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let c = space.sample_uniform(&mut rng);
        let arch = build_architecture(&c).map_err(|e| e.to_string())?;
        let expected = walk(&c);
        ensure(
            (arch.total_params, arch.total_macs) == expected,
            format!("{c}: {:?} vs oracle {expected:?}", (arch.total_params, arch.total_macs)),
        )?;
    }
    let arch = build_architecture(&pi_best()).map_err(|e| e.to_string())?;
    ensure(arch.total_params == 365_515, format!("pi best params {}", arch.total_params))?;
    ensure(arch.total_macs == 10_970_992, format!("pi best MACs {}", arch.total_macs))?;
    ensure(walk(&pi_best()) == (365_515, 10_970_992), "oracle disagrees on pi best")?;

    let out = edgenas(&["arch", "describe", "--config", data("pi_best.json").to_str().unwrap()])?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(v["total_params"] == 365_515, format!("arch describe total_params {}", v["total_params"]))?;
    within_time(start, Duration::from_secs(1))?;
    Ok("100/100 configs match; pi best 365515 params, 10970992 MACs".into())
}

fn layer_counts() -> Outcome {
    let mut got = Vec::new();
    for (block, expected) in [(2, 7), (3, 9), (4, 11)] {
        let mut c = pi_best();
        c.block = block;
        c.k3 = (block >= 3).then_some(36);
        c.k4 = (block >= 4).then_some(52);
        let arch = build_architecture(&c).map_err(|e| e.to_string())?;
        ensure(
            arch.weighted_layer_count == expected && count_layers(&c) == expected,
            format!("block {block}: {} weighted layers", arch.weighted_layer_count),
        )?;
        got.push(format!("{block}->{expected}"));
    }
    Ok(got.join(", "))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn tpe_superiority() -> Outcome {
    let start = Instant::now();
    let space = SearchSpace::table1();
    let surrogate = Surrogate::new(space.clone(), 42);
    let budget = 200;
    let (mut tpe, mut random) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let settings = TpeSettings {
            seed,
            budget,
            ..TpeSettings::default()
        };
        let h = run_optimization(&space, settings, None, |c| Ok(-surrogate.base_accuracy(c)?)).map_err(|e| e.to_string())?;
        tpe.push(-h.best().and_then(|o| o.loss()).ok_or("empty history")?);
        let best_random = (0..budget)
            .map(|i| surrogate.base_accuracy(&space.sample_uniform(&mut suggestion_rng(seed, i))))
            .collect::<Result<Vec<f64>, Error>>()
            .map_err(|e| e.to_string())?
            .into_iter()
            .fold(f64::MIN, f64::max);
        random.push(best_random);
    }
    let wins = tpe.iter().zip(&random).filter(|(t, r)| t > r).count();
    let (mt, mr) = (median(tpe), median(random));
    ensure(mt >= mr, format!("median TPE {mt:.3} < random {mr:.3}"))?;
    ensure(wins * 10 >= 20 * 6, format!("TPE won {wins}/20"))?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!("median {mt:.3} vs {mr:.3}, TPE strictly better on {wins}/20 seeds"))
}

fn records_configs(set: &RankedSet) -> Vec<Configuration> {
    set.records.iter().map(|r| r.config.clone()).collect()
}

fn end_to_end_determinism() -> Outcome {
    let start = Instant::now();
    let space_path = data("reduced.json");
    let space_text = std::fs::read_to_string(&space_path).map_err(|e| e.to_string())?;
    let space = SearchSpace::from_json(&space_text).map_err(|e| e.to_string())?;
    ensure(space.cardinality() <= 5_000, format!("reduced space has {}", space.cardinality()))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = edgenas(&[
            "pipeline",
            "--space",
            space_path.to_str().unwrap(),
            "--evaluator",
            "surrogate",
            "--budget",
            "500",
            "--keep1",
            "50",
            "--keep2",
            "10",
            "--seed",
            "7",
            "--no-timestamps",
            "--out",
            out_dir.to_str().unwrap(),
        ])?;
        ensure(
            out.status.success(),
            format!("pipeline exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
        )?;
        runs.push(out_dir);
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    ensure(
        read(&runs[0].join("winners.json"))? == read(&runs[1].join("winners.json"))?,
        "winners differ between runs",
    )?;
    ensure(
        read(&runs[0].join("trials.jsonl"))? == read(&runs[1].join("trials.jsonl"))?,
        "trial logs differ between runs",
    )?;

    let parse = |p: PathBuf| -> Result<String, String> { std::fs::read_to_string(&p).map_err(|e| e.to_string()) };
    let s1: RankedSet = serde_json::from_str(&parse(runs[0].join("stage1.json"))?).map_err(|e| e.to_string())?;
    let s2: Vec<DeviceSet> = serde_json::from_str(&parse(runs[0].join("stage2.json"))?).map_err(|e| e.to_string())?;
    let s3: Vec<DeviceSet> = serde_json::from_str(&parse(runs[0].join("stage3.json"))?).map_err(|e| e.to_string())?;
    ensure(s1.len() == 50, format!("stage 1 kept {}", s1.len()))?;
    let survivors: HashSet<Configuration> = records_configs(&s1).into_iter().collect();
    let profiles = shipped_profiles();
    ensure(s2.len() == profiles.len() && s3.len() == profiles.len(), "not every device has a stage-2/3 set")?;
    for (d2, d3) in s2.iter().zip(&s3) {
        ensure(d2.device == d3.device, "device order differs between stages")?;
        ensure(d2.ranked.len() == 10, format!("{}: stage 2 kept {}", d2.device, d2.ranked.len()))?;
        ensure(
            d2.measured + d2.failed == 50,
            format!("{}: {} stage-2 measurements", d2.device, d2.measured + d2.failed),
        )?;
        let set2: HashSet<Configuration> = records_configs(&d2.ranked).into_iter().collect();
        ensure(set2.is_subset(&survivors), format!("{}: stage 2 escapes stage 1", d2.device))?;
        let winner = d3.ranked.best().ok_or(format!("{}: no winner", d3.device))?;
        ensure(set2.contains(&winner.config), format!("{}: winner outside stage 2 set", d3.device))?;
    }
    within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "{} configs, two runs byte-identical, nesting holds on {} devices, {:.1}s",
        space.cardinality(),
        s3.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn stage1_brute_force() -> Outcome {
    let space_text = std::fs::read_to_string(data("toy8.json")).map_err(|e| e.to_string())?;
    let space = SearchSpace::from_json(&space_text).map_err(|e| e.to_string())?;
    ensure(space.cardinality() == 8, format!("toy space has {}", space.cardinality()))?;
    let surrogate = Surrogate::new(space.clone(), 42);
    let mut all: Vec<(Configuration, f64)> = space
        .iter()
        .map(|c| surrogate.base_accuracy(&c).map(|a| (c, a)))
        .collect::<Result<_, _>>()
        .map_err(|e: Error| e.to_string())?;
    all.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(space.index_of(&a.0).unwrap().cmp(&space.index_of(&b.0).unwrap()))
    });
    let expected: Vec<Configuration> = all.iter().take(3).map(|(c, _)| c.clone()).collect();

    let settings = TpeSettings {
        seed: 3,
        budget: 64,
        ..TpeSettings::default()
    };
    let mut evaluator = surrogate;
    let out = stage1(&StageContext::new(&space, 3), &mut evaluator, settings, 3).map_err(|e| e.to_string())?;
    ensure(out.history.unique_successes() == 8, format!("only {} of 8 evaluated", out.history.unique_successes()))?;
    let got = records_configs(&out.ranked);
    ensure(got == expected, format!("stage 1 {got:?} vs exhaustive {expected:?}"))?;
    for w in out.ranked.records.windows(2) {
        ensure(compare_ranked(&w[0], &w[1], &space).is_le(), "ranked set out of order")?;
    }
    Ok("keep-3 equals exhaustive top-3 over all 8 configs".into())
}

fn peer_sampler(extra: &[&str]) -> Result<ExternalSampler, String> {
    let mut cmd = format!("'{}' --device pi-ncs2", env!("CARGO_BIN_EXE_edgenas-peer"));
    for a in extra {
        cmd.push(' ');
        cmd.push_str(a);
    }
    ExternalSampler::spawn(&cmd, Duration::from_secs(30)).map_err(|e| e.to_string())
}

fn measurement_protocol() -> Outcome {
    let arch = build_architecture(&pi_best()).map_err(|e| e.to_string())?;
    let profile = shipped_profiles()
        .into_iter()
        .find(|p| p.name == "pi-ncs2")
        .ok_or("pi-ncs2 profile missing")?;
    let protocol = MeasurementProtocol::default();

    let mut flat = peer_sampler(&["--latency-values", "2.35", "--idle-w", "2.00", "--active-w", "4.08"])?;
    let s = measure(&mut flat, &arch, &profile, &protocol).map_err(|e| e.to_string())?;
    ensure(
        within(s.latency_mean_ms, 2.35, 1e-12) && s.latency_std_ms.abs() < 1e-12 && within(s.dynamic_power_w, 2.08, 1e-12),
        format!("flat peer gave {s:?}"),
    )?;
    ensure(s.n_latency_runs == 40, format!("{} runs", s.n_latency_runs))?;

    // Twenty 2.3s and twenty 2.4s: mean 2.35, sample std sqrt(40 * 0.05^2 / 39).
    let mut alternating = peer_sampler(&["--latency-values", "2.3,2.4", "--idle-w", "1.5", "--active-w", "2.0"])?;
    let s = measure(&mut alternating, &arch, &profile, &protocol).map_err(|e| e.to_string())?;
    let std = (40.0 * 0.05f64.powi(2) / 39.0).sqrt();
    ensure(
        within(s.latency_mean_ms, 2.35, 1e-12) && within(s.latency_std_ms, std, 1e-12) && within(s.dynamic_power_w, 0.5, 1e-12),
        format!("alternating peer gave {s:?}"),
    )?;

    let mut short = peer_sampler(&["--fault", "short-samples"])?;
    match measure(&mut short, &arch, &profile, &protocol) {
        Err(e @ Error::InsufficientSamples(_)) if e.to_string().contains("expected 40 latency runs, got 39") => {}
        other => return Err(format!("39-sample reply gave {other:?}")),
    }
    let mut negative = peer_sampler(&["--fault", "negative-power"])?;
    match measure(&mut negative, &arch, &profile, &protocol) {
        Err(Error::NegativeDynamicPower(w)) if within(w, -0.2, 1e-9) => {}
        other => return Err(format!("negative power reply gave {other:?}")),
    }
    Ok(format!("(2.35, 0, 2.08) and (2.35, {std:.5}, 0.50) reproduced; 39 samples and -0.20 W rejected"))
}

fn pareto_oracle() -> Outcome {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let points: Vec<[f64; 3]> = (0..200)
        .map(|_| {
            [
                f64::from(rng.random_range(900..1000u32)) / 10.0,
                f64::from(rng.random_range(1..60u32)) / 10.0,
                f64::from(rng.random_range(1..30u32)) / 10.0,
            ]
        })
        .collect();
    let dominates = |a: &[f64; 3], b: &[f64; 3]| {
        a[0] >= b[0] && a[1] <= b[1] && a[2] <= b[2] && (a[0] > b[0] || a[1] < b[1] || a[2] < b[2])
    };
    let oracle: Vec<usize> = (0..points.len())
        .filter(|&i| !(0..points.len()).any(|j| dominates(&points[j], &points[i])))
        .collect();
    let front = pareto_indices(&points);
    ensure(front == oracle, format!("front {front:?} vs oracle {oracle:?}"))?;
    Ok(format!("{} of 200 records on the front, identical to the pairwise oracle", front.len()))
}

fn surrogate_contract() -> Outcome {
    let space = SearchSpace::table1();
    let surrogate = Surrogate::new(space.clone(), 42);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut lo, mut hi, mut gap) = (f64::MAX, f64::MIN, 0.0);
    for _ in 0..1000 {
        let c = space.sample_uniform(&mut rng);
        let fp32 = surrogate.surrogate_accuracy(&c, Precision::Fp32).map_err(|e| e.to_string())?.accuracy_pct;
        let fp16 = surrogate.surrogate_accuracy(&c, Precision::Fp16).map_err(|e| e.to_string())?.accuracy_pct;
        ensure((88.32..=99.49).contains(&fp32) && (88.32..=99.49).contains(&fp16), format!("{c}: {fp32} / {fp16}"))?;
        let again = surrogate.surrogate_accuracy(&c, Precision::Fp32).map_err(|e| e.to_string())?.accuracy_pct;
        ensure(again.to_bits() == fp32.to_bits(), format!("{c}: repeated call differs"))?;
        let fresh = Surrogate::new(space.clone(), 42).base_accuracy(&c).map_err(|e| e.to_string())?;
        ensure(fresh.to_bits() == fp32.to_bits(), format!("{c}: fresh surrogate differs"))?;
        lo = f64::min(lo, fp32);
        hi = f64::max(hi, fp32);
        gap += fp32 - fp16;
    }
    let gap = gap / 1000.0;
    ensure(within(gap, 3.43, 0.01), format!("mean fp32-fp16 gap {gap:.4}"))?;
    Ok(format!("range [{lo:.2}, {hi:.2}], mean fp16 gap {gap:.3}, bit-exact repeats"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("accuracy/PDP arithmetic", accuracy_per_pdp_arithmetic),
        ("ratio sheet from published fixture", ratio_sheet_from_fixture),
        ("search-space cardinality", cardinality),
        ("architecture layer-walk oracle", architecture_oracle),
        ("weighted layer counts", layer_counts),
        ("TPE beats random search", tpe_superiority),
        ("end-to-end determinism", end_to_end_determinism),
        ("stage-1 brute-force equivalence", stage1_brute_force),
        ("measurement protocol conformance", measurement_protocol),
        ("Pareto front oracle", pareto_oracle),
        ("surrogate contract", surrogate_contract),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
