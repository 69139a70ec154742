//! `edgenas` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let mut stdout = std::io::stdout().lock();
        if let Err(e) = writeln!(stdout, $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            panic!("failed writing to stdout: {e}");
        }
    }};
}

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use edgenas_core::devices::{fit_profile, load_profiles, FitObservation};
use edgenas_core::evaluators::{EvaluatorSpec, ExternalEvaluator};
use edgenas_core::pipeline::{stage1, stage2, stage3, DeviceSet};
use edgenas_core::published::calibrate_profiles;
use edgenas_core::reporting::{write_reports, ClaimStatus, ReportFormat};
use edgenas_core::{
    build_architecture, run_pipeline, shipped_profiles, AccuracyEvaluator, Configuration, DeviceProfile, Error,
    MeasurementProtocol, Measurer, PipelineSettings, Precision, PublishedTables, RankedSet, Report, SearchSpace,
    StageContext, Surrogate, TpeSettings, TrialLog, TrialRecord,
};

const DEFAULT_SPACE: &str = include_str!("../data/table1.json");
const DEFAULT_SURROGATE_SEED: u64 = 42;
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "edgenas", version, about = "Hardware-aware hierarchical CNN search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the search space.
    #[command(subcommand)]
    Space(SpaceCommand),
    /// Inspect compiled architectures.
    #[command(subcommand)]
    Arch(ArchCommand),
    /// Stage 1: optimize accuracy and keep the best models.
    Search(RunArgs),
    /// Stage 2: measure latency on every device and keep the best per device.
    Stage2(StageArgs),
    /// Stage 3: measure power and pick each device's winner.
    Stage3(StageArgs),
    /// All three stages.
    Pipeline(RunArgs),
    /// Summary tables, ratio checks and Pareto fronts.
    Report(ReportArgs),
    /// Fit a device profile from measurements.
    FitProfile(FitArgs),
    /// Device profiles.
    #[command(subcommand)]
    Devices(DevicesCommand),
}

#[derive(Subcommand)]
enum SpaceCommand {
    /// Number of configurations.
    Count(SpaceArgs),
    /// Configurations in canonical order, one JSON object per line.
    Enumerate {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Uniformly drawn configurations, one JSON object per line.
    Sample {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct SpaceArgs {
    /// Space definition; the built-in grid when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ArchCommand {
    /// Layer-by-layer shapes, parameters and MACs of one configuration.
    Describe {
        #[arg(long)]
        config: PathBuf,
        /// Also check grid membership against this space.
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Run configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    space: Option<PathBuf>,
    /// `surrogate` or `exec:CMD`.
    #[arg(long)]
    evaluator: Option<String>,
    /// Directory of device profiles; the shipped profiles when omitted.
    #[arg(long)]
    devices: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    keep1: Option<usize>,
    #[arg(long)]
    keep2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    surrogate_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    warmup_runs: Option<usize>,
    /// `simulated` or `exec:CMD`; `{device}` in CMD becomes the profile name.
    #[arg(long)]
    measurer: Option<String>,
    /// Relative noise of simulated samples.
    #[arg(long)]
    jitter: Option<f64>,
    /// Seconds to wait for each peer response.
    #[arg(long)]
    timeout_s: Option<u64>,
    #[arg(long)]
    no_timestamps: bool,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Previous stage output; defaults to the file in --out.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trial log written by `pipeline`; the published reference values when omitted.
    #[arg(long)]
    trials: Option<PathBuf>,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Any of csv, json, md; repeat or comma-separate. All when omitted.
    #[arg(long, value_delimiter = ',')]
    format: Vec<String>,
}

#[derive(Args)]
struct FitArgs {
    /// JSON array of {"config", "latency_ms", "dynamic_power_w"} objects.
    #[arg(long, conflicts_with = "published")]
    observations: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    precision: Option<String>,
    /// Refit all shipped profiles from the bundled published tables.
    #[arg(long)]
    published: bool,
    #[arg(long)]
    space: Option<PathBuf>,
    /// Output file (single fit) or directory (published refit).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DevicesCommand {
    List {
        #[arg(long)]
        devices: Option<PathBuf>,
        /// `table` or `json`.
        #[arg(long, default_value = "table")]
        format: String,
    },
}

/// Optional settings file for the run commands.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    space: Option<PathBuf>,
    evaluator: Option<String>,
    devices: Option<PathBuf>,
    keep1: Option<usize>,
    keep2: Option<usize>,
    seed: Option<u64>,
    surrogate_seed: Option<u64>,
    out: Option<PathBuf>,
    measurer: Option<String>,
    jitter: Option<f64>,
    warmup_runs: Option<usize>,
    timeout_s: Option<u64>,
    optimizer: Option<TpeSettings>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() || matches!(e, Error::Json(_)) {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_input<T>(path: &Path, parse: impl FnOnce(&str) -> edgenas_core::Result<T>) -> CliResult<T> {
    parse(&read_input(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_space(path: Option<&Path>) -> CliResult<SearchSpace> {
    match path {
        Some(p) => parse_input(p, SearchSpace::from_json),
        None => Ok(SearchSpace::from_json(DEFAULT_SPACE)?),
    }
}

fn load_devices(dir: Option<&Path>) -> CliResult<Vec<DeviceProfile>> {
    match dir {
        Some(d) => load_profiles(d).map_err(|e| invalid(format!("{}: {e}", d.display()))),
        None => Ok(shipped_profiles()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Everything a run command needs, checked before any work starts.
struct Run {
    space: SearchSpace,
    evaluator: EvaluatorSpec,
    surrogate_seed: u64,
    devices: Vec<DeviceProfile>,
    measurer: Measurer,
    settings: PipelineSettings,
    seed: u64,
    out: PathBuf,
    timestamps: bool,
    timeout: Duration,
}

impl Run {
    fn prepare(args: &RunArgs) -> CliResult<Self> {
        let (file, base) = match &args.config {
            Some(p) => {
                let cfg: RunConfig =
                    serde_json::from_str(&read_input(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        // Paths inside a config file are relative to that file.
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let space = load_space(args.space.clone().or(file.space.map(rel)).as_deref())?;
        let evaluator: EvaluatorSpec = args
            .evaluator
            .clone()
            .or(file.evaluator)
            .unwrap_or_else(|| "surrogate".into())
            .parse()?;
        let devices = load_devices(args.devices.clone().or(file.devices.map(rel)).as_deref())?;
        let mut tpe = file.optimizer.unwrap_or_default();
        let seed = args.seed.or(file.seed).or(file.optimizer.map(|o| o.seed)).unwrap_or(DEFAULT_SEED);
        tpe.seed = seed;
        if let Some(b) = args.budget {
            tpe.budget = b;
        }
        tpe.check()?;
        let timeout = Duration::from_secs(args.timeout_s.or(file.timeout_s).unwrap_or(600));
        let jitter = args.jitter.or(file.jitter).unwrap_or(0.0);
        if !(0.0..1.0).contains(&jitter) {
            return Err(invalid(format!("jitter {jitter} outside [0, 1)")));
        }
        let measurer = match args.measurer.clone().or(file.measurer).as_deref() {
            None | Some("simulated") => Measurer::Simulated { jitter, seed },
            Some(other) => match other.parse::<Measurer>()? {
                Measurer::Exec { command, .. } => Measurer::Exec { command, timeout },
                m => m,
            },
        };
        let protocol = MeasurementProtocol {
            warmup_runs: args.warmup_runs.or(file.warmup_runs).unwrap_or(0),
            ..MeasurementProtocol::default()
        };
        protocol.check()?;
        let settings = PipelineSettings {
            tpe,
            keep1: args.keep1.or(file.keep1).unwrap_or(1000),
            keep2: args.keep2.or(file.keep2).unwrap_or(10),
            protocol,
        };
        if settings.keep1 == 0 || settings.keep2 == 0 {
            return Err(invalid("keep1 and keep2 must be at least 1"));
        }
        let out = args.out.clone().or(file.out.map(rel)).unwrap_or_else(|| "out".into());
        if out.is_file() {
            return Err(invalid(format!("{} is a file, expected a directory", out.display())));
        }
        Ok(Run {
            space,
            evaluator,
            surrogate_seed: args.surrogate_seed.or(file.surrogate_seed).unwrap_or(DEFAULT_SURROGATE_SEED),
            devices,
            measurer,
            settings,
            seed,
            out,
            timestamps: !args.no_timestamps,
            timeout,
        })
    }

    fn evaluator(&self) -> CliResult<Box<dyn AccuracyEvaluator>> {
        Ok(match &self.evaluator {
            EvaluatorSpec::Surrogate => Box::new(Surrogate::new(self.space.clone(), self.surrogate_seed)),
            EvaluatorSpec::Exec(cmd) => Box::new(ExternalEvaluator::spawn(cmd, self.timeout)?),
        })
    }

    /// Creates the output directory and opens (or resumes) the trial log.
    fn open_log(&self) -> CliResult<TrialLog> {
        fs::create_dir_all(&self.out)?;
        let log = TrialLog::open(&self.out.join("trials.jsonl"))?;
        if log.resumable() > 0 {
            log::info!("resuming: {} successful trials already logged", log.resumable());
        }
        Ok(log)
    }

    fn context<'a>(&'a self, log: &'a TrialLog) -> StageContext<'a> {
        StageContext {
            space: &self.space,
            seed: self.seed,
            timestamps: self.timestamps,
            log: Some(log),
        }
    }
}

#[derive(Serialize)]
struct Winner<'a> {
    device: &'a str,
    record: &'a TrialRecord,
}

fn print_sets(sets: &[DeviceSet]) {
    for s in sets {
        let best = s.ranked.best();
        out!(
            "{:<12} kept {:>3}  measured {:>4}  failed {:>3}  best {}",
            s.device,
            s.ranked.len(),
            s.measured,
            s.failed,
            best.map_or_else(|| "-".to_owned(), describe_record)
        );
    }
}

fn describe_record(r: &TrialRecord) -> String {
    let mut s = format!("{}", r.config);
    if let Some(a) = r.accuracy_pct {
        let _ = write!(s, "  acc {a:.2}%");
    }
    if let Some(l) = r.latency_mean_ms {
        let _ = write!(s, "  lat {l:.3} ms");
    }
    if let Some(p) = r.dynamic_power_w {
        let _ = write!(s, "  power {p:.3} W");
    }
    if let Some(f) = r.fitness {
        let _ = write!(s, "  {} {:.3}", f.kind, f.value);
    }
    s
}

fn cmd_space(cmd: SpaceCommand) -> CliResult {
    match cmd {
        SpaceCommand::Count(a) => {
            let space = load_space(a.space.as_deref())?;
            out!("{}", space.cardinality());
            eprintln!(
                "note: conditional count (K3 only with 3+ blocks, K4 only with 4); \
                 counting K3/K4 for every depth gives {}. The often-quoted \">13M\" \
                 total is not reproducible from this grid.",
                space.unconditional_cardinality()
            );
        }
        SpaceCommand::Enumerate { space, offset, limit } => {
            let space = load_space(space.space.as_deref())?;
            let end = limit.map_or(space.cardinality(), |l| offset.saturating_add(l).min(space.cardinality()));
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            for i in offset..end {
                let c = space.config_from_index(i)?;
                emit_config_line(&mut out, i, &c)?;
            }
        }
        SpaceCommand::Sample { space, n, seed } => {
            use rand::SeedableRng;
            let space = load_space(space.space.as_deref())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            for _ in 0..n {
                let c = space.sample_uniform(&mut rng);
                emit_config_line(&mut out, space.index_of(&c)?, &c)?;
            }
        }
    }
    Ok(())
}

fn emit_config_line(out: &mut impl std::io::Write, index: u64, config: &Configuration) -> CliResult {
    #[derive(Serialize)]
    struct Line<'a> {
        index: u64,
        config: &'a Configuration,
    }
    let text = serde_json::to_string(&Line { index, config }).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn cmd_arch(cmd: ArchCommand) -> CliResult {
    let ArchCommand::Describe { config, space } = cmd;
    let c = parse_input(&config, Configuration::from_json)?;
    if let Some(p) = space {
        let space = load_space(Some(&p))?;
        let v = space.validate(&c);
        if !v.is_valid() {
            eprintln!("warning: outside {}: {}", p.display(), v.reasons().join("; "));
        }
    }
    let arch = build_architecture(&c)?;
    out!(
        "{}",
        serde_json::to_string_pretty(&arch).map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}

fn cmd_search(args: &RunArgs) -> CliResult {
    let run = Run::prepare(args)?;
    let mut evaluator = run.evaluator()?;
    let log = run.open_log()?;
    let out = stage1(&run.context(&log), evaluator.as_mut(), run.settings.tpe, run.settings.keep1)?;
    write_json(&run.out.join("stage1.json"), &out.ranked)?;
    out!(
        "stage 1: {} iterations, {} evaluations, kept {}",
        out.history.len(),
        out.evaluated,
        out.ranked.len()
    );
    if let Some(best) = out.ranked.best() {
        out!("best {}", describe_record(best));
    }
    Ok(())
}

fn cmd_stage2(args: &StageArgs) -> CliResult {
    let run = Run::prepare(&args.run)?;
    let input = args.input.clone().unwrap_or_else(|| run.out.join("stage1.json"));
    let candidates: RankedSet = serde_json::from_str(&read_input(&input)?)
        .map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    for r in &candidates.records {
        run.space
            .validate(&r.config)
            .into_result()
            .map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    }
    let log = run.open_log()?;
    let sets = stage2(
        &run.context(&log),
        &candidates,
        &run.devices,
        &run.measurer,
        &run.settings.protocol,
        run.settings.keep2,
    )?;
    write_json(&run.out.join("stage2.json"), &sets)?;
    print_sets(&sets);
    Ok(())
}

fn cmd_stage3(args: &StageArgs) -> CliResult {
    let run = Run::prepare(&args.run)?;
    let input = args.input.clone().unwrap_or_else(|| run.out.join("stage2.json"));
    let sets: Vec<DeviceSet> = serde_json::from_str(&read_input(&input)?)
        .map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    let log = run.open_log()?;
    let finals = stage3(&run.context(&log), &sets, &run.devices, &run.measurer, &run.settings.protocol)?;
    write_json(&run.out.join("stage3.json"), &finals)?;
    print_sets(&finals);
    Ok(())
}

fn cmd_pipeline(args: &RunArgs) -> CliResult {
    let run = Run::prepare(args)?;
    let mut evaluator = run.evaluator()?;
    let log = run.open_log()?;
    let output = run_pipeline(
        &run.context(&log),
        evaluator.as_mut(),
        &run.settings,
        &run.devices,
        &run.measurer,
    )?;
    write_json(&run.out.join("stage1.json"), &output.stage1.ranked)?;
    write_json(&run.out.join("stage2.json"), &output.stage2)?;
    write_json(&run.out.join("stage3.json"), &output.stage3)?;
    let winners: Vec<Winner> = output
        .winners()
        .into_iter()
        .map(|(device, record)| Winner { device, record })
        .collect();
    write_json(&run.out.join("winners.json"), &winners)?;
    out!(
        "stage 1: {} iterations, {} evaluations, kept {}",
        output.stage1.history.len(),
        output.stage1.evaluated,
        output.stage1.ranked.len()
    );
    print_sets(&output.stage3);
    out!("wrote {}", run.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    let formats: Vec<ReportFormat> = if args.format.is_empty() {
        vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown]
    } else {
        args.format
            .iter()
            .map(|f| f.parse())
            .collect::<Result<_, Error>>()?
    };
    let report = match &args.trials {
        Some(path) => {
            let space = load_space(args.space.as_deref())?;
            let records =
                TrialLog::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            Report::from_trials(&records, &space)
        }
        None => Report::from_published(&PublishedTables::load()),
    };
    let written = write_reports(&report, &args.out, &formats)?;
    for c in &report.ratios {
        let status = match c.status {
            ClaimStatus::Pass => "PASS",
            ClaimStatus::Fail => "FAIL",
            ClaimStatus::Unavailable => "N/A ",
        };
        let computed = c.computed.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"));
        out!("{status} {:<58} expected {:>6.2}  computed {computed}", c.label, c.expected);
    }
    for p in written {
        out!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationRow {
    config: Configuration,
    latency_ms: f64,
    #[serde(default)]
    dynamic_power_w: Option<f64>,
}

fn cmd_fit(args: &FitArgs) -> CliResult {
    if args.published {
        let space = load_space(args.space.as_deref())?;
        let profiles = calibrate_profiles(&PublishedTables::load(), &space)?;
        let dir = args.out.clone().unwrap_or_else(|| "profiles".into());
        fs::create_dir_all(&dir)?;
        for p in &profiles {
            let path = dir.join(format!("{}.json", p.name));
            fs::write(&path, p.to_json() + "\n")?;
            print_residuals(p);
        }
        out!("wrote {} profiles to {}", profiles.len(), dir.display());
        return Ok(());
    }
    let path = args
        .observations
        .as_ref()
        .ok_or_else(|| invalid("either --observations or --published is required"))?;
    let name = args.name.clone().ok_or_else(|| invalid("--name is required"))?;
    let precision: Precision = args
        .precision
        .as_deref()
        .ok_or_else(|| invalid("--precision is required"))?
        .parse()?;
    let rows: Vec<ObservationRow> =
        serde_json::from_str(&read_input(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut observations = Vec::with_capacity(rows.len());
    for row in &rows {
        let arch = build_architecture(&row.config)?;
        observations.push(FitObservation::new(&arch, row.latency_ms, row.dynamic_power_w));
    }
    let profile = fit_profile(&observations, precision, &name)?;
    match &args.out {
        Some(out) => {
            fs::write(out, profile.to_json() + "\n")?;
            print_residuals(&profile);
        }
        None => out!("{}", profile.to_json()),
    }
    Ok(())
}

fn print_residuals(p: &DeviceProfile) {
    if let Some(r) = &p.fit_residuals {
        eprintln!(
            "{:<12} latency fit {:?}, max |residual| {:.4} ms; power fit {:?}, max |residual| {:.4} W",
            p.name, r.latency_fit, r.max_abs_latency_ms, r.power_fit, r.max_abs_power_w
        );
    }
}

fn cmd_devices(cmd: DevicesCommand) -> CliResult {
    let DevicesCommand::List { devices, format } = cmd;
    let profiles = load_devices(devices.as_deref())?;
    match format.as_str() {
        "json" => out!(
            "{}",
            serde_json::to_string_pretty(&profiles).map_err(|e| Failure::Runtime(e.to_string()))?
        ),
        "table" => {
            out!(
                "{:<12} {:<6} {:>7} {:>9} {:>12} {:>12} {:>9} {:>7} {:>7} {:>9}",
                "name", "prec", "delta", "fixed_ms", "conv_mac/ms", "fc_mac/ms", "layer_ms", "idle_w", "alpha_w", "beta"
            );
            for p in &profiles {
                let (l, w) = (&p.latency_model, &p.power_model);
                out!(
                    "{:<12} {:<6} {:>7.2} {:>9.4} {:>12.4e} {:>12.4e} {:>9.4} {:>7.3} {:>7.3} {:>9.4}",
                    p.name,
                    p.precision.as_str(),
                    p.accuracy_delta_pct,
                    l.fixed_ms,
                    l.conv_macs_per_ms,
                    l.fc_macs_per_ms,
                    l.per_layer_ms,
                    w.idle_w,
                    w.alpha_w,
                    w.beta_w_per_kmacs_per_ms
                );
            }
        }
        other => return Err(invalid(format!("unknown format `{other}` (table, json)"))),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Space(c) => cmd_space(c),
        Command::Arch(c) => cmd_arch(c),
        Command::Search(a) => cmd_search(&a),
        Command::Stage2(a) => cmd_stage2(&a),
        Command::Stage3(a) => cmd_stage3(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Report(a) => cmd_report(&a),
        Command::FitProfile(a) => cmd_fit(&a),
        Command::Devices(c) => cmd_devices(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDGENAS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
