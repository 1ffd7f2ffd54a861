//! `earlywarn` command line: simulate, featurize, run, report.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregate::{AggregationSpec, Strategy};
use crate::features::{extract_weekly_features, FeatureOptions};
use crate::learners::{HyperGrid, LearnerKind};
use crate::synthgen::{generate_cohort, CohortSpec};
use crate::trace::{parse_event_log, read_grades, write_event_log, write_grades, CourseConfig, Grade, TraceError};
use crate::transfer::{run_experiment, write_experiment, CourseData, ExperimentPlan};
use crate::tuneval::ThresholdPolicy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_CELLS: i32 = 4;
/// Share of failed cells above which `run` exits with [`EXIT_CELLS`].
pub const MAX_FAILED_FRACTION: f64 = 0.10;

#[derive(Debug, Parser)]
#[command(name = "earlywarn", version, about = "Weekly at-risk prediction from learning-event logs")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort from a spec file.
    Simulate {
        spec: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Weekly features and aggregated matrices for every week and both strategies.
    Featurize {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Grade file whose students form the roster; defaults to students seen in the log.
        #[arg(long)]
        grades: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Tune, evaluate and transfer models.
    Run(RunArgs),
    /// Render AUC trajectories and calibration curves as SVG.
    Report {
        /// Output directory of a previous `run`.
        run: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Course directory holding course.toml, events.csv and grades.csv; repeatable.
    #[arg(long = "course", required = true)]
    pub courses: Vec<PathBuf>,
    /// Course id to train on; defaults to the first course.
    #[arg(long)]
    pub reference: Option<String>,
    /// Comma-separated target course ids; defaults to every other course.
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Week list such as `1-12` or `2,4,6`.
    #[arg(long, default_value = "1-12")]
    pub weeks: String,
    #[arg(long, default_value = "en,rf,gbt")]
    pub learners: String,
    /// progressive, early_reset or both.
    #[arg(long, default_value = "both")]
    pub strategy: String,
    /// youden_source, prevalence_target or both.
    #[arg(long, default_value = "both")]
    pub policy: String,
    #[arg(long, default_value = "paper")]
    pub grid_preset: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Drop the fixed family list before correlation screening.
    #[arg(long)]
    pub replication_screening: bool,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(m: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_INVALID, message: m.to_string() }
    }
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_FAILURE, message: format!("{}: {e}", path.display()) }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        let code = match e {
            TraceError::Io(_) => EXIT_FAILURE,
            TraceError::Config(_) => EXIT_INVALID,
            _ => EXIT_PARSE,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn main_with(cli: Cli) -> i32 {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Simulate { spec, out, seed } => cmd_simulate(&spec, &out, seed).map(|_| EXIT_OK),
        Command::Featurize { events, config, grades, out } => {
            cmd_featurize(&events, &config, grades.as_deref(), &out).map(|_| EXIT_OK)
        }
        Command::Run(args) => cmd_run(&args),
        Command::Report { run, out } => {
            let out = out.unwrap_or_else(|| run.join("report"));
            report::render(&run, &out).map_err(|e| CliError::io(&run, e))?;
            Ok(EXIT_OK)
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

#[derive(Debug, Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config_sha256: String,
    inputs: Vec<InputFile>,
    config: T,
}

/// Writes `manifest.json` through a temporary file and a rename.
fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &'static str,
    seed: u64,
    inputs: &[&Path],
    config: T,
) -> CliResult<()> {
    let config_json = serde_json::to_string(&config).map_err(CliError::invalid)?;
    let inputs = inputs
        .iter()
        .map(|p| Ok(InputFile { path: p.display().to_string(), sha256: file_hash(p)? }))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config_sha256: sha256_hex(config_json.as_bytes()),
        inputs,
        config,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(CliError::invalid)?;
    let tmp = dir.join(".manifest.json.tmp");
    let path = dir.join("manifest.json");
    fs::write(&tmp, body + "\n").map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> CliResult<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn cmd_simulate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let mut spec = CohortSpec::from_toml_str(&text).map_err(CliError::invalid)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(CliError::invalid)?;
    let cohort = generate_cohort(&spec).map_err(CliError::invalid)?;
    create_dir(out)?;
    write_manifest(out, "simulate", spec.seed, &[spec_path], &spec)?;

    let events = out.join("events.csv");
    let mut w = create_file(&events)?;
    write_event_log(&mut w, &cohort.events).and_then(|_| w.flush()).map_err(|e| CliError::io(&events, e))?;
    let grades: BTreeMap<String, Grade> = cohort
        .grade_values()
        .into_iter()
        .map(|(k, v)| (k, Grade::new(v).expect("generated grades lie on the scale")))
        .collect();
    let gpath = out.join("grades.csv");
    let mut w = create_file(&gpath)?;
    write_grades(&mut w, &grades).and_then(|_| w.flush()).map_err(|e| CliError::io(&gpath, e))?;
    let cpath = out.join("course.toml");
    fs::write(&cpath, cohort.config.to_toml_string()).map_err(|e| CliError::io(&cpath, e))?;
    let spath = out.join("cohort.toml");
    fs::write(&spath, spec.to_toml_string()).map_err(|e| CliError::io(&spath, e))?;
    log::info!(
        "{}: {} students, {} events, at-risk fraction {:.3}",
        spec.course_id,
        cohort.students.len(),
        cohort.events.len(),
        cohort.realized_prevalence()
    );
    Ok(())
}

fn load_grades(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let g = read_grades(f).map_err(with_path(path))?;
    Ok(g.into_iter().map(|(k, v)| (k, v.value())).collect())
}

fn with_path(path: &Path) -> impl Fn(TraceError) -> CliError + '_ {
    move |e| {
        let CliError { code, message } = CliError::from(e);
        CliError { code, message: format!("{}: {message}", path.display()) }
    }
}

pub fn cmd_featurize(events: &Path, config: &Path, grades: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = CourseConfig::load(config).map_err(with_path(config))?;
    let log = parse_event_log(events, &cfg).map_err(with_path(events))?;
    let roster: Vec<String> = match grades {
        Some(g) => load_grades(g)?.into_keys().collect(),
        None => {
            let mut r: Vec<String> = log.iter().map(|e| e.student_id.clone()).collect();
            r.sort();
            r.dedup();
            r
        }
    };
    if log.is_empty() {
        log::warn!("{}: event log is empty; all features are zero", events.display());
    }
    let options = FeatureOptions::default();
    let weekly = extract_weekly_features(&log, &roster, &cfg, &options).map_err(CliError::invalid)?;
    create_dir(&out.join("matrices"))?;
    let mut inputs = vec![events, config];
    if let Some(g) = grades {
        inputs.push(g);
    }
    write_manifest(out, "featurize", 0, &inputs, &options)?;
    let wpath = out.join("weekly.csv");
    let mut w = create_file(&wpath)?;
    weekly.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&wpath, e))?;
    for strategy in [Strategy::Progressive, Strategy::EarlyReset] {
        for week in 1..=weekly.n_weeks {
            let m = AggregationSpec::new(strategy, week).apply(&weekly).map_err(CliError::invalid)?.matrix;
            let p = out.join("matrices").join(format!("{}_w{week:02}.csv", strategy.as_str()));
            let mut w = create_file(&p)?;
            m.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&p, e))?;
        }
    }
    Ok(())
}

pub fn parse_weeks(s: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad week list `{s}`");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() || out[0] == 0 {
        return Err(format!("bad week list `{s}`"));
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr<Err = String>>(s: &str, all: &[T]) -> Result<Vec<T>, String>
where
    T: Copy + PartialEq,
{
    if s == "both" || s == "all" {
        return Ok(all.to_vec());
    }
    let mut out: Vec<T> = Vec::new();
    for p in s.split(',').map(str::trim) {
        let v = p.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    plan: &'a ExperimentPlan,
    grid: HyperGrid,
    mtry_rule: &'static str,
}

pub fn build_plan(args: &RunArgs, courses: &[CourseData]) -> Result<ExperimentPlan, String> {
    let reference = match &args.reference {
        Some(r) => r.clone(),
        None => courses.first().map(|c| c.name.clone()).ok_or("no course given")?,
    };
    let targets = match &args.targets {
        Some(t) => t.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => courses.iter().map(|c| c.name.clone()).filter(|n| *n != reference).collect(),
    };
    let mut plan = ExperimentPlan::new(&reference, args.seed);
    plan.targets = targets;
    plan.weeks = parse_weeks(&args.weeks)?;
    plan.learners = parse_list(&args.learners, &LearnerKind::ALL)?;
    plan.strategies = parse_list(&args.strategy, &[Strategy::Progressive, Strategy::EarlyReset])?;
    plan.policies = parse_list(&args.policy, &ThresholdPolicy::ALL)?;
    plan.grid_preset = args.grid_preset.parse()?;
    plan.folds = args.folds;
    plan.replication_screening = args.replication_screening;
    for name in std::iter::once(&plan.reference).chain(&plan.targets) {
        if !courses.iter().any(|c| &c.name == name) {
            return Err(format!("unknown course `{name}`"));
        }
    }
    if let Some(w) = plan.weeks.iter().find(|w| courses.iter().any(|c| **w > c.config.n_weeks)) {
        return Err(format!("week {w} exceeds a course's length"));
    }
    plan.validate().map_err(|e| e.to_string())?;
    Ok(plan)
}

pub fn load_course(dir: &Path) -> CliResult<(CourseData, Vec<PathBuf>)> {
    let config = dir.join("course.toml");
    let events = dir.join("events.csv");
    let grades = dir.join("grades.csv");
    let cfg = CourseConfig::load(&config).map_err(with_path(&config))?;
    let log = parse_event_log(&events, &cfg).map_err(with_path(&events))?;
    let g = load_grades(&grades)?;
    let course =
        CourseData::from_events(cfg, &log, &g, &FeatureOptions::default()).map_err(CliError::invalid)?;
    Ok((course, vec![config, events, grades]))
}

pub fn cmd_run(args: &RunArgs) -> CliResult<i32> {
    let mut courses = Vec::new();
    let mut inputs = Vec::new();
    for dir in &args.courses {
        let (c, files) = load_course(dir)?;
        if courses.iter().any(|o: &CourseData| o.name == c.name) {
            return Err(CliError::invalid(format!("course id `{}` given twice", c.name)));
        }
        courses.push(c);
        inputs.extend(files);
    }
    let plan = build_plan(args, &courses).map_err(CliError::invalid)?;
    create_dir(&args.out)?;
    let grid = HyperGrid::new(plan.grid_preset, 0);
    let manifest = RunManifest { plan: &plan, grid, mtry_rule: "per cell from the screened predictor count" };
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&args.out, "run", plan.seed, &input_refs, &manifest)?;

    let result = run_experiment(&courses, &plan).map_err(CliError::invalid)?;
    write_experiment(&args.out, &result).map_err(|e| CliError::io(&args.out, e))?;
    let models = args.out.join("models");
    create_dir(&models)?;
    for cell in &result.cells {
        let p = models.join(format!("w{:02}__{}__{}.json", cell.week, cell.learner, cell.strategy.as_str()));
        let json = cell.model.to_json();
        fs::write(&p, json).map_err(|e| CliError::io(&p, e))?;
    }
    let frac = result.failure_fraction();
    if frac > 0.0 {
        log::warn!("{} of {} cells failed; see failures.csv", result.failures.len(), result.n_cells);
    }
    Ok(if frac > MAX_FAILED_FRACTION { EXIT_CELLS } else { EXIT_OK })
}
