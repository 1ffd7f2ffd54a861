//! Weekly in-sample experiments on a reference course and their transfer to
//! other courses under both threshold policies.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{AggregationSpec, Strategy};
use crate::calibrate::{apply_platt, calibration_curve, fit_platt, CalibrationCurve, PlattParams};
use crate::derive_seed;
use crate::features::{
    extract_weekly_features, screen_collinear, ColumnKey, DropReport, Family, FeatureOptions, LabeledCohort,
};
use crate::learners::{importance, schema_keys, GridPreset, HyperGrid, HyperParams, LearnerKind, TrainedModel};
use crate::matrix::FeatureMatrix;
use crate::synthgen::GeneratedCohort;
use crate::trace::{CourseConfig, RawEvent};
use crate::tuneval::{
    auc_labels, cross_val_predict, grid_search_cv, prevalence_threshold, stratified_kfold, youden_threshold,
    ConfusionMatrix, ThresholdPolicy,
};

pub const SCREENING_CUTOFF: f64 = 0.90;
pub const DEFAULT_FOLDS: usize = 10;
pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("unknown course `{0}`")]
    UnknownCourse(String),
    #[error("invalid experiment plan: {0}")]
    Plan(String),
    #[error("no feature is shared between the source model and the target course")]
    EmptySchema,
    #[error("no usable features after screening")]
    NoFeatures,
    #[error("{0}")]
    Step(String),
}

fn step<E: std::fmt::Display>(e: E) -> TransferError {
    TransferError::Step(e.to_string())
}

/// One course with weekly features and outcome labels.
#[derive(Debug, Clone)]
pub struct CourseData {
    pub name: String,
    pub config: CourseConfig,
    pub cohort: LabeledCohort,
}

impl CourseData {
    /// Students are the keys of `grades`; their events feed the weekly table.
    pub fn from_events(
        config: CourseConfig,
        events: &[RawEvent],
        grades: &BTreeMap<String, f64>,
        options: &FeatureOptions,
    ) -> Result<Self, TransferError> {
        let roster: Vec<String> = grades.keys().cloned().collect();
        let known: BTreeSet<&str> = roster.iter().map(String::as_str).collect();
        let ungraded: BTreeSet<&str> =
            events.iter().map(|e| e.student_id.as_str()).filter(|s| !known.contains(s)).collect();
        if !ungraded.is_empty() {
            log::warn!("{}: {} students have events but no grade; ignored", config.course_id, ungraded.len());
        }
        let weekly = extract_weekly_features(events, &roster, &config, options).map_err(step)?;
        let cohort = LabeledCohort::new(weekly, grades).map_err(step)?;
        Ok(CourseData { name: config.course_id.clone(), config, cohort })
    }

    pub fn from_generated(c: &GeneratedCohort, options: &FeatureOptions) -> Result<Self, TransferError> {
        CourseData::from_events(c.config.clone(), &c.events, &c.grade_values(), options)
    }

    pub fn prevalence(&self) -> f64 {
        self.cohort.prevalence()
    }

    pub fn matrix(&self, strategy: Strategy, week: u32) -> Result<FeatureMatrix, TransferError> {
        Ok(AggregationSpec::new(strategy, week).apply(&self.cohort.weekly).map_err(step)?.matrix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub reference: String,
    pub targets: Vec<String>,
    pub weeks: Vec<u32>,
    pub learners: Vec<LearnerKind>,
    pub strategies: Vec<Strategy>,
    pub policies: Vec<ThresholdPolicy>,
    pub grid_preset: GridPreset,
    pub folds: usize,
    pub screening_cutoff: f64,
    /// Drop the fixed family list before correlation screening.
    pub replication_screening: bool,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(reference: &str, seed: u64) -> Self {
        ExperimentPlan {
            reference: reference.to_string(),
            targets: Vec::new(),
            weeks: (1..=12).collect(),
            learners: LearnerKind::ALL.to_vec(),
            strategies: vec![Strategy::Progressive, Strategy::EarlyReset],
            policies: ThresholdPolicy::ALL.to_vec(),
            grid_preset: GridPreset::Paper,
            folds: DEFAULT_FOLDS,
            screening_cutoff: SCREENING_CUTOFF,
            replication_screening: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if self.targets.contains(&self.reference) {
            return Err(TransferError::Plan("the reference course cannot also be a target".into()));
        }
        if self.weeks.is_empty() || self.learners.is_empty() || self.strategies.is_empty() {
            return Err(TransferError::Plan("weeks, learners and strategies must be nonempty".into()));
        }
        if self.folds < 2 {
            return Err(TransferError::Plan("need at least two folds".into()));
        }
        Ok(())
    }

    fn forced_exclusions(&self) -> Option<Vec<Family>> {
        self.replication_screening.then(Family::replication_exclusions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub reference: String,
    pub target: String,
    pub week: u32,
    pub learner: LearnerKind,
    pub strategy: Strategy,
    pub policy: ThresholdPolicy,
    pub auc: f64,
    pub acc: f64,
    pub sens: f64,
    pub spec: f64,
    pub f1: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub n_flagged: u64,
}

impl MetricReport {
    fn key(&self) -> (String, String, u32, LearnerKind, Strategy, ThresholdPolicy) {
        (self.reference.clone(), self.target.clone(), self.week, self.learner, self.strategy, self.policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    week: u32,
    strategy: Strategy,
    learner: LearnerKind,
}

impl CellKey {
    fn seed(&self, base: u64) -> u64 {
        let s = match self.strategy {
            Strategy::Progressive => 0,
            Strategy::EarlyReset => 1,
        };
        let l = LearnerKind::ALL.iter().position(|k| *k == self.learner).unwrap_or(0) as u64;
        derive_seed(base, u64::from(self.week) * 100 + s * 10 + l)
    }
}

/// A model tuned and refit on the reference course for one (week, strategy, learner).
#[derive(Debug, Clone)]
pub struct FittedCell {
    pub week: u32,
    pub strategy: Strategy,
    pub learner: LearnerKind,
    /// Operating threshold from the Youden index on the training rows.
    pub model: TrainedModel,
    pub cv_auc: f64,
    pub platt: Option<PlattParams>,
    pub train: FeatureMatrix,
    pub labels: Vec<bool>,
    pub screening: DropReport,
    pub in_sample: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub reference: String,
    pub target: String,
    pub week: u32,
    pub learner: Option<LearnerKind>,
    pub strategy: Strategy,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub source: String,
    pub target: String,
    pub week: u32,
    pub learner: LearnerKind,
    pub strategy: Strategy,
    pub raw: CalibrationCurve,
    pub platt: Option<CalibrationCurve>,
}

#[derive(Debug, Clone, Default)]
pub struct WeeklyRun {
    pub reports: Vec<MetricReport>,
    pub cells: Vec<FittedCell>,
    pub failures: Vec<CellFailure>,
    pub calibration: Vec<CalibrationRecord>,
}

/// Source and target column sets of one transfer cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaAlignment {
    pub shared: Vec<ColumnKey>,
    pub dropped_from_source: Vec<ColumnKey>,
    pub dropped_from_target: Vec<ColumnKey>,
}

impl SchemaAlignment {
    /// `shared` keeps the source order.
    pub fn new(source: &[ColumnKey], target: &[ColumnKey]) -> Self {
        let t: BTreeSet<&ColumnKey> = target.iter().collect();
        let s: BTreeSet<&ColumnKey> = source.iter().collect();
        SchemaAlignment {
            shared: source.iter().filter(|c| t.contains(c)).copied().collect(),
            dropped_from_source: source.iter().filter(|c| !t.contains(c)).copied().collect(),
            dropped_from_target: target.iter().filter(|c| !s.contains(c)).copied().collect(),
        }
    }
}

fn metric_row(
    reference: &str,
    target: &str,
    key: CellKey,
    policy: ThresholdPolicy,
    auc: f64,
    threshold: f64,
    scores: &[f64],
    labels: &[bool],
) -> MetricReport {
    let cm = ConfusionMatrix::from_scores(scores, labels, threshold);
    let m = cm.metrics();
    MetricReport {
        reference: reference.to_string(),
        target: target.to_string(),
        week: key.week,
        learner: key.learner,
        strategy: key.strategy,
        policy,
        auc,
        acc: m.accuracy,
        sens: m.sensitivity,
        spec: m.specificity,
        f1: m.f1,
        kappa: m.kappa,
        threshold,
        n_flagged: cm.flagged(),
    }
}

fn curves(
    raw: &[f64],
    labels: &[bool],
    platt: Option<&PlattParams>,
) -> Option<(CalibrationCurve, Option<CalibrationCurve>)> {
    let bins = CALIBRATION_BINS.min(raw.len());
    let before = calibration_curve(raw, labels, bins).ok()?;
    let after = platt.and_then(|p| calibration_curve(&apply_platt(p, raw), labels, bins).ok());
    Some((before, after))
}

struct Prepared {
    week: u32,
    strategy: Strategy,
    matrix: Result<(FeatureMatrix, DropReport), TransferError>,
}

fn fit_cell(
    course: &CourseData,
    plan: &ExperimentPlan,
    key: CellKey,
    matrix: &FeatureMatrix,
    screening: &DropReport,
) -> Result<FittedCell, TransferError> {
    let labels = course.cohort.labels.clone();
    let n_pos = labels.iter().filter(|l| **l).count();
    let k = plan.folds.min(n_pos).min(labels.len() - n_pos);
    if k < plan.folds {
        log::warn!("{}: only {k} folds possible for week {}", course.name, key.week);
    }
    let fold_seed = derive_seed(plan.seed, u64::from(key.week));
    let folds = stratified_kfold(&labels, k, fold_seed).map_err(step)?;
    let grid = HyperGrid::new(plan.grid_preset, matrix.n_cols());
    let candidates = grid.candidates(key.learner);
    let seed = key.seed(plan.seed);
    let search = grid_search_cv(matrix.view(), &labels, &candidates, &folds, seed).map_err(step)?;
    let mut model = TrainedModel::fit(matrix, &labels, &search.best, seed).map_err(step)?;
    let in_sample = model.predict_proba(matrix).map_err(step)?;
    let (threshold, _) = youden_threshold(&in_sample, &labels).map_err(step)?;
    model.threshold = Some(threshold.value);
    let platt = fit_oof_platt(&search.oof, &labels);
    Ok(FittedCell {
        week: key.week,
        strategy: key.strategy,
        learner: key.learner,
        model,
        cv_auc: search.best_auc,
        platt,
        train: matrix.clone(),
        labels,
        screening: screening.clone(),
        in_sample,
        seed,
    })
}

fn fit_oof_platt(oof: &[f64], labels: &[bool]) -> Option<PlattParams> {
    let (p, y): (Vec<f64>, Vec<bool>) =
        oof.iter().zip(labels).filter(|(p, _)| p.is_finite()).map(|(p, l)| (*p, *l)).unzip();
    match fit_platt(&p, &y) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("Platt scaling skipped: {e}");
            None
        }
    }
}

/// Aggregate, screen, tune, refit and threshold every (week, strategy, learner)
/// cell of the reference course.
pub fn run_weekly_pipeline(course: &CourseData, plan: &ExperimentPlan) -> Result<WeeklyRun, TransferError> {
    plan.validate()?;
    let forced = plan.forced_exclusions();
    let prepared: Vec<Prepared> = plan
        .weeks
        .iter()
        .flat_map(|w| plan.strategies.iter().map(move |s| (*w, *s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(week, strategy)| {
            let matrix = course.matrix(strategy, week).and_then(|m| {
                let (screened, report) =
                    screen_collinear(&m, plan.screening_cutoff, forced.as_deref()).map_err(step)?;
                if screened.n_cols() == 0 {
                    return Err(TransferError::NoFeatures);
                }
                Ok((screened, report))
            });
            Prepared { week, strategy, matrix }
        })
        .collect();

    let jobs: Vec<(usize, LearnerKind)> =
        (0..prepared.len()).flat_map(|i| plan.learners.iter().map(move |l| (i, *l))).collect();
    let outcomes: Vec<(CellKey, Result<FittedCell, TransferError>)> = jobs
        .into_par_iter()
        .map(|(i, learner)| {
            let p = &prepared[i];
            let key = CellKey { week: p.week, strategy: p.strategy, learner };
            let result = match &p.matrix {
                Ok((m, report)) => fit_cell(course, plan, key, m, report),
                Err(e) => Err(TransferError::Step(e.to_string())),
            };
            (key, result)
        })
        .collect();

    let mut run = WeeklyRun::default();
    for (key, result) in outcomes {
        match result {
            Ok(cell) => {
                let labels = &cell.labels;
                let auc = auc_labels(&cell.in_sample, labels).map_err(step)?;
                let t = cell.model.threshold.expect("set during fit");
                run.reports.push(metric_row(
                    &course.name,
                    &course.name,
                    key,
                    ThresholdPolicy::YoudenSource,
                    auc,
                    t,
                    &cell.in_sample,
                    labels,
                ));
                if let Some((raw, platt)) = curves(&cell.in_sample, labels, cell.platt.as_ref()) {
                    run.calibration.push(CalibrationRecord {
                        source: course.name.clone(),
                        target: course.name.clone(),
                        week: key.week,
                        learner: key.learner,
                        strategy: key.strategy,
                        raw,
                        platt,
                    });
                }
                run.cells.push(cell);
            }
            Err(e) => {
                log::warn!("{} week {} {} {}: {e}", course.name, key.week, key.learner, key.strategy.as_str());
                run.failures.push(CellFailure {
                    reference: course.name.clone(),
                    target: course.name.clone(),
                    week: key.week,
                    learner: Some(key.learner),
                    strategy: key.strategy,
                    message: e.to_string(),
                });
            }
        }
    }
    run.reports.sort_by_key(MetricReport::key);
    Ok(run)
}

/// Model actually applied to a target: the reference model, or a refit on the
/// shared columns when the target lacks some of them.
fn aligned_model(
    cell: &FittedCell,
    alignment: &SchemaAlignment,
) -> Result<(TrainedModel, Option<PlattParams>), TransferError> {
    if alignment.shared.is_empty() {
        return Err(TransferError::EmptySchema);
    }
    if alignment.dropped_from_source.is_empty() {
        return Ok((cell.model.clone(), cell.platt));
    }
    let train = cell.train.select(&alignment.shared).map_err(step)?;
    let params = match cell.model.params {
        HyperParams::Forest(mut f) => {
            f.mtry = f.mtry.min(train.n_cols());
            HyperParams::Forest(f)
        }
        p => p,
    };
    let mut model = TrainedModel::fit(&train, &cell.labels, &params, cell.seed).map_err(step)?;
    let fitted = model.predict_proba(&train).map_err(step)?;
    model.threshold = Some(youden_threshold(&fitted, &cell.labels).map_err(step)?.0.value);
    let n_pos = cell.labels.iter().filter(|l| **l).count();
    let k = DEFAULT_FOLDS.min(n_pos).min(cell.labels.len() - n_pos);
    let folds = stratified_kfold(&cell.labels, k, cell.seed).map_err(step)?;
    let oof = cross_val_predict(train.view(), &cell.labels, &params, &folds, cell.seed).map_err(step)?;
    Ok((model, fit_oof_platt(&oof, &cell.labels)))
}

/// Applies every reference cell to `target` under each threshold policy.
pub fn transfer_evaluate(
    reference: &str,
    cells: &[FittedCell],
    target: &CourseData,
    policies: &[ThresholdPolicy],
) -> WeeklyRun {
    let outcomes: Vec<(CellKey, Result<(Vec<MetricReport>, Option<CalibrationRecord>), TransferError>)> = cells
        .par_iter()
        .map(|cell| {
            let key = CellKey { week: cell.week, strategy: cell.strategy, learner: cell.learner };
            let eval = || -> Result<(Vec<MetricReport>, Option<CalibrationRecord>), TransferError> {
                let matrix = target.matrix(cell.strategy, cell.week)?;
                let source_cols = schema_keys(&cell.model).map_err(step)?;
                let alignment = SchemaAlignment::new(&source_cols, &matrix.columns);
                if !alignment.dropped_from_source.is_empty() {
                    log::info!(
                        "{reference}->{} week {}: refit without {:?}",
                        target.name,
                        cell.week,
                        alignment.dropped_from_source.iter().map(ToString::to_string).collect::<Vec<_>>()
                    );
                }
                let (model, platt) = aligned_model(cell, &alignment)?;
                let scores = model.predict_proba(&matrix).map_err(step)?;
                let labels = &target.cohort.labels;
                let auc = auc_labels(&scores, labels).map_err(step)?;
                let mut rows = Vec::new();
                for policy in policies {
                    let t = match policy {
                        ThresholdPolicy::YoudenSource => model.threshold.expect("threshold set"),
                        ThresholdPolicy::PrevalenceTarget => {
                            prevalence_threshold(&scores, target.prevalence()).map_err(step)?.value
                        }
                    };
                    rows.push(metric_row(reference, &target.name, key, *policy, auc, t, &scores, labels));
                }
                let calibration = curves(&scores, labels, platt.as_ref()).map(|(raw, platt)| CalibrationRecord {
                    source: reference.to_string(),
                    target: target.name.clone(),
                    week: cell.week,
                    learner: cell.learner,
                    strategy: cell.strategy,
                    raw,
                    platt,
                });
                Ok((rows, calibration))
            };
            (key, eval())
        })
        .collect();

    let mut run = WeeklyRun::default();
    for (key, result) in outcomes {
        match result {
            Ok((rows, calibration)) => {
                run.reports.extend(rows);
                run.calibration.extend(calibration);
            }
            Err(e) => run.failures.push(CellFailure {
                reference: reference.to_string(),
                target: target.name.clone(),
                week: key.week,
                learner: Some(key.learner),
                strategy: key.strategy,
                message: e.to_string(),
            }),
        }
    }
    run.reports.sort_by_key(MetricReport::key);
    run
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub course: String,
    pub week: u32,
    pub learner: LearnerKind,
    pub strategy: Strategy,
    pub rank: usize,
    pub feature: String,
    pub score: f64,
}

/// Ranked importances per cell; elastic-net tables list only selected features.
pub fn importance_report(course: &str, cells: &[FittedCell]) -> Vec<ImportanceRow> {
    let mut rows: Vec<ImportanceRow> = cells
        .par_iter()
        .flat_map_iter(|cell| {
            let scores = match importance(&cell.model, Some((&cell.train, &cell.labels)), cell.seed) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("importance for week {} {}: {e}", cell.week, cell.learner);
                    Vec::new()
                }
            };
            scores
                .into_iter()
                .filter(|s| cell.learner != LearnerKind::ElasticNet || s.score != 0.0)
                .enumerate()
                .map(|(i, s)| ImportanceRow {
                    course: course.to_string(),
                    week: cell.week,
                    learner: cell.learner,
                    strategy: cell.strategy,
                    rank: i + 1,
                    feature: s.feature,
                    score: s.score,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.week, a.learner, a.strategy, a.rank).cmp(&(b.week, b.learner, b.strategy, b.rank))
    });
    rows
}

/// Full plan: in-sample cells on the reference, then every target.
#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub reports: Vec<MetricReport>,
    pub importance: Vec<ImportanceRow>,
    pub calibration: Vec<CalibrationRecord>,
    pub failures: Vec<CellFailure>,
    pub screening: Vec<(u32, Strategy, DropReport)>,
    pub cells: Vec<FittedCell>,
    pub n_cells: usize,
}

impl ExperimentResult {
    pub fn failure_fraction(&self) -> f64 {
        if self.n_cells == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.n_cells as f64
        }
    }
}

pub fn run_experiment(courses: &[CourseData], plan: &ExperimentPlan) -> Result<ExperimentResult, TransferError> {
    plan.validate()?;
    let find = |name: &str| {
        courses.iter().find(|c| c.name == name).ok_or_else(|| TransferError::UnknownCourse(name.to_string()))
    };
    let reference = find(&plan.reference)?;
    let targets: Vec<&CourseData> = plan.targets.iter().map(|t| find(t)).collect::<Result<_, _>>()?;

    let mut run = run_weekly_pipeline(reference, plan)?;
    let per_course = plan.weeks.len() * plan.strategies.len() * plan.learners.len();
    let mut result = ExperimentResult {
        importance: importance_report(&reference.name, &run.cells),
        n_cells: per_course * (1 + targets.len()),
        ..Default::default()
    };
    let mut seen = BTreeSet::new();
    for c in &run.cells {
        if seen.insert((c.week, c.strategy)) {
            result.screening.push((c.week, c.strategy, c.screening.clone()));
        }
    }
    for target in targets {
        let t = transfer_evaluate(&reference.name, &run.cells, target, &plan.policies);
        run.reports.extend(t.reports);
        run.failures.extend(t.failures);
        run.calibration.extend(t.calibration);
    }
    run.reports.sort_by_key(MetricReport::key);
    result.reports = run.reports;
    result.failures = run.failures;
    result.calibration = run.calibration;
    result.cells = run.cells;
    Ok(result)
}

pub fn write_results<W: Write>(w: W, reports: &[MetricReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_importance<W: Write>(w: W, rows: &[ImportanceRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_failures<W: Write>(w: W, rows: &[CellFailure]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["reference", "target", "week", "learner", "strategy", "message"])?;
    for r in rows {
        out.write_record([
            r.reference.clone(),
            r.target.clone(),
            r.week.to_string(),
            r.learner.map(|l| l.to_string()).unwrap_or_default(),
            r.strategy.as_str().to_string(),
            r.message.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

impl CalibrationRecord {
    pub fn file_name(&self) -> String {
        format!(
            "{}__{}__w{:02}__{}__{}.csv",
            self.source,
            self.target,
            self.week,
            self.learner,
            self.strategy.as_str()
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "stage", "bin", "mean_predicted", "observed", "count", "slope", "intercept", "brier", "log_loss",
        ])?;
        let stages = [("raw", Some(&self.raw)), ("platt", self.platt.as_ref())];
        for (stage, curve) in stages {
            let Some(c) = curve else { continue };
            for (i, b) in c.bins.iter().enumerate() {
                out.write_record([
                    stage.to_string(),
                    (i + 1).to_string(),
                    b.mean_predicted.to_string(),
                    b.observed.to_string(),
                    b.count.to_string(),
                    c.slope.to_string(),
                    c.intercept.to_string(),
                    c.brier.to_string(),
                    c.log_loss.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Writes results.csv, importance.csv, failures.csv and one calibration file per cell.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> std::io::Result<Vec<std::path::PathBuf>> {
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    std::fs::create_dir_all(dir.join("calibration"))?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    write_results(std::fs::File::create(&results)?, &result.reports).map_err(io)?;
    written.push(results);
    let imp = dir.join("importance.csv");
    write_importance(std::fs::File::create(&imp)?, &result.importance).map_err(io)?;
    written.push(imp);
    let fail = dir.join("failures.csv");
    write_failures(std::fs::File::create(&fail)?, &result.failures).map_err(io)?;
    written.push(fail);
    let mut records: Vec<&CalibrationRecord> = result.calibration.iter().collect();
    records.sort_by_key(|r| r.file_name());
    for r in records {
        let p = dir.join("calibration").join(r.file_name());
        r.write_csv(std::fs::File::create(&p)?).map_err(io)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ClassCell, FeatureId, WindowCell};

    fn key(f: Family) -> ColumnKey {
        ColumnKey::plain(FeatureId::weekly(f, ClassCell::I, WindowCell::Redu1))
    }

    #[test]
    fn alignment_is_an_intersection() {
        let s = [key(Family::Eng1), key(Family::Eng2), key(Family::Eng3)];
        let t = [key(Family::Eng3), key(Family::Eng1), key(Family::Eng5)];
        let a = SchemaAlignment::new(&s, &t);
        assert_eq!(a.shared, vec![key(Family::Eng1), key(Family::Eng3)]);
        assert_eq!(a.dropped_from_source, vec![key(Family::Eng2)]);
        assert_eq!(a.dropped_from_target, vec![key(Family::Eng5)]);
        let b = SchemaAlignment::new(&t, &s);
        let sa: BTreeSet<_> = a.shared.iter().collect();
        let sb: BTreeSet<_> = b.shared.iter().collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn plan_rejects_reference_as_target() {
        let mut p = ExperimentPlan::new("a", 0);
        p.targets = vec!["a".into()];
        assert!(p.validate().is_err());
    }
}
