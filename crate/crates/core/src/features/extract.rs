use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassCell, Family, FeatureError, FeatureId, WindowCell};
use crate::features::ColumnKey;
use crate::matrix::FeatureMatrix;
use crate::trace::{
    self, session_ids, window_at, AssignmentSpec, CourseConfig, DeadlineWindow, EventKind, RawEvent, TaskClass,
    AFTER_DEADLINE,
};

/// How `per4` weights correctly completed pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Per4Rule {
    /// Paper tasks with `max_points`: share of points earned. Otherwise pages weighted by task count.
    #[default]
    PointsOrTaskWeighted,
    /// Always weight completed pages by their task count.
    TaskWeighted,
}

/// What `eng2` measures the lead time from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Eng2Anchor {
    /// First interaction on each page, averaged over touched pages.
    #[default]
    PerPage,
    /// First interaction anywhere in the assignment.
    PerAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub per4_rule: Per4Rule,
    pub eng2_anchor: Eng2Anchor,
    /// Task classes that get performance (`per*`) families.
    pub gradable: Vec<TaskClass>,
    /// Emit a literal copy of `per1` (replication mode).
    pub duplicate_per1: bool,
    pub dwell_cap_minutes: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            per4_rule: Per4Rule::default(),
            eng2_anchor: Eng2Anchor::default(),
            gradable: vec![TaskClass::Paper],
            duplicate_per1: false,
            dwell_cap_minutes: 30.0,
        }
    }
}

/// One student-week, keyed by feature.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyFeatureRow {
    pub student_id: String,
    pub week: u32,
    pub values: BTreeMap<FeatureId, f64>,
}

/// Weekly raw values for every student and week of one course.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyTable {
    pub columns: Vec<FeatureId>,
    pub students: Vec<String>,
    pub n_weeks: u32,
    /// `[student, week - 1, column]`
    pub data: Array3<f64>,
}

impl WeeklyTable {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn value(&self, student: usize, week: u32, feature: &FeatureId) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == feature)?;
        Some(self.data[[student, week as usize - 1, j]])
    }

    pub fn rows(&self) -> impl Iterator<Item = WeeklyFeatureRow> + '_ {
        (0..self.students.len()).flat_map(move |s| {
            (1..=self.n_weeks).map(move |w| WeeklyFeatureRow {
                student_id: self.students[s].clone(),
                week: w,
                values: self
                    .columns
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (*c, self.data[[s, w as usize - 1, j]]))
                    .collect(),
            })
        })
    }

    /// The raw weekly values of a single week as a matrix.
    pub fn week_matrix(&self, week: u32) -> FeatureMatrix {
        let w = week as usize - 1;
        let mut data = Array2::zeros((self.students.len(), self.columns.len()));
        for s in 0..self.students.len() {
            for j in 0..self.columns.len() {
                data[[s, j]] = self.data[[s, w, j]];
            }
        }
        FeatureMatrix::new(
            self.students.clone(),
            self.columns.iter().copied().map(ColumnKey::plain).collect(),
            data,
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "student_id,week")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (s, id) in self.students.iter().enumerate() {
            for week in 0..self.n_weeks as usize {
                write!(w, "{id},{}", week + 1)?;
                for j in 0..self.columns.len() {
                    write!(w, ",{}", self.data[[s, week, j]])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<WeeklyTable, FeatureError> {
        let fmt = |m: String| FeatureError::Format(m);
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
        if header.get(0) != Some("student_id") || header.get(1) != Some("week") {
            return Err(fmt("header must start with student_id,week".into()));
        }
        let columns = header
            .iter()
            .skip(2)
            .map(|h| h.parse::<FeatureId>().map_err(fmt))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows: Vec<(String, u32, Vec<f64>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            let week: u32 = rec[1].parse().map_err(|_| fmt(format!("bad week `{}`", &rec[1])))?;
            let vals = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| fmt(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((rec[0].to_string(), week, vals));
        }
        let n_weeks = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let students: Vec<String> = rows
            .iter()
            .map(|r| r.0.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> = students.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut data = Array3::zeros((students.len(), n_weeks as usize, columns.len()));
        for (s, w, vals) in &rows {
            if *w == 0 {
                return Err(fmt("weeks are 1-based".into()));
            }
            for (j, v) in vals.iter().enumerate() {
                data[[index[s.as_str()], *w as usize - 1, j]] = *v;
            }
        }
        Ok(WeeklyTable { columns, students, n_weeks, data })
    }
}

/// Column set for a course: per task class and window, then course-level families.
pub fn weekly_columns(config: &CourseConfig, options: &FeatureOptions) -> Vec<FeatureId> {
    let mut cols = Vec::new();
    for class in config.task_classes() {
        for window in [WindowCell::Redu1, WindowCell::Redu2] {
            for family in Family::TASK_FAMILIES {
                cols.push(FeatureId::weekly(family, class.into(), window));
            }
            if options.gradable.contains(&class) {
                for family in Family::PERFORMANCE {
                    cols.push(FeatureId::weekly(family, class.into(), window));
                }
                if options.duplicate_per1 {
                    cols.push(FeatureId::weekly(Family::Per1Dup, class.into(), window));
                }
            }
        }
    }
    if config.slide_forum_available {
        for family in Family::COURSE_LEVEL {
            cols.push(FeatureId::course_level(family));
        }
    }
    cols
}

/// Weekly indicator rows for every student in `roster` (students without events get zeros).
///
/// Assignment-bound families land in the week holding the deadline (`redu1`) or
/// the end of the after-deadline window (`redu2`).
pub fn extract_weekly_features(
    events: &[RawEvent],
    roster: &[String],
    config: &CourseConfig,
    options: &FeatureOptions,
) -> Result<WeeklyTable, FeatureError> {
    let columns = weekly_columns(config, options);
    let col_index: HashMap<FeatureId, usize> = columns.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let by_student = trace::group_by_student(events);
    let n_weeks = config.n_weeks as usize;
    let rows = roster
        .par_iter()
        .map(|student| {
            let evs = by_student.get(student.as_str()).copied().unwrap_or(&[]);
            student_rows(evs, config, options, &col_index, n_weeks)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut data = Array3::zeros((roster.len(), n_weeks, columns.len()));
    for (s, block) in rows.into_iter().enumerate() {
        for w in 0..n_weeks {
            for j in 0..columns.len() {
                data[[s, w, j]] = block[[w, j]];
            }
        }
    }
    Ok(WeeklyTable { columns, students: roster.to_vec(), n_weeks: config.n_weeks, data })
}

#[derive(Default)]
struct CellAcc {
    submissions: f64,
    dwell: f64,
    dwell_after_success: f64,
    days: BTreeSet<NaiveDate>,
    sessions: BTreeSet<usize>,
    eng2: Vec<f64>,
    submitted_last_day: bool,
    all_before_last_day: Vec<bool>,
    interacted_early: bool,
    revisited: bool,
    proportions: BTreeMap<Family, Vec<f64>>,
}

struct StudentCtx<'a> {
    events: &'a [RawEvent],
    session: Vec<usize>,
    dwell: Vec<f64>,
}

fn student_rows(
    events: &[RawEvent],
    config: &CourseConfig,
    options: &FeatureOptions,
    col_index: &HashMap<FeatureId, usize>,
    n_weeks: usize,
) -> Result<Array2<f64>, FeatureError> {
    let session = session_ids(events);
    let cap = options.dwell_cap_minutes;
    let dwell: Vec<f64> = (0..events.len())
        .map(|i| {
            if i + 1 < events.len() && session[i + 1] == session[i] {
                let gap = (events[i + 1].timestamp - events[i].timestamp).num_seconds() as f64 / 60.0;
                gap.min(cap)
            } else {
                0.0
            }
        })
        .collect();
    let ctx = StudentCtx { events, session, dwell };

    let mut per_assignment: Vec<Vec<usize>> = vec![Vec::new(); config.assignments.len()];
    let page_owner: HashMap<&str, usize> = config
        .assignments
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.page_ids.iter().map(move |p| (p.as_str(), i)))
        .collect();
    for (i, e) in events.iter().enumerate() {
        if !e.kind.is_task_event() {
            continue;
        }
        let owner = page_owner
            .get(e.page_id())
            .ok_or_else(|| FeatureError::UnknownPage(e.object_id.clone()))?;
        per_assignment[*owner].push(i);
    }

    let mut cells: BTreeMap<(ClassCell, WindowCell, u32), CellAcc> = BTreeMap::new();
    for (a, idx) in config.assignments.iter().zip(&per_assignment) {
        for window in DeadlineWindow::ALL {
            let in_window: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| window_at(events[i].timestamp, a.deadline) == Some(window))
                .collect();
            let anchor = match window {
                DeadlineWindow::BeforeDeadline => a.deadline,
                DeadlineWindow::WeekAfterDeadline => a.deadline + AFTER_DEADLINE,
            };
            let week = config.week_clamped(anchor - Duration::seconds(1));
            let acc = cells.entry((a.task_class.into(), window.into(), week)).or_default();
            accumulate(acc, &ctx, a, &in_window, anchor, options);
        }
    }

    let mut out = Array2::zeros((n_weeks, col_index.len()));
    for ((class, window, week), acc) in &cells {
        let w = *week as usize - 1;
        let mut put = |family: Family, v: f64| {
            if let Some(&j) = col_index.get(&FeatureId::weekly(family, *class, *window)) {
                out[[w, j]] = v;
            }
        };
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        put(Family::Eng1, acc.submissions);
        put(Family::Eng2, mean(&acc.eng2));
        put(Family::Eng3, flag(acc.submitted_last_day));
        put(Family::Eng4, flag(acc.all_before_last_day.iter().any(|b| *b)));
        put(Family::Eng5, acc.dwell);
        put(Family::Eng6, flag(acc.interacted_early));
        put(Family::Eng7, flag(acc.revisited));
        put(Family::Eng8, acc.dwell_after_success);
        put(Family::Eng9, acc.days.len() as f64);
        put(Family::Eng10, acc.sessions.len() as f64);
        for (family, vals) in &acc.proportions {
            put(*family, mean(vals));
        }
    }

    if config.slide_forum_available {
        let slides = col_index[&FeatureId::course_level(Family::LectureClicks)];
        let forum = col_index[&FeatureId::course_level(Family::Forum)];
        for e in events {
            let j = match e.kind {
                EventKind::SlideDownload => slides,
                EventKind::ForumClick => forum,
                _ => continue,
            };
            out[[config.week_clamped(e.timestamp) as usize - 1, j]] += 1.0;
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn days_between(later: DateTime<Utc>, earlier: DateTime<Utc>) -> f64 {
    (later - earlier).num_seconds() as f64 / 86_400.0
}

fn accumulate(
    acc: &mut CellAcc,
    ctx: &StudentCtx<'_>,
    a: &AssignmentSpec,
    idx: &[usize],
    anchor: DateTime<Utc>,
    options: &FeatureOptions,
) {
    let events = ctx.events;
    let last_day = anchor - Duration::hours(24);
    let subs: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| events[i].kind == EventKind::Submission)
        .collect();

    acc.submissions += subs.len() as f64;
    acc.submitted_last_day |= subs.iter().any(|&i| events[i].timestamp > last_day);
    acc.all_before_last_day
        .push(!subs.is_empty() && subs.iter().all(|&i| events[i].timestamp <= last_day));
    acc.interacted_early |= idx.iter().any(|&i| events[i].timestamp <= last_day);
    for &i in idx {
        acc.dwell += ctx.dwell[i];
        acc.days.insert(events[i].timestamp.date_naive());
        acc.sessions.insert(ctx.session[i]);
    }

    // Per-page bookkeeping.
    let mut first_touch: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    let mut first_success: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    let mut solved: BTreeSet<(&str, u32)> = BTreeSet::new();
    let mut submitted: BTreeSet<(&str, u32)> = BTreeSet::new();
    let mut pages_submitted: BTreeSet<&str> = BTreeSet::new();
    let mut best_points: BTreeMap<(&str, u32), f64> = BTreeMap::new();
    for &i in idx {
        let e = &events[i];
        let page = e.page_id();
        first_touch.entry(page).or_insert(e.timestamp);
        if e.kind != EventKind::Submission {
            continue;
        }
        pages_submitted.insert(page);
        let task = e.task_index().filter(|k| (1..=a.tasks_on(page)).contains(k));
        if let Some(k) = task {
            submitted.insert((page, k));
            if e.is_success() {
                solved.insert((page, k));
            }
            if let Some(p) = e.points {
                let best = best_points.entry((page, k)).or_insert(0.0);
                *best = best.max(p);
            }
        }
        if e.is_success() {
            first_success.entry(page).or_insert(e.timestamp);
        }
    }
    for &i in idx {
        let e = &events[i];
        if let Some(t) = first_success.get(e.page_id()) {
            if e.timestamp > *t {
                acc.revisited = true;
                acc.dwell_after_success += ctx.dwell[i];
            }
        }
    }

    let eng2 = if first_touch.is_empty() {
        0.0
    } else {
        match options.eng2_anchor {
            Eng2Anchor::PerPage => {
                let leads: Vec<f64> = first_touch.values().map(|t| days_between(anchor, *t)).collect();
                mean(&leads)
            }
            Eng2Anchor::PerAssignment => {
                let first = first_touch.values().min().expect("nonempty");
                days_between(anchor, *first)
            }
        }
    };
    acc.eng2.push(eng2.max(0.0));

    let total_tasks = f64::from(a.total_tasks());
    let n_pages = a.page_ids.len() as f64;
    let mut push = |family: Family, v: f64| acc.proportions.entry(family).or_default().push(v);
    push(Family::Par1, submitted.len() as f64 / total_tasks);
    push(Family::Par2, pages_submitted.len() as f64 / n_pages);

    if !options.gradable.contains(&a.task_class) {
        return;
    }
    let solved_on = |page: &str| solved.iter().filter(|(p, _)| *p == page).count() as u32;
    let complete_pages: Vec<&String> = a
        .page_ids
        .iter()
        .filter(|p| solved_on(p) == a.tasks_on(p))
        .collect();
    let per1 = complete_pages.len() as f64 / n_pages;
    let per2 = solved.len() as f64 / total_tasks;
    let (started_tasks, started_solved) = a
        .page_ids
        .iter()
        .filter(|p| first_touch.contains_key(p.as_str()))
        .fold((0u32, 0u32), |(t, s), p| (t + a.tasks_on(p), s + solved_on(p)));
    let per3 = if started_tasks == 0 {
        0.0
    } else {
        f64::from(started_solved) / f64::from(started_tasks)
    };
    let task_weighted = complete_pages.iter().map(|p| f64::from(a.tasks_on(p))).sum::<f64>() / total_tasks;
    let per4 = match (options.per4_rule, a.task_class, a.max_points) {
        (Per4Rule::PointsOrTaskWeighted, TaskClass::Paper, Some(max)) if max > 0.0 => {
            (best_points.values().sum::<f64>() / max).clamp(0.0, 1.0)
        }
        _ => task_weighted,
    };
    push(Family::Per1, per1);
    push(Family::Per2, per2);
    push(Family::Per3, per3);
    push(Family::Per4, per4);
    if options.duplicate_per1 {
        push(Family::Per1Dup, per1);
    }
}
