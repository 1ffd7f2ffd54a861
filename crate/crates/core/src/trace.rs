//! Event logs, course calendars and the time bookkeeping built on them.
//!
//! Everything downstream works on [`RawEvent`]s that have been validated
//! against a [`CourseConfig`]. Timestamps are UTC throughout; week 1 starts at
//! 00:00 UTC on the course start date.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inactivity that separates two sessions. A gap must be strictly longer.
pub const SESSION_GAP: Duration = Duration::minutes(90);
/// Events may precede the course start by this much.
pub const LEAD_IN: Duration = Duration::days(7);
/// Events may trail the last course week by this much.
pub const TRAIL_OUT: Duration = Duration::days(28);
/// Length of the after-deadline window.
pub const AFTER_DEADLINE: Duration = Duration::days(7);

pub const EVENT_LOG_HEADER: &str = "student_id,timestamp,kind,object_id,task_class,correct,points";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {timestamp} outside the allowed course span")]
    Range { line: u64, timestamp: DateTime<Utc> },
    #[error("line {line}: unknown {field} `{value}`")]
    Enum { line: u64, field: &'static str, value: String },
    #[error("instant {0} lies outside the course weeks")]
    OutOfSpan(DateTime<Utc>),
    #[error("object `{object}` does not belong to assignment `{assignment}`")]
    Lookup { object: String, assignment: String },
    #[error("invalid course config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Submission,
    PageView,
    SlideDownload,
    ForumClick,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Submission => "submission",
            EventKind::PageView => "page_view",
            EventKind::SlideDownload => "slide_download",
            EventKind::ForumClick => "forum_click",
        }
    }

    /// Submissions and page views refer to practice material and carry a task class.
    pub fn is_task_event(self) -> bool {
        matches!(self, EventKind::Submission | EventKind::PageView)
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s {
            "submission" => EventKind::Submission,
            "page_view" => EventKind::PageView,
            "slide_download" => EventKind::SlideDownload,
            "forum_click" => EventKind::ForumClick,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskClass {
    DigitalIncentivized,
    DigitalNonincentivized,
    Paper,
}

impl TaskClass {
    pub const ALL: [TaskClass; 3] = [
        TaskClass::DigitalIncentivized,
        TaskClass::DigitalNonincentivized,
        TaskClass::Paper,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::DigitalIncentivized => "digital_incentivized",
            TaskClass::DigitalNonincentivized => "digital_nonincentivized",
            TaskClass::Paper => "paper",
        }
    }

    /// Incentivized material runs on one- or two-week completion windows.
    pub fn is_incentivized(self) -> bool {
        !matches!(self, TaskClass::DigitalNonincentivized)
    }
}

impl FromStr for TaskClass {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s {
            "digital_incentivized" => TaskClass::DigitalIncentivized,
            "digital_nonincentivized" => TaskClass::DigitalNonincentivized,
            "paper" => TaskClass::Paper,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub object_id: String,
    pub task_class: Option<TaskClass>,
    pub correct: Option<bool>,
    pub points: Option<f64>,
}

impl RawEvent {
    /// Page part of the object id. Task ids are written `page#k`.
    pub fn page_id(&self) -> &str {
        split_object_id(&self.object_id).0
    }

    pub fn task_index(&self) -> Option<u32> {
        split_object_id(&self.object_id).1
    }

    pub fn is_success(&self) -> bool {
        self.kind == EventKind::Submission && self.correct == Some(true)
    }

    /// One line of the event log, without the trailing newline.
    pub fn to_log_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.student_id,
            format_timestamp(self.timestamp),
            self.kind.as_str(),
            self.object_id,
            self.task_class.map(TaskClass::as_str).unwrap_or(""),
            self.correct.map(|c| if c { "true" } else { "false" }).unwrap_or(""),
            self.points.map(|p| p.to_string()).unwrap_or_default(),
        )
    }
}

/// Splits `page#k` into `("page", Some(k))`; anything else is a bare page id.
pub fn split_object_id(object_id: &str) -> (&str, Option<u32>) {
    match object_id.rsplit_once('#') {
        Some((page, task)) => match task.parse() {
            Ok(k) => (page, Some(k)),
            Err(_) => (object_id, None),
        },
        None => (object_id, None),
    }
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncentivePolicy {
    BonusPoints,
    ExamAdmission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSpec {
    pub assignment_id: String,
    pub task_class: TaskClass,
    pub release_date: NaiveDate,
    pub deadline: DateTime<Utc>,
    pub page_ids: Vec<String>,
    pub task_count_per_page: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_points: Option<f64>,
}

impl AssignmentSpec {
    pub fn release_instant(&self) -> DateTime<Utc> {
        midnight(self.release_date)
    }

    pub fn contains_page(&self, page_id: &str) -> bool {
        self.page_ids.iter().any(|p| p == page_id)
    }

    pub fn tasks_on(&self, page_id: &str) -> u32 {
        self.task_count_per_page.get(page_id).copied().unwrap_or(0)
    }

    pub fn total_tasks(&self) -> u32 {
        self.page_ids.iter().map(|p| self.tasks_on(p)).sum()
    }

    /// Completion window in whole days, rounded up.
    pub fn window_days(&self) -> i64 {
        let secs = (self.deadline - self.release_instant()).num_seconds();
        (secs + 86_399).div_euclid(86_400)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseConfig {
    pub course_id: String,
    pub start_date: NaiveDate,
    pub n_weeks: u32,
    pub incentive_policy: IncentivePolicy,
    pub slide_forum_available: bool,
    #[serde(default)]
    pub assignments: Vec<AssignmentSpec>,
}

fn midnight(d: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

impl CourseConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CourseConfig = toml::from_str(s).map_err(|e| TraceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("course config serializes")
    }

    pub fn start(&self) -> DateTime<Utc> {
        midnight(self.start_date)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start() + Duration::days(7 * i64::from(self.n_weeks))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TraceError::Config(m));
        if self.n_weeks == 0 {
            return bad("n_weeks must be positive".into());
        }
        let mut seen_pages = HashMap::new();
        for a in &self.assignments {
            if a.page_ids.is_empty() {
                return bad(format!("assignment {} has no pages", a.assignment_id));
            }
            if a.deadline <= self.start() || a.deadline >= self.end() {
                return bad(format!("assignment {} deadline outside the course weeks", a.assignment_id));
            }
            if a.release_instant() >= a.deadline {
                return bad(format!("assignment {} released after its deadline", a.assignment_id));
            }
            if a.task_class.is_incentivized() && !matches!(a.window_days(), 7 | 14) {
                return bad(format!(
                    "incentivized assignment {} has a {}-day window (expected 7 or 14)",
                    a.assignment_id,
                    a.window_days()
                ));
            }
            for p in &a.page_ids {
                if a.tasks_on(p) == 0 {
                    return bad(format!("page {p} of {} has no tasks", a.assignment_id));
                }
                if let Some(other) = seen_pages.insert(p.clone(), a.assignment_id.clone()) {
                    return bad(format!("page {p} used by both {other} and {}", a.assignment_id));
                }
            }
            if matches!(a.max_points, Some(m) if !(m >= 0.0)) {
                return bad(format!("assignment {} has negative max_points", a.assignment_id));
            }
        }
        Ok(())
    }

    /// Index of the assignment owning a page.
    pub fn assignment_for_page(&self, page_id: &str) -> Option<&AssignmentSpec> {
        self.assignments.iter().find(|a| a.contains_page(page_id))
    }

    pub fn task_classes(&self) -> Vec<TaskClass> {
        TaskClass::ALL
            .into_iter()
            .filter(|c| self.assignments.iter().any(|a| a.task_class == *c))
            .collect()
    }

    fn accepts(&self, t: DateTime<Utc>) -> bool {
        t >= self.start() - LEAD_IN && t <= self.end() + TRAIL_OUT
    }

    /// Week index for an instant that may lie outside the course weeks.
    pub fn week_clamped(&self, t: DateTime<Utc>) -> u32 {
        let days = (t - self.start()).num_seconds().div_euclid(7 * 86_400);
        (days + 1).clamp(1, i64::from(self.n_weeks)) as u32
    }
}

/// 1-based course week containing `t`; week boundaries belong to the later week.
pub fn assign_week(t: DateTime<Utc>, config: &CourseConfig) -> Result<u32> {
    if t < config.start() || t >= config.end() {
        return Err(TraceError::OutOfSpan(t));
    }
    let week = (t - config.start()).num_seconds().div_euclid(7 * 86_400) + 1;
    Ok(week as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeadlineWindow {
    /// At or before the deadline (`redu1`).
    BeforeDeadline,
    /// Within seven days after the deadline (`redu2`).
    WeekAfterDeadline,
}

impl DeadlineWindow {
    pub const ALL: [DeadlineWindow; 2] = [DeadlineWindow::BeforeDeadline, DeadlineWindow::WeekAfterDeadline];
}

pub fn window_of(event: &RawEvent, spec: &AssignmentSpec) -> Result<Option<DeadlineWindow>> {
    if !spec.contains_page(event.page_id()) {
        return Err(TraceError::Lookup {
            object: event.object_id.clone(),
            assignment: spec.assignment_id.clone(),
        });
    }
    Ok(window_at(event.timestamp, spec.deadline))
}

pub(crate) fn window_at(t: DateTime<Utc>, deadline: DateTime<Utc>) -> Option<DeadlineWindow> {
    if t <= deadline {
        Some(DeadlineWindow::BeforeDeadline)
    } else if t <= deadline + AFTER_DEADLINE {
        Some(DeadlineWindow::WeekAfterDeadline)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub student_id: String,
    pub events: Vec<RawEvent>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Splits one student's time-ordered events wherever the gap exceeds 90 minutes.
pub fn sessionize(events: &[RawEvent]) -> Vec<Session> {
    let mut out = Vec::new();
    let ids = session_ids(events);
    let mut start = 0;
    for i in 1..=events.len() {
        if i == events.len() || ids[i] != ids[start] {
            let chunk = &events[start..i];
            out.push(Session {
                student_id: chunk[0].student_id.clone(),
                events: chunk.to_vec(),
                start: chunk[0].timestamp,
                end: chunk[chunk.len() - 1].timestamp,
            });
            start = i;
        }
    }
    out
}

/// Session index of every event (0-based, nondecreasing).
pub fn session_ids(events: &[RawEvent]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(events.len());
    let mut current = 0;
    for (i, e) in events.iter().enumerate() {
        if i > 0 && e.timestamp - events[i - 1].timestamp > SESSION_GAP {
            current += 1;
        }
        ids.push(current);
    }
    ids
}

pub fn parse_event_log(path: &Path, config: &CourseConfig) -> Result<Vec<RawEvent>> {
    let file = std::fs::File::open(path)?;
    read_event_log(file, config)
}

/// Reads an event log, validates every record and sorts by (student, time).
pub fn read_event_log<R: Read>(reader: R, config: &CourseConfig) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| TraceError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if line == 1 && record.iter().next() == Some("student_id") {
            continue;
        }
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        events.push(parse_record(&record, line, config)?);
    }
    events.sort_by(|a, b| {
        a.student_id
            .cmp(&b.student_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(events)
}

fn parse_record(rec: &csv::StringRecord, line: u64, config: &CourseConfig) -> Result<RawEvent> {
    let parse_err = |message: String| TraceError::Parse { line, message };
    if rec.len() != 7 {
        return Err(parse_err(format!("expected 7 fields, found {}", rec.len())));
    }
    let student_id = rec[0].to_string();
    if student_id.is_empty() {
        return Err(parse_err("empty student_id".into()));
    }
    let timestamp =
        parse_timestamp(&rec[1]).ok_or_else(|| parse_err(format!("bad timestamp `{}`", &rec[1])))?;
    if !config.accepts(timestamp) {
        return Err(TraceError::Range { line, timestamp });
    }
    let kind: EventKind = rec[2].parse().map_err(|_| TraceError::Enum {
        line,
        field: "kind",
        value: rec[2].to_string(),
    })?;
    let object_id = rec[3].to_string();
    if object_id.is_empty() {
        return Err(parse_err("empty object_id".into()));
    }
    let task_class = match &rec[4] {
        "" => None,
        s => Some(s.parse::<TaskClass>().map_err(|_| TraceError::Enum {
            line,
            field: "task_class",
            value: s.to_string(),
        })?),
    };
    if kind.is_task_event() != task_class.is_some() {
        return Err(parse_err(format!(
            "task_class must be {} for kind {}",
            if kind.is_task_event() { "present" } else { "absent" },
            kind.as_str()
        )));
    }
    let correct = match &rec[5] {
        "" => None,
        "true" => Some(true),
        "false" => Some(false),
        s => return Err(parse_err(format!("bad correct flag `{s}`"))),
    };
    if correct.is_some() && kind != EventKind::Submission {
        return Err(parse_err("correct flag on a non-submission".into()));
    }
    let points = match &rec[6] {
        "" => None,
        s => match s.parse::<f64>() {
            Ok(p) if p >= 0.0 && p.is_finite() => Some(p),
            _ => return Err(parse_err(format!("bad points `{s}`"))),
        },
    };
    if points.is_some() && task_class != Some(TaskClass::Paper) {
        return Err(parse_err("points given for a non-paper task".into()));
    }
    Ok(RawEvent { student_id, timestamp, kind, object_id, task_class, correct, points })
}

pub fn write_event_log<W: std::io::Write>(mut w: W, events: &[RawEvent]) -> std::io::Result<()> {
    writeln!(w, "{EVENT_LOG_HEADER}")?;
    for e in events {
        writeln!(w, "{}", e.to_log_line())?;
    }
    Ok(())
}

/// Groups a (student, time)-sorted event list by student.
pub fn group_by_student(events: &[RawEvent]) -> BTreeMap<&str, &[RawEvent]> {
    let mut out = BTreeMap::new();
    let mut start = 0;
    for i in 1..=events.len() {
        if i == events.len() || events[i].student_id != events[start].student_id {
            out.insert(events[start].student_id.as_str(), &events[start..i]);
            start = i;
        }
    }
    out
}

/// Exam grade on the German scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Grade(f64);

pub const GRADE_SCALE: [f64; 12] = [0.7, 1.0, 1.3, 1.7, 2.0, 2.3, 2.7, 3.0, 3.3, 3.7, 4.0, 5.0];

impl Grade {
    pub fn new(value: f64) -> Option<Grade> {
        GRADE_SCALE
            .iter()
            .find(|g| (**g - value).abs() < 1e-9)
            .map(|g| Grade(*g))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

/// Reads `student_id,grade` lines. Grades outside the scale are rejected.
pub fn read_grades<R: Read>(reader: R) -> Result<BTreeMap<String, Grade>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TraceError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if line == 1 && rec.get(0) == Some("student_id") {
            continue;
        }
        if rec.len() != 2 {
            return Err(TraceError::Parse { line, message: "expected student_id,grade".into() });
        }
        let value: f64 = rec[1].parse().map_err(|_| TraceError::Parse {
            line,
            message: format!("bad grade `{}`", &rec[1]),
        })?;
        let grade = Grade::new(value).ok_or_else(|| TraceError::Parse {
            line,
            message: format!("grade {value} is not on the 0.7-5.0 scale"),
        })?;
        out.insert(rec[0].to_string(), grade);
    }
    Ok(out)
}

pub fn write_grades<W: std::io::Write>(mut w: W, grades: &BTreeMap<String, Grade>) -> std::io::Result<()> {
    writeln!(w, "student_id,grade")?;
    for (s, g) in grades {
        writeln!(w, "{s},{g}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn course() -> CourseConfig {
        CourseConfig::from_toml_str(
            r#"
course_id = "demo"
start_date = "2025-10-13"
n_weeks = 12
incentive_policy = "bonus_points"
slide_forum_available = true

[[assignments]]
assignment_id = "A1"
task_class = "digital_incentivized"
release_date = "2025-10-13"
deadline = "2025-10-19T23:59:00Z"
page_ids = ["p1", "p2"]
task_count_per_page = { p1 = 4, p2 = 2 }
"#,
        )
        .unwrap()
    }

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn ev(student: &str, t: &str) -> RawEvent {
        RawEvent {
            student_id: student.into(),
            timestamp: ts(t),
            kind: EventKind::PageView,
            object_id: "p1".into(),
            task_class: Some(TaskClass::DigitalIncentivized),
            correct: None,
            points: None,
        }
    }

    #[test]
    fn parses_and_sorts() {
        let log = "\
s1,2025-10-14T10:00:00Z,page_view,p1,digital_incentivized,,
s1,2025-10-14T09:00:00Z,submission,p1#1,digital_incentivized,true,
s1,2025-10-15T09:00:00Z,forum_click,t7,,,
";
        let events = read_event_log(log.as_bytes(), &course()).unwrap();
        assert_eq!(events.len(), 3);
        assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert_eq!(events[0].task_index(), Some(1));
        assert_eq!(events[0].page_id(), "p1");
    }

    #[test]
    fn interleaved_students_are_grouped() {
        let log = "\
b,2025-10-14T10:00:00Z,forum_click,t,,,
a,2025-10-14T12:00:00Z,forum_click,t,,,
b,2025-10-14T08:00:00Z,forum_click,t,,,
a,2025-10-14T09:00:00Z,forum_click,t,,,
";
        let events = read_event_log(log.as_bytes(), &course()).unwrap();
        let mut oracle: Vec<(String, DateTime<Utc>)> = log
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), ts(f[1]))
            })
            .collect();
        oracle.sort();
        let got: Vec<_> = events.iter().map(|e| (e.student_id.clone(), e.timestamp)).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn missing_task_class_names_line() {
        let log = "s1,2025-10-14T10:00:00Z,submission,p1#1,,true,\n";
        match read_event_log(log.as_bytes(), &course()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_is_skipped_and_errors_count_it() {
        let log = format!("{EVENT_LOG_HEADER}\ns1,2025-10-14T10:00:00Z,click,p1,,,\n");
        match read_event_log(log.as_bytes(), &course()) {
            Err(TraceError::Enum { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "kind");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_timestamp() {
        let log = "s1,2025-09-01T10:00:00Z,forum_click,t,,,\n";
        assert!(matches!(
            read_event_log(log.as_bytes(), &course()),
            Err(TraceError::Range { line: 1, .. })
        ));
    }

    #[test]
    fn points_only_for_paper() {
        let log = "s1,2025-10-14T10:00:00Z,submission,p1#1,digital_incentivized,true,3\n";
        assert!(matches!(read_event_log(log.as_bytes(), &course()), Err(TraceError::Parse { .. })));
    }

    #[test]
    fn sessions_split_on_long_gaps() {
        let evs = vec![
            ev("s", "2025-10-14T10:00:00Z"),
            ev("s", "2025-10-14T10:30:00Z"),
            ev("s", "2025-10-14T13:00:00Z"),
        ];
        let sessions = sessionize(&evs);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].events.len(), 2);
        assert_eq!(sessions[1].start, ts("2025-10-14T13:00:00Z"));
    }

    #[test]
    fn exact_ninety_minutes_stays_in_session() {
        let evs = vec![ev("s", "2025-10-14T10:00:00Z"), ev("s", "2025-10-14T11:30:00Z")];
        assert_eq!(sessionize(&evs).len(), 1);
        let evs = vec![ev("s", "2025-10-14T10:00:00Z"), ev("s", "2025-10-14T11:30:01Z")];
        assert_eq!(sessionize(&evs).len(), 2);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(sessionize(&[ev("s", "2025-10-14T10:00:00Z")]).len(), 1);
        assert!(sessionize(&[]).is_empty());
    }

    #[test]
    fn weeks() {
        let c = course();
        let s = c.start();
        assert_eq!(assign_week(s + Duration::days(3), &c).unwrap(), 1);
        assert_eq!(assign_week(s + Duration::days(7), &c).unwrap(), 2);
        assert_eq!(assign_week(s + Duration::days(83), &c).unwrap(), 12);
        assert!(assign_week(s + Duration::days(84), &c).is_err());
        assert!(assign_week(s - Duration::seconds(1), &c).is_err());
    }

    #[test]
    fn windows() {
        let c = course();
        let a = &c.assignments[0];
        let mut e = ev("s", "2025-10-14T10:00:00Z");
        e.timestamp = a.deadline - Duration::hours(1);
        assert_eq!(window_of(&e, a).unwrap(), Some(DeadlineWindow::BeforeDeadline));
        e.timestamp = a.deadline + Duration::days(2);
        assert_eq!(window_of(&e, a).unwrap(), Some(DeadlineWindow::WeekAfterDeadline));
        e.timestamp = a.deadline + Duration::days(10);
        assert_eq!(window_of(&e, a).unwrap(), None);
        e.object_id = "elsewhere".into();
        assert!(matches!(window_of(&e, a), Err(TraceError::Lookup { .. })));
    }

    #[test]
    fn config_rejects_bad_window() {
        let mut c = course();
        c.assignments[0].deadline = ts("2025-10-23T12:00:00Z");
        assert!(c.validate().is_err());
        c.assignments[0].task_class = TaskClass::DigitalNonincentivized;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let c = course();
        assert_eq!(CourseConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn grades() {
        let g = read_grades("student_id,grade\na,3.7\nb,1.0\n".as_bytes()).unwrap();
        assert_eq!(g["a"].value(), 3.7);
        assert!(read_grades("a,3.5\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sessionize_partitions(gaps in proptest::collection::vec(0i64..400, 0..60)) {
                let base = ts("2025-10-14T00:00:00Z");
                let mut t = base;
                let mut evs = Vec::new();
                for g in &gaps {
                    t += Duration::minutes(*g);
                    let mut e = ev("s", "2025-10-14T00:00:00Z");
                    e.timestamp = t;
                    evs.push(e);
                }
                let sessions = sessionize(&evs);
                let flat: Vec<RawEvent> = sessions.iter().flat_map(|s| s.events.clone()).collect();
                prop_assert_eq!(&flat, &evs);
                let long = gaps.iter().skip(1).filter(|g| **g > 90).count();
                let expected = if evs.is_empty() { 0 } else { 1 + long };
                prop_assert_eq!(sessions.len(), expected);
                for s in &sessions {
                    prop_assert!(s.end >= s.start);
                    for w in s.events.windows(2) {
                        prop_assert!(w[1].timestamp - w[0].timestamp <= SESSION_GAP);
                    }
                }
            }

            #[test]
            fn weeks_monotone(a in 0i64..(84 * 86_400), b in 0i64..(84 * 86_400)) {
                let c = course();
                let (lo, hi) = (a.min(b), a.max(b));
                let wl = assign_week(c.start() + Duration::seconds(lo), &c).unwrap();
                let wh = assign_week(c.start() + Duration::seconds(hi), &c).unwrap();
                prop_assert!(wl <= wh);
                prop_assert!((1..=12).contains(&wl) && (1..=12).contains(&wh));
            }
        }

        #[test]
        fn weeks_surjective() {
            let c = course();
            let mut seen = std::collections::BTreeSet::new();
            for h in 0..(84 * 24) {
                seen.insert(assign_week(c.start() + Duration::hours(h), &c).unwrap());
            }
            assert_eq!(seen.len(), 12);
        }
    }
}
