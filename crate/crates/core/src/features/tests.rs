use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};

use super::*;
use crate::trace::{parse_timestamp, CourseConfig, EventKind, RawEvent, TaskClass};

fn course(slides: bool) -> CourseConfig {
    let cfg = format!(
        r#"
course_id = "demo"
start_date = "2025-10-13"
n_weeks = 12
incentive_policy = "bonus_points"
slide_forum_available = {slides}

[[assignments]]
assignment_id = "I2"
task_class = "digital_incentivized"
release_date = "2025-10-20"
deadline = "2025-10-26T23:59:00Z"
page_ids = ["i2a", "i2b"]
task_count_per_page = {{ i2a = 3, i2b = 2 }}

[[assignments]]
assignment_id = "P2"
task_class = "paper"
release_date = "2025-10-20"
deadline = "2025-10-26T23:59:00Z"
page_ids = ["p2"]
task_count_per_page = {{ p2 = 4 }}
max_points = 8.0
"#
    );
    CourseConfig::from_toml_str(&cfg).unwrap()
}

fn ts(s: &str) -> DateTime<Utc> {
    parse_timestamp(s).unwrap()
}

fn sub(student: &str, t: &str, object: &str, class: TaskClass, correct: bool) -> RawEvent {
    RawEvent {
        student_id: student.into(),
        timestamp: ts(t),
        kind: EventKind::Submission,
        object_id: object.into(),
        task_class: Some(class),
        correct: Some(correct),
        points: None,
    }
}

fn view(student: &str, t: &str, page: &str, class: TaskClass) -> RawEvent {
    RawEvent {
        student_id: student.into(),
        timestamp: ts(t),
        kind: EventKind::PageView,
        object_id: page.into(),
        task_class: Some(class),
        correct: None,
        points: None,
    }
}

fn id(f: Family, c: ClassCell, w: WindowCell) -> FeatureId {
    FeatureId::weekly(f, c, w)
}

fn extract(events: &mut Vec<RawEvent>, cfg: &CourseConfig, opts: &FeatureOptions) -> WeeklyTable {
    events.sort_by(|a, b| a.student_id.cmp(&b.student_id).then(a.timestamp.cmp(&b.timestamp)));
    let roster: Vec<String> = events
        .iter()
        .map(|e| e.student_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    extract_weekly_features(events, &roster, cfg, opts).unwrap()
}

const I: TaskClass = TaskClass::DigitalIncentivized;

#[test]
fn counts_submissions_before_deadline() {
    let cfg = course(true);
    let mut evs = vec![
        sub("s", "2025-10-21T10:00:00Z", "i2a#1", I, true),
        sub("s", "2025-10-21T10:05:00Z", "i2a#2", I, false),
        sub("s", "2025-10-21T10:06:00Z", "i2a#2", I, true),
    ];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    assert_eq!(t.value(0, 2, &id(Family::Eng1, ClassCell::I, WindowCell::Redu1)), Some(3.0));
    assert_eq!(t.value(0, 1, &id(Family::Eng1, ClassCell::I, WindowCell::Redu1)), Some(0.0));
    assert_eq!(t.value(0, 2, &id(Family::Eng1, ClassCell::I, WindowCell::Redu2)), Some(0.0));
}

#[test]
fn time_to_deadline_in_days() {
    let cfg = course(true);
    let mut evs = vec![view("s", "2025-10-24T23:59:00Z", "i2a", I)];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    assert_eq!(t.value(0, 2, &id(Family::Eng2, ClassCell::I, WindowCell::Redu1)), Some(2.0));
    // the interaction lies before the last day
    assert_eq!(t.value(0, 2, &id(Family::Eng6, ClassCell::I, WindowCell::Redu1)), Some(1.0));
    assert_eq!(t.value(0, 2, &id(Family::Eng3, ClassCell::I, WindowCell::Redu1)), Some(0.0));
}

#[test]
fn weekdays_and_sessions_match_recount() {
    let cfg = course(true);
    // Monday, Wednesday morning, Wednesday afternoon.
    let mut evs = vec![
        view("s", "2025-10-20T10:00:00Z", "i2a", I),
        sub("s", "2025-10-20T10:10:00Z", "i2a#1", I, true),
        view("s", "2025-10-22T09:00:00Z", "i2b", I),
        view("s", "2025-10-22T15:00:00Z", "i2b", I),
        sub("s", "2025-10-22T15:20:00Z", "i2b#1", I, false),
    ];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());

    let days: BTreeSet<_> = evs.iter().map(|e| e.timestamp.date_naive()).collect();
    let mut sessions = 1;
    for w in evs.windows(2) {
        if w[1].timestamp - w[0].timestamp > Duration::minutes(90) {
            sessions += 1;
        }
    }
    assert_eq!((days.len(), sessions), (2, 3));
    assert_eq!(t.value(0, 2, &id(Family::Eng9, ClassCell::I, WindowCell::Redu1)), Some(days.len() as f64));
    assert_eq!(t.value(0, 2, &id(Family::Eng10, ClassCell::I, WindowCell::Redu1)), Some(sessions as f64));
    // dwell: 10 minutes on Monday, 20 minutes Wednesday afternoon
    assert_eq!(t.value(0, 2, &id(Family::Eng5, ClassCell::I, WindowCell::Redu1)), Some(30.0));
    // both pages submitted, 2 of 5 tasks
    assert_eq!(t.value(0, 2, &id(Family::Par2, ClassCell::I, WindowCell::Redu1)), Some(1.0));
    assert_eq!(t.value(0, 2, &id(Family::Par1, ClassCell::I, WindowCell::Redu1)), Some(0.4));
}

#[test]
fn page_with_three_of_four_correct() {
    let cfg = course(true);
    let p = TaskClass::Paper;
    let mut evs = vec![
        sub("s", "2025-10-23T10:00:00Z", "p2#1", p, true),
        sub("s", "2025-10-23T10:01:00Z", "p2#2", p, true),
        sub("s", "2025-10-23T10:02:00Z", "p2#3", p, false),
        sub("s", "2025-10-23T10:03:00Z", "p2#4", p, true),
    ];
    for (e, pts) in evs.iter_mut().zip([2.0, 2.0, 0.5, 2.0]) {
        e.points = Some(pts);
    }
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    let solved = evs.iter().filter(|e| e.correct == Some(true)).count() as f64;
    let per2 = t.value(0, 2, &id(Family::Per2, ClassCell::P, WindowCell::Redu1)).unwrap();
    assert_eq!(per2, solved / 4.0);
    assert_eq!(per2, 0.75);
    assert_eq!(t.value(0, 2, &id(Family::Per1, ClassCell::P, WindowCell::Redu1)), Some(0.0));
    assert_eq!(t.value(0, 2, &id(Family::Per3, ClassCell::P, WindowCell::Redu1)), Some(0.75));
    assert_eq!(t.value(0, 2, &id(Family::Per4, ClassCell::P, WindowCell::Redu1)), Some(6.5 / 8.0));
    // digital classes are not gradable by default
    assert_eq!(t.value(0, 2, &id(Family::Per2, ClassCell::I, WindowCell::Redu1)), None);
}

#[test]
fn after_deadline_goes_to_redu2_and_late_events_drop() {
    let cfg = course(true);
    let mut evs = vec![
        sub("s", "2025-10-28T10:00:00Z", "i2a#1", I, true),
        sub("s", "2025-11-10T10:00:00Z", "i2a#2", I, true),
    ];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    let total: f64 = (1..=12)
        .map(|w| t.value(0, w, &id(Family::Eng1, ClassCell::I, WindowCell::Redu2)).unwrap())
        .sum();
    assert_eq!(total, 1.0);
    assert_eq!(t.value(0, 3, &id(Family::Eng1, ClassCell::I, WindowCell::Redu2)), Some(1.0));
}

#[test]
fn revisits_after_success() {
    let cfg = course(true);
    let mut evs = vec![
        sub("s", "2025-10-21T10:00:00Z", "i2a#1", I, true),
        view("s", "2025-10-21T10:04:00Z", "i2a", I),
        view("s", "2025-10-21T10:10:00Z", "i2b", I),
    ];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    assert_eq!(t.value(0, 2, &id(Family::Eng7, ClassCell::I, WindowCell::Redu1)), Some(1.0));
    assert_eq!(t.value(0, 2, &id(Family::Eng8, ClassCell::I, WindowCell::Redu1)), Some(6.0));
}

#[test]
fn slide_and_forum_columns_follow_availability() {
    let with = weekly_columns(&course(true), &FeatureOptions::default());
    let without = weekly_columns(&course(false), &FeatureOptions::default());
    assert!(with.contains(&FeatureId::course_level(Family::LectureClicks)));
    assert!(!without.contains(&FeatureId::course_level(Family::LectureClicks)));
    assert!(!without.contains(&FeatureId::course_level(Family::Forum)));
    assert_eq!(with.len(), without.len() + 2);
}

#[test]
fn every_family_once_per_cell() {
    let cols = weekly_columns(&course(true), &FeatureOptions::default());
    let unique: BTreeSet<_> = cols.iter().collect();
    assert_eq!(unique.len(), cols.len());
    for class in [ClassCell::I, ClassCell::P] {
        for window in [WindowCell::Redu1, WindowCell::Redu2] {
            for f in Family::TASK_FAMILIES {
                assert_eq!(cols.iter().filter(|c| **c == id(f, class, window)).count(), 1);
            }
        }
    }
    for window in [WindowCell::Redu1, WindowCell::Redu2] {
        for f in Family::PERFORMANCE {
            assert!(cols.contains(&id(f, ClassCell::P, window)));
            assert!(!cols.contains(&id(f, ClassCell::I, window)));
        }
    }
}

#[test]
fn unknown_page_is_config_error() {
    let cfg = course(true);
    let evs = vec![view("s", "2025-10-21T10:00:00Z", "nowhere", I)];
    let err = extract_weekly_features(&evs, &["s".to_string()], &cfg, &FeatureOptions::default());
    assert!(matches!(err, Err(FeatureError::UnknownPage(_))));
}

#[test]
fn students_without_events_get_zero_rows() {
    let cfg = course(true);
    let t = extract_weekly_features(&[], &["ghost".to_string()], &cfg, &FeatureOptions::default()).unwrap();
    assert_eq!(t.rows().count(), 12);
    assert!(t.data.iter().all(|v| *v == 0.0));
}

#[test]
fn doubling_activity_doubles_counts_only() {
    let cfg = course(true);
    // Morning sessions with a revisit after every success; the copy runs four hours later the same day.
    let mut base = vec![
        view("s", "2025-10-21T08:00:00Z", "i2a", I),
        sub("s", "2025-10-21T08:05:00Z", "i2a#1", I, true),
        view("s", "2025-10-21T08:15:00Z", "i2a", I),
        view("s", "2025-10-23T08:00:00Z", "i2b", I),
        sub("s", "2025-10-23T08:20:00Z", "i2b#2", I, false),
    ];
    let mut slides = view("s", "2025-10-22T08:00:00Z", "x", I);
    slides.kind = EventKind::SlideDownload;
    slides.task_class = None;
    slides.object_id = "slides-3".into();
    base.push(slides);
    let mut doubled = base.clone();
    for e in &base {
        let mut c = e.clone();
        c.timestamp += Duration::hours(4);
        doubled.push(c);
    }
    let opts = FeatureOptions::default();
    let a = extract(&mut base, &cfg, &opts);
    let b = extract(&mut doubled, &cfg, &opts);
    for (j, c) in a.columns.iter().enumerate() {
        for w in 0..12 {
            let (x, y) = (a.data[[0, w, j]], b.data[[0, w, j]]);
            match c.family {
                Family::Eng1 | Family::Eng5 | Family::Eng10 | Family::LectureClicks | Family::Forum => {
                    assert_eq!(y, 2.0 * x, "{c} week {}", w + 1)
                }
                Family::Eng3 | Family::Eng4 | Family::Eng6 | Family::Eng7 | Family::Par1 | Family::Par2 => {
                    assert_eq!(y, x, "{c} week {}", w + 1)
                }
                _ => {}
            }
        }
    }
    assert!(a.data.iter().any(|v| *v > 0.0));
}

#[test]
fn extraction_is_deterministic_bytes() {
    let cfg = course(true);
    let mut evs = vec![
        view("a", "2025-10-21T08:00:00Z", "i2a", I),
        sub("b", "2025-10-22T08:05:00Z", "i2a#1", I, true),
    ];
    let opts = FeatureOptions::default();
    let mut out1 = Vec::new();
    let mut out2 = Vec::new();
    extract(&mut evs, &cfg, &opts).write_csv(&mut out1).unwrap();
    extract(&mut evs, &cfg, &opts).write_csv(&mut out2).unwrap();
    assert_eq!(out1, out2);
    let back = WeeklyTable::read_csv(out1.as_slice()).unwrap();
    assert_eq!(back, extract(&mut evs, &cfg, &opts));
}

#[test]
fn indicator_and_proportion_ranges() {
    let cfg = course(true);
    let mut evs = vec![
        view("s", "2025-10-26T22:00:00Z", "i2a", I),
        sub("s", "2025-10-26T22:30:00Z", "i2a#1", I, true),
        sub("s", "2025-10-26T22:40:00Z", "p2#1", TaskClass::Paper, true),
    ];
    let t = extract(&mut evs, &cfg, &FeatureOptions::default());
    for row in t.rows() {
        for (f, v) in &row.values {
            assert!(v.is_finite());
            match f.family {
                Family::Eng3 | Family::Eng4 | Family::Eng6 | Family::Eng7 => assert!(*v == 0.0 || *v == 1.0),
                Family::Par1 | Family::Par2 | Family::Per1 | Family::Per2 | Family::Per3 | Family::Per4 => {
                    assert!((0.0..=1.0).contains(v))
                }
                Family::Eng2 => assert!(*v >= 0.0),
                _ => {}
            }
        }
    }
    assert_eq!(t.value(0, 2, &id(Family::Eng3, ClassCell::I, WindowCell::Redu1)), Some(1.0));
    assert_eq!(t.value(0, 2, &id(Family::Eng4, ClassCell::I, WindowCell::Redu1)), Some(0.0));
}

#[test]
fn at_risk_labels() {
    assert_eq!(label_grade(3.7).unwrap(), RiskLabel::AtRisk);
    assert_eq!(label_grade(5.0).unwrap(), RiskLabel::AtRisk);
    assert_eq!(label_grade(1.0).unwrap(), RiskLabel::NotAtRisk);
    assert_eq!(label_grade(3.3).unwrap(), RiskLabel::NotAtRisk);
    assert!(matches!(label_grade(3.5), Err(FeatureError::GradeDomain(_))));
    let grades: BTreeMap<String, f64> = [("a".into(), 4.0), ("b".into(), 2.3)].into();
    let labels = label_at_risk(&grades).unwrap();
    assert!(labels["a"].is_at_risk() && !labels["b"].is_at_risk());
}
