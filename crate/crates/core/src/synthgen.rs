//! Synthetic cohorts: event logs and exam grades driven by two latent traits.
//!
//! Conscientiousness shapes behavior (how much, how early), ability shapes
//! correctness. The exam score mixes realized engagement, realized lead time
//! and ability, so features only see the latents through behavior.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::sigmoid;
use crate::trace::{AssignmentSpec, CourseConfig, EventKind, Grade, IncentivePolicy, RawEvent, TaskClass};

pub const N_WEEKS: u32 = 12;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid cohort spec: {0}")]
    Invalid(String),
    #[error("prevalence {prevalence} leaves an empty class with {n} students")]
    InfeasiblePrevalence { prevalence: f64, n: usize },
    #[error("cohorts cannot be paired: {0}")]
    Incompatible(String),
    #[error("cohort spec: {0}")]
    Parse(String),
}

/// Course layouts after the studied courses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CourseTemplate {
    /// Weekly incentivized and paper assignments with one-week windows.
    Weekly,
    /// Incentivized and paper assignments every other week with two-week windows.
    Biweekly,
}

fn one() -> f64 {
    1.0
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 10, 13).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub course_id: String,
    pub n_students: usize,
    pub template: CourseTemplate,
    /// Target at-risk fraction.
    pub prevalence: f64,
    pub beta_engagement: f64,
    pub beta_timing: f64,
    /// Weight of ability in the exam score; zero gives labels unrelated to behavior.
    #[serde(default = "one")]
    pub beta_ability: f64,
    pub noise_sd: f64,
    #[serde(default = "default_true")]
    pub slide_forum_available: bool,
    #[serde(default = "default_policy")]
    pub incentive_policy: IncentivePolicy,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

fn default_policy() -> IncentivePolicy {
    IncentivePolicy::BonusPoints
}

impl CohortSpec {
    pub fn new(course_id: &str, n_students: usize, template: CourseTemplate, prevalence: f64, seed: u64) -> Self {
        CohortSpec {
            course_id: course_id.to_string(),
            n_students,
            template,
            prevalence,
            beta_engagement: 1.0,
            beta_timing: 1.0,
            beta_ability: 1.0,
            noise_sd: 0.5,
            slide_forum_available: true,
            incentive_policy: IncentivePolicy::BonusPoints,
            start_date: default_start(),
            seed,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SpecError> {
        let spec: CohortSpec = toml::from_str(s).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.course_id.is_empty() || self.course_id.contains([',', '/', '\\']) {
            return Err(SpecError::Invalid(format!("bad course id `{}`", self.course_id)));
        }
        if self.n_students < 2 {
            return Err(SpecError::Invalid("need at least two students".into()));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(SpecError::Invalid(format!("prevalence {} outside (0, 1)", self.prevalence)));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SpecError::Invalid("noise_sd must be nonnegative".into()));
        }
        for b in [self.beta_engagement, self.beta_timing, self.beta_ability] {
            if !b.is_finite() {
                return Err(SpecError::Invalid("effect sizes must be finite".into()));
            }
        }
        let k = self.n_at_risk();
        if k == 0 || k == self.n_students {
            return Err(SpecError::InfeasiblePrevalence { prevalence: self.prevalence, n: self.n_students });
        }
        Ok(())
    }

    pub fn n_at_risk(&self) -> usize {
        (self.prevalence * self.n_students as f64).round() as usize
    }

    pub fn course_config(&self) -> CourseConfig {
        let start = crate::trace::parse_timestamp(&format!("{}T00:00:00Z", self.start_date)).expect("date");
        let mut assignments = Vec::new();
        let mut add = |id: String, class: TaskClass, week: u32, days: i64, pages: Vec<(String, u32)>, max: Option<f64>| {
            let release = start + Duration::days(7 * i64::from(week - 1));
            assignments.push(AssignmentSpec {
                assignment_id: id,
                task_class: class,
                release_date: release.date_naive(),
                deadline: release + Duration::days(days) - Duration::minutes(1),
                page_ids: pages.iter().map(|p| p.0.clone()).collect(),
                task_count_per_page: pages.into_iter().collect(),
                max_points: max,
            });
        };
        for w in 1..N_WEEKS {
            let incentivized_week = match self.template {
                CourseTemplate::Weekly => true,
                CourseTemplate::Biweekly => w % 2 == 1,
            };
            let days = match self.template {
                CourseTemplate::Weekly => 7,
                CourseTemplate::Biweekly => 14,
            };
            if incentivized_week {
                add(
                    format!("I{w}"),
                    TaskClass::DigitalIncentivized,
                    w,
                    days,
                    vec![(format!("i{w}a"), 3), (format!("i{w}b"), 3)],
                    None,
                );
                add(format!("P{w}"), TaskClass::Paper, w, days, vec![(format!("p{w}"), 4)], Some(10.0));
            }
            add(format!("N{w}"), TaskClass::DigitalNonincentivized, w, 7, vec![(format!("n{w}"), 3)], None);
        }
        CourseConfig {
            course_id: self.course_id.clone(),
            start_date: self.start_date,
            n_weeks: N_WEEKS,
            incentive_policy: self.incentive_policy,
            slide_forum_available: self.slide_forum_available,
            assignments,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentStudent {
    pub ability: f64,
    pub conscientiousness: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedCohort {
    pub spec: CohortSpec,
    pub config: CourseConfig,
    /// Sorted by (student, time).
    pub events: Vec<RawEvent>,
    pub grades: BTreeMap<String, Grade>,
    pub students: Vec<String>,
    pub latents: Vec<LatentStudent>,
    pub exam_scores: Vec<f64>,
}

impl GeneratedCohort {
    pub fn grade_values(&self) -> BTreeMap<String, f64> {
        self.grades.iter().map(|(s, g)| (s.clone(), g.value())).collect()
    }

    pub fn realized_prevalence(&self) -> f64 {
        self.grades.values().filter(|g| g.value() >= crate::features::AT_RISK_GRADE - 1e-9).count() as f64
            / self.grades.len() as f64
    }
}

struct StudentTrace {
    events: Vec<RawEvent>,
    submissions: f64,
    lead_days: Option<f64>,
}

fn at_time(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(t.timestamp(), 0).expect("in range")
}

fn submit_base(class: TaskClass) -> f64 {
    match class {
        TaskClass::DigitalIncentivized => 2.0,
        TaskClass::Paper => 1.2,
        TaskClass::DigitalNonincentivized => -0.6,
    }
}

fn simulate_student(
    student: &str,
    latent: LatentStudent,
    config: &CourseConfig,
    rng: &mut ChaCha8Rng,
) -> StudentTrace {
    let c = latent.conscientiousness;
    let theta = latent.ability;
    let mut events = Vec::new();
    let mut submissions = 0.0;
    let mut leads = Vec::new();
    let ev = |t: DateTime<Utc>, kind: EventKind, object: String, class: TaskClass| RawEvent {
        student_id: student.to_string(),
        timestamp: at_time(t),
        kind,
        object_id: object,
        task_class: Some(class),
        correct: None,
        points: None,
    };

    for a in &config.assignments {
        let week = config.week_clamped(a.release_instant()) as f64;
        let release = a.release_instant();
        let window = (a.deadline - release).num_seconds() as f64 / 86_400.0;
        let p_submit = sigmoid(submit_base(a.task_class) + 1.5 * c - 0.08 * (week - 1.0));
        if rng.random::<f64>() >= p_submit {
            if rng.random::<f64>() < 0.3 {
                let t = release + Duration::seconds((rng.random::<f64>() * window * 86_400.0) as i64);
                events.push(ev(t, EventKind::PageView, a.page_ids[0].clone(), a.task_class));
            }
            continue;
        }

        let late = rng.random::<f64>() < sigmoid(-2.5 - c);
        let start = if late {
            a.deadline + Duration::seconds((rng.random_range(0.1..5.5) * 86_400.0) as i64)
        } else {
            let z: f64 = StandardNormal.sample(rng);
            let frac = sigmoid(0.2 + 1.2 * c + 0.6 * z);
            let lead = (frac * window * 0.95).max(0.05);
            a.deadline - Duration::seconds((lead * 86_400.0) as i64)
        };
        // move the first session into daytime without crossing the deadline
        let hour = rng.random_range(8..20);
        let day_start = start.date_naive().and_hms_opt(hour, rng.random_range(0..60), 0).expect("time").and_utc();
        let first = if day_start > release && (late || day_start < a.deadline) { day_start } else { start };
        let lead = (a.deadline - first).num_seconds() as f64 / 86_400.0;
        leads.push(lead);

        let extra = Poisson::new((-0.4 + 0.4 * c).exp()).expect("positive rate").sample(rng) as usize;
        let n_sessions = (1 + extra).min(4);
        let tasks: Vec<(String, u32)> = a
            .page_ids
            .iter()
            .flat_map(|p| (1..=a.tasks_on(p)).map(move |k| (p.clone(), k)))
            .collect();
        let limit = if late { a.deadline + Duration::days(7) } else { a.deadline };
        let mut t = first;
        for s in 0..n_sessions {
            if s > 0 {
                let gap = rng.random_range(0.2..1.6);
                let next = t + Duration::seconds((gap * 86_400.0) as i64);
                if next >= limit - Duration::hours(1) {
                    break;
                }
                t = next;
            }
            let mine: Vec<&(String, u32)> = tasks.iter().skip(s).step_by(n_sessions).collect();
            let mut last_page = String::new();
            for (page, k) in mine {
                if *page != last_page {
                    events.push(ev(t, EventKind::PageView, page.clone(), a.task_class));
                    t += Duration::seconds(rng.random_range(30..240));
                    last_page = page.clone();
                }
                let mut attempts = 0;
                loop {
                    attempts += 1;
                    let correct = rng.random::<f64>() < sigmoid(theta + 0.4);
                    let mut e = ev(t, EventKind::Submission, format!("{page}#{k}"), a.task_class);
                    e.correct = Some(correct);
                    if a.task_class == TaskClass::Paper {
                        let per = a.max_points.unwrap_or(0.0) / a.total_tasks() as f64;
                        let pts = if correct { per } else { per * rng.random_range(0.0..0.5) };
                        e.points = Some((pts * 100.0).round() / 100.0);
                    }
                    events.push(e);
                    submissions += 1.0;
                    t += Duration::seconds(rng.random_range(60..420));
                    if correct {
                        if rng.random::<f64>() < sigmoid(c - 1.0) {
                            events.push(ev(t, EventKind::PageView, page.clone(), a.task_class));
                            t += Duration::seconds(rng.random_range(60..600));
                        }
                        break;
                    }
                    if attempts >= 3 || rng.random::<f64>() > sigmoid(c) {
                        break;
                    }
                }
            }
        }
    }

    if config.slide_forum_available {
        let slides = Poisson::new((0.2 + 0.5 * c).exp()).expect("rate");
        let forum = Poisson::new(0.2 * (0.3 * c).exp()).expect("rate");
        for w in 0..config.n_weeks {
            let week_start = config.start() + Duration::days(7 * i64::from(w));
            for (kind, dist, prefix) in [(EventKind::SlideDownload, &slides, "slides"), (EventKind::ForumClick, &forum, "thread")] {
                let k = dist.sample(rng) as usize;
                for j in 0..k {
                    let t = week_start + Duration::seconds(rng.random_range(0..7 * 86_400));
                    events.push(RawEvent {
                        student_id: student.to_string(),
                        timestamp: t,
                        kind,
                        object_id: format!("{prefix}-{}-{j}", w + 1),
                        task_class: None,
                        correct: None,
                        points: None,
                    });
                }
            }
        }
    }
    events.sort_by_key(|e| e.timestamp);
    let lead_days = if leads.is_empty() { None } else { Some(leads.iter().sum::<f64>() / leads.len() as f64) };
    StudentTrace { events, submissions, lead_days }
}

fn zscores(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Grades by rank of the exam score: the lowest `n_at_risk` scores get 3.7–5.0.
fn grades_from_scores(scores: &[f64], n_at_risk: usize) -> Vec<f64> {
    const FAIL: [f64; 3] = [5.0, 4.0, 3.7];
    const PASS: [f64; 9] = [3.3, 3.0, 2.7, 2.3, 2.0, 1.7, 1.3, 1.0, 0.7];
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b)));
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_at_risk {
            FAIL[rank * FAIL.len() / n_at_risk]
        } else {
            let r = rank - n_at_risk;
            PASS[r * PASS.len() / (n - n_at_risk)]
        };
    }
    out
}

pub fn generate_cohort(spec: &CohortSpec) -> Result<GeneratedCohort, SpecError> {
    spec.validate()?;
    let config = spec.course_config();
    config.validate().map_err(|e| SpecError::Invalid(e.to_string()))?;
    let students: Vec<String> = (0..spec.n_students).map(|i| format!("{}-{i:04}", spec.course_id)).collect();

    let sims: Vec<(LatentStudent, StudentTrace, f64)> = students
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let latent = LatentStudent {
                ability: StandardNormal.sample(&mut rng),
                conscientiousness: StandardNormal.sample(&mut rng),
            };
            let noise: f64 = StandardNormal.sample(&mut rng);
            let trace = simulate_student(s, latent, &config, &mut rng);
            (latent, trace, noise)
        })
        .collect();

    let engagement: Vec<f64> = sims.iter().map(|s| s.1.submissions).collect();
    let worst_lead = sims.iter().filter_map(|s| s.1.lead_days).fold(0.0, f64::min) - 1.0;
    let lead: Vec<f64> = sims.iter().map(|s| s.1.lead_days.unwrap_or(worst_lead)).collect();
    let (ze, zl) = (zscores(&engagement), zscores(&lead));
    let exam_scores: Vec<f64> = sims
        .iter()
        .enumerate()
        .map(|(i, s)| {
            spec.beta_engagement * ze[i] + spec.beta_timing * zl[i] + spec.beta_ability * s.0.ability + spec.noise_sd * s.2
        })
        .collect();
    let grade_values = grades_from_scores(&exam_scores, spec.n_at_risk());
    let grades = students
        .iter()
        .zip(&grade_values)
        .map(|(s, g)| (s.clone(), Grade::new(*g).expect("grade on the scale")))
        .collect();
    let latents = sims.iter().map(|s| s.0).collect();
    let events = sims.into_iter().flat_map(|s| s.1.events).collect();
    Ok(GeneratedCohort { spec: spec.clone(), config, events, grades, students, latents, exam_scores })
}

/// Two cohorts under one latent-to-behavior mapping; specs may differ only in
/// identity, size, prevalence, schedule, feature availability, policy and seed.
pub fn generate_paired_courses(
    a: &CohortSpec,
    b: &CohortSpec,
) -> Result<(GeneratedCohort, GeneratedCohort), SpecError> {
    if a.course_id == b.course_id {
        return Err(SpecError::Incompatible("both courses share an id".into()));
    }
    if a.beta_engagement.signum() != b.beta_engagement.signum()
        || a.beta_timing.signum() != b.beta_timing.signum()
        || a.beta_ability.signum() != b.beta_ability.signum()
    {
        return Err(SpecError::Incompatible("effect directions differ".into()));
    }
    if a.start_date != b.start_date {
        return Err(SpecError::Incompatible("courses must share a calendar".into()));
    }
    Ok((generate_cohort(a)?, generate_cohort(b)?))
}
