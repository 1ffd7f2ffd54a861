use ndarray::s;

use earlywarn::aggregate::Strategy;
use earlywarn::features::FeatureOptions;
use earlywarn::learners::{GridPreset, LearnerKind};
use earlywarn::synthgen::{generate_cohort, CohortSpec, CourseTemplate};
use earlywarn::transfer::{
    importance_report, run_experiment, run_weekly_pipeline, transfer_evaluate, write_results, CourseData,
    ExperimentPlan, MetricReport, TransferError,
};
use earlywarn::tuneval::ThresholdPolicy;

fn course(id: &str, n: usize, prevalence: f64, seed: u64) -> CourseData {
    let spec = CohortSpec::new(id, n, CourseTemplate::Weekly, prevalence, seed);
    CourseData::from_generated(&generate_cohort(&spec).unwrap(), &FeatureOptions::default()).unwrap()
}

fn plan(weeks: Vec<u32>, learners: Vec<LearnerKind>) -> ExperimentPlan {
    let mut p = ExperimentPlan::new("ref", 17);
    p.weeks = weeks;
    p.learners = learners;
    p.strategies = vec![Strategy::Progressive];
    p.grid_preset = GridPreset::Small;
    p.folds = 5;
    p
}

fn csv(rows: &[MetricReport]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn in_sample_rows_ignore_loaded_targets() {
    let courses = [course("ref", 100, 0.3, 1), course("tgt", 100, 0.14, 2)];
    let alone = run_experiment(&courses, &plan(vec![3], vec![LearnerKind::ElasticNet])).unwrap();
    let mut p = plan(vec![3], vec![LearnerKind::ElasticNet]);
    p.targets = vec!["tgt".into()];
    let with = run_experiment(&courses, &p).unwrap();
    let in_sample: Vec<MetricReport> = with.reports.iter().filter(|r| r.target == "ref").cloned().collect();
    assert_eq!(csv(&alone.reports), csv(&in_sample));
    assert_eq!(with.reports.len(), 1 + 2);
    assert_eq!(with.n_cells, 2);
}

#[test]
fn both_policies_share_auc_and_prevalence_sets_flag_count() {
    let reference = course("ref", 120, 0.5, 3);
    let target = course("tgt", 100, 0.14, 4);
    let run = run_weekly_pipeline(&reference, &plan(vec![4], vec![LearnerKind::ElasticNet, LearnerKind::Forest]))
        .unwrap();
    let out = transfer_evaluate("ref", &run.cells, &target, &ThresholdPolicy::ALL);
    assert!(out.failures.is_empty());
    assert_eq!(out.reports.len(), 4);
    for pair in out.reports.chunks(2) {
        assert_eq!(pair[0].learner, pair[1].learner);
        assert_eq!(pair[0].auc.to_bits(), pair[1].auc.to_bits());
        let prevalence = pair.iter().find(|r| r.policy == ThresholdPolicy::PrevalenceTarget).unwrap();
        assert!(prevalence.n_flagged.abs_diff(14) <= 2, "{} flagged", prevalence.n_flagged);
    }
}

#[test]
fn target_without_shared_columns_is_a_cell_failure() {
    let reference = course("ref", 80, 0.4, 5);
    let mut target = course("tgt", 80, 0.4, 6);
    let weekly = &mut target.cohort.weekly;
    weekly.columns.clear();
    weekly.data = weekly.data.slice(s![.., .., 0..0]).to_owned();
    let run = run_weekly_pipeline(&reference, &plan(vec![2], vec![LearnerKind::ElasticNet])).unwrap();
    let out = transfer_evaluate("ref", &run.cells, &target, &ThresholdPolicy::ALL);
    assert!(out.reports.is_empty());
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].message, TransferError::EmptySchema.to_string());
}

#[test]
fn elastic_net_importance_lists_selected_features_only() {
    let reference = course("ref", 150, 0.4, 7);
    let run = run_weekly_pipeline(&reference, &plan(vec![6], vec![LearnerKind::ElasticNet])).unwrap();
    let rows = importance_report("ref", &run.cells);
    let cell = &run.cells[0];
    assert!(rows.iter().all(|r| r.score != 0.0));
    assert!(rows.len() < cell.train.n_cols());
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.rank, i + 1);
    }
}

#[test]
fn negative_kappa_is_written_unclipped() {
    let row = MetricReport {
        reference: "a".into(),
        target: "b".into(),
        week: 1,
        learner: LearnerKind::ElasticNet,
        strategy: Strategy::Progressive,
        policy: ThresholdPolicy::YoudenSource,
        auc: 0.4,
        acc: 0.3,
        sens: 0.2,
        spec: 0.35,
        f1: 0.1,
        kappa: -0.25,
        threshold: 0.5,
        n_flagged: 3,
    };
    let text = csv(&[row]);
    assert!(text.lines().nth(1).unwrap().contains(",-0.25,"), "{text}");
}
