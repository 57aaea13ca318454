mod common;

use common::{coefficients, target, TF};
use sta_core::optimizer::{
    coordinate_scan, score, CoefficientRange, Objective, Refinement, ScanPlan,
};
use sta_core::pulse::{EvenCoefficients, FreeCoefficient, TaskKind};
use sta_core::sweep::SweepOptions;
use sta_core::Error;

fn small_plan() -> ScanPlan {
    ScanPlan {
        order: vec![
            FreeCoefficient::A2,
            FreeCoefficient::A6,
            FreeCoefficient::A8,
        ],
        a2: CoefficientRange::new(-1.2, -1.0, 0.1).unwrap(),
        a6: CoefficientRange::new(0.0, 0.08, 0.04).unwrap(),
        a8: CoefficientRange::new(-0.02, 0.02, 0.02).unwrap(),
        start: EvenCoefficients::default(),
        refinement: Some(Refinement {
            outer: FreeCoefficient::A6,
            values: vec![0.02, 0.06],
            inner: FreeCoefficient::A8,
        }),
    }
}

#[test]
fn published_row1_scores_below_threshold() {
    let s = score(
        &coefficients(TaskKind::CreateAsqs),
        &Objective::default(),
        &SweepOptions::default(),
    )
    .unwrap();
    assert!(s.score < 0.005, "{s:?}");
    assert!((s.mean_infidelity - 0.0021113).abs() < 1e-6);
}

#[test]
fn log_is_complete_and_best_is_monotone() {
    let plan = small_plan();
    let out = coordinate_scan(
        TaskKind::CreateAsqs,
        TF,
        target(),
        &plan,
        &Objective::default(),
        &SweepOptions::default(),
    )
    .unwrap();
    assert_eq!(out.log.len(), plan.evaluation_count());
    assert_eq!(out.log.len(), 3 + 3 + 3 + 2 * 3);
    assert_eq!(out.best_after_step.len(), 5);
    for w in out.best_after_step.windows(2) {
        assert!(w[1] <= w[0]);
    }
    let min = out
        .log
        .iter()
        .filter_map(|e| e.metrics.map(|m| m.score))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_score.score, min);
    // every step starts from the previous winner and a4 is always re-solved
    for e in &out.log {
        e.coefficients.validate().unwrap();
    }
}

#[test]
fn identical_plans_give_identical_results() {
    let run = || {
        let out = coordinate_scan(
            TaskKind::TwoLevelTransfer,
            TF,
            target(),
            &ScanPlan {
                a2: CoefficientRange::new(0.4, 0.6, 0.1).unwrap(),
                ..small_plan()
            },
            &Objective::default(),
            &SweepOptions::default(),
        )
        .unwrap();
        let mut csv = Vec::new();
        out.write_log_csv(&mut csv).unwrap();
        (out.best, csv)
    };
    assert_eq!(run(), run());
}

#[test]
fn single_point_ranges_return_those_values() {
    let plan = ScanPlan {
        order: vec![
            FreeCoefficient::A2,
            FreeCoefficient::A6,
            FreeCoefficient::A8,
        ],
        a2: CoefficientRange::single(-1.1),
        a6: CoefficientRange::single(0.06),
        a8: CoefficientRange::single(0.02),
        start: EvenCoefficients::default(),
        refinement: None,
    };
    let out = coordinate_scan(
        TaskKind::CreateAsqs,
        TF,
        target(),
        &plan,
        &Objective::default(),
        &SweepOptions::default(),
    )
    .unwrap();
    assert_eq!(out.best, coefficients(TaskKind::CreateAsqs));
    assert_eq!(out.log.len(), 3);
}

#[test]
fn log_csv_layout() {
    let plan = ScanPlan {
        refinement: None,
        a2: CoefficientRange::single(-1.1),
        a6: CoefficientRange::single(0.06),
        a8: CoefficientRange::single(0.02),
        ..small_plan()
    };
    let out = coordinate_scan(
        TaskKind::CreateAsqs,
        TF,
        target(),
        &plan,
        &Objective::default(),
        &SweepOptions::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    out.write_log_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,a2,a4,a6,a8,mean_infidelity,max_offres_pop0,score"
    );
    // step 1 scans a2 with a6 = a8 = 0
    assert!(lines.next().unwrap().starts_with("1,-1.1,0.3"));
    let last = lines.last().unwrap();
    assert!(last.starts_with("3,-1.1,0.17"), "{last}");
}

#[test]
fn invalid_plans_are_rejected() {
    let mut plan = small_plan();
    plan.order.clear();
    let r = coordinate_scan(
        TaskKind::CreateAsqs,
        TF,
        target(),
        &plan,
        &Objective::default(),
        &SweepOptions::default(),
    );
    assert!(matches!(r, Err(Error::Validation { .. })));
}
