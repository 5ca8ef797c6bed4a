//! Experiment replays, threshold calibration and metrics.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpr_integrity::experiments::report::{self, ResultHeader};
use vpr_integrity::experiments::threshold::{self, sweep, ThresholdKind};
use vpr_integrity::experiments::{
    calibrate_threshold, compute_metrics, run_exp1, run_exp2, Exp1Config, Exp2Config, Method, QueryRecord,
    QueryStatus,
};
use vpr_integrity::pipeline::oracle_predictions;
use vpr_integrity::{generate_synthetic, MatchRecord, Matcher, MatcherConfig, Pose2D, SynthConfig, SyntheticDataset, ToleranceConfig};

fn fixture() -> &'static (SyntheticDataset, Vec<MatchRecord>) {
    static CELL: OnceLock<(SyntheticDataset, Vec<MatchRecord>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        let records = Matcher::new(&ds.reference, MatcherConfig::default())
            .match_stream(&ds.queries, &ToleranceConfig::default())
            .unwrap();
        (ds, records)
    })
}

fn rec(d: f64, label: bool) -> MatchRecord {
    MatchRecord {
        query_index: 0,
        distance_vector: vec![d],
        best_index: 0,
        pose_estimate: Pose2D::new(0.0, 0.0, 0.0),
        gt_error: 0.0,
        label,
    }
}

fn random_labeled(rng: &mut ChaCha8Rng) -> Vec<MatchRecord> {
    let n = rng.gen_range(2..80);
    let mut v: Vec<MatchRecord> = (0..n)
        .map(|_| {
            // a coarse grid gives tied distances
            let d = f64::from(rng.gen_range(0..25u32)) / 10.0;
            rec(d, rng.gen_bool(1.0 / (1.0 + d)))
        })
        .collect();
    v[0].label = true;
    v
}

/// Precision/recall at threshold `t` by direct counting.
fn counts(records: &[MatchRecord], t: f64) -> (f64, f64) {
    let mut tp = 0;
    let mut accepted = 0;
    let mut positives = 0;
    for r in records {
        positives += usize::from(r.label);
        if r.best_distance() <= t {
            accepted += 1;
            tp += usize::from(r.label);
        }
    }
    (tp as f64 / accepted as f64, tp as f64 / positives as f64)
}

fn sweep_oracle(records: &[MatchRecord], kind: ThresholdKind, target: f64) -> (f64, bool) {
    let mut candidates: Vec<f64> = records.iter().map(|r| r.best_distance()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let hit = match kind {
        ThresholdKind::Precision => candidates.iter().rev().find(|&&t| counts(records, t).0 >= target),
        ThresholdKind::Recall => candidates.iter().find(|&&t| counts(records, t).1 >= target),
    };
    if let Some(&t) = hit {
        return (t, true);
    }
    let mut best = candidates[0];
    for &t in &candidates {
        let better = match kind {
            ThresholdKind::Precision => counts(records, t).0 >= counts(records, best).0,
            ThresholdKind::Recall => counts(records, t).1 > counts(records, best).1,
        };
        if better {
            best = t;
        }
    }
    (best, false)
}

#[test]
fn calibration_matches_exhaustive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..300 {
        let records = random_labeled(&mut rng);
        for kind in [ThresholdKind::Precision, ThresholdKind::Recall] {
            let target = rng.gen_range(0.0..=1.0);
            let got = calibrate_threshold(&records, kind, target).unwrap();
            let (t, attained) = sweep_oracle(&records, kind, target);
            assert_eq!((got.threshold, got.attained), (t, attained));
            assert_eq!((got.precision, got.recall), counts(&records, t));
        }
    }
}

#[test]
fn np_lies_on_the_frontier() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..300 {
        let records = random_labeled(&mut rng);
        let target = rng.gen_range(0.0..=1.0);
        let np = calibrate_threshold(&records, ThresholdKind::Precision, target).unwrap();
        if !np.attained {
            continue;
        }
        for p in sweep(&records) {
            assert!(!(p.precision > np.precision && p.recall > np.recall));
        }
    }
}

#[test]
fn perfect_precision_target_on_best_first_set() {
    let records = vec![rec(0.1, true), rec(0.2, false), rec(0.3, true), rec(0.4, true)];
    let np = calibrate_threshold(&records, ThresholdKind::Precision, 1.0).unwrap();
    assert_eq!(np.threshold, 0.1);
    assert_eq!(np.recall, 1.0 / 3.0);
}

#[test]
fn calibration_input_errors() {
    assert!(calibrate_threshold(&[], ThresholdKind::Precision, 0.5).is_err());
    assert!(calibrate_threshold(&[rec(0.1, false)], ThresholdKind::Recall, 0.5).is_err());
    assert!(calibrate_threshold(&[rec(0.1, true)], ThresholdKind::Recall, 1.5).is_err());
}

#[test]
fn stored_operating_points_round_trip_bit_exactly() {
    let records = vec![rec(0.1, true), rec(0.2, false), rec(0.3, true)];
    for target in threshold::reference_operating_points() {
        let report = threshold::calibrate_pair(&records, &target).unwrap();
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: threshold::ThresholdReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.target.precision.to_bits(), target.precision.to_bits());
        assert_eq!(back.target.recall.to_bits(), target.recall.to_bits());
        assert_eq!(back, report);
    }
    let ap = &threshold::reference_operating_points()[0];
    assert_eq!((ap.technique.as_str(), ap.precision, ap.recall), ("AP-GeM", 0.916, 0.213));
}

proptest! {
    #[test]
    fn lowering_np_threshold_never_raises_recall(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = random_labeled(&mut rng);
        let points = sweep(&records);
        for w in points.windows(2) {
            prop_assert!(w[0].recall <= w[1].recall);
        }
    }
}

#[test]
fn oracle_verifier_is_exact_and_beats_baseline() {
    let (ds, records) = fixture();
    let oracle = Method::verified("oracle", &oracle_predictions(records));
    let cfg = Exp2Config::default();
    let base = run_exp2(&ds.reference, &ds.queries, records, &Method::Baseline, &cfg).unwrap();
    let checked = run_exp2(&ds.reference, &ds.queries, records, &oracle, &cfg).unwrap();
    assert_eq!(checked.metrics.precision, 1.0);
    let (b, c) = (base.metrics.localization_error.unwrap(), checked.metrics.localization_error.unwrap());
    assert!(c.mean < b.mean);

    let e1 = Exp1Config::default();
    let base1 = run_exp1(&ds.reference, &ds.queries, records, &Method::Baseline, &e1).unwrap();
    let checked1 = run_exp1(&ds.reference, &ds.queries, records, &oracle, &e1).unwrap();
    assert_eq!(checked1.metrics.precision, 1.0);
    // single-query acting gives up the aliased fifth of the stream
    assert_eq!(checked1.metrics.recall, 0.8);
    assert!(checked1.metrics.mission_completion >= base1.metrics.mission_completion);
}

#[test]
fn all_accepting_verifier_reproduces_baseline() {
    let (ds, records) = fixture();
    let all = Method::Verified {
        name: "baseline".into(),
        predictions: vec![true; records.len()],
    };
    let cfg = Exp2Config::default();
    let a = run_exp2(&ds.reference, &ds.queries, records, &Method::Baseline, &cfg).unwrap();
    let b = run_exp2(&ds.reference, &ds.queries, records, &all, &cfg).unwrap();
    assert_eq!(a.queries, b.queries);
    assert_eq!(a.estimates, b.estimates);
}

#[test]
fn exp1_is_deterministic_and_consistent() {
    let (ds, records) = fixture();
    let cfg = Exp1Config {
        seed: 9,
        ..Exp1Config::default()
    };
    let m = Method::Threshold {
        name: "np".into(),
        max_distance: 0.5,
    };
    let a = run_exp1(&ds.reference, &ds.queries, records, &m, &cfg).unwrap();
    let b = run_exp1(&ds.reference, &ds.queries, records, &m, &cfg).unwrap();
    assert_eq!(a.missions, b.missions);
    assert_eq!(a.missions.len(), cfg.n_starts * cfg.goal_distances.len());
    for mission in &a.missions {
        if mission.completed {
            assert!(mission.arrived && mission.goal_error <= cfg.assessment_tolerance);
        }
        let start = ds.reference.odom()[mission.start];
        assert!(start + 50.0 <= ds.reference.length());
    }
    let other = run_exp1(&ds.reference, &ds.queries, records, &m, &Exp1Config { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.missions, other.missions);
}

#[test]
fn exp1_rejecting_everything_never_arrives() {
    let (ds, records) = fixture();
    let none = Method::Verified {
        name: "none".into(),
        predictions: vec![false; records.len()],
    };
    let out = run_exp1(&ds.reference, &ds.queries, records, &none, &Exp1Config::default()).unwrap();
    assert!(out.missions.iter().all(|m| !m.arrived && !m.completed));
    assert_eq!(out.metrics.mission_completion, Some(0.0));
    assert_eq!(out.metrics.precision, 0.0);
}

#[test]
fn exp2_warmup_and_declines() {
    let (ds, records) = fixture();
    let none = Method::Verified {
        name: "none".into(),
        predictions: vec![false; records.len()],
    };
    let out = run_exp2(&ds.reference, &ds.queries, records, &none, &Exp2Config::default()).unwrap();
    let warm = out.queries.iter().take_while(|q| q.status == QueryStatus::Warmup).count();
    // 1.5 m of warmup at 0.3 m per query
    assert!((5..=6).contains(&warm), "{warm}");
    assert!(out.queries[warm..].iter().all(|q| q.status == QueryStatus::Declined));
    assert_eq!(out.metrics.recall_denominator, records.len() - warm);
}

#[test]
fn experiments_reject_mismatched_inputs() {
    let (ds, records) = fixture();
    let short = Method::Verified {
        name: "v".into(),
        predictions: vec![true; 3],
    };
    assert!(run_exp2(&ds.reference, &ds.queries, records, &short, &Exp2Config::default()).is_err());
    assert!(run_exp1(&ds.reference, &ds.queries, &records[..10], &Method::Baseline, &Exp1Config::default()).is_err());
}

fn q(status: QueryStatus, error: Option<f64>) -> QueryRecord {
    QueryRecord {
        query: 0,
        method: "m".into(),
        status,
        error,
    }
}

#[test]
fn hand_counted_precision_lift() {
    // baseline: 1012 emitted, 952 within 0.5 m; verified: 819 emitted, 805 within
    let mut base = Vec::new();
    base.extend((0..952).map(|_| q(QueryStatus::Emitted, Some(0.2))));
    base.extend((0..60).map(|_| q(QueryStatus::Emitted, Some(3.0))));
    let mut verified = Vec::new();
    verified.extend((0..805).map(|_| q(QueryStatus::Emitted, Some(0.2))));
    verified.extend((0..14).map(|_| q(QueryStatus::Emitted, Some(3.0))));
    verified.extend((0..193).map(|_| q(QueryStatus::Declined, None)));
    let b = compute_metrics(&[], &base, 0.5).unwrap();
    let v = compute_metrics(&[], &verified, 0.5).unwrap();
    assert_eq!(format!("{:.2}", 100.0 * b.precision), "94.07");
    assert_eq!(format!("{:.2}", 100.0 * v.precision), "98.29");
    assert_eq!(b.recall, 952.0 / 1012.0);
    assert_eq!(v.recall, 805.0 / 1012.0);
}

#[test]
fn result_files_reproduce_metrics() {
    let (ds, records) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let header = |e: &str| ResultHeader {
        experiment: e.into(),
        method: "oracle".into(),
        tolerance: 0.5,
        seed: Some(0),
        manifest: "manifest.json".into(),
        config: serde_json::json!({}),
    };
    let oracle = Method::verified("oracle", &oracle_predictions(records));
    let e1 = run_exp1(&ds.reference, &ds.queries, records, &oracle, &Exp1Config::default()).unwrap();
    let mp = dir.path().join(report::MISSIONS_FILE);
    let qp = dir.path().join(report::EXP1_QUERIES_FILE);
    report::write_missions(&mp, &header("exp1"), &e1.missions).unwrap();
    report::write_queries(&qp, &header("exp1"), &e1.queries).unwrap();
    let (h, missions) = report::read_missions(&mp).unwrap();
    let (_, queries) = report::read_queries(&qp).unwrap();
    assert_eq!(compute_metrics(&missions, &queries, h.tolerance).unwrap(), e1.metrics);

    let e2 = run_exp2(&ds.reference, &ds.queries, records, &oracle, &Exp2Config::default()).unwrap();
    let qp = dir.path().join(report::EXP2_QUERIES_FILE);
    report::write_queries(&qp, &header("exp2"), &e2.queries).unwrap();
    let (h, queries) = report::read_queries(&qp).unwrap();
    assert_eq!(compute_metrics(&[], &queries, h.tolerance).unwrap(), e2.metrics);
}
