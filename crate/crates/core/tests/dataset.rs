//! Dataset persistence and the synthetic generator.

use std::fs;
use std::path::Path;

use proptest::prelude::*;

use vpr_integrity::dataset::{
    dataset_paths, load_provenance, load_queries, load_traverse, save_provenance, save_queries, save_traverse,
    DatasetFormat, FEATURES_FILE, POSES_FILE,
};
use vpr_integrity::synth::MIN_ALIAS_OFFSET;
use vpr_integrity::{generate_synthetic, DatasetError, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n: 120,
        m: 32,
        seed,
        ..SynthConfig::default()
    }
}

fn write_all(cfg: &SynthConfig, root: &Path) {
    let ds = generate_synthetic(cfg).unwrap();
    let (r, q) = dataset_paths(root);
    save_traverse(&ds.reference, &r, DatasetFormat::Directory).unwrap();
    save_queries(&ds.queries, &q).unwrap();
    save_provenance(&ds.provenance, &q).unwrap();
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["reference", "query"] {
        let mut names: Vec<_> = fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_all(&small(7), a.path());
    write_all(&small(7), b.path());
    write_all(&small(8), c.path());
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    assert_ne!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn directory_round_trip_is_exact() {
    let ds = generate_synthetic(&small(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (r, q) = dataset_paths(dir.path());
    save_traverse(&ds.reference, &r, DatasetFormat::Directory).unwrap();
    save_queries(&ds.queries, &q).unwrap();
    save_provenance(&ds.provenance, &q).unwrap();

    let t = load_traverse(&r, DatasetFormat::Directory).unwrap();
    assert_eq!(t.poses(), ds.reference.poses());
    assert_eq!(t.odom(), ds.reference.odom());
    assert_eq!(t.features_flat(), ds.reference.features_flat());
    let qs = load_queries(&q).unwrap();
    assert_eq!(qs.ground_truth_poses(), ds.queries.ground_truth_poses());
    assert_eq!(qs.odometer(), ds.queries.odometer());
    assert_eq!(qs.features_flat(), ds.queries.features_flat());
    assert_eq!(load_provenance(&q).unwrap().unwrap(), ds.provenance);
}

#[test]
fn single_csv_round_trip_is_exact() {
    let ds = generate_synthetic(&small(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reference.csv");
    save_traverse(&ds.reference, &path, DatasetFormat::Csv).unwrap();
    let t = load_traverse(&path, DatasetFormat::Csv).unwrap();
    assert_eq!(t.poses(), ds.reference.poses());
    assert_eq!(t.features_flat(), ds.reference.features_flat());
}

#[test]
fn aliasing_follows_the_configuration() {
    let cfg = SynthConfig::default();
    let ds = generate_synthetic(&cfg).unwrap();
    let aliased: Vec<_> = ds.provenance.iter().filter(|p| p.aliased).collect();
    assert_eq!(aliased.len(), (cfg.aliasing_rate * cfg.n as f64).floor() as usize);
    for p in &ds.provenance {
        if p.aliased {
            assert!(p.gt_index.abs_diff(p.source_index) >= MIN_ALIAS_OFFSET);
        } else {
            assert_eq!(p.gt_index, p.source_index);
        }
    }
    assert_eq!(ds.queries.len(), cfg.n);
    assert_eq!(ds.reference.dim(), cfg.m);
}

#[test]
fn malformed_tables_report_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.csv"), "index,x,y,theta,f1,f2\n1,0,0,0,0.1,0.2\n2,1,0,0,0.1\n").unwrap();
    match load_traverse(&d.join("a.csv"), DatasetFormat::Csv) {
        Err(DatasetError::DimensionMismatch { row, .. }) | Err(DatasetError::MalformedRow { row, .. }) => {
            assert_eq!(row, 2)
        }
        other => panic!("{other:?}"),
    }
    fs::write(
        d.join("b.csv"),
        "index,x,y,theta,odom,f1\n1,0,0,0,0,1\n2,1,0,0,1,1\n3,2,0,0,0.5,1\n",
    )
    .unwrap();
    assert!(matches!(
        load_traverse(&d.join("b.csv"), DatasetFormat::Csv),
        Err(DatasetError::NonMonotoneOdometry { row: 3, .. })
    ));
    fs::write(d.join("c.csv"), "foo,bar\n1,2\n").unwrap();
    assert!(load_traverse(&d.join("c.csv"), DatasetFormat::Csv).is_err());
    assert!(load_traverse(&d.join("missing"), DatasetFormat::Directory).is_err());
}

#[test]
fn feature_file_must_match_the_pose_table() {
    let ds = generate_synthetic(&small(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    save_traverse(&ds.reference, &r, DatasetFormat::Directory).unwrap();
    let poses = fs::read_to_string(r.join(POSES_FILE)).unwrap();
    let fewer: String = poses.lines().take(50).map(|l| format!("{l}\n")).collect();
    fs::write(r.join(POSES_FILE), fewer).unwrap();
    assert!(load_traverse(&r, DatasetFormat::Directory).is_err());

    save_traverse(&ds.reference, &r, DatasetFormat::Directory).unwrap();
    let mut bytes = fs::read(r.join(FEATURES_FILE)).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(r.join(FEATURES_FILE), bytes).unwrap();
    assert!(load_traverse(&r, DatasetFormat::Directory).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_valid_config_generates(n in 20usize..120, m in 2usize..24, rate in 0.0f64..0.5, seed in any::<u64>()) {
        let cfg = SynthConfig { n, m, aliasing_rate: rate, seed, ..SynthConfig::default() };
        let ds = generate_synthetic(&cfg).unwrap();
        prop_assert_eq!(ds.reference.len(), n);
        prop_assert!(ds.reference.features_flat().iter().all(|v| v.is_finite()));
        prop_assert!(ds.queries.odometer().windows(2).all(|w| w[0] <= w[1]));
    }
}
