//! Statistics catalogue: totality, permutation invariance, block layout.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpr_integrity::featurizer::{extract_stats, featurize, FeatureBundle, StatCatalogue, FEATURE_DIM, STATS_PER_VECTOR};

/// Vectors of the awkward kinds: huge or tiny magnitudes, constants, sorted
/// runs, mixed signs.
fn awkward_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = if rng.gen_bool(0.05) { 4096 } else { rng.gen_range(2..300) };
    let scale = 10f64.powi(rng.gen_range(-12..=12));
    match rng.gen_range(0..5) {
        0 => vec![scale * rng.gen_range(-1.0..1.0); n],
        1 => {
            let mut v: Vec<f64> = (0..n).map(|_| scale * rng.gen::<f64>()).collect();
            v.sort_by(f64::total_cmp);
            if rng.gen_bool(0.5) {
                v.reverse();
            }
            v
        }
        2 => (0..n).map(|_| 10f64.powi(rng.gen_range(-12..=12)) * rng.gen_range(-1.0..1.0)).collect(),
        3 => (0..n).map(|i| if i == 0 { scale } else { 0.0 }).collect(),
        _ => (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn all_statistics_finite_on_awkward_vectors() {
    let cat = StatCatalogue::v1();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3000 {
        let v = awkward_vector(&mut rng);
        let s = extract_stats(&v, &cat).unwrap();
        assert_eq!(s.len(), STATS_PER_VECTOR);
        for (i, x) in s.iter().enumerate() {
            assert!(x.is_finite(), "{} = {x} on n = {}", cat.stats[i].name, v.len());
        }
    }
}

#[test]
fn invariant_subset_ignores_order() {
    let cat = StatCatalogue::v1();
    let subset = cat.permutation_invariant();
    assert!(!subset.is_empty() && subset.len() < STATS_PER_VECTOR);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..30 {
        let mut v = awkward_vector(&mut rng);
        let base = extract_stats(&v, &cat).unwrap();
        for _ in 0..100 {
            v.shuffle(&mut rng);
            let s = extract_stats(&v, &cat).unwrap();
            for &i in &subset {
                let tol = 1e-12 * base[i].abs().max(1.0);
                assert!((s[i] - base[i]).abs() <= tol, "{}", cat.stats[i].name);
            }
        }
    }
}

#[test]
fn order_sensitive_stats_do_see_order() {
    // ascending vs descending ramps differ in at least one order-sensitive stat
    let cat = StatCatalogue::v1();
    let up: Vec<f64> = (0..20).map(f64::from).collect();
    let down: Vec<f64> = up.iter().rev().cloned().collect();
    let (a, b) = (extract_stats(&up, &cat).unwrap(), extract_stats(&down, &cat).unwrap());
    let sensitive: Vec<usize> = (0..STATS_PER_VECTOR).filter(|i| cat.stats[*i].order_sensitive).collect();
    assert!(sensitive.iter().any(|&i| a[i] != b[i]));
}

#[test]
fn rejects_short_and_non_finite_input() {
    let cat = StatCatalogue::v1();
    assert!(extract_stats(&[1.0], &cat).is_err());
    assert!(extract_stats(&[], &cat).is_err());
    assert!(extract_stats(&[1.0, f64::NAN], &cat).is_err());
    assert!(extract_stats(&[1.0, f64::INFINITY], &cat).is_err());
}

#[test]
fn feature_vector_is_four_blocks() {
    let cat = StatCatalogue::v1();
    let d = vec![0.9, 0.2, 0.5, 0.7];
    let q = vec![0.1, 0.4, -0.3];
    let r = vec![0.2, 0.1, 0.0];
    let x = featurize(&FeatureBundle::new(d.clone(), q.clone(), r.clone()).unwrap(), &cat).unwrap();
    assert_eq!(x.len(), FEATURE_DIM);
    let v: Vec<f64> = r.iter().zip(&q).map(|(a, b)| a - b).collect();
    for (k, block) in [d, q, r, v].iter().enumerate() {
        let want = extract_stats(block, &cat).unwrap();
        assert_eq!(&x[k * STATS_PER_VECTOR..(k + 1) * STATS_PER_VECTOR], want.as_slice());
    }
    assert!(FeatureBundle::new(vec![1.0, 2.0], vec![1.0], vec![1.0, 2.0]).is_err());
}

#[test]
fn identical_query_and_reference_give_zero_difference_stats() {
    let cat = StatCatalogue::v1();
    let q = vec![0.3, -0.2, 0.9, 0.1];
    let x = featurize(&FeatureBundle::new(vec![0.0, 1.0, 2.0], q.clone(), q).unwrap(), &cat).unwrap();
    let want = extract_stats(&[0.0; 4], &cat).unwrap();
    assert_eq!(&x[3 * STATS_PER_VECTOR..], want.as_slice());
}

#[test]
fn published_catalogue_matches_code() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/catalogue.json");
    let text = std::fs::read_to_string(path).expect("docs/catalogue.json exists");
    assert_eq!(text.trim_end(), StatCatalogue::v1().to_json());
    let names: Vec<&str> = StatCatalogue::v1().stats.iter().map(|s| s.name).collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), STATS_PER_VECTOR);
}

proptest! {
    #[test]
    fn stats_finite_for_any_finite_vector(v in prop::collection::vec(-1e12f64..1e12, 2..200)) {
        let s = extract_stats(&v, &StatCatalogue::v1()).unwrap();
        prop_assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn shifting_a_constant_vector_keeps_spread_stats_at_zero(c in -1e6f64..1e6, n in 2usize..50) {
        let cat = StatCatalogue::v1();
        let s = extract_stats(&vec![c; n], &cat).unwrap();
        for name in ["std", "variance"] {
            let i = cat.stats.iter().position(|d| d.name == name).unwrap();
            prop_assert_eq!(s[i], 0.0);
        }
    }
}
