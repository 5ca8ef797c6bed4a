//! Hand-crafted statistics over match vectors.
//!
//! Every query is summarised by four vectors: the distance vector `D`, the
//! query feature `Q`, the best-match reference feature `R` and the difference
//! `V = R - Q`. Each is reduced to the same 48 statistics and the four blocks
//! are concatenated into a 192-dimensional monitor input.
//!
//! Permutation-invariant statistics are computed from the ascending sort of
//! the input, so they are bitwise identical for any reordering.

use serde::Serialize;

use crate::error::FeatureError;

/// Denominator guard and zero-variance threshold.
pub const EPS: f64 = 1e-12;

pub const STATS_PER_VECTOR: usize = 48;
pub const FEATURE_DIM: usize = 4 * STATS_PER_VECTOR;
pub const CATALOGUE_VERSION: u32 = 1;

/// One statistic of the catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatDef {
    pub name: &'static str,
    pub formula: &'static str,
    /// Depends on element order, not only on the multiset of values.
    pub order_sensitive: bool,
}

const fn stat(name: &'static str, formula: &'static str, order_sensitive: bool) -> StatDef {
    StatDef {
        name,
        formula,
        order_sensitive,
    }
}

/// Notation: `v` input of length `n`, `s` its ascending sort, `mu` mean,
/// `sd` population standard deviation, `d_i = v_{i+1} - v_i`,
/// `div(a, b) = a / b` if `|b| >= EPS` else 0. Positions are 0-based.
static CATALOGUE_V1: [StatDef; STATS_PER_VECTOR] = [
    // moments
    stat("mean", "mu = sum(v) / n", false),
    stat("std", "sd = sqrt(var)", false),
    stat("variance", "var = sum((v - mu)^2) / n", false),
    stat("excess_kurtosis", "m4 / var^2 - 3, 0 if var < EPS", false),
    stat("skewness", "m3 / var^1.5, 0 if var < EPS", false),
    stat("min", "s_0", false),
    stat("max", "s_{n-1}", false),
    stat("range", "s_{n-1} - s_0", false),
    // order statistics
    stat("median", "quantile(0.5)", false),
    stat("q25", "quantile(0.25), linear interpolation at p * (n - 1)", false),
    stat("q75", "quantile(0.75)", false),
    stat("iqr", "q75 - q25", false),
    stat("p05", "quantile(0.05)", false),
    stat("p95", "quantile(0.95)", false),
    stat("argmin_frac", "first index of min / n", true),
    stat("argmax_frac", "first index of max / n", true),
    // normalized shape ratios
    stat("mean_over_max", "div(mu, max)", false),
    stat("min_over_mean", "div(min, mu)", false),
    stat("max_excess_z", "(max - mu) / sd, 0 if var < EPS", false),
    stat("min_deficit_z", "(mu - min) / sd, 0 if var < EPS", false),
    stat("coeff_variation", "div(sd, mu)", false),
    stat("median_over_mean", "div(median, mu)", false),
    stat("mean_square", "sum(v^2) / n", false),
    stat("rms", "sqrt(mean_square)", false),
    // sorted-gap statistics
    stat("gap_12", "s_1 - s_0", false),
    stat("gap_12_over_range", "(s_1 - s_0) / (s_{n-1} - s_0 + EPS)", false),
    stat("min_over_second", "div(s_0, s_1 + EPS)", false),
    stat("low5_mean_over_mean", "div(mean(s_0..s_4), mu), fewer when n < 5", false),
    stat("low5_std", "population std of s_0..s_4", false),
    stat("low_decile_contrast", "mean(s_0..s_{k-1}) - mean(s_k..), k = max(1, floor(n / 10))", false),
    stat("second_over_max", "div(s_1, max)", false),
    stat("argmin_second_spread", "|index of s_0 - index of s_1| / n, stable order", true),
    // first-difference statistics
    stat("diff_mean", "mean(d)", true),
    stat("diff_std", "population std(d)", true),
    stat("diff_abs_mean", "mean(|d|)", true),
    stat("diff_abs_max", "max(|d|)", true),
    stat("diff_sign_change_frac", "#{i: sign(d_i) * sign(d_{i+1}) < 0} / (n - 2), 0 if n < 3", true),
    stat("local_min_frac", "#{0 < i < n-1: v_i < v_{i-1} and v_i < v_{i+1}} / n", true),
    stat("local_max_frac", "#{0 < i < n-1: v_i > v_{i-1} and v_i > v_{i+1}} / n", true),
    stat("total_variation_per_len", "sum(|d|) / n", true),
    // distribution statistics
    stat("hist10_entropy", "-sum(p ln p) / ln 10 over 10 equal bins on [min, max], 0 if range < EPS", false),
    stat("frac_within_1sd", "#{|v - mu| <= sd} / n", false),
    stat("frac_below_mean", "#{v < mu} / n", false),
    stat("frac_near_min", "#{v - min <= 0.05 * range} / n", false),
    stat("lag1_autocorr", "sum((v_i - mu)(v_{i+1} - mu)) / sum((v - mu)^2), 0 if var < EPS", true),
    stat("gini_shifted", "w = s - min; div(sum((2i - n + 1) w_i), n sum(w))", false),
    stat("peak_to_avg_headroom", "u = max - v; div(max(u), mean(u))", false),
    stat("frac_at_min", "#{v - min <= EPS} / n", false),
];

/// Versioned, ordered list of the 48 statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatCatalogue {
    pub version: u32,
    pub stats: &'static [StatDef],
}

impl StatCatalogue {
    pub fn v1() -> Self {
        Self {
            version: CATALOGUE_VERSION,
            stats: &CATALOGUE_V1,
        }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Positions of statistics that only depend on the multiset of values.
    pub fn permutation_invariant(&self) -> Vec<usize> {
        self.stats
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.order_sensitive)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalogue serializes")
    }
}

impl Default for StatCatalogue {
    fn default() -> Self {
        Self::v1()
    }
}

fn div(a: f64, b: f64) -> f64 {
    if b.abs() < EPS {
        0.0
    } else {
        a / b
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_var(v: &[f64], mu: f64) -> f64 {
    v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// The 48 statistics of `v` in catalogue order.
pub fn extract_stats(v: &[f64], catalogue: &StatCatalogue) -> Result<Vec<f64>, FeatureError> {
    debug_assert_eq!(catalogue.version, CATALOGUE_VERSION);
    let n = v.len();
    if n < 2 {
        return Err(FeatureError::TooShort(n));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(FeatureError::NonFinite(i));
    }
    let nf = n as f64;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let s: Vec<f64> = order.iter().map(|&i| v[i]).collect();

    // exact for constant input, where sum / n can miss the value by an ulp
    let mu = if s[0] == s[n - 1] { s[0] } else { mean(&s) };
    let var = pop_var(&s, mu);
    let sd = var.sqrt();
    let flat = var < EPS;
    let (min, max) = (s[0], s[n - 1]);
    let range = max - min;
    let m3 = s.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / nf;
    let m4 = s.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / nf;
    let median = quantile(&s, 0.5);
    let q25 = quantile(&s, 0.25);
    let q75 = quantile(&s, 0.75);
    let argmin = order[0];
    let argmax = v
        .iter()
        .position(|x| *x == max)
        .expect("max is an element");
    let mean_square = s.iter().map(|x| x * x).sum::<f64>() / nf;

    let low5 = &s[..n.min(5)];
    let low5_mu = mean(low5);
    let k = (n / 10).max(1);
    let diffs: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let diff_mu = mean(&diffs);
    let abs_diffs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let sign_changes = diffs
        .windows(2)
        .filter(|w| sign(w[0]) * sign(w[1]) < 0)
        .count();
    let local_min = (1..n - 1)
        .filter(|&i| v[i] < v[i - 1] && v[i] < v[i + 1])
        .count();
    let local_max = (1..n - 1)
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .count();

    let entropy = if range < EPS {
        0.0
    } else {
        let mut bins = [0usize; 10];
        for x in &s {
            let b = (((x - min) / range) * 10.0).floor() as usize;
            bins[b.min(9)] += 1;
        }
        -bins
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                p * p.ln()
            })
            .sum::<f64>()
            / 10f64.ln()
    };
    let autocorr = if flat {
        0.0
    } else {
        let num: f64 = v.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum();
        let den: f64 = v.iter().map(|x| (x - mu) * (x - mu)).sum();
        div(num, den)
    };
    let gini = {
        let total: f64 = s.iter().map(|x| x - min).sum();
        let weighted: f64 = s
            .iter()
            .enumerate()
            .map(|(i, x)| (2.0 * i as f64 - nf + 1.0) * (x - min))
            .sum();
        div(weighted, nf * total)
    };
    let headroom_mean = s.iter().map(|x| max - x).sum::<f64>() / nf;
    let frac = |count: usize| count as f64 / nf;

    let out = vec![
        mu,
        sd,
        var,
        if flat { 0.0 } else { m4 / (var * var) - 3.0 },
        if flat { 0.0 } else { m3 / var.powf(1.5) },
        min,
        max,
        range,
        median,
        q25,
        q75,
        q75 - q25,
        quantile(&s, 0.05),
        quantile(&s, 0.95),
        argmin as f64 / nf,
        argmax as f64 / nf,
        div(mu, max),
        div(min, mu),
        if flat { 0.0 } else { (max - mu) / sd },
        if flat { 0.0 } else { (mu - min) / sd },
        div(sd, mu),
        div(median, mu),
        mean_square,
        mean_square.sqrt(),
        s[1] - s[0],
        (s[1] - s[0]) / (range + EPS),
        div(s[0], s[1] + EPS),
        div(low5_mu, mu),
        pop_var(low5, low5_mu).sqrt(),
        mean(&s[..k]) - mean(&s[k..]),
        div(s[1], max),
        order[0].abs_diff(order[1]) as f64 / nf,
        diff_mu,
        pop_var(&diffs, diff_mu).sqrt(),
        mean(&abs_diffs),
        abs_diffs.iter().cloned().fold(0.0, f64::max),
        if n < 3 { 0.0 } else { sign_changes as f64 / (n - 2) as f64 },
        frac(local_min),
        frac(local_max),
        abs_diffs.iter().sum::<f64>() / nf,
        entropy,
        frac(s.iter().filter(|x| (*x - mu).abs() <= sd).count()),
        frac(s.iter().filter(|x| **x < mu).count()),
        frac(s.iter().filter(|x| *x - min <= 0.05 * range).count()),
        autocorr,
        gini,
        div(range, headroom_mean),
        frac(s.iter().filter(|x| *x - min <= EPS).count()),
    ];
    debug_assert_eq!(out.len(), STATS_PER_VECTOR);
    Ok(out)
}

/// The four vectors summarised for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub distances: Vec<f64>,
    pub query: Vec<f64>,
    pub reference: Vec<f64>,
    pub difference: Vec<f64>,
}

impl FeatureBundle {
    /// Builds `V = R - Q` from the query and best-match reference features.
    pub fn new(distances: Vec<f64>, query: Vec<f64>, reference: Vec<f64>) -> Result<Self, FeatureError> {
        if query.len() != reference.len() {
            return Err(FeatureError::BundleShape {
                query: query.len(),
                reference: reference.len(),
            });
        }
        let difference = reference.iter().zip(&query).map(|(r, q)| r - q).collect();
        Ok(Self {
            distances,
            query,
            reference,
            difference,
        })
    }
}

/// `stats(D) ‖ stats(Q) ‖ stats(R) ‖ stats(V)`, 192 values.
pub fn featurize(bundle: &FeatureBundle, catalogue: &StatCatalogue) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(4 * catalogue.len());
    for v in [
        &bundle.distances,
        &bundle.query,
        &bundle.reference,
        &bundle.difference,
    ] {
        out.extend(extract_stats(v, catalogue)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> StatCatalogue {
        StatCatalogue::v1()
    }

    fn idx(name: &str) -> usize {
        CATALOGUE_V1.iter().position(|s| s.name == name).unwrap()
    }

    #[test]
    fn catalogue_has_48_unique_names() {
        let c = cat();
        assert_eq!(c.len(), 48);
        let mut names: Vec<_> = c.stats.iter().map(|s| s.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 48);
    }

    #[test]
    fn constant_vector_conventions() {
        let s = extract_stats(&[2.5; 7], &cat()).unwrap();
        assert_eq!(s[idx("mean")], 2.5);
        assert_eq!(s[idx("std")], 0.0);
        assert_eq!(s[idx("range")], 0.0);
        assert_eq!(s[idx("skewness")], 0.0);
        assert_eq!(s[idx("excess_kurtosis")], 0.0);
        assert_eq!(s[idx("diff_sign_change_frac")], 0.0);
        assert_eq!(s[idx("hist10_entropy")], 0.0);
        assert_eq!(s[idx("frac_at_min")], 1.0);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn one_to_four() {
        let s = extract_stats(&[1.0, 2.0, 3.0, 4.0], &cat()).unwrap();
        assert_eq!(s[idx("mean")], 2.5);
        assert!((s[idx("std")] - 1.25f64.sqrt()).abs() < 1e-12);
        assert!((s[idx("std")] - 1.1180).abs() < 1e-4);
        assert_eq!(s[idx("min")], 1.0);
        assert_eq!(s[idx("max")], 4.0);
        assert_eq!(s[idx("median")], 2.5);
        assert_eq!(s[idx("q25")], 1.75);
        assert_eq!(s[idx("q75")], 3.25);
        assert_eq!(s[idx("gap_12")], 1.0);
        assert_eq!(s[idx("argmin_frac")], 0.0);
        assert_eq!(s[idx("argmax_frac")], 0.75);
        assert_eq!(s[idx("diff_mean")], 1.0);
        assert_eq!(s[idx("diff_sign_change_frac")], 0.0);
        // symmetric sample
        assert!(s[idx("skewness")].abs() < 1e-12);
        // m4 = (2.25^2*2 + 0.25^2*2)/4 = 2.5625, var^2 = 1.5625
        assert!((s[idx("excess_kurtosis")] - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
        // gini: w = 0,1,2,3; sum((2i-3) w_i) = 0 + -1*1... = (-3*0)+(-1*1)+(1*2)+(3*3) = 10; /(4*6)
        assert!((s[idx("gini_shifted")] - 10.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn short_and_non_finite_inputs() {
        assert_eq!(extract_stats(&[1.0], &cat()), Err(FeatureError::TooShort(1)));
        assert_eq!(
            extract_stats(&[1.0, f64::NAN, 2.0], &cat()),
            Err(FeatureError::NonFinite(1))
        );
    }

    #[test]
    fn zero_difference_block() {
        let q = vec![0.1, -0.4, 0.9];
        let b = FeatureBundle::new(vec![0.3, 0.2, 0.5], q.clone(), q).unwrap();
        let f = featurize(&b, &cat()).unwrap();
        assert_eq!(f.len(), FEATURE_DIM);
        assert_eq!(&f[144..], extract_stats(&[0.0; 3], &cat()).unwrap().as_slice());
    }

    #[test]
    fn block_isolation_for_distances() {
        let q = vec![0.1, -0.4, 0.9, 0.2];
        let r = vec![0.0, -0.3, 1.0, 0.1];
        let a = featurize(&FeatureBundle::new(vec![0.3, 0.2, 0.5], q.clone(), r.clone()).unwrap(), &cat()).unwrap();
        let b = featurize(&FeatureBundle::new(vec![0.9, 0.1, 0.4, 0.7], q, r).unwrap(), &cat()).unwrap();
        assert_ne!(a[..48], b[..48]);
        assert_eq!(a[48..], b[48..]);
    }
}
