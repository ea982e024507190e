//! Synthetic Gaussian-cluster feature pools with an exponential long-tail
//! class profile.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub max_per_class: usize,
    /// Head-to-tail count ratio; 1 gives a balanced pool.
    pub imbalance_ratio: f64,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Spec(format!("{key}: {why}")));
        if self.num_classes == 0 {
            return bad("num_classes", "must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be positive");
        }
        if self.max_per_class == 0 {
            return bad("max_per_class", "must be positive");
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return bad("imbalance_ratio", "must be a finite number >= 1");
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation", "must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be non-negative");
        }
        longtail_counts(self.num_classes, self.max_per_class, self.imbalance_ratio).map(|_| ())
    }

    pub fn counts(&self) -> Result<Vec<usize>> {
        longtail_counts(self.num_classes, self.max_per_class, self.imbalance_ratio)
    }
}

/// `counts[k] = round(n_max * ratio^(-k / (C - 1)))`, rounding half away
/// from zero, with both endpoints pinned exactly.
pub fn longtail_counts(num_classes: usize, max_per_class: usize, ratio: f64) -> Result<Vec<usize>> {
    if num_classes == 0 {
        return Err(Error::Spec("num_classes must be positive".into()));
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::Spec(format!("imbalance ratio {ratio} must be >= 1")));
    }
    if num_classes == 1 {
        if ratio > 1.0 {
            return Err(Error::Spec("an imbalance ratio above 1 needs at least 2 classes".into()));
        }
        return Ok(vec![max_per_class]);
    }
    let n_max = max_per_class as f64;
    let last = num_classes - 1;
    let counts: Vec<usize> = (0..num_classes)
        .map(|k| match k {
            0 => max_per_class,
            k if k == last => (n_max / ratio).round() as usize,
            k => (n_max * ratio.powf(-(k as f64) / last as f64)).round() as usize,
        })
        .collect();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Spec(format!(
            "class {k} would receive 0 samples (max_per_class {max_per_class}, ratio {ratio})"
        )));
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct SynthPool {
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
    /// `num_classes x feature_dim`, row-major.
    pub means: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthPool> {
    spec.validate()?;
    let counts = spec.counts()?;
    let means = class_means(spec);
    let (features, labels) = draw_samples(spec, &means, &counts, "class")?;
    Ok(SynthPool {
        features,
        labels,
        means,
        counts,
    })
}

/// A class-balanced sample from the same class-conditional distributions,
/// drawn from streams disjoint from the pool's.
pub fn generate_balanced_test(spec: &SynthSpec, means: &[f64], per_class: usize) -> Result<(FeatureMatrix, Vec<u32>)> {
    spec.validate()?;
    if per_class == 0 {
        return Err(Error::Spec("test_per_class must be positive".into()));
    }
    draw_samples(spec, means, &vec![per_class; spec.num_classes], "test-class")
}

/// Gram-Schmidt on Gaussian draws for the first `min(C, d)` means; further
/// classes take random directions, pushed outward in shells until every
/// pairwise distance is at least `class_separation`.
fn class_means(spec: &SynthSpec) -> Vec<f64> {
    let d = spec.feature_dim;
    let sep = spec.class_separation;
    let mut rng = stream(spec.seed, "means");
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let orth = spec.num_classes.min(d);
    while basis.len() < orth {
        let mut v = gaussian_vec(&mut rng, d);
        for u in &basis {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut means: Vec<Vec<f64>> = basis
        .into_iter()
        .map(|u| u.into_iter().map(|a| a * sep).collect())
        .collect();

    let mut shell = 1.0;
    let mut failures = 0;
    while means.len() < spec.num_classes {
        let mut u = gaussian_vec(&mut rng, d);
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        u.iter_mut().for_each(|a| *a *= sep * shell / norm);
        let clear = means.iter().all(|m| {
            m.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= sep
        });
        if clear {
            means.push(u);
            failures = 0;
        } else {
            failures += 1;
            if failures == 64 {
                shell += 1.0;
                failures = 0;
            }
        }
    }
    means.into_iter().flatten().collect()
}

fn gaussian_vec(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn draw_samples(spec: &SynthSpec, means: &[f64], counts: &[usize], prefix: &str) -> Result<(FeatureMatrix, Vec<u32>)> {
    let d = spec.feature_dim;
    let total: usize = counts.iter().sum();
    let mut rows: Vec<(u32, Vec<f32>)> = Vec::with_capacity(total);
    for (c, &n) in counts.iter().enumerate() {
        let mut rng = stream(spec.seed, &format!("{prefix}-{c}"));
        let mean = &means[c * d..(c + 1) * d];
        for _ in 0..n {
            let x = mean
                .iter()
                .map(|&m| (m + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            rows.push((c as u32, x));
        }
    }
    rows.shuffle(&mut stream(spec.seed, &format!("{prefix}-shuffle")));
    let labels = rows.iter().map(|(c, _)| *c).collect();
    let data = rows.into_iter().flat_map(|(_, x)| x).collect();
    Ok((FeatureMatrix::new(total, d, data)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: usize, d: usize, sigma: f64) -> SynthSpec {
        SynthSpec {
            num_classes: c,
            feature_dim: d,
            max_per_class: 50,
            imbalance_ratio: 10.0,
            class_separation: 3.0,
            noise_sigma: sigma,
            seed: 11,
        }
    }

    /// Independent evaluation of the profile with `exp`/`ln` rather than `powf`.
    fn profile_oracle(c: usize, n_max: usize, rho: f64) -> Vec<usize> {
        (0..c)
            .map(|k| {
                let v = n_max as f64 * (-(k as f64) / (c - 1) as f64 * rho.ln()).exp();
                let r = (v + 0.5).floor();
                r as usize
            })
            .collect()
    }

    #[test]
    fn cifar_style_profile() {
        let expected = vec![5000, 3871, 2997, 2321, 1797, 1391, 1077, 834, 646, 500];
        assert_eq!(profile_oracle(10, 5000, 10.0), expected);
        assert_eq!(longtail_counts(10, 5000, 10.0).unwrap(), expected);
        assert_eq!(longtail_counts(10, 5000, 1.0).unwrap(), vec![5000; 10]);
        assert_eq!(longtail_counts(2, 100, 10.0).unwrap(), vec![100, 10]);
    }

    #[test]
    fn zero_counts_and_bad_ratio_rejected() {
        assert!(longtail_counts(5, 3, 10.0).is_err());
        assert!(longtail_counts(1, 3, 2.0).is_err());
        assert!(longtail_counts(3, 3, 0.5).is_err());
    }

    #[test]
    fn histogram_matches_profile() {
        let s = spec(6, 4, 0.5);
        let pool = generate(&s).unwrap();
        let mut hist = vec![0usize; 6];
        pool.labels.iter().for_each(|&l| hist[l as usize] += 1);
        assert_eq!(hist, s.counts().unwrap());
    }

    #[test]
    fn deterministic_in_spec() {
        let a = generate(&spec(4, 3, 1.0)).unwrap();
        let b = generate(&spec(4, 3, 1.0)).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        let mut other = spec(4, 3, 1.0);
        other.seed = 12;
        assert_ne!(generate(&other).unwrap().features, a.features);
    }

    #[test]
    fn means_are_separated_even_with_excess_classes() {
        for (c, d) in [(3, 5), (5, 2), (7, 1)] {
            let s = spec(c, d, 0.1);
            let m = class_means(&s);
            for i in 0..c {
                for j in 0..i {
                    let dist: f64 = (0..d)
                        .map(|k| (m[i * d + k] - m[j * d + k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(dist >= s.class_separation - 1e-9, "C={c} d={d}: {dist}");
                }
            }
        }
    }

    #[test]
    fn zero_noise_samples_sit_on_means() {
        let s = spec(3, 4, 0.0);
        let pool = generate(&s).unwrap();
        for i in 0..pool.features.rows() {
            let c = pool.labels[i] as usize;
            // nearest mean is the own mean
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    let da = crate::matrix::squared_distance_f64(pool.features.row(i), &pool.means[a * 4..a * 4 + 4]);
                    let db = crate::matrix::squared_distance_f64(pool.features.row(i), &pool.means[b * 4..b * 4 + 4]);
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, c);
        }
    }
}
