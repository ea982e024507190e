#![allow(dead_code)]

use alkit::rng::stream;
use alkit::{FeatureMatrix, LinearHead, PoolState};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
    pub pool: PoolState,
    pub head: LinearHead,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub labeled: usize,
    /// Copy some rows onto others.
    pub duplicates: bool,
    /// All labeled points share one class.
    pub single_class_labeled: bool,
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_head(rng: &mut impl Rng, c: usize, d: usize) -> LinearHead {
    let w = (0..c * d).map(|_| normal(rng)).collect();
    let b = (0..c).map(|_| 0.5 * normal(rng)).collect();
    LinearHead::new(c, d, w, b).unwrap()
}

pub fn random_features(rng: &mut impl Rng, n: usize, d: usize) -> FeatureMatrix {
    FeatureMatrix::new(n, d, (0..n * d).map(|_| 2.0 * normal(rng) as f32).collect()).unwrap()
}

pub fn instance(seed: u64, s: Shape) -> Instance {
    let mut rng = stream(seed, "test-instance");
    let mut data: Vec<f32> = (0..s.n * s.d).map(|_| 2.0 * normal(&mut rng) as f32).collect();
    if s.duplicates && s.n > 1 {
        for _ in 0..s.n / 3 {
            let (a, b) = (rng.random_range(0..s.n), rng.random_range(0..s.n));
            let src: Vec<f32> = data[a * s.d..(a + 1) * s.d].to_vec();
            data[b * s.d..(b + 1) * s.d].copy_from_slice(&src);
        }
    }
    let features = FeatureMatrix::new(s.n, s.d, data).unwrap();
    let mut labels: Vec<u32> = (0..s.n).map(|_| rng.random_range(0..s.c as u32)).collect();
    let labeled = index::sample(&mut rng, s.n, s.labeled.min(s.n)).into_vec();
    if s.single_class_labeled {
        let class = rng.random_range(0..s.c as u32);
        for &i in &labeled {
            labels[i] = class;
        }
    }
    let mut pool = PoolState::with_splits(labels.clone(), s.c, &[], &[]).unwrap();
    pool.restore(&labeled, labeled.len(), 0).unwrap();
    let head = random_head(&mut rng, s.c, s.d);
    Instance {
        features,
        labels,
        pool,
        head,
    }
}

/// Argsort ascending, ties by index.
pub fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

/// Runs `kind` on `inst` and checks the universal contract: exactly `b`
/// distinct unlabeled indices, or one of the documented errors.
pub fn check_contract(kind: alkit::StrategyKind, inst: &Instance, b: usize, seed: u64) -> Result<(), String> {
    use alkit::{select, Error, QueryContext, StrategyConfig};
    let mut cfg = StrategyConfig::new(kind);
    cfg.partitions = 1 + (seed % 5) as usize;
    cfg.pooled_dim = 1 + (seed % (inst.head.num_classes() * inst.features.dim()) as u64) as usize;
    let ctx = QueryContext {
        pool: &inst.pool,
        features: &inst.features,
        head: &inst.head,
    };
    let before = inst.pool.audit_log().len();
    let out = select(&cfg, &ctx, b, &mut stream(seed, "strategy"));
    let audited = inst.pool.audit_log().len() > before;
    if audited && !kind.is_privileged() || !audited && kind.is_privileged() && out.is_ok() {
        return Err(format!("{kind}: oracle access {audited}, privileged {}", kind.is_privileged()));
    }
    let unlabeled = inst.pool.unlabeled().len();
    match out {
        Ok(q) => {
            if b > unlabeled {
                return Err(format!("{kind}: b = {b} > |U| = {unlabeled} accepted"));
            }
            if q.indices.len() != b {
                return Err(format!("{kind}: {} indices for b = {b}", q.indices.len()));
            }
            let mut seen = std::collections::HashSet::new();
            for &i in &q.indices {
                if !inst.pool.is_unlabeled(i) {
                    return Err(format!("{kind}: index {i} is not unlabeled"));
                }
                if !seen.insert(i) {
                    return Err(format!("{kind}: index {i} repeated"));
                }
            }
            Ok(())
        }
        Err(Error::Budget(_)) if b > unlabeled => Ok(()),
        Err(Error::Initialization(_)) if inst.pool.labeled().is_empty() => Ok(()),
        Err(e) => Err(format!("{kind}: unexpected error {e}")),
    }
}
