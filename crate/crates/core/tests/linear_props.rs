mod common;

use alkit::linear::{class_weights, Objective};
use alkit::oracles::{cross_entropy, finite_difference};
use alkit::rng::stream;
use alkit::{train, ClassWeighting, Schedule, TrainConfig};
use common::{normal, random_features};
use proptest::prelude::*;
use rand::Rng;

fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        seed in any::<u64>(), n in 1usize..12, d in 1usize..9, c in 2usize..6,
        weighted in any::<bool>(), wd in prop_oneof![Just(0.0), 0.0f64..0.1],
    ) {
        let mut rng = stream(seed, "grad");
        let x = random_features(&mut rng, n, d);
        let labels: Vec<u32> = (0..n).map(|i| if i < c { i as u32 } else { rng.random_range(0..c as u32) }).collect();
        prop_assume!(!weighted || n >= c);
        let rows: Vec<usize> = (0..n).collect();
        let cw = if weighted { Some(class_weights(&labels, c).unwrap()) } else { None };
        let obj = Objective { features: &x, labels: &labels, class_weights: cw.as_deref(), weight_decay: wd, num_classes: c };
        let params: Vec<f64> = (0..c * d + c).map(|_| 0.5 * normal(&mut rng)).collect();
        let (w, b) = params.split_at(c * d);
        let mut gw = vec![0.0; c * d];
        let mut gb = vec![0.0; c];
        let loss = obj.loss_and_grad(w, b, &rows, &mut gw, &mut gb);

        // independent loss: per-sample oracle cross-entropy, weighted mean, plus decay
        let f = |p: &[f64]| {
            let (w, b) = p.split_at(c * d);
            let data: f64 = rows.iter().map(|&i| {
                let cwi = cw.as_ref().map_or(1.0, |v| v[labels[i] as usize]);
                cwi * cross_entropy(w, b, x.row(i), labels[i] as usize)
            }).sum::<f64>() / n as f64;
            data + 0.5 * wd * w.iter().map(|v| v * v).sum::<f64>()
        };
        prop_assert!((loss - f(&params)).abs() <= 1e-10 * loss.abs().max(1.0));
        let fd = finite_difference(f, &params, 1e-5);
        let analytic: Vec<f64> = gw.iter().chain(&gb).copied().collect();
        let dev = relative_deviation(&analytic, &fd);
        prop_assert!(dev <= 1e-5, "relative deviation {}", dev);
    }
}

fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 25,
        early_stop_patience: 6,
        batch_size: 8,
        learning_rate: 0.2,
        weight_decay: 1e-4,
        momentum: 0.9,
        schedule: Schedule::Cosine { t_max: 25 },
        class_weighting: ClassWeighting::None,
        seed,
    }
}

fn toy_data(seed: u64) -> (alkit::FeatureMatrix, Vec<u32>) {
    let mut rng = stream(seed, "toy");
    let n = 90;
    let labels: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
    let data: Vec<f32> = labels
        .iter()
        .flat_map(|&y| {
            let center = [y as f64 * 1.5, -(y as f64)];
            center.map(|m| (m + normal(&mut rng)) as f32)
        })
        .collect();
    (alkit::FeatureMatrix::new(n, 2, data).unwrap(), labels)
}

#[test]
fn early_stopping_keeps_best_snapshot() {
    for seed in 0..10 {
        let (x, y) = toy_data(seed);
        let train_rows: Vec<usize> = (0..60).collect();
        let val_rows: Vec<usize> = (60..90).collect();
        let report = train(&x, &y, &train_rows, &val_rows, 3, &toy_config(seed)).unwrap();
        let best = report.history.iter().map(|e| e.val_accuracy).fold(f64::MIN, f64::max);
        assert_eq!(report.best_val_accuracy, best);
        let first = report.history.iter().find(|e| e.val_accuracy == best).unwrap();
        assert_eq!(report.best_epoch, first.epoch);
        let val_labels: Vec<u32> = val_rows.iter().map(|&i| y[i]).collect();
        assert_eq!(report.head.accuracy(&x, &val_rows, &val_labels).unwrap(), best);
        // stopped either at the epoch limit or after `patience` stale epochs
        let last = report.history.last().unwrap().epoch;
        assert!(last + 1 == 25 || last - report.best_epoch == 6, "seed {seed}: last {last}, best {}", report.best_epoch);
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let (x, y) = toy_data(3);
    let rows: Vec<usize> = (0..60).collect();
    let val: Vec<usize> = (60..90).collect();
    let a = train(&x, &y, &rows, &val, 3, &toy_config(11)).unwrap();
    let b = train(&x, &y, &rows, &val, 3, &toy_config(11)).unwrap();
    assert_eq!(a.head, b.head);
    assert_eq!(a.history, b.history);
    let c = train(&x, &y, &rows, &val, 3, &toy_config(12)).unwrap();
    assert_ne!(a.history, c.history);
}
