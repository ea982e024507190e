use alkit::synth::generate_balanced_test;
use alkit::{generate, longtail_counts, train, ClassWeighting, Schedule, SynthSpec, TrainConfig};
use proptest::prelude::*;

fn spec(c: usize, d: usize, max: usize, ratio: f64, sep: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        num_classes: c,
        feature_dim: d,
        max_per_class: max,
        imbalance_ratio: ratio,
        class_separation: sep,
        noise_sigma: 1.0,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn histogram_equals_counts(c in 2usize..12, d in 1usize..6, max in 1usize..200, ratio in 1.0f64..50.0, seed in any::<u64>()) {
        let s = spec(c, d, max, ratio, 2.0, seed);
        let counts = match longtail_counts(c, max, ratio) {
            Ok(counts) => counts,
            Err(_) => {
                // a class would be empty; generation must refuse it as well
                prop_assert!(generate(&s).is_err());
                return Ok(());
            }
        };
        let pool = generate(&s).unwrap();
        let mut hist = vec![0usize; c];
        for &y in &pool.labels {
            hist[y as usize] += 1;
        }
        prop_assert_eq!(&hist, &counts);
        prop_assert_eq!(&pool.counts, &counts);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(counts[0], max);
        prop_assert_eq!(pool.features.rows(), counts.iter().sum::<usize>());
    }

    #[test]
    fn generation_is_pure(c in 2usize..6, seed in any::<u64>()) {
        let s = spec(c, 3, 40, 4.0, 2.0, seed);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        prop_assert_eq!(&a.features, &b.features);
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(&a.means, &b.means);
    }
}

#[test]
fn separation_never_hurts_accuracy() {
    let cfg = TrainConfig {
        epochs: 40,
        early_stop_patience: 40,
        batch_size: 32,
        learning_rate: 0.1,
        weight_decay: 0.0,
        momentum: 0.9,
        schedule: Schedule::Cosine { t_max: 40 },
        class_weighting: ClassWeighting::None,
        seed: 0,
    };
    for seed in 0..3 {
        let mut last = 0.0;
        for sep in [0.5, 2.0, 6.0] {
            let s = spec(5, 8, 120, 3.0, sep, seed);
            let pool = generate(&s).unwrap();
            let (tx, ty) = generate_balanced_test(&s, &pool.means, 60).unwrap();
            let n = pool.labels.len();
            let rows: Vec<usize> = (0..n).filter(|i| i % 5 != 0).collect();
            let val: Vec<usize> = (0..n).filter(|i| i % 5 == 0).collect();
            let head = train(&pool.features, &pool.labels, &rows, &val, 5, &cfg).unwrap().head;
            let all: Vec<usize> = (0..ty.len()).collect();
            let acc = head.accuracy(&tx, &all, &ty).unwrap();
            assert!(acc >= last, "seed {seed}: separation {sep} gave {acc} < {last}");
            last = acc;
        }
    }
}
