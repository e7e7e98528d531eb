use gaitgraph::analysis::saliency_map;
use gaitgraph::data::{fraction_ranges, normalize_cycle, split_ged, GedBoundaries, CYCLE_POINTS};
use gaitgraph::graph::{normalize_adjacency, preprocess_prior};
use gaitgraph::loss::{dft_l1_value, reward_value};
use gaitgraph::net::{Model, ModelConfig, OUTPUT_WEIGHT};
use gaitgraph::signal::{common_average_reference, TrialRecord};
use gaitgraph::tensor::Tensor;
use gaitgraph::train::{pearson_r, RowScaler};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-50.0f64..50.0, rows * cols).prop_map(move |v| Tensor::new(&[rows, cols], v).unwrap())
}

proptest! {
    #[test]
    fn pearson_ignores_positive_affine_maps(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        scale in 0.01f64..100.0,
        shift in -100.0f64..100.0,
    ) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let moved: Vec<f64> = yhat.iter().map(|v| scale * v + shift).collect();
        if let (Ok(a), Ok(b)) = (pearson_r(&y, &yhat), pearson_r(&y, &moved)) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            prop_assert!(a.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn common_average_columns_sum_to_zero(x in matrix(7, 30)) {
        let car = common_average_reference(&x).unwrap();
        for t in 0..30 {
            let s: f64 = (0..7).map(|c| car.at(&[c, t])).sum();
            prop_assert!(s.abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_adjacency_stays_symmetric(a in matrix(6, 6)) {
        let prior = preprocess_prior(&a).unwrap();
        let (n, negative) = normalize_adjacency(&prior).unwrap();
        prop_assert_eq!(negative, 0);
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((n.at(&[i, j]) - n.at(&[j, i])).abs() < 1e-12);
                prop_assert!(n.at(&[i, j]) >= 0.0);
            }
        }
    }

    #[test]
    fn reward_lowers_moderate_losses(l in 1e-6f64..13.0) {
        prop_assert!(reward_value(l, 0.1, 1e-6) < l);
    }

    #[test]
    fn dft_distance_is_a_symmetric_nonnegative_gap(a in matrix(8, 3), b in matrix(8, 3)) {
        let ab = dft_l1_value(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - dft_l1_value(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert_eq!(dft_l1_value(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn cycle_endpoints_survive_resampling(len in 2usize..900, seed in 0u64..1000) {
        let x = Tensor::from_fn(&[3, len], |i| ((i as u64 * 31 + seed) % 97) as f64 - 48.0);
        let c = normalize_cycle(&x, 0, len - 1).unwrap();
        prop_assert_eq!(c.curves.shape(), &[3, CYCLE_POINTS]);
        for j in 0..3 {
            prop_assert_eq!(c.curves.at(&[j, 0]), x.at(&[j, 0]));
            prop_assert_eq!(c.curves.at(&[j, CYCLE_POINTS - 1]), x.at(&[j, len - 1]));
        }
    }

    #[test]
    fn fraction_ranges_tile_the_session(len in 10usize..100_000, train in 0.05f64..0.7, val in 0.05f64..0.25) {
        let [a, b, c] = fraction_ranges(len, train, val).unwrap();
        prop_assert_eq!(a.start, 0);
        prop_assert_eq!(a.end, b.start);
        prop_assert_eq!(b.end, c.start);
        prop_assert_eq!(c.end, len);
    }

    #[test]
    fn ged_split_partitions_the_trials(n in 4usize..60, first in 1usize..12, second in 1usize..12) {
        let trial = |b: u32, t: u32| {
            TrialRecord::new(Tensor::zeros(&[1, 2]), Tensor::zeros(&[6, 2]), 100.0, vec!["Cz".into()])
                .unwrap()
                .with_ids(1, b, t)
        };
        let mut trials = Vec::new();
        for (b, count) in [(1u32, first), (2, second), (3, n)] {
            trials.extend((1..=count as u32).map(|t| trial(b, t)));
        }
        let bounds = GedBoundaries::proportional(n);
        prop_assume!(0 < bounds.train_end && bounds.train_end < bounds.val_end && bounds.val_end < n);
        let s = split_ged(&trials, &bounds).unwrap();
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), trials.len());
        prop_assert_eq!(s.train.len(), first + second + bounds.train_end);
        prop_assert!(s.test.iter().all(|t| t.block_id == 3 && t.trial_id as usize > bounds.val_end));
    }

    #[test]
    fn row_scaler_round_trips(x in matrix(4, 25)) {
        let s = RowScaler::fit(&[&x]).unwrap();
        let back = s.invert(&s.apply(&x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn saliency_ranking_ignores_output_rescaling(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let cfg = ModelConfig::reduced();
        let prior = preprocess_prior(&Tensor::zeros(&[cfg.channels, cfg.channels])).unwrap();
        let model = Model::new(cfg.clone(), &prior, seed).unwrap();
        let mut scaled = model.clone();
        let w = scaled.params.get(OUTPUT_WEIGHT).unwrap().map(|v| v * scale);
        scaled.params.set(OUTPUT_WEIGHT, w).unwrap();
        let windows: Vec<Tensor> = (0..3)
            .map(|k| Tensor::from_fn(&[cfg.channels, cfg.window], |i| (((i + k * 131) as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0))
            .collect();
        let names: Vec<String> = (0..cfg.channels).map(|c| format!("ch{c}")).collect();
        let a = saliency_map(&model, &windows, &names, 2).unwrap();
        let b = saliency_map(&scaled, &windows, &names, 2).unwrap();
        let (ra, rb) = (a.ranking(), b.ranking());
        // ties aside, the order must match
        for w in ra.windows(2) {
            if a.scores[w[0]] > a.scores[w[1]] * (1.0 + 1e-9) {
                let pa = rb.iter().position(|&i| i == w[0]).unwrap();
                let pb = rb.iter().position(|&i| i == w[1]).unwrap();
                prop_assert!(pa < pb);
            }
        }
        for (x, y) in a.normalized.iter().zip(&b.normalized) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
