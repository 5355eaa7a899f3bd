use std::collections::HashSet;

use alstm_core::eval::{
    accuracy, confidence_histogram, mcc, predict, predict_attacked, MetricsReport, PredictionRecord,
};
use alstm_core::market::{
    align_trading_days, compute_features, label_and_window, EodRecord, Example, FeatureVector,
    Label, SplitSpec, NUM_FEATURES,
};
use alstm_core::nn::layers::softmax;
use alstm_core::nn::{Model, ModelDims, ParamSet, Tensor};
use alstm_core::synthetic::price_fixture;
use alstm_core::train::{adversarial_perturbation, hinge_loss, random_perturbation};
use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 6, 1).unwrap() + Days::new(i as u64)
}

fn records_from(closes: &[f64]) -> Vec<EodRecord> {
    closes
        .iter()
        .enumerate()
        .map(|(i, &c)| EodRecord {
            date: day(i),
            open: c * 1.001,
            high: c * 1.01,
            low: c * 0.99,
            close: c,
            adj_close: c * 0.97,
            volume: 1e4,
        })
        .collect()
}

fn record(stock: &str, date: NaiveDate, confidence: f64, label: Label) -> PredictionRecord {
    PredictionRecord {
        stock_id: stock.into(),
        anchor_date: date,
        label,
        confidence,
        predicted: Label::from_score(confidence),
    }
}

fn labels() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Up), Just(Label::Down)]
}

fn records_strategy() -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec((-3.0f64..3.0, labels()), 1..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (c, l))| record("S", day(i), c, l))
            .collect()
    })
}

fn random_example(lag: usize, seed: u64) -> Example {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Example {
        stock_id: "X".into(),
        anchor_date: day(0),
        window: (0..lag)
            .map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(-0.2..0.2))))
            .collect(),
        label: if rng.random_bool(0.5) {
            Label::Up
        } else {
            Label::Down
        },
        movement_percent: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn constant_prices_have_zero_features(price in 0.01f64..1e4, extra in 0usize..20) {
        let records = records_from(&vec![price; 30 + extra]);
        let flat: Vec<EodRecord> = records
            .iter()
            .map(|r| EodRecord { open: price, high: price, low: price, adj_close: price, ..*r })
            .collect();
        for t in 29..flat.len() {
            prop_assert_eq!(compute_features(&flat, t).unwrap().0, [0.0; NUM_FEATURES]);
        }
    }

    #[test]
    fn older_history_does_not_change_features(
        closes in prop::collection::vec(5.0f64..50.0, 30..45),
        prefix in prop::collection::vec(5.0f64..50.0, 1..20),
    ) {
        let base = records_from(&closes);
        let mut all = prefix.clone();
        all.extend_from_slice(&closes);
        let longer = records_from(&all);
        let t = closes.len() - 1;
        prop_assert_eq!(
            compute_features(&base, t).unwrap(),
            compute_features(&longer, t + prefix.len()).unwrap()
        );
    }

    #[test]
    fn splits_partition_the_labeled_anchors(seed in 0u64..1000, lag in 1usize..8, stocks in 1usize..4) {
        let series = price_fixture(stocks, 90, seed, None);
        let market = align_trading_days(&series, 0.98).unwrap();
        let cal = &market.calendar;
        let spec = SplitSpec {
            train_end: cal[55],
            val_end: cal[68],
            test_end: cal[82],
            lag,
            pos_threshold: SplitSpec::DEFAULT_POS_THRESHOLD,
            neg_threshold: SplitSpec::DEFAULT_NEG_THRESHOLD,
        };
        let out = label_and_window(&market, &spec).unwrap();

        let mut seen = HashSet::new();
        for ex in out.train.iter().chain(&out.validation).chain(&out.test) {
            prop_assert!(seen.insert((ex.stock_id.clone(), ex.anchor_date)));
            prop_assert!(ex.movement_percent >= 0.55 || ex.movement_percent <= -0.5);
            prop_assert_eq!(ex.window.len(), lag);
        }
        prop_assert!(out.train.iter().all(|e| e.anchor_date < cal[55]));
        prop_assert!(out.validation.iter().all(|e| e.anchor_date >= cal[55] && e.anchor_date < cal[68]));
        prop_assert!(out.test.iter().all(|e| e.anchor_date >= cal[68] && e.anchor_date < cal[82]));

        // independent count of anchors with a full window and a decisive next-day move
        let mut expected = 0;
        for s in &market.series {
            let adj: Vec<f64> = s.records.iter().map(|r| r.adj_close).collect();
            for a in 0..adj.len() - 1 {
                let window_start = a as i64 - lag as i64 + 1;
                if window_start < 29 || s.records[a].date >= cal[82] {
                    continue;
                }
                let mv = (adj[a + 1] / adj[a] - 1.0) * 100.0;
                if mv >= 0.55 || mv <= -0.5 {
                    expected += 1;
                }
            }
        }
        prop_assert_eq!(seen.len(), expected);
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        logits in prop::collection::vec(-30.0f64..30.0, 1..20),
        c in -50.0f64..50.0,
    ) {
        let w = softmax(&logits);
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (a, b) in w.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn model_attention_weights_are_a_distribution(seed in 0u64..500, lag in 1usize..12) {
        let model = Model::init(ModelDims::attentive(11, 4, 5, lag), seed).unwrap();
        let trace = model.forward(&random_example(lag, seed).window).unwrap();
        let att = trace.attention.unwrap();
        prop_assert!(att.weights.iter().all(|&w| w > 0.0));
        prop_assert!((att.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_parameters_score_the_output_bias(seed in 0u64..500, bias in -3.0f64..3.0) {
        let dims = ModelDims::attentive(11, 3, 4, 5);
        let mut params = ParamSet::zeros(&dims);
        params.b_out = Tensor::scalar(bias);
        let model = Model::new(dims, params).unwrap();
        prop_assert_eq!(model.predict(&random_example(5, seed).window).unwrap(), bias);
    }

    #[test]
    fn forward_and_backward_are_deterministic(seed in 0u64..500) {
        let model = Model::init(ModelDims::attentive(11, 4, 4, 3), seed).unwrap();
        let ex = random_example(3, seed + 1);
        let a = model.forward(&ex.window).unwrap();
        let b = model.forward(&ex.window).unwrap();
        prop_assert_eq!(&a, &b);
        let terms = [alstm_core::nn::HeadTerm::clean(-1.0)];
        prop_assert_eq!(model.backward(&a, &terms).unwrap(), model.backward(&b, &terms).unwrap());
    }

    #[test]
    fn adversarial_perturbation_has_radius_epsilon(
        w in prop::collection::vec(-2.0f64..2.0, 2..16),
        eps in 1e-4f64..2.0,
        y in prop_oneof![Just(1.0), Just(-1.0)],
    ) {
        prop_assume!(w.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6);
        let r = adversarial_perturbation(&w, y, 0.0, eps).unwrap().unwrap();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - eps).abs() < 1e-9);
    }

    #[test]
    fn fast_gradient_direction_is_optimal_for_a_linear_head(
        w in prop::collection::vec(-2.0f64..2.0, 2..10),
        e in prop::collection::vec(-1.0f64..1.0, 10),
        eps in 0.01f64..1.0,
        seed in 0u64..1000,
    ) {
        let e = &e[..w.len()];
        let score = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let y = 1.0;
        let s = score(e);
        prop_assume!(1.0 - y * s > 0.0);
        prop_assume!(w.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6);
        let r = adversarial_perturbation(&w, y, s, eps).unwrap().unwrap();
        let moved: Vec<f64> = e.iter().zip(&r).map(|(a, b)| a + b).collect();
        let best = hinge_loss(y, score(&moved)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let d = random_perturbation(w.len(), eps, &mut rng).unwrap();
            let other: Vec<f64> = e.iter().zip(&d).map(|(a, b)| a + b).collect();
            prop_assert!(best >= hinge_loss(y, score(&other)).unwrap() - 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_record_order(records in records_strategy(), seed in 0u64..100) {
        use rand::seq::SliceRandom;
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(accuracy(&records).unwrap(), accuracy(&shuffled).unwrap());
        prop_assert_eq!(mcc(&records), mcc(&shuffled));
    }

    #[test]
    fn mcc_is_bounded_and_odd(records in records_strategy()) {
        let m = mcc(&records);
        prop_assert!((-1.0..=1.0).contains(&m));
        let flipped: Vec<PredictionRecord> = records
            .iter()
            .map(|r| record(&r.stock_id, r.anchor_date, -r.confidence - 1e-300, r.label))
            .collect();
        let report = MetricsReport::from_records(&records).unwrap();
        let c = report.confusion;
        let zero_denominator = (c.tp + c.fp == 0) || (c.tp + c.fn_ == 0) || (c.tn + c.fp == 0) || (c.tn + c.fn_ == 0);
        if !zero_denominator {
            prop_assert!((mcc(&flipped) + m).abs() < 1e-12);
        }
        prop_assert_eq!(c.tp + c.tn + c.fp + c.fn_, records.len() as u64);
    }

    #[test]
    fn histogram_counts_cover_all_records(records in records_strategy(), bins in 2usize..40) {
        let h = confidence_histogram(&records, bins, -1.0, 1.0).unwrap();
        prop_assert_eq!(h.bins.iter().map(|b| b.count).sum::<u64>(), records.len() as u64);
    }

    #[test]
    fn zero_radius_attack_changes_nothing(seed in 0u64..200) {
        let model = Model::init(ModelDims::attentive(11, 3, 3, 4), seed).unwrap();
        let examples: Vec<Example> = (0..12).map(|i| random_example(4, seed * 31 + i)).collect();
        let clean = predict(&model, &examples).unwrap();
        let attacked = predict_attacked(&model, &examples, 0.0).unwrap();
        prop_assert_eq!(&clean, &attacked);
        prop_assert_eq!(
            MetricsReport::from_records(&clean).unwrap(),
            MetricsReport::from_records(&attacked).unwrap()
        );
    }
}
