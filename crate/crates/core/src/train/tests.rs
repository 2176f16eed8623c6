use super::*;
use crate::models::{ModelConfig, ModelKind};
use crate::preprocess::{fit_scaler, transform};
use alloc::string::ToString;
use proptest::prelude::*;

fn frame(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> SeriesFrame {
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            values.push(f(r, c));
        }
    }
    SeriesFrame::dense(
        (0..cols).map(|c| format!("s{c}")).collect(),
        (0..rows as i64).map(|r| r * 86_400).collect(),
        values,
    )
    .unwrap()
}

fn small_config(channels: usize) -> ModelConfig {
    ModelConfig {
        input_len: 12,
        label_len: 6,
        horizon: 4,
        channels,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        moving_avg_kernel: 5,
        autocorr_factor: 1.0,
        dropout: 0.0,
        seed: 3,
    }
}

#[test]
fn split_counts() {
    let spec = SplitSpec::default();
    let lens = |rows| spec.ranges(rows).unwrap().map(|r| r.len());
    assert_eq!(lens(100), [60, 20, 20]);
    assert_eq!(lens(10), [6, 2, 2]);
    assert_eq!(lens(101), [61, 20, 20]);
    let f = frame(100, 1, |r, _| r as f64);
    let s = split(&f, &spec, 10, 5).unwrap();
    assert_eq!(s.train.rows(), 60);
    assert!(s.train.timestamps.last() < s.val.timestamps.first());
    assert!(s.val.timestamps.last() < s.test.timestamps.first());
    assert_eq!(
        split(&frame(17, 1, |_, _| 0.0), &spec, 10, 5),
        Err(TrainError::TooFewRows { rows: 17, min: 18 })
    );
    let bad = SplitSpec {
        train: 0.5,
        val: 0.2,
        test: 0.2,
    };
    assert!(matches!(bad.ranges(10), Err(TrainError::Fractions(_))));
}

#[test]
fn window_examples() {
    let f = frame(20, 2, |r, c| (r * 10 + c) as f64);
    assert_eq!(make_windows(&f, 12, 8, 1).len(), 1);
    let g = frame(24, 2, |r, c| (r * 10 + c) as f64);
    let w = make_windows(&g, 12, 8, 1);
    assert_eq!(w.len(), 5);
    assert_eq!(w[1].context.at(0, 1), 11.0);
    assert_eq!(w[1].target.at(0, 0), 130.0);
    assert_eq!(w[1].target_times[0], w[1].context_times[11] + 86_400);
    assert!(make_windows(&g, 20, 8, 1).is_empty());
}

#[test]
fn leakage_guard() {
    let f = frame(100, 1, |r, _| r as f64);
    let s = split(&f, &SplitSpec::default(), 5, 3).unwrap();
    let test = make_windows(&s.test, 5, 3, 1);
    check_no_leakage(&s.train, &test).unwrap();
    let overlapping = make_windows(&f, 5, 3, 1);
    assert!(matches!(
        check_no_leakage(&s.train, &overlapping),
        Err(TrainError::Leakage { .. })
    ));
}

#[test]
fn zero_epochs_leaves_parameters() {
    let m = Model::new(ModelKind::Autoformer, small_config(1)).unwrap();
    let f = frame(40, 1, |r, _| (r % 7) as f64);
    let w = make_windows(&f, 12, 4, 1);
    let opts = TrainOptions {
        epochs: 0,
        ..TrainOptions::default()
    };
    let out = train(&m, &w, &w, &opts).unwrap();
    assert_eq!(parameter_fingerprint(&out.model), parameter_fingerprint(&m));
    assert!(out.history.is_empty());
}

#[test]
fn constant_series_is_learned() {
    let f = frame(60, 1, |_, _| 0.7);
    let w = make_windows(&f, 12, 4, 1);
    let m = Model::new(ModelKind::Autoformer, small_config(1)).unwrap();
    let opts = TrainOptions {
        epochs: 50,
        batch_size: 8,
        patience: 50,
        seed: 1,
        ..TrainOptions::default()
    };
    let out = train(&m, &w, &w[..4], &opts).unwrap();
    let best = out
        .history
        .iter()
        .map(|r| r.train_loss)
        .fold(f64::INFINITY, f64::min);
    assert!(best < 1e-6, "best training loss {best}");
    assert!(mean_loss(&out.model, &w).unwrap() < 1e-6);
}

#[test]
fn training_is_deterministic_and_returns_best_epoch() {
    let f = frame(80, 2, |r, c| {
        libm::sin(r as f64 * 0.9 + c as f64) + 0.1 * (r % 3) as f64
    });
    let w = make_windows(&f, 12, 4, 1);
    let (tr, va) = w.split_at(50);
    let m = Model::new(ModelKind::Autoformer, small_config(2)).unwrap();
    let opts = TrainOptions {
        epochs: 6,
        batch_size: 8,
        learning_rate: 5e-3,
        patience: 2,
        seed: 9,
    };
    let a = train(&m, tr, va, &opts).unwrap();
    let b = train(&m, tr, va, &opts).unwrap();
    let bits = |o: &TrainOutcome| -> Vec<(u64, u64)> {
        o.history
            .iter()
            .map(|r| (r.train_loss.to_bits(), r.val_loss.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.model, b.model);
    let best = a
        .history
        .iter()
        .min_by(|x, y| x.val_loss.total_cmp(&y.val_loss))
        .unwrap();
    assert_eq!(a.best_epoch, Some(best.epoch));
    let recomputed = mean_loss(&a.model, va).unwrap();
    assert_eq!(recomputed.to_bits(), best.val_loss.to_bits());
    // patience: training stops `patience` epochs after the best one at most
    assert!(a.history.len() <= best.epoch + 1 + opts.patience);
}

#[test]
fn evaluate_perfect_and_persistence() {
    let f = frame(40, 1, |_, _| 5.0);
    let scaler = fit_scaler(&f, 0..24).unwrap();
    let scaled = transform(&f, &scaler).unwrap();
    let w = make_windows(&scaled, 12, 4, 1);
    let mut cfg = small_config(1);
    cfg.seed = 1;
    let p = Model::new(ModelKind::Persistence, cfg).unwrap();
    let m = evaluate(&p, &w, &scaler).unwrap();
    assert_eq!(m.mse, 0.0);
    assert_eq!(m.mse_original, 0.0);
    assert_eq!(m.peak_ratio, 1.0);
    assert_eq!(m.model, "persistence");
    assert!(matches!(
        evaluate(&p, &[], &scaler),
        Err(TrainError::NoWindows(_))
    ));
}

#[test]
fn evaluate_metrics_match_direct_computation() {
    let f = frame(30, 2, |r, c| 10.0 + ((r * 7 + c * 3) % 11) as f64);
    let scaler = fit_scaler(&f, 0..18).unwrap();
    let scaled = transform(&f, &scaler).unwrap();
    let w = make_windows(&scaled, 12, 4, 3);
    let mut cfg = small_config(2);
    cfg.seed = 1;
    let p = Model::new(ModelKind::Persistence, cfg).unwrap();
    let m = evaluate(&p, &w, &scaler).unwrap();
    let (mut se, mut ratios) = (0.0, Vec::new());
    for i in 0..w.len() {
        let start = i * 3;
        for c in 0..2 {
            let last = f.get(start + 11, c);
            let actual: Vec<f64> = (0..4).map(|j| f.get(start + 12 + j, c)).collect();
            se += actual.iter().map(|a| (a - last) * (a - last)).sum::<f64>();
            ratios.push(last / actual.iter().cloned().fold(f64::MIN, f64::max));
        }
    }
    let n = (w.len() * 8) as f64;
    assert!((m.mse_original - se / n).abs() < 1e-9);
    let ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((m.peak_ratio - ratio).abs() < 1e-12);
    assert_eq!(m.windows, w.len());
    assert_eq!(m.model.to_string(), "persistence");
}

proptest! {
    #[test]
    fn window_count_matches_enumeration(rows in 0usize..200, l in 1usize..40, h in 1usize..40, stride in 1usize..50) {
        let mut expected = 0;
        let mut s = 0;
        while s + l + h <= rows {
            expected += 1;
            s += stride;
        }
        prop_assert_eq!(window_count(rows, l, h, stride), expected);
        if stride == h && rows >= l + h {
            prop_assert_eq!(window_count(rows, l, h, stride), (rows - l) / h);
        }
    }

    #[test]
    fn splits_are_contiguous_and_exhaustive(rows in 3usize..5000) {
        let [a, b, c] = SplitSpec::default().ranges(rows).unwrap();
        prop_assert_eq!(a.start, 0);
        prop_assert_eq!(a.end, b.start);
        prop_assert_eq!(b.end, c.start);
        prop_assert_eq!(c.end, rows);
        prop_assert_eq!(b.len(), rows / 5);
        prop_assert_eq!(c.len(), rows / 5);
    }
}
