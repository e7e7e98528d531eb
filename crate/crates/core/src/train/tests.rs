use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::graph::preprocess_prior;
use crate::loss::{LossConfig, LossKind};
use crate::net::{Model, ModelConfig};
use crate::signal::TrialRecord;
use crate::tensor::Tensor;

const NAMES: [&str; 8] = ["F3", "Fz", "F4", "C3", "Cz", "C4", "P3", "P4"];

fn tiny_model(seed: u64) -> Model {
    let cfg = ModelConfig::reduced();
    let prior = preprocess_prior(&Tensor::zeros(&[cfg.channels, cfg.channels])).unwrap();
    Model::new(cfg, &prior, seed).unwrap()
}

fn noisy_trial(seed: u64, t: usize) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = Tensor::from_fn(&[6, t], |i| {
        let (k, s) = (i / t, (i % t) as f64);
        (s * 0.06 + k as f64).sin()
    });
    let j = joints.data().to_vec();
    let eeg = Tensor::from_fn(&[8, t], |i| {
        let (c, s) = (i / t, i % t);
        j[(c % 6) * t + s] + 0.3 * rng.gen_range(-1.0..1.0)
    });
    TrialRecord::new(eeg, joints, 100.0, NAMES.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn tiny_cfg(epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 20,
        max_epochs: epochs,
        patience,
        stride: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn sets() -> (WindowSet, WindowSet) {
    (
        WindowSet::new(vec![noisy_trial(1, 400)], 81, 10).unwrap(),
        WindowSet::new(vec![noisy_trial(2, 200)], 81, 10).unwrap(),
    )
}

#[test]
fn stopping_rule_arithmetic() {
    let mut s = EarlyStopping::new(30);
    assert_eq!(s.observe(1, 0.5), Verdict::Improved);
    for e in 2..31 {
        assert_eq!(s.observe(e, 0.5), Verdict::Wait);
    }
    assert_eq!(s.observe(31, 0.5), Verdict::Stop);
    assert_eq!(s.best_epoch(), 1);

    let mut s = EarlyStopping::new(2);
    assert_eq!(s.observe(1, f64::NAN), Verdict::Wait);
    assert_eq!(s.observe(2, 0.1), Verdict::Improved);
}

#[test]
fn frozen_validation_stops_after_patience_and_restores_best() {
    let (train_set, _) = sets();
    let cfg = tiny_cfg(6, 3);
    let mut digests = Vec::new();
    let out = train_with_validator(tiny_model(0), &train_set, &cfg, None, |m, _| {
        digests.push(m.params.digest());
        Ok(0.25)
    })
    .unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(out.stop, StopReason::Patience);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.model.params.digest(), digests[0]);
    assert_ne!(digests[0], digests[3]);
}

#[test]
fn improving_validation_runs_every_epoch() {
    let (train_set, _) = sets();
    let cfg = tiny_cfg(4, 2);
    let mut last = String::new();
    let out = train_with_validator(tiny_model(0), &train_set, &cfg, None, |m, e| {
        last = m.params.digest();
        Ok(e as f64)
    })
    .unwrap();
    assert_eq!(out.stop, StopReason::MaxEpochs);
    assert_eq!((out.history.len(), out.best_epoch), (4, 4));
    assert_eq!(out.model.params.digest(), last);
}

#[test]
fn same_seed_same_log() {
    let (train_set, val) = sets();
    let cfg = tiny_cfg(2, 2);
    let run = || {
        let mut log = Vec::new();
        let out = train(tiny_model(5), &train_set, &val, &cfg, Some(&mut log)).unwrap();
        (log, out.model.params.digest())
    };
    let (a, da) = run();
    let (b, db) = run();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(da, db);
    let first: serde_json::Value = serde_json::from_str(std::str::from_utf8(&a).unwrap().lines().next().unwrap()).unwrap();
    assert!(first["L_time"].is_number() && first["L_total"].is_number());
}

#[test]
fn training_reduces_loss() {
    let (train_set, val) = sets();
    let cfg = TrainConfig {
        lr: 3e-3,
        loss: LossConfig::for_kind(LossKind::Mse),
        ..tiny_cfg(8, 8)
    };
    let out = train(tiny_model(1), &train_set, &val, &cfg, None).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn divergence_keeps_last_good_model() {
    let (train_set, _) = sets();
    let cfg = TrainConfig { lr: 1e300, ..tiny_cfg(3, 3) };
    let start = tiny_model(0);
    let out = train_with_validator(start.clone(), &train_set, &cfg, None, |_, _| Ok(0.0)).unwrap();
    match out.stop {
        StopReason::NonFinite(_) => {
            assert!(out.model.params.iter().all(|(_, p)| p.value.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_contract() {
    assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { patience: 51, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { contiguous: false, ..TrainConfig::default() }.validate().is_err());
    let mse = TrainConfig {
        contiguous: false,
        loss: LossConfig::for_kind(LossKind::Mse),
        ..TrainConfig::default()
    };
    assert!(mse.validate().is_ok());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn evaluation_is_batch_size_invariant() {
    let (_, val) = sets();
    let m = tiny_model(2);
    let a = evaluate(&m, &val, 1, None).unwrap();
    let b = evaluate(&m, &val, 100, None).unwrap();
    let (pa, pb) = (val.predict(&m, 1).unwrap(), val.predict(&m, 100).unwrap());
    assert!(pa.max_abs_diff(&pb) < 1e-12);
    assert!((a.mean_r() - b.mean_r()).abs() < 1e-12);
}

#[test]
fn undefined_metric_bubbles_from_constant_model() {
    let (_, val) = sets();
    let mut m = tiny_model(2);
    let w = m.params.get(crate::net::OUTPUT_WEIGHT).unwrap().shape().to_vec();
    m.params.set(crate::net::OUTPUT_WEIGHT, Tensor::zeros(&w)).unwrap();
    let rep = evaluate(&m, &val, 50, None).unwrap();
    assert!(rep.r.is_none());
    assert_eq!(rep.undefined.iter().filter(|u| u.contains("r:")).count(), 6);
    assert!(matches!(
        pearson_r(&[1.0, 1.0], &[0.0, 1.0]),
        Err(Error::UndefinedMetric(_))
    ));
}
