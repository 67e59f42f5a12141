mod common;

use adaptergnn::gin::{init_params, Forward, Mode};
use adaptergnn::peft::{apply_peft, PeftMode};
use adaptergnn::train::{collect_grads, train_step, Adam, TrainConfig};
use adaptergnn::SeedStream;
use common::*;

#[test]
fn frozen_tensors_survive_training_in_every_mode() {
    for mode in PeftMode::ALL {
        let out = freeze_invariance(mode);
        assert!(out.changed_frozen.is_empty(), "{mode}: {:?}", out.changed_frozen);
        assert!(out.trainable_moved, "{mode}: nothing trained");
        if mode != PeftMode::Full {
            assert!(out.frozen > 0, "{mode} froze nothing");
        }
    }
}

#[test]
fn zero_scales_reproduce_backbone_bitwise() {
    assert_eq!(zero_scale_mismatches(5), 0);
}

#[test]
fn small_scales_obey_triangle_bound() {
    let out = triangle_bound(0.01, 5);
    assert_eq!(out.violations, 0);
    assert!(out.max_deviation > 0.0);
    assert!(out.max_ratio <= 1.0 + 1e-9, "{}", out.max_ratio);
}

#[test]
fn lora_merge_preserves_logits() {
    assert!(lora_merge_max_diff(10) < 1e-9);
}

#[test]
fn adaptergnn_fractions_and_formulas() {
    let b15 = adaptergnn_ratio(15);
    assert_eq!(b15.trainable, b15.expected_trainable);
    assert_eq!(b15.total, b15.expected_total);
    assert!((0.040..=0.067).contains(&b15.fraction), "{}", b15.fraction);
    let b5 = adaptergnn_ratio(5);
    assert_eq!(b5.trainable, b5.expected_trainable);
    assert_eq!(b5.total, b5.expected_total);
    assert!((0.015..=0.029).contains(&b5.fraction), "{}", b5.fraction);
}

#[test]
fn bitfit_count() {
    assert_eq!(bitfit_trainable(), 4801);
}

#[test]
fn one_step_lowers_batch_loss_in_every_mode() {
    let mut cfg = small_model(8, 2, 2);
    cfg.dropout = 0.0;
    let data = planted(24, 4);
    let batch = whole_batch(&data);
    let loss = |reg: &mut adaptergnn::registry::ParamRegistry| {
        let mut f = Forward::new(reg, &cfg, Mode::Train, SeedStream::new(0));
        let (_, l) = f.loss(&batch).unwrap();
        f.tape.value(l).data()[0]
    };
    for mode in PeftMode::ALL {
        let mut reg = init_params(&cfg, 2).unwrap();
        if mode != PeftMode::Full {
            apply_peft(&mut reg, &cfg, &small_peft(mode), 2).unwrap();
        }
        let before = loss(&mut reg);
        let tc = TrainConfig {
            lr: 1e-3,
            ..Default::default()
        };
        train_step(&mut reg, &cfg, &batch, &mut Adam::new(), &tc, SeedStream::new(0)).unwrap();
        let after = loss(&mut reg);
        assert!(after < before, "{mode}: {before} -> {after}");
    }
}

#[test]
fn only_trainable_tensors_receive_gradients() {
    let cfg = small_model(8, 2, 2);
    let batch = whole_batch(&planted(8, 5));
    for mode in PeftMode::ALL {
        let mut reg = init_params(&cfg, 3).unwrap();
        if mode != PeftMode::Full {
            apply_peft(&mut reg, &cfg, &small_peft(mode), 3).unwrap();
        }
        let trainable = reg.trainable_names();
        let mut f = Forward::new(&mut reg, &cfg, Mode::Train, SeedStream::new(0));
        let (_, l) = f.loss(&batch).unwrap();
        let grads = collect_grads(&f, l);
        let names: Vec<String> = grads.keys().cloned().collect();
        assert_eq!(names, trainable, "{mode}");
    }
}
