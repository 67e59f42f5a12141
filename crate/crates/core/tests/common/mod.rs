//! Checks shared by the acceptance harness and the integration tests.
//!
//! Each check returns its measurements; callers decide how to assert or
//! report them.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use adaptergnn::config::ExperimentConfig;
use adaptergnn::flops::{estimate_flops, FlopReport, Phase};
use adaptergnn::gin::{init_params, layer_prefix, predict, Forward, Mode, ModelConfig};
use adaptergnn::gradcheck::{compare, numeric_gradient, relative_error, CheckReport, STEP};
use adaptergnn::graph::{generate_synthetic, Dataset, GraphBatch, SyntheticSpec, Vocab};
use adaptergnn::metrics::roc_auc;
use adaptergnn::peft::{adapter_forward, apply_peft, lora_merge, PeftConfig, PeftMode};
use adaptergnn::registry::{Group, ParamRegistry};
use adaptergnn::sweep::{median, run_all, RunResult, RunSpec};
use adaptergnn::tape::{Tape, Var};
use adaptergnn::train::{collect_grads, train_supervised, TrainConfig};
use adaptergnn::{Error, Result, SeedStream, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMALL_VOCAB: Vocab = Vocab {
    node: [3, 2],
    edge: [2, 2],
};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn data_file(name: &str) -> PathBuf {
    manifest_dir().join("tests").join("data").join(name)
}

/// Pinned experiment configs shipped at the workspace root.
pub fn config_file(name: &str) -> PathBuf {
    manifest_dir().join("..").join("..").join("configs").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

pub fn planted(n_graphs: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        n_graphs,
        min_nodes: 6,
        max_nodes: 12,
        vocab: SMALL_VOCAB,
        n_tasks: 2,
        missing_rate: 0.1,
        ..Default::default()
    };
    generate_synthetic(&spec, seed).expect("valid synthetic spec")
}

pub fn small_model(d: usize, layers: usize, tasks: usize) -> ModelConfig {
    ModelConfig {
        vocab: SMALL_VOCAB,
        ..ModelConfig::with_emb(d, layers, tasks)
    }
}

/// Tuning config valid at small widths for every mode.
pub fn small_peft(mode: PeftMode) -> PeftConfig {
    PeftConfig {
        bottleneck: 2,
        lora_rank: 2,
        partial_k: 1,
        ..PeftConfig::new(mode)
    }
}

pub fn whole_batch(data: &Dataset) -> GraphBatch {
    let idx: Vec<usize> = (0..data.len()).collect();
    GraphBatch::from_dataset(data, &idx).expect("non-empty dataset")
}

// ---------------------------------------------------------------------------
// Gradient checks

type OpFn<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

fn readout_weights(shape: &[usize]) -> Tensor {
    let mut r = rng(0x5eed);
    random_tensor(shape, 1.0, &mut r)
}

/// `Σ W ⊙ f(inputs)` with fixed random `W`, so every output entry matters.
fn reduce(tape: &mut Tape, vars: &[Var], f: &OpFn<'_>) -> Var {
    let out = f(tape, vars).expect("op accepts its inputs");
    let w = tape.constant(readout_weights(tape.value(out).shape()));
    let prod = tape.mul(out, w).expect("same shape");
    tape.sum(prod)
}

/// Analytic gradients of every input against central differences.
pub fn check_op(inputs: &[Tensor], f: &OpFn<'_>) -> CheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = reduce(&mut tape, &vars, f);
    let grads = tape.backward(loss);
    let mut report = CheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .data(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let numeric = numeric_gradient(input.data(), STEP, |x| {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, inp)| {
                    if j == i {
                        t.param(Tensor::new(inp.shape().to_vec(), x.to_vec()).expect("same shape"))
                    } else {
                        t.param(inp.clone())
                    }
                })
                .collect();
            let l = reduce(&mut t, &vs, f);
            t.value(l).data()[0]
        });
        report = report.merge(compare(&analytic, &numeric));
    }
    report
}

pub const OP_NAMES: [&str; 18] = [
    "matmul",
    "add",
    "add_row",
    "mul_scalar",
    "scale_by",
    "mul",
    "mul_row",
    "relu",
    "sigmoid",
    "dropout",
    "gather",
    "scatter_sum",
    "segment_mean",
    "batch_norm_train",
    "batch_norm_eval",
    "row_sum",
    "sum",
    "bce_with_logits",
];

/// One seeded trial of the named op.
pub fn op_trial(name: &str, trial: u64) -> CheckReport {
    let mut r = rng(trial.wrapping_mul(7919) ^ name.len() as u64 ^ (name.as_bytes()[0] as u64) << 32);
    let m = |r: &mut ChaCha8Rng, s: &[usize]| random_tensor(s, 1.0, r);
    match name {
        "matmul" => check_op(&[m(&mut r, &[4, 3]), m(&mut r, &[3, 2])], &|t, v| t.matmul(v[0], v[1])),
        "add" => check_op(&[m(&mut r, &[3, 4]), m(&mut r, &[3, 4])], &|t, v| t.add(v[0], v[1])),
        "add_row" => check_op(&[m(&mut r, &[3, 4]), m(&mut r, &[4])], &|t, v| t.add_row(v[0], v[1])),
        "mul_scalar" => {
            let c: f64 = r.gen_range(-2.0..2.0);
            check_op(&[m(&mut r, &[3, 4])], &move |t, v| Ok(t.mul_scalar(v[0], c)))
        }
        "scale_by" => check_op(&[m(&mut r, &[3, 4]), m(&mut r, &[1])], &|t, v| t.scale_by(v[0], v[1])),
        "mul" => check_op(&[m(&mut r, &[3, 4]), m(&mut r, &[3, 4])], &|t, v| t.mul(v[0], v[1])),
        "mul_row" => check_op(&[m(&mut r, &[3, 4]), m(&mut r, &[4])], &|t, v| t.mul_row(v[0], v[1])),
        "relu" => check_op(&[m(&mut r, &[3, 4])], &|t, v| Ok(t.relu(v[0]))),
        "sigmoid" => check_op(&[random_tensor(&[3, 4], 4.0, &mut r)], &|t, v| Ok(t.sigmoid(v[0]))),
        "dropout" => check_op(&[m(&mut r, &[3, 4])], &move |t, v| {
            t.dropout(v[0], 0.3, true, &mut rng(trial))
        }),
        "gather" => {
            let idx: Rc<[usize]> = (0..7).map(|_| r.gen_range(0..5)).collect();
            check_op(&[m(&mut r, &[5, 3])], &move |t, v| t.gather(v[0], idx.clone()))
        }
        "scatter_sum" | "segment_mean" => {
            let ids: Rc<[usize]> = (0..7).map(|_| r.gen_range(0..4)).collect();
            let mean = name == "segment_mean";
            check_op(&[m(&mut r, &[7, 3])], &move |t, v| {
                if mean {
                    t.segment_mean(v[0], ids.clone(), 4)
                } else {
                    t.scatter_sum(v[0], ids.clone(), 4)
                }
            })
        }
        "batch_norm_train" => {
            let inputs = [
                random_tensor(&[8, 4], 2.0, &mut r),
                m(&mut r, &[4]),
                m(&mut r, &[4]),
            ];
            check_op(&inputs, &|t, v| Ok(t.batch_norm_train(v[0], v[1], v[2], 1e-5)?.0))
        }
        "batch_norm_eval" => {
            let mean: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..4).map(|_| r.gen_range(0.2..2.0)).collect();
            let inputs = [m(&mut r, &[8, 4]), m(&mut r, &[4]), m(&mut r, &[4])];
            check_op(&inputs, &move |t, v| t.batch_norm_eval(v[0], v[1], v[2], &mean, &var, 1e-5))
        }
        "row_sum" => check_op(&[m(&mut r, &[3, 4])], &|t, v| Ok(t.row_sum(v[0]))),
        "sum" => check_op(&[m(&mut r, &[3, 4])], &|t, v| Ok(t.sum(v[0]))),
        "bce_with_logits" => {
            let targets: Vec<f64> = (0..6).map(|_| r.gen_range(0..2) as f64).collect();
            let mut mask: Vec<bool> = (0..6).map(|_| r.gen_bool(0.7)).collect();
            mask[0] = true;
            check_op(&[random_tensor(&[3, 2], 3.0, &mut r)], &move |t, v| {
                t.bce_with_logits(v[0], &targets, &mask)
            })
        }
        other => panic!("no trial for op `{other}`"),
    }
}

/// Worst report per op over `trials` seeded trials.
pub fn op_suite(trials: u64) -> Vec<(&'static str, CheckReport)> {
    OP_NAMES
        .iter()
        .map(|&name| {
            let report = (0..trials).fold(CheckReport::default(), |acc, t| acc.merge(op_trial(name, t)));
            (name, report)
        })
        .collect()
}

fn train_loss(reg: &mut ParamRegistry, cfg: &ModelConfig, batch: &GraphBatch, stream: SeedStream) -> f64 {
    let mut f = Forward::new(reg, cfg, Mode::Train, stream);
    let (_, loss) = f.loss(batch).expect("loss");
    f.tape.value(loss).data()[0]
}

pub struct EndToEnd {
    pub report: CheckReport,
    /// Coordinates whose ±step stencil straddled a ReLU kink and were
    /// re-measured with a 100× smaller step.
    pub kinks: usize,
}

/// Whole-model gradient check at d=6, L=2. Trials cycle through the tuning
/// modes so every inserted module is covered.
///
/// A coordinate that fails at the standard step is tested for a kink inside
/// the stencil: if the forward and backward one-sided differences disagree
/// the loss is not smooth there, and the central difference is retaken at
/// `STEP / 100`.
pub fn end_to_end_trial(trial: u64) -> EndToEnd {
    let cfg = small_model(6, 2, 2);
    let mode = PeftMode::ALL[trial as usize % PeftMode::ALL.len()];
    let data = planted(4, 1000 + trial);
    let batch = whole_batch(&data);
    let mut reg = init_params(&cfg, trial).expect("valid model");
    if mode != PeftMode::Full {
        let peft = PeftConfig {
            scaling_init: 0.5,
            ..small_peft(mode)
        };
        apply_peft(&mut reg, &cfg, &peft, trial).expect("valid tuning config");
    }
    // Move every tensor off its initialisation: zero-initialised biases put
    // ReLU inputs exactly on the kink for all-zero rows, and a zero LoRA
    // factor hides the other factor's gradient.
    let mut r = rng(trial);
    for (_, p) in reg.params_mut() {
        let noise = random_tensor(p.value.shape(), 0.3, &mut r);
        p.value.data_mut().iter_mut().zip(noise.data()).for_each(|(v, n)| *v += n);
    }
    let stream = SeedStream::new(trial).split("dropout");
    let analytic = {
        let mut f = Forward::new(&mut reg, &cfg, Mode::Train, stream);
        let (_, loss) = f.loss(&batch).expect("loss");
        collect_grads(&f, loss)
    };
    let mut out = EndToEnd {
        report: CheckReport::default(),
        kinks: 0,
    };
    for (name, grad) in &analytic {
        let original = reg.value(name).expect("bound").data().to_vec();
        let mut eval = |x: &[f64]| {
            reg.get_mut(name).expect("present").value.data_mut().copy_from_slice(x);
            train_loss(&mut reg, &cfg, &batch, stream)
        };
        let mut numeric = numeric_gradient(&original, STEP, &mut eval);
        for k in 0..grad.len() {
            if relative_error(grad[k], numeric[k]) < 1e-4 {
                continue;
            }
            let mut probe = original.clone();
            let at = |v: f64, probe: &mut Vec<f64>, eval: &mut dyn FnMut(&[f64]) -> f64| {
                probe[k] = v;
                eval(probe)
            };
            let x = original[k];
            let mid = at(x, &mut probe, &mut eval);
            let fwd = (at(x + STEP, &mut probe, &mut eval) - mid) / STEP;
            let bwd = (mid - at(x - STEP, &mut probe, &mut eval)) / STEP;
            if relative_error(fwd, bwd) > 1e-4 {
                let h = STEP / 100.0;
                numeric[k] = (at(x + h, &mut probe, &mut eval) - at(x - h, &mut probe, &mut eval)) / (2.0 * h);
                out.kinks += 1;
            }
        }
        eval(&original);
        out.report = out.report.merge(compare(grad, &numeric));
    }
    out
}

// ---------------------------------------------------------------------------
// Tuning-mode mechanics

pub struct FreezeOutcome {
    pub mode: PeftMode,
    pub frozen: usize,
    pub changed_frozen: Vec<String>,
    pub trainable_moved: bool,
}

/// Trains each mode for five epochs and compares every frozen parameter
/// bit-for-bit against its value before training.
pub fn freeze_invariance(mode: PeftMode) -> FreezeOutcome {
    let cfg = ModelConfig {
        dropout: 0.2,
        ..small_model(8, 2, 2)
    };
    let data = planted(48, 3);
    let mut reg = init_params(&cfg, 11).expect("valid model");
    if mode != PeftMode::Full {
        apply_peft(&mut reg, &cfg, &small_peft(mode), 11).expect("valid tuning config");
    }
    let before: BTreeMap<String, (bool, Tensor)> = reg
        .params()
        .map(|(n, p)| (n.clone(), (p.trainable, p.value.clone())))
        .collect();
    let train = TrainConfig {
        epochs: 5,
        batch_size: 16,
        lr: 1e-2,
        verify_frozen: false,
        ..Default::default()
    };
    train_supervised(&data, &data, &mut reg, &cfg, &train, "freeze").expect("training runs");
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut changed_frozen = Vec::new();
    let mut trainable_moved = false;
    for (name, (trainable, value)) in &before {
        let now = &reg.param(name).expect("still present").value;
        let same = bits(now) == bits(value);
        if *trainable {
            trainable_moved |= !same;
        } else if !same {
            changed_frozen.push(name.clone());
        }
    }
    FreezeOutcome {
        mode,
        frozen: before.values().filter(|(t, _)| !t).count(),
        changed_frozen,
        trainable_moved,
    }
}

fn adaptergnn_registry(cfg: &ModelConfig, seed: u64, scaling: f64) -> (ParamRegistry, ParamRegistry) {
    let backbone = init_params(cfg, seed).expect("valid model");
    let mut tuned = backbone.clone();
    let peft = PeftConfig {
        bottleneck: 3,
        scaling_init: scaling,
        ..PeftConfig::new(PeftMode::Adaptergnn)
    };
    apply_peft(&mut tuned, cfg, &peft, seed).expect("valid tuning config");
    (backbone, tuned)
}

/// Eval logits with zero adapter scales compared bit-for-bit to the bare
/// backbone on several random models. Returns the number of differing bits.
pub fn zero_scale_mismatches(models: u64) -> usize {
    let cfg = small_model(8, 3, 2);
    let batch = whole_batch(&planted(12, 21));
    let mut mismatches = 0;
    for seed in 0..models {
        let (mut backbone, mut tuned) = adaptergnn_registry(&cfg, seed, 0.0);
        let a = predict(&mut backbone, &cfg, &batch).expect("forward");
        let b = predict(&mut tuned, &cfg, &batch).expect("forward");
        mismatches += a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| x.to_bits() != y.to_bits())
            .count();
    }
    mismatches
}

pub struct TriangleOutcome {
    /// Largest `|h − backbone|` over all layers and entries.
    pub max_deviation: f64,
    /// Largest deviation / bound ratio; at most 1 when the bound holds.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Per layer, `|h − BN(MLP(MP(x)))| ≤ |s1|·|A1(x)| + |s2|·|A2(MP(x))|`
/// elementwise, evaluated on the adapter model's own activations.
pub fn triangle_bound(scaling: f64, models: u64) -> TriangleOutcome {
    let cfg = small_model(8, 3, 2);
    let batch = whole_batch(&planted(12, 22));
    let mut out = TriangleOutcome {
        max_deviation: 0.0,
        max_ratio: 0.0,
        violations: 0,
    };
    for seed in 0..models {
        let (_, mut reg) = adaptergnn_registry(&cfg, seed, scaling);
        let mut f = Forward::new(&mut reg, &cfg, Mode::Eval, SeedStream::new(0));
        let (mut x, e) = f.encode(&batch).expect("encode");
        for l in 0..cfg.num_layers {
            let p = layer_prefix(l);
            let layer = f.layer(l, x, e, &batch).expect("layer");
            let a1 = adapter_forward(&mut f, &format!("{p}.adapter1"), x).expect("adapter");
            let a2 = adapter_forward(&mut f, &format!("{p}.adapter2"), layer.mp).expect("adapter");
            let s1 = f.reg.value(&format!("{p}.scale1")).expect("scale").data()[0].abs();
            let s2 = f.reg.value(&format!("{p}.scale2")).expect("scale").data()[0].abs();
            let t = &f.tape;
            let entries = t
                .value(layer.out)
                .data()
                .iter()
                .zip(t.value(layer.backbone).data())
                .zip(t.value(a1).data().iter().zip(t.value(a2).data()));
            for ((h, b), (u, v)) in entries {
                let dev = (h - b).abs();
                let bound = s1 * u.abs() + s2 * v.abs();
                // one rounding per addition on top of the exact bound
                let slack = 4.0 * f64::EPSILON * (h.abs() + b.abs() + bound);
                out.max_deviation = out.max_deviation.max(dev);
                if bound > 0.0 {
                    out.max_ratio = out.max_ratio.max(dev / bound);
                }
                if dev > bound + slack {
                    out.violations += 1;
                }
            }
            x = if l + 1 < cfg.num_layers {
                f.tape.relu(layer.out)
            } else {
                layer.out
            };
        }
    }
    out
}

/// Largest eval-logit difference across a LoRA merge over random models.
pub fn lora_merge_max_diff(models: u64) -> f64 {
    let cfg = small_model(8, 3, 2);
    let batch = whole_batch(&planted(12, 23));
    let mut worst: f64 = 0.0;
    for seed in 0..models {
        let mut reg = init_params(&cfg, seed).expect("valid model");
        let peft = PeftConfig {
            lora_rank: 3,
            ..PeftConfig::new(PeftMode::Lora)
        };
        apply_peft(&mut reg, &cfg, &peft, seed).expect("valid tuning config");
        let mut r = rng(seed);
        for (name, p) in reg.params_mut() {
            if name.contains(".lora_") {
                p.value = random_tensor(p.value.shape(), 0.5, &mut r);
            }
        }
        let before = predict(&mut reg, &cfg, &batch).expect("forward");
        lora_merge(&mut reg).expect("merge");
        assert!(reg.params().all(|(_, p)| p.group != Group::Peft));
        let after = predict(&mut reg, &cfg, &batch).expect("forward");
        worst = worst.max(before.max_abs_diff(&after));
    }
    worst
}

// ---------------------------------------------------------------------------
// Parameter counts

pub struct RatioOutcome {
    pub bottleneck: usize,
    pub trainable: u64,
    pub total: u64,
    pub fraction: f64,
    pub expected_trainable: u64,
    pub expected_total: u64,
}

/// AdapterGNN at d=300, L=5, H=600, one task, default vocabulary.
pub fn adaptergnn_ratio(bottleneck: usize) -> RatioOutcome {
    let model = ModelConfig::default();
    let mut reg = init_params(&model, 0).expect("valid model");
    let peft = PeftConfig {
        bottleneck,
        ..PeftConfig::new(PeftMode::Adaptergnn)
    };
    apply_peft(&mut reg, &model, &peft, 0).expect("valid tuning config");
    let c = reg.count();
    let (d, b, h, l, t) = (300u64, bottleneck as u64, 600u64, 5u64, 1u64);
    let v = model.vocab;
    let encoders = (v.node[0] + v.node[1] + v.edge[0] + 1 + v.edge[1] + 1) as u64 * d;
    // down (d·b + b), up (b·d + d), BN affine 2d, per adapter; two adapters
    // and two scalar scales per layer
    let adapters_per_layer = 2 * (d * b + b + b * d + d + 2 * d) + 2;
    let mlp_bias = h + d;
    let backbone_layer = d * h + h + h * d + d + 2 * d;
    let classifier = d * t + t;
    RatioOutcome {
        bottleneck,
        trainable: c.trainable,
        total: c.total,
        fraction: c.fraction,
        expected_trainable: l * (adapters_per_layer + mlp_bias) + classifier,
        expected_total: encoders + l * (backbone_layer + adapters_per_layer) + classifier,
    }
}

pub fn bitfit_trainable() -> u64 {
    let model = ModelConfig::default();
    let mut reg = init_params(&model, 0).expect("valid model");
    apply_peft(&mut reg, &model, &PeftConfig::new(PeftMode::Bitfit), 0).expect("valid");
    reg.count().trainable
}

// ---------------------------------------------------------------------------
// Oracles

pub struct HoeffdingCase {
    pub log_h: f64,
    pub n: u64,
    pub delta: f64,
    pub expected: f64,
}

/// Values produced once with 50-digit arithmetic and frozen to disk.
pub fn hoeffding_oracle() -> Vec<HoeffdingCase> {
    let text = std::fs::read_to_string(data_file("hoeffding_oracle.csv")).expect("oracle file");
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            HoeffdingCase {
                log_h: f[0].parse().expect("log_h"),
                n: f[1].parse().expect("n"),
                delta: f[2].parse().expect("delta"),
                expected: f[3].parse().expect("gap"),
            }
        })
        .collect()
}

/// Counts ordered pairs that violate monotonicity: the gap must grow with
/// `ln|H|` and shrink with `n` and with `δ`.
pub fn hoeffding_monotonicity_violations(pairs: usize, seed: u64) -> usize {
    use adaptergnn::bounds::hoeffding_gap;
    let mut r = rng(seed);
    let mut violations = 0;
    for k in 0..pairs {
        let log_h = r.gen_range(0.0..5000.0);
        let n: u64 = r.gen_range(1..100_000);
        let delta = r.gen_range(1e-6..0.6);
        let g = hoeffding_gap(log_h, n, delta).expect("valid input");
        let factor = r.gen_range(1.5..4.0);
        let ok = match k % 3 {
            0 => hoeffding_gap(log_h * factor + 1.0, n, delta).expect("valid") > g,
            1 => hoeffding_gap(log_h, (n as f64 * factor).ceil() as u64, delta).expect("valid") < g,
            _ => hoeffding_gap(log_h, n, (delta * factor).min(0.999)).expect("valid") < g,
        };
        if !ok {
            violations += 1;
        }
    }
    violations
}

/// `(correctly ordered + ½·tied) / pairs` by explicit pair enumeration,
/// averaged over tasks that have both classes.
pub fn auc_pair_oracle(scores: &[f64], targets: &[f64], mask: &[bool], tasks: usize) -> Option<f64> {
    let rows = scores.len() / tasks;
    let mut sum = 0.0;
    let mut valid = 0usize;
    for t in 0..tasks {
        let (mut correct, mut ties, mut pairs) = (0u64, 0u64, 0u64);
        for i in 0..rows {
            for j in 0..rows {
                let (a, b) = (i * tasks + t, j * tasks + t);
                if !(mask[a] && mask[b] && targets[a] == 1.0 && targets[b] == 0.0) {
                    continue;
                }
                pairs += 1;
                if scores[a] > scores[b] {
                    correct += 1;
                } else if scores[a] == scores[b] {
                    ties += 1;
                }
            }
        }
        if pairs > 0 {
            sum += (correct as f64 + 0.5 * ties as f64) / pairs as f64;
            valid += 1;
        }
    }
    (valid > 0).then(|| sum / valid as f64)
}

/// Random multi-task instance; half the instances draw scores from a
/// five-value grid so ties are common.
pub fn auc_instance(seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>, usize) {
    let mut r = rng(seed);
    let tasks = r.gen_range(1..4);
    let rows = r.gen_range(1..60);
    let tied = seed % 2 == 0;
    let n = rows * tasks;
    let scores = (0..n)
        .map(|_| {
            if tied {
                r.gen_range(0..5) as f64 / 4.0
            } else {
                r.gen_range(-3.0..3.0)
            }
        })
        .collect();
    let targets = (0..n).map(|_| r.gen_range(0..2) as f64).collect();
    let mask = (0..n).map(|_| r.gen_bool(0.8)).collect();
    (scores, targets, mask, tasks)
}

/// Instances where the metric disagrees with the pair oracle, bitwise.
pub fn auc_mismatches(instances: u64) -> usize {
    (0..instances)
        .filter(|&seed| {
            let (s, t, m, k) = auc_instance(seed);
            let got = match roc_auc(&s, &t, &m, k) {
                Ok(v) => Some(v),
                Err(Error::MetricUndefined) => None,
                Err(e) => panic!("unexpected error {e}"),
            };
            got.map(f64::to_bits) != auc_pair_oracle(&s, &t, &m, k).map(f64::to_bits)
        })
        .count()
}

pub struct LedgerRow {
    pub d: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bottleneck: usize,
    pub rows: u64,
    pub mode: PeftMode,
    pub phase: Phase,
    pub forward: u64,
    pub backward: u64,
}

/// Hand-computed FLOP ledger frozen to disk.
pub fn flops_ledger() -> Vec<LedgerRow> {
    let text = std::fs::read_to_string(data_file("flops_ledger.csv")).expect("ledger file");
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            LedgerRow {
                d: f[0].parse().expect("d"),
                hidden: f[1].parse().expect("hidden"),
                layers: f[2].parse().expect("layers"),
                bottleneck: f[3].parse().expect("b"),
                rows: f[4].parse().expect("rows"),
                mode: f[5].parse().expect("mode"),
                phase: match f[6] {
                    "train" => Phase::Train,
                    "infer" => Phase::Infer,
                    other => panic!("bad phase {other}"),
                },
                forward: f[7].parse().expect("forward"),
                backward: f[8].parse().expect("backward"),
            }
        })
        .collect()
}

pub fn ledger_estimate(row: &LedgerRow) -> FlopReport {
    let model = ModelConfig {
        emb_dim: row.d,
        mlp_hidden: row.hidden,
        num_layers: row.layers,
        ..Default::default()
    };
    let peft = PeftConfig {
        bottleneck: row.bottleneck,
        ..PeftConfig::new(row.mode)
    };
    estimate_flops(&model, &peft, row.rows, row.phase).expect("valid config")
}

// ---------------------------------------------------------------------------
// Experiments

/// Expands a pinned config file into validated run specs.
pub fn specs_from(path: &Path) -> Vec<RunSpec> {
    let cfg = ExperimentConfig::load(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.expand()
        .iter()
        .map(|c| c.run_spec().unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .collect()
}

pub fn run_config(name: &str) -> Vec<RunResult> {
    run_all(&specs_from(&config_file(name)), 1).expect("runs succeed")
}

/// Median of `metric` per key, in key order.
pub fn medians_by<K: Ord + Copy>(
    runs: &[RunResult],
    key: impl Fn(&RunResult) -> K,
    metric: impl Fn(&RunResult) -> f64,
) -> Vec<(K, f64)> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in runs {
        groups.entry(key(r)).or_default().push(metric(r));
    }
    groups.into_iter().map(|(k, v)| (k, median(&v))).collect()
}

/// Whether the minimum lies strictly inside the curve.
pub fn interior_minimum(curve: &[(usize, f64)]) -> bool {
    if curve.len() < 3 {
        return false;
    }
    let (first, last) = (curve[0].1, curve[curve.len() - 1].1);
    let inner = curve[1..curve.len() - 1]
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    inner < first && inner < last
}
