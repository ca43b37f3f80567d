//! Self-checks run by `twostage verify`: finite-difference gradients, loss
//! identities, brute-force metric oracles, routing identities and the
//! learning-rate schedule.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CohortCounts, GenderLabel, Split};
use crate::metrics::{auc_binary, class_prf, confusion, macro_auc_ovr, macro_scores};
use crate::nncore::gradcheck::FD_STEP;
use crate::nncore::{grad_check_against, kink_margin};
use crate::nncore::{backward, cross_entropy, softmax, weighted_cross_entropy, MlpModel, ProbVector};
use crate::pipeline::{TrainConfig, TwoStageModel};
use crate::preprocess::PreprocessConfig;
use crate::{rng, Result};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const METRIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Seed that reproduces this case.
    pub seed: u64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub base_seed: u64,
    pub grad_models: usize,
    pub metric_instances: usize,
    /// Corrupts one analytic gradient entry before comparison.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            base_seed: 0,
            grad_models: 20,
            metric_instances: 200,
            inject_fault: false,
        }
    }
}

fn check(name: &str, seed: u64, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        seed,
        passed,
        detail,
    }
}

/// Random MLP with at most ~300 parameters and a batch of 1..=8, redrawn
/// from the same stream until no hidden unit sits within 10 steps of its kink.
fn random_problem(r: &mut ChaCha8Rng) -> Result<(MlpModel, Vec<Vec<f64>>, Vec<usize>, Vec<f64>)> {
    loop {
        let (model, xs, ys, ws) = draw_problem(r)?;
        let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        if kink_margin(&model, &inputs) > 10.0 * FD_STEP {
            return Ok((model, xs, ys, ws));
        }
    }
}

fn draw_problem(r: &mut ChaCha8Rng) -> Result<(MlpModel, Vec<Vec<f64>>, Vec<usize>, Vec<f64>)> {
    let input = r.random_range(2..=10);
    let classes = r.random_range(2..=5);
    let mut dims = vec![input];
    for _ in 0..r.random_range(1..=2) {
        dims.push(r.random_range(2..=12));
    }
    dims.push(classes);
    let mut model = MlpModel::with_rng(&dims, r)?;
    // Nonzero biases keep pre-activations off the ReLU kink when a whole
    // layer is inactive.
    for layer in model.layers_mut() {
        for b in layer.biases_mut() {
            *b = r.random_range(-0.5..0.5);
        }
    }
    let batch = r.random_range(1..=8);
    let xs = (0..batch)
        .map(|_| (0..input).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let ys = (0..batch).map(|_| r.random_range(0..classes)).collect();
    let ws = (0..classes).map(|_| r.random_range(0.5..2.0)).collect();
    Ok((model, xs, ys, ws))
}

pub fn gradient_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    (0..opts.grad_models as u64)
        .map(|i| {
            let seed = opts.base_seed + i;
            let (model, xs, ys, ws) = random_problem(&mut rng::seeded(seed))?;
            let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let mut analytic = backward(&model, &inputs, &ys, &ws)?;
            if opts.inject_fault {
                let g = &mut analytic.tensors_mut().next().expect("first layer")[0];
                *g += 0.05 * (1.0 + g.abs());
            }
            let err = grad_check_against(&model, &inputs, &ys, &ws, &analytic)?;
            Ok(check(
                "grad_check",
                seed,
                err < GRAD_TOLERANCE,
                format!(
                    "max_rel_err={err:.3e} dims={:?} params={} batch={}",
                    model.layer_dims(),
                    model.num_params(),
                    inputs.len()
                ),
            ))
        })
        .collect()
}

/// Weighted CE with unit weights equals plain CE bit for bit; softmax sums to
/// one and stays finite for logits up to 1e3 in magnitude.
pub fn loss_checks(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::seeded(seed);
    let mut ce_mismatch = 0;
    let mut worst_sum = 0.0f64;
    let mut non_finite = 0;
    for _ in 0..1000 {
        let k = r.random_range(2..=6);
        let scale = if r.random_bool(0.5) { 1e3 } else { 10.0 };
        let logits: Vec<f64> = (0..k).map(|_| r.random_range(-scale..scale)).collect();
        let p = softmax(&logits);
        let c = r.random_range(0..k);
        if weighted_cross_entropy(&p, c, &vec![1.0; k])?.to_bits() != cross_entropy(&p, c)?.to_bits() {
            ce_mismatch += 1;
        }
        if p.values().iter().any(|v| !v.is_finite()) {
            non_finite += 1;
        }
        worst_sum = worst_sum.max((p.values().iter().sum::<f64>() - 1.0).abs());
    }
    Ok(vec![
        check(
            "unit_weights_match_ce",
            seed,
            ce_mismatch == 0,
            format!("{ce_mismatch} of 1000 pairs differ"),
        ),
        check(
            "softmax_normalized",
            seed,
            non_finite == 0 && worst_sum <= METRIC_TOLERANCE,
            format!("max |sum - 1| = {worst_sum:.3e}, {non_finite} non-finite outputs"),
        ),
    ])
}

/// Per-class (precision, recall, F1) by counting pairs directly.
fn tally_prf(truth: &[usize], pred: &[usize], c: usize) -> (f64, f64, f64) {
    let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
    let predicted = pred.iter().filter(|&&p| p == c).count() as f64;
    let actual = truth.iter().filter(|&&t| t == c).count() as f64;
    let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let r = if actual > 0.0 { tp / actual } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties 0.5.
fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Largest deviation of the metric module from the brute-force oracles on one
/// random instance.
fn metric_deviation(seed: u64) -> Result<f64> {
    const C: usize = 4;
    let mut r = rng::seeded(seed);
    let n = r.random_range(2..=50);
    let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..C)).collect();
    // Coarse probabilities so ties occur.
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..C).map(|_| f64::from(r.random_range(1..=5u8))).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let pred: Vec<usize> = probs.iter().map(|p| crate::nncore::argmax(p)).collect();

    let cm = confusion(&truth, &pred, C)?;
    let macros = macro_scores(&cm)?;
    let mut dev = 0.0f64;
    let mut f1_sum = 0.0;
    for c in 0..C {
        let s = class_prf(&cm, c);
        let (p, rc, f) = tally_prf(&truth, &pred, c);
        dev = dev.max((s.precision - p).abs()).max((s.recall - rc).abs()).max((s.f1 - f).abs());
        f1_sum += f;
    }
    let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64;
    dev = dev.max((macros.accuracy - correct / n as f64).abs());
    dev = dev.max((macros.macro_f1 - f1_sum / C as f64).abs());

    let present = (0..C).filter(|c| truth.contains(c)).count();
    match macro_auc_ovr(&probs, &truth, C) {
        Ok(auc) => {
            let defined: Vec<f64> = (0..C)
                .filter_map(|c| {
                    let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                    let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
                    pairwise_auc(&scores, &pos)
                })
                .collect();
            let expected = defined.iter().sum::<f64>() / defined.len() as f64;
            dev = dev.max((auc.macro_auc - expected).abs());
        }
        Err(_) if present < 2 => {}
        Err(e) => return Err(e),
    }
    Ok(dev)
}

pub fn metric_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    let last = opts.base_seed + opts.metric_instances as u64;
    for seed in opts.base_seed..last {
        let dev = metric_deviation(seed)?;
        worst = worst.max(dev);
        if dev > METRIC_TOLERANCE {
            out.push(check("metric_oracle", seed, false, format!("deviation {dev:.3e}")));
        }
    }
    if out.is_empty() {
        out.push(check(
            "metric_oracle",
            opts.base_seed,
            true,
            format!("{} instances (seeds {}..{last}), max deviation {worst:.3e}", opts.metric_instances, opts.base_seed),
        ));
    }
    let known = auc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]);
    out.push(check("auc_known_value", 0, known == Some(0.75), format!("got {known:?}, want 0.75")));
    Ok(out)
}

/// Forces the gender head to answer `gender` regardless of input.
pub fn force_gender(model: &mut MlpModel, gender: GenderLabel) {
    let head = model.layers_mut().last_mut().expect("non-empty model");
    head.weights_mut().fill(0.0);
    for (i, b) in head.biases_mut().iter_mut().enumerate() {
        *b = if i == gender.index() { 10.0 } else { -10.0 };
    }
}

fn same_bits(a: &ProbVector, b: &ProbVector) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn routing_checks(seed: u64) -> Result<Vec<Check>> {
    let preprocess = PreprocessConfig {
        target_dims: [1, 2, 3],
        ..PreprocessConfig::default()
    };
    let n = preprocess.feature_len();
    let model = TwoStageModel::new(
        MlpModel::seeded(&[n, 5, 2], rng::derive_seed(seed, 1))?,
        MlpModel::seeded(&[n, 5, 4], rng::derive_seed(seed, 2))?,
        MlpModel::seeded(&[n, 5, 4], rng::derive_seed(seed, 3))?,
        preprocess,
    )?;
    let mut r = rng::seeded(seed);
    let inputs: Vec<Vec<f64>> = (0..155)
        .map(|_| (0..n).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let genders: Vec<GenderLabel> = (0..inputs.len())
        .map(|_| GenderLabel::from_index(r.random_range(0..2)).expect("0 or 1"))
        .collect();

    let mut out = Vec::new();
    for gender in GenderLabel::ALL {
        let mut doctored = model.clone();
        force_gender(&mut doctored.gender_model, gender);
        let mut mismatches = 0;
        for x in &inputs {
            let p = doctored.predict_features(x)?;
            let direct = softmax(&doctored.disease_model(gender).forward(x)?.logits);
            if p.routed_gender != gender || !same_bits(&p.disease_probs, &direct) {
                mismatches += 1;
            }
        }
        out.push(check(
            &format!("routing_forced_{}", gender.code()),
            seed,
            mismatches == 0,
            format!("{mismatches} of {} samples differ from direct evaluation", inputs.len()),
        ));
    }
    let mut mismatches = 0;
    for (x, &g) in inputs.iter().zip(&genders) {
        let p = model.predict_with_gender(x, g)?;
        let direct = softmax(&model.disease_model(g).forward(x)?.logits);
        if p.disease != crate::data::DiseaseLabel::from_index(direct.argmax()).expect("4-way")
            || !same_bits(&p.disease_probs, &direct)
        {
            mismatches += 1;
        }
    }
    out.push(check(
        "routing_oracle_gender",
        seed,
        mismatches == 0,
        format!("{mismatches} of {} samples differ from per-gender evaluation", inputs.len()),
    ));
    Ok(out)
}

/// Warmup boundary, final step and continuity for every stage of both
/// profiles on the default cohort sizes.
pub fn schedule_checks() -> Result<Vec<Check>> {
    let counts = CohortCounts::TABLE;
    let train_total = counts.split_total(Split::Train);
    let male: usize = counts
        .cells()
        .filter(|&(s, _, g, _)| s == Split::Train && g == GenderLabel::Male)
        .map(|c| c.3)
        .sum();
    let mut out = Vec::new();
    for (profile, config) in [("desk", TrainConfig::desk(0)), ("paper", TrainConfig::paper(0))] {
        for (stage, n) in [("gender", train_total), ("male", male), ("female", train_total - male)] {
            let total = config.epochs * n.div_ceil(config.batch_size);
            let s = config.schedule.schedule(total)?;
            let peak = config.schedule.peak_lr;
            let at_boundary = s.lr_at(s.warmup_steps)?;
            let before = if s.warmup_steps > 0 { s.lr_at(s.warmup_steps - 1)? } else { at_boundary };
            let last = s.lr_at(total - 1)?;
            let passed = at_boundary == peak
                && before == peak
                && (at_boundary - before).abs() <= 1e-12
                && last == config.schedule.min_lr;
            out.push(check(
                &format!("lr_schedule_{profile}_{stage}"),
                0,
                passed,
                format!(
                    "steps {total}, warmup {}, lr[warmup-1]={before:e} lr[warmup]={at_boundary:e} lr[last]={last:e}",
                    s.warmup_steps
                ),
            ));
        }
    }
    Ok(out)
}

/// Runs every check; the caller decides how to report failures.
pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = gradient_checks(opts)?;
    checks.extend(loss_checks(opts.base_seed)?);
    checks.extend(metric_checks(opts)?);
    checks.extend(routing_checks(opts.base_seed)?);
    checks.extend(schedule_checks()?);
    Ok(checks)
}
