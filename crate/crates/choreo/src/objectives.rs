//! Training losses and a gradient-free overfit trainer.
//!
//! The reconstruction loss is a plain mean-squared error; the auxiliary
//! terms compare joint positions, first and second frame differences, and
//! contact-gated foot displacement, each following the weighted sum
//!
//! ```text
//! total = simple + w_pos pos + w_vel vel + w_acc acc + w_foot foot
//!         (+ w_trans trans when fine-tuning the local stage)
//! ```
//!
//! The trainer estimates gradients by simultaneous perturbation: two
//! objective evaluations at `theta +- c delta` with a Rademacher `delta`
//! give an unbiased descent direction, enough to overfit a tiny decoder
//! without an autodiff stack.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::DanceDecoder;
use crate::diffusion::{boundary_teacher_forcing, forward_noise, DiffusionSchedule};
use crate::kinematics::{fk_foot, forward_kinematics, MotionSequence, Skeleton, CONTACT_CHANNELS, ROOT_OFFSET};
use crate::nn::ParamSet;
use crate::rng::{derive_seed, seeded_rng};
use crate::{ensure, Error, Result};

/// Weights of the auxiliary loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
    pub foot: f64,
    pub trans: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        pos: 0.0,
        vel: 0.0,
        acc: 0.0,
        foot: 0.0,
        trans: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pos", self.pos),
            ("vel", self.vel),
            ("acc", self.acc),
            ("foot", self.foot),
            ("trans", self.trans),
        ] {
            ensure!(v >= 0.0 && v.is_finite(), "loss weight {name} = {v} invalid");
        }
        Ok(())
    }
}

/// Every loss term plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub simple: f64,
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
    pub foot: f64,
    pub trans: f64,
    pub total: f64,
}

impl LossReport {
    /// Combines raw terms under the given weights.
    pub fn combine(
        simple: f64,
        pos: f64,
        vel: f64,
        acc: f64,
        foot: f64,
        trans: f64,
        weights: &LossWeights,
    ) -> Self {
        let total = simple
            + weights.pos * pos
            + weights.vel * vel
            + weights.acc * acc
            + weights.foot * foot
            + weights.trans * trans;
        Self {
            simple,
            pos,
            vel,
            acc,
            foot,
            trans,
            total,
        }
    }
}

/// How the predicted contact channels gate the foot loss: raw values keep
/// the objective continuous for training; thresholding at 0.5 matches the
/// binary reading used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactGate {
    Soft,
    Hard,
}

fn gate_value(raw: f64, gate: ContactGate) -> f64 {
    match gate {
        ContactGate::Soft => raw,
        ContactGate::Hard => f64::from(raw >= 0.5),
    }
}

/// Mean squared error over every entry.
pub fn loss_simple(target: &Array2<f64>, predicted: &Array2<f64>) -> Result<f64> {
    ensure!(
        target.dim() == predicted.dim(),
        "loss shapes differ: {:?} vs {:?}",
        target.dim(),
        predicted.dim()
    );
    let count = target.len() as f64;
    let sum: f64 = target
        .iter()
        .zip(predicted.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / count)
}

/// Mean over frames of the squared distance between the two poses' joint
/// positions.
pub fn loss_pos(
    target: &MotionSequence,
    predicted: &MotionSequence,
    skel: &Skeleton,
) -> Result<f64> {
    ensure!(
        target.frames.dim() == predicted.frames.dim(),
        "loss shapes differ: {:?} vs {:?}",
        target.frames.dim(),
        predicted.frames.dim()
    );
    let a = forward_kinematics(target, skel)?;
    let b = forward_kinematics(predicted, skel)?;
    let len = target.len() as f64;
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / len)
}

/// Contact-gated foot displacement of the prediction: planted feet that
/// move cost, swinging feet are free.
pub fn loss_foot(predicted: &MotionSequence, skel: &Skeleton, gate: ContactGate) -> Result<f64> {
    let len = predicted.len();
    ensure!(len >= 2, "foot loss needs at least 2 frames");
    ensure!(
        skel.foot_joints.len() == CONTACT_CHANNELS,
        "foot loss expects {CONTACT_CHANNELS} foot joints, skeleton has {}",
        skel.foot_joints.len()
    );
    let feet = fk_foot(predicted, skel)?;
    let mut sum = 0.0;
    for i in 0..len - 1 {
        let contacts = predicted.contacts(i);
        for (k, &contact) in contacts.iter().enumerate() {
            let y = gate_value(contact, gate);
            for axis in 0..3 {
                let disp = (feet[[i + 1, k, axis]] - feet[[i, k, axis]]) * y;
                sum += disp * disp;
            }
        }
    }
    Ok(sum / (len - 1) as f64)
}

/// Squared error of first differences (velocity) and second differences
/// (acceleration), each averaged over its difference count.
pub fn loss_vel_acc(target: &Array2<f64>, predicted: &Array2<f64>) -> Result<(f64, f64)> {
    ensure!(
        target.dim() == predicted.dim(),
        "loss shapes differ: {:?} vs {:?}",
        target.dim(),
        predicted.dim()
    );
    let len = target.nrows();
    ensure!(len >= 3, "velocity/acceleration losses need at least 3 frames");
    let dim = target.ncols();
    let mut vel_sum = 0.0;
    let mut acc_sum = 0.0;
    for i in 0..len - 1 {
        for c in 0..dim {
            let dv = (target[[i + 1, c]] - target[[i, c]])
                - (predicted[[i + 1, c]] - predicted[[i, c]]);
            vel_sum += dv * dv;
        }
    }
    for i in 0..len - 2 {
        for c in 0..dim {
            let target_acc =
                target[[i + 2, c]] - 2.0 * target[[i + 1, c]] + target[[i, c]];
            let predicted_acc =
                predicted[[i + 2, c]] - 2.0 * predicted[[i + 1, c]] + predicted[[i, c]];
            let da = target_acc - predicted_acc;
            acc_sum += da * da;
        }
    }
    Ok((vel_sum / (len - 1) as f64, acc_sum / (len - 2) as f64))
}

/// Velocity and acceleration error restricted to the root-translation
/// channels, the drift suppressor used when fine-tuning the local stage.
pub fn loss_trans(target: &Array2<f64>, predicted: &Array2<f64>) -> Result<f64> {
    let roots = ndarray::s![.., ROOT_OFFSET..ROOT_OFFSET + 3];
    let (vel, acc) = loss_vel_acc(
        &target.slice(roots).to_owned(),
        &predicted.slice(roots).to_owned(),
    )?;
    Ok(vel + acc)
}

/// Evaluates every term and the weighted total for one prediction.
pub fn loss_report(
    target: &MotionSequence,
    predicted: &MotionSequence,
    skel: &Skeleton,
    weights: &LossWeights,
    gate: ContactGate,
) -> Result<LossReport> {
    weights.validate()?;
    let simple = loss_simple(&target.frames, &predicted.frames)?;
    let pos = loss_pos(target, predicted, skel)?;
    let (vel, acc) = loss_vel_acc(&target.frames, &predicted.frames)?;
    let foot = loss_foot(predicted, skel, gate)?;
    let trans = loss_trans(&target.frames, &predicted.frames)?;
    Ok(LossReport::combine(
        simple, pos, vel, acc, foot, trans, weights,
    ))
}

/// A fixed overfit target: one clean sequence, its conditioning window,
/// and frozen (timestep, noise) draws so the objective is deterministic.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub clean: MotionSequence,
    pub music: Array2<f64>,
    pub beat: Vec<f64>,
    pub draws: Vec<(usize, Array2<f64>)>,
    /// Replace boundary frames of the noisy input with clean ones, the
    /// local-stage fine-tuning scheme.
    pub teacher_forcing: Option<usize>,
}

impl TrainBatch {
    /// Freezes `count` (timestep, noise) draws for a clean sequence.
    pub fn new(
        clean: MotionSequence,
        music: Array2<f64>,
        beat: Vec<f64>,
        schedule: &DiffusionSchedule,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        ensure!(count >= 1, "batch needs at least one draw");
        let mut rng = seeded_rng(seed);
        let shape = clean.frames.dim();
        let draws = (0..count)
            .map(|_| {
                let t = rng.random_range(1..=schedule.train_steps());
                let noise =
                    Array2::from_shape_fn(shape, |_| rng.sample(rand_distr::StandardNormal));
                (t, noise)
            })
            .collect();
        Ok(Self {
            clean,
            music,
            beat,
            draws,
            teacher_forcing: None,
        })
    }
}

/// Mean loss over the batch draws at the decoder's current parameters.
pub fn batch_loss(
    decoder: &DanceDecoder,
    batch: &TrainBatch,
    schedule: &DiffusionSchedule,
    weights: &LossWeights,
    skel: &Skeleton,
) -> Result<LossReport> {
    let cond = decoder.encode_condition(&batch.music, &batch.beat)?;
    let mut acc: Option<LossReport> = None;
    for (t, noise) in &batch.draws {
        let mut noisy = forward_noise(&batch.clean.frames, *t, noise, schedule)?;
        if let Some(l_key) = batch.teacher_forcing {
            noisy = boundary_teacher_forcing(&noisy, &batch.clean.frames, l_key)?;
        }
        let predicted_frames = decoder.forward_encoded(&noisy, *t, &cond)?;
        let predicted = MotionSequence::new(predicted_frames, batch.clean.fps)?;
        let report = loss_report(&batch.clean, &predicted, skel, weights, ContactGate::Soft)?;
        acc = Some(match acc {
            None => report,
            Some(prev) => LossReport::combine(
                prev.simple + report.simple,
                prev.pos + report.pos,
                prev.vel + report.vel,
                prev.acc + report.acc,
                prev.foot + report.foot,
                prev.trans + report.trans,
                &LossWeights::ZERO,
            ),
        });
    }
    let summed = acc.expect("batch has draws");
    let n = batch.draws.len() as f64;
    Ok(LossReport::combine(
        summed.simple / n,
        summed.pos / n,
        summed.vel / n,
        summed.acc / n,
        summed.foot / n,
        summed.trans / n,
        weights,
    ))
}

/// Simultaneous-perturbation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaConfig {
    /// Descent step applied to the gradient estimate.
    pub step_size: f64,
    /// Perturbation radius `c`.
    pub perturbation: f64,
    /// Refuse to perturb models bigger than this.
    pub max_params: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            step_size: 2e-3,
            perturbation: 5e-3,
            max_params: 50_000,
        }
    }
}

/// One two-evaluation perturbation step; returns the loss at the updated
/// parameters.
pub fn toy_train_step(
    decoder: &mut DanceDecoder,
    batch: &TrainBatch,
    schedule: &DiffusionSchedule,
    weights: &LossWeights,
    skel: &Skeleton,
    spsa: &SpsaConfig,
    seed: u64,
) -> Result<LossReport> {
    let count = decoder.param_count();
    ensure!(
        count <= spsa.max_params,
        "decoder has {count} parameters, the perturbation trainer caps at {}",
        spsa.max_params
    );
    ensure!(spsa.perturbation > 0.0, "perturbation radius must be positive");

    let mut rng = seeded_rng(seed);
    let delta: Vec<f64> = (0..count)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let theta = decoder.flatten();

    let mut shifted = theta.clone();
    for (v, d) in shifted.iter_mut().zip(&delta) {
        *v += spsa.perturbation * d;
    }
    decoder.load_flat(&shifted)?;
    let loss_plus = batch_loss(decoder, batch, schedule, weights, skel)?.total;

    for (v, (base, d)) in shifted.iter_mut().zip(theta.iter().zip(&delta)) {
        *v = base - spsa.perturbation * d;
    }
    decoder.load_flat(&shifted)?;
    let loss_minus = batch_loss(decoder, batch, schedule, weights, skel)?.total;

    if !loss_plus.is_finite() || !loss_minus.is_finite() {
        decoder.load_flat(&theta)?;
        return Err(Error::numeric(format!(
            "perturbation losses not finite: {loss_plus} / {loss_minus}"
        )));
    }

    let slope = (loss_plus - loss_minus) / (2.0 * spsa.perturbation);
    let mut updated = theta;
    for (v, d) in updated.iter_mut().zip(&delta) {
        // 1/delta_i = delta_i for Rademacher perturbations.
        *v -= spsa.step_size * slope * d;
    }
    decoder.load_flat(&updated)?;
    batch_loss(decoder, batch, schedule, weights, skel)
}

/// Loss curve entry emitted by [`toy_train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub report: LossReport,
}

/// Runs `steps` perturbation steps with per-step derived seeds.
pub fn toy_train(
    decoder: &mut DanceDecoder,
    batch: &TrainBatch,
    schedule: &DiffusionSchedule,
    weights: &LossWeights,
    skel: &Skeleton,
    spsa: &SpsaConfig,
    steps: usize,
    root_seed: u64,
) -> Result<Vec<TrainRecord>> {
    let mut curve = Vec::with_capacity(steps + 1);
    curve.push(TrainRecord {
        step: 0,
        report: batch_loss(decoder, batch, schedule, weights, skel)?,
    });
    for step in 1..=steps {
        let seed = derive_seed(root_seed, step as u64, 0);
        let report = toy_train_step(decoder, batch, schedule, weights, skel, spsa, seed)?;
        curve.push(TrainRecord { step, report });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::DecoderConfig;
    use crate::diffusion::{make_schedule, ScheduleKind};
    use crate::kinematics::ROTATION_OFFSET;
    use crate::synth::{synthetic_motion, synthetic_music};
    use ndarray::Array2;
    use rand::Rng;

    fn skel() -> Skeleton {
        Skeleton::builtin_22()
    }

    fn motion_pair(len: usize, seed: u64) -> (MotionSequence, MotionSequence) {
        let skel = skel();
        let a = synthetic_motion(&skel, len, seed).unwrap();
        let b = synthetic_motion(&skel, len, seed + 1).unwrap();
        (a, b)
    }

    #[test]
    fn simple_loss_examples() {
        let (a, _) = motion_pair(6, 1);
        assert_eq!(loss_simple(&a.frames, &a.frames).unwrap(), 0.0);
        let offset = &a.frames + 1.0;
        assert!((loss_simple(&a.frames, &offset).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simple_loss_matches_elementwise_oracle() {
        let (a, b) = motion_pair(5, 2);
        let fast = loss_simple(&a.frames, &b.frames).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for i in 0..a.len() {
            for c in 0..a.dim() {
                let d = a.frames[[i, c]] - b.frames[[i, c]];
                sum += d * d;
                n += 1.0;
            }
        }
        assert!((fast - sum / n).abs() < 1e-10);
    }

    #[test]
    fn pos_loss_zero_at_identity_and_translation_value() {
        let skel = skel();
        let (a, _) = motion_pair(4, 3);
        assert_eq!(loss_pos(&a, &a, &skel).unwrap(), 0.0);

        let mut shifted = a.clone();
        let delta = [0.3, -0.2, 0.5];
        for mut row in shifted.frames.rows_mut() {
            for axis in 0..3 {
                row[ROOT_OFFSET + axis] += delta[axis];
            }
        }
        let norm2: f64 = delta.iter().map(|d| d * d).sum();
        let expected = skel.joint_count() as f64 * norm2;
        let got = loss_pos(&a, &shifted, &skel).unwrap();
        assert!((got - expected).abs() < 1e-9, "got {got}, want {expected}");
    }

    #[test]
    fn pos_loss_ignores_rotation_chunk_scale() {
        let skel = skel();
        let (a, _) = motion_pair(3, 4);
        let mut scaled = a.clone();
        for mut row in scaled.frames.rows_mut() {
            for c in ROTATION_OFFSET..row.len() {
                row[c] *= 1.7;
            }
        }
        let loss = loss_pos(&a, &scaled, &skel).unwrap();
        assert!(loss < 1e-15, "got {loss}");
    }

    #[test]
    fn foot_loss_examples() {
        let skel = skel();
        let (a, _) = motion_pair(6, 5);

        // Zero contacts annihilate the loss.
        let mut no_contacts = a.clone();
        no_contacts.frames.slice_mut(ndarray::s![.., ..4]).fill(0.0);
        assert_eq!(loss_foot(&no_contacts, &skel, ContactGate::Soft).unwrap(), 0.0);

        // A stationary pose with full contact also costs nothing.
        let frozen_frames =
            Array2::from_shape_fn(a.frames.dim(), |(_, c)| a.frames[[0, c]]);
        let mut frozen = MotionSequence::new(frozen_frames, a.fps).unwrap();
        frozen.frames.slice_mut(ndarray::s![.., ..4]).fill(1.0);
        assert!(loss_foot(&frozen, &skel, ContactGate::Soft).unwrap() < 1e-18);

        // A planted foot that slides costs its squared displacement.
        let mut sliding = frozen.clone();
        for (i, mut row) in sliding.frames.rows_mut().into_iter().enumerate() {
            row[ROOT_OFFSET] = 0.1 * i as f64;
        }
        let feet = fk_foot(&sliding, &skel).unwrap();
        let mut oracle = 0.0;
        for i in 0..5 {
            for k in 0..4 {
                for axis in 0..3 {
                    let d = feet[[i + 1, k, axis]] - feet[[i, k, axis]];
                    oracle += d * d;
                }
            }
        }
        oracle /= 5.0;
        let got = loss_foot(&sliding, &skel, ContactGate::Soft).unwrap();
        assert!(got > 0.0);
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn hard_gate_thresholds_contacts() {
        let skel = skel();
        let (a, _) = motion_pair(4, 6);
        let mut weak = a.clone();
        weak.frames.slice_mut(ndarray::s![.., ..4]).fill(0.4);
        assert_eq!(loss_foot(&weak, &skel, ContactGate::Hard).unwrap(), 0.0);
        assert!(loss_foot(&weak, &skel, ContactGate::Soft).unwrap() > 0.0);
    }

    #[test]
    fn vel_acc_losses_cancel_constant_offsets() {
        // Dyadic values keep the offset addition exact, so the
        // cancellation is exact too.
        let (mut a, _) = motion_pair(5, 7);
        a.frames.mapv_inplace(|v| (v * 1024.0).round() / 1024.0);
        let offset = &a.frames + 3.25;
        let (vel, acc) = loss_vel_acc(&a.frames, &offset).unwrap();
        assert_eq!(vel, 0.0);
        assert_eq!(acc, 0.0);
        let (v0, a0) = loss_vel_acc(&a.frames, &a.frames).unwrap();
        assert_eq!((v0, a0), (0.0, 0.0));
    }

    #[test]
    fn vel_acc_matches_finite_difference_oracle() {
        let (a, b) = motion_pair(6, 8);
        let (vel, acc) = loss_vel_acc(&a.frames, &b.frames).unwrap();
        let l = a.len();
        let d = a.dim();
        let mut vel_oracle = 0.0;
        for i in 0..l - 1 {
            for c in 0..d {
                let diff = (a.frames[[i + 1, c]] - a.frames[[i, c]])
                    - (b.frames[[i + 1, c]] - b.frames[[i, c]]);
                vel_oracle += diff * diff;
            }
        }
        vel_oracle /= (l - 1) as f64;
        // Acceleration via explicit velocities.
        let v = |m: &Array2<f64>, i: usize, c: usize| m[[i + 1, c]] - m[[i, c]];
        let mut acc_oracle = 0.0;
        for i in 0..l - 2 {
            for c in 0..d {
                let diff = (v(&a.frames, i + 1, c) - v(&a.frames, i, c))
                    - (v(&b.frames, i + 1, c) - v(&b.frames, i, c));
                acc_oracle += diff * diff;
            }
        }
        acc_oracle /= (l - 2) as f64;
        assert!((vel - vel_oracle).abs() < 1e-10);
        assert!((acc - acc_oracle).abs() < 1e-10);
    }

    #[test]
    fn vel_acc_needs_three_frames() {
        let (a, b) = motion_pair(2, 9);
        assert!(loss_vel_acc(&a.frames, &b.frames).is_err());
    }

    #[test]
    fn total_is_affine_in_each_weight() {
        let skel = skel();
        let (a, b) = motion_pair(5, 10);
        let report =
            loss_report(&a, &b, &skel, &LossWeights::ZERO, ContactGate::Soft).unwrap();
        assert_eq!(report.total, report.simple);

        let weights = LossWeights {
            pos: 2.0,
            vel: 0.5,
            acc: 1.5,
            foot: 3.0,
            trans: 0.25,
        };
        let weighted = loss_report(&a, &b, &skel, &weights, ContactGate::Soft).unwrap();
        let expected = report.simple
            + 2.0 * report.pos
            + 0.5 * report.vel
            + 1.5 * report.acc
            + 3.0 * report.foot
            + 0.25 * report.trans;
        assert!((weighted.total - expected).abs() < 1e-9);
    }

    #[test]
    fn trans_loss_sees_only_root_channels() {
        let (a, _) = motion_pair(5, 11);
        let mut rotated = a.clone();
        for mut row in rotated.frames.rows_mut() {
            for c in ROTATION_OFFSET..row.len() {
                row[c] += 0.5 * (c as f64).sin();
            }
        }
        assert_eq!(loss_trans(&a.frames, &rotated.frames).unwrap(), 0.0);
    }

    fn tiny_setup() -> (DanceDecoder, TrainBatch, DiffusionSchedule, Skeleton) {
        let skel = skel();
        let config = DecoderConfig::tiny(skel.motion_dim());
        let decoder = DanceDecoder::init(config, 0xbeef).unwrap();
        let schedule = make_schedule(1000, ScheduleKind::Linear).unwrap();
        let clean = synthetic_motion(&skel, 16, 1).unwrap();
        let music = synthetic_music(16, 8, 2).unwrap();
        let mask = crate::beat::extract_beat_mask(&music).unwrap();
        let beat = crate::beat::gaussian_beat_prior(&mask, 0.25).unwrap();
        let batch = TrainBatch::new(
            clean,
            music.frames.clone(),
            beat.values().to_vec(),
            &schedule,
            2,
            3,
        )
        .unwrap();
        (decoder, batch, schedule, skel)
    }

    #[test]
    fn zero_step_size_keeps_params() {
        let (mut decoder, batch, schedule, skel) = tiny_setup();
        let before = decoder.flatten();
        let spsa = SpsaConfig {
            step_size: 0.0,
            ..SpsaConfig::default()
        };
        toy_train_step(
            &mut decoder,
            &batch,
            &schedule,
            &LossWeights::ZERO,
            &skel,
            &spsa,
            17,
        )
        .unwrap();
        assert_eq!(decoder.flatten(), before);
    }

    #[test]
    fn trainer_respects_param_cap() {
        let (mut decoder, batch, schedule, skel) = tiny_setup();
        let spsa = SpsaConfig {
            max_params: 10,
            ..SpsaConfig::default()
        };
        assert!(toy_train_step(
            &mut decoder,
            &batch,
            &schedule,
            &LossWeights::ZERO,
            &skel,
            &spsa,
            0,
        )
        .is_err());
    }

    #[test]
    fn short_training_run_descends() {
        let (mut decoder, batch, schedule, skel) = tiny_setup();
        let spsa = SpsaConfig::default();
        let curve = toy_train(
            &mut decoder,
            &batch,
            &schedule,
            &LossWeights::ZERO,
            &skel,
            &spsa,
            60,
            7,
        )
        .unwrap();
        let first = curve.first().unwrap().report.total;
        let best = curve
            .iter()
            .map(|r| r.report.total)
            .fold(f64::INFINITY, f64::min);
        assert!(
            best < first,
            "training never improved: first {first}, best {best}"
        );
    }

    #[test]
    fn tiny_decoder_fits_param_budget() {
        let skel = skel();
        let config = DecoderConfig::tiny(skel.motion_dim());
        let decoder = DanceDecoder::init(config, 1).unwrap();
        let count = decoder.param_count();
        assert!(count <= 50_000, "tiny decoder has {count} params");
    }

    #[test]
    fn spsa_estimate_correlates_with_finite_differences() {
        // Average two-point estimates over a 50-parameter slice (the
        // output projection region, where gradients flow directly) and
        // compare them with central finite differences on the same slice.
        let (mut decoder, batch, schedule, skel) = tiny_setup();
        let weights = LossWeights::ZERO;
        let theta = decoder.flatten();
        let count = theta.len();
        let slice = 50.min(count);
        let offset = count - slice;
        let c = 1e-3;

        let eval = |params: &[f64], decoder: &mut DanceDecoder| -> f64 {
            decoder.load_flat(params).unwrap();
            batch_loss(decoder, &batch, &schedule, &weights, &skel)
                .unwrap()
                .total
        };

        let mut fd = vec![0.0; slice];
        for (i, g) in fd.iter_mut().enumerate() {
            let mut plus = theta.clone();
            plus[offset + i] += c;
            let mut minus = theta.clone();
            minus[offset + i] -= c;
            *g = (eval(&plus, &mut decoder) - eval(&minus, &mut decoder)) / (2.0 * c);
        }

        let mut rng = seeded_rng(0x5b5a);
        let samples = 200;
        let mut estimate = vec![0.0; slice];
        for _ in 0..samples {
            let delta: Vec<f64> = (0..slice)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            for i in 0..slice {
                plus[offset + i] += c * delta[i];
                minus[offset + i] -= c * delta[i];
            }
            let slope = (eval(&plus, &mut decoder) - eval(&minus, &mut decoder)) / (2.0 * c);
            for i in 0..slice {
                estimate[i] += slope * delta[i] / samples as f64;
            }
        }
        decoder.load_flat(&theta).unwrap();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mf, me) = (mean(&fd), mean(&estimate));
        let mut cov = 0.0;
        let mut var_f = 0.0;
        let mut var_e = 0.0;
        for i in 0..slice {
            cov += (fd[i] - mf) * (estimate[i] - me);
            var_f += (fd[i] - mf) * (fd[i] - mf);
            var_e += (estimate[i] - me) * (estimate[i] - me);
        }
        let rho = cov / (var_f.sqrt() * var_e.sqrt());
        assert!(rho > 0.3, "correlation too weak: {rho}");
    }
}
