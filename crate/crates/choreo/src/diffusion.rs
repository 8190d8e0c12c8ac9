//! Noise schedules, deterministic DDIM sampling, and cue guidance.
//!
//! The forward process draws `z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps`
//! against a monotone `abar` table. Sampling runs the reverse chain with a
//! clean-signal predictor and eta = 0, so a run is fully determined by its
//! seed. Guidance overwrites constrained frames of `z_t` with
//! forward-noised cue content: hard cues at every step (and exactly at the
//! end), soft cues only while `t > T * s`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::seeded_rng;
use crate::{ensure, Result};

/// Monotone cumulative-alpha table, entry `t - 1` holding `abar_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl DiffusionSchedule {
    /// Builds a schedule from a raw table, checking monotonicity and range.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        ensure!(alpha_bar.len() >= 2, "schedule needs at least 2 steps");
        for (i, &a) in alpha_bar.iter().enumerate() {
            ensure!(
                a > 0.0 && a < 1.0,
                "abar_{} = {a} outside (0, 1)",
                i + 1
            );
            if i > 0 {
                ensure!(
                    a < alpha_bar[i - 1],
                    "schedule not strictly decreasing at t = {}",
                    i + 1
                );
            }
        }
        Ok(Self { alpha_bar })
    }

    pub fn train_steps(&self) -> usize {
        self.alpha_bar.len()
    }

    /// `abar_t` with the convention `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        ensure!(
            t <= self.alpha_bar.len(),
            "timestep {t} outside schedule of {} steps",
            self.alpha_bar.len()
        );
        Ok(self.alpha_bar[t - 1])
    }
}

/// Builds the cumulative-alpha table for `t_total` training steps.
///
/// The linear flavor scales the classic per-step noise range by 1000 / T so
/// total noise stays comparable across step counts; the cosine flavor is
/// the squared-cosine ramp. Per-step noise is capped at 0.999.
pub fn make_schedule(t_total: usize, kind: ScheduleKind) -> Result<DiffusionSchedule> {
    ensure!(t_total >= 2, "schedule needs at least 2 steps, got {t_total}");
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => {
            let scale = 1000.0 / t_total as f64;
            let (start, end) = (1e-4 * scale, 0.02 * scale);
            (0..t_total)
                .map(|i| {
                    let frac = i as f64 / (t_total - 1) as f64;
                    (start + frac * (end - start)).min(0.999)
                })
                .collect()
        }
        ScheduleKind::Cosine => {
            let f = |t: f64| {
                let s = 0.008;
                ((t / t_total as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2)
                    .cos()
                    .powi(2)
            };
            (0..t_total)
                .map(|i| {
                    let beta = 1.0 - f((i + 1) as f64) / f(i as f64);
                    beta.clamp(1e-8, 0.999)
                })
                .collect()
        }
    };
    let mut alpha_bar = Vec::with_capacity(t_total);
    let mut acc = 1.0;
    for beta in betas {
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    DiffusionSchedule::from_alpha_bar(alpha_bar)
}

/// `z_t = sqrt(abar_t) x + sqrt(1 - abar_t) noise`.
pub fn forward_noise(
    x: &Array2<f64>,
    t: usize,
    noise: &Array2<f64>,
    schedule: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    ensure!(
        t >= 1 && t <= schedule.train_steps(),
        "timestep {t} outside 1..={}",
        schedule.train_steps()
    );
    ensure!(
        x.dim() == noise.dim(),
        "noise shape {:?} does not match signal shape {:?}",
        noise.dim(),
        x.dim()
    );
    let abar = schedule.alpha_bar(t)?;
    Ok(x * abar.sqrt() + noise * (1.0 - abar).sqrt())
}

/// One deterministic reverse step from level `t` to `t_prev` given a
/// clean-signal prediction.
pub fn ddim_step(
    z_t: &Array2<f64>,
    x0_hat: &Array2<f64>,
    t: usize,
    t_prev: usize,
    schedule: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    ensure!(t_prev <= t, "t_prev {t_prev} must not exceed t {t}");
    ensure!(
        t >= 1 && t <= schedule.train_steps(),
        "timestep {t} outside 1..={}",
        schedule.train_steps()
    );
    ensure!(
        z_t.dim() == x0_hat.dim(),
        "prediction shape {:?} does not match state shape {:?}",
        x0_hat.dim(),
        z_t.dim()
    );
    if t_prev == t {
        return Ok(z_t.clone());
    }
    let abar_t = schedule.alpha_bar(t)?;
    let abar_prev = schedule.alpha_bar(t_prev)?;
    let eps_scale = 1.0 / (1.0 - abar_t).sqrt();
    let eps_hat = (z_t - &(x0_hat * abar_t.sqrt())) * eps_scale;
    Ok(x0_hat * abar_prev.sqrt() + &(eps_hat * (1.0 - abar_prev).sqrt()))
}

/// Evenly spaced descending timesteps for a `steps`-step reverse pass.
pub fn ddim_timesteps(t_total: usize, steps: usize) -> Result<Vec<usize>> {
    ensure!(steps >= 1, "need at least one sampling step");
    let steps = steps.min(t_total);
    let stride = t_total as f64 / steps as f64;
    let mut ts: Vec<usize> = (0..steps)
        .map(|i| ((t_total as f64 - i as f64 * stride).round() as usize).max(1))
        .collect();
    ts.dedup();
    Ok(ts)
}

/// A clean-signal predictor.
pub trait Denoiser {
    fn predict_x0(&self, z_t: &Array2<f64>, t: usize) -> Result<Array2<f64>>;
}

/// Wraps a plain function as a [`Denoiser`]; test oracles use this.
pub struct FnDenoiser<F>(pub F);

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Array2<f64>, usize) -> Result<Array2<f64>>,
{
    fn predict_x0(&self, z_t: &Array2<f64>, t: usize) -> Result<Array2<f64>> {
        (self.0)(z_t, t)
    }
}

/// A cue clip pinned at a frame offset inside the sampled window.
#[derive(Debug, Clone, PartialEq)]
pub struct CuePlacement {
    pub start: usize,
    pub frames: Array2<f64>,
}

impl CuePlacement {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

/// Frame constraints for one sampled window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuidanceConfig {
    /// Inpainted at every step and exactly at the end.
    pub hard: Vec<CuePlacement>,
    /// Overwritten only during early steps (`t > T * soft_scale`).
    pub soft: Vec<CuePlacement>,
    /// Soft-guidance cutoff scale in [0, 1].
    pub soft_scale: f64,
}

impl GuidanceConfig {
    pub fn unguided() -> Self {
        Self::default()
    }

    pub fn validate(&self, len: usize, dim: usize) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.soft_scale),
            "soft scale {} outside [0, 1]",
            self.soft_scale
        );
        for (kind, cues) in [("hard", &self.hard), ("soft", &self.soft)] {
            for cue in cues.iter() {
                ensure!(
                    cue.frames.ncols() == dim,
                    "{kind} cue width {} does not match window width {dim}",
                    cue.frames.ncols()
                );
                ensure!(
                    cue.start + cue.len() <= len,
                    "{kind} cue at {}..{} exceeds window length {len}",
                    cue.start,
                    cue.start + cue.len()
                );
            }
        }
        Ok(())
    }
}

/// Per-run notes from [`sample_traced`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTrace {
    /// Reverse steps taken.
    pub steps: usize,
    /// Steps at which the soft-guidance rule fired.
    pub soft_steps: usize,
}

fn overwrite_noised(
    z: &mut Array2<f64>,
    cue: &CuePlacement,
    t: usize,
    schedule: &DiffusionSchedule,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<()> {
    let noise = Array2::from_shape_fn(cue.frames.dim(), |_| rng.sample(StandardNormal));
    let noised = forward_noise(&cue.frames, t, &noise, schedule)?;
    z.slice_mut(ndarray::s![cue.start..cue.start + cue.len(), ..])
        .assign(&noised);
    Ok(())
}

/// Deterministic guided sampling of one window.
pub fn sample(
    denoiser: &dyn Denoiser,
    shape: (usize, usize),
    schedule: &DiffusionSchedule,
    steps: usize,
    guidance: &GuidanceConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    Ok(sample_traced(denoiser, shape, schedule, steps, guidance, seed)?.0)
}

/// [`sample`] plus a trace of the guidance activity.
pub fn sample_traced(
    denoiser: &dyn Denoiser,
    shape: (usize, usize),
    schedule: &DiffusionSchedule,
    steps: usize,
    guidance: &GuidanceConfig,
    seed: u64,
) -> Result<(Array2<f64>, SampleTrace)> {
    let (len, dim) = shape;
    ensure!(len >= 1 && dim >= 1, "window shape must be nonzero");
    guidance.validate(len, dim)?;
    let t_total = schedule.train_steps();
    let soft_cutoff = t_total as f64 * guidance.soft_scale;

    let mut rng = seeded_rng(seed);
    let mut z = Array2::from_shape_fn(shape, |_| rng.sample(StandardNormal));
    let ts = ddim_timesteps(t_total, steps)?;
    let mut trace = SampleTrace {
        steps: ts.len(),
        soft_steps: 0,
    };

    for (i, &t) in ts.iter().enumerate() {
        if t as f64 > soft_cutoff {
            trace.soft_steps += 1;
            for cue in &guidance.soft {
                overwrite_noised(&mut z, cue, t, schedule, &mut rng)?;
            }
        }
        // Hard cues last, so they win any overlap with a soft cue.
        for cue in &guidance.hard {
            overwrite_noised(&mut z, cue, t, schedule, &mut rng)?;
        }
        let x0_hat = denoiser.predict_x0(&z, t)?;
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        z = ddim_step(&z, &x0_hat, t, t_prev, schedule)?;
    }

    for cue in &guidance.hard {
        z.slice_mut(ndarray::s![cue.start..cue.start + cue.len(), ..])
            .assign(&cue.frames);
    }
    Ok((z, trace))
}

/// Replaces the first and last `l_key / 2` frames of a noisy window with
/// the clean ones, the fine-tuning scheme that keeps window boundaries
/// coherent under inpainting.
pub fn boundary_teacher_forcing(
    noisy: &Array2<f64>,
    clean: &Array2<f64>,
    l_key: usize,
) -> Result<Array2<f64>> {
    ensure!(l_key % 2 == 0, "key-motion length {l_key} must be even");
    ensure!(
        noisy.dim() == clean.dim(),
        "noisy shape {:?} does not match clean shape {:?}",
        noisy.dim(),
        clean.dim()
    );
    let len = noisy.nrows();
    ensure!(l_key <= len, "key-motion length {l_key} exceeds window {len}");
    let half = l_key / 2;
    let mut out = noisy.clone();
    out.slice_mut(ndarray::s![..half, ..])
        .assign(&clean.slice(ndarray::s![..half, ..]));
    out.slice_mut(ndarray::s![len - half.., ..])
        .assign(&clean.slice(ndarray::s![len - half.., ..]));
    Ok(out)
}
