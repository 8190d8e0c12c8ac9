//! Two-stage inference over full tracks.
//!
//! The track is cut into non-overlapping segments. Per segment, the global
//! stage denoises a short key-motion sequence against the whole segment's
//! condition and splits it into 5 hard and 8 soft cue clips. Hard cues pin
//! window boundaries through inpainting, so adjacent windows share a full
//! cue across each seam and decode independently; soft cues (plus their
//! mirror images) are parked on the beat-prior peaks of each window and
//! steer only the early denoising steps. The decoded windows concatenate
//! into the final dance, trimmed back to the requested length.

use ndarray::Array2;
use rayon::prelude::*;

use crate::beat::{beat_prior_for_track, extract_beat_mask, MusicFeatures, DEFAULT_ALPHA};
use crate::decoder::DanceDecoder;
use crate::diffusion::{
    sample, CuePlacement, Denoiser, DiffusionSchedule, GuidanceConfig,
};
use crate::kinematics::{mirror_motion, MotionSequence, Skeleton};
use crate::rng::{derive_seed, GLOBAL_STAGE_WINDOW};
use crate::{ensure, Error, Result};

/// Hard boundary cues produced per segment.
pub const HARD_CUE_COUNT: usize = 5;
/// Soft cues produced per segment (doubled by mirroring at placement).
pub const SOFT_CUE_COUNT: usize = 8;
/// Key clips per segment.
pub const KEY_CLIP_COUNT: usize = HARD_CUE_COUNT + SOFT_CUE_COUNT;

/// Segment lengths the two-stage setup supports.
pub const SEGMENT_LENGTHS: [usize; 3] = [128, 256, 1024];
/// Window lengths the two-stage setup supports.
pub const WINDOW_LENGTHS: [usize; 2] = [64, 256];

/// Geometry and sampling knobs of one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Requested dance length L.
    pub total_len: usize,
    /// Segment length N.
    pub segment_len: usize,
    /// Window length n.
    pub window_len: usize,
    /// Key-motion clip length (even).
    pub key_len: usize,
    /// Beat-prior smoothing factor.
    pub alpha: f64,
    /// Soft-cue cutoff scale s.
    pub soft_scale: f64,
    /// Reverse diffusion steps per sampled sequence.
    pub sample_steps: usize,
    /// Root seed; every segment and window derives its own stream.
    pub seed: u64,
    /// Worker threads for parallel window decoding (None = rayon default).
    pub jobs: Option<usize>,
}

impl PipelineConfig {
    pub fn new(total_len: usize, segment_len: usize, window_len: usize, key_len: usize) -> Self {
        Self {
            total_len,
            segment_len,
            window_len,
            key_len,
            alpha: DEFAULT_ALPHA,
            soft_scale: 0.5,
            sample_steps: 50,
            seed: 0,
            jobs: None,
        }
    }

    pub fn windows_per_segment(&self) -> usize {
        self.segment_len / self.window_len
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.total_len >= 1, "dance length must be at least 1");
        ensure!(
            SEGMENT_LENGTHS.contains(&self.segment_len),
            "segment length {} not in {SEGMENT_LENGTHS:?}",
            self.segment_len
        );
        ensure!(
            WINDOW_LENGTHS.contains(&self.window_len),
            "window length {} not in {WINDOW_LENGTHS:?}",
            self.window_len
        );
        ensure!(
            self.segment_len % self.window_len == 0,
            "window length {} must divide segment length {}",
            self.window_len,
            self.segment_len
        );
        let windows = self.windows_per_segment();
        ensure!(
            windows + 1 <= HARD_CUE_COUNT,
            "{windows} windows per segment need {} boundary cues, only {HARD_CUE_COUNT} exist",
            windows + 1
        );
        ensure!(
            self.key_len >= 2 && self.key_len % 2 == 0,
            "key length {} must be even and at least 2",
            self.key_len
        );
        ensure!(
            self.key_len <= self.window_len,
            "key length {} exceeds window length {}",
            self.key_len,
            self.window_len
        );
        ensure!(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha {} outside (0, 1)",
            self.alpha
        );
        ensure!(
            (0.0..=1.0).contains(&self.soft_scale),
            "soft scale {} outside [0, 1]",
            self.soft_scale
        );
        ensure!(self.sample_steps >= 1, "need at least one sampling step");
        Ok(())
    }
}

/// One conditioned segment, zero-padded to the segment length.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub index: usize,
    /// Frame offset of this segment in the track.
    pub offset: usize,
    /// Frames of this segment that carry real (non-padding) content.
    pub valid_len: usize,
    pub music: Array2<f64>,
    pub beat: Vec<f64>,
}

/// Cuts conditioning inputs into segments; the final partial segment is
/// zero-padded with its validity length recorded.
pub fn segment_inputs(
    music: &MusicFeatures,
    beat: &[f64],
    config: &PipelineConfig,
) -> Result<Vec<Segment>> {
    config.validate()?;
    ensure!(
        music.len() >= config.total_len,
        "music has {} frames, dance needs {}",
        music.len(),
        config.total_len
    );
    ensure!(
        beat.len() >= config.total_len,
        "beat prior has {} frames, dance needs {}",
        beat.len(),
        config.total_len
    );
    let n = config.segment_len;
    let count = config.total_len.div_ceil(n);
    let mut segments = Vec::with_capacity(count);
    for index in 0..count {
        let offset = index * n;
        let valid_len = n.min(config.total_len - offset);
        let mut seg_music = Array2::zeros((n, music.frames.ncols()));
        seg_music
            .slice_mut(ndarray::s![..valid_len, ..])
            .assign(&music.frames.slice(ndarray::s![offset..offset + valid_len, ..]));
        let mut seg_beat = vec![0.0; n];
        seg_beat[..valid_len].copy_from_slice(&beat[offset..offset + valid_len]);
        segments.push(Segment {
            index,
            offset,
            valid_len,
            music: seg_music,
            beat: seg_beat,
        });
    }
    Ok(segments)
}

/// The split key clips of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMotions {
    /// Boundary-pinning clips, in boundary order.
    pub hard: Vec<Array2<f64>>,
    /// Early-step guidance clips.
    pub soft: Vec<Array2<f64>>,
}

impl KeyMotions {
    /// Splits a raw key sequence of `13 * key_len` frames: the first 5
    /// clips pin boundaries, the last 8 shape early steps.
    pub fn from_sequence(sequence: &Array2<f64>, key_len: usize) -> Result<Self> {
        ensure!(
            sequence.nrows() == KEY_CLIP_COUNT * key_len,
            "key sequence has {} frames, expected {}",
            sequence.nrows(),
            KEY_CLIP_COUNT * key_len
        );
        let clip = |i: usize| {
            sequence
                .slice(ndarray::s![i * key_len..(i + 1) * key_len, ..])
                .to_owned()
        };
        Ok(Self {
            hard: (0..HARD_CUE_COUNT).map(clip).collect(),
            soft: (HARD_CUE_COUNT..KEY_CLIP_COUNT).map(clip).collect(),
        })
    }
}

struct EncodedDenoiser<'a> {
    decoder: &'a DanceDecoder,
    cond: crate::decoder::EncodedCondition,
}

impl Denoiser for EncodedDenoiser<'_> {
    fn predict_x0(&self, z_t: &Array2<f64>, t: usize) -> Result<Array2<f64>> {
        self.decoder.forward_encoded(z_t, t, &self.cond)
    }
}

/// Denoises one segment's raw key-motion sequence against the full
/// segment condition.
pub fn generate_key_motions(
    segment: &Segment,
    global: &DanceDecoder,
    schedule: &DiffusionSchedule,
    config: &PipelineConfig,
) -> Result<Array2<f64>> {
    ensure!(
        !global.config.spatial_block,
        "the global stage runs without the spatial block (its input and output lengths differ)"
    );
    let cond = global.encode_condition(&segment.music, &segment.beat)?;
    let denoiser = EncodedDenoiser {
        decoder: global,
        cond,
    };
    let shape = (KEY_CLIP_COUNT * config.key_len, global.config.motion_dim);
    let seed = derive_seed(config.seed, segment.index as u64, GLOBAL_STAGE_WINDOW);
    sample(
        &denoiser,
        shape,
        schedule,
        config.sample_steps,
        &GuidanceConfig::unguided(),
        seed,
    )
}

/// Copies the last `key_len` frames of each key sequence into the head of
/// the next segment's sequence, the cross-segment continuity rule.
pub fn chain_key_sequences(sequences: &mut [Array2<f64>], key_len: usize) {
    for i in 1..sequences.len() {
        let tail = sequences[i - 1]
            .slice(ndarray::s![sequences[i - 1].nrows() - key_len.., ..])
            .to_owned();
        sequences[i]
            .slice_mut(ndarray::s![..key_len, ..])
            .assign(&tail);
    }
}

/// Places cues for every window of one segment.
///
/// Boundary cue `j` spans the seam between windows `j - 1` and `j`: each
/// window is pinned at its head by the second half of its left boundary
/// cue and at its tail by the first half of its right one. The 8 soft
/// clips and their 8 mirror images are dealt to the windows in order;
/// within a window each instance is centered on the highest-beat-prior
/// frame whose surroundings are still free (ties break to the earliest
/// frame), never overlapping pinned or previously placed frames.
pub fn plan_window_guidance(
    key: &KeyMotions,
    segment_beat: &[f64],
    skel: &Skeleton,
    config: &PipelineConfig,
) -> Result<Vec<GuidanceConfig>> {
    let n = config.window_len;
    let windows = config.windows_per_segment();
    let key_len = config.key_len;
    let half = key_len / 2;
    ensure!(
        key.hard.len() == HARD_CUE_COUNT && key.soft.len() == SOFT_CUE_COUNT,
        "key motions must hold {HARD_CUE_COUNT} hard and {SOFT_CUE_COUNT} soft clips"
    );
    ensure!(
        segment_beat.len() == config.segment_len,
        "segment beat prior has {} frames, expected {}",
        segment_beat.len(),
        config.segment_len
    );

    // Soft instances: the clips followed by their mirror images.
    let fps = crate::beat::DEFAULT_FPS;
    let mut instances = key.soft.clone();
    for clip in &key.soft {
        let motion = MotionSequence::new(clip.clone(), fps)?;
        instances.push(mirror_motion(&motion, skel)?.frames);
    }
    let per_window = instances.len() / windows;

    let mut plans = Vec::with_capacity(windows);
    for w in 0..windows {
        let hard = vec![
            CuePlacement {
                start: 0,
                frames: key.hard[w].slice(ndarray::s![half.., ..]).to_owned(),
            },
            CuePlacement {
                start: n - half,
                frames: key.hard[w + 1].slice(ndarray::s![..half, ..]).to_owned(),
            },
        ];
        let mut occupied = vec![false; n];
        for slot in occupied.iter_mut().take(half) {
            *slot = true;
        }
        for slot in occupied.iter_mut().skip(n - half) {
            *slot = true;
        }

        // Window frames ranked by beat prior, ties to the earliest frame.
        let window_beat = &segment_beat[w * n..(w + 1) * n];
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| {
            window_beat[b]
                .partial_cmp(&window_beat[a])
                .expect("beat prior values are finite")
                .then(a.cmp(&b))
        });

        let mut soft = Vec::with_capacity(per_window);
        for instance in instances[w * per_window..(w + 1) * per_window].iter() {
            let fits = |start: usize| occupied[start..start + key_len].iter().all(|&o| !o);
            let chosen = ranked
                .iter()
                .map(|&center| center.saturating_sub(half).min(n - key_len))
                .find(|&start| fits(start))
                .or_else(|| (0..=n - key_len).find(|&start| fits(start)));
            let Some(start) = chosen else {
                return Err(Error::validation(format!(
                    "window {w} cannot fit {per_window} soft cues of {key_len} frames"
                )));
            };
            for slot in occupied.iter_mut().skip(start).take(key_len) {
                *slot = true;
            }
            soft.push(CuePlacement {
                start,
                frames: instance.clone(),
            });
        }

        plans.push(GuidanceConfig {
            hard,
            soft,
            soft_scale: config.soft_scale,
        });
    }
    Ok(plans)
}

/// One fully-specified window decoding task.
#[derive(Debug, Clone)]
pub struct WindowTask {
    pub segment: usize,
    pub window: usize,
    pub music: Array2<f64>,
    pub beat: Vec<f64>,
    pub guidance: GuidanceConfig,
    pub seed: u64,
}

/// Builds the flat window task list for all segments.
pub fn plan_windows(
    segments: &[Segment],
    guidance: &[Vec<GuidanceConfig>],
    config: &PipelineConfig,
) -> Vec<WindowTask> {
    let n = config.window_len;
    let mut tasks = Vec::new();
    for segment in segments {
        for w in 0..config.windows_per_segment() {
            tasks.push(WindowTask {
                segment: segment.index,
                window: w,
                music: segment
                    .music
                    .slice(ndarray::s![w * n..(w + 1) * n, ..])
                    .to_owned(),
                beat: segment.beat[w * n..(w + 1) * n].to_vec(),
                guidance: guidance[segment.index][w].clone(),
                seed: derive_seed(config.seed, segment.index as u64, w as u64),
            });
        }
    }
    tasks
}

fn decode_one(
    task: &WindowTask,
    local: &DanceDecoder,
    schedule: &DiffusionSchedule,
    config: &PipelineConfig,
) -> Result<Array2<f64>> {
    let cond = local
        .encode_condition(&task.music, &task.beat)
        .map_err(|e| tag_window(e, task))?;
    let denoiser = EncodedDenoiser {
        decoder: local,
        cond,
    };
    sample(
        &denoiser,
        (config.window_len, local.config.motion_dim),
        schedule,
        config.sample_steps,
        &task.guidance,
        task.seed,
    )
    .map_err(|e| tag_window(e, task))
}

fn tag_window(err: Error, task: &WindowTask) -> Error {
    match err {
        Error::Validation(msg) => Error::Validation(format!(
            "segment {} window {}: {msg}",
            task.segment, task.window
        )),
        Error::Numeric(msg) => Error::Numeric(format!(
            "segment {} window {}: {msg}",
            task.segment, task.window
        )),
        other => other,
    }
}

/// Decodes every window, in index order, optionally on a worker pool.
/// Parallel and sequential execution produce identical bytes: each window
/// is a pure function of its task.
pub fn decode_windows(
    tasks: &[WindowTask],
    local: &DanceDecoder,
    schedule: &DiffusionSchedule,
    config: &PipelineConfig,
    parallel: bool,
) -> Result<Vec<Array2<f64>>> {
    if !parallel {
        return tasks
            .iter()
            .map(|task| decode_one(task, local, schedule, config))
            .collect();
    }
    let run = || {
        tasks
            .par_iter()
            .map(|task| decode_one(task, local, schedule, config))
            .collect::<Result<Vec<_>>>()
    };
    match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Validation(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Concatenates decoded windows in order and trims the padding tail.
pub fn stitch_full_dance(
    windows: &[Array2<f64>],
    config: &PipelineConfig,
) -> Result<MotionSequence> {
    config.validate()?;
    let per_segment = config.windows_per_segment();
    let segments = config.total_len.div_ceil(config.segment_len);
    ensure!(
        windows.len() == segments * per_segment,
        "expected {} windows, got {}",
        segments * per_segment,
        windows.len()
    );
    let dim = windows[0].ncols();
    let mut frames = Array2::zeros((config.total_len, dim));
    let n = config.window_len;
    for (i, window) in windows.iter().enumerate() {
        ensure!(
            window.dim() == (n, dim),
            "window {i} has shape {:?}, expected ({n}, {dim})",
            window.dim()
        );
        let start = i * n;
        if start >= config.total_len {
            break;
        }
        let take = n.min(config.total_len - start);
        frames
            .slice_mut(ndarray::s![start..start + take, ..])
            .assign(&window.slice(ndarray::s![..take, ..]));
    }
    MotionSequence::new(frames, crate::beat::DEFAULT_FPS)
}

/// Everything a structural test wants to see from one run.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    /// Per-segment raw key sequences, after the continuity copy.
    pub key_sequences: Vec<Array2<f64>>,
    /// Per-segment split clips.
    pub key_motions: Vec<KeyMotions>,
    /// Per-segment, per-window guidance plans.
    pub guidance: Vec<Vec<GuidanceConfig>>,
    /// Decoded windows in index order.
    pub windows: Vec<Array2<f64>>,
}

/// Runs the full two-stage pipeline and keeps the intermediate structure.
pub fn generate_dance_traced(
    music: &MusicFeatures,
    global: &DanceDecoder,
    local: &DanceDecoder,
    skel: &Skeleton,
    schedule: &DiffusionSchedule,
    config: &PipelineConfig,
    parallel: bool,
) -> Result<(MotionSequence, PipelineTrace)> {
    config.validate()?;
    ensure!(
        global.config.motion_dim == skel.motion_dim()
            && local.config.motion_dim == skel.motion_dim(),
        "decoder motion width must match the skeleton ({})",
        skel.motion_dim()
    );

    let mask = extract_beat_mask(music)?;
    let prior = beat_prior_for_track(&mask, config.alpha)?;
    let segments = segment_inputs(music, prior.values(), config)?;

    let mut key_sequences = segments
        .iter()
        .map(|segment| generate_key_motions(segment, global, schedule, config))
        .collect::<Result<Vec<_>>>()?;
    chain_key_sequences(&mut key_sequences, config.key_len);
    let key_motions = key_sequences
        .iter()
        .map(|seq| KeyMotions::from_sequence(seq, config.key_len))
        .collect::<Result<Vec<_>>>()?;

    let guidance = segments
        .iter()
        .map(|segment| {
            plan_window_guidance(&key_motions[segment.index], &segment.beat, skel, config)
        })
        .collect::<Result<Vec<_>>>()?;

    let tasks = plan_windows(&segments, &guidance, config);
    let windows = decode_windows(&tasks, local, schedule, config, parallel)?;
    let dance = stitch_full_dance(&windows, config)?;
    Ok((
        dance,
        PipelineTrace {
            key_sequences,
            key_motions,
            guidance,
            windows,
        },
    ))
}

/// Runs the full two-stage pipeline.
pub fn generate_dance(
    music: &MusicFeatures,
    global: &DanceDecoder,
    local: &DanceDecoder,
    skel: &Skeleton,
    schedule: &DiffusionSchedule,
    config: &PipelineConfig,
) -> Result<MotionSequence> {
    Ok(generate_dance_traced(music, global, local, skel, schedule, config, true)?.0)
}
