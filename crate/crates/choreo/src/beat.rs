//! Beat masks and the Gaussian beat prior.
//!
//! Music arrives as a per-frame feature matrix whose last channel is a
//! binary beat flag. From that flag this module derives, per frame:
//!
//! * the nearest-beat distance `NBD(i)` — frames to the closest beat on
//!   either side,
//! * the inter-beat interval `l(i)` — the local tempo measure, and
//! * the prior `b(i) = exp(-NBD(i)^2 / (2 (alpha * l(i))^2))`,
//!
//! a bell curve around every beat whose width scales with the local tempo,
//! so a frame halfway between beats gets the same value at 60 bpm as at
//! 120 bpm.

use ndarray::Array2;

use crate::{ensure, Error, Result};

/// Number of music feature channels, beat flag included.
pub const MUSIC_DIM: usize = 35;

/// Frame rate every pipeline stage assumes.
pub const DEFAULT_FPS: f64 = 30.0;

/// Per-frame acoustic features; the last column is a binary beat flag.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicFeatures {
    pub frames: Array2<f64>,
    pub fps: f64,
}

impl MusicFeatures {
    pub fn new(frames: Array2<f64>, fps: f64) -> Result<Self> {
        ensure!(frames.nrows() >= 1, "music features need at least one frame");
        ensure!(frames.ncols() >= 1, "music features need at least one channel");
        ensure!(
            frames.iter().all(|v| v.is_finite()),
            "music features contain non-finite entries"
        );
        ensure!(fps > 0.0, "fps must be positive, got {fps}");
        let last = frames.ncols() - 1;
        for (i, row) in frames.rows().into_iter().enumerate() {
            let v = row[last];
            ensure!(
                v == 0.0 || v == 1.0,
                "beat channel must be binary; frame {i} has {v}"
            );
        }
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

/// Binary beat sequence, one flag per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeatMask {
    mask: Vec<u8>,
}

impl BeatMask {
    pub fn new(mask: Vec<u8>) -> Result<Self> {
        ensure!(!mask.is_empty(), "beat mask must not be empty");
        ensure!(
            mask.iter().all(|&m| m <= 1),
            "beat mask entries must be 0 or 1"
        );
        Ok(Self { mask })
    }

    pub fn from_flags(flags: &[f64]) -> Result<Self> {
        let mask = flags
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(0u8)
                } else if v == 1.0 {
                    Ok(1u8)
                } else {
                    Err(Error::validation(format!(
                        "beat mask entries must be 0 or 1, got {v}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mask)
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.mask
    }

    pub fn is_beat(&self, frame: usize) -> bool {
        self.mask[frame] == 1
    }

    /// Indices of beat frames, in order.
    pub fn beat_frames(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m == 1).then_some(i))
            .collect()
    }
}

/// Per-frame distance to the closest beat, `f64::INFINITY` when no beat
/// exists on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct NbdSequence {
    values: Vec<f64>,
}

impl NbdSequence {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values with the infinity sentinel saturated to the sequence length,
    /// safe for JSON output.
    pub fn saturated(&self) -> Vec<f64> {
        let cap = self.values.len() as f64;
        self.values
            .iter()
            .map(|&v| if v.is_finite() { v } else { cap })
            .collect()
    }
}

/// Inter-beat interval length, per frame, from the boundary-augmented beat
/// list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSequence {
    values: Vec<usize>,
}

impl IntervalSequence {
    pub fn values(&self) -> &[usize] {
        &self.values
    }
}

/// The Gaussian beat prior: 1.0 exactly at beat frames, decaying with the
/// squared nearest-beat distance at a tempo-adaptive rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatPrior {
    values: Vec<f64>,
    alpha: f64,
}

impl BeatPrior {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Copies the beat flag channel (last column) out of a feature matrix.
pub fn extract_beat_mask(features: &MusicFeatures) -> Result<BeatMask> {
    let last = features.frames.ncols() - 1;
    let flags: Vec<f64> = features.frames.column(last).to_vec();
    BeatMask::from_flags(&flags)
}

/// Nearest beat distance per frame: `min(dist to previous beat, dist to
/// next beat)`, with a one-sided infinity where that neighbor is missing.
pub fn nearest_beat_distance(mask: &BeatMask) -> NbdSequence {
    let len = mask.len();
    let mut values = vec![f64::INFINITY; len];

    let mut last_beat: Option<usize> = None;
    for i in 0..len {
        if mask.is_beat(i) {
            last_beat = Some(i);
        }
        if let Some(b) = last_beat {
            values[i] = (i - b) as f64;
        }
    }
    let mut next_beat: Option<usize> = None;
    for i in (0..len).rev() {
        if mask.is_beat(i) {
            next_beat = Some(i);
        }
        if let Some(b) = next_beat {
            values[i] = values[i].min((b - i) as f64);
        }
    }
    NbdSequence { values }
}

/// Inter-beat interval per frame.
///
/// The beat list is augmented with frames 0 and L-1 so the whole sequence
/// is covered, then each frame takes the length of the interval between the
/// consecutive (distinct) augmented beats around it. A frame that is itself
/// an augmented beat belongs to the interval it starts; the last frame uses
/// the final interval.
pub fn inter_beat_interval(mask: &BeatMask) -> Result<IntervalSequence> {
    let len = mask.len();
    ensure!(len >= 2, "inter-beat intervals need at least 2 frames");

    let mut knots = mask.beat_frames();
    if knots.first() != Some(&0) {
        knots.insert(0, 0);
    }
    if knots.last() != Some(&(len - 1)) {
        knots.push(len - 1);
    }

    let mut values = vec![0usize; len];
    for window in knots.windows(2) {
        let (start, end) = (window[0], window[1]);
        let interval = end - start;
        for value in values.iter_mut().take(end).skip(start) {
            *value = interval;
        }
    }
    // Last frame belongs to the interval that ends on it.
    let last_interval = knots[knots.len() - 1] - knots[knots.len() - 2];
    values[len - 1] = last_interval;

    Ok(IntervalSequence { values })
}

/// Evaluates the Gaussian decay `exp(-NBD^2 / (2 (alpha l)^2))` per frame.
///
/// A mask without any beat yields the all-zero prior (the limit of the
/// formula as every distance goes to infinity).
pub fn gaussian_beat_prior(mask: &BeatMask, alpha: f64) -> Result<BeatPrior> {
    ensure!(
        alpha > 0.0 && alpha < 1.0,
        "smoothing factor alpha must lie in (0, 1), got {alpha}"
    );
    ensure!(mask.len() >= 2, "beat prior needs at least 2 frames");

    if mask.beat_frames().is_empty() {
        return Ok(BeatPrior {
            values: vec![0.0; mask.len()],
            alpha,
        });
    }

    let nbd = nearest_beat_distance(mask);
    let intervals = inter_beat_interval(mask)?;
    let values = nbd
        .values()
        .iter()
        .zip(intervals.values())
        .map(|(&dist, &interval)| {
            let width = alpha * interval as f64;
            (-(dist * dist) / (2.0 * width * width)).exp()
        })
        .collect();
    Ok(BeatPrior {
        values,
        alpha,
    })
}

/// Prior for a full track of arbitrary length, covering the `len == 1`
/// corner the interval definition cannot express: a single frame maps to
/// its own beat flag.
pub fn beat_prior_for_track(mask: &BeatMask, alpha: f64) -> Result<BeatPrior> {
    ensure!(
        alpha > 0.0 && alpha < 1.0,
        "smoothing factor alpha must lie in (0, 1), got {alpha}"
    );
    if mask.len() == 1 {
        return Ok(BeatPrior {
            values: vec![if mask.is_beat(0) { 1.0 } else { 0.0 }],
            alpha,
        });
    }
    gaussian_beat_prior(mask, alpha)
}

/// Default smoothing factor: the half-width of the bell sits at a quarter
/// of the inter-beat interval.
pub const DEFAULT_ALPHA: f64 = 0.25;
