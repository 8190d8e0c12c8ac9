//! Synthetic inputs for examples, smoke runs, and tests: feature matrices
//! with a regular beat grid and smooth sinusoidal motions.

use ndarray::Array2;
use rand::Rng;

use crate::beat::{MusicFeatures, DEFAULT_FPS, MUSIC_DIM};
use crate::kinematics::{MotionSequence, Skeleton, ROOT_OFFSET, ROTATION_OFFSET};
use crate::rng::seeded_rng;
use crate::Result;

/// Random acoustic features with a beat every `beat_period` frames.
pub fn synthetic_music(len: usize, beat_period: usize, seed: u64) -> Result<MusicFeatures> {
    let mut rng = seeded_rng(seed);
    let frames = Array2::from_shape_fn((len, MUSIC_DIM), |(i, c)| {
        if c == MUSIC_DIM - 1 {
            f64::from(beat_period > 0 && i % beat_period == 0)
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    MusicFeatures::new(frames, DEFAULT_FPS)
}

/// A smooth, plausible pose sequence: every rotation channel wobbles
/// sinusoidally around the rest pose, the root drifts slowly, and the
/// contact channels alternate stance every half second.
pub fn synthetic_motion(skel: &Skeleton, len: usize, seed: u64) -> Result<MotionSequence> {
    let mut rng = seeded_rng(seed);
    let dim = skel.motion_dim();
    let rest = crate::kinematics::rest_pose_frame(skel);

    struct Wobble {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    }
    let wobbles: Vec<Wobble> = (0..dim)
        .map(|_| Wobble {
            amplitude: rng.random_range(0.05..0.25),
            frequency: rng.random_range(0.5..2.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();

    let frames = Array2::from_shape_fn((len, dim), |(i, c)| {
        let t = i as f64 / DEFAULT_FPS;
        let w = &wobbles[c];
        let wave = w.amplitude * (std::f64::consts::TAU * w.frequency * t + w.phase).sin();
        if c < ROOT_OFFSET {
            // Stance alternates every 15 frames; heel and toe share it.
            let left = (i / 15) % 2 == 0;
            match c {
                0 | 1 => f64::from(left),
                _ => f64::from(!left),
            }
        } else if c < ROTATION_OFFSET {
            // Slow root drift.
            0.2 * wave + 0.1 * t * w.frequency.cos()
        } else {
            rest[c] + wave
        }
    });
    MotionSequence::new(frames, DEFAULT_FPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_music_has_binary_beats() {
        let music = synthetic_music(64, 15, 3).unwrap();
        assert_eq!(music.len(), 64);
        let mask = crate::beat::extract_beat_mask(&music).unwrap();
        assert_eq!(mask.beat_frames(), vec![0, 15, 30, 45, 60]);
    }

    #[test]
    fn synthetic_motion_is_decodable() {
        let skel = Skeleton::builtin_22();
        let motion = synthetic_motion(&skel, 32, 5).unwrap();
        assert_eq!(motion.dim(), 139);
        crate::kinematics::forward_kinematics(&motion, &skel).unwrap();
    }
}
