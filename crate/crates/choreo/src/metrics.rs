//! Evaluation metrics: distribution distances over motion features,
//! physical foot-contact plausibility, motion-beat detection, beat
//! alignment, and diversity.
//!
//! The feature extractors are deliberately simple, declared stand-ins
//! (velocity statistics and pairwise-distance statistics); scores are
//! comparable between runs of this engine, not with numbers produced by
//! other toolchains' extractors.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::beat::BeatMask;
use crate::kinematics::{forward_kinematics, MotionSequence, Skeleton};
use crate::{ensure, Result};

/// Which feature family a row was extracted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Per-joint speed and acceleration statistics: 4 values per joint.
    Kinematic,
    /// Pairwise joint-distance histogram plus overall mean and deviation.
    Geometric,
}

/// Histogram bins of the geometric extractor.
pub const GEOMETRIC_BINS: usize = 24;
/// Upper edge of the geometric histogram, meters.
pub const GEOMETRIC_RANGE: f64 = 3.0;

/// Feature dimension for a kind on a given skeleton.
pub fn feature_dim(kind: FeatureKind, skel: &Skeleton) -> usize {
    match kind {
        FeatureKind::Kinematic => 4 * skel.joint_count(),
        FeatureKind::Geometric => GEOMETRIC_BINS + 2,
    }
}

/// One feature row for a motion. Root-translation invariant for both
/// kinds: the kinematic features see only frame-to-frame differences, and
/// the geometric extractor zeroes the root translation before measuring
/// distances, so shifting a motion cannot even flip a histogram bin.
pub fn extract_features(
    motion: &MotionSequence,
    skel: &Skeleton,
    kind: FeatureKind,
) -> Result<Array1<f64>> {
    ensure!(motion.len() >= 3, "feature extraction needs at least 3 frames");
    match kind {
        FeatureKind::Kinematic => {
            let positions = forward_kinematics(motion, skel)?;
            Ok(kinematic_features(&positions))
        }
        FeatureKind::Geometric => {
            let mut rooted = motion.clone();
            rooted
                .frames
                .slice_mut(ndarray::s![
                    ..,
                    crate::kinematics::ROOT_OFFSET..crate::kinematics::ROOT_OFFSET + 3
                ])
                .fill(0.0);
            let positions = forward_kinematics(&rooted, skel)?;
            Ok(geometric_features(&positions))
        }
    }
}

/// Stacks one feature row per motion.
pub fn feature_matrix(
    motions: &[MotionSequence],
    skel: &Skeleton,
    kind: FeatureKind,
) -> Result<Array2<f64>> {
    ensure!(!motions.is_empty(), "feature matrix needs at least one motion");
    let dim = feature_dim(kind, skel);
    let mut out = Array2::zeros((motions.len(), dim));
    for (i, motion) in motions.iter().enumerate() {
        let row = extract_features(motion, skel, kind)?;
        out.row_mut(i).assign(&row);
    }
    Ok(out)
}

fn kinematic_features(positions: &Array3<f64>) -> Array1<f64> {
    let (len, joints, _) = positions.dim();
    let speeds = |series: &dyn Fn(usize, usize) -> [f64; 3], count: usize, j: usize| {
        (0..count)
            .map(|i| {
                let v = series(i, j);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .collect::<Vec<f64>>()
    };
    let velocity = |i: usize, j: usize| {
        [
            positions[[i + 1, j, 0]] - positions[[i, j, 0]],
            positions[[i + 1, j, 1]] - positions[[i, j, 1]],
            positions[[i + 1, j, 2]] - positions[[i, j, 2]],
        ]
    };
    let acceleration = |i: usize, j: usize| {
        [
            positions[[i + 2, j, 0]] - 2.0 * positions[[i + 1, j, 0]] + positions[[i, j, 0]],
            positions[[i + 2, j, 1]] - 2.0 * positions[[i + 1, j, 1]] + positions[[i, j, 1]],
            positions[[i + 2, j, 2]] - 2.0 * positions[[i + 1, j, 2]] + positions[[i, j, 2]],
        ]
    };

    let mut features = Array1::zeros(4 * joints);
    for j in 0..joints {
        let speed = speeds(&velocity, len - 1, j);
        let accel = speeds(&acceleration, len - 2, j);
        let (sm, ss) = mean_std(&speed);
        let (am, asd) = mean_std(&accel);
        features[j] = sm;
        features[joints + j] = ss;
        features[2 * joints + j] = am;
        features[3 * joints + j] = asd;
    }
    features
}

fn geometric_features(positions: &Array3<f64>) -> Array1<f64> {
    let (len, joints, _) = positions.dim();
    let mut histogram = vec![0.0; GEOMETRIC_BINS];
    let mut distances = Vec::with_capacity(len * joints * (joints - 1) / 2);
    for i in 0..len {
        for a in 0..joints {
            for b in a + 1..joints {
                let dx = positions[[i, a, 0]] - positions[[i, b, 0]];
                let dy = positions[[i, a, 1]] - positions[[i, b, 1]];
                let dz = positions[[i, a, 2]] - positions[[i, b, 2]];
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                distances.push(d);
                let bin = ((d / GEOMETRIC_RANGE) * GEOMETRIC_BINS as f64) as usize;
                histogram[bin.min(GEOMETRIC_BINS - 1)] += 1.0;
            }
        }
    }
    let total: f64 = histogram.iter().sum();
    let mut features = Array1::zeros(GEOMETRIC_BINS + 2);
    for (i, h) in histogram.iter().enumerate() {
        features[i] = h / total;
    }
    let (mean, std) = mean_std(&distances);
    features[GEOMETRIC_BINS] = mean;
    features[GEOMETRIC_BINS + 1] = std;
    features
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// eigenvalues and the orthogonal eigenvector matrix (columns).
fn symmetric_eigen(matrix: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let frobenius: f64 = matrix.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frobenius.max(1e-300);

    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = Array1::from_shape_fn(n, |i| a[[i, i]]);
    (eigenvalues, v)
}

/// Symmetric PSD square root via eigendecomposition; small negative
/// eigenvalues are clipped at zero.
fn sqrt_psd(matrix: &Array2<f64>) -> Array2<f64> {
    let (values, vectors) = symmetric_eigen(matrix);
    let roots = values.mapv(|l| l.max(0.0).sqrt());
    let scaled = &vectors * &roots; // scales column j by roots[j]
    scaled.dot(&vectors.t())
}

fn mean_and_covariance(rows: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = rows.nrows() as f64;
    let mean = rows.sum_axis(Axis(0)) / n;
    let centered = rows - &mean;
    let cov = centered.t().dot(&centered) / (n - 1.0);
    (mean, cov)
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// `|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2))`, computed through the
/// symmetric form `(Sa^(1/2) Sb Sa^(1/2))^(1/2)` and clamped at zero.
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    ensure!(
        a.nrows() >= 2 && b.nrows() >= 2,
        "Frechet distance needs at least 2 samples per side"
    );
    ensure!(
        a.ncols() == b.ncols(),
        "feature widths differ: {} vs {}",
        a.ncols(),
        b.ncols()
    );
    let (mean_a, cov_a) = mean_and_covariance(a);
    let (mean_b, cov_b) = mean_and_covariance(b);
    let mean_term: f64 = (&mean_a - &mean_b).iter().map(|d| d * d).sum();

    let root_a = sqrt_psd(&cov_a);
    let inner = root_a.dot(&cov_b).dot(&root_a);
    // Symmetrize against accumulation asymmetry before the second root.
    let inner = (&inner + &inner.t()) * 0.5;
    let cross = sqrt_psd(&inner);

    let trace = |m: &Array2<f64>| (0..m.nrows()).map(|i| m[[i, i]]).sum::<f64>();
    let value = mean_term + trace(&cov_a) + trace(&cov_b) - 2.0 * trace(&cross);
    Ok(value.max(0.0))
}

/// Center of mass per frame: the unweighted mean of joint positions.
fn center_of_mass(positions: &Array3<f64>) -> Array2<f64> {
    let (len, joints, _) = positions.dim();
    let mut com = Array2::zeros((len, 3));
    for i in 0..len {
        for j in 0..joints {
            for axis in 0..3 {
                com[[i, axis]] += positions[[i, j, axis]] / joints as f64;
            }
        }
    }
    com
}

/// Physical foot-contact score; lower is better.
///
/// Per interior frame, the center-of-mass acceleration (horizontal
/// components always, the vertical one only when upward) is scaled by the
/// product of the two feet's speeds, then normalized by the sequence's
/// peak counted acceleration: unexplained acceleration while both feet
/// move is what costs.
pub fn pfc(motion: &MotionSequence, skel: &Skeleton) -> Result<f64> {
    ensure!(motion.len() >= 3, "foot-contact score needs at least 3 frames");
    ensure!(
        skel.foot_joints.len() >= 2,
        "foot-contact score needs foot joints on both sides"
    );
    let positions = forward_kinematics(motion, skel)?;
    let com = center_of_mass(&positions);
    let len = motion.len();

    let mid = skel.foot_joints.len() / 2;
    let side_speed = |i: usize, side: &[usize]| -> f64 {
        side.iter()
            .map(|&j| {
                let vx = (positions[[i + 1, j, 0]] - positions[[i - 1, j, 0]]) / 2.0;
                let vy = (positions[[i + 1, j, 1]] - positions[[i - 1, j, 1]]) / 2.0;
                let vz = (positions[[i + 1, j, 2]] - positions[[i - 1, j, 2]]) / 2.0;
                (vx * vx + vy * vy + vz * vz).sqrt()
            })
            .sum::<f64>()
            / side.len() as f64
    };

    let mut counted = Vec::with_capacity(len - 2);
    let mut products = Vec::with_capacity(len - 2);
    for i in 1..len - 1 {
        let ax = com[[i + 1, 0]] - 2.0 * com[[i, 0]] + com[[i - 1, 0]];
        let ay = com[[i + 1, 1]] - 2.0 * com[[i, 1]] + com[[i - 1, 1]];
        let az = com[[i + 1, 2]] - 2.0 * com[[i, 2]] + com[[i - 1, 2]];
        let ay = ay.max(0.0);
        counted.push((ax * ax + ay * ay + az * az).sqrt());
        products.push(
            side_speed(i, &skel.foot_joints[..mid]) * side_speed(i, &skel.foot_joints[mid..]),
        );
    }
    let peak = counted.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = counted
        .iter()
        .zip(&products)
        .map(|(a, p)| a / peak * p)
        .sum();
    Ok(sum / counted.len() as f64)
}

/// Frames where motion energy peaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionBeats {
    frames: Vec<usize>,
}

impl MotionBeats {
    pub fn new(frames: Vec<usize>) -> Result<Self> {
        ensure!(
            frames.windows(2).all(|w| w[0] < w[1]),
            "motion beat frames must be strictly increasing"
        );
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Default relative threshold for motion-beat detection.
pub const MOTION_BEAT_THRESHOLD: f64 = 0.1;

/// Total joint speed per interior frame (central differences).
fn total_speed(positions: &Array3<f64>) -> Vec<f64> {
    let (len, joints, _) = positions.dim();
    (1..len - 1)
        .map(|i| {
            (0..joints)
                .map(|j| {
                    let vx = (positions[[i + 1, j, 0]] - positions[[i - 1, j, 0]]) / 2.0;
                    let vy = (positions[[i + 1, j, 1]] - positions[[i - 1, j, 1]]) / 2.0;
                    let vz = (positions[[i + 1, j, 2]] - positions[[i - 1, j, 2]]) / 2.0;
                    (vx * vx + vy * vy + vz * vz).sqrt()
                })
                .sum()
        })
        .collect()
}

/// Frames whose total joint speed is a strict local maximum above
/// `threshold * max speed`. Strictness carries a relative tolerance so
/// float-level jitter on a constant-speed plateau cannot fake a peak.
pub fn detect_motion_beats(
    motion: &MotionSequence,
    skel: &Skeleton,
    threshold: f64,
) -> Result<MotionBeats> {
    ensure!(motion.len() >= 3, "beat detection needs at least 3 frames");
    let positions = forward_kinematics(motion, skel)?;
    let speeds = total_speed(&positions);
    let max = speeds.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * max;
    let mut frames = Vec::new();
    for k in 1..speeds.len().saturating_sub(1) {
        if speeds[k] > speeds[k - 1] + tol
            && speeds[k] > speeds[k + 1] + tol
            && speeds[k] >= threshold * max
        {
            frames.push(k + 1); // speeds[k] describes frame k + 1
        }
    }
    MotionBeats::new(frames)
}

/// Default kernel width of the alignment score, frames.
pub const BAS_SIGMA: f64 = 3.0;

/// Kernelized agreement between music beats and motion beats: the mean
/// over music beats of `exp(-d^2 / (2 sigma^2))` with `d` the distance to
/// the nearest motion beat. Empty motion beats score 0.
pub fn beat_alignment_score(
    music_beats: &BeatMask,
    motion_beats: &MotionBeats,
    sigma: f64,
) -> Result<f64> {
    ensure!(sigma > 0.0, "kernel width must be positive");
    let beats = music_beats.beat_frames();
    ensure!(!beats.is_empty(), "alignment needs at least one music beat");
    if motion_beats.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = beats
        .iter()
        .map(|&m| {
            let nearest = motion_beats
                .frames()
                .iter()
                .map(|&d| (d as f64 - m as f64).abs())
                .fold(f64::INFINITY, f64::min);
            (-(nearest * nearest) / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(sum / beats.len() as f64)
}

/// Mean Euclidean distance over all unordered row pairs.
pub fn diversity(features: &Array2<f64>) -> Result<f64> {
    let n = features.nrows();
    ensure!(n >= 2, "diversity needs at least 2 feature rows");
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum += d.sqrt();
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::ROOT_OFFSET;
    use crate::synth::synthetic_motion;
    use ndarray::array;
    use rand::Rng;

    fn skel() -> Skeleton {
        Skeleton::builtin_24()
    }

    #[test]
    fn features_are_deterministic_and_fixed_width() {
        let skel = skel();
        let short = synthetic_motion(&skel, 8, 1).unwrap();
        let long = synthetic_motion(&skel, 40, 1).unwrap();
        for kind in [FeatureKind::Kinematic, FeatureKind::Geometric] {
            let a = extract_features(&short, &skel, kind).unwrap();
            let b = extract_features(&short, &skel, kind).unwrap();
            assert_eq!(a, b);
            let c = extract_features(&long, &skel, kind).unwrap();
            assert_eq!(a.len(), feature_dim(kind, &skel));
            assert_eq!(c.len(), feature_dim(kind, &skel));
        }
    }

    #[test]
    fn features_ignore_constant_root_shift() {
        let skel = skel();
        let motion = synthetic_motion(&skel, 12, 2).unwrap();
        let mut shifted = motion.clone();
        for mut row in shifted.frames.rows_mut() {
            row[ROOT_OFFSET] += 4.0;
            row[ROOT_OFFSET + 2] -= 2.0;
        }
        for kind in [FeatureKind::Kinematic, FeatureKind::Geometric] {
            let a = extract_features(&motion, &skel, kind).unwrap();
            let b = extract_features(&shifted, &skel, kind).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn feature_extraction_needs_three_frames() {
        let skel = skel();
        let motion = synthetic_motion(&skel, 2, 3).unwrap();
        assert!(extract_features(&motion, &skel, FeatureKind::Kinematic).is_err());
    }

    #[test]
    fn frechet_of_identical_sets_is_zero() {
        let mut rng = crate::rng::seeded_rng(0xf1d);
        let x = Array2::from_shape_fn((20, 6), |_| rng.random_range(-1.0..1.0));
        let d = frechet_distance(&x, &x).unwrap();
        assert!(d < 1e-8, "got {d}");
    }

    #[test]
    fn frechet_one_dimensional_closed_form() {
        // Exact sample moments: mean 0 variance 1 vs mean 1 variance 1
        // (unbiased estimator), whose Frechet distance is exactly 1.
        let h = 0.5f64.sqrt();
        let x = array![[-h], [h]];
        let y = array![[1.0 - h], [1.0 + h]];
        let d = frechet_distance(&x, &y).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "got {d}");
    }

    #[test]
    fn frechet_is_symmetric_and_nonnegative() {
        let mut rng = crate::rng::seeded_rng(0xf2d);
        let a = Array2::from_shape_fn((15, 5), |_| rng.random_range(-1.0..1.0));
        let b = Array2::from_shape_fn((17, 5), |_| rng.random_range(-0.5..1.5));
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-8);
        assert!(ab >= 0.0);
        assert!(frechet_distance(&a, &Array2::zeros((3, 4))).is_err());
    }

    #[test]
    fn eigen_recomposes_symmetric_matrices() {
        let mut rng = crate::rng::seeded_rng(0xe16);
        for n in [1usize, 2, 5, 12] {
            let half = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let sym = (&half + &half.t()) * 0.5;
            let (values, vectors) = symmetric_eigen(&sym);
            let recomposed = vectors
                .dot(&Array2::from_diag(&values))
                .dot(&vectors.t());
            for (a, b) in recomposed.iter().zip(sym.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = crate::rng::seeded_rng(0x59f);
        let half = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        let psd = half.dot(&half.t()); // PSD 6x6 of rank <= 4
        let root = sqrt_psd(&psd);
        let squared = root.dot(&root);
        for (a, b) in squared.iter().zip(psd.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pfc_zero_for_stationary_motion() {
        let skel = skel();
        let frames = Array2::from_shape_fn((10, skel.motion_dim()), |(_, c)| {
            crate::kinematics::rest_pose_frame(&skel)[c]
        });
        let motion = MotionSequence::new(frames, 30.0).unwrap();
        assert_eq!(pfc(&motion, &skel).unwrap(), 0.0);
    }

    #[test]
    fn pfc_positive_for_accelerating_slide_and_scales() {
        let skel = skel();
        // Root accelerates horizontally while the whole body (feet
        // included) slides along.
        let mut frames = Array2::from_shape_fn((12, skel.motion_dim()), |(_, c)| {
            crate::kinematics::rest_pose_frame(&skel)[c]
        });
        for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
            row[ROOT_OFFSET] = 0.01 * (i as f64) * (i as f64);
        }
        let motion = MotionSequence::new(frames.clone(), 30.0).unwrap();
        let base = pfc(&motion, &skel).unwrap();
        assert!(base > 0.0);

        // Doubling the trajectory doubles velocities and accelerations:
        // the normalized acceleration factor cancels, the foot-speed
        // product quadruples.
        let mut doubled_frames = frames;
        for mut row in doubled_frames.rows_mut() {
            row[ROOT_OFFSET] *= 2.0;
        }
        let doubled = MotionSequence::new(doubled_frames, 30.0).unwrap();
        let got = pfc(&doubled, &skel).unwrap();
        assert!((got - 4.0 * base).abs() < 1e-9 * base.max(1.0), "got {got}, want {}", 4.0 * base);
    }

    #[test]
    fn pfc_matches_direct_loop_oracle() {
        let skel = skel();
        let motion = synthetic_motion(&skel, 16, 7).unwrap();
        let got = pfc(&motion, &skel).unwrap();

        // Plain re-derivation.
        let positions = forward_kinematics(&motion, &skel).unwrap();
        let joints = skel.joint_count() as f64;
        let com = |i: usize, axis: usize| {
            (0..skel.joint_count())
                .map(|j| positions[[i, j, axis]])
                .sum::<f64>()
                / joints
        };
        let speed = |i: usize, j: usize| {
            let mut s = 0.0;
            for axis in 0..3 {
                let v = (positions[[i + 1, j, axis]] - positions[[i - 1, j, axis]]) / 2.0;
                s += v * v;
            }
            s.sqrt()
        };
        let mut counted = vec![];
        let mut prods = vec![];
        for i in 1..motion.len() - 1 {
            let ax = com(i + 1, 0) - 2.0 * com(i, 0) + com(i - 1, 0);
            let ay = (com(i + 1, 1) - 2.0 * com(i, 1) + com(i - 1, 1)).max(0.0);
            let az = com(i + 1, 2) - 2.0 * com(i, 2) + com(i - 1, 2);
            counted.push((ax * ax + ay * ay + az * az).sqrt());
            let left = (speed(i, skel.foot_joints[0]) + speed(i, skel.foot_joints[1])) / 2.0;
            let right = (speed(i, skel.foot_joints[2]) + speed(i, skel.foot_joints[3])) / 2.0;
            prods.push(left * right);
        }
        let peak = counted.iter().copied().fold(0.0, f64::max);
        let expected = counted
            .iter()
            .zip(&prods)
            .map(|(a, p)| a / peak * p)
            .sum::<f64>()
            / counted.len() as f64;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn motion_beats_single_bump() {
        let skel = skel();
        // A single burst of root motion: speed ramps up then down.
        let mut frames = Array2::from_shape_fn((20, skel.motion_dim()), |(_, c)| {
            crate::kinematics::rest_pose_frame(&skel)[c]
        });
        let bump = |i: f64| (-(i - 10.3) * (i - 10.3) / 4.0).exp();
        let mut x = 0.0;
        for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
            x += bump(i as f64);
            row[ROOT_OFFSET] = x;
        }
        let motion = MotionSequence::new(frames, 30.0).unwrap();
        let beats = detect_motion_beats(&motion, &skel, MOTION_BEAT_THRESHOLD).unwrap();
        assert_eq!(beats.frames(), &[10]);
    }

    #[test]
    fn motion_beats_constant_speed_none() {
        let skel = skel();
        let mut frames = Array2::from_shape_fn((15, skel.motion_dim()), |(_, c)| {
            crate::kinematics::rest_pose_frame(&skel)[c]
        });
        for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
            row[ROOT_OFFSET] = 0.05 * i as f64;
        }
        let motion = MotionSequence::new(frames, 30.0).unwrap();
        let beats = detect_motion_beats(&motion, &skel, MOTION_BEAT_THRESHOLD).unwrap();
        assert!(beats.is_empty());
    }

    #[test]
    fn motion_beats_match_bruteforce_scan() {
        let skel = skel();
        for seed in 0..5u64 {
            let motion = synthetic_motion(&skel, 32, seed).unwrap();
            let got = detect_motion_beats(&motion, &skel, MOTION_BEAT_THRESHOLD).unwrap();
            // Oracle: recompute speeds and scan every candidate.
            let positions = forward_kinematics(&motion, &skel).unwrap();
            let speeds = total_speed(&positions);
            let max = speeds.iter().copied().fold(0.0, f64::max);
            let tol = 1e-9 * max;
            let mut expected = vec![];
            for k in 0..speeds.len() {
                let left_ok = k > 0 && speeds[k] > speeds[k - 1] + tol;
                let right_ok = k + 1 < speeds.len() && speeds[k] > speeds[k + 1] + tol;
                if left_ok && right_ok && speeds[k] >= MOTION_BEAT_THRESHOLD * max {
                    expected.push(k + 1);
                }
            }
            assert_eq!(got.frames(), expected.as_slice());
        }
    }

    #[test]
    fn bas_worked_values() {
        let mask = BeatMask::new(vec![
            0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, //
            0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        ])
        .unwrap();
        let coincident = MotionBeats::new(vec![10, 30]).unwrap();
        assert_eq!(beat_alignment_score(&mask, &coincident, BAS_SIGMA).unwrap(), 1.0);

        // Every music beat exactly sigma frames from its nearest motion beat.
        let offset = MotionBeats::new(vec![13, 33]).unwrap();
        let got = beat_alignment_score(&mask, &offset, BAS_SIGMA).unwrap();
        assert!((got - (-0.5f64).exp()).abs() < 1e-6);

        let empty = MotionBeats::new(vec![]).unwrap();
        assert_eq!(beat_alignment_score(&mask, &empty, BAS_SIGMA).unwrap(), 0.0);
    }

    #[test]
    fn bas_matches_nearest_neighbor_oracle() {
        let mut rng = crate::rng::seeded_rng(0xba5);
        for _ in 0..50 {
            let len = 64;
            let bits: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1u8)).collect();
            if bits.iter().all(|&b| b == 0) {
                continue;
            }
            let mask = BeatMask::new(bits).unwrap();
            let count = rng.random_range(1..8usize);
            let mut frames: Vec<usize> =
                (0..count).map(|_| rng.random_range(0..len)).collect();
            frames.sort_unstable();
            frames.dedup();
            let beats = MotionBeats::new(frames.clone()).unwrap();
            let got = beat_alignment_score(&mask, &beats, BAS_SIGMA).unwrap();

            let mut oracle = 0.0;
            let music = mask.beat_frames();
            for &m in &music {
                let mut best = f64::INFINITY;
                for &d in &frames {
                    best = best.min((d as f64 - m as f64).abs());
                }
                oracle += (-best * best / (2.0 * BAS_SIGMA * BAS_SIGMA)).exp();
            }
            oracle /= music.len() as f64;
            assert!((got - oracle).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn bas_decreases_as_beats_shift_away() {
        let bits: Vec<u8> = (0..100).map(|i| u8::from(i % 20 == 10)).collect();
        let mask = BeatMask::new(bits).unwrap();
        let mut last = f64::INFINITY;
        for shift in 0..8usize {
            let frames: Vec<usize> = (0..5).map(|k| 10 + 20 * k + shift).collect();
            let beats = MotionBeats::new(frames).unwrap();
            let score = beat_alignment_score(&mask, &beats, BAS_SIGMA).unwrap();
            assert!(score <= last);
            last = score;
        }
    }

    #[test]
    fn diversity_examples_and_oracle() {
        let identical = Array2::from_elem((4, 3), 0.5);
        assert_eq!(diversity(&identical).unwrap(), 0.0);

        let basis = array![[1.0, 0.0], [0.0, 1.0]];
        assert!((diversity(&basis).unwrap() - 2f64.sqrt()).abs() < 1e-12);

        let mut rng = crate::rng::seeded_rng(0xd1);
        let x = Array2::from_shape_fn((9, 4), |_| rng.random_range(-1.0..1.0));
        let got = diversity(&x).unwrap();
        let mut sum = 0.0;
        let mut pairs = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                if i < j {
                    let d: f64 = (0..4)
                        .map(|c| (x[[i, c]] - x[[j, c]]) * (x[[i, c]] - x[[j, c]]))
                        .sum();
                    sum += d.sqrt();
                    pairs += 1.0;
                }
            }
        }
        assert!((got - sum / pairs).abs() < 1e-10);
        assert!(diversity(&Array2::zeros((1, 3))).is_err());
    }
}
