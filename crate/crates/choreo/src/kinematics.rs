//! Motion frames, skeletons, forward kinematics, and mirroring.
//!
//! A motion frame packs `[contacts (4) | root translation (3) | J x 6
//! rotation values]`, so the frame width is `4 + 3 + 6 J` (151 for the
//! 24-joint skeleton, 139 for the 22-joint one). Each 6-value rotation
//! chunk holds two 3-vectors that Gram-Schmidt orthonormalization turns
//! into the first two columns of a rotation matrix; the third column is
//! their cross product, so any nonzero scaling of a chunk decodes to the
//! same rotation.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::{ensure, Error, Result};

pub const CONTACT_CHANNELS: usize = 4;
pub const ROOT_CHANNELS: usize = 3;

/// Index of the first root-translation channel within a frame.
pub const ROOT_OFFSET: usize = CONTACT_CHANNELS;
/// Index of the first rotation channel within a frame.
pub const ROTATION_OFFSET: usize = CONTACT_CHANNELS + ROOT_CHANNELS;

/// 3x3 matrix stored as three columns.
pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (col_out, col_b) in out.iter_mut().zip(b.iter()) {
        for r in 0..3 {
            col_out[r] = a[0][r] * col_b[0] + a[1][r] * col_b[1] + a[2][r] * col_b[2];
        }
    }
    out
}

fn mat_apply(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// A joint tree with rest offsets and the bilateral metadata the mirror
/// operation needs. Joint 0 is the root; the mirror plane is x = 0.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Skeleton {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub joint_names: Vec<String>,
    /// Parent index per joint, -1 for the root.
    pub parents: Vec<i32>,
    /// Rest offsets from the parent joint, meters.
    pub offsets: Vec<Vec3>,
    /// Foot joints ordered like the contact channels:
    /// left heel, left toe, right heel, right toe.
    pub foot_joints: Vec<usize>,
    /// (left, right) joint index pairs swapped by mirroring.
    pub mirror_pairs: Vec<(usize, usize)>,
}

fn default_schema() -> u32 {
    1
}

impl Skeleton {
    pub fn validate(&self) -> Result<()> {
        let joints = self.parents.len();
        ensure!(joints >= 1, "skeleton needs at least one joint");
        ensure!(
            self.joint_names.len() == joints && self.offsets.len() == joints,
            "joint_names, parents, offsets must have equal lengths"
        );
        ensure!(self.parents[0] == -1, "joint 0 must be the root (parent -1)");
        for (j, &p) in self.parents.iter().enumerate().skip(1) {
            ensure!(
                p >= 0 && (p as usize) < joints,
                "joint {j} has out-of-range parent {p}"
            );
        }
        // Walk each joint up to the root; more steps than joints means a cycle.
        for j in 0..joints {
            let mut current = j;
            let mut steps = 0;
            while self.parents[current] != -1 {
                current = self.parents[current] as usize;
                steps += 1;
                ensure!(steps <= joints, "parent array contains a cycle at joint {j}");
            }
        }
        for &f in &self.foot_joints {
            ensure!(f < joints, "foot joint {f} out of range");
        }
        let mut seen = vec![false; joints];
        for &(l, r) in &self.mirror_pairs {
            ensure!(l < joints && r < joints, "mirror pair ({l}, {r}) out of range");
            ensure!(l != r, "mirror pair ({l}, {r}) is degenerate");
            ensure!(
                !seen[l] && !seen[r],
                "mirror pairs overlap at joint {}",
                if seen[l] { l } else { r }
            );
            seen[l] = true;
            seen[r] = true;
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// Frame width for this skeleton.
    pub fn motion_dim(&self) -> usize {
        CONTACT_CHANNELS + ROOT_CHANNELS + 6 * self.joint_count()
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let skel: Skeleton = serde_json::from_str(json).map_err(|e| Error::Parse {
            path: "<skeleton json>".into(),
            line: Some(e.line()),
            column: Some(e.column()),
            msg: e.to_string(),
        })?;
        skel.validate()?;
        Ok(skel)
    }

    /// Built-in 24-joint tree (151-dim frames).
    pub fn builtin_24() -> Self {
        Self::from_json(include_str!("../data/skel24.json")).expect("bundled skeleton is valid")
    }

    /// Built-in 22-joint tree (139-dim frames).
    pub fn builtin_22() -> Self {
        Self::from_json(include_str!("../data/skel22.json")).expect("bundled skeleton is valid")
    }
}

/// A pose sequence: one row per frame in the packed layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Array2<f64>,
    pub fps: f64,
}

impl MotionSequence {
    pub fn new(frames: Array2<f64>, fps: f64) -> Result<Self> {
        ensure!(frames.nrows() >= 1, "motion needs at least one frame");
        let dim = frames.ncols();
        ensure!(
            dim >= ROTATION_OFFSET + 6 && (dim - ROTATION_OFFSET) % 6 == 0,
            "frame width {dim} is not 4 + 3 + 6J"
        );
        ensure!(
            frames.iter().all(|v| v.is_finite()),
            "motion contains non-finite entries"
        );
        ensure!(fps > 0.0, "fps must be positive");
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn joint_count(&self) -> usize {
        (self.dim() - ROTATION_OFFSET) / 6
    }

    /// Contact channels of one frame.
    pub fn contacts(&self, frame: usize) -> [f64; CONTACT_CHANNELS] {
        let mut out = [0.0; CONTACT_CHANNELS];
        for (c, v) in out.iter_mut().enumerate() {
            *v = self.frames[[frame, c]];
        }
        out
    }

    pub fn root_translation(&self, frame: usize) -> Vec3 {
        [
            self.frames[[frame, ROOT_OFFSET]],
            self.frames[[frame, ROOT_OFFSET + 1]],
            self.frames[[frame, ROOT_OFFSET + 2]],
        ]
    }
}

/// One decoded frame: contacts, root translation, and per-joint rotation
/// matrices.
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub contacts: [f64; CONTACT_CHANNELS],
    pub root_translation: Vec3,
    pub rotations: Vec<Mat3>,
}

/// Orthonormalizes a 6-value chunk into a rotation matrix.
pub fn rotation_from_6d(chunk: &[f64]) -> Result<Mat3> {
    debug_assert_eq!(chunk.len(), 6);
    let raw_a = [chunk[0], chunk[1], chunk[2]];
    let raw_b = [chunk[3], chunk[4], chunk[5]];
    let norm_a = norm3(&raw_a);
    if norm_a < 1e-8 {
        return Err(Error::numeric(format!(
            "rotation chunk has near-zero first vector (norm {norm_a:.2e})"
        )));
    }
    let col0 = [raw_a[0] / norm_a, raw_a[1] / norm_a, raw_a[2] / norm_a];
    let proj = dot3(&raw_b, &col0);
    let resid = [
        raw_b[0] - proj * col0[0],
        raw_b[1] - proj * col0[1],
        raw_b[2] - proj * col0[2],
    ];
    let norm_r = norm3(&resid);
    if norm_r < 1e-8 {
        return Err(Error::numeric(format!(
            "rotation chunk is degenerate: second vector collinear with first (residual {norm_r:.2e})"
        )));
    }
    let col1 = [resid[0] / norm_r, resid[1] / norm_r, resid[2] / norm_r];
    let col2 = cross(&col0, &col1);
    Ok([col0, col1, col2])
}

/// Unpacks one frame into contacts, root translation, and rotations.
pub fn decode_frame(frame: &[f64], skel: &Skeleton) -> Result<DecodedFrame> {
    let expected = skel.motion_dim();
    ensure!(
        frame.len() == expected,
        "frame width {} does not match skeleton width {expected}",
        frame.len()
    );
    let mut contacts = [0.0; CONTACT_CHANNELS];
    contacts.copy_from_slice(&frame[..CONTACT_CHANNELS]);
    let root_translation = [
        frame[ROOT_OFFSET],
        frame[ROOT_OFFSET + 1],
        frame[ROOT_OFFSET + 2],
    ];
    let mut rotations = Vec::with_capacity(skel.joint_count());
    for j in 0..skel.joint_count() {
        let start = ROTATION_OFFSET + 6 * j;
        rotations.push(rotation_from_6d(&frame[start..start + 6])?);
    }
    Ok(DecodedFrame {
        contacts,
        root_translation,
        rotations,
    })
}

/// World positions of every joint, shape (frames, joints, 3).
///
/// The root sits at the frame's root translation; every other joint at
/// `p_parent + R_global_parent * offset`, with global rotations accumulated
/// down the tree.
pub fn forward_kinematics(motion: &MotionSequence, skel: &Skeleton) -> Result<Array3<f64>> {
    skel.validate()?;
    let joints = skel.joint_count();
    ensure!(
        motion.dim() == skel.motion_dim(),
        "motion width {} does not match skeleton width {}",
        motion.dim(),
        skel.motion_dim()
    );
    let len = motion.len();
    let mut positions = Array3::zeros((len, joints, 3));
    let mut globals: Vec<Mat3> = vec![IDENTITY; joints];
    for i in 0..len {
        let decoded = decode_frame(motion.frames.row(i).as_slice().expect("row"), skel)?;
        for j in 0..joints {
            let parent = skel.parents[j];
            if parent < 0 {
                globals[j] = decoded.rotations[j];
                for axis in 0..3 {
                    positions[[i, j, axis]] = decoded.root_translation[axis];
                }
            } else {
                let p = parent as usize;
                let world = mat_apply(&globals[p], &skel.offsets[j]);
                for axis in 0..3 {
                    positions[[i, j, axis]] = positions[[i, p, axis]] + world[axis];
                }
                globals[j] = mat_mul(&globals[p], &decoded.rotations[j]);
            }
        }
    }
    Ok(positions)
}

/// Forward kinematics restricted to the skeleton's foot joints, shape
/// (frames, foot joints, 3).
pub fn fk_foot(motion: &MotionSequence, skel: &Skeleton) -> Result<Array3<f64>> {
    ensure!(!skel.foot_joints.is_empty(), "skeleton has no foot joints");
    let full = forward_kinematics(motion, skel)?;
    let mut out = Array3::zeros((motion.len(), skel.foot_joints.len(), 3));
    for (slot, &j) in skel.foot_joints.iter().enumerate() {
        for i in 0..motion.len() {
            for axis in 0..3 {
                out[[i, slot, axis]] = full[[i, j, axis]];
            }
        }
    }
    Ok(out)
}

/// Reflects a motion across the sagittal plane (x = 0).
///
/// Paired joints swap rotation chunks, paired contact channels swap, the
/// root translation's x component is negated, and every rotation chunk is
/// conjugated by the reflection. The conjugation acts directly on the raw
/// 6 values (negating the y/z of the first vector and the x of the second),
/// so the operation is an exact involution.
pub fn mirror_motion(motion: &MotionSequence, skel: &Skeleton) -> Result<MotionSequence> {
    ensure!(
        motion.dim() == skel.motion_dim(),
        "motion width {} does not match skeleton width {}",
        motion.dim(),
        skel.motion_dim()
    );
    let mut swap_to = (0..skel.joint_count()).collect::<Vec<_>>();
    for &(l, r) in &skel.mirror_pairs {
        swap_to[l] = r;
        swap_to[r] = l;
    }

    let mut frames = motion.frames.clone();
    for mut row in frames.rows_mut() {
        let original: Vec<f64> = row.to_vec();
        // Contacts: [LH, LT, RH, RT] -> [RH, RT, LH, LT].
        row[0] = original[2];
        row[1] = original[3];
        row[2] = original[0];
        row[3] = original[1];
        row[ROOT_OFFSET] = -original[ROOT_OFFSET];
        for j in 0..skel.joint_count() {
            let src = ROTATION_OFFSET + 6 * swap_to[j];
            let dst = ROTATION_OFFSET + 6 * j;
            row[dst] = original[src];
            row[dst + 1] = -original[src + 1];
            row[dst + 2] = -original[src + 2];
            row[dst + 3] = -original[src + 3];
            row[dst + 4] = original[src + 4];
            row[dst + 5] = original[src + 5];
        }
    }
    MotionSequence::new(frames, motion.fps)
}

/// A rest pose: identity rotations, zero contacts and translation.
pub fn rest_pose_frame(skel: &Skeleton) -> Vec<f64> {
    let mut frame = vec![0.0; skel.motion_dim()];
    for j in 0..skel.joint_count() {
        let start = ROTATION_OFFSET + 6 * j;
        frame[start] = 1.0; // first vector (1, 0, 0)
        frame[start + 4] = 1.0; // second vector (0, 1, 0)
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn random_motion(
        skel: &Skeleton,
        len: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> MotionSequence {
        let dim = skel.motion_dim();
        let frames = Array2::from_shape_fn((len, dim), |(_, c)| {
            if c < CONTACT_CHANNELS {
                rng.random_range(0.0..1.0)
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        MotionSequence::new(frames, 30.0).unwrap()
    }

    /// Naive FK: rebuild each joint's rotation chain from the root without
    /// shared accumulators.
    fn fk_oracle(motion: &MotionSequence, skel: &Skeleton) -> Array3<f64> {
        let joints = skel.joint_count();
        let mut out = Array3::zeros((motion.len(), joints, 3));
        for i in 0..motion.len() {
            let decoded = decode_frame(motion.frames.row(i).as_slice().unwrap(), skel).unwrap();
            for j in 0..joints {
                let mut path = vec![j];
                while skel.parents[*path.last().unwrap()] != -1 {
                    path.push(skel.parents[*path.last().unwrap()] as usize);
                }
                path.reverse();
                let mut pos = decoded.root_translation;
                let mut rot = decoded.rotations[path[0]];
                for &joint in &path[1..] {
                    let step = mat_apply(&rot, &skel.offsets[joint]);
                    pos = [pos[0] + step[0], pos[1] + step[1], pos[2] + step[2]];
                    rot = mat_mul(&rot, &decoded.rotations[joint]);
                }
                for axis in 0..3 {
                    out[[i, j, axis]] = pos[axis];
                }
            }
        }
        out
    }

    #[test]
    fn builtin_skeletons_are_valid() {
        let s24 = Skeleton::builtin_24();
        let s22 = Skeleton::builtin_22();
        assert_eq!(s24.motion_dim(), 151);
        assert_eq!(s22.motion_dim(), 139);
        assert_eq!(s24.foot_joints.len(), CONTACT_CHANNELS);
        // Bilateral symmetry of the rest offsets, needed for exact mirror
        // trajectory checks.
        for skel in [&s24, &s22] {
            for &(l, r) in &skel.mirror_pairs {
                assert_eq!(skel.offsets[l][0], -skel.offsets[r][0]);
                assert_eq!(skel.offsets[l][1], skel.offsets[r][1]);
                assert_eq!(skel.offsets[l][2], skel.offsets[r][2]);
            }
        }
    }

    #[test]
    fn six_d_identity_and_scale_invariance() {
        let id = rotation_from_6d(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(id, IDENTITY);
        let scaled = rotation_from_6d(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(scaled, IDENTITY);
    }

    #[test]
    fn six_d_rejects_degenerate_chunks() {
        assert!(rotation_from_6d(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).is_err());
        assert!(rotation_from_6d(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn decoded_rotations_are_orthonormal() {
        let mut rng = crate::rng::seeded_rng(0x6d);
        for _ in 0..200 {
            let chunk: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let Ok(rot) = rotation_from_6d(&chunk) else {
                continue;
            };
            for a in 0..3 {
                for b in 0..3 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot3(&rot[a], &rot[b]) - want).abs() < 1e-6);
                }
            }
            // det = +1: proper rotation.
            let det = dot3(&cross(&rot[0], &rot[1]), &rot[2]);
            assert!((det - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fk_rest_pose_accumulates_offsets() {
        let skel = Skeleton::builtin_24();
        let frames =
            Array2::from_shape_vec((1, skel.motion_dim()), rest_pose_frame(&skel)).unwrap();
        let motion = MotionSequence::new(frames, 30.0).unwrap();
        let positions = forward_kinematics(&motion, &skel).unwrap();
        // Left wrist = sum of offsets along pelvis -> ... -> left_wrist.
        let mut expected = [0.0; 3];
        let mut j = 20;
        loop {
            for (axis, e) in expected.iter_mut().enumerate() {
                *e += skel.offsets[j][axis];
            }
            if skel.parents[j] == -1 {
                break;
            }
            j = skel.parents[j] as usize;
        }
        for axis in 0..3 {
            assert!((positions[[0, 20, axis]] - expected[axis]).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_translation_equivariance() {
        let skel = Skeleton::builtin_22();
        let mut rng = crate::rng::seeded_rng(0xf00d);
        let motion = random_motion(&skel, 3, &mut rng);
        let base = forward_kinematics(&motion, &skel).unwrap();
        let mut shifted = motion.clone();
        for mut row in shifted.frames.rows_mut() {
            row[ROOT_OFFSET] += 1.0;
            row[ROOT_OFFSET + 1] += 2.0;
            row[ROOT_OFFSET + 2] += 3.0;
        }
        let moved = forward_kinematics(&shifted, &skel).unwrap();
        let delta = [1.0, 2.0, 3.0];
        for ((i, j, axis), v) in moved.indexed_iter() {
            assert!((v - (base[[i, j, axis]] + delta[axis])).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_root_rotation_about_vertical() {
        // 90 degrees about y maps (x, y, z) to (z, y, -x).
        let skel = Skeleton::builtin_24();
        let mut frame = rest_pose_frame(&skel);
        // Root rotation columns: (0, 0, -1) and (0, 1, 0).
        frame[ROTATION_OFFSET] = 0.0;
        frame[ROTATION_OFFSET + 1] = 0.0;
        frame[ROTATION_OFFSET + 2] = -1.0;
        let rest = MotionSequence::new(
            Array2::from_shape_vec((1, skel.motion_dim()), rest_pose_frame(&skel)).unwrap(),
            30.0,
        )
        .unwrap();
        let rotated = MotionSequence::new(
            Array2::from_shape_vec((1, skel.motion_dim()), frame).unwrap(),
            30.0,
        )
        .unwrap();
        let p0 = forward_kinematics(&rest, &skel).unwrap();
        let p1 = forward_kinematics(&rotated, &skel).unwrap();
        for j in 0..skel.joint_count() {
            let (x, y, z) = (p0[[0, j, 0]], p0[[0, j, 1]], p0[[0, j, 2]]);
            assert!((p1[[0, j, 0]] - z).abs() < 1e-9, "joint {j}");
            assert!((p1[[0, j, 1]] - y).abs() < 1e-9, "joint {j}");
            assert!((p1[[0, j, 2]] + x).abs() < 1e-9, "joint {j}");
        }
    }

    #[test]
    fn fk_matches_naive_chain_oracle() {
        for skel in [Skeleton::builtin_24(), Skeleton::builtin_22()] {
            let mut rng = crate::rng::seeded_rng(0x0f);
            for _ in 0..50 {
                let motion = random_motion(&skel, 2, &mut rng);
                let fast = forward_kinematics(&motion, &skel).unwrap();
                let naive = fk_oracle(&motion, &skel);
                for (a, b) in fast.iter().zip(naive.iter()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn fk_positions_invariant_to_chunk_scaling() {
        let skel = Skeleton::builtin_22();
        let mut rng = crate::rng::seeded_rng(0x5c);
        let motion = random_motion(&skel, 2, &mut rng);
        let mut scaled = motion.clone();
        for mut row in scaled.frames.rows_mut() {
            for j in 0..skel.joint_count() {
                let start = ROTATION_OFFSET + 6 * j;
                for k in 0..6 {
                    row[start + k] *= 2.5;
                }
            }
        }
        let a = forward_kinematics(&motion, &skel).unwrap();
        let b = forward_kinematics(&scaled, &skel).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fk_foot_selects_foot_rows() {
        let skel = Skeleton::builtin_24();
        let mut rng = crate::rng::seeded_rng(0xf0);
        let motion = random_motion(&skel, 4, &mut rng);
        let full = forward_kinematics(&motion, &skel).unwrap();
        let feet = fk_foot(&motion, &skel).unwrap();
        assert_eq!(feet.dim(), (4, skel.foot_joints.len(), 3));
        for (slot, &j) in skel.foot_joints.iter().enumerate() {
            for i in 0..4 {
                for axis in 0..3 {
                    assert_eq!(feet[[i, slot, axis]], full[[i, j, axis]]);
                }
            }
        }
    }

    #[test]
    fn fk_foot_requires_foot_joints() {
        let mut skel = Skeleton::builtin_24();
        skel.foot_joints.clear();
        let mut rng = crate::rng::seeded_rng(1);
        let motion = random_motion(&skel, 2, &mut rng);
        assert!(fk_foot(&motion, &skel).is_err());
    }

    #[test]
    fn mirror_is_an_exact_involution() {
        let skel = Skeleton::builtin_24();
        let mut rng = crate::rng::seeded_rng(0x1111);
        let motion = random_motion(&skel, 5, &mut rng);
        let twice = mirror_motion(&mirror_motion(&motion, &skel).unwrap(), &skel).unwrap();
        assert_eq!(motion.frames, twice.frames);
    }

    #[test]
    fn mirror_fixes_symmetric_rest_pose() {
        let skel = Skeleton::builtin_24();
        let frames =
            Array2::from_shape_vec((1, skel.motion_dim()), rest_pose_frame(&skel)).unwrap();
        let motion = MotionSequence::new(frames, 30.0).unwrap();
        let mirrored = mirror_motion(&motion, &skel).unwrap();
        for (a, b) in motion.frames.iter().zip(mirrored.frames.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mirror_reflects_foot_trajectories() {
        let skel = Skeleton::builtin_24();
        let mut rng = crate::rng::seeded_rng(0x2222);
        let motion = random_motion(&skel, 4, &mut rng);
        let mirrored = mirror_motion(&motion, &skel).unwrap();
        let base = forward_kinematics(&motion, &skel).unwrap();
        let refl = forward_kinematics(&mirrored, &skel).unwrap();
        // Left ankle (7) of the mirrored motion is the reflected right
        // ankle (8) of the original; same for the toes (10, 11).
        for i in 0..4 {
            for (l, r) in [(7usize, 8usize), (10, 11)] {
                assert!((refl[[i, l, 0]] + base[[i, r, 0]]).abs() < 1e-9);
                assert!((refl[[i, l, 1]] - base[[i, r, 1]]).abs() < 1e-9);
                assert!((refl[[i, l, 2]] - base[[i, r, 2]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mirror_commutes_with_slicing() {
        let skel = Skeleton::builtin_22();
        let mut rng = crate::rng::seeded_rng(0x3333);
        let motion = random_motion(&skel, 6, &mut rng);
        let mirrored = mirror_motion(&motion, &skel).unwrap();
        let slice_then = mirrored.frames.slice(ndarray::s![1..4, ..]).to_owned();
        let then_slice = mirror_motion(
            &MotionSequence::new(motion.frames.slice(ndarray::s![1..4, ..]).to_owned(), 30.0)
                .unwrap(),
            &skel,
        )
        .unwrap();
        assert_eq!(slice_then, then_slice.frames);
    }

    #[test]
    fn cyclic_parents_rejected() {
        let mut skel = Skeleton::builtin_22();
        skel.parents[3] = 4;
        skel.parents[4] = 3;
        assert!(skel.validate().is_err());
    }
}
