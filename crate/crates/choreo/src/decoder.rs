//! The denoising network.
//!
//! An input MLP lifts a noisy motion window to latents, a stack of decoder
//! blocks processes them under music/beat/timestep conditioning, and an
//! output MLP projects back to motion space, predicting the clean signal.
//!
//! Each block runs three residual sub-layers, each fed through modulated
//! group normalization with its own conditioning head:
//!
//! ```text
//! z += motion_ssm(modulate(z))          # temporal (+ spatial) scans
//! z += cross_modal(modulate(z), c, e)   # scan over [z, condition, timestep]
//! z += ffn(modulate(z))
//! ```

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::nn::{silu, visit_child, visit_child_mut, Affine, ParamSet};
use crate::rng::seeded_rng;
use crate::ssm::{SpatialBlock, TemporalBlock, TemporalScan};
use crate::{ensure, Result};

/// Shape and wiring of a [`DanceDecoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Latent width E; must be even and divisible by `groups`.
    pub latent_width: usize,
    /// Number of decoder blocks.
    pub blocks: usize,
    /// Channel groups for the modulated normalization.
    pub groups: usize,
    /// FFN hidden width as a multiple of the latent width.
    pub ffn_expansion: usize,
    /// Motion frame width this decoder denoises.
    pub motion_dim: usize,
    /// Music feature channels (beat flag included).
    pub music_dim: usize,
    /// State dimension of every scan.
    pub state_dim: usize,
    /// Include the channel-axis scan in each block. Disabled for the
    /// global stage, whose input and output lengths differ.
    pub spatial_block: bool,
    /// Scan the cross-modal concatenation in both directions. A causal
    /// scan over [motion, condition, timestep] cannot let the conditions
    /// reach the motion rows, so this defaults to true.
    pub cmm_bidirectional: bool,
    /// Diffusion timestep range accepted by the embedding.
    pub train_steps: usize,
}

impl DecoderConfig {
    /// Desk-scale defaults for a given motion width.
    pub fn desk(motion_dim: usize) -> Self {
        Self {
            latent_width: 64,
            blocks: 8,
            groups: 8,
            ffn_expansion: 4,
            motion_dim,
            music_dim: crate::beat::MUSIC_DIM,
            state_dim: 16,
            spatial_block: true,
            cmm_bidirectional: true,
            train_steps: 1000,
        }
    }

    /// Small configuration for overfit runs and fast tests.
    pub fn tiny(motion_dim: usize) -> Self {
        Self {
            latent_width: 16,
            blocks: 2,
            groups: 4,
            ffn_expansion: 2,
            motion_dim,
            music_dim: crate::beat::MUSIC_DIM,
            state_dim: 4,
            spatial_block: true,
            cmm_bidirectional: true,
            train_steps: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.blocks >= 1, "decoder needs at least one block");
        ensure!(self.latent_width >= 2, "latent width must be at least 2");
        ensure!(
            self.latent_width % 2 == 0,
            "latent width must be even for the sinusoidal embedding"
        );
        ensure!(
            self.groups >= 1 && self.latent_width % self.groups == 0,
            "latent width {} must be divisible by group count {}",
            self.latent_width,
            self.groups
        );
        ensure!(self.ffn_expansion >= 1, "ffn expansion must be at least 1");
        ensure!(self.motion_dim >= 1, "motion width must be at least 1");
        ensure!(self.music_dim >= 1, "music width must be at least 1");
        ensure!(self.state_dim >= 1, "state dimension must be at least 1");
        ensure!(self.train_steps >= 1, "train steps must be at least 1");
        Ok(())
    }
}

/// Epsilon used by the group normalization.
pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Per-frame group normalization over channel groups, no learned affine.
pub fn group_norm(z: &Array2<f64>, groups: usize, eps: f64) -> Result<Array2<f64>> {
    let width = z.ncols();
    ensure!(
        groups >= 1 && width % groups == 0,
        "width {width} must be divisible by group count {groups}"
    );
    let group_size = width / groups;
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        for g in 0..groups {
            let start = g * group_size;
            let slice = row.slice(ndarray::s![start..start + group_size]);
            let mean = slice.sum() / group_size as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / group_size as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for v in row
                .slice_mut(ndarray::s![start..start + group_size])
                .iter_mut()
            {
                *v = (*v - mean) * inv;
            }
        }
    }
    Ok(out)
}

/// Feature-wise scale and shift produced from pooled conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// `(1 + gamma) * group_norm(z) + beta`, applied per frame.
pub fn modulated_group_norm(
    z: &Array2<f64>,
    params: &ModulationParams,
    groups: usize,
    eps: f64,
) -> Result<Array2<f64>> {
    ensure!(
        params.gamma.len() == z.ncols() && params.beta.len() == z.ncols(),
        "modulation width {} does not match latent width {}",
        params.gamma.len(),
        z.ncols()
    );
    let mut normed = group_norm(z, groups, eps)?;
    for mut row in normed.rows_mut() {
        for ((v, g), b) in row.iter_mut().zip(&params.gamma).zip(&params.beta) {
            *v = (1.0 + g) * *v + b;
        }
    }
    Ok(normed)
}

/// Projects a pooled conditioning vector to `(gamma, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationHead {
    /// latent width -> 2 * latent width.
    pub proj: Affine,
}

impl ModulationHead {
    pub fn init(width: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        Self {
            proj: Affine::init(2 * width, width, rng),
        }
    }

    pub fn params_from(&self, pooled: &Array1<f64>) -> ModulationParams {
        let width = self.proj.out_dim() / 2;
        let both = self.proj.apply_vec(pooled);
        ModulationParams {
            gamma: both.slice(ndarray::s![..width]).to_owned(),
            beta: both.slice(ndarray::s![width..]).to_owned(),
        }
    }
}

impl ParamSet for ModulationHead {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.proj, "proj", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.proj, "proj", f);
    }
}

/// Pools the condition tokens and timestep tokens into one vector:
/// the mean over all their rows.
pub fn modulation_input(c_m: &Array2<f64>, e_t: &Array2<f64>) -> Array1<f64> {
    let total = c_m.nrows() + e_t.nrows();
    (c_m.sum_axis(Axis(0)) + e_t.sum_axis(Axis(0))) / total as f64
}

/// Two affine maps with an activation between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub lift: Affine,
    pub proj: Affine,
}

impl Mlp {
    pub fn init(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        Self {
            lift: Affine::init(hidden, in_dim, rng),
            proj: Affine::init(out_dim, hidden, rng),
        }
    }

    pub fn apply_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut hidden = self.lift.apply_rows(x);
        hidden.mapv_inplace(silu);
        self.proj.apply_rows(&hidden)
    }
}

impl ParamSet for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.lift, "lift", f);
        visit_child(&self.proj, "proj", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.lift, "lift", f);
        visit_child_mut(&mut self.proj, "proj", f);
    }
}

/// Music-beat mixer plus a causal scan encoder.
///
/// Each frame's music channels and beat-prior value are concatenated,
/// lifted by an MLP, and run through one causal temporal block, producing
/// the condition tokens `c_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEncoder {
    pub mixer: Mlp,
    pub encoder: TemporalBlock,
    music_dim: usize,
}

impl ConditionEncoder {
    pub fn init(config: &DecoderConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let width = config.latent_width;
        Self {
            mixer: Mlp::init(config.music_dim + 1, width, width, rng),
            encoder: TemporalBlock::init(width, config.state_dim, rng),
            music_dim: config.music_dim,
        }
    }

    /// Produces the condition tokens for a music/beat window.
    pub fn encode(&self, music: &Array2<f64>, beat: &[f64]) -> Result<EncodedCondition> {
        ensure!(
            music.ncols() == self.music_dim,
            "music window has {} channels, encoder expects {}",
            music.ncols(),
            self.music_dim
        );
        ensure!(
            music.nrows() == beat.len(),
            "music window ({} frames) and beat prior ({} frames) differ",
            music.nrows(),
            beat.len()
        );
        let len = music.nrows();
        let mut mixed = Array2::zeros((len, self.music_dim + 1));
        mixed
            .slice_mut(ndarray::s![.., ..self.music_dim])
            .assign(music);
        for (i, &b) in beat.iter().enumerate() {
            mixed[[i, self.music_dim]] = b;
        }
        let lifted = self.mixer.apply_rows(&mixed);
        let tokens = self.encoder.apply(&lifted)?;
        Ok(EncodedCondition::new(tokens))
    }
}

impl ParamSet for ConditionEncoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.mixer, "mixer", f);
        visit_child(&self.encoder, "encoder", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.mixer, "mixer", f);
        visit_child_mut(&mut self.encoder, "encoder", f);
    }
}

/// Condition tokens with their row sum cached for pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCondition {
    pub tokens: Array2<f64>,
    row_sum: Array1<f64>,
}

impl EncodedCondition {
    pub fn new(tokens: Array2<f64>) -> Self {
        let row_sum = tokens.sum_axis(Axis(0));
        Self { tokens, row_sum }
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    /// Mean over the condition rows and the timestep token rows.
    pub fn pooled_with(&self, e_t: &Array2<f64>) -> Array1<f64> {
        let total = self.tokens.nrows() + e_t.nrows();
        (&self.row_sum + &e_t.sum_axis(Axis(0))) / total as f64
    }
}

/// Two timestep tokens from one sinusoidal embedding through two
/// independent affine heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepEmbedding {
    pub head_a: Affine,
    pub head_b: Affine,
}

impl TimestepEmbedding {
    pub fn init(width: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        Self {
            head_a: Affine::init(width, width, rng),
            head_b: Affine::init(width, width, rng),
        }
    }

    /// Sinusoidal position features of `t`.
    pub fn sinusoid(t: usize, width: usize) -> Array1<f64> {
        let half = width / 2;
        let mut emb = Array1::zeros(width);
        for i in 0..half {
            let freq = (10_000f64).powf(-(i as f64) / half as f64);
            emb[2 * i] = (t as f64 * freq).sin();
            emb[2 * i + 1] = (t as f64 * freq).cos();
        }
        emb
    }

    /// Tokens of shape (2, width); `t` must lie in `1..=max_t`.
    pub fn embed(&self, t: usize, max_t: usize) -> Result<Array2<f64>> {
        ensure!(t >= 1 && t <= max_t, "timestep {t} outside 1..={max_t}");
        let width = self.head_a.out_dim();
        let emb = Self::sinusoid(t, width);
        let a = self.head_a.apply_vec(&emb);
        let b = self.head_b.apply_vec(&emb);
        let mut out = Array2::zeros((2, width));
        out.row_mut(0).assign(&a);
        out.row_mut(1).assign(&b);
        Ok(out)
    }
}

impl ParamSet for TimestepEmbedding {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.head_a, "head_a", f);
        visit_child(&self.head_b, "head_b", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.head_a, "head_a", f);
        visit_child_mut(&mut self.head_b, "head_b", f);
    }
}

/// Motion-only stack: two causal temporal blocks, then an optional
/// bidirectional spatial block.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSsm {
    pub temporal_a: TemporalBlock,
    pub temporal_b: TemporalBlock,
    pub spatial: Option<SpatialBlock>,
}

impl MotionSsm {
    pub fn init(config: &DecoderConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let width = config.latent_width;
        let state = config.state_dim;
        Self {
            temporal_a: TemporalBlock::init(width, state, rng),
            temporal_b: TemporalBlock::init(width, state, rng),
            spatial: config
                .spatial_block
                .then(|| SpatialBlock::init(width, state, rng)),
        }
    }

    pub fn apply(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = self.temporal_a.apply(z)?;
        out = self.temporal_b.apply(&out)?;
        if let Some(spatial) = &self.spatial {
            out = spatial.apply(&out)?;
        }
        Ok(out)
    }
}

impl ParamSet for MotionSsm {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.temporal_a, "temporal_a", f);
        visit_child(&self.temporal_b, "temporal_b", f);
        if let Some(spatial) = &self.spatial {
            visit_child(spatial, "spatial", f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.temporal_a, "temporal_a", f);
        visit_child_mut(&mut self.temporal_b, "temporal_b", f);
        if let Some(spatial) = &mut self.spatial {
            visit_child_mut(spatial, "spatial", f);
        }
    }
}

/// Cross-modal fusion: a temporal scan over `[z, c_m, e_t]` whose motion
/// rows are sliced back out.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossModalSsm {
    pub in_proj: Affine,
    pub forward: TemporalScan,
    /// Present when the scan is bidirectional.
    pub backward: Option<TemporalScan>,
    pub out_proj: Affine,
}

impl CrossModalSsm {
    pub fn init(config: &DecoderConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let width = config.latent_width;
        let state = config.state_dim;
        Self {
            in_proj: Affine::init(width, width, rng),
            forward: TemporalScan::Selective(crate::ssm::SelectiveParams::init(
                width, state, rng,
            )),
            backward: config.cmm_bidirectional.then(|| {
                TemporalScan::Selective(crate::ssm::SelectiveParams::init(width, state, rng))
            }),
            out_proj: Affine::init(width, width, rng),
        }
    }

    /// Scan the concatenation and return only the motion rows, no residual.
    pub fn core(
        &self,
        z: &Array2<f64>,
        c_m: &Array2<f64>,
        e_t: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let width = z.ncols();
        ensure!(
            c_m.ncols() == width && e_t.ncols() == width,
            "cross-modal widths differ: motion {width}, condition {}, timestep {}",
            c_m.ncols(),
            e_t.ncols()
        );
        let len = z.nrows();
        let stacked = concatenate(Axis(0), &[z.view(), c_m.view(), e_t.view()])
            .expect("widths checked above");
        let lifted = self.in_proj.apply_rows(&stacked);
        let mut scanned = self.forward.apply(&lifted)?;
        if let Some(backward) = &self.backward {
            let mut reversed = lifted.clone();
            reversed.invert_axis(Axis(0));
            let mut back = backward.apply(&reversed)?;
            back.invert_axis(Axis(0));
            scanned += &back;
        }
        let projected = self.out_proj.apply_rows(&scanned);
        Ok(projected.slice(ndarray::s![..len, ..]).to_owned())
    }

    /// The full operation: sliced scan output plus the residual input.
    pub fn apply(
        &self,
        z: &Array2<f64>,
        c_m: &Array2<f64>,
        e_t: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(z + &self.core(z, c_m, e_t)?)
    }
}

impl ParamSet for CrossModalSsm {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.in_proj, "in_proj", f);
        visit_child(&self.forward, "forward", f);
        if let Some(backward) = &self.backward {
            visit_child(backward, "backward", f);
        }
        visit_child(&self.out_proj, "out_proj", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.in_proj, "in_proj", f);
        visit_child_mut(&mut self.forward, "forward", f);
        if let Some(backward) = &mut self.backward {
            visit_child_mut(backward, "backward", f);
        }
        visit_child_mut(&mut self.out_proj, "out_proj", f);
    }
}

/// One decoder block: modulated motion scan, modulated cross-modal scan,
/// modulated feed-forward, all residual.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub mod_motion: ModulationHead,
    pub mod_cross: ModulationHead,
    pub mod_ffn: ModulationHead,
    pub motion_ssm: MotionSsm,
    pub cross_modal: CrossModalSsm,
    pub ffn: Mlp,
    groups: usize,
}

impl DecoderBlock {
    pub fn init(config: &DecoderConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let width = config.latent_width;
        Self {
            mod_motion: ModulationHead::init(width, rng),
            mod_cross: ModulationHead::init(width, rng),
            mod_ffn: ModulationHead::init(width, rng),
            motion_ssm: MotionSsm::init(config, rng),
            cross_modal: CrossModalSsm::init(config, rng),
            ffn: Mlp::init(width, width * config.ffn_expansion, width, rng),
            groups: config.groups,
        }
    }

    pub fn apply(
        &self,
        z: &Array2<f64>,
        cond: &EncodedCondition,
        e_t: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let pooled = cond.pooled_with(e_t);

        let params = self.mod_motion.params_from(&pooled);
        let modulated = modulated_group_norm(z, &params, self.groups, GROUP_NORM_EPS)?;
        let z = z + &self.motion_ssm.apply(&modulated)?;

        let params = self.mod_cross.params_from(&pooled);
        let modulated = modulated_group_norm(&z, &params, self.groups, GROUP_NORM_EPS)?;
        let z = &z + &self.cross_modal.core(&modulated, &cond.tokens, e_t)?;

        let params = self.mod_ffn.params_from(&pooled);
        let modulated = modulated_group_norm(&z, &params, self.groups, GROUP_NORM_EPS)?;
        Ok(&z + &self.ffn.apply_rows(&modulated))
    }
}

impl ParamSet for DecoderBlock {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.mod_motion, "mod_motion", f);
        visit_child(&self.mod_cross, "mod_cross", f);
        visit_child(&self.mod_ffn, "mod_ffn", f);
        visit_child(&self.motion_ssm, "motion_ssm", f);
        visit_child(&self.cross_modal, "cross_modal", f);
        visit_child(&self.ffn, "ffn", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.mod_motion, "mod_motion", f);
        visit_child_mut(&mut self.mod_cross, "mod_cross", f);
        visit_child_mut(&mut self.mod_ffn, "mod_ffn", f);
        visit_child_mut(&mut self.motion_ssm, "motion_ssm", f);
        visit_child_mut(&mut self.cross_modal, "cross_modal", f);
        visit_child_mut(&mut self.ffn, "ffn", f);
    }
}

/// The full denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct DanceDecoder {
    pub config: DecoderConfig,
    pub condition: ConditionEncoder,
    pub timestep: TimestepEmbedding,
    pub input_mlp: Mlp,
    pub blocks: Vec<DecoderBlock>,
    pub output_mlp: Mlp,
}

impl DanceDecoder {
    /// Deterministic initialization from a 64-bit seed.
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let width = config.latent_width;
        let condition = ConditionEncoder::init(&config, &mut rng);
        let timestep = TimestepEmbedding::init(width, &mut rng);
        let input_mlp = Mlp::init(config.motion_dim, width, width, &mut rng);
        let blocks = (0..config.blocks)
            .map(|_| DecoderBlock::init(&config, &mut rng))
            .collect();
        let output_mlp = Mlp::init(width, width, config.motion_dim, &mut rng);
        Ok(Self {
            config,
            condition,
            timestep,
            input_mlp,
            blocks,
            output_mlp,
        })
    }

    /// Encode a music/beat window once so repeated denoiser calls can
    /// reuse it.
    pub fn encode_condition(&self, music: &Array2<f64>, beat: &[f64]) -> Result<EncodedCondition> {
        self.condition.encode(music, beat)
    }

    /// Denoise a window against a precomputed condition; returns the
    /// clean-signal prediction with the input's shape.
    pub fn forward_encoded(
        &self,
        noisy: &Array2<f64>,
        t: usize,
        cond: &EncodedCondition,
    ) -> Result<Array2<f64>> {
        ensure!(
            noisy.ncols() == self.config.motion_dim,
            "motion window has width {}, decoder expects {}",
            noisy.ncols(),
            self.config.motion_dim
        );
        let e_t = self.timestep.embed(t, self.config.train_steps)?;
        let mut z = self.input_mlp.apply_rows(noisy);
        for block in &self.blocks {
            z = block.apply(&z, cond, &e_t)?;
        }
        Ok(self.output_mlp.apply_rows(&z))
    }

    /// Denoise a window, encoding the condition in the same call.
    pub fn forward(
        &self,
        noisy: &Array2<f64>,
        t: usize,
        music: &Array2<f64>,
        beat: &[f64],
    ) -> Result<Array2<f64>> {
        let cond = self.encode_condition(music, beat)?;
        self.forward_encoded(noisy, t, &cond)
    }
}

impl ParamSet for DanceDecoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.condition, "condition", f);
        visit_child(&self.timestep, "timestep", f);
        visit_child(&self.input_mlp, "input_mlp", f);
        for (i, block) in self.blocks.iter().enumerate() {
            visit_child(block, &format!("block{i}"), f);
        }
        visit_child(&self.output_mlp, "output_mlp", f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.condition, "condition", f);
        visit_child_mut(&mut self.timestep, "timestep", f);
        visit_child_mut(&mut self.input_mlp, "input_mlp", f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            visit_child_mut(block, &format!("block{i}"), f);
        }
        visit_child_mut(&mut self.output_mlp, "output_mlp", f);
    }
}
