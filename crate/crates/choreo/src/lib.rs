//! Music-driven dance generation at desk scale.
//!
//! The engine turns a per-frame music feature matrix into a full-length
//! motion sequence in three broad moves:
//!
//! 1. [`beat`] derives a tempo-adaptive Gaussian beat prior from the binary
//!    beat channel of the features.
//! 2. [`decoder`] runs a stack of selective state-space blocks ([`ssm`])
//!    that denoise motion latents under music, beat, and timestep
//!    conditioning; [`diffusion`] wraps that network in a deterministic
//!    sampler with inpainting-style guidance.
//! 3. [`pipeline`] splits long tracks into segments and windows, generates
//!    key motions globally, pins window boundaries with hard cues, shapes
//!    early denoising with soft cues, and stitches the windows back
//!    together.
//!
//! [`kinematics`] supplies the motion codec and forward kinematics used by
//! the training losses in [`objectives`] and the evaluation suite in
//! [`metrics`]. File formats and run manifests live in [`io`].

pub mod beat;
pub mod decoder;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod ssm;
pub mod synth;

pub use error::{Error, Result};
