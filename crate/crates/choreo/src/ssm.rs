//! Discretized state-space scans and the blocks built from them.
//!
//! The linear time-invariant core is the recurrence
//!
//! ```text
//! h_t = A h_{t-1} + B x_t        y_t = C' h_t
//! ```
//!
//! with diagonal `A`, which is equivalent to a causal convolution with the
//! kernel `(C'B, C'AB, C'A^2B, ...)`. The selective variant lets the step
//! size and the input/output matrices vary per timestep as functions of the
//! input, which is what the decoder blocks use.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{silu, softplus, visit_child, visit_child_mut, Affine, ParamSet, RmsNorm};
use crate::{ensure, Error, Result};

/// Branch-free `e^x` for the scan inner loops: range reduction to
/// `2^k exp(r)` with a degree-11 polynomial, accurate to ~1e-13 relative
/// over the clamped domain. The scans spend most of their time in decay
/// factors, and the libm call neither inlines nor vectorizes.
#[inline(always)]
fn exp_fast(x: f64) -> f64 {
    const LOG2_E: f64 = std::f64::consts::LOG2_E;
    // Cody-Waite split of ln(2): the high part has trailing zero bits so
    // k * LN_2_HI stays exact for |k| < 2^10.
    const LN_2_HI: f64 = 6.931_471_803_691_238_16e-1;
    const LN_2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Adding 1.5 * 2^52 rounds to the nearest integer in the mantissa
    // without an SSE4.1 round instruction or a libm call.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let x = x.clamp(-708.0, 708.0);
    let kf = (x * LOG2_E + SHIFT) - SHIFT;
    let r = (x - kf * LN_2_HI) - kf * LN_2_LO;
    // exp(r) for |r| <= ln(2)/2, Taylor to r^11 (tail < 1e-14).
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0
                    + r * (1.0 / 24.0
                        + r * (1.0 / 120.0
                            + r * (1.0 / 720.0
                                + r * (1.0 / 5_040.0
                                    + r * (1.0 / 40_320.0
                                        + r * (1.0 / 362_880.0
                                            + r * (1.0 / 3_628_800.0
                                                + r * (1.0 / 39_916_800.0)))))))))));
    // 2^k through the exponent bits; k stays in [-1022, 1023] after the
    // clamp above.
    let bits = ((kf as i64 + 1023) as u64) << 52;
    p * f64::from_bits(bits)
}

/// A discrete single-input single-output state-space system with diagonal
/// state matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    /// Diagonal of the discrete state matrix.
    pub a_diag: Vec<f64>,
    /// Discrete input matrix (one column).
    pub b_in: Vec<f64>,
    /// Output matrix (one column).
    pub c_out: Vec<f64>,
    /// Step size that produced the discrete system.
    pub delta: f64,
}

impl SsmParams {
    pub fn new(a_diag: Vec<f64>, b_in: Vec<f64>, c_out: Vec<f64>, delta: f64) -> Result<Self> {
        ensure!(!a_diag.is_empty(), "state dimension must be at least 1");
        ensure!(
            a_diag.len() == b_in.len() && b_in.len() == c_out.len(),
            "a_diag, b_in, c_out must share the state dimension"
        );
        ensure!(delta > 0.0, "step size must be positive, got {delta}");
        let finite = a_diag
            .iter()
            .chain(&b_in)
            .chain(&c_out)
            .all(|v| v.is_finite());
        ensure!(finite, "state-space parameters contain non-finite entries");
        Ok(Self {
            a_diag,
            b_in,
            c_out,
            delta,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_diag.len()
    }
}

/// Zero-order-hold discretization of a diagonal continuous system.
///
/// `a_diag = exp(delta a)`, `b_in = (exp(delta a) - 1) / a * b`, with the
/// `a -> 0` limit `b_in = delta b` used when `|delta a| < 1e-6`.
pub fn discretize_zoh(a_cont: &[f64], b_cont: f64, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure!(
        a_cont.iter().all(|v| v.is_finite()) && b_cont.is_finite() && delta.is_finite(),
        "discretization inputs must be finite"
    );
    ensure!(delta > 0.0, "step size must be positive, got {delta}");
    let mut a_diag = Vec::with_capacity(a_cont.len());
    let mut b_in = Vec::with_capacity(a_cont.len());
    for &a in a_cont {
        let da = delta * a;
        let ad = da.exp();
        let bd = if da.abs() < 1e-6 {
            delta * b_cont
        } else {
            (ad - 1.0) / a * b_cont
        };
        a_diag.push(ad);
        b_in.push(bd);
    }
    Ok((a_diag, b_in))
}

/// Runs the recurrence from a zero initial state.
pub fn ssm_scan(params: &SsmParams, x: &[f64]) -> Vec<f64> {
    let n = params.state_dim();
    let mut h = vec![0.0; n];
    let mut y = Vec::with_capacity(x.len());
    for &xt in x {
        let mut acc = 0.0;
        for i in 0..n {
            h[i] = params.a_diag[i] * h[i] + params.b_in[i] * xt;
            acc += params.c_out[i] * h[i];
        }
        y.push(acc);
    }
    y
}

/// The structured convolution kernel of the same system.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmKernel {
    pub taps: Vec<f64>,
}

/// `taps[j] = C' A^j B` for `j = 0..len`.
pub fn ssm_kernel(params: &SsmParams, len: usize) -> Result<SsmKernel> {
    ensure!(len >= 1, "kernel length must be at least 1");
    let n = params.state_dim();
    let mut power = params.b_in.clone();
    let mut taps = Vec::with_capacity(len);
    for _ in 0..len {
        let tap = (0..n).map(|i| params.c_out[i] * power[i]).sum();
        taps.push(tap);
        for i in 0..n {
            power[i] *= params.a_diag[i];
        }
    }
    Ok(SsmKernel { taps })
}

/// Causal convolution `y_t = sum_{j<=t} taps[j] x_{t-j}`.
pub fn ssm_conv(x: &[f64], kernel: &SsmKernel) -> Result<Vec<f64>> {
    ensure!(
        x.len() == kernel.taps.len(),
        "kernel length {} does not match input length {}",
        kernel.taps.len(),
        x.len()
    );
    let y = (0..x.len())
        .map(|t| (0..=t).map(|j| kernel.taps[j] * x[t - j]).sum())
        .collect();
    Ok(y)
}

/// Input-dependent scan parameters.
///
/// Each input frame is projected to a per-channel step size (through a
/// softplus, so it stays positive) and to shared input/output matrices;
/// the continuous diagonal state is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveParams {
    /// Continuous diagonal state, shape (width, state_dim).
    pub a_cont: Array2<f64>,
    /// width -> width, softplus-activated step sizes.
    pub delta_proj: Affine,
    /// width -> state_dim.
    pub b_proj: Affine,
    /// width -> state_dim.
    pub c_proj: Affine,
}

impl SelectiveParams {
    pub fn init(width: usize, state_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Diagonal states -(n+1), the usual real initialization for
        // diagonal SSMs, so every state decays at its own rate.
        let a_cont = Array2::from_shape_fn((width, state_dim), |(_, n)| -((n + 1) as f64));
        let mut delta_proj = Affine::init(width, width, rng);
        // Bias the step sizes into [1e-3, 0.1] at init (inverse softplus).
        for b in delta_proj.b.iter_mut() {
            let dt = 10f64.powf(rng.random_range(-3.0..-1.0));
            *b = (dt.exp() - 1.0).ln();
        }
        let b_proj = Affine::init(state_dim, width, rng);
        let c_proj = Affine::init(state_dim, width, rng);
        Self {
            a_cont,
            delta_proj,
            b_proj,
            c_proj,
        }
    }

    /// Frozen projections that reproduce a fixed LTI system on every
    /// channel: the scan then matches [`ssm_scan`] with `params`.
    pub fn frozen_lti(width: usize, params: &SsmParams) -> Result<Self> {
        let n = params.state_dim();
        let delta = params.delta;
        ensure!(delta > 0.0, "step size must be positive");
        // softplus(bias) = delta; continuous state recovers a_diag.
        let bias = (delta.exp_m1()).ln();
        let mut delta_proj = Affine::zeros(width, width);
        delta_proj.b.fill(bias);
        let mut a_cont = Array2::zeros((width, n));
        for e in 0..width {
            for i in 0..n {
                ensure!(
                    params.a_diag[i] > 0.0,
                    "frozen selective form needs a_diag > 0 (got {})",
                    params.a_diag[i]
                );
                a_cont[[e, i]] = params.a_diag[i].ln() / delta;
            }
        }
        let mut b_proj = Affine::zeros(n, width);
        for i in 0..n {
            b_proj.b[i] = params.b_in[i] / delta;
        }
        let mut c_proj = Affine::zeros(n, width);
        for i in 0..n {
            c_proj.b[i] = params.c_out[i];
        }
        Ok(Self {
            a_cont,
            delta_proj,
            b_proj,
            c_proj,
        })
    }

    pub fn width(&self) -> usize {
        self.a_cont.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.a_cont.ncols()
    }
}

impl ParamSet for SelectiveParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(
            "a_cont",
            &[self.a_cont.nrows(), self.a_cont.ncols()],
            self.a_cont.as_slice().expect("owned"),
        );
        visit_child(&self.delta_proj, "delta_proj", f);
        visit_child(&self.b_proj, "b_proj", f);
        visit_child(&self.c_proj, "c_proj", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = [self.a_cont.nrows(), self.a_cont.ncols()];
        f("a_cont", &shape, self.a_cont.as_slice_mut().expect("owned"));
        visit_child_mut(&mut self.delta_proj, "delta_proj", f);
        visit_child_mut(&mut self.b_proj, "b_proj", f);
        visit_child_mut(&mut self.c_proj, "c_proj", f);
    }
}

/// Selective scan over a (length, width) latent sequence.
///
/// Per channel `e` and step `t`, with `d = delta[t][e]`:
///
/// ```text
/// h = exp(d a[e]) . h + (d x[t][e]) B_t        y[t][e] = C_t . h
/// ```
pub fn selective_scan(params: &SelectiveParams, x: &Array2<f64>) -> Result<Array2<f64>> {
    let (len, width) = x.dim();
    ensure!(len >= 1, "selective scan needs at least one frame");
    ensure!(
        width == params.width(),
        "input width {width} does not match scan width {}",
        params.width()
    );
    let n = params.state_dim();

    let mut delta = params.delta_proj.apply_rows(x);
    delta.mapv_inplace(softplus);
    let b_steps = params.b_proj.apply_rows(x);
    let c_steps = params.c_proj.apply_rows(x);
    for v in delta.iter().chain(b_steps.iter()).chain(c_steps.iter()) {
        if !v.is_finite() {
            return Err(Error::numeric(
                "selective projections produced non-finite activations",
            ));
        }
    }

    // `dot` may hand back column-major storage for thin shapes.
    let x_std = x.as_standard_layout();
    let delta_std = delta.as_standard_layout();
    let b_std = b_steps.as_standard_layout();
    let c_std = c_steps.as_standard_layout();
    let a_std = params.a_cont.as_standard_layout();
    let xs = x_std.as_slice().expect("standard layout");
    let ds = delta_std.as_slice().expect("standard layout");
    let bs = b_std.as_slice().expect("standard layout");
    let cs = c_std.as_slice().expect("standard layout");
    let a = a_std.as_slice().expect("standard layout");

    let mut h = vec![0.0; width * n];
    let mut y = Array2::zeros((len, width));
    let ys = y.as_slice_mut().expect("owned");
    for t in 0..len {
        let bt = &bs[t * n..(t + 1) * n];
        let ct = &cs[t * n..(t + 1) * n];
        for e in 0..width {
            let d = ds[t * width + e];
            let dx = d * xs[t * width + e];
            let ae = &a[e * n..(e + 1) * n];
            let he = &mut h[e * n..(e + 1) * n];
            let mut acc = 0.0;
            for i in 0..n {
                let hv = exp_fast(d * ae[i]) * he[i] + dx * bt[i];
                he[i] = hv;
                acc += ct[i] * hv;
            }
            ys[t * width + e] = acc;
        }
    }
    Ok(y)
}

/// Selective scan over a scalar sequence with width-1 parameters, writing
/// into a caller buffer. The spatial block runs this once per frame and
/// direction; going through [`selective_scan`] would allocate several
/// arrays per call.
fn selective_scan_scalar(
    params: &SelectiveParams,
    input: &[f64],
    h: &mut [f64],
    out: &mut [f64],
) {
    let n = params.state_dim();
    let w_d = params.delta_proj.w[[0, 0]];
    let b_d = params.delta_proj.b[0];
    let a = params.a_cont.as_slice().expect("owned");
    let wb = params.b_proj.w.as_slice().expect("owned");
    let wc = params.c_proj.w.as_slice().expect("owned");
    let bb = params.b_proj.b.as_slice().expect("contiguous");
    let bc = params.c_proj.b.as_slice().expect("contiguous");

    h.fill(0.0);
    for (step, &x) in input.iter().enumerate() {
        let d = softplus(w_d * x + b_d);
        let dx = d * x;
        let mut acc = 0.0;
        for i in 0..n {
            let hv = exp_fast(d * a[i]) * h[i] + dx * (wb[i] * x + bb[i]);
            h[i] = hv;
            acc += (wc[i] * x + bc[i]) * hv;
        }
        out[step] = acc;
    }
}

/// The temporal scan flavor a block runs: the full selective form for real
/// models, or a fixed LTI system applied to every channel (handy when a
/// test wants an exactly-known scan).
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalScan {
    Selective(SelectiveParams),
    Lti(SsmParams),
}

impl TemporalScan {
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            TemporalScan::Selective(params) => selective_scan(params, x),
            TemporalScan::Lti(params) => {
                let mut y = Array2::zeros(x.dim());
                for (e, column) in x.axis_iter(Axis(1)).enumerate() {
                    let seq: Vec<f64> = column.to_vec();
                    let out = ssm_scan(params, &seq);
                    for (t, v) in out.into_iter().enumerate() {
                        y[[t, e]] = v;
                    }
                }
                Ok(y)
            }
        }
    }
}

impl ParamSet for TemporalScan {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        match self {
            TemporalScan::Selective(p) => p.visit(f),
            TemporalScan::Lti(_) => {}
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        match self {
            TemporalScan::Selective(p) => p.visit_mut(f),
            TemporalScan::Lti(_) => {}
        }
    }
}

/// Causal block over the length axis:
/// `x + out_proj(scan(u) * silu(g))` with `(u, g) = split(in_proj(norm(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBlock {
    pub norm: RmsNorm,
    /// width -> 2 * width; first half feeds the scan, second half the gate.
    pub in_proj: Affine,
    pub scan: SelectiveParams,
    pub out_proj: Affine,
}

impl TemporalBlock {
    pub fn init(width: usize, state_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm: RmsNorm::new(width),
            in_proj: Affine::init(2 * width, width, rng),
            scan: SelectiveParams::init(width, state_dim, rng),
            out_proj: Affine::init(width, width, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.scan.width()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let width = self.width();
        ensure!(
            x.ncols() == width,
            "temporal block width {} got input width {}",
            width,
            x.ncols()
        );
        let normed = self.norm.apply(x);
        let lifted = self.in_proj.apply_rows(&normed);
        let u = lifted.slice(ndarray::s![.., ..width]).to_owned();
        let gate = lifted.slice(ndarray::s![.., width..]).to_owned();
        let scanned = selective_scan(&self.scan, &u)?;
        let gated = ndarray::Zip::from(&scanned)
            .and(&gate)
            .map_collect(|&s, &g| s * silu(g));
        Ok(x + &self.out_proj.apply_rows(&gated))
    }
}

impl ParamSet for TemporalBlock {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.norm, "norm", f);
        visit_child(&self.in_proj, "in_proj", f);
        visit_child(&self.scan, "scan", f);
        visit_child(&self.out_proj, "out_proj", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.norm, "norm", f);
        visit_child_mut(&mut self.in_proj, "in_proj", f);
        visit_child_mut(&mut self.scan, "scan", f);
        visit_child_mut(&mut self.out_proj, "out_proj", f);
    }
}

/// Bidirectional block over the channel axis:
/// `x + out_proj(fwd(x') + bwd(x'))'` where `x'` treats each frame's
/// channel vector as a scalar sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBlock {
    /// Scalar-input scan run along ascending channel order.
    pub fwd: SelectiveParams,
    /// Scalar-input scan run along descending channel order.
    pub bwd: SelectiveParams,
    /// width -> width mix after the two scans.
    pub out_proj: Affine,
    width: usize,
}

impl SpatialBlock {
    pub fn init(width: usize, state_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fwd: SelectiveParams::init(1, state_dim, rng),
            bwd: SelectiveParams::init(1, state_dim, rng),
            out_proj: Affine::init(width, width, rng),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (len, width) = x.dim();
        ensure!(
            width == self.width,
            "spatial block width {} got input width {width}",
            self.width
        );
        let n = self.fwd.state_dim().max(self.bwd.state_dim());
        let mut state = vec![0.0; n];
        let mut channel = vec![0.0; width];
        let mut fwd_out = vec![0.0; width];
        let mut bwd_out = vec![0.0; width];
        let mut summed = Array2::zeros((len, width));
        for i in 0..len {
            for (e, slot) in channel.iter_mut().enumerate() {
                *slot = x[[i, e]];
            }
            selective_scan_scalar(&self.fwd, &channel, &mut state, &mut fwd_out);
            channel.reverse();
            selective_scan_scalar(&self.bwd, &channel, &mut state, &mut bwd_out);
            channel.reverse();
            bwd_out.reverse();
            for e in 0..width {
                summed[[i, e]] = fwd_out[e] + bwd_out[e];
            }
        }
        Ok(x + &self.out_proj.apply_rows(&summed))
    }
}

impl ParamSet for SpatialBlock {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_child(&self.fwd, "fwd", f);
        visit_child(&self.bwd, "bwd", f);
        visit_child(&self.out_proj, "out_proj", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_child_mut(&mut self.fwd, "fwd", f);
        visit_child_mut(&mut self.bwd, "bwd", f);
        visit_child_mut(&mut self.out_proj, "out_proj", f);
    }
}

/// Reference scan for tests: recomputes every projection per step with
/// plain loops, no shared state with [`selective_scan`].
#[cfg(test)]
pub(crate) fn selective_scan_naive(params: &SelectiveParams, x: &Array2<f64>) -> Array2<f64> {
    let (len, width) = x.dim();
    let n = params.state_dim();
    let mut h = vec![vec![0.0; n]; width];
    let mut y = Array2::zeros((len, width));
    for t in 0..len {
        let xt: Vec<f64> = x.row(t).to_vec();
        let mut delta = vec![0.0; width];
        for e in 0..width {
            let mut acc = params.delta_proj.b[e];
            for j in 0..width {
                acc += params.delta_proj.w[[e, j]] * xt[j];
            }
            delta[e] = softplus(acc);
        }
        let project = |aff: &Affine| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut acc = aff.b[i];
                    for j in 0..width {
                        acc += aff.w[[i, j]] * xt[j];
                    }
                    acc
                })
                .collect()
        };
        let bt = project(&params.b_proj);
        let ct = project(&params.c_proj);
        for e in 0..width {
            let mut out = 0.0;
            for i in 0..n {
                h[e][i] =
                    (delta[e] * params.a_cont[[e, i]]).exp() * h[e][i] + delta[e] * bt[i] * xt[e];
                out += ct[i] * h[e][i];
            }
            y[[t, e]] = out;
        }
    }
    y
}
