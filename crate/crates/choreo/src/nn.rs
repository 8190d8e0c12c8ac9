//! Small neural-net plumbing shared by the scan blocks and the decoder:
//! affine maps, activations, RMS normalization, and a visitor over raw
//! parameter storage used for deterministic init, flattening, and the
//! weights file.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Visitor over every parameter tensor of a component, in a fixed order.
///
/// The order is part of each component's contract: flattening, loading,
/// and the weights file all rely on it.
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, data| n += data.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, data| out.extend_from_slice(data));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> crate::Result<()> {
        if flat.len() != self.param_count() {
            return Err(crate::Error::validation(format!(
                "parameter vector has {} entries, component expects {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut cursor = 0;
        self.visit_mut(&mut |_, _, data| {
            data.copy_from_slice(&flat[cursor..cursor + data.len()]);
            cursor += data.len();
        });
        Ok(())
    }
}

/// `y = x W^T + b` applied to each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// Shape (out, in).
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (1.0 / in_dim as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-scale..scale));
        let b = Array1::zeros(out_dim);
        Self { w, b }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            w: Array2::eye(dim),
            b: Array1::zeros(dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn apply_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn apply_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }
}

impl ParamSet for Affine {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(
            "w",
            &[self.w.nrows(), self.w.ncols()],
            self.w.as_slice().expect("owned row-major array"),
        );
        f("b", &[self.b.len()], self.b.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = [self.w.nrows(), self.w.ncols()];
        f(
            "w",
            &shape,
            self.w.as_slice_mut().expect("owned row-major array"),
        );
        f(
            "b",
            &[self.b.len()],
            self.b.as_slice_mut().expect("contiguous"),
        );
    }
}

/// Per-row RMS normalization with a learned channel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsNorm {
    pub scale: Array1<f64>,
    pub eps: f64,
}

impl RmsNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            scale: Array1::ones(dim),
            eps: 1e-6,
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let dim = x.ncols() as f64;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / dim;
            let inv = 1.0 / (ms + self.eps).sqrt();
            for (v, s) in row.iter_mut().zip(self.scale.iter()) {
                *v *= inv * s;
            }
        }
        out
    }
}

impl ParamSet for RmsNorm {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(
            "scale",
            &[self.scale.len()],
            self.scale.as_slice().expect("contiguous"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = [self.scale.len()];
        f("scale", &shape, self.scale.as_slice_mut().expect("contiguous"));
    }
}

/// Forwards visitation through a named child component.
pub fn visit_child(
    parent: &dyn ParamSet,
    prefix: &str,
    f: &mut dyn FnMut(&str, &[usize], &[f64]),
) {
    parent.visit(&mut |name, shape, data| f(&format!("{prefix}.{name}"), shape, data));
}

pub fn visit_child_mut(
    parent: &mut dyn ParamSet,
    prefix: &str,
    f: &mut dyn FnMut(&str, &[usize], &mut [f64]),
) {
    parent.visit_mut(&mut |name, shape, data| f(&format!("{prefix}.{name}"), shape, data));
}
