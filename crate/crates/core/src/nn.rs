//! Small layer helpers shared by the models.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::params::ParamStore;
use crate::Scalar;

/// Per-forward state: whether dropout is active and where its masks come from.
pub struct ForwardCtx {
    pub training: bool,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Inverted dropout; identity outside training or at rate 0.
pub fn dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, rate: f64, ctx: &mut ForwardCtx) -> Var {
    if !ctx.training || rate <= 0.0 {
        return x;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = Array2::from_shape_simple_fn(tape.value(x).dim(), || {
        if ctx.rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    });
    tape.mask_mul(x, mask)
}

/// `x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, inp: usize, out: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inp, out, rng);
        let bias = Some(store.add_const(format!("{name}.bias"), 1, out, 0.0));
        Self { weight, bias }
    }

    pub fn no_bias<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, inp: usize, out: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inp, out, rng);
        Self { weight, bias: None }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Var {
        let y = tape.matmul(x, p[self.weight]);
        match self.bias {
            Some(b) => tape.add_row(y, p[b]),
            None => y,
        }
    }
}

/// Affine layer normalization over the feature axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub epsilon: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, width: usize, epsilon: f64) -> Self {
        Self {
            gamma: store.add_const(format!("{name}.gamma"), 1, width, 1.0),
            beta: store.add_const(format!("{name}.beta"), 1, width, 0.0),
            epsilon,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Var {
        let n = tape.normalize_rows(x, T::of(self.epsilon));
        let scaled = tape.mul_row(n, p[self.gamma]);
        tape.add_row(scaled, p[self.beta])
    }
}
