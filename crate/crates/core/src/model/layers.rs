use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var, SELU_ALPHA, SELU_LAMBDA};
use crate::error::{AplError, Result};

/// Standard deviation of the weight initialiser.
pub const INIT_STD: f64 = 0.02;

pub(crate) fn normal_tensor(shape: &[usize], rng: &mut dyn RngCore) -> Tensor {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
    t
}

/// Affine map `x·W + b`, `W` stored `in×out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.register(format!("{name}.weight"), normal_tensor(&[d_in, d_out], rng))?,
            bias: store.register(format!("{name}.bias"), Tensor::zeros(&[d_out]))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        tape.linear(x, bound.var(self.weight), bound.var(self.bias))
    }
}

/// Query/key/value projections of one attention block.
#[derive(Debug, Clone, Copy)]
pub struct AttentionProj {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl AttentionProj {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(AttentionProj {
            q: Linear::register(store, &format!("{name}.q"), d_model, d_model, rng)?,
            k: Linear::register(store, &format!("{name}.k"), d_model, d_model, rng)?,
            v: Linear::register(store, &format!("{name}.v"), d_model, d_model, rng)?,
        })
    }
}

/// Single-head scaled dot-product attention of `queries` over `tokens`.
/// Returns the attended values and the row-stochastic attention matrix.
fn attend(
    tape: &mut Tape,
    bound: &Bound,
    proj: &AttentionProj,
    queries: Var,
    tokens: Var,
) -> Result<(Var, Var)> {
    let d = tape.shape(queries)[1];
    let q = proj.q.forward(tape, bound, queries)?;
    let k = proj.k.forward(tape, bound, tokens)?;
    let v = proj.v.forward(tape, bound, tokens)?;
    let scores = tape.matmul_nt(q, k)?;
    let scores = tape.mul_scalar(scores, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(scores);
    let out = tape.matmul(attn, v)?;
    Ok((out, attn))
}

/// Prototypes from learnable queries: `softmax(F_q(Q)·F_k(X)ᵀ/√C)·F_v(X)`.
pub fn cross_attention_prototypes(
    tape: &mut Tape,
    bound: &Bound,
    proj: &AttentionProj,
    queries: Var,
    tokens: Var,
) -> Result<(Var, Var)> {
    if tape.value(tokens).dims2().is_none_or(|(n, _)| n == 0) {
        return Err(AplError::EmptyInput {
            op: "cross_attention_prototypes",
        });
    }
    attend(tape, bound, proj, queries, tokens)
}

/// Joint self-attention over every row of `m`, with no modality masking.
pub fn mixed_self_attention(
    tape: &mut Tape,
    bound: &Bound,
    proj: &AttentionProj,
    m: Var,
) -> Result<(Var, Var)> {
    attend(tape, bound, proj, m, m)
}

/// Affine constants `(a, b)` that keep zero mean and unit variance through
/// alpha-dropout of SELU activations at drop rate `p`.
pub fn alpha_dropout_affine(p: f64) -> (f64, f64) {
    let alpha_prime = -SELU_LAMBDA * SELU_ALPHA;
    let a = ((1.0 - p) * (1.0 + p * alpha_prime * alpha_prime)).powf(-0.5);
    let b = -a * alpha_prime * p;
    (a, b)
}

/// Dropped units are set to SELU's negative saturation value, then the
/// whole tensor is rescaled by [`alpha_dropout_affine`].
pub fn alpha_dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut dyn RngCore) -> Result<Var> {
    if p == 0.0 {
        return Ok(x);
    }
    let alpha_prime = -SELU_LAMBDA * SELU_ALPHA;
    let (a, b) = alpha_dropout_affine(p);
    let shape = tape.shape(x).to_vec();
    let n = tape.value(x).len();
    let mut keep = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for _ in 0..n {
        let kept = !rng.random_bool(p);
        keep.push(if kept { a } else { 0.0 });
        shift.push(if kept { b } else { a * alpha_prime + b });
    }
    let keep = tape.constant(Tensor::new(shape.clone(), keep)?);
    let shift = tape.constant(Tensor::new(shape, shift)?);
    let scaled = tape.mul(x, keep)?;
    tape.add(scaled, shift)
}

/// Per-pathway encoder: linear → SELU → alpha-dropout → linear.
#[derive(Debug, Clone, Copy)]
pub struct SnnEncoder {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SnnEncoder {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(SnnEncoder {
            fc1: Linear::register(store, &format!("{name}.fc1"), d_in, hidden, rng)?,
            fc2: Linear::register(store, &format!("{name}.fc2"), hidden, d_out, rng)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        dropout: Option<(f64, &mut dyn RngCore)>,
    ) -> Result<Var> {
        let h = self.fc1.forward(tape, bound, x)?;
        let mut h = tape.selu(h);
        if let Some((p, rng)) = dropout {
            h = alpha_dropout(tape, h, p, rng)?;
        }
        self.fc2.forward(tape, bound, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn alpha_dropout_keeps_standardised_moments() {
        // Inputs drawn from N(0,1): over many trials the output should keep
        // mean 0 and variance 1, matching what eval mode (identity) gives.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
        let in_mean = x.iter().sum::<f64>() / 64.0;
        let in_var = x.iter().map(|v| (v - in_mean).powi(2)).sum::<f64>() / 64.0;
        let x: Vec<f64> = x.iter().map(|v| (v - in_mean) / in_var.sqrt()).collect();

        let trials = 10_000;
        let mut outputs = Vec::with_capacity(trials * 64);
        for _ in 0..trials {
            let mut t = Tape::new();
            let v = t.constant(Tensor::vector(x.clone()).unwrap());
            let y = alpha_dropout(&mut t, v, 0.25, &mut rng).unwrap();
            outputs.extend_from_slice(t.value(y).data());
        }
        let n = outputs.len() as f64;
        let mean = outputs.iter().sum::<f64>() / n;
        let var = outputs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let se = (var / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn alpha_dropout_conditional_mean_is_a_times_keep() {
        // For a fixed input the expectation is a·(1−p)·x, not x.
        let (a, _) = alpha_dropout_affine(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = [1.5, -0.3];
        let trials = 20_000;
        let mut sums = [0.0; 2];
        for _ in 0..trials {
            let mut t = Tape::new();
            let v = t.constant(Tensor::vector(x.to_vec()).unwrap());
            let y = alpha_dropout(&mut t, v, 0.25, &mut rng).unwrap();
            sums[0] += t.value(y).data()[0];
            sums[1] += t.value(y).data()[1];
        }
        for k in 0..2 {
            let mean = sums[k] / trials as f64;
            assert!((mean - a * 0.75 * x[k]).abs() < 0.02, "{mean}");
        }
    }
}
