//! Analogy classifier head.
//!
//! The four embeddings are stacked into a `4 × n` map. The first convolution
//! pairs rows (A, B) and (C, D) per embedding component; the second compares
//! the two resulting rows over 2 × 2 windows; a dense layer and a sigmoid
//! produce the validity score.

use serde::{Deserialize, Serialize};

use crate::corpus::{CharIndex, Quadruple};
use crate::embedder::Embedder;
use crate::numkit::{
    conv2d, conv2d_backward, fully_connected, fully_connected_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    NumError, Parameter, Rng, Scalar, Tensor,
};

pub const CONV1_STRIDE: (usize, usize) = (2, 1);
pub const CONV2_STRIDE: (usize, usize) = (2, 2);

/// Recorded in checkpoint metadata.
pub const CONV2_NOTE: &str = "conv1 2x1 filters stride (2,1); conv2 2x2 filters stride (2,2), no padding";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnncConfig {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
}

impl Default for AnncConfig {
    fn default() -> Self {
        AnncConfig {
            conv1_filters: 128,
            conv2_filters: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annc<T = f32> {
    pub embedding_dim: usize,
    pub conv1_weight: Parameter<T>,
    pub conv1_bias: Parameter<T>,
    pub conv2_weight: Parameter<T>,
    pub conv2_bias: Parameter<T>,
    pub dense_weight: Parameter<T>,
    pub dense_bias: Parameter<T>,
}

pub struct AnncCache<T> {
    input: Tensor<T>,
    pre1: Tensor<T>,
    act1: Tensor<T>,
    pre2: Tensor<T>,
    flat: Tensor<T>,
    score: T,
}

impl<T: Scalar> Annc<T> {
    pub fn init(embedding_dim: usize, config: &AnncConfig, rng: &mut Rng) -> Self {
        assert!(
            embedding_dim >= 2 && embedding_dim.is_multiple_of(2),
            "classifier needs an even embedding size"
        );
        let (c1, c2) = (config.conv1_filters, config.conv2_filters);
        let dense_in = c2 * embedding_dim / 2;
        let uniform = crate::embedder::uniform::<T>;
        Annc {
            embedding_dim,
            conv1_weight: Parameter::new(uniform(&[c1, 1, 2, 1], (1.0f64 / 2.0).sqrt(), rng)),
            conv1_bias: Parameter::new(Tensor::zeros(&[c1])),
            conv2_weight: Parameter::new(uniform(&[c2, c1, 2, 2], (1.0 / (4 * c1) as f64).sqrt(), rng)),
            conv2_bias: Parameter::new(Tensor::zeros(&[c2])),
            dense_weight: Parameter::new(uniform(&[1, dense_in], (1.0 / dense_in as f64).sqrt(), rng)),
            dense_bias: Parameter::new(Tensor::zeros(&[1])),
        }
    }

    pub fn config(&self) -> AnncConfig {
        AnncConfig {
            conv1_filters: self.conv1_weight.shape()[0],
            conv2_filters: self.conv2_weight.shape()[0],
        }
    }

    pub fn forward(&self, emb: [&Tensor<T>; 4]) -> Result<(T, AnncCache<T>), NumError> {
        let n = self.embedding_dim;
        for e in emb {
            if e.len() != n {
                return Err(NumError::Shape {
                    op: "annc",
                    detail: format!("embedding of length {} for n = {n}", e.len()),
                });
            }
        }
        let stacked = Tensor::concat(&emb).reshape(&[1, 4, n])?;
        let pre1 = conv2d(&stacked, &self.conv1_weight.value, &self.conv1_bias.value, CONV1_STRIDE)?;
        let act1 = relu(&pre1);
        let pre2 = conv2d(&act1, &self.conv2_weight.value, &self.conv2_bias.value, CONV2_STRIDE)?;
        let flat = relu(&pre2).reshape(&[pre2.len()])?;
        let logit = fully_connected(&flat, &self.dense_weight.value, &self.dense_bias.value)?;
        let score = sigmoid(logit.data()[0]);
        Ok((
            score,
            AnncCache {
                input: stacked,
                pre1,
                act1,
                pre2,
                flat,
                score,
            },
        ))
    }

    pub fn score(&self, emb: [&Tensor<T>; 4]) -> Result<T, NumError> {
        Ok(self.forward(emb)?.0)
    }

    /// Accumulates parameter gradients for `grad` (d loss / d score) and
    /// returns the gradients of the four input embeddings.
    pub fn backward(&mut self, cache: &AnncCache<T>, grad: T) -> Result<[Tensor<T>; 4], NumError> {
        let n = self.embedding_dim;
        let g_logit = Tensor::from_vec(vec![sigmoid_backward(cache.score, grad)]);
        let dense = fully_connected_backward(&cache.flat, &self.dense_weight.value, &g_logit)?;
        self.dense_weight.grad.add_assign(&dense.weight)?;
        self.dense_bias.grad.add_assign(&dense.bias)?;
        let g_pre2 = relu_backward(&cache.pre2, &dense.input.reshape(cache.pre2.shape())?);
        let c2 = conv2d_backward(&cache.act1, &self.conv2_weight.value, CONV2_STRIDE, &g_pre2)?;
        self.conv2_weight.grad.add_assign(&c2.filters)?;
        self.conv2_bias.grad.add_assign(&c2.bias)?;
        let g_pre1 = relu_backward(&cache.pre1, &c2.input);
        let c1 = conv2d_backward(&cache.input, &self.conv1_weight.value, CONV1_STRIDE, &g_pre1)?;
        self.conv1_weight.grad.add_assign(&c1.filters)?;
        self.conv1_bias.grad.add_assign(&c1.bias)?;
        let g = c1.input.data();
        Ok(std::array::from_fn(|k| {
            Tensor::from_vec(g[k * n..(k + 1) * n].to_vec())
        }))
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![
            &mut self.conv1_weight,
            &mut self.conv1_bias,
            &mut self.conv2_weight,
            &mut self.conv2_bias,
            &mut self.dense_weight,
            &mut self.dense_bias,
        ]
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![
            &self.conv1_weight,
            &self.conv1_bias,
            &self.conv2_weight,
            &self.conv2_bias,
            &self.dense_weight,
            &self.dense_bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> Annc<U> {
        Annc {
            embedding_dim: self.embedding_dim,
            conv1_weight: self.conv1_weight.cast(),
            conv1_bias: self.conv1_bias.cast(),
            conv2_weight: self.conv2_weight.cast(),
            conv2_bias: self.conv2_bias.cast(),
            dense_weight: self.dense_weight.cast(),
            dense_bias: self.dense_bias.cast(),
        }
    }
}

/// Validity score of `quad` in (0, 1).
pub fn classify(
    embedder: &Embedder<f32>,
    head: &Annc<f32>,
    charset: &CharIndex,
    quad: &Quadruple,
) -> Result<f32, NumError> {
    let e = quad.words().map(|w| embedder.embed_word(w, charset));
    let [a, b, c, d] = e;
    let (a, b, c, d) = (a?, b?, c?, d?);
    head.score([&a, &b, &c, &d])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Valid,
    Invalid,
}

/// `Valid` iff `score >= threshold`.
pub fn decide(score: f64, threshold: f64) -> Decision {
    if score >= threshold {
        Decision::Valid
    } else {
        Decision::Invalid
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;
