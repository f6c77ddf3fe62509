//! Analogy regression head: predicts the embedding of D from A, B and C.

use crate::corpus::CharIndex;
use crate::embedder::Embedder;
use crate::numkit::{
    fully_connected, fully_connected_backward, relu, relu_backward, NumError, Parameter, Rng, Scalar, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Annr<T = f32> {
    pub embedding_dim: usize,
    pub ab_weight: Parameter<T>,
    pub ab_bias: Parameter<T>,
    pub ac_weight: Parameter<T>,
    pub ac_bias: Parameter<T>,
    pub out_weight: Parameter<T>,
    pub out_bias: Parameter<T>,
}

pub struct AnnrCache<T> {
    ab_in: Tensor<T>,
    ac_in: Tensor<T>,
    ab_pre: Tensor<T>,
    ac_pre: Tensor<T>,
    hidden: Tensor<T>,
}

impl<T: Scalar> Annr<T> {
    /// Both encoders map `2n -> n`; the combiner maps `2n -> n`.
    pub fn init(embedding_dim: usize, rng: &mut Rng) -> Self {
        let n = embedding_dim;
        let bound = (1.0 / (2 * n) as f64).sqrt();
        let uniform = crate::embedder::uniform::<T>;
        Annr {
            embedding_dim: n,
            ab_weight: Parameter::new(uniform(&[n, 2 * n], bound, rng)),
            ab_bias: Parameter::new(Tensor::zeros(&[n])),
            ac_weight: Parameter::new(uniform(&[n, 2 * n], bound, rng)),
            ac_bias: Parameter::new(Tensor::zeros(&[n])),
            out_weight: Parameter::new(uniform(&[n, 2 * n], bound, rng)),
            out_bias: Parameter::new(Tensor::zeros(&[n])),
        }
    }

    pub fn forward(&self, a: &Tensor<T>, b: &Tensor<T>, c: &Tensor<T>) -> Result<(Tensor<T>, AnnrCache<T>), NumError> {
        let ab_in = Tensor::concat(&[a, b]);
        let ac_in = Tensor::concat(&[a, c]);
        let ab_pre = fully_connected(&ab_in, &self.ab_weight.value, &self.ab_bias.value)?;
        let ac_pre = fully_connected(&ac_in, &self.ac_weight.value, &self.ac_bias.value)?;
        let hidden = Tensor::concat(&[&relu(&ab_pre), &relu(&ac_pre)]);
        let out = fully_connected(&hidden, &self.out_weight.value, &self.out_bias.value)?;
        Ok((
            out,
            AnnrCache {
                ab_in,
                ac_in,
                ab_pre,
                ac_pre,
                hidden,
            },
        ))
    }

    pub fn predict(&self, a: &Tensor<T>, b: &Tensor<T>, c: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        Ok(self.forward(a, b, c)?.0)
    }

    /// Accumulates parameter gradients and returns gradients for `[A, B, C]`.
    pub fn backward(&mut self, cache: &AnnrCache<T>, grad: &Tensor<T>) -> Result<[Tensor<T>; 3], NumError> {
        let n = self.embedding_dim;
        let out = fully_connected_backward(&cache.hidden, &self.out_weight.value, grad)?;
        self.out_weight.grad.add_assign(&out.weight)?;
        self.out_bias.grad.add_assign(&out.bias)?;
        let gh = out.input.data();
        let g_ab = relu_backward(&cache.ab_pre, &Tensor::from_vec(gh[..n].to_vec()));
        let g_ac = relu_backward(&cache.ac_pre, &Tensor::from_vec(gh[n..].to_vec()));
        let ab = fully_connected_backward(&cache.ab_in, &self.ab_weight.value, &g_ab)?;
        let ac = fully_connected_backward(&cache.ac_in, &self.ac_weight.value, &g_ac)?;
        self.ab_weight.grad.add_assign(&ab.weight)?;
        self.ab_bias.grad.add_assign(&ab.bias)?;
        self.ac_weight.grad.add_assign(&ac.weight)?;
        self.ac_bias.grad.add_assign(&ac.bias)?;
        let (gab, gac) = (ab.input.data(), ac.input.data());
        let ga: Vec<T> = (0..n).map(|i| gab[i] + gac[i]).collect();
        Ok([
            Tensor::from_vec(ga),
            Tensor::from_vec(gab[n..].to_vec()),
            Tensor::from_vec(gac[n..].to_vec()),
        ])
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![
            &mut self.ab_weight,
            &mut self.ab_bias,
            &mut self.ac_weight,
            &mut self.ac_bias,
            &mut self.out_weight,
            &mut self.out_bias,
        ]
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![
            &self.ab_weight,
            &self.ab_bias,
            &self.ac_weight,
            &self.ac_bias,
            &self.out_weight,
            &self.out_bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> Annr<U> {
        Annr {
            embedding_dim: self.embedding_dim,
            ab_weight: self.ab_weight.cast(),
            ab_bias: self.ab_bias.cast(),
            ac_weight: self.ac_weight.cast(),
            ac_bias: self.ac_bias.cast(),
            out_weight: self.out_weight.cast(),
            out_bias: self.out_bias.cast(),
        }
    }
}

/// Predicted embedding of D for `a : b :: c : ?`.
pub fn predict_d(
    embedder: &Embedder<f32>,
    head: &Annr<f32>,
    charset: &CharIndex,
    a: &str,
    b: &str,
    c: &str,
) -> Result<Tensor<f32>, NumError> {
    let ea = embedder.embed_word(a, charset)?;
    let eb = embedder.embed_word(b, charset)?;
    let ec = embedder.embed_word(c, charset)?;
    head.predict(&ea, &eb, &ec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::{assert_grad_close, numeric_gradient};
    use rand::Rng as _;

    #[test]
    fn output_size_and_zero_params() {
        let mut m: Annr<f32> = Annr::init(80, &mut Rng::new(0, "init"));
        let e = Tensor::from_vec(vec![0.5f32; 80]);
        assert_eq!(m.predict(&e, &e, &e).unwrap().len(), 80);
        for p in m.parameters_mut() {
            p.value.fill(0.0);
        }
        assert!(m.predict(&e, &e, &e).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 4;
        for seed in 0..10u64 {
            let mut rng = Rng::new(seed, "annr-grad");
            let mut m: Annr<f64> = Annr::init(n, &mut rng);
            for p in m.parameters_mut() {
                p.value = Tensor::from_fn(p.value.shape(), |_| rng.gen_range(-1.0..1.0));
            }
            let es: Vec<Tensor<f64>> = (0..3)
                .map(|_| Tensor::from_fn(&[n], |_| rng.gen_range(-1.0..1.0)))
                .collect();
            let proj: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |m: &Annr<f64>, es: &[Tensor<f64>]| -> f64 {
                let y = m.predict(&es[0], &es[1], &es[2]).unwrap();
                y.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = m.forward(&es[0], &es[1], &es[2]).unwrap();
            m.zero_grad();
            let g = m.backward(&cache, &Tensor::from_vec(proj.clone())).unwrap();
            for k in 0..3 {
                let num = numeric_gradient(es[k].data(), 1e-5, |v| {
                    let mut probe = es.clone();
                    probe[k] = Tensor::from_vec(v.to_vec());
                    f(&m, &probe)
                });
                assert_grad_close(g[k].data(), &num, 1e-4);
            }
            let analytic: Vec<f64> = m.parameters().iter().flat_map(|p| p.grad.data().to_vec()).collect();
            let flat: Vec<f64> = m.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect();
            let mut probe = m.clone();
            let num = numeric_gradient(&flat, 1e-5, |v| {
                let mut at = 0;
                for p in probe.parameters_mut() {
                    let len = p.value.len();
                    p.value.data_mut().copy_from_slice(&v[at..at + len]);
                    at += len;
                }
                f(&probe, &es)
            });
            assert_grad_close(&analytic, &num, 1e-4);
        }
    }
}
