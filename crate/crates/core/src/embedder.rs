//! Character-level CNN word embedder.
//!
//! A word is wrapped in begin/end markers, right-padded with the all-zero
//! PAD row to `max(len + 2, 6)` positions, and embedded character by
//! character. Banks of filters of widths 2 to 6 span the full character
//! embedding and slide along the word; each filter contributes its maximum
//! response as one component of the word vector.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::CharIndex;
use crate::numkit::{
    conv2d, conv2d_backward, max_over_positions, max_over_positions_backward, MaxPool, NumError, Parameter, Rng,
    Scalar, Tensor,
};

/// Minimum padded length, so the widest default filter has one position.
pub const MIN_PADDED_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub char_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
}

impl EmbedderConfig {
    pub fn with_char_dim(char_dim: usize) -> Self {
        EmbedderConfig {
            char_dim,
            filter_widths: vec![2, 3, 4, 5, 6],
            filters_per_width: 16,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.filter_widths.len() * self.filters_per_width
    }

    fn padded_len(&self, word_len: usize) -> usize {
        let widest = self.filter_widths.iter().copied().max().unwrap_or(1);
        (word_len + 2).max(MIN_PADDED_LEN).max(widest)
    }
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::with_char_dim(64)
    }
}

/// One bank of equally wide filters, stored as `[filters, 1, width, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T = f32> {
    pub width: usize,
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedder<T = f32> {
    pub config: EmbedderConfig,
    /// `[charset size, m]`; the PAD row stays zero.
    pub chars: Parameter<T>,
    pub banks: Vec<FilterBank<T>>,
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache<T> {
    ids: Vec<usize>,
    input: Tensor<T>,
    pools: Vec<MaxPool<T>>,
}

/// `[BOW] + ids + [EOW]` right-padded with PAD.
pub fn padded_ids(config: &EmbedderConfig, ids: &[usize]) -> Vec<usize> {
    let len = config.padded_len(ids.len());
    let mut seq = Vec::with_capacity(len);
    seq.push(CharIndex::BOW);
    seq.extend_from_slice(ids);
    seq.push(CharIndex::EOW);
    seq.resize(len, CharIndex::PAD);
    seq
}

/// Uniform weights in `±sqrt(1 / fan_in)`, zero biases, character rows in
/// `±0.05` and a zero PAD row.
pub const INIT_SCHEME: &str =
    "weights U(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases 0; char rows U(-0.05, 0.05); PAD row 0";

pub fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)))
}

impl<T: Scalar> Embedder<T> {
    pub fn init(charset_size: usize, config: EmbedderConfig, rng: &mut Rng) -> Self {
        assert!(config.char_dim > 0, "character embedding size must be positive");
        let m = config.char_dim;
        let mut chars = uniform::<T>(&[charset_size, m], 0.05, rng);
        chars.data_mut()[CharIndex::PAD * m..(CharIndex::PAD + 1) * m].fill(T::zero());
        let banks = config
            .filter_widths
            .iter()
            .map(|&w| {
                let bound = (1.0 / (w * m) as f64).sqrt();
                FilterBank {
                    width: w,
                    weight: Parameter::new(uniform(&[config.filters_per_width, 1, w, m], bound, rng)),
                    bias: Parameter::new(Tensor::zeros(&[config.filters_per_width])),
                }
            })
            .collect();
        Embedder {
            config,
            chars: Parameter::new(chars),
            banks,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn forward(&self, ids: &[usize]) -> Result<(Tensor<T>, EmbedCache<T>), NumError> {
        let m = self.config.char_dim;
        let seq = padded_ids(&self.config, ids);
        let table = self.chars.value.data();
        let mut input = Vec::with_capacity(seq.len() * m);
        for &id in &seq {
            input.extend_from_slice(&table[id * m..(id + 1) * m]);
        }
        let input = Tensor::new(vec![1, seq.len(), m], input)?;
        let mut out = Vec::with_capacity(self.output_dim());
        let mut pools = Vec::with_capacity(self.banks.len());
        for bank in &self.banks {
            let fmap = conv2d(&input, &bank.weight.value, &bank.bias.value, (1, 1))?;
            let pool = max_over_positions(&fmap)?;
            out.extend_from_slice(pool.values.data());
            pools.push(pool);
        }
        let out = Tensor::from_vec(out);
        out.ensure_finite("embed")?;
        Ok((out, EmbedCache { ids: seq, input, pools }))
    }

    /// Accumulates parameter gradients for `grad` (d loss / d embedding).
    /// The PAD row never receives gradient.
    pub fn backward(&mut self, cache: &EmbedCache<T>, grad: &Tensor<T>) -> Result<(), NumError> {
        let m = self.config.char_dim;
        let per = self.config.filters_per_width;
        let mut g_input = Tensor::zeros(cache.input.shape());
        for (k, (bank, pool)) in self.banks.iter_mut().zip(&cache.pools).enumerate() {
            let g = Tensor::from_vec(grad.data()[k * per..(k + 1) * per].to_vec());
            let g_map = max_over_positions_backward(pool, &g)?;
            let grads = conv2d_backward(&cache.input, &bank.weight.value, (1, 1), &g_map)?;
            bank.weight.grad.add_assign(&grads.filters)?;
            bank.bias.grad.add_assign(&grads.bias)?;
            g_input.add_assign(&grads.input)?;
        }
        let table = self.chars.grad.data_mut();
        for (pos, &id) in cache.ids.iter().enumerate() {
            if id == CharIndex::PAD {
                continue;
            }
            let row = &mut table[id * m..(id + 1) * m];
            for (r, &g) in row.iter_mut().zip(&g_input.data()[pos * m..(pos + 1) * m]) {
                *r += g;
            }
        }
        Ok(())
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Result<Tensor<T>, NumError> {
        Ok(self.forward(ids)?.0)
    }

    /// Embeds `word`; characters missing from `charset` map to UNK.
    pub fn embed_word(&self, word: &str, charset: &CharIndex) -> Result<Tensor<T>, NumError> {
        self.embed_ids(&charset.encode(word).0)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = vec![&mut self.chars];
        for b in &mut self.banks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        out
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = vec![&self.chars];
        for b in &self.banks {
            out.push(&b.weight);
            out.push(&b.bias);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> Embedder<U> {
        Embedder {
            config: self.config.clone(),
            chars: self.chars.cast(),
            banks: self
                .banks
                .iter()
                .map(|b| FilterBank {
                    width: b.width,
                    weight: b.weight.cast(),
                    bias: b.bias.cast(),
                })
                .collect(),
        }
    }
}

/// Initializes an embedder for `charset` with character size `char_dim`.
pub fn init_embedder(charset: &CharIndex, char_dim: usize, rng: &mut Rng) -> Embedder<f32> {
    Embedder::init(charset.len(), EmbedderConfig::with_char_dim(char_dim), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_charset;
    use crate::numkit::gradcheck::{assert_grad_close, numeric_gradient};

    fn small_config() -> EmbedderConfig {
        EmbedderConfig {
            char_dim: 3,
            filter_widths: vec![2, 3],
            filters_per_width: 2,
        }
    }

    #[test]
    fn default_dimensions() {
        let cs = CharIndex::from_chars("abcdefghijklmnopqrstuvwxyz".chars());
        assert_eq!(cs.len(), 30);
        let e = init_embedder(&cs, 64, &mut Rng::new(0, "init"));
        assert_eq!(e.chars.shape(), &[30, 64]);
        assert_eq!(e.banks.iter().map(|b| b.weight.shape()[0]).sum::<usize>(), 80);
        assert_eq!(e.embed_word("word", &cs).unwrap().len(), 80);
        assert_eq!(e.embed_word("a", &cs).unwrap().len(), 80);
        assert_eq!(e.embed_word("unterschiedlichkeit", &cs).unwrap().len(), 80);

        let big = init_embedder(&cs, 512, &mut Rng::new(0, "init"));
        assert_eq!(big.chars.shape(), &[30, 512]);
    }

    #[test]
    fn init_is_seeded() {
        let cs = build_charset(["abc"]);
        let a = init_embedder(&cs, 8, &mut Rng::new(5, "init"));
        let b = init_embedder(&cs, 8, &mut Rng::new(5, "init"));
        assert_eq!(a, b);
        let c = init_embedder(&cs, 8, &mut Rng::new(6, "init"));
        assert_ne!(a, c);
        assert!(a.chars.value.data()[..8].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_rule() {
        let cfg = EmbedderConfig::default();
        assert_eq!(padded_ids(&cfg, &[7]), vec![1, 7, 2, 0, 0, 0]);
        assert_eq!(padded_ids(&cfg, &[7; 5]).len(), 7);
    }

    #[test]
    fn deterministic_and_unknown_chars() {
        let cs = build_charset(["abc"]);
        let e = init_embedder(&cs, 8, &mut Rng::new(1, "init"));
        assert_eq!(e.embed_word("cab", &cs).unwrap(), e.embed_word("cab", &cs).unwrap());
        // 'z' and 'y' are both unseen and share the UNK row
        assert_eq!(e.embed_word("az", &cs).unwrap(), e.embed_word("ay", &cs).unwrap());
    }

    #[test]
    fn single_char_matches_loop_oracle() {
        let cs = build_charset(["xyz"]);
        let e: Embedder<f64> = Embedder::init(cs.len(), EmbedderConfig::with_char_dim(5), &mut Rng::new(3, "init"));
        let got = e.embed_word("y", &cs).unwrap();
        let m = 5;
        let seq = [CharIndex::BOW, cs.id('y'), CharIndex::EOW, 0, 0, 0];
        let table = e.chars.value.data();
        let mut expected = Vec::new();
        for bank in &e.banks {
            let w = bank.width;
            for f in 0..16 {
                let mut best = f64::NEG_INFINITY;
                for start in 0..=(seq.len() - w) {
                    let mut s = bank.bias.value.data()[f];
                    for k in 0..w {
                        for j in 0..m {
                            s += bank.weight.value.data()[(f * w + k) * m + j] * table[seq[start + k] * m + j];
                        }
                    }
                    best = best.max(s);
                }
                expected.push(best);
            }
        }
        for (a, b) in got.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn flatten(e: &Embedder<f64>) -> Vec<f64> {
        e.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect()
    }

    fn unflatten(e: &mut Embedder<f64>, flat: &[f64]) {
        let mut at = 0;
        for p in e.parameters_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cs = build_charset(["abcd"]);
        for seed in 0..10u64 {
            let mut rng = Rng::new(seed, "embed-grad");
            let mut e: Embedder<f64> = Embedder::init(cs.len(), small_config(), &mut rng);
            // spread character rows so max-pool ties are unlikely
            for v in e.chars.value.data_mut()[3..].iter_mut() {
                *v *= 20.0;
            }
            let pad = CharIndex::PAD * 3;
            e.chars.value.data_mut()[pad..pad + 3].fill(0.0);
            let proj: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let word = ["ab", "dcba", "c", "abcda"][seed as usize % 4];
            let ids = cs.encode(word).0;

            let (_, cache) = e.forward(&ids).unwrap();
            e.zero_grad();
            e.backward(&cache, &Tensor::from_vec(proj.clone())).unwrap();
            let analytic: Vec<f64> = e.parameters().iter().flat_map(|p| p.grad.data().to_vec()).collect();

            let x0 = flatten(&e);
            let mut probe = e.clone();
            let numeric = numeric_gradient(&x0, 1e-6, |v| {
                unflatten(&mut probe, v);
                let y = probe.embed_ids(&ids).unwrap();
                y.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
            });
            // the PAD row is excluded from updates; its numeric gradient may be nonzero
            let mut analytic_cmp = analytic.clone();
            let mut numeric_cmp = numeric.clone();
            for k in pad..pad + 3 {
                assert_eq!(analytic[k], 0.0);
                analytic_cmp[k] = 0.0;
                numeric_cmp[k] = 0.0;
            }
            assert_grad_close(&analytic_cmp, &numeric_cmp, 1e-4);
        }
    }
}
