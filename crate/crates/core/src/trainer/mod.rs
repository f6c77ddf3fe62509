//! Training loops for the classifier and the regressor.
//!
//! Augmentation happens on word indices: each distinct word of a batch is
//! embedded once, the heads run on every augmented form, and the embedding
//! gradients are summed per word before the embedder backward pass. This is
//! exactly the per-form gradient, computed with fewer embedder passes.

mod checkpoint;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, Head, ModelCheckpoint, FORMAT_VERSION, MAGIC,
};

use crate::annc::{Annc, AnncConfig, CONV2_NOTE};
use crate::annr::Annr;
use crate::augment::{augment_with, dropped_invalid_count, InvalidSetting, Label, VALID_PERMUTATIONS};
use crate::corpus::{build_charset, cap_quadruples, quad_words, CharIndex, Quadruple};
use crate::embedder::{EmbedCache, Embedder, EmbedderConfig, INIT_SCHEME};
use crate::numkit::{
    bce_loss, bce_loss_backward, ratio_loss, ratio_loss_backward, Adam, NumError, Parameter, Rng, Scalar, Tensor,
};

pub const BATCH_REDUCTION: &str = "mean over the augmented examples of a batch";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub language: String,
    pub task: Task,
    pub epochs: usize,
    pub lr: f64,
    /// Augmented examples per optimizer step.
    pub batch_size: usize,
    pub embedder: EmbedderConfig,
    pub classifier: AnncConfig,
    pub invalid_setting: InvalidSetting,
    pub cap: usize,
    pub seed: u64,
    /// Regression only: epochs during which the embedder is not updated.
    pub freeze_epochs: usize,
}

impl TrainConfig {
    pub fn classification(language: &str, seed: u64) -> Self {
        TrainConfig {
            language: language.to_string(),
            task: Task::Classification,
            epochs: 20,
            lr: 1e-3,
            batch_size: 256,
            embedder: EmbedderConfig::default(),
            classifier: AnncConfig::default(),
            invalid_setting: InvalidSetting::Sampled,
            cap: 50_000,
            seed,
            freeze_epochs: 0,
        }
    }

    pub fn regression(language: &str, seed: u64) -> Self {
        TrainConfig {
            task: Task::Regression,
            lr: 1e-4,
            freeze_epochs: 10,
            ..Self::classification(language, seed)
        }
    }

    /// 512-dimensional character embeddings for Japanese, 64 otherwise.
    pub fn default_char_dim(language: &str) -> usize {
        match language.to_ascii_lowercase().as_str() {
            "japanese" | "jp" | "ja" | "jpn" => 512,
            _ => 64,
        }
    }

    fn validate(&self, task: Task) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.task != task {
            return bad(format!("config is for {}, not {task}", self.task));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.embedder.char_dim == 0 {
            return bad("character embedding size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite mean loss {last_loss:?})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        last_loss: Option<f64>,
    },
    #[error("initial checkpoint is a {found} model, expected {expected}")]
    TaskMismatch { expected: Task, found: Task },
    #[error("initial checkpoint was trained on {found:?}, not {expected:?}")]
    LanguageMismatch { expected: String, found: String },
    #[error("characters {missing:?} are not in the initial checkpoint's character set")]
    CharsetMismatch { missing: Vec<char> },
    #[error(transparent)]
    Numeric(#[from] NumError),
}

/// Per-epoch training summary passed to observers.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Training accuracy at threshold 0.5 (classification only).
    pub accuracy: Option<f64>,
    pub examples: usize,
    pub valid_examples: usize,
    pub invalid_examples: usize,
    pub embedder_frozen: bool,
}

/// One augmented training example, as indices into a word table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub words: [usize; 4],
    pub label: f32,
}

#[derive(Debug, Default)]
struct WordTable {
    ids: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl WordTable {
    fn intern(&mut self, word: &str, charset: &CharIndex) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        self.ids.push(charset.encode(word).0);
        self.index.insert(word.to_string(), self.ids.len() - 1);
        self.ids.len() - 1
    }
}

struct BatchEmbeddings<T> {
    distinct: Vec<usize>,
    values: Vec<Tensor<T>>,
    caches: Vec<EmbedCache<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> BatchEmbeddings<T> {
    fn new(embedder: &Embedder<T>, words: &[Vec<usize>], batch: &[Example]) -> Result<Self, NumError> {
        let mut distinct: Vec<usize> = batch.iter().flat_map(|e| e.words).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut values = Vec::with_capacity(distinct.len());
        let mut caches = Vec::with_capacity(distinct.len());
        for &w in &distinct {
            let (v, c) = embedder.forward(&words[w])?;
            values.push(v);
            caches.push(c);
        }
        let n = embedder.output_dim();
        let grads = distinct.iter().map(|_| Tensor::zeros(&[n])).collect();
        Ok(BatchEmbeddings {
            distinct,
            values,
            caches,
            grads,
        })
    }

    fn slots(&self, ex: &Example) -> [usize; 4] {
        ex.words
            .map(|w| self.distinct.binary_search(&w).expect("word embedded"))
    }

    fn backward(&self, embedder: &mut Embedder<T>) -> Result<(), NumError> {
        for (cache, grad) in self.caches.iter().zip(&self.grads) {
            embedder.backward(cache, grad)?;
        }
        Ok(())
    }
}

/// Mean BCE over `batch`; accumulates gradients of that mean into the head
/// and, when `train_embedder` is set, into the embedder. Returns
/// `(mean loss, correct predictions at 0.5)`.
pub fn accumulate_classifier_gradients<T: Scalar>(
    embedder: &mut Embedder<T>,
    head: &mut Annc<T>,
    words: &[Vec<usize>],
    batch: &[Example],
    train_embedder: bool,
) -> Result<(T, usize), NumError> {
    let mut emb = BatchEmbeddings::new(embedder, words, batch)?;
    let scale = T::one() / T::lit(batch.len() as f64);
    let mut loss = T::zero();
    let mut correct = 0;
    let half = T::lit(0.5);
    for ex in batch {
        let s = emb.slots(ex);
        let (score, cache) = head.forward(s.map(|i| &emb.values[i]))?;
        let label = T::lit(ex.label as f64);
        loss += bce_loss(label, score);
        if (score >= half) == (ex.label >= 0.5) {
            correct += 1;
        }
        let g = head.backward(&cache, bce_loss_backward(label, score) * scale)?;
        if train_embedder {
            for (k, gk) in g.iter().enumerate() {
                emb.grads[s[k]].add_assign(gk)?;
            }
        }
    }
    if train_embedder {
        emb.backward(embedder)?;
    }
    Ok((loss * scale, correct))
}

/// Mean ratio loss over `batch` (labels ignored); same gradient contract as
/// [`accumulate_classifier_gradients`].
pub fn accumulate_regressor_gradients<T: Scalar>(
    embedder: &mut Embedder<T>,
    head: &mut Annr<T>,
    words: &[Vec<usize>],
    batch: &[Example],
    train_embedder: bool,
) -> Result<T, NumError> {
    let mut emb = BatchEmbeddings::new(embedder, words, batch)?;
    let scale = T::one() / T::lit(batch.len() as f64);
    let mut loss = T::zero();
    for ex in batch {
        let s = emb.slots(ex);
        let [a, b, c, d] = s.map(|i| &emb.values[i]);
        let (pred, cache) = head.forward(a, b, c)?;
        loss += ratio_loss(a, b, c, d, &pred)?;
        let [ga, gb, gc, gd, gp] = ratio_loss_backward(a, b, c, d, &pred, scale)?;
        let [ha, hb, hc] = head.backward(&cache, &gp)?;
        if train_embedder {
            for (k, g) in [(0, ga), (1, gb), (2, gc), (3, gd), (0, ha), (1, hb), (2, hc)] {
                emb.grads[s[k]].add_assign(&g)?;
            }
        }
    }
    if train_embedder {
        emb.backward(embedder)?;
    }
    Ok(loss * scale)
}

fn reset_optimizer_state(params: Vec<&mut Parameter<f32>>) {
    for p in params {
        *p = Parameter::new(p.value.clone());
    }
}

fn base_meta(config: &TrainConfig, charset: &CharIndex) -> CheckpointMeta {
    CheckpointMeta {
        language: config.language.clone(),
        task: config.task,
        config: config.clone(),
        seed: config.seed,
        charset: charset.chars().to_vec(),
        embedder: config.embedder.clone(),
        classifier: None,
        init_scheme: INIT_SCHEME.to_string(),
        conv2_stride_note: CONV2_NOTE.to_string(),
        batch_reduction: BATCH_REDUCTION.to_string(),
        invalid_forms_dropped: 0,
        epochs_completed: config.epochs,
        init_from_seed: None,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn train_classifier(train: &[Quadruple], config: &TrainConfig) -> Result<ModelCheckpoint, TrainError> {
    train_classifier_with(train, config, |_, _| {})
}

/// [`train_classifier`] with an observer called after every epoch.
pub fn train_classifier_with(
    train: &[Quadruple],
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochStats, &Embedder<f32>),
) -> Result<ModelCheckpoint, TrainError> {
    config.validate(Task::Classification)?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let train = cap_quadruples(train.to_vec(), config.cap, config.seed);
    let charset = build_charset(quad_words(&train));
    let mut init = Rng::new(config.seed, "init");
    let mut embedder = Embedder::<f32>::init(charset.len(), config.embedder.clone(), &mut init);
    let mut head = Annc::<f32>::init(embedder.output_dim(), &config.classifier, &mut init);

    let mut table = WordTable::default();
    let mut sample = Rng::new(config.seed, "sample");
    let mut examples = Vec::new();
    let mut dropped = 0u64;
    for q in &train {
        dropped += dropped_invalid_count(q) as u64;
        for lq in augment_with(q, config.invalid_setting, &mut sample) {
            examples.push(Example {
                words: lq.quad.words().map(|w| table.intern(w, &charset)),
                label: lq.label.as_f32(),
            });
        }
    }
    let valid = examples.iter().filter(|e| e.label == Label::Valid.as_f32()).count();

    let adam = Adam::new(config.lr);
    let shuffle = Rng::new(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut last_loss = None;
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut shuffle.derive(epoch));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i]).collect();
            embedder.zero_grad();
            head.zero_grad();
            let (loss, ok) = accumulate_classifier_gradients(&mut embedder, &mut head, &table.ids, &batch, true)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    last_loss,
                });
            }
            loss_sum += loss as f64 * batch.len() as f64;
            correct += ok;
            adam.step_all(embedder.parameters_mut());
            adam.step_all(head.parameters_mut());
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / examples.len() as f64,
            accuracy: Some(correct as f64 / examples.len() as f64),
            examples: examples.len(),
            valid_examples: valid,
            invalid_examples: examples.len() - valid,
            embedder_frozen: false,
        };
        last_loss = Some(stats.mean_loss);
        observer(&stats, &embedder);
    }

    reset_optimizer_state(embedder.parameters_mut());
    reset_optimizer_state(head.parameters_mut());
    let mut meta = base_meta(config, &charset);
    meta.classifier = Some(config.classifier.clone());
    meta.invalid_forms_dropped = dropped;
    Ok(ModelCheckpoint {
        meta,
        embedder,
        head: Head::Classifier(head),
    })
}

pub fn train_regressor(
    train: &[Quadruple],
    config: &TrainConfig,
    init_from: &ModelCheckpoint,
) -> Result<ModelCheckpoint, TrainError> {
    train_regressor_with(train, config, init_from, |_, _| {})
}

/// [`train_regressor`] with an observer called after every epoch.
pub fn train_regressor_with(
    train: &[Quadruple],
    config: &TrainConfig,
    init_from: &ModelCheckpoint,
    mut observer: impl FnMut(&EpochStats, &Embedder<f32>),
) -> Result<ModelCheckpoint, TrainError> {
    config.validate(Task::Regression)?;
    if init_from.task() != Task::Classification {
        return Err(TrainError::TaskMismatch {
            expected: Task::Classification,
            found: init_from.task(),
        });
    }
    if !config.language.is_empty()
        && !init_from.meta.language.is_empty()
        && !config.language.eq_ignore_ascii_case(&init_from.meta.language)
    {
        return Err(TrainError::LanguageMismatch {
            expected: config.language.clone(),
            found: init_from.meta.language.clone(),
        });
    }
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let train = cap_quadruples(train.to_vec(), config.cap, config.seed);
    let charset = init_from.charset();
    let mut missing: Vec<char> = quad_words(&train)
        .flat_map(str::chars)
        .filter(|&c| !charset.contains(c))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(TrainError::CharsetMismatch { missing });
    }

    let mut embedder = init_from.embedder.clone();
    reset_optimizer_state(embedder.parameters_mut());
    let mut head = Annr::<f32>::init(embedder.output_dim(), &mut Rng::new(config.seed, "init"));

    let mut table = WordTable::default();
    let mut examples = Vec::with_capacity(train.len() * 8);
    for q in &train {
        let ids = q.words().map(|w| table.intern(w, &charset));
        for p in VALID_PERMUTATIONS {
            examples.push(Example {
                words: p.map(|k| ids[k]),
                label: 1.0,
            });
        }
    }

    let adam = Adam::new(config.lr);
    let shuffle = Rng::new(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut last_loss = None;
    for epoch in 1..=config.epochs {
        let frozen = epoch <= config.freeze_epochs;
        order.sort_unstable();
        order.shuffle(&mut shuffle.derive(epoch));
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i]).collect();
            embedder.zero_grad();
            head.zero_grad();
            let loss = accumulate_regressor_gradients(&mut embedder, &mut head, &table.ids, &batch, !frozen)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    last_loss,
                });
            }
            loss_sum += loss as f64 * batch.len() as f64;
            if !frozen {
                adam.step_all(embedder.parameters_mut());
            }
            adam.step_all(head.parameters_mut());
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / examples.len() as f64,
            accuracy: None,
            examples: examples.len(),
            valid_examples: examples.len(),
            invalid_examples: 0,
            embedder_frozen: frozen,
        };
        last_loss = Some(stats.mean_loss);
        observer(&stats, &embedder);
    }

    reset_optimizer_state(embedder.parameters_mut());
    reset_optimizer_state(head.parameters_mut());
    let mut cfg = config.clone();
    cfg.embedder = init_from.meta.embedder.clone();
    if cfg.language.is_empty() {
        cfg.language = init_from.meta.language.clone();
    }
    let mut meta = base_meta(&cfg, &charset);
    meta.init_from_seed = Some(init_from.meta.seed);
    Ok(ModelCheckpoint {
        meta,
        embedder,
        head: Head::Regressor(head),
    })
}

/// Mean ratio loss of a regression checkpoint over the 8 valid forms of
/// every quadruple.
pub fn mean_ratio_loss(ckpt: &ModelCheckpoint, quads: &[Quadruple]) -> Result<f64, NumError> {
    let head = ckpt.regressor().ok_or_else(|| NumError::Argument {
        op: "mean_ratio_loss",
        detail: "not a regression checkpoint".into(),
    })?;
    let charset = ckpt.charset();
    let mut total = 0.0;
    let mut count = 0usize;
    for q in quads {
        let e: Vec<Tensor<f32>> = q
            .words()
            .iter()
            .map(|w| ckpt.embedder.embed_word(w, &charset))
            .collect::<Result<_, _>>()?;
        for p in VALID_PERMUTATIONS {
            let [a, b, c, d] = p.map(|k| &e[k]);
            let pred = head.predict(a, b, c)?;
            total += ratio_loss(a, b, c, d, &pred)? as f64;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}
