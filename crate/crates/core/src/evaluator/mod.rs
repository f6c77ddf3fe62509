//! Accuracy for both tasks, nearest-neighbour retrieval, dropout
//! perturbation studies, t-tests and report output.

pub mod report;
pub mod stats;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use report::{emit_report, mean_std, read_report, ExperimentReport, ExperimentRow, ReportError, Summary};
pub use stats::{independent, one_sample, paired, t_test, StatsError, TTest, TTestKind};

use crate::augment::{augment_for_evaluation, valid_forms, Label};
use crate::corpus::{CharIndex, Quadruple, Vocabulary};
use crate::embedder::Embedder;
use crate::numkit::{dropout, NumError, Rng, Tensor};
use crate::trainer::{ModelCheckpoint, Task};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("checkpoint is a {found} model, expected {expected}")]
    TaskMismatch { expected: Task, found: Task },
    #[error("retrieval vocabulary is empty")]
    EmptyVocabulary,
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
}

fn expect_task(ckpt: &ModelCheckpoint, expected: Task) -> Result<(), EvalError> {
    if ckpt.task() == expected {
        Ok(())
    } else {
        Err(EvalError::TaskMismatch {
            expected,
            found: ckpt.task(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub correct: usize,
    pub total: usize,
}

impl LabelCounts {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

/// Classification accuracy per label, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassReport {
    pub valid_accuracy: f64,
    pub invalid_accuracy: f64,
    pub valid: LabelCounts,
    pub invalid: LabelCounts,
}

impl ClassReport {
    fn from_counts(valid: LabelCounts, invalid: LabelCounts) -> Self {
        ClassReport {
            valid_accuracy: valid.percent(),
            invalid_accuracy: invalid.percent(),
            valid,
            invalid,
        }
    }
}

/// Word embeddings computed once per distinct word.
struct EmbeddingCache<'a> {
    embedder: &'a Embedder<f32>,
    charset: CharIndex,
    table: HashMap<String, Tensor<f32>>,
}

impl<'a> EmbeddingCache<'a> {
    fn new(ckpt: &'a ModelCheckpoint) -> Self {
        EmbeddingCache {
            embedder: &ckpt.embedder,
            charset: ckpt.charset(),
            table: HashMap::new(),
        }
    }

    fn get(&mut self, word: &str) -> Result<&Tensor<f32>, NumError> {
        if !self.table.contains_key(word) {
            let e = self.embedder.embed_word(word, &self.charset)?;
            self.table.insert(word.to_string(), e);
        }
        Ok(&self.table[word])
    }
}

fn check_probability(p: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(EvalError::Argument(format!("dropout probability {p} outside [0, 1]")))
    }
}

pub fn eval_classifier(ckpt: &ModelCheckpoint, test: &[Quadruple]) -> Result<ClassReport, EvalError> {
    eval_classifier_perturbed(ckpt, test, 0.0, &mut Rng::new(0, "unused"))
}

/// Classification accuracy with dropout of probability `p` applied to all
/// four embeddings of every scored form.
pub fn eval_classifier_perturbed(
    ckpt: &ModelCheckpoint,
    test: &[Quadruple],
    p: f64,
    rng: &mut Rng,
) -> Result<ClassReport, EvalError> {
    expect_task(ckpt, Task::Classification)?;
    check_probability(p)?;
    let head = ckpt.classifier().expect("classification checkpoint");
    let mut cache = EmbeddingCache::new(ckpt);
    let (mut valid, mut invalid) = (LabelCounts::default(), LabelCounts::default());
    for base in test {
        for lq in augment_for_evaluation(base) {
            let mut e = Vec::with_capacity(4);
            for w in lq.quad.words() {
                e.push(dropout(cache.get(w)?, p, rng)?);
            }
            let score = head.score([&e[0], &e[1], &e[2], &e[3]])? as f64;
            let said_valid = score >= crate::annc::DEFAULT_THRESHOLD;
            let counts = match lq.label {
                Label::Valid => &mut valid,
                Label::Invalid => &mut invalid,
            };
            counts.total += 1;
            counts.correct += usize::from(said_valid == (lq.label == Label::Valid));
        }
    }
    Ok(ClassReport::from_counts(valid, invalid))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric {other:?} (expected euclidean or cosine)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl Metric {
    /// Euclidean distance, or `1 - cos` (a zero vector has cosine 0).
    pub fn distance(self, x: &[f32], y: &[f32]) -> f64 {
        match self {
            Metric::Euclidean => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
                for (&a, &b) in x.iter().zip(y) {
                    let (a, b) = (a as f64, b as f64);
                    dot += a * b;
                    nx += a * a;
                    ny += b * b;
                }
                if nx == 0.0 || ny == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (nx.sqrt() * ny.sqrt())
                }
            }
        }
    }
}

/// Embedded vocabulary in lexicographic order, searched by linear scan.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    words: Vec<String>,
    embeddings: Vec<Tensor<f32>>,
    metric: Metric,
}

impl RetrievalIndex {
    pub fn build(
        embedder: &Embedder<f32>,
        charset: &CharIndex,
        vocab: &Vocabulary,
        metric: Metric,
    ) -> Result<Self, EvalError> {
        if vocab.is_empty() {
            return Err(EvalError::EmptyVocabulary);
        }
        let mut words = vocab.words().to_vec();
        words.sort();
        words.dedup();
        let embeddings = words
            .iter()
            .map(|w| embedder.embed_word(w, charset))
            .collect::<Result<_, _>>()?;
        Ok(RetrievalIndex {
            words,
            embeddings,
            metric,
        })
    }

    pub fn for_checkpoint(ckpt: &ModelCheckpoint, vocab: &Vocabulary, metric: Metric) -> Result<Self, EvalError> {
        Self::build(&ckpt.embedder, &ckpt.charset(), vocab, metric)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Closest word; on exact ties the lexicographically smallest.
    pub fn nearest(&self, query: &Tensor<f32>) -> &str {
        let mut best = (f64::INFINITY, 0);
        for (i, e) in self.embeddings.iter().enumerate() {
            let d = self.metric.distance(query.data(), e.data());
            if d < best.0 {
                best = (d, i);
            }
        }
        &self.words[best.1]
    }
}

impl RetrievalIndex {
    /// The `k` closest words, nearest first, ties lexicographic.
    pub fn nearest_k(&self, query: &Tensor<f32>, k: usize) -> Vec<&str> {
        let mut scored: Vec<(f64, usize)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (self.metric.distance(query.data(), e.data()), i))
            .collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        scored
            .into_iter()
            .take(k)
            .map(|(_, i)| self.words[i].as_str())
            .collect()
    }
}

pub fn solve_by_retrieval(
    ckpt: &ModelCheckpoint,
    a: &str,
    b: &str,
    c: &str,
    vocab: &Vocabulary,
    metric: Metric,
) -> Result<String, EvalError> {
    expect_task(ckpt, Task::Regression)?;
    let index = RetrievalIndex::for_checkpoint(ckpt, vocab, metric)?;
    let head = ckpt.regressor().expect("regression checkpoint");
    let pred = crate::annr::predict_d(&ckpt.embedder, head, &ckpt.charset(), a, b, c)?;
    Ok(index.nearest(&pred).to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegReport {
    pub accuracy: f64,
    pub counts: LabelCounts,
}

/// Retrieval accuracy in percent over the 8 valid forms of every base.
pub fn eval_regressor(
    ckpt: &ModelCheckpoint,
    test: &[Quadruple],
    vocab: &Vocabulary,
    metric: Metric,
) -> Result<f64, EvalError> {
    let index = RetrievalIndex::for_checkpoint(ckpt, vocab, metric)?;
    Ok(eval_regressor_with_index(ckpt, test, &index, 0.0, &mut Rng::new(0, "unused"))?.accuracy)
}

/// Retrieval accuracy with dropout of probability `p` on the A, B and C
/// embeddings. The index itself is never perturbed.
pub fn eval_regressor_with_index(
    ckpt: &ModelCheckpoint,
    test: &[Quadruple],
    index: &RetrievalIndex,
    p: f64,
    rng: &mut Rng,
) -> Result<RegReport, EvalError> {
    expect_task(ckpt, Task::Regression)?;
    check_probability(p)?;
    let head = ckpt.regressor().expect("regression checkpoint");
    let mut cache = EmbeddingCache::new(ckpt);
    let mut counts = LabelCounts::default();
    for base in test {
        for q in valid_forms(base) {
            let a = dropout(cache.get(&q.a)?, p, rng)?;
            let b = dropout(cache.get(&q.b)?, p, rng)?;
            let c = dropout(cache.get(&q.c)?, p, rng)?;
            let pred = head.predict(&a, &b, &c)?;
            counts.total += 1;
            counts.correct += usize::from(index.nearest(&pred) == q.d);
        }
    }
    Ok(RegReport {
        accuracy: counts.percent(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub probs: Vec<f64>,
    pub repeats: usize,
    pub metric: Metric,
}

impl PerturbationConfig {
    pub fn classification() -> Self {
        PerturbationConfig {
            probs: vec![0.0, 0.01, 0.05, 0.1, 0.3],
            repeats: 10,
            metric: Metric::Euclidean,
        }
    }

    pub fn regression() -> Self {
        PerturbationConfig {
            probs: vec![0.0, 0.005, 0.01, 0.05, 0.1, 0.3, 0.5],
            ..Self::classification()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPoint {
    pub p_d: f64,
    /// `valid` and `invalid` for classification, `retrieval` for regression.
    pub metric: String,
    /// One accuracy per (checkpoint, repeat), checkpoint-major.
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub language: String,
    pub task: Task,
    pub points: Vec<PerturbationPoint>,
}

impl PerturbationReport {
    pub fn point(&self, p_d: f64, metric: &str) -> Option<&PerturbationPoint> {
        self.points.iter().find(|x| x.p_d == p_d && x.metric == metric)
    }

    pub fn to_experiment(&self) -> ExperimentReport {
        let mut out = ExperimentReport::default();
        for pt in &self.points {
            for (r, v) in pt.values.iter().enumerate() {
                out.push(&self.language, pt.p_d, r, &pt.metric, *v);
            }
        }
        out
    }
}

/// Accuracy under dropout for each probability, repeated `repeats` times
/// per checkpoint. Repeat `r` of checkpoint `k` at probability index `j`
/// draws from `rng.derive("{k}/{j}/{r}")`.
pub fn perturbation_study(
    ckpts: &[&ModelCheckpoint],
    test: &[Quadruple],
    vocab: Option<&Vocabulary>,
    config: &PerturbationConfig,
    rng: &Rng,
) -> Result<PerturbationReport, EvalError> {
    let Some(first) = ckpts.first() else {
        return Err(EvalError::Argument("no checkpoints given".into()));
    };
    if config.repeats == 0 {
        return Err(EvalError::Argument("repeats must be at least 1".into()));
    }
    for p in &config.probs {
        check_probability(*p)?;
    }
    let task = first.task();
    for c in ckpts {
        expect_task(c, task)?;
    }
    let metrics: &[&str] = match task {
        Task::Classification => &["valid", "invalid"],
        Task::Regression => &["retrieval"],
    };
    let mut values = vec![vec![Vec::new(); metrics.len()]; config.probs.len()];
    for (k, ckpt) in ckpts.iter().enumerate() {
        let index = match task {
            Task::Regression => {
                let vocab = vocab.ok_or_else(|| EvalError::Argument("regression study needs a vocabulary".into()))?;
                Some(RetrievalIndex::for_checkpoint(ckpt, vocab, config.metric)?)
            }
            Task::Classification => None,
        };
        for (j, &p) in config.probs.iter().enumerate() {
            for r in 0..config.repeats {
                let mut stream = rng.derive(format!("{k}/{j}/{r}"));
                match &index {
                    None => {
                        let rep = eval_classifier_perturbed(ckpt, test, p, &mut stream)?;
                        values[j][0].push(rep.valid_accuracy);
                        values[j][1].push(rep.invalid_accuracy);
                    }
                    Some(index) => {
                        let rep = eval_regressor_with_index(ckpt, test, index, p, &mut stream)?;
                        values[j][0].push(rep.accuracy);
                    }
                }
            }
        }
    }
    let mut points = Vec::new();
    for (j, &p_d) in config.probs.iter().enumerate() {
        for (m, name) in metrics.iter().enumerate() {
            let vals = std::mem::take(&mut values[j][m]);
            let (mean, std) = mean_std(&vals);
            points.push(PerturbationPoint {
                p_d,
                metric: name.to_string(),
                values: vals,
                mean,
                std,
            });
        }
    }
    Ok(PerturbationReport {
        language: first.meta.language.clone(),
        task,
        points,
    })
}
