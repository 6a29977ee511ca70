//! Adversarial filtering with an ensemble of linear classifiers.
//!
//! Each outer iteration trains `N` multinomial logistic-regression models on
//! random size-`O` subsets of the training pool, collects their predictions
//! on the held-out remainder and on dev, and removes the samples predicted
//! correctly most often (predictability above `τ`), at most `k₁` train and
//! `k₂` dev samples per iteration. The loop ends when the training pool has
//! shrunk to `O` or fewer than `k₁` training samples qualify.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::HashedFeaturizer;
use crate::error::{Error, Result};
use crate::seed::{Rng, SeedPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedSample {
    pub id: String,
    pub features: Vec<f64>,
    /// Gold option index.
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            batch_size: 32,
        }
    }
}

/// Softmax-regression weights, row-major `n_classes × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    n_classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(n_classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != n_classes * dim {
            return Err(Error::Shape {
                expected: n_classes * dim,
                found: weights.len(),
            });
        }
        if bias.len() != n_classes {
            return Err(Error::Shape {
                expected: n_classes,
                found: bias.len(),
            });
        }
        Ok(LinearClassifier {
            n_classes,
            dim,
            weights,
            bias,
        })
    }

    /// Always predicts `class`.
    pub fn constant(n_classes: usize, dim: usize, class: usize) -> Self {
        let mut bias = vec![0.0; n_classes];
        bias[class] = 1.0;
        LinearClassifier {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * dim],
            bias,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn scores_unchecked(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// `Wx + b`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_classes];
        self.scores_unchecked(x, &mut out);
        Ok(out)
    }

    /// Argmax of the class scores; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub classifier: LinearClassifier,
    /// Regularized mean cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn check_training_set(samples: &[&FeaturizedSample], n_classes: usize) -> Result<usize> {
    if samples.len() < 2 {
        return Err(Error::DegenerateTraining(format!("{} samples", samples.len())));
    }
    let dim = samples[0].features.len();
    let mut classes = HashSet::new();
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: s.features.len(),
            });
        }
        if s.label >= n_classes {
            return Err(Error::Contract(format!(
                "label {} of `{}` outside {n_classes} classes",
                s.label, s.id
            )));
        }
        classes.insert(s.label);
    }
    if classes.len() < 2 {
        return Err(Error::DegenerateTraining("only one class present".into()));
    }
    Ok(dim)
}

fn regularized_loss(clf: &LinearClassifier, samples: &[&FeaturizedSample], l2: f64) -> f64 {
    let mut p = vec![0.0; clf.n_classes];
    let mut ce = 0.0;
    for s in samples {
        clf.scores_unchecked(&s.features, &mut p);
        softmax_in_place(&mut p);
        ce -= p[s.label].max(1e-300).ln();
    }
    let reg = 0.5 * l2 * clf.weights.iter().map(|w| w * w).sum::<f64>();
    ce / samples.len() as f64 + reg
}

fn fit(
    samples: &[&FeaturizedSample],
    n_classes: usize,
    cfg: &ClassifierConfig,
    rng: &mut Rng,
    record_loss: bool,
) -> Result<Fit> {
    let dim = check_training_set(samples, n_classes)?;
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("classifier needs positive batch size and learning rate".into()));
    }
    let mut clf = LinearClassifier {
        n_classes,
        dim,
        weights: vec![0.0; n_classes * dim],
        bias: vec![0.0; n_classes],
    };
    let mut grad_w = vec![0.0; n_classes * dim];
    let mut grad_b = vec![0.0; n_classes];
    let mut p = vec![0.0; n_classes];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(if record_loss { cfg.epochs } else { 0 });
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let s = samples[i];
                clf.scores_unchecked(&s.features, &mut p);
                softmax_in_place(&mut p);
                p[s.label] -= 1.0;
                for c in 0..n_classes {
                    grad_b[c] += p[c];
                    let row = &mut grad_w[c * dim..(c + 1) * dim];
                    for (g, x) in row.iter_mut().zip(&s.features) {
                        *g += p[c] * x;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (w, g) in clf.weights.iter_mut().zip(&grad_w) {
                *w -= cfg.learning_rate * (g * scale + cfg.l2 * *w);
            }
            for (b, g) in clf.bias.iter_mut().zip(&grad_b) {
                *b -= cfg.learning_rate * g * scale;
            }
        }
        if record_loss {
            epoch_losses.push(regularized_loss(&clf, samples, cfg.l2));
        }
    }
    Ok(Fit {
        classifier: clf,
        epoch_losses,
    })
}

/// Multinomial logistic regression by mini-batch gradient descent from a
/// zero initialization. `rng` drives the per-epoch batch order.
pub fn train_linear(
    samples: &[&FeaturizedSample],
    n_classes: usize,
    cfg: &ClassifierConfig,
    rng: &mut Rng,
) -> Result<Fit> {
    fit(samples, n_classes, cfg, rng, true)
}

/// Like [`train_linear`], but a single-class training set yields a constant
/// predictor for that class instead of an error.
pub fn train_or_constant(
    samples: &[&FeaturizedSample],
    n_classes: usize,
    cfg: &ClassifierConfig,
    rng: &mut Rng,
) -> Result<LinearClassifier> {
    match fit(samples, n_classes, cfg, rng, false) {
        Ok(f) => Ok(f.classifier),
        Err(Error::DegenerateTraining(_)) if !samples.is_empty() => Ok(LinearClassifier::constant(
            n_classes,
            samples[0].features.len(),
            samples[0].label,
        )),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfliteConfig {
    /// N
    pub ensemble_size: usize,
    /// τ
    pub threshold: f64,
    /// k₁
    pub cutoff_train: usize,
    /// k₂
    pub cutoff_dev: usize,
    /// O
    pub target_size: usize,
    pub seed: u64,
    pub classifier: ClassifierConfig,
}

impl AfliteConfig {
    /// N = 64, τ = 0.75, k₁ = |Trn|/50, k₂ = |Dev|/50, O = |Trn|/5.
    pub fn standard(trn_len: usize, dev_len: usize, seed: u64) -> Self {
        AfliteConfig {
            ensemble_size: 64,
            threshold: 0.75,
            cutoff_train: (trn_len / 50).max(1),
            cutoff_dev: dev_len / 50,
            target_size: (trn_len / 5).max(1),
            seed,
            classifier: ClassifierConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1], got {}", self.threshold)));
        }
        if self.cutoff_train == 0 {
            return Err(Error::Config("train cutoff k1 must be at least 1".into()));
        }
        if self.target_size == 0 {
            return Err(Error::Config("target size must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed for the train/held-out split of ensemble member `member` in
    /// outer iteration `iteration`.
    pub fn partition_seed(&self, iteration: usize, member: usize) -> SeedPath {
        SeedPath::new(self.seed)
            .with("aflite-partition")
            .with_u64(iteration as u64)
            .with_u64(member as u64)
    }

    /// Seed for the batch order of ensemble member `member`.
    pub fn classifier_seed(&self, member: usize) -> SeedPath {
        SeedPath::new(self.seed).with("clf").with_u64(member as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub removed_train_ids: Vec<String>,
    pub removed_dev_ids: Vec<String>,
    /// Counts of predictability in ten equal-width bins over [0, 1].
    pub acc_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfliteResult {
    /// Surviving train ids, in input order.
    pub trn_filtered: Vec<String>,
    pub dev_filtered: Vec<String>,
    pub audit_log: Vec<IterationLog>,
}

/// Correct and total predictions for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: u32,
    pub total: u32,
}

impl Tally {
    pub fn acc(self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn cmp_acc(self, other: Tally) -> Ordering {
        (self.correct as u64 * other.total as u64).cmp(&(other.correct as u64 * self.total as u64))
    }
}

fn validate_samples(trn: &[FeaturizedSample], dev: &[FeaturizedSample]) -> Result<usize> {
    let dim = trn.first().or(dev.first()).map_or(0, |s| s.features.len());
    let mut ids = HashSet::new();
    let mut n_classes = 0;
    for s in trn.iter().chain(dev) {
        if s.features.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: s.features.len(),
            });
        }
        if !ids.insert(s.id.as_str()) {
            return Err(Error::Contract(format!("duplicate sample id `{}`", s.id)));
        }
        n_classes = n_classes.max(s.label + 1);
    }
    Ok(n_classes.max(2))
}

/// Up to `k` members of `pool` with predictability above `tau`, highest
/// first, ties by id.
fn select_top(pool: &[usize], samples: &[FeaturizedSample], tallies: &[Tally], tau: f64, k: usize) -> Vec<usize> {
    let mut qualifying: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| tallies[i].acc().is_some_and(|a| a > tau))
        .collect();
    qualifying.sort_by(|&a, &b| {
        tallies[b]
            .cmp_acc(tallies[a])
            .then_with(|| samples[a].id.cmp(&samples[b].id))
    });
    qualifying.truncate(k);
    qualifying
}

fn histogram(tallies: impl Iterator<Item = Tally>) -> Vec<usize> {
    let mut bins = vec![0; 10];
    for t in tallies {
        if let Some(a) = t.acc() {
            bins[((a * 10.0) as usize).min(9)] += 1;
        }
    }
    bins
}

pub fn run_aflite(trn: &[FeaturizedSample], dev: &[FeaturizedSample], cfg: &AfliteConfig) -> Result<AfliteResult> {
    cfg.validate()?;
    let n_classes = validate_samples(trn, dev)?;
    // dev samples are addressed after the train samples in one index space
    let all: Vec<FeaturizedSample> = trn.iter().chain(dev).cloned().collect();
    let mut trn_pool: Vec<usize> = (0..trn.len()).collect();
    let mut dev_pool: Vec<usize> = (trn.len()..all.len()).collect();
    let o = cfg.target_size;
    let mut log = Vec::new();
    let mut iteration = 0;

    while trn_pool.len() > o {
        let member_predictions: Vec<Vec<(usize, bool)>> = (0..cfg.ensemble_size)
            .into_par_iter()
            .map(|member| -> Result<Vec<(usize, bool)>> {
                let mut order = trn_pool.clone();
                order.shuffle(&mut cfg.partition_seed(iteration, member).rng());
                let (u, v) = order.split_at(o);
                let train_set: Vec<&FeaturizedSample> = u.iter().map(|&i| &all[i]).collect();
                let clf = train_or_constant(
                    &train_set,
                    n_classes,
                    &cfg.classifier,
                    &mut cfg.classifier_seed(member).rng(),
                )?;
                v.iter()
                    .chain(&dev_pool)
                    .map(|&i| Ok((i, clf.predict(&all[i].features)? == all[i].label)))
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut tallies = vec![Tally::default(); all.len()];
        for preds in &member_predictions {
            for &(i, hit) in preds {
                tallies[i].total += 1;
                tallies[i].correct += hit as u32;
            }
        }

        let s1 = select_top(&trn_pool, &all, &tallies, cfg.threshold, cfg.cutoff_train);
        let s2 = select_top(&dev_pool, &all, &tallies, cfg.threshold, cfg.cutoff_dev);
        let acc_histogram = histogram(trn_pool.iter().chain(&dev_pool).map(|&i| tallies[i]));
        trn_pool.retain(|i| !s1.contains(i));
        dev_pool.retain(|i| !s2.contains(i));
        log.push(IterationLog {
            iter: iteration,
            removed_train_ids: s1.iter().map(|&i| all[i].id.clone()).collect(),
            removed_dev_ids: s2.iter().map(|&i| all[i].id.clone()).collect(),
            acc_histogram,
        });
        iteration += 1;
        if s1.len() < cfg.cutoff_train {
            break;
        }
    }

    Ok(AfliteResult {
        trn_filtered: trn_pool.iter().map(|&i| all[i].id.clone()).collect(),
        dev_filtered: dev_pool.iter().map(|&i| all[i].id.clone()).collect(),
        audit_log: log,
    })
}

/// Splits off `round(fraction · n)` uniformly chosen items (the classifier
/// warm-up share, discarded afterwards). Both halves keep input order.
pub fn split_warmup<T>(items: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("warm-up fraction must lie in [0, 1), got {fraction}")));
    }
    let n = items.len();
    let take = (fraction * n as f64).round() as usize;
    let mut chosen = vec![false; n];
    for i in index::sample(&mut SeedPath::new(seed).with("warmup").rng(), n, take) {
        chosen[i] = true;
    }
    let (mut warm, mut rest) = (Vec::with_capacity(take), Vec::with_capacity(n - take));
    for (item, c) in items.into_iter().zip(chosen) {
        if c {
            warm.push(item);
        } else {
            rest.push(item);
        }
    }
    Ok((warm, rest))
}

/// Fixed-length features for a QA pair: the question vector followed by one
/// vector per option, in option order.
pub fn featurize_item(question: &str, options: &[String], featurizer: &HashedFeaturizer) -> Vec<f64> {
    std::iter::once(question)
        .chain(options.iter().map(String::as_str))
        .flat_map(|t| featurizer.embed(t))
        .map(f64::from)
        .collect()
}
