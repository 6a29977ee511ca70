//! Margin-ranking training of a log-linear option scorer, plus masked-token
//! selection for the masked-language-model training regime.
//!
//! Training scores are oriented "higher is better". The LM-style scores in
//! [`crate::scoring`] are "lower is better"; a training score is the
//! negation of such a score, so argmax of one equals argmin of the other.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{
    evaluate, score_masked, BigramModel, ConditionalTokenModel, EvalItem, OptionScorer, TokenSequence, PROB_FLOOR,
};
use crate::seed::{Rng, SeedPath};
use crate::text::{tokenize, Stopwords};

#[derive(Debug, Clone, PartialEq)]
pub struct MrLossInput {
    scores: Vec<f64>,
    gold: usize,
    margin: f64,
}

impl MrLossInput {
    pub fn new(scores: Vec<f64>, gold: usize, margin: f64) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::Contract(format!("need at least 2 scores, got {}", scores.len())));
        }
        if gold >= scores.len() {
            return Err(Error::Contract(format!("gold index {gold} out of range")));
        }
        if margin.is_nan() || margin <= 0.0 {
            return Err(Error::Contract(format!("margin must be positive, got {margin}")));
        }
        Ok(MrLossInput { scores, gold, margin })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Options whose hinge term is strictly positive.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        let sy = self.scores[self.gold];
        (0..self.scores.len()).filter(move |&i| i != self.gold && self.margin - sy + self.scores[i] > 0.0)
    }
}

/// (1/m) Σ_{i≠y} max(0, η − S_y + S_i).
pub fn mr_loss(input: &MrLossInput) -> f64 {
    let sy = input.scores[input.gold];
    let m = input.scores.len() as f64;
    input
        .scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != input.gold)
        .map(|(_, &si)| (input.margin - sy + si).max(0.0))
        .sum::<f64>()
        / m
}

pub type FeatureVector = BTreeMap<String, f64>;

/// Linear scorer over sparse features of a (question, option) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogLinearScorer {
    pub weights: BTreeMap<String, f64>,
}

impl LogLinearScorer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Option-token counts (`o:tok`) and question/option token pairs
    /// (`q:a|o:b`).
    pub fn features(question: &str, option: &str) -> FeatureVector {
        let mut f = FeatureVector::new();
        let opt = tokenize(option);
        for t in &opt {
            *f.entry(format!("o:{t}")).or_insert(0.0) += 1.0;
        }
        let q: BTreeSet<String> = tokenize(question).into_iter().collect();
        let o: BTreeSet<&String> = opt.iter().collect();
        for a in &q {
            for b in &o {
                f.insert(format!("q:{a}|o:{b}"), 1.0);
            }
        }
        f
    }

    pub fn dot(&self, features: &FeatureVector) -> f64 {
        features
            .iter()
            .map(|(k, v)| self.weights.get(k).copied().unwrap_or(0.0) * v)
            .sum()
    }

    /// Training-orientation scores, one per option.
    pub fn training_scores(&self, item: &EvalItem) -> Vec<f64> {
        item.options
            .iter()
            .map(|o| self.dot(&Self::features(&item.question, o)))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.values().all(|w| w.is_finite())
    }
}

impl OptionScorer for LogLinearScorer {
    fn score_options(&self, item: &EvalItem) -> Result<Vec<f64>> {
        Ok(self.training_scores(item).into_iter().map(|s| -s).collect())
    }
}

/// Loss of one item under `scorer`.
pub fn item_loss(scorer: &LogLinearScorer, item: &EvalItem, margin: f64) -> Result<f64> {
    Ok(mr_loss(&MrLossInput::new(scorer.training_scores(item), item.answer_index, margin)?))
}

/// Subgradient of the item loss with respect to the scorer weights: every
/// active hinge contributes (φ_i − φ_y)/m. Terms exactly at the hinge
/// boundary contribute nothing.
pub fn mr_gradient(scorer: &LogLinearScorer, item: &EvalItem, margin: f64) -> Result<FeatureVector> {
    let feats: Vec<FeatureVector> = item
        .options
        .iter()
        .map(|o| LogLinearScorer::features(&item.question, o))
        .collect();
    let scores: Vec<f64> = feats.iter().map(|f| scorer.dot(f)).collect();
    let input = MrLossInput::new(scores, item.answer_index, margin)?;
    let m = feats.len() as f64;
    let mut grad = FeatureVector::new();
    for i in input.active() {
        for (k, v) in &feats[i] {
            *grad.entry(k.clone()).or_insert(0.0) += v / m;
        }
        for (k, v) in &feats[item.answer_index] {
            *grad.entry(k.clone()).or_insert(0.0) -= v / m;
        }
    }
    grad.retain(|_, v| *v != 0.0);
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    /// Steps between dev evaluations (and checkpoint candidates).
    pub eval_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 1,
            weight_decay: 0.01,
            warmup_fraction: 0.05,
            eval_interval: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || self.batch_size == 0 || self.epochs == 0 || self.eval_interval == 0 {
            return Err(Error::Config(
                "training needs non-negative learning rate and positive batch size, epochs and eval interval".into(),
            ));
        }
        if self.margin.is_nan() || self.margin <= 0.0 || self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("margin > 0, weight decay >= 0, warm-up in [0, 1) required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    /// Mean item loss over the steps since the previous row (step 0: over
    /// the whole training set).
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Checkpoint with the best dev accuracy (earliest on ties).
    pub scorer: LogLinearScorer,
    pub best_step: usize,
    pub best_dev_accuracy: Option<f64>,
    pub history: Vec<HistoryRow>,
}

fn dev_accuracy(scorer: &LogLinearScorer, dev: &[EvalItem]) -> Result<Option<f64>> {
    if dev.is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate(dev, scorer)?.accuracy))
}

/// Mini-batch SGD with decoupled weight decay and linear warm-up.
pub fn train_mr(train: &[EvalItem], dev: &[EvalItem], init: LogLinearScorer, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput { skipped: 0 });
    }
    if dev.is_empty() {
        log::warn!("empty dev set: returning the final checkpoint");
    }
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup_steps = (cfg.warmup_fraction * total_steps as f64).ceil() as usize;

    let mut scorer = init;
    let initial_loss =
        train.iter().map(|it| item_loss(&scorer, it, cfg.margin)).sum::<Result<f64>>()? / train.len() as f64;
    let initial_acc = dev_accuracy(&scorer, dev)?;
    let mut history = vec![HistoryRow {
        step: 0,
        loss: initial_loss,
        dev_accuracy: initial_acc,
    }];
    let (mut best, mut best_step, mut best_acc) = (scorer.clone(), 0, initial_acc);

    let mut step = 0;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut SeedPath::new(cfg.seed).with("train_mr").with_u64(epoch as u64).rng());
        for batch in order.chunks(cfg.batch_size) {
            let lr = if warmup_steps > 0 && step < warmup_steps {
                cfg.learning_rate * (step + 1) as f64 / warmup_steps as f64
            } else {
                cfg.learning_rate
            };
            let mut grad = FeatureVector::new();
            for &i in batch {
                loss_sum += item_loss(&scorer, &train[i], cfg.margin)?;
                loss_n += 1;
                for (k, v) in mr_gradient(&scorer, &train[i], cfg.margin)? {
                    *grad.entry(k).or_insert(0.0) += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            if cfg.weight_decay > 0.0 && lr > 0.0 {
                let keep = 1.0 - lr * cfg.weight_decay;
                scorer.weights.values_mut().for_each(|w| *w *= keep);
            }
            if lr > 0.0 {
                for (k, g) in grad {
                    *scorer.weights.entry(k).or_insert(0.0) -= lr * g * scale;
                }
            }
            step += 1;
            if step % cfg.eval_interval == 0 || step == total_steps {
                let acc = dev_accuracy(&scorer, dev)?;
                history.push(HistoryRow {
                    step,
                    loss: loss_sum / loss_n.max(1) as f64,
                    dev_accuracy: acc,
                });
                (loss_sum, loss_n) = (0.0, 0);
                let better = match (acc, best_acc) {
                    (Some(a), Some(b)) => a > b,
                    (None, _) => true,
                    (Some(_), None) => true,
                };
                if better {
                    (best, best_step, best_acc) = (scorer.clone(), step, acc);
                }
            }
        }
    }
    Ok(TrainOutcome {
        scorer: best,
        best_step,
        best_dev_accuracy: best_acc,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmMaskConfig {
    /// 0.5 for ATOMIC-derived sets, 0.3 for CWWV.
    pub mask_probability: f64,
}

impl MlmMaskConfig {
    pub fn new(mask_probability: f64) -> Result<Self> {
        if !(mask_probability > 0.0 && mask_probability <= 1.0) {
            return Err(Error::Config(format!("mask probability must lie in (0, 1], got {mask_probability}")));
        }
        Ok(MlmMaskConfig { mask_probability })
    }
}

/// Non-stopword positions inside the head or tail span.
pub fn maskable_positions(seq: &TokenSequence, stopwords: &Stopwords) -> Vec<usize> {
    let mut pos: Vec<usize> = seq
        .head_span
        .iter()
        .chain(&seq.tail_span)
        .flat_map(|r| r.clone())
        .filter(|&i| !stopwords.contains(&seq.tokens[i]))
        .collect();
    pos.sort_unstable();
    pos.dedup();
    pos
}

/// Masks each eligible position independently with the configured
/// probability.
pub fn select_mlm_masks(seq: &TokenSequence, cfg: &MlmMaskConfig, stopwords: &Stopwords, rng: &mut Rng) -> Vec<usize> {
    maskable_positions(seq, stopwords)
        .into_iter()
        .filter(|_| rng.gen_bool(cfg.mask_probability))
        .collect()
}

/// Mean negative log masked-probability over `masks`; `None` without masks.
pub fn masked_token_loss<M: ConditionalTokenModel + ?Sized>(model: &M, seq: &TokenSequence, masks: &[usize]) -> Option<f64> {
    if masks.is_empty() {
        return None;
    }
    let total: f64 = masks
        .iter()
        .map(|&i| {
            let p = model.masked_prob(&seq.tokens[i], &seq.tokens[..i], &seq.tokens[i + 1..]);
            -p.max(PROB_FLOOR).ln()
        })
        .sum();
    Some(total / masks.len() as f64)
}

/// Masked-LM regime for the bigram stand-in: the question and its correct
/// answer are concatenated into one training sentence each and added to
/// the base corpus. Counting is the maximum-likelihood fit of a bigram
/// model, so the "training" is a refit on the extended corpus.
pub fn fit_mlm_bigram(base: &[Vec<String>], items: &[EvalItem], alpha: f64) -> Result<BigramModel> {
    let mut sentences: Vec<Vec<String>> = base.to_vec();
    sentences.extend(items.iter().map(|it| {
        let mut s = tokenize(&it.question);
        s.extend(tokenize(&it.options[it.answer_index]));
        s
    }));
    BigramModel::from_sentences(&sentences, alpha)
}

/// Average masked-token loss of `model` over `items`, masks drawn per item.
pub fn mlm_eval_loss<M: ConditionalTokenModel + ?Sized>(
    model: &M,
    items: &[(TokenSequence, Vec<usize>)],
) -> Option<f64> {
    let losses: Vec<f64> = items.iter().filter_map(|(s, m)| masked_token_loss(model, s, m)).collect();
    (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Causal-free check used by the regime comparison: masked-score accuracy.
pub fn masked_accuracy<M: ConditionalTokenModel + ?Sized>(model: &M, items: &[EvalItem]) -> Result<f64> {
    let mut correct = 0;
    for it in items {
        let scores = it
            .options
            .iter()
            .map(|o| Ok(score_masked(&TokenSequence::from_text(&format!("{} {}", it.question, o))?, model)?.value))
            .collect::<Result<Vec<f64>>>()?;
        if crate::scoring::predict_option(&scores)? == it.answer_index {
            correct += 1;
        }
    }
    Ok(if items.is_empty() { 0.0 } else { correct as f64 / items.len() as f64 })
}
