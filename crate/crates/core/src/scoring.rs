//! Option scoring with a token-probability model.
//!
//! An option is appended to its (converted) question and the resulting
//! statement is scored by its average negative log-probability, either
//! left-to-right (causal) or one masked token at a time (masked). The option
//! with the lowest score is the prediction.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::Template;
use crate::text::tokenize;

/// Probabilities below this are raised to it before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub option_span: Range<usize>,
    pub head_span: Option<Range<usize>>,
    pub tail_span: Option<Range<usize>>,
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

impl TokenSequence {
    pub fn new(
        tokens: Vec<String>,
        option_span: Range<usize>,
        head_span: Option<Range<usize>>,
        tail_span: Option<Range<usize>>,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Contract("token sequence is empty".into()));
        }
        let n = tokens.len();
        let in_bounds = |r: &Range<usize>| r.start <= r.end && r.end <= n;
        if !in_bounds(&option_span) || !head_span.iter().chain(&tail_span).all(in_bounds) {
            return Err(Error::Contract("span out of bounds".into()));
        }
        if let (Some(h), Some(t)) = (&head_span, &tail_span) {
            if overlaps(h, t) {
                return Err(Error::Contract("head and tail spans overlap".into()));
            }
        }
        Ok(TokenSequence {
            tokens,
            option_span,
            head_span,
            tail_span,
        })
    }

    /// Unconstrained sequence (no head/tail annotations) over whitespace
    /// and punctuation tokens of `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let tokens = tokenize(text);
        let n = tokens.len();
        Self::new(tokens, n..n, None, None)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn option_tokens(&self) -> &[String] {
        &self.tokens[self.option_span.clone()]
    }
}

fn find_subsequence(hay: &[String], needle: &[String], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

/// Question pattern (`{head}` marks the captured slot) → statement template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConversionTable {
    entries: Vec<(String, String, Template)>,
}

impl ConversionTable {
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut entries = Vec::new();
        for (pattern, template) in pairs {
            let pattern = pattern.as_ref().trim();
            let (prefix, suffix) = pattern.split_once("{head}").ok_or_else(|| {
                Error::TemplateIntegrity(format!("question pattern `{pattern}` lacks {{head}}"))
            })?;
            entries.push((prefix.to_string(), suffix.to_string(), Template::parse(template.as_ref())?));
        }
        // longest literal text first, so specific patterns beat generic ones
        entries.sort_by(|a, b| (b.0.len() + b.1.len()).cmp(&(a.0.len() + a.1.len())).then_with(|| a.0.cmp(&b.0)));
        Ok(ConversionTable { entries })
    }

    /// Same JSON object format as the generation template table.
    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_reader(reader)
            .map_err(|e| Error::Config(format!("conversion table: {e}")))?;
        Self::from_pairs(raw)
    }

    /// Template and captured `{head}` text for a matching question.
    pub fn matching(&self, question: &str) -> Option<(&Template, String)> {
        let q = question.trim();
        self.entries.iter().find_map(|(prefix, suffix, t)| {
            let captured = q.strip_prefix(prefix.as_str())?.strip_suffix(suffix.as_str())?.trim();
            (!captured.is_empty()).then(|| (t, captured.to_string()))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the scored statement for one option. Questions matching a
/// conversion pattern are rewritten into a declarative prefix; anything
/// else is scored as context, question and option joined by spaces.
pub fn convert_to_sequence(context: &str, question: &str, option: &str, conversions: &ConversionTable) -> Result<TokenSequence> {
    let (prefix_text, head) = match conversions.matching(question) {
        Some((template, captured)) => (template.render_with_context(context, &captured, ""), Some(captured)),
        None => {
            let joined = [context.trim(), question.trim()]
                .into_iter()
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            (joined, None)
        }
    };
    let mut tokens = tokenize(&prefix_text);
    let context_len = if head.is_some() { tokenize(context).len() } else { 0 };
    let head_span = head.and_then(|h| {
        let needle = tokenize(&h);
        find_subsequence(&tokens, &needle, context_len.min(tokens.len())).map(|s| s..s + needle.len())
    });
    let start = tokens.len();
    tokens.extend(tokenize(option));
    let end = tokens.len();
    TokenSequence::new(tokens, start..end, head_span, Some(start..end))
}

/// Statement for a generated item: question then answer, with the head
/// node located inside the question.
pub fn sequence_for_item(question: &str, option: &str, head_text: &str) -> Result<TokenSequence> {
    let mut tokens = tokenize(question);
    let needle = tokenize(head_text);
    let head_span = find_subsequence(&tokens, &needle, 0).map(|s| s..s + needle.len());
    let start = tokens.len();
    tokens.extend(tokenize(option));
    let end = tokens.len();
    TokenSequence::new(tokens, start..end, head_span, Some(start..end))
}

/// A model answering conditional token-probability queries.
pub trait ConditionalTokenModel: Send + Sync {
    fn vocabulary(&self) -> &[String];

    /// P(token | left context).
    fn causal_prob(&self, token: &str, left: &[String]) -> f64;

    /// P(token | left and right context), the token itself masked.
    fn masked_prob(&self, token: &str, left: &[String], right: &[String]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    /// Average negative natural-log probability; lower is more plausible.
    pub value: f64,
    pub n_tokens: usize,
    /// Probabilities raised to [`PROB_FLOOR`].
    pub floored: usize,
}

fn average_nll(seq: &TokenSequence, mut prob: impl FnMut(usize) -> f64) -> Result<SequenceScore> {
    if seq.is_empty() {
        return Err(Error::Contract("cannot score an empty sequence".into()));
    }
    let mut total = 0.0;
    let mut floored = 0;
    for i in 0..seq.len() {
        let p = prob(i);
        if p.is_nan() || p <= 0.0 {
            return Err(Error::InvalidProbability {
                token: seq.tokens[i].clone(),
                prob: p,
            });
        }
        let p = if p < PROB_FLOOR {
            floored += 1;
            PROB_FLOOR
        } else {
            p
        };
        total -= p.ln();
    }
    if floored > 0 {
        log::warn!("{floored} probabilities floored at {PROB_FLOOR}");
    }
    Ok(SequenceScore {
        value: total / seq.len() as f64,
        n_tokens: seq.len(),
        floored,
    })
}

/// −(1/n) Σ ln P(tᵢ | t₁…tᵢ₋₁).
pub fn score_causal<M: ConditionalTokenModel + ?Sized>(seq: &TokenSequence, model: &M) -> Result<SequenceScore> {
    average_nll(seq, |i| model.causal_prob(&seq.tokens[i], &seq.tokens[..i]))
}

/// −(1/n) Σ ln P(tᵢ | t₁…tᵢ₋₁, tᵢ₊₁…tₙ), masking one token at a time.
pub fn score_masked<M: ConditionalTokenModel + ?Sized>(seq: &TokenSequence, model: &M) -> Result<SequenceScore> {
    average_nll(seq, |i| model.masked_prob(&seq.tokens[i], &seq.tokens[..i], &seq.tokens[i + 1..]))
}

/// Index of the lowest score; ties go to the lowest index.
pub fn predict_option(scores: &[f64]) -> Result<usize> {
    if scores.len() < 2 {
        return Err(Error::Contract(format!("need at least 2 option scores, got {}", scores.len())));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

const EOS: &str = "</s>";
const UNK: &str = "<unk>";

/// Add-α smoothed bigram model over sentence-delimited token streams.
///
/// The predictive vocabulary is every corpus type plus `</s>` and `<unk>`;
/// out-of-vocabulary tokens are read as `<unk>`. The masked estimate is the
/// geometric mean of the left-bigram and right-bigram probabilities,
/// renormalized over the vocabulary.
#[derive(Debug, Clone)]
pub struct BigramModel {
    alpha: f64,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    bos: usize,
    eos: usize,
    unk: usize,
    pair_counts: HashMap<(usize, usize), u64>,
    context_counts: Vec<u64>,
}

impl BigramModel {
    pub fn from_sentences<S: AsRef<[String]>>(sentences: &[S], alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing must be a non-negative number, got {alpha}")));
        }
        if sentences.iter().all(|s| s.as_ref().is_empty()) {
            return Err(Error::EmptyInput { skipped: 0 });
        }
        let mut vocab: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        let mut intern = |w: &str, vocab: &mut Vec<String>| -> usize {
            *index.entry(w.to_string()).or_insert_with(|| {
                vocab.push(w.to_string());
                vocab.len() - 1
            })
        };
        let eos = intern(EOS, &mut vocab);
        let unk = intern(UNK, &mut vocab);
        let mut ids: Vec<Vec<usize>> = Vec::with_capacity(sentences.len());
        for s in sentences {
            ids.push(s.as_ref().iter().map(|w| intern(w, &mut vocab)).collect());
        }
        // BOS is a context symbol only, kept past the predictive vocabulary
        let bos = vocab.len();
        let mut pair_counts = HashMap::new();
        let mut context_counts = vec![0u64; vocab.len() + 1];
        for sent in ids.iter().filter(|s| !s.is_empty()) {
            let mut prev = bos;
            for &w in sent.iter().chain(std::iter::once(&eos)) {
                *pair_counts.entry((prev, w)).or_insert(0) += 1;
                context_counts[prev] += 1;
                prev = w;
            }
        }
        Ok(BigramModel {
            alpha,
            index: vocab.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect(),
            vocab,
            bos,
            eos,
            unk,
            pair_counts,
            context_counts,
        })
    }

    /// Tokenizes each text as one sentence.
    pub fn from_texts<I, S>(texts: I, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences: Vec<Vec<String>> = texts.into_iter().map(|t| tokenize(t.as_ref())).collect();
        Self::from_sentences(&sentences, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    fn prob_ids(&self, prev: usize, next: usize) -> f64 {
        let v = self.vocab.len() as f64;
        let denom = self.context_counts[prev] as f64 + self.alpha * v;
        if denom == 0.0 {
            return 1.0 / v;
        }
        let c = self.pair_counts.get(&(prev, next)).copied().unwrap_or(0) as f64;
        (c + self.alpha) / denom
    }

    fn left_id(&self, left: &[String]) -> usize {
        left.last().map_or(self.bos, |t| self.id(t))
    }
}

impl ConditionalTokenModel for BigramModel {
    fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    fn causal_prob(&self, token: &str, left: &[String]) -> f64 {
        self.prob_ids(self.left_id(left), self.id(token))
    }

    fn masked_prob(&self, token: &str, left: &[String], right: &[String]) -> f64 {
        let prev = self.left_id(left);
        let next = right.first().map_or(self.eos, |t| self.id(t));
        let g = |w: usize| (self.prob_ids(prev, w) * self.prob_ids(w, next)).sqrt();
        let z: f64 = (0..self.vocab.len()).map(g).sum();
        if z == 0.0 {
            return 1.0 / self.vocab.len() as f64;
        }
        g(self.id(token)) / z
    }
}

/// A generic multiple-choice item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl From<&crate::distractor::QaItem> for EvalItem {
    fn from(item: &crate::distractor::QaItem) -> Self {
        EvalItem {
            id: item.id.clone(),
            context: None,
            question: item.question.clone(),
            options: item.options.clone(),
            answer_index: item.answer_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Causal,
    Masked,
}

/// Scores every option of an item; lower is better.
pub trait OptionScorer: Sync {
    fn score_options(&self, item: &EvalItem) -> Result<Vec<f64>>;
}

pub struct LmScorer<'a, M: ConditionalTokenModel + ?Sized> {
    pub model: &'a M,
    pub conversions: &'a ConversionTable,
    pub mode: ScoreMode,
}

impl<M: ConditionalTokenModel + ?Sized> OptionScorer for LmScorer<'_, M> {
    fn score_options(&self, item: &EvalItem) -> Result<Vec<f64>> {
        let context = item.context.as_deref().unwrap_or("");
        item.options
            .iter()
            .map(|opt| {
                let seq = convert_to_sequence(context, &item.question, opt, self.conversions)?;
                let s = match self.mode {
                    ScoreMode::Causal => score_causal(&seq, self.model)?,
                    ScoreMode::Masked => score_masked(&seq, self.model)?,
                };
                Ok(s.value)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_index: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

/// Accuracy of argmin predictions against the gold indices.
pub fn evaluate<S: OptionScorer + ?Sized>(items: &[EvalItem], scorer: &S) -> Result<Evaluation> {
    let predictions: Vec<Prediction> = items
        .par_iter()
        .map(|item| {
            if item.options.len() < 2 {
                return Err(Error::Contract(format!("item `{}` has fewer than 2 options", item.id)));
            }
            let scores = scorer.score_options(item)?;
            Ok(Prediction {
                id: item.id.clone(),
                predicted_index: predict_option(&scores)?,
                scores,
            })
        })
        .collect::<Result<_>>()?;
    let correct = predictions
        .iter()
        .zip(items)
        .filter(|(p, i)| p.predicted_index == i.answer_index)
        .count();
    let accuracy = if items.is_empty() {
        0.0
    } else {
        correct as f64 / items.len() as f64
    };
    Ok(Evaluation { accuracy, predictions })
}

/// Accuracy of always answering the most frequent gold index.
pub fn majority_baseline(items: &[EvalItem]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for i in items {
        *counts.entry(i.answer_index).or_default() += 1;
    }
    *counts.values().max().unwrap_or(&0) as f64 / items.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns fixed per-position probabilities.
    struct Fixed(Vec<f64>);

    impl ConditionalTokenModel for Fixed {
        fn vocabulary(&self) -> &[String] {
            &[]
        }
        fn causal_prob(&self, _token: &str, left: &[String]) -> f64 {
            self.0[left.len()]
        }
        fn masked_prob(&self, _token: &str, left: &[String], _right: &[String]) -> f64 {
            self.0[left.len()]
        }
    }

    fn seq(n: usize) -> TokenSequence {
        TokenSequence::new((0..n).map(|i| format!("w{i}")).collect(), 0..0, None, None).unwrap()
    }

    #[test]
    fn causal_arithmetic() {
        let s = score_causal(&seq(3), &Fixed(vec![0.5; 3])).unwrap();
        assert!((s.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(score_causal(&seq(3), &Fixed(vec![1.0; 3])).unwrap().value, 0.0);
        let s = score_causal(&seq(1), &Fixed(vec![0.25])).unwrap();
        assert!((s.value - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_arithmetic() {
        let s = score_masked(&seq(2), &Fixed(vec![0.5, 0.25])).unwrap();
        assert!((s.value - 1.0397207708399179).abs() < 1e-12);
    }

    #[test]
    fn invalid_and_floored_probabilities() {
        assert!(matches!(
            score_causal(&seq(2), &Fixed(vec![0.5, 0.0])),
            Err(Error::InvalidProbability { .. })
        ));
        assert!(matches!(
            score_masked(&seq(1), &Fixed(vec![-0.1])),
            Err(Error::InvalidProbability { .. })
        ));
        let s = score_causal(&seq(1), &Fixed(vec![1e-20])).unwrap();
        assert_eq!(s.floored, 1);
        assert!((s.value - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn predict_option_cases() {
        assert_eq!(predict_option(&[0.9, 0.3, 0.7]).unwrap(), 1);
        assert_eq!(predict_option(&[0.5, 0.5]).unwrap(), 0);
        assert!(predict_option(&[]).is_err());
        assert!(predict_option(&[1.0]).is_err());
    }

    #[test]
    fn sequence_validation() {
        assert!(TokenSequence::new(vec![], 0..0, None, None).is_err());
        let toks = vec!["a".to_string(), "b".to_string()];
        assert!(TokenSequence::new(toks.clone(), 0..3, None, None).is_err());
        assert!(TokenSequence::new(toks.clone(), 1..2, Some(0..2), Some(1..2)).is_err());
        assert!(TokenSequence::new(toks, 1..2, Some(0..1), Some(1..2)).is_ok());
    }

    #[test]
    fn bigram_estimates() {
        let m = BigramModel::from_texts(["a b a b"], 0.0).unwrap();
        assert_eq!(m.causal_prob("b", &["a".to_string()]), 1.0);
        let m1 = BigramModel::from_texts(["a b a b"], 1.0).unwrap();
        let v = m1.vocab_size() as f64;
        // "a" precedes two tokens in the corpus; "a a" never occurs
        assert!((m1.causal_prob("a", &["a".to_string()]) - 1.0 / (2.0 + v)).abs() < 1e-15);
        assert!(BigramModel::from_texts(Vec::<String>::new(), 1.0).is_err());
        assert!(BigramModel::from_texts([""], 1.0).is_err());
        assert!(BigramModel::from_texts(["a"], -1.0).is_err());
    }

    #[test]
    fn bigram_distributions_normalize() {
        let m = BigramModel::from_texts(["the cat sat", "the dog sat down", "a cat ran"], 0.5).unwrap();
        let left = vec!["the".to_string()];
        let right = vec!["sat".to_string()];
        let causal: f64 = m.vocabulary().iter().map(|w| m.causal_prob(w, &left)).sum();
        let masked: f64 = m.vocabulary().iter().map(|w| m.masked_prob(w, &left, &right)).sum();
        assert!((causal - 1.0).abs() < 1e-9);
        assert!((masked - 1.0).abs() < 1e-6);
        assert!(m.masked_prob("cat", &left, &right) > m.masked_prob("down", &left, &right));
    }

    #[test]
    fn conversion_with_and_without_context() {
        let conv = ConversionTable::from_pairs([(
            "What will {head} want to do next?",
            "{context}, as a result, {head} want to {tail}",
        )])
        .unwrap();
        let s = convert_to_sequence("Robin took the bus", "What will Robin want to do next?", "go home", &conv).unwrap();
        assert_eq!(s.tokens, tokenize("Robin took the bus, as a result, Robin want to go home"));
        assert_eq!(s.option_span, 10..12);
        assert_eq!(s.head_span, Some(7..8));
        let s = convert_to_sequence("", "What will Robin want to do next?", "go home", &conv).unwrap();
        assert_eq!(s.tokens, tokenize("as a result, Robin want to go home"));
        let s = convert_to_sequence("", "Where is it?", "home", &conv).unwrap();
        assert_eq!(s.tokens, tokenize("Where is it? home"));
        assert_eq!(s.option_span, 3..4);
        assert!(s.head_span.is_none());
    }

    #[test]
    fn item_sequence_locates_head() {
        let s = sequence_for_item("losing weight is for", "being healthier", "losing weight").unwrap();
        assert_eq!(s.head_span, Some(0..2));
        assert_eq!(s.tail_span, Some(4..6));
        assert_eq!(s.option_tokens(), ["being", "healthier"]);
    }

    #[test]
    fn majority() {
        let item = |gold| EvalItem {
            id: "x".into(),
            context: None,
            question: "q".into(),
            options: vec!["a".into(), "b".into()],
            answer_index: gold,
        };
        let items: Vec<_> = [0, 0, 0, 1, 1].into_iter().map(item).collect();
        assert_eq!(majority_baseline(&items), 0.6);
        assert_eq!(majority_baseline(&[]), 0.0);
    }
}
