//! Question/answer generation from triples: templated lexicalization,
//! agent-name substitution, tail extraction and the per-family filters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Partition, TripleId};
use crate::seed::{Rng, SeedPath};
use crate::text::{
    agent_tokens, collapse_whitespace, contains_agent_token, has_keyword_overlap, strip_blanks,
    substitute_agents, tokenize, OverlapMode, Stopwords,
};

const HEAD: &str = "{head}";
const TAIL: &str = "{tail}";
const CONTEXT: &str = "{context}";

/// A sentence pattern with one `{head}` and a final `{tail}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.matches(HEAD).count() != 1 || text.matches(TAIL).count() != 1 {
            return Err(Error::TemplateIntegrity(format!(
                "`{text}` must contain {HEAD} and {TAIL} exactly once"
            )));
        }
        if !text.ends_with(TAIL) {
            return Err(Error::TemplateIntegrity(format!("`{text}` must end with {TAIL}")));
        }
        Ok(Template { text: text.to_string() })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn render(&self, head: &str, tail: &str) -> String {
        self.render_with_context("", head, tail)
    }

    /// Fills all placeholders. An empty context drops the `{context}` slot
    /// together with any punctuation that separated it from the rest.
    pub fn render_with_context(&self, context: &str, head: &str, tail: &str) -> String {
        let mut out = self.text.clone();
        if let Some(pos) = out.find(CONTEXT) {
            if context.trim().is_empty() {
                let rest = out[pos + CONTEXT.len()..]
                    .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ',' | '.' | ';' | ':'))
                    .to_string();
                out.replace_range(pos.., &rest);
            } else {
                out.replace_range(pos..pos + CONTEXT.len(), context.trim());
            }
        }
        let out = out.replacen(HEAD, head, 1).replacen(TAIL, tail, 1);
        collapse_whitespace(&out)
    }

    /// Template text before `{tail}`, with `{head}` filled.
    pub fn question_form(&self, head: &str) -> String {
        let prefix = &self.text[..self.text.len() - TAIL.len()];
        collapse_whitespace(&prefix.replacen(HEAD, head, 1))
    }
}

/// Relation id (or question pattern) → template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateTable {
    entries: BTreeMap<String, Template>,
}

impl TemplateTable {
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: AsRef<str>,
    {
        let entries = pairs
            .into_iter()
            .map(|(k, v)| Ok((k.into(), Template::parse(v.as_ref())?)))
            .collect::<Result<_>>()?;
        Ok(TemplateTable { entries })
    }

    /// A JSON object mapping keys to template strings.
    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_reader(reader)
            .map_err(|e| Error::Config(format!("template table: {e}")))?;
        Self::from_pairs(raw)
    }

    pub fn get(&self, key: &str) -> Option<&Template> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Template)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamePool {
    names: Vec<String>,
}

impl NamePool {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("name pool is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.trim().is_empty() || !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("name pool entry `{n}` is blank or repeated")));
            }
        }
        Ok(NamePool { names })
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut names = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let name = line.split('#').next().unwrap_or("").trim();
            if !name.is_empty() {
                names.push(name.to_string());
            }
        }
        Self::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `count` distinct names, uniformly without replacement.
    pub fn sample(&self, rng: &mut Rng, count: usize) -> Result<Vec<&str>> {
        if count > self.names.len() {
            return Err(Error::NamePoolExhausted {
                needed: count,
                available: self.names.len(),
            });
        }
        Ok(index::sample(rng, self.names.len(), count)
            .into_iter()
            .map(|i| self.names[i].as_str())
            .collect())
    }
}

/// Word → zipf frequency.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable(HashMap<String, f64>);

impl FrequencyTable {
    pub fn new<I: IntoIterator<Item = (String, f64)>>(entries: I) -> Self {
        FrequencyTable(entries.into_iter().map(|(w, z)| (w.to_lowercase(), z)).collect())
    }

    /// `word \t zipf` per line.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut map = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                line: n + 1,
                message: message.to_string(),
            };
            let (word, zipf) = line.split_once('\t').ok_or_else(|| parse_err("expected `word<TAB>zipf`"))?;
            let zipf: f64 = zipf.trim().parse().map_err(|_| parse_err("zipf score is not a number"))?;
            map.insert(word.trim().to_lowercase(), zipf);
        }
        Ok(FrequencyTable(map))
    }

    /// Missing words score 0.
    pub fn zipf(&self, word: &str) -> f64 {
        self.0.get(word).copied().unwrap_or(0.0)
    }
}

/// True iff every non-stopword token of `label` has zipf ≥ `threshold`.
pub fn passes_commonness(label: &str, freq: &FrequencyTable, threshold: f64, stopwords: &Stopwords) -> bool {
    tokenize(label)
        .iter()
        .filter(|t| !stopwords.contains(t))
        .all(|t| freq.zipf(t) >= threshold)
}

/// Capitalized labels are treated as named entities.
pub fn is_named_entity(label: &str) -> bool {
    label
        .chars()
        .find(|c| c.is_alphabetic())
        .is_some_and(char::is_uppercase)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicalized {
    pub sentence: String,
    /// Lexicalized tail, agents substituted.
    pub answer: String,
    pub agent_names: BTreeMap<String, String>,
}

/// Strips `[[`/`]]` link markup, blanks and trailing sentence punctuation.
fn clean_sentence(s: &str) -> String {
    let s = strip_blanks(&s.replace("[[", "").replace("]]", ""));
    s.trim_end_matches(['.', '!', ' ']).to_string()
}

/// Turns a triple into a sentence ending with its tail. A pre-associated
/// sentence wins over the relation template.
pub fn lexicalize(
    kg: &KnowledgeGraph,
    triple: TripleId,
    templates: &TemplateTable,
    names: &NamePool,
    rng: &mut Rng,
) -> Result<Lexicalized> {
    let t = kg.triple(triple);
    let head = strip_blanks(&kg.node(t.head).label);
    let tail = strip_blanks(&kg.node(t.tail).label);
    let raw = match &t.sentence {
        Some(s) => clean_sentence(s),
        None => {
            let rel = kg.relation_name(t.relation);
            templates
                .get(rel)
                .ok_or_else(|| Error::UnsupportedRelation(rel.to_string()))?
                .render(&head, &tail)
        }
    };
    let mut agents = agent_tokens(&raw);
    for a in agent_tokens(&tail) {
        if !agents.contains(&a) {
            agents.push(a);
        }
    }
    let chosen = names.sample(rng, agents.len())?;
    let agent_names: BTreeMap<String, String> = agents
        .into_iter()
        .zip(chosen)
        .map(|(a, n)| (a, n.to_string()))
        .collect();
    Ok(Lexicalized {
        sentence: substitute_agents(&raw, &agent_names),
        answer: substitute_agents(&tail, &agent_names),
        agent_names,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionAnswer {
    pub question: String,
    pub answer: String,
}

/// Splits `sentence` into the question (everything before the tail) and the
/// answer (the tail).
pub fn make_question(sentence: &str, answer: &str) -> Result<QuestionAnswer> {
    let sentence = sentence.trim_end();
    let answer = answer.trim();
    if answer.is_empty() {
        return Err(Error::TemplateIntegrity("answer is empty".into()));
    }
    let Some(prefix) = sentence.strip_suffix(answer) else {
        return Err(Error::TemplateIntegrity(format!(
            "`{sentence}` does not end with `{answer}`"
        )));
    };
    if prefix.chars().last().is_some_and(char::is_alphanumeric) {
        return Err(Error::TemplateIntegrity(format!(
            "`{answer}` ends `{sentence}` mid-word"
        )));
    }
    let question = prefix.trim_end();
    if question.is_empty() {
        return Err(Error::TemplateIntegrity(format!("`{sentence}` leaves an empty question")));
    }
    Ok(QuestionAnswer {
        question: question.to_string(),
        answer: answer.to_string(),
    })
}

/// Source family of a partition; decides which filters apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFamily {
    Atomic,
    Cwwv,
}

impl SourceFamily {
    pub fn overlap_mode(self) -> OverlapMode {
        match self {
            SourceFamily::Atomic => OverlapMode::KeywordTokens,
            SourceFamily::Cwwv => OverlapMode::AllTokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: SourceFamily,
    pub commonness_threshold: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(family: SourceFamily, seed: u64) -> Self {
        GenConfig {
            family,
            commonness_threshold: 2.5,
            seed,
        }
    }
}

/// Data files needed by generation.
#[derive(Debug, Clone)]
pub struct GenResources {
    pub templates: TemplateTable,
    pub names: NamePool,
    pub stopwords: Stopwords,
    /// Without a table the commonness filter is skipped.
    pub frequencies: Option<FrequencyTable>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialQa {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub relation: String,
    pub head_id: String,
    pub tail_id: String,
    pub source: String,
    #[serde(skip)]
    pub triple: TripleId,
    #[serde(skip)]
    pub agent_names: BTreeMap<String, String>,
}

pub fn item_id(triple: TripleId) -> String {
    format!("q{triple:07}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    #[serde(rename = "ne")]
    NamedEntity,
    Rare,
    Overlap,
    TemplateIntegrity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenReport {
    pub input: usize,
    pub emitted: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl GenReport {
    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn merge(&mut self, other: &GenReport) {
        self.input += other.input;
        self.emitted += other.emitted;
        for (&k, &v) in &other.dropped {
            *self.dropped.entry(k).or_default() += v;
        }
    }
}

fn question_is_clean(q: &str) -> bool {
    !q.contains('_') && !q.contains(HEAD) && !q.contains(TAIL) && !contains_agent_token(q)
}

/// Applies the family filters to one triple and lexicalizes the survivor.
pub fn generate_item(
    kg: &KnowledgeGraph,
    triple: TripleId,
    res: &GenResources,
    cfg: &GenConfig,
) -> Result<std::result::Result<PartialQa, DropReason>> {
    let t = kg.triple(triple);
    let head = strip_blanks(&kg.node(t.head).label);
    let tail = strip_blanks(&kg.node(t.tail).label);
    if cfg.family == SourceFamily::Cwwv {
        if is_named_entity(&head) || is_named_entity(&tail) {
            return Ok(Err(DropReason::NamedEntity));
        }
        if let Some(freq) = &res.frequencies {
            let th = cfg.commonness_threshold;
            if !passes_commonness(&head, freq, th, &res.stopwords)
                || !passes_commonness(&tail, freq, th, &res.stopwords)
            {
                return Ok(Err(DropReason::Rare));
            }
        }
    }
    if has_keyword_overlap(&head, &tail, &res.stopwords, cfg.family.overlap_mode()) {
        return Ok(Err(DropReason::Overlap));
    }
    let mut rng = SeedPath::new(cfg.seed).with("lexicalize").with_u64(triple as u64).rng();
    let lex = lexicalize(kg, triple, &res.templates, &res.names, &mut rng)?;
    let qa = match make_question(&lex.sentence, &lex.answer) {
        Ok(qa) if question_is_clean(&qa.question) => qa,
        _ => return Ok(Err(DropReason::TemplateIntegrity)),
    };
    Ok(Ok(PartialQa {
        id: item_id(triple),
        question: qa.question,
        answer: qa.answer,
        relation: kg.relation_name(t.relation).to_string(),
        head_id: kg.node(t.head).id.clone(),
        tail_id: kg.node(t.tail).id.clone(),
        source: t.source.clone(),
        triple,
        agent_names: lex.agent_names,
    }))
}

/// Generates one item per surviving triple of `partition`, in partition order.
pub fn generate_items(
    partition: &Partition,
    kg: &KnowledgeGraph,
    res: &GenResources,
    cfg: &GenConfig,
) -> Result<(Vec<PartialQa>, GenReport)> {
    let outcomes: Vec<_> = partition
        .triple_ids
        .par_iter()
        .map(|&id| generate_item(kg, id, res, cfg))
        .collect::<Result<_>>()?;
    let mut report = GenReport {
        input: partition.len(),
        ..Default::default()
    };
    let mut items = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(item) => items.push(item),
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }
    report.emitted = items.len();
    Ok((items, report))
}
