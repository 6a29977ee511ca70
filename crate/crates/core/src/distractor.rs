//! Distractor pools and the sampling strategies.
//!
//! A pool holds tails of same-relation triples whose head shares no
//! non-stop word with the question head and which are not themselves a
//! correct answer for the question's (head, relation). Strategies then pick
//! `k` options from the pool: uniformly (`random`, `adv_filter`) or the most
//! similar ones under a cosine upper bound (`adv_answer`, `adv_question`).

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, TripleId};
use crate::qa::{NamePool, PartialQa};
use crate::seed::{Rng, SeedPath};
use crate::text::{
    agent_tokens, contains_agent_token, signatures_intersect, strip_blanks, substitute_agents, token_signature,
    OverlapMode, Stopwords,
};

/// Relation lists up to this size are scanned exhaustively in shuffled order;
/// larger ones are probed at random positions.
const FULL_SCAN_LIMIT: usize = 4096;
const PROBES_PER_SLOT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    AdvAnswer,
    AdvQuestion,
    AdvFilter,
}

impl Strategy {
    pub fn is_adversarial(self) -> bool {
        matches!(self, Strategy::AdvAnswer | Strategy::AdvQuestion)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::AdvAnswer => "adv_answer",
            Strategy::AdvQuestion => "adv_question",
            Strategy::AdvFilter => "adv_filter",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "random" => Ok(Strategy::Random),
            "adv_answer" => Ok(Strategy::AdvAnswer),
            "adv_question" => Ok(Strategy::AdvQuestion),
            "adv_filter" => Ok(Strategy::AdvFilter),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub k: usize,
    pub strategy: Strategy,
    /// 0.4 for ATOMIC-derived sets, 0.6 for CWWV.
    pub sim_upper_bound: f64,
    pub pool_cap: Option<usize>,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, sim_upper_bound: f64, seed: u64) -> Self {
        StrategyConfig {
            k: 2,
            strategy,
            sim_upper_bound,
            pool_cap: Some(100),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.strategy.is_adversarial() && !(self.sim_upper_bound > 0.0 && self.sim_upper_bound <= 1.0) {
            return Err(Error::Config(format!(
                "similarity bound must lie in (0, 1], got {}",
                self.sim_upper_bound
            )));
        }
        if self.pool_cap == Some(0) {
            return Err(Error::Config("pool cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorCandidate {
    pub tail_id: String,
    /// Lexicalized tail with agent tokens replaced by the item's names.
    pub text: String,
    pub origin_head_id: String,
    /// The triple this candidate's tail came from.
    #[serde(skip)]
    pub source_triple: TripleId,
}

/// The three pool rules, numbered as in the generation procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Candidate triple must share the question's relation.
    SameRelation = 1,
    /// Candidate head must share no non-stop word with the question head.
    HeadOverlap = 2,
    /// Candidate tail must not be a correct answer for (head, relation).
    AnswerSet = 3,
}

/// Rules excluding `candidate` as a distractor source for `question`.
///
/// Candidates are only ever drawn from the question relation's index, so a
/// relation mismatch is reported alone: rules 2 and 3 are never consulted
/// for triples that rule 1 already keeps out of the pool.
pub fn rule_violations(
    kg: &KnowledgeGraph,
    question: TripleId,
    candidate: TripleId,
    stopwords: &Stopwords,
) -> Vec<Rule> {
    let (q, c) = (kg.triple(question), kg.triple(candidate));
    if q.relation != c.relation {
        return vec![Rule::SameRelation];
    }
    let mut out = Vec::new();
    let sig = |n: usize| token_signature(&strip_blanks(&kg.node(n).label), stopwords, OverlapMode::KeywordTokens);
    if signatures_intersect(&sig(q.head), &sig(c.head)) {
        out.push(Rule::HeadOverlap);
    }
    if kg.is_answer(q.head, q.relation, c.tail) {
        out.push(Rule::AnswerSet);
    }
    out
}

/// A pool member before materialization: the source triple and its text.
#[derive(Debug, Clone)]
struct Entry<'s> {
    triple: TripleId,
    text: Cow<'s, str>,
}

/// Texts already in a pool: plain labels by key, other texts by value
/// (or by key when they happen to equal some label).
#[derive(Default)]
struct SeenTexts<'s> {
    keys: FxHashSet<u32>,
    other: FxHashSet<Cow<'s, str>>,
}

impl<'s> SeenTexts<'s> {
    /// False if the text was already present. `key` is the label key when
    /// the text is known to be an unmodified label.
    fn insert(&mut self, builder: &PoolBuilder<'_>, text: Cow<'s, str>, key: Option<u32>) -> bool {
        match key.or_else(|| builder.key_of.get(text.as_ref()).copied()) {
            Some(k) => self.keys.insert(k),
            None => self.other.insert(text),
        }
    }
}

/// Precomputed per-node text and keyword signatures for fast pool building.
pub struct PoolBuilder<'a> {
    kg: &'a KnowledgeGraph,
    names: &'a NamePool,
    labels: Vec<String>,
    has_agents: Vec<bool>,
    /// Equal labels share a key, so duplicate texts are found without
    /// touching the strings.
    label_key: Vec<u32>,
    key_of: HashMap<String, u32>,
    /// Keyword signatures of all nodes, flattened; node `n` owns
    /// `sig_data[sig_start[n]..sig_start[n + 1]]`.
    sig_start: Vec<u32>,
    sig_data: Vec<u64>,
    /// `(head, tail)` per triple, aligned with the relation's triple list.
    rel_pairs: Vec<Vec<(u32, u32)>>,
}

impl<'a> PoolBuilder<'a> {
    pub fn new(kg: &'a KnowledgeGraph, stopwords: &Stopwords, names: &'a NamePool) -> Self {
        let labels: Vec<String> = kg.nodes().iter().map(|n| strip_blanks(&n.label)).collect();
        let has_agents = labels.iter().map(|l| contains_agent_token(l)).collect();
        let mut key_of: HashMap<String, u32> = HashMap::new();
        let label_key = labels
            .iter()
            .map(|l| {
                let next = key_of.len() as u32;
                *key_of.entry(l.clone()).or_insert(next)
            })
            .collect();
        let mut sig_start = Vec::with_capacity(labels.len() + 1);
        let mut sig_data = Vec::new();
        for l in &labels {
            sig_start.push(sig_data.len() as u32);
            sig_data.extend(token_signature(l, stopwords, OverlapMode::KeywordTokens));
        }
        sig_start.push(sig_data.len() as u32);
        let rel_pairs = (0..kg.relations().len())
            .map(|r| {
                kg.triples_with_relation(r)
                    .iter()
                    .map(|&t| {
                        let t = kg.triple(t);
                        (t.head as u32, t.tail as u32)
                    })
                    .collect()
            })
            .collect();
        PoolBuilder {
            kg,
            names,
            labels,
            has_agents,
            label_key,
            key_of,
            sig_start,
            sig_data,
            rel_pairs,
        }
    }

    pub fn kg(&self) -> &KnowledgeGraph {
        self.kg
    }

    fn signature(&self, node: usize) -> &[u64] {
        &self.sig_data[self.sig_start[node] as usize..self.sig_start[node + 1] as usize]
    }

    /// Tail text with agents replaced: by the item's names where the item
    /// has one, otherwise by the first pool names the item does not use.
    fn candidate_text(&self, tail: usize, agent_names: &BTreeMap<String, String>) -> Cow<'_, str> {
        let label = &self.labels[tail];
        if !self.has_agents[tail] {
            return Cow::Borrowed(label);
        }
        let agents = agent_tokens(label);
        if agents.iter().all(|a| agent_names.contains_key(a)) {
            return Cow::Owned(substitute_agents(label, agent_names));
        }
        let mut map = agent_names.clone();
        let used: HashSet<String> = map.values().cloned().collect();
        let mut spare = self.names.names().iter().filter(|n| !used.contains(*n));
        for a in agents {
            if let std::collections::btree_map::Entry::Vacant(slot) = map.entry(a) {
                if let Some(n) = spare.next() {
                    slot.insert(n.clone());
                }
            }
        }
        Cow::Owned(substitute_agents(label, &map))
    }

    fn materialize(&self, e: &Entry<'_>) -> DistractorCandidate {
        let t = self.kg.triple(e.triple);
        DistractorCandidate {
            tail_id: self.kg.node(t.tail).id.clone(),
            text: e.text.clone().into_owned(),
            origin_head_id: self.kg.node(t.head).id.clone(),
            source_triple: e.triple,
        }
    }

    fn collect<'s>(&'s self, item: &'s PartialQa, cap: Option<usize>, rng: &mut Rng) -> Vec<Entry<'s>> {
        let q = self.kg.triple(item.triple);
        let ids = self.kg.triples_with_relation(q.relation);
        let pairs = &self.rel_pairs[q.relation];
        let answers = self.kg.answer_set(q.head, q.relation);
        let cap = cap.unwrap_or(usize::MAX);
        let head_sig = self.signature(q.head);
        let mut seen = SeenTexts::default();
        seen.insert(self, Cow::Borrowed(item.answer.as_str()), None);
        let mut pool = Vec::new();

        let mut consider = |pos: usize, pool: &mut Vec<Entry<'s>>| {
            let (head, tail) = (pairs[pos].0 as usize, pairs[pos].1 as usize);
            if signatures_intersect(head_sig, self.signature(head)) || answers.binary_search(&tail).is_ok() {
                return;
            }
            let key = (!self.has_agents[tail]).then(|| self.label_key[tail]);
            let text = self.candidate_text(tail, &item.agent_names);
            if text.is_empty() || !seen.insert(self, text.clone(), key) {
                return;
            }
            pool.push(Entry { triple: ids[pos], text });
        };

        if cap == usize::MAX || ids.len() <= FULL_SCAN_LIMIT {
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(rng);
            for pos in order {
                if pool.len() >= cap {
                    break;
                }
                consider(pos, &mut pool);
            }
        } else {
            let mut probed = FxHashSet::default();
            let budget = cap.saturating_mul(PROBES_PER_SLOT);
            for _ in 0..budget {
                if pool.len() >= cap {
                    break;
                }
                let pos = rng.gen_range(0..ids.len());
                if probed.insert(pos) {
                    consider(pos, &mut pool);
                }
            }
        }
        pool
    }

    /// Rule-compliant candidates for `item`, sampled in seeded order, at most
    /// `cap` of them, with distinct texts that all differ from the answer.
    pub fn build_pool(&self, item: &PartialQa, cap: Option<usize>, rng: &mut Rng) -> Vec<DistractorCandidate> {
        self.collect(item, cap, rng).iter().map(|e| self.materialize(e)).collect()
    }
}

/// `k` distinct candidates, uniformly without replacement.
pub fn sample_random(pool: &[DistractorCandidate], k: usize, rng: &mut Rng) -> Result<Vec<DistractorCandidate>> {
    if pool.len() < k {
        return Err(Error::InsufficientDistractors {
            needed: k,
            available: pool.len(),
        });
    }
    Ok(index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Pool members with similarity to `reference` strictly below `bound`,
/// most similar first, ties by tail id.
pub fn rank_adversarial<'p>(
    pool: &'p [DistractorCandidate],
    reference: &[f32],
    bound: f64,
    embeddings: &EmbeddingTable,
) -> Result<Vec<(&'p DistractorCandidate, f64)>> {
    let mut scored = Vec::with_capacity(pool.len());
    for c in pool {
        let sim = cosine(embeddings.require(&c.tail_id)?, reference)?;
        if sim < bound {
            scored.push((c, sim));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.tail_id.cmp(&b.0.tail_id))
    });
    Ok(scored)
}

/// The `k` most similar candidates whose similarity stays under `bound`.
pub fn sample_adv(
    pool: &[DistractorCandidate],
    k: usize,
    reference: &[f32],
    bound: f64,
    embeddings: &EmbeddingTable,
) -> Result<Vec<DistractorCandidate>> {
    let ranked = rank_adversarial(pool, reference, bound, embeddings)?;
    if ranked.len() < k {
        return Err(Error::InsufficientDistractors {
            needed: k,
            available: ranked.len(),
        });
    }
    Ok(ranked.into_iter().take(k).map(|(c, _)| c.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub strategy: Strategy,
    pub relation: String,
    pub source: String,
    #[serde(skip)]
    pub partial: Option<PartialQa>,
    #[serde(skip)]
    pub distractors: Vec<DistractorCandidate>,
}

impl QaItem {
    pub fn answer(&self) -> &str {
        &self.options[self.answer_index]
    }
}

/// Shuffles the answer in among the distractors.
pub fn assemble_item(
    partial: PartialQa,
    distractors: Vec<DistractorCandidate>,
    strategy: Strategy,
    rng: &mut Rng,
) -> Result<QaItem> {
    let mut texts: Vec<&str> = Vec::with_capacity(distractors.len() + 1);
    texts.push(&partial.answer);
    for d in &distractors {
        if texts.contains(&d.text.as_str()) {
            return Err(Error::DuplicateOption(d.text.clone()));
        }
        texts.push(&d.text);
    }
    let mut order: Vec<usize> = (0..texts.len()).collect();
    order.shuffle(rng);
    let options = order.iter().map(|&i| texts[i].to_string()).collect();
    let answer_index = order.iter().position(|&i| i == 0).expect("answer is among the options");
    Ok(QaItem {
        id: partial.id.clone(),
        question: partial.question.clone(),
        options,
        answer_index,
        strategy,
        relation: partial.relation.clone(),
        source: partial.source.clone(),
        partial: Some(partial),
        distractors,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractReport {
    pub input: usize,
    pub emitted: usize,
    pub insufficient_distractors: usize,
}

/// Picks the item's distractors under `cfg`. `Ok(None)` means the pool could
/// not supply `k` options and the item is dropped.
pub fn distract_item(
    builder: &PoolBuilder<'_>,
    item: &PartialQa,
    cfg: &StrategyConfig,
    embeddings: Option<&EmbeddingTable>,
) -> Result<Option<QaItem>> {
    let seeds = SeedPath::new(cfg.seed).with("distractor").with_u64(item.triple as u64);
    let mut pool_rng = seeds.with("pool").rng();
    let chosen = match cfg.strategy {
        Strategy::Random | Strategy::AdvFilter => {
            // same draws as `sample_random` over the built pool, without
            // materializing the candidates that are not picked
            let entries = builder.collect(item, cfg.pool_cap, &mut pool_rng);
            if entries.len() < cfg.k {
                Err(Error::InsufficientDistractors {
                    needed: cfg.k,
                    available: entries.len(),
                })
            } else {
                Ok(index::sample(&mut seeds.with("sample").rng(), entries.len(), cfg.k)
                    .into_iter()
                    .map(|i| builder.materialize(&entries[i]))
                    .collect())
            }
        }
        Strategy::AdvAnswer | Strategy::AdvQuestion => {
            let emb = embeddings
                .ok_or_else(|| Error::Config(format!("strategy {} needs embeddings", cfg.strategy)))?;
            let reference = match cfg.strategy {
                Strategy::AdvAnswer => emb.require(&item.tail_id)?,
                _ => emb.require(&item.head_id)?,
            };
            let pool = builder.build_pool(item, cfg.pool_cap, &mut pool_rng);
            sample_adv(&pool, cfg.k, reference, cfg.sim_upper_bound, emb)
        }
    };
    let chosen = match chosen {
        Ok(c) => c,
        Err(Error::InsufficientDistractors { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    assemble_item(item.clone(), chosen, cfg.strategy, &mut seeds.with("shuffle").rng()).map(Some)
}

/// Runs [`distract_item`] over `items`, preserving input order.
pub fn distract_items(
    builder: &PoolBuilder<'_>,
    items: &[PartialQa],
    cfg: &StrategyConfig,
    embeddings: Option<&EmbeddingTable>,
) -> Result<(Vec<QaItem>, DistractReport)> {
    cfg.validate()?;
    let out: Vec<Option<QaItem>> = items
        .par_iter()
        .map(|it| distract_item(builder, it, cfg, embeddings))
        .collect::<Result<_>>()?;
    let mut report = DistractReport {
        input: items.len(),
        ..Default::default()
    };
    let done: Vec<QaItem> = out.into_iter().flatten().collect();
    report.emitted = done.len();
    report.insufficient_distractors = report.input - report.emitted;
    Ok((done, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str) -> DistractorCandidate {
        DistractorCandidate {
            tail_id: id.into(),
            text: format!("text {id}"),
            origin_head_id: "h".into(),
            source_triple: 0,
        }
    }

    /// Unit vectors at a chosen cosine to e1 = (1, 0).
    fn at_sim(s: f64) -> Vec<f32> {
        vec![s as f32, (1.0 - s * s).sqrt() as f32]
    }

    #[test]
    fn strategy_names() {
        assert_eq!("adv-answer".parse::<Strategy>().unwrap(), Strategy::AdvAnswer);
        assert_eq!("adv_filter".parse::<Strategy>().unwrap(), Strategy::AdvFilter);
        assert!("nope".parse::<Strategy>().is_err());
    }

    #[test]
    fn random_sampling_edge_cases() {
        let pool = vec![cand("a"), cand("b")];
        let mut rng = SeedPath::new(3).rng();
        let mut got: Vec<_> = sample_random(&pool, 2, &mut rng).unwrap().into_iter().map(|c| c.tail_id).collect();
        got.sort();
        assert_eq!(got, vec!["a", "b"]);
        assert!(matches!(
            sample_random(&pool, 3, &mut rng),
            Err(Error::InsufficientDistractors { needed: 3, available: 2 })
        ));
        let pool5: Vec<_> = ["a", "b", "c", "d", "e"].iter().map(|s| cand(s)).collect();
        let a = sample_random(&pool5, 2, &mut SeedPath::new(9).rng()).unwrap();
        let b = sample_random(&pool5, 2, &mut SeedPath::new(9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adversarial_sort_and_threshold() {
        let mut emb = EmbeddingTable::new(2).unwrap();
        for (id, s) in [("p70", 0.7), ("p55", 0.55), ("p30", 0.3), ("p10", 0.1)] {
            emb.insert(id, at_sim(s)).unwrap();
        }
        let pool: Vec<_> = ["p10", "p70", "p30", "p55"].iter().map(|s| cand(s)).collect();
        let reference = [1.0f32, 0.0];
        let got = sample_adv(&pool, 2, &reference, 0.6, &emb).unwrap();
        let ids: Vec<_> = got.iter().map(|c| c.tail_id.as_str()).collect();
        assert_eq!(ids, vec!["p55", "p30"]);

        let got = sample_adv(&pool, 2, &reference, 1.0, &emb).unwrap();
        assert_eq!(got[0].tail_id, "p70");

        assert!(matches!(
            sample_adv(&pool, 2, &reference, 0.05, &emb),
            Err(Error::InsufficientDistractors { .. })
        ));
        let missing = vec![cand("ghost")];
        assert!(matches!(
            sample_adv(&missing, 1, &reference, 0.5, &emb),
            Err(Error::MissingEmbedding(id)) if id == "ghost"
        ));
    }

    #[test]
    fn adversarial_ties_break_by_tail_id() {
        let mut emb = EmbeddingTable::new(2).unwrap();
        for id in ["b", "a", "c"] {
            emb.insert(id, at_sim(0.3)).unwrap();
        }
        let pool: Vec<_> = ["c", "b", "a"].iter().map(|s| cand(s)).collect();
        let got = sample_adv(&pool, 2, &[1.0, 0.0], 0.5, &emb).unwrap();
        assert_eq!(got.iter().map(|c| c.tail_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    }

    fn partial(answer: &str) -> PartialQa {
        PartialQa {
            id: "q1".into(),
            question: "Robin takes the fifth. As a result, Robin wanted to".into(),
            answer: answer.into(),
            relation: "at:xWant".into(),
            head_id: "h".into(),
            tail_id: "t".into(),
            source: "atomic".into(),
            triple: 0,
            agent_names: BTreeMap::new(),
        }
    }

    #[test]
    fn assemble_three_options() {
        let mut d1 = cand("x");
        d1.text = "go to the cinema".into();
        let mut d2 = cand("y");
        d2.text = "hear what they think".into();
        let mut rng = SeedPath::new(5).rng();
        let item = assemble_item(partial("withhold information"), vec![d1.clone(), d2.clone()], Strategy::Random, &mut rng).unwrap();
        assert_eq!(item.options.len(), 3);
        assert_eq!(item.answer(), "withhold information");
        let again = assemble_item(
            partial("withhold information"),
            vec![d1.clone(), d2],
            Strategy::Random,
            &mut SeedPath::new(5).rng(),
        )
        .unwrap();
        assert_eq!(item, again);

        let two = assemble_item(partial("withhold information"), vec![d1.clone()], Strategy::Random, &mut rng).unwrap();
        assert_eq!(two.options.len(), 2);
        assert!(two.answer_index < 2);

        let mut dup = cand("z");
        dup.text = "withhold information".into();
        assert!(matches!(
            assemble_item(partial("withhold information"), vec![dup], Strategy::Random, &mut rng),
            Err(Error::DuplicateOption(_))
        ));
        assert!(matches!(
            assemble_item(partial("a"), vec![d1.clone(), d1], Strategy::Random, &mut rng),
            Err(Error::DuplicateOption(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(StrategyConfig::new(Strategy::AdvAnswer, 0.4, 1).validate().is_ok());
        assert!(StrategyConfig::new(Strategy::AdvAnswer, 0.0, 1).validate().is_err());
        assert!(StrategyConfig::new(Strategy::AdvAnswer, 1.5, 1).validate().is_err());
        assert!(StrategyConfig::new(Strategy::Random, 0.0, 1).validate().is_ok());
    }
}
