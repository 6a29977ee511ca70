//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kgqa_core::aflite::{train_or_constant, AfliteConfig, ClassifierConfig, FeaturizedSample};
use kgqa_core::distractor::{DistractorCandidate, QaItem};
use kgqa_core::kg::{KnowledgeGraph, TripleId};
use kgqa_core::scoring::EvalItem;
use kgqa_core::seed::SeedPath;
use kgqa_core::text::{strip_blanks, tokenize, Stopwords};
use rand::seq::SliceRandom;
use rand::Rng;

/// Removal record of one outer iteration: (train ids, dev ids).
pub type OracleIteration = (Vec<String>, Vec<String>);

/// Textbook transcription of the filtering loop: per-sample prediction
/// lists, float predictabilities, explicit removal from sample vectors.
pub fn aflite_oracle(
    trn: &[FeaturizedSample],
    dev: &[FeaturizedSample],
    cfg: &AfliteConfig,
) -> (Vec<String>, Vec<String>, Vec<OracleIteration>) {
    let n_classes = trn.iter().chain(dev).map(|s| s.label + 1).max().unwrap_or(0).max(2);
    let mut trn: Vec<FeaturizedSample> = trn.to_vec();
    let mut dev: Vec<FeaturizedSample> = dev.to_vec();
    let mut log = Vec::new();
    let mut iteration = 0;
    while trn.len() > cfg.target_size {
        let mut p: BTreeMap<String, Vec<bool>> = BTreeMap::new();
        for member in 0..cfg.ensemble_size {
            let mut shuffled = trn.clone();
            shuffled.shuffle(&mut cfg.partition_seed(iteration, member).rng());
            let u: Vec<&FeaturizedSample> = shuffled[..cfg.target_size].iter().collect();
            let v = &shuffled[cfg.target_size..];
            let clf = train_or_constant(&u, n_classes, &cfg.classifier, &mut cfg.classifier_seed(member).rng()).unwrap();
            for s in v.iter().chain(&dev) {
                let hit = clf.predict(&s.features).unwrap() == s.label;
                p.entry(s.id.clone()).or_default().push(hit);
            }
        }
        let acc = |id: &str| -> Option<f64> {
            p.get(id).map(|v| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64)
        };
        let pick = |set: &[FeaturizedSample], k: usize| -> Vec<String> {
            let mut q: Vec<(f64, String)> = set
                .iter()
                .filter_map(|s| acc(&s.id).filter(|&a| a > cfg.threshold).map(|a| (a, s.id.clone())))
                .collect();
            q.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            q.into_iter().take(k).map(|(_, id)| id).collect()
        };
        let s1 = pick(&trn, cfg.cutoff_train);
        let s2 = pick(&dev, cfg.cutoff_dev);
        trn.retain(|s| !s1.contains(&s.id));
        dev.retain(|s| !s2.contains(&s.id));
        let stop = s1.len() < cfg.cutoff_train;
        log.push((s1, s2));
        iteration += 1;
        if stop {
            break;
        }
    }
    (
        trn.into_iter().map(|s| s.id).collect(),
        dev.into_iter().map(|s| s.id).collect(),
        log,
    )
}

/// Random small AFLite instance (|trn| ≤ 60).
pub fn random_aflite_instance(seed: u64) -> (Vec<FeaturizedSample>, Vec<FeaturizedSample>, AfliteConfig) {
    let mut rng = SeedPath::new(seed).with("instance").rng();
    let n_trn = rng.gen_range(8..=60);
    let n_dev = rng.gen_range(0..=20);
    let dim = rng.gen_range(2..=5);
    let n_classes = rng.gen_range(2..=3);
    let sample = |prefix: &str, i: usize, rng: &mut kgqa_core::seed::Rng| {
        let label = rng.gen_range(0..n_classes);
        let mut features: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // a partially predictive direction keeps accuracies spread out
        if rng.gen_bool(0.5) {
            features[label % dim] += 1.5;
        }
        FeaturizedSample {
            id: format!("{prefix}{i:03}"),
            features,
            label,
        }
    };
    let trn: Vec<_> = (0..n_trn).map(|i| sample("t", i, &mut rng)).collect();
    let dev: Vec<_> = (0..n_dev).map(|i| sample("d", i, &mut rng)).collect();
    let target = rng.gen_range(2..=(n_trn / 2).max(2));
    let cfg = AfliteConfig {
        ensemble_size: rng.gen_range(2..=8),
        threshold: [0.5, 0.6, 0.75][rng.gen_range(0..3)],
        cutoff_train: rng.gen_range(1..=5),
        cutoff_dev: rng.gen_range(0..=3),
        target_size: target,
        seed,
        classifier: ClassifierConfig {
            learning_rate: 0.2,
            epochs: 10,
            l2: 1e-4,
            batch_size: 8,
        },
    };
    (trn, dev, cfg)
}

/// 40 binary-labelled samples at shuffled positions. Eight are zero except
/// for a spurious feature equal to ±3 by label (zero on all other samples).
/// The other 32 form 16 pairs sharing identical random features with
/// opposite labels, so a classifier that fits its training part mispredicts
/// any held-out sample whose twin it saw.
pub fn planted_fixture(seed: u64) -> (Vec<FeaturizedSample>, BTreeSet<String>) {
    const NOISE_DIM: usize = 16;
    let mut rng = SeedPath::new(seed).with("planted").rng();
    let mut rows: Vec<(Vec<f64>, usize, bool)> = Vec::new();
    for i in 0..8 {
        let label = i % 2;
        let mut f = vec![0.0; NOISE_DIM];
        f.push(if label == 1 { 3.0 } else { -3.0 });
        rows.push((f, label, true));
    }
    for _ in 0..16 {
        let mut f: Vec<f64> = (0..NOISE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        f.push(0.0);
        rows.push((f.clone(), 0, false));
        rows.push((f, 1, false));
    }
    rows.shuffle(&mut rng);
    let mut planted = BTreeSet::new();
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (features, label, spurious))| {
            let id = format!("s{i:02}");
            if spurious {
                planted.insert(id.clone());
            }
            FeaturizedSample { id, features, label }
        })
        .collect();
    (samples, planted)
}

/// N = 8 and τ = 0.75. k₁ exceeds the planted count so that one iteration
/// can take all of them before any is left without a planted sibling in
/// the training part.
pub fn planted_config(seed: u64) -> AfliteConfig {
    AfliteConfig {
        ensemble_size: 8,
        threshold: 0.75,
        cutoff_train: 10,
        cutoff_dev: 0,
        target_size: 16,
        seed,
        classifier: ClassifierConfig {
            learning_rate: 0.5,
            epochs: 100,
            l2: 1e-4,
            batch_size: 32,
        },
    }
}

/// Graph with `n` triples over `relations` relations. Heads and tails are
/// drawn from disjoint synthetic vocabularies, so no head/tail overlap.
pub fn synthetic_kg(n: usize, relations: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = SeedPath::new(seed).with("synthetic-kg").rng();
    let head_vocab = (n / 4).max(50);
    let tail_vocab = (n / 8).max(30);
    let mut kg = KnowledgeGraph::default();
    while kg.len() < n {
        let h = format!("hw{} hv{}", rng.gen_range(0..head_vocab), rng.gen_range(0..head_vocab));
        let t = format!("tw{} tv{}", rng.gen_range(0..tail_vocab), rng.gen_range(0..tail_vocab));
        let rel = format!("/r/R{}", rng.gen_range(0..relations));
        let (hid, tid) = (h.replace(' ', "_"), t.replace(' ', "_"));
        kg.add_edge((&hid, &h), &rel, (&tid, &t), None, "SYN");
    }
    kg
}

pub fn synthetic_templates(relations: usize) -> kgqa_core::qa::TemplateTable {
    kgqa_core::qa::TemplateTable::from_pairs(
        (0..relations).map(|r| (format!("/r/R{r}"), format!("{{head}} relates by {r} to {{tail}}"))),
    )
    .unwrap()
}

/// Rule violations of one distractor found by scanning the raw triple list:
/// 1 = relation differs, 2 = shared non-stop head token, 3 = (h, r, t') is
/// an edge of the graph.
pub fn brute_force_violations(kg: &KnowledgeGraph, question: TripleId, candidate: TripleId, stopwords: &Stopwords) -> BTreeSet<u8> {
    let (q, c) = (kg.triple(question), kg.triple(candidate));
    let mut out = BTreeSet::new();
    if kg.relation_name(q.relation) != kg.relation_name(c.relation) {
        out.insert(1);
    }
    let words = |n: usize| -> BTreeSet<String> {
        tokenize(&strip_blanks(&kg.node(n).label))
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .filter(|t| !is_agent(t))
            .collect()
    };
    if !words(q.head).is_disjoint(&words(c.head)) {
        out.insert(2);
    }
    let tail_id = &kg.node(c.tail).id;
    let answer = kg.triples().iter().any(|t| {
        t.head == q.head && t.relation == q.relation && &kg.node(t.tail).id == tail_id
    });
    if answer {
        out.insert(3);
    }
    out
}

fn is_agent(token: &str) -> bool {
    token.len() == 7 && token.starts_with("person") && token.as_bytes()[6].is_ascii_alphabetic()
}

/// Total violations over every distractor of every item.
pub fn count_violations(kg: &KnowledgeGraph, items: &[QaItem], stopwords: &Stopwords) -> usize {
    items
        .iter()
        .map(|it| {
            let q = it.partial.as_ref().expect("generated item keeps its source").triple;
            it.distractors
                .iter()
                .map(|d| brute_force_violations(kg, q, d.source_triple, stopwords).len())
                .sum::<usize>()
        })
        .sum()
}

/// 3-option items where the correct option, and only it, contains the
/// marker token; all other tokens are shared noise.
pub fn planted_token_items(n: usize, seed: u64, prefix: &str) -> Vec<EvalItem> {
    const WORDS: [&str; 12] = [
        "apple", "river", "stone", "cloud", "table", "green", "music", "paper", "light", "chair", "ocean", "bread",
    ];
    let mut rng = SeedPath::new(seed).with("planted-token").rng();
    (0..n)
        .map(|i| {
            let pick = |rng: &mut kgqa_core::seed::Rng| WORDS[rng.gen_range(0..WORDS.len())];
            let question = format!("{} {} {}", pick(&mut rng), pick(&mut rng), pick(&mut rng));
            let gold = rng.gen_range(0..3);
            let options = (0..3)
                .map(|o| {
                    if o == gold {
                        format!("{} zebra", pick(&mut rng))
                    } else {
                        format!("{} {}", pick(&mut rng), pick(&mut rng))
                    }
                })
                .collect();
            EvalItem {
                id: format!("{prefix}{i:05}"),
                context: None,
                question,
                options,
                answer_index: gold,
            }
        })
        .collect()
}

/// Graph with heavy head-word sharing and repeated (head, relation) pairs,
/// so all three pool rules fire often. Heads read "<w> of <w>".
pub fn dense_kg(n: usize, relations: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = SeedPath::new(seed).with("dense-kg").rng();
    let mut kg = KnowledgeGraph::default();
    while kg.len() < n {
        let h = format!("hw{} of hv{}", rng.gen_range(0..12), rng.gen_range(0..12));
        let t = format!("tw{} tv{}", rng.gen_range(0..15), rng.gen_range(0..15));
        let rel = format!("/r/R{}", rng.gen_range(0..relations));
        let (hid, tid) = (h.replace(' ', "_"), t.replace(' ', "_"));
        kg.add_edge((&hid, &h), &rel, (&tid, &t), None, "SYN");
    }
    kg
}

/// Random unit-free vectors for every node of `kg`.
pub fn random_embeddings(kg: &KnowledgeGraph, dim: usize, seed: u64) -> kgqa_core::embedding::EmbeddingTable {
    let mut rng = SeedPath::new(seed).with("embeddings").rng();
    let mut table = kgqa_core::embedding::EmbeddingTable::new(dim).unwrap();
    for node in kg.nodes() {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        table.insert(node.id.clone(), v).unwrap();
    }
    table
}

/// Cosine similarity written out directly.
pub fn naive_cosine(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Exhaustive check: the chosen set is the k best admissible candidates.
pub fn is_greedy_optimal(
    pool: &[DistractorCandidate],
    chosen: &[DistractorCandidate],
    reference: &[f32],
    bound: f64,
    emb: &kgqa_core::embedding::EmbeddingTable,
) -> bool {
    let sim = |c: &DistractorCandidate| naive_cosine(emb.get(&c.tail_id).unwrap(), reference);
    let chosen_ids: BTreeSet<&str> = chosen.iter().map(|c| c.tail_id.as_str()).collect();
    if chosen.iter().any(|c| sim(c) >= bound) {
        return false;
    }
    let worst_chosen = chosen.iter().map(sim).fold(f64::INFINITY, f64::min);
    pool.iter()
        .filter(|c| !chosen_ids.contains(c.tail_id.as_str()))
        .all(|c| {
            let s = sim(c);
            s >= bound || s <= worst_chosen + 1e-12
        })
}
