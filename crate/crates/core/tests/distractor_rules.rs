mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{brute_force_violations, count_violations, dense_kg, is_greedy_optimal, random_embeddings, synthetic_templates};
use kgqa_core::data;
use kgqa_core::distractor::{
    distract_items, rule_violations, sample_adv, sample_random, DistractorCandidate, PoolBuilder, Rule, Strategy,
    StrategyConfig,
};
use kgqa_core::kg::Partition;
use kgqa_core::kg::SplitName;
use kgqa_core::qa::{generate_items, GenConfig, GenResources, PartialQa, SourceFamily};
use kgqa_core::seed::SeedPath;
use kgqa_core::text::Stopwords;
use rand::seq::SliceRandom;

fn resources(relations: usize) -> GenResources {
    GenResources {
        templates: synthetic_templates(relations),
        names: data::names().unwrap(),
        stopwords: data::stopwords().unwrap(),
        frequencies: None,
    }
}

fn all(kg: &kgqa_core::kg::KnowledgeGraph) -> Partition {
    Partition::new(SplitName::Train, (0..kg.len()).collect())
}

#[test]
fn generated_distractors_never_violate_a_rule() {
    for seed in [1, 2, 3] {
        let kg = dense_kg(500, 3, seed);
        let res = resources(3);
        let (partials, _) = generate_items(&all(&kg), &kg, &res, &GenConfig::new(SourceFamily::Cwwv, seed)).unwrap();
        let builder = PoolBuilder::new(&kg, &res.stopwords, &res.names);
        let cfg = StrategyConfig::new(Strategy::Random, 1.0, seed);
        let (items, report) = distract_items(&builder, &partials, &cfg, None).unwrap();
        assert!(items.len() > 300, "{report:?}");
        assert_eq!(count_violations(&kg, &items, &res.stopwords), 0);
    }
}

#[test]
fn pools_contain_every_compliant_candidate_when_uncapped() {
    let kg = dense_kg(300, 2, 9);
    let res = resources(2);
    let (partials, _) = generate_items(&all(&kg), &kg, &res, &GenConfig::new(SourceFamily::Cwwv, 9)).unwrap();
    let builder = PoolBuilder::new(&kg, &res.stopwords, &res.names);
    for item in partials.iter().take(40) {
        let pool = builder.build_pool(item, None, &mut SeedPath::new(1).rng());
        let got: BTreeSet<String> = pool.iter().map(|c| c.text.clone()).collect();
        let expected: BTreeSet<String> = (0..kg.len())
            .filter(|&c| brute_force_violations(&kg, item.triple, c, &res.stopwords).is_empty())
            .map(|c| kg.node(kg.triple(c).tail).label.clone())
            .filter(|t| *t != item.answer)
            .collect();
        assert_eq!(got, expected, "{}", item.id);
    }
}

#[test]
fn rule_attribution_matches_brute_force() {
    let kg = dense_kg(200, 2, 4);
    let sw = data::stopwords().unwrap();
    for q in 0..50 {
        for c in 0..kg.len() {
            let fast: BTreeSet<u8> = rule_violations(&kg, q, c, &sw).into_iter().map(|r| r as u8).collect();
            let slow = brute_force_violations(&kg, q, c, &sw);
            if slow.contains(&1) {
                assert_eq!(fast, BTreeSet::from([1]));
            } else {
                assert_eq!(fast, slow, "q {q} c {c}");
            }
        }
    }
}

fn worked_example_item() -> (kgqa_core::kg::KnowledgeGraph, PartialQa, Stopwords) {
    let kg = data::worked_example_kg().unwrap();
    let res = GenResources {
        templates: data::templates().unwrap(),
        names: data::names().unwrap(),
        stopwords: data::stopwords().unwrap(),
        frequencies: None,
    };
    let (items, _) = generate_items(&all(&kg), &kg, &res, &GenConfig::new(SourceFamily::Cwwv, 0)).unwrap();
    let item = items.into_iter().find(|i| i.answer == "being healthier").unwrap();
    (kg, item, res.stopwords)
}

#[test]
fn worked_example_walkthrough() {
    let (kg, item, sw) = worked_example_item();
    assert_eq!(item.question, "losing weight is for");
    let by_text: BTreeMap<String, usize> = (0..kg.len())
        .map(|i| {
            let t = kg.triple(i);
            (format!("{}|{}", kg.node(t.head).label, kg.node(t.tail).label), i)
        })
        .collect();
    let rules = |key: &str| rule_violations(&kg, item.triple, by_text[key], &sw);
    assert_eq!(rules("gaining weight|change appearance"), vec![Rule::SameRelation]);
    assert_eq!(rules("losing weight|feeling better"), vec![Rule::HeadOverlap, Rule::AnswerSet]);
    assert_eq!(rules("relaxing|feeling better"), vec![Rule::AnswerSet]);
    assert!(rules("microcontroller|embedded software").is_empty());

    let names = data::names().unwrap();
    let builder = PoolBuilder::new(&kg, &sw, &names);
    let pool = builder.build_pool(&item, Some(100), &mut SeedPath::new(3).rng());
    let texts: BTreeSet<&str> = pool.iter().map(|c| c.text.as_str()).collect();
    assert_eq!(texts, BTreeSet::from(["buying things in store", "embedded software"]));
}

fn cand(i: usize) -> DistractorCandidate {
    DistractorCandidate {
        tail_id: format!("n{i:03}"),
        text: format!("option {i}"),
        origin_head_id: format!("h{i}"),
        source_triple: i,
    }
}

#[test]
fn random_sampling_is_uniform() {
    let pool: Vec<DistractorCandidate> = (0..100).map(cand).collect();
    let mut counts = vec![0usize; 100];
    let runs = 10_000;
    for seed in 0..runs {
        let picked = sample_random(&pool, 2, &mut SeedPath::new(seed).with("uniformity").rng()).unwrap();
        assert_ne!(picked[0].tail_id, picked[1].tail_id);
        for c in picked {
            counts[c.source_triple] += 1;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        let f = c as f64 / runs as f64;
        assert!((f - 0.02).abs() <= 0.005, "candidate {i}: {f}");
    }
}

#[test]
fn adversarial_choice_is_bounded_and_optimal() {
    let mut rng = SeedPath::new(5).rng();
    for trial in 0..200 {
        let pool: Vec<DistractorCandidate> = (0..30).map(cand).collect();
        let mut emb = kgqa_core::embedding::EmbeddingTable::new(6).unwrap();
        for c in &pool {
            let v: Vec<f32> = (0..6).map(|_| rand::Rng::gen_range(&mut rng, -1.0f32..1.0)).collect();
            emb.insert(c.tail_id.clone(), v).unwrap();
        }
        let reference: Vec<f32> = (0..6).map(|_| rand::Rng::gen_range(&mut rng, -1.0f32..1.0)).collect();
        for bound in [0.4, 0.6] {
            match sample_adv(&pool, 2, &reference, bound, &emb) {
                Ok(chosen) => {
                    assert!(is_greedy_optimal(&pool, &chosen, &reference, bound, &emb), "trial {trial}");
                    let mut shuffled = pool.clone();
                    shuffled.shuffle(&mut rng);
                    assert_eq!(sample_adv(&shuffled, 2, &reference, bound, &emb).unwrap(), chosen);
                }
                Err(kgqa_core::Error::InsufficientDistractors { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn adversarial_items_end_to_end() {
    let kg = common::synthetic_kg(3000, 4, 11);
    let res = resources(4);
    let (partials, _) = generate_items(&all(&kg), &kg, &res, &GenConfig::new(SourceFamily::Cwwv, 11)).unwrap();
    let emb = random_embeddings(&kg, 8, 11);
    let builder = PoolBuilder::new(&kg, &res.stopwords, &res.names);
    for (strategy, bound) in [(Strategy::AdvAnswer, 0.4), (Strategy::AdvQuestion, 0.6)] {
        let cfg = StrategyConfig::new(strategy, bound, 11);
        let (items, _) = distract_items(&builder, &partials[..500], &cfg, Some(&emb)).unwrap();
        assert!(items.len() > 400);
        for it in &items {
            let p = it.partial.as_ref().unwrap();
            let reference = emb.get(if strategy == Strategy::AdvAnswer { &p.tail_id } else { &p.head_id }).unwrap();
            let pool = builder.build_pool(p, cfg.pool_cap, &mut SeedPath::new(11).with("distractor").with_u64(p.triple as u64).with("pool").rng());
            assert!(is_greedy_optimal(&pool, &it.distractors, reference, bound, &emb), "{}", it.id);
        }
    }
}

#[test]
fn missing_embeddings_fail_fast() {
    let (kg, item, sw) = worked_example_item();
    let names = data::names().unwrap();
    let builder = PoolBuilder::new(&kg, &sw, &names);
    let cfg = StrategyConfig::new(Strategy::AdvAnswer, 0.4, 1);
    assert!(matches!(
        distract_items(&builder, &[item], &cfg, None),
        Err(kgqa_core::Error::Config(_))
    ));
}
