//! Bundled default resources and fixtures.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::kg::{parse_edges, read_relation_list, KnowledgeGraph, ParseOptions};
use crate::qa::{FrequencyTable, NamePool, TemplateTable};
use crate::scoring::ConversionTable;
use crate::text::Stopwords;

pub const TEMPLATES_JSON: &str = include_str!("../../../data/templates.json");
pub const CONVERSIONS_JSON: &str = include_str!("../../../data/conversions.json");
pub const STOPWORDS_TXT: &str = include_str!("../../../data/stopwords.txt");
pub const NAMES_TXT: &str = include_str!("../../../data/names.txt");
pub const RELATIONS_TXT: &str = include_str!("../../../data/relations.txt");
pub const FREQUENCIES_TSV: &str = include_str!("../../../data/frequencies.tsv");
/// 40 CWWV-style triples over five relations.
pub const MINI_KG_TSV: &str = include_str!("../../../data/mini_kg.tsv");
/// The distractor-rule example graph.
pub const WORKED_EXAMPLE_TSV: &str = include_str!("../../../data/worked_example.tsv");
pub const ATOMIC_MINI_TSV: &str = include_str!("../../../data/atomic_mini.tsv");
pub const ATOMIC_SPLITS_TSV: &str = include_str!("../../../data/atomic_splits.tsv");

pub fn templates() -> Result<TemplateTable> {
    TemplateTable::read_json(TEMPLATES_JSON.as_bytes())
}

pub fn conversions() -> Result<ConversionTable> {
    ConversionTable::read_json(CONVERSIONS_JSON.as_bytes())
}

pub fn stopwords() -> Result<Stopwords> {
    Stopwords::read(STOPWORDS_TXT.as_bytes())
}

pub fn names() -> Result<NamePool> {
    NamePool::read(NAMES_TXT.as_bytes())
}

pub fn relations() -> Result<BTreeSet<String>> {
    read_relation_list(RELATIONS_TXT.as_bytes())
}

pub fn frequencies() -> Result<FrequencyTable> {
    FrequencyTable::read(FREQUENCIES_TSV.as_bytes())
}

fn graph(text: &str) -> Result<KnowledgeGraph> {
    Ok(parse_edges(text.as_bytes(), &ParseOptions::default())?.0)
}

pub fn mini_kg() -> Result<KnowledgeGraph> {
    graph(MINI_KG_TSV)
}

pub fn worked_example_kg() -> Result<KnowledgeGraph> {
    graph(WORKED_EXAMPLE_TSV)
}

pub fn atomic_mini_kg() -> Result<KnowledgeGraph> {
    graph(ATOMIC_MINI_TSV)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_resources_load() {
        assert_eq!(templates().unwrap().len(), 23);
        assert!(!conversions().unwrap().is_empty());
        assert!(stopwords().unwrap().contains("the"));
        assert_eq!(names().unwrap().names().len(), 20);
        let rels = relations().unwrap();
        assert_eq!(rels.len(), 14);
        assert!(rels.contains("/r/Causes") && rels.contains("/r/HasPrerequisite"));
        assert_eq!(frequencies().unwrap().zipf("quokka"), 1.2);
    }

    #[test]
    fn bundled_graphs_parse() {
        assert_eq!(mini_kg().unwrap().len(), 40);
        assert_eq!(worked_example_kg().unwrap().len(), 6);
        assert_eq!(atomic_mini_kg().unwrap().len(), 12);
        let splits = crate::kg::read_split_file(ATOMIC_SPLITS_TSV.as_bytes()).unwrap();
        assert_eq!(splits.len(), 6);
    }

    #[test]
    fn every_template_relation_is_renderable() {
        let t = templates().unwrap();
        for rel in relations().unwrap() {
            assert!(t.get(&rel).is_some(), "{rel}");
        }
    }
}
