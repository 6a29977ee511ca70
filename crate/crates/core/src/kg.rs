//! Knowledge-graph ingestion: edge-file parsing, relation filtering and the
//! train/dev/test partition schemes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedPath;
use crate::text::collapse_whitespace;

pub type TripleId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Surface text; may contain blanks (`___`) and agent tokens (`PersonX`).
    pub label: String,
    pub source: String,
}

/// One edge. `head`, `relation` and `tail` index into the owning graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub sentence: Option<String>,
    pub source: String,
}

/// Column names of an edge file. Files without a header are read
/// positionally in the order the fields are declared here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSpec {
    pub node1: String,
    pub relation: String,
    pub node2: String,
    pub node1_label: String,
    pub node2_label: String,
    pub sentence: Option<String>,
    pub source: Option<String>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            node1: "node1".into(),
            relation: "relation".into(),
            node2: "node2".into(),
            node1_label: "node1;label".into(),
            node2_label: "node2;label".into(),
            sentence: Some("sentence".into()),
            source: Some("source".into()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ColumnPositions {
    node1: usize,
    relation: usize,
    node2: usize,
    node1_label: usize,
    node2_label: usize,
    sentence: Option<usize>,
    source: Option<usize>,
}

impl ColumnSpec {
    fn positional(&self) -> ColumnPositions {
        let mut next = 5;
        let mut take = |present: bool| {
            present.then(|| {
                next += 1;
                next - 1
            })
        };
        let sentence = take(self.sentence.is_some());
        let source = take(self.source.is_some());
        ColumnPositions {
            node1: 0,
            relation: 1,
            node2: 2,
            node1_label: 3,
            node2_label: 4,
            sentence,
            source,
        }
    }

    /// `Some` when `fields` is a header row naming every required column.
    fn positions_in_header(&self, fields: &[&str]) -> Option<ColumnPositions> {
        let find = |name: &str| fields.iter().position(|f| f.trim() == name);
        Some(ColumnPositions {
            node1: find(&self.node1)?,
            relation: find(&self.relation)?,
            node2: find(&self.node2)?,
            node1_label: find(&self.node1_label)?,
            node2_label: find(&self.node2_label)?,
            sentence: self.sentence.as_deref().and_then(find),
            source: self.source.as_deref().and_then(find),
        })
    }

    fn header_line(&self) -> String {
        let mut cols = vec![
            self.node1.as_str(),
            self.relation.as_str(),
            self.node2.as_str(),
            self.node1_label.as_str(),
            self.node2_label.as_str(),
        ];
        cols.extend(self.sentence.as_deref());
        cols.extend(self.source.as_deref());
        cols.join("\t")
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub columns: ColumnSpec,
    /// When set, rows whose relation is outside the vocabulary are skipped.
    pub vocabulary: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub out_of_vocabulary: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    node_index: HashMap<String, usize>,
    relations: Vec<String>,
    relation_index: HashMap<String, usize>,
    triples: Vec<Triple>,
    by_relation: Vec<Vec<TripleId>>,
    answer_sets: HashMap<(usize, usize), Vec<usize>>,
}

/// First alternative of a `|`-separated label list, whitespace-normalized.
fn normalize_label(raw: &str) -> String {
    collapse_whitespace(raw.split('|').next().unwrap_or(""))
}

impl KnowledgeGraph {
    fn intern_node(&mut self, id: &str, label: String, source: &str) -> usize {
        if let Some(&i) = self.node_index.get(id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(Node {
            id: id.to_string(),
            label,
            source: source.to_string(),
        });
        self.node_index.insert(id.to_string(), i);
        i
    }

    fn intern_relation(&mut self, rel: &str) -> usize {
        if let Some(&i) = self.relation_index.get(rel) {
            return i;
        }
        let i = self.relations.len();
        self.relations.push(rel.to_string());
        self.relation_index.insert(rel.to_string(), i);
        self.by_relation.push(Vec::new());
        i
    }

    /// Adds one edge. Returns `false` (and changes nothing) when the edge
    /// violates a graph invariant.
    pub fn add_edge(
        &mut self,
        head: (&str, &str),
        relation: &str,
        tail: (&str, &str),
        sentence: Option<&str>,
        source: &str,
    ) -> bool {
        let (head_id, tail_id, relation) = (head.0.trim(), tail.0.trim(), relation.trim());
        let (head_label, tail_label) = (normalize_label(head.1), normalize_label(tail.1));
        if head_id.is_empty()
            || tail_id.is_empty()
            || relation.is_empty()
            || head_id == tail_id
            || head_label.is_empty()
            || tail_label.is_empty()
        {
            return false;
        }
        let source = source.trim();
        let h = self.intern_node(head_id, head_label, source);
        let t = self.intern_node(tail_id, tail_label, source);
        let r = self.intern_relation(relation);
        let id = self.triples.len();
        self.triples.push(Triple {
            head: h,
            relation: r,
            tail: t,
            sentence: sentence.map(collapse_whitespace).filter(|s| !s.is_empty()),
            source: source.to_string(),
        });
        self.by_relation[r].push(id);
        let tails = self.answer_sets.entry((h, r)).or_default();
        if let Err(pos) = tails.binary_search(&t) {
            tails.insert(pos, t);
        }
        true
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn node_by_id(&self, id: &str) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_idx(&self, rel: &str) -> Option<usize> {
        self.relation_index.get(rel.trim()).copied()
    }

    pub fn relation_name(&self, idx: usize) -> &str {
        &self.relations[idx]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, id: TripleId) -> &Triple {
        &self.triples[id]
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triple ids carrying relation index `rel`, in insertion order.
    pub fn triples_with_relation(&self, rel: usize) -> &[TripleId] {
        self.by_relation.get(rel).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn relation_counts(&self) -> Vec<(&str, usize)> {
        self.relations
            .iter()
            .zip(&self.by_relation)
            .map(|(r, ids)| (r.as_str(), ids.len()))
            .collect()
    }

    /// Sorted tail indices `t` such that `(head, rel, t)` is an edge.
    pub fn answer_set(&self, head: usize, rel: usize) -> &[usize] {
        self.answer_sets
            .get(&(head, rel))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_answer(&self, head: usize, rel: usize, tail: usize) -> bool {
        self.answer_set(head, rel).binary_search(&tail).is_ok()
    }

    /// Writes the graph as an edge TSV with a header row.
    pub fn write_edges<W: Write>(&self, mut out: W, columns: &ColumnSpec) -> Result<()> {
        writeln!(out, "{}", columns.header_line())?;
        for t in &self.triples {
            let (h, n) = (&self.nodes[t.head], &self.nodes[t.tail]);
            write!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                h.id, self.relations[t.relation], n.id, h.label, n.label
            )?;
            if columns.sentence.is_some() {
                write!(out, "\t{}", t.sentence.as_deref().unwrap_or(""))?;
            }
            if columns.source.is_some() {
                write!(out, "\t{}", t.source)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    fn subgraph(&self, ids: impl IntoIterator<Item = TripleId>) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::default();
        for id in ids {
            let t = &self.triples[id];
            let (h, n) = (&self.nodes[t.head], &self.nodes[t.tail]);
            kg.add_edge(
                (&h.id, &h.label),
                &self.relations[t.relation],
                (&n.id, &n.label),
                t.sentence.as_deref(),
                &t.source,
            );
        }
        kg
    }
}

/// Parses a tab-separated edge stream. Malformed rows are skipped and counted.
pub fn parse_edges<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<(KnowledgeGraph, ParseReport)> {
    let mut kg = KnowledgeGraph::default();
    let mut report = ParseReport::default();
    let mut positions: Option<ColumnPositions> = None;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let pos = match positions {
            Some(p) => p,
            None => {
                if let Some(p) = opts.columns.positions_in_header(&fields) {
                    positions = Some(p);
                    continue;
                }
                let p = opts.columns.positional();
                positions = Some(p);
                p
            }
        };
        report.rows += 1;
        let get = |i: usize| fields.get(i).copied();
        let required = (
            get(pos.node1),
            get(pos.relation),
            get(pos.node2),
            get(pos.node1_label),
            get(pos.node2_label),
        );
        let (Some(h), Some(r), Some(t), Some(hl), Some(tl)) = required else {
            report.malformed += 1;
            continue;
        };
        if let Some(vocab) = &opts.vocabulary {
            if !vocab.contains(r.trim()) {
                report.out_of_vocabulary += 1;
                continue;
            }
        }
        let sentence = pos.sentence.and_then(get);
        let source = pos.source.and_then(get).unwrap_or("");
        if kg.add_edge((h, hl), r, (t, tl), sentence, source) {
            report.accepted += 1;
        } else {
            report.malformed += 1;
        }
    }
    if kg.is_empty() {
        return Err(Error::EmptyInput {
            skipped: report.malformed + report.out_of_vocabulary,
        });
    }
    Ok((kg, report))
}

/// One relation id per line, `#` comments allowed.
pub fn read_relation_list<R: BufRead>(reader: R) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let rel = line.split('#').next().unwrap_or("").trim();
        if !rel.is_empty() {
            out.insert(rel.to_string());
        }
    }
    Ok(out)
}

/// Keeps exactly the triples whose relation is in `allowlist`.
pub fn filter_relations(kg: &KnowledgeGraph, allowlist: &BTreeSet<String>) -> Result<KnowledgeGraph> {
    if allowlist.is_empty() {
        return Err(Error::Config("relation allowlist is empty".into()));
    }
    let keep: Vec<bool> = kg.relations.iter().map(|r| allowlist.contains(r)).collect();
    Ok(kg.subgraph((0..kg.len()).filter(|&i| keep[kg.triples[i].relation])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split name `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub name: SplitName,
    pub triple_ids: Vec<TripleId>,
}

impl Partition {
    pub fn new(name: SplitName, triple_ids: Vec<TripleId>) -> Self {
        Partition { name, triple_ids }
    }

    pub fn len(&self) -> usize {
        self.triple_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triple_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CwwvSplit {
    pub train: Partition,
    pub dev: Partition,
}

/// Uniformly samples `round(dev_fraction * |triples|)` triples into dev.
pub fn partition_cwwv(kg: &KnowledgeGraph, dev_fraction: f64, seed: u64) -> Result<CwwvSplit> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    let n = kg.len();
    let dev_n = (dev_fraction * n as f64).round() as usize;
    let mut rng = SeedPath::new(seed).with("partition_cwwv").rng();
    let mut is_dev = vec![false; n];
    for i in index::sample(&mut rng, n, dev_n) {
        is_dev[i] = true;
    }
    let (dev, train): (Vec<_>, Vec<_>) = (0..n).partition(|&i| is_dev[i]);
    Ok(CwwvSplit {
        train: Partition::new(SplitName::Train, train),
        dev: Partition::new(SplitName::Dev, dev),
    })
}

/// What to do with triples whose head is absent from the split file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnmappedPolicy {
    #[default]
    Drop,
    Train,
}

pub type SplitMap = HashMap<String, SplitName>;

/// `head_id \t {train|dev|test}` per line.
pub fn read_split_file<R: BufRead>(reader: R) -> Result<SplitMap> {
    let mut map = SplitMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (head, split) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected `head_id<TAB>split`".into(),
        })?;
        let split: SplitName = split.parse().map_err(|e: Error| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        let head = head.trim().to_string();
        match map.get(&head) {
            Some(&prev) if prev != split => {
                return Err(Error::Config(format!(
                    "head `{head}` assigned to both {prev} and {split}"
                )))
            }
            _ => {
                map.insert(head, split);
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicSplit {
    pub train: Partition,
    pub dev: Partition,
    pub test: Partition,
    /// Triples with an unmapped head under [`UnmappedPolicy::Drop`].
    pub dropped: usize,
}

/// Routes each triple by its head's split, so no head spans two partitions.
pub fn partition_atomic(kg: &KnowledgeGraph, splits: &SplitMap, policy: UnmappedPolicy) -> AtomicSplit {
    let mut out = AtomicSplit {
        train: Partition::new(SplitName::Train, Vec::new()),
        dev: Partition::new(SplitName::Dev, Vec::new()),
        test: Partition::new(SplitName::Test, Vec::new()),
        dropped: 0,
    };
    for (id, t) in kg.triples.iter().enumerate() {
        let split = match (splits.get(&kg.nodes[t.head].id), policy) {
            (Some(&s), _) => s,
            (None, UnmappedPolicy::Train) => SplitName::Train,
            (None, UnmappedPolicy::Drop) => {
                out.dropped += 1;
                continue;
            }
        };
        match split {
            SplitName::Train => out.train.triple_ids.push(id),
            SplitName::Dev => out.dev.triple_ids.push(id),
            SplitName::Test => out.test.triple_ids.push(id),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "node1\trelation\tnode2\tnode1;label\tnode2;label\tsentence\tsource
/c/en/losing_weight\t/r/UsedFor\t/c/en/being_healthier\tlosing weight\tbeing healthier\t\tCN
/c/en/relaxing\t/r/UsedFor\t/c/en/feeling_better\trelaxing\tfeeling better\t\tCN
/c/en/gaining_weight\t/r/CausesDesire\t/c/en/change_appearance\tgaining weight\tchange appearance\t\tCN
";

    fn parse(s: &str) -> Result<(KnowledgeGraph, ParseReport)> {
        parse_edges(s.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn three_rows_three_triples() {
        let (kg, rep) = parse(FIXTURE).unwrap();
        assert_eq!(kg.len(), 3);
        assert_eq!(rep.accepted, 3);
        assert_eq!(rep.malformed, 0);
        let used_for = kg.relation_idx("/r/UsedFor").unwrap();
        let desire = kg.relation_idx("/r/CausesDesire").unwrap();
        assert_eq!(kg.triples_with_relation(used_for).len(), 2);
        assert_eq!(kg.triples_with_relation(desire).len(), 1);
        assert_eq!(kg.nodes().len(), 6);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(Error::EmptyInput { .. })));
        assert!(matches!(
            parse("node1\trelation\tnode2\tnode1;label\tnode2;label\n"),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn row_missing_columns_is_skipped() {
        let text = format!("{FIXTURE}/c/en/a\t/r/UsedFor\n");
        let (kg, rep) = parse(&text).unwrap();
        assert_eq!(kg.len(), 3);
        assert_eq!(rep.malformed, 1);
    }

    #[test]
    fn self_loops_and_empty_labels_are_malformed() {
        let text = "a\t/r/X\ta\tA\tA\nb\t/r/X\tc\t  \tC\nb\t/r/X\tc\tB\tC\n";
        let (kg, rep) = parse(text).unwrap();
        assert_eq!(kg.len(), 1);
        assert_eq!(rep.malformed, 2);
    }

    #[test]
    fn headerless_positional_and_cskg_header_order() {
        let (kg, _) = parse("a\t/r/X\tb\tthe a\tthe b|bee\n").unwrap();
        assert_eq!(kg.node_by_id("b").unwrap().label, "the b");
        let cskg = "id\tnode1\trelation\tnode2\tnode1;label\tnode2;label\trelation;label\trelation;dimension\tsource\tsentence\n\
                    e1\ta\t/r/X\tb\tA\tB\tx\t\tCN\tA x B\n";
        let (kg, _) = parse(cskg).unwrap();
        let t = &kg.triples()[0];
        assert_eq!(kg.node(t.head).id, "a");
        assert_eq!(t.sentence.as_deref(), Some("A x B"));
        assert_eq!(t.source, "CN");
    }

    #[test]
    fn vocabulary_skips_unknown_relations() {
        let opts = ParseOptions {
            vocabulary: Some(["/r/UsedFor".to_string()].into_iter().collect()),
            ..Default::default()
        };
        let (kg, rep) = parse_edges(FIXTURE.as_bytes(), &opts).unwrap();
        assert_eq!(kg.len(), 2);
        assert_eq!(rep.out_of_vocabulary, 1);
    }

    #[test]
    fn answer_sets_are_exact() {
        let text = "h\t/r/R\tt1\th\tt1\nh\t/r/R\tt2\th\tt2\nh\t/r/S\tt3\th\tt3\n";
        let (kg, _) = parse(text).unwrap();
        let (h, r) = (kg.node_idx("h").unwrap(), kg.relation_idx("/r/R").unwrap());
        let tails: Vec<&str> = kg.answer_set(h, r).iter().map(|&t| kg.node(t).id.as_str()).collect();
        let mut tails = tails;
        tails.sort();
        assert_eq!(tails, vec!["t1", "t2"]);
        assert!(!kg.is_answer(h, r, kg.node_idx("t3").unwrap()));
    }

    #[test]
    fn filter_relations_cases() {
        let (kg, _) = parse(FIXTURE).unwrap();
        let only = |rels: &[&str]| -> BTreeSet<String> { rels.iter().map(|s| s.to_string()).collect() };
        let f = filter_relations(&kg, &only(&["/r/Causes", "/r/HasPrerequisite", "/r/UsedFor"])).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.triples().iter().all(|t| f.relation_name(t.relation) == "/r/UsedFor"));
        let all = filter_relations(&kg, &only(&["/r/UsedFor", "/r/CausesDesire"])).unwrap();
        assert_eq!(all, kg);
        let none = filter_relations(&kg, &only(&["/r/IsA"])).unwrap();
        assert!(none.is_empty());
        assert!(filter_relations(&kg, &BTreeSet::new()).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (kg, _) = parse(FIXTURE).unwrap();
        let mut buf = Vec::new();
        kg.write_edges(&mut buf, &ColumnSpec::default()).unwrap();
        let (again, _) = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again, kg);
    }

    fn chain(n: usize) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::default();
        for i in 0..n {
            let (h, t) = (format!("h{i}"), format!("t{i}"));
            kg.add_edge((&h, &h), "/r/R", (&t, &t), None, "x");
        }
        kg
    }

    #[test]
    fn cwwv_partition_sizes_and_determinism() {
        let kg = chain(100);
        let s = partition_cwwv(&kg, 0.05, 1).unwrap();
        assert_eq!((s.dev.len(), s.train.len()), (5, 95));
        assert_eq!(s, partition_cwwv(&kg, 0.05, 1).unwrap());

        let kg20 = chain(20);
        let a = partition_cwwv(&kg20, 0.05, 1).unwrap();
        let b = partition_cwwv(&kg20, 0.05, 2).unwrap();
        assert_eq!((a.dev.len(), b.dev.len()), (1, 1));

        assert!(partition_cwwv(&kg, 0.0, 1).is_err());
        assert!(partition_cwwv(&kg, 1.0, 1).is_err());
    }

    #[test]
    fn split_file_conflicts() {
        let ok = read_split_file("A\ttrain\nB\tdev\nA\ttrain\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(matches!(
            read_split_file("A\ttrain\nA\tdev\n".as_bytes()),
            Err(Error::Config(_))
        ));
        assert!(matches!(read_split_file("A\tvalid\n".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn atomic_routing() {
        let mut kg = KnowledgeGraph::default();
        kg.add_edge(("A", "a"), "r", ("x", "x"), None, "");
        kg.add_edge(("B", "b"), "r", ("y", "y"), None, "");
        kg.add_edge(("C", "c"), "r", ("z", "z"), None, "");
        let splits = read_split_file("A\ttrain\nB\tdev\n".as_bytes()).unwrap();
        let s = partition_atomic(&kg, &splits, UnmappedPolicy::Drop);
        assert_eq!(s.train.triple_ids, vec![0]);
        assert_eq!(s.dev.triple_ids, vec![1]);
        assert!(s.test.is_empty());
        assert_eq!(s.dropped, 1);
        let s = partition_atomic(&kg, &splits, UnmappedPolicy::Train);
        assert_eq!(s.train.triple_ids, vec![0, 2]);
    }
}
