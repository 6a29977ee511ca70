//! Dense vector tables keyed by node (or item) id, their file formats, and a
//! hashed bag-of-words featurizer for when no trained embeddings exist.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::seed::fnv1a;
use crate::text::{strip_blanks, tokenize};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: vector.len(),
            });
        }
        let id = id.into();
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("embedding for `{id}` has a non-finite component")));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn require(&self, id: &str) -> Result<&[f32]> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    /// Ids in sorted order.
    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    /// Text format: `<count> <dim>` header, then `id v1 ... vdim` per line.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (count, dim) = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::EmptyInput { skipped: 0 });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            break parse_header(&line, n + 1)?;
        };
        let mut table = EmbeddingTable::new(dim)?;
        for (n, line) in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(id) = parts.next() else { continue };
            let vector = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            table.insert(id, vector).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        if table.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header announces {count} vectors, file holds {}", table.len()),
            });
        }
        Ok(table)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for id in self.ids() {
            write!(out, "{id}")?;
            for v in &self.vectors[id] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Binary variant: little-endian f32 records in `data`, and an index
    /// sidecar holding the `<count> <dim>` header followed by one id per
    /// record, in record order.
    pub fn read_binary<D: Read, I: BufRead>(mut data: D, index: I) -> Result<Self> {
        let mut lines = index.lines();
        let header = lines.next().ok_or(Error::EmptyInput { skipped: 0 })??;
        let (count, dim) = parse_header(&header, 1)?;
        let mut table = EmbeddingTable::new(dim)?;
        let mut record = vec![0u8; dim * 4];
        for (n, id) in lines.enumerate() {
            let id = id?;
            let id = id.trim();
            if id.is_empty() {
                continue;
            }
            data.read_exact(&mut record)?;
            let vector = record
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            table.insert(id, vector).map_err(|e| Error::Parse {
                line: n + 2,
                message: e.to_string(),
            })?;
        }
        if table.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("index announces {count} records, found {}", table.len()),
            });
        }
        Ok(table)
    }

    pub fn write_binary<D: Write, I: Write>(&self, mut data: D, mut index: I) -> Result<()> {
        writeln!(index, "{} {}", self.len(), self.dim)?;
        for id in self.ids() {
            writeln!(index, "{id}")?;
            for v in &self.vectors[id] {
                data.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Embeds every node label of `kg` with the hashed featurizer.
    pub fn hashed_for_graph(kg: &KnowledgeGraph, dim: usize) -> Result<Self> {
        let f = HashedFeaturizer::new(dim)?;
        let mut table = EmbeddingTable::new(dim)?;
        for node in kg.nodes() {
            table.insert(node.id.clone(), f.embed(&strip_blanks(&node.label)))?;
        }
        Ok(table)
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize)> {
    let err = || Error::Parse {
        line: line_no,
        message: format!("expected `<count> <dim>` header, got `{line}`"),
    };
    let mut it = line.split_whitespace().map(|p| p.parse::<usize>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(c)), Some(Ok(d)), None) => Ok((c, d)),
        _ => Err(err()),
    }
}

/// Cosine similarity, computed in f64.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Signed feature hashing of unigrams and adjacent bigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedFeaturizer {
    dim: usize,
}

impl HashedFeaturizer {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("featurizer dimension must be positive".into()));
        }
        Ok(HashedFeaturizer { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn add(&self, v: &mut [f32], key: &[u8], weight: f32) {
        let h = fnv1a(key);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign * weight;
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        let toks = tokenize(text);
        for t in &toks {
            self.add(&mut v, t.as_bytes(), 1.0);
        }
        for w in toks.windows(2) {
            self.add(&mut v, format!("{} {}", w[0], w[1]).as_bytes(), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 {
            // no tokens (or exact cancellation): fall back to the raw text
            self.add(&mut v, format!("\u{0}{text}").as_bytes(), 1.0);
            return v.iter().map(|x| x.abs()).collect();
        }
        v.iter().map(|x| x / norm).collect()
    }
}
