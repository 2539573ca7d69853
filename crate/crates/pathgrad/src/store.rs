//! Token vocabulary with an embedding matrix and exact k-nearest-neighbor
//! queries.
//!
//! Search is a deterministic linear scan over the whole vocabulary: distances
//! are compared first, ties broken by ascending token id, so a query always
//! produces the same neighbor ordering regardless of row storage order.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const MASK_TOKEN: &str = "[MASK]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Row indices of the five structural tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: usize,
    pub sep: usize,
    pub mask: usize,
    pub pad: usize,
    pub unk: usize,
}

impl SpecialIds {
    pub fn all(&self) -> [usize; 5] {
        [self.cls, self.sep, self.mask, self.pad, self.unk]
    }

    pub fn contains(&self, id: usize) -> bool {
        self.all().contains(&id)
    }
}

/// Vocabulary tokens paired with a V x D embedding matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    tokens: Vec<String>,
    vectors: Vec<f64>, // row-major V x D
    dim: usize,
    index: HashMap<String, usize>,
    specials: SpecialIds,
}

/// Result of a k-NN query: (token_id, distance) sorted by ascending distance,
/// ties by ascending token id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub entries: Vec<(usize, f64)>,
}

impl EmbeddingStore {
    /// Builds a store from parallel token/row lists. Rows must all have the
    /// same dimension and the five special tokens must be present.
    pub fn new(tokens: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if tokens.len() != rows.len() || tokens.is_empty() {
            return Err(Error::Contract(format!(
                "token/vector count mismatch: {} tokens, {} rows",
                tokens.len(),
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Contract("embedding dimension must be >= 1".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        let mut vectors = Vec::with_capacity(tokens.len() * dim);
        for (id, (token, row)) in tokens.iter().zip(&rows).enumerate() {
            if row.len() != dim {
                return Err(Error::Contract(format!(
                    "row for {token:?} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("embedding row"));
            }
            if index.insert(token.clone(), id).is_some() {
                return Err(Error::DuplicateToken(token.clone()));
            }
            vectors.extend_from_slice(row);
        }
        let resolve = |name: &'static str| index.get(name).copied().ok_or(Error::MissingSpecial(name));
        let specials = SpecialIds {
            cls: resolve(CLS_TOKEN)?,
            sep: resolve(SEP_TOKEN)?,
            mask: resolve(MASK_TOKEN)?,
            pad: resolve(PAD_TOKEN)?,
            unk: resolve(UNK_TOKEN)?,
        };
        Ok(Self { tokens, vectors, dim, index, specials })
    }

    /// Reads the text format: header line `<V> <D>`, then one `<token> <v1>
    /// ... <vD>` per line.
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::parse(&content)
    }

    pub fn parse(content: &str) -> Result<Self> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?;
        let head: Vec<&str> = header.split(' ').collect();
        if head.len() != 2 {
            return Err(Error::Parse { line: 1, message: "header must be `<V> <D>`".into() });
        }
        let v: usize = head[0]
            .parse()
            .map_err(|_| Error::Parse { line: 1, message: format!("bad vocab size {:?}", head[0]) })?;
        let d: usize = head[1]
            .parse()
            .map_err(|_| Error::Parse { line: 1, message: format!("bad dimension {:?}", head[1]) })?;

        let mut tokens = Vec::with_capacity(v);
        let mut rows = Vec::with_capacity(v);
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != d + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {} fields, found {}", d + 1, fields.len()),
                });
            }
            let mut row = Vec::with_capacity(d);
            for f in &fields[1..] {
                let val: f64 = f.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad float {f:?}"),
                })?;
                row.push(val);
            }
            tokens.push(fields[0].to_string());
            rows.push(row);
        }
        if tokens.len() != v {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {v} rows, file has {}", tokens.len()),
            });
        }
        Self::new(tokens, rows)
    }

    /// Writes the same text format `load` reads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.len(), self.dim));
        for id in 0..self.len() {
            out.push_str(&self.tokens[id]);
            for v in self.row(id) {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        let mut file = fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.lookup(token).unwrap_or(self.specials.unk)
    }

    /// Exact k-nearest neighbors of `query` under Euclidean distance,
    /// skipping `exclude`. Returns fewer than k entries when the vocabulary
    /// minus exclusions is smaller than k.
    pub fn knn(&self, query: &[f64], k: usize, exclude: &HashSet<usize>) -> Result<NeighborSet> {
        if query.len() != self.dim {
            return Err(Error::Contract(format!(
                "query dimension {} does not match store dimension {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::Contract("k must be >= 1".into()));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|id| !exclude.contains(id))
            .map(|id| (squared_distance(query, self.row(id)), id))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        scored.truncate(k);
        Ok(NeighborSet {
            entries: scored.into_iter().map(|(d2, id)| (id, d2.sqrt())).collect(),
        })
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}
