//! Random-projection forest for cosine nearest-neighbor search, with an exact
//! scan that doubles as its oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::EmbeddingSet;

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("cannot index an empty set")]
    Empty,
    #[error("vectors must be L2-normalized before indexing")]
    NotNormalized,
    #[error("query has dimension {found}, index has {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("query vector is zero")]
    ZeroQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("bad magic: expected PANN, found {0:?}")]
    BadMagic(String),
    #[error("unsupported index version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("index snapshot at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("index snapshot does not match the embedding set: {0}")]
    SetMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    pub n_trees: usize,
    pub leaf_capacity: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams { n_trees: 50, leaf_capacity: 32, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    /// Items with `normal · x - offset > 0` go right. A split whose normal is
    /// all zeros is an arbitrary halving; queries explore both sides.
    Split { normal: u32, offset: f32, left: u32, right: u32 },
    Leaf { start: u32, len: u32 },
}

/// One tree; nodes are stored in pre-order with the root at 0.
#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    normals: Vec<f32>,
    items: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct AnnIndex {
    params: AnnParams,
    set: EmbeddingSet,
    trees: Vec<Tree>,
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn dot32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Score used by both the exact scan and the forest's re-rank, so the two
/// agree bit for bit on identical candidates.
#[inline]
fn score(q: &[f64], v: &[f32]) -> f64 {
    q.iter().zip(v).map(|(&x, &y)| x * y as f64).sum()
}

fn unit_query(q: &[f32], dim: usize) -> Result<Vec<f64>, AnnError> {
    if q.len() != dim {
        return Err(AnnError::DimMismatch { expected: dim, found: q.len() });
    }
    let n = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(AnnError::ZeroQuery);
    }
    Ok(q.iter().map(|&x| x as f64 / n).collect())
}

fn by_score_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

fn rank(set: &EmbeddingSet, q: &[f64], candidates: impl Iterator<Item = usize>, k: usize) -> Vec<Neighbor> {
    let mut out: Vec<Neighbor> =
        candidates.map(|i| Neighbor { id: set.ids()[i].clone(), score: score(q, set.row(i)) }).collect();
    out.sort_by(by_score_then_id);
    out.truncate(k);
    out
}

/// Full scan by cosine similarity; ties broken by id.
pub fn exact_knn(set: &EmbeddingSet, q: &[f32], k: usize) -> Result<Vec<Neighbor>, AnnError> {
    if k == 0 {
        return Err(AnnError::ZeroK);
    }
    let q = unit_query(q, set.dim())?;
    Ok(rank(set, &q, 0..set.len(), k))
}

struct Builder<'a> {
    set: &'a EmbeddingSet,
    leaf_capacity: usize,
    rng: ChaCha8Rng,
    tree: Tree,
}

impl Builder<'_> {
    fn leaf(&mut self, items: &[u32]) -> u32 {
        let start = self.tree.items.len() as u32;
        self.tree.items.extend_from_slice(items);
        self.tree.nodes.push(Node::Leaf { start, len: items.len() as u32 });
        (self.tree.nodes.len() - 1) as u32
    }

    fn build(&mut self, items: Vec<u32>) -> u32 {
        if items.len() <= self.leaf_capacity {
            return self.leaf(&items);
        }
        let dim = self.set.dim();
        let mut split = None;
        for _ in 0..4 {
            let i = self.rng.random_range(0..items.len());
            let mut j = self.rng.random_range(0..items.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (self.set.row(items[i] as usize), self.set.row(items[j] as usize));
            let normal: Vec<f32> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            // Perpendicular bisector: offset = normal · (a + b) / 2.
            let offset = (a.iter().zip(b).zip(&normal).map(|((&x, &y), &n)| (x as f64 + y as f64) * n as f64).sum::<f64>() / 2.0) as f32;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &it in &items {
                if dot32(&normal, self.set.row(it as usize)) - offset as f64 > 0.0 {
                    right.push(it);
                } else {
                    left.push(it);
                }
            }
            if !left.is_empty() && !right.is_empty() {
                split = Some((normal, offset, left, right));
                break;
            }
        }
        let (normal, offset, left, right) = split.unwrap_or_else(|| {
            let mut items = items;
            let right = items.split_off(items.len() / 2);
            (vec![0.0; dim], 0.0, items, right)
        });
        let normal_row = (self.tree.normals.len() / dim) as u32;
        self.tree.normals.extend_from_slice(&normal);
        let me = self.tree.nodes.len();
        self.tree.nodes.push(Node::Leaf { start: 0, len: 0 });
        let l = self.build(left);
        let r = self.build(right);
        self.tree.nodes[me] = Node::Split { normal: normal_row, offset, left: l, right: r };
        me as u32
    }
}

#[derive(PartialEq)]
struct Pending {
    priority: f64,
    tree: u32,
    node: u32,
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.tree.cmp(&self.tree))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl AnnIndex {
    /// Builds `n_trees` trees in parallel, each from its own seed derived
    /// from `params.seed`.
    pub fn build(set: EmbeddingSet, params: AnnParams) -> Result<Self, AnnError> {
        if set.is_empty() {
            return Err(AnnError::Empty);
        }
        if !set.is_normalized() {
            return Err(AnnError::NotNormalized);
        }
        if params.n_trees == 0 || params.leaf_capacity == 0 {
            return Err(AnnError::Params("n_trees and leaf_capacity must be at least 1".into()));
        }
        if set.len() > u32::MAX as usize {
            return Err(AnnError::Params("too many items".into()));
        }
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut b = Builder {
                    set: &set,
                    leaf_capacity: params.leaf_capacity,
                    rng: ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t)),
                    tree: Tree { nodes: Vec::new(), normals: Vec::new(), items: Vec::new() },
                };
                b.build((0..set.len() as u32).collect());
                b.tree
            })
            .collect();
        Ok(AnnIndex { params, set, trees })
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn set(&self) -> &EmbeddingSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Best-first search over all trees until `search_k` distinct candidates
    /// (default `n_trees * k`) are collected, then exact re-ranking.
    pub fn query(&self, q: &[f32], k: usize, search_k: Option<usize>) -> Result<Vec<Neighbor>, AnnError> {
        if k == 0 {
            return Err(AnnError::ZeroK);
        }
        let qn = unit_query(q, self.dim())?;
        let search_k = search_k.unwrap_or(self.params.n_trees * k);
        let dim = self.dim();
        let mut heap: BinaryHeap<Pending> =
            (0..self.trees.len()).map(|t| Pending { priority: f64::INFINITY, tree: t as u32, node: 0 }).collect();
        let mut seen = vec![false; self.len()];
        let mut candidates = Vec::new();
        while candidates.len() < search_k {
            let Some(p) = heap.pop() else { break };
            let tree = &self.trees[p.tree as usize];
            match tree.nodes[p.node as usize] {
                Node::Leaf { start, len } => {
                    for &it in &tree.items[start as usize..(start + len) as usize] {
                        if !std::mem::replace(&mut seen[it as usize], true) {
                            candidates.push(it as usize);
                        }
                    }
                }
                Node::Split { normal, offset, left, right } => {
                    let n = &tree.normals[normal as usize * dim..(normal as usize + 1) * dim];
                    let margin = score(&qn, n) - offset as f64;
                    heap.push(Pending { priority: p.priority.min(margin), tree: p.tree, node: right });
                    heap.push(Pending { priority: p.priority.min(-margin), tree: p.tree, node: left });
                }
            }
        }
        Ok(rank(&self.set, &qn, candidates.into_iter(), k))
    }

    pub fn query_id(&self, id: &str, k: usize, search_k: Option<usize>) -> Result<Vec<Neighbor>, AnnError> {
        let v = self.set.get(id).ok_or_else(|| AnnError::UnknownId(id.to_string()))?;
        self.query(v, k, search_k)
    }

    /// Mean overlap between forest and exact top-`k` over `sample_size`
    /// indexed items used as queries.
    pub fn measure_recall(&self, k: usize, sample_size: usize, seed: u64, search_k: Option<usize>) -> Result<f64, AnnError> {
        let n = self.len();
        let sample_size = sample_size.min(n);
        if sample_size == 0 {
            return Ok(1.0);
        }
        let k_eff = k.min(n);
        let picks: Vec<usize> = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, sample_size).into_vec();
        let hits: Vec<f64> = picks
            .par_iter()
            .map(|&i| {
                let q = self.set.row(i);
                let approx = self.query(q, k_eff, search_k)?;
                let exact = exact_knn(&self.set, q, k_eff)?;
                let found = approx.iter().filter(|a| exact.iter().any(|e| e.id == a.id)).count();
                Ok(found as f64 / k_eff as f64)
            })
            .collect::<Result<_, AnnError>>()?;
        Ok(hits.iter().sum::<f64>() / hits.len() as f64)
    }

    /// Checks the structural invariants: every item in exactly one leaf per
    /// tree, leaves within capacity unless they are forced halves.
    pub fn check_structure(&self) -> Result<(), String> {
        for (t, tree) in self.trees.iter().enumerate() {
            let mut count = vec![0u32; self.len()];
            for node in &tree.nodes {
                match *node {
                    Node::Leaf { start, len } => {
                        if len as usize > self.params.leaf_capacity {
                            return Err(format!("tree {t}: leaf of {len} items"));
                        }
                        for &it in &tree.items[start as usize..(start + len) as usize] {
                            count[it as usize] += 1;
                        }
                    }
                    Node::Split { left, right, .. } => {
                        if left as usize >= tree.nodes.len() || right as usize >= tree.nodes.len() {
                            return Err(format!("tree {t}: dangling child"));
                        }
                    }
                }
            }
            if let Some(i) = count.iter().position(|&c| c != 1) {
                return Err(format!("tree {t}: item {i} appears {} times", count[i]));
            }
        }
        Ok(())
    }

    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Leaf { len, .. } => Some(*len as usize),
                _ => None,
            })
            .collect()
    }
}

pub const PANN_MAGIC: &[u8; 4] = b"PANN";
pub const PANN_VERSION: u32 = 1;

fn ids_digest(set: &EmbeddingSet) -> [u8; 32] {
    let mut h = Sha256::new();
    for id in set.ids() {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    h.finalize().into()
}

impl AnnIndex {
    /// Snapshot bytes: magic, version, params block, then per tree its node
    /// count, fixed-width pre-order node records (tag u8, two u32), its
    /// normals and its leaf item table. Vectors are not included; loading
    /// needs the same embedding set.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(PANN_MAGIC);
        b.extend(PANN_VERSION.to_le_bytes());
        b.extend((self.params.n_trees as u32).to_le_bytes());
        b.extend((self.params.leaf_capacity as u32).to_le_bytes());
        b.extend(self.params.seed.to_le_bytes());
        b.extend((self.dim() as u32).to_le_bytes());
        b.extend((self.len() as u64).to_le_bytes());
        b.extend(ids_digest(&self.set));
        for tree in &self.trees {
            b.extend((tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                match *node {
                    Node::Leaf { start, len } => {
                        b.push(0);
                        b.extend(start.to_le_bytes());
                        b.extend(len.to_le_bytes());
                    }
                    Node::Split { normal, offset, .. } => {
                        b.push(1);
                        b.extend(offset.to_bits().to_le_bytes());
                        b.extend(normal.to_le_bytes());
                    }
                }
            }
            b.extend(((tree.normals.len() / self.dim()) as u32).to_le_bytes());
            for x in &tree.normals {
                b.extend(x.to_le_bytes());
            }
            b.extend((tree.items.len() as u32).to_le_bytes());
            for x in &tree.items {
                b.extend(x.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(buf: &[u8], set: EmbeddingSet) -> Result<Self, AnnError> {
        let mut c = Reader { buf, pos: 0 };
        let magic = c.take(4)?;
        if magic != PANN_MAGIC {
            return Err(AnnError::BadMagic(String::from_utf8_lossy(magic).into_owned()));
        }
        let version = c.u32()?;
        if version != PANN_VERSION {
            return Err(AnnError::UnsupportedVersion { found: version, supported: PANN_VERSION });
        }
        let n_trees = c.u32()? as usize;
        let leaf_capacity = c.u32()? as usize;
        let seed = c.u64()?;
        let dim = c.u32()? as usize;
        let count = c.u64()? as usize;
        let digest = c.take(32)?;
        if dim != set.dim() || count != set.len() || digest != ids_digest(&set) {
            return Err(AnnError::SetMismatch(format!(
                "snapshot has {count} items of dim {dim}, set has {} of dim {}",
                set.len(),
                set.dim()
            )));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = c.u32()? as usize;
            let records_at = c.pos;
            let mut raw = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let tag = c.take(1)?[0];
                raw.push((tag, c.u32()?, c.u32()?, c.pos - 9));
            }
            let n_normals = c.u32()? as usize;
            let normals: Vec<f32> = (0..n_normals * dim).map(|_| c.u32().map(f32::from_bits)).collect::<Result<_, _>>()?;
            let n_items = c.u32()? as usize;
            let items: Vec<u32> = (0..n_items).map(|_| c.u32()).collect::<Result<_, _>>()?;
            let nodes = relink(&raw, n_normals, n_items).map_err(|(at, message)| AnnError::Format {
                offset: raw.get(at).map_or(records_at, |r| r.3),
                message,
            })?;
            trees.push(Tree { nodes, normals, items });
        }
        if c.pos != buf.len() {
            return Err(AnnError::Format { offset: c.pos, message: "trailing bytes".into() });
        }
        let index = AnnIndex { params: AnnParams { n_trees, leaf_capacity, seed }, set, trees };
        index.check_structure().map_err(|m| AnnError::Format { offset: 0, message: m })?;
        Ok(index)
    }
}

/// Rebuilds child links from pre-order records.
fn relink(raw: &[(u8, u32, u32, usize)], n_normals: usize, n_items: usize) -> Result<Vec<Node>, (usize, String)> {
    let mut nodes = vec![Node::Leaf { start: 0, len: 0 }; raw.len()];
    // Iterative pre-order walk: each stack entry is a split awaiting its right child.
    let mut pending: Vec<usize> = Vec::new();
    for (i, &(tag, a, b, _)) in raw.iter().enumerate() {
        if i > 0 {
            // Node i is the left child of i-1 if i-1 is a split, otherwise the
            // right child of the innermost split still missing one.
            match nodes[i - 1] {
                Node::Split { .. } => {}
                Node::Leaf { .. } => {
                    let parent = pending.pop().ok_or((i, "node outside any tree".to_string()))?;
                    if let Node::Split { right, .. } = &mut nodes[parent] {
                        *right = i as u32;
                    }
                }
            }
        }
        nodes[i] = match tag {
            0 => {
                if (a as usize + b as usize) > n_items {
                    return Err((i, "leaf range outside item table".into()));
                }
                Node::Leaf { start: a, len: b }
            }
            1 => {
                if b as usize >= n_normals {
                    return Err((i, "normal index out of range".into()));
                }
                pending.push(i);
                Node::Split { normal: b, offset: f32::from_bits(a), left: i as u32 + 1, right: 0 }
            }
            t => return Err((i, format!("unknown node tag {t}"))),
        };
    }
    if !pending.is_empty() || raw.is_empty() || matches!(nodes.last(), Some(Node::Split { .. })) {
        return Err((raw.len(), "tree ends before every split has two children".into()));
    }
    Ok(nodes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AnnError> {
        if self.buf.len() - self.pos < n {
            return Err(AnnError::Format { offset: self.pos, message: "truncated".into() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, AnnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
