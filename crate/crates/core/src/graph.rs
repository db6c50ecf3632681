//! Post/image bipartite graphs, connected components, giant-component
//! projection and similarity-threshold decomposition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::AdRecord;
use crate::encoder::{cosine_dense, SentenceEncoder};
use crate::error::{Error, Result};

/// A typed vertex. Ordering (posts, then hashes, then phones) defines the
/// "smallest vertex" used in tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vertex {
    Post(i64),
    Hash(String),
    Phone(i64),
}

/// Undirected bipartite graph between posts and images (optionally phones).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BipartiteGraph {
    pub post_vertices: BTreeSet<i64>,
    pub hash_vertices: BTreeSet<String>,
    pub phone_vertices: BTreeSet<i64>,
    /// `(post, other)` pairs; `other` is never a post.
    pub edges: BTreeSet<(i64, Vertex)>,
}

impl BipartiteGraph {
    pub fn vertex_count(&self) -> usize {
        self.post_vertices.len() + self.hash_vertices.len() + self.phone_vertices.len()
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        self.post_vertices
            .iter()
            .map(|&p| Vertex::Post(p))
            .chain(self.hash_vertices.iter().map(|h| Vertex::Hash(h.clone())))
            .chain(self.phone_vertices.iter().map(|&p| Vertex::Phone(p)))
            .collect()
    }
}

pub fn build_bipartite(ads: &[AdRecord]) -> BipartiteGraph {
    build_bipartite_with(ads, false)
}

/// As [`build_bipartite`], optionally also linking posts to phone ids.
pub fn build_bipartite_with(ads: &[AdRecord], include_phones: bool) -> BipartiteGraph {
    let mut g = BipartiteGraph::default();
    for ad in ads {
        g.post_vertices.insert(ad.post_int);
        g.hash_vertices.insert(ad.phash16.clone());
        g.edges.insert((ad.post_int, Vertex::Hash(ad.phash16.clone())));
        if let (true, Some(phone)) = (include_phones, ad.phone_int) {
            g.phone_vertices.insert(phone);
            g.edges.insert((ad.post_int, Vertex::Phone(phone)));
        }
    }
    g
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn count_roots(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    /// Sorted.
    pub vertices: Vec<Vertex>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn posts(&self) -> impl Iterator<Item = i64> + '_ {
        self.vertices.iter().filter_map(|v| match v {
            Vertex::Post(p) => Some(*p),
            _ => None,
        })
    }
}

/// Components sorted by descending size, then ascending smallest vertex;
/// ids are positions in that order, so component 0 is the giant.
pub fn connected_components(g: &BipartiteGraph) -> Vec<Component> {
    let vertices = g.vertices();
    let index: HashMap<&Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut uf = UnionFind::new(vertices.len());
    for (p, other) in &g.edges {
        uf.union(index[&Vertex::Post(*p)], index[other]);
    }
    let mut groups: BTreeMap<usize, Vec<Vertex>> = BTreeMap::new();
    for (i, v) in vertices.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(v.clone());
    }
    let mut comps: Vec<Vec<Vertex>> = groups.into_values().collect();
    for c in &mut comps {
        c.sort();
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    comps
        .into_iter()
        .enumerate()
        .map(|(id, vertices)| Component { id, vertices })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    /// `a < b`.
    pub a: i64,
    pub b: i64,
    pub score: Option<f64>,
}

/// Post-to-post projection of the giant component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPostGraph {
    pub vertices: Vec<i64>,
    pub edges: Vec<ScoredEdge>,
}

/// Projects the giant component (`components[0]`) onto its posts: two posts
/// are adjacent iff they share at least one non-post vertex.
pub fn project_giant(g: &BipartiteGraph, components: &[Component]) -> Result<ScoredPostGraph> {
    let giant = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("graph has no components".into()))?;
    let members: BTreeSet<&Vertex> = giant.vertices.iter().collect();
    let vertices: Vec<i64> = giant.posts().collect();
    if vertices.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "giant component has {} post(s); need at least 2",
            vertices.len()
        )));
    }
    let mut by_other: BTreeMap<&Vertex, Vec<i64>> = BTreeMap::new();
    for (p, other) in &g.edges {
        if members.contains(other) {
            by_other.entry(other).or_default().push(*p);
        }
    }
    let mut pairs: BTreeSet<(i64, i64)> = BTreeSet::new();
    for posts in by_other.values() {
        for (i, &a) in posts.iter().enumerate() {
            for &b in &posts[i + 1..] {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    Ok(ScoredPostGraph {
        vertices,
        edges: pairs
            .into_iter()
            .map(|(a, b)| ScoredEdge { a, b, score: None })
            .collect(),
    })
}

/// Scores every edge with the cosine of its endpoint embeddings. Each
/// vertex is embedded once.
pub fn score_edges(
    pg: &ScoredPostGraph,
    encoder: &SentenceEncoder,
    texts: &BTreeMap<i64, String>,
) -> Result<ScoredPostGraph> {
    let mut cache = HashMap::with_capacity(pg.vertices.len());
    for &v in &pg.vertices {
        let text = texts
            .get(&v)
            .ok_or_else(|| Error::InvalidArgument(format!("no text for post {v}")))?;
        cache.insert(v, encoder.embed(text));
    }
    let edges = pg
        .edges
        .iter()
        .map(|e| {
            let score = cosine_dense(&cache[&e.a], &cache[&e.b])?;
            Ok(ScoredEdge {
                score: Some(score),
                ..*e
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScoredPostGraph {
        vertices: pg.vertices.clone(),
        edges,
    })
}

/// Number of connected components among `pg.vertices` keeping only edges
/// with score >= `threshold`.
pub fn components_at(pg: &ScoredPostGraph, threshold: f64) -> Result<usize> {
    let index: HashMap<i64, usize> = pg.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut uf = UnionFind::new(pg.vertices.len());
    for e in &pg.edges {
        let s = e
            .score
            .ok_or_else(|| Error::InvalidArgument(format!("edge ({}, {}) is unscored", e.a, e.b)))?;
        if s >= threshold {
            uf.union(index[&e.a], index[&e.b]);
        }
    }
    Ok(uf.count_roots())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub edges_filtered_pct: f64,
    pub components: usize,
    pub component_increase_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub original_component_count: usize,
    /// Components of the unfiltered projection (normally 1).
    pub base_components: usize,
    pub edge_count: usize,
    pub rows: Vec<SweepRow>,
}

pub const COMPONENT_INCREASE_FORMULA: &str =
    "component_increase_pct = (components_at_threshold - components_unfiltered) / original_component_count * 100";

/// `0.05, 0.10, ..., 0.95`
pub fn default_grid() -> Vec<f64> {
    (1..=19)
        .map(|i| i as f64 * 0.05)
        .map(|t| (t * 100.0).round() / 100.0)
        .collect()
}

/// Drops edges scoring below each threshold and counts the surviving
/// components. Increases are reported as a percentage of
/// `original_component_count` (the whole graph's component count).
pub fn sweep_thresholds(pg: &ScoredPostGraph, grid: &[f64], original_component_count: usize) -> Result<SweepReport> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    if original_component_count == 0 {
        return Err(Error::InvalidArgument(
            "original_component_count must be positive".into(),
        ));
    }
    let base = components_at(pg, f64::NEG_INFINITY)?;
    let m = pg.edges.len();
    let rows = grid
        .iter()
        .map(|&t| {
            let components = components_at(pg, t)?;
            let filtered = pg.edges.iter().filter(|e| e.score.unwrap() < t).count();
            Ok(SweepRow {
                threshold: t,
                edges_filtered_pct: if m == 0 {
                    0.0
                } else {
                    filtered as f64 / m as f64 * 100.0
                },
                components,
                component_increase_pct: (components as f64 - base as f64) / original_component_count as f64 * 100.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        original_component_count,
        base_components: base,
        edge_count: m,
        rows,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {COMPONENT_INCREASE_FORMULA}\nthreshold,edges_filtered_pct,component_increase_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{}",
                r.threshold, r.edges_filtered_pct, r.component_increase_pct
            );
        }
        s
    }

    /// Plot-ready JSON with both curves and the formula used.
    pub fn to_plot_json(&self) -> serde_json::Value {
        serde_json::json!({
            "formula": COMPONENT_INCREASE_FORMULA,
            "original_component_count": self.original_component_count,
            "base_components": self.base_components,
            "edge_count": self.edge_count,
            "threshold": self.rows.iter().map(|r| r.threshold).collect::<Vec<_>>(),
            "edges_filtered_pct": self.rows.iter().map(|r| r.edges_filtered_pct).collect::<Vec<_>>(),
            "components": self.rows.iter().map(|r| r.components).collect::<Vec<_>>(),
            "component_increase_pct": self.rows.iter().map(|r| r.component_increase_pct).collect::<Vec<_>>(),
        })
    }
}
