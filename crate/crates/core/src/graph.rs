//! Finite host graphs: balanced regular trees, lines and square lattices.
//!
//! Vertices are stored as dense `u32` indices in a CSR adjacency. Public ids
//! are 1-based labels (`Vertex::label`), which is how configuration files,
//! CSV output and the CLI refer to vertices. Trees are numbered in BFS order
//! from the root, lines left to right and lattices in row-major order, so
//! "lowest vertex id" always means lowest label.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or querying a [`Graph`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph would have more than {max} vertices ({what})")]
    TooLarge { what: String, max: usize },
    #[error("invalid graph parameters: {0}")]
    InvalidParameters(String),
    #[error("vertex {label} is not in a graph with {vertex_count} vertices")]
    InvalidVertex { label: usize, vertex_count: usize },
    #[error("candidate set of size {requested} requested from a graph with {vertex_count} vertices")]
    CandidateSetTooLarge { requested: usize, vertex_count: usize },
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
}

/// Largest vertex count a graph may have; ids must fit in `u32` with room
/// for a sentinel.
pub const MAX_VERTICES: usize = (u32::MAX - 1) as usize;

/// A vertex of a host graph. Serialized as its 1-based label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex(u32);

impl Serialize for Vertex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.label() as u64)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = usize::deserialize(d)?;
        Vertex::from_label(label).ok_or_else(|| serde::de::Error::custom(format!("invalid vertex label {label}")))
    }
}

impl Vertex {
    /// Vertex with the given 0-based storage index.
    pub fn from_index(index: usize) -> Self {
        debug_assert!(index <= MAX_VERTICES);
        Vertex(index as u32)
    }

    /// Vertex with the given 1-based label. Returns `None` for label 0.
    pub fn from_label(label: usize) -> Option<Self> {
        (1..=MAX_VERTICES).contains(&label).then(|| Vertex((label - 1) as u32))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> usize {
        self.0 as usize + 1
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// The family and parameters a graph was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Balanced tree whose root and internal vertices all have degree `k`;
    /// leaves sit at depth `height`.
    RegularTree { k: usize, height: usize },
    /// Complete `branching`-ary tree with `levels` levels (depths
    /// `0..levels`). The root has degree `branching`, other internal
    /// vertices `branching + 1`.
    CompleteTree { branching: usize, levels: usize },
    /// Path on `length` vertices.
    Line { length: usize },
    /// `dim`-dimensional grid with `side` vertices per axis, dim ≥ 2.
    /// One-dimensional lattices are normalized to [`GraphKind::Line`].
    Lattice { dim: usize, side: usize },
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GraphKind::RegularTree { k, height } => write!(f, "regular_tree:{k}:{height}"),
            GraphKind::CompleteTree { branching, levels } => {
                write!(f, "complete_tree:{branching}:{levels}")
            }
            GraphKind::Line { length } => write!(f, "line:{length}"),
            GraphKind::Lattice { dim, side } => write!(f, "lattice:{dim}:{side}"),
        }
    }
}

/// Immutable, connected, undirected host graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    kind: GraphKind,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
    /// Tree kinds only: parent index (root points to itself) and depth.
    parent: Vec<u32>,
    depth: Vec<u32>,
}

fn too_large(what: impl Into<String>) -> GraphError {
    GraphError::TooLarge { what: what.into(), max: MAX_VERTICES }
}

/// Number of vertices of `regular_tree(k, height)`:
/// `1 + k((k-1)^height - 1)/(k-2)`.
pub fn regular_tree_vertex_count(k: usize, height: usize) -> Option<usize> {
    if k < 3 {
        return None;
    }
    // 1 + k * sum_{j<height} (k-1)^j
    let mut layer = k;
    let mut total = 1usize;
    for _ in 0..height {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(k - 1)?;
    }
    Some(total)
}

/// Number of vertices of `complete_tree(branching, levels)`.
pub fn complete_tree_vertex_count(branching: usize, levels: usize) -> Option<usize> {
    let mut layer = 1usize;
    let mut total = 0usize;
    for _ in 0..levels {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(branching)?;
    }
    Some(total)
}

impl Graph {
    /// Balanced `k`-regular tree of the given height, numbered in BFS order
    /// from the root (label 1). Children of a vertex receive consecutive
    /// labels in the order their parents were numbered.
    pub fn regular_tree(k: usize, height: usize) -> Result<Self, GraphError> {
        if k < 3 {
            return Err(GraphError::InvalidParameters(format!("regular tree needs k >= 3, got {k}")));
        }
        if height < 1 {
            return Err(GraphError::InvalidParameters("regular tree needs height >= 1".into()));
        }
        let count = regular_tree_vertex_count(k, height)
            .filter(|&c| c <= MAX_VERTICES)
            .ok_or_else(|| too_large(format!("regular_tree({k}, {height})")))?;
        Ok(Self::build_tree(GraphKind::RegularTree { k, height }, count, height, |v| if v == 0 { k } else { k - 1 }))
    }

    /// Complete `branching`-ary tree with `levels` levels, in BFS order.
    pub fn complete_tree(branching: usize, levels: usize) -> Result<Self, GraphError> {
        if branching < 2 {
            return Err(GraphError::InvalidParameters(format!("complete tree needs branching >= 2, got {branching}")));
        }
        if levels < 2 {
            return Err(GraphError::InvalidParameters("complete tree needs levels >= 2".into()));
        }
        let count = complete_tree_vertex_count(branching, levels)
            .filter(|&c| c <= MAX_VERTICES)
            .ok_or_else(|| too_large(format!("complete_tree({branching}, {levels})")))?;
        Ok(Self::build_tree(GraphKind::CompleteTree { branching, levels }, count, levels - 1, |_| branching))
    }

    fn build_tree(kind: GraphKind, count: usize, max_depth: usize, children: impl Fn(usize) -> usize) -> Self {
        let mut parent = vec![0u32; count];
        let mut depth = vec![0u32; count];
        let mut next = 1usize;
        for v in 0..count {
            if depth[v] as usize == max_depth {
                // BFS order: every later vertex is also a leaf.
                break;
            }
            for _ in 0..children(v) {
                parent[next] = v as u32;
                depth[next] = depth[v] + 1;
                next += 1;
            }
        }
        debug_assert_eq!(next, count);
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); count];
        for v in 1..count {
            let p = parent[v] as usize;
            adjacency[v].push(p as u32);
            adjacency[p].push(v as u32);
        }
        let mut g = Self::from_adjacency(kind, adjacency);
        g.parent = parent;
        g.depth = depth;
        g
    }

    /// Path graph with vertices labelled `1..=length` from left to right.
    pub fn line(length: usize) -> Result<Self, GraphError> {
        if length < 2 {
            return Err(GraphError::InvalidParameters(format!("line needs length >= 2, got {length}")));
        }
        if length > MAX_VERTICES {
            return Err(too_large(format!("line({length})")));
        }
        let adjacency = (0..length)
            .map(|i| {
                let mut nb = Vec::with_capacity(2);
                if i > 0 {
                    nb.push((i - 1) as u32);
                }
                if i + 1 < length {
                    nb.push((i + 1) as u32);
                }
                nb
            })
            .collect();
        Ok(Self::from_adjacency(GraphKind::Line { length }, adjacency))
    }

    /// `dim`-dimensional grid with nearest-neighbour edges, row-major
    /// numbering (axis 0 varies fastest). `dim == 1` yields [`Graph::line`].
    pub fn lattice(dim: usize, side: usize) -> Result<Self, GraphError> {
        if dim < 1 || side < 2 {
            return Err(GraphError::InvalidParameters(format!(
                "lattice needs dim >= 1 and side >= 2, got dim={dim}, side={side}"
            )));
        }
        if dim == 1 {
            return Self::line(side);
        }
        let count = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .filter(|&c| c <= MAX_VERTICES)
            .ok_or_else(|| too_large(format!("lattice({dim}, {side})")))?;
        let mut adjacency = vec![Vec::with_capacity(2 * dim); count];
        for (v, nb) in adjacency.iter_mut().enumerate() {
            let mut stride = 1usize;
            for _ in 0..dim {
                let coord = (v / stride) % side;
                if coord > 0 {
                    nb.push((v - stride) as u32);
                }
                if coord + 1 < side {
                    nb.push((v + stride) as u32);
                }
                stride *= side;
            }
            nb.sort_unstable();
        }
        Ok(Self::from_adjacency(GraphKind::Lattice { dim, side }, adjacency))
    }

    /// Builds the graph described by `kind`.
    pub fn from_kind(kind: GraphKind) -> Result<Self, GraphError> {
        match kind {
            GraphKind::RegularTree { k, height } => Self::regular_tree(k, height),
            GraphKind::CompleteTree { branching, levels } => Self::complete_tree(branching, levels),
            GraphKind::Line { length } => Self::line(length),
            GraphKind::Lattice { dim, side } => Self::lattice(dim, side),
        }
    }

    fn from_adjacency(kind: GraphKind, adjacency: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        offsets.push(0u32);
        let mut neighbors = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        for mut nb in adjacency {
            nb.sort_unstable();
            neighbors.extend_from_slice(&nb);
            offsets.push(neighbors.len() as u32);
        }
        Graph { kind, offsets, neighbors, parent: Vec::new(), depth: Vec::new() }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.vertex_count()).map(Vertex::from_index)
    }

    /// Looks up a vertex by its 1-based label.
    pub fn vertex(&self, label: usize) -> Result<Vertex, GraphError> {
        match Vertex::from_label(label) {
            Some(v) if v.index() < self.vertex_count() => Ok(v),
            _ => Err(GraphError::InvalidVertex { label, vertex_count: self.vertex_count() }),
        }
    }

    /// Validates that `v` belongs to this graph.
    pub fn check(&self, v: Vertex) -> Result<Vertex, GraphError> {
        if v.index() < self.vertex_count() {
            Ok(v)
        } else {
            Err(GraphError::InvalidVertex { label: v.label(), vertex_count: self.vertex_count() })
        }
    }

    pub(crate) fn neighbor_indices(&self, index: usize) -> &[u32] {
        &self.neighbors[self.offsets[index] as usize..self.offsets[index + 1] as usize]
    }

    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.neighbor_indices(v.index()).iter().map(|&i| Vertex(i))
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.neighbor_indices(v.index()).len()
    }

    /// Root of a tree, middle vertex of a line, central vertex of a lattice.
    pub fn canonical_source(&self) -> Vertex {
        match self.kind {
            GraphKind::RegularTree { .. } | GraphKind::CompleteTree { .. } => Vertex(0),
            GraphKind::Line { length } => Vertex::from_index((length - 1) / 2),
            GraphKind::Lattice { dim, side } => {
                let c = (side - 1) / 2;
                let mut index = 0usize;
                let mut stride = 1usize;
                for _ in 0..dim {
                    index += c * stride;
                    stride *= side;
                }
                Vertex::from_index(index)
            }
        }
    }

    /// Depth below the root, for tree kinds.
    pub fn depth(&self, v: Vertex) -> Option<usize> {
        self.depth.get(v.index()).map(|&d| d as usize)
    }

    /// Shortest-path distance. Uses coordinate arithmetic on lines and
    /// lattices and a parent walk on trees; agrees with [`Graph::bfs_distance`].
    pub fn distance(&self, u: Vertex, v: Vertex) -> Result<usize, GraphError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.distance_unchecked(u.index(), v.index()))
    }

    pub(crate) fn distance_unchecked(&self, u: usize, v: usize) -> usize {
        match self.kind {
            GraphKind::Line { .. } => u.abs_diff(v),
            GraphKind::Lattice { dim, side } => {
                let (mut a, mut b, mut total) = (u, v, 0usize);
                for _ in 0..dim {
                    total += (a % side).abs_diff(b % side);
                    a /= side;
                    b /= side;
                }
                total
            }
            GraphKind::RegularTree { .. } | GraphKind::CompleteTree { .. } => {
                let (mut a, mut b, mut total) = (u, v, 0usize);
                while self.depth[a] > self.depth[b] {
                    a = self.parent[a] as usize;
                    total += 1;
                }
                while self.depth[b] > self.depth[a] {
                    b = self.parent[b] as usize;
                    total += 1;
                }
                while a != b {
                    a = self.parent[a] as usize;
                    b = self.parent[b] as usize;
                    total += 2;
                }
                total
            }
        }
    }

    /// Distance by breadth-first search, independent of the graph kind.
    pub fn bfs_distance(&self, u: Vertex, v: Vertex) -> Result<usize, GraphError> {
        self.check(u)?;
        self.check(v)?;
        let dist = self.bfs_distances(u);
        Ok(dist[v.index()] as usize)
    }

    /// Full BFS distance table from `source` (indexed by vertex index).
    pub fn bfs_distances(&self, source: Vertex) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.vertex_count()];
        let mut queue = VecDeque::new();
        dist[source.index()] = 0;
        queue.push_back(source.index());
        while let Some(w) = queue.pop_front() {
            let d = dist[w] + 1;
            for &x in self.neighbor_indices(w) {
                if dist[x as usize] == u32::MAX {
                    dist[x as usize] = d;
                    queue.push_back(x as usize);
                }
            }
        }
        dist
    }

    /// Greatest distance from `v` to any vertex.
    pub fn eccentricity(&self, v: Vertex) -> usize {
        self.bfs_distances(v).into_iter().max().unwrap_or(0) as usize
    }

    /// All vertices within distance `t` of `v`, in BFS order.
    pub fn ball(&self, v: Vertex, t: usize) -> Result<Vec<Vertex>, GraphError> {
        self.check(v)?;
        let mut walker = BallWalker::new(self);
        let mut out = Vec::new();
        walker.for_each(self, v, t, |w, _| out.push(w));
        Ok(out)
    }

    /// `|ball(v, t)|`.
    pub fn ball_size(&self, v: Vertex, t: usize) -> Result<usize, GraphError> {
        self.check(v)?;
        let mut walker = BallWalker::new(self);
        let mut count = 0usize;
        walker.for_each(self, v, t, |_, _| count += 1);
        Ok(count)
    }

    /// Writes one `u v` line per edge with `u < v`, ascending, using labels.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for u in 0..self.vertex_count() {
            for &v in self.neighbor_indices(u) {
                if (v as usize) > u {
                    writeln!(out, "{} {}", u + 1, v + 1)?;
                }
            }
        }
        Ok(())
    }
}

/// Reusable scratch for truncated breadth-first searches.
///
/// Visited marks are epoch-stamped so a walk costs time proportional to the
/// ball it explores, not to the host graph.
#[derive(Debug, Clone)]
pub struct BallWalker {
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<(u32, u32)>,
}

impl BallWalker {
    pub fn new(graph: &Graph) -> Self {
        BallWalker { stamp: vec![0; graph.vertex_count()], epoch: 0, queue: Vec::new() }
    }

    fn next_epoch(&mut self) -> u32 {
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }

    /// Calls `visit(w, d(v, w))` for every `w` in `ball(v, t)`, in BFS order.
    pub fn for_each(&mut self, graph: &Graph, v: Vertex, t: usize, mut visit: impl FnMut(Vertex, usize)) {
        let epoch = self.next_epoch();
        self.queue.clear();
        self.queue.push((v.0, 0));
        self.stamp[v.index()] = epoch;
        let mut head = 0;
        while head < self.queue.len() {
            let (w, d) = self.queue[head];
            head += 1;
            visit(Vertex(w), d as usize);
            if d as usize == t {
                continue;
            }
            for &x in graph.neighbor_indices(w as usize) {
                let slot = &mut self.stamp[x as usize];
                if *slot != epoch {
                    *slot = epoch;
                    self.queue.push((x, d + 1));
                }
            }
        }
    }

    /// `Σ_{w ∈ ball(v, t)} values[w]`.
    pub fn ball_sum(&mut self, graph: &Graph, v: Vertex, t: usize, values: &[f64]) -> f64 {
        let mut sum = 0.0;
        self.for_each(graph, v, t, |w, _| sum += values[w.index()]);
        sum
    }
}

/// The candidate set `V_n`: the `n` vertices closest to a center vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    center: Vertex,
    vertices: Vec<Vertex>,
}

impl CandidateSet {
    /// First `n` vertices by `(distance from v0, label)`.
    pub fn nearest(graph: &Graph, v0: Vertex, n: usize) -> Result<Self, GraphError> {
        graph.check(v0)?;
        if n == 0 || n > graph.vertex_count() {
            return Err(GraphError::CandidateSetTooLarge { requested: n, vertex_count: graph.vertex_count() });
        }
        let mut walker = BallWalker::new(graph);
        let mut layered: Vec<(usize, Vertex)> = Vec::with_capacity(n);
        let mut radius = 0usize;
        // Grow the radius until the ball holds n vertices; the final layer is
        // complete so ties are broken over the whole layer.
        loop {
            layered.clear();
            walker.for_each(graph, v0, radius, |w, d| layered.push((d, w)));
            if layered.len() >= n {
                break;
            }
            radius = (radius * 2).max(1);
        }
        layered.sort_unstable();
        layered.truncate(n);
        Ok(CandidateSet { center: v0, vertices: layered.into_iter().map(|(_, w)| w).collect() })
    }

    /// Builds a candidate set from an explicit vertex order, checking that
    /// ids are distinct, present and nondecreasing in distance from `center`.
    pub fn from_vertices(graph: &Graph, center: Vertex, vertices: Vec<Vertex>) -> Result<Self, GraphError> {
        graph.check(center)?;
        if vertices.is_empty() {
            return Err(GraphError::InvalidCandidates("empty candidate set".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(vertices.len());
        let mut last = 0usize;
        for &v in &vertices {
            graph.check(v)?;
            if !seen.insert(v) {
                return Err(GraphError::InvalidCandidates(format!("vertex {v} listed twice")));
            }
            let d = graph.distance_unchecked(v.index(), center.index());
            if d < last {
                return Err(GraphError::InvalidCandidates(format!(
                    "vertex {v} at distance {d} follows a vertex at distance {last}"
                )));
            }
            last = d;
        }
        Ok(CandidateSet { center, vertices })
    }

    pub fn center(&self) -> Vertex {
        self.center
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.vertices.contains(&v)
    }

    /// Largest distance between two candidates.
    pub fn diameter(&self, graph: &Graph) -> usize {
        let mut best = 0;
        for (i, &a) in self.vertices.iter().enumerate() {
            for &b in &self.vertices[i + 1..] {
                best = best.max(graph.distance_unchecked(a.index(), b.index()));
            }
        }
        best
    }
}

/// Checks `|N_v(t) \ N_u(t)| = |N_u(t) \ N_v(t)| ≠ 0` for every `t ≤ t_max`.
///
/// Advisory only: finite hosts violate it near their boundary.
pub fn check_symmetry_assumption(graph: &Graph, u: Vertex, v: Vertex, t_max: usize) -> Result<bool, GraphError> {
    graph.check(u)?;
    graph.check(v)?;
    if u == v {
        return Ok(false);
    }
    let du = graph.bfs_distances(u);
    let dv = graph.bfs_distances(v);
    // w ∈ N_v(t) \ N_u(t) iff dv ≤ t < du, i.e. t ∈ [dv, du).
    let mut v_only = vec![0i64; t_max + 2];
    let mut u_only = vec![0i64; t_max + 2];
    let add = |hist: &mut Vec<i64>, from: u32, to: u32| {
        let (from, to) = (from as usize, (to as usize).min(t_max + 1));
        if from < to {
            hist[from] += 1;
            hist[to] -= 1;
        }
    };
    for (&a, &b) in dv.iter().zip(&du) {
        add(&mut v_only, a, b);
        add(&mut u_only, b, a);
    }
    let (mut sv, mut su) = (0i64, 0i64);
    for t in 0..=t_max {
        sv += v_only[t];
        su += u_only[t];
        if sv == 0 || sv != su {
            return Ok(false);
        }
    }
    Ok(true)
}
