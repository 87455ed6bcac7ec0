//! Combinatorial and metric structure of quantum graphs.
//!
//! A quantum graph is a finite metric graph together with a Schrödinger
//! operator: every edge `e` carries a length `ℓ_e > 0`, a potential `W_e`,
//! and the operator acts as `-d²/dx² + W_e` on each edge, with δ-type
//! matching conditions at the vertices. The coupling coefficient `α_υ` is a
//! real number (continuity plus `Σ ∂f = α_υ · f(υ)` over outgoing
//! derivatives) or `+∞`, which means a Dirichlet condition `f(υ) = 0`.
//!
//! Vertex and edge identifiers are opaque strings taken from the input.
//! Internally both are mapped to dense indices assigned by sorted identifier
//! order, so every derived quantity (component lists, generated identifiers,
//! scan output) is reproducible across runs regardless of input ordering.
//!
//! Orientation convention: each edge stores a canonical direction
//! `(from, to)`; the edge coordinate runs from `x = 0` at `from` to
//! `x = ℓ_e` at `to`. A reversed traversal is a view taken by evaluating the
//! potential at `ℓ_e - x`; no reversed copy is ever materialized.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge potential `W_e`. Constant and sampled variants are the two forms the
/// ODE layer integrates directly; the other two are normalized away:
/// `Zero` becomes `Constant(0)` and `PiecewiseConstant` is split at its
/// breakpoints into constant pieces joined by Kirchhoff vertices.
///
/// A `Sampled` potential is interpreted as the piecewise-linear interpolant
/// of `(grid[i], values[i])`; its grid must start at `0` and end at `ℓ_e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Constant {
        value: f64,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Sampled {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Potential {
    /// Pointwise value at edge coordinate `x` in the canonical orientation.
    /// `Sampled` evaluates the piecewise-linear interpolant; coordinates
    /// outside the grid (only possible through floating-point fuzz at the
    /// ends) clamp to the nearest sample.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant { value } => *value,
            Potential::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let seg = breakpoints.partition_point(|&b| b <= x);
                values[seg]
            }
            Potential::Sampled { grid, values } => {
                if x <= grid[0] {
                    return values[0];
                }
                if x >= *grid.last().unwrap() {
                    return *values.last().unwrap();
                }
                let hi = grid.partition_point(|&g| g <= x);
                let (x0, x1) = (grid[hi - 1], grid[hi]);
                let t = (x - x0) / (x1 - x0);
                values[hi - 1] * (1.0 - t) + values[hi] * t
            }
        }
    }

    /// Range `[min W, max W]` over the edge. For the piecewise-linear
    /// interpolant of a sampled potential the extrema sit at grid nodes, so
    /// both variants reduce to a scan over the stored values.
    pub fn bounds(&self) -> (f64, f64) {
        let scan = |vals: &[f64]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in vals {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        match self {
            Potential::Zero => (0.0, 0.0),
            Potential::Constant { value } => (*value, *value),
            Potential::PiecewiseConstant { values, .. } => scan(values),
            Potential::Sampled { values, .. } => scan(values),
        }
    }

    /// Split at coordinate `cut` into the restrictions to `[0, cut]` and
    /// `[cut, ℓ]`, the latter shifted to start at 0. Only called by
    /// `normalize` on loop and parallel subdivision, after piecewise-constant
    /// potentials have already been split away.
    fn split_at(&self, cut: f64, len: f64) -> (Potential, Potential) {
        match self {
            Potential::Zero => (Potential::Zero, Potential::Zero),
            Potential::Constant { value } => (
                Potential::Constant { value: *value },
                Potential::Constant { value: *value },
            ),
            Potential::PiecewiseConstant { .. } => {
                unreachable!("piecewise potentials are split before subdivision")
            }
            Potential::Sampled { grid, values } => {
                let vcut = self.eval(cut);
                let mut lg = Vec::new();
                let mut lv = Vec::new();
                let mut rg = Vec::new();
                let mut rv = Vec::new();
                for (&g, &v) in grid.iter().zip(values) {
                    if g < cut {
                        lg.push(g);
                        lv.push(v);
                    } else if g > cut {
                        rg.push(g - cut);
                        rv.push(v);
                    } else {
                        lg.push(g);
                        lv.push(v);
                        rg.push(0.0);
                        rv.push(v);
                    }
                }
                if lg.last().copied() != Some(cut) {
                    lg.push(cut);
                    lv.push(vcut);
                }
                if rg.first().copied() != Some(0.0) {
                    rg.insert(0, 0.0);
                    rv.insert(0, vcut);
                }
                // The right grid must end exactly at the new edge length.
                if let Some(last) = rg.last_mut() {
                    *last = len - cut;
                }
                (
                    Potential::Sampled {
                        grid: lg,
                        values: lv,
                    },
                    Potential::Sampled {
                        grid: rg,
                        values: rv,
                    },
                )
            }
        }
    }

    fn validate(&self, len: f64, edge: &str) -> Result<()> {
        let invalid = |reason: String| Error::InvalidGraph { reason };
        let all_finite = |vals: &[f64], what: &str| -> Result<()> {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!(
                    "edge `{edge}`: potential {what} must all be finite"
                )));
            }
            Ok(())
        };
        match self {
            Potential::Zero => Ok(()),
            Potential::Constant { value } => all_finite(&[*value], "value"),
            Potential::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                all_finite(breakpoints, "breakpoints")?;
                all_finite(values, "values")?;
                if values.len() != breakpoints.len() + 1 {
                    return Err(invalid(format!(
                        "edge `{edge}`: piecewise potential needs {} values for {} \
                         breakpoints, got {}",
                        breakpoints.len() + 1,
                        breakpoints.len(),
                        values.len()
                    )));
                }
                if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
                    return Err(invalid(format!(
                        "edge `{edge}`: breakpoints must be strictly increasing"
                    )));
                }
                if breakpoints.iter().any(|&b| b <= 0.0 || b >= len) {
                    return Err(invalid(format!(
                        "edge `{edge}`: breakpoints must lie strictly inside (0, {len})"
                    )));
                }
                Ok(())
            }
            Potential::Sampled { grid, values } => {
                all_finite(grid, "grid")?;
                all_finite(values, "values")?;
                if grid.len() != values.len() {
                    return Err(invalid(format!(
                        "edge `{edge}`: sampled grid and values differ in length \
                         ({} vs {})",
                        grid.len(),
                        values.len()
                    )));
                }
                if grid.len() < 2 {
                    return Err(invalid(format!(
                        "edge `{edge}`: sampled potential needs at least two grid points"
                    )));
                }
                if !grid.windows(2).all(|w| w[0] < w[1]) {
                    return Err(invalid(format!(
                        "edge `{edge}`: sampled grid must be strictly increasing"
                    )));
                }
                if grid[0] != 0.0 || *grid.last().unwrap() != len {
                    return Err(invalid(format!(
                        "edge `{edge}`: sampled grid must cover [0, {len}] exactly, \
                         got [{}, {}]",
                        grid[0],
                        grid.last().unwrap()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Serialize `α` as the bare string `"inf"` for a Dirichlet vertex and as a
/// JSON number otherwise, and accept both forms back.
mod alpha_codec {
    use serde::de::{self, Unexpected};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(alpha: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if alpha.is_infinite() && *alpha > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*alpha)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
        struct AlphaVisitor;
        impl<'de> de::Visitor<'de> for AlphaVisitor {
            type Value = f64;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
                if v == "inf" {
                    Ok(f64::INFINITY)
                } else {
                    Err(E::invalid_value(Unexpected::Str(v), &self))
                }
            }
        }
        de.deserialize_any(AlphaVisitor)
    }
}

/// One vertex of the interchange format: identifier plus δ coupling, with
/// `alpha = +∞` encoded as the JSON string `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: String,
    #[serde(with = "alpha_codec")]
    pub alpha: f64,
}

/// One edge of the interchange format, in canonical orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub potential: Potential,
}

/// The on-disk graph format: two flat arrays of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}

/// Which end of an edge a vertex sits at in the canonical orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeEnd {
    From,
    To,
}

/// Borrowed per-edge data in the form the ODE layer consumes.
#[derive(Clone, Copy, Debug)]
pub struct EdgeView<'a> {
    pub id: &'a str,
    pub len: f64,
    pub potential: &'a Potential,
}

/// Purely combinatorial multigraph over dense indices: vertex and edge
/// identifiers (sorted), endpoints per edge, and a per-vertex incidence
/// index. Loops contribute two incidence entries at their single vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGraph {
    vertex_ids: Vec<String>,
    edge_ids: Vec<String>,
    ends: Vec<(usize, usize)>,
    incidence: Vec<Vec<(usize, EdgeEnd)>>,
}

impl DiscreteGraph {
    /// Assemble from dense data. Callers must pass `vertex_ids` and
    /// `edge_ids` already sorted, or the binary-search id lookups break.
    pub(crate) fn build(
        vertex_ids: Vec<String>,
        edge_ids: Vec<String>,
        ends: Vec<(usize, usize)>,
    ) -> Self {
        let mut incidence = vec![Vec::new(); vertex_ids.len()];
        for (e, &(u, v)) in ends.iter().enumerate() {
            incidence[u].push((e, EdgeEnd::From));
            incidence[v].push((e, EdgeEnd::To));
        }
        DiscreteGraph {
            vertex_ids,
            edge_ids,
            ends,
            incidence,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertex_ids[v]
    }

    pub fn edge_id(&self, e: usize) -> &str {
        &self.edge_ids[e]
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.vertex_ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .map_err(|_| Error::UnknownVertex { id: id.to_owned() })
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.edge_ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .map_err(|_| Error::UnknownEdge { id: id.to_owned() })
    }

    /// Endpoints `(from, to)` in the canonical orientation.
    pub fn ends(&self, e: usize) -> (usize, usize) {
        self.ends[e]
    }

    /// Incident edges of `v` with the end at which `v` sits, in edge-index
    /// order (`From` before `To` for a loop).
    pub fn incidence(&self, v: usize) -> &[(usize, EdgeEnd)] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    pub fn is_loop(&self, e: usize) -> bool {
        self.ends[e].0 == self.ends[e].1
    }

    /// The endpoint of `e` other than `v`; for a loop this is `v` itself.
    pub fn other_end(&self, e: usize, v: usize) -> usize {
        let (u, w) = self.ends[e];
        if u == v {
            w
        } else {
            u
        }
    }

    pub fn connected(&self) -> bool {
        if self.n_vertices() == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_vertices()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(e, _) in &self.incidence[v] {
                let w = self.other_end(e, v);
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_vertices()
    }

    /// True iff the subgraph induced by the vertex set `s` (edges with both
    /// endpoints in `s`) contains no cycle. Union-find over the induced
    /// edges; a loop or a repeated joining edge closes a cycle.
    pub fn induced_acyclic(&self, s: &BTreeSet<usize>) -> bool {
        let mut parent: BTreeMap<usize, usize> = s.iter().map(|&v| (v, v)).collect();
        fn find(parent: &mut BTreeMap<usize, usize>, v: usize) -> usize {
            let p = parent[&v];
            if p == v {
                return v;
            }
            let root = find(parent, p);
            parent.insert(v, root);
            root
        }
        for &(u, v) in &self.ends {
            if !s.contains(&u) || !s.contains(&v) {
                continue;
            }
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return false;
            }
            parent.insert(ru, rv);
        }
        true
    }

    /// Length (edge count) of a shortest cycle, or `None` for a forest.
    /// Handles multigraphs: a loop has girth 1 and a parallel pair girth 2.
    ///
    /// Per-root breadth-first search: a non-tree edge between vertices at
    /// depths `d(x)` and `d(y)` in the same search closes a cycle of length
    /// `d(x) + d(y) + 1` through the root, and every shortest cycle is found
    /// from any of its vertices.
    pub fn girth(&self) -> Option<usize> {
        if self.ends.iter().any(|&(u, v)| u == v) {
            return Some(1);
        }
        let mut best: Option<usize> = None;
        for root in 0..self.n_vertices() {
            let mut dist = vec![usize::MAX; self.n_vertices()];
            let mut via = vec![usize::MAX; self.n_vertices()];
            dist[root] = 0;
            let mut queue = VecDeque::from([root]);
            while let Some(x) = queue.pop_front() {
                for &(e, _) in &self.incidence[x] {
                    let y = self.other_end(e, x);
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        via[y] = e;
                        queue.push_back(y);
                    } else if via[x] != e {
                        let cycle = dist[x] + dist[y] + 1;
                        if best.is_none_or(|b| cycle < b) {
                            best = Some(cycle);
                        }
                    }
                }
            }
        }
        best
    }
}

/// A subset `X` of a quantum graph: vertex part `V_X` and edge part `E_X`.
/// The closure invariant requires every edge incident to a vertex of `V_X`
/// to belong to `E_X`; edges of `E_X` may additionally have endpoints
/// outside `V_X` (those form the boundary).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubsetX {
    pub vset: BTreeSet<usize>,
    pub eset: BTreeSet<usize>,
}

impl SubsetX {
    pub fn new(vset: BTreeSet<usize>, eset: BTreeSet<usize>) -> Self {
        SubsetX { vset, eset }
    }

    pub fn is_empty(&self) -> bool {
        self.vset.is_empty() && self.eset.is_empty()
    }
}

/// Finite truncation of the universal cover: a tree quantum graph, the
/// covering map down to the base (dense tree index to dense base index),
/// and the frontier vertices where the tree was cut and `α` forced to `+∞`.
#[derive(Clone, Debug)]
pub struct TruncatedTree {
    pub tree: QuantumGraph,
    pub vertex_map: Vec<usize>,
    pub edge_map: Vec<usize>,
    pub frontier: BTreeSet<usize>,
}

impl TruncatedTree {
    /// Tree edges with at least one frontier endpoint. The truncation
    /// criterion measures how much L² mass an eigenfunction keeps here.
    pub fn frontier_adjacent_edges(&self) -> BTreeSet<usize> {
        let g = self.tree.graph();
        (0..g.n_edges())
            .filter(|&e| {
                let (u, v) = g.ends(e);
                self.frontier.contains(&u) || self.frontier.contains(&v)
            })
            .collect()
    }
}

/// A finite quantum graph: combinatorial structure plus per-edge lengths and
/// potentials and per-vertex δ couplings (`+∞` = Dirichlet), all indexed
/// densely in sorted-identifier order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct QuantumGraph {
    graph: DiscreteGraph,
    lengths: Vec<f64>,
    potentials: Vec<Potential>,
    alphas: Vec<f64>,
}

impl TryFrom<GraphRecord> for QuantumGraph {
    type Error = Error;

    fn try_from(record: GraphRecord) -> Result<Self> {
        QuantumGraph::new(record)
    }
}

impl From<QuantumGraph> for GraphRecord {
    fn from(g: QuantumGraph) -> GraphRecord {
        g.to_record()
    }
}

impl QuantumGraph {
    /// Validate and index a graph record. Identifiers must be unique within
    /// vertices and within edges; endpoints must exist; lengths must be
    /// finite and positive; `α` must be finite or `+∞`; potentials must
    /// satisfy their shape invariants; and every vertex must be incident to
    /// at least one edge (an isolated vertex carries no metric structure).
    pub fn new(record: GraphRecord) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidGraph { reason };

        if record.vertices.is_empty() {
            return Err(invalid("graph has no vertices".into()));
        }

        let mut vertices = record.vertices;
        vertices.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = vertices.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate vertex id `{}`", w[0].id)));
        }
        for v in &vertices {
            if v.alpha.is_nan() || v.alpha == f64::NEG_INFINITY {
                return Err(invalid(format!(
                    "vertex `{}`: alpha must be a real number or +inf",
                    v.id
                )));
            }
        }

        let mut edges = record.edges;
        edges.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = edges.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate edge id `{}`", w[0].id)));
        }

        let vertex_ids: Vec<String> = vertices.iter().map(|v| v.id.clone()).collect();
        let alphas: Vec<f64> = vertices.iter().map(|v| v.alpha).collect();
        let vindex = |id: &str| -> Result<usize> {
            vertex_ids
                .binary_search_by(|probe| probe.as_str().cmp(id))
                .map_err(|_| Error::UnknownVertex { id: id.to_owned() })
        };

        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut ends = Vec::with_capacity(edges.len());
        let mut lengths = Vec::with_capacity(edges.len());
        let mut potentials = Vec::with_capacity(edges.len());
        for e in edges {
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(invalid(format!(
                    "edge `{}`: length must be finite and positive, got {}",
                    e.id, e.length
                )));
            }
            e.potential.validate(e.length, &e.id)?;
            ends.push((vindex(&e.from)?, vindex(&e.to)?));
            lengths.push(e.length);
            potentials.push(e.potential);
            edge_ids.push(e.id);
        }

        let graph = DiscreteGraph::build(vertex_ids, edge_ids, ends);
        for v in 0..graph.n_vertices() {
            if graph.degree(v) == 0 {
                return Err(invalid(format!(
                    "vertex `{}` is isolated (incident to no edge)",
                    graph.vertex_id(v)
                )));
            }
        }

        Ok(QuantumGraph {
            graph,
            lengths,
            potentials,
            alphas,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let record: GraphRecord = serde_json::from_str(json)?;
        QuantumGraph::new(record)
    }

    pub fn to_record(&self) -> GraphRecord {
        let vertices = (0..self.graph.n_vertices())
            .map(|v| VertexRecord {
                id: self.graph.vertex_id(v).to_owned(),
                alpha: self.alphas[v],
            })
            .collect();
        let edges = (0..self.graph.n_edges())
            .map(|e| {
                let (u, v) = self.graph.ends(e);
                EdgeRecord {
                    id: self.graph.edge_id(e).to_owned(),
                    from: self.graph.vertex_id(u).to_owned(),
                    to: self.graph.vertex_id(v).to_owned(),
                    length: self.lengths[e],
                    potential: self.potentials[e].clone(),
                }
            })
            .collect();
        GraphRecord { vertices, edges }
    }

    pub fn graph(&self) -> &DiscreteGraph {
        &self.graph
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn length(&self, e: usize) -> f64 {
        self.lengths[e]
    }

    pub fn potential(&self, e: usize) -> &Potential {
        &self.potentials[e]
    }

    pub fn edge_view(&self, e: usize) -> EdgeView<'_> {
        EdgeView {
            id: self.graph.edge_id(e),
            len: self.lengths[e],
            potential: &self.potentials[e],
        }
    }

    pub fn alpha(&self, v: usize) -> f64 {
        self.alphas[v]
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.alphas[v] == f64::INFINITY
    }

    /// Total edge length `L_E = Σ ℓ_e`.
    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Number of vertices with a finite δ coupling (written `|V°|` in the
    /// counting corridors; Dirichlet vertices decouple and do not count).
    pub fn finite_alpha_count(&self) -> usize {
        self.alphas.iter().filter(|a| a.is_finite()).count()
    }

    /// True iff `normalize` would return the graph unchanged: no loops, no
    /// parallel edges, and every potential already `Constant` or `Sampled`.
    pub fn is_normalized(&self) -> bool {
        if self
            .potentials
            .iter()
            .any(|p| matches!(p, Potential::Zero | Potential::PiecewiseConstant { .. }))
        {
            return false;
        }
        let mut pairs = BTreeSet::new();
        for e in 0..self.n_edges() {
            let (u, v) = self.graph.ends(e);
            if u == v {
                return false;
            }
            if !pairs.insert((u.min(v), u.max(v))) {
                return false;
            }
        }
        true
    }

    /// Simplify to an equivalent graph on which every algorithm downstream
    /// can assume: potentials are `Constant` or `Sampled`, no loops, no
    /// parallel edges. Three passes, in an order where only the last can
    /// encounter parallel classes and none can create new work for an
    /// earlier pass:
    ///
    /// 1. `Zero` becomes `Constant(0)`; each `PiecewiseConstant` edge is cut
    ///    at its breakpoints into constant pieces joined by fresh `α = 0`
    ///    vertices.
    /// 2. Each loop is cut at its midpoint (one fresh `α = 0` vertex, two
    ///    half-length edges). The two halves form a parallel pair handled by
    ///    pass 3.
    /// 3. In every parallel class the lexicographically smallest edge id is
    ///    kept; each other member is cut at its midpoint.
    ///
    /// Cutting at the midpoint is an arbitrary choice; correctness is
    /// spectrum preservation (a degree-2 Kirchhoff vertex is transparent),
    /// not the cut position. Fresh identifiers derive from the edge being
    /// cut (`E` gains vertex `E#m0` and pieces `E#0`, `E#1`, ...), skipping
    /// any identifier the graph already uses. The result is structurally
    /// equal to its own normalization.
    pub fn normalize(&self) -> Result<QuantumGraph> {
        let mut used_v: BTreeSet<String> = (0..self.n_vertices())
            .map(|v| self.graph.vertex_id(v).to_owned())
            .collect();
        let mut used_e: BTreeSet<String> = (0..self.n_edges())
            .map(|e| self.graph.edge_id(e).to_owned())
            .collect();
        let mut fresh_vertex = move |stem: &str| -> String {
            let mut j = 0usize;
            loop {
                let cand = format!("{stem}#m{j}");
                if used_v.insert(cand.clone()) {
                    return cand;
                }
                j += 1;
            }
        };
        let mut fresh_edge = move |stem: &str| -> String {
            let mut j = 0usize;
            loop {
                let cand = format!("{stem}#{j}");
                if used_e.insert(cand.clone()) {
                    return cand;
                }
                j += 1;
            }
        };

        let mut vertices: Vec<VertexRecord> = (0..self.n_vertices())
            .map(|v| VertexRecord {
                id: self.graph.vertex_id(v).to_owned(),
                alpha: self.alphas[v],
            })
            .collect();
        let mut edges: Vec<EdgeRecord> = Vec::with_capacity(self.n_edges());

        // Pass 1: eliminate Zero and PiecewiseConstant potentials.
        for e in 0..self.n_edges() {
            let (u, v) = self.graph.ends(e);
            let id = self.graph.edge_id(e).to_owned();
            let from = self.graph.vertex_id(u).to_owned();
            let to = self.graph.vertex_id(v).to_owned();
            let len = self.lengths[e];
            match &self.potentials[e] {
                Potential::Zero => edges.push(EdgeRecord {
                    id,
                    from,
                    to,
                    length: len,
                    potential: Potential::Constant { value: 0.0 },
                }),
                Potential::PiecewiseConstant {
                    breakpoints,
                    values,
                } => {
                    let mut cuts = vec![0.0];
                    cuts.extend_from_slice(breakpoints);
                    cuts.push(len);
                    let mut prev = from;
                    for (k, val) in values.iter().enumerate() {
                        let next = if k + 1 == values.len() {
                            to.clone()
                        } else {
                            let mid = fresh_vertex(&id);
                            vertices.push(VertexRecord {
                                id: mid.clone(),
                                alpha: 0.0,
                            });
                            mid
                        };
                        edges.push(EdgeRecord {
                            id: fresh_edge(&id),
                            from: prev,
                            to: next.clone(),
                            length: cuts[k + 1] - cuts[k],
                            potential: Potential::Constant { value: *val },
                        });
                        prev = next;
                    }
                }
                p => edges.push(EdgeRecord {
                    id,
                    from,
                    to,
                    length: len,
                    potential: p.clone(),
                }),
            }
        }

        // Cut one edge record at its midpoint, in place of itself.
        let mut cut_midpoint =
            |rec: EdgeRecord, vertices: &mut Vec<VertexRecord>, out: &mut Vec<EdgeRecord>| {
                let half = rec.length / 2.0;
                let (left, right) = rec.potential.split_at(half, rec.length);
                let mid = fresh_vertex(&rec.id);
                vertices.push(VertexRecord {
                    id: mid.clone(),
                    alpha: 0.0,
                });
                out.push(EdgeRecord {
                    id: fresh_edge(&rec.id),
                    from: rec.from,
                    to: mid.clone(),
                    length: half,
                    potential: left,
                });
                out.push(EdgeRecord {
                    id: fresh_edge(&rec.id),
                    from: mid,
                    to: rec.to,
                    length: rec.length - half,
                    potential: right,
                });
            };

        // Pass 2: cut loops.
        let mut no_loops = Vec::with_capacity(edges.len());
        for rec in edges {
            if rec.from == rec.to {
                cut_midpoint(rec, &mut vertices, &mut no_loops);
            } else {
                no_loops.push(rec);
            }
        }

        // Pass 3: cut all but the lexicographically smallest edge of every
        // parallel class. Fresh midpoint vertices have degree 2, so no new
        // parallel pair can appear.
        let mut classes: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, rec) in no_loops.iter().enumerate() {
            let key = if rec.from <= rec.to {
                (rec.from.clone(), rec.to.clone())
            } else {
                (rec.to.clone(), rec.from.clone())
            };
            classes.entry(key).or_default().push(i);
        }
        let mut subdivide = vec![false; no_loops.len()];
        for members in classes.values() {
            if members.len() < 2 {
                continue;
            }
            let keep = *members
                .iter()
                .min_by(|&&a, &&b| no_loops[a].id.cmp(&no_loops[b].id))
                .unwrap();
            for &i in members {
                subdivide[i] = i != keep;
            }
        }
        let mut final_edges = Vec::with_capacity(no_loops.len());
        for (i, rec) in no_loops.into_iter().enumerate() {
            if subdivide[i] {
                cut_midpoint(rec, &mut vertices, &mut final_edges);
            } else {
                final_edges.push(rec);
            }
        }

        QuantumGraph::new(GraphRecord {
            vertices,
            edges: final_edges,
        })
    }

    /// Verify the closure invariant of `x`: every edge incident to a vertex
    /// of `V_X` belongs to `E_X` (and all indices are in range).
    pub fn check_closure(&self, x: &SubsetX) -> Result<()> {
        if let Some(&v) = x.vset.iter().find(|&&v| v >= self.n_vertices()) {
            return Err(Error::InvalidGraph {
                reason: format!("subset vertex index {v} out of range"),
            });
        }
        if let Some(&e) = x.eset.iter().find(|&&e| e >= self.n_edges()) {
            return Err(Error::InvalidGraph {
                reason: format!("subset edge index {e} out of range"),
            });
        }
        for &v in &x.vset {
            for &(e, _) in self.graph.incidence(v) {
                if !x.eset.contains(&e) {
                    return Err(Error::InvalidGraph {
                        reason: format!(
                            "subset closure violated: vertex `{}` is in V_X but its \
                             incident edge `{}` is not in E_X",
                            self.graph.vertex_id(v),
                            self.graph.edge_id(e)
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Partition `x` into its connected components, where two edges sharing
    /// a vertex `υ` are joined only if `υ ∈ V_X`. Every vertex of `V_X`
    /// lands in the (single) component containing its incident edges; an
    /// edge with no endpoint in `V_X` is a singleton component. Returned in
    /// order of each component's smallest edge index.
    pub fn components_of_subset(&self, x: &SubsetX) -> Result<Vec<SubsetX>> {
        self.check_closure(x)?;
        let edges: Vec<usize> = x.eset.iter().copied().collect();
        let pos: BTreeMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut parent: Vec<usize> = (0..edges.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] == i {
                return i;
            }
            let root = find(parent, parent[i]);
            parent[i] = root;
            root
        }
        for &v in &x.vset {
            let mut first: Option<usize> = None;
            for &(e, _) in self.graph.incidence(v) {
                let i = pos[&e];
                match first {
                    None => first = Some(i),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, i));
                        if a != b {
                            parent[a] = b;
                        }
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, SubsetX> = BTreeMap::new();
        for (i, &e) in edges.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().eset.insert(e);
        }
        for &v in &x.vset {
            let any = self.graph.incidence(v)[0].0;
            let root = find(&mut parent, pos[&any]);
            groups.get_mut(&root).unwrap().vset.insert(v);
        }
        let mut components: Vec<SubsetX> = groups.into_values().collect();
        components.sort_by_key(|c| *c.eset.iter().next().unwrap());
        Ok(components)
    }

    /// Boundary of `x`: vertices outside `V_X` incident to an edge of
    /// `E_X`, split into `(finite α, Dirichlet)`. The two sets are disjoint
    /// from each other and from `V_X` by construction.
    pub fn boundary(&self, x: &SubsetX) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
        self.check_closure(x)?;
        let mut finite = BTreeSet::new();
        let mut dirichlet = BTreeSet::new();
        for &e in &x.eset {
            let (u, v) = self.graph.ends(e);
            for w in [u, v] {
                if !x.vset.contains(&w) {
                    if self.is_dirichlet(w) {
                        dirichlet.insert(w);
                    } else {
                        finite.insert(w);
                    }
                }
            }
        }
        Ok((finite, dirichlet))
    }

    /// Maximal cycles all of whose vertices have degree 2 except at most
    /// one attachment vertex. Returns `(cycle edges, attachment)` with
    /// `None` for a standalone cycle component; ordered by smallest edge
    /// index. Assumes a normalized graph (no loops).
    pub fn pure_cycles(&self) -> Vec<(Vec<usize>, Option<usize>)> {
        let g = &self.graph;
        let mut found: Vec<(Vec<usize>, Option<usize>)> = Vec::new();
        let mut seen_sets: BTreeSet<Vec<usize>> = BTreeSet::new();

        // Cycles attached at a vertex of degree != 2: walk each incident
        // edge through degree-2 vertices; a walk returning to its start is a
        // pure cycle. Each such cycle is found once per chain end, so dedupe
        // by its sorted edge set.
        for u in 0..g.n_vertices() {
            if g.degree(u) == 2 {
                continue;
            }
            for &(e0, _) in g.incidence(u) {
                let mut chain = vec![e0];
                let mut prev_edge = e0;
                let mut cur = g.other_end(e0, u);
                while g.degree(cur) == 2 && cur != u {
                    let &(next, _) = g
                        .incidence(cur)
                        .iter()
                        .find(|&&(e, _)| e != prev_edge)
                        .unwrap();
                    chain.push(next);
                    prev_edge = next;
                    cur = g.other_end(next, cur);
                }
                if cur == u && chain.len() >= 2 {
                    let mut key = chain.clone();
                    key.sort_unstable();
                    if seen_sets.insert(key.clone()) {
                        found.push((key, Some(u)));
                    }
                }
            }
        }

        // Standalone cycles: connected components in which every vertex has
        // degree 2 are single cycles with no attachment.
        let mut comp_seen = vec![false; g.n_vertices()];
        for start in 0..g.n_vertices() {
            if comp_seen[start] {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            comp_seen[start] = true;
            let mut verts = vec![start];
            while let Some(v) = queue.pop_front() {
                for &(e, _) in g.incidence(v) {
                    let w = g.other_end(e, v);
                    if !comp_seen[w] {
                        comp_seen[w] = true;
                        verts.push(w);
                        queue.push_back(w);
                    }
                }
            }
            if verts.iter().all(|&v| g.degree(v) == 2) {
                let mut edges: BTreeSet<usize> = BTreeSet::new();
                for &v in &verts {
                    for &(e, _) in g.incidence(v) {
                        edges.insert(e);
                    }
                }
                found.push((edges.into_iter().collect(), None));
            }
        }

        found.sort_by_key(|(edges, _)| edges[0]);
        found
    }

    /// Truncate the universal cover at combinatorial depth `depth` around a
    /// lift of `root`, without an edge budget.
    pub fn unfold(&self, root: &str, depth: usize) -> Result<TruncatedTree> {
        self.unfold_inner(root, depth, usize::MAX)
    }

    /// Truncate the universal cover, failing with `UnfoldCapExceeded` as
    /// soon as the tree would exceed `edge_cap` edges.
    pub fn unfold_with_cap(
        &self,
        root: &str,
        depth: usize,
        edge_cap: usize,
    ) -> Result<TruncatedTree> {
        self.unfold_inner(root, depth, edge_cap)
    }

    /// Breadth-first non-backtracking unfolding. Every copy of a base
    /// vertex reached strictly before `depth` is expanded along all
    /// incident base edges except the arrival edge, so interior copies
    /// reproduce the base degree exactly. A copy reached at `depth` joins
    /// the frontier, with `α` forced to `+∞`, only if continuations remain
    /// unexplored there; a completed leaf (degree-1 base vertex reached
    /// along its only edge) keeps its own `α`, which is what makes the
    /// unfolding of a tree at depth ≥ diameter an isomorphic copy, vertex
    /// conditions included.
    ///
    /// Tree edges keep the base orientation, so lengths and potentials copy
    /// field-for-field. Identifiers are `{base id}@{k}` with `k` counting
    /// copies of that base object in breadth-first order.
    fn unfold_inner(&self, root: &str, depth: usize, edge_cap: usize) -> Result<TruncatedTree> {
        if !self.graph.connected() {
            return Err(Error::InvalidGraph {
                reason: "unfolding requires a connected graph".into(),
            });
        }
        if self.graph.ends.iter().any(|&(u, v)| u == v) {
            return Err(Error::InvalidGraph {
                reason: "unfolding requires a normalized (loop-free) graph".into(),
            });
        }
        let root_idx = self.graph.vertex_index(root)?;
        if depth == 0 {
            return Err(Error::DegenerateUnfold {
                degree: self.graph.degree(root_idx),
            });
        }

        struct TreeVertex {
            base: usize,
            alpha: f64,
        }
        struct TreeEdge {
            base: usize,
            from: usize,
            to: usize,
        }
        let mut tvs: Vec<TreeVertex> = vec![TreeVertex {
            base: root_idx,
            alpha: self.alphas[root_idx],
        }];
        let mut tes: Vec<TreeEdge> = Vec::new();
        let mut frontier_raw: BTreeSet<usize> = BTreeSet::new();
        // (tree vertex, arrival base edge, depth)
        let mut queue: VecDeque<(usize, Option<usize>, usize)> = VecDeque::from([(0, None, 0)]);

        while let Some((tv, came, d)) = queue.pop_front() {
            let bv = tvs[tv].base;
            if d == depth {
                let remaining = self.graph.degree(bv) - usize::from(came.is_some());
                if remaining > 0 {
                    frontier_raw.insert(tv);
                    tvs[tv].alpha = f64::INFINITY;
                }
                continue;
            }
            for &(e, end) in self.graph.incidence(bv) {
                if Some(e) == came {
                    continue;
                }
                if tes.len() == edge_cap {
                    return Err(Error::UnfoldCapExceeded {
                        depth,
                        edges: edge_cap + 1,
                        cap: edge_cap,
                    });
                }
                let bw = self.graph.other_end(e, bv);
                let tw = tvs.len();
                tvs.push(TreeVertex {
                    base: bw,
                    alpha: self.alphas[bw],
                });
                let (tf, tt) = match end {
                    EdgeEnd::From => (tv, tw),
                    EdgeEnd::To => (tw, tv),
                };
                tes.push(TreeEdge {
                    base: e,
                    from: tf,
                    to: tt,
                });
                queue.push_back((tw, Some(e), d + 1));
            }
        }

        let mut vcount = vec![0usize; self.n_vertices()];
        let v_ids: Vec<String> = tvs
            .iter()
            .map(|tv| {
                let k = vcount[tv.base];
                vcount[tv.base] += 1;
                format!("{}@{}", self.graph.vertex_id(tv.base), k)
            })
            .collect();
        let mut ecount = vec![0usize; self.n_edges()];
        let e_ids: Vec<String> = tes
            .iter()
            .map(|te| {
                let k = ecount[te.base];
                ecount[te.base] += 1;
                format!("{}@{}", self.graph.edge_id(te.base), k)
            })
            .collect();

        let record = GraphRecord {
            vertices: tvs
                .iter()
                .zip(&v_ids)
                .map(|(tv, id)| VertexRecord {
                    id: id.clone(),
                    alpha: tv.alpha,
                })
                .collect(),
            edges: tes
                .iter()
                .zip(&e_ids)
                .map(|(te, id)| EdgeRecord {
                    id: id.clone(),
                    from: v_ids[te.from].clone(),
                    to: v_ids[te.to].clone(),
                    length: self.lengths[te.base],
                    potential: self.potentials[te.base].clone(),
                })
                .collect(),
        };
        let tree = QuantumGraph::new(record)?;

        // Construction order differs from the sorted index order of the new
        // graph; remap the cover data through the identifiers.
        let mut vertex_map = vec![0usize; tvs.len()];
        for (i, id) in v_ids.iter().enumerate() {
            vertex_map[tree.graph.vertex_index(id)?] = tvs[i].base;
        }
        let mut edge_map = vec![0usize; tes.len()];
        for (i, id) in e_ids.iter().enumerate() {
            edge_map[tree.graph.edge_index(id)?] = tes[i].base;
        }
        let frontier: BTreeSet<usize> = frontier_raw
            .iter()
            .map(|&i| tree.graph.vertex_index(&v_ids[i]))
            .collect::<Result<_>>()?;

        Ok(TruncatedTree {
            tree,
            vertex_map,
            edge_map,
            frontier,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgraphs::{cycle3, fig2, interval, k5, lollipop, triangle};

    fn vset(g: &QuantumGraph, ids: &[&str]) -> BTreeSet<usize> {
        ids.iter()
            .map(|id| g.graph().vertex_index(id).unwrap())
            .collect()
    }

    fn eset(g: &QuantumGraph, ids: &[&str]) -> BTreeSet<usize> {
        ids.iter()
            .map(|id| g.graph().edge_index(id).unwrap())
            .collect()
    }

    fn edge_ids(g: &QuantumGraph, edges: &BTreeSet<usize>) -> Vec<String> {
        edges
            .iter()
            .map(|&e| g.graph().edge_id(e).to_owned())
            .collect()
    }

    #[test]
    fn json_round_trip_preserves_every_field() {
        let json = r#"{
            "vertices": [
                {"id": "a", "alpha": 0.0},
                {"id": "b", "alpha": "inf"},
                {"id": "c", "alpha": -1.5}
            ],
            "edges": [
                {"id": "e1", "from": "a", "to": "b", "length": 1.25,
                 "potential": {"type": "zero"}},
                {"id": "e2", "from": "b", "to": "c", "length": 2.0,
                 "potential": {"type": "constant", "value": 3.5}},
                {"id": "e3", "from": "c", "to": "a", "length": 1.0,
                 "potential": {"type": "piecewise_constant",
                               "breakpoints": [0.4], "values": [1.0, 2.0]}},
                {"id": "e4", "from": "a", "to": "c", "length": 1.0,
                 "potential": {"type": "sampled",
                               "grid": [0.0, 0.5, 1.0], "values": [0.0, 1.0, 0.5]}}
            ]
        }"#;
        let g = QuantumGraph::from_json_str(json).expect("valid graph must parse");
        let serialized = serde_json::to_string(&g).expect("serialization must succeed");
        let g2 = QuantumGraph::from_json_str(&serialized).expect("round trip must parse");
        assert_eq!(g, g2, "parse(serialize(g)) must equal g");
        assert!(
            serialized.contains("\"inf\""),
            "Dirichlet alpha must serialize as the string \"inf\": {serialized}"
        );
        let b = g.graph().vertex_index("b").unwrap();
        assert!(g.is_dirichlet(b), "vertex b must deserialize as Dirichlet");
    }

    #[test]
    fn validation_rejects_malformed_graphs() {
        let cases: Vec<(&str, GraphRecord)> = vec![
            (
                "duplicate vertex id",
                GraphRecord {
                    vertices: vec![
                        VertexRecord {
                            id: "a".into(),
                            alpha: 0.0,
                        },
                        VertexRecord {
                            id: "a".into(),
                            alpha: 1.0,
                        },
                    ],
                    edges: vec![],
                },
            ),
            (
                "unknown endpoint",
                GraphRecord {
                    vertices: vec![VertexRecord {
                        id: "a".into(),
                        alpha: 0.0,
                    }],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "zzz".into(),
                        length: 1.0,
                        potential: Potential::Zero,
                    }],
                },
            ),
            (
                "nonpositive length",
                GraphRecord {
                    vertices: vec![VertexRecord {
                        id: "a".into(),
                        alpha: 0.0,
                    }],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "a".into(),
                        length: 0.0,
                        potential: Potential::Zero,
                    }],
                },
            ),
            (
                "negative-infinite alpha",
                GraphRecord {
                    vertices: vec![VertexRecord {
                        id: "a".into(),
                        alpha: f64::NEG_INFINITY,
                    }],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "a".into(),
                        length: 1.0,
                        potential: Potential::Zero,
                    }],
                },
            ),
            (
                "isolated vertex",
                GraphRecord {
                    vertices: vec![
                        VertexRecord {
                            id: "a".into(),
                            alpha: 0.0,
                        },
                        VertexRecord {
                            id: "b".into(),
                            alpha: 0.0,
                        },
                        VertexRecord {
                            id: "z".into(),
                            alpha: 0.0,
                        },
                    ],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "b".into(),
                        length: 1.0,
                        potential: Potential::Zero,
                    }],
                },
            ),
            (
                "breakpoint outside the edge",
                GraphRecord {
                    vertices: vec![
                        VertexRecord {
                            id: "a".into(),
                            alpha: 0.0,
                        },
                        VertexRecord {
                            id: "b".into(),
                            alpha: 0.0,
                        },
                    ],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "b".into(),
                        length: 1.0,
                        potential: Potential::PiecewiseConstant {
                            breakpoints: vec![1.5],
                            values: vec![0.0, 1.0],
                        },
                    }],
                },
            ),
            (
                "sampled grid not covering the edge",
                GraphRecord {
                    vertices: vec![
                        VertexRecord {
                            id: "a".into(),
                            alpha: 0.0,
                        },
                        VertexRecord {
                            id: "b".into(),
                            alpha: 0.0,
                        },
                    ],
                    edges: vec![EdgeRecord {
                        id: "e".into(),
                        from: "a".into(),
                        to: "b".into(),
                        length: 2.0,
                        potential: Potential::Sampled {
                            grid: vec![0.0, 1.0],
                            values: vec![0.0, 1.0],
                        },
                    }],
                },
            ),
        ];
        for (what, record) in cases {
            assert!(
                QuantumGraph::new(record).is_err(),
                "{what} must be rejected"
            );
        }
    }

    #[test]
    fn potential_eval_matches_interpolant_and_step_semantics() {
        let pc = Potential::PiecewiseConstant {
            breakpoints: vec![0.4, 0.7],
            values: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(pc.eval(0.0), 1.0);
        assert_eq!(pc.eval(0.39), 1.0);
        assert_eq!(
            pc.eval(0.4),
            2.0,
            "step value at a breakpoint is the right segment"
        );
        assert_eq!(pc.eval(0.9), 3.0);
        assert_eq!(pc.bounds(), (1.0, 3.0));

        let s = Potential::Sampled {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 2.0, 1.0],
        };
        assert_eq!(s.eval(0.5), 1.0, "linear interpolation between samples");
        assert_eq!(s.eval(1.5), 1.5);
        assert_eq!(s.eval(2.0), 1.0);
        assert_eq!(s.bounds(), (0.0, 2.0));
    }

    #[test]
    fn normalize_splits_loop_into_simple_cycle() {
        // Triangle with a loop at A. The loop is cut at its midpoint, and
        // the two resulting halves are a parallel pair, so one of them is
        // cut again: 5 vertices, 6 edges, strictly simple.
        let mut record = triangle().to_record();
        record.edges.push(EdgeRecord {
            id: "LL".into(),
            from: "a".into(),
            to: "a".into(),
            length: 2.0,
            potential: Potential::Zero,
        });
        let g = QuantumGraph::new(record).unwrap();
        let n = g.normalize().unwrap();
        assert_eq!(
            n.n_vertices(),
            5,
            "one midpoint from the loop, one from the parallel pass"
        );
        assert_eq!(
            n.n_edges(),
            6,
            "loop becomes 3 edges alongside the triangle's 3"
        );
        assert!(
            n.is_normalized(),
            "output must be simple with constant potentials"
        );
        assert!(
            (n.total_length() - g.total_length()).abs() < 1e-12,
            "subdivision must preserve total length"
        );
        let loop_pieces: Vec<&str> = (0..n.n_edges())
            .map(|e| n.graph().edge_id(e))
            .filter(|id| id.starts_with("LL"))
            .collect();
        assert_eq!(
            loop_pieces,
            vec!["LL#0", "LL#1#0", "LL#1#1"],
            "loop pieces carry derived identifiers ordered by the cut sequence"
        );
    }

    #[test]
    fn normalize_is_identity_on_simple_constant_graphs() {
        let g = fig2();
        let n = g.normalize().unwrap();
        // fig2 uses Zero potentials, which normalize rewrites to
        // Constant(0); everything else must be untouched.
        assert_eq!(n.n_vertices(), g.n_vertices());
        assert_eq!(n.n_edges(), g.n_edges());
        for e in 0..n.n_edges() {
            assert_eq!(
                n.potential(e),
                &Potential::Constant { value: 0.0 },
                "zero potentials become Constant(0)"
            );
        }
        let again = n.normalize().unwrap();
        assert_eq!(again, n, "normalize must be idempotent");
    }

    #[test]
    fn normalize_splits_breakpoints_into_kirchhoff_joints() {
        let record = GraphRecord {
            vertices: vec![
                VertexRecord {
                    id: "a".into(),
                    alpha: 1.0,
                },
                VertexRecord {
                    id: "b".into(),
                    alpha: f64::INFINITY,
                },
            ],
            edges: vec![EdgeRecord {
                id: "e".into(),
                from: "a".into(),
                to: "b".into(),
                length: 1.0,
                potential: Potential::PiecewiseConstant {
                    breakpoints: vec![0.4],
                    values: vec![1.0, 2.0],
                },
            }],
        };
        let n = QuantumGraph::new(record).unwrap().normalize().unwrap();
        assert_eq!(n.n_vertices(), 3);
        assert_eq!(n.n_edges(), 2);
        let mid = n.graph().vertex_index("e#m0").unwrap();
        assert_eq!(n.alpha(mid), 0.0, "breakpoint joint must be Kirchhoff");
        let e0 = n.graph().edge_index("e#0").unwrap();
        let e1 = n.graph().edge_index("e#1").unwrap();
        assert_eq!(n.length(e0), 0.4);
        assert!((n.length(e1) - 0.6).abs() < 1e-15);
        assert_eq!(n.potential(e0), &Potential::Constant { value: 1.0 });
        assert_eq!(n.potential(e1), &Potential::Constant { value: 2.0 });
        let again = n.normalize().unwrap();
        assert_eq!(again, n, "normalize must be idempotent");
    }

    #[test]
    fn normalize_keeps_lexicographically_smallest_parallel_edge() {
        let record = GraphRecord {
            vertices: vec![
                VertexRecord {
                    id: "a".into(),
                    alpha: 0.0,
                },
                VertexRecord {
                    id: "b".into(),
                    alpha: 0.0,
                },
            ],
            edges: vec![
                EdgeRecord {
                    id: "q".into(),
                    from: "a".into(),
                    to: "b".into(),
                    length: 1.0,
                    potential: Potential::Zero,
                },
                EdgeRecord {
                    id: "p".into(),
                    from: "b".into(),
                    to: "a".into(),
                    length: 2.0,
                    potential: Potential::Zero,
                },
            ],
        };
        let n = QuantumGraph::new(record).unwrap().normalize().unwrap();
        assert!(n.is_normalized());
        assert_eq!(n.n_edges(), 3, "the kept edge plus two halves of the other");
        assert!(
            n.graph().edge_index("p").is_ok(),
            "`p` < `q` so `p` must survive intact"
        );
        assert!(
            n.graph().edge_index("q#0").is_ok() && n.graph().edge_index("q#1").is_ok(),
            "`q` must be subdivided"
        );
    }

    #[test]
    fn fig2_subset_components_and_boundary_match_hand_count() {
        let g = fig2();
        let x = SubsetX::new(vset(&g, &["C", "D"]), eset(&g, &["AB", "AC", "AD", "BC"]));
        let comps = g.components_of_subset(&x).unwrap();
        let summaries: Vec<(Vec<String>, Vec<String>)> = comps
            .iter()
            .map(|c| {
                (
                    c.vset
                        .iter()
                        .map(|&v| g.graph().vertex_id(v).to_owned())
                        .collect(),
                    edge_ids(&g, &c.eset),
                )
            })
            .collect();
        let expected = vec![
            (vec![], vec!["AB".to_owned()]),
            (vec!["C".to_owned()], vec!["AC".to_owned(), "BC".to_owned()]),
            (vec!["D".to_owned()], vec!["AD".to_owned()]),
        ];
        assert_eq!(
            summaries, expected,
            "X = ({{C,D}}, {{AB,AC,AD,BC}}) must split into a lone edge and two stars"
        );

        let (finite, dirichlet) = g.boundary(&x).unwrap();
        let finite_ids: Vec<&str> = finite.iter().map(|&v| g.graph().vertex_id(v)).collect();
        assert_eq!(
            finite_ids,
            vec!["A", "B"],
            "finite boundary must be {{A, B}}"
        );
        assert!(dirichlet.is_empty(), "fig2 has no Dirichlet vertices");
    }

    #[test]
    fn subset_closure_violation_is_rejected() {
        let g = fig2();
        // C is in V_X but only one of its two incident edges is in E_X.
        let x = SubsetX::new(vset(&g, &["C"]), eset(&g, &["AC"]));
        let err = g.components_of_subset(&x).unwrap_err();
        assert!(
            err.to_string().contains("closure"),
            "closure violation must name the problem, got: {err}"
        );
    }

    #[test]
    fn single_edge_subset_is_one_component_with_empty_vset() {
        let g = fig2();
        let x = SubsetX::new(BTreeSet::new(), eset(&g, &["BE"]));
        let comps = g.components_of_subset(&x).unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].vset.is_empty());
    }

    #[test]
    fn empty_subset_has_empty_partition_and_boundary() {
        let g = fig2();
        let x = SubsetX::default();
        assert!(g.components_of_subset(&x).unwrap().is_empty());
        let (finite, dirichlet) = g.boundary(&x).unwrap();
        assert!(finite.is_empty() && dirichlet.is_empty());
    }

    #[test]
    fn path_boundary_splits_by_alpha() {
        let record = GraphRecord {
            vertices: vec![
                VertexRecord {
                    id: "a".into(),
                    alpha: f64::INFINITY,
                },
                VertexRecord {
                    id: "b".into(),
                    alpha: 0.0,
                },
                VertexRecord {
                    id: "c".into(),
                    alpha: 0.0,
                },
            ],
            edges: vec![
                EdgeRecord {
                    id: "ab".into(),
                    from: "a".into(),
                    to: "b".into(),
                    length: 1.0,
                    potential: Potential::Zero,
                },
                EdgeRecord {
                    id: "bc".into(),
                    from: "b".into(),
                    to: "c".into(),
                    length: 1.0,
                    potential: Potential::Zero,
                },
            ],
        };
        let g = QuantumGraph::new(record).unwrap();
        let x = SubsetX::new(BTreeSet::new(), eset(&g, &["ab"]));
        let (finite, dirichlet) = g.boundary(&x).unwrap();
        assert_eq!(
            finite
                .iter()
                .map(|&v| g.graph().vertex_id(v))
                .collect::<Vec<_>>(),
            vec!["b"]
        );
        assert_eq!(
            dirichlet
                .iter()
                .map(|&v| g.graph().vertex_id(v))
                .collect::<Vec<_>>(),
            vec!["a"]
        );
    }

    #[test]
    fn induced_acyclicity_on_k5_and_fig2() {
        let k5 = k5();
        let all: BTreeSet<usize> = (0..5).collect();
        assert!(
            !k5.graph().induced_acyclic(&all),
            "K5 contains triangles, the full vertex set cannot be acyclic"
        );
        let single: BTreeSet<usize> = [0].into();
        assert!(k5.graph().induced_acyclic(&single));

        let g = fig2();
        assert!(
            g.graph().induced_acyclic(&vset(&g, &["C", "D"])),
            "C and D are nonadjacent in fig2"
        );
        assert!(
            !g.graph().induced_acyclic(&vset(&g, &["A", "B", "C"])),
            "A, B, C span a triangle in fig2"
        );
    }

    #[test]
    fn pure_cycle_detection_across_shapes() {
        let tri = triangle();
        let cycles = tri.pure_cycles();
        assert_eq!(cycles.len(), 1, "a standalone triangle is one pure cycle");
        assert_eq!(cycles[0].0.len(), 3);
        assert_eq!(cycles[0].1, None, "standalone cycle has no attachment");

        let lol = lollipop();
        let cycles = lol.pure_cycles();
        assert_eq!(cycles.len(), 1);
        let (edges, attach) = &cycles[0];
        assert_eq!(edges.len(), 3);
        assert_eq!(
            attach.map(|v| lol.graph().vertex_id(v)),
            Some("u"),
            "the lollipop cycle attaches at u"
        );

        assert!(
            k5().pure_cycles().is_empty(),
            "every K5 vertex has degree 4, no pure cycles"
        );
    }

    #[test]
    fn pure_cycles_find_subdivided_loop_image() {
        let mut record = triangle().to_record();
        record.edges.push(EdgeRecord {
            id: "LL".into(),
            from: "a".into(),
            to: "a".into(),
            length: 2.0,
            potential: Potential::Zero,
        });
        let n = QuantumGraph::new(record).unwrap().normalize().unwrap();
        let cycles = n.pure_cycles();
        // Two pure cycles attached at `a`: the subdivided loop image, and the
        // original triangle itself (b and c have degree 2 once the loop makes
        // `a` the only branching vertex).
        assert_eq!(cycles.len(), 2, "subdivided loop image plus the triangle");
        let (edges, attach) = &cycles[0];
        assert_eq!(attach.map(|v| n.graph().vertex_id(v)), Some("a"));
        let ids: Vec<&str> = edges.iter().map(|&e| n.graph().edge_id(e)).collect();
        assert_eq!(ids, vec!["LL#0", "LL#1#0", "LL#1#1"]);
        let (tri_edges, tri_attach) = &cycles[1];
        assert_eq!(tri_attach.map(|v| n.graph().vertex_id(v)), Some("a"));
        let tri_ids: Vec<&str> = tri_edges.iter().map(|&e| n.graph().edge_id(e)).collect();
        assert_eq!(tri_ids, vec!["ab", "bc", "ca"]);
    }

    #[test]
    fn unfold_triangle_depth_two_is_path_of_four_edges() {
        let g = triangle();
        let t = g.unfold("a", 2).unwrap();
        assert_eq!(
            t.tree.n_vertices(),
            5,
            "1 root + 2 at depth 1 + 2 at depth 2"
        );
        assert_eq!(t.tree.n_edges(), 4);
        assert_eq!(
            t.frontier.len(),
            2,
            "both depth-2 copies still have unexplored continuations"
        );
        for &v in &t.frontier {
            assert!(
                t.tree.is_dirichlet(v),
                "frontier vertices must be Dirichlet"
            );
        }
    }

    #[test]
    fn unfold_k5_depth_one_is_a_star() {
        let g = k5();
        let t = g.unfold("v1", 1).unwrap();
        assert_eq!(t.tree.n_vertices(), 5);
        assert_eq!(t.tree.n_edges(), 4, "the root lifts its 4 incident edges");
        assert_eq!(t.frontier.len(), 4);
        let root = t.tree.graph().vertex_index("v1@0").unwrap();
        assert_eq!(t.tree.graph().degree(root), 4);
        assert!(!t.frontier.contains(&root));
    }

    #[test]
    fn unfold_of_tree_at_diameter_is_isomorphic_copy() {
        // Path a - b - c - d with distinct alphas; diameter 3. Unfolding
        // from the endpoint a at depth 3 must reproduce the path exactly,
        // including the leaf condition at d.
        let record = GraphRecord {
            vertices: vec![
                VertexRecord {
                    id: "a".into(),
                    alpha: 1.0,
                },
                VertexRecord {
                    id: "b".into(),
                    alpha: 0.0,
                },
                VertexRecord {
                    id: "c".into(),
                    alpha: 0.5,
                },
                VertexRecord {
                    id: "d".into(),
                    alpha: 2.0,
                },
            ],
            edges: vec![
                EdgeRecord {
                    id: "ab".into(),
                    from: "a".into(),
                    to: "b".into(),
                    length: 1.0,
                    potential: Potential::Constant { value: 1.0 },
                },
                EdgeRecord {
                    id: "bc".into(),
                    from: "c".into(),
                    to: "b".into(),
                    length: 2.0,
                    potential: Potential::Constant { value: 2.0 },
                },
                EdgeRecord {
                    id: "cd".into(),
                    from: "c".into(),
                    to: "d".into(),
                    length: 3.0,
                    potential: Potential::Constant { value: 3.0 },
                },
            ],
        };
        let g = QuantumGraph::new(record).unwrap();
        for depth in [3, 4, 10] {
            let t = g.unfold("a", depth).unwrap();
            assert!(
                t.frontier.is_empty(),
                "depth {depth} >= diameter must leave no frontier"
            );
            assert_eq!(t.tree.n_vertices(), g.n_vertices());
            assert_eq!(t.tree.n_edges(), g.n_edges());
            let mut seen_v = vec![false; g.n_vertices()];
            for (tv, &bv) in t.vertex_map.iter().enumerate() {
                assert!(!seen_v[bv], "each base vertex must appear exactly once");
                seen_v[bv] = true;
                assert_eq!(
                    t.tree.alpha(tv),
                    g.alpha(bv),
                    "alpha must be preserved at `{}`",
                    g.graph().vertex_id(bv)
                );
                assert_eq!(t.tree.graph().degree(tv), g.graph().degree(bv));
            }
            let mut seen_e = vec![false; g.n_edges()];
            for (te, &be) in t.edge_map.iter().enumerate() {
                assert!(!seen_e[be], "each base edge must appear exactly once");
                seen_e[be] = true;
                assert_eq!(t.tree.length(te), g.length(be));
                assert_eq!(t.tree.potential(te), g.potential(be));
            }
        }
    }

    #[test]
    fn unfold_interval_has_empty_frontier_and_one_edge() {
        let g = interval();
        let t = g.unfold("v1", 3).unwrap();
        assert_eq!(t.tree.n_edges(), 1);
        assert!(
            t.frontier.is_empty(),
            "the far end arrives with no continuations left, so it is not cut"
        );
        assert!(
            (0..t.tree.n_vertices()).all(|v| t.tree.is_dirichlet(v)),
            "both interval ends carry their own Dirichlet condition"
        );
    }

    #[test]
    fn unfold_counts_match_enumeration_on_fixtures() {
        // Edge and frontier counts from direct non-backtracking walk
        // enumeration on the base graphs.
        let cases: Vec<(QuantumGraph, &str, usize, usize, usize)> = vec![
            (fig2(), "A", 3, 9, 2),
            (fig2(), "A", 4, 13, 2),
            (lollipop(), "c1", 3, 8, 2),
            (lollipop(), "p", 3, 5, 2),
            (k5(), "v1", 3, 52, 36),
        ];
        for (g, root, depth, edges, frontier) in cases {
            let t = g.unfold(root, depth).unwrap();
            assert_eq!(
                t.tree.n_edges(),
                edges,
                "edge count at depth {depth} from {root}"
            );
            assert_eq!(
                t.frontier.len(),
                frontier,
                "frontier count at depth {depth} from {root}"
            );
        }
    }

    #[test]
    fn unfold_interior_copies_satisfy_covering_conditions() {
        let g = fig2();
        let t = g.unfold("A", 3).unwrap();
        for tv in 0..t.tree.n_vertices() {
            if t.frontier.contains(&tv) {
                assert!(t.tree.is_dirichlet(tv));
                continue;
            }
            let bv = t.vertex_map[tv];
            assert_eq!(
                t.tree.alpha(tv),
                g.alpha(bv),
                "interior copy of `{}` must keep its alpha",
                g.graph().vertex_id(bv)
            );
            // Interior copies reached strictly before the cut depth
            // reproduce the full base degree; copies at the cut depth that
            // escaped the frontier are exactly the completed leaves.
            let deg = t.tree.graph().degree(tv);
            assert!(
                deg == g.graph().degree(bv) || (deg == 1 && g.graph().degree(bv) == 1),
                "interior copy of `{}` has degree {deg}, base degree {}",
                g.graph().vertex_id(bv),
                g.graph().degree(bv)
            );
        }
        for te in 0..t.tree.n_edges() {
            let be = t.edge_map[te];
            assert_eq!(t.tree.length(te), g.length(be));
            assert_eq!(t.tree.potential(te), g.potential(be));
        }
    }

    #[test]
    fn unfold_rejects_degenerate_and_invalid_inputs() {
        let g = triangle();
        match g.unfold("a", 0) {
            Err(Error::DegenerateUnfold { degree }) => {
                assert_eq!(degree, 2, "triangle vertices have degree 2")
            }
            other => panic!("depth-0 unfold must be degenerate, got {other:?}"),
        }
        assert!(matches!(
            g.unfold("nope", 2),
            Err(Error::UnknownVertex { .. })
        ));

        let mut record = triangle().to_record();
        record.edges.push(EdgeRecord {
            id: "LL".into(),
            from: "a".into(),
            to: "a".into(),
            length: 1.0,
            potential: Potential::Zero,
        });
        let with_loop = QuantumGraph::new(record).unwrap();
        assert!(
            with_loop.unfold("a", 2).is_err(),
            "unfolding must reject loops (normalize first)"
        );
    }

    #[test]
    fn unfold_edge_cap_aborts_early() {
        let g = k5();
        match g.unfold_with_cap("v1", 6, 600) {
            Err(Error::UnfoldCapExceeded { cap, .. }) => assert_eq!(cap, 600),
            other => panic!("K5 depth 6 needs 1456 edges, expected cap error, got {other:?}"),
        }
        assert!(
            g.unfold_with_cap("v1", 5, 600).is_ok(),
            "depth 5 needs 484 edges"
        );
    }

    #[test]
    fn girth_of_fixtures() {
        assert_eq!(triangle().graph().girth(), Some(3));
        assert_eq!(k5().graph().girth(), Some(3));
        assert_eq!(lollipop().graph().girth(), Some(3));
        assert_eq!(cycle3().graph().girth(), Some(3));
        assert_eq!(
            interval().graph().girth(),
            None,
            "a single edge has no cycle"
        );
        let path = fig2().unfold("A", 2).unwrap();
        assert_eq!(path.tree.graph().girth(), None, "trees have no cycle");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Random small connected simple-ish graph: a path backbone plus
        /// random extra edges, random lengths, alphas in {0, 1.7, inf},
        /// loops allowed through the extra-edge draw.
        fn arb_graph() -> impl Strategy<Value = QuantumGraph> {
            (
                2usize..6,
                proptest::collection::vec((0usize..6, 0usize..6), 0..4),
            )
                .prop_map(|(n, extra)| {
                    let vertices: Vec<VertexRecord> = (0..n)
                        .map(|i| VertexRecord {
                            id: format!("v{i}"),
                            alpha: match i % 3 {
                                0 => 0.0,
                                1 => 1.7,
                                _ => f64::INFINITY,
                            },
                        })
                        .collect();
                    let mut edges: Vec<EdgeRecord> = (1..n)
                        .map(|i| EdgeRecord {
                            id: format!("p{i}"),
                            from: format!("v{}", i - 1),
                            to: format!("v{i}"),
                            length: 0.5 + 0.25 * i as f64,
                            potential: Potential::Zero,
                        })
                        .collect();
                    for (k, (a, b)) in extra.into_iter().enumerate() {
                        edges.push(EdgeRecord {
                            id: format!("x{k}"),
                            from: format!("v{}", a % n),
                            to: format!("v{}", b % n),
                            length: 0.75,
                            potential: Potential::Constant { value: 1.0 },
                        });
                    }
                    QuantumGraph::new(GraphRecord { vertices, edges }).unwrap()
                })
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent_and_simple(g in arb_graph()) {
                let n = g.normalize().unwrap();
                prop_assert!(n.is_normalized());
                let again = n.normalize().unwrap();
                prop_assert_eq!(again, n.clone());
                prop_assert!((n.total_length() - g.total_length()).abs() < 1e-12);
            }

            #[test]
            fn subset_components_partition_the_subset(g in arb_graph(), mask in proptest::collection::vec(any::<bool>(), 6)) {
                let n = g.normalize().unwrap();
                // Build a closed subset: random vertex choices, then close
                // over incident edges.
                let mut vset = BTreeSet::new();
                for v in 0..n.n_vertices() {
                    if mask[v % mask.len()] {
                        vset.insert(v);
                    }
                }
                let mut eset = BTreeSet::new();
                for &v in &vset {
                    for &(e, _) in n.graph().incidence(v) {
                        eset.insert(e);
                    }
                }
                let x = SubsetX::new(vset, eset);
                let comps = n.components_of_subset(&x).unwrap();
                let mut union = SubsetX::default();
                let mut total_v = 0;
                let mut total_e = 0;
                for c in &comps {
                    total_v += c.vset.len();
                    total_e += c.eset.len();
                    union.vset.extend(c.vset.iter().copied());
                    union.eset.extend(c.eset.iter().copied());
                }
                prop_assert_eq!(&union, &x, "components must cover the subset");
                prop_assert_eq!(total_v, x.vset.len(), "vertex parts must be disjoint");
                prop_assert_eq!(total_e, x.eset.len(), "edge parts must be disjoint");

                let (finite, dirichlet) = n.boundary(&x).unwrap();
                prop_assert!(finite.is_disjoint(&dirichlet));
                prop_assert!(finite.is_disjoint(&x.vset));
                prop_assert!(dirichlet.is_disjoint(&x.vset));
            }

            #[test]
            fn unfold_produces_connected_trees(g in arb_graph(), depth in 1usize..4) {
                let n = g.normalize().unwrap();
                let root = n.graph().vertex_id(0).to_owned();
                let t = n.unfold(&root, depth).unwrap();
                prop_assert!(t.tree.graph().connected());
                prop_assert_eq!(
                    t.tree.n_edges() + 1,
                    t.tree.n_vertices(),
                    "a connected graph with |V| = |E| + 1 is a tree"
                );
                prop_assert!(t.tree.graph().girth().is_none());
                for &v in &t.frontier {
                    prop_assert!(t.tree.is_dirichlet(v));
                }
            }
        }
    }
}
