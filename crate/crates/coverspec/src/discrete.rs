//! Derived graphs, bipartite companions, and their Jacobi operators.
//!
//! The derived graph of a quantum graph at energy `λ` is a weighted discrete
//! graph with one principal vertex per non-Dirichlet base vertex and one
//! shadow vertex per (vertex, incident edge) pair. Its weights carry the
//! endpoint transfer data `f(ℓ), f′(ℓ), g(ℓ), g′(ℓ)` of every edge, so that
//! the map γ sending an eigenfunction to its vertex values (principals) and
//! outgoing derivatives (shadows) lands in the kernel of the associated
//! Jacobi operator. This turns membership of `λ` in the point spectrum into
//! a combinatorial kernel question.
//!
//! The bipartite companion of an atom report is a different, much smaller
//! weighted graph: one representative vertex per component of the maximizing
//! set, one vertex per finite boundary member, and edges weighted by the
//! outgoing derivatives of the normalized component eigenfunctions at their
//! attachment points. Its boundary coupling matrix `M` (rows: boundary,
//! columns: components) satisfies `dim ker(M) ≥ cc − |∂X|` by the dimension
//! theorem, which `index_identity_check` verifies numerically against the
//! reported index.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::aomoto::{AomotoReport, CERTIFY_POLISH_REL};
use crate::error::{Error, Result};
use crate::graph::{DiscreteGraph, EdgeRecord, GraphRecord, QuantumGraph, SubsetX, VertexRecord};
use crate::solver::{self, Eigenpair};
use crate::transfer::{self, Orientation};

/// Relative singular-value threshold below which the boundary coupling
/// matrix is considered rank-deficient.
pub const COUPLING_NULLITY_REL: f64 = 1e-8;

/// Bound on `‖A γ(h)‖ / ‖γ(h)‖` certifying that a mapped eigenfunction lies
/// in the Jacobi kernel of the derived graph.
pub const GAMMA_KERNEL_REL: f64 = 1e-8;

/// A finite weighted discrete graph: symmetric real edge weights `a` and a
/// real vertex potential `b`, acted on by the Jacobi operator
/// `(Aη)(υ) = b_υ η(υ) + Σ_{e = (υ,u)} a_e η(u)`. Unlike quantum graphs,
/// weighted graphs admit parallel edges (each summed separately by `A`) and
/// isolated vertices.
#[derive(Clone, Debug)]
pub struct WeightedDiscreteGraph {
    graph: DiscreteGraph,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Vertex input for [`WeightedDiscreteGraph::new`].
#[derive(Clone, Debug)]
pub struct WeightedVertexSpec {
    pub id: String,
    pub b: f64,
}

/// Edge input for [`WeightedDiscreteGraph::new`].
#[derive(Clone, Debug)]
pub struct WeightedEdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub a: f64,
}

/// Serialized form of a weighted discrete graph.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedGraphRecord {
    pub vertices: Vec<WeightedVertexRecord>,
    pub edges: Vec<WeightedEdgeRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedVertexRecord {
    pub id: String,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedEdgeRecord {
    pub from: String,
    pub to: String,
    pub a: f64,
}

impl WeightedDiscreteGraph {
    pub fn new(vertices: Vec<WeightedVertexSpec>, edges: Vec<WeightedEdgeSpec>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidGraph { reason };

        let mut vertices = vertices;
        vertices.sort_by(|x, y| x.id.cmp(&y.id));
        if let Some(w) = vertices.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate vertex id `{}`", w[0].id)));
        }
        for v in &vertices {
            if !v.b.is_finite() {
                return Err(invalid(format!(
                    "vertex `{}`: potential must be finite, got {}",
                    v.id, v.b
                )));
            }
        }

        let mut edges = edges;
        edges.sort_by(|x, y| x.id.cmp(&y.id));
        if let Some(w) = edges.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(format!("duplicate edge id `{}`", w[0].id)));
        }

        let vertex_ids: Vec<String> = vertices.iter().map(|v| v.id.clone()).collect();
        let vindex = |id: &str| -> Result<usize> {
            vertex_ids
                .binary_search_by(|probe| probe.as_str().cmp(id))
                .map_err(|_| Error::UnknownVertex { id: id.to_owned() })
        };

        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut ends = Vec::with_capacity(edges.len());
        let mut a = Vec::with_capacity(edges.len());
        for e in edges {
            if !e.a.is_finite() {
                return Err(invalid(format!(
                    "edge `{}`: weight must be finite, got {}",
                    e.id, e.a
                )));
            }
            ends.push((vindex(&e.from)?, vindex(&e.to)?));
            a.push(e.a);
            edge_ids.push(e.id);
        }

        let b = vertices.iter().map(|v| v.b).collect();
        Ok(WeightedDiscreteGraph {
            graph: DiscreteGraph::build(vertex_ids, edge_ids, ends),
            a,
            b,
        })
    }

    pub fn graph(&self) -> &DiscreteGraph {
        &self.graph
    }

    /// Weight of edge `e`.
    pub fn a(&self, e: usize) -> f64 {
        self.a[e]
    }

    /// Potential at vertex `v`.
    pub fn b(&self, v: usize) -> f64 {
        self.b[v]
    }

    /// Apply the Jacobi operator to a vertex vector. A loop contributes
    /// `2 a_e η(υ)` at its vertex, once per incidence.
    pub fn jacobi_apply(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let n = self.graph.n_vertices();
        if eta.len() != n {
            return Err(Error::IndexMismatch {
                expected: n,
                got: eta.len(),
            });
        }
        let mut out = vec![0.0; n];
        for (v, slot) in out.iter_mut().enumerate() {
            let mut acc = self.b[v] * eta[v];
            for &(e, _) in self.graph.incidence(v) {
                acc += self.a[e] * eta[self.graph.other_end(e, v)];
            }
            *slot = acc;
        }
        Ok(out)
    }

    pub fn to_record(&self) -> WeightedGraphRecord {
        WeightedGraphRecord {
            vertices: (0..self.graph.n_vertices())
                .map(|v| WeightedVertexRecord {
                    id: self.graph.vertex_id(v).to_owned(),
                    b: self.b[v],
                })
                .collect(),
            edges: (0..self.graph.n_edges())
                .map(|e| {
                    let (u, v) = self.graph.ends(e);
                    WeightedEdgeRecord {
                        from: self.graph.vertex_id(u).to_owned(),
                        to: self.graph.vertex_id(v).to_owned(),
                        a: self.a[e],
                    }
                })
                .collect(),
        }
    }
}

/// The derived graph of a quantum graph at a fixed energy. Base vertex and
/// edge references use the base graph's dense indices; `principal` and
/// `shadow` translate them into vertices of `wgraph`.
#[derive(Clone, Debug)]
pub struct DerivedGraph {
    lambda: f64,
    wgraph: WeightedDiscreteGraph,
    principal: BTreeMap<usize, usize>,
    shadow: BTreeMap<(usize, usize), usize>,
}

impl DerivedGraph {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn wgraph(&self) -> &WeightedDiscreteGraph {
        &self.wgraph
    }

    /// Derived vertex holding the value of the base vertex `v`, absent when
    /// `v` is Dirichlet.
    pub fn principal(&self, v: usize) -> Option<usize> {
        self.principal.get(&v).copied()
    }

    /// Derived vertex holding the outgoing derivative at base vertex `v`
    /// along its incident edge `e`.
    pub fn shadow(&self, v: usize, e: usize) -> Option<usize> {
        self.shadow.get(&(v, e)).copied()
    }
}

/// Build the derived graph of `g` at `λ`: principal vertices carry `b = 2α`,
/// shadows carry `b = 0`, and each base edge `(u, υ)` of length `ℓ`
/// contributes up to six weighted edges
///
/// ```text
/// (u_p, υ_p): f′(ℓ)     (u_p, υ_e): f(ℓ)      (u_e, υ_p): g′(ℓ)
/// (u_e, υ_e): g(ℓ)      (u_p, u_e): −1        (υ_p, υ_e): −1
/// ```
///
/// where `f, g` solve `−y″ + W y = λ y` from the `u` end with
/// `f(0) = g′(0) = 1`, `f′(0) = g(0) = 0`, and every edge touching a
/// missing (Dirichlet) principal is dropped. The Wronskian identities make
/// the weights independent of each edge's stored orientation.
///
/// Loops are rejected: a shadow vertex is keyed by (vertex, edge), which a
/// loop would make ambiguous. Splitting loops first (`normalize`) yields an
/// equivalent loop-free graph.
pub fn derive(g: &QuantumGraph, lambda: f64) -> Result<DerivedGraph> {
    let gr = g.graph();
    for e in 0..gr.n_edges() {
        if gr.is_loop(e) {
            return Err(Error::InvalidGraph {
                reason: format!(
                    "edge `{}` is a loop; the derived graph needs a loop-free input (normalize first)",
                    gr.edge_id(e)
                ),
            });
        }
    }

    let principal_id = |v: usize| format!("p:{}", gr.vertex_id(v));
    let shadow_id = |v: usize, e: usize| format!("s:{}:{}", gr.vertex_id(v), gr.edge_id(e));

    let mut vertices = Vec::new();
    for v in 0..gr.n_vertices() {
        if !g.is_dirichlet(v) {
            vertices.push(WeightedVertexSpec {
                id: principal_id(v),
                b: 2.0 * g.alpha(v),
            });
        }
        for &(e, _) in gr.incidence(v) {
            vertices.push(WeightedVertexSpec {
                id: shadow_id(v, e),
                b: 0.0,
            });
        }
    }

    let mut edges = Vec::new();
    for e in 0..gr.n_edges() {
        let (u, v) = gr.ends(e);
        let s = transfer::transfer(g.edge_view(e), Orientation::Forward, lambda)?;
        let eid = gr.edge_id(e);
        let u_fin = !g.is_dirichlet(u);
        let v_fin = !g.is_dirichlet(v);
        let mut push = |suffix: &str, from: String, to: String, a: f64| {
            edges.push(WeightedEdgeSpec {
                id: format!("{eid}:{suffix}"),
                from,
                to,
                a,
            });
        };
        if u_fin && v_fin {
            push("pp", principal_id(u), principal_id(v), s.df_l);
        }
        if u_fin {
            push("ps", principal_id(u), shadow_id(v, e), s.f_l);
            push("fo", principal_id(u), shadow_id(u, e), -1.0);
        }
        if v_fin {
            push("sp", shadow_id(u, e), principal_id(v), s.dg_l);
            push("to", principal_id(v), shadow_id(v, e), -1.0);
        }
        push("ss", shadow_id(u, e), shadow_id(v, e), s.g_l);
    }

    let wgraph = WeightedDiscreteGraph::new(vertices, edges)?;
    let mut principal = BTreeMap::new();
    let mut shadow = BTreeMap::new();
    for v in 0..gr.n_vertices() {
        if !g.is_dirichlet(v) {
            principal.insert(v, wgraph.graph().vertex_index(&principal_id(v))?);
        }
        for &(e, _) in gr.incidence(v) {
            shadow.insert((v, e), wgraph.graph().vertex_index(&shadow_id(v, e))?);
        }
    }
    Ok(DerivedGraph {
        lambda,
        wgraph,
        principal,
        shadow,
    })
}

/// Map one basis eigenfunction of `pair` into the Jacobi kernel of the
/// derived graph: principal entries carry the vertex values, shadow entries
/// the outgoing derivatives. The result is indexed by `dg.wgraph()`
/// vertices and satisfies `‖A γ(h)‖ ≤` [`GAMMA_KERNEL_REL`]` · ‖γ(h)‖` for
/// genuine eigenpairs.
pub fn gamma_map(
    g: &QuantumGraph,
    dg: &DerivedGraph,
    pair: &Eigenpair,
    member: usize,
) -> Result<Vec<f64>> {
    if (pair.lambda - dg.lambda).abs() > 1e-12 * pair.lambda.abs().max(1.0) {
        return Err(Error::NotApplicable {
            reason: format!(
                "derived graph was built at λ = {}, eigenpair sits at λ = {}",
                dg.lambda, pair.lambda
            ),
        });
    }
    let trace = solver::eigenfunction_vertex_trace(g, pair, member)?;
    let gr = g.graph();
    let mut out = vec![0.0; dg.wgraph().graph().n_vertices()];
    for v in 0..gr.n_vertices() {
        let (value, derivs) = &trace[gr.vertex_id(v)];
        if let Some(p) = dg.principal(v) {
            out[p] = *value;
        }
        for (&(e, _), d) in gr.incidence(v).iter().zip(derivs) {
            let s = dg
                .shadow(v, e)
                .expect("every base incidence has a shadow vertex");
            out[s] = *d;
        }
    }
    if out.iter().all(|x| *x == 0.0) {
        return Err(Error::NotApplicable {
            reason: "eigenfunction trace is identically zero".into(),
        });
    }
    Ok(out)
}

/// The bipartite companion of an atom report: representative vertices `t_i`
/// (one per component of the maximizer, in the report's component order)
/// against the finite boundary `∂X`, with `b ≡ 0`, possibly with parallel
/// edges when a component attaches to the same boundary vertex more than
/// once.
#[derive(Clone, Debug)]
pub struct BipartiteCompanion {
    wgraph: WeightedDiscreteGraph,
    representatives: Vec<usize>,
    boundary: Vec<usize>,
    entries: Vec<(usize, usize, f64)>,
}

impl BipartiteCompanion {
    pub fn wgraph(&self) -> &WeightedDiscreteGraph {
        &self.wgraph
    }

    /// Companion vertex of `t_i`, indexed by the report's component order.
    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    /// Base-graph indices of the boundary class, sorted; row order of the
    /// coupling matrix.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary
    }

    /// The `|∂X| × |U|` boundary coupling matrix: entry `(υ, i)` sums the
    /// weights of all companion edges between boundary vertex `υ` and
    /// representative `t_i`.
    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.boundary.len(), self.representatives.len());
        for &(row, col, w) in &self.entries {
            m[(row, col)] += w;
        }
        m
    }

    /// Numerical nullity of the coupling matrix at the
    /// [`COUPLING_NULLITY_REL`] singular-value threshold.
    pub fn coupling_nullity(&self) -> usize {
        let m = self.coupling_matrix();
        if m.nrows() == 0 || m.ncols() == 0 {
            return m.ncols();
        }
        let sv = m.singular_values();
        let smax = sv.iter().fold(0.0f64, |acc, &s| acc.max(s));
        if smax <= 0.0 {
            return m.ncols();
        }
        let rank = sv
            .iter()
            .filter(|&&s| s > COUPLING_NULLITY_REL * smax)
            .count();
        m.ncols() - rank
    }
}

/// The component as a standalone quantum graph: its own vertices keep their
/// α, every other endpoint becomes Dirichlet. Works for both component
/// kinds; a lone edge turns into a Dirichlet–Dirichlet interval.
fn component_quantum_graph(g: &QuantumGraph, comp: &SubsetX) -> Result<QuantumGraph> {
    let gr = g.graph();
    let mut vs = std::collections::BTreeSet::new();
    for &e in &comp.eset {
        let (u, v) = gr.ends(e);
        vs.insert(u);
        vs.insert(v);
    }
    QuantumGraph::new(GraphRecord {
        vertices: vs
            .iter()
            .map(|&v| VertexRecord {
                id: gr.vertex_id(v).to_string(),
                alpha: if comp.vset.contains(&v) {
                    g.alpha(v)
                } else {
                    f64::INFINITY
                },
            })
            .collect(),
        edges: comp
            .eset
            .iter()
            .map(|&e| {
                let (u, v) = gr.ends(e);
                EdgeRecord {
                    id: gr.edge_id(e).to_string(),
                    from: gr.vertex_id(u).to_string(),
                    to: gr.vertex_id(v).to_string(),
                    length: g.length(e),
                    potential: g.potential(e).clone(),
                }
            })
            .collect(),
    })
}

/// The component eigenspace at `lambda`, re-polishing `λ` over the same
/// window the certification used whenever the raw value has drifted past
/// the solver's nullity threshold.
fn component_eigenpair(cg: &QuantumGraph, lambda: f64) -> Result<Eigenpair> {
    if let Some(pair) = solver::eigenpair_at(cg, lambda)? {
        return Ok(pair);
    }
    let half = CERTIFY_POLISH_REL * lambda.abs().max(1.0);
    let (polished, _) = solver::golden_min(
        |x| Ok(solver::secular(cg, x)?.sigma_min()),
        lambda - half,
        lambda + half,
        1e-13,
    )?;
    solver::eigenpair_at(cg, polished)?.ok_or_else(|| Error::NotApplicable {
        reason: format!("component failed to re-certify near λ = {lambda}"),
    })
}

/// Build the bipartite companion of `report`. Each component contributes
/// its normalized eigenfunction `h_i` (first basis member when the
/// certificate is degenerate, with the compact solver's deterministic sign);
/// each attachment of the component to a finite boundary vertex `υ` along
/// edge `e` contributes one edge `(t_i, υ)` of weight equal to the outgoing
/// derivative of `h_i` at `υ` along `e`.
pub fn companion(g: &QuantumGraph, report: &AomotoReport) -> Result<BipartiteCompanion> {
    let gr = g.graph();
    let boundary: Vec<usize> = report.maximizer.finite_boundary.iter().copied().collect();
    let row_of: BTreeMap<usize, usize> =
        boundary.iter().enumerate().map(|(r, &v)| (v, r)).collect();

    let rep_id = |i: usize| format!("t{}", i + 1);
    let boundary_id = |v: usize| format!("b:{}", gr.vertex_id(v));

    let mut vertices: Vec<WeightedVertexSpec> = Vec::new();
    for i in 0..report.maximizer.components.len() {
        vertices.push(WeightedVertexSpec {
            id: rep_id(i),
            b: 0.0,
        });
    }
    for &v in &boundary {
        vertices.push(WeightedVertexSpec {
            id: boundary_id(v),
            b: 0.0,
        });
    }

    let mut edges: Vec<WeightedEdgeSpec> = Vec::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (i, comp) in report.maximizer.components.iter().enumerate() {
        let cg = component_quantum_graph(g, comp)?;
        let pair = component_eigenpair(&cg, report.lambda)?;
        let trace = solver::eigenfunction_vertex_trace(&cg, &pair, 0)?;
        for &e in &comp.eset {
            let (u, v) = gr.ends(e);
            for (w, end_tag) in [(u, "f"), (v, "t")] {
                if comp.vset.contains(&w) || g.is_dirichlet(w) {
                    continue;
                }
                let wid = gr.vertex_id(w);
                let cw = cg.graph().vertex_index(wid)?;
                let ce = cg.graph().edge_index(gr.edge_id(e))?;
                let slot = cg
                    .graph()
                    .incidence(cw)
                    .iter()
                    .position(|&(f, _)| f == ce)
                    .expect("attachment edge is incident to its boundary vertex");
                let weight = trace[wid].1[slot];
                edges.push(WeightedEdgeSpec {
                    id: format!("{}:{}:{}", rep_id(i), gr.edge_id(e), end_tag),
                    from: rep_id(i),
                    to: boundary_id(w),
                    a: weight,
                });
                entries.push((row_of[&w], i, weight));
            }
        }
    }

    let wgraph = WeightedDiscreteGraph::new(vertices, edges)?;
    let representatives = (0..report.maximizer.components.len())
        .map(|i| wgraph.graph().vertex_index(&rep_id(i)))
        .collect::<Result<_>>()?;
    Ok(BipartiteCompanion {
        wgraph,
        representatives,
        boundary,
        entries,
    })
}

/// Check the dimension-theorem bound realized by the companion: the
/// numerical nullity of the boundary coupling matrix must be at least the
/// reported index `cc − |∂X|`.
pub fn index_identity_check(g: &QuantumGraph, report: &AomotoReport) -> Result<bool> {
    Ok(companion(g, report)?.coupling_nullity() >= report.index)
}
