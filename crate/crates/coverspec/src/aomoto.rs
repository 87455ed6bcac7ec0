//! Eligible-set enumeration and the point spectrum of the universal cover.
//!
//! A candidate eigenvalue λ of the cover is witnessed on the base graph by a
//! closed subgraph `X = (V_X, E_X)` whose vertex part induces an acyclic
//! subgraph, together with a certificate that λ is a Dirichlet-boundary
//! eigenvalue of every connected component of `X`. Among all such eligible
//! sets the atom's mass is `max (cc(X) − |∂X|) / L_E`, where `cc` counts
//! components, `∂X` is the finite-α boundary, and `L_E` is the total edge
//! length. This module enumerates candidates and eligible sets by brute
//! force over vertex subsets, certifies components against the secular
//! matrix, reports the maximizing set, and cross-checks the verdicts with a
//! truncation of the cover itself.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, Matrix2};
use num_rational::Ratio;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{
    EdgeRecord, GraphRecord, Potential, QuantumGraph, SubsetX, TruncatedTree, VertexRecord,
};
use crate::solver;
use crate::transfer::{self, EdgeSolution, Orientation};

/// Default cap on the vertex count admitted to subset enumeration. Both the
/// candidate search and the eligible-set search are exponential in the
/// number of finite-α vertices, so inputs above the cap are refused rather
/// than silently attempted.
pub const DEFAULT_VERTEX_CAP: usize = 16;

/// An edge is second type at λ (carries a Dirichlet eigenfunction of its
/// own) when `|g(ℓ;λ)| <` this `· max(1, |g′(ℓ;λ)|)`. The derivative in the
/// scale keeps the test meaningful where `g` and `g′` are both small.
pub const EDGE_DIRICHLET_REL: f64 = 1e-6;

/// Two candidate eigenvalues merge when they agree within this relative
/// distance.
pub const CANDIDATE_DEDUP_REL: f64 = 1e-8;

/// Relative half-width of the local polish applied to a candidate before a
/// component is certified. Candidates from the scan carry machine-level error,
/// but type-(a) closed forms and type-(b) scan output may disagree at the
/// last few digits; the polish re-centers λ on the component's own secular
/// minimum without ever crossing a neighboring eigenvalue.
pub const CERTIFY_POLISH_REL: f64 = 1e-7;

/// Scan tolerance used when harvesting subtree spectra for type-(b)
/// candidates, tighter than certification accuracy so the candidate
/// positions are never the limiting factor.
const CANDIDATE_SCAN_TOL: f64 = 1e-10;

/// Edge budget for the truncation oracle's unfoldings.
pub const DEFAULT_UNFOLD_EDGE_CAP: usize = 2048;

/// A genuine ℓ² eigenfunction of the cover is compactly supported, so its
/// frontier mass ratio on a deepened truncation either vanishes outright or
/// at least drops geometrically. The deeper truncation must come in at or
/// below this fraction of the shallower one (square root of it when the
/// edge budget only allows one extra level).
pub const FRONTIER_DECAY_FACTOR: f64 = 0.2;

// ---------------------------------------------------------------------------
// Report types.

/// Certification record of one component of an eligible set: the relative
/// smallest singular value of the component's secular matrix at the
/// polished λ (for a lone second-type edge, the relative size of `g(ℓ;λ)`),
/// and the numerical nullity found there. A nullity above 1 does not
/// invalidate the set; it flags a degenerate component worth suspicion.
#[derive(Clone, Debug)]
pub struct ComponentCertificate {
    pub residual: f64,
    pub nullity: usize,
}

/// One eligible set at λ: the closed subgraph `x`, its components (in order
/// of least edge index, lone second-type edges appearing as vertex-free
/// singletons), the two boundary classes, the component count `cc`, and the
/// index `cc − |finite_boundary|`, kept only when positive.
#[derive(Clone, Debug)]
pub struct EligibleSet {
    pub x: SubsetX,
    pub components: Vec<SubsetX>,
    pub finite_boundary: BTreeSet<usize>,
    pub dirichlet_boundary: BTreeSet<usize>,
    pub cc: usize,
    pub index: usize,
}

/// A reported atom of the cover's density of states: the maximizing
/// eligible set at λ, its index, the atom mass `index / L_E`, and one
/// certificate per component of the maximizer.
#[derive(Clone, Debug)]
pub struct AomotoReport {
    pub lambda: f64,
    pub maximizer: EligibleSet,
    pub index: usize,
    pub atom_mass: f64,
    pub certificates: Vec<ComponentCertificate>,
}

impl AomotoReport {
    /// True when any component certificate carries nullity above 1, which
    /// marks a numerically degenerate certification.
    pub fn degenerate(&self) -> bool {
        self.certificates.iter().any(|c| c.nullity > 1)
    }
}

/// Outcome of the truncation cross-check at one λ: the unfolding root, the
/// two depths compared, and per depth the tree size, the numerical nullity
/// at λ, and the frontier mass ratio (`None` when λ is not an eigenvalue of
/// that truncation at all).
#[derive(Clone, Debug)]
pub struct TruncationReport {
    pub confirmed: bool,
    pub root: String,
    pub depths: [usize; 2],
    pub tree_edges: [usize; 2],
    pub nullities: [usize; 2],
    pub frontier_ratios: [Option<f64>; 2],
}

// ---------------------------------------------------------------------------
// Component graphs and certification.

/// The quantum graph of one component: all edges meeting `comp`, original α
/// on the vertices of `comp`, Dirichlet at every other endpoint.
fn component_graph(g: &QuantumGraph, comp: &BTreeSet<usize>) -> Result<QuantumGraph> {
    let gr = g.graph();
    let mut vs: BTreeSet<usize> = BTreeSet::new();
    let mut edges: Vec<usize> = Vec::new();
    for e in 0..gr.n_edges() {
        let (u, v) = gr.ends(e);
        if comp.contains(&u) || comp.contains(&v) {
            vs.insert(u);
            vs.insert(v);
            edges.push(e);
        }
    }
    QuantumGraph::new(GraphRecord {
        vertices: vs
            .iter()
            .map(|&v| VertexRecord {
                id: gr.vertex_id(v).to_string(),
                alpha: if comp.contains(&v) {
                    g.alpha(v)
                } else {
                    f64::INFINITY
                },
            })
            .collect(),
        edges: edges
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

/// Certify that λ is an eigenvalue of the component spanned by `comp` with
/// Dirichlet imposed on its boundary. The candidate is first polished to
/// the nearby minimum of the component's σ_min, then the numerical nullity
/// is read off the singular values; `None` means the component does not
/// carry λ.
fn certify_component(
    g: &QuantumGraph,
    comp: &BTreeSet<usize>,
    lambda: f64,
    tol: f64,
) -> Result<Option<ComponentCertificate>> {
    let cg = component_graph(g, comp)?;
    let w = CERTIFY_POLISH_REL * lambda.abs().max(1.0);
    let (lam_star, _) = solver::golden_min(
        |x| Ok(solver::secular(&cg, x)?.sigma_min()),
        lambda - w,
        lambda + w,
        1e-13,
    )?;
    let svs = solver::secular(&cg, lam_star)?.singular_values();
    let smax = svs[0];
    let nullity = svs.iter().filter(|&&s| s < tol * smax).count();
    if nullity == 0 {
        return Ok(None);
    }
    Ok(Some(ComponentCertificate {
        residual: svs[svs.len() - 1] / smax,
        nullity,
    }))
}

/// Per-edge second-type test at λ by the numeric criterion on `g(ℓ;λ)`.
fn second_type_edges(g: &QuantumGraph, lambda: f64) -> Result<Vec<bool>> {
    (0..g.n_edges())
        .map(|e| {
            let s = transfer::transfer(g.edge_view(e), Orientation::Forward, lambda)?;
            Ok(s.g_l.abs() < EDGE_DIRICHLET_REL * s.dg_l.abs().max(1.0))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Eligible sets.

/// All eligible sets at λ given the per-edge second-type labels. Vertex
/// subsets `S` run over finite-α vertices in order of increasing size, the
/// empty set included; a subset survives only if it induces an acyclic
/// subgraph and every component of `(S, E_S)` certifies λ. Each surviving
/// `S` then combines with every subset `D` of the second-type edges not
/// touching `S`, and `X = (S, E_S ∪ D)` is kept when it is nonempty with
/// positive index. Certification is memoized per component vertex set.
fn eligible_sets_impl(
    g: &QuantumGraph,
    lambda: f64,
    tol: f64,
    lone: &[bool],
) -> Result<Vec<EligibleSet>> {
    let gr = g.graph();
    let nv = gr.n_vertices();
    if nv > DEFAULT_VERTEX_CAP {
        return Err(Error::VertexCapExceeded {
            n: nv,
            cap: DEFAULT_VERTEX_CAP,
        });
    }
    let finite: Vec<usize> = (0..nv).filter(|&v| !g.is_dirichlet(v)).collect();
    let nf = finite.len();
    let mut masks: Vec<u32> = (0..1u32 << nf).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut memo: HashMap<Vec<usize>, Option<ComponentCertificate>> = HashMap::new();
    let mut out: Vec<EligibleSet> = Vec::new();
    for mask in masks {
        let vset: BTreeSet<usize> = (0..nf)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| finite[i])
            .collect();
        if !gr.induced_acyclic(&vset) {
            continue;
        }
        let eset: BTreeSet<usize> = vset
            .iter()
            .flat_map(|&v| gr.incidence(v).iter().map(|&(e, _)| e))
            .collect();
        let base = SubsetX::new(vset.clone(), eset.clone());
        let comps = if base.is_empty() {
            Vec::new()
        } else {
            g.components_of_subset(&base)?
        };
        let mut certified = true;
        for comp in &comps {
            let key: Vec<usize> = comp.vset.iter().copied().collect();
            if !memo.contains_key(&key) {
                let cert = certify_component(g, &comp.vset, lambda, tol)?;
                memo.insert(key.clone(), cert);
            }
            if memo[&key].is_none() {
                certified = false;
                break;
            }
        }
        if !certified {
            continue;
        }
        let avail: Vec<usize> = (0..gr.n_edges())
            .filter(|&e| {
                let (u, v) = gr.ends(e);
                lone[e] && !vset.contains(&u) && !vset.contains(&v)
            })
            .collect();
        if avail.len() > 24 {
            return Err(Error::InvalidGraph {
                reason: format!(
                    "{} second-type edges at λ = {lambda} put the eligible-set \
                     enumeration past 2^24 subsets",
                    avail.len()
                ),
            });
        }
        for dbits in 0..1u64 << avail.len() {
            let mut ex = eset.clone();
            let mut d_count = 0usize;
            for (i, &e) in avail.iter().enumerate() {
                if dbits >> i & 1 == 1 {
                    ex.insert(e);
                    d_count += 1;
                }
            }
            if ex.is_empty() {
                continue;
            }
            let cc = comps.len() + d_count;
            let x = SubsetX::new(vset.clone(), ex);
            let (finite_boundary, dirichlet_boundary) = g.boundary(&x)?;
            let index = cc as i64 - finite_boundary.len() as i64;
            if index <= 0 {
                continue;
            }
            let components = g.components_of_subset(&x)?;
            out.push(EligibleSet {
                x,
                components,
                finite_boundary,
                dirichlet_boundary,
                cc,
                index: index as usize,
            });
        }
    }
    Ok(out)
}

/// All eligible sets at λ. The certification tolerance is the relative
/// singular-value threshold of the component secular matrices.
pub fn eligible_sets(g: &QuantumGraph, lambda: f64, tol: f64) -> Result<Vec<EligibleSet>> {
    let lone = second_type_edges(g, lambda)?;
    eligible_sets_impl(g, lambda, tol, &lone)
}

/// The maximizer among the ties: largest `(index, cc)`, then fewest edges,
/// then fewest vertices, then lexicographically least `(V_X, E_X)` in the
/// dense (identifier-sorted) order.
fn pick_best(sets: Vec<EligibleSet>) -> Option<EligibleSet> {
    sets.into_iter().min_by_key(|s| {
        (
            std::cmp::Reverse((s.index, s.cc)),
            s.x.eset.len(),
            s.x.vset.len(),
            s.x.vset.iter().copied().collect::<Vec<_>>(),
            s.x.eset.iter().copied().collect::<Vec<_>>(),
        )
    })
}

fn best_index_impl(
    g: &QuantumGraph,
    lambda: f64,
    tol: f64,
    lone: &[bool],
) -> Result<Option<AomotoReport>> {
    let sets = eligible_sets_impl(g, lambda, tol, lone)?;
    let Some(best) = pick_best(sets) else {
        return Ok(None);
    };
    let mut certificates = Vec::with_capacity(best.components.len());
    for comp in &best.components {
        if comp.vset.is_empty() {
            let e = *comp.eset.iter().next().expect("component carries an edge");
            let s = transfer::transfer(g.edge_view(e), Orientation::Forward, lambda)?;
            certificates.push(ComponentCertificate {
                residual: s.g_l.abs() / s.dg_l.abs().max(1.0),
                nullity: 1,
            });
        } else {
            let cert = certify_component(g, &comp.vset, lambda, tol)?
                .expect("component was certified during enumeration");
            certificates.push(cert);
        }
    }
    let index = best.index;
    Ok(Some(AomotoReport {
        lambda,
        atom_mass: index as f64 / g.total_length(),
        index,
        maximizer: best,
        certificates,
    }))
}

/// The maximizing eligible set at λ, or `None` when no eligible set exists
/// (λ carries no atom).
pub fn best_index(g: &QuantumGraph, lambda: f64, tol: f64) -> Result<Option<AomotoReport>> {
    let lone = second_type_edges(g, lambda)?;
    best_index_impl(g, lambda, tol, &lone)
}

// ---------------------------------------------------------------------------
// Candidates and the point spectrum.

fn validate_window(window: (f64, f64)) -> Result<()> {
    let (a, b) = window;
    if a >= b || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidWindow { a, b });
    }
    Ok(())
}

/// Nonempty subsets of the finite-α vertices that are connected in `g` and
/// induce an acyclic subgraph.
fn connected_acyclic_subsets(g: &QuantumGraph) -> Vec<BTreeSet<usize>> {
    let gr = g.graph();
    let finite: Vec<usize> = (0..gr.n_vertices())
        .filter(|&v| !g.is_dirichlet(v))
        .collect();
    let nf = finite.len();
    let mut out = Vec::new();
    for mask in 1..1u32 << nf {
        let vset: BTreeSet<usize> = (0..nf)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| finite[i])
            .collect();
        let start = *vset.iter().next().expect("mask is nonzero");
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(e, _) in gr.incidence(v) {
                let o = gr.other_end(e, v);
                if vset.contains(&o) && seen.insert(o) {
                    stack.push(o);
                }
            }
        }
        if seen.len() == vset.len() && gr.induced_acyclic(&vset) {
            out.push(vset);
        }
    }
    out
}

/// Eigenvalues in the window of every connected acyclic subtree component,
/// pooled. These are the type-(b) candidates.
fn subtree_spectra(g: &QuantumGraph, window: (f64, f64)) -> Result<Vec<f64>> {
    let subsets = connected_acyclic_subsets(g);
    let spectra: Vec<Vec<f64>> = subsets
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let cg = component_graph(g, s)?;
            Ok(
                solver::eigenvalues_in_window(&cg, window, CANDIDATE_SCAN_TOL)?
                    .iter()
                    .map(|p| p.lambda)
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    Ok(spectra.into_iter().flatten().collect())
}

fn dedup_candidates(mut cands: Vec<f64>) -> Vec<f64> {
    cands.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(cands.len());
    for lam in cands {
        if out
            .last()
            .is_none_or(|&l| lam - l > CANDIDATE_DEDUP_REL * lam.abs().max(1.0))
        {
            out.push(lam);
        }
    }
    out
}

/// Every λ in the window at which the cover can possibly carry an atom:
/// the union of (a) each edge's own Dirichlet eigenvalues and (b) the
/// spectra of all connected acyclic vertex subsets with Dirichlet imposed
/// on their boundary, deduplicated within [`CANDIDATE_DEDUP_REL`].
pub fn candidate_lambdas(g: &QuantumGraph, window: (f64, f64)) -> Result<Vec<f64>> {
    candidate_lambdas_with_cap(g, window, DEFAULT_VERTEX_CAP)
}

/// [`candidate_lambdas`] with an explicit vertex cap.
pub fn candidate_lambdas_with_cap(
    g: &QuantumGraph,
    window: (f64, f64),
    cap: usize,
) -> Result<Vec<f64>> {
    validate_window(window)?;
    let nv = g.n_vertices();
    if nv > cap {
        return Err(Error::VertexCapExceeded { n: nv, cap });
    }
    let mut cands: Vec<f64> = Vec::new();
    for e in 0..g.n_edges() {
        cands.extend(transfer::edge_dirichlet_eigenvalues(
            g.edge_view(e),
            window,
        )?);
    }
    cands.extend(subtree_spectra(g, window)?);
    Ok(dedup_candidates(cands))
}

/// The point spectrum of the universal cover in the window: one report per
/// candidate λ that admits a maximizing eligible set. Candidates are
/// screened in parallel.
pub fn point_spectrum(g: &QuantumGraph, window: (f64, f64), tol: f64) -> Result<Vec<AomotoReport>> {
    let cands = candidate_lambdas(g, window)?;
    let reports: Vec<Option<AomotoReport>> = cands
        .par_iter()
        .map(|&lam| best_index(g, lam, tol))
        .collect::<Result<_>>()?;
    Ok(reports.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Truncation oracle.

/// Numerical nullity of the truncated tree at λ and the smallest possible
/// fraction of L² mass that a unit-mass element of its eigenspace keeps on
/// the frontier-adjacent edges: the minimum generalized eigenvalue of the
/// frontier Gram form against the total Gram form over the eigenspace.
/// `None` when λ is not an eigenvalue of the truncation; `Some(0.0)` when
/// the truncation has no frontier at all (the tree closed up).
fn frontier_ratio(t: &TruncatedTree, lambda: f64) -> Result<(usize, Option<f64>)> {
    let tree = &t.tree;
    let basis = solver::secular(tree, lambda)?.nullspace();
    let n = basis.len();
    if n == 0 {
        return Ok((0, None));
    }
    let fadj = t.frontier_adjacent_edges();
    if fadj.is_empty() {
        return Ok((n, Some(0.0)));
    }
    let mut gt: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut gf: DMatrix<f64> = DMatrix::zeros(n, n);
    let fwd = |a, b| EdgeSolution {
        a,
        b,
        orientation: Orientation::Forward,
    };
    let mut c: DMatrix<f64> = DMatrix::zeros(2, n);
    for e in 0..tree.n_edges() {
        let ff = solver::edge_l2_inner(tree.edge_view(e), lambda, &fwd(1.0, 0.0), &fwd(1.0, 0.0))?;
        let fg = solver::edge_l2_inner(tree.edge_view(e), lambda, &fwd(1.0, 0.0), &fwd(0.0, 1.0))?;
        let gg = solver::edge_l2_inner(tree.edge_view(e), lambda, &fwd(0.0, 1.0), &fwd(0.0, 1.0))?;
        let s = Matrix2::new(ff, fg, fg, gg);
        for (j, x) in basis.iter().enumerate() {
            c[(0, j)] = x[2 * e];
            c[(1, j)] = x[2 * e + 1];
        }
        let sc = s * &c;
        gt.gemm_tr(1.0, &c, &sc, 1.0);
        if fadj.contains(&e) {
            gf.gemm_tr(1.0, &c, &sc, 1.0);
        }
    }
    let chol = Cholesky::new(gt.clone()).or_else(|| {
        let ridge = 1e-12 * gt.trace() / n as f64;
        let mut gtr = gt;
        for i in 0..n {
            gtr[(i, i)] += ridge;
        }
        Cholesky::new(gtr)
    });
    let chol = chol.expect("L² Gram of an eigenspace basis is positive definite");
    let l = chol.l();
    let m1 = l
        .solve_lower_triangular(&gf)
        .expect("Cholesky factor has positive diagonal");
    let b = l
        .solve_lower_triangular(&m1.transpose())
        .expect("Cholesky factor has positive diagonal");
    let b = (&b + b.transpose()) * 0.5;
    let min_eig = b
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    Ok((n, Some(min_eig.max(0.0))))
}

/// Independent cross-check of a reported atom against the cover itself.
///
/// The cover is truncated at combinatorial `depth` and again two levels
/// deeper (one level, with the decay threshold relaxed to its square root,
/// when the edge budget forbids two), both rooted at the lexicographically
/// least vertex of the maximizer's component (falling back to the least
/// eset endpoint, and to the least vertex of the graph when no maximizer
/// exists, so that non-atoms are still probed). The verdict is `confirmed`
/// when λ is an eigenvalue of both truncations and the deeper frontier
/// mass ratio either vanishes within `tol` or decays by
/// [`FRONTIER_DECAY_FACTOR`] against the shallower one. A compactly
/// supported eigenfunction of the cover passes both tests once the
/// truncation swallows its support; a spurious candidate keeps a frontier
/// ratio bounded away from zero at every depth.
pub fn truncation_oracle(
    g: &QuantumGraph,
    lambda: f64,
    depth: usize,
    tol: f64,
) -> Result<TruncationReport> {
    if depth < 3 {
        return Err(Error::NotApplicable {
            reason: format!("truncation depth {depth} is below the minimum of 3"),
        });
    }
    let root_idx = match best_index(g, lambda, tol)? {
        Some(r) => match r.maximizer.x.vset.iter().next() {
            Some(&v) => v,
            None => r
                .maximizer
                .x
                .eset
                .iter()
                .flat_map(|&e| {
                    let (u, v) = g.graph().ends(e);
                    [u, v]
                })
                .min()
                .expect("maximizer is nonempty"),
        },
        None => 0,
    };
    let root = g.graph().vertex_id(root_idx).to_string();
    let t1 = g.unfold_with_cap(&root, depth, DEFAULT_UNFOLD_EDGE_CAP)?;
    let (t2, d2, factor) = match g.unfold_with_cap(&root, depth + 2, DEFAULT_UNFOLD_EDGE_CAP) {
        Ok(t) => (t, depth + 2, FRONTIER_DECAY_FACTOR),
        Err(Error::UnfoldCapExceeded { .. }) => (
            g.unfold_with_cap(&root, depth + 1, DEFAULT_UNFOLD_EDGE_CAP)?,
            depth + 1,
            FRONTIER_DECAY_FACTOR.sqrt(),
        ),
        Err(e) => return Err(e),
    };
    let (n1, r1) = frontier_ratio(&t1, lambda)?;
    let (n2, r2) = frontier_ratio(&t2, lambda)?;
    let confirmed = n1 >= 1
        && n2 >= 1
        && match (r1, r2) {
            (Some(m1), Some(m2)) => m2 <= tol || m2 <= factor * m1,
            _ => false,
        };
    Ok(TruncationReport {
        confirmed,
        root,
        depths: [depth, d2],
        tree_edges: [t1.tree.n_edges(), t2.tree.n_edges()],
        nullities: [n1, n2],
        frontier_ratios: [r1, r2],
    })
}

// ---------------------------------------------------------------------------
// Structural cross-checks.

/// On a d-regular graph with all couplings finite, every atom of the cover
/// sits at an edge Dirichlet eigenvalue. Returns whether all reports comply
/// within [`CANDIDATE_DEDUP_REL`]; refuses non-regular or partly Dirichlet
/// input.
pub fn regular_filter_check(g: &QuantumGraph, reports: &[AomotoReport]) -> Result<bool> {
    let gr = g.graph();
    if (0..g.n_vertices()).any(|v| g.is_dirichlet(v)) {
        return Err(Error::NotApplicable {
            reason: "the regular filter needs every vertex coupling finite".to_string(),
        });
    }
    let d = gr.degree(0);
    if (1..g.n_vertices()).any(|v| gr.degree(v) != d) {
        return Err(Error::NotApplicable {
            reason: "the regular filter needs a regular graph".to_string(),
        });
    }
    for r in reports {
        let w = CANDIDATE_DEDUP_REL * r.lambda.abs().max(1.0);
        let mut near = false;
        for e in 0..g.n_edges() {
            let vals = transfer::edge_dirichlet_eigenvalues(
                g.edge_view(e),
                (r.lambda - 2.0 * w, r.lambda + 2.0 * w),
            )?;
            if vals.iter().any(|&v| (v - r.lambda).abs() <= w) {
                near = true;
                break;
            }
        }
        if !near {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every pure cycle with all couplings finite that meets the maximizer must
/// meet it through the cycle's attachment vertex, which then lies on the
/// finite boundary. Vacuously true for cycles that miss the maximizer,
/// for standalone cycles, and for graphs without pure cycles.
pub fn pure_cycle_boundary_check(g: &QuantumGraph, report: &AomotoReport) -> bool {
    let gr = g.graph();
    for (cycle_edges, attachment) in g.pure_cycles() {
        let cycle_verts: BTreeSet<usize> = cycle_edges
            .iter()
            .flat_map(|&e| {
                let (u, v) = gr.ends(e);
                [u, v]
            })
            .collect();
        if cycle_verts.iter().any(|&v| g.is_dirichlet(v)) {
            continue;
        }
        let x = &report.maximizer.x;
        let meets = cycle_edges.iter().any(|e| x.eset.contains(e))
            || cycle_verts.iter().any(|v| x.vset.contains(v));
        if !meets {
            continue;
        }
        match attachment {
            None => continue,
            Some(u) => {
                if !report.maximizer.finite_boundary.contains(&u) {
                    return false;
                }
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Exact mode.

/// Common length unit of a potential-free graph: every edge length is
/// `multiples[e] · unit` within [`RATIO_REL_TOL`].
#[derive(Clone, Debug)]
pub struct ExactMode {
    pub unit: f64,
    pub multiples: Vec<u64>,
}

/// Largest denominator admitted when fitting one length ratio.
const RATIO_DENOM_CAP: u64 = 1_000_000;

/// Relative agreement demanded between each length and its fitted integer
/// multiple of the unit.
const RATIO_REL_TOL: f64 = 1e-9;

/// Largest admissible common denominator of all fitted ratios. Beyond this
/// the "unit" stops being meaningful and exact arithmetic would overflow.
const UNIT_LCM_CAP: u64 = 1_000_000_000;

/// Best rational `p/q` for `x ≥ 1` by continued fractions, accepted at
/// relative error [`RATIO_REL_TOL`] with `q ≤` [`RATIO_DENOM_CAP`].
fn rational_fit(x: f64) -> Option<(u64, u64)> {
    let (mut p0, mut q0) = (1u64, 0u64);
    let (mut p1, mut q1) = (x.floor() as u64, 1u64);
    let mut frac = x - x.floor();
    loop {
        if q1 > RATIO_DENOM_CAP {
            return None;
        }
        let approx = p1 as f64 / q1 as f64;
        if (x - approx).abs() <= RATIO_REL_TOL * x {
            return Some((p1, q1));
        }
        if frac <= f64::EPSILON {
            return None;
        }
        let inv = 1.0 / frac;
        if inv >= u64::MAX as f64 {
            return None;
        }
        let a = inv.floor() as u64;
        frac = inv - inv.floor();
        let p2 = a.checked_mul(p1).and_then(|v| v.checked_add(p0))?;
        let q2 = a.checked_mul(q1).and_then(|v| v.checked_add(q0))?;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
}

/// Fit the common unit, refusing graphs with potentials or with lengths
/// that admit no workable unit.
pub fn exact_mode(g: &QuantumGraph) -> Result<ExactMode> {
    for e in 0..g.n_edges() {
        if !matches!(g.potential(e), Potential::Zero) {
            return Err(Error::ExactModeUnavailable {
                reason: format!(
                    "edge `{}` carries a potential; exact candidates need free edges",
                    g.graph().edge_id(e)
                ),
            });
        }
    }
    let base = (0..g.n_edges())
        .map(|e| g.length(e))
        .fold(f64::INFINITY, f64::min);
    let mut l: u64 = 1;
    for e in 0..g.n_edges() {
        let Some((_, q)) = rational_fit(g.length(e) / base) else {
            return Err(Error::ExactModeUnavailable {
                reason: format!(
                    "edge `{}` length is not commensurable with the shortest edge",
                    g.graph().edge_id(e)
                ),
            });
        };
        let lcm = num_integer::lcm(l as u128, q as u128);
        if lcm > UNIT_LCM_CAP as u128 {
            return Err(Error::ExactModeUnavailable {
                reason: "no common length unit of workable size".to_string(),
            });
        }
        l = lcm as u64;
    }
    let unit = base / l as f64;
    let multiples = (0..g.n_edges())
        .map(|e| {
            let m = (g.length(e) / unit).round();
            if m < 1.0 || (g.length(e) - m * unit).abs() > RATIO_REL_TOL * g.length(e) {
                return Err(Error::ExactModeUnavailable {
                    reason: format!(
                        "edge `{}` length strays from an integer multiple of the unit",
                        g.graph().edge_id(e)
                    ),
                });
            }
            Ok(m as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(ExactMode { unit, multiples })
}

/// The point spectrum with type-(a) candidates and second-type edge
/// membership decided by exact rational arithmetic on the fitted unit:
/// a candidate is the reduced ratio `ρ = n/m_e` (wavenumber `ρπ/unit`), and
/// an edge is second type at ρ exactly when `ρ·m_e` is an integer. This
/// removes the false merges a floating g-root test can produce between
/// nearby incommensurable candidates. Type-(b) candidates stay numeric.
pub fn point_spectrum_exact(
    g: &QuantumGraph,
    window: (f64, f64),
    tol: f64,
) -> Result<Vec<AomotoReport>> {
    validate_window(window)?;
    let nv = g.n_vertices();
    if nv > DEFAULT_VERTEX_CAP {
        return Err(Error::VertexCapExceeded {
            n: nv,
            cap: DEFAULT_VERTEX_CAP,
        });
    }
    let em = exact_mode(g)?;
    let (lo, hi) = window;
    let k_scale = PI / em.unit;
    let mut ratios: BTreeSet<Ratio<u64>> = BTreeSet::new();
    for &m in &em.multiples {
        for n in 1u64.. {
            let k = (n as f64 / m as f64) * k_scale;
            let lam = k * k;
            if lam > hi {
                break;
            }
            if lam > lo {
                ratios.insert(Ratio::new(n, m));
            }
        }
    }
    let exact: Vec<(f64, Ratio<u64>)> = ratios
        .iter()
        .map(|&r| {
            let k = (*r.numer() as f64 / *r.denom() as f64) * k_scale;
            (k * k, r)
        })
        .collect();
    let numeric = dedup_candidates(subtree_spectra(g, window)?);
    let mut cands: Vec<(f64, Option<Ratio<u64>>)> =
        exact.iter().map(|&(lam, r)| (lam, Some(r))).collect();
    for lam in numeric {
        let served = exact
            .iter()
            .any(|&(lx, _)| (lam - lx).abs() <= CANDIDATE_DEDUP_REL * lam.abs().max(1.0));
        if !served {
            cands.push((lam, None));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reports: Vec<Option<AomotoReport>> = cands
        .par_iter()
        .map(|&(lam, ratio)| {
            let lone = match ratio {
                Some(r) => (0..g.n_edges())
                    .map(|e| {
                        let me = em.multiples[e] as u128;
                        (*r.numer() as u128 * me).is_multiple_of(*r.denom() as u128)
                    })
                    .collect::<Vec<bool>>(),
                None => second_type_edges(g, lam)?,
            };
            best_index_impl(g, lam, tol, &lone)
        })
        .collect::<Result<_>>()?;
    Ok(reports.into_iter().flatten().collect())
}
