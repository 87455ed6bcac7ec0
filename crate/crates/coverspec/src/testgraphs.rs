//! Shared fixture graphs for unit tests. These mirror the JSON fixtures
//! shipped with the command-line crate; keep both in sync.

use crate::graph::{EdgeRecord, GraphRecord, Potential, QuantumGraph, VertexRecord};

fn kirchhoff(id: &str) -> VertexRecord {
    VertexRecord {
        id: id.to_owned(),
        alpha: 0.0,
    }
}

fn zero_edge(id: &str, from: &str, to: &str, length: f64) -> EdgeRecord {
    EdgeRecord {
        id: id.to_owned(),
        from: from.to_owned(),
        to: to.to_owned(),
        length,
        potential: Potential::Zero,
    }
}

/// Five Kirchhoff vertices; A and B adjacent, both adjacent to C, with
/// pendants D at A and E at B. Lengths 1, 1/2, 1/2, 1/2, 1/3.
pub(crate) fn fig2() -> QuantumGraph {
    QuantumGraph::new(GraphRecord {
        vertices: ["A", "B", "C", "D", "E"]
            .iter()
            .map(|v| kirchhoff(v))
            .collect(),
        edges: vec![
            zero_edge("AB", "A", "B", 1.0),
            zero_edge("AC", "A", "C", 0.5),
            zero_edge("AD", "A", "D", 0.5),
            zero_edge("BC", "B", "C", 0.5),
            zero_edge("BE", "B", "E", 1.0 / 3.0),
        ],
    })
    .expect("fig2 fixture must be valid")
}

/// Complete graph on 5 Kirchhoff vertices, every edge of length 2π.
pub(crate) fn k5() -> QuantumGraph {
    let names: Vec<String> = (1..=5).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..5 {
        for j in (i + 1)..5 {
            edges.push(zero_edge(
                &format!("e{}{}", i + 1, j + 1),
                &names[i],
                &names[j],
                2.0 * std::f64::consts::PI,
            ));
        }
    }
    QuantumGraph::new(GraphRecord {
        vertices: names.iter().map(|v| kirchhoff(v)).collect(),
        edges,
    })
    .expect("k5 fixture must be valid")
}

/// Unit 3-cycle on Kirchhoff vertices w1, w2, w3.
pub(crate) fn cycle3() -> QuantumGraph {
    QuantumGraph::new(GraphRecord {
        vertices: ["w1", "w2", "w3"].iter().map(|v| kirchhoff(v)).collect(),
        edges: vec![
            zero_edge("c12", "w1", "w2", 1.0),
            zero_edge("c23", "w2", "w3", 1.0),
            zero_edge("c31", "w3", "w1", 1.0),
        ],
    })
    .expect("cycle3 fixture must be valid")
}

/// Unit 3-cycle u, c1, c2 with a pendant edge u - p of length 1/2, all
/// Kirchhoff.
pub(crate) fn lollipop() -> QuantumGraph {
    QuantumGraph::new(GraphRecord {
        vertices: ["u", "c1", "c2", "p"]
            .iter()
            .map(|v| kirchhoff(v))
            .collect(),
        edges: vec![
            zero_edge("uc1", "u", "c1", 1.0),
            zero_edge("c1c2", "c1", "c2", 1.0),
            zero_edge("c2u", "c2", "u", 1.0),
            zero_edge("up", "u", "p", 0.5),
        ],
    })
    .expect("lollipop fixture must be valid")
}

/// Single unit edge with Dirichlet conditions at both ends.
pub(crate) fn interval() -> QuantumGraph {
    QuantumGraph::new(GraphRecord {
        vertices: vec![
            VertexRecord {
                id: "v1".into(),
                alpha: f64::INFINITY,
            },
            VertexRecord {
                id: "v2".into(),
                alpha: f64::INFINITY,
            },
        ],
        edges: vec![zero_edge("e", "v1", "v2", 1.0)],
    })
    .expect("interval fixture must be valid")
}

/// Unit triangle on Kirchhoff vertices a, b, c.
pub(crate) fn triangle() -> QuantumGraph {
    QuantumGraph::new(GraphRecord {
        vertices: ["a", "b", "c"].iter().map(|v| kirchhoff(v)).collect(),
        edges: vec![
            zero_edge("ab", "a", "b", 1.0),
            zero_edge("bc", "b", "c", 1.0),
            zero_edge("ca", "c", "a", 1.0),
        ],
    })
    .expect("triangle fixture must be valid")
}
