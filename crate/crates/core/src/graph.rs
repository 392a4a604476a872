//! Rooted connectivity graphs, their boolean adjacency matrices, and the
//! standard machine that walks a graph emitting its current vertex.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};

/// Symbol used for the single "advance" input of chain-shaped machines.
pub const TICK: &str = "0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnGraph {
    vertices: BTreeSet<StateId>,
    edges: BTreeSet<(StateId, StateId)>,
    root: StateId,
}

impl ConnGraph {
    pub fn new(
        vertices: impl IntoIterator<Item = StateId>,
        edges: impl IntoIterator<Item = (StateId, StateId)>,
        root: StateId,
    ) -> Result<Self> {
        let vertices: BTreeSet<StateId> = vertices.into_iter().collect();
        if !vertices.contains(&root) {
            return Err(Error::Semantic(format!("root {root} is not a vertex")));
        }
        let edges: BTreeSet<(StateId, StateId)> = edges.into_iter().collect();
        if let Some(&(u, v)) = edges
            .iter()
            .find(|(u, v)| !vertices.contains(u) || !vertices.contains(v))
        {
            return Err(Error::Semantic(format!("edge ({u}, {v}) leaves the vertex set")));
        }
        Ok(Self { vertices, edges, root })
    }

    /// The chain `path[0] -> path[1] -> ...` rooted at `path[0]`.
    pub fn linear(path: &[StateId]) -> Result<Self> {
        let root = *path.first().ok_or_else(|| Error::Semantic("empty path".into()))?;
        Self::new(path.iter().copied(), path.windows(2).map(|w| (w[0], w[1])), root)
    }

    pub fn vertices(&self) -> &BTreeSet<StateId> {
        &self.vertices
    }

    pub fn edges(&self) -> &BTreeSet<(StateId, StateId)> {
        &self.edges
    }

    pub fn root(&self) -> StateId {
        self.root
    }

    /// Successors in ascending id order.
    pub fn successors(&self, v: StateId) -> impl DoubleEndedIterator<Item = StateId> + '_ {
        self.edges.range((v, 0)..=(v, StateId::MAX)).map(|&(_, w)| w)
    }

    pub fn out_degree(&self, v: StateId) -> usize {
        self.successors(v).count()
    }

    /// Every vertex has out-degree at most one and the edges form a single
    /// chain from the root through all vertices, ending in a vertex with no
    /// successor.
    pub fn is_linear(&self) -> bool {
        self.linear_order().is_some()
    }

    /// The root-first vertex order of a linear graph.
    pub fn linear_order(&self) -> Option<Vec<StateId>> {
        let mut order = vec![self.root];
        let mut seen = BTreeSet::from([self.root]);
        let mut cur = self.root;
        loop {
            let mut succ = self.successors(cur);
            match (succ.next(), succ.next()) {
                (None, _) => break,
                (Some(n), None) => {
                    if !seen.insert(n) {
                        return None;
                    }
                    order.push(n);
                    cur = n;
                }
                _ => return None,
            }
        }
        (order.len() == self.vertices.len() && self.edges.len() + 1 == order.len()).then_some(order)
    }

    /// Dense index of a vertex under the ascending-id matrix mapping.
    pub fn index_of(&self, v: StateId) -> Option<usize> {
        self.vertices.contains(&v).then(|| self.vertices.range(..v).count())
    }
}

/// Edges projected from the transition relation, inputs and outputs dropped.
pub fn connectivity_graph(m: &Fsm) -> ConnGraph {
    ConnGraph {
        vertices: m.states().clone(),
        edges: m.indexed_transitions().map(|(s, _, t, _)| (s, t)).collect(),
        root: m.reset(),
    }
}

/// Square boolean matrix whose rows and columns are labelled by vertex ids in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    dim: usize,
    bits: Vec<bool>,
    labels: Vec<StateId>,
}

impl BitMatrix {
    pub fn zeros(labels: Vec<StateId>) -> Self {
        let dim = labels.len();
        Self {
            dim,
            bits: vec![false; dim * dim],
            labels,
        }
    }

    /// Identity with labels `0..dim`.
    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros((0..dim as StateId).collect());
        for i in 0..dim {
            m.set(i, i, true);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[StateId] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.dim + col] = value;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.labels.clone());
        for r in 0..self.dim {
            for c in 0..self.dim {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Boolean (OR of ANDs) product; labels are taken from `self`.
    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = Self::zeros(self.labels.clone());
        for r in 0..self.dim {
            for k in 0..self.dim {
                if self.get(r, k) {
                    for c in 0..self.dim {
                        if other.get(k, c) {
                            out.set(r, c, true);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `ρ(G)`: entry `(i, j)` is set iff the edge `(v_i, v_j)` exists.
pub fn adjacency(g: &ConnGraph) -> BitMatrix {
    let labels: Vec<StateId> = g.vertices.iter().copied().collect();
    let index: BTreeMap<StateId, usize> = labels.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut m = BitMatrix::zeros(labels);
    for &(u, v) in &g.edges {
        m.set(index[&u], index[&v], true);
    }
    m
}

/// `ρ⁻¹(A)` with the given root.
pub fn graph_of_adjacency(a: &BitMatrix, root: StateId) -> Result<ConnGraph> {
    if a.labels.len() != a.dim {
        return Err(Error::Dimension {
            expected: a.dim,
            found: a.labels.len(),
        });
    }
    if !a.labels.contains(&root) {
        return Err(Error::Semantic(format!("root {root} does not label a row")));
    }
    let mut edges = BTreeSet::new();
    for r in 0..a.dim {
        for c in 0..a.dim {
            if a.get(r, c) {
                edges.insert((a.labels[r], a.labels[c]));
            }
        }
    }
    ConnGraph::new(a.labels.iter().copied(), edges, root)
}

/// `φ(G)`: states are vertices, each edge `(u, w)` is a transition emitting
/// `u`. When every out-degree is at most one the input alphabet is the
/// single tick symbol; otherwise edges leaving a vertex are selected by
/// indices `0..d` in ascending target order.
pub fn standard_cg_machine(g: &ConnGraph) -> Fsm {
    let max_degree = g.vertices.iter().map(|&v| g.out_degree(v)).max().unwrap_or(0);
    let inputs: Vec<String> = (0..max_degree.max(1)).map(|i| i.to_string()).collect();
    let outputs: Vec<String> = g.vertices.iter().map(|v| v.to_string()).collect();
    let records = g.vertices.iter().flat_map(|&u| {
        g.successors(u)
            .enumerate()
            .map(move |(i, w)| TransitionRecord::new(u, i.to_string(), w, u.to_string()))
    });
    Fsm::new(
        g.vertices.iter().copied(),
        inputs,
        outputs,
        g.root,
        records.collect::<Vec<_>>(),
    )
    .expect("graph invariants carry over to the standard machine")
}
