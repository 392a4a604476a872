//! Permutation-matrix encryption of a REDUX graph, the runnable watermark
//! machine, and the trace-built decryption machine that undoes it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};
use crate::graph::{adjacency, graph_of_adjacency, standard_cg_machine, BitMatrix, ConnGraph};

/// A permutation of matrix indices `0..m`. As a matrix, row `i` has its
/// single one in column `image[i]`, so right-multiplying an adjacency matrix
/// moves column `i` to column `image[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermKey {
    image: Vec<usize>,
}

impl PermKey {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let m = image.len();
        if m == 0 {
            return Err(Error::OutOfRange("key dimension must be at least 1".into()));
        }
        let mut seen = vec![false; m];
        for &x in &image {
            if x >= m || std::mem::replace(&mut seen[x], true) {
                return Err(Error::OutOfRange(format!("{image:?} is not a permutation")));
            }
        }
        Ok(Self { image })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            image: (0..m).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn inverse(&self) -> PermKey {
        let mut inv = vec![0; self.image.len()];
        for (i, &j) in self.image.iter().enumerate() {
            inv[j] = i;
        }
        PermKey { image: inv }
    }

    /// `K` with rows and columns labelled `0..m`.
    pub fn matrix(&self) -> BitMatrix {
        let mut k = BitMatrix::zeros((0..self.dim() as StateId).collect());
        for (i, &j) in self.image.iter().enumerate() {
            k.set(i, j, true);
        }
        k
    }

    /// `π_K` lifted to vertex ids of `g` through the ascending index map.
    pub fn vertex_map(&self, g: &ConnGraph) -> Result<BTreeMap<StateId, StateId>> {
        self.check_dim(g)?;
        let ids: Vec<StateId> = g.vertices().iter().copied().collect();
        Ok(ids.iter().enumerate().map(|(i, &v)| (v, ids[self.image[i]])).collect())
    }

    fn check_dim(&self, g: &ConnGraph) -> Result<()> {
        if self.dim() != g.vertices().len() {
            return Err(Error::Dimension {
                expected: g.vertices().len(),
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// Uniform permutation from a seeded Fisher–Yates shuffle.
pub fn random_perm_key(m: usize, seed: u64) -> Result<PermKey> {
    if m == 0 {
        return Err(Error::OutOfRange("key dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image: Vec<usize> = (0..m).collect();
    image.shuffle(&mut rng);
    PermKey::new(image)
}

fn with_labels(mut k: BitMatrix, labels: &[StateId]) -> BitMatrix {
    let mut out = BitMatrix::zeros(labels.to_vec());
    for r in 0..k.dim() {
        for c in 0..k.dim() {
            out.set(r, c, k.get(r, c));
        }
    }
    k = out;
    k
}

/// `ρ⁻¹(ρ(G)·K)`.
pub fn encrypt_graph(key: &PermKey, g: &ConnGraph) -> Result<ConnGraph> {
    key.check_dim(g)?;
    let a = adjacency(g);
    let product = a.mul(&with_labels(key.matrix(), a.labels()))?;
    graph_of_adjacency(&product, g.root())
}

/// `ρ⁻¹(ρ(G)·Kᵀ)`.
pub fn decrypt_graph(key: &PermKey, g: &ConnGraph) -> Result<ConnGraph> {
    key.check_dim(g)?;
    let a = adjacency(g);
    let product = a.mul(&with_labels(key.matrix().transpose(), a.labels()))?;
    graph_of_adjacency(&product, g.root())
}

/// `ρ⁻¹(Kᵀ·ρ(G)·K)`: every vertex renamed by `π_K`, root included.
pub fn relabel_graph(key: &PermKey, g: &ConnGraph) -> Result<ConnGraph> {
    let map = key.vertex_map(g)?;
    ConnGraph::new(
        g.vertices().iter().copied(),
        g.edges().iter().map(|(u, v)| (map[u], map[v])),
        map[&g.root()],
    )
}

fn require_linear(lpr: &ConnGraph) -> Result<Vec<StateId>> {
    lpr.linear_order()
        .ok_or_else(|| Error::Semantic("the REDUX must be a linear graph".into()))
}

/// The machine shipped in the package: the standard machine of the
/// relabelled LPR.
pub fn build_watermark_machine(key: &PermKey, lpr: &ConnGraph) -> Result<Fsm> {
    require_linear(lpr)?;
    Ok(standard_cg_machine(&relabel_graph(key, lpr)?))
}

/// The simultaneous walk `⟨(u_k, v_k)⟩` of the LPR and its relabelled image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePair {
    pub steps: Vec<(StateId, StateId)>,
}

pub fn trace_pair(lpr: &ConnGraph, key: &PermKey) -> Result<TracePair> {
    let order = require_linear(lpr)?;
    let map = key.vertex_map(lpr)?;
    Ok(TracePair {
        steps: order.iter().map(|u| (*u, map[u])).collect(),
    })
}

/// Decryption machine over the LPR's states. Its inputs are the watermark
/// machine's emissions. In `u_k`, the input `v_{k+1}` advances to `u_{k+1}`
/// and emits `u_{k+1}`; any other input leaves it in place emitting `u_k`.
pub fn build_decryption_machine(key: &PermKey, lpr: &ConnGraph) -> Result<Fsm> {
    let trace = trace_pair(lpr, key)?;
    let inputs: Vec<String> = lpr.vertices().iter().map(|v| v.to_string()).collect();
    let outputs = inputs.clone();
    let next: BTreeMap<StateId, (StateId, StateId)> =
        trace.steps.windows(2).map(|w| (w[0].0, (w[1].1, w[1].0))).collect();
    let mut records = Vec::new();
    for &u in lpr.vertices() {
        for &w in lpr.vertices() {
            let rec = match next.get(&u) {
                Some(&(expect, target)) if expect == w => {
                    TransitionRecord::new(u, w.to_string(), target, target.to_string())
                }
                _ => TransitionRecord::new(u, w.to_string(), u, u.to_string()),
            };
            records.push(rec);
        }
    }
    Fsm::new(lpr.vertices().iter().copied(), inputs, outputs, lpr.root(), records)
}

/// Product machine feeding `front`'s output into `back` within one clock.
/// States are numbered densely in breadth-first order from the reset pair
/// (the reset pair is 0); only reachable pairs are built.
pub fn compose_cascade(front: &Fsm, back: &Fsm) -> Result<Fsm> {
    Ok(compose_cascade_with_map(front, back)?.0)
}

pub fn compose_cascade_with_map(front: &Fsm, back: &Fsm) -> Result<(Fsm, Vec<(StateId, StateId)>)> {
    let missing: Vec<&String> = front
        .outputs()
        .iter()
        .filter(|o| back.input_index(o).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alphabet(format!("back machine does not accept {missing:?}")));
    }
    let mut ids: BTreeMap<(StateId, StateId), StateId> = BTreeMap::new();
    let mut pairs = vec![(front.reset(), back.reset())];
    ids.insert(pairs[0], 0);
    let mut queue = VecDeque::from([pairs[0]]);
    let mut records = Vec::new();
    let mut outputs = BTreeSet::new();
    while let Some((f, b)) = queue.pop_front() {
        let from = ids[&(f, b)];
        for x in front.inputs() {
            let Some((f2, mid)) = front.step(f, x) else { continue };
            let Some((b2, out)) = back.step(b, mid) else { continue };
            let next = (f2, b2);
            let to = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    let id = pairs.len() as StateId;
                    ids.insert(next, id);
                    pairs.push(next);
                    queue.push_back(next);
                    id
                }
            };
            outputs.insert(out.to_string());
            records.push(TransitionRecord::new(from, x.clone(), to, out.to_string()));
        }
    }
    let fsm = Fsm::new(
        0..pairs.len() as StateId,
        front.inputs().to_vec(),
        outputs.into_iter().collect(),
        0,
        records,
    )?;
    Ok((fsm, pairs))
}
