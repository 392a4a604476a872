//! The characteristic (REDUX) machine of a host: longest simple path from
//! the reset state, resized by repetition, renumbering and truncation into a
//! linear graph (the LPR), and the k-branch extension LPR(k).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{bits_for_count, bits_to_encode, Fsm, StateId, TransitionRecord};
use crate::graph::{ConnGraph, TICK};

/// An ordered vertex string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    vertices: Vec<StateId>,
    /// The `v*` a renumbered path was built with; 0 when unset.
    base_max: StateId,
}

impl Path {
    pub fn new(vertices: Vec<StateId>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::OutOfRange("a path has at least one vertex".into()));
        }
        Ok(Self { vertices, base_max: 0 })
    }

    pub fn vertices(&self) -> &[StateId] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn base_max(&self) -> StateId {
        self.base_max
    }

    pub fn max_vertex(&self) -> StateId {
        *self.vertices.iter().max().expect("paths are nonempty")
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.vertices.iter().collect();
        set.len() == self.vertices.len()
    }
}

/// Longest simple path from the root; among equally long paths the
/// lexically greatest under ascending vertex ids.
///
/// Exact backtracking search. Neighbours are tried in descending order so the
/// first path reaching a given length is the lexical maximum of that length,
/// and a branch is cut once the vertices still reachable from its tip cannot
/// make it strictly longer than the best found.
pub fn longest_simple_path(g: &ConnGraph) -> Path {
    let ids: Vec<StateId> = g.vertices().iter().copied().collect();
    let index: BTreeMap<StateId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let succ: Vec<Vec<usize>> = ids
        .iter()
        .map(|&v| g.successors(v).map(|w| index[&w]).collect())
        .collect();
    let root = index[&g.root()];

    let mut search = LongestPath {
        succ: &succ,
        visited: vec![false; ids.len()],
        path: vec![root],
        best: vec![root],
        limit: 0,
        mark: vec![0; ids.len()],
        epoch: 0,
        stack: Vec::new(),
    };
    search.visited[root] = true;
    search.limit = search.reach_count(root) + 1;
    search.dfs(root);
    Path {
        vertices: search.best.iter().map(|&i| ids[i]).collect(),
        base_max: 0,
    }
}

struct LongestPath<'a> {
    succ: &'a [Vec<usize>],
    visited: Vec<bool>,
    path: Vec<usize>,
    best: Vec<usize>,
    limit: usize,
    mark: Vec<u32>,
    epoch: u32,
    stack: Vec<usize>,
}

impl LongestPath<'_> {
    /// Unvisited vertices reachable from `from` through unvisited vertices.
    fn reach_count(&mut self, from: usize) -> usize {
        self.epoch += 1;
        let epoch = self.epoch;
        self.stack.clear();
        self.stack.push(from);
        let mut count = 0;
        while let Some(v) = self.stack.pop() {
            for &w in &self.succ[v] {
                if !self.visited[w] && self.mark[w] != epoch {
                    self.mark[w] = epoch;
                    count += 1;
                    self.stack.push(w);
                }
            }
        }
        count
    }

    /// Returns true once a path covering every reachable vertex is found.
    fn dfs(&mut self, cur: usize) -> bool {
        if self.path.len() > self.best.len() {
            self.best.clone_from(&self.path);
            if self.best.len() == self.limit {
                return true;
            }
        }
        if self.path.len() + self.reach_count(cur) <= self.best.len() {
            return false;
        }
        let succ = self.succ;
        for &w in succ[cur].iter().rev() {
            if self.visited[w] {
                continue;
            }
            self.visited[w] = true;
            self.path.push(w);
            let done = self.dfs(w);
            self.path.pop();
            self.visited[w] = false;
            if done {
                return true;
            }
        }
        false
    }
}

/// `p^j`: the string repeated `j` times, duplicates kept.
pub fn repeat_path(p: &Path, j: usize) -> Result<Path> {
    if j == 0 {
        return Err(Error::OutOfRange("repetition count must be at least 1".into()));
    }
    Ok(Path {
        vertices: p.vertices.repeat(j),
        base_max: p.base_max,
    })
}

fn dense_ranks(period: &[StateId]) -> Vec<StateId> {
    let set: BTreeSet<StateId> = period.iter().copied().collect();
    set.into_iter().collect()
}

fn radix(v_star: StateId, period_len: usize) -> u64 {
    u64::from(v_star).max(period_len as u64)
}

/// Renumbers a j-fold repetition so every element becomes distinct: the
/// element at row `r` (0-based) with dense 1-based rank `idx` maps to
/// `B·r + idx`, where `B = max(v*, period length)`.
pub fn renumber(p_rep: &Path, v_star: StateId) -> Result<Path> {
    if p_rep.vertices.iter().any(|&v| v > v_star) {
        return Err(Error::OutOfRange(format!(
            "v* = {v_star} is smaller than a path element"
        )));
    }
    let ranks = dense_ranks(&p_rep.vertices);
    let period = ranks.len();
    if !p_rep.len().is_multiple_of(period)
        || p_rep
            .vertices
            .iter()
            .enumerate()
            .any(|(i, &v)| v != p_rep.vertices[i % period])
    {
        return Err(Error::OutOfRange("path is not a repetition of a simple period".into()));
    }
    let base = radix(v_star, period);
    let vertices = p_rep
        .vertices
        .iter()
        .enumerate()
        .map(|(pos, v)| {
            let row = (pos / period) as u64;
            let idx = ranks.binary_search(v).expect("rank table covers the path") as u64 + 1;
            StateId::try_from(base * row + idx)
                .map_err(|_| Error::OutOfRange("renumbered id exceeds the state id range".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Path {
        vertices,
        base_max: v_star,
    })
}

/// Inverse of [`renumber`]: recovers the repeated raw path given the period.
pub fn renumber_inverse(q: &Path, v_star: StateId, base: &Path) -> Result<Path> {
    let ranks = dense_ranks(&base.vertices);
    let b = radix(v_star, ranks.len());
    let vertices = q
        .vertices
        .iter()
        .map(|&w| {
            if w == 0 {
                return Err(Error::OutOfRange("renumbered ids start at 1".into()));
            }
            let idx = ((u64::from(w) - 1) % b) as usize;
            ranks
                .get(idx)
                .copied()
                .ok_or_else(|| Error::OutOfRange(format!("{w} is not a renumbered id for this base")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Path { vertices, base_max: 0 })
}

/// `τ_j`: the first `j` vertices, `1 ≤ j ≤ |p|`.
pub fn truncate(p: &Path, j: usize) -> Result<Path> {
    if j == 0 || j > p.len() {
        return Err(Error::OutOfRange(format!(
            "truncation length {j} outside 1..={}",
            p.len()
        )));
    }
    Ok(Path {
        vertices: p.vertices[..j].to_vec(),
        base_max: p.base_max,
    })
}

/// `σ_m`: repeat `⌈m/|p|⌉` times, renumber with `v* = max p`, cut to `m`.
pub fn sized_path(p: &Path, m: usize) -> Result<Path> {
    if m == 0 {
        return Err(Error::OutOfRange("target length must be at least 1".into()));
    }
    let j = m.div_ceil(p.len());
    let repeated = repeat_path(p, j)?;
    truncate(&renumber(&repeated, p.max_vertex())?, m)
}

/// The longest path reduction of `g`, sized to `m` vertices.
pub fn lpr(g: &ConnGraph, m: usize) -> Result<ConnGraph> {
    let sized = sized_path(&longest_simple_path(g), m)?;
    ConnGraph::linear(&sized.vertices)
}

/// Add-shift hash: rotate `x` left by `c mod z` within `z` bits, then add `r`
/// modulo `2^z`.
pub fn add_shift_hash(x: u64, r: u64, c: u64, z: u32) -> Result<u64> {
    if z == 0 || z > 63 {
        return Err(Error::OutOfRange(format!("hash width {z} outside 1..=63")));
    }
    let modulus = 1u64 << z;
    if x >= modulus {
        return Err(Error::OutOfRange(format!("{x} does not fit in {z} bits")));
    }
    let rot = (c % u64::from(z)) as u32;
    let rotated = if rot == 0 {
        x
    } else {
        ((x << rot) | (x >> (z - rot))) & (modulus - 1)
    };
    Ok((rotated + r % modulus) % modulus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashKind {
    AddShift,
}

/// Shape of an LPR(k): `n` rows (branch length), `k` columns (branches),
/// renumbered per cell by a hash over `z`-bit ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LprkSpec {
    pub n: usize,
    pub k: usize,
    pub hash: HashKind,
    pub z: u32,
}

impl LprkSpec {
    pub fn new(n: usize, k: usize, z: u32) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::OutOfRange("n and k must be at least 1".into()));
        }
        if z == 0 || z > 31 {
            return Err(Error::OutOfRange(format!("hash width {z} outside 1..=31")));
        }
        if (k as u64) << z > u64::from(StateId::MAX) {
            return Err(Error::OutOfRange(format!(
                "{k} columns of {z}-bit ids overflow a state id"
            )));
        }
        Ok(Self {
            n,
            k,
            hash: HashKind::AddShift,
            z,
        })
    }

    /// Smallest width that fits the sized LPR of `g` and keeps all `n·k`
    /// hashed ids distinct.
    pub fn auto(g: &ConnGraph, n: usize, k: usize) -> Result<Self> {
        let column = sized_path(&longest_simple_path(g), n.max(1))?;
        let min_z = bits_to_encode(u64::from(column.max_vertex()) << row_room(n)).max(1);
        for z in min_z..=31 {
            let spec = Self::new(n, k, z)?;
            if branch_ids(column.vertices(), &spec).is_ok() {
                return Ok(spec);
            }
        }
        Err(Error::OutOfRange("no collision-free hash width up to 31 bits".into()))
    }

    /// `χ`: bits of the branch-select input.
    pub fn select_width(&self) -> u32 {
        bits_for_count(self.k)
    }

    /// One past the highest column tag, so never a branch id.
    pub fn start_state(&self) -> StateId {
        (self.k as StateId) << self.z
    }
}

/// Low bits kept free under each LPR id for the row offset.
fn row_room(n: usize) -> u32 {
    bits_to_encode(n.saturating_sub(1) as u64)
}

/// Hashed ids laid out as `grid[column][row]`.
fn branch_ids(column: &[StateId], spec: &LprkSpec) -> Result<Vec<Vec<StateId>>> {
    let mut owner: BTreeMap<StateId, (usize, usize)> = BTreeMap::new();
    let mut grid = vec![Vec::with_capacity(spec.n); spec.k];
    let room = row_room(spec.n);
    for (c, col) in grid.iter_mut().enumerate() {
        for (r, &x) in column.iter().enumerate() {
            // LPR ids are shifted clear of the row offset, otherwise rows a, b
            // with x_a + a = x_b + b collide at every width
            let x = u64::from(x) << room;
            // the column index sits above the hashed bits; rows of different
            // columns would otherwise collide for every width
            let id = ((c as StateId) << spec.z) | add_shift_hash(x, r as u64, c as u64, spec.z)? as StateId;
            if let Some(&(r0, c0)) = owner.get(&id) {
                return Err(Error::HashCollision(format!("{r0},{c0}"), format!("{r},{c}"), id));
            }
            owner.insert(id, (r, c));
            col.push(id);
        }
    }
    Ok(grid)
}

/// LPR(k): a fresh start state (id `k·2^z`) branching to `k` renumbered copies
/// of the length-`n` LPR. Branch-select input `v` (one of `2^χ` symbols)
/// enters column `v mod k`; inside a branch the tick advances one row. Each
/// transition emits its source state id.
pub fn lpr_k(g: &ConnGraph, spec: &LprkSpec) -> Result<Fsm> {
    let column = sized_path(&longest_simple_path(g), spec.n)?;
    let grid = branch_ids(column.vertices(), spec)?;
    let start = spec.start_state();
    let select = 1usize << spec.select_width();
    let inputs: Vec<String> = (0..select).map(|v| v.to_string()).collect();

    let mut records = Vec::new();
    for v in 0..select {
        records.push(TransitionRecord::new(
            start,
            v.to_string(),
            grid[v % spec.k][0],
            start.to_string(),
        ));
    }
    for col in &grid {
        for w in col.windows(2) {
            records.push(TransitionRecord::new(w[0], TICK, w[1], w[0].to_string()));
        }
    }
    let mut states: Vec<StateId> = grid.iter().flatten().copied().collect();
    states.push(start);
    states.sort_unstable();
    let outputs = states.iter().map(|s| s.to_string()).collect();
    Fsm::new(states, inputs, outputs, start, records)
}

/// Recovers `grid[column][row]` from an LPR(k) machine by walking each
/// branch from the reset state.
pub fn branch_grid(m: &Fsm, n: usize, k: usize) -> Result<Vec<Vec<StateId>>> {
    let mismatch = |what: &str| Error::Semantic(format!("not an LPR({k}) with n = {n}: {what}"));
    if m.num_states() != n * k + 1 {
        return Err(mismatch("state count"));
    }
    let tick = m.input_index(TICK).ok_or_else(|| mismatch("no tick input"))?;
    let mut grid = Vec::with_capacity(k);
    for c in 0..k {
        let (mut cur, _) = m
            .step_index(m.reset(), c)
            .ok_or_else(|| mismatch("start state lacks a branch input"))?;
        let mut col = vec![cur];
        for _ in 1..n {
            cur = m.step_index(cur, tick).ok_or_else(|| mismatch("branch too short"))?.0;
            col.push(cur);
        }
        if m.step_index(cur, tick).is_some() {
            return Err(mismatch("branch too long"));
        }
        grid.push(col);
    }
    let distinct: BTreeSet<_> = grid.iter().flatten().collect();
    if distinct.len() != n * k || distinct.contains(&m.reset()) {
        return Err(mismatch("branches overlap"));
    }
    Ok(grid)
}
