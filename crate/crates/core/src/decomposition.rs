//! Cascade decomposition by partition pairs.
//!
//! A partition groups states into blocks; a block's number `e(B)` is its
//! position when blocks are sorted by their smallest state. A pair
//! `(π_I, π_D)` of input-preserving, orthogonal partitions splits a machine
//! into an independent machine over the blocks of `π_I` and a dependent
//! machine over the blocks of `π_D` that recovers the original state as the
//! single state shared by the two current blocks.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};
use crate::redux::branch_grid;

/// Default refusal threshold for lattice enumeration.
pub const DEFAULT_STATE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<StateId>>,
}

impl Partition {
    /// Normalizes block order; rejects empty or overlapping blocks.
    pub fn new(blocks: Vec<Vec<StateId>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut blocks: Vec<Vec<StateId>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::Semantic("empty block".into()));
            }
            for &s in b {
                if !seen.insert(s) {
                    return Err(Error::Semantic(format!("state {s} appears in two blocks")));
                }
            }
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    /// The zero partition: every state alone.
    pub fn singletons(states: &BTreeSet<StateId>) -> Self {
        Self {
            blocks: states.iter().map(|&s| vec![s]).collect(),
        }
    }

    /// The one-block partition `{S}`.
    pub fn whole(states: &BTreeSet<StateId>) -> Self {
        Self {
            blocks: vec![states.iter().copied().collect()],
        }
    }

    fn from_labels(states: &[StateId], labels: &[usize]) -> Self {
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); count];
        for (&s, &l) in states.iter().zip(labels) {
            blocks[l].push(s);
        }
        // restricted growth labels already number blocks by first element
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, e: usize) -> Option<&[StateId]> {
        self.blocks.get(e).map(Vec::as_slice)
    }

    /// `e(B)` for the block holding `s`.
    pub fn block_of(&self, s: StateId) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&s).is_ok())
    }

    pub fn block_index(&self) -> BTreeMap<StateId, usize> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(e, b)| b.iter().map(move |&s| (s, e)))
            .collect()
    }

    pub fn covers(&self, states: &BTreeSet<StateId>) -> bool {
        let mine: BTreeSet<StateId> = self.blocks.iter().flatten().copied().collect();
        &mine == states
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PartitionPair {
    pub pi_i: Partition,
    pub pi_d: Partition,
}

impl PartitionPair {
    pub fn total_blocks(&self) -> usize {
        self.pi_i.len() + self.pi_d.len()
    }

    /// One side is `0` or `{S}`.
    pub fn is_trivial(&self) -> bool {
        [&self.pi_i, &self.pi_d]
            .iter()
            .any(|p| p.len() == 1 || p.is_singletons())
    }

    /// Both partitions cover the machine, are input-preserving, and are
    /// orthogonal.
    pub fn is_valid_for(&self, m: &Fsm) -> bool {
        self.pi_i.covers(m.states())
            && self.pi_d.covers(m.states())
            && is_input_preserving(m, &self.pi_i)
            && is_input_preserving(m, &self.pi_d)
            && is_orthogonal(&self.pi_i, &self.pi_d)
    }
}

/// For every block and input, all defined transitions of the block's states
/// land in a single block. States without a transition on that input are not
/// constrained.
pub fn is_input_preserving(m: &Fsm, pi: &Partition) -> bool {
    if !pi.covers(m.states()) {
        return false;
    }
    let index = pi.block_index();
    pi.blocks().iter().all(|block| {
        (0..m.inputs().len()).all(|i| {
            let mut target_block = None;
            block.iter().all(|&s| match m.step_index(s, i) {
                None => true,
                Some((t, _)) => {
                    let b = index[&t];
                    *target_block.get_or_insert(b) == b
                }
            })
        })
    })
}

/// All nonempty pairwise block intersections.
pub fn partition_dot(p1: &Partition, p2: &Partition) -> Partition {
    let mut blocks = Vec::new();
    for a in p1.blocks() {
        for b in p2.blocks() {
            let meet: Vec<StateId> = a.iter().filter(|s| b.binary_search(s).is_ok()).copied().collect();
            if !meet.is_empty() {
                blocks.push(meet);
            }
        }
    }
    Partition::new(blocks).expect("intersections of two partitions are disjoint")
}

pub fn is_orthogonal(p1: &Partition, p2: &Partition) -> bool {
    partition_dot(p1, p2).is_singletons()
}

/// Every input-preserving partition of `m`'s states, in restricted-growth
/// order. Partial assignments are pruned as soon as two co-blocked states
/// send some input to different blocks.
pub fn enumerate_sp_partitions(m: &Fsm, cap: usize) -> Result<Vec<Partition>> {
    let n = m.num_states();
    if n > cap {
        return Err(Error::CapExceeded { states: n, cap });
    }
    let states: Vec<StateId> = m.states().iter().copied().collect();
    let pos: BTreeMap<StateId, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    // succ[state index][input] = target index
    let succ: Vec<Vec<Option<usize>>> = states
        .iter()
        .map(|&s| {
            (0..m.inputs().len())
                .map(|i| m.step_index(s, i).map(|(t, _)| pos[&t]))
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    let mut labels = vec![usize::MAX; n];
    enumerate_rec(0, 0, &states, &succ, &mut labels, &mut out);
    Ok(out)
}

fn enumerate_rec(
    j: usize,
    used: usize,
    states: &[StateId],
    succ: &[Vec<Option<usize>>],
    labels: &mut [usize],
    out: &mut Vec<Partition>,
) {
    if j == states.len() {
        out.push(Partition::from_labels(states, labels));
        return;
    }
    for l in 0..=used {
        labels[j] = l;
        if consistent_after(j, succ, labels) {
            enumerate_rec(j + 1, used.max(l + 1), states, succ, labels, out);
        }
    }
    labels[j] = usize::MAX;
}

/// Checks every constraint that became decidable when state `j` got a label.
fn consistent_after(j: usize, succ: &[Vec<Option<usize>>], labels: &[usize]) -> bool {
    let assigned = |x: usize| labels[x] != usize::MAX;
    for u in 0..=j {
        for v in (u + 1)..=j {
            if labels[u] != labels[v] {
                continue;
            }
            for (tu, tv) in succ[u].iter().zip(&succ[v]) {
                if let (Some(a), Some(b)) = (*tu, *tv) {
                    let touches = u == j || v == j || a == j || b == j;
                    if touches && assigned(a) && assigned(b) && labels[a] != labels[b] {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn label_vector(p: &Partition, pos: &BTreeMap<StateId, usize>) -> Vec<usize> {
    let mut v = vec![0; pos.len()];
    for (e, b) in p.blocks().iter().enumerate() {
        for s in b {
            v[pos[s]] = e;
        }
    }
    v
}

/// The orthogonal pair of proper input-preserving partitions (neither `0`
/// nor `{S}`) with the smallest total block count. Ties go to the lexicographically smallest
/// `(π_I, π_D)` block listing.
pub fn minimal_decomposition(m: &Fsm, cap: usize) -> Result<PartitionPair> {
    let parts = enumerate_sp_partitions(m, cap)?;
    let n = m.num_states();
    let pos: BTreeMap<StateId, usize> = m.states().iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let labelled: Vec<(usize, Vec<usize>)> = parts.iter().map(|p| (p.len(), label_vector(p, &pos))).collect();
    let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, (size, _)) in labelled.iter().enumerate() {
        by_size.entry(*size).or_default().push(idx);
    }

    let orthogonal = |a: &[usize], sa: usize, b: &[usize]| {
        let mut seen = vec![false; sa * n.max(1)];
        a.iter()
            .zip(b)
            .all(|(&x, &y)| !std::mem::replace(&mut seen[x * n + y], true))
    };

    for total in 2..=2 * n {
        let mut best: Option<PartitionPair> = None;
        for (&a, ia) in &by_size {
            let Some(ib) = total.checked_sub(a).and_then(|b| by_size.get(&b)) else {
                continue;
            };
            let b = total - a;
            // a factor over 0 copies the whole machine and a factor over {S}
            // carries nothing, so both sides must be proper
            if a * b < n || a == 1 || b == 1 || a == n || b == n {
                continue;
            }
            for &x in ia {
                for &y in ib {
                    if orthogonal(&labelled[x].1, a, &labelled[y].1) {
                        let cand = PartitionPair {
                            pi_i: parts[x].clone(),
                            pi_d: parts[y].clone(),
                        };
                        if best.as_ref().is_none_or(|b| cand < *b) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        if let Some(pair) = best {
            debug_assert!(!pair.is_trivial());
            return Ok(pair);
        }
    }
    Err(Error::TrivialOnly)
}

/// The known-form decomposition of an LPR(k) machine. `π_I` has one block
/// per column with the start state joining column 0; `π_D` has the start
/// state alone plus one block per row.
pub fn fixed_partitions_lprk(lprk: &Fsm, n: usize, k: usize) -> Result<PartitionPair> {
    let grid = branch_grid(lprk, n, k)?;
    let start = lprk.reset();
    let mut columns = grid.clone();
    columns[0].push(start);
    let mut rows = vec![vec![start]];
    for r in 0..n {
        rows.push(grid.iter().map(|col| col[r]).collect());
    }
    let pair = PartitionPair {
        pi_i: Partition::new(columns)?,
        pi_d: Partition::new(rows)?,
    };
    if !pair.is_valid_for(lprk) {
        return Err(Error::Internal("fixed LPR(k) partitions failed verification".into()));
    }
    Ok(pair)
}

/// `χ(B_I, B_D)`: the single state common to both blocks.
pub fn chi(b_i: &[StateId], b_d: &[StateId]) -> Result<StateId> {
    let mut common = b_i.iter().filter(|s| b_d.contains(s));
    match (common.next(), common.next()) {
        (Some(&s), None) => Ok(s),
        (None, _) => Err(Error::IncompatibleBlocks),
        (Some(_), Some(_)) => Err(Error::Semantic("blocks share more than one state".into())),
    }
}

/// Output symbol of the independent machine: consumed input and current
/// block number.
pub fn independent_symbol(input: &str, block: usize) -> String {
    format!("{input}:{block}")
}

/// Splits an independent-machine output back into `(input, block)`.
pub fn parse_independent_symbol(symbol: &str) -> Option<(&str, usize)> {
    let (i, b) = symbol.rsplit_once(':')?;
    Some((i, b.parse().ok()?))
}

/// The machine over `π_I`'s blocks.
pub fn build_independent(m: &Fsm, pi_i: &Partition) -> Result<Fsm> {
    if !pi_i.covers(m.states()) {
        return Err(Error::Semantic("partition does not cover the machine's states".into()));
    }
    let index = pi_i.block_index();
    let mut outputs = Vec::new();
    for i in m.inputs() {
        for e in 0..pi_i.len() {
            outputs.push(independent_symbol(i, e));
        }
    }
    let mut records = Vec::new();
    for (e, block) in pi_i.blocks().iter().enumerate() {
        for (ii, input) in m.inputs().iter().enumerate() {
            let targets: BTreeSet<usize> = block
                .iter()
                .filter_map(|&s| m.step_index(s, ii).map(|(t, _)| index[&t]))
                .collect();
            match targets.len() {
                0 => {}
                1 => {
                    let t = *targets.iter().next().expect("one target");
                    records.push(TransitionRecord::new(
                        e as StateId,
                        input.clone(),
                        t as StateId,
                        independent_symbol(input, e),
                    ));
                }
                _ => {
                    return Err(Error::NotInputPreserving(format!(
                        "block {e} splits on input {input:?} into blocks {targets:?}"
                    )))
                }
            }
        }
    }
    Fsm::new(
        0..pi_i.len() as StateId,
        m.inputs().to_vec(),
        outputs,
        index[&m.reset()] as StateId,
        records,
    )
}

/// The machine over `π_D`'s blocks. It reads the independent machine's
/// `(input, block)` symbol, recovers the original state with `χ`, follows the
/// original transition, and emits the recovered state id.
pub fn build_dependent(m: &Fsm, pair: &PartitionPair) -> Result<Fsm> {
    let PartitionPair { pi_i, pi_d } = pair;
    if !pi_d.covers(m.states()) || !pi_i.covers(m.states()) {
        return Err(Error::Semantic("partition does not cover the machine's states".into()));
    }
    if !is_orthogonal(pi_i, pi_d) {
        return Err(Error::Semantic("partitions are not orthogonal".into()));
    }
    let d_index = pi_d.block_index();
    let mut inputs = Vec::new();
    for i in m.inputs() {
        for v in 0..pi_i.len() {
            inputs.push(independent_symbol(i, v));
        }
    }
    let outputs: Vec<String> = m.states().iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for (u, b_d) in pi_d.blocks().iter().enumerate() {
        for (v, b_i) in pi_i.blocks().iter().enumerate() {
            let x = match chi(b_i, b_d) {
                Ok(x) => x,
                Err(Error::IncompatibleBlocks) => continue,
                Err(e) => return Err(e),
            };
            for (ii, input) in m.inputs().iter().enumerate() {
                if let Some((t, _)) = m.step_index(x, ii) {
                    records.push(TransitionRecord::new(
                        u as StateId,
                        independent_symbol(input, v),
                        d_index[&t] as StateId,
                        x.to_string(),
                    ));
                }
            }
        }
    }
    Fsm::new(
        0..pi_d.len() as StateId,
        inputs,
        outputs,
        d_index[&m.reset()] as StateId,
        records,
    )
}

/// Both factor machines of a validated pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub pair: PartitionPair,
    pub independent: Fsm,
    pub dependent: Fsm,
}

pub fn decompose(m: &Fsm, pair: PartitionPair) -> Result<Decomposition> {
    if !is_input_preserving(m, &pair.pi_i) || !is_input_preserving(m, &pair.pi_d) {
        return Err(Error::NotInputPreserving(
            "partition pair is not input-preserving".into(),
        ));
    }
    let independent = build_independent(m, &pair.pi_i)?;
    let dependent = build_dependent(m, &pair)?;
    Ok(Decomposition {
        pair,
        independent,
        dependent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypt::compose_cascade;
    use crate::graph::{standard_cg_machine, ConnGraph, TICK};
    use crate::redux::{lpr_k, LprkSpec};

    fn p(blocks: &[&[StateId]]) -> Partition {
        Partition::new(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    fn lprk(n: usize, k: usize) -> Fsm {
        let g = ConnGraph::linear(&[0, 1, 2, 3]).unwrap();
        lpr_k(&g, &LprkSpec::auto(&g, n, k).unwrap()).unwrap()
    }

    #[test]
    fn dot_and_orthogonality() {
        let a = p(&[&[1, 2], &[3, 4]]);
        let b = p(&[&[1, 3], &[2, 4]]);
        assert!(partition_dot(&a, &b).is_singletons());
        assert!(is_orthogonal(&a, &b));
        assert!(!is_orthogonal(&a, &a));
        let zero = Partition::singletons(&[1, 2, 3, 4].into());
        assert!(is_orthogonal(&a, &zero));
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![1, 2], vec![2]]).is_err());
        assert!(Partition::new(vec![vec![]]).is_err());
        let q = p(&[&[5, 3], &[1]]);
        assert_eq!(q.blocks(), &[vec![1], vec![3, 5]]);
        assert_eq!(q.block_of(5), Some(1));
    }

    #[test]
    fn trivial_partitions_are_input_preserving() {
        let m = lprk(2, 2);
        assert!(is_input_preserving(&m, &Partition::singletons(m.states())));
        assert!(is_input_preserving(&m, &Partition::whole(m.states())));
    }

    #[test]
    fn tiny_enumerations() {
        let one = standard_cg_machine(&ConnGraph::new([0], [(0, 0)], 0).unwrap());
        assert_eq!(enumerate_sp_partitions(&one, 12).unwrap().len(), 1);
        let two = standard_cg_machine(&ConnGraph::linear(&[0, 1]).unwrap());
        assert_eq!(enumerate_sp_partitions(&two, 12).unwrap().len(), 2);
        assert!(matches!(
            enumerate_sp_partitions(&lprk(4, 3), 12),
            Err(Error::CapExceeded { states: 13, cap: 12 })
        ));
    }

    #[test]
    fn fixed_pair_shapes() {
        let m = lprk(5, 3);
        let pair = fixed_partitions_lprk(&m, 5, 3).unwrap();
        assert_eq!(pair.pi_i.len(), 3);
        assert_eq!(pair.pi_d.len(), 6);
        assert_eq!(pair.total_blocks(), 5 + 3 + 1);
        let single = fixed_partitions_lprk(&lprk(3, 1), 3, 1).unwrap();
        assert_eq!(single.pi_i.len(), 1);
    }

    #[test]
    fn minimal_matches_fixed_total_on_small_lprk() {
        let m = lprk(2, 2);
        let pair = minimal_decomposition(&m, 12).unwrap();
        assert!(pair.is_valid_for(&m));
        assert_eq!(pair.total_blocks(), 5);
    }

    #[test]
    fn short_chain_has_only_trivial_pairs() {
        let chain = standard_cg_machine(&ConnGraph::linear(&[0, 1]).unwrap());
        assert!(matches!(minimal_decomposition(&chain, 12), Err(Error::TrivialOnly)));
    }

    #[test]
    fn chi_cases() {
        assert_eq!(chi(&[1, 2], &[2, 3]).unwrap(), 2);
        assert!(matches!(chi(&[1], &[2]), Err(Error::IncompatibleBlocks)));
    }

    #[test]
    fn singleton_independent_machine_mirrors_source() {
        let m = lprk(2, 2);
        let mi = build_independent(&m, &Partition::singletons(m.states())).unwrap();
        assert_eq!(mi.num_states(), m.num_states());
        assert_eq!(mi.num_transitions(), m.num_transitions());
        let whole = build_independent(&m, &Partition::whole(m.states())).unwrap();
        assert_eq!(whole.num_states(), 1);
    }

    #[test]
    fn cascade_reproduces_lprk_on_every_branch() {
        let m = lprk(3, 3);
        let d = decompose(&m, fixed_partitions_lprk(&m, 3, 3).unwrap()).unwrap();
        let cascade = compose_cascade(&d.independent, &d.dependent).unwrap();
        for v in m.inputs() {
            let schedule = [v.as_str(), TICK, TICK, TICK];
            assert_eq!(cascade.run(&schedule).outputs, m.run(&schedule).outputs);
        }
    }
}
