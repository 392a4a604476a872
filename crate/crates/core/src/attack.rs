//! Attacks on a shipped machine seen as a black box, and the equivalence
//! checks used to judge them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::parse_independent_symbol;
use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};
use crate::graph::TICK;

/// A steppable black box. `step` returns `None` when the machine halts.
pub trait Oracle {
    fn inputs(&self) -> Vec<String>;
    fn reset(&mut self) -> Result<()>;
    fn step(&mut self, input: &str) -> Option<String>;
}

/// A machine behind the oracle interface, counting resets and steps.
#[derive(Debug, Clone)]
pub struct FsmOracle {
    machine: Fsm,
    state: StateId,
    halted: bool,
    resettable: bool,
    pub resets: usize,
    pub steps: usize,
}

impl FsmOracle {
    pub fn new(machine: Fsm) -> Self {
        Self {
            state: machine.reset(),
            machine,
            halted: false,
            resettable: true,
            resets: 0,
            steps: 0,
        }
    }

    /// An oracle whose reset line is not available.
    pub fn without_reset(machine: Fsm) -> Self {
        Self {
            resettable: false,
            ..Self::new(machine)
        }
    }
}

impl Oracle for FsmOracle {
    fn inputs(&self) -> Vec<String> {
        self.machine.inputs().to_vec()
    }

    fn reset(&mut self) -> Result<()> {
        if !self.resettable {
            return Err(Error::Unsupported("oracle cannot be reset".into()));
        }
        self.state = self.machine.reset();
        self.halted = false;
        self.resets += 1;
        Ok(())
    }

    fn step(&mut self, input: &str) -> Option<String> {
        if self.halted {
            return None;
        }
        self.steps += 1;
        match self.machine.step(self.state, input) {
            Some((next, out)) => {
                self.state = next;
                Some(out.to_string())
            }
            None => {
                self.halted = true;
                None
            }
        }
    }
}

/// Rebuilds the independent machine of a fixed LPR(k) decomposition. The
/// shape is public: one start block that fans out on every branch-select
/// value, and branch blocks that stay put on the tick. One reset per
/// select value, two steps each.
pub fn informed_attack(oracle: &mut dyn Oracle, chi: u32) -> Result<Fsm> {
    let alphabet = oracle.inputs();
    let mut records: BTreeMap<(StateId, String), (StateId, String)> = BTreeMap::new();
    let mut states = BTreeSet::new();
    let mut start = None;
    let mut dead_ends = Vec::new();
    for v in 0..(1u64 << chi) {
        let symbol = v.to_string();
        oracle.reset()?;
        let Some(first) = oracle.step(&symbol) else { continue };
        let (_, from) = parse_independent_symbol(&first)
            .ok_or_else(|| Error::Unsupported(format!("unexpected output {first:?}")))?;
        let from = from as StateId;
        start.get_or_insert(from);
        states.insert(from);
        let Some(second) = oracle.step(TICK) else {
            // the branch block has no tick edge, so its number never shows;
            // any state without transitions behaves the same
            dead_ends.push((from, symbol, first));
            continue;
        };
        let (_, to) = parse_independent_symbol(&second)
            .ok_or_else(|| Error::Unsupported(format!("unexpected output {second:?}")))?;
        let to = to as StateId;
        states.insert(to);
        records.insert((from, symbol), (to, first));
        records.insert((to, TICK.to_string()), (to, second));
    }
    let start = start.ok_or_else(|| Error::Unsupported("no branch-select value was accepted".into()))?;
    if !dead_ends.is_empty() {
        let dead = states.iter().next_back().map_or(0, |s| s + 1);
        states.insert(dead);
        for (from, symbol, out) in dead_ends {
            records.insert((from, symbol), (dead, out));
        }
    }
    let outputs: BTreeSet<String> = records.values().map(|(_, o)| o.clone()).collect();
    Fsm::new(
        states,
        alphabet,
        outputs.into_iter().collect(),
        start,
        records
            .into_iter()
            .map(|((f, i), (t, o))| TransitionRecord::new(f, i, t, o)),
    )
}

/// Observed behaviour: runs from reset, each a list of `(input, output)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IoTranscript {
    pub alphabet: Vec<String>,
    pub runs: Vec<Vec<(String, String)>>,
}

impl IoTranscript {
    pub fn distinct_outputs(&self) -> BTreeSet<&str> {
        self.runs.iter().flatten().map(|(_, o)| o.as_str()).collect()
    }

    pub fn horizon(&self) -> usize {
        self.runs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Records the runs of `m` on the given input strings.
    pub fn record<S: AsRef<str>>(m: &Fsm, strings: &[Vec<S>]) -> Self {
        let runs = strings
            .iter()
            .map(|w| {
                let r = m.run(w);
                w.iter().map(|x| x.as_ref().to_string()).zip(r.outputs).collect()
            })
            .collect();
        Self {
            alphabet: m.inputs().to_vec(),
            runs,
        }
    }
}

/// A machine that agrees with every observed run and has exactly one more
/// reachable output than was observed. The extra output appears only past
/// the deepest observed run, so no finite observation rules it out.
pub fn adversarial_extension(transcript: &IoTranscript, j: usize) -> Result<Fsm> {
    let seen = transcript.distinct_outputs();
    if seen.len() != j {
        return Err(Error::InconsistentTranscript(format!(
            "{} distinct outputs observed, {j} claimed",
            seen.len()
        )));
    }
    let mut alphabet: Vec<String> = transcript.alphabet.clone();
    for (x, _) in transcript.runs.iter().flatten() {
        if !alphabet.contains(x) {
            alphabet.push(x.clone());
        }
    }
    if alphabet.is_empty() {
        return Err(Error::InconsistentTranscript("empty input alphabet".into()));
    }

    // prefix trie of the observed runs
    let mut edges: BTreeMap<(StateId, String), (StateId, String)> = BTreeMap::new();
    let mut depth = vec![0usize];
    for run in &transcript.runs {
        let mut node = 0;
        for (x, o) in run {
            node = match edges.get(&(node, x.clone())) {
                Some((next, out)) if out == o => *next,
                Some((_, out)) => {
                    return Err(Error::InconsistentTranscript(format!(
                        "input {x:?} after the same prefix gave both {out:?} and {o:?}"
                    )))
                }
                None => {
                    let next = depth.len() as StateId;
                    depth.push(depth[node as usize] + 1);
                    edges.insert((node, x.clone()), (next, o.clone()));
                    next
                }
            };
        }
    }
    let deepest = (0..depth.len())
        .max_by_key(|&i| (depth[i], std::cmp::Reverse(i)))
        .unwrap_or(0) as StateId;
    let mut fresh = String::from("extra");
    while seen.contains(fresh.as_str()) {
        fresh.push('\'');
    }
    for x in &alphabet {
        edges.insert((deepest, x.clone()), (deepest, fresh.clone()));
    }
    let mut outputs: Vec<String> = seen.iter().map(|s| s.to_string()).collect();
    outputs.push(fresh);
    Fsm::new(
        0..depth.len() as StateId,
        alphabet,
        outputs,
        0,
        edges
            .into_iter()
            .map(|((f, i), (t, o))| TransitionRecord::new(f, i, t, o)),
    )
}

/// Outputs reachable from reset.
pub fn reachable_outputs(m: &Fsm) -> BTreeSet<String> {
    let reach = m.reachable();
    m.transitions()
        .filter(|t| reach.contains(&t.from))
        .map(|t| t.output)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_probes: usize,
    pub max_steps: usize,
    /// Consecutive probes without a new output before giving up.
    pub patience: usize,
}

impl OracleBudget {
    pub fn new(max_probes: usize, max_steps: usize, patience: usize) -> Result<Self> {
        if max_probes == 0 || max_steps == 0 || patience == 0 {
            return Err(Error::OutOfRange("budget values must be positive".into()));
        }
        Ok(Self {
            max_probes,
            max_steps,
            patience,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputEstimate {
    pub count: usize,
    pub probes: usize,
    /// Always a lower bound: a machine can hold outputs back past any
    /// number of probes.
    pub note: &'static str,
}

/// Random probing: each probe resets and feeds random inputs, recording the
/// projected outputs. Stops after `patience` probes in a row add nothing.
pub fn estimate_output_count(
    oracle: &mut dyn Oracle,
    budget: OracleBudget,
    project: &dyn Fn(&str) -> String,
    seed: u64,
) -> Result<OutputEstimate> {
    let alphabet = oracle.inputs();
    if alphabet.is_empty() {
        return Err(Error::Alphabet("oracle has no inputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut quiet = 0;
    let mut probes = 0;
    while probes < budget.max_probes && quiet < budget.patience {
        probes += 1;
        oracle.reset()?;
        let before = seen.len();
        for _ in 0..budget.max_steps {
            let x = &alphabet[rng.gen_range(0..alphabet.len())];
            match oracle.step(x) {
                Some(o) => {
                    seen.insert(project(&o));
                }
                None => break,
            }
        }
        quiet = if seen.len() > before { 0 } else { quiet + 1 };
    }
    Ok(OutputEstimate {
        count: seen.len(),
        probes,
        note: "lower bound from finite observation; not a guarantee",
    })
}

/// Block number of an independent-machine output; other symbols pass through.
pub fn block_projection(symbol: &str) -> String {
    parse_independent_symbol(symbol).map_or_else(|| symbol.to_string(), |(_, b)| b.to_string())
}

fn same_alphabet(m1: &Fsm, m2: &Fsm) -> Result<()> {
    let a: BTreeSet<&String> = m1.inputs().iter().collect();
    let b: BTreeSet<&String> = m2.inputs().iter().collect();
    if a != b {
        return Err(Error::Alphabet("machines have different input alphabets".into()));
    }
    Ok(())
}

/// One product step: `Err(())` when the machines disagree on this input
/// (different outputs, or exactly one of them halts).
fn joint_step(
    m1: &Fsm,
    m2: &Fsm,
    p: (StateId, StateId),
    x: &str,
) -> std::result::Result<Option<(StateId, StateId)>, ()> {
    match (m1.step(p.0, x), m2.step(p.1, x)) {
        (None, None) => Ok(None),
        (Some((a, o1)), Some((b, o2))) if o1 == o2 => Ok(Some((a, b))),
        _ => Err(()),
    }
}

/// All input strings of length at most `depth` give identical outputs,
/// halting included. The check walks the set of state pairs reachable at
/// each depth, which covers every string exactly once per distinct pair.
pub fn bounded_equiv(m1: &Fsm, m2: &Fsm, depth: usize) -> Result<bool> {
    same_alphabet(m1, m2)?;
    let mut frontier = BTreeSet::from([(m1.reset(), m2.reset())]);
    for _ in 0..depth {
        let mut next = BTreeSet::new();
        for &p in &frontier {
            for x in m1.inputs() {
                match joint_step(m1, m2, p, x) {
                    Err(()) => return Ok(false),
                    Ok(Some(q)) => {
                        next.insert(q);
                    }
                    Ok(None) => {}
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(true)
}

/// Unbounded equivalence by exploring the reachable product.
pub fn equivalent(m1: &Fsm, m2: &Fsm) -> Result<bool> {
    same_alphabet(m1, m2)?;
    let start = (m1.reset(), m2.reset());
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        for x in m1.inputs() {
            match joint_step(m1, m2, p, x) {
                Err(()) => return Ok(false),
                Ok(Some(q)) => {
                    if seen.insert(q) {
                        queue.push_back(q);
                    }
                }
                Ok(None) => {}
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_independent, fixed_partitions_lprk};
    use crate::graph::ConnGraph;
    use crate::redux::{lpr_k, LprkSpec};

    fn independent(n: usize, k: usize) -> Fsm {
        let g = ConnGraph::linear(&[0, 1, 2, 3, 4, 5]).unwrap();
        let m = lpr_k(&g, &LprkSpec::auto(&g, n, k).unwrap()).unwrap();
        build_independent(&m, &fixed_partitions_lprk(&m, n, k).unwrap().pi_i).unwrap()
    }

    fn toggler() -> Fsm {
        Fsm::new(
            [0, 1],
            vec!["a".into()],
            vec!["x".into(), "y".into()],
            0,
            [
                TransitionRecord::new(0, "a", 1, "x"),
                TransitionRecord::new(1, "a", 0, "y"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn informed_attack_recovers_three_branches() {
        let truth = independent(4, 3);
        let mut oracle = FsmOracle::new(truth.clone());
        let rebuilt = informed_attack(&mut oracle, 2).unwrap();
        assert!(oracle.resets <= 4);
        assert!(bounded_equiv(&rebuilt, &truth, 5).unwrap());
        assert!(equivalent(&rebuilt, &truth).unwrap());
        assert_eq!(rebuilt.num_states(), 3);
    }

    #[test]
    fn informed_attack_needs_reset() {
        let mut oracle = FsmOracle::without_reset(independent(2, 2));
        assert!(matches!(informed_attack(&mut oracle, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn extension_of_empty_and_toggler() {
        let empty = IoTranscript {
            alphabet: vec!["a".into()],
            runs: vec![],
        };
        let m = adversarial_extension(&empty, 0).unwrap();
        assert_eq!(m.num_states(), 1);
        assert_eq!(reachable_outputs(&m).len(), 1);

        let t = IoTranscript::record(&toggler(), &[vec!["a", "a", "a"]]);
        let ext = adversarial_extension(&t, 2).unwrap();
        assert_eq!(ext.run(&["a", "a", "a"]).outputs, vec!["x", "y", "x"]);
        assert_eq!(reachable_outputs(&ext).len(), 3);
        assert!(adversarial_extension(&t, 3).is_err());
    }

    #[test]
    fn inconsistent_transcript_rejected() {
        let t = IoTranscript {
            alphabet: vec!["a".into()],
            runs: vec![vec![("a".into(), "x".into())], vec![("a".into(), "y".into())]],
        };
        assert!(matches!(
            adversarial_extension(&t, 2),
            Err(Error::InconsistentTranscript(_))
        ));
    }

    #[test]
    fn estimates() {
        let constant = Fsm::new(
            [0],
            vec!["a".into()],
            vec!["k".into()],
            0,
            [TransitionRecord::new(0, "a", 0, "k")],
        )
        .unwrap();
        let budget = OracleBudget::new(50, 5, 5).unwrap();
        let e = estimate_output_count(&mut FsmOracle::new(constant), budget, &|s| s.to_string(), 1).unwrap();
        assert_eq!(e.count, 1);
        let one = OracleBudget::new(1, 1, 1).unwrap();
        let e = estimate_output_count(&mut FsmOracle::new(toggler()), one, &|s| s.to_string(), 1).unwrap();
        assert_eq!((e.count, e.probes), (1, 1));
        assert!(OracleBudget::new(0, 1, 1).is_err());
    }

    #[test]
    fn equivalence_checks() {
        let m = toggler();
        assert!(bounded_equiv(&m, &m, 4).unwrap());
        let flipped = Fsm::new(
            [0, 1],
            vec!["a".into()],
            vec!["x".into(), "y".into()],
            0,
            [
                TransitionRecord::new(0, "a", 1, "y"),
                TransitionRecord::new(1, "a", 0, "y"),
            ],
        )
        .unwrap();
        assert!(!bounded_equiv(&m, &flipped, 1).unwrap());
        assert!(bounded_equiv(&m, &flipped, 0).unwrap());
        let other = Fsm::new([0], vec!["b".into()], vec![], 0, []).unwrap();
        assert!(matches!(bounded_equiv(&m, &other, 1), Err(Error::Alphabet(_))));
    }
}
