//! Deterministic Mealy machines with possibly partial transition maps.
//!
//! A machine is `(S, T, I, P, O, s)`: a set of integer state ids, a
//! transition map keyed by `(state, input)`, input and output alphabets of
//! named symbols, and a reset state. Transitions and outputs share one key
//! set, so every defined transition carries its output.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateId = u32;

/// One row of the transition table as it appears in interchange documents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: StateId,
    #[serde(rename = "in")]
    pub input: String,
    pub to: StateId,
    #[serde(rename = "out")]
    pub output: String,
}

impl TransitionRecord {
    pub fn new(from: StateId, input: impl Into<String>, to: StateId, output: impl Into<String>) -> Self {
        Self {
            from,
            input: input.into(),
            to,
            output: output.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsm {
    states: BTreeSet<StateId>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    input_index: BTreeMap<String, usize>,
    output_index: BTreeMap<String, usize>,
    reset: StateId,
    // (state, input index) -> (target, output index)
    table: BTreeMap<(StateId, usize), (StateId, usize)>,
}

/// Result of driving a machine over an input string from some start state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub outputs: Vec<String>,
    /// Number of inputs consumed before halting (equals the input length when
    /// the run did not halt).
    pub consumed: usize,
    pub halted: bool,
    /// States visited, starting with the start state; `consumed + 1` entries.
    pub states: Vec<StateId>,
}

impl Run {
    pub fn final_state(&self) -> StateId {
        *self.states.last().expect("a run always records its start state")
    }
}

fn index_alphabet(kind: &str, symbols: &[String]) -> Result<BTreeMap<String, usize>> {
    let mut index = BTreeMap::new();
    for (i, s) in symbols.iter().enumerate() {
        if index.insert(s.clone(), i).is_some() {
            return Err(Error::Semantic(format!("duplicate {kind} symbol {s:?}")));
        }
    }
    Ok(index)
}

impl Fsm {
    /// Builds a machine and checks every structural invariant.
    pub fn new(
        states: impl IntoIterator<Item = StateId>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        reset: StateId,
        transitions: impl IntoIterator<Item = TransitionRecord>,
    ) -> Result<Self> {
        let states: BTreeSet<StateId> = states.into_iter().collect();
        let input_index = index_alphabet("input", &inputs)?;
        let output_index = index_alphabet("output", &outputs)?;
        if !states.contains(&reset) {
            return Err(Error::Semantic(format!("reset state {reset} is not a declared state")));
        }
        let mut table = BTreeMap::new();
        for t in transitions {
            if !states.contains(&t.from) {
                return Err(Error::Semantic(format!("transition from unknown state {}", t.from)));
            }
            if !states.contains(&t.to) {
                return Err(Error::Semantic(format!("transition to unknown state {}", t.to)));
            }
            let i = *input_index
                .get(&t.input)
                .ok_or_else(|| Error::Semantic(format!("unknown input symbol {:?}", t.input)))?;
            let o = *output_index
                .get(&t.output)
                .ok_or_else(|| Error::Semantic(format!("unknown output symbol {:?}", t.output)))?;
            if table.insert((t.from, i), (t.to, o)).is_some() {
                return Err(Error::Semantic(format!(
                    "duplicate transition for state {} on input {:?}",
                    t.from, t.input
                )));
            }
        }
        Ok(Self {
            states,
            inputs,
            outputs,
            input_index,
            output_index,
            reset,
            table,
        })
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn reset(&self) -> StateId {
        self.reset
    }

    pub fn num_transitions(&self) -> usize {
        self.table.len()
    }

    pub fn input_index(&self, symbol: &str) -> Option<usize> {
        self.input_index.get(symbol).copied()
    }

    pub fn output_index(&self, symbol: &str) -> Option<usize> {
        self.output_index.get(symbol).copied()
    }

    /// Iterates the transition table in `(from, input index)` order.
    pub fn transitions(&self) -> impl Iterator<Item = TransitionRecord> + '_ {
        self.table.iter().map(|(&(from, i), &(to, o))| TransitionRecord {
            from,
            input: self.inputs[i].clone(),
            to,
            output: self.outputs[o].clone(),
        })
    }

    /// Raw indexed view of the table: `(from, input idx, to, output idx)`.
    pub fn indexed_transitions(&self) -> impl Iterator<Item = (StateId, usize, StateId, usize)> + '_ {
        self.table.iter().map(|(&(s, i), &(t, o))| (s, i, t, o))
    }

    pub fn step_index(&self, state: StateId, input: usize) -> Option<(StateId, usize)> {
        self.table.get(&(state, input)).copied()
    }

    /// One clock of the machine. `None` is the halt signal: the pair
    /// `(state, input)` has no transition.
    pub fn step(&self, state: StateId, input: &str) -> Option<(StateId, &str)> {
        let i = self.input_index(input)?;
        self.step_index(state, i).map(|(t, o)| (t, self.outputs[o].as_str()))
    }

    pub fn is_defined(&self, state: StateId, input: usize) -> bool {
        self.table.contains_key(&(state, input))
    }

    /// Runs from the reset state.
    pub fn run<S: AsRef<str>>(&self, inputs: &[S]) -> Run {
        self.run_from(self.reset, inputs)
    }

    pub fn run_from<S: AsRef<str>>(&self, start: StateId, inputs: &[S]) -> Run {
        let mut state = start;
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut states = vec![start];
        for x in inputs {
            match self.step(state, x.as_ref()) {
                Some((next, out)) => {
                    outputs.push(out.to_string());
                    state = next;
                    states.push(next);
                }
                None => {
                    return Run {
                        consumed: outputs.len(),
                        outputs,
                        halted: true,
                        states,
                    }
                }
            }
        }
        Run {
            consumed: outputs.len(),
            outputs,
            halted: false,
            states,
        }
    }

    /// Bits needed to encode an input symbol by its alphabet index.
    pub fn input_width(&self) -> u32 {
        bits_for_count(self.inputs.len())
    }

    /// Bits needed to encode any state id (at least one).
    pub fn state_width(&self) -> u32 {
        bits_to_encode(u64::from(*self.states.iter().next_back().unwrap_or(&0))).max(1)
    }

    /// States reachable from reset.
    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([self.reset]);
        let mut stack = vec![self.reset];
        while let Some(s) = stack.pop() {
            for i in 0..self.inputs.len() {
                if let Some((t, _)) = self.step_index(s, i) {
                    if seen.insert(t) {
                        stack.push(t);
                    }
                }
            }
        }
        seen
    }

    /// Returns a copy with one transition's target replaced.
    pub fn with_target(&self, state: StateId, input: usize, target: StateId) -> Result<Self> {
        if !self.states.contains(&target) {
            return Err(Error::Semantic(format!("unknown target state {target}")));
        }
        let mut copy = self.clone();
        match copy.table.get_mut(&(state, input)) {
            Some(entry) => entry.0 = target,
            None => return Err(Error::Semantic(format!("no transition at ({state}, {input})"))),
        }
        Ok(copy)
    }
}

/// Number of bits needed to write `max` in binary; `0` needs none.
pub fn bits_to_encode(max: u64) -> u32 {
    64 - max.leading_zeros()
}

/// `⌈log₂ count⌉`: bits needed to distinguish `count` values.
pub fn bits_for_count(count: usize) -> u32 {
    if count <= 1 {
        0
    } else {
        bits_to_encode(count as u64 - 1)
    }
}
