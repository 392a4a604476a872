//! Embedding pipeline and the watermark test.
//!
//! The owner derives a REDUX from the host, conceals it, and ships a
//! [`Package`] while keeping a [`Secret`]. The test runs the shipped machine
//! into the secret decoder on one branch schedule and compares the result
//! with the REDUX run. Besides the per-step outputs, both sides contribute
//! one terminal readout: the state reached after the last step.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypt::{build_decryption_machine, build_watermark_machine, random_perm_key, PermKey};
use crate::decomposition::{chi, decompose, fixed_partitions_lprk, minimal_decomposition, Partition, PartitionPair};
use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};
use crate::graph::{connectivity_graph, standard_cg_machine, TICK};
use crate::redux::{lpr, lpr_k, LprkSpec};
use crate::scan::{decode_transcript, scan_session, FrameLayout, PermScheme, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Matrix,
    Fixed,
    Optimal,
}

impl Mode {
    pub fn is_decomposition(self) -> bool {
        !matches!(self, Mode::Matrix)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" => Ok(Mode::Matrix),
            "fixed" => Ok(Mode::Fixed),
            "optimal" => Ok(Mode::Optimal),
            other => Err(Error::Semantic(format!("unknown mode {other:?}"))),
        }
    }
}

/// Scan-chain configuration wired into the shipped device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapConfig {
    pub chi: u32,
    pub omega: u32,
    pub scheme: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Package {
    pub host: Fsm,
    pub watermark: Fsm,
    pub tap: TapConfig,
    pub mode: Mode,
}

impl Package {
    pub fn layout(&self) -> FrameLayout {
        FrameLayout {
            chi: self.tap.chi,
            omega: self.tap.omega,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.layout() != FrameLayout::for_machine(&self.watermark) {
            return Err(Error::MalformedPackage(
                "TAP widths do not match the watermark machine".into(),
            ));
        }
        PermScheme::new(self.layout().width(), self.tap.scheme)
            .map_err(|e| Error::MalformedPackage(format!("bad permutation scheme: {e}")))?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<PermScheme> {
        PermScheme::new(self.layout().width(), self.tap.scheme).map_err(|e| Error::MalformedPackage(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("packages serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Package = serde_json::from_str(text).map_err(|e| Error::MalformedPackage(e.to_string()))?;
        p.check()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Secret {
    pub mode: Mode,
    pub n: usize,
    pub k: usize,
    /// The reference REDUX: `φ(LPR)` in matrix mode, LPR(k) otherwise.
    pub redux: Fsm,
    /// Decryption machine (matrix) or dependent machine (decomposition).
    pub decoder: Fsm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_i: Option<Vec<Vec<StateId>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_d: Option<Vec<Vec<StateId>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<Vec<usize>>,
    pub scheme: u128,
}

impl Secret {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("secrets serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Secret = serde_json::from_str(text).map_err(|e| Error::MalformedPackage(e.to_string()))?;
        if s.mode.is_decomposition() && (s.pi_i.is_none() || s.pi_d.is_none()) {
            return Err(Error::MalformedPackage(
                "decomposition secret without partitions".into(),
            ));
        }
        Ok(s)
    }

    fn pair(&self) -> Result<PartitionPair> {
        match (&self.pi_i, &self.pi_d) {
            (Some(i), Some(d)) => Ok(PartitionPair {
                pi_i: Partition::new(i.clone())?,
                pi_d: Partition::new(d.clone())?,
            }),
            _ => Err(Error::MalformedPackage("secret has no partitions".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedOptions {
    pub mode: Mode,
    pub n: usize,
    pub k: usize,
    pub z: Option<u32>,
    pub key_seed: u64,
    pub scheme_seed: u64,
    pub cap: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Fixed,
            n: 8,
            k: 3,
            z: None,
            key_seed: 1,
            scheme_seed: 2,
            cap: crate::decomposition::DEFAULT_STATE_CAP,
        }
    }
}

/// Derives the REDUX of `host`, conceals it, and returns the shipped package
/// together with the verifier's secret.
pub fn embed(host: &Fsm, opts: &EmbedOptions) -> Result<(Package, Secret)> {
    let g = connectivity_graph(host);
    let (watermark, secret) = match opts.mode {
        Mode::Matrix => {
            let chain = lpr(&g, opts.n)?;
            let key = random_perm_key(opts.n, opts.key_seed)?;
            let watermark = build_watermark_machine(&key, &chain)?;
            let secret = Secret {
                mode: opts.mode,
                n: opts.n,
                k: 1,
                redux: standard_cg_machine(&chain),
                decoder: build_decryption_machine(&key, &chain)?,
                pi_i: None,
                pi_d: None,
                key: Some(key.image().to_vec()),
                scheme: 0,
            };
            (watermark, secret)
        }
        Mode::Fixed | Mode::Optimal => {
            let spec = match opts.z {
                Some(z) => LprkSpec::new(opts.n, opts.k, z)?,
                None => LprkSpec::auto(&g, opts.n, opts.k)?,
            };
            let redux = lpr_k(&g, &spec)?;
            let pair = if opts.mode == Mode::Fixed {
                fixed_partitions_lprk(&redux, opts.n, opts.k)?
            } else {
                minimal_decomposition(&redux, opts.cap)?
            };
            let d = decompose(&redux, pair)?;
            let secret = Secret {
                mode: opts.mode,
                n: opts.n,
                k: opts.k,
                redux,
                decoder: d.dependent,
                pi_i: Some(d.pair.pi_i.blocks().to_vec()),
                pi_d: Some(d.pair.pi_d.blocks().to_vec()),
                key: None,
                scheme: 0,
            };
            (d.independent, secret)
        }
    };
    let layout = FrameLayout::for_machine(&watermark);
    let scheme = PermScheme::random(layout.width(), opts.scheme_seed)?;
    let package = Package {
        host: host.clone(),
        watermark,
        tap: TapConfig {
            chi: layout.chi,
            omega: layout.omega,
            scheme: scheme.id,
        },
        mode: opts.mode,
    };
    Ok((
        package,
        Secret {
            scheme: scheme.id,
            ..secret
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub divergence: Option<usize>,
    pub expected: Vec<String>,
    pub observed: Vec<String>,
}

impl Verdict {
    pub fn compare(expected: Vec<String>, observed: Vec<String>) -> Self {
        let divergence = expected
            .iter()
            .zip(&observed)
            .position(|(a, b)| a != b)
            .or_else(|| (expected.len() != observed.len()).then(|| expected.len().min(observed.len())));
        Self {
            pass: divergence.is_none(),
            divergence,
            expected,
            observed,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", if self.pass { "pass" } else { "fail" })?;
        match self.divergence {
            Some(d) => writeln!(f, "divergence: {d}")?,
            None => writeln!(f, "divergence: none")?,
        }
        writeln!(f, "expected: {}", self.expected.join(" "))?;
        writeln!(f, "observed: {}", self.observed.join(" "))
    }
}

/// Branch symbol followed by `length - 1` ticks.
pub fn branch_schedule(redux: &Fsm, branch: usize, length: usize) -> Result<Vec<String>> {
    let symbol = redux
        .inputs()
        .get(branch)
        .ok_or_else(|| Error::OutOfRange(format!("branch {branch} outside 0..{}", redux.inputs().len())))?;
    if length == 0 {
        return Ok(Vec::new());
    }
    let mut schedule = vec![symbol.clone()];
    schedule.extend(std::iter::repeat_n(TICK.to_string(), length - 1));
    Ok(schedule)
}

fn expected_sequence(secret: &Secret, schedule: &[String]) -> Vec<String> {
    if schedule.is_empty() {
        return Vec::new();
    }
    let run = secret.redux.run(schedule);
    let mut seq = run.outputs.clone();
    seq.push(run.final_state().to_string());
    seq
}

/// What the verifier learned about the shipped machine: its emissions up to
/// the first halt, and its state before each step and after the last one.
struct Observation {
    outputs: Vec<String>,
    states: Vec<StateId>,
}

const UNKNOWN: &str = "?";

fn decode_observation(secret: &Secret, obs: Observation, steps: usize) -> Result<Vec<String>> {
    if steps == 0 {
        return Ok(Vec::new());
    }
    // an emission the decoder has no transition for (foreign alphabet
    // included) ends the decoded sequence and so fails the comparison
    let decoder = &secret.decoder;
    let mut state = decoder.reset();
    let mut seq = Vec::new();
    for o in &obs.outputs {
        match decoder.step(state, o) {
            Some((next, out)) => {
                seq.push(out.to_string());
                state = next;
            }
            None => break,
        }
    }
    // the readout pairs both machines at the step where the cascade stopped
    let shipped_state = obs.states[seq.len()];
    let readout = match secret.mode {
        Mode::Matrix => decoder
            .step(state, &shipped_state.to_string())
            .map_or_else(|| UNKNOWN.to_string(), |(next, _)| next.to_string()),
        Mode::Fixed | Mode::Optimal => {
            let pair = secret.pair()?;
            match (pair.pi_i.block(shipped_state as usize), pair.pi_d.block(state as usize)) {
                (Some(bi), Some(bd)) => chi(bi, bd).map_or_else(|_| UNKNOWN.to_string(), |s| s.to_string()),
                _ => UNKNOWN.to_string(),
            }
        }
    };
    seq.push(readout);
    Ok(seq)
}

fn check_modes(package: &Package, secret: &Secret) -> Result<()> {
    if package.mode != secret.mode {
        return Err(Error::Alphabet(format!(
            "package mode {:?} does not match secret mode {:?}",
            package.mode, secret.mode
        )));
    }
    Ok(())
}

/// Runs the shipped machine directly (parallel access) and compares.
pub fn watermark_test(package: &Package, secret: &Secret, branch: usize, length: usize) -> Result<Verdict> {
    check_modes(package, secret)?;
    let schedule = branch_schedule(&secret.redux, branch, length)?;
    let run = package.watermark.run(&schedule);
    let obs = Observation {
        outputs: run.outputs,
        states: run.states,
    };
    let observed = decode_observation(secret, obs, length)?;
    Ok(Verdict::compare(expected_sequence(secret, &schedule), observed))
}

/// The serial session for one branch: the transcript a tester records.
pub fn scan_watermark_test(package: &Package, branch: usize, length: usize, seed: u64) -> Result<Transcript> {
    package.check()?;
    let wm = &package.watermark;
    let schedule = branch_schedule(wm, branch, length)?;
    let indices: Vec<u64> = schedule
        .iter()
        .map(|s| wm.input_index(s).expect("schedule symbols come from the alphabet") as u64)
        .collect();
    scan_session(wm, &package.scheme()?, &indices, seed)
}

/// The watermark test with the shipped machine reached only through its
/// scan chain. The emissions are rebuilt from the decoded frames using the
/// known output format of the shipped machine.
pub fn scan_verify(
    package: &Package,
    secret: &Secret,
    branch: usize,
    length: usize,
    seed: u64,
) -> Result<(Verdict, Transcript)> {
    check_modes(package, secret)?;
    let schedule = branch_schedule(&secret.redux, branch, length)?;
    if length > branch_horizon(secret) {
        // a halted device just holds its state, which a serial reader
        // cannot tell apart from a self-loop
        return Err(Error::OutOfRange(format!(
            "scan verification covers at most {} steps",
            branch_horizon(secret)
        )));
    }
    let transcript = scan_watermark_test(package, branch, length, seed)?;
    let scheme = PermScheme::new(package.layout().width(), secret.scheme)?;
    let (_, frames) = decode_transcript(&transcript, &scheme)?;
    if frames.len() != schedule.len() + 1 {
        return Err(Error::InconsistentTranscript(format!(
            "{} frames for {} steps",
            frames.len(),
            schedule.len()
        )));
    }
    let outputs = schedule
        .iter()
        .zip(&frames)
        .map(|(input, frame)| match package.mode {
            Mode::Matrix => frame.state.to_string(),
            Mode::Fixed | Mode::Optimal => format!("{input}:{}", frame.state),
        })
        .collect();
    let obs = Observation {
        outputs,
        states: frames
            .iter()
            .map(|f| StateId::try_from(f.state).unwrap_or(StateId::MAX))
            .collect(),
    };
    let observed = decode_observation(secret, obs, length)?;
    Ok((
        Verdict::compare(expected_sequence(secret, &schedule), observed),
        transcript,
    ))
}

/// Longest schedule on which the REDUX stays defined: `n` steps for LPR(k),
/// `n - 1` for a plain chain.
pub fn branch_horizon(secret: &Secret) -> usize {
    match secret.mode {
        Mode::Matrix => secret.n - 1,
        Mode::Fixed | Mode::Optimal => secret.n,
    }
}

/// Number of branch schedules the test can be run on.
pub fn branch_count(secret: &Secret) -> usize {
    secret.redux.inputs().len()
}

/// A uniformly random machine with the same states, alphabets and reset as
/// `m`, total on every `(state, input)`.
pub fn random_like(m: &Fsm, seed: u64) -> Fsm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<StateId> = m.states().iter().copied().collect();
    let mut records = Vec::new();
    for &s in &states {
        for i in m.inputs() {
            let to = states[rng.gen_range(0..states.len())];
            let out = &m.outputs()[rng.gen_range(0..m.outputs().len())];
            records.push(TransitionRecord::new(s, i.clone(), to, out.clone()));
        }
    }
    Fsm::new(states, m.inputs().to_vec(), m.outputs().to_vec(), m.reset(), records)
        .expect("same alphabets and states as a valid machine")
}

/// Every copy of `m` with exactly one transition redirected to a different
/// target.
pub fn single_edge_tamperings(m: &Fsm) -> Vec<Fsm> {
    let mut out = Vec::new();
    let transitions: Vec<(StateId, usize, StateId, usize)> = m.indexed_transitions().collect();
    for (s, i, t, _) in transitions {
        for &other in m.states() {
            if other != t {
                out.push(m.with_target(s, i, other).expect("existing transition and state"));
            }
        }
    }
    out
}

/// Rebuilds a key from a secret (matrix mode).
pub fn secret_key(secret: &Secret) -> Result<PermKey> {
    let image = secret
        .key
        .clone()
        .ok_or_else(|| Error::MalformedPackage("secret has no key".into()))?;
    PermKey::new(image)
}
