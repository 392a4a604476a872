//! Serial test access to a machine through a three-state TAP and a
//! permuted boundary scan register.
//!
//! A frame is the machine's state bits followed by its input-field bits,
//! both most significant bit first. Each session draws a setting `i` and
//! applies the `i`-th permutation (after the device's fixed wiring) whenever
//! a frame is latched, undoing it when a frame is asserted. The session
//! opens in Shift with the setting's rank sitting in the register, so the
//! first `⌈log₂(n_b!)⌉` shifted bits announce the setting in the clear.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId};

/// Widest frame whose permutation count fits in a `u128` rank.
pub const MAX_FRAME_BITS: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TapState {
    Latch,
    Shift,
    Assert,
}

impl TapState {
    pub fn next(self) -> Self {
        match self {
            TapState::Latch => TapState::Shift,
            TapState::Shift => TapState::Assert,
            TapState::Assert => TapState::Latch,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TapState::Latch => "latch",
            TapState::Shift => "shift",
            TapState::Assert => "assert",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "latch" => Some(TapState::Latch),
            "shift" => Some(TapState::Shift),
            "assert" => Some(TapState::Assert),
            _ => None,
        }
    }
}

pub fn factorial(n: usize) -> Result<u128> {
    (1..=n as u128)
        .try_fold(1u128, |acc, x| acc.checked_mul(x))
        .ok_or_else(|| Error::OutOfRange(format!("{n}! does not fit in 128 bits")))
}

/// Bits of the setting preamble for an `n`-bit frame.
pub fn preamble_width(n: usize) -> Result<u32> {
    let count = factorial(n)?;
    Ok(if count <= 1 {
        0
    } else {
        128 - (count - 1).leading_zeros()
    })
}

/// The `i`-th permutation of `0..n` in lexicographic order, 1-based: `i = 1`
/// is the identity and `i = n!` the reversal. Decoded digit by digit from
/// the factorial number system.
pub fn permutation_by_index(n: usize, i: u128) -> Result<Vec<usize>> {
    let total = factorial(n)?;
    if i == 0 || i > total {
        return Err(Error::OutOfRange(format!("permutation index {i} outside 1..={total}")));
    }
    let mut rank = i - 1;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut perm = Vec::with_capacity(n);
    for j in (0..n).rev() {
        let f = factorial(j)?;
        let digit = (rank / f) as usize;
        rank %= f;
        perm.push(pool.remove(digit));
    }
    Ok(perm)
}

/// Inverse of [`permutation_by_index`].
pub fn index_of_permutation(perm: &[usize]) -> Result<u128> {
    let n = perm.len();
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rank = 0u128;
    for (j, &p) in perm.iter().enumerate() {
        let digit = pool
            .iter()
            .position(|&x| x == p)
            .ok_or_else(|| Error::OutOfRange(format!("{perm:?} is not a permutation")))?;
        pool.remove(digit);
        rank += digit as u128 * factorial(n - 1 - j)?;
    }
    Ok(rank + 1)
}

/// `d[j] = b[perm[j]]`.
pub fn permute(bits: &[bool], perm: &[usize]) -> Vec<bool> {
    perm.iter().map(|&p| bits[p]).collect()
}

pub fn unpermute(bits: &[bool], perm: &[usize]) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    for (j, &p) in perm.iter().enumerate() {
        out[p] = bits[j];
    }
    out
}

pub fn apply_perm(bits: &[bool], i: u128) -> Result<Vec<bool>> {
    Ok(permute(bits, &permutation_by_index(bits.len(), i)?))
}

pub fn invert_perm(bits: &[bool], i: u128) -> Result<Vec<bool>> {
    Ok(unpermute(bits, &permutation_by_index(bits.len(), i)?))
}

/// A setting index drawn uniformly from `1..=n!` by drawing each Lehmer
/// digit uniformly.
pub fn draw_setting<R: Rng>(rng: &mut R, n: usize) -> Result<u128> {
    let mut rank = 0u128;
    for j in (0..n).rev() {
        let digit = rng.gen_range(0..=j) as u128;
        rank += digit * factorial(j)?;
    }
    Ok(rank + 1)
}

/// The device's secret wiring `σ`: latching applies `σ` and then the
/// session permutation. Identified by the 0-based rank of `σ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermScheme {
    pub width: usize,
    pub id: u128,
}

impl PermScheme {
    pub fn new(width: usize, id: u128) -> Result<Self> {
        if width > MAX_FRAME_BITS {
            return Err(Error::OutOfRange(format!(
                "frame of {width} bits is wider than {MAX_FRAME_BITS}"
            )));
        }
        permutation_by_index(width, id + 1)?;
        Ok(Self { width, id })
    }

    pub fn identity(width: usize) -> Self {
        Self { width, id: 0 }
    }

    pub fn random(width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(width, draw_setting(&mut rng, width)? - 1)
    }

    pub fn wiring(&self) -> Vec<usize> {
        permutation_by_index(self.width, self.id + 1).expect("validated on construction")
    }

    /// `ρ(b, i)`.
    pub fn latch(&self, bits: &[bool], setting: u128) -> Result<Vec<bool>> {
        self.check(bits)?;
        apply_perm(&permute(bits, &self.wiring()), setting)
    }

    /// `ρ⁻¹(d, i)`.
    pub fn assert(&self, bits: &[bool], setting: u128) -> Result<Vec<bool>> {
        self.check(bits)?;
        Ok(unpermute(&invert_perm(bits, setting)?, &self.wiring()))
    }

    fn check(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.width {
            return Err(Error::Dimension {
                expected: self.width,
                found: bits.len(),
            });
        }
        Ok(())
    }
}

pub fn to_bits(value: u64, width: u32) -> Vec<bool> {
    (0..width).rev().map(|b| (value >> b) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
}

fn u128_bits(value: u128, width: u32) -> Vec<bool> {
    (0..width).rev().map(|b| (value >> b) & 1 == 1).collect()
}

/// Field widths of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    /// Input-field bits.
    pub chi: u32,
    /// State (output) field bits.
    pub omega: u32,
}

impl FrameLayout {
    pub fn for_machine(m: &Fsm) -> Self {
        Self {
            chi: m.input_width(),
            omega: m.state_width(),
        }
    }

    pub fn width(&self) -> usize {
        (self.chi + self.omega) as usize
    }

    pub fn pack(&self, frame: Frame) -> Vec<bool> {
        let mut bits = to_bits(frame.state, self.omega);
        bits.extend(to_bits(frame.input, self.chi));
        bits
    }

    pub fn unpack(&self, bits: &[bool]) -> Frame {
        let (state, input) = bits.split_at(self.omega as usize);
        Frame {
            state: from_bits(state),
            input: from_bits(input),
        }
    }
}

/// Parallel contents of the register: the machine's current state and the
/// value on its input field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub state: u64,
    pub input: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub idx: usize,
    pub tms: bool,
    pub tdi: bool,
    pub tdo: bool,
    pub state: TapState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub layout: FrameLayout,
    pub seed: u64,
    cycles: Vec<Cycle>,
}

impl Transcript {
    pub fn new(layout: FrameLayout, seed: u64) -> Self {
        Self {
            layout,
            seed,
            cycles: Vec::new(),
        }
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    fn push(&mut self, tms: bool, tdi: bool, tdo: bool, state: TapState) {
        let idx = self.cycles.len();
        self.cycles.push(Cycle {
            idx,
            tms,
            tdi,
            tdo,
            state,
        });
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| Error::Syntax {
            line: line + 1,
            column: 1,
            message: msg.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| bad(0, "empty transcript"))?;
        let h: Vec<u64> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(hl, "header must be `n_b chi omega seed`")))
            .collect::<Result<_>>()?;
        if h.len() != 4 || h[0] != h[1] + h[2] {
            return Err(bad(hl, "header must be `n_b chi omega seed` with n_b = chi + omega"));
        }
        let layout = FrameLayout {
            chi: h[1] as u32,
            omega: h[2] as u32,
        };
        let mut t = Transcript::new(layout, h[3]);
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(ln, "expected `idx tms tdi tdo state`"));
            }
            let bit = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(ln, "bits must be 0 or 1")),
            };
            let idx: usize = f[0].parse().map_err(|_| bad(ln, "bad cycle index"))?;
            if idx != t.len() {
                return Err(bad(ln, "cycle indices must be consecutive from 0"));
            }
            let state = TapState::from_name(f[4]).ok_or_else(|| bad(ln, "unknown TAP state"))?;
            t.push(bit(f[1])?, bit(f[2])?, bit(f[3])?, state);
        }
        Ok(t)
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = self.layout;
        writeln!(f, "{} {} {} {}", l.width(), l.chi, l.omega, self.seed)?;
        for c in &self.cycles {
            writeln!(
                f,
                "{} {} {} {} {}",
                c.idx,
                u8::from(c.tms),
                u8::from(c.tdi),
                u8::from(c.tdo),
                c.state.name()
            )?;
        }
        Ok(())
    }
}

/// A device under test: the machine, its register, and the TAP.
pub struct TapSession {
    machine: Fsm,
    layout: FrameLayout,
    scheme: PermScheme,
    setting: u128,
    tap: TapState,
    bsr: Vec<bool>,
    state: StateId,
    input_field: u64,
    latched: bool,
    clocks: usize,
    transcript: Transcript,
}

impl TapSession {
    /// Session whose setting is drawn from `seed`.
    pub fn new(machine: Fsm, scheme: PermScheme, seed: u64) -> Result<Self> {
        let width = FrameLayout::for_machine(&machine).width();
        let setting = draw_setting(&mut ChaCha8Rng::seed_from_u64(seed), width)?;
        Self::with_setting(machine, scheme, setting, seed)
    }

    /// Session with a given setting in `1..=n_b!`; `seed` is only recorded
    /// in the transcript.
    pub fn with_setting(machine: Fsm, scheme: PermScheme, setting: u128, seed: u64) -> Result<Self> {
        let layout = FrameLayout::for_machine(&machine);
        if scheme.width != layout.width() {
            return Err(Error::Dimension {
                expected: layout.width(),
                found: scheme.width,
            });
        }
        permutation_by_index(layout.width(), setting)?;
        let preamble = u128_bits(setting - 1, preamble_width(layout.width())?);
        Ok(Self {
            state: machine.reset(),
            machine,
            layout,
            scheme,
            setting,
            tap: TapState::Shift,
            bsr: preamble,
            input_field: 0,
            latched: false,
            clocks: 0,
            transcript: Transcript::new(layout, seed),
        })
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn setting(&self) -> u128 {
        self.setting
    }

    pub fn tap_state(&self) -> TapState {
        self.tap
    }

    pub fn machine_state(&self) -> StateId {
        self.state
    }

    /// Times the machine has been clocked.
    pub fn clocks(&self) -> usize {
        self.clocks
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    /// One TCK edge.
    pub fn tap_step(&mut self, tms: bool, tdi: bool) -> bool {
        if tms {
            self.tap = self.tap.next();
            match self.tap {
                TapState::Latch => self.latch(),
                TapState::Assert => self.assert(),
                TapState::Shift => {}
            }
        }
        let tdo = if self.tap == TapState::Shift && !self.bsr.is_empty() {
            let out = self.bsr.remove(0);
            self.bsr.push(tdi);
            out
        } else {
            false
        };
        self.transcript.push(tms, tdi, tdo, self.tap);
        tdo
    }

    fn latch(&mut self) {
        let frame = Frame {
            state: u64::from(self.state),
            input: self.input_field,
        };
        self.bsr = self
            .scheme
            .latch(&self.layout.pack(frame), self.setting)
            .expect("frame width matches the scheme");
        self.latched = true;
    }

    fn assert(&mut self) {
        if !std::mem::take(&mut self.latched) {
            return;
        }
        let plain = self
            .scheme
            .assert(&self.bsr, self.setting)
            .expect("frame width matches the scheme");
        let input = self.layout.unpack(&plain).input;
        self.input_field = input;
        self.state = clock(&self.machine, self.state, input);
        self.clocks += 1;
    }
}

/// One machine clock with the input given by its alphabet index; an
/// undefined transition or an index past the alphabet leaves the state as is.
pub fn clock(m: &Fsm, state: StateId, input: u64) -> StateId {
    usize::try_from(input)
        .ok()
        .and_then(|i| m.step_index(state, i))
        .map_or(state, |(t, _)| t)
}

/// Tester side: reads the preamble, then for each scheduled input latches,
/// shifts the previous frame out while shifting the new input in, and
/// asserts. A final latch and shift reads the last state.
pub fn drive_session(session: &mut TapSession, scheme: &PermScheme, schedule: &[u64]) -> Result<()> {
    let layout = session.layout();
    let p = preamble_width(layout.width())?;
    let mut announced = Vec::new();
    for _ in 0..p {
        announced.push(session.tap_step(false, false));
    }
    let setting = u128_bits_value(&announced) + 1;
    session.tap_step(true, false); // leave Shift; nothing latched, no clock
    for &input in schedule {
        let frame = Frame { state: 0, input };
        let payload = scheme.latch(&layout.pack(frame), setting)?;
        session.tap_step(true, false); // -> Latch
        for (j, &bit) in payload.iter().enumerate() {
            // the first payload bit goes in on the Shift entry cycle
            session.tap_step(j == 0, bit);
        }
        session.tap_step(true, false); // -> Assert
    }
    session.tap_step(true, false); // -> Latch
    for j in 0..layout.width() {
        session.tap_step(j == 0, false);
    }
    Ok(())
}

fn u128_bits_value(bits: &[bool]) -> u128 {
    bits.iter().fold(0u128, |acc, &b| (acc << 1) | u128::from(b))
}

/// Cycle count of a driven session with `steps` scheduled inputs.
pub fn session_length(layout: FrameLayout, steps: usize) -> Result<usize> {
    let nb = layout.width();
    Ok(preamble_width(layout.width())? as usize + 1 + steps * (nb + 2) + nb + 1)
}

/// Recovers the setting and the latched frames from a transcript.
pub fn decode_transcript(t: &Transcript, scheme: &PermScheme) -> Result<(u128, Vec<Frame>)> {
    let layout = t.layout;
    let nb = layout.width();
    let p = preamble_width(nb)? as usize;
    let cycles = t.cycles();
    let inconsistent = |m: &str| Error::InconsistentTranscript(m.to_string());
    if cycles.len() < p {
        return Err(inconsistent("transcript shorter than the setting preamble"));
    }
    if cycles[..p].iter().any(|c| c.state != TapState::Shift) {
        return Err(inconsistent("preamble cycles must stay in Shift"));
    }
    let setting = u128_bits_value(&cycles[..p].iter().map(|c| c.tdo).collect::<Vec<_>>()) + 1;
    if setting > factorial(nb)? {
        return Err(inconsistent("announced setting is out of range"));
    }
    let mut frames = Vec::new();
    let mut current: Option<Vec<bool>> = None;
    for c in &cycles[p..] {
        if c.state == TapState::Latch {
            if let Some(bits) = current.take() {
                frames.push(finish_frame(&bits, layout, scheme, setting)?);
            }
            current = Some(Vec::new());
        } else if c.state == TapState::Shift {
            if let Some(bits) = current.as_mut() {
                if bits.len() < nb {
                    bits.push(c.tdo);
                }
            }
        } else if let Some(bits) = current.take() {
            frames.push(finish_frame(&bits, layout, scheme, setting)?);
        }
    }
    if let Some(bits) = current.take() {
        frames.push(finish_frame(&bits, layout, scheme, setting)?);
    }
    Ok((setting, frames))
}

fn finish_frame(bits: &[bool], layout: FrameLayout, scheme: &PermScheme, setting: u128) -> Result<Frame> {
    if bits.len() != layout.width() {
        return Err(Error::InconsistentTranscript(format!(
            "frame of {} bits, expected {}",
            bits.len(),
            layout.width()
        )));
    }
    Ok(layout.unpack(&scheme.assert(bits, setting)?))
}

/// Reference frames from driving the machine directly with the same schedule.
pub fn parallel_frames(m: &Fsm, schedule: &[u64]) -> Vec<Frame> {
    let mut state = m.reset();
    let mut input_field = 0;
    let mut frames = Vec::with_capacity(schedule.len() + 1);
    for &input in schedule {
        frames.push(Frame {
            state: u64::from(state),
            input: input_field,
        });
        input_field = input;
        state = clock(m, state, input);
    }
    frames.push(Frame {
        state: u64::from(state),
        input: input_field,
    });
    frames
}

/// Runs a full serial session for `schedule` and returns its transcript.
pub fn scan_session(m: &Fsm, scheme: &PermScheme, schedule: &[u64], seed: u64) -> Result<Transcript> {
    let mut session = TapSession::new(m.clone(), scheme.clone(), seed)?;
    drive_session(&mut session, scheme, schedule)?;
    Ok(session.into_transcript())
}
