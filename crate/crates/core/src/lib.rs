//! Behavioural watermarks for finite state machines.
//!
//! The pipeline reduces a host machine to a characteristic chain (the LPR or
//! its multi-branch form LPR(k)), hides that chain either by a permutation
//! key or by splitting it into an independent and a dependent machine, and
//! exposes the shipped part through a permuted scan chain. The verifier
//! replays a branch through the hidden decoder and compares against the
//! chain; the attack module plays the other side.

pub mod attack;
pub mod crypt;
pub mod decomposition;
pub mod error;
pub mod fsm;
pub mod graph;
pub mod io;
pub mod redux;
pub mod scan;
pub mod verify;

pub use error::{Error, Result};
pub use fsm::{Fsm, Run, StateId, TransitionRecord};
pub use graph::{ConnGraph, TICK};
