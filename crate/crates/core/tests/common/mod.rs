#![allow(dead_code)]

use fsm_watermark::graph::{connectivity_graph, ConnGraph};
use fsm_watermark::io::parse_fsm;
use fsm_watermark::redux::{lpr_k, LprkSpec};
use fsm_watermark::{Fsm, StateId, TransitionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HOST8: &str = include_str!("../../data/host8.fsm");

pub fn host8() -> Fsm {
    parse_fsm(HOST8).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Digraph on `0..m` rooted at 0; each ordered pair is an edge with
/// probability `p`.
pub fn random_graph(r: &mut ChaCha8Rng, m: usize, p: f64) -> ConnGraph {
    let mut edges = Vec::new();
    for u in 0..m as StateId {
        for v in 0..m as StateId {
            if r.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    ConnGraph::new(0..m as StateId, edges, 0).unwrap()
}

/// Random machine on `0..states` with `inputs` symbols; each transition is
/// present with probability `density`.
pub fn random_fsm(r: &mut ChaCha8Rng, states: usize, inputs: usize, outputs: usize, density: f64) -> Fsm {
    let ins: Vec<String> = (0..inputs).map(|i| format!("i{i}")).collect();
    let outs: Vec<String> = (0..outputs).map(|o| format!("o{o}")).collect();
    let mut recs = Vec::new();
    for s in 0..states as StateId {
        for x in &ins {
            if r.gen_bool(density) {
                let t = r.gen_range(0..states) as StateId;
                let o = &outs[r.gen_range(0..outputs)];
                recs.push(TransitionRecord::new(s, x.clone(), t, o.clone()));
            }
        }
    }
    Fsm::new(0..states as StateId, ins, outs, 0, recs).unwrap()
}

/// LPR(k) of the bundled host.
pub fn host_lprk(n: usize, k: usize) -> Fsm {
    let g = connectivity_graph(&host8());
    lpr_k(&g, &LprkSpec::auto(&g, n, k).unwrap()).unwrap()
}

/// Every string over `alphabet` of length exactly `len`.
pub fn strings(alphabet: &[String], len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                alphabet.iter().map(move |x| {
                    let mut w2 = w.clone();
                    w2.push(x.clone());
                    w2
                })
            })
            .collect();
    }
    out
}
