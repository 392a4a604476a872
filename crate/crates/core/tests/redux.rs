mod common;

use std::collections::BTreeSet;

use fsm_watermark::graph::{connectivity_graph, ConnGraph, TICK};
use fsm_watermark::redux::{
    add_shift_hash, branch_grid, longest_simple_path, lpr, lpr_k, renumber, renumber_inverse, repeat_path, sized_path,
    truncate, LprkSpec, Path,
};
use fsm_watermark::{Error, StateId};
use proptest::prelude::*;
use rand::Rng;

use common::{host8, random_graph, rng};

/// Every simple path from the root, by plain recursion.
fn all_simple_paths(g: &ConnGraph) -> Vec<Vec<StateId>> {
    fn go(g: &ConnGraph, path: &mut Vec<StateId>, out: &mut Vec<Vec<StateId>>) {
        out.push(path.clone());
        let tip = *path.last().unwrap();
        for w in g.successors(tip).collect::<Vec<_>>() {
            if !path.contains(&w) {
                path.push(w);
                go(g, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, &mut vec![g.root()], &mut out);
    out
}

#[test]
fn longest_path_matches_exhaustive_search() {
    let mut r = rng(21);
    for _ in 0..300 {
        let m = r.gen_range(1..=8);
        let p = r.gen_range(0.1..0.6);
        let g = random_graph(&mut r, m, p);
        let best = all_simple_paths(&g)
            .into_iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
            .unwrap();
        assert_eq!(longest_simple_path(&g).vertices(), best.as_slice(), "{g:?}");
    }
}

#[test]
fn longest_path_small_cases() {
    assert_eq!(
        longest_simple_path(&ConnGraph::new([4], [], 4).unwrap()).vertices(),
        &[4]
    );
    assert_eq!(
        longest_simple_path(&ConnGraph::linear(&[1, 2, 3]).unwrap()).vertices(),
        &[1, 2, 3]
    );
    let p = longest_simple_path(&connectivity_graph(&host8()));
    assert!(p.is_simple());
    assert_eq!(p.len(), 8);
}

#[test]
fn operator_examples() {
    let p12 = Path::new(vec![1, 2]).unwrap();
    assert_eq!(repeat_path(&p12, 1).unwrap().vertices(), &[1, 2]);
    assert_eq!(repeat_path(&p12, 2).unwrap().vertices(), &[1, 2, 1, 2]);
    assert!(matches!(repeat_path(&p12, 0), Err(Error::OutOfRange(_))));
    let p123 = Path::new(vec![1, 2, 3]).unwrap();
    assert_eq!(repeat_path(&p123, 3).unwrap().len(), 9);

    let twice = repeat_path(&p123, 2).unwrap();
    assert_eq!(renumber(&twice, 3).unwrap().vertices(), &[1, 2, 3, 4, 5, 6]);
    assert!(renumber(&twice, 2).is_err());
    let dense = renumber(&Path::new(vec![10, 30, 20]).unwrap(), 30).unwrap();
    assert_eq!(dense.vertices(), &[1, 3, 2]);

    assert_eq!(truncate(&p123, 2).unwrap().vertices(), &[1, 2]);
    assert_eq!(truncate(&p123, 3).unwrap(), p123);
    assert!(truncate(&p123, 0).is_err());
    assert!(truncate(&p123, 4).is_err());
    assert_eq!(truncate(&Path::new(vec![5]).unwrap(), 1).unwrap().vertices(), &[5]);

    assert_eq!(sized_path(&p123, 5).unwrap().vertices(), &[1, 2, 3, 4, 5]);
    assert_eq!(sized_path(&p123, 3).unwrap().vertices(), &[1, 2, 3]);
}

#[test]
fn lpr_is_linear() {
    let g = connectivity_graph(&host8());
    for m in 1..=40 {
        let l = lpr(&g, m).unwrap();
        assert_eq!(l.vertices().len(), m);
        let order = l.linear_order().expect("linear");
        assert_eq!(order[0], l.root());
        for &v in &order[..m - 1] {
            assert_eq!(l.out_degree(v), 1);
        }
        assert_eq!(l.out_degree(order[m - 1]), 0);
    }
    let chain = ConnGraph::linear(&[4, 9, 2]).unwrap();
    assert_eq!(lpr(&chain, 3).unwrap().linear_order().unwrap(), vec![2, 3, 1]);
}

#[test]
fn add_shift_hash_is_bijective() {
    for z in 1..=8u32 {
        let size = 1u64 << z;
        for c in 0..z as u64 + 1 {
            for r in [0, 1, 3, size - 1, size + 5] {
                let image: BTreeSet<u64> = (0..size).map(|x| add_shift_hash(x, r, c, z).unwrap()).collect();
                assert_eq!(image.len() as u64, size, "z={z} r={r} c={c}");
            }
        }
    }
    assert_eq!(add_shift_hash(0b01, 1, 1, 2).unwrap(), 3);
}

#[test]
fn lpr_k_shapes() {
    let g = connectivity_graph(&host8());
    for n in 1..=8 {
        for k in 1..=5 {
            let spec = LprkSpec::auto(&g, n, k).unwrap();
            let m = lpr_k(&g, &spec).unwrap();
            assert_eq!(m.num_states(), n * k + 1);
            let start = m.reset();
            let fan: BTreeSet<StateId> = m
                .inputs()
                .iter()
                .filter_map(|x| m.step(start, x).map(|(t, _)| t))
                .collect();
            assert_eq!(fan.len(), k);
            let grid = branch_grid(&m, n, k).unwrap();
            for col in &grid {
                for w in col.windows(2) {
                    assert_eq!(m.step(w[0], TICK).unwrap().0, w[1]);
                }
                let tail = *col.last().unwrap();
                assert!(m.inputs().iter().all(|x| m.step(tail, x).is_none()));
            }
        }
    }
}

#[test]
fn lpr_k_degenerate_single_branch() {
    let g = connectivity_graph(&host8());
    let m = lpr_k(&g, &LprkSpec::auto(&g, 6, 1).unwrap()).unwrap();
    assert_eq!(m.num_states(), 7);
    let run = m.run(&[TICK; 6]);
    assert!(!run.halted);
    assert_eq!(run.outputs[0], m.reset().to_string());
}

#[test]
fn narrow_hash_width_collides() {
    let g = ConnGraph::linear(&[1, 2, 0]).unwrap();
    let err = lpr_k(&g, &LprkSpec::new(3, 2, 4).unwrap()).unwrap_err();
    assert!(matches!(err, Error::HashCollision(..)), "{err:?}");
    let err = lpr_k(&connectivity_graph(&host8()), &LprkSpec::new(8, 2, 2).unwrap()).unwrap_err();
    assert!(matches!(err, Error::OutOfRange(_)), "{err:?}");
}

proptest! {
    #[test]
    fn sized_path_has_exact_length(
        period in proptest::collection::btree_set(0u32..200, 1..10),
        order in any::<u64>(),
        m in 1usize..=64,
    ) {
        let mut v: Vec<StateId> = period.into_iter().collect();
        let len = v.len();
        v.rotate_left((order % len as u64) as usize);
        let p = Path::new(v).unwrap();
        let s = sized_path(&p, m).unwrap();
        prop_assert_eq!(s.len(), m);
        prop_assert!(s.is_simple());
    }

    #[test]
    fn renumber_round_trip(period in proptest::collection::btree_set(0u32..100, 1..8), j in 1usize..6) {
        let p = Path::new(period.into_iter().rev().collect()).unwrap();
        let rep = repeat_path(&p, j).unwrap();
        let q = renumber(&rep, p.max_vertex()).unwrap();
        let back = renumber_inverse(&q, p.max_vertex(), &p).unwrap();
        prop_assert_eq!(back.vertices(), rep.vertices());
    }
}
