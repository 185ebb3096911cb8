use std::collections::BTreeSet;

use ade_core::taxonomy::{load_taxonomy, TaxonomyError};
use proptest::prelude::*;

/// Parent lists of a random DAG: node `i` may only have parents `< i`.
fn dag() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..12).prop_flat_map(|n| {
        (0..n)
            .map(|i| {
                proptest::collection::btree_set(0..i.max(1), 0..=i.min(3)).prop_map(move |s| {
                    if i == 0 {
                        vec![]
                    } else {
                        s.into_iter().collect()
                    }
                })
            })
            .collect::<Vec<_>>()
    })
}

fn document(parents: &[Vec<usize>]) -> String {
    parents
        .iter()
        .enumerate()
        .map(|(i, ps)| {
            let ps: Vec<String> = ps.iter().map(|p| format!("n{p}")).collect();
            format!("n{i}|active_principle|node {i}||{}\n", ps.join(";"))
        })
        .collect()
}

fn reachable(parents: &[Vec<usize>], from: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        for &p in &parents[x] {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    seen
}

proptest! {
    #[test]
    fn subsumption_is_reachability(parents in dag()) {
        let t = load_taxonomy(&document(&parents)).unwrap();
        for node in 0..parents.len() {
            let up = reachable(&parents, node);
            for anc in 0..parents.len() {
                prop_assert_eq!(t.subsumes(&format!("n{anc}"), &format!("n{node}")), up.contains(&anc));
            }
        }
    }

    #[test]
    fn any_back_edge_is_a_cycle(parents in dag(), pick in any::<prop::sample::Index>()) {
        let edges: Vec<(usize, usize)> = parents.iter().enumerate().flat_map(|(c, ps)| ps.iter().map(move |&p| (c, p))).collect();
        prop_assume!(!edges.is_empty());
        let (child, parent) = edges[pick.index(edges.len())];
        let mut cyclic = parents.clone();
        cyclic[parent].push(child);
        let rejected = matches!(load_taxonomy(&document(&cyclic)), Err(TaxonomyError::Cycle { .. }));
        prop_assert!(rejected);
    }
}
