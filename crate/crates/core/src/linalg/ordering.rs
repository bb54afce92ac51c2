//! Fill-reducing ordering by approximate minimum degree on the quotient graph.
//!
//! Eliminated variables become "elements" whose variable lists stand in for the
//! cliques created by elimination. Degrees are the usual AMD upper bound
//! |A_i| + |L_p \ i| + Σ_e |L_e \ L_p|; there is no supervariable detection.

use std::collections::BTreeSet;

use super::SparseSym;

/// Returns `perm` with `perm[k]` = original index eliminated at step k.
pub fn approximate_minimum_degree(a: &SparseSym) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let mut elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut eliminated = vec![false; n];
    let mut absorbed = vec![false; n];
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (degree[i], i)).collect();

    // stamp-based membership marks for L_p
    let mut mark = vec![usize::MAX; n];
    // |L_e \ L_p| for elements touched in the current step; usize::MAX = unset
    let mut w = vec![usize::MAX; n];
    let mut touched = Vec::new();
    let mut perm = Vec::with_capacity(n);

    for step in 0..n {
        let (_, p) = queue.pop_first().expect("queue holds every uneliminated variable");
        perm.push(p);
        eliminated[p] = true;

        let mut lp = Vec::new();
        mark[p] = step;
        for &i in &adj[p] {
            if !eliminated[i] && mark[i] != step {
                mark[i] = step;
                lp.push(i);
            }
        }
        for &e in &elems[p] {
            if absorbed[e] {
                continue;
            }
            for &i in &members[e] {
                if !eliminated[i] && mark[i] != step {
                    mark[i] = step;
                    lp.push(i);
                }
            }
            absorbed[e] = true;
            members[e] = Vec::new();
        }
        adj[p] = Vec::new();
        elems[p] = Vec::new();

        for &i in &lp {
            elems[i].retain(|&e| !absorbed[e]);
            for &e in &elems[i] {
                if w[e] == usize::MAX {
                    w[e] = members[e].len();
                    touched.push(e);
                }
                w[e] -= 1;
            }
        }
        // elements entirely inside L_p are redundant
        for &e in &touched {
            if w[e] == 0 {
                absorbed[e] = true;
                members[e] = Vec::new();
            }
        }

        for &i in &lp {
            elems[i].retain(|&e| !absorbed[e]);
            adj[i].retain(|&j| !eliminated[j] && mark[j] != step);
            let external: usize = elems[i].iter().map(|&e| w[e].min(members[e].len())).sum();
            elems[i].push(p);
            let d = (adj[i].len() + lp.len() - 1 + external).min(n - step - 1);
            if d != degree[i] {
                queue.remove(&(degree[i], i));
                degree[i] = d;
                queue.insert((d, i));
            }
        }
        for e in touched.drain(..) {
            w[e] = usize::MAX;
        }
        members[p] = lp;
    }
    perm
}
