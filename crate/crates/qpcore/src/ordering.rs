//! Fill-reducing ordering for symmetric factorizations.
//!
//! Plain minimum degree on the explicit elimination graph. Ties break on the
//! lowest index so the ordering is a deterministic function of the pattern.

use std::collections::BTreeSet;

/// Compute a minimum-degree permutation for the symmetric pattern given by
/// `adjacency` (off-diagonal neighbours of each node, either orientation).
///
/// Returns `perm` with `perm[k]` = original index eliminated at step `k`.
pub fn minimum_degree(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut eliminated = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut perm = Vec::with_capacity(n);
    let mut merged: Vec<usize> = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            debug_assert!(!eliminated[u]);
            queue.remove(&(adj[u].len(), u));
            // adj[u] <- (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            for &w in &adj[u] {
                if w != v {
                    mark[w] = u;
                    merged.push(w);
                }
            }
            for &w in &nbrs {
                if w != u && mark[w] != u {
                    mark[w] = u;
                    merged.push(w);
                }
            }
            merged.sort_unstable();
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            queue.insert((adj[u].len(), u));
        }
    }
    perm
}

/// Inverse of a permutation.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}
