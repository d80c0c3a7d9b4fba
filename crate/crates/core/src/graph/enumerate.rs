//! Exhaustive spanning tree / forest oracles and the matrix-tree count.

use itertools::Itertools;
use petgraph::unionfind::UnionFind;

use super::{check_undirected, is_spanning_forest, EdgeSelection, GraphError, Network, SelectionRole};

/// Largest branch count accepted by [`enumerate_spanning_trees`].
pub const TREE_ENUMERATION_LIMIT: usize = 25;
/// Largest branch count accepted by [`enumerate_spanning_forests`].
pub const FOREST_ENUMERATION_LIMIT: usize = 20;

fn acyclic(net: &Network, branches: impl IntoIterator<Item = usize>) -> bool {
    let mut uf = UnionFind::<usize>::new(net.node_count());
    branches.into_iter().all(|k| {
        let (u, v) = net.ends(k);
        uf.union(u, v)
    })
}

/// Every spanning tree of the network as a fictitious-role selection, in
/// lexicographic order of branch positions. A disconnected network has none.
pub fn enumerate_spanning_trees(net: &Network) -> Result<Vec<EdgeSelection>, GraphError> {
    let m = net.branch_count();
    if m > TREE_ENUMERATION_LIMIT {
        return Err(GraphError::TooLarge { branches: m, limit: TREE_ENUMERATION_LIMIT });
    }
    let size = net.node_count() - 1;
    if size > m {
        return Ok(Vec::new());
    }
    // n-1 acyclic edges always span.
    let trees = (0..m)
        .combinations(size)
        .filter(|combo| acyclic(net, combo.iter().copied()))
        .map(|combo| {
            let mut sel = EdgeSelection::empty(SelectionRole::Fictitious, m);
            for k in combo {
                sel.set(k, true);
            }
            sel
        })
        .collect();
    Ok(trees)
}

/// Every acyclic branch subset (including the empty one), ordered by bitmask.
pub fn enumerate_spanning_forests(net: &Network) -> Result<Vec<EdgeSelection>, GraphError> {
    let m = net.branch_count();
    if m > FOREST_ENUMERATION_LIMIT {
        return Err(GraphError::TooLarge { branches: m, limit: FOREST_ENUMERATION_LIMIT });
    }
    let forests = (0u64..1 << m)
        .filter(|mask| acyclic(net, (0..m).filter(|k| mask >> k & 1 == 1)))
        .map(|mask| EdgeSelection::from_mask(SelectionRole::Actual, m, mask))
        .collect();
    Ok(forests)
}

/// Number of spanning trees by the matrix-tree theorem: the determinant of
/// the Laplacian with the first row and column removed, computed exactly with
/// fraction-free (Bareiss) elimination. Parallel branches count separately.
pub fn count_spanning_trees(net: &Network) -> Result<u128, GraphError> {
    let n = net.node_count();
    if n == 1 {
        return Ok(1);
    }
    let size = n - 1;
    let mut lap = vec![vec![0i128; size]; size];
    for k in 0..net.branch_count() {
        let (u, v) = net.ends(k);
        // drop node 0's row and column
        if u > 0 {
            lap[u - 1][u - 1] += 1;
        }
        if v > 0 {
            lap[v - 1][v - 1] += 1;
        }
        if u > 0 && v > 0 {
            lap[u - 1][v - 1] -= 1;
            lap[v - 1][u - 1] -= 1;
        }
    }
    let det = bareiss_determinant(lap)?;
    u128::try_from(det).map_err(|_| GraphError::CountOverflow)
}

fn bareiss_determinant(mut a: Vec<Vec<i128>>) -> Result<i128, GraphError> {
    let n = a.len();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(k, i);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let lhs = a[i][j].checked_mul(a[k][k]).ok_or(GraphError::CountOverflow)?;
                let rhs = a[i][k].checked_mul(a[k][j]).ok_or(GraphError::CountOverflow)?;
                let num = lhs.checked_sub(rhs).ok_or(GraphError::CountOverflow)?;
                // exact by Sylvester's identity
                a[i][j] = num / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    Ok(sign * a[n - 1][n - 1])
}

/// Grows an acyclic selection into a spanning tree that contains it by
/// repeatedly adding a branch that joins two different components. Branches
/// are tried in position order, so the result is deterministic.
pub fn extend_to_spanning_tree(
    net: &Network,
    forest: &EdgeSelection,
) -> Result<EdgeSelection, GraphError> {
    check_undirected(net, forest)?;
    if !is_spanning_forest(net, forest)? {
        return Err(GraphError::NotAForest);
    }
    net.require_connected()?;
    let mut uf = UnionFind::<usize>::new(net.node_count());
    let mut tree = forest.clone().with_role(SelectionRole::Fictitious);
    for k in forest.selected() {
        let (u, v) = net.ends(k);
        uf.union(u, v);
    }
    let mut components = net.node_count() - forest.count();
    for k in 0..net.branch_count() {
        if components == 1 {
            break;
        }
        let (u, v) = net.ends(k);
        if uf.union(u, v) {
            tree.set(k, true);
            components -= 1;
        }
    }
    Ok(tree)
}
