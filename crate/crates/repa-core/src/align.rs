//! Label alignment between partitions.
//!
//! Mixture labels are only identified up to permutation, so estimates from
//! different runs (or against the ground truth) are compared after choosing
//! the class permutation that maximizes per-node agreement. Exhaustive search
//! covers small class counts; larger ones go through a Hungarian assignment
//! on the agreement matrix.

/// Exhaustive search is used up to this many classes, factorial time beyond
/// that would hurt.
const EXHAUSTIVE_LIMIT: usize = 8;

/// Count matrix `c[from][to]` of nodes labeled `from` in `a` and `to` in `b`.
fn agreement_matrix(a: &[u16], b: &[u16], k: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        c[x as usize][y as usize] += 1;
    }
    c
}

/// Permutation `perm` (class `l` of `a` maps to `perm[l]`) maximizing the
/// number of nodes on which `a`, relabeled, agrees with `b`. Both label
/// vectors must use classes below `k`.
pub fn best_agreement_perm(a: &[u16], b: &[u16], k: usize) -> Vec<usize> {
    assert_eq!(a.len(), b.len(), "label vectors must have equal length");
    let c = agreement_matrix(a, b, k);
    if k <= EXHAUSTIVE_LIMIT {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best_perm = perm.clone();
        let mut best = u64::MIN;
        permute(&mut perm, 0, &mut |p| {
            let score: u64 = (0..k).map(|l| c[l][p[l]]).sum();
            if score > best {
                best = score;
                best_perm = p.to_vec();
            }
        });
        best_perm
    } else {
        hungarian_max(&c)
    }
}

fn permute(perm: &mut [usize], i: usize, visit: &mut impl FnMut(&[usize])) {
    if i == perm.len() {
        visit(perm);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute(perm, i + 1, visit);
        perm.swap(i, j);
    }
}

/// Maximum-weight perfect assignment on a square matrix via the Hungarian
/// algorithm (potentials formulation, O(k^3)). Returns `perm[row] = column`.
pub fn hungarian_max(weights: &[Vec<u64>]) -> Vec<usize> {
    let k = weights.len();
    let max_w = weights
        .iter()
        .flat_map(|r| r.iter())
        .copied()
        .max()
        .unwrap_or(0) as i64;
    // Convert to min-cost with nonnegative entries.
    let cost: Vec<Vec<i64>> = weights
        .iter()
        .map(|row| row.iter().map(|&w| max_w - w as i64).collect())
        .collect();

    // Standard O(n^3) Hungarian with row/column potentials. 1-based helper
    // arrays; way[j] remembers the augmenting path.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut p = vec![0usize; k + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; k];
    for j in 1..=k {
        if p[j] != 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}

/// Relabel `labels` through `perm`.
pub fn apply_perm(labels: &[u16], perm: &[usize]) -> Vec<u16> {
    labels.iter().map(|&l| perm[l as usize] as u16).collect()
}
