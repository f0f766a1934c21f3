//! Measurement-to-track association: linear assignment and ranked (K-best)
//! assignment, plus the association map type shared by the filters.
//!
//! Costs are given as dense row-major matrices. Infeasible entries must be
//! `f64::INFINITY`; the solvers substitute a large finite penalty internally
//! and reject any solution that uses one.

use crate::rfs::Label;

/// Assignment of one track: radar index and ESM index, `None` meaning miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Assignment {
    pub radar: Option<usize>,
    pub esm: Option<usize>,
}

impl Assignment {
    pub const MISS: Assignment = Assignment { radar: None, esm: None };

    pub fn new(radar: Option<usize>, esm: Option<usize>) -> Self {
        Self { radar, esm }
    }

    pub fn is_miss(&self) -> bool {
        self.radar.is_none() && self.esm.is_none()
    }
}

/// Per-label assignments, kept sorted by label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssociationMap {
    entries: Vec<(Label, Assignment)>,
}

impl AssociationMap {
    pub fn new(mut entries: Vec<(Label, Assignment)>) -> Self {
        entries.sort_by_key(|(l, _)| *l);
        Self { entries }
    }

    pub fn get(&self, label: &Label) -> Option<Assignment> {
        self.entries
            .binary_search_by_key(label, |(l, _)| *l)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(Label, Assignment)] {
        &self.entries
    }

    /// Injective on non-miss radar indices and on non-miss ESM indices.
    pub fn is_injective(&self) -> bool {
        let mut radar: Vec<usize> = self.entries.iter().filter_map(|(_, a)| a.radar).collect();
        let mut esm: Vec<usize> = self.entries.iter().filter_map(|(_, a)| a.esm).collect();
        let (nr, ne) = (radar.len(), esm.len());
        radar.sort_unstable();
        radar.dedup();
        esm.sort_unstable();
        esm.dedup();
        radar.len() == nr && esm.len() == ne
    }
}

// ============================================================================
// Linear assignment
// ============================================================================

const BIG: f64 = 1e12;

/// Minimum-cost assignment of every row to a distinct column (rows ≤ cols).
/// Returns the column per row and the total cost, or `None` when no
/// finite-cost assignment exists.
pub fn hungarian(cost: &[Vec<f64>]) -> Option<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Some((Vec::new(), 0.0));
    }
    let m = cost[0].len();
    if m < n {
        return None;
    }
    let c = |i: usize, j: usize| {
        let v = cost[i][j];
        if v.is_finite() {
            v
        } else {
            BIG
        }
    };

    // shortest augmenting path (Jonker-Volgenant style potentials), 1-based
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let mut total = 0.0;
    for (i, &j) in assign.iter().enumerate() {
        if !cost[i][j].is_finite() {
            return None;
        }
        total += cost[i][j];
    }
    Some((assign, total))
}

// ============================================================================
// Murty's ranked assignment
// ============================================================================

struct Node {
    cost: f64,
    assign: Vec<usize>,
    matrix: Vec<Vec<f64>>,
}

/// The `k` lowest-cost assignments in nondecreasing cost order. Each row is
/// assigned a distinct column; rows must not outnumber columns. Ties keep the
/// order in which Murty partitions discover them.
pub fn murty(cost: &[Vec<f64>], k: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let Some((assign, c0)) = hungarian(cost) else {
        return out;
    };
    let mut queue: Vec<Node> = vec![Node {
        cost: c0,
        assign,
        matrix: cost.to_vec(),
    }];
    while out.len() < k {
        // pop the cheapest node; earliest inserted wins ties
        let Some(best) = queue
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let node = queue.remove(best);
        let n = node.assign.len();
        let mut fixed = node.matrix.clone();
        for row in 0..n {
            // forbid this row's column, keeping earlier rows fixed
            let mut sub = fixed.clone();
            sub[row][node.assign[row]] = f64::INFINITY;
            if let Some((a, c)) = hungarian(&sub) {
                queue.push(Node {
                    cost: c,
                    assign: a,
                    matrix: sub,
                });
            }
            let col = node.assign[row];
            for (j, v) in fixed[row].iter_mut().enumerate() {
                if j != col {
                    *v = f64::INFINITY;
                }
            }
            for (i, r) in fixed.iter_mut().enumerate() {
                if i != row {
                    r[col] = f64::INFINITY;
                }
            }
        }
        out.push((node.assign, node.cost));
    }
    out
}

/// Ranked assignment of tracks to measurements with a private miss option
/// per track. `det_cost[i][m]` is the cost of track `i` taking measurement
/// `m` (infinite when gated out), `miss_cost[i]` the cost of a miss.
/// Returns up to `k` `(per-track measurement or miss, total cost)` pairs.
pub fn ranked_with_misses(det_cost: &[Vec<f64>], miss_cost: &[f64], k: usize) -> Vec<(Vec<Option<usize>>, f64)> {
    let n = det_cost.len();
    if n == 0 {
        return vec![(Vec::new(), 0.0)];
    }
    let m = det_cost[0].len();
    let mut matrix = vec![vec![f64::INFINITY; m + n]; n];
    for i in 0..n {
        matrix[i][..m].copy_from_slice(&det_cost[i]);
        matrix[i][m + i] = miss_cost[i];
    }
    murty(&matrix, k)
        .into_iter()
        .map(|(a, c)| (a.into_iter().map(|j| (j < m).then_some(j)).collect(), c))
        .collect()
}

/// Every injective partial assignment of `n` tracks to `m` measurements,
/// where `allowed[i][j]` marks admissible pairs. Order: depth-first with the
/// miss option first.
pub fn enumerate_partial(allowed: &[Vec<bool>], m: usize) -> Vec<Vec<Option<usize>>> {
    fn rec(i: usize, allowed: &[Vec<bool>], taken: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == allowed.len() {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(i + 1, allowed, taken, cur, out);
        cur.pop();
        for j in 0..taken.len() {
            if !taken[j] && allowed[i][j] {
                taken[j] = true;
                cur.push(Some(j));
                rec(i + 1, allowed, taken, cur, out);
                cur.pop();
                taken[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, allowed, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}
