//! Minibatch optimal-transport coupling between data and noise batches.
//!
//! The noise batch is permuted to minimize the total squared distance to the
//! data batch before training pairs are formed. The assignment is solved
//! exactly with an O(B^3) Hungarian/Jonker-Volgenant sweep over the squared
//! distance matrix; among cost-optimal assignments the lexicographically
//! smallest map is returned.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{Batch, LatentSeq};

/// Bijective index map over `[0, B)`; `map[i]` is the noise index paired with data item `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n || seen[j] {
                return Err(Error::InvalidArgument(String::from(
                    "permutation map must be a bijection over [0, B)",
                )));
            }
            seen[j] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }
}

/// Total squared Frobenius cost of pairing `x_i` with `e_{P(i)}`.
pub fn pair_cost(x: &Batch, eps: &[LatentSeq], perm: &Permutation) -> Result<f64> {
    if x.len() != eps.len() || x.len() != perm.len() {
        return Err(Error::InvalidArgument(format!(
            "size mismatch: batch {}, noise {}, permutation {}",
            x.len(),
            eps.len(),
            perm.len()
        )));
    }
    let mut total = 0.0;
    for (i, (xi, _)) in x.items().iter().enumerate() {
        total += xi.dist_sq(&eps[perm.apply(i)])?;
    }
    Ok(total)
}

/// Exact minimum-cost assignment of noise to data.
pub fn ot_couple(x: &Batch, eps: &[LatentSeq]) -> Result<Permutation> {
    let n = x.len();
    if eps.len() != n {
        return Err(Error::InvalidArgument(format!(
            "size mismatch: batch {}, noise {}",
            n,
            eps.len()
        )));
    }
    // Squared-distance cost matrix in double precision.
    let mut cost = vec![0.0f64; n * n];
    for (i, (xi, _)) in x.items().iter().enumerate() {
        for (j, ej) in eps.iter().enumerate() {
            cost[i * n + j] = xi.dist_sq(ej)?;
        }
    }
    let (row_to_col, u, v) = solve_assignment(&cost, n);
    let map = lexicographic_refine(&cost, n, row_to_col, &u, &v);
    Permutation::new(map)
}

/// Hungarian algorithm with potentials (O(n^3)).
///
/// Returns the optimal row->column assignment plus the dual potentials,
/// which the tie-break refinement uses to identify alternative optima.
fn solve_assignment(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internal arrays; p[j] = row assigned to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Replaces the found assignment by the lexicographically smallest map among
/// cost-optimal ones.
///
/// By complementary slackness every optimal assignment uses only edges with
/// zero reduced cost under the optimal potentials; the refinement greedily
/// fixes each row to its smallest admissible column for which the remaining
/// rows still admit a perfect matching in the admissible graph.
fn lexicographic_refine(
    cost: &[f64],
    n: usize,
    row_to_col: Vec<usize>,
    u: &[f64],
    v: &[f64],
) -> Vec<usize> {
    let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-9 * scale;

    let admissible: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost[i * n + j] - u[i] - v[j] <= eps)
                .collect()
        })
        .collect();

    // col_to_row mirrors the current matching; usize::MAX marks a free column.
    let mut match_row = vec![0usize; n];
    let mut match_col = vec![usize::MAX; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        match_row[i] = j;
        match_col[j] = i;
    }

    for i in 0..n {
        let current = match_row[i];
        for &j in &admissible[i] {
            if j >= current {
                break; // current column is already the smallest feasible
            }
            let displaced = match_col[j];
            if displaced != usize::MAX && displaced < i {
                continue; // column pinned by an earlier row
            }
            // Tentatively move row i to column j and try to rematch the
            // displaced row through augmenting paths over rows > i.
            let freed = match_row[i];
            match_col[freed] = usize::MAX;
            match_row[i] = j;
            match_col[j] = i;
            let ok = match displaced {
                usize::MAX => true,
                r => {
                    let mut visited = vec![false; n];
                    try_augment(r, i, &admissible, &mut match_row, &mut match_col, &mut visited)
                }
            };
            if ok {
                break;
            }
            // Revert.
            if displaced != usize::MAX {
                match_row[displaced] = j;
            }
            match_col[j] = displaced;
            match_row[i] = freed;
            match_col[freed] = i;
        }
    }
    match_row
}

/// Kuhn augmenting-path step; rows `<= fixed_up_to` are pinned.
fn try_augment(
    row: usize,
    fixed_up_to: usize,
    admissible: &[Vec<usize>],
    match_row: &mut [usize],
    match_col: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &j in &admissible[row] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        let owner = match_col[j];
        if owner == usize::MAX
            || (owner > fixed_up_to
                && try_augment(owner, fixed_up_to, admissible, match_row, match_col, visited))
        {
            match_row[row] = j;
            match_col[j] = row;
            return true;
        }
    }
    false
}
