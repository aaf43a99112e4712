//! Maximum-weight stream → satellite matching.

use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX: usize = 8;

/// `weights[s][l]`, streams by satellites.
pub type WeightMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[s]` is the satellite serving stream `s`.
    pub mapping: Vec<usize>,
    pub value: f64,
}

fn shape(weights: &[Vec<f64>]) -> Result<(usize, usize)> {
    let s = weights.len();
    let l = weights.first().map_or(0, Vec::len);
    if weights.iter().any(|r| r.len() != l) {
        return Err(Error::Dimension("weight rows must have equal length".into()));
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Domain("weights must be finite".into()));
    }
    if s > l {
        return Err(Error::Infeasible(format!("{s} streams cannot be matched to {l} satellites")));
    }
    Ok((s, l))
}

fn value_of(weights: &[Vec<f64>], mapping: &[usize]) -> f64 {
    mapping.iter().enumerate().map(|(s, &l)| weights[s][l]).sum()
}

fn tie_tolerance(weights: &[Vec<f64>]) -> f64 {
    let scale = weights.iter().flatten().fold(0.0f64, |m, w| m.max(w.abs()));
    1e-10 * scale.max(f64::MIN_POSITIVE) * weights.len().max(1) as f64
}

/// Minimum-cost perfect matching on a square matrix; returns `col_of_row`.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // Potentials and matching, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Optimal value over injections of `rows` into `cols` (indices into `weights`).
fn optimal_value(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let n = cols.len();
    let top = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| weights[r][c]))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    // Square cost with zero-weight dummy rows.
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            cols.iter()
                .map(|&c| if i < rows.len() { top - weights[rows[i]][c] } else { top })
                .collect()
        })
        .collect();
    let col_of = hungarian_min(&cost);
    (0..rows.len()).map(|i| weights[rows[i]][cols[col_of[i]]]).sum()
}

/// Hungarian maximum-weight injective assignment of streams (rows) to satellites.
///
/// Among optimal mappings the lexicographically smallest (by stream index) is
/// returned; values within a small relative tolerance count as ties.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Result<Assignment> {
    let (s, l) = shape(weights)?;
    let all_rows: Vec<usize> = (0..s).collect();
    let all_cols: Vec<usize> = (0..l).collect();
    let best = optimal_value(weights, &all_rows, &all_cols);
    let tol = tie_tolerance(weights);

    let mut mapping = Vec::with_capacity(s);
    let mut fixed_value = 0.0;
    let mut free_cols = all_cols;
    for row in 0..s {
        let rest: Vec<usize> = (row + 1..s).collect();
        let choice = free_cols.iter().copied().find(|&c| {
            let remaining: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            fixed_value + weights[row][c] + optimal_value(weights, &rest, &remaining) >= best - tol
        });
        let c = choice.ok_or_else(|| Error::Numerical("assignment tie-break lost optimality".into()))?;
        fixed_value += weights[row][c];
        free_cols.retain(|&x| x != c);
        mapping.push(c);
    }
    Ok(Assignment { value: value_of(weights, &mapping), mapping })
}

/// Exhaustive search over all injections, lexicographic order, first optimum kept.
pub fn brute_force_assignment(weights: &[Vec<f64>]) -> Result<Assignment> {
    let (s, l) = shape(weights)?;
    if l > BRUTE_FORCE_MAX {
        return Err(Error::Domain(format!("brute force limited to {BRUTE_FORCE_MAX} satellites")));
    }
    let tol = tie_tolerance(weights);
    let mut best: Option<Assignment> = None;
    let mut current = Vec::with_capacity(s);
    let mut used = vec![false; l];
    fn recurse(
        weights: &[Vec<f64>],
        tol: f64,
        current: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut Option<Assignment>,
    ) {
        if current.len() == weights.len() {
            let v = value_of(weights, current);
            if best.as_ref().is_none_or(|b| v > b.value + tol) {
                *best = Some(Assignment { mapping: current.clone(), value: v });
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                current.push(c);
                recurse(weights, tol, current, used, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    recurse(weights, tol, &mut current, &mut used, &mut best);
    Ok(best.unwrap_or(Assignment { mapping: Vec::new(), value: 0.0 }))
}
