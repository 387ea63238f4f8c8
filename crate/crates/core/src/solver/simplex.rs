//! Dense two-phase primal simplex for small LPs.
//!
//! Used by the enumeration oracle on micro-instances only; there is no
//! sparsity handling or scaling. Pricing is Dantzig's rule, falling back to
//! Bland's rule after a run of degenerate pivots so the method terminates.
use crate::model::RowSense;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `minimize cost . x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lp {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    /// Pivot limit reached; indicates numerical trouble.
    Stalled,
}

/// How an original column is expressed in nonnegative tableau columns.
enum Map {
    /// `x = offset + sign * t[col]`
    Shift { col: usize, offset: f64, sign: f64 },
    /// `x = t[plus] - t[minus]`
    Free { plus: usize, minus: usize },
}

pub fn solve_lp(lp: &Lp) -> LpOutcome {
    let n = lp.cost.len();
    if (0..n).any(|j| lp.lower[j] > lp.upper[j]) {
        return LpOutcome::Infeasible;
    }

    // Nonnegative reformulation.
    let mut maps = Vec::with_capacity(n);
    let mut width = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, up) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            maps.push(Map::Shift {
                col: width,
                offset: lo,
                sign: 1.0,
            });
            if up.is_finite() {
                bound_rows.push((width, up - lo));
            }
            width += 1;
        } else if up.is_finite() {
            maps.push(Map::Shift {
                col: width,
                offset: up,
                sign: -1.0,
            });
            width += 1;
        } else {
            maps.push(Map::Free {
                plus: width,
                minus: width + 1,
            });
            width += 2;
        }
    }

    // Constraint rows over tableau columns, before slacks.
    let mut rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; width];
        let mut rhs = row.rhs;
        for &(j, c) in &row.terms {
            match maps[j] {
                Map::Shift { col, offset, sign } => {
                    a[col] += c * sign;
                    rhs -= c * offset;
                }
                Map::Free { plus, minus } => {
                    a[plus] += c;
                    a[minus] -= c;
                }
            }
        }
        rows.push((a, row.sense, rhs));
    }
    for &(col, ub) in &bound_rows {
        let mut a = vec![0.0; width];
        a[col] = 1.0;
        rows.push((a, RowSense::Le, ub));
    }
    let mut cost = vec![0.0; width];
    let mut constant = 0.0;
    for j in 0..n {
        match maps[j] {
            Map::Shift { col, offset, sign } => {
                cost[col] += lp.cost[j] * sign;
                constant += lp.cost[j] * offset;
            }
            Map::Free { plus, minus } => {
                cost[plus] += lp.cost[j];
                cost[minus] -= lp.cost[j];
            }
        }
    }

    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let n_real = width + slacks;
    let total = n_real + m;
    let rhs_col = total;
    let mut tab = vec![vec![0.0; total + 1]; m];
    let mut slack = width;
    for (r, (a, sense, rhs)) in rows.into_iter().enumerate() {
        let t = &mut tab[r];
        t[..width].copy_from_slice(&a);
        match sense {
            RowSense::Le => {
                t[slack] = 1.0;
                slack += 1;
            }
            RowSense::Ge => {
                t[slack] = -1.0;
                slack += 1;
            }
            RowSense::Eq => {}
        }
        t[rhs_col] = rhs;
        if rhs < 0.0 {
            for v in t.iter_mut() {
                *v = -*v;
            }
        }
        t[n_real + r] = 1.0;
    }
    let mut basis: Vec<usize> = (n_real..total).collect();

    // Phase 1: minimise the sum of artificials.
    let mut phase1 = vec![0.0; total];
    phase1[n_real..].iter_mut().for_each(|c| *c = 1.0);
    match run(&mut tab, &mut basis, &phase1, total) {
        Phase::Optimal => {}
        Phase::Unbounded => unreachable!("phase 1 is bounded below"),
        Phase::Stalled => return LpOutcome::Stalled,
    }
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n_real)
        .map(|(r, _)| tab[r][rhs_col])
        .sum();
    let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // Pivot remaining (zero-valued) artificials out where possible.
    for r in 0..m {
        if basis[r] >= n_real {
            if let Some(k) = (0..n_real).find(|&k| tab[r][k].abs() > 1e-9) {
                pivot(&mut tab, &mut basis, r, k);
            }
        }
    }

    // Phase 2 over real columns only.
    let mut phase2 = vec![0.0; total];
    phase2[..width].copy_from_slice(&cost);
    match run(&mut tab, &mut basis, &phase2, n_real) {
        Phase::Optimal => {}
        Phase::Unbounded => return LpOutcome::Unbounded,
        Phase::Stalled => return LpOutcome::Stalled,
    }

    let mut t = vec![0.0; total];
    for (r, &b) in basis.iter().enumerate() {
        t[b] = tab[r][rhs_col];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            Map::Shift { col, offset, sign } => offset + sign * t[col],
            Map::Free { plus, minus } => t[plus] - t[minus],
        })
        .collect();
    let objective = constant + cost.iter().zip(&t).map(|(c, v)| c * v).sum::<f64>();
    LpOutcome::Optimal { x, objective }
}

enum Phase {
    Optimal,
    Unbounded,
    Stalled,
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], r: usize, k: usize) {
    let p = tab[r][k];
    for v in tab[r].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab[r].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[k];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            row[k] = 0.0;
        }
    }
    basis[r] = k;
}

/// Primal simplex on the current basis; only columns `< enter_limit` may
/// enter.
fn run(tab: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) -> Phase {
    let rhs_col = cost.len();
    let mut degenerate = 0;
    for _ in 0..MAX_PIVOTS {
        let reduced = |k: usize, tab: &[Vec<f64>]| {
            cost[k]
                - basis
                    .iter()
                    .zip(tab)
                    .map(|(&b, row)| cost[b] * row[k])
                    .sum::<f64>()
        };
        let bland = degenerate >= DEGENERATE_RUN;
        let mut entering = None;
        let mut best = -COST_TOL;
        for k in 0..enter_limit {
            if basis.contains(&k) {
                continue;
            }
            let rc = reduced(k, tab);
            if rc < best {
                entering = Some(k);
                if bland {
                    break;
                }
                best = rc;
            }
        }
        let Some(k) = entering else {
            return Phase::Optimal;
        };
        let mut leaving: Option<(usize, f64)> = None;
        for (r, row) in tab.iter().enumerate() {
            if row[k] > PIVOT_TOL {
                let ratio = row[rhs_col] / row[k];
                let better = match leaving {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
        }
        let Some((r, ratio)) = leaving else {
            return Phase::Unbounded;
        };
        degenerate = if ratio.abs() <= 1e-12 { degenerate + 1 } else { 0 };
        pivot(tab, basis, r, k);
    }
    Phase::Stalled
}
