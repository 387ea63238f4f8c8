//! Exhaustive enumeration oracle for micro-instances.
//!
//! Every assignment of the integer and binary columns inside their bounds is
//! visited depth-first. Partial assignments are discarded only when bound
//! propagation proves that no completion satisfies the rows; the objective is
//! never used for pruning. Each complete assignment leaves a continuous LP,
//! solved by [`solve_lp`].
use std::collections::HashMap;
use std::time::Instant;

use super::simplex::{solve_lp, Lp, LpOutcome, LpRow};
use super::{Solution, SolveStatus, SolverError};
use crate::model::{MilpModel, ObjectiveSense, RowSense};

pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1 << 20;

const PROPAGATION_PASSES: usize = 25;

struct Search<'a> {
    model: &'a MilpModel,
    integers: Vec<usize>,
    sign: f64,
    best: Option<(f64, Vec<f64>)>,
    leaves: u64,
    /// Continuous optima keyed by the exact bit pattern of the reduced LP's
    /// bounds and right-hand sides; the row structure is identical across
    /// leaves. `None` marks an infeasible LP.
    memo: HashMap<Vec<u64>, Option<Vec<f64>>>,
}

/// Bounds implied by the rows. Returns `false` if a row cannot be satisfied.
/// Integer columns are rounded inward.
fn propagate(model: &MilpModel, lower: &mut [f64], upper: &mut [f64], passes: usize) -> bool {
    let integral: Vec<bool> = model.variables().iter().map(|v| v.kind.is_integral()).collect();
    for _ in 0..passes {
        let mut changed = false;
        for row in model.constraints() {
            let (mut min_act, mut max_act) = (0.0, 0.0);
            let (mut min_inf, mut max_inf) = (0usize, 0usize);
            for &(v, c) in &row.terms {
                if c == 0.0 {
                    continue;
                }
                let (lo, up) = (lower[v.0], upper[v.0]);
                let (a, b) = if c >= 0.0 { (c * lo, c * up) } else { (c * up, c * lo) };
                if a.is_finite() { min_act += a } else { min_inf += 1 }
                if b.is_finite() { max_act += b } else { max_inf += 1 }
            }
            let tol = 1e-7 * (1.0 + row.rhs.abs());
            let need_le = matches!(row.sense, RowSense::Le | RowSense::Eq);
            let need_ge = matches!(row.sense, RowSense::Ge | RowSense::Eq);
            if need_le && min_inf == 0 && min_act > row.rhs + tol {
                return false;
            }
            if need_ge && max_inf == 0 && max_act < row.rhs - tol {
                return false;
            }
            for &(v, c) in &row.terms {
                if c == 0.0 {
                    continue;
                }
                let j = v.0;
                let (lo, up) = (lower[j], upper[j]);
                let (own_min, own_max) = if c > 0.0 { (c * lo, c * up) } else { (c * up, c * lo) };
                let mut new_lo = lo;
                let mut new_up = up;
                // activity <= rhs bounds c*x from above by rhs - min(rest).
                if need_le {
                    let rest_inf = min_inf - usize::from(!own_min.is_finite());
                    if rest_inf == 0 {
                        let rest = min_act - if own_min.is_finite() { own_min } else { 0.0 };
                        let limit = (row.rhs - rest) / c;
                        if c > 0.0 { new_up = new_up.min(limit) } else { new_lo = new_lo.max(limit) }
                    }
                }
                if need_ge {
                    let rest_inf = max_inf - usize::from(!own_max.is_finite());
                    if rest_inf == 0 {
                        let rest = max_act - if own_max.is_finite() { own_max } else { 0.0 };
                        let limit = (row.rhs - rest) / c;
                        if c > 0.0 { new_lo = new_lo.max(limit) } else { new_up = new_up.min(limit) }
                    }
                }
                if integral[j] {
                    new_lo = (new_lo - 1e-6).ceil();
                    new_up = (new_up + 1e-6).floor();
                } else {
                    // Keep continuous tightenings slightly loose.
                    new_lo -= 1e-9 * (1.0 + new_lo.abs());
                    new_up += 1e-9 * (1.0 + new_up.abs());
                }
                let gain = |old: f64, new: f64| {
                    if integral[j] {
                        old != new
                    } else {
                        !old.is_finite() && new.is_finite() || (old - new).abs() > 1e-6 * (1.0 + old.abs())
                    }
                };
                if new_lo > lo && gain(lo, new_lo) {
                    lower[j] = new_lo;
                    changed = true;
                }
                if new_up < up && gain(up, new_up) {
                    upper[j] = new_up;
                    changed = true;
                }
                if lower[j] > upper[j] + 1e-7 * (1.0 + lower[j].abs()) {
                    return false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

/// Exact optimum of `model` by enumerating integer assignments.
///
/// The assignment count checked against `limit` is the product of the
/// integer domain sizes after bound propagation at the root, which removes
/// only values no feasible point can take.
pub fn brute_force_oracle(model: &MilpModel, limit: u64) -> Result<Solution, SolverError> {
    let started = Instant::now();
    let mut lower: Vec<f64> = model.variables().iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.variables().iter().map(|v| v.upper).collect();
    let integers: Vec<usize> = model
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind.is_integral())
        .map(|(j, _)| j)
        .collect();
    for &j in &integers {
        lower[j] = (lower[j] - 1e-9).ceil();
        upper[j] = (upper[j] + 1e-9).floor();
    }
    if !propagate(model, &mut lower, &mut upper, usize::MAX) {
        return Ok(Solution::without_values(SolveStatus::Infeasible, started.elapsed()));
    }
    let size: f64 = integers
        .iter()
        .map(|&j| (upper[j] - lower[j] + 1.0).max(0.0))
        .product();
    if !size.is_finite() || size > limit as f64 {
        return Err(SolverError::EnumerationLimit { size, limit });
    }
    let sign = match model.objective().sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let mut search = Search {
        model,
        integers,
        sign,
        best: None,
        leaves: 0,
        memo: HashMap::new(),
    };
    search.descend(0, lower, upper)?;
    log::debug!(
        "oracle: {} leaves, {} distinct LPs, {} integer columns in {:?}",
        search.leaves,
        search.memo.len(),
        search.integers.len(),
        started.elapsed()
    );
    Ok(match search.best {
        None => Solution::without_values(SolveStatus::Infeasible, started.elapsed()),
        Some((_, values)) => Solution {
            status: SolveStatus::Optimal,
            objective: model.objective_value(&values),
            values,
            achieved_gap: 0.0,
            elapsed: started.elapsed(),
        },
    })
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<(), SolverError> {
        if depth == self.integers.len() {
            return self.leaf(&lower, &upper);
        }
        let j = self.integers[depth];
        let (lo, up) = (lower[j] as i64, upper[j] as i64);
        for value in lo..=up {
            let mut l = lower.clone();
            let mut u = upper.clone();
            l[j] = value as f64;
            u[j] = value as f64;
            if propagate(self.model, &mut l, &mut u, PROPAGATION_PASSES) {
                self.descend(depth + 1, l, u)?;
            }
        }
        Ok(())
    }

    /// Solves the continuous remainder with every integer column fixed.
    /// Propagated bounds are used only for the integer columns; continuous
    /// columns keep their declared bounds.
    fn leaf(&mut self, lower: &[f64], upper: &[f64]) -> Result<(), SolverError> {
        self.leaves += 1;
        let model = self.model;
        let vars = model.variables();
        let mut fixed: Vec<Option<f64>> = vars
            .iter()
            .map(|v| (v.lower == v.upper).then_some(v.lower))
            .collect();
        for &j in &self.integers {
            fixed[j] = Some(lower[j]);
            debug_assert_eq!(lower[j], upper[j]);
        }
        let mut column = vec![usize::MAX; vars.len()];
        let mut free = Vec::new();
        for (j, f) in fixed.iter().enumerate() {
            if f.is_none() {
                column[j] = free.len();
                free.push(j);
            }
        }
        let mut lp = Lp {
            cost: vec![0.0; free.len()],
            lower: free.iter().map(|&j| vars[j].lower).collect(),
            upper: free.iter().map(|&j| vars[j].upper).collect(),
            rows: Vec::new(),
        };
        for (v, c) in &model.objective().terms {
            if fixed[v.0].is_none() {
                lp.cost[column[v.0]] += self.sign * c;
            }
        }
        for row in model.constraints() {
            let mut rhs = row.rhs;
            let mut terms = Vec::new();
            for &(v, c) in &row.terms {
                match fixed[v.0] {
                    Some(x) => rhs -= c * x,
                    None if c != 0.0 => terms.push((column[v.0], c)),
                    None => {}
                }
            }
            let tol = 1e-9 * (1.0 + row.rhs.abs());
            match terms.as_slice() {
                [] => {
                    let ok = match row.sense {
                        RowSense::Le => 0.0 <= rhs + tol,
                        RowSense::Ge => 0.0 >= rhs - tol,
                        RowSense::Eq => rhs.abs() <= tol,
                    };
                    if !ok {
                        return Ok(());
                    }
                }
                // Singleton rows become column bounds.
                [(k, c)] => {
                    let bound = rhs / c;
                    let (tighten_up, tighten_lo) = match (row.sense, *c > 0.0) {
                        (RowSense::Eq, _) => (true, true),
                        (RowSense::Le, true) | (RowSense::Ge, false) => (true, false),
                        (RowSense::Ge, true) | (RowSense::Le, false) => (false, true),
                    };
                    if tighten_up {
                        lp.upper[*k] = lp.upper[*k].min(bound);
                    }
                    if tighten_lo {
                        lp.lower[*k] = lp.lower[*k].max(bound);
                    }
                    if lp.lower[*k] > lp.upper[*k] {
                        if lp.lower[*k] - lp.upper[*k] > tol {
                            return Ok(());
                        }
                        lp.upper[*k] = lp.lower[*k];
                    }
                }
                _ => lp.rows.push(LpRow {
                    terms,
                    sense: row.sense,
                    rhs,
                }),
            }
        }
        let key: Vec<u64> = lp
            .lower
            .iter()
            .chain(&lp.upper)
            .chain(lp.rows.iter().map(|r| &r.rhs))
            .map(|x| x.to_bits())
            .collect();
        let x = match self.memo.get(&key) {
            Some(cached) => cached.clone(),
            None => {
                let x = match solve_lp(&lp) {
                    LpOutcome::Optimal { x, .. } => Some(x),
                    LpOutcome::Infeasible => None,
                    LpOutcome::Unbounded => return Err(SolverError::Unbounded),
                    LpOutcome::Stalled => {
                        return Err(SolverError::Backend("oracle LP did not converge".into()))
                    }
                };
                self.memo.insert(key, x.clone());
                x
            }
        };
        let Some(x) = x else {
            return Ok(());
        };
        let mut values: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &j) in free.iter().enumerate() {
            values[j] = x[k];
        }
        let objective = self.sign * model.objective_value(&values);
        let improves = match &self.best {
            None => true,
            Some((best, _)) => objective < best - 1e-9 * (1.0 + best.abs()),
        };
        if improves {
            self.best = Some((objective, values));
        }
        Ok(())
    }
}
