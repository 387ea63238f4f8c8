//! Solver-agnostic mixed-integer linear model container.
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

/// Absolute tolerance for row and bound feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Distance from the nearest integer accepted for integer and binary variables.
pub const INTEGRALITY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Full row name, `group(suffix)`.
    pub name: String,
    /// Constraint family the row belongs to.
    pub group: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            sense: ObjectiveSense::Minimize,
            terms: Vec::new(),
            constant: 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate row name `{0}`")]
    DuplicateRow(String),
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("row `{row}` references undeclared variable #{var}")]
    UnknownVariable { row: String, var: usize },
}

/// One failed check from [`MilpModel::violations`].
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    Row { name: String, activity: f64, sense: RowSense, rhs: f64 },
    Bound { name: String, value: f64, lower: f64, upper: f64 },
    Integrality { name: String, value: f64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::Row {
                name,
                activity,
                sense,
                rhs,
            } => write!(f, "row {name}: {activity} {sense} {rhs} violated"),
            Infeasibility::Bound {
                name,
                value,
                lower,
                upper,
            } => write!(f, "variable {name} = {value} outside [{lower}, {upper}]"),
            Infeasibility::Integrality { name, value } => {
                write!(f, "variable {name} = {value} is not integral")
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub name: String,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
    var_names: HashMap<String, VarId>,
    row_names: HashMap<String, usize>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            ..MilpModel::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if self.var_names.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(ModelError::InvertedBounds { name, lower, upper });
        }
        let id = VarId(self.variables.len());
        self.var_names.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    /// Adds row `group(suffix)`. Terms on the same variable are merged.
    pub fn add_row(
        &mut self,
        group: &str,
        suffix: &str,
        terms: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> Result<(), ModelError> {
        let name = if suffix.is_empty() {
            group.to_string()
        } else {
            format!("{group}({suffix})")
        };
        if self.row_names.contains_key(&name) {
            return Err(ModelError::DuplicateRow(name));
        }
        let terms = self.merge_terms(&name, terms)?;
        self.row_names.insert(name.clone(), self.constraints.len());
        self.constraints.push(Constraint {
            name,
            group: group.to_string(),
            terms,
            sense,
            rhs,
        });
        Ok(())
    }

    fn merge_terms(
        &self,
        row: &str,
        terms: Vec<(VarId, f64)>,
    ) -> Result<Vec<(VarId, f64)>, ModelError> {
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        let mut seen: HashMap<VarId, usize> = HashMap::new();
        for (var, coef) in terms {
            if var.0 >= self.variables.len() {
                return Err(ModelError::UnknownVariable {
                    row: row.to_string(),
                    var: var.0,
                });
            }
            match seen.get(&var) {
                Some(&pos) => merged[pos].1 += coef,
                None => {
                    seen.insert(var, merged.len());
                    merged.push((var, coef));
                }
            }
        }
        Ok(merged)
    }

    pub fn set_objective(
        &mut self,
        sense: ObjectiveSense,
        terms: Vec<(VarId, f64)>,
        constant: f64,
    ) -> Result<(), ModelError> {
        let terms = self.merge_terms("objective", terms)?;
        self.objective = Objective {
            sense,
            terms,
            constant,
        };
        Ok(())
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn row(&self, name: &str) -> Option<&Constraint> {
        self.row_names.get(name).map(|&i| &self.constraints[i])
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integral(&self) -> usize {
        self.variables.iter().filter(|v| v.kind.is_integral()).count()
    }

    /// Rows per constraint family, in name order.
    pub fn group_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for row in &self.constraints {
            *counts.entry(row.group.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn rows_in_group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a Constraint> {
        self.constraints.iter().filter(move |r| r.group == group)
    }

    pub fn activity(&self, row: &Constraint, values: &[f64]) -> f64 {
        row.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.constant
            + self
                .objective
                .terms
                .iter()
                .map(|(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Every row, bound and integrality violation of `values` beyond `tol`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<Infeasibility> {
        let mut out = Vec::new();
        for (var, &value) in self.variables.iter().zip(values) {
            if value < var.lower - tol || value > var.upper + tol || !value.is_finite() {
                out.push(Infeasibility::Bound {
                    name: var.name.clone(),
                    value,
                    lower: var.lower,
                    upper: var.upper,
                });
            }
            if var.kind.is_integral() && (value - value.round()).abs() > INTEGRALITY_TOL {
                out.push(Infeasibility::Integrality {
                    name: var.name.clone(),
                    value,
                });
            }
        }
        for row in &self.constraints {
            let activity = self.activity(row, values);
            let ok = match row.sense {
                RowSense::Le => activity <= row.rhs + tol,
                RowSense::Ge => activity >= row.rhs - tol,
                RowSense::Eq => (activity - row.rhs).abs() <= tol,
            };
            if !ok {
                out.push(Infeasibility::Row {
                    name: row.name.clone(),
                    activity,
                    sense: row.sense,
                    rhs: row.rhs,
                });
            }
        }
        out
    }

    /// Structural problems: undeclared variables, bad bounds, duplicate or
    /// non-finite entries. Empty for any model built through the public API.
    pub fn lint(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let n = self.variables.len();
        for var in &self.variables {
            if var.lower > var.upper {
                issues.push(format!("variable {} has inverted bounds", var.name));
            }
            if var.kind == VarKind::Binary && (var.lower < 0.0 || var.upper > 1.0) {
                issues.push(format!("binary {} has bounds outside [0, 1]", var.name));
            }
        }
        let rows = self
            .constraints
            .iter()
            .map(|r| (r.name.as_str(), &r.terms, r.rhs))
            .chain(std::iter::once((
                "objective",
                &self.objective.terms,
                self.objective.constant,
            )));
        for (name, terms, rhs) in rows {
            if !rhs.is_finite() {
                issues.push(format!("{name} has non-finite right-hand side"));
            }
            let mut seen = std::collections::HashSet::new();
            for (var, coef) in terms {
                if var.0 >= n {
                    issues.push(format!("{name} references undeclared variable #{}", var.0));
                } else if !seen.insert(*var) {
                    issues.push(format!("{name} repeats variable {}", self.variables[var.0].name));
                }
                if !coef.is_finite() {
                    issues.push(format!("{name} has a non-finite coefficient"));
                }
            }
        }
        issues
    }
}
