//! Reader for free-format MPS, used to check exported models after a trip
//! through a third-party writer.
use std::collections::HashMap;

use super::SolverError;
use crate::model::{MilpModel, ObjectiveSense, RowSense, VarKind};

#[derive(Debug, Clone, PartialEq)]
pub struct MpsColumn {
    pub name: String,
    pub integer: bool,
    pub lower: f64,
    pub upper: f64,
    pub binary_marked: bool,
    pub objective: f64,
    /// `(row index, coefficient)` in file order.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsRow {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsModel {
    pub name: String,
    pub sense: ObjectiveSense,
    pub rows: Vec<MpsRow>,
    pub columns: Vec<MpsColumn>,
    /// Constant added to the objective (the negated objective-row RHS).
    pub objective_offset: f64,
}

fn bad(line: usize, msg: impl Into<String>) -> SolverError {
    SolverError::MalformedOutput(format!("MPS line {line}: {}", msg.into()))
}

fn number(line: usize, token: &str) -> Result<f64, SolverError> {
    match token.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => token
            .parse::<f64>()
            .map_err(|_| bad(line, format!("`{token}` is not a number"))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Head,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    End,
}

pub fn parse_mps(text: &str) -> Result<MpsModel, SolverError> {
    let mut model = MpsModel {
        name: String::new(),
        sense: ObjectiveSense::Minimize,
        rows: Vec::new(),
        columns: Vec::new(),
        objective_offset: 0.0,
    };
    let mut objective_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut bounded: Vec<bool> = Vec::new();
    let mut integer_block = false;
    let mut section = Section::Head;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => {
                    model.name = tokens.get(1).unwrap_or(&"").to_string();
                    Section::Head
                }
                "OBJSENSE" => match tokens.get(1) {
                    Some(s) => {
                        model.sense = parse_sense(line, s)?;
                        Section::Head
                    }
                    None => Section::ObjSense,
                },
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                other => return Err(bad(line, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::Head | Section::End => return Err(bad(line, "data outside a section")),
            Section::ObjSense => model.sense = parse_sense(line, tokens[0])?,
            Section::Rows => {
                let [tag, name] = tokens[..] else {
                    return Err(bad(line, "expected `<type> <name>`"));
                };
                let sense = match tag {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    other => return Err(bad(line, format!("unknown row type `{other}`"))),
                };
                if row_index.insert(name.to_string(), model.rows.len()).is_some() {
                    return Err(bad(line, format!("duplicate row `{name}`")));
                }
                model.rows.push(MpsRow {
                    name: name.to_string(),
                    sense,
                    rhs: 0.0,
                });
            }
            Section::Columns => {
                if tokens.get(1) == Some(&"'MARKER'") {
                    match tokens.get(2) {
                        Some(&"'INTORG'") => integer_block = true,
                        Some(&"'INTEND'") => integer_block = false,
                        _ => return Err(bad(line, "unknown marker")),
                    }
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(bad(line, "expected `<col> <row> <value> [<row> <value>]`"));
                }
                let col = tokens[0];
                let j = match col_index.get(col) {
                    Some(&j) => j,
                    None => {
                        col_index.insert(col.to_string(), model.columns.len());
                        model.columns.push(MpsColumn {
                            name: col.to_string(),
                            integer: integer_block,
                            lower: 0.0,
                            upper: f64::INFINITY,
                            binary_marked: false,
                            objective: 0.0,
                            entries: Vec::new(),
                        });
                        bounded.push(false);
                        model.columns.len() - 1
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let value = number(line, pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        model.columns[j].objective += value;
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| bad(line, format!("unknown row `{}`", pair[0])))?;
                        model.columns[j].entries.push((r, value));
                    }
                }
            }
            Section::Rhs => {
                let pairs = if tokens.len() % 2 == 1 { &tokens[1..] } else { &tokens[..] };
                for pair in pairs.chunks(2) {
                    let [row, value] = pair else {
                        return Err(bad(line, "unpaired RHS entry"));
                    };
                    let value = number(line, value)?;
                    if Some(*row) == objective_row.as_deref() {
                        model.objective_offset = -value;
                    } else {
                        let r = *row_index
                            .get(*row)
                            .ok_or_else(|| bad(line, format!("unknown row `{row}`")))?;
                        model.rows[r].rhs = value;
                    }
                }
            }
            Section::Ranges => return Err(bad(line, "RANGES are not supported")),
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(bad(line, "expected `<type> <set> <col> [<value>]`"));
                }
                let (kind, col) = (tokens[0], tokens[2]);
                let j = *col_index
                    .get(col)
                    .ok_or_else(|| bad(line, format!("unknown column `{col}`")))?;
                let value = || -> Result<f64, SolverError> {
                    number(line, tokens.get(3).ok_or_else(|| bad(line, "missing bound value"))?)
                };
                let c = &mut model.columns[j];
                match kind {
                    "UP" | "UI" => {
                        let v = value()?;
                        // Classic convention: a negative upper bound with
                        // no explicit lower bound makes the column free below.
                        if v < 0.0 && c.lower == 0.0 && !bounded[j] {
                            c.lower = f64::NEG_INFINITY;
                        }
                        c.upper = v;
                        c.integer |= kind == "UI";
                    }
                    "LO" | "LI" => {
                        c.lower = value()?;
                        c.integer |= kind == "LI";
                    }
                    "FX" => {
                        let v = value()?;
                        c.lower = v;
                        c.upper = v;
                    }
                    "FR" => {
                        c.lower = f64::NEG_INFINITY;
                        c.upper = f64::INFINITY;
                    }
                    "MI" => c.lower = f64::NEG_INFINITY,
                    "PL" => c.upper = f64::INFINITY,
                    "BV" => {
                        c.lower = 0.0;
                        c.upper = 1.0;
                        c.integer = true;
                        c.binary_marked = true;
                    }
                    other => return Err(bad(line, format!("unknown bound type `{other}`"))),
                }
                bounded[j] = true;
            }
        }
    }
    if section != Section::End {
        return Err(SolverError::MalformedOutput("MPS document lacks ENDATA".into()));
    }
    Ok(model)
}

fn parse_sense(line: usize, token: &str) -> Result<ObjectiveSense, SolverError> {
    match token.to_ascii_uppercase().as_str() {
        "MIN" | "MINIMIZE" => Ok(ObjectiveSense::Minimize),
        "MAX" | "MAXIMIZE" => Ok(ObjectiveSense::Maximize),
        other => Err(bad(line, format!("unknown objective sense `{other}`"))),
    }
}

impl MpsModel {
    /// Rebuilds a [`MilpModel`]. Row groups are recovered from the name
    /// prefix before `(`. Integer columns with bounds `[0, 1]` become
    /// binaries.
    pub fn to_milp(&self) -> Result<MilpModel, SolverError> {
        let err = |e: crate::model::ModelError| SolverError::MalformedOutput(e.to_string());
        let mut m = MilpModel::new(self.name.clone());
        let mut ids = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let kind = match (c.integer, c.lower, c.upper) {
                (false, _, _) => VarKind::Continuous,
                (true, lo, up) if lo == 0.0 && up == 1.0 => VarKind::Binary,
                (true, _, _) => VarKind::Integer,
            };
            ids.push(m.add_var(c.name.clone(), kind, c.lower, c.upper).map_err(err)?);
        }
        let mut terms: Vec<Vec<(crate::model::VarId, f64)>> = vec![Vec::new(); self.rows.len()];
        for (c, id) in self.columns.iter().zip(&ids) {
            for &(r, coef) in &c.entries {
                terms[r].push((*id, coef));
            }
        }
        for (row, terms) in self.rows.iter().zip(terms) {
            let (group, suffix) = match row.name.find('(') {
                Some(i) if row.name.ends_with(')') => {
                    (&row.name[..i], &row.name[i + 1..row.name.len() - 1])
                }
                _ => (row.name.as_str(), ""),
            };
            m.add_row(group, suffix, terms, row.sense, row.rhs).map_err(err)?;
        }
        let objective = self
            .columns
            .iter()
            .zip(&ids)
            .filter(|(c, _)| c.objective != 0.0)
            .map(|(c, id)| (*id, c.objective))
            .collect();
        m.set_objective(self.sense, objective, self.objective_offset)
            .map_err(err)?;
        Ok(m)
    }
}
