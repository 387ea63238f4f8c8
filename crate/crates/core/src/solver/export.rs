//! Canonical MPS and LP serialisation.
//!
//! Output is a pure function of the model: variables and rows appear in
//! declaration order and every number is written with 17 significant digits,
//! so exporting the same model twice yields identical bytes.
//!
//! Dialect notes:
//! - MPS is free-format. The objective row is `obj`; a nonzero objective
//!   constant `c` is written as RHS `-c` on that row. Integer columns sit
//!   between `MARKER` lines. Every column gets explicit bounds.
//! - LP follows the CPLEX layout (`Minimize`/`Subject To`/`Bounds`/
//!   `General`/`Binary`/`End`) with `+inf`/`-inf` bound tokens.
use std::collections::HashSet;
use std::fmt::Write;
use std::str::FromStr;

use super::SolverError;
use crate::model::{MilpModel, ObjectiveSense, RowSense, VarKind, Variable};

pub const OBJECTIVE_ROW: &str = "obj";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Mps,
    Lp,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Mps => "mps",
            ExportFormat::Lp => "lp",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mps" => Ok(ExportFormat::Mps),
            "lp" => Ok(ExportFormat::Lp),
            other => Err(format!("unknown model format `{other}` (expected mps or lp)")),
        }
    }
}

/// Replaces characters that are not legal in LP/MPS identifiers by `_` and
/// prefixes names that would otherwise start like a number.
pub fn mangle_name(name: &str) -> String {
    const EXTRA: &str = "!\"#$%&()/,.;?@_`'{}|~";
    let mut out: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || EXTRA.contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    let mut chars = out.chars();
    let (first, second) = (chars.next(), chars.next());
    let exponent_like = matches!(first, Some('e' | 'E'))
        && second.is_some_and(|c| c.is_ascii_digit() || c == 'e' || c == 'E');
    if exponent_like || first.is_none_or(|c| c.is_ascii_digit() || c == '.') {
        out.insert(0, '_');
    }
    out
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn mangled_unique<'a>(
    names: impl Iterator<Item = &'a str>,
    reserved: &[&str],
) -> Result<Vec<String>, SolverError> {
    let mut seen: HashSet<String> = reserved.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    for name in names {
        let m = mangle_name(name);
        if !seen.insert(m.clone()) {
            return Err(SolverError::Export(format!(
                "name `{name}` collides with another name after mangling to `{m}`"
            )));
        }
        out.push(m);
    }
    Ok(out)
}

pub fn export_model(model: &MilpModel, format: ExportFormat) -> Result<String, SolverError> {
    let cols = mangled_unique(model.variables().iter().map(|v| v.name.as_str()), &[])?;
    let rows = mangled_unique(
        model.constraints().iter().map(|r| r.name.as_str()),
        &[OBJECTIVE_ROW],
    )?;
    Ok(match format {
        ExportFormat::Mps => write_mps(model, &cols, &rows),
        ExportFormat::Lp => write_lp(model, &cols, &rows)?,
    })
}

fn is_plain_binary(v: &Variable) -> bool {
    v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0
}

fn write_mps(model: &MilpModel, cols: &[String], rows: &[String]) -> String {
    let mut out = String::new();
    let name = mangle_name(&model.name);
    let _ = writeln!(out, "NAME {name}");
    let sense = match model.objective().sense {
        ObjectiveSense::Minimize => "MIN",
        ObjectiveSense::Maximize => "MAX",
    };
    let _ = writeln!(out, "OBJSENSE\n    {sense}");
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJECTIVE_ROW}");
    for (row, name) in model.constraints().iter().zip(rows) {
        let tag = match row.sense {
            RowSense::Le => 'L',
            RowSense::Ge => 'G',
            RowSense::Eq => 'E',
        };
        let _ = writeln!(out, " {tag}  {name}");
    }

    // Column-major entries.
    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (r, row) in model.constraints().iter().enumerate() {
        for (var, coef) in &row.terms {
            if *coef != 0.0 {
                entries[var.0].push((r, *coef));
            }
        }
    }
    let mut objective = vec![0.0; model.num_vars()];
    for (var, coef) in &model.objective().terms {
        objective[var.0] += coef;
    }

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut marker = 0;
    for (j, var) in model.variables().iter().enumerate() {
        let integral = var.kind.is_integral();
        if integral != in_marker {
            let kind = if integral { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    MARKER{marker} 'MARKER' '{kind}'");
            marker += usize::from(!integral);
            in_marker = integral;
        }
        if objective[j] != 0.0 {
            let _ = writeln!(out, "    {} {OBJECTIVE_ROW} {}", cols[j], num(objective[j]));
        }
        for &(r, coef) in &entries[j] {
            let _ = writeln!(out, "    {} {} {}", cols[j], rows[r], num(coef));
        }
        if objective[j] == 0.0 && entries[j].is_empty() {
            // Keep the column declared.
            let _ = writeln!(out, "    {} {OBJECTIVE_ROW} {}", cols[j], num(0.0));
        }
    }
    if in_marker {
        let _ = writeln!(out, "    MARKER{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    let constant = model.objective().constant;
    if constant != 0.0 {
        let _ = writeln!(out, "    RHS {OBJECTIVE_ROW} {}", num(-constant));
    }
    for (row, name) in model.constraints().iter().zip(rows) {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    RHS {name} {}", num(row.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (var, name) in model.variables().iter().zip(cols) {
        let (lo, up) = (var.lower, var.upper);
        if is_plain_binary(var) {
            let _ = writeln!(out, " BV BND {name}");
        } else if lo == up {
            let _ = writeln!(out, " FX BND {name} {}", num(lo));
        } else if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            let _ = writeln!(out, " FR BND {name}");
        } else {
            if lo == f64::NEG_INFINITY {
                let _ = writeln!(out, " MI BND {name}");
            } else {
                let _ = writeln!(out, " LO BND {name} {}", num(lo));
            }
            if up == f64::INFINITY {
                let _ = writeln!(out, " PL BND {name}");
            } else {
                let _ = writeln!(out, " UP BND {name} {}", num(up));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn lp_terms(out: &mut String, terms: &[(usize, f64)], cols: &[String]) {
    for &(j, coef) in terms {
        let sign = if coef.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, "\n    {sign} {} {}", num(coef.abs()), cols[j]);
    }
}

fn lp_bound(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        num(x)
    }
}

fn write_lp(model: &MilpModel, cols: &[String], rows: &[String]) -> Result<String, SolverError> {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", mangle_name(&model.name));
    out.push_str(match model.objective().sense {
        ObjectiveSense::Minimize => "Minimize\n",
        ObjectiveSense::Maximize => "Maximize\n",
    });
    let _ = write!(out, " {OBJECTIVE_ROW}:");
    let objective: Vec<(usize, f64)> = model
        .objective()
        .terms
        .iter()
        .map(|(v, c)| (v.0, *c))
        .collect();
    lp_terms(&mut out, &objective, cols);
    let constant = model.objective().constant;
    if constant != 0.0 || objective.is_empty() {
        let sign = if constant.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, "\n    {sign} {}", num(constant.abs()));
    }
    out.push_str("\nSubject To\n");
    for (row, name) in model.constraints().iter().zip(rows) {
        if row.terms.is_empty() {
            return Err(SolverError::Export(format!(
                "row `{}` has no terms and cannot be written in LP format",
                row.name
            )));
        }
        let _ = write!(out, " {name}:");
        let terms: Vec<(usize, f64)> = row.terms.iter().map(|(v, c)| (v.0, *c)).collect();
        lp_terms(&mut out, &terms, cols);
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, "\n    {op} {}", num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (var, name) in model.variables().iter().zip(cols) {
        if is_plain_binary(var) {
            continue;
        }
        if var.lower == var.upper {
            let _ = writeln!(out, " {name} = {}", num(var.lower));
        } else if var.lower == f64::NEG_INFINITY && var.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(
                out,
                " {} <= {name} <= {}",
                lp_bound(var.lower),
                lp_bound(var.upper)
            );
        }
    }
    let generals: Vec<&String> = model
        .variables()
        .iter()
        .zip(cols)
        .filter(|(v, _)| v.kind.is_integral() && !is_plain_binary(v))
        .map(|(_, n)| n)
        .collect();
    if !generals.is_empty() {
        out.push_str("General\n");
        for name in generals {
            let _ = writeln!(out, " {name}");
        }
    }
    let binaries: Vec<&String> = model
        .variables()
        .iter()
        .zip(cols)
        .filter(|(v, _)| is_plain_binary(v))
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for name in binaries {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    Ok(out)
}
