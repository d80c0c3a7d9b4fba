use std::collections::HashSet;
use std::fmt::Write;

use super::{ConstraintSense, MilpModel, ObjectiveSense, VarKind};

/// Names usable in CPLEX LP files: letters, digits and a few punctuation
/// characters; anything else becomes `_`. Duplicates get the index appended.
fn lp_names<'a>(names: impl Iterator<Item = &'a str>, prefix: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    names
        .enumerate()
        .map(|(i, raw)| {
            let mut name: String = raw
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || "_.[]{}!#$%&()".contains(c) { c } else { '_' })
                .collect();
            if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
                name = format!("{prefix}{name}");
            }
            if !seen.insert(name.clone()) {
                name = format!("{name}_{i}");
                seen.insert(name.clone());
            }
            name
        })
        .collect()
}

fn write_terms(out: &mut String, terms: &[(super::VarId, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names[0]);
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        if k == 0 && c >= 0.0 {
            write!(out, " {} {}", c.abs(), names[v.index()]).unwrap();
        } else {
            write!(out, " {sign} {} {}", c.abs(), names[v.index()]).unwrap();
        }
    }
}

pub(super) fn write(model: &MilpModel) -> String {
    let vars = lp_names(model.variables().iter().map(|v| v.name.as_str()), "x");
    let rows = lp_names(model.constraints().iter().map(|c| c.name.as_str()), "c");
    let mut out = String::new();
    writeln!(out, "\\ {}", model.name()).unwrap();
    out.push_str(match model.sense() {
        ObjectiveSense::Maximize => "Maximize\n",
        ObjectiveSense::Minimize => "Minimize\n",
    });
    out.push_str(" obj:");
    if model.num_vars() == 0 {
        out.push_str(" 0");
    } else {
        write_terms(&mut out, model.objective(), &vars);
    }
    out.push_str("\nSubject To\n");
    for (c, name) in model.constraints().iter().zip(&rows) {
        write!(out, " {name}:").unwrap();
        write_terms(&mut out, &c.terms, &vars);
        let op = match c.sense {
            ConstraintSense::Le => "<=",
            ConstraintSense::Eq => "=",
            ConstraintSense::Ge => ">=",
        };
        writeln!(out, " {op} {}", c.rhs).unwrap();
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables().iter().zip(&vars) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => writeln!(out, " {name} free"),
            (true, true) if v.lower == v.upper => writeln!(out, " {name} = {}", v.lower),
            (true, true) => writeln!(out, " {} <= {name} <= {}", v.lower, v.upper),
            (true, false) => writeln!(out, " {name} >= {}", v.lower),
            (false, true) => writeln!(out, " -inf <= {name} <= {}", v.upper),
        }
        .unwrap();
    }
    let binaries: Vec<&String> = model
        .variables()
        .iter()
        .zip(&vars)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for name in binaries {
            writeln!(out, " {name}").unwrap();
        }
    }
    out.push_str("End\n");
    out
}
