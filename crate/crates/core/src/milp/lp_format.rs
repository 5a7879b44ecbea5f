use std::fmt::Write;

use super::{MilpProblem, Sense, SosKind, VarKind};

fn sanitize(name: &str) -> String {
    // square brackets introduce quadratic terms in LP files
    name.chars()
        .map(|c| match c {
            '[' => '(',
            ']' => ')',
            c if c.is_ascii_alphanumeric() || "_.".contains(c) => c,
            _ => '_',
        })
        .collect()
}

fn term_list(out: &mut String, terms: &[(super::VarId, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names.first().cloned().unwrap_or_else(|| "x0".into()));
        return;
    }
    for (k, &(v, a)) in terms.iter().enumerate() {
        let sign = if a < 0.0 { '-' } else { '+' };
        if k == 0 && sign == '+' {
            let _ = write!(out, " {} {}", a.abs(), names[v.0]);
        } else {
            let _ = write!(out, " {} {} {}", sign, a.abs(), names[v.0]);
        }
    }
}

/// Renders the problem in CPLEX LP text format.
///
/// Rows and columns appear in insertion order and numbers use Rust's
/// shortest round-trip formatting, so equal problems produce equal text.
pub fn write_lp(problem: &MilpProblem) -> String {
    let names: Vec<String> = problem
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let base = sanitize(&v.name);
            if base.is_empty() {
                format!("x{i}")
            } else {
                format!("{base}#{i}").replace('#', "_")
            }
        })
        .collect();
    let mut out = String::new();
    out.push_str("\\ generated by ctflex\nMaximize\n obj:");
    term_list(&mut out, problem.objective().terms(), &names);
    if problem.objective().constant() != 0.0 {
        let _ = write!(out, " + {}", problem.objective().constant());
    }
    out.push_str("\nSubject To\n");
    for (i, row) in problem.rows().iter().enumerate() {
        let _ = write!(out, " r{}_{}:", i, sanitize(&row.name));
        term_list(&mut out, &row.terms, &names);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {} {}", op, row.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in problem.variables().iter().zip(&names) {
        if v.kind == VarKind::Binary {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {} = {}", name, v.lower);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, name, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", name, v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", name, v.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {} free", name);
            }
        }
    }
    let binaries: Vec<&String> = problem
        .variables()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for n in binaries {
            let _ = writeln!(out, " {n}");
        }
    }
    if !problem.sos_groups().is_empty() {
        out.push_str("SOS\n");
        for (g, group) in problem.sos_groups().iter().enumerate() {
            let kind = match group.kind {
                SosKind::One => "S1",
                SosKind::Two => "S2",
            };
            let _ = write!(out, " s{}_{}: {}::", g, sanitize(&group.name), kind);
            for &(v, w) in &group.members {
                let _ = write!(out, " {}:{}", names[v.0], w);
            }
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinExpr, LinearConstraint};

    #[test]
    fn small_problem_text_is_stable() {
        let mut p = MilpProblem::new();
        let x = p.add_continuous("x", 0.0, 3.0).unwrap();
        let b = p.add_binary("b").unwrap();
        p.add_constraint("c", LinearConstraint::le(LinExpr::from(x) - b * 2.0, 1.5))
            .unwrap();
        p.set_objective(LinExpr::from(x) + b).unwrap();
        let text = write_lp(&p);
        let expected = "\\ generated by ctflex\nMaximize\n obj: 1 x_0 + 1 b_1\nSubject To\n r0_c: 1 x_0 - 2 b_1 <= 1.5\nBounds\n 0 <= x_0 <= 3\nBinaries\n b_1\nEnd\n";
        assert_eq!(text, expected);
        assert_eq!(text, write_lp(&p.clone()));
    }
}
