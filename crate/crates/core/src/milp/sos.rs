use super::{LinExpr, LinearConstraint, MilpError, MilpProblem, SosKind, VarId};

/// Replaces every SOS group by an equivalent binary encoding.
///
/// SOS-1 members get one indicator each with `lb·b ≤ x ≤ ub·b` and `Σ b ≤ 1`.
/// SOS-2 members get one indicator per adjacent pair (segment) and member `i`
/// may be nonzero only when segment `i-1` or `i` is active. Added variables
/// are appended after the original ones, so original indices are preserved.
pub fn sos_fallback(problem: &MilpProblem) -> Result<MilpProblem, MilpError> {
    let mut out = problem.clone();
    let frozen = out.frozen;
    out.frozen = false;
    let groups = std::mem::take(&mut out.sos);

    for (g, group) in groups.iter().enumerate() {
        for &(v, _) in &group.members {
            let var = &problem.vars[v.0];
            if !var.upper.is_finite() || !var.lower.is_finite() {
                return Err(MilpError::UnboundedSosMember {
                    group: group.name.clone(),
                    var: var.name.clone(),
                });
            }
        }
        let bounds = |v: VarId| {
            let var = &problem.vars[v.0];
            (var.lower, var.upper)
        };
        // x ≤ ub · Σ(active) and x ≥ lb · Σ(active)
        let link = |out: &mut MilpProblem,
                    name: String,
                    x: VarId,
                    active: &[VarId]|
         -> Result<(), MilpError> {
            let (lb, ub) = bounds(x);
            let mut upper = LinExpr::from(x);
            let mut lower = LinExpr::from(x);
            for &b in active {
                upper.add_term(b, -ub);
                lower.add_term(b, -lb);
            }
            out.add_constraint(format!("{name}_ub"), LinearConstraint::le(upper, 0.0))?;
            out.add_constraint(format!("{name}_lb"), LinearConstraint::ge(lower, 0.0))?;
            Ok(())
        };

        match group.kind {
            SosKind::One => {
                let mut choose = LinExpr::new();
                for (k, &(x, _)) in group.members.iter().enumerate() {
                    let b = out.add_binary(format!("sos{g}_b{k}"))?;
                    choose.add_term(b, 1.0);
                    link(&mut out, format!("sos{g}_m{k}"), x, &[b])?;
                }
                out.add_constraint(format!("sos{g}_one"), LinearConstraint::le(choose, 1.0))?;
            }
            SosKind::Two => {
                let n = group.members.len();
                if n <= 2 {
                    // any pair is adjacent; nothing to encode
                    continue;
                }
                let segs: Vec<VarId> = (0..n - 1)
                    .map(|k| out.add_binary(format!("sos{g}_s{k}")))
                    .collect::<Result<_, _>>()?;
                let mut choose = LinExpr::new();
                for &s in &segs {
                    choose.add_term(s, 1.0);
                }
                out.add_constraint(format!("sos{g}_one"), LinearConstraint::le(choose, 1.0))?;
                for (i, &(x, _)) in group.members.iter().enumerate() {
                    let mut active = Vec::with_capacity(2);
                    if i > 0 {
                        active.push(segs[i - 1]);
                    }
                    if i < n - 1 {
                        active.push(segs[i]);
                    }
                    link(&mut out, format!("sos{g}_m{i}"), x, &active)?;
                }
            }
        }
    }
    out.frozen = frozen;
    Ok(out)
}
