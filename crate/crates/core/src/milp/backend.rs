use std::time::Instant;

use super::{
    sos_fallback, MilpError, MilpProblem, MilpSolution, Sense, SolveOptions, SolveStatus, VarKind,
};

/// Environment variable selecting the backend by name.
pub const SOLVER_ENV: &str = "CTFLEX_SOLVER";

pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether SOS groups are passed through natively.
    fn supports_sos(&self) -> bool {
        false
    }

    /// Solves a frozen problem without SOS groups.
    fn solve_plain(
        &self,
        problem: &MilpProblem,
        options: &SolveOptions,
    ) -> Result<MilpSolution, MilpError>;
}

/// Solves `problem`, rewriting SOS groups into binaries when the backend
/// cannot handle them. Returned values cover only the original variables.
pub fn solve(
    backend: &dyn MilpBackend,
    problem: &MilpProblem,
    options: &SolveOptions,
) -> Result<MilpSolution, MilpError> {
    if !problem.is_frozen() {
        return Err(MilpError::NotFrozen);
    }
    let n = problem.variables().len();
    let mut sol = if problem.sos_groups().is_empty() || backend.supports_sos() {
        backend.solve_plain(problem, options)?
    } else {
        backend.solve_plain(&sos_fallback(problem)?, options)?
    };
    if let Some(v) = sol.values.as_mut() {
        v.truncate(n);
    }
    Ok(sol)
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn MilpBackend>, MilpError> {
    match name.to_ascii_lowercase().as_str() {
        "highs" => Ok(Box::new(HighsBackend)),
        "microlp" => Ok(Box::new(MicrolpBackend)),
        other => Err(MilpError::BackendUnavailable(other.to_string())),
    }
}

/// Backend named by [`SOLVER_ENV`], HiGHS when unset.
pub fn backend_from_env() -> Result<Box<dyn MilpBackend>, MilpError> {
    match std::env::var(SOLVER_ENV) {
        Ok(name) if !name.trim().is_empty() => backend_by_name(name.trim()),
        _ => Ok(Box::new(HighsBackend)),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_plain(
        &self,
        problem: &MilpProblem,
        options: &SolveOptions,
    ) -> Result<MilpSolution, MilpError> {
        use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem};

        let start = Instant::now();
        let mut pb = RowProblem::default();
        let obj = dense_objective(problem);
        let cols: Vec<highs::Col> = problem
            .variables()
            .iter()
            .zip(&obj)
            .map(|(v, &c)| {
                let range = v.lower..=v.upper;
                match v.kind {
                    VarKind::Continuous => pb.add_column(c, range),
                    VarKind::Binary => pb.add_integer_column(c, range),
                }
            })
            .collect();
        for row in problem.rows() {
            let terms: Vec<(highs::Col, f64)> =
                row.terms.iter().map(|&(v, a)| (cols[v.0], a)).collect();
            match row.sense {
                Sense::Le => pb.add_row(..=row.rhs, terms),
                Sense::Ge => pb.add_row(row.rhs.., terms),
                Sense::Eq => pb.add_row(row.rhs..=row.rhs, terms),
            }
        }
        let mut model = pb.optimise(highs::Sense::Maximise);
        model.make_quiet();
        model.set_option("mip_rel_gap", options.mip_gap);
        model.set_option("time_limit", options.time_limit.as_secs_f64());
        model.set_option("random_seed", (options.seed % i32::MAX as u64) as i32);
        model.set_option("threads", 1);
        model.set_option("parallel", "off");
        // restarts and neighbourhood sub-MIPs dominate solve time on these models
        model.set_option("mip_allow_restart", false);
        model.set_option("mip_heuristic_run_rins", false);
        model.set_option("mip_heuristic_run_rens", false);
        model.set_option("primal_feasibility_tolerance", 1e-9);
        model.set_option("mip_feasibility_tolerance", 1e-9);
        let solved = model
            .try_solve()
            .map_err(|s| MilpError::Backend(format!("{s:?}")))?;

        let has_point = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Unbounded
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit => SolveStatus::Limit,
            other => return Err(MilpError::Backend(format!("HiGHS status {other:?}"))),
        };
        let values = match status {
            SolveStatus::Optimal | SolveStatus::Limit
                if has_point || problem.variables().is_empty() =>
            {
                Some(solved.get_solution().columns().to_vec())
            }
            _ => None,
        };
        let objective = values.as_ref().map(|v| problem.objective_value(v));
        Ok(MilpSolution {
            status,
            objective,
            values,
            wall_time: start.elapsed(),
        })
    }
}

/// Pure-Rust branch and bound, used as a reference and fallback.
#[derive(Debug, Clone, Copy, Default)]
pub struct MicrolpBackend;

impl MilpBackend for MicrolpBackend {
    fn name(&self) -> &'static str {
        "microlp"
    }

    fn solve_plain(
        &self,
        problem: &MilpProblem,
        options: &SolveOptions,
    ) -> Result<MilpSolution, MilpError> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};

        let start = Instant::now();
        let mut pb = Problem::new(OptimizationDirection::Maximize);
        let obj = dense_objective(problem);
        let vars: Vec<microlp::Variable> = problem
            .variables()
            .iter()
            .zip(&obj)
            .map(|(v, &c)| match v.kind {
                VarKind::Binary if v.lower == 0.0 && v.upper == 1.0 => pb.add_binary_var(c),
                VarKind::Binary => {
                    pb.add_integer_var(c, (v.lower.round() as i32, v.upper.round() as i32))
                }
                VarKind::Continuous => pb.add_var(c, (v.lower, v.upper)),
            })
            .collect();
        for row in problem.rows() {
            let terms: Vec<(microlp::Variable, f64)> =
                row.terms.iter().map(|&(v, a)| (vars[v.0], a)).collect();
            let op = match row.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            pb.add_constraint(terms.as_slice(), op, row.rhs);
        }
        let mut opts = microlp::SolveOptions::default();
        opts.time_limit = Some(options.time_limit);
        opts.mip_gap = options.mip_gap;
        let (status, values) = match pb.solve_with(opts) {
            Ok(microlp::SolveOutcome::Solution(s)) => {
                let values: Vec<f64> = vars.iter().map(|&v| s.var_value_raw(v)).collect();
                let status = match s.termination_reason() {
                    microlp::TerminationReason::ProvenOptimal
                    | microlp::TerminationReason::MipGap => SolveStatus::Optimal,
                    _ => SolveStatus::Limit,
                };
                (status, Some(values))
            }
            Ok(microlp::SolveOutcome::Interrupted(_)) => (SolveStatus::Limit, None),
            Err(microlp::Error::Infeasible) => (SolveStatus::Infeasible, None),
            Err(microlp::Error::Unbounded) => (SolveStatus::Unbounded, None),
            Err(e) => return Err(MilpError::Backend(e.to_string())),
        };
        let objective = values.as_ref().map(|v| problem.objective_value(v));
        Ok(MilpSolution {
            status,
            objective,
            values,
            wall_time: start.elapsed(),
        })
    }
}

fn dense_objective(problem: &MilpProblem) -> Vec<f64> {
    let mut obj = vec![0.0; problem.variables().len()];
    for &(v, a) in problem.objective().terms() {
        obj[v.0] += a;
    }
    obj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinExpr, LinearConstraint, SosKind};

    fn knapsack() -> MilpProblem {
        // max 5a + 4b + 3c, 2a + 3b + c ≤ 5, 4a + b + 2c ≤ 11, 3a + 4b + 2c ≤ 8, binaries
        let mut p = MilpProblem::new();
        let a = p.add_binary("a").unwrap();
        let b = p.add_binary("b").unwrap();
        let c = p.add_binary("c").unwrap();
        p.add_constraint("r1", LinearConstraint::le(a * 2.0 + b * 3.0 + c, 5.0))
            .unwrap();
        p.add_constraint("r2", LinearConstraint::le(a * 4.0 + b + c * 2.0, 11.0))
            .unwrap();
        p.add_constraint("r3", LinearConstraint::le(a * 3.0 + b * 4.0 + c * 2.0, 8.0))
            .unwrap();
        p.set_objective(a * 5.0 + b * 4.0 + c * 3.0).unwrap();
        p.freeze();
        p
    }

    fn backends() -> Vec<Box<dyn MilpBackend>> {
        vec![Box::new(HighsBackend), Box::new(MicrolpBackend)]
    }

    #[test]
    fn small_knapsack_on_both_backends() {
        let p = knapsack();
        for b in backends() {
            let s = solve(b.as_ref(), &p, &SolveOptions::default()).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal, "{}", b.name());
            let mut best = f64::NEG_INFINITY;
            for m in 0..8u32 {
                let x: Vec<f64> = (0..3).map(|i| ((m >> i) & 1) as f64).collect();
                if p.check(&x, 1e-9).is_empty() {
                    best = best.max(p.objective_value(&x));
                }
            }
            assert!((s.objective.unwrap() - best).abs() < 1e-6, "{}", b.name());
            assert!(p.check(s.values.as_ref().unwrap(), 1e-6).is_empty());
        }
    }

    #[test]
    fn infeasible_reported() {
        let mut p = MilpProblem::new();
        let x = p.add_continuous("x", 0.0, 1.0).unwrap();
        p.add_constraint("c", LinearConstraint::ge(LinExpr::from(x), 2.0))
            .unwrap();
        p.set_objective(x.into()).unwrap();
        p.freeze();
        for b in backends() {
            let s = solve(b.as_ref(), &p, &SolveOptions::default()).unwrap();
            assert_eq!(s.status, SolveStatus::Infeasible, "{}", b.name());
            assert!(s.values.is_none());
        }
    }

    #[test]
    fn unfrozen_problem_rejected() {
        let p = MilpProblem::new();
        assert!(matches!(
            solve(&HighsBackend, &p, &SolveOptions::default()),
            Err(MilpError::NotFrozen)
        ));
    }

    #[test]
    fn sos1_enforced_through_fallback() {
        // max l0 + 2 l1 + 3 l2 with Σl ≤ 2, SOS-1: best is l2 = 1 alone (3), not l1 = l2 = 1 (5)
        let mut p = MilpProblem::new();
        let l: Vec<_> = (0..3)
            .map(|i| p.add_continuous(format!("l{i}"), 0.0, 1.0).unwrap())
            .collect();
        p.add_constraint("sum", LinearConstraint::le(l[0] + l[1] + l[2], 2.0))
            .unwrap();
        p.add_sos(
            "g",
            SosKind::One,
            vec![(l[0], 1.0), (l[1], 2.0), (l[2], 3.0)],
        )
        .unwrap();
        p.set_objective(l[0] + l[1] * 2.0 + l[2] * 3.0).unwrap();
        p.freeze();
        for b in backends() {
            let s = solve(b.as_ref(), &p, &SolveOptions::default()).unwrap();
            assert!((s.objective.unwrap() - 3.0).abs() < 1e-6, "{}", b.name());
            assert_eq!(s.values.as_ref().unwrap().len(), 3);
            assert!(p.check(s.values.as_ref().unwrap(), 1e-6).is_empty());
        }
    }

    #[test]
    fn sos2_enforced_through_fallback() {
        // weights favour the two ends; SOS-2 forbids using both
        let mut p = MilpProblem::new();
        let l: Vec<_> = (0..4)
            .map(|i| p.add_continuous(format!("l{i}"), 0.0, 1.0).unwrap())
            .collect();
        p.add_constraint("sum", LinearConstraint::eq(l[0] + l[1] + l[2] + l[3], 1.0))
            .unwrap();
        p.add_constraint("cap0", LinearConstraint::le(LinExpr::from(l[0]), 0.5))
            .unwrap();
        p.add_constraint("cap3", LinearConstraint::le(LinExpr::from(l[3]), 0.5))
            .unwrap();
        p.add_sos(
            "g",
            SosKind::Two,
            l.iter().enumerate().map(|(i, &v)| (v, i as f64)).collect(),
        )
        .unwrap();
        p.set_objective(l[0] * 4.0 + l[1] + l[2] + l[3] * 4.0)
            .unwrap();
        p.freeze();
        for b in backends() {
            let s = solve(b.as_ref(), &p, &SolveOptions::default()).unwrap();
            // 0.5·4 + 0.5·1 from an adjacent end pair
            assert!((s.objective.unwrap() - 2.5).abs() < 1e-6, "{}", b.name());
            assert!(p.check(s.values.as_ref().unwrap(), 1e-6).is_empty());
        }
    }

    #[test]
    fn backend_lookup() {
        assert_eq!(backend_by_name("HiGHS").unwrap().name(), "highs");
        assert_eq!(backend_by_name("microlp").unwrap().name(), "microlp");
        assert!(backend_by_name("gurobi").is_err());
    }
}
