use std::time::{Duration, Instant};

use log::{debug, warn};

use super::build::{build_subproblem, SliceInit, Subproblem};
use super::{AssessmentConfig, Coupling, EngineError, PreparedModel};
use crate::bernstein::CtTrajectory;
use crate::milp::{solve, MilpBackend, MilpSolution, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceStatus {
    Optimal,
    Infeasible,
    /// Stopped at the time or node limit before proving optimality.
    TimeLimited,
}

impl SliceStatus {
    pub fn label(self) -> &'static str {
        match self {
            SliceStatus::Optimal => "optimal",
            SliceStatus::Infeasible => "infeasible",
            SliceStatus::TimeLimited => "time_limited",
        }
    }

    pub fn is_feasible(self) -> bool {
        self == SliceStatus::Optimal
    }
}

/// Optimal direction magnitude `S0(t)` along one PQ direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub theta: f64,
    pub status: SliceStatus,
    /// Present only when optimal.
    pub s0: Option<CtTrajectory>,
    /// Objective share of each period (empty unless optimal).
    pub period_objective: Vec<f64>,
    pub wall_time: Duration,
}

impl Slice {
    pub fn infeasible(theta: f64, status: SliceStatus, wall_time: Duration) -> Self {
        Self {
            theta,
            status,
            s0: None,
            period_objective: Vec::new(),
            wall_time,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        self.s0.as_ref().map(|_| self.period_objective.iter().sum())
    }
}

/// One solved subproblem together with its solution.
#[derive(Debug, Clone)]
pub struct SliceRun {
    pub sub: Subproblem,
    pub solution: MilpSolution,
}

impl SliceRun {
    pub fn values(&self) -> Option<&[f64]> {
        self.solution.values.as_deref()
    }
}

fn run(
    prep: &PreparedModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
    theta: f64,
    periods: std::ops::Range<usize>,
    init: &SliceInit,
) -> Result<SliceRun, EngineError> {
    let sub = build_subproblem(prep, cfg, theta, periods, init)?;
    let solution = solve(backend, &sub.problem, &cfg.solve_options())
        .map_err(|source| EngineError::Backend { theta, source })?;
    Ok(SliceRun { sub, solution })
}

/// Solves direction `θ` and keeps every subproblem with its solution.
pub fn solve_direction(
    prep: &PreparedModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
    theta: f64,
) -> Result<(Slice, Vec<SliceRun>), EngineError> {
    let started = Instant::now();
    let m = prep.periods();
    let mut init = SliceInit::from_model(prep);
    let mut runs = Vec::new();
    let chunks: Vec<std::ops::Range<usize>> = match cfg.coupling {
        Coupling::Joint => vec![0..m],
        Coupling::Sequential => (0..m).map(|k| k..k + 1).collect(),
    };
    for periods in chunks {
        let r = run(prep, cfg, backend, theta, periods, &init)?;
        let status = match r.solution.status {
            SolveStatus::Optimal if r.solution.values.is_some() => SliceStatus::Optimal,
            SolveStatus::Optimal | SolveStatus::Infeasible => SliceStatus::Infeasible,
            SolveStatus::Limit => SliceStatus::TimeLimited,
            SolveStatus::Unbounded => return Err(EngineError::Unbounded { theta }),
        };
        if status != SliceStatus::Optimal {
            match status {
                SliceStatus::TimeLimited => {
                    warn!("θ = {theta:.4}: time limit reached, recorded as gap")
                }
                _ => debug!("θ = {theta:.4}: infeasible, recorded as gap"),
            }
            runs.push(r);
            return Ok((Slice::infeasible(theta, status, started.elapsed()), runs));
        }
        let values = r.values().expect("optimal run has values");
        let layout = &r.sub.layout;
        init.e_start = layout
            .ess
            .iter()
            .map(|e| values[e.terminal().index()])
            .collect();
        if cfg.s0_continuity {
            let last = layout.periods.last().expect("nonempty run");
            init.s0_start = Some(values[last.s0.last().expect("coefficients").index()]);
        }
        runs.push(r);
    }

    let mut coeffs = Vec::with_capacity(m);
    let mut period_objective = Vec::with_capacity(m);
    for r in &runs {
        let values = r.values().expect("optimal run has values");
        let weight = r.sub.layout.ctx.period_hours() / r.sub.layout.ctx.coeff_count() as f64;
        for p in &r.sub.layout.periods {
            let c: Vec<f64> = p.s0.iter().map(|v| values[v.index()].max(0.0)).collect();
            period_objective.push(weight * c.iter().sum::<f64>());
            coeffs.push(c);
        }
    }
    let s0 = CtTrajectory::new(prep.degree(), prep.period(), prep.start(), coeffs)?;
    Ok((
        Slice {
            theta,
            status: SliceStatus::Optimal,
            s0: Some(s0),
            period_objective,
            wall_time: started.elapsed(),
        },
        runs,
    ))
}

pub fn solve_slice(
    prep: &PreparedModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
    theta: f64,
) -> Result<Slice, EngineError> {
    solve_direction(prep, cfg, backend, theta).map(|(s, _)| s)
}
