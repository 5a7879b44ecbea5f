//! Direction-wise flexibility assessment and the resulting PQ tube.

mod assess;
mod build;
mod io;
mod prepare;
mod slice;
mod tube;
mod verify;

use std::f64::consts::PI;
use std::time::Duration;

use thiserror::Error;

use crate::bernstein::SignalError;
use crate::blocks::BlockError;
use crate::chance::ChanceError;
use crate::milp::MilpError;
use crate::network::ModelError;

pub use assess::{assess, dt_assess, penetration_metrics, Assessment, Penetration};
pub use build::{build_subproblem, Layout, PeriodLayout, SliceInit, Subproblem};
pub use io::{plot_data_csv, summary_json, tube_csv, tube_from_csv, Summary};
pub use prepare::PreparedModel;
pub use slice::{solve_direction, solve_slice, Slice, SliceRun, SliceStatus};
pub use tube::{
    assemble_tube, default_theta_set, metric_m, normalize_angle, FlexTube, TubeHorizon, TubePoint,
};
pub use verify::{chance_check, verify_transcription, ChanceRowReport, TranscriptionReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Chance(#[from] ChanceError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("direction {theta:.6} rad: {source}")]
    Backend { theta: f64, source: MilpError },
    #[error("direction {theta:.6} rad: subproblem is unbounded")]
    Unbounded { theta: f64 },
    #[error("no slices to assemble")]
    EmptyTube,
    #[error("direction {0:.6} rad appears twice")]
    DuplicateDirection(f64),
    #[error("direction {0:.6} rad was not sampled")]
    UnknownDirection(f64),
    #[error("total load is zero; PV penetration is undefined")]
    NoLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Cubic Bernstein trajectories.
    Ct,
    /// Piecewise-constant trajectories, one value per period.
    Dt,
}

impl Mode {
    pub fn degree(self) -> usize {
        match self {
            Mode::Ct => crate::bernstein::CUBIC,
            Mode::Dt => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// All periods of a direction in one MILP.
    Joint,
    /// One MILP per period; terminal state carried forward.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentConfig {
    /// Number of sampled directions in `[0, π)`; antipodes double it.
    pub directions: usize,
    pub mode: Mode,
    pub mip_gap: f64,
    pub time_limit: Duration,
    pub workers: usize,
    pub coupling: Coupling,
    /// Pin `S0` to be continuous across period boundaries.
    pub s0_continuity: bool,
    pub polygon_sides: usize,
    pub ess_mode_flags: bool,
    pub seed: u64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            directions: 12,
            mode: Mode::Ct,
            mip_gap: 1e-6,
            time_limit: Duration::from_secs(300),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            coupling: Coupling::Joint,
            s0_continuity: false,
            polygon_sides: 12,
            ess_mode_flags: true,
            seed: 0,
        }
    }
}

impl AssessmentConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.directions < 2 {
            return Err(EngineError::Config(format!(
                "need at least 2 directions, got {}",
                self.directions
            )));
        }
        if !(self.mip_gap >= 0.0) {
            return Err(EngineError::Config("MIP gap must be nonnegative".into()));
        }
        if self.workers == 0 {
            return Err(EngineError::Config("need at least one worker".into()));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> crate::milp::SolveOptions {
        crate::milp::SolveOptions {
            mip_gap: self.mip_gap,
            time_limit: self.time_limit,
            seed: self.seed,
        }
    }
}

/// `θ_k = (k-1)π/K` for `k = 1..K`.
pub fn sample_directions(k: usize) -> Result<Vec<f64>, EngineError> {
    if k < 2 {
        return Err(EngineError::Config(format!(
            "need at least 2 directions, got {k}"
        )));
    }
    Ok((0..k).map(|i| i as f64 * PI / k as f64).collect())
}

/// Sampled directions followed by their antipodes, i.e. `2K` directions in
/// increasing order over `[0, 2π)`.
pub fn all_directions(k: usize) -> Result<Vec<f64>, EngineError> {
    let up = sample_directions(k)?;
    let down: Vec<f64> = up.iter().map(|t| t + PI).collect();
    Ok(up.into_iter().chain(down).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_sets() {
        assert_eq!(sample_directions(2).unwrap(), vec![0.0, PI / 2.0]);
        assert!(sample_directions(1).is_err());
        let all = all_directions(4).unwrap();
        assert_eq!(all.len(), 8);
        let gaps: Vec<f64> = all.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = gaps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| {
                (a.min(g), b.max(g))
            });
        assert!(hi - lo < 1e-12);
    }
}
